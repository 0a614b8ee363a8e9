//! Maximum weighted multicommodity flow.
//!
//! The coupled subproblem lets the flow values float: given demand columns
//! `D = [d_1 … d_k]`, it finds the split `F` with `Σ F_i = 1` whose routing
//! of `Σ F_i d_i` has the least energy. With `M = Dᵀ L⁺ D` the optimum is
//! `λ = 1 / (1ᵀ M⁺ 1)` and `F = λ M⁺ 1`. The outer driver reuses the
//! capacitated loop and the matrix weights with this oracle, and searches
//! over the objective scale.

use rayon::prelude::*;
use serde::Serialize;

use crate::capacitated::{run_mwu, CapacitatedOutcome, OracleAnswer, SolveStats};
use crate::concurrent::mmw::{MmwParams, MmwState};
use crate::concurrent::{run_outer, search_bracket, ConcurrentOptions, ConcurrentOutcome};
use crate::coupled::{ohmic_flow, KirchhoffTree};
use crate::error::{Error, Result};
use crate::graph::{max_bottleneck, DemandVector, Graph, Instance};
use crate::kvec::{congestions, energy, sym_eig_k, EnergyMatrices, KMatrix, MultiFlow};
use crate::lapsolve::{solve_coupled_system, CoupledOperator, SolveReport, SolverOptions};

#[derive(Debug, Clone, Serialize)]
pub struct WeightedCoupledResult {
    /// `φ = L⁺ D F`
    pub potentials: Vec<f64>,
    /// Routes `F_i d_i` for every commodity.
    pub flow: MultiFlow,
    pub values: Vec<f64>,
    /// `1 / (1ᵀ M⁺ 1)`, the optimal energy.
    pub lambda: f64,
    pub energy: f64,
    pub report: SolveReport,
}

/// `M⁺` with eigenvalues below `1e-12 λ_max` treated as zero.
fn pinv(m: &KMatrix) -> Result<KMatrix> {
    let eig = sym_eig_k(m)?;
    let top = eig.max().max(0.0);
    Ok(eig.map(|l| if l > 1e-12 * top && l > 0.0 { 1.0 / l } else { 0.0 }))
}

/// `demands[i]` is the length-n demand of commodity i.
pub fn weighted_coupled_flow(
    g: &Graph,
    p: &EnergyMatrices,
    demands: &[Vec<f64>],
    delta: f64,
    opts: &SolverOptions,
) -> Result<WeightedCoupledResult> {
    let (n, k) = (g.n(), p.k());
    if demands.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: demands.len() });
    }
    let columns: Vec<DemandVector> = demands
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if d.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: d.len() });
            }
            let mut v = vec![0.0; n * k];
            for (x, &dv) in d.iter().enumerate() {
                v[x * k + i] = dv;
            }
            DemandVector::new(k, v)
        })
        .collect::<Result<_>>()?;
    let solves: Vec<(Vec<f64>, SolveReport)> =
        columns.par_iter().map(|c| solve_coupled_system(g, p, c, delta, opts)).collect::<Result<_>>()?;
    let mut report = SolveReport::default();
    for (_, r) in &solves {
        report.absorb(r);
    }

    // M = Dᵀ L⁺ D, symmetrized since the solves are approximate
    let dot = |i: usize, j: usize| -> f64 { columns[i].as_slice().iter().zip(&solves[j].0).map(|(a, b)| a * b).sum() };
    let mut m = KMatrix::zeros(k);
    for i in 0..k {
        for j in i..k {
            let v = 0.5 * (dot(i, j) + dot(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    let y = pinv(&m)?.mul_vec(&vec![1.0; k]);
    let total: f64 = y.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInstance("demand matrix has no routable direction".into()));
    }
    let lambda = 1.0 / total;
    let values: Vec<f64> = y.iter().map(|v| v * lambda).collect();

    let mut phi = vec![0.0; n * k];
    for (fj, (xj, _)) in values.iter().zip(&solves) {
        phi.iter_mut().zip(xj).for_each(|(a, b)| *a += fj * b);
    }
    let op = CoupledOperator::new(g, p)?;
    let mut flow = ohmic_flow(g, &op, &phi)?;
    let tree = KirchhoffTree::new(g);
    for (i, d) in demands.iter().enumerate() {
        let target: Vec<f64> = d.iter().map(|x| x * values[i]).collect();
        let mut fi = flow.commodity(i);
        tree.repair(g, &target, &mut fi)?;
        flow.set_commodity(i, &fi);
    }
    let energy = energy(p, &flow)?;
    Ok(WeightedCoupledResult { potentials: phi, flow, values, lambda, energy, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightedResult {
    /// `Σ_i λ_i · amounts[i]`
    pub objective: f64,
    /// Units routed per commodity, source to sink.
    pub amounts: Vec<f64>,
    pub flow: MultiFlow,
    pub congestion: Vec<f64>,
    pub max_congestion: f64,
    /// Objective scale at which the search settled.
    pub scale: f64,
    pub probes: usize,
    pub max_block_condition: f64,
    pub stats: SolveStats,
}

fn unit_demand(n: usize, s: usize, t: usize, scale: f64) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[t] = scale;
    d[s] = -scale;
    d
}

/// Routes flow between each commodity's endpoints to maximize `Σ λ_i F_i`.
/// Commodity values in the instance are ignored.
pub fn max_weighted_flow(inst: &Instance, weights: &[f64], opts: &ConcurrentOptions) -> Result<WeightedResult> {
    let (g, n) = (&inst.graph, inst.graph.n());
    if weights.len() != inst.k() {
        return Err(Error::LengthMismatch { expected: inst.k(), got: weights.len() });
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
    }
    let active: Vec<usize> = (0..inst.k()).filter(|&i| weights[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::InvalidParameter("at least one weight must be positive".into()));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!("epsilon = {}", opts.epsilon)));
    }
    let ka = active.len();

    let mut lo: f64 = 0.0;
    for &i in &active {
        let c = &inst.commodities[i];
        let b = max_bottleneck(g, c.source, c.sink).ok_or_else(|| Error::InvalidInstance(format!("commodity {i} has no path")))?;
        lo = lo.max(weights[i] * b);
    }
    let top = active.iter().map(|&i| weights[i]).fold(0.0, f64::max);
    let hi = top * g.total_capacity();

    let params = MmwParams::with_overrides(ka, opts);
    let inner = opts.inner();
    let inner_params = inner.params(g.m());
    // column i routes `scale / λ_i` units, so a unit of F is worth `scale`
    let probe = |scale: f64| -> Result<ConcurrentOutcome> {
        let columns: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| {
                let c = &inst.commodities[i];
                unit_demand(n, c.source, c.sink, scale / weights[i])
            })
            .collect();
        let mut state = MmwState::new(g, ka, opts.epsilon, params);
        run_outer(g, ka, opts.epsilon, params.iterations, &mut state, |p| -> Result<CapacitatedOutcome> {
            run_mwu(p, opts.epsilon, inner_params, |pt, delta| {
                let r = weighted_coupled_flow(g, pt, &columns, delta, &opts.solver)?;
                Ok(OracleAnswer { flow: r.flow, flow_values: Some(r.values), report: r.report })
            })
        })
    };
    let found = search_bracket(lo, hi, opts.epsilon, probe)?;

    let mut flow = MultiFlow::zeros(g.m(), inst.k());
    let mut amounts = vec![0.0; inst.k()];
    let values = found.flow.flow_values.clone().unwrap_or_else(|| vec![0.0; ka]);
    for (a, &i) in active.iter().enumerate() {
        // a negative value routes the commodity backwards; flipping it only helps
        let sign = if values[a] < 0.0 { -1.0 } else { 1.0 };
        let fi: Vec<f64> = found.flow.flow.commodity(a).iter().map(|x| x * sign).collect();
        flow.set_commodity(i, &fi);
        amounts[i] = values[a].abs() * found.lambda / weights[i];
    }
    let objective = active.iter().map(|&i| weights[i] * amounts[i]).sum();
    let congestion = congestions(&flow, &g.capacities());
    let max_congestion = congestion.iter().copied().fold(0.0, f64::max);
    Ok(WeightedResult {
        objective,
        amounts,
        flow,
        congestion,
        max_congestion,
        scale: found.lambda,
        probes: found.probes.len(),
        max_block_condition: found.max_block_condition,
        stats: found.stats,
    })
}
