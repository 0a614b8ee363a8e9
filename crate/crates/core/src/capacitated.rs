//! Multiplicative-weights search for a flow whose per-edge saturation
//! `sqrt(f(e)ᵀ P(e) f(e))` is at most about 1.
//!
//! Each round reweighs the energy matrices by the edge weights, asks the
//! coupled-flow oracle for a minimum-energy flow, and either certifies
//! infeasibility (energy above `μ`) or grows the weights of saturated edges.

use serde::Serialize;

use crate::coupled::quadratically_coupled_flow;
use crate::error::{Error, Result};
use crate::graph::{DemandVector, Graph};
use crate::kvec::{energy, saturations, EnergyMatrices, MultiFlow};
use crate::lapsolve::{SolveReport, SolverOptions};

/// Width `ρ` and round count `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MwuParams {
    pub rho: f64,
    pub iterations: usize,
}

impl MwuParams {
    /// `ρ = 10 m^{1/3} ε^{-2/3}`, `N = ⌈20 ρ ln m ε^{-2}⌉` (with `ln 2` for m = 1).
    pub fn theoretical(m: usize, epsilon: f64) -> Self {
        let rho = 10.0 * (m as f64).cbrt() * epsilon.powf(-2.0 / 3.0);
        let ln_m = (m.max(2) as f64).ln();
        let iterations = (20.0 * rho * ln_m / (epsilon * epsilon)).ceil() as usize;
        MwuParams { rho, iterations: iterations.max(1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacitatedOptions {
    pub epsilon: f64,
    /// Overrides the width `ρ`.
    pub rho: Option<f64>,
    /// Overrides the round count `N`.
    pub iterations: Option<usize>,
    pub solver: SolverOptions,
}

impl CapacitatedOptions {
    pub fn new(epsilon: f64) -> Self {
        CapacitatedOptions { epsilon, rho: None, iterations: None, solver: SolverOptions::default() }
    }

    pub fn params(&self, m: usize) -> MwuParams {
        let base = MwuParams::theoretical(m, self.epsilon);
        MwuParams {
            rho: self.rho.unwrap_or(base.rho),
            iterations: self.iterations.unwrap_or(base.iterations),
        }
    }
}

/// One round of the weight loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MwuTrace {
    pub t: usize,
    pub mu: f64,
    pub energy: f64,
    pub max_saturation: f64,
    pub accepted: bool,
}

/// Aggregate cost of the oracle calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub oracle_calls: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub max_relative_residual: f64,
}

impl SolveStats {
    pub(crate) fn record(&mut self, r: &SolveReport) {
        self.oracle_calls += 1;
        self.outer_iterations += r.iterations;
        self.inner_iterations += r.inner_iterations;
        self.max_relative_residual = self.max_relative_residual.max(r.relative_residual);
    }

    pub(crate) fn merge(&mut self, other: &SolveStats) {
        self.oracle_calls += other.oracle_calls;
        self.outer_iterations += other.outer_iterations;
        self.inner_iterations += other.inner_iterations;
        self.max_relative_residual = self.max_relative_residual.max(other.max_relative_residual);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacitatedFlow {
    pub flow: MultiFlow,
    /// Averaged flow values, for oracles that choose them.
    pub flow_values: Option<Vec<f64>>,
    /// Maximum saturation under the input matrices.
    pub max_saturation: f64,
    pub accepted_iterations: usize,
    pub params: MwuParams,
    pub trace: Vec<MwuTrace>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacitatedFail {
    pub iteration: usize,
    pub energy: f64,
    pub mu: f64,
    pub trace: Vec<MwuTrace>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Serialize)]
pub enum CapacitatedOutcome {
    Flow(CapacitatedFlow),
    /// No flow with saturation at most `1 - ε` on every edge exists.
    Fail(CapacitatedFail),
}

impl CapacitatedOutcome {
    pub fn is_fail(&self) -> bool {
        matches!(self, CapacitatedOutcome::Fail(_))
    }

    pub fn stats(&self) -> &SolveStats {
        match self {
            CapacitatedOutcome::Flow(f) => &f.stats,
            CapacitatedOutcome::Fail(f) => &f.stats,
        }
    }
}

/// What an oracle returns for one reweighed problem.
#[derive(Debug, Clone)]
pub struct OracleAnswer {
    pub flow: MultiFlow,
    pub flow_values: Option<Vec<f64>>,
    pub report: SolveReport,
}

/// `P^{(t)}(e) = (w(e) + (ε/m) μ) P(e)`
pub fn reweigh(p: &EnergyMatrices, weights: &[f64], mu: f64, epsilon: f64) -> EnergyMatrices {
    let m = p.m() as f64;
    let factors: Vec<f64> = weights.iter().map(|w| w + epsilon / m * mu).collect();
    p.scaled_per_edge(&factors)
}

/// `w(e) ← w(e) (1 + (ε/ρ) sat(e))`
pub fn update_weights(weights: &[f64], saturations: &[f64], epsilon: f64, rho: f64) -> Vec<f64> {
    weights.iter().zip(saturations).map(|(w, s)| w * (1.0 + epsilon / rho * s)).collect()
}

/// The weight loop with a pluggable oracle `(P^{(t)}, δ) -> flow`.
pub fn run_mwu<O>(p: &EnergyMatrices, epsilon: f64, params: MwuParams, mut oracle: O) -> Result<CapacitatedOutcome>
where
    O: FnMut(&EnergyMatrices, f64) -> Result<OracleAnswer>,
{
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
    }
    if !(params.rho > 0.0) || params.iterations == 0 {
        return Err(Error::InvalidParameter(format!("rho = {}, N = {}", params.rho, params.iterations)));
    }
    let m = p.m();
    let delta = epsilon / m as f64;
    let mut weights = vec![1.0; m];
    let mut total = MultiFlow::zeros(m, p.k());
    let mut total_values: Option<Vec<f64>> = None;
    let mut accepted = 0usize;
    let mut trace = Vec::with_capacity(params.iterations);
    let mut stats = SolveStats::default();

    for t in 1..=params.iterations {
        let mu: f64 = weights.iter().sum();
        let pt = reweigh(p, &weights, mu, epsilon);
        let answer = oracle(&pt, delta)?;
        stats.record(&answer.report);
        let e = energy(&pt, &answer.flow)?;
        let sats = saturations(&pt, &answer.flow)?;
        let max_sat = sats.iter().copied().fold(0.0, f64::max);
        if e > mu * (1.0 + 1e-12) {
            trace.push(MwuTrace { t, mu, energy: e, max_saturation: max_sat, accepted: false });
            return Ok(CapacitatedOutcome::Fail(CapacitatedFail { iteration: t, energy: e, mu, trace, stats }));
        }
        let ok = max_sat <= params.rho;
        if ok {
            total.add_assign(&answer.flow);
            if let Some(values) = &answer.flow_values {
                let acc = total_values.get_or_insert_with(|| vec![0.0; values.len()]);
                acc.iter_mut().zip(values).for_each(|(a, v)| *a += v);
            }
            accepted += 1;
        }
        trace.push(MwuTrace { t, mu, energy: e, max_saturation: max_sat, accepted: ok });
        let next = update_weights(&weights, &sats, epsilon, params.rho);
        debug_assert!(next.iter().zip(&weights).all(|(a, b)| a >= b));
        weights = next;
    }

    if accepted == 0 {
        return Err(Error::WidthNeverSatisfied);
    }
    total.scale(1.0 / accepted as f64);
    if let Some(v) = total_values.as_mut() {
        v.iter_mut().for_each(|x| *x /= accepted as f64);
    }
    let max_saturation = saturations(p, &total)?.into_iter().fold(0.0, f64::max);
    Ok(CapacitatedOutcome::Flow(CapacitatedFlow {
        flow: total,
        flow_values: total_values,
        max_saturation,
        accepted_iterations: accepted,
        params,
        trace,
        stats,
    }))
}

/// Either a flow meeting `d` with saturation at most `1 + 10ε`, or FAIL.
pub fn quadratically_capacitated_flow(
    g: &Graph,
    p: &EnergyMatrices,
    d: &DemandVector,
    opts: &CapacitatedOptions,
) -> Result<CapacitatedOutcome> {
    if p.m() != g.m() {
        return Err(Error::LengthMismatch { expected: g.m(), got: p.m() });
    }
    let params = opts.params(g.m());
    run_mwu(p, opts.epsilon, params, |pt, delta| {
        let r = quadratically_coupled_flow(g, pt, d, delta, &opts.solver)?;
        Ok(OracleAnswer { flow: r.flow, flow_values: None, report: r.report })
    })
}
