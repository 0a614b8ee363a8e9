//! Sign-vector outer variant. Each edge's energy matrix is a weighted second
//! moment of sign vectors `s ∈ {±1}^k`, with weights growing in `sᵀf(e)` for
//! the running flow sum. Flows are rounded to a grid so that all weights
//! can be grouped by an integer gap and counted with [`convolve`](super::convolve).

use rayon::prelude::*;
use serde::Serialize;

use super::convolve::convolve_truncated;
use super::{run_outer, ConcurrentOptions, ConcurrentOutcome, EnergySource};
use crate::capacitated::quadratically_capacitated_flow;
use crate::error::{Error, Result};
use crate::graph::{DemandVector, Graph};
use crate::kvec::{EnergyMatrices, KMatrix, MultiFlow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignParams {
    pub rho: f64,
    pub iterations: usize,
}

impl SignParams {
    /// `ρ = k`, `N = ⌈ρ k ε^{-2}⌉`
    pub fn theoretical(k: usize, epsilon: f64) -> Self {
        let rho = k as f64;
        let n = (rho * k as f64 / (epsilon * epsilon)).ceil() as usize;
        SignParams { rho, iterations: n.max(1) }
    }

    pub fn with_overrides(k: usize, opts: &ConcurrentOptions) -> Self {
        let p = SignParams::theoretical(k, opts.epsilon);
        SignParams {
            rho: opts.outer_rho.unwrap_or(p.rho),
            iterations: opts.outer_iterations.unwrap_or(p.iterations).max(1),
        }
    }
}

/// The sign vector maximizing `sᵀf`; zeros get `+1`.
pub fn opt_sign(f: &[f64]) -> Vec<f64> {
    f.iter().map(|&x| if x < 0.0 { -1.0 } else { 1.0 }).collect()
}

fn grid_steps(x: f64, u: f64, epsilon: f64, k: usize) -> u64 {
    (x.abs() * 3.0 * k as f64 / (epsilon * u)).floor() as u64
}

/// Rounds each entry toward zero to a multiple of `(ε / 3k) u`.
pub fn round_flow(f: &[f64], u: f64, epsilon: f64, k: usize) -> Vec<f64> {
    let grid = epsilon * u / (3.0 * k as f64);
    f.iter().map(|&x| x.signum() * grid_steps(x, u, epsilon, k) as f64 * grid).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SignEnergyInput<'a> {
    pub flow: &'a [f64],
    pub capacity: f64,
    pub rho: f64,
    pub epsilon: f64,
}

/// Integer form of the rounded weights: `ŵ(s) = exp(log_scale - β j(s))`
/// where `j(s)` sums `steps[l]` over the coordinates where `s` differs from
/// `s_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignGrid {
    pub s_star: Vec<f64>,
    pub steps: Vec<u64>,
    pub beta: f64,
    pub log_scale: f64,
}

impl SignGrid {
    pub fn new(input: &SignEnergyInput) -> Self {
        let k = input.flow.len();
        let (u, eps, rho) = (input.capacity, input.epsilon, input.rho);
        let s_star = opt_sign(input.flow);
        let steps = input.flow.iter().map(|&x| 2 * grid_steps(x, u, eps, k)).collect();
        let l1: f64 = input.flow.iter().map(|x| x.abs()).sum();
        SignGrid { s_star, steps, beta: (eps / rho) * (eps / (3.0 * k as f64)), log_scale: (eps / rho) * l1 / u }
    }

    pub fn gap(&self, s: &[f64]) -> u64 {
        s.iter().zip(&self.s_star).zip(&self.steps).filter(|((a, b), _)| a != b).map(|(_, &a)| a).sum()
    }

    /// `ln ŵ(s)`
    pub fn log_weight(&self, s: &[f64]) -> f64 {
        self.log_scale - self.beta * self.gap(s) as f64
    }

    /// Largest gap whose weight is not negligible next to the total.
    fn cutoff(&self) -> usize {
        let total: u64 = self.steps.iter().sum();
        let k = self.steps.len() as f64;
        let j = ((k * std::f64::consts::LN_2 + 40.0) / self.beta).ceil();
        if j >= total as f64 {
            total as usize
        } else {
            j as usize
        }
    }

    fn weighted_sum(&self, steps: &[u64], cutoff: usize) -> Result<f64> {
        let terms = convolve_truncated(steps, cutoff)?;
        Ok(terms.iter().map(|&(j, c)| c as f64 * (-self.beta * j as f64).exp()).sum())
    }
}

/// `(1/u²)(Σ_s ŵ(s) s sᵀ / Σ_s ŵ(s) + εI)` without enumerating sign vectors.
pub fn energy_matrix_signs(input: &SignEnergyInput, budget: usize) -> Result<KMatrix> {
    let k = input.flow.len();
    let grid = SignGrid::new(input);
    let cutoff = grid.cutoff();
    let table = cutoff.saturating_add(1).min(1usize.checked_shl(k as u32).unwrap_or(usize::MAX));
    if table > budget {
        return Err(Error::Budget { needed: table, budget });
    }
    let z = grid.weighted_sum(&grid.steps, cutoff)?;
    let mut normalized = KMatrix::identity(k);
    for i in 0..k {
        for j in (i + 1)..k {
            let rest: Vec<u64> =
                grid.steps.iter().enumerate().filter(|&(l, _)| l != i && l != j).map(|(_, &a)| a).collect();
            let g = grid.weighted_sum(&rest, cutoff)?;
            let mut acc = 0.0;
            for flip_i in [false, true] {
                for flip_j in [false, true] {
                    let si = if flip_i { -grid.s_star[i] } else { grid.s_star[i] };
                    let sj = if flip_j { -grid.s_star[j] } else { grid.s_star[j] };
                    let shift = flip_i as u64 * grid.steps[i] + flip_j as u64 * grid.steps[j];
                    acc += si * sj * (-grid.beta * shift as f64).exp();
                }
            }
            let v = acc * g / z;
            normalized.set(i, j, v);
            normalized.set(j, i, v);
        }
    }
    normalized.add_scaled(&KMatrix::identity(k), input.epsilon);
    let u = input.capacity;
    Ok(normalized.scaled(1.0 / (u * u)))
}

struct SignState {
    sum: MultiFlow,
    capacities: Vec<f64>,
    epsilon: f64,
    rho: f64,
    budget: usize,
}

impl EnergySource for SignState {
    fn energy(&mut self, _t: usize) -> Result<EnergyMatrices> {
        let blocks = self
            .capacities
            .par_iter()
            .enumerate()
            .map(|(e, &u)| {
                let input = SignEnergyInput { flow: self.sum.edge(e), capacity: u, rho: self.rho, epsilon: self.epsilon };
                energy_matrix_signs(&input, self.budget)
            })
            .collect::<Result<Vec<_>>>()?;
        EnergyMatrices::new(self.sum.k(), blocks)
    }

    fn observe(&mut self, f: &MultiFlow) -> Result<bool> {
        self.sum.add_assign(f);
        let breach = self
            .capacities
            .iter()
            .enumerate()
            .any(|(e, &u)| f.edge(e).iter().map(|x| x.abs()).sum::<f64>() > self.rho * u * (1.0 + 1e-12));
        Ok(breach)
    }
}

pub(crate) fn max_concurrent_flow_signs(g: &Graph, d: &DemandVector, opts: &ConcurrentOptions) -> Result<ConcurrentOutcome> {
    let params = SignParams::with_overrides(d.k(), opts);
    let mut state = SignState {
        sum: MultiFlow::zeros(g.m(), d.k()),
        capacities: g.capacities(),
        epsilon: opts.epsilon,
        rho: params.rho,
        budget: opts.table_budget,
    };
    let inner = opts.inner();
    run_outer(g, d.k(), opts.epsilon, params.iterations, &mut state, |p| {
        quadratically_capacitated_flow(g, p, d, &inner)
    })
}
