//! Matrix multiplicative weights over per-edge k×k accumulators.

use rayon::prelude::*;
use serde::Serialize;

use super::{run_outer, ConcurrentOptions, ConcurrentOutcome, EnergySource};
use crate::capacitated::quadratically_capacitated_flow;
use crate::error::Result;
use crate::graph::{DemandVector, Graph};
use crate::kvec::{matrix_exp_sym, sym_eig_k, EnergyMatrices, KMatrix, MultiFlow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmwParams {
    pub rho: f64,
    pub epsilon1: f64,
    pub epsilon1_prime: f64,
    pub iterations: usize,
}

impl MmwParams {
    /// `ρ = sqrt(k/ε)`, `ε₁ = ε/(kρ)`, `ε₁' = -ln(1 - ε₁)`, `N = ⌈ρ ε₁'^{-2} ln k⌉`
    /// with `ln 2` standing in for `ln k` when k = 1.
    pub fn theoretical(k: usize, epsilon: f64) -> Self {
        let kf = k as f64;
        let rho = (kf / epsilon).sqrt();
        let epsilon1 = epsilon / (kf * rho);
        let epsilon1_prime = -(1.0 - epsilon1).ln();
        let n = rho / (epsilon1_prime * epsilon1_prime) * (k.max(2) as f64).ln();
        MmwParams { rho, epsilon1, epsilon1_prime, iterations: (n.ceil() as usize).max(1) }
    }

    pub fn with_overrides(k: usize, opts: &ConcurrentOptions) -> Self {
        let mut p = MmwParams::theoretical(k, opts.epsilon);
        if let Some(rho) = opts.outer_rho {
            p.rho = rho;
            p.epsilon1 = opts.epsilon / (k as f64 * rho);
            p.epsilon1_prime = -(1.0 - p.epsilon1).ln();
        }
        if let Some(n) = opts.outer_iterations {
            p.iterations = n.max(1);
        }
        p
    }
}

/// `(1/u²)(W / max_i W_ii + εI)`
pub fn build_energy_from_w(w: &KMatrix, u: f64, epsilon: f64) -> KMatrix {
    let top = w.diagonal().into_iter().fold(f64::MIN_POSITIVE, f64::max);
    let mut p = w.scaled(1.0 / top);
    p.add_scaled(&KMatrix::identity(w.k()), epsilon);
    p.scaled(1.0 / (u * u))
}

/// Index of the largest diagonal entry, lowest index on ties.
pub fn argmax_diagonal(w: &KMatrix) -> usize {
    let diag = w.diagonal();
    let mut best = 0;
    for (i, &v) in diag.iter().enumerate() {
        if v > diag[best] {
            best = i;
        }
    }
    best
}

/// `M = (1/2ρ)((1+2ε) 1_i - f fᵀ/u² + ρI)`
pub fn update_matrix(w: &KMatrix, f: &[f64], u: f64, epsilon: f64, rho: f64) -> KMatrix {
    let k = w.k();
    let i = argmax_diagonal(w);
    let mut m = KMatrix::identity(k).scaled(rho);
    m.add_scaled(&KMatrix::outer(f), -1.0 / (u * u));
    m.set(i, i, m.get(i, i) + 1.0 + 2.0 * epsilon);
    m.scaled(1.0 / (2.0 * rho))
}

/// One edge's step: `S' = S + M`, `W' = exp(-ε₁' S')`. Also returns `M`.
pub fn mmw_update(
    s: &KMatrix,
    w: &KMatrix,
    f: &[f64],
    u: f64,
    epsilon: f64,
    rho: f64,
    epsilon1_prime: f64,
) -> Result<(KMatrix, KMatrix, KMatrix)> {
    let m = update_matrix(w, f, u, epsilon, rho);
    let mut s_next = s.clone();
    s_next.add_scaled(&m, 1.0);
    let w_next = matrix_exp_sym(&s_next.scaled(-epsilon1_prime))?;
    Ok((s_next, w_next, m))
}

/// Per-edge accumulators `S(e)` and `W(e) = exp(-ε₁' S(e))`.
#[derive(Debug, Clone)]
pub struct MmwState {
    pub s: Vec<KMatrix>,
    pub w: Vec<KMatrix>,
    capacities: Vec<f64>,
    epsilon: f64,
    params: MmwParams,
    /// Extreme eigenvalues of the last update matrices.
    pub last_update_range: (f64, f64),
}

impl MmwState {
    pub fn new(g: &Graph, k: usize, epsilon: f64, params: MmwParams) -> Self {
        MmwState {
            s: vec![KMatrix::zeros(k); g.m()],
            w: vec![KMatrix::identity(k); g.m()],
            capacities: g.capacities(),
            epsilon,
            params,
            last_update_range: (0.0, 0.0),
        }
    }
}

impl EnergySource for MmwState {
    fn energy(&mut self, _t: usize) -> Result<EnergyMatrices> {
        let k = self.w.first().map_or(0, KMatrix::k);
        let blocks = self
            .w
            .iter()
            .zip(&self.capacities)
            .map(|(w, &u)| build_energy_from_w(w, u, self.epsilon))
            .collect();
        EnergyMatrices::new(k, blocks)
    }

    fn observe(&mut self, f: &MultiFlow) -> Result<bool> {
        let (eps, rho, e1p) = (self.epsilon, self.params.rho, self.params.epsilon1_prime);
        let updates: Vec<(KMatrix, KMatrix, KMatrix)> = self
            .s
            .par_iter()
            .zip(self.w.par_iter())
            .enumerate()
            .map(|(e, (s, w))| mmw_update(s, w, f.edge(e), self.capacities[e], eps, rho, e1p))
            .collect::<Result<_>>()?;
        let mut breach = false;
        let mut range = (f64::INFINITY, f64::NEG_INFINITY);
        for (e, (s, w, m)) in updates.into_iter().enumerate() {
            // f fᵀ / u² ⪯ ρ I  iff  ‖f‖₂² ≤ ρ u²
            let u = self.capacities[e];
            let norm2: f64 = f.edge(e).iter().map(|x| x * x).sum();
            breach |= norm2 > rho * u * u * (1.0 + 1e-12);
            let eig = sym_eig_k(&m)?;
            range = (range.0.min(eig.min()), range.1.max(eig.max()));
            self.s[e] = s;
            self.w[e] = w;
        }
        self.last_update_range = range;
        Ok(breach)
    }
}

pub(crate) fn max_concurrent_flow_mmw(g: &Graph, d: &DemandVector, opts: &ConcurrentOptions) -> Result<ConcurrentOutcome> {
    let params = MmwParams::with_overrides(d.k(), opts);
    let mut state = MmwState::new(g, d.k(), opts.epsilon, params);
    let inner = opts.inner();
    run_outer(g, d.k(), opts.epsilon, params.iterations, &mut state, |p| {
        quadratically_capacitated_flow(g, p, d, &inner)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theoretical_width() {
        let p = MmwParams::theoretical(4, 1.0);
        assert!((p.rho - 2.0).abs() < 1e-15);
        assert!((p.epsilon1 - 0.125).abs() < 1e-15);
        let e1p = -(0.875f64).ln();
        assert_eq!(p.iterations, (2.0 / (e1p * e1p) * 4f64.ln()).ceil() as usize);
    }

    #[test]
    fn identity_energy() {
        let p = build_energy_from_w(&KMatrix::identity(2), 1.0, 0.1);
        assert!((p.get(0, 0) - 1.1).abs() < 1e-15);
        assert_eq!(p.get(0, 1), 0.0);
    }

    #[test]
    fn zero_flow_update_ties_to_first() {
        let m = update_matrix(&KMatrix::identity(2), &[0.0, 0.0], 1.0, 0.1, 2.0);
        assert!((m.get(0, 0) - (1.2 + 2.0) / 4.0).abs() < 1e-15);
        assert!((m.get(1, 1) - 0.5).abs() < 1e-15);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn scalar_recurrence() {
        // k = 1: M = (1/2ρ)(1 + 2ε - f²/u² + ρ), W = exp(-ε₁' S)
        let (eps, rho, e1p) = (0.1, 3.0, 0.05);
        let s0 = KMatrix::zeros(1);
        let w0 = KMatrix::identity(1);
        let (s1, w1, _) = mmw_update(&s0, &w0, &[1.0], 2.0, eps, rho, e1p).unwrap();
        let (s2, w2, _) = mmw_update(&s1, &w1, &[0.5], 2.0, eps, rho, e1p).unwrap();
        let m1 = (1.2 - 0.25 + 3.0) / 6.0;
        let m2 = (1.2 - 0.0625 + 3.0) / 6.0;
        assert!((s2.get(0, 0) - (m1 + m2)).abs() < 1e-14);
        assert!((w2.get(0, 0) - (-e1p * (m1 + m2)).exp()).abs() < 1e-14);
    }
}
