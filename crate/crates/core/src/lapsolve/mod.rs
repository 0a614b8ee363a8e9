//! Solves with the block Laplacian `L = Γᵀ P⁻¹ Γ`.
//!
//! `L` is never assembled. Its preconditioner is the block-diagonal `L̃`
//! formed by k copies of one scalar Laplacian, and the outer iteration is
//! preconditioned Chebyshev over the spectrum interval `[1, 2κ]`.

mod direct;
mod laplacian;

pub use laplacian::{laplacian_solve, InnerPreconditioner, WeightedLaplacian};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DemandVector, Graph};
use crate::kvec::{block_condition_bound, EnergyMatrices, KMatrix};
use laplacian::{dot, norm2, remove_mean};

/// Outer method for systems in `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterMethod {
    #[default]
    Chebyshev,
    ConjugateGradient,
    /// Dense grounded Cholesky; only sensible for small graphs.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub outer: OuterMethod,
    pub inner_preconditioner: InnerPreconditioner,
    /// Relative residual for every inner Laplacian solve.
    pub inner_tolerance: f64,
    /// Lower bound on the outer tolerance outside paper-faithful mode.
    pub tolerance_floor: f64,
    /// Use the unfloored outer tolerance, falling back to a dense solve on
    /// small graphs once it drops below the floor.
    pub paper_faithful: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            outer: OuterMethod::Chebyshev,
            inner_preconditioner: InnerPreconditioner::SpanningTree,
            inner_tolerance: 1e-10,
            tolerance_floor: 1e-12,
            paper_faithful: false,
        }
    }
}

impl SolverOptions {
    pub fn direct() -> Self {
        SolverOptions { outer: OuterMethod::Direct, ..Default::default() }
    }
}

/// Counters for one solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub method: &'static str,
    pub iterations: usize,
    /// `‖b - L x‖₂ / ‖b‖₂`
    pub relative_residual: f64,
    pub preconditioner_solves: usize,
    pub inner_iterations: usize,
    /// Outer tolerance θ that was targeted.
    pub tolerance: f64,
    pub converged: bool,
}

impl SolveReport {
    pub(crate) fn absorb(&mut self, other: &SolveReport) {
        self.iterations += other.iterations;
        self.preconditioner_solves += other.preconditioner_solves;
        self.inner_iterations += other.inner_iterations;
        self.relative_residual = self.relative_residual.max(other.relative_residual);
        self.converged &= other.converged;
        if self.method.is_empty() {
            self.method = other.method;
            self.tolerance = other.tolerance;
        }
    }
}

/// Implicit `Γᵀ P⁻¹ Γ` with the inverse blocks precomputed.
#[derive(Debug, Clone)]
pub struct CoupledOperator<'g> {
    graph: &'g Graph,
    k: usize,
    inverse: Vec<KMatrix>,
}

impl<'g> CoupledOperator<'g> {
    pub fn new(graph: &'g Graph, p: &EnergyMatrices) -> Result<Self> {
        if p.m() != graph.m() {
            return Err(Error::LengthMismatch { expected: graph.m(), got: p.m() });
        }
        Ok(CoupledOperator { graph, k: p.k(), inverse: p.inverse_blocks() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.k * self.graph.n()
    }

    pub fn inverse_block(&self, e: usize) -> &KMatrix {
        &self.inverse[e]
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), got: x.len() });
        }
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let k = self.k;
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut diff = vec![0.0; k];
        let mut z = vec![0.0; k];
        for (e, edge) in self.graph.edges().iter().enumerate() {
            let (t, h) = (edge.tail * k, edge.head * k);
            for i in 0..k {
                diff[i] = x[h + i] - x[t + i];
            }
            self.inverse[e].mul_vec_into(&diff, &mut z);
            for i in 0..k {
                y[h + i] += z[i];
                y[t + i] -= z[i];
            }
        }
    }

    /// `xᵀ L x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let k = self.k;
        let mut diff = vec![0.0; k];
        let mut acc = 0.0;
        for (e, edge) in self.graph.edges().iter().enumerate() {
            for i in 0..k {
                diff[i] = x[edge.head * k + i] - x[edge.tail * k + i];
            }
            acc += self.inverse[e].quad_form(&diff);
        }
        acc
    }
}

/// k copies of the scalar Laplacian with edge weights `1/λ_max(P(e))`, so
/// that `L̃ ⪯ L ⪯ κ L̃`.
#[derive(Debug, Clone)]
pub struct BlockPreconditioner {
    k: usize,
    laplacian: WeightedLaplacian,
    precond: InnerPreconditioner,
    tolerance: f64,
}

pub fn build_preconditioner(g: &Graph, p: &EnergyMatrices, opts: &SolverOptions) -> Result<BlockPreconditioner> {
    if p.m() != g.m() {
        return Err(Error::LengthMismatch { expected: g.m(), got: p.m() });
    }
    let weights: Vec<f64> = (0..p.m()).map(|e| 1.0 / p.lambda_max(e)).collect();
    Ok(BlockPreconditioner {
        k: p.k(),
        laplacian: WeightedLaplacian::new(g, &weights),
        precond: opts.inner_preconditioner,
        tolerance: opts.inner_tolerance,
    })
}

impl BlockPreconditioner {
    pub fn k(&self) -> usize {
        self.k
    }

    /// The scalar Laplacian shared by every commodity block.
    pub fn laplacian(&self) -> &WeightedLaplacian {
        &self.laplacian
    }

    /// `xᵀ L̃ x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.k).map(|i| self.laplacian.quad_form(&gather(x, self.k, i))).sum()
    }

    /// Approximately applies `L̃⁺`; returns the inner iteration count.
    pub fn solve(&self, r: &[f64], out: &mut [f64]) -> Result<usize> {
        let mut iters = 0;
        for i in 0..self.k {
            // residuals are balanced up to cancellation error in b - Lx
            let mut ri = gather(r, self.k, i);
            remove_mean(&mut ri);
            let (x, it) = laplacian_solve(&self.laplacian, &ri, self.tolerance, self.precond)?;
            iters += it;
            for (v, xv) in x.into_iter().enumerate() {
                out[v * self.k + i] = xv;
            }
        }
        Ok(iters)
    }
}

fn gather(x: &[f64], k: usize, i: usize) -> Vec<f64> {
    x.iter().skip(i).step_by(k).copied().collect()
}

/// Projects onto the complement of the per-commodity constant vectors.
pub(crate) fn project_out_constants(x: &mut [f64], k: usize) {
    let n = x.len() / k;
    if n == 0 {
        return;
    }
    for i in 0..k {
        let mean = x.iter().skip(i).step_by(k).sum::<f64>() / n as f64;
        x.iter_mut().skip(i).step_by(k).for_each(|v| *v -= mean);
    }
}

fn check_balanced(b: &[f64], k: usize) -> Result<()> {
    let scale = b.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for i in 0..k {
        let s: f64 = b.iter().skip(i).step_by(k).sum();
        if s.abs() > 1e-9 * scale {
            return Err(Error::Unbalanced(s));
        }
    }
    Ok(())
}

/// Smallest Chebyshev degree whose error bound over `[1, 2κ]` is below θ.
pub fn chebyshev_iterations(kappa: f64, theta: f64) -> usize {
    let (lo, hi) = (1.0, 2.0 * kappa.max(1.0));
    let sigma = (hi + lo) / (hi - lo);
    ((1.0 / theta).acosh() / sigma.acosh()).ceil().max(1.0) as usize
}

fn iteration_cap(kappa: f64, theta: f64) -> usize {
    50 * ((2.0 * kappa).sqrt() * (2.0 / theta).ln()).ceil().max(1.0) as usize
}

fn finish(op: &CoupledOperator, b: &[f64], x: &[f64], report: &mut SolveReport) -> Result<()> {
    let lx = op.apply(x)?;
    let r: Vec<f64> = b.iter().zip(&lx).map(|(a, c)| a - c).collect();
    report.relative_residual = norm2(&r) / norm2(b);
    if !report.relative_residual.is_finite() {
        return Err(Error::NoConvergence {
            solver: report.method,
            iterations: report.iterations,
            residual: report.relative_residual,
        });
    }
    Ok(())
}

/// Preconditioned Chebyshev iteration for `L x = b`.
///
/// Runs the number of steps after which `‖x - L⁺b‖_L ≤ θ ‖L⁺b‖_L` holds for
/// any preconditioned spectrum inside `[1, 2κ]`.
pub fn precon_cheby(
    op: &CoupledOperator,
    pre: &BlockPreconditioner,
    b: &[f64],
    kappa: f64,
    theta: f64,
) -> Result<(Vec<f64>, SolveReport)> {
    let dim = op.dim();
    if b.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, got: b.len() });
    }
    if !(kappa >= 1.0) || !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa}, theta = {theta}")));
    }
    check_balanced(b, op.k())?;
    let mut report = SolveReport { method: "chebyshev", tolerance: theta, converged: true, ..Default::default() };
    let mut b = b.to_vec();
    project_out_constants(&mut b, op.k());
    let mut x = vec![0.0; dim];
    if norm2(&b) == 0.0 {
        return Ok((x, report));
    }

    let steps = chebyshev_iterations(kappa, theta);
    if steps > iteration_cap(kappa, theta) {
        return Err(Error::NoConvergence { solver: "chebyshev", iterations: steps, residual: f64::NAN });
    }
    let (lo, hi) = (1.0, 2.0 * kappa);
    let center = 0.5 * (hi + lo);
    let half = 0.5 * (hi - lo);
    let sigma = center / half;

    let mut r = b.clone();
    let mut z = vec![0.0; dim];
    let mut ad = vec![0.0; dim];
    report.inner_iterations += pre.solve(&r, &mut z)?;
    report.preconditioner_solves += 1;
    let mut d: Vec<f64> = z.iter().map(|v| v / center).collect();
    let mut rho = 1.0 / sigma;
    for step in 1..=steps {
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
        op.apply_into(&d, &mut ad);
        for (ri, adi) in r.iter_mut().zip(&ad) {
            *ri -= adi;
        }
        report.iterations = step;
        if step == steps {
            break;
        }
        report.inner_iterations += pre.solve(&r, &mut z)?;
        report.preconditioner_solves += 1;
        let rho_next = 1.0 / (2.0 * sigma - rho);
        let coef = 2.0 * rho_next / half;
        for (di, zi) in d.iter_mut().zip(&z) {
            *di = rho_next * rho * *di + coef * zi;
        }
        rho = rho_next;
    }
    project_out_constants(&mut x, op.k());
    finish(op, &b, &x, &mut report)?;
    Ok((x, report))
}

/// Preconditioned conjugate gradient for `L x = b`, stopping once the
/// preconditioned residual certifies the same L-norm contract as
/// [`precon_cheby`].
pub fn precon_cg(
    op: &CoupledOperator,
    pre: &BlockPreconditioner,
    b: &[f64],
    kappa: f64,
    theta: f64,
) -> Result<(Vec<f64>, SolveReport)> {
    let dim = op.dim();
    if b.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, got: b.len() });
    }
    if !(kappa >= 1.0) || !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa}, theta = {theta}")));
    }
    check_balanced(b, op.k())?;
    let mut report = SolveReport { method: "pcg", tolerance: theta, converged: true, ..Default::default() };
    let mut b = b.to_vec();
    project_out_constants(&mut b, op.k());
    let mut x = vec![0.0; dim];
    if norm2(&b) == 0.0 {
        return Ok((x, report));
    }
    // ‖x - x*‖_L / ‖x*‖_L ≤ √κ · sqrt(rᵀL̃⁺r / bᵀL̃⁺b)
    let target = theta / kappa.sqrt();
    let cap = iteration_cap(kappa, theta);

    let mut r = b.clone();
    let mut z = vec![0.0; dim];
    let mut ap = vec![0.0; dim];
    report.inner_iterations += pre.solve(&r, &mut z)?;
    report.preconditioner_solves += 1;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let rz0 = rz;
    for it in 1..=cap {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        report.iterations = it;
        report.inner_iterations += pre.solve(&r, &mut z)?;
        report.preconditioner_solves += 1;
        let rz_new = dot(&r, &z);
        if (rz_new.max(0.0) / rz0).sqrt() <= target {
            project_out_constants(&mut x, op.k());
            finish(op, &b, &x, &mut report)?;
            return Ok((x, report));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..dim {
            p[i] = z[i] + beta * p[i];
        }
    }
    project_out_constants(&mut x, op.k());
    finish(op, &b, &x, &mut report)?;
    Err(Error::NoConvergence { solver: "pcg", iterations: report.iterations, residual: report.relative_residual })
}

/// Outer tolerance `δ / (5 m⁶ k² U⁴)` with `U` the spread of the block
/// spectra after normalizing the smallest eigenvalue to 1.
pub fn solve_tolerance(delta: f64, m: usize, k: usize, spread: f64) -> f64 {
    delta / (5.0 * (m as f64).powi(6) * (k as f64).powi(2) * spread.powi(4))
}

/// Finds `φ̂` with `‖φ̂ - L⁺d‖_L ≤ δ ‖L⁺d‖_L`.
pub fn solve_coupled_system(
    g: &Graph,
    p: &EnergyMatrices,
    d: &DemandVector,
    delta: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let k = p.k();
    if d.k() != k || d.n() != g.n() {
        return Err(Error::LengthMismatch { expected: g.n() * k, got: d.as_slice().len() });
    }
    let (lmin, lmax) = p.spectrum_range();
    let exact = solve_tolerance(delta, g.m(), k, lmax / lmin);
    let theta = if opts.paper_faithful { exact } else { exact.max(opts.tolerance_floor) };
    let theta = theta.min(0.5);

    let dense_fallback = opts.paper_faithful && theta < opts.tolerance_floor && g.n() <= 50;
    if opts.outer == OuterMethod::Direct || dense_fallback {
        let x = direct::solve(g, p, d.as_slice())?;
        let op = CoupledOperator::new(g, p)?;
        let mut report = SolveReport { method: "direct", tolerance: theta, converged: true, ..Default::default() };
        if d.norm_inf() > 0.0 {
            finish(&op, d.as_slice(), &x, &mut report)?;
        }
        return Ok((x, report));
    }

    let op = CoupledOperator::new(g, p)?;
    let pre = build_preconditioner(g, p, opts)?;
    let kappa = block_condition_bound(p);
    match opts.outer {
        OuterMethod::Chebyshev => precon_cheby(&op, &pre, d.as_slice(), kappa, theta),
        OuterMethod::ConjugateGradient => precon_cg(&op, &pre, d.as_slice(), kappa, theta),
        OuterMethod::Direct => unreachable!(),
    }
}
