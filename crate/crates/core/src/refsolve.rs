//! Brute-force reference answers for small instances.
//!
//! Everything here is dense and written directly against `nalgebra` or plain
//! loops. None of it calls the iterative solvers, so it can be used to check
//! them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{DemandVector, Graph, Instance};
use crate::kvec::{EnergyMatrices, KMatrix, MultiFlow};

/// Largest `n·k` accepted by the dense coupled oracle.
pub const DENSE_LIMIT: usize = 200;

fn to_dense(b: &KMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(b.k(), b.k(), |i, j| b.get(i, j))
}

/// Pseudo-inverse of a symmetric matrix, eigenvalues below `cutoff · λ_max` dropped.
pub fn sym_pinv(a: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let inv = eig.eigenvalues.map(|l| if l.abs() > cutoff * top && l != 0.0 { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Assembled `Γᵀ P⁻¹ Γ` of size `nk × nk`, index `v·k + i`.
pub fn dense_laplacian(g: &Graph, p: &EnergyMatrices) -> Result<DMatrix<f64>> {
    let (n, k) = (g.n(), p.k());
    if n * k > DENSE_LIMIT {
        return Err(Error::Budget { needed: n * k, budget: DENSE_LIMIT });
    }
    let mut l = DMatrix::zeros(n * k, n * k);
    for (e, edge) in g.edges().iter().enumerate() {
        let inv = to_dense(p.block(e)).try_inverse().ok_or(Error::NotPositiveDefinite { edge: e, lambda_min: 0.0 })?;
        for (a, sa) in [(edge.head, 1.0), (edge.tail, -1.0)] {
            for (b, sb) in [(edge.head, 1.0), (edge.tail, -1.0)] {
                for i in 0..k {
                    for j in 0..k {
                        l[(a * k + i, b * k + j)] += sa * sb * inv[(i, j)];
                    }
                }
            }
        }
    }
    Ok(l)
}

/// Optimal coupled energy `dᵀ L⁺ d` and the flow attaining it.
pub fn dense_coupled_oracle(g: &Graph, p: &EnergyMatrices, d: &DemandVector) -> Result<(f64, MultiFlow)> {
    let k = p.k();
    let l = dense_laplacian(g, p)?;
    let dv = DVector::from_column_slice(d.as_slice());
    let phi = sym_pinv(&l, 1e-10) * &dv;
    let energy = dv.dot(&phi);
    let mut flow = MultiFlow::zeros(g.m(), k);
    for (e, edge) in g.edges().iter().enumerate() {
        let inv = to_dense(p.block(e)).try_inverse().ok_or(Error::NotPositiveDefinite { edge: e, lambda_min: 0.0 })?;
        let grad = DVector::from_fn(k, |i, _| phi[edge.head * k + i] - phi[edge.tail * k + i]);
        flow.edge_mut(e).copy_from_slice((inv * grad).as_slice());
    }
    Ok((energy, flow))
}

/// Minimum of `fᵀPf` subject to `Γᵀ f_i = F_i d_i` and `Σ F_i = 1`, by a
/// dense KKT solve. Returns `(energy, F, f)`.
pub fn dense_weighted_oracle(
    g: &Graph,
    p: &EnergyMatrices,
    demands: &[Vec<f64>],
) -> Result<(f64, Vec<f64>, MultiFlow)> {
    let (n, m, k) = (g.n(), g.m(), p.k());
    if demands.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: demands.len() });
    }
    let nx = m * k + k;
    let nc = n * k + 1;
    if nx + nc > 4 * DENSE_LIMIT {
        return Err(Error::Budget { needed: nx + nc, budget: 4 * DENSE_LIMIT });
    }
    let mut kkt = DMatrix::zeros(nx + nc, nx + nc);
    for e in 0..m {
        for i in 0..k {
            for j in 0..k {
                kkt[(e * k + i, e * k + j)] = 2.0 * p.block(e).get(i, j);
            }
        }
    }
    let mut put = |r: usize, c: usize, v: f64| {
        kkt[(nx + r, c)] += v;
        kkt[(c, nx + r)] += v;
    };
    for (e, edge) in g.edges().iter().enumerate() {
        for i in 0..k {
            put(edge.head * k + i, e * k + i, 1.0);
            put(edge.tail * k + i, e * k + i, -1.0);
        }
    }
    for (i, d) in demands.iter().enumerate() {
        for v in 0..n {
            put(v * k + i, m * k + i, -d[v]);
        }
        put(n * k, m * k + i, 1.0);
    }
    let mut rhs = DVector::zeros(nx + nc);
    rhs[nx + n * k] = 1.0;
    let sol = kkt
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidInstance(e.to_string()))?;
    let flow = MultiFlow::from_vec(k, sol.as_slice()[..m * k].to_vec())?;
    let values = sol.as_slice()[m * k..nx].to_vec();
    let energy = (0..m).map(|e| p.block(e).quad_form(flow.edge(e))).sum();
    Ok((energy, values, flow))
}

/// `max cᵀx` subject to `A x ≤ b`, `x ≥ 0`, with `b ≥ 0`. Dense tableau,
/// Bland's rule. Returns the optimum and a maximizer.
pub fn simplex_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    const TOL: f64 = 1e-9;
    let (rows, cols) = (a.len(), c.len());
    if b.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter("simplex needs b >= 0".into()));
    }
    let width = cols + rows + 1;
    // row `rows` is the objective row: reduced costs -c, value in last column
    let mut t = vec![vec![0.0; width]; rows + 1];
    for r in 0..rows {
        if a[r].len() != cols {
            return Err(Error::LengthMismatch { expected: cols, got: a[r].len() });
        }
        t[r][..cols].copy_from_slice(&a[r]);
        t[r][cols + r] = 1.0;
        t[r][width - 1] = b[r];
    }
    for j in 0..cols {
        t[rows][j] = -c[j];
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    loop {
        let Some(enter) = (0..cols + rows).find(|&j| t[rows][j] < -TOL) else { break };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..rows {
            if t[r][enter] > TOL {
                let ratio = t[r][width - 1] / t[r][enter];
                let better = ratio < best - TOL
                    || (ratio <= best + TOL && leave.is_some_and(|l| basis[r] < basis[l]));
                if better {
                    best = ratio.min(best);
                    leave = Some(r);
                }
            }
        }
        let Some(lr) = leave else { return Err(Error::Unbounded) };
        let piv = t[lr][enter];
        t[lr].iter_mut().for_each(|x| *x /= piv);
        let pivot_row = t[lr].clone();
        for (r, row) in t.iter_mut().enumerate() {
            if r != lr {
                let f = row[enter];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(x, p)| *x -= f * p);
                }
            }
        }
        basis[lr] = enter;
    }
    let mut x = vec![0.0; cols];
    for (r, &j) in basis.iter().enumerate() {
        if j < cols {
            x[j] = t[r][width - 1];
        }
    }
    Ok((t[rows][width - 1], x))
}

/// Column layout shared by the flow LPs: `f⁺(e,i)`, `f⁻(e,i)`, then extras.
struct FlowLp {
    m: usize,
    k: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl FlowLp {
    fn new(g: &Graph, k: usize, extras: usize) -> Self {
        let (m, cols) = (g.m(), 2 * g.m() * k + extras);
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (e, edge) in g.edges().iter().enumerate() {
            let mut row = vec![0.0; cols];
            for i in 0..k {
                row[e * k + i] = 1.0;
                row[m * k + e * k + i] = 1.0;
            }
            rows.push(row);
            rhs.push(edge.capacity);
        }
        FlowLp { m, k, rows, rhs }
    }

    fn cols(&self) -> usize {
        2 * self.m * self.k + self.rows.first().map_or(0, |r| r.len() - 2 * self.m * self.k)
    }

    /// Adds `inflow_i(v) - Σ coef·x_extra = 0` as two inequalities.
    fn conservation(&mut self, g: &Graph, i: usize, v: usize, extra: &[(usize, f64)]) {
        let (m, k) = (self.m, self.k);
        let mut row = vec![0.0; self.cols()];
        for (e, edge) in g.edges().iter().enumerate() {
            let s = if edge.head == v {
                1.0
            } else if edge.tail == v {
                -1.0
            } else {
                continue;
            };
            row[e * k + i] += s;
            row[m * k + e * k + i] -= s;
        }
        for &(col, coef) in extra {
            row[2 * m * k + col] -= coef;
        }
        let neg: Vec<f64> = row.iter().map(|x| -x).collect();
        self.rows.push(row);
        self.rhs.push(0.0);
        self.rows.push(neg);
        self.rhs.push(0.0);
    }
}

/// Largest `λ` such that `λ d` routes within capacities (L1 congestion).
pub fn lp_concurrent_oracle(inst: &Instance) -> Result<f64> {
    let (g, k) = (&inst.graph, inst.k());
    if g.m() * k > DENSE_LIMIT {
        return Err(Error::Budget { needed: g.m() * k, budget: DENSE_LIMIT });
    }
    let mut lp = FlowLp::new(g, k, 1);
    let d = inst.demands();
    for i in 0..k {
        let di = d.commodity(i);
        // vertex with the largest id is implied by the others
        for v in 0..g.n() - 1 {
            lp.conservation(g, i, v, &[(0, di[v])]);
        }
    }
    let mut c = vec![0.0; lp.cols()];
    c[2 * g.m() * k] = 1.0;
    Ok(simplex_max(&c, &lp.rows, &lp.rhs)?.0)
}

/// `max Σ λ_i F_i` over flows with `F_i ≥ 0` units from `s_i` to `t_i`.
pub fn lp_weighted_oracle(inst: &Instance, weights: &[f64]) -> Result<f64> {
    let (g, k) = (&inst.graph, inst.k());
    if weights.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: weights.len() });
    }
    if g.m() * k > DENSE_LIMIT {
        return Err(Error::Budget { needed: g.m() * k, budget: DENSE_LIMIT });
    }
    let mut lp = FlowLp::new(g, k, k);
    for (i, c) in inst.commodities.iter().enumerate() {
        for v in 0..g.n() - 1 {
            let coef = if v == c.sink {
                1.0
            } else if v == c.source {
                -1.0
            } else {
                0.0
            };
            lp.conservation(g, i, v, &[(i, coef)]);
        }
    }
    let mut obj = vec![0.0; lp.cols()];
    obj[2 * g.m() * k..].copy_from_slice(weights);
    Ok(simplex_max(&obj, &lp.rows, &lp.rhs)?.0)
}

/// Subset-sum counts by enumerating all `2^k` subsets.
pub fn subset_sum_brute(a: &[u64]) -> Result<Vec<u64>> {
    if a.len() > 20 {
        return Err(Error::Budget { needed: a.len(), budget: 20 });
    }
    let total: u64 = a.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    for mask in 0u32..(1 << a.len()) {
        let s: u64 = a.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &x)| x).sum();
        counts[s as usize] += 1;
    }
    Ok(counts)
}

/// `(1/u²)(Σ_s w(s) s sᵀ / Σ_s w(s) + εI)` with `w(s) = exp((ε/ρ) sᵀf / u)`,
/// summed over all `2^k` sign vectors.
pub fn exact_sign_energy(f: &[f64], u: f64, rho: f64, epsilon: f64) -> Result<KMatrix> {
    let k = f.len();
    if k > 12 {
        return Err(Error::Budget { needed: k, budget: 12 });
    }
    let l1: f64 = f.iter().map(|x| x.abs()).sum();
    let mut acc = KMatrix::zeros(k);
    let mut z = 0.0;
    for mask in 0u32..(1 << k) {
        let s: Vec<f64> = (0..k).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
        let dot: f64 = s.iter().zip(f).map(|(a, b)| a * b).sum();
        // shifted by the maximum exponent for range
        let w = ((epsilon / rho) * (dot - l1) / u).exp();
        z += w;
        acc.add_scaled(&KMatrix::outer(&s), w);
    }
    let mut p = acc.scaled(1.0 / z);
    p.add_scaled(&KMatrix::identity(k), epsilon);
    Ok(p.scaled(1.0 / (u * u)))
}
