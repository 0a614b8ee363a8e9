//! Scalar weighted graph Laplacians and a preconditioned conjugate gradient
//! solver for them.

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Inner preconditioner used by [`laplacian_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerPreconditioner {
    /// Diagonal scaling.
    Jacobi,
    /// Exact solve on a maximum-weight spanning tree.
    #[default]
    SpanningTree,
}

/// `L = Γᵀ W Γ` for a diagonal edge weighting `W`.
#[derive(Debug, Clone)]
pub struct WeightedLaplacian {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    degree: Vec<f64>,
    tree: SpanningTree,
}

impl WeightedLaplacian {
    pub fn new(g: &Graph, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), g.m());
        let n = g.n();
        let edges: Vec<(usize, usize, f64)> =
            g.edges().iter().zip(weights).map(|(e, &w)| (e.tail, e.head, w)).collect();
        let mut degree = vec![0.0; n];
        for &(t, h, w) in &edges {
            degree[t] += w;
            degree[h] += w;
        }
        let tree = SpanningTree::max_weight(n, &edges);
        WeightedLaplacian { n, edges, degree, tree }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.iter().map(|e| e.2)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (v, yv) in y.iter_mut().enumerate() {
            *yv = self.degree[v] * x[v];
        }
        for &(t, h, w) in &self.edges {
            y[t] -= w * x[h];
            y[h] -= w * x[t];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.edges.iter().map(|&(t, h, w)| w * (x[h] - x[t]).powi(2)).sum()
    }

    fn precondition(&self, kind: InnerPreconditioner, r: &[f64], z: &mut [f64]) {
        match kind {
            InnerPreconditioner::Jacobi => {
                for ((zv, rv), d) in z.iter_mut().zip(r).zip(&self.degree) {
                    *zv = rv / d;
                }
            }
            InnerPreconditioner::SpanningTree => self.tree.solve_into(r, z),
        }
        remove_mean(z);
    }
}

/// Rooted spanning tree with vertices listed in BFS order.
#[derive(Debug, Clone)]
struct SpanningTree {
    order: Vec<usize>,
    parent: Vec<usize>,
    weight_to_parent: Vec<f64>,
}

impl SpanningTree {
    fn max_weight(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut idx: Vec<usize> = (0..edges.len()).collect();
        idx.sort_by(|&a, &b| edges[b].2.partial_cmp(&edges[a].2).unwrap().then(a.cmp(&b)));
        let mut uf: Vec<usize> = (0..n).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        let mut adj = vec![Vec::new(); n];
        for e in idx {
            let (t, h, w) = edges[e];
            let (rt, rh) = (find(&mut uf, t), find(&mut uf, h));
            if rt != rh {
                uf[rt] = rh;
                adj[t].push((h, w));
                adj[h].push((t, w));
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut parent = vec![usize::MAX; n];
        let mut weight_to_parent = vec![0.0; n];
        let mut seen = vec![false; n];
        if n > 0 {
            seen[0] = true;
            order.push(0);
            let mut head = 0;
            while head < order.len() {
                let u = order[head];
                head += 1;
                for &(v, w) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        parent[v] = u;
                        weight_to_parent[v] = w;
                        order.push(v);
                    }
                }
            }
        }
        SpanningTree { order, parent, weight_to_parent }
    }

    /// Exact tree-Laplacian solve for a mean-zero right-hand side.
    fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let mut subtree: Vec<f64> = b.to_vec();
        for &v in self.order.iter().skip(1).rev() {
            let p = self.parent[v];
            subtree[p] += subtree[v];
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for &v in self.order.iter().skip(1) {
            x[v] = x[self.parent[v]] + subtree[v] / self.weight_to_parent[v];
        }
    }
}

pub(crate) fn remove_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `L x = b` for mean-zero `b` to relative residual `tol`, returning
/// the mean-zero solution and the iteration count.
pub fn laplacian_solve(
    lap: &WeightedLaplacian,
    b: &[f64],
    tol: f64,
    precond: InnerPreconditioner,
) -> Result<(Vec<f64>, usize)> {
    let n = lap.n();
    if b.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: b.len() });
    }
    let scale = b.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let sum: f64 = b.iter().sum();
    if sum.abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) && scale > 0.0 {
        return Err(Error::Unbalanced(sum));
    }
    let mut r = b.to_vec();
    remove_mean(&mut r);
    let bnorm = norm2(&r);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }

    let cap = (20 * n).max(1000);
    let mut z = vec![0.0; n];
    lap.precondition(precond, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=cap {
        lap.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= tol * bnorm {
            remove_mean(&mut x);
            return Ok((x, it));
        }
        lap.precondition(precond, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = norm2(&r) / bnorm;
    Err(Error::NoConvergence { solver: "laplacian pcg", iterations: cap, residual })
}
