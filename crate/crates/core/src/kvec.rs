//! Block vectors over (edge, commodity) space and the small k×k symmetric
//! matrices attached to each edge.

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// Dense row-major k×k matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix {
    k: usize,
    data: Vec<f64>,
}

impl KMatrix {
    pub fn zeros(k: usize) -> Self {
        KMatrix { k, data: vec![0.0; k * k] }
    }

    pub fn identity(k: usize) -> Self {
        Self::diag(&vec![1.0; k])
    }

    pub fn diag(values: &[f64]) -> Self {
        let k = values.len();
        let mut m = Self::zeros(k);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * k + i] = v;
        }
        m
    }

    pub fn from_row_major(k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * k {
            return Err(Error::LengthMismatch { expected: k * k, got: data.len() });
        }
        Ok(KMatrix { k, data })
    }

    /// `v vᵀ`
    pub fn outer(v: &[f64]) -> Self {
        let k = v.len();
        let mut m = Self::zeros(k);
        for i in 0..k {
            for j in 0..k {
                m.data[i * k + j] = v[i] * v[j];
            }
        }
        m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.k + j] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        KMatrix { k: self.k, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add_scaled(&mut self, other: &KMatrix, s: f64) {
        debug_assert_eq!(self.k, other.k);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.k];
        self.mul_vec_into(x, &mut y);
        y
    }

    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * self.k..(i + 1) * self.k];
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn matmul(&self, other: &KMatrix) -> KMatrix {
        let k = self.k;
        let mut out = Self::zeros(k);
        for i in 0..k {
            for l in 0..k {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..k {
                    out.data[i * k + j] += a * other.get(l, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> KMatrix {
        let mut t = Self::zeros(self.k);
        for i in 0..self.k {
            for j in 0..self.k {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `xᵀ A x`
    #[inline]
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let k = self.k;
        let mut acc = 0.0;
        for i in 0..k {
            let row = &self.data[i * k..(i + 1) * k];
            acc += x[i] * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Fails if asymmetry exceeds the tolerance, otherwise returns `(A + Aᵀ)/2`.
    pub fn symmetrized(&self) -> Result<KMatrix> {
        let asym = self.max_asymmetry();
        if asym > SYMMETRY_TOL * self.max_abs().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let mut s = self.clone();
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                s.set(i, j, avg);
                s.set(j, i, avg);
            }
        }
        Ok(s)
    }
}

/// Eigendecomposition `A = Q diag(values) Qᵀ`, eigenvalues ascending,
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: KMatrix,
}

impl SymEigen {
    /// `Q diag(f(λ)) Qᵀ`
    pub fn map(&self, f: impl Fn(f64) -> f64) -> KMatrix {
        let k = self.values.len();
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = KMatrix::zeros(k);
        for i in 0..k {
            for j in i..k {
                let mut acc = 0.0;
                for (l, &w) in fl.iter().enumerate() {
                    acc += self.vectors.get(i, l) * w * self.vectors.get(j, l);
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> KMatrix {
        self.map(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Cyclic Jacobi eigensolver for small symmetric matrices.
pub fn sym_eig_k(a: &KMatrix) -> Result<SymEigen> {
    let mut a = a.symmetrized()?;
    let k = a.k;
    let mut q = KMatrix::identity(k);
    let frob: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _sweep in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob || off == 0.0 {
            break;
        }
        for p in 0..k {
            for r in (p + 1)..k {
                let apr = a.get(p, r);
                if apr.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(r, r) - a.get(p, p)) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J on rows/cols p, r
                for l in 0..k {
                    let alp = a.get(l, p);
                    let alr = a.get(l, r);
                    a.set(l, p, c * alp - s * alr);
                    a.set(l, r, s * alp + c * alr);
                }
                for l in 0..k {
                    let apl = a.get(p, l);
                    let arl = a.get(r, l);
                    a.set(p, l, c * apl - s * arl);
                    a.set(r, l, s * apl + c * arl);
                }
                for l in 0..k {
                    let qlp = q.get(l, p);
                    let qlr = q.get(l, r);
                    q.set(l, p, c * qlp - s * qlr);
                    q.set(l, r, s * qlp + c * qlr);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| a.get(x, x).partial_cmp(&a.get(y, y)).unwrap());
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = KMatrix::zeros(k);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..k {
            vectors.set(row, col, q.get(row, src));
        }
    }
    Ok(SymEigen { values, vectors })
}

/// `exp(A)` for symmetric `A` via its eigendecomposition.
pub fn matrix_exp_sym(a: &KMatrix) -> Result<KMatrix> {
    Ok(sym_eig_k(a)?.map(f64::exp))
}

/// Per-edge symmetric positive-definite k×k blocks with cached extreme eigenvalues.
#[derive(Debug, Clone)]
pub struct EnergyMatrices {
    k: usize,
    blocks: Vec<KMatrix>,
    lambda_min: Vec<f64>,
    lambda_max: Vec<f64>,
}

impl EnergyMatrices {
    pub fn new(k: usize, blocks: Vec<KMatrix>) -> Result<Self> {
        let mut lambda_min = Vec::with_capacity(blocks.len());
        let mut lambda_max = Vec::with_capacity(blocks.len());
        let mut sym = Vec::with_capacity(blocks.len());
        for (e, b) in blocks.into_iter().enumerate() {
            if b.k() != k {
                return Err(Error::LengthMismatch { expected: k, got: b.k() });
            }
            let b = b.symmetrized()?;
            let eig = sym_eig_k(&b)?;
            if !(eig.min() > 0.0) {
                return Err(Error::NotPositiveDefinite { edge: e, lambda_min: eig.min() });
            }
            lambda_min.push(eig.min());
            lambda_max.push(eig.max());
            sym.push(b);
        }
        Ok(EnergyMatrices { k, blocks: sym, lambda_min, lambda_max })
    }

    /// `P(e) = s_e · I`.
    pub fn scaled_identity(k: usize, scales: &[f64]) -> Result<Self> {
        Self::new(k, scales.iter().map(|&s| KMatrix::identity(k).scaled(s)).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, e: usize) -> &KMatrix {
        &self.blocks[e]
    }

    pub fn blocks(&self) -> &[KMatrix] {
        &self.blocks
    }

    pub fn lambda_min(&self, e: usize) -> f64 {
        self.lambda_min[e]
    }

    pub fn lambda_max(&self, e: usize) -> f64 {
        self.lambda_max[e]
    }

    /// Smallest and largest eigenvalue over all blocks.
    pub fn spectrum_range(&self) -> (f64, f64) {
        let lo = self.lambda_min.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.lambda_max.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    }

    /// Multiplies block `e` by `factors[e] > 0`; eigenvalues scale without a re-solve.
    pub fn scaled_per_edge(&self, factors: &[f64]) -> Self {
        assert_eq!(factors.len(), self.m());
        EnergyMatrices {
            k: self.k,
            blocks: self.blocks.iter().zip(factors).map(|(b, &s)| b.scaled(s)).collect(),
            lambda_min: self.lambda_min.iter().zip(factors).map(|(l, s)| l * s).collect(),
            lambda_max: self.lambda_max.iter().zip(factors).map(|(l, s)| l * s).collect(),
        }
    }

    pub fn inverse_blocks(&self) -> Vec<KMatrix> {
        self.blocks
            .iter()
            .map(|b| sym_eig_k(b).expect("blocks are symmetric").map(|l| 1.0 / l))
            .collect()
    }

    fn check(&self, f: &MultiFlow) -> Result<()> {
        if f.k() != self.k || f.m() != self.m() {
            return Err(Error::LengthMismatch { expected: self.k * self.m(), got: f.len() });
        }
        Ok(())
    }
}

/// `max_e λ_max(e) / λ_min(e)`
pub fn block_condition_bound(p: &EnergyMatrices) -> f64 {
    p.lambda_min
        .iter()
        .zip(&p.lambda_max)
        .map(|(lo, hi)| hi / lo)
        .fold(1.0, f64::max)
}

/// Edge-major multicommodity flow: entry `e * k + i` is commodity `i` on edge `e`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MultiFlow {
    k: usize,
    values: Vec<f64>,
}

impl MultiFlow {
    pub fn zeros(m: usize, k: usize) -> Self {
        MultiFlow { k, values: vec![0.0; m * k] }
    }

    pub fn from_vec(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::LengthMismatch { expected: k, got: values.len() });
        }
        Ok(MultiFlow { k, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// The length-k block `f(e)`.
    pub fn edge(&self, e: usize) -> &[f64] {
        &self.values[e * self.k..(e + 1) * self.k]
    }

    pub fn edge_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.values[e * self.k..(e + 1) * self.k]
    }

    /// The length-m slice `f_i`.
    pub fn commodity(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.k).copied().collect()
    }

    pub fn set_commodity(&mut self, i: usize, flow: &[f64]) {
        for (e, &x) in flow.iter().enumerate() {
            self.values[e * self.k + i] = x;
        }
    }

    pub fn add_assign(&mut self, other: &MultiFlow) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|x| *x *= s);
    }

    pub fn scaled(&self, s: f64) -> MultiFlow {
        let mut f = self.clone();
        f.scale(s);
        f
    }
}

/// `f(e)ᵀ P(e) f(e)`
pub fn energy_edge(p: &EnergyMatrices, e: usize, f: &MultiFlow) -> f64 {
    p.block(e).quad_form(f.edge(e))
}

/// Total energy `Σ_e f(e)ᵀ P(e) f(e)`.
pub fn energy(p: &EnergyMatrices, f: &MultiFlow) -> Result<f64> {
    p.check(f)?;
    Ok((0..p.m()).map(|e| energy_edge(p, e, f)).sum())
}

/// `sqrt(f(e)ᵀ P(e) f(e))`
pub fn saturation(p: &EnergyMatrices, e: usize, f: &MultiFlow) -> Result<f64> {
    p.check(f)?;
    Ok(energy_edge(p, e, f).max(0.0).sqrt())
}

pub fn saturations(p: &EnergyMatrices, f: &MultiFlow) -> Result<Vec<f64>> {
    p.check(f)?;
    Ok((0..p.m()).map(|e| energy_edge(p, e, f).max(0.0).sqrt()).collect())
}

/// `‖f(e)‖₁ / u`
pub fn congestion_l1(f: &MultiFlow, e: usize, capacity: f64) -> f64 {
    f.edge(e).iter().map(|x| x.abs()).sum::<f64>() / capacity
}

pub fn congestions(f: &MultiFlow, capacities: &[f64]) -> Vec<f64> {
    capacities.iter().enumerate().map(|(e, &u)| congestion_l1(f, e, u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn energy_examples() {
        let p = EnergyMatrices::scaled_identity(2, &[1.0]).unwrap();
        let f = MultiFlow::from_vec(2, vec![1.0, 0.0]).unwrap();
        assert_eq!(energy(&p, &f).unwrap(), 1.0);
        assert_eq!(energy(&p, &MultiFlow::zeros(1, 2)).unwrap(), 0.0);
        assert!(energy(&p, &MultiFlow::zeros(2, 2)).is_err());
    }

    #[test]
    fn saturation_and_congestion_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = EnergyMatrices::scaled_identity(2, &[1.0]).unwrap();
        let f = MultiFlow::from_vec(2, vec![h, h]).unwrap();
        assert_relative_eq!(saturation(&p, 0, &f).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(congestion_l1(&f, 0, 1.0), 2f64.sqrt(), epsilon = 1e-15);

        let g = MultiFlow::from_vec(2, vec![h, -h]).unwrap();
        let mut avg = f.clone();
        avg.add_assign(&g);
        avg.scale(0.5);
        assert_relative_eq!(congestion_l1(&avg, 0, 1.0), h, epsilon = 1e-15);
        assert_eq!(congestion_l1(&MultiFlow::zeros(1, 2), 0, 1.0), 0.0);

        let p2 = EnergyMatrices::scaled_identity(2, &[2.0]).unwrap();
        let e1 = MultiFlow::from_vec(2, vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(saturation(&p2, 0, &e1).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn eig_of_simple_matrices() {
        let eig = sym_eig_k(&KMatrix::identity(3)).unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0, 1.0]);

        let eig = sym_eig_k(&KMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(eig.values, vec![1.0, 3.0]);
        assert_eq!(eig.vectors.get(1, 0).abs(), 1.0);
        assert_eq!(eig.vectors.get(0, 1).abs(), 1.0);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = KMatrix::from_row_major(2, vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(sym_eig_k(&a), Err(Error::NotSymmetric(_))));
        assert!(matrix_exp_sym(&a).is_err());
        let tiny = KMatrix::from_row_major(2, vec![1.0, 0.5, 0.5 + 1e-13, 1.0]).unwrap();
        assert!(sym_eig_k(&tiny).is_ok());
    }

    #[test]
    fn exp_examples() {
        assert_eq!(matrix_exp_sym(&KMatrix::zeros(3)).unwrap(), KMatrix::identity(3));
        let e = matrix_exp_sym(&KMatrix::diag(&[-1.0, -2.0])).unwrap();
        assert_relative_eq!(e.get(0, 0), (-1f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(e.get(1, 1), (-2f64).exp(), epsilon = 1e-15);
        assert_eq!(e.get(0, 1), 0.0);
    }

    #[test]
    fn condition_bound_examples() {
        let p = EnergyMatrices::scaled_identity(3, &[1.0, 2.0]).unwrap();
        assert_eq!(block_condition_bound(&p), 1.0);
        let q = EnergyMatrices::new(2, vec![KMatrix::diag(&[1.0, 4.0])]).unwrap();
        assert_eq!(block_condition_bound(&q), 4.0);
        let bad = EnergyMatrices::new(2, vec![KMatrix::diag(&[1.0, 0.0])]);
        assert!(matches!(bad, Err(Error::NotPositiveDefinite { edge: 0, .. })));
    }

    #[test]
    fn per_edge_scaling_keeps_condition() {
        let p = EnergyMatrices::new(2, vec![KMatrix::diag(&[1.0, 3.0]), KMatrix::diag(&[2.0, 2.0])]).unwrap();
        let q = p.scaled_per_edge(&[5.0, 0.5]);
        assert_eq!(q.lambda_min(0), 5.0);
        assert_eq!(q.lambda_max(1), 1.0);
        assert_eq!(block_condition_bound(&q), 3.0);
    }

    #[test]
    fn commodity_views() {
        let mut f = MultiFlow::from_vec(2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(f.m(), 3);
        assert_eq!(f.edge(1), &[3.0, 4.0]);
        assert_eq!(f.commodity(1), vec![2.0, 4.0, 6.0]);
        f.set_commodity(0, &[0.0, 0.0, 0.0]);
        assert_eq!(f.as_slice(), &[0.0, 2.0, 0.0, 4.0, 0.0, 6.0]);
    }
}
