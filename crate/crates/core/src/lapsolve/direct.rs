//! Dense grounded Cholesky solve for `Γᵀ P⁻¹ Γ x = b` on small graphs.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kvec::EnergyMatrices;

use super::project_out_constants;

pub(super) fn solve(g: &Graph, p: &EnergyMatrices, b: &[f64]) -> Result<Vec<f64>> {
    let k = p.k();
    let n = g.n();
    // vertex 0 is grounded in every commodity; row index of (v, i) is (v-1)*k + i
    let dim = (n - 1) * k;
    let idx = |v: usize, i: usize| if v == 0 { None } else { Some((v - 1) * k + i) };
    let mut a = vec![0.0; dim * dim];
    let inverse = p.inverse_blocks();
    for (edge, inv) in g.edges().iter().zip(&inverse) {
        for i in 0..k {
            for j in 0..k {
                let w = inv.get(i, j);
                for (u, su) in [(edge.head, 1.0), (edge.tail, -1.0)] {
                    for (v, sv) in [(edge.head, 1.0), (edge.tail, -1.0)] {
                        if let (Some(r), Some(c)) = (idx(u, i), idx(v, j)) {
                            a[r * dim + c] += su * sv * w;
                        }
                    }
                }
            }
        }
    }
    let mut rhs: Vec<f64> = (k..n * k).map(|r| b[r]).collect();
    cholesky_in_place(&mut a, dim)?;
    // forward then backward substitution with the lower factor
    for r in 0..dim {
        let mut s = rhs[r];
        for c in 0..r {
            s -= a[r * dim + c] * rhs[c];
        }
        rhs[r] = s / a[r * dim + r];
    }
    for r in (0..dim).rev() {
        let mut s = rhs[r];
        for c in (r + 1)..dim {
            s -= a[c * dim + r] * rhs[c];
        }
        rhs[r] = s / a[r * dim + r];
    }
    let mut x = vec![0.0; n * k];
    x[k..].copy_from_slice(&rhs);
    project_out_constants(&mut x, k);
    Ok(x)
}

fn cholesky_in_place(a: &mut [f64], dim: usize) -> Result<()> {
    for j in 0..dim {
        let mut d = a[j * dim + j];
        for l in 0..j {
            d -= a[j * dim + l].powi(2);
        }
        if !(d > 0.0) {
            return Err(Error::NoConvergence { solver: "dense cholesky", iterations: j, residual: d });
        }
        let d = d.sqrt();
        a[j * dim + j] = d;
        for r in (j + 1)..dim {
            let mut s = a[r * dim + j];
            for l in 0..j {
                s -= a[r * dim + l] * a[j * dim + l];
            }
            a[r * dim + j] = s / d;
        }
    }
    Ok(())
}
