//! Minimum-energy multicommodity flows for fixed energy matrices.
//!
//! Potentials come from an approximate solve in `L = Γᵀ P⁻¹ Γ`; the ohmic flow
//! `P⁻¹ Γ φ̂` is then made exactly conserving, one commodity at a time, by
//! rerouting the residual excess along a BFS spanning tree.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{incidence_apply, incidence_transpose_apply, DemandVector, Graph};
use crate::kvec::{energy, EnergyMatrices, MultiFlow};
use crate::lapsolve::{solve_coupled_system, CoupledOperator, SolveReport, SolverOptions};

#[derive(Debug, Clone, Serialize)]
pub struct CoupledResult {
    /// Potentials normalized to unit energy, `φ = φ̂ / λ̂`.
    pub potentials: Vec<f64>,
    /// Raw solve output `φ̂ ≈ L⁺ d`.
    pub unscaled_potentials: Vec<f64>,
    /// `λ̂ = sqrt(φ̂ᵀ L φ̂)`
    pub scale: f64,
    pub flow: MultiFlow,
    pub energy: f64,
    pub report: SolveReport,
}

/// BFS spanning tree rooted at vertex 0, neighbors visited in increasing id.
#[derive(Debug, Clone)]
pub struct KirchhoffTree {
    /// BFS order, root first.
    order: Vec<usize>,
    parent: Vec<usize>,
    /// Edge to the parent and whether it points parent → child.
    parent_edge: Vec<(usize, bool)>,
}

impl KirchhoffTree {
    pub fn new(g: &Graph) -> Self {
        let n = g.n();
        let adj = g.adjacency();
        let mut order = Vec::with_capacity(n);
        let mut parent = vec![usize::MAX; n];
        let mut parent_edge = vec![(usize::MAX, true); n];
        let mut seen = vec![false; n];
        seen[0] = true;
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, e) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = u;
                    parent_edge[v] = (e, g.edge(e).tail == u);
                    order.push(v);
                }
            }
        }
        KirchhoffTree { order, parent, parent_edge }
    }

    /// Adds tree flow so that `Γᵀ f = demand` holds exactly for one commodity.
    pub fn repair(&self, g: &Graph, demand: &[f64], flow: &mut [f64]) -> Result<()> {
        let excess = incidence_transpose_apply(g, 1, flow)?;
        if demand.len() != g.n() {
            return Err(Error::LengthMismatch { expected: g.n(), got: demand.len() });
        }
        // missing inflow per vertex, accumulated leaf to root
        let mut need: Vec<f64> = demand.iter().zip(&excess).map(|(d, x)| d - x).collect();
        for &v in self.order.iter().skip(1).rev() {
            let (e, downward) = self.parent_edge[v];
            if downward {
                flow[e] += need[v];
            } else {
                flow[e] -= need[v];
            }
            let p = self.parent[v];
            need[p] += need[v];
        }
        Ok(())
    }
}

/// Returns `f̃` with `Γᵀ f̃ = d_i` and `‖f̃ - f_i‖_∞ ≤ m · ‖Γᵀ f_i - d_i‖_∞`.
pub fn make_kirchhoff(g: &Graph, demand: &[f64], flow: &[f64]) -> Result<Vec<f64>> {
    if flow.len() != g.m() {
        return Err(Error::LengthMismatch { expected: g.m(), got: flow.len() });
    }
    let mut out = flow.to_vec();
    KirchhoffTree::new(g).repair(g, demand, &mut out)?;
    Ok(out)
}

/// `P⁻¹ Γ φ`
pub fn ohmic_flow(g: &Graph, op: &CoupledOperator, phi: &[f64]) -> Result<MultiFlow> {
    let k = op.k();
    let grad = incidence_apply(g, k, phi)?;
    let mut flow = MultiFlow::zeros(g.m(), k);
    for e in 0..g.m() {
        let z = op.inverse_block(e).mul_vec(&grad[e * k..(e + 1) * k]);
        flow.edge_mut(e).copy_from_slice(&z);
    }
    Ok(flow)
}

/// Near-minimum-energy flow meeting `d` exactly, plus unit-energy potentials.
///
/// Energy is within `(1 + δ)` of optimal. The solve is scale invariant in `P`,
/// so no normalization `I ⪯ P(e)` is needed from the caller.
pub fn quadratically_coupled_flow(
    g: &Graph,
    p: &EnergyMatrices,
    d: &DemandVector,
    delta: f64,
    opts: &SolverOptions,
) -> Result<CoupledResult> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta}")));
    }
    if p.m() != g.m() {
        return Err(Error::LengthMismatch { expected: g.m(), got: p.m() });
    }
    let k = p.k();
    let (phi_hat, report) = solve_coupled_system(g, p, d, delta, opts)?;
    let op = CoupledOperator::new(g, p)?;
    let scale = op.quad_form(&phi_hat).max(0.0).sqrt();
    let potentials = if scale > 0.0 { phi_hat.iter().map(|x| x / scale).collect() } else { vec![0.0; phi_hat.len()] };

    let mut flow = ohmic_flow(g, &op, &phi_hat)?;
    let tree = KirchhoffTree::new(g);
    for i in 0..k {
        let mut fi = flow.commodity(i);
        tree.repair(g, &d.commodity(i), &mut fi)?;
        flow.set_commodity(i, &fi);
    }
    let energy = energy(p, &flow)?;
    Ok(CoupledResult { potentials, unscaled_potentials: phi_hat, scale, flow, energy, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn path(n: usize) -> Graph {
        let edges = (0..n - 1).map(|v| Edge { tail: v, head: v + 1, capacity: 1.0 }).collect();
        Graph::new(n, edges).unwrap()
    }

    #[test]
    fn single_edge_unit_route() {
        let g = path(2);
        let p = EnergyMatrices::scaled_identity(1, &[1.0]).unwrap();
        let d = DemandVector::new(1, vec![-1.0, 1.0]).unwrap();
        let r = quadratically_coupled_flow(&g, &p, &d, 1e-3, &SolverOptions::default()).unwrap();
        assert!((r.flow.as_slice()[0] - 1.0).abs() < 1e-12);
        assert!((r.energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn series_resistors() {
        let g = path(3);
        let p = EnergyMatrices::scaled_identity(1, &[1.0, 1.0]).unwrap();
        let d = DemandVector::new(1, vec![-1.0, 0.0, 1.0]).unwrap();
        let r = quadratically_coupled_flow(&g, &p, &d, 1e-3, &SolverOptions::default()).unwrap();
        assert!((r.energy - 2.0).abs() < 1e-9);
        let dphi: f64 = d.as_slice().iter().zip(&r.potentials).map(|(a, b)| a * b).sum();
        assert!((dphi - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn kirchhoff_keeps_conserving_flow() {
        let g = path(3);
        let f = make_kirchhoff(&g, &[-2.0, 0.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!(f, vec![2.0, 2.0]);
    }

    #[test]
    fn kirchhoff_routes_leaf_to_root_on_a_tree() {
        // star rooted at 0 with a pendant path 0-1-2 and a reversed edge 3->0
        let g = Graph::new(
            4,
            vec![
                Edge { tail: 0, head: 1, capacity: 1.0 },
                Edge { tail: 1, head: 2, capacity: 1.0 },
                Edge { tail: 3, head: 0, capacity: 1.0 },
            ],
        )
        .unwrap();
        // one unit from leaf 2 to the root
        let f = make_kirchhoff(&g, &[1.0, 0.0, -1.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(f, vec![-1.0, -1.0, 0.0]);
        // one unit from leaf 3 to the root follows the edge orientation
        let f = make_kirchhoff(&g, &[1.0, 0.0, 0.0, -1.0], &[0.0; 3]).unwrap();
        assert_eq!(f, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_demand_gives_zero_flow() {
        let g = path(3);
        let p = EnergyMatrices::scaled_identity(2, &[1.0, 3.0]).unwrap();
        let d = DemandVector::zeros(3, 2);
        let r = quadratically_coupled_flow(&g, &p, &d, 1e-3, &SolverOptions::default()).unwrap();
        assert_eq!(r.energy, 0.0);
        assert_eq!(r.scale, 0.0);
    }
}
