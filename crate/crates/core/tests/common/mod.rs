//! Helpers shared by the integration suites.
#![allow(dead_code)]

use mcflow::gen::{random_energy, random_graph, rng};
use mcflow::graph::{DemandVector, Edge, Graph, Instance};
use mcflow::kvec::{EnergyMatrices, MultiFlow};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn path(n: usize) -> Graph {
    let edges = (0..n - 1).map(|v| Edge { tail: v, head: v + 1, capacity: 1.0 }).collect();
    Graph::new(n, edges).unwrap()
}

pub fn triangle() -> Graph {
    Graph::new(
        3,
        vec![
            Edge { tail: 0, head: 1, capacity: 1.0 },
            Edge { tail: 1, head: 2, capacity: 1.0 },
            Edge { tail: 0, head: 2, capacity: 1.0 },
        ],
    )
    .unwrap()
}

pub fn k4() -> Graph {
    let mut edges = Vec::new();
    for a in 0..4 {
        for b in a + 1..4 {
            edges.push(Edge { tail: a, head: b, capacity: 1.0 });
        }
    }
    Graph::new(4, edges).unwrap()
}

/// Dense `Γ ⊗ I_k`, rows edge-major, columns vertex-major.
pub fn dense_incidence(g: &Graph, k: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(g.m() * k, g.n() * k);
    for (e, edge) in g.edges().iter().enumerate() {
        for i in 0..k {
            a[(e * k + i, edge.head * k + i)] += 1.0;
            a[(e * k + i, edge.tail * k + i)] -= 1.0;
        }
    }
    a
}

/// Random balanced demand vector.
pub fn random_demands(r: &mut ChaCha8Rng, n: usize, k: usize) -> DemandVector {
    let mut v = vec![0.0; n * k];
    for i in 0..k {
        let mut sum = 0.0;
        for x in 0..n - 1 {
            let d = r.gen_range(-2.0..2.0);
            v[x * k + i] = d;
            sum += d;
        }
        v[(n - 1) * k + i] = -sum;
    }
    DemandVector::new(k, v).unwrap()
}

pub fn random_vec(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Random connected graph with PD blocks of condition at most `kappa`.
pub struct Case {
    pub g: Graph,
    pub p: EnergyMatrices,
    pub d: DemandVector,
}

pub fn random_case(seed: u64, max_n: usize, max_m: usize, max_k: usize, kappa: f64) -> Case {
    let mut r = rng(seed);
    let n = r.gen_range(2..=max_n);
    let m = r.gen_range(n - 1..=max_m.max(n - 1));
    let k = r.gen_range(1..=max_k);
    let g = random_graph(&mut r, n, m).unwrap();
    let p = random_energy(&mut r, m, k, kappa).unwrap();
    let d = random_demands(&mut r, n, k);
    Case { g, p, d }
}

/// Net excess per vertex and commodity minus the demand, max norm.
pub fn conservation_residual(g: &Graph, f: &MultiFlow, d: &DemandVector) -> f64 {
    let net = mcflow::graph::incidence_transpose_apply(g, f.k(), f.as_slice()).unwrap();
    net.iter().zip(d.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// A random flow repaired to meet `d` exactly.
pub fn random_feasible_flow(r: &mut ChaCha8Rng, g: &Graph, d: &DemandVector) -> MultiFlow {
    let k = d.k();
    let mut f = MultiFlow::zeros(g.m(), k);
    for i in 0..k {
        let raw = random_vec(r, g.m()).into_iter().map(|x| 3.0 * x).collect::<Vec<_>>();
        let fixed = mcflow::coupled::make_kirchhoff(g, &d.commodity(i), &raw).unwrap();
        f.set_commodity(i, &fixed);
    }
    f
}

pub fn instance_text(text: &str) -> Instance {
    mcflow::graph::parse_instance(text).unwrap()
}

pub fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}
