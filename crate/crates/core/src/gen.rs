//! Seeded random instances.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Commodity, Edge, Graph, Instance};
use crate::kvec::{EnergyMatrices, KMatrix, MultiFlow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Profile {
    /// Integer capacities in `[1, 10]`, values in `[1, 3]`.
    Random,
    /// Capacities set from a planted flow so that it has congestion `1 - 2ε`
    /// on every edge it uses.
    Planted { epsilon: f64 },
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus `m - n + 1` extra edges, random orientations.
pub fn random_graph(rng: &mut impl Rng, n: usize, m: usize) -> Result<Graph> {
    if n < 2 || m + 1 < n {
        return Err(Error::InvalidParameter(format!("need n >= 2 and m >= n - 1 (n = {n}, m = {m})")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut pairs = Vec::with_capacity(m);
    for i in 1..n {
        let j = rng.gen_range(0..i);
        pairs.push((order[i], order[j]));
    }
    while pairs.len() < m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            pairs.push((a, b));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| {
            let (tail, head) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            Edge { tail, head, capacity: rng.gen_range(1..=10) as f64 }
        })
        .collect();
    Graph::new(n, edges)
}

fn random_pairs(rng: &mut impl Rng, n: usize, k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .map(|_| {
            let s = rng.gen_range(0..n);
            let mut t = rng.gen_range(0..n - 1);
            if t >= s {
                t += 1;
            }
            (s, t)
        })
        .collect()
}

/// Shortest path as `(edge, forward?)` pairs.
fn bfs_path(g: &Graph, s: usize, t: usize) -> Vec<(usize, bool)> {
    let adj = g.adjacency();
    let mut prev = vec![None; g.n()];
    let mut seen = vec![false; g.n()];
    let mut queue = VecDeque::from([s]);
    seen[s] = true;
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some((v, e));
                queue.push_back(w);
            }
        }
    }
    let mut path = Vec::new();
    let mut v = t;
    while let Some((u, e)) = prev[v] {
        path.push((e, g.edge(e).tail == u));
        v = u;
    }
    path.reverse();
    path
}

/// Flow routing each commodity's value along a shortest path.
pub fn path_flow(inst: &Instance) -> MultiFlow {
    let k = inst.k();
    let mut f = MultiFlow::zeros(inst.graph.m(), k);
    for (i, c) in inst.commodities.iter().enumerate() {
        for (e, forward) in bfs_path(&inst.graph, c.source, c.sink) {
            f.edge_mut(e)[i] += if forward { c.value } else { -c.value };
        }
    }
    f
}

pub fn gen_instance(seed: u64, n: usize, m: usize, k: usize, profile: Profile) -> Result<Instance> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let mut rng = rng(seed);
    let g = random_graph(&mut rng, n, m)?;
    let commodities: Vec<Commodity> = random_pairs(&mut rng, n, k)
        .into_iter()
        .map(|(source, sink)| Commodity { source, sink, value: rng.gen_range(1..=3) as f64 })
        .collect();
    let inst = Instance::new(g, commodities)?;
    match profile {
        Profile::Random => Ok(inst),
        Profile::Planted { epsilon } => {
            if !(epsilon > 0.0 && epsilon < 0.5) {
                return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
            }
            let f = path_flow(&inst);
            let edges = inst
                .graph
                .edges()
                .iter()
                .enumerate()
                .map(|(e, edge)| {
                    let load: f64 = f.edge(e).iter().map(|x| x.abs()).sum();
                    let capacity = if load > 0.0 { load / (1.0 - 2.0 * epsilon) } else { edge.capacity };
                    Edge { capacity, ..*edge }
                })
                .collect();
            Instance::new(Graph::new(n, edges)?, inst.commodities)
        }
    }
}

/// Symmetric block with eigenvalues in `[1, κ]`, both ends attained when `k ≥ 2`.
pub fn random_pd_block(rng: &mut impl Rng, k: usize, kappa: f64) -> KMatrix {
    // Gram-Schmidt on a random matrix gives the eigenvectors
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    while q.len() < k {
        let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for w in &q {
            let d: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(w).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut out = KMatrix::zeros(k);
    for (l, v) in q.iter().enumerate() {
        let lambda = match l {
            0 => 1.0,
            1 => kappa,
            _ => rng.gen_range(1.0..=kappa),
        };
        out.add_scaled(&KMatrix::outer(v), lambda);
    }
    out
}

pub fn random_energy(rng: &mut impl Rng, m: usize, k: usize, kappa: f64) -> Result<EnergyMatrices> {
    let blocks = (0..m)
        .map(|_| {
            let scale = rng.gen_range(0.5..2.0);
            random_pd_block(rng, k, kappa).scaled(scale)
        })
        .collect();
    EnergyMatrices::new(k, blocks)
}

/// Instance, energy matrices and a planted flow meeting the demands with
/// saturation exactly `1 - 2ε` on every edge it uses.
pub fn planted_energy_instance(
    seed: u64,
    n: usize,
    m: usize,
    k: usize,
    kappa: f64,
    epsilon: f64,
) -> Result<(Instance, EnergyMatrices, MultiFlow)> {
    let inst = gen_instance(seed, n, m, k, Profile::Random)?;
    let mut rng = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let base = random_energy(&mut rng, m, k, kappa)?;
    let f = path_flow(&inst);
    let target = (1.0 - 2.0 * epsilon).powi(2);
    let factors: Vec<f64> = (0..m)
        .map(|e| {
            let q = base.block(e).quad_form(f.edge(e));
            if q > 0.0 {
                target / q
            } else {
                1.0
            }
        })
        .collect();
    Ok((inst, base.scaled_per_edge(&factors), f))
}
