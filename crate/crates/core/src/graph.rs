//! Graphs, multicommodity instances, the incidence operator and the
//! line-oriented instance format.
//!
//! Vertex ids are 0-based in memory and 1-based in files. Edge orientation is
//! the order given in the input; flows are signed along it.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, ParseError, ParseErrorKind, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub capacity: f64,
}

/// Connected undirected graph with positive capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        for (e, edge) in edges.iter().enumerate() {
            if edge.tail >= n || edge.head >= n {
                return Err(Error::InvalidGraph(format!("edge {e} has a vertex out of range")));
            }
            if edge.tail == edge.head {
                return Err(Error::InvalidGraph(format!("edge {e} is a self-loop")));
            }
            if !(edge.capacity > 0.0) || !edge.capacity.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "edge {e} has nonpositive capacity {}",
                    edge.capacity
                )));
            }
        }
        let g = Graph { n, edges };
        if !g.is_connected() {
            return Err(Error::InvalidGraph("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.capacity).collect()
    }

    pub fn total_capacity(&self) -> f64 {
        self.edges.iter().map(|e| e.capacity).sum()
    }

    /// Adjacency lists of `(neighbor, edge id)`, sorted by neighbor then edge.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (e, edge) in self.edges.iter().enumerate() {
            adj[edge.tail].push((edge.head, e));
            adj[edge.head].push((edge.tail, e));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        self.reachable_from(0, |_| true).iter().all(|&r| r)
    }

    /// Vertices reachable from `start` using only edges accepted by `keep`.
    pub(crate) fn reachable_from(&self, start: usize, keep: impl Fn(&Edge) -> bool) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.n];
        for edge in self.edges.iter().filter(|e| keep(e)) {
            adj[edge.tail].push(edge.head);
            adj[edge.head].push(edge.tail);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commodity {
    pub source: usize,
    pub sink: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub graph: Graph,
    pub commodities: Vec<Commodity>,
}

impl Instance {
    pub fn new(graph: Graph, commodities: Vec<Commodity>) -> Result<Self> {
        if commodities.is_empty() {
            return Err(Error::InvalidInstance("no commodities".into()));
        }
        for (i, c) in commodities.iter().enumerate() {
            if c.source >= graph.n() || c.sink >= graph.n() {
                return Err(Error::InvalidInstance(format!("commodity {i} endpoint out of range")));
            }
            if c.source == c.sink {
                return Err(Error::InvalidInstance(format!("commodity {i} has source == sink")));
            }
            if !(c.value > 0.0) || !c.value.is_finite() {
                return Err(Error::InvalidInstance(format!("commodity {i} has nonpositive value")));
            }
        }
        Ok(Instance { graph, commodities })
    }

    pub fn k(&self) -> usize {
        self.commodities.len()
    }

    /// Demands with the sink-positive convention: `d_i(t_i) = +v`, `d_i(s_i) = -v`.
    pub fn demands(&self) -> DemandVector {
        let k = self.k();
        let mut values = vec![0.0; self.graph.n() * k];
        for (i, c) in self.commodities.iter().enumerate() {
            values[c.sink * k + i] += c.value;
            values[c.source * k + i] -= c.value;
        }
        DemandVector { k, values }
    }

    pub fn scaled(&self, factor: f64) -> Instance {
        let commodities = self
            .commodities
            .iter()
            .map(|c| Commodity { value: c.value * factor, ..*c })
            .collect();
        Instance { graph: self.graph.clone(), commodities }
    }

    /// Serializes in the instance file format (1-based ids).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "p mcf {} {} {}", self.graph.n(), self.graph.m(), self.k());
        for e in self.graph.edges() {
            let _ = writeln!(out, "a {} {} {}", e.tail + 1, e.head + 1, e.capacity);
        }
        for (i, c) in self.commodities.iter().enumerate() {
            let _ = writeln!(out, "d {} {} {} {}", i + 1, c.source + 1, c.sink + 1, c.value);
        }
        out
    }
}

/// Vertex-major demand vector: entry `v * k + i` is commodity `i` at vertex `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandVector {
    k: usize,
    values: Vec<f64>,
}

impl DemandVector {
    /// Checks that every commodity's demands sum to zero.
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::LengthMismatch { expected: k, got: values.len() });
        }
        let d = DemandVector { k, values };
        let scale = d.norm_inf().max(1.0);
        for i in 0..k {
            let sum: f64 = d.commodity(i).iter().sum();
            if sum.abs() > 1e-9 * scale {
                return Err(Error::Unbalanced(sum));
            }
        }
        Ok(d)
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        DemandVector { k, values: vec![0.0; n * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn commodity(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.k).copied().collect()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DemandVector { k: self.k, values: self.values.iter().map(|x| x * factor).collect() }
    }
}

fn parse_err(line: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, kind }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, raw: &str) -> std::result::Result<T, ParseError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(line, ParseErrorKind::Malformed(raw.trim().to_string())))
}

/// Parses an instance file: `p mcf n m k`, then `a tail head cap` and
/// `d i source sink value` lines. `#` starts a comment.
pub fn parse_instance(text: &str) -> std::result::Result<Instance, ParseError> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut edges = Vec::new();
    let mut commodities: Vec<Option<Commodity>> = Vec::new();
    let mut seen_commodities = 0usize;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let tag = toks.next().unwrap_or("");
        match tag {
            "p" => {
                if header.is_some() {
                    return Err(parse_err(line, ParseErrorKind::DuplicateHeader));
                }
                if toks.next() != Some("mcf") {
                    return Err(parse_err(line, ParseErrorKind::Malformed(content.into())));
                }
                let n: usize = field(toks.next(), line, content)?;
                let m: usize = field(toks.next(), line, content)?;
                let k: usize = field(toks.next(), line, content)?;
                if toks.next().is_some() || n == 0 || k == 0 {
                    return Err(parse_err(line, ParseErrorKind::Malformed(content.into())));
                }
                header = Some((n, m, k));
                commodities = vec![None; k];
            }
            "a" | "d" => {
                let (n, _, k) = header.ok_or_else(|| parse_err(line, ParseErrorKind::MissingHeader))?;
                let vertex = |tok: Option<&str>| -> std::result::Result<usize, ParseError> {
                    let v: usize = field(tok, line, content)?;
                    if v == 0 || v > n {
                        return Err(parse_err(line, ParseErrorKind::VertexOutOfRange(v)));
                    }
                    Ok(v - 1)
                };
                if tag == "a" {
                    let tail = vertex(toks.next())?;
                    let head = vertex(toks.next())?;
                    let capacity: f64 = field(toks.next(), line, content)?;
                    if toks.next().is_some() {
                        return Err(parse_err(line, ParseErrorKind::Malformed(content.into())));
                    }
                    if tail == head {
                        return Err(parse_err(line, ParseErrorKind::SelfLoop(tail + 1)));
                    }
                    if !(capacity > 0.0) || !capacity.is_finite() {
                        return Err(parse_err(line, ParseErrorKind::NonpositiveCapacity(capacity)));
                    }
                    edges.push(Edge { tail, head, capacity });
                } else {
                    let i: usize = field(toks.next(), line, content)?;
                    if i == 0 || i > k {
                        return Err(parse_err(line, ParseErrorKind::CommodityIndex(i)));
                    }
                    let source = vertex(toks.next())?;
                    let sink = vertex(toks.next())?;
                    let value: f64 = field(toks.next(), line, content)?;
                    if toks.next().is_some() {
                        return Err(parse_err(line, ParseErrorKind::Malformed(content.into())));
                    }
                    if source == sink {
                        return Err(parse_err(line, ParseErrorKind::SourceIsSink));
                    }
                    if !(value > 0.0) || !value.is_finite() {
                        return Err(parse_err(line, ParseErrorKind::NonpositiveDemand(value)));
                    }
                    if commodities[i - 1].is_some() {
                        return Err(parse_err(line, ParseErrorKind::DuplicateCommodity(i)));
                    }
                    commodities[i - 1] = Some(Commodity { source, sink, value });
                    seen_commodities += 1;
                }
            }
            _ => return Err(parse_err(line, ParseErrorKind::Malformed(content.into()))),
        }
    }

    let (n, m, k) = header.ok_or_else(|| parse_err(last_line.max(1), ParseErrorKind::MissingHeader))?;
    if edges.len() != m {
        return Err(parse_err(
            last_line,
            ParseErrorKind::EdgeCountMismatch { expected: m, found: edges.len() },
        ));
    }
    if seen_commodities != k {
        return Err(parse_err(
            last_line,
            ParseErrorKind::CommodityCountMismatch { expected: k, found: seen_commodities },
        ));
    }
    let graph = Graph { n, edges };
    if !graph.is_connected() {
        return Err(parse_err(last_line, ParseErrorKind::Disconnected));
    }
    Ok(Instance { graph, commodities: commodities.into_iter().flatten().collect() })
}

/// `(Γ ⊗ I_k) φ`: per edge and commodity, `φ_i(head) - φ_i(tail)`.
pub fn incidence_apply(g: &Graph, k: usize, phi: &[f64]) -> Result<Vec<f64>> {
    if phi.len() != g.n() * k {
        return Err(Error::LengthMismatch { expected: g.n() * k, got: phi.len() });
    }
    let mut out = vec![0.0; g.m() * k];
    for (e, edge) in g.edges().iter().enumerate() {
        for i in 0..k {
            out[e * k + i] = phi[edge.head * k + i] - phi[edge.tail * k + i];
        }
    }
    Ok(out)
}

/// `(Γ ⊗ I_k)^T f`: net inflow per vertex and commodity.
pub fn incidence_transpose_apply(g: &Graph, k: usize, flow: &[f64]) -> Result<Vec<f64>> {
    if flow.len() != g.m() * k {
        return Err(Error::LengthMismatch { expected: g.m() * k, got: flow.len() });
    }
    let mut out = vec![0.0; g.n() * k];
    for (e, edge) in g.edges().iter().enumerate() {
        for i in 0..k {
            let x = flow[e * k + i];
            out[edge.head * k + i] += x;
            out[edge.tail * k + i] -= x;
        }
    }
    Ok(out)
}

/// Capacity of the best `s`–`t` bottleneck path, by bisection over the
/// distinct capacities with a reachability scan per probe.
pub fn max_bottleneck(g: &Graph, s: usize, t: usize) -> Option<f64> {
    let mut caps = g.capacities();
    caps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    caps.dedup();
    let reaches = |threshold: f64| g.reachable_from(s, |e| e.capacity >= threshold)[t];
    if caps.is_empty() || !reaches(caps[0]) {
        return None;
    }
    let (mut lo, mut hi) = (0, caps.len() - 1);
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if reaches(caps[mid]) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Some(caps[lo])
}

/// Crude bracket `(lo, hi)` around the optimal concurrent-flow value.
///
/// `lo` routes every commodity on its bottleneck path at a `1/k` share of
/// that path's capacity; `hi` charges each commodity the whole edge capacity.
pub fn bottleneck_bounds(inst: &Instance) -> Result<(f64, f64)> {
    let k = inst.k() as f64;
    let total = inst.graph.total_capacity();
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    for (i, c) in inst.commodities.iter().enumerate() {
        let bcap = max_bottleneck(&inst.graph, c.source, c.sink)
            .ok_or_else(|| Error::InvalidInstance(format!("commodity {i} has no path")))?;
        lo = lo.min(bcap / (k * c.value));
        hi = hi.min(total / c.value);
    }
    Ok((lo, hi))
}
