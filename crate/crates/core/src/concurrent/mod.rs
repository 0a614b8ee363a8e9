//! Maximum concurrent flow: an outer loop that keeps producing per-edge energy
//! matrices, routes the demands through the capacitated solver under each,
//! and averages the results. Two outer variants exist, matrix multiplicative
//! weights ([`mmw`]) and sign-vector weights ([`signs`]); [`binary_search_lambda`]
//! wraps either in a search over the demand scale.

pub mod convolve;
pub mod mmw;
pub mod signs;

use serde::{Deserialize, Serialize};

use crate::capacitated::{CapacitatedOptions, CapacitatedOutcome, SolveStats};
use crate::error::{Error, Result};
use crate::graph::{bottleneck_bounds, DemandVector, Graph, Instance};
use crate::kvec::{block_condition_bound, congestions, EnergyMatrices, MultiFlow};
use crate::lapsolve::SolverOptions;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterVariant {
    #[default]
    Mmw,
    Signs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcurrentOptions {
    pub epsilon: f64,
    pub variant: OuterVariant,
    pub outer_rho: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub inner_rho: Option<f64>,
    pub inner_iterations: Option<usize>,
    /// Largest count table the sign variant may build.
    pub table_budget: usize,
    pub solver: SolverOptions,
}

impl ConcurrentOptions {
    pub fn new(epsilon: f64, variant: OuterVariant) -> Self {
        ConcurrentOptions {
            epsilon,
            variant,
            outer_rho: None,
            outer_iterations: None,
            inner_rho: None,
            inner_iterations: None,
            table_budget: convolve::DEFAULT_BUDGET,
            solver: SolverOptions::default(),
        }
    }

    pub fn inner(&self) -> CapacitatedOptions {
        CapacitatedOptions {
            epsilon: self.epsilon,
            rho: self.inner_rho,
            iterations: self.inner_iterations,
            solver: self.solver,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidParameter(format!("epsilon = {}", self.epsilon)));
        }
        Ok(())
    }
}

/// One outer round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterTrace {
    pub t: usize,
    /// `max_e ‖f^{(t)}(e)‖₁ / u(e)`
    pub max_congestion: f64,
    pub width_breach: bool,
    pub block_condition: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcurrentFlow {
    pub flow: MultiFlow,
    /// Averaged flow values, when the inner oracle chooses them.
    pub flow_values: Option<Vec<f64>>,
    pub congestion: Vec<f64>,
    pub max_congestion: f64,
    /// Every edge within `(1 + 3ε) u(e)`.
    pub meets_bound: bool,
    pub iterations: usize,
    /// Largest `λ_max / λ_min` over every block handed to the inner solver.
    pub max_block_condition: f64,
    pub width_breaches: usize,
    pub trace: Vec<OuterTrace>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Serialize)]
pub enum ConcurrentOutcome {
    Routed(ConcurrentFlow),
    /// The inner solver certified infeasibility in round `iteration`.
    Fail { iteration: usize, max_block_condition: f64, stats: SolveStats },
}

impl ConcurrentOutcome {
    pub fn routed(&self) -> Option<&ConcurrentFlow> {
        match self {
            ConcurrentOutcome::Routed(f) => Some(f),
            ConcurrentOutcome::Fail { .. } => None,
        }
    }

    pub fn max_block_condition(&self) -> f64 {
        match self {
            ConcurrentOutcome::Routed(f) => f.max_block_condition,
            ConcurrentOutcome::Fail { max_block_condition, .. } => *max_block_condition,
        }
    }

    pub fn stats(&self) -> &SolveStats {
        match self {
            ConcurrentOutcome::Routed(f) => &f.stats,
            ConcurrentOutcome::Fail { stats, .. } => stats,
        }
    }
}

/// Produces the energy matrices of each round and learns from its flow.
pub(crate) trait EnergySource {
    fn energy(&mut self, t: usize) -> Result<EnergyMatrices>;
    /// Absorbs `f^{(t)}`; returns whether the width hypothesis was breached.
    fn observe(&mut self, f: &MultiFlow) -> Result<bool>;
}

/// Runs `iterations` rounds; `inner` routes the demands under each round's matrices.
pub(crate) fn run_outer<S, I>(
    g: &Graph,
    k: usize,
    epsilon: f64,
    iterations: usize,
    source: &mut S,
    mut inner: I,
) -> Result<ConcurrentOutcome>
where
    S: EnergySource,
    I: FnMut(&EnergyMatrices) -> Result<CapacitatedOutcome>,
{
    let caps = g.capacities();
    let mut total = MultiFlow::zeros(g.m(), k);
    let mut total_values: Option<Vec<f64>> = None;
    let mut stats = SolveStats::default();
    let mut trace = Vec::with_capacity(iterations);
    let mut max_cond: f64 = 1.0;
    let mut breaches = 0;
    for t in 1..=iterations {
        let p = source.energy(t)?;
        let cond = block_condition_bound(&p);
        max_cond = max_cond.max(cond);
        let out = inner(&p)?;
        stats.merge(out.stats());
        let f = match out {
            CapacitatedOutcome::Flow(f) => f,
            CapacitatedOutcome::Fail(_) => {
                return Ok(ConcurrentOutcome::Fail { iteration: t, max_block_condition: max_cond, stats });
            }
        };
        let breach = source.observe(&f.flow)?;
        breaches += breach as usize;
        let max_congestion = congestions(&f.flow, &caps).into_iter().fold(0.0, f64::max);
        trace.push(OuterTrace { t, max_congestion, width_breach: breach, block_condition: cond });
        total.add_assign(&f.flow);
        if let Some(values) = &f.flow_values {
            let acc = total_values.get_or_insert_with(|| vec![0.0; values.len()]);
            acc.iter_mut().zip(values).for_each(|(a, v)| *a += v);
        }
    }
    let scale = 1.0 / iterations as f64;
    total.scale(scale);
    if let Some(v) = total_values.as_mut() {
        v.iter_mut().for_each(|x| *x *= scale);
    }
    let congestion = congestions(&total, &caps);
    let max_congestion = congestion.iter().copied().fold(0.0, f64::max);
    Ok(ConcurrentOutcome::Routed(ConcurrentFlow {
        flow: total,
        flow_values: total_values,
        meets_bound: max_congestion <= 1.0 + 3.0 * epsilon,
        congestion,
        max_congestion,
        iterations,
        max_block_condition: max_cond,
        width_breaches: breaches,
        trace,
        stats,
    }))
}

/// Routes the instance demands with either outer variant.
pub fn max_concurrent_flow(inst: &Instance, opts: &ConcurrentOptions) -> Result<ConcurrentOutcome> {
    route_demands(&inst.graph, &inst.demands(), opts)
}

pub(crate) fn route_demands(g: &Graph, d: &DemandVector, opts: &ConcurrentOptions) -> Result<ConcurrentOutcome> {
    opts.validate()?;
    match opts.variant {
        OuterVariant::Mmw => mmw::max_concurrent_flow_mmw(g, d, opts),
        OuterVariant::Signs => signs::max_concurrent_flow_signs(g, d, opts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub lambda: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    /// Largest probed scale whose flow met the congestion bound.
    pub lambda: f64,
    /// Flow routing `lambda · d`.
    pub flow: ConcurrentFlow,
    pub bracket: (f64, f64),
    pub probes: Vec<Probe>,
    pub max_block_condition: f64,
    pub stats: SolveStats,
}

/// Geometric bisection on the demand scale until the bracket is within `1 + ε`.
pub fn binary_search_lambda(inst: &Instance, opts: &ConcurrentOptions) -> Result<SearchResult> {
    search(inst, opts, |scale| route_demands(&inst.graph, &inst.demands().scaled(scale), opts))
}

/// Search driver shared with the weighted solver; `probe(λ)` routes `λ · d`.
pub(crate) fn search<F>(inst: &Instance, opts: &ConcurrentOptions, probe: F) -> Result<SearchResult>
where
    F: FnMut(f64) -> Result<ConcurrentOutcome>,
{
    let (lo, hi) = bottleneck_bounds(inst)?;
    search_bracket(lo, hi, opts.epsilon, probe)
}

pub(crate) fn search_bracket<F>(mut lo: f64, mut hi: f64, epsilon: f64, mut probe: F) -> Result<SearchResult>
where
    F: FnMut(f64) -> Result<ConcurrentOutcome>,
{
    let mut probes = Vec::new();
    let mut stats = SolveStats::default();
    let mut max_cond: f64 = 1.0;
    let mut run = |lambda: f64, probes: &mut Vec<Probe>| -> Result<Option<ConcurrentFlow>> {
        let out = probe(lambda)?;
        stats.merge(out.stats());
        max_cond = max_cond.max(out.max_block_condition());
        let ok = match out {
            ConcurrentOutcome::Routed(f) if f.meets_bound => Some(f),
            _ => None,
        };
        probes.push(Probe { lambda, success: ok.is_some() });
        Ok(ok)
    };

    let mut best = None;
    for _ in 0..6 {
        if let Some(f) = run(lo, &mut probes)? {
            best = Some(f);
            break;
        }
        hi = lo;
        lo /= 2.0;
    }
    let mut best = best.ok_or(Error::AllProbesFailed(hi))?;
    let bracket = (lo, hi);
    while hi / lo > 1.0 + epsilon {
        let mid = (lo * hi).sqrt();
        match run(mid, &mut probes)? {
            Some(f) => {
                lo = mid;
                best = f;
            }
            None => hi = mid,
        }
    }
    Ok(SearchResult { lambda: lo, flow: best, bracket, probes, max_block_condition: max_cond, stats })
}
