//! Subcommand bodies. Each builds a JSON report (or CSV rows) and picks the
//! exit status.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use mcflow::capacitated::{quadratically_capacitated_flow, CapacitatedOptions, CapacitatedOutcome};
use mcflow::concurrent::{binary_search_lambda, max_concurrent_flow, ConcurrentOutcome};
use mcflow::coupled::quadratically_coupled_flow;
use mcflow::gen::{gen_instance, planted_energy_instance, random_energy, rng, Profile};
use mcflow::graph::{parse_instance, Instance};
use mcflow::kvec::{congestions, saturations, EnergyMatrices, MultiFlow};
use mcflow::refsolve::{dense_coupled_oracle, lp_concurrent_oracle};
use mcflow::weighted::max_weighted_flow;
use serde::Serialize;
use serde_json::{json, Value};

use crate::settings::{Command, Format, Matrices, Outer, ProfileArg, Settings};
use crate::{CliError, Status};

/// Version of the JSON report layout.
const SCHEMA: u32 = 1;

pub fn run(cmd: Command) -> Result<Status, CliError> {
    match cmd {
        Command::SolveConcurrent { file, lambda, common } => {
            let s = prepare(Settings::resolve(&common, None)?)?;
            solve_concurrent(&file, lambda, &s)
        }
        Command::SolveWeighted { file, weights, common } => {
            let s = prepare(Settings::resolve(&common, weights)?)?;
            solve_weighted(&file, &s)
        }
        Command::Coupled { file, matrices, delta, check, common } => {
            let s = prepare(Settings::resolve(&common, None)?)?;
            coupled(&file, &matrices, delta, check, &s)
        }
        Command::Capacitated { file, matrices, common } => {
            let s = prepare(Settings::resolve(&common, None)?)?;
            capacitated(&file, &matrices, &s)
        }
        Command::Gen { n, m, k, profile, common } => {
            let s = Settings::resolve(&common, None)?;
            let profile = match profile {
                ProfileArg::Random => Profile::Random,
                ProfileArg::Planted => Profile::Planted { epsilon: s.epsilon },
            };
            let inst = gen_instance(s.seed, n, m, k, profile)?;
            write_out(&s, inst.to_text().as_bytes())?;
            Ok(Status::Ok)
        }
        Command::Verify { file, common } => {
            let s = prepare(Settings::resolve(&common, None)?)?;
            verify(&file, &s)
        }
        Command::Bench { sizes, k, kappa, common } => {
            let s = prepare(Settings::resolve(&common, None)?)?;
            bench(&sizes, k, kappa, &s)
        }
    }
}

fn prepare(s: Settings) -> Result<Settings, CliError> {
    // a second build in the same process is harmless; the first pool stays
    let _ = rayon::ThreadPoolBuilder::new().num_threads(s.threads).build_global();
    Ok(s)
}

fn load(path: &Path) -> Result<Instance, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_instance(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_out(s: &Settings, bytes: &[u8]) -> Result<(), CliError> {
    let res = match &s.out {
        Some(p) => std::fs::write(p, bytes),
        None => std::io::stdout().lock().write_all(bytes),
    };
    res.map_err(|e| CliError::Usage(format!("cannot write report: {e}")))
}

fn per_edge(f: &MultiFlow, m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|e| f.edge(e).to_vec()).collect()
}

fn fmax(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Everything a command hands to [`emit`].
struct Report<'a> {
    command: &'static str,
    settings: &'a Settings,
    instance: Option<&'a Instance>,
    status: Status,
    result: Value,
    started: Instant,
}

/// JSON report, or `rows` as CSV.
fn emit<R: Serialize>(r: Report, rows: &[R]) -> Result<Status, CliError> {
    let bytes = match r.settings.output {
        Format::Json => {
            let doc = json!({
                "schema": SCHEMA,
                "command": r.command,
                "status": if r.status == Status::Ok { "ok" } else { "fail" },
                "instance": r.instance.map(|i| json!({"n": i.graph.n(), "m": i.graph.m(), "k": i.k()})),
                "settings": r.settings,
                "result": r.result,
                "wall_time_s": r.started.elapsed().as_secs_f64(),
            });
            let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Solver(e.to_string()))?;
            text.push('\n');
            text.into_bytes()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row).map_err(|e| CliError::Solver(e.to_string()))?;
            }
            w.into_inner().map_err(|e| CliError::Solver(e.to_string()))?
        }
    };
    write_out(r.settings, &bytes)?;
    Ok(r.status)
}

fn solve_concurrent(file: &Path, lambda: Option<f64>, s: &Settings) -> Result<Status, CliError> {
    let started = Instant::now();
    let inst = load(file)?;
    let opts = s.concurrent(s.outer);
    let m = inst.graph.m();
    let report = |status, result| Report { command: "solve-concurrent", settings: s, instance: Some(&inst), status, result, started };

    if let Some(l) = lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(CliError::Usage(format!("lambda must be positive, got {l}")));
        }
        return match max_concurrent_flow(&inst.scaled(l), &opts)? {
            ConcurrentOutcome::Routed(f) => {
                let result = json!({
                    "lambda": l,
                    "outcome": "routed",
                    "meets_bound": f.meets_bound,
                    "max_congestion": f.max_congestion,
                    "congestion": f.congestion,
                    "iterations": f.iterations,
                    "max_block_condition": f.max_block_condition,
                    "width_breaches": f.width_breaches,
                    "stats": f.stats,
                    "flow": per_edge(&f.flow, m),
                });
                emit(report(Status::Ok, result), &f.trace)
            }
            ConcurrentOutcome::Fail { iteration, max_block_condition, stats } => {
                let result = json!({
                    "lambda": l,
                    "outcome": "fail",
                    "fail_iteration": iteration,
                    "max_block_condition": max_block_condition,
                    "stats": stats,
                });
                emit::<()>(report(Status::Fail, result), &[])
            }
        };
    }

    match binary_search_lambda(&inst, &opts) {
        Ok(r) => {
            let f = &r.flow;
            let result = json!({
                "lambda": r.lambda,
                "bracket": r.bracket,
                "probes": r.probes,
                "max_congestion": f.max_congestion,
                "congestion": f.congestion,
                "iterations": f.iterations,
                "max_block_condition": r.max_block_condition,
                "width_breaches": f.width_breaches,
                "stats": r.stats,
                "flow": per_edge(&f.flow, m),
            });
            emit(report(Status::Ok, result), &f.trace)
        }
        Err(mcflow::Error::AllProbesFailed(last)) => {
            let result = json!({ "lambda": null, "last_probe": last });
            emit::<()>(report(Status::Fail, result), &[])
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct CommodityRow {
    commodity: usize,
    weight: f64,
    amount: f64,
}

fn solve_weighted(file: &Path, s: &Settings) -> Result<Status, CliError> {
    let started = Instant::now();
    let inst = load(file)?;
    let weights = s.weights.clone().ok_or_else(|| CliError::Usage("--weights is required".into()))?;
    if s.outer != Outer::Mmw {
        return Err(CliError::Usage("the weighted solver only supports --outer mmw".into()));
    }
    let opts = s.concurrent(Outer::Mmw);
    let report = |status, result| Report { command: "solve-weighted", settings: s, instance: Some(&inst), status, result, started };
    match max_weighted_flow(&inst, &weights, &opts) {
        Ok(r) => {
            let rows: Vec<CommodityRow> = weights
                .iter()
                .zip(&r.amounts)
                .enumerate()
                .map(|(commodity, (&weight, &amount))| CommodityRow { commodity: commodity + 1, weight, amount })
                .collect();
            let result = json!({
                "objective": r.objective,
                "amounts": r.amounts,
                "max_congestion": r.max_congestion,
                "congestion": r.congestion,
                "scale": r.scale,
                "probes": r.probes,
                "max_block_condition": r.max_block_condition,
                "stats": r.stats,
                "flow": per_edge(&r.flow, inst.graph.m()),
            });
            emit(report(Status::Ok, result), &rows)
        }
        Err(mcflow::Error::AllProbesFailed(last)) => {
            emit::<()>(report(Status::Fail, json!({ "objective": null, "last_probe": last })), &[])
        }
        Err(e) => Err(e.into()),
    }
}

/// Blocks scaled by `1/u²`: identities, or seeded random blocks of condition `κ`.
fn energy_matrices(inst: &Instance, m: &Matrices, seed: u64) -> Result<EnergyMatrices, CliError> {
    let caps = inst.graph.capacities();
    let inv_sq: Vec<f64> = caps.iter().map(|u| 1.0 / (u * u)).collect();
    match m.kappa {
        None => Ok(EnergyMatrices::scaled_identity(inst.k(), &inv_sq)?),
        Some(kappa) if kappa >= 1.0 && kappa.is_finite() => {
            let base = random_energy(&mut rng(seed), inst.graph.m(), inst.k(), kappa)?;
            Ok(base.scaled_per_edge(&inv_sq))
        }
        Some(kappa) => Err(CliError::Usage(format!("kappa must be at least 1, got {kappa}"))),
    }
}

#[derive(Serialize)]
struct EdgeRow {
    edge: usize,
    saturation: f64,
    congestion: f64,
}

fn coupled(file: &Path, matrices: &Matrices, delta: f64, check: bool, s: &Settings) -> Result<Status, CliError> {
    let started = Instant::now();
    let inst = load(file)?;
    let p = energy_matrices(&inst, matrices, s.seed)?;
    let d = inst.demands();
    let r = quadratically_coupled_flow(&inst.graph, &p, &d, delta, &s.solver_options())?;
    let sat = saturations(&p, &r.flow)?;
    let cong = congestions(&r.flow, &inst.graph.capacities());
    let reference = if check {
        let (energy, _) = dense_coupled_oracle(&inst.graph, &p, &d)?;
        json!({ "energy": energy, "relative_gap": (r.energy - energy) / energy.abs().max(f64::MIN_POSITIVE) })
    } else {
        Value::Null
    };
    let rows: Vec<EdgeRow> =
        sat.iter().zip(&cong).enumerate().map(|(edge, (&saturation, &congestion))| EdgeRow { edge: edge + 1, saturation, congestion }).collect();
    let result = json!({
        "delta": delta,
        "energy": r.energy,
        "potential_scale": r.scale,
        "max_saturation": fmax(&sat),
        "max_congestion": fmax(&cong),
        "solve": r.report,
        "reference": reference,
        "potentials": r.potentials,
        "flow": per_edge(&r.flow, inst.graph.m()),
    });
    emit(Report { command: "coupled", settings: s, instance: Some(&inst), status: Status::Ok, result, started }, &rows)
}

fn capacitated_options(s: &Settings) -> CapacitatedOptions {
    CapacitatedOptions { rho: s.inner_rho, iterations: s.inner_iterations, solver: s.solver_options(), ..CapacitatedOptions::new(s.epsilon) }
}

fn capacitated(file: &Path, matrices: &Matrices, s: &Settings) -> Result<Status, CliError> {
    let started = Instant::now();
    let inst = load(file)?;
    let p = energy_matrices(&inst, matrices, s.seed)?;
    let report = |status, result| Report { command: "capacitated", settings: s, instance: Some(&inst), status, result, started };
    match quadratically_capacitated_flow(&inst.graph, &p, &inst.demands(), &capacitated_options(s))? {
        CapacitatedOutcome::Flow(f) => {
            let result = json!({
                "outcome": "routed",
                "max_saturation": f.max_saturation,
                "within_bound": f.max_saturation <= 1.0 + 10.0 * s.epsilon,
                "accepted_iterations": f.accepted_iterations,
                "params": f.params,
                "stats": f.stats,
                "flow": per_edge(&f.flow, inst.graph.m()),
            });
            emit(report(Status::Ok, result), &f.trace)
        }
        CapacitatedOutcome::Fail(f) => {
            let result = json!({
                "outcome": "fail",
                "fail_iteration": f.iteration,
                "energy": f.energy,
                "mu": f.mu,
                "stats": f.stats,
            });
            emit(report(Status::Fail, result), &f.trace)
        }
    }
}

#[derive(Serialize)]
struct VariantRow {
    outer: &'static str,
    lambda: Option<f64>,
    ratio: Option<f64>,
    max_congestion: Option<f64>,
    probes: usize,
    oracle_calls: usize,
}

fn verify(file: &Path, s: &Settings) -> Result<Status, CliError> {
    let started = Instant::now();
    let inst = load(file)?;
    let lp = lp_concurrent_oracle(&inst)?;
    let tol = 5.0 * s.epsilon;
    let mut rows = Vec::new();
    for (outer, name) in [(Outer::Mmw, "mmw"), (Outer::Signs, "signs")] {
        let row = match binary_search_lambda(&inst, &s.concurrent(outer)) {
            Ok(r) => VariantRow {
                outer: name,
                lambda: Some(r.lambda),
                ratio: Some(r.lambda / lp),
                max_congestion: Some(r.flow.max_congestion),
                probes: r.probes.len(),
                oracle_calls: r.stats.oracle_calls,
            },
            Err(mcflow::Error::AllProbesFailed(_)) => {
                VariantRow { outer: name, lambda: None, ratio: None, max_congestion: None, probes: 0, oracle_calls: 0 }
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }
    let agree = rows.iter().all(|r| r.ratio.is_some_and(|q| (1.0 - tol..=1.0 + tol).contains(&q)));
    let result = json!({ "lp_lambda": lp, "tolerance": tol, "agree": agree, "variants": rows });
    let status = if agree { Status::Ok } else { Status::Fail };
    emit(Report { command: "verify", settings: s, instance: Some(&inst), status, result, started }, &rows)
}

#[derive(Serialize)]
struct BenchRow {
    m: usize,
    n: usize,
    k: usize,
    routed: bool,
    oracle_calls: usize,
    outer_iterations: usize,
    inner_iterations: usize,
    outer_per_solve: f64,
    wall_time_s: f64,
}

fn bench(sizes: &[usize], k: usize, kappa: f64, s: &Settings) -> Result<Status, CliError> {
    let started = Instant::now();
    if k == 0 || sizes.iter().any(|&m| m == 0) {
        return Err(CliError::Usage("sizes and k must be positive".into()));
    }
    let opts = capacitated_options(s);
    let mut rows = Vec::new();
    for &m in sizes {
        let n = (m / 2 + 1).max(2);
        let (inst, p, _) = planted_energy_instance(s.seed, n, m, k, kappa, s.epsilon)?;
        let t0 = Instant::now();
        let out = quadratically_capacitated_flow(&inst.graph, &p, &inst.demands(), &opts)?;
        let st = *out.stats();
        rows.push(BenchRow {
            m,
            n,
            k,
            routed: !out.is_fail(),
            oracle_calls: st.oracle_calls,
            outer_iterations: st.outer_iterations,
            inner_iterations: st.inner_iterations,
            outer_per_solve: st.outer_iterations as f64 / st.oracle_calls.max(1) as f64,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }
    let result = json!({ "kappa": kappa, "runs": rows });
    emit(Report { command: "bench", settings: s, instance: None, status: Status::Ok, result, started }, &rows)
}
