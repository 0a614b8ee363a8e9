//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use mcflow::capacitated::{quadratically_capacitated_flow, CapacitatedOptions, CapacitatedOutcome, MwuParams};
use mcflow::concurrent::convolve::{convolve_all, DEFAULT_BUDGET};
use mcflow::concurrent::mmw::MmwParams;
use mcflow::concurrent::signs::{energy_matrix_signs, round_flow, SignEnergyInput, SignGrid, SignParams};
use mcflow::concurrent::{binary_search_lambda, ConcurrentOptions, OuterVariant};
use mcflow::coupled::quadratically_coupled_flow;
use mcflow::gen::{gen_instance, planted_energy_instance, random_energy, random_graph, random_pd_block, rng, Profile};
use mcflow::graph::DemandVector;
use mcflow::kvec::{block_condition_bound, EnergyMatrices};
use mcflow::lapsolve::{build_preconditioner, precon_cheby, CoupledOperator, SolverOptions};
use mcflow::refsolve::{dense_coupled_oracle, exact_sign_energy, lp_concurrent_oracle, lp_weighted_oracle, subset_sum_brute};
use mcflow::weighted::{max_weighted_flow, weighted_coupled_flow};
use rand::Rng;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn coupled_optimality() -> Check {
    let delta = 1e-3;
    let mut worst: f64 = 0.0;
    for seed in 0..200 {
        let c = random_case(seed, 10, 20, 3, 100.0);
        let (best, _) = dense_coupled_oracle(&c.g, &c.p, &c.d).map_err(|e| e.to_string())?;
        let r = quadratically_coupled_flow(&c.g, &c.p, &c.d, delta, &SolverOptions::default()).map_err(|e| e.to_string())?;
        let ratio = if best > 0.0 { r.energy / best } else { 1.0 };
        worst = worst.max(ratio);
        ensure(r.energy <= (1.0 + delta) * best + 1e-12, || format!("instance {seed}: energy ratio {ratio}"))?;
        let res = conservation_residual(&c.g, &r.flow, &c.d);
        ensure(res <= 1e-8 * c.d.norm_inf(), || format!("instance {seed}: conservation residual {res:e}"))?;
        let op = CoupledOperator::new(&c.g, &c.p).map_err(|e| e.to_string())?;
        let e_phi = op.quad_form(&r.potentials);
        ensure(e_phi <= 1.0 + 1e-9, || format!("instance {seed}: potential energy {e_phi}"))?;
    }
    Ok(format!("200 instances, worst energy ratio {worst:.6}"))
}

fn preconditioner_sandwich() -> Check {
    let (mut lo, mut hi_rel): (f64, f64) = (f64::INFINITY, 0.0);
    for seed in 0..50 {
        let c = random_case(seed + 1000, 10, 20, 3, 100.0);
        let op = CoupledOperator::new(&c.g, &c.p).map_err(|e| e.to_string())?;
        let pre = build_preconditioner(&c.g, &c.p, &SolverOptions::default()).map_err(|e| e.to_string())?;
        let kappa = block_condition_bound(&c.p);
        let mut r = rng(seed);
        for _ in 0..100 {
            let x = random_vec(&mut r, op.dim());
            let den = pre.quad_form(&x);
            if den < 1e-14 {
                continue;
            }
            let ratio = op.quad_form(&x) / den;
            lo = lo.min(ratio);
            hi_rel = hi_rel.max(ratio / kappa);
            ensure(ratio >= 1.0 - 1e-9 && ratio <= kappa * (1.0 + 1e-9), || format!("instance {seed}: ratio {ratio}, kappa {kappa}"))?;
        }
    }
    Ok(format!("50 instances x 100 vectors, min ratio {lo:.4}, max ratio/kappa {hi_rel:.4}"))
}

fn chebyshev_scaling() -> Check {
    let theta: f64 = 1e-6;
    let mut parts = Vec::new();
    for kappa in [1.0f64, 4.0, 25.0, 100.0] {
        let bound = ((2.0 * kappa).sqrt() * (2.0 / theta).ln()).ceil() as usize + 5;
        let mut most = 0;
        for seed in 0..10 {
            let mut r = rng(seed);
            let (n, m, k) = (10, 20, 3);
            let g = random_graph(&mut r, n, m).map_err(|e| e.to_string())?;
            let p = if kappa == 1.0 {
                EnergyMatrices::scaled_identity(k, &vec![1.0; m]).map_err(|e| e.to_string())?
            } else {
                random_energy(&mut r, m, k, kappa).map_err(|e| e.to_string())?
            };
            let d = random_demands(&mut r, n, k);
            let op = CoupledOperator::new(&g, &p).map_err(|e| e.to_string())?;
            let pre = build_preconditioner(&g, &p, &SolverOptions::default()).map_err(|e| e.to_string())?;
            let (_, rep) = precon_cheby(&op, &pre, d.as_slice(), block_condition_bound(&p), theta).map_err(|e| e.to_string())?;
            most = most.max(rep.iterations);
            ensure(rep.iterations <= bound, || format!("kappa {kappa}: {} iterations > {bound}", rep.iterations))?;
        }
        parts.push(format!("kappa {kappa}: {most} <= {bound}"));
    }
    Ok(parts.join(", "))
}

fn capacitated_mwu() -> Check {
    let eps = 0.1;
    let opts = CapacitatedOptions { iterations: Some(60), ..CapacitatedOptions::new(eps) };
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(seed);
        let n = r.gen_range(3..=10);
        let m = r.gen_range(n - 1..=20);
        let k = r.gen_range(1..=3);
        let (inst, p, _) = planted_energy_instance(seed, n, m, k, 20.0, eps).map_err(|e| e.to_string())?;
        match quadratically_capacitated_flow(&inst.graph, &p, &inst.demands(), &opts).map_err(|e| e.to_string())? {
            CapacitatedOutcome::Flow(f) => {
                worst = worst.max(f.max_saturation);
                ensure(f.max_saturation <= 1.0 + 10.0 * eps, || format!("planted {seed}: saturation {}", f.max_saturation))?;
            }
            CapacitatedOutcome::Fail(f) => return Err(format!("planted {seed}: FAIL in round {}", f.iteration)),
        }
    }
    // single edge, the only flow has saturation s > 1 + 10ε
    for (j, s) in [2.5, 3.0, 4.0, 6.0, 10.0].into_iter().enumerate() {
        let mut r = rng(100 + j as u64);
        let k = 1 + j % 3;
        let block = random_pd_block(&mut r, k, 10.0);
        let dir = random_vec(&mut r, k);
        let scale = s / block.quad_form(&dir).sqrt();
        let mut d = vec![0.0; 2 * k];
        for i in 0..k {
            d[i] = -dir[i] * scale;
            d[k + i] = dir[i] * scale;
        }
        let p = EnergyMatrices::new(k, vec![block]).map_err(|e| e.to_string())?;
        let d = DemandVector::new(k, d).map_err(|e| e.to_string())?;
        let out = quadratically_capacitated_flow(&path(2), &p, &d, &opts).map_err(|e| e.to_string())?;
        ensure(out.is_fail(), || format!("infeasible edge {j} (saturation {s}) was routed"))?;
    }
    Ok(format!("20 planted routed (max saturation {worst:.4}), 5 infeasible FAILed"))
}

struct ConcurrentRun {
    ratio: f64,
    congestion: f64,
    condition: f64,
    bound: f64,
}

fn concurrent_runs() -> std::result::Result<Vec<ConcurrentRun>, String> {
    let eps = 0.1;
    let mut runs = Vec::new();
    let mut jobs = Vec::new();
    for seed in 0..20u64 {
        let mut r = rng(seed + 5000);
        let n = r.gen_range(3..=8);
        let m = r.gen_range(n - 1..=14);
        let k = r.gen_range(1..=3);
        let inst = gen_instance(seed, n, m, k, Profile::Random).map_err(|e| e.to_string())?;
        for variant in [OuterVariant::Mmw, OuterVariant::Signs] {
            jobs.push((seed, inst.clone(), variant));
        }
    }
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(seed, inst, variant)| {
                s.spawn(move || -> std::result::Result<ConcurrentRun, String> {
                    let opts = ConcurrentOptions {
                        outer_iterations: Some(60),
                        inner_iterations: Some(30),
                        ..ConcurrentOptions::new(eps, *variant)
                    };
                    let opt = lp_concurrent_oracle(inst).map_err(|e| e.to_string())?;
                    let res = binary_search_lambda(inst, &opts).map_err(|e| format!("instance {seed} {variant:?}: {e}"))?;
                    let d = inst.demands().scaled(res.lambda);
                    let resid = conservation_residual(&inst.graph, &res.flow.flow, &d);
                    ensure(resid <= 1e-7 * d.norm_inf(), || format!("instance {seed} {variant:?}: residual {resid:e}"))?;
                    Ok(ConcurrentRun {
                        ratio: res.lambda / opt,
                        congestion: res.flow.max_congestion,
                        condition: res.max_block_condition,
                        bound: 2.0 * inst.k() as f64 / eps + 1e-9,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for r in results {
        runs.push(r?);
    }
    Ok(runs)
}

fn concurrent_vs_lp(runs: &[ConcurrentRun]) -> Check {
    let eps = 0.1;
    let min_ratio = runs.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let worst_cong = max(runs.iter().map(|r| r.congestion));
    ensure(min_ratio >= 1.0 - 5.0 * eps, || format!("lambda / LP = {min_ratio:.4}"))?;
    ensure(worst_cong <= 1.0 + 3.0 * eps, || format!("congestion {worst_cong:.4}"))?;
    Ok(format!("{} runs, min lambda/LP {min_ratio:.3}, max congestion {worst_cong:.3}", runs.len()))
}

fn condition_bounds(runs: &[ConcurrentRun]) -> Check {
    let worst = max(runs.iter().map(|r| r.condition / r.bound));
    ensure(worst <= 1.0, || format!("condition reached {worst:.4} of the bound"))?;
    Ok(format!("largest block condition {:.2} of bound", worst))
}

fn convolve_correctness() -> Check {
    let mut r = rng(77);
    for t in 0..50 {
        let k = r.gen_range(0..=12);
        let a: Vec<u64> = (0..k).map(|_| r.gen_range(1..=8)).collect();
        let got = convolve_all(&a).map_err(|e| e.to_string())?;
        let want = subset_sum_brute(&a).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("list {t} {a:?} disagrees"))?;
        ensure(got.iter().sum::<u64>() == 1 << k, || format!("list {t}: counts do not sum to 2^{k}"))?;
    }
    Ok("50 lists agree with enumeration".into())
}

fn sign_sandwich() -> Check {
    let eps = 0.1;
    let mut r = rng(88);
    let mut worst: f64 = 0.0;
    for b in 0..50 {
        let k = r.gen_range(1..=10);
        let u = r.gen_range(0.5..4.0);
        let rho = k as f64;
        let f: Vec<f64> = (0..k).map(|_| r.gen_range(-3.0..3.0) * u).collect();
        let input = SignEnergyInput { flow: &f, capacity: u, rho, epsilon: eps };
        let grid = SignGrid::new(&input);
        for mask in 0u32..1 << k {
            let s: Vec<f64> = (0..k).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let exact = (eps / rho) * s.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() / u;
            let gap = grid.log_weight(&s) - exact;
            ensure(gap >= -1e-12 && gap <= (1.0 + eps).ln() + 1e-12, || format!("block {b}: log-weight gap {gap}"))?;
        }
        let p = energy_matrix_signs(&input, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
        let q = exact_sign_energy(&round_flow(&f, u, eps, k), u, rho, eps).map_err(|e| e.to_string())?;
        let diff = p.data().iter().zip(q.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
        ensure(diff <= 1e-9, || format!("block {b}: entrywise difference {diff:e}"))?;
    }
    Ok(format!("50 blocks, max entry difference {worst:.1e}"))
}

fn weighted_flow() -> Check {
    let eps = 0.1;
    for seed in 0..20 {
        let mut r = rng(seed + 9000);
        let n = r.gen_range(3..=8);
        let m = r.gen_range(n - 1..=14);
        let k = r.gen_range(1..=3);
        let g = random_graph(&mut r, n, m).map_err(|e| e.to_string())?;
        let p = random_energy(&mut r, m, k, 30.0).map_err(|e| e.to_string())?;
        let demands: Vec<Vec<f64>> = (0..k).map(|i| random_demands(&mut r, n, 1).commodity(0).iter().map(|x| x * (i + 1) as f64).collect()).collect();
        let w = weighted_coupled_flow(&g, &p, &demands, 1e-3, &SolverOptions::direct()).map_err(|e| e.to_string())?;
        let net = mcflow::graph::incidence_transpose_apply(&g, k, w.flow.as_slice()).map_err(|e| e.to_string())?;
        let (mut res, mut scale) = (0.0f64, 0.0f64);
        for v in 0..n {
            for i in 0..k {
                let want = w.values[i] * demands[i][v];
                res = res.max((net[v * k + i] - want).abs());
                scale = scale.max(want.abs());
            }
        }
        ensure(res <= 1e-7 * scale, || format!("instance {seed}: conservation {res:e}"))?;
        ensure((w.energy - w.lambda).abs() <= 1e-5 * w.lambda, || format!("instance {seed}: energy {} vs lambda {}", w.energy, w.lambda))?;
    }
    let opts = ConcurrentOptions { outer_iterations: Some(60), inner_iterations: Some(30), ..ConcurrentOptions::new(eps, OuterVariant::Mmw) };
    let mut min_ratio = f64::INFINITY;
    for seed in 0..10 {
        let mut r = rng(seed + 9500);
        let n = r.gen_range(3..=7);
        let m = r.gen_range(n - 1..=12);
        let k = r.gen_range(1..=3);
        let inst = gen_instance(seed + 9500, n, m, k, Profile::Random).map_err(|e| e.to_string())?;
        let weights: Vec<f64> = (0..k).map(|_| r.gen_range(1..=4) as f64).collect();
        let lp = lp_weighted_oracle(&inst, &weights).map_err(|e| e.to_string())?;
        let out = max_weighted_flow(&inst, &weights, &opts).map_err(|e| e.to_string())?;
        min_ratio = min_ratio.min(out.objective / lp);
        ensure(out.objective >= (1.0 - 5.0 * eps) * lp, || format!("instance {seed}: {} vs LP {lp}", out.objective))?;
    }
    Ok(format!("identities hold on 20 instances; 10 weighted, min objective/LP {min_ratio:.3}"))
}

fn stated_constants() -> Check {
    let a = MwuParams::theoretical(1000, 1.0);
    ensure((a.rho - 100.0).abs() < 1e-9, || format!("capacitated rho {}", a.rho))?;
    let want_n = (20.0 * a.rho * 1000f64.ln()).ceil() as usize;
    ensure(a.iterations == want_n, || format!("capacitated N {} != {want_n}", a.iterations))?;
    let b = MmwParams::theoretical(4, 1.0);
    ensure((b.rho - 2.0).abs() < 1e-15, || format!("outer rho {}", b.rho))?;
    let e1 = 1.0 / (4.0 * 2.0);
    let e1p = -(1.0f64 - e1).ln();
    ensure((b.epsilon1 - e1).abs() < 1e-15 && (b.epsilon1_prime - e1p).abs() < 1e-15, || "outer epsilons".into())?;
    let want_n = (2.0 / (e1p * e1p) * 4f64.ln()).ceil() as usize;
    ensure(b.iterations == want_n, || format!("outer N {} != {want_n}", b.iterations))?;
    let s = SignParams::theoretical(3, 0.1);
    ensure(s.rho == 3.0 && s.iterations == 900, || format!("sign params {s:?}"))?;
    Ok(format!("capacitated (rho 100, N {}), outer (rho 2, N {})", a.iterations, b.iterations))
}

fn iteration_counts() -> Check {
    let eps = 0.1;
    let mut rows = Vec::new();
    for m in [8usize, 16, 32, 64] {
        let n = m / 2 + 1;
        let (inst, p, _) = planted_energy_instance(m as u64, n, m, 2, 10.0, eps).map_err(|e| e.to_string())?;
        let opts = CapacitatedOptions { iterations: Some(30), ..CapacitatedOptions::new(eps) };
        let out = quadratically_capacitated_flow(&inst.graph, &p, &inst.demands(), &opts).map_err(|e| e.to_string())?;
        let st = out.stats();
        rows.push(format!("m={m}: {} solves, {} outer its, {} inner its", st.oracle_calls, st.outer_iterations, st.inner_iterations));
    }
    Ok(format!("runtime claim not reproduced; iteration counts {}", rows.join("; ")))
}

fn main() {
    let started = Instant::now();
    let timed = |f: &dyn Fn() -> Check| -> (Check, Duration) {
        let t = Instant::now();
        (f(), t.elapsed())
    };
    let mut results: Vec<(usize, Check, Duration)> = Vec::new();
    let checks: [(usize, &dyn Fn() -> Check); 7] = [
        (1, &coupled_optimality),
        (2, &preconditioner_sandwich),
        (3, &chebyshev_scaling),
        (4, &capacitated_mwu),
        (7, &convolve_correctness),
        (8, &sign_sandwich),
        (9, &weighted_flow),
    ];
    for (id, f) in checks {
        let (c, d) = timed(f);
        results.push((id, c, d));
    }
    let t = Instant::now();
    match concurrent_runs() {
        Ok(runs) => {
            let d = t.elapsed();
            results.push((5, concurrent_vs_lp(&runs), d));
            results.push((6, condition_bounds(&runs), Duration::ZERO));
        }
        Err(e) => {
            results.push((5, Err(e.clone()), t.elapsed()));
            results.push((6, Err(format!("no runs: {e}")), Duration::ZERO));
        }
    }
    let (c, d) = timed(&stated_constants);
    results.push((10, c, d));
    let (c, d) = timed(&iteration_counts);
    results.push((11, c, d));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, check, took) in &results {
        match check {
            Ok(msg) if *id == 11 => println!("criterion {id:>2}: NOT REPRODUCED (by design) [{:.1}s] {msg}", took.as_secs_f64()),
            Ok(msg) => println!("criterion {id:>2}: PASS [{:.1}s] {msg}", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {id:>2}: FAIL [{:.1}s] {msg}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of {} criteria failed, {:.1}s total", failed, results.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
