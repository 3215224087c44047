//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. `ACCEPTANCE_ONLY=2,3` runs a subset.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cellfree::conic::SolveOptions;
use cellfree::fronthaul::{chordal_matrix, group_aps, group_chordal_sum, synthesize_channels, C64};
use cellfree::harness::{emit_outputs, run_experiment, ExperimentSpec, TrialRecord, TrialStatus};
use cellfree::optimizer::program::sinr_cone_slack;
use cellfree::optimizer::updates::relative_residual;
use cellfree::optimizer::{
    build_problem, solve_e2e, solve_fixed, update_activation, update_service, update_v, BcdOptions, ProblemInputs,
    Variant,
};
use cellfree::power::{coefficients, coefficients_with, total_power, ReferenceRatios};
use cellfree::scenario::{build_deployment, ScenarioConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Criterion 1 experiment, shared with criteria 7 and 9.
struct Experiment {
    spec: ExperimentSpec,
    records: Vec<TrialRecord>,
    elapsed: Duration,
    _dir: tempfile::TempDir,
}

fn experiment_spec(dir: &std::path::Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(ScenarioConfig::reference(10), 20, dir);
    spec.base_seed = 0;
    spec
}

fn run_reference_experiment() -> Experiment {
    let dir = tempfile::tempdir().expect("temp dir");
    let spec = experiment_spec(dir.path());
    let start = Instant::now();
    let (records, summary) = run_experiment(&spec).expect("experiment runs");
    let elapsed = start.elapsed();
    emit_outputs(&records, &summary, &spec).expect("outputs written");
    Experiment {
        spec,
        records,
        elapsed,
        _dir: dir,
    }
}

fn criterion_1(exp: &Experiment) -> Outcome {
    let summary = cellfree::harness::summarize(&exp.records, &exp.spec.algorithms);
    let mean = |v: Variant| summary.get(v).map_or(f64::NAN, |s| s.total.mean);
    let (e2e, aps, tx) = (mean(Variant::EndToEnd), mean(Variant::ApShutdown), mean(Variant::TxMin));
    let vs_aps = 100.0 * (1.0 - e2e / aps);
    let vs_tx = 100.0 * (1.0 - e2e / tx);
    let ordered = e2e < aps && aps < tx;
    let fast = exp.elapsed < Duration::from_secs(600);
    outcome(
        summary.included > 0 && ordered && vs_aps >= 25.0 && vs_tx >= 60.0 && fast,
        format!(
            "means over {}/{} trials: e2e {e2e:.1} W, ap_shutdown {aps:.1} W, txmin {tx:.1} W; savings {vs_aps:.1} % (>= 25) and {vs_tx:.1} % (>= 60); {:.0} s (< 600)",
            summary.included,
            summary.trials,
            exp.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = ScenarioConfig::reference(10);
    let problems: Vec<ProblemInputs> = (0..10)
        .map(|s| build_problem(&cfg, &build_deployment(&cfg, s).unwrap()).unwrap())
        .collect();
    let (mut checked, mut mismatches, mut feasible, mut boundary) = (0, 0, 0, 0);
    for i in 0..1000 {
        let inputs = &problems[i % problems.len()];
        let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
        let antennas: Vec<usize> = (0..aps)
            .map(|l| {
                if rng.gen_bool(0.3) {
                    0
                } else {
                    rng.gen_range(inputs.strong_pilots(l) + 1..=inputs.max_antennas)
                }
            })
            .collect();
        let scale = 10f64.powf(rng.gen_range(-4.0..0.0));
        let rho = DMatrix::from_fn(aps, ues, |l, _| {
            if antennas[l] > 0 && rng.gen_bool(0.5) {
                scale * rng.gen::<f64>()
            } else {
                0.0
            }
        });
        let sinr = inputs.access.effective_sinr(&antennas, &rho).expect("valid point");
        let slack = sinr_cone_slack(inputs, &antennas, &rho);
        for k in 0..ues {
            checked += 1;
            let target = inputs.sinr_targets[k];
            let meets = sinr[k] >= target;
            feasible += usize::from(meets);
            if meets != (slack[k] >= 0.0) {
                if (sinr[k] / target - 1.0).abs() <= 1e-9 {
                    boundary += 1;
                } else {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        mismatches == 0 && feasible > 0 && feasible < checked,
        format!("{checked} (point, UE) pairs, {feasible} meet the target, {mismatches} disagreements, {boundary} within 1e-9 of the boundary"),
    )
}

/// Minimizer of λ3(u − v²)² + λ4(ρ̄ − v)² over v ≥ 0 by bisection on the derivative.
fn bisect_v(u: f64, rho_bar: f64, l3: f64, l4: f64) -> f64 {
    let grad = |v: f64| 4.0 * l3 * v * (v * v - u) - 2.0 * l4 * (rho_bar - v);
    if rho_bar == 0.0 && u <= l4 / (2.0 * l3) {
        return 0.0;
    }
    let mut hi = 1.0;
    while grad(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = if rho_bar == 0.0 {
        (u - l4 / (2.0 * l3)).sqrt() * 0.5
    } else {
        0.0
    };
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if grad(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_residual, mut worst_gap, mut worst_consistent): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10_000 {
        let u = rng.gen_range(0.0..4.0);
        let rho_bar = rng.gen_range(0.0..2.0);
        let l3 = 10f64.powf(rng.gen_range(-2.0..4.0));
        let l4 = 10f64.powf(rng.gen_range(-2.0..4.0));
        let v = update_v(u, rho_bar, l3, l4);
        let (p, q) = (-u + l4 / (2.0 * l3), -l4 * rho_bar / (2.0 * l3));
        worst_residual = worst_residual.max(relative_residual(v, p, q));
        let reference = bisect_v(u, rho_bar, l3, l4);
        worst_gap = worst_gap.max((v - reference).abs() / reference.max(1.0));

        let consistent = update_v(rho_bar * rho_bar, rho_bar, l3, l4);
        worst_consistent = worst_consistent.max((consistent - rho_bar).abs());
    }
    outcome(
        worst_residual <= 1e-10 && worst_gap <= 1e-9 && worst_consistent <= 1e-12,
        format!(
            "10^4 draws: max residual {worst_residual:.1e} (<= 1e-10), max gap to bisection {worst_gap:.1e} (<= 1e-9), max |v - rho_bar| at u = rho_bar^2 {worst_consistent:.1e} (<= 1e-12)"
        ),
    )
}

/// Exhaustive minimizer of c·b + λ(b − b̃)² over b ∈ {0, 1}; ties go to 0.
fn two_point(c: f64, lambda: f64, relaxed: f64) -> bool {
    let zero = lambda * relaxed * relaxed;
    let one = c + lambda * (1.0 - relaxed) * (1.0 - relaxed);
    one < zero
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut ones = 0;
    for _ in 0..10_000 {
        let lambda = 10f64.powf(rng.gen_range(-2.0..3.0));
        let relaxed = rng.gen_range(0.0..1.0);
        let c2 = rng.gen_range(0.0..30.0);
        let m = update_activation(c2, lambda, relaxed);
        mismatches += usize::from(m != two_point(c2, lambda, relaxed));
        let (c3, c4, antennas) = (
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..0.1),
            rng.gen_range(0.0..16.0),
        );
        let r = update_service(c3, c4, antennas, lambda, relaxed);
        mismatches += usize::from(r != two_point(c3 + c4 * antennas, lambda, relaxed));
        ones += usize::from(m) + usize::from(r);
    }
    outcome(
        mismatches == 0 && ones > 0 && ones < 20_000,
        format!("2 x 10^4 binary updates, {mismatches} differ from the two-point minimum ({ones} ones)"),
    )
}

fn random_directions(rng: &mut ChaCha8Rng, n: usize) -> Vec<DVector<C64>> {
    (0..n)
        .map(|_| DVector::from_fn(6, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
        .collect()
}

/// Smallest max group chordal sum over every assignment of APs to labelled groups.
fn exhaustive_grouping(zeta: &DMatrix<f64>, size: usize, groups: usize) -> f64 {
    let n = zeta.nrows();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (ap, &g) in labels.iter().enumerate() {
            members[g].push(ap);
        }
        if members.iter().all(|m| m.len() <= size) {
            let value = members.iter().map(|m| group_chordal_sum(zeta, m)).fold(0.0, f64::max);
            best = best.min(value);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < groups {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for i in 0..100 {
        let n: usize = [4, 6, 8][i % 3];
        let size = [2, 3, 4][(i / 3) % 3];
        let groups = n.div_ceil(size);
        let zeta = chordal_matrix(&random_directions(&mut rng, n)).unwrap();
        let found = group_aps(&zeta, size, groups).unwrap().objective;
        if found != exhaustive_grouping(&zeta, size, groups) {
            mismatches += 1;
        }
    }
    let cfg = ScenarioConfig::reference(10);
    let mut slowest: f64 = 0.0;
    for seed in 0..5 {
        let dep = build_deployment(&cfg, seed).unwrap();
        let channels = synthesize_channels(&dep, &cfg);
        let instances = [
            chordal_matrix(&channels.direction_vectors()).unwrap(),
            chordal_matrix(&random_directions(&mut rng, 16)).unwrap(),
        ];
        for zeta in instances {
            let start = Instant::now();
            group_aps(&zeta, 4, 4).unwrap();
            slowest = slowest.max(start.elapsed().as_secs_f64());
        }
    }
    outcome(
        mismatches == 0 && slowest < 5.0,
        format!("100 instances with L in {{4,6,8}}: {mismatches} differ from enumeration; L=16, N_c=4 slowest {slowest:.3} s (< 5)"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..1000 {
        let ues = rng.gen_range(1..=10);
        let mut cfg = ScenarioConfig::reference(ues);
        let p = &mut cfg.power;
        p.static_per_antenna_w = rng.gen_range(1.0..10.0);
        p.delta_tr = rng.gen_range(1.0..8.0);
        p.ap_proc_idle_w = rng.gen_range(5.0..40.0);
        p.ap_proc_slope_w = rng.gen_range(20.0..100.0);
        p.gpp_proc_slope_w = rng.gen_range(20.0..100.0);
        p.fixed_w = rng.gen_range(50.0..200.0);
        p.comp_idle_w = rng.gen_range(5.0..40.0);
        p.cooling_efficiency = rng.gen_range(0.5..1.0);
        cfg.qos.target_se = rng.gen_range(0.5..4.0);
        let aps = cfg.num_aps();
        let antennas: Vec<usize> = (0..aps)
            .map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(1..=16) })
            .collect();
        let rho = DMatrix::from_fn(aps, ues, |l, _| {
            if antennas[l] > 0 && rng.gen_bool(0.5) {
                rng.gen::<f64>() / ues as f64
            } else {
                0.0
            }
        });
        let pbar: Vec<f64> = (0..aps).map(|_| rng.gen_range(0.0..1.0)).collect();
        match total_power(&antennas, &rho, &pbar, &cfg) {
            Ok(t) => worst = worst.max((t.coefficient_form - t.component_form).abs() / t.component_form),
            Err(_) => failures += 1,
        }
    }
    let cfg = ScenarioConfig::reference(10);
    let c = coefficients_with(
        &cfg,
        ReferenceRatios {
            bandwidth: 1.0,
            se: 1.0,
        },
    );
    // P_st + 1.3·Δ_GPP/(C_GPP·σ_cool) + Δ_AP/C_AP·(40 f_s + 8 N_DFT log2 N_DFT / T_s)/1e9
    let c1 = 6.8 + 1.3 * 74.0 / (180.0 * 0.9) + 74.0 / 180.0 * (40.0 * 30.72e6 + 8.0 * 2048.0 * 11.0 / 71.4e-6) / 1e9;
    // 8·Δ_GPP/(C_GPP·σ_cool) + P0_proc
    let c2 = 8.0 * 74.0 / (180.0 * 0.9) + 20.8;
    let round3 = |x: f64| (x * 1000.0).round() / 1000.0;
    let coefficients_match = round3(c.c1) == round3(c1) && round3(c.c2) == round3(c2);
    outcome(
        failures == 0 && worst < 1e-12 && coefficients_match && (c1 - 8.94).abs() < 5e-3 && (c2 - 24.45).abs() < 5e-3,
        format!(
            "1000 configurations: max relative gap {worst:.1e} (< 1e-12), {failures} errors; c1 = {:.3} W (hand {:.3}), c2 = {:.3} W (hand {:.3}) at unit reference ratios",
            c.c1, c1, c.c2, c2
        ),
    )
}

fn criterion_7(exp: &Experiment) -> Outcome {
    let solved: Vec<_> = exp
        .records
        .iter()
        .flat_map(|r| &r.results)
        .filter(|a| a.status == TrialStatus::Solved)
        .collect();
    let failed = solved.iter().filter(|a| a.audit_passed != Some(true)).count();
    let feasible_trials = exp.records.iter().filter(|r| r.all_solved()).count();
    outcome(
        failed == 0 && !solved.is_empty(),
        format!(
            "{} returned solutions over {feasible_trials} feasible trials, {failed} fail the audit at 1e-6",
            solved.len()
        ),
    )
}

fn small_instance(seed: u64) -> ProblemInputs {
    let mut cfg = ScenarioConfig::reference(1);
    cfg.network.num_aps = 4;
    cfg.network.cloud_rf_chains = 2;
    build_problem(&cfg, &build_deployment(&cfg, seed).unwrap()).unwrap()
}

/// Least total power over every active set and antenna vector, each with
/// its own convex power solve. Combinations are visited by increasing
/// load-independent cost so the search stops once that cost alone exceeds
/// the incumbent; a combination is skipped when a componentwise larger
/// antenna vector on the same set was already infeasible.
fn brute_force(inputs: &ProblemInputs) -> Option<f64> {
    let c = coefficients(&inputs.config);
    let aps = inputs.num_aps();
    let mut combos: Vec<(f64, Vec<usize>)> = Vec::new();
    for set in 1u32..(1 << aps) {
        let mut partial: Vec<Vec<usize>> = vec![vec![0; aps]];
        for l in 0..aps {
            if set & (1 << l) == 0 {
                continue;
            }
            partial = partial
                .into_iter()
                .flat_map(|base| {
                    (inputs.strong_pilots(l) + 1..=inputs.max_antennas).map(move |m| {
                        let mut next = base.clone();
                        next[l] = m;
                        next
                    })
                })
                .collect();
        }
        for antennas in partial {
            let fixed: f64 = antennas
                .iter()
                .filter(|&&m| m > 0)
                .map(|&m| c.c1 * m as f64 + c.c2 + c.c3 + c.c4 * m as f64)
                .sum();
            combos.push((c.fixed + fixed, antennas));
        }
    }
    combos.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::INFINITY;
    let mut infeasible: HashMap<Vec<bool>, Vec<Vec<usize>>> = HashMap::new();
    for (constant, antennas) in combos {
        if constant >= best {
            break;
        }
        let set: Vec<bool> = antennas.iter().map(|&m| m > 0).collect();
        let dominated = infeasible
            .get(&set)
            .is_some_and(|list| list.iter().any(|bad| antennas.iter().zip(bad).all(|(m, b)| m <= b)));
        if dominated {
            continue;
        }
        let served = DMatrix::from_fn(aps, 1, |l, _| antennas[l] > 0);
        match solve_fixed(inputs, &antennas, &served, &SolveOptions::default(), false) {
            Ok(fixed) => {
                let power = total_power(&fixed.antennas, &fixed.rho, &fixed.fronthaul_power, &inputs.config).unwrap();
                if power.component_form < best && std::env::var("ACCEPTANCE_VERBOSE").is_ok() {
                    eprintln!("  enumeration best {:?} {:.2}", fixed.antennas, power.component_form);
                }
                best = best.min(power.component_form);
            }
            Err(_) => infeasible.entry(set).or_default().push(antennas),
        }
    }
    best.is_finite().then_some(best)
}

fn criterion_8() -> Outcome {
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let inputs = small_instance(seed);
        let optimum = brute_force(&inputs);
        let bcd = solve_e2e(
            &inputs,
            &BcdOptions {
                seed,
                ..Default::default()
            },
        )
        .ok()
        .filter(|s| s.audit.passed)
        .map(|s| {
            if std::env::var("ACCEPTANCE_VERBOSE").is_ok() {
                eprintln!("  e2e {:?}", s.antennas);
            }
            s.power.component_form
        });
        if std::env::var("ACCEPTANCE_VERBOSE").is_ok() {
            eprintln!("seed {seed}: enumeration {optimum:?}, e2e {bcd:?}");
        }
        match (optimum, bcd) {
            (Some(best), Some(found)) => {
                worst = worst.max(found / best);
                matched += usize::from(found <= 1.05 * best);
            }
            (None, None) => matched += 1,
            _ => {}
        }
    }
    outcome(
        matched >= 18,
        format!("L=4, K=1: e2e within 5 % of enumeration on {matched}/20 seeds (>= 18), worst ratio {worst:.4}"),
    )
}

fn criterion_9(exp: &Experiment) -> Outcome {
    let first = std::fs::read(exp.spec.out_dir.join("trials.csv")).expect("first trials.csv");
    let dir = tempfile::tempdir().expect("temp dir");
    let spec = experiment_spec(dir.path());
    let (records, summary) = run_experiment(&spec).expect("rerun");
    emit_outputs(&records, &summary, &spec).expect("rerun outputs");
    let second = std::fs::read(dir.path().join("trials.csv")).expect("second trials.csv");
    outcome(
        first == second,
        format!(
            "trials.csv {} bytes, rerun {} bytes, identical: {}",
            first.len(),
            second.len(),
            first == second
        ),
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|list| list.contains(&n));
    let needs_experiment = [1, 7, 9].iter().any(|&n| wanted(n));
    let experiment = needs_experiment.then(run_reference_experiment);
    let exp = || experiment.as_ref().expect("experiment ran");

    let criteria: [(usize, &str, Box<dyn Fn() -> Outcome + '_>); 9] = [
        (1, "ordering reproduction", Box::new(|| criterion_1(exp()))),
        (2, "SOC equivalence", Box::new(criterion_2)),
        (3, "cubic oracle", Box::new(criterion_3)),
        (4, "binary oracle", Box::new(criterion_4)),
        (5, "grouping oracle", Box::new(criterion_5)),
        (6, "power-model identity", Box::new(criterion_6)),
        (7, "feasibility audit", Box::new(|| criterion_7(exp()))),
        (8, "small-instance optimality", Box::new(criterion_8)),
        (9, "determinism", Box::new(|| criterion_9(exp()))),
    ];
    let mut all = true;
    for (n, name, check) in criteria.iter() {
        if !wanted(*n) {
            continue;
        }
        let result = check();
        all &= result.pass;
        println!(
            "criterion {n} {}: {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
