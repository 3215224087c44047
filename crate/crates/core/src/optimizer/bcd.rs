use std::io::Write;

use log::debug;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::assign::assign_service;
use super::program::{assemble_fixed, assemble_links, assemble_subproblem1, Link};
use super::updates::{update_activation, update_service, update_v};
use super::{
    audit_feasibility, AuditReport, BcdOptions, BcdState, NetworkSolution, OptimizerError, ProblemInputs, Telemetry,
    Variant,
};
use crate::conic::{solve, SolveOptions, SolveResult, SolveStatus};
use crate::power::{total_power, PowerCoefficients};

/// Powers at or below this are treated as no service, W.
const SERVICE_THRESHOLD: f64 = 1e-9;

/// Largest normalized constraint violation accepted from a solve that did
/// not report full optimality.
const ACCEPT_RESIDUAL: f64 = 1e-7;

fn acceptable(res: &SolveResult) -> bool {
    match res.status {
        SolveStatus::Optimal => true,
        SolveStatus::NumericalFailure | SolveStatus::IterationLimit => res.primal_residual <= ACCEPT_RESIDUAL,
        _ => false,
    }
}

fn initial_state(inputs: &ProblemInputs, options: &BcdOptions) -> BcdState {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let amplitude = inputs.access_budget.sqrt();
    let v = DMatrix::from_fn(aps, ues, |_, _| rng.gen_range(0.0..=amplitude));
    BcdState {
        antennas: (0..aps).map(|l| inputs.excess_antennas_max(l)).collect(),
        rho_bar: DMatrix::zeros(aps, ues),
        fronthaul_power: vec![0.0; aps],
        time_shares: vec![0.0; inputs.grouping.num_groups()],
        z: DMatrix::zeros(aps, ues),
        r_relaxed: DMatrix::from_element(aps, ues, 1.0),
        m_relaxed: vec![1.0; aps],
        u: DMatrix::zeros(aps, ues),
        v,
        r: DMatrix::from_element(aps, ues, true),
        m: vec![true; aps],
        lambda: options.initial_lambda(inputs),
        iteration: 0,
        history: Vec::new(),
        conic_solves: 0,
    }
}

/// Full penalty objective at `state`.
pub fn penalty_objective(state: &BcdState, inputs: &ProblemInputs, variant: Variant) -> f64 {
    let c = match variant {
        Variant::TxMin => inputs.coefficients.transmit_only(),
        _ => inputs.coefficients,
    };
    let lambda = state.lambda;
    let mut total = c.c5 * state.fronthaul_power.iter().sum::<f64>();
    for l in 0..inputs.num_aps() {
        let m = f64::from(u8::from(state.m[l]));
        let served = (0..inputs.num_ues()).filter(|&k| state.r[(l, k)]).count() as f64;
        total += c.c1 * state.antennas[l]
            + c.c2 * m
            + c.c3 * served
            + c.c4 * state.antennas[l] * served
            + lambda[1] * (m - state.m_relaxed[l]).powi(2);
        for k in 0..inputs.num_ues() {
            let rho = state.rho_bar[(l, k)];
            let v = state.v[(l, k)];
            let r = f64::from(u8::from(state.r[(l, k)]));
            total += c.c0 * rho * rho
                + lambda[0] * (r - state.r_relaxed[(l, k)]).powi(2)
                + lambda[2] * (state.u[(l, k)] - v * v).powi(2)
                + lambda[3] * (rho - v).powi(2);
        }
    }
    total
}

/// Σ(r − r̃)², Σ(m − m̃)², Σ(u − v²)², Σ(ρ̄ − v)².
fn penalty_residuals(state: &BcdState) -> [f64; 4] {
    let r: f64 = state
        .r
        .iter()
        .zip(state.r_relaxed.iter())
        .map(|(&b, &x)| (f64::from(u8::from(b)) - x).powi(2))
        .sum();
    let m: f64 = state
        .m
        .iter()
        .zip(&state.m_relaxed)
        .map(|(&b, &x)| (f64::from(u8::from(b)) - x).powi(2))
        .sum();
    let u: f64 = state
        .u
        .iter()
        .zip(state.v.iter())
        .map(|(u, v)| (u - v * v).powi(2))
        .sum();
    let rho: f64 = state
        .rho_bar
        .iter()
        .zip(state.v.iter())
        .map(|(p, v)| (p - v).powi(2))
        .sum();
    [r, m, u, rho]
}

/// Alternates the continuous, v and binary blocks until the penalty objective
/// settles. `trace` receives one CSV line per iteration.
pub fn run_bcd(
    inputs: &ProblemInputs,
    variant: Variant,
    options: &BcdOptions,
    mut trace: Option<&mut dyn Write>,
) -> Result<BcdState, OptimizerError> {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    let mut state = initial_state(inputs, options);
    let initial_lambda = state.lambda;
    if let Some(w) = trace.as_deref_mut() {
        let _ = writeln!(
            w,
            "iteration,objective,r_residual,m_residual,u_residual,rho_residual,active_aps"
        );
    }
    let mut settled = 0;
    for iteration in 0..options.max_iterations {
        let (prog, layout) = assemble_subproblem1(&state, inputs, variant);
        let res = solve(&prog, &options.solver);
        state.conic_solves += 1;
        if !acceptable(&res) {
            debug!("{variant} iteration {iteration}: sub-problem status {}", res.status);
            if iteration == 0 {
                return Err(match res.status {
                    SolveStatus::Infeasible => OptimizerError::Infeasible(res.status),
                    status => OptimizerError::Solver {
                        stage: "continuous sub-problem".into(),
                        status,
                    },
                });
            }
            break;
        }
        let x = &res.x;
        for l in 0..aps {
            for k in 0..ues {
                state.rho_bar[(l, k)] = x[layout.rho(l, k)].max(0.0);
                state.z[(l, k)] = x[layout.z(l, k)].max(0.0);
                state.u[(l, k)] = x[layout.u(l, k)].max(0.0);
                state.r_relaxed[(l, k)] = x[layout.r(l, k)].clamp(0.0, 1.0);
            }
            state.m_relaxed[l] = x[layout.m(l)].clamp(0.0, 1.0);
            state.antennas[l] = x[layout.antennas(l)].clamp(0.0, inputs.excess_antennas_max(l));
            state.fronthaul_power[l] = x[layout.pbar(l)].max(0.0);
        }
        for i in 0..inputs.grouping.num_groups() {
            state.time_shares[i] = x[layout.t(i)].clamp(0.0, 1.0);
        }

        let [l1, l2, l3, l4] = state.lambda;
        for l in 0..aps {
            for k in 0..ues {
                state.v[(l, k)] = update_v(state.u[(l, k)], state.rho_bar[(l, k)], l3, l4);
            }
        }
        let c = match variant {
            Variant::TxMin => inputs.coefficients.transmit_only(),
            _ => inputs.coefficients,
        };
        for l in 0..aps {
            if variant != Variant::TxMin {
                state.m[l] = update_activation(c.c2, l2, state.m_relaxed[l]);
            }
            for k in 0..ues {
                state.r[(l, k)] = update_service(c.c3, c.c4, state.antennas[l], l1, state.r_relaxed[(l, k)]);
            }
        }

        let objective = penalty_objective(&state, inputs, variant);
        state.iteration = iteration + 1;
        if let Some(w) = trace.as_deref_mut() {
            let [a, b, cc, d] = penalty_residuals(&state);
            let active = state.m.iter().filter(|&&m| m).count();
            let _ = writeln!(w, "{},{objective:e},{a:e},{b:e},{cc:e},{d:e},{active}", state.iteration);
        }
        if let Some(&previous) = state.history.last() {
            let change = (objective - previous).abs() / previous.abs().max(1e-12);
            settled = if change < options.rel_tol { settled + 1 } else { 0 };
        }
        state.history.push(objective);
        if settled >= 2 {
            break;
        }
        for (lam, init) in state.lambda.iter_mut().zip(initial_lambda) {
            *lam = (*lam * options.ramp).min(init * options.ramp_cap);
        }
    }
    Ok(state)
}

/// Solution of the convex power program for fixed integers.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSolution {
    pub antennas: Vec<usize>,
    pub served: DMatrix<bool>,
    pub rho: DMatrix<f64>,
    pub fronthaul_power: Vec<f64>,
    pub time_shares: Vec<f64>,
    pub status: SolveStatus,
    pub solves: usize,
}

/// Minimizes transmit power for fixed antenna counts and service links.
///
/// Links ending up with at most 1 nW are dropped and the program re-solved,
/// so that the returned service pattern is exactly the set of links with
/// positive power. APs left without links are switched off unless
/// `keep_active` is set.
pub fn solve_fixed(
    inputs: &ProblemInputs,
    antennas: &[usize],
    served: &DMatrix<bool>,
    solver: &SolveOptions,
    keep_active: bool,
) -> Result<FixedSolution, (SolveStatus, usize)> {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    let mut antennas = antennas.to_vec();
    let mut served = served.clone();
    for l in 0..aps {
        if antennas[l] == 0 {
            served.row_mut(l).fill(false);
        }
    }
    let mut solves = 0;
    loop {
        let (prog, layout) = assemble_fixed(inputs, &antennas, &served);
        let res = solve(&prog, solver);
        solves += 1;
        if !acceptable(&res) {
            return Err((res.status, solves));
        }
        let x = &res.x;
        let rho = DMatrix::from_fn(aps, ues, |l, k| layout.rho(l, k).map_or(0.0, |v| x[v].max(0.0).powi(2)));
        let mut changed = false;
        for l in 0..aps {
            for k in 0..ues {
                if served[(l, k)] && rho[(l, k)] <= SERVICE_THRESHOLD {
                    served[(l, k)] = false;
                    changed = true;
                }
            }
            if !keep_active && antennas[l] > 0 && !served.row(l).iter().any(|&s| s) {
                antennas[l] = 0;
                changed = true;
            }
        }
        if changed && solves < 8 {
            continue;
        }
        let rho = rho.zip_map(&served, |p, s| if s { p } else { 0.0 });
        let fronthaul_power = (0..aps)
            .map(|l| layout.pbar(l).map_or(0.0, |v| x[v].clamp(0.0, inputs.fronthaul_budget)))
            .collect();
        let time_shares = (0..inputs.grouping.num_groups())
            .map(|i| x[layout.t(i)].clamp(0.0, 1.0))
            .collect();
        return Ok(FixedSolution {
            antennas,
            served,
            rho,
            fronthaul_power,
            time_shares,
            status: res.status,
            solves,
        });
    }
}

/// Weight below which a relaxed link is switched off during diving.
const DIVE_OFF: f64 = 1e-3;

/// Decides the service pattern one link at a time.
///
/// The time shares are pinned, first to those of the fully relaxed program
/// and then to equal shares, which makes the fronthaul load linear in the
/// link weights. Every candidate link starts relaxed. Each round solves the
/// relaxed program, switches off links with negligible weight and switches on
/// the relaxed link of largest weight. An infeasible round backtracks to the
/// latest decision and switches that link off instead.
pub fn dive_service(
    inputs: &ProblemInputs,
    antennas: &[usize],
    candidates: &DMatrix<bool>,
    costs: &PowerCoefficients,
    solver: &SolveOptions,
    keep_active: bool,
) -> Result<FixedSolution, (SolveStatus, usize)> {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    let groups = inputs.grouping.num_groups();
    let start = DMatrix::from_fn(aps, ues, |l, k| {
        if antennas[l] > 0 && candidates[(l, k)] {
            Link::Free
        } else {
            Link::Off
        }
    });
    let (prog, layout) = assemble_links(inputs, antennas, &start, costs, None);
    let res = solve(&prog, solver);
    let mut solves = 1;
    if !acceptable(&res) {
        return Err((res.status, solves));
    }
    let relaxed: Vec<f64> = (0..groups).map(|i| res.x[layout.t(i)].clamp(0.0, 1.0)).collect();
    let mut last = res.status;
    for shares in [relaxed, vec![1.0 / groups as f64; groups]] {
        match dive_pinned(inputs, antennas, start.clone(), costs, solver, keep_active, &shares) {
            Ok(mut fixed) => {
                fixed.solves += solves;
                return Ok(fixed);
            }
            Err((status, n)) => {
                solves += n;
                last = status;
            }
        }
    }
    Err((last, solves))
}

fn dive_pinned(
    inputs: &ProblemInputs,
    antennas: &[usize],
    mut links: DMatrix<Link>,
    costs: &PowerCoefficients,
    solver: &SolveOptions,
    keep_active: bool,
    shares: &[f64],
) -> Result<FixedSolution, (SolveStatus, usize)> {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    let mut solves = 0;
    let budget = 2 * aps * ues + 8;
    // links before each On decision, and the decided link
    let mut stack: Vec<(DMatrix<Link>, (usize, usize))> = Vec::new();
    loop {
        if !links.iter().any(|&x| x == Link::Free) {
            let served = links.map(|x| x == Link::On);
            match solve_fixed(inputs, antennas, &served, solver, keep_active) {
                Ok(mut fixed) => {
                    fixed.solves += solves;
                    return Ok(fixed);
                }
                Err((status, n)) => {
                    solves += n;
                    match backtrack(&mut stack) {
                        Some(previous) if solves < budget => {
                            links = previous;
                            continue;
                        }
                        _ => return Err((status, solves)),
                    }
                }
            }
        }
        let (prog, layout) = assemble_links(inputs, antennas, &links, costs, Some(shares));
        let res = solve(&prog, solver);
        solves += 1;
        if !acceptable(&res) {
            match backtrack(&mut stack) {
                Some(previous) if solves < budget => {
                    links = previous;
                    continue;
                }
                _ => return Err((res.status, solves)),
            }
        }
        let previous = links.clone();
        let mut best: Option<((usize, usize), f64)> = None;
        for l in 0..aps {
            for k in 0..ues {
                let Some(w) = layout.weight(l, k) else { continue };
                let w = res.x[w];
                if w <= DIVE_OFF {
                    links[(l, k)] = Link::Off;
                } else if best.is_none_or(|(_, b)| w > b) {
                    best = Some(((l, k), w));
                }
            }
        }
        if let Some((link, _)) = best {
            links[link] = Link::On;
            stack.push((previous, link));
        }
    }
}

/// Pops the latest On decision and returns its state with that link Off.
fn backtrack(stack: &mut Vec<(DMatrix<Link>, (usize, usize))>) -> Option<DMatrix<Link>> {
    let (mut links, link) = stack.pop()?;
    links[link] = Link::Off;
    Some(links)
}

fn rounding_options(
    state: &BcdState,
    inputs: &ProblemInputs,
    variant: Variant,
    active: &[bool],
) -> Vec<(String, Vec<usize>)> {
    let aps = inputs.num_aps();
    if variant != Variant::EndToEnd {
        let full = (0..aps)
            .map(|l| if active[l] { inputs.max_antennas } else { 0 })
            .collect();
        return vec![("full".into(), full)];
    }
    let rules: [(&str, fn(f64) -> f64); 3] = [
        ("floor", f64::floor),
        ("round", |x| (x + 0.5).floor()),
        ("ceil", f64::ceil),
    ];
    let mut options: Vec<(String, Vec<usize>)> = Vec::new();
    for (name, rule) in rules {
        let counts: Vec<usize> = (0..aps)
            .map(|l| {
                if !active[l] {
                    return 0;
                }
                let tau = inputs.strong_pilots(l);
                let relaxed = rule(state.antennas[l] + tau as f64).max(0.0) as usize;
                relaxed.clamp(tau + 1, inputs.max_antennas)
            })
            .collect();
        if !options.iter().any(|(_, c)| *c == counts) {
            options.push((name.into(), counts));
        }
    }
    options
}

/// Turns a converged relaxed state into an integer-feasible solution.
///
/// Antenna counts are rounded (floor, round, ceil; e2e also tries full
/// arrays on the active APs and then on every AP). The first option with a
/// feasible service pattern wins, and e2e then drops APs and trims antennas.
pub fn postprocess_round(
    state: &BcdState,
    inputs: &ProblemInputs,
    variant: Variant,
    solver: &SolveOptions,
) -> Result<NetworkSolution, OptimizerError> {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    let active: Vec<bool> = match variant {
        Variant::TxMin => vec![true; aps],
        _ => state.m.clone(),
    };
    let costs = match variant {
        Variant::TxMin => inputs.coefficients.transmit_only(),
        _ => inputs.coefficients,
    };
    let keep_active = variant == Variant::TxMin;
    let mut options = rounding_options(state, inputs, variant, &active);
    if variant == Variant::EndToEnd {
        let full = |on: &dyn Fn(usize) -> bool| (0..aps).map(|l| if on(l) { inputs.max_antennas } else { 0 }).collect();
        for (name, counts) in [("full", full(&|l| active[l])), ("all", full(&|_| true))] {
            if !options.iter().any(|(_, c)| *c == counts) {
                options.push((name.to_string(), counts));
            }
        }
    }
    let mut failures = Vec::new();
    let mut solves = state.conic_solves;
    for (name, counts) in options {
        let served = DMatrix::from_fn(aps, ues, |l, k| counts[l] > 0 && state.r_relaxed[(l, k)] > 0.5);
        let attempt = solve_pattern(inputs, &counts, &served, &costs, solver, keep_active).map(|fixed| {
            if variant == Variant::EndToEnd {
                refine_antennas(inputs, fixed, solver)
            } else {
                fixed
            }
        });
        match attempt {
            Ok(fixed) => {
                solves += fixed.solves;
                let telemetry = Telemetry {
                    bcd_iterations: state.iteration,
                    conic_solves: solves,
                    status: fixed.status,
                    rounding: name,
                };
                return assemble_solution(inputs, variant, fixed, telemetry);
            }
            Err((status, n)) => {
                solves += n;
                debug!("{variant}: rounding option {name} failed with {status}");
                failures.push((name, status));
            }
        }
    }
    Err(OptimizerError::Rounding(failures))
}

/// Assigned service patterns tried before diving.
const ASSIGN_TRIES: usize = 16;

/// Tries the given service links, then one-link-per-UE assignments, then a dive.
fn solve_pattern(
    inputs: &ProblemInputs,
    counts: &[usize],
    served: &DMatrix<bool>,
    costs: &PowerCoefficients,
    solver: &SolveOptions,
    keep_active: bool,
) -> Result<FixedSolution, (SolveStatus, usize)> {
    let candidates = DMatrix::from_element(inputs.num_aps(), inputs.num_ues(), true);
    let mut solves = 0;
    let mut finish = |result: Result<FixedSolution, (SolveStatus, usize)>| match result {
        Ok(mut fixed) => {
            fixed.solves += solves;
            Ok(fixed)
        }
        Err((status, n)) => {
            solves += n;
            Err(status)
        }
    };
    if served.iter().any(|&s| s) {
        if let Ok(fixed) = finish(solve_fixed(inputs, counts, served, solver, keep_active)) {
            return Ok(fixed);
        }
    }
    for assigned in assign_service(inputs, counts, &candidates).iter().take(ASSIGN_TRIES) {
        if let Ok(fixed) = finish(solve_fixed(inputs, counts, assigned, solver, keep_active)) {
            return Ok(fixed);
        }
    }
    finish(dive_service(inputs, counts, &candidates, costs, solver, keep_active)).map_err(|status| (status, solves))
}

fn fixed_total(inputs: &ProblemInputs, fixed: &FixedSolution) -> f64 {
    total_power(&fixed.antennas, &fixed.rho, &fixed.fronthaul_power, &inputs.config)
        .map_or(f64::INFINITY, |p| p.component_form)
}

/// Switches active APs off one at a time, least transmit power first, until
/// no removal lowers the total power. The other active APs go back to full
/// antenna counts before their counts are lowered again.
pub fn refine_antennas(inputs: &ProblemInputs, best: FixedSolution, solver: &SolveOptions) -> FixedSolution {
    let mut best = shrink_antennas(inputs, best, solver);
    let mut solves = best.solves;
    let mut improved = true;
    while improved {
        improved = false;
        for l in by_load(&best) {
            if best.antennas.iter().filter(|&&m| m > 0).count() < 2 {
                break;
            }
            let counts: Vec<usize> = (0..inputs.num_aps())
                .map(|i| {
                    if i == l || best.antennas[i] == 0 {
                        0
                    } else {
                        inputs.max_antennas
                    }
                })
                .collect();
            let mut served = best.served.clone();
            served.row_mut(l).fill(false);
            match solve_fixed(inputs, &counts, &served, solver, false) {
                Ok(fixed) => {
                    let trial = shrink_antennas(inputs, fixed, solver);
                    solves += trial.solves;
                    if fixed_total(inputs, &trial) < fixed_total(inputs, &best) {
                        best = trial;
                        improved = true;
                        break;
                    }
                }
                Err((_, n)) => solves += n,
            }
        }
    }
    best.solves = solves;
    best
}

/// Active APs by increasing transmit power.
fn by_load(fixed: &FixedSolution) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fixed.antennas.len()).filter(|&l| fixed.antennas[l] > 0).collect();
    order.sort_by(|&a, &b| fixed.rho.row(a).sum().total_cmp(&fixed.rho.row(b).sum()));
    order
}

/// Lowers each active AP to its smallest feasible antenna count by
/// bisection, least loaded AP first, keeping the service links.
fn shrink_antennas(inputs: &ProblemInputs, mut best: FixedSolution, solver: &SolveOptions) -> FixedSolution {
    let mut solves = best.solves;
    for l in by_load(&best) {
        if best.antennas[l] == 0 {
            continue;
        }
        let (mut lo, mut hi) = (inputs.strong_pilots(l) + 1, best.antennas[l]);
        while lo < hi {
            let mid = (lo + hi) / 2;
            let mut counts = best.antennas.clone();
            counts[l] = mid;
            match solve_fixed(inputs, &counts, &best.served, solver, false) {
                Ok(fixed) => {
                    solves += fixed.solves;
                    hi = mid;
                    best = fixed;
                    if best.antennas[l] == 0 {
                        break;
                    }
                }
                Err((_, n)) => {
                    solves += n;
                    lo = mid + 1;
                }
            }
        }
    }
    best.solves = solves;
    best
}

/// Audit tolerance recorded in every returned solution.
pub const AUDIT_TOL: f64 = 1e-6;

pub(super) fn assemble_solution(
    inputs: &ProblemInputs,
    variant: Variant,
    fixed: FixedSolution,
    telemetry: Telemetry,
) -> Result<NetworkSolution, OptimizerError> {
    let power = total_power(&fixed.antennas, &fixed.rho, &fixed.fronthaul_power, &inputs.config)?;
    let active = fixed.antennas.iter().map(|&m| m > 0).collect();
    let mut solution = NetworkSolution {
        variant,
        antennas: fixed.antennas,
        rho: fixed.rho,
        fronthaul_power: fixed.fronthaul_power,
        time_shares: fixed.time_shares,
        served: fixed.served,
        active,
        power,
        audit: AuditReport::default(),
        telemetry,
    };
    solution.audit = audit_feasibility(&solution, inputs, AUDIT_TOL);
    Ok(solution)
}

fn solve_variant(
    inputs: &ProblemInputs,
    variant: Variant,
    options: &BcdOptions,
) -> Result<NetworkSolution, OptimizerError> {
    let state = run_bcd(inputs, variant, options, None)?;
    postprocess_round(&state, inputs, variant, &options.solver)
}

/// Joint antenna, AP, power and fronthaul optimization.
pub fn solve_e2e(inputs: &ProblemInputs, options: &BcdOptions) -> Result<NetworkSolution, OptimizerError> {
    solve_variant(inputs, Variant::EndToEnd, options)
}

/// APs switch fully on or off; active APs use every antenna.
pub fn baseline_ap_shutdown(inputs: &ProblemInputs, options: &BcdOptions) -> Result<NetworkSolution, OptimizerError> {
    solve_variant(inputs, Variant::ApShutdown, options)
}

/// Every AP on with every antenna; only transmit power is minimized.
pub fn baseline_txmin(inputs: &ProblemInputs, options: &BcdOptions) -> Result<NetworkSolution, OptimizerError> {
    solve_variant(inputs, Variant::TxMin, options)
}
