//! Assembly of the relaxed continuous sub-problem and of the fixed-integer
//! power program as conic programs.

use nalgebra::DMatrix;

use super::{BcdState, ProblemInputs, Variant};
use crate::conic::{AffineExpr, ConicProgram, SecondOrderCone};
use crate::power::PowerCoefficients;

/// Variable indices of the relaxed continuous sub-problem.
#[derive(Debug, Clone, Copy)]
pub struct RelaxedLayout {
    aps: usize,
    ues: usize,
    rho: usize,
    z: usize,
    u: usize,
    r: usize,
    m: usize,
    antennas: usize,
    pbar: usize,
    t: usize,
    demand: usize,
}

impl RelaxedLayout {
    pub fn rho(&self, l: usize, k: usize) -> usize {
        self.rho + l * self.ues + k
    }
    pub fn z(&self, l: usize, k: usize) -> usize {
        self.z + l * self.ues + k
    }
    pub fn u(&self, l: usize, k: usize) -> usize {
        self.u + l * self.ues + k
    }
    pub fn r(&self, l: usize, k: usize) -> usize {
        self.r + l * self.ues + k
    }
    pub fn m(&self, l: usize) -> usize {
        self.m + l
    }
    pub fn antennas(&self, l: usize) -> usize {
        self.antennas + l
    }
    pub fn pbar(&self, l: usize) -> usize {
        self.pbar + l
    }
    pub fn t(&self, i: usize) -> usize {
        self.t + i
    }
    pub fn demand(&self, l: usize) -> usize {
        self.demand + l
    }
    pub fn num_aps(&self) -> usize {
        self.aps
    }
}

/// The SINR cone of UE `k` scaled by 1/σ.
///
/// `coherent(l, t)` gives the variable and weight standing for z_{l,t};
/// `amplitude(l, t)` gives the variable of ρ̄_{l,t}. `None` marks a term that
/// is identically zero.
pub fn sinr_cone(
    inputs: &ProblemInputs,
    k: usize,
    coherent: impl Fn(usize, usize) -> Option<(usize, f64)>,
    amplitude: impl Fn(usize, usize) -> Option<usize>,
) -> SecondOrderCone {
    let access = &inputs.access;
    let (aps, ues) = (access.num_aps(), access.num_ues());
    let sigma = access.noise_power.sqrt();
    let target = inputs.sinr_targets[k].sqrt();
    let projection = |t: usize, scale: f64| {
        AffineExpr::linear((0..aps).filter_map(|l| {
            let g = access.gamma[(l, k)].sqrt() / sigma;
            coherent(l, t).map(|(var, w)| (var, scale * g * w))
        }))
    };
    let bound = projection(k, 1.0);
    let mut rows = Vec::new();
    for t in access.pilots.pilot_set(k) {
        if t != k {
            rows.push(projection(t, target));
        }
    }
    for l in 0..aps {
        let psi = access.residual_gain(l, k).sqrt() / sigma;
        if psi == 0.0 {
            continue;
        }
        for t in 0..ues {
            if let Some(var) = amplitude(l, t) {
                rows.push(AffineExpr::term(var, target * psi));
            }
        }
    }
    rows.push(AffineExpr::constant(target));
    SecondOrderCone { bound, rows }
}

/// bound − ‖rows‖ of every UE's SINR cone at integer antennas and powers
/// `rho` (W); non-negative exactly when the SINR target is met.
pub fn sinr_cone_slack(inputs: &ProblemInputs, antennas: &[usize], rho: &DMatrix<f64>) -> Vec<f64> {
    let ues = inputs.num_ues();
    let x: Vec<f64> = (0..inputs.num_aps() * ues)
        .map(|i| rho[(i / ues, i % ues)].max(0.0).sqrt())
        .collect();
    let excess = |l: usize| antennas[l].saturating_sub(inputs.strong_pilots(l)) as f64;
    (0..ues)
        .map(|k| {
            let cone = sinr_cone(
                inputs,
                k,
                |l, t| (antennas[l] > 0).then(|| (l * ues + t, excess(l).sqrt())),
                |l, t| Some(l * ues + t),
            );
            let norm = cone.rows.iter().map(|r| r.eval(&x).powi(2)).sum::<f64>().sqrt();
            cone.bound.eval(&x) - norm
        })
        .collect()
}

/// Shift keeping the exponential-cone entries of order one.
fn rate_shift(inputs: &ProblemInputs, l: usize) -> f64 {
    0.5 * (inputs.zf_gain[l] * inputs.fronthaul_budget).ln_1p()
}

/// B·log2(1 + Λp̄) ≥ O·demand, i.e. exp(c·demand − x0) ≤ e^{−x0}(1 + Λp̄).
fn add_fronthaul_rate(prog: &mut ConicProgram, inputs: &ProblemInputs, l: usize, demand: usize, pbar: usize) {
    let c = inputs.split_rate * std::f64::consts::LN_2 / inputs.fronthaul_bandwidth;
    let shift = rate_shift(inputs, l);
    let scale = (-shift).exp();
    prog.add_exponential(
        AffineExpr::term(demand, c).offset(-shift),
        AffineExpr::constant(1.0),
        AffineExpr::term(pbar, scale * inputs.zf_gain[l]).offset(scale),
    );
}

fn add_fronthaul_budgets(
    prog: &mut ConicProgram,
    inputs: &ProblemInputs,
    pbar: impl Fn(usize) -> Option<usize>,
    t: impl Fn(usize) -> usize,
) {
    for members in &inputs.grouping.groups {
        let terms: Vec<(usize, f64)> = members.iter().filter_map(|&l| pbar(l).map(|p| (p, -1.0))).collect();
        if !terms.is_empty() {
            prog.add_nonnegative(AffineExpr::linear(terms).offset(inputs.fronthaul_budget));
        }
    }
    let groups = inputs.grouping.num_groups();
    prog.add_nonnegative(AffineExpr::linear((0..groups).map(|i| (t(i), -1.0))).offset(1.0));
}

/// Relaxed continuous sub-problem for the current hard binaries and v.
pub fn assemble_subproblem1(
    state: &BcdState,
    inputs: &ProblemInputs,
    variant: Variant,
) -> (ConicProgram, RelaxedLayout) {
    let access = &inputs.access;
    let (aps, ues) = (access.num_aps(), access.num_ues());
    let groups = inputs.grouping.num_groups();
    let pt = inputs.access_budget;
    let mut prog = ConicProgram::new();
    let layout = RelaxedLayout {
        aps,
        ues,
        rho: prog.add_vars(aps * ues, 0.0, pt.sqrt())[0],
        z: prog.add_vars(aps * ues, 0.0, f64::INFINITY)[0],
        u: prog.add_vars(aps * ues, 0.0, pt)[0],
        r: prog.add_vars(aps * ues, 0.0, 1.0)[0],
        m: prog.add_vars(aps, 0.0, 1.0)[0],
        antennas: prog.add_vars(aps, 0.0, f64::INFINITY)[0],
        pbar: prog.add_vars(aps, 0.0, inputs.fronthaul_budget)[0],
        t: prog.add_vars(groups, 0.0, 1.0)[0],
        demand: prog.add_vars(aps, 0.0, f64::INFINITY)[0],
    };
    let c = match variant {
        Variant::TxMin => inputs.coefficients.transmit_only(),
        _ => inputs.coefficients,
    };
    let lambda = state.lambda;

    for l in 0..aps {
        let excess_max = inputs.excess_antennas_max(l);
        prog.upper[layout.antennas(l)] = excess_max;
        let served: f64 = (0..ues).filter(|&k| state.r[(l, k)]).count() as f64;
        prog.add_linear_cost(layout.antennas(l), c.c1 + c.c4 * served);
        prog.add_linear_cost(layout.pbar(l), c.c5);
        prog.add_squared_distance(layout.m(l), f64::from(u8::from(state.m[l])), lambda[1]);
        match variant {
            Variant::TxMin => {
                prog.fix_var(layout.antennas(l), excess_max);
                prog.fix_var(layout.m(l), 1.0);
            }
            Variant::ApShutdown => {
                prog.add_equality(AffineExpr::var(layout.antennas(l)).plus(layout.m(l), -excess_max));
            }
            Variant::EndToEnd => {}
        }
        // m̃ ≤ M̃ ≤ m̃·M_ac
        prog.add_nonnegative(AffineExpr::var(layout.antennas(l)).plus(layout.m(l), -1.0));
        prog.add_nonnegative(AffineExpr::term(layout.m(l), inputs.max_antennas as f64).plus(layout.antennas(l), -1.0));
        // Σ r̃ ≤ m̃·K
        prog.add_nonnegative(
            AffineExpr::term(layout.m(l), ues as f64).plus_all((0..ues).map(|k| (layout.r(l, k), -1.0))),
        );
        // Σ ρ̄² ≤ P_t
        prog.add_second_order(
            AffineExpr::constant(pt.sqrt()),
            (0..ues).map(|k| AffineExpr::var(layout.rho(l, k))).collect(),
        );
        // demand ≥ Σ r̃² / t_i
        let group = inputs.grouping.group_of[l];
        prog.add_rotated(
            AffineExpr::var(layout.demand(l)),
            AffineExpr::var(layout.t(group)),
            (0..ues)
                .map(|k| AffineExpr::term(layout.r(l, k), std::f64::consts::SQRT_2))
                .collect(),
        );
        add_fronthaul_rate(&mut prog, inputs, l, layout.demand(l), layout.pbar(l));

        for k in 0..ues {
            let (rho, z, u, r) = (layout.rho(l, k), layout.z(l, k), layout.u(l, k), layout.r(l, k));
            // ρ̄ ≤ r̃·√P_t
            prog.add_nonnegative(AffineExpr::term(r, pt.sqrt()).plus(rho, -1.0));
            let v = state.v[(l, k)];
            prog.add_quadratic_cost(rho, rho, c.c0 + lambda[3]);
            prog.add_linear_cost(rho, -2.0 * lambda[3] * v);
            prog.cost_constant += lambda[3] * v * v;
            prog.add_squared_distance(u, v * v, lambda[2]);
            prog.add_squared_distance(r, f64::from(u8::from(state.r[(l, k)])), lambda[0]);
            // z² ≤ M̃·u
            prog.add_rotated(
                AffineExpr::var(layout.antennas(l)),
                AffineExpr::var(u),
                vec![AffineExpr::term(z, std::f64::consts::SQRT_2)],
            );
            // u ≤ r̃·P_t
            prog.add_nonnegative(AffineExpr::term(r, pt).plus(u, -1.0));
        }
    }
    add_fronthaul_budgets(&mut prog, inputs, |l| Some(layout.pbar(l)), |i| layout.t(i));
    for k in 0..ues {
        let cone = sinr_cone(
            inputs,
            k,
            |l, t| Some((layout.z(l, t), 1.0)),
            |l, t| Some(layout.rho(l, t)),
        );
        prog.second_order.push(cone);
    }
    (prog, layout)
}

/// Service decision for one AP–UE link in the fixed-integer program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Off,
    On,
    /// Relaxed: a weight w ∈ [0, 1] with ρ̄ ≤ w·√P_t and fronthaul load w².
    Free,
}

/// Variable indices of the fixed-integer program.
#[derive(Debug, Clone)]
pub struct FixedLayout {
    rho: DMatrix<Option<usize>>,
    weight: DMatrix<Option<usize>>,
    pbar: Vec<Option<usize>>,
    t: usize,
}

impl FixedLayout {
    pub fn rho(&self, l: usize, k: usize) -> Option<usize> {
        self.rho[(l, k)]
    }
    pub fn weight(&self, l: usize, k: usize) -> Option<usize> {
        self.weight[(l, k)]
    }
    pub fn pbar(&self, l: usize) -> Option<usize> {
        self.pbar[l]
    }
    pub fn t(&self, i: usize) -> usize {
        self.t + i
    }
}

/// Convex power program for fixed antenna counts and service pattern.
///
/// Minimizes c0·Σρ + c5·Σp̄ subject to the exact SINR, budget, fronthaul and
/// time-share constraints. Inactive APs (`antennas[l] == 0`) serve no one.
pub fn assemble_fixed(
    inputs: &ProblemInputs,
    antennas: &[usize],
    served: &DMatrix<bool>,
) -> (ConicProgram, FixedLayout) {
    let links = served.map(|s| if s { Link::On } else { Link::Off });
    assemble_links(inputs, antennas, &links, &inputs.coefficients, None)
}

/// Fixed-antenna program where some links may be relaxed.
///
/// A relaxed link costs (c3 + c4·M_l)·w, and an AP whose links are all
/// relaxed pays (c2 + c1·M_l)·a_l with a_l ≥ every w of the AP.
///
/// With `shares` the time shares are pinned and the fronthaul load is
/// n_l + Σw, otherwise they are free and the load is n_l + Σw².
pub fn assemble_links(
    inputs: &ProblemInputs,
    antennas: &[usize],
    links: &DMatrix<Link>,
    costs: &PowerCoefficients,
    shares: Option<&[f64]>,
) -> (ConicProgram, FixedLayout) {
    let access = &inputs.access;
    let (aps, ues) = (access.num_aps(), access.num_ues());
    let groups = inputs.grouping.num_groups();
    let pt = inputs.access_budget;
    let c = costs;
    let mut prog = ConicProgram::new();
    let mut rho = DMatrix::from_element(aps, ues, None);
    let mut weight = DMatrix::from_element(aps, ues, None);
    let mut pbar = vec![None; aps];
    for l in 0..aps {
        if antennas[l] == 0 {
            continue;
        }
        let m = antennas[l] as f64;
        for k in 0..ues {
            if links[(l, k)] == Link::Off {
                continue;
            }
            let var = prog.add_var(0.0, pt.sqrt());
            prog.add_quadratic_cost(var, var, c.c0);
            rho[(l, k)] = Some(var);
            if links[(l, k)] == Link::Free {
                let w = prog.add_var(0.0, 1.0);
                prog.add_linear_cost(w, c.c3 + c.c4 * m);
                prog.add_nonnegative(AffineExpr::term(w, pt.sqrt()).plus(var, -1.0));
                weight[(l, k)] = Some(w);
            }
        }
        let any_on = (0..ues).any(|k| links[(l, k)] == Link::On);
        let relaxed: Vec<usize> = (0..ues).filter_map(|k| weight[(l, k)]).collect();
        if !any_on && !relaxed.is_empty() && c.c2 + c.c1 * m > 0.0 {
            let a = prog.add_var(0.0, 1.0);
            prog.add_linear_cost(a, c.c2 + c.c1 * m);
            for &w in &relaxed {
                prog.add_nonnegative(AffineExpr::var(a).plus(w, -1.0));
            }
        }
        if (0..ues).any(|k| rho[(l, k)].is_some()) {
            let var = prog.add_var(0.0, inputs.fronthaul_budget);
            prog.add_linear_cost(var, c.c5);
            pbar[l] = Some(var);
        }
    }
    let t = prog
        .add_vars(groups, 0.0, 1.0)
        .first()
        .copied()
        .unwrap_or(prog.num_vars());
    if let Some(shares) = shares {
        for (i, &share) in shares.iter().enumerate() {
            prog.fix_var(t + i, share);
        }
    }
    let layout = FixedLayout { rho, weight, pbar, t };

    for l in 0..aps {
        let row: Vec<AffineExpr> = (0..ues).filter_map(|k| layout.rho(l, k)).map(AffineExpr::var).collect();
        if row.is_empty() {
            continue;
        }
        prog.add_second_order(AffineExpr::constant(pt.sqrt()), row);
        let Some(p) = layout.pbar(l) else { continue };
        // s_l·t_i ≥ load with s_l = B·log2(1 + Λp̄)/O
        let s = prog.add_var(0.0, f64::INFINITY);
        let group = inputs.grouping.group_of[l];
        let fixed_load = (0..ues).filter(|&k| links[(l, k)] == Link::On).count() as f64;
        if let Some(shares) = shares {
            let mut load = AffineExpr::term(s, shares[group]).offset(-fixed_load);
            for w in (0..ues).filter_map(|k| layout.weight(l, k)) {
                load = load.plus(w, -1.0);
            }
            prog.add_nonnegative(load);
            add_fronthaul_rate(&mut prog, inputs, l, s, p);
            continue;
        }
        let mut load = vec![AffineExpr::constant((2.0 * fixed_load).sqrt())];
        load.extend(
            (0..ues)
                .filter_map(|k| layout.weight(l, k))
                .map(|w| AffineExpr::term(w, std::f64::consts::SQRT_2)),
        );
        prog.add_rotated(AffineExpr::var(s), AffineExpr::var(layout.t(group)), load);
        add_fronthaul_rate(&mut prog, inputs, l, s, p);
    }
    add_fronthaul_budgets(&mut prog, inputs, |l| layout.pbar(l), |i| layout.t(i));
    let excess: Vec<f64> = (0..aps)
        .map(|l| {
            if antennas[l] == 0 {
                0.0
            } else {
                antennas[l].saturating_sub(access.ppzf.strong_pilots[l]) as f64
            }
        })
        .collect();
    for k in 0..ues {
        let cone = sinr_cone(
            inputs,
            k,
            |l, t| layout.rho(l, t).map(|var| (var, excess[l].sqrt())),
            |l, t| layout.rho(l, t),
        );
        prog.second_order.push(cone);
    }
    (prog, layout)
}
