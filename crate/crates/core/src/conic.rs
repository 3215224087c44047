//! Convex conic programs and their solution.
//!
//! A [`ConicProgram`] is a quadratic-plus-linear objective over linear
//! equalities and inequalities, second-order cones, rotated second-order
//! cones and exponential cones. [`solve`] hands it to an interior-point
//! solver (Clarabel); [`ConicProgram::max_violation`] re-checks any point by
//! direct evaluation without touching solver internals.
//!
//! # Text dump
//!
//! [`ConicProgram::to_standard_form_text`] writes the assembled program in
//! the standard form
//!
//! ```text
//! minimize    0.5 x'Px + q'x + c
//! subject to  A x + s = b,  s in K = K_1 x ... x K_m
//! ```
//!
//! one record per line:
//!
//! ```text
//! vars <n>
//! rows <m>
//! constant <c>
//! q <col> <value>
//! P <row> <col> <value>        upper triangle only
//! cone zero <dim> | cone nonneg <dim> | cone soc <dim> | cone exp 3
//! A <row> <col> <value>
//! b <row> <value>
//! ```
//!
//! Cones appear in row order. A `soc` block of dimension d holds (t, w) with
//! ‖w‖ ≤ t; an `exp` block holds (x, y, z) with y·exp(x/y) ≤ z. Indices are
//! zero-based; values use Rust's shortest round-trip float formatting.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

/// Σ aᵢxᵢ + c over program variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn var(index: usize) -> Self {
        Self::term(index, 1.0)
    }

    pub fn term(index: usize, coeff: f64) -> Self {
        Self {
            terms: vec![(index, coeff)],
            constant: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn linear(terms: impl IntoIterator<Item = (usize, f64)>) -> Self {
        Self {
            terms: terms.into_iter().collect(),
            constant: 0.0,
        }
    }

    pub fn plus(mut self, index: usize, coeff: f64) -> Self {
        self.terms.push((index, coeff));
        self
    }

    pub fn plus_all(mut self, terms: impl IntoIterator<Item = (usize, f64)>) -> Self {
        self.terms.extend(terms);
        self
    }

    pub fn offset(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self.constant *= factor;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + self.constant
    }

    /// Magnitude used to normalize residuals of this expression.
    fn scale(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| (a * x[i]).abs()).sum::<f64>() + self.constant.abs()
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

/// ‖rows‖₂ ≤ bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderCone {
    pub bound: AffineExpr,
    pub rows: Vec<AffineExpr>,
}

/// 2·u·v ≥ ‖rows‖², u ≥ 0, v ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedCone {
    pub u: AffineExpr,
    pub v: AffineExpr,
    pub rows: Vec<AffineExpr>,
}

/// y·exp(x/y) ≤ z, y > 0 (closure).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpCone {
    pub x: AffineExpr,
    pub y: AffineExpr,
    pub z: AffineExpr,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub linear_cost: Vec<f64>,
    /// (i, j, a) adds a·xᵢ·xⱼ to the objective; the total must be convex.
    pub quadratic_cost: Vec<(usize, usize, f64)>,
    pub cost_constant: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// e(x) = 0
    pub equalities: Vec<AffineExpr>,
    /// e(x) ≥ 0
    pub inequalities: Vec<AffineExpr>,
    pub second_order: Vec<SecondOrderCone>,
    pub rotated: Vec<RotatedCone>,
    pub exponential: Vec<ExpCone>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.linear_cost.len()
    }

    /// Declares a variable with box bounds (use infinities for none).
    pub fn add_var(&mut self, lower: f64, upper: f64) -> usize {
        self.linear_cost.push(0.0);
        self.lower.push(lower);
        self.upper.push(upper);
        self.linear_cost.len() - 1
    }

    pub fn add_vars(&mut self, count: usize, lower: f64, upper: f64) -> Vec<usize> {
        (0..count).map(|_| self.add_var(lower, upper)).collect()
    }

    pub fn fix_var(&mut self, index: usize, value: f64) {
        self.lower[index] = value;
        self.upper[index] = value;
    }

    pub fn add_linear_cost(&mut self, index: usize, coeff: f64) {
        self.linear_cost[index] += coeff;
    }

    pub fn add_quadratic_cost(&mut self, i: usize, j: usize, coeff: f64) {
        self.quadratic_cost.push((i, j, coeff));
    }

    /// Adds weight·(xᵢ − target)² to the objective.
    pub fn add_squared_distance(&mut self, index: usize, target: f64, weight: f64) {
        self.add_quadratic_cost(index, index, weight);
        self.add_linear_cost(index, -2.0 * weight * target);
        self.cost_constant += weight * target * target;
    }

    pub fn add_equality(&mut self, expr: AffineExpr) {
        self.equalities.push(expr);
    }

    /// expr ≥ 0.
    pub fn add_nonnegative(&mut self, expr: AffineExpr) {
        self.inequalities.push(expr);
    }

    pub fn add_second_order(&mut self, bound: AffineExpr, rows: Vec<AffineExpr>) {
        self.second_order.push(SecondOrderCone { bound, rows });
    }

    pub fn add_rotated(&mut self, u: AffineExpr, v: AffineExpr, rows: Vec<AffineExpr>) {
        self.rotated.push(RotatedCone { u, v, rows });
    }

    pub fn add_exponential(&mut self, x: AffineExpr, y: AffineExpr, z: AffineExpr) {
        self.exponential.push(ExpCone { x, y, z });
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear_cost.iter().zip(x).map(|(c, v)| c * v).sum();
        let quad: f64 = self.quadratic_cost.iter().map(|&(i, j, a)| a * x[i] * x[j]).sum();
        lin + quad + self.cost_constant
    }

    /// Checks that every expression references declared variables.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.num_vars();
        let mut exprs: Vec<&AffineExpr> = Vec::new();
        exprs.extend(&self.equalities);
        exprs.extend(&self.inequalities);
        for c in &self.second_order {
            exprs.push(&c.bound);
            exprs.extend(&c.rows);
        }
        for c in &self.rotated {
            exprs.push(&c.u);
            exprs.push(&c.v);
            exprs.extend(&c.rows);
        }
        for c in &self.exponential {
            exprs.extend([&c.x, &c.y, &c.z]);
        }
        if exprs.iter().filter_map(|e| e.max_index()).any(|i| i >= n) {
            return Err(format!("constraint references a variable beyond {n}"));
        }
        if self.quadratic_cost.iter().any(|&(i, j, _)| i >= n || j >= n) {
            return Err(format!("quadratic cost references a variable beyond {n}"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err("bounds length differs from variable count".into());
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| l > u || l.is_nan() || u.is_nan())
        {
            return Err("a lower bound exceeds its upper bound".into());
        }
        Ok(())
    }

    /// Largest normalized constraint violation at `x`, by direct evaluation.
    ///
    /// Each violation is divided by 1 + the magnitude of the terms involved.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut note = |violation: f64, scale: f64| {
            worst = worst.max(violation.max(0.0) / (1.0 + scale));
        };
        for (i, &v) in x.iter().enumerate() {
            note(self.lower[i] - v, self.lower[i].abs().min(v.abs()));
            note(v - self.upper[i], self.upper[i].abs().min(v.abs()));
        }
        for e in &self.equalities {
            note(e.eval(x).abs(), e.scale(x));
        }
        for e in &self.inequalities {
            note(-e.eval(x), e.scale(x));
        }
        for c in &self.second_order {
            let norm = c.rows.iter().map(|r| r.eval(x).powi(2)).sum::<f64>().sqrt();
            note(norm - c.bound.eval(x), c.bound.scale(x) + norm);
        }
        for c in &self.rotated {
            let (u, v) = (c.u.eval(x), c.v.eval(x));
            let sq: f64 = c.rows.iter().map(|r| r.eval(x).powi(2)).sum();
            note(-u, c.u.scale(x));
            note(-v, c.v.scale(x));
            // compare as a norm so the residual has the units of the rows
            let lhs = sq.sqrt();
            let rhs = (2.0 * u.max(0.0) * v.max(0.0)).sqrt();
            note(lhs - rhs, lhs + rhs);
        }
        for c in &self.exponential {
            let (ex, ey, ez) = (c.x.eval(x), c.y.eval(x), c.z.eval(x));
            note(-ey, c.y.scale(x));
            note(-ez, c.z.scale(x));
            // y·exp(x/y) ≤ z  ⇔  x ≤ y·ln(z/y) for y, z > 0
            if ey > 0.0 && ez > 0.0 {
                let rhs = ey * (ez / ey).ln();
                note(ex - rhs, c.x.scale(x) + rhs.abs());
            } else if ey <= 0.0 {
                // closure at y = 0: x ≤ 0, z ≥ 0
                note(ex, c.x.scale(x));
            } else {
                note(1.0, 0.0);
            }
        }
        worst
    }

    fn standard_form(&self) -> StandardForm {
        let n = self.num_vars();
        let mut sf = StandardForm {
            n,
            ..StandardForm::default()
        };
        for e in &self.equalities {
            sf.push_row(e);
        }
        if !self.equalities.is_empty() {
            sf.cones.push(ConeKind::Zero(self.equalities.len()));
        }
        let mut nonneg = 0;
        for (i, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo == hi {
                sf.push_row(&AffineExpr::var(i).offset(-lo));
                sf.cones.push(ConeKind::Zero(1));
                continue;
            }
            if lo.is_finite() {
                sf.push_row(&AffineExpr::var(i).offset(-lo));
                nonneg += 1;
            }
            if hi.is_finite() {
                sf.push_row(&AffineExpr::term(i, -1.0).offset(hi));
                nonneg += 1;
            }
            if nonneg > 0 {
                sf.cones.push(ConeKind::Nonneg(nonneg));
                nonneg = 0;
            }
        }
        for e in &self.inequalities {
            sf.push_row(e);
        }
        if !self.inequalities.is_empty() {
            sf.cones.push(ConeKind::Nonneg(self.inequalities.len()));
        }
        for c in &self.second_order {
            sf.push_row(&c.bound);
            for r in &c.rows {
                sf.push_row(r);
            }
            sf.cones.push(ConeKind::Soc(c.rows.len() + 1));
        }
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for c in &self.rotated {
            // 2uv ≥ ‖w‖²  ⇔  ‖(w, (u − v)/√2)‖ ≤ (u + v)/√2
            let mut sum = c.u.clone();
            sum.terms.extend(c.v.terms.iter().copied());
            sum.constant += c.v.constant;
            let mut diff = c.u.clone();
            diff.terms.extend(c.v.terms.iter().map(|&(i, a)| (i, -a)));
            diff.constant -= c.v.constant;
            sf.push_row(&sum.scaled(half));
            for r in &c.rows {
                sf.push_row(r);
            }
            sf.push_row(&diff.scaled(half));
            sf.cones.push(ConeKind::Soc(c.rows.len() + 2));
        }
        for c in &self.exponential {
            sf.push_row(&c.x);
            sf.push_row(&c.y);
            sf.push_row(&c.z);
            sf.cones.push(ConeKind::Exp);
        }

        // objective: ½xᵀPx with P upper triangular
        let mut p_entries: Vec<(usize, usize, f64)> = Vec::new();
        for &(i, j, a) in &self.quadratic_cost {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            let value = if r == c { 2.0 * a } else { a };
            p_entries.push((r, c, value));
        }
        p_entries.sort_by_key(|&(r, c, _)| (c, r));
        let mut merged: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in p_entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        sf.p = merged;
        sf.q = self.linear_cost.clone();
        sf.constant = self.cost_constant;
        sf
    }

    /// Plain-text dump of the standard form (format in the module docs).
    pub fn to_standard_form_text(&self) -> String {
        let sf = self.standard_form();
        let mut out = String::new();
        let _ = writeln!(out, "vars {}", sf.n);
        let _ = writeln!(out, "rows {}", sf.b.len());
        let _ = writeln!(out, "constant {:?}", sf.constant);
        for (i, q) in sf.q.iter().enumerate().filter(|(_, q)| **q != 0.0) {
            let _ = writeln!(out, "q {i} {q:?}");
        }
        for (r, c, v) in &sf.p {
            let _ = writeln!(out, "P {r} {c} {v:?}");
        }
        for cone in &sf.cones {
            let _ = match cone {
                ConeKind::Zero(d) => writeln!(out, "cone zero {d}"),
                ConeKind::Nonneg(d) => writeln!(out, "cone nonneg {d}"),
                ConeKind::Soc(d) => writeln!(out, "cone soc {d}"),
                ConeKind::Exp => writeln!(out, "cone exp 3"),
            };
        }
        for (r, c, v) in &sf.a {
            let _ = writeln!(out, "A {r} {c} {v:?}");
        }
        for (r, v) in sf.b.iter().enumerate() {
            let _ = writeln!(out, "b {r} {v:?}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ConeKind {
    Zero(usize),
    Nonneg(usize),
    Soc(usize),
    Exp,
}

/// A x + s = b, s ∈ K, rows appended in cone order.
#[derive(Debug, Default)]
struct StandardForm {
    n: usize,
    p: Vec<(usize, usize, f64)>,
    q: Vec<f64>,
    constant: f64,
    a: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<ConeKind>,
}

impl StandardForm {
    /// Appends the row s = expr(x), i.e. A = −coeffs, b = constant.
    fn push_row(&mut self, expr: &AffineExpr) {
        let row = self.b.len();
        for &(i, a) in &expr.terms {
            if a != 0.0 {
                self.a.push((row, i, -a));
            }
        }
        self.b.push(expr.constant);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterationLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::Unbounded => "unbounded",
            Self::NumericalFailure => "numerical-failure",
            Self::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest normalized violation found by [`ConicProgram::max_violation`].
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: u32,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves `program` to relative accuracy `options.tolerance`.
pub fn solve(program: &ConicProgram, options: &SolveOptions) -> SolveResult {
    let failed = |status| SolveResult {
        status,
        x: vec![f64::NAN; program.num_vars()],
        objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
        iterations: 0,
    };
    if program.validate().is_err() {
        return failed(SolveStatus::NumericalFailure);
    }
    let sf = program.standard_form();
    let m = sf.b.len();
    let n = sf.n;
    let (pi, pj, pv) = unzip3(&sf.p);
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let (ai, aj, av) = unzip3(&sf.a);
    let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);
    let cones: Vec<SupportedConeT<f64>> = sf
        .cones
        .iter()
        .map(|c| match *c {
            ConeKind::Zero(d) => SupportedConeT::ZeroConeT(d),
            ConeKind::Nonneg(d) => SupportedConeT::NonnegativeConeT(d),
            ConeKind::Soc(d) => SupportedConeT::SecondOrderConeT(d),
            ConeKind::Exp => SupportedConeT::ExponentialConeT(),
        })
        .collect();
    let tol = options.tolerance;
    let settings = DefaultSettings {
        verbose: false,
        max_iter: options.max_iterations,
        tol_gap_abs: tol,
        tol_gap_rel: tol,
        tol_feas: tol,
        ..DefaultSettings::default()
    };
    let Ok(mut solver) = DefaultSolver::new(&p, &sf.q, &a, &sf.b, &cones, settings) else {
        return failed(SolveStatus::NumericalFailure);
    };
    solver.solve();
    let status = match solver.solution.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
        _ => SolveStatus::NumericalFailure,
    };
    let x = solver.solution.x.clone();
    let (objective, primal_residual) = if x.iter().all(|v| v.is_finite()) {
        (program.objective(&x), program.max_violation(&x))
    } else {
        (f64::NAN, f64::INFINITY)
    };
    SolveResult {
        status,
        x,
        objective,
        primal_residual,
        dual_residual: solver.info.res_dual,
        gap: solver.info.gap_rel,
        iterations: solver.solution.iterations,
    }
}

fn unzip3(entries: &[(usize, usize, f64)]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut i = Vec::with_capacity(entries.len());
    let mut j = Vec::with_capacity(entries.len());
    let mut v = Vec::with_capacity(entries.len());
    for &(a, b, c) in entries {
        i.push(a);
        j.push(b);
        v.push(c);
    }
    (i, j, v)
}
