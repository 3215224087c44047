use super::{NetworkSolution, ProblemInputs};
use crate::fronthaul::fronthaul_rate;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub name: String,
    /// Non-negative when satisfied.
    pub slack: f64,
    pub scale: f64,
}

impl ConstraintCheck {
    fn new(name: impl Into<String>, slack: f64, scale: f64) -> Self {
        Self {
            name: name.into(),
            slack,
            scale,
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.slack >= -tol * self.scale
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub tol: f64,
    pub checks: Vec<ConstraintCheck>,
    pub passed: bool,
}

impl AuditReport {
    pub fn violations(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.holds(self.tol))
    }
}

/// Re-evaluates every constraint of the original problem at `solution`.
pub fn audit_feasibility(solution: &NetworkSolution, inputs: &ProblemInputs, tol: f64) -> AuditReport {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    let mut checks = Vec::new();
    let indicator = |b: bool| if b { 0.0 } else { -1.0 };

    if solution.antennas.len() != aps
        || solution.rho.shape() != (aps, ues)
        || solution.fronthaul_power.len() != aps
        || solution.time_shares.len() != inputs.grouping.num_groups()
    {
        checks.push(ConstraintCheck::new("shape", -1.0, 1.0));
        return AuditReport {
            tol,
            checks,
            passed: false,
        };
    }

    match inputs.access.effective_sinr(&solution.antennas, &solution.rho) {
        Ok(sinr) => {
            for (k, (&s, &target)) in sinr.iter().zip(&inputs.sinr_targets).enumerate() {
                checks.push(ConstraintCheck::new(format!("sinr[{k}]"), s - target, target));
            }
        }
        Err(e) => checks.push(ConstraintCheck::new(format!("sinr: {e}"), -1.0, 1.0)),
    }

    for l in 0..aps {
        let m = solution.antennas[l];
        let tau = inputs.strong_pilots(l);
        let valid = m == 0 || (tau + 1..=inputs.max_antennas).contains(&m);
        checks.push(ConstraintCheck::new(format!("antennas[{l}]"), indicator(valid), 1.0));
        checks.push(ConstraintCheck::new(
            format!("activation[{l}]"),
            indicator(solution.active[l] == (m > 0)),
            1.0,
        ));

        let row_power: f64 = solution.rho.row(l).sum();
        checks.push(ConstraintCheck::new(
            format!("access_power[{l}]"),
            inputs.access_budget - row_power,
            inputs.access_budget,
        ));
        let mut links = 0usize;
        for k in 0..ues {
            let rho = solution.rho[(l, k)];
            if rho > 0.0 {
                links += 1;
            }
            let consistent = rho >= 0.0 && (rho == 0.0 || (solution.served[(l, k)] && m > 0));
            checks.push(ConstraintCheck::new(
                format!("service[{l},{k}]"),
                indicator(consistent),
                1.0,
            ));
        }

        let p = solution.fronthaul_power[l];
        checks.push(ConstraintCheck::new(
            format!("fronthaul_power_sign[{l}]"),
            p,
            inputs.fronthaul_budget,
        ));
        let share = solution.time_shares[inputs.grouping.group_of[l]];
        let need = inputs.split_rate * links as f64;
        let rate = fronthaul_rate(
            inputs.zf_gain[l],
            p.max(0.0),
            share.max(0.0),
            inputs.fronthaul_bandwidth,
        );
        checks.push(ConstraintCheck::new(
            format!("fronthaul_rate[{l}]"),
            rate - need,
            need.max(inputs.split_rate),
        ));
    }

    for (i, members) in inputs.grouping.groups.iter().enumerate() {
        let used: f64 = members.iter().map(|&l| solution.fronthaul_power[l]).sum();
        checks.push(ConstraintCheck::new(
            format!("fronthaul_budget[{i}]"),
            inputs.fronthaul_budget - used,
            inputs.fronthaul_budget,
        ));
    }
    for (i, &t) in solution.time_shares.iter().enumerate() {
        checks.push(ConstraintCheck::new(format!("time_share_sign[{i}]"), t, 1.0));
    }
    let total: f64 = solution.time_shares.iter().sum();
    checks.push(ConstraintCheck::new("tdma", 1.0 - total, 1.0));

    let passed = checks.iter().all(|c| c.holds(tol));
    AuditReport { tol, checks, passed }
}
