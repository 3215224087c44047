//! End-to-end power minimization: problem assembly, penalty block-coordinate
//! descent over the relaxed problem, integer post-processing, the two
//! baselines and an independent feasibility auditor.

mod assign;
mod audit;
mod bcd;
pub mod program;
pub mod updates;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::access::AccessState;
use crate::conic::{SolveOptions, SolveStatus};
use crate::fronthaul::{plan_fronthaul, ApGrouping, FronthaulError, FronthaulPlan};
use crate::power::{coefficients, PowerCoefficients, PowerError, TotalPower};
use crate::scenario::{Deployment, ScenarioConfig};

pub use assign::{assign_service, group_time, single_link_sinr};
pub use audit::{audit_feasibility, AuditReport, ConstraintCheck};
pub use bcd::{
    baseline_ap_shutdown, baseline_txmin, dive_service, penalty_objective, postprocess_round, run_bcd, solve_e2e,
    solve_fixed, FixedSolution,
};
pub use updates::{update_activation, update_service, update_v};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("QoS targets unattainable with every AP active ({0})")]
    Infeasible(SolveStatus),
    #[error("all rounding options failed: {}", .0.iter().map(|(o, s)| format!("{o}: {s}")).collect::<Vec<_>>().join(", "))]
    Rounding(Vec<(String, SolveStatus)>),
    #[error("solver failure in {stage}: {status}")]
    Solver { stage: String, status: SolveStatus },
    #[error(transparent)]
    Fronthaul(#[from] FronthaulError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// Which problem the BCD machinery solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Per-antenna activation.
    EndToEnd,
    /// APs fully on or off.
    ApShutdown,
    /// Transmit power only, every AP on with all antennas.
    TxMin,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::EndToEnd, Variant::ApShutdown, Variant::TxMin];

    pub fn name(self) -> &'static str {
        match self {
            Self::EndToEnd => "e2e",
            Self::ApShutdown => "ap_shutdown",
            Self::TxMin => "txmin",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInputs {
    pub config: ScenarioConfig,
    pub access: AccessState,
    pub grouping: ApGrouping,
    pub zf_gain: Vec<f64>,
    pub coefficients: PowerCoefficients,
    /// P_t, W.
    pub access_budget: f64,
    /// P_f, W.
    pub fronthaul_budget: f64,
    pub sinr_targets: Vec<f64>,
    /// O_7.2, bit/s per served UE.
    pub split_rate: f64,
    pub fronthaul_bandwidth: f64,
    /// M_ac.
    pub max_antennas: usize,
    /// τ_d = τ_c − τ_p.
    pub data_symbols: usize,
}

impl ProblemInputs {
    pub fn new(config: &ScenarioConfig, access: AccessState, plan: &FronthaulPlan) -> Result<Self, OptimizerError> {
        let aps = access.num_aps();
        if plan.zf_gain.len() != aps || plan.grouping.group_of.len() != aps {
            return Err(OptimizerError::MissingInput(format!(
                "fronthaul plan covers {} APs, access state {aps}",
                plan.zf_gain.len()
            )));
        }
        if plan.zf_gain.iter().any(|&g| !(g > 0.0)) {
            return Err(OptimizerError::MissingInput("non-positive ZF gain".into()));
        }
        let sinr_targets = config.sinr_targets();
        if sinr_targets.len() != access.num_ues() {
            return Err(OptimizerError::MissingInput(format!(
                "{} SINR targets for {} UEs",
                sinr_targets.len(),
                access.num_ues()
            )));
        }
        Ok(Self {
            config: config.clone(),
            grouping: plan.grouping.clone(),
            zf_gain: plan.zf_gain.clone(),
            coefficients: coefficients(config),
            access_budget: config.radio.access_power_budget_w,
            fronthaul_budget: config.radio.fronthaul_power_budget_w,
            sinr_targets,
            split_rate: config.split_rate_per_ue(),
            fronthaul_bandwidth: config.radio.fronthaul_bandwidth_hz,
            max_antennas: config.network.access_antennas,
            data_symbols: config.frame.data_symbols(),
            access,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.access.num_aps()
    }

    pub fn num_ues(&self) -> usize {
        self.access.num_ues()
    }

    /// τ_S,l: distinct pilots zero-forced at AP `l`.
    pub fn strong_pilots(&self, l: usize) -> usize {
        self.access.ppzf.strong_pilots[l]
    }

    /// Upper bound of M̃_l = M_l − τ_S,l.
    pub fn excess_antennas_max(&self, l: usize) -> f64 {
        (self.max_antennas - self.strong_pilots(l)) as f64
    }
}

/// Builds access statistics, the fronthaul plan and the coefficients.
pub fn build_problem(config: &ScenarioConfig, deployment: &Deployment) -> Result<ProblemInputs, OptimizerError> {
    let access = AccessState::build(deployment, config);
    let plan = plan_fronthaul(deployment, config)?;
    ProblemInputs::new(config, access, &plan)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcdOptions {
    /// λ1..λ4; `None` derives them from the power coefficients.
    pub lambda: Option<[f64; 4]>,
    pub ramp: f64,
    /// Penalties stop growing at this multiple of their initial value.
    pub ramp_cap: f64,
    pub max_iterations: usize,
    pub rel_tol: f64,
    /// Seed of the random v start.
    pub seed: u64,
    pub solver: SolveOptions,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            ramp: 2.0,
            ramp_cap: 1e4,
            max_iterations: 50,
            rel_tol: 1e-4,
            seed: 0,
            solver: SolveOptions::default(),
        }
    }
}

impl BcdOptions {
    pub fn initial_lambda(&self, inputs: &ProblemInputs) -> [f64; 4] {
        self.lambda_for(&inputs.coefficients, inputs.max_antennas)
    }

    pub fn lambda_for(&self, c: &PowerCoefficients, max_antennas: usize) -> [f64; 4] {
        self.lambda.unwrap_or_else(|| {
            let binary = 10.0 * c.c2.max(c.c3 + c.c4 * max_antennas as f64);
            [binary, binary, 1.0, 1.0]
        })
    }
}

/// Iterate of the penalty BCD.
#[derive(Debug, Clone, PartialEq)]
pub struct BcdState {
    /// M̃_l.
    pub antennas: Vec<f64>,
    /// ρ̄_{l,k}, √W.
    pub rho_bar: DMatrix<f64>,
    pub fronthaul_power: Vec<f64>,
    pub time_shares: Vec<f64>,
    pub z: DMatrix<f64>,
    /// r̃_{l,k}.
    pub r_relaxed: DMatrix<f64>,
    /// m̃_l.
    pub m_relaxed: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub r: DMatrix<bool>,
    pub m: Vec<bool>,
    pub lambda: [f64; 4],
    pub iteration: usize,
    pub history: Vec<f64>,
    pub conic_solves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    pub bcd_iterations: usize,
    pub conic_solves: usize,
    pub status: SolveStatus,
    /// Rounding option that produced the solution: floor, round or ceil.
    pub rounding: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSolution {
    pub variant: Variant,
    /// M_l, 0 for inactive APs.
    pub antennas: Vec<usize>,
    /// ρ_{l,k}, W.
    pub rho: DMatrix<f64>,
    /// p̄_l, W.
    pub fronthaul_power: Vec<f64>,
    pub time_shares: Vec<f64>,
    pub served: DMatrix<bool>,
    pub active: Vec<bool>,
    pub power: TotalPower,
    pub audit: AuditReport,
    pub telemetry: Telemetry,
}

impl NetworkSolution {
    pub fn active_aps(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn total_antennas(&self) -> usize {
        self.antennas.iter().sum()
    }

    pub fn sinr(&self, inputs: &ProblemInputs) -> Vec<f64> {
        inputs
            .access
            .effective_sinr(&self.antennas, &self.rho)
            .unwrap_or_else(|_| vec![0.0; inputs.num_ues()])
    }
}
