//! Physical constants and reproducible deployments.
//!
//! A [`ScenarioConfig`] is read from a TOML file whose sections mirror the
//! struct layout (`[network]`, `[frame]`, `[radio]`, `[power]`, `[qos]`).
//! Every key except `network.num_ues` is optional and falls back to the
//! reference simulation parameters.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference SE (bit/s/Hz) and bandwidth (Hz) the GOPS table is calibrated on.
pub const REFERENCE_SE: f64 = 6.0;
pub const REFERENCE_BANDWIDTH_HZ: f64 = 20e6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "defaults::num_aps")]
    pub num_aps: usize,
    /// Number of UEs. There is no reference value; it must be given.
    pub num_ues: usize,
    #[serde(default = "defaults::access_antennas")]
    pub access_antennas: usize,
    #[serde(default = "defaults::fronthaul_antennas")]
    pub fronthaul_antennas: usize,
    #[serde(default = "defaults::cloud_antennas")]
    pub cloud_antennas: usize,
    #[serde(default = "defaults::cloud_rf_chains")]
    pub cloud_rf_chains: usize,
    #[serde(default = "defaults::area_side_m")]
    pub area_side_m: f64,
    /// Explicit AP coordinates; replaces the square grid when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_positions: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    pub coherence_symbols: usize,
    pub pilot_symbols: usize,
    pub used_subcarriers: usize,
    pub dft_size: usize,
    pub quantizer_bits: usize,
    pub symbol_duration_s: f64,
    pub sampling_rate_hz: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            coherence_symbols: 192,
            pilot_symbols: 8,
            used_subcarriers: 1024,
            dft_size: 2048,
            quantizer_bits: 12,
            symbol_duration_s: 71.4e-6,
            sampling_rate_hz: 30.72e6,
        }
    }
}

impl FrameConfig {
    /// Downlink data symbols per frame.
    pub fn data_symbols(&self) -> usize {
        self.coherence_symbols.saturating_sub(self.pilot_symbols)
    }

    /// Fraction of each frame spent on downlink data.
    pub fn prelog(&self) -> f64 {
        self.data_symbols() as f64 / self.coherence_symbols as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub access_bandwidth_hz: f64,
    pub fronthaul_bandwidth_hz: f64,
    pub access_carrier_hz: f64,
    pub fronthaul_carrier_hz: f64,
    pub access_power_budget_w: f64,
    pub fronthaul_power_budget_w: f64,
    pub pilot_power_w: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub access_noise_figure_db: f64,
    pub fronthaul_noise_figure_db: f64,
    pub path_loss_exponent: f64,
    /// Path loss at the 1 m reference distance, dB.
    pub path_loss_intercept_db: f64,
    /// Log-normal shadowing standard deviation; 0 disables shadowing.
    pub shadowing_std_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            access_bandwidth_hz: 20e6,
            fronthaul_bandwidth_hz: 100e6,
            access_carrier_hz: 2.5e9,
            fronthaul_carrier_hz: 28e9,
            access_power_budget_w: 1.0,
            fronthaul_power_budget_w: 5.0,
            pilot_power_w: 0.1,
            noise_psd_dbm_per_hz: -174.0,
            access_noise_figure_db: 7.0,
            fronthaul_noise_figure_db: 7.0,
            path_loss_exponent: 3.76,
            path_loss_intercept_db: -34.53,
            shadowing_std_db: 0.0,
        }
    }
}

impl RadioConfig {
    /// Receiver noise power over the access bandwidth, W.
    pub fn access_noise_power(&self) -> f64 {
        noise_power(
            self.noise_psd_dbm_per_hz,
            self.access_noise_figure_db,
            self.access_bandwidth_hz,
        )
    }

    /// Receiver noise power over the fronthaul bandwidth, W.
    pub fn fronthaul_noise_power(&self) -> f64 {
        noise_power(
            self.noise_psd_dbm_per_hz,
            self.fronthaul_noise_figure_db,
            self.fronthaul_bandwidth_hz,
        )
    }
}

fn noise_power(psd_dbm_per_hz: f64, noise_figure_db: f64, bandwidth_hz: f64) -> f64 {
    let dbm = psd_dbm_per_hz + noise_figure_db + 10.0 * bandwidth_hz.log10();
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConstants {
    pub static_per_antenna_w: f64,
    /// Slope of transmit-power-dependent consumption (inverse PA efficiency).
    pub delta_tr: f64,
    pub ap_proc_idle_w: f64,
    pub ap_proc_slope_w: f64,
    pub ap_capacity_gops: f64,
    pub gpp_proc_slope_w: f64,
    pub gpp_capacity_gops: f64,
    pub fixed_w: f64,
    pub comp_idle_w: f64,
    pub cooling_efficiency: f64,
}

impl Default for PowerConstants {
    fn default() -> Self {
        Self {
            static_per_antenna_w: 6.8,
            delta_tr: 4.0,
            ap_proc_idle_w: 20.8,
            ap_proc_slope_w: 74.0,
            ap_capacity_gops: 180.0,
            gpp_proc_slope_w: 74.0,
            gpp_capacity_gops: 180.0,
            fixed_w: 120.0,
            comp_idle_w: 20.8,
            cooling_efficiency: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QosConfig {
    /// Common SE target (bit/s/Hz) from which the SINR target is derived.
    pub target_se: f64,
    /// Per-UE SINR targets (linear). Overrides `target_se` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sinr_targets: Option<Vec<f64>>,
    /// Cumulative large-scale gain fraction covered by the strong UEs of an AP.
    pub strong_fraction: f64,
}

impl Default for QosConfig {
    fn default() -> Self {
        Self {
            target_se: 2.0,
            sinr_targets: None,
            strong_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub frame: FrameConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub power: PowerConstants,
    #[serde(default)]
    pub qos: QosConfig,
}

mod defaults {
    pub fn num_aps() -> usize {
        16
    }
    pub fn access_antennas() -> usize {
        16
    }
    pub fn fronthaul_antennas() -> usize {
        64
    }
    pub fn cloud_antennas() -> usize {
        128
    }
    pub fn cloud_rf_chains() -> usize {
        4
    }
    pub fn area_side_m() -> f64 {
        1000.0
    }
}

impl ScenarioConfig {
    /// Reference parameters with `num_ues` UEs.
    pub fn reference(num_ues: usize) -> Self {
        Self {
            network: NetworkConfig {
                num_aps: defaults::num_aps(),
                num_ues,
                access_antennas: defaults::access_antennas(),
                fronthaul_antennas: defaults::fronthaul_antennas(),
                cloud_antennas: defaults::cloud_antennas(),
                cloud_rf_chains: defaults::cloud_rf_chains(),
                area_side_m: defaults::area_side_m(),
                ap_positions: None,
            },
            frame: FrameConfig::default(),
            radio: RadioConfig::default(),
            power: PowerConstants::default(),
            qos: QosConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }

    pub fn num_aps(&self) -> usize {
        self.network
            .ap_positions
            .as_ref()
            .map_or(self.network.num_aps, Vec::len)
    }

    pub fn num_ues(&self) -> usize {
        self.network.num_ues
    }

    /// Number of fronthaul groups, one per `cloud_rf_chains` APs.
    pub fn num_groups(&self) -> usize {
        self.num_aps().div_ceil(self.network.cloud_rf_chains.max(1))
    }

    /// SINR target per UE (linear).
    pub fn sinr_targets(&self) -> Vec<f64> {
        match &self.qos.sinr_targets {
            Some(targets) => targets.clone(),
            None => {
                let sinr = 2f64.powf(self.qos.target_se / self.frame.prelog()) - 1.0;
                vec![sinr; self.num_ues()]
            }
        }
    }

    /// SE implied by the configured targets, averaged over UEs.
    pub fn target_se(&self) -> f64 {
        match &self.qos.sinr_targets {
            Some(targets) if !targets.is_empty() => {
                let prelog = self.frame.prelog();
                targets.iter().map(|s| prelog * (1.0 + s).log2()).sum::<f64>() / targets.len() as f64
            }
            _ => self.qos.target_se,
        }
    }

    /// Fronthaul bit rate one served UE requires from its AP (bit/s).
    pub fn split_rate_per_ue(&self) -> f64 {
        2.0 * self.frame.used_subcarriers as f64 * self.frame.quantizer_bits as f64 / self.frame.symbol_duration_s
    }
}

/// One violated invariant of a [`ScenarioConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lists every violated invariant; an empty list means the config is usable.
pub fn validate_config(config: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, msg: &str| {
        if !ok {
            out.push(Violation(msg.to_string()));
        }
    };
    let net = &config.network;
    check(config.num_aps() >= 1, "L >= 1");
    check(net.num_ues >= 1, "K >= 1");
    check(net.access_antennas >= 1, "M_ac >= 1");
    check(net.fronthaul_antennas >= 1, "M_frh >= 1");
    check(net.cloud_antennas >= 1, "M_c >= 1");
    check(net.cloud_rf_chains >= 1, "N_c >= 1");
    check(net.cloud_rf_chains <= net.cloud_antennas, "N_c <= M_c");
    check(net.area_side_m > 0.0, "area side > 0");
    if let Some(positions) = &net.ap_positions {
        let side = net.area_side_m;
        let inside = positions
            .iter()
            .all(|p| (0.0..=side).contains(&p[0]) && (0.0..=side).contains(&p[1]));
        check(inside, "AP positions inside the area");
    }

    let frame = &config.frame;
    check(frame.pilot_symbols >= 1, "tau_p >= 1");
    check(frame.pilot_symbols < frame.coherence_symbols, "tau_p < tau_c");
    check(frame.used_subcarriers >= 1, "N_used >= 1");
    check(frame.dft_size >= 2, "N_DFT >= 2");
    check(frame.quantizer_bits >= 1, "N_bits >= 1");
    check(frame.symbol_duration_s > 0.0, "T_s > 0");
    check(frame.sampling_rate_hz > 0.0, "f_s > 0");

    let radio = &config.radio;
    check(radio.access_bandwidth_hz > 0.0, "B_ac > 0");
    check(radio.fronthaul_bandwidth_hz > 0.0, "B_frh > 0");
    check(radio.access_carrier_hz > 0.0, "access carrier > 0");
    check(radio.fronthaul_carrier_hz > 0.0, "fronthaul carrier > 0");
    check(radio.access_power_budget_w > 0.0, "P_t > 0");
    check(radio.fronthaul_power_budget_w > 0.0, "P_f > 0");
    check(radio.pilot_power_w > 0.0, "pilot power > 0");
    check(radio.path_loss_exponent > 0.0, "path loss exponent > 0");
    check(radio.shadowing_std_db >= 0.0, "shadowing std >= 0");

    let p = &config.power;
    check(p.static_per_antenna_w > 0.0, "P_st > 0");
    check(p.delta_tr > 0.0, "delta_tr > 0");
    check(p.ap_proc_idle_w > 0.0, "P0_proc > 0");
    check(p.ap_proc_slope_w > 0.0, "delta_AP_proc > 0");
    check(p.ap_capacity_gops > 0.0, "C_AP_max > 0");
    check(p.gpp_proc_slope_w > 0.0, "delta_GPP_proc > 0");
    check(p.gpp_capacity_gops > 0.0, "C_GPP_max > 0");
    check(p.fixed_w > 0.0, "P_fixed > 0");
    check(p.comp_idle_w > 0.0, "P_comp > 0");
    check(
        p.cooling_efficiency > 0.0 && p.cooling_efficiency <= 1.0,
        "σ_cool ∈ (0,1]",
    );

    let qos = &config.qos;
    match &qos.sinr_targets {
        Some(targets) => {
            check(targets.len() == net.num_ues, "one SINR target per UE");
            check(targets.iter().all(|&s| s > 0.0), "SINR targets > 0");
        }
        None => check(qos.target_se > 0.0, "target SE > 0"),
    }
    check(qos.strong_fraction > 0.0 && qos.strong_fraction <= 1.0, "ν ∈ (0,1]");
    out
}

/// AP, UE and cloud coordinates for one random drop.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub cloud_position: [f64; 2],
    pub seed: u64,
}

/// Grid APs (or the configured explicit list), uniform UEs, centered cloud.
pub fn build_deployment(config: &ScenarioConfig, seed: u64) -> Result<Deployment, ScenarioError> {
    let side = config.network.area_side_m;
    let ap_positions = match &config.network.ap_positions {
        Some(list) => list.clone(),
        None => grid_positions(config.network.num_aps, side)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ue_positions = (0..config.num_ues())
        .map(|_| [rng.gen_range(0.0..side), rng.gen_range(0.0..side)])
        .collect();
    Ok(Deployment {
        ap_positions,
        ue_positions,
        cloud_position: [side / 2.0, side / 2.0],
        seed,
    })
}

fn grid_positions(num_aps: usize, side: f64) -> Result<Vec<[f64; 2]>, ScenarioError> {
    let per_row = (num_aps as f64).sqrt().round() as usize;
    if num_aps == 0 || per_row * per_row != num_aps {
        return Err(ScenarioError::Config(format!(
            "grid AP layout needs L to be a perfect square, got L = {num_aps}"
        )));
    }
    let spacing = side / per_row as f64;
    let mut out = Vec::with_capacity(num_aps);
    for row in 0..per_row {
        for col in 0..per_row {
            out.push([(col as f64 + 0.5) * spacing, (row as f64 + 0.5) * spacing]);
        }
    }
    Ok(out)
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
