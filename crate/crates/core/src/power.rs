//! Baseband compute load (GOPS) and end-to-end power consumption.
//!
//! The radio side (APs) runs filtering, DFT, resource mapping and precoding;
//! the cloud GPP runs modulation, coding and network functions for every AP.
//! Total power is available both as the sum of AP and cloud consumption and
//! in the expanded coefficient form used by the optimizer.

use log::warn;
use nalgebra::DMatrix;
use thiserror::Error;

use crate::scenario::{ScenarioConfig, REFERENCE_BANDWIDTH_HZ, REFERENCE_SE};

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("negative transmit power {power} W at AP {ap}")]
    NegativePower { ap: usize, power: f64 },
    #[error("AP {ap} is off but radiates {power} W")]
    PowerOnInactiveAp { ap: usize, power: f64 },
    #[error("coefficient form {coefficient} W disagrees with component form {component} W")]
    Inconsistent { coefficient: f64, component: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Bandwidth and SE of this setup relative to the GOPS reference setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRatios {
    pub bandwidth: f64,
    pub se: f64,
}

impl ReferenceRatios {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            bandwidth: config.radio.access_bandwidth_hz / REFERENCE_BANDWIDTH_HZ,
            se: config.target_se() / REFERENCE_SE,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ApGops {
    pub filter: f64,
    pub dft: f64,
    pub map: f64,
    pub precoding: f64,
    // cloud-side functions run on behalf of this AP
    pub modulation: f64,
    pub coding: f64,
    pub network: f64,
}

impl ApGops {
    pub fn ap_total(&self) -> f64 {
        self.filter + self.dft + self.map + self.precoding
    }

    pub fn cloud_total(&self) -> f64 {
        self.modulation + self.coding + self.network
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GopsBreakdown {
    pub per_ap: Vec<ApGops>,
}

impl GopsBreakdown {
    pub fn ap(&self, l: usize) -> f64 {
        self.per_ap[l].ap_total()
    }

    pub fn gpp(&self) -> f64 {
        self.per_ap.iter().map(ApGops::cloud_total).sum()
    }
}

/// GOPS per AP and per cloud function for antenna counts `antennas` and the
/// service matrix `served` (L×K, true when AP l serves UE k).
pub fn gops(
    antennas: &[usize],
    served: &DMatrix<bool>,
    config: &ScenarioConfig,
    ratios: ReferenceRatios,
) -> GopsBreakdown {
    let frame = &config.frame;
    let fs = frame.sampling_rate_hz;
    let ts = frame.symbol_duration_s;
    let n_dft = frame.dft_size as f64;
    let per_ap = antennas
        .iter()
        .enumerate()
        .map(|(l, &m)| {
            let m = m as f64;
            let users = served.row(l).iter().filter(|&&s| s).count() as f64;
            let active = if m > 0.0 { 1.0 } else { 0.0 };
            ApGops {
                filter: 40.0 * m * fs / 1e9,
                dft: 8.0 * m * n_dft * n_dft.log2() / (ts * 1e9),
                map: 1.3 * ratios.bandwidth * ratios.se.powf(1.5) * users,
                precoding: 8.0 * m * frame.data_symbols() as f64 * frame.used_subcarriers as f64
                    / (ts * 1e9 * frame.coherence_symbols as f64)
                    * users,
                modulation: 1.3 * ratios.bandwidth * m,
                coding: 5.2 * ratios.bandwidth * ratios.se * users,
                network: 8.0 * ratios.bandwidth * ratios.se * active,
            }
        })
        .collect();
    GopsBreakdown { per_ap }
}

/// Power drawn by one AP. A switched-off AP (no active antennas) draws nothing.
pub fn ap_power(antennas: usize, rho_row: &[f64], ap_gops: f64, config: &ScenarioConfig) -> Result<f64, PowerError> {
    let p = &config.power;
    if let Some(&power) = rho_row.iter().find(|&&r| r < 0.0) {
        return Err(PowerError::NegativePower { ap: 0, power });
    }
    let transmit: f64 = rho_row.iter().sum();
    if antennas == 0 {
        if transmit > 0.0 {
            return Err(PowerError::PowerOnInactiveAp { ap: 0, power: transmit });
        }
        return Ok(0.0);
    }
    if ap_gops > p.ap_capacity_gops {
        warn!("AP load {ap_gops:.1} GOPS exceeds capacity {} GOPS", p.ap_capacity_gops);
    }
    Ok(antennas as f64 * p.static_per_antenna_w
        + p.delta_tr * transmit
        + p.ap_proc_idle_w
        + p.ap_proc_slope_w * ap_gops / p.ap_capacity_gops)
}

/// Power drawn by the cloud: fixed, fronthaul transmit and cooled GPP load.
pub fn cloud_power(fronthaul_power: &[f64], gpp_gops: f64, config: &ScenarioConfig) -> f64 {
    let p = &config.power;
    if gpp_gops > p.gpp_capacity_gops {
        warn!(
            "GPP load {gpp_gops:.1} GOPS exceeds capacity {} GOPS",
            p.gpp_capacity_gops
        );
    }
    p.fixed_w
        + p.delta_tr * fronthaul_power.iter().sum::<f64>()
        + (p.comp_idle_w + p.gpp_proc_slope_w * gpp_gops / p.gpp_capacity_gops) / p.cooling_efficiency
}

/// Coefficients of the expanded total-power expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCoefficients {
    /// Per watt of access transmit power.
    pub c0: f64,
    /// Per active antenna.
    pub c1: f64,
    /// Per active AP.
    pub c2: f64,
    /// Per AP–UE service link.
    pub c3: f64,
    /// Per active antenna per served UE.
    pub c4: f64,
    /// Per watt of fronthaul transmit power.
    pub c5: f64,
    /// Load-independent part P_fixed + P_comp/σ_cool.
    pub fixed: f64,
}

pub fn coefficients(config: &ScenarioConfig) -> PowerCoefficients {
    coefficients_with(config, ReferenceRatios::from_config(config))
}

pub fn coefficients_with(config: &ScenarioConfig, ratios: ReferenceRatios) -> PowerCoefficients {
    let p = &config.power;
    let frame = &config.frame;
    let ts = frame.symbol_duration_s;
    let n_dft = frame.dft_size as f64;
    let gpp_slope = p.gpp_proc_slope_w / (p.gpp_capacity_gops * p.cooling_efficiency);
    let ap_slope = p.ap_proc_slope_w / p.ap_capacity_gops;
    let (w, se) = (ratios.bandwidth, ratios.se);
    PowerCoefficients {
        c0: p.delta_tr,
        c1: p.static_per_antenna_w
            + 1.3 * w * gpp_slope
            + ap_slope * (40.0 * frame.sampling_rate_hz / 1e9 + 8.0 * n_dft * n_dft.log2() / (ts * 1e9)),
        c2: gpp_slope * 8.0 * w * se + p.ap_proc_idle_w,
        c3: ap_slope * 1.3 * w * se.powf(1.5) + gpp_slope * 5.2 * w * se,
        c4: ap_slope * 8.0 * frame.data_symbols() as f64 * frame.used_subcarriers as f64
            / (ts * 1e9 * frame.coherence_symbols as f64),
        c5: p.delta_tr,
        fixed: p.fixed_w + p.comp_idle_w / p.cooling_efficiency,
    }
}

impl PowerCoefficients {
    /// Only the transmit-power terms c0 and c5 kept.
    pub fn transmit_only(&self) -> Self {
        Self {
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            c4: 0.0,
            ..*self
        }
    }

    /// Variable part of the expanded total power (fixed part excluded).
    pub fn variable_power(&self, antennas: &[usize], rho: &DMatrix<f64>, fronthaul_power: &[f64]) -> f64 {
        let mut total = self.c5 * fronthaul_power.iter().sum::<f64>();
        for (l, &m) in antennas.iter().enumerate() {
            let m = m as f64;
            let row = rho.row(l);
            let links = row.iter().filter(|&&r| r > 0.0).count() as f64;
            total += self.c0 * row.sum()
                + self.c1 * m
                + if m > 0.0 { self.c2 } else { 0.0 }
                + self.c3 * links
                + self.c4 * m * links;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalPower {
    /// Expanded coefficient form including the fixed part.
    pub coefficient_form: f64,
    /// Σ AP power + cloud power.
    pub component_form: f64,
    pub radio: f64,
    pub cloud: f64,
}

/// Total end-to-end power, evaluated both ways and cross-checked.
pub fn total_power(
    antennas: &[usize],
    rho: &DMatrix<f64>,
    fronthaul_power: &[f64],
    config: &ScenarioConfig,
) -> Result<TotalPower, PowerError> {
    let ratios = ReferenceRatios::from_config(config);
    total_power_with(antennas, rho, fronthaul_power, config, ratios)
}

pub fn total_power_with(
    antennas: &[usize],
    rho: &DMatrix<f64>,
    fronthaul_power: &[f64],
    config: &ScenarioConfig,
    ratios: ReferenceRatios,
) -> Result<TotalPower, PowerError> {
    if rho.nrows() != antennas.len() || fronthaul_power.len() != antennas.len() {
        return Err(PowerError::Shape(format!(
            "{} APs, {}x{} powers, {} fronthaul powers",
            antennas.len(),
            rho.nrows(),
            rho.ncols(),
            fronthaul_power.len()
        )));
    }
    let served = rho.map(|r| r > 0.0);
    let load = gops(antennas, &served, config, ratios);
    let mut radio = 0.0;
    for (l, &m) in antennas.iter().enumerate() {
        let row: Vec<f64> = rho.row(l).iter().copied().collect();
        radio += ap_power(m, &row, load.ap(l), config).map_err(|e| match e {
            PowerError::NegativePower { power, .. } => PowerError::NegativePower { ap: l, power },
            PowerError::PowerOnInactiveAp { power, .. } => PowerError::PowerOnInactiveAp { ap: l, power },
            other => other,
        })?;
    }
    let cloud = cloud_power(fronthaul_power, load.gpp(), config);
    let coeffs = coefficients_with(config, ratios);
    let coefficient_form = coeffs.fixed + coeffs.variable_power(antennas, rho, fronthaul_power);
    let component_form = radio + cloud;
    if (coefficient_form - component_form).abs() > 1e-12 * component_form.abs().max(1.0) {
        return Err(PowerError::Inconsistent {
            coefficient: coefficient_form,
            component: component_form,
        });
    }
    Ok(TotalPower {
        coefficient_form,
        component_form,
        radio,
        cloud,
    })
}
