//! Access-channel statistics and the closed-form effective SINR.
//!
//! Gains are large-scale only; small-scale Rayleigh fading enters through the
//! closed-form SINR of protective partial zero-forcing (PPZF), not through
//! channel realizations.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::scenario::{distance, Deployment, ScenarioConfig};

#[derive(Debug, Error, PartialEq)]
pub enum AccessError {
    #[error("AP {ap} is inactive but transmits {power} W to UE {ue}")]
    PowerOnInactiveAp { ap: usize, ue: usize, power: f64 },
    #[error("negative transmit power {power} W from AP {ap} to UE {ue}")]
    NegativePower { ap: usize, ue: usize, power: f64 },
    #[error("AP {ap} has {antennas} active antennas, needs at least {min} (or 0)")]
    TooFewAntennas { ap: usize, antennas: usize, min: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Log-distance path loss in dB at `distance_m`, clamped to the 1 m reference.
pub fn path_loss_db(distance_m: f64, intercept_db: f64, exponent: f64) -> f64 {
    intercept_db - 10.0 * exponent * distance_m.max(1.0).log10()
}

/// L×K large-scale fading gains (linear).
pub fn compute_large_scale(deployment: &Deployment, config: &ScenarioConfig) -> DMatrix<f64> {
    let radio = &config.radio;
    let num_aps = deployment.ap_positions.len();
    let num_ues = deployment.ue_positions.len();
    let mut shadowing = (radio.shadowing_std_db > 0.0).then(|| {
        let rng = ChaCha8Rng::seed_from_u64(deployment.seed ^ 0x5a5a_d0d0_1234_abcd);
        let normal = Normal::new(0.0, radio.shadowing_std_db).expect("std checked positive");
        (rng, normal)
    });
    let mut beta = DMatrix::zeros(num_aps, num_ues);
    // column-major fill keeps the shadowing draw order fixed
    for k in 0..num_ues {
        for l in 0..num_aps {
            let d = distance(deployment.ap_positions[l], deployment.ue_positions[k]);
            let mut db = path_loss_db(d, radio.path_loss_intercept_db, radio.path_loss_exponent);
            if let Some((rng, normal)) = shadowing.as_mut() {
                db += normal.sample(rng);
            }
            beta[(l, k)] = 10f64.powf(db / 10.0);
        }
    }
    beta
}

/// Uplink pilot index per UE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotAssignment {
    pub pilot_of: Vec<usize>,
    pub num_pilots: usize,
}

impl PilotAssignment {
    /// UEs sharing UE `k`'s pilot, `k` included.
    pub fn pilot_set(&self, k: usize) -> Vec<usize> {
        let p = self.pilot_of[k];
        (0..self.pilot_of.len()).filter(|&t| self.pilot_of[t] == p).collect()
    }

    /// Whether `t` and `k` share a pilot (true for `t == k`).
    pub fn shares_pilot(&self, t: usize, k: usize) -> bool {
        self.pilot_of[t] == self.pilot_of[k]
    }
}

/// Balanced greedy pilot assignment.
///
/// UEs are visited by decreasing strongest-AP gain. Each takes, among the
/// least-used pilots, the one whose current users have the least similar
/// gain profile (cosine similarity of the β columns); ties go to the lowest
/// pilot index.
pub fn assign_pilots(beta: &DMatrix<f64>, num_pilots: usize) -> PilotAssignment {
    let num_ues = beta.ncols();
    let num_pilots = num_pilots.max(1);
    let strongest: Vec<f64> = (0..num_ues).map(|k| beta.column(k).max()).collect();
    let norms: Vec<f64> = (0..num_ues).map(|k| beta.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..num_ues).collect();
    order.sort_by(|&a, &b| strongest[b].total_cmp(&strongest[a]).then(a.cmp(&b)));

    let mut users: Vec<Vec<usize>> = vec![Vec::new(); num_pilots];
    let mut pilot_of = vec![0; num_ues];
    for &k in &order {
        let least = users.iter().map(Vec::len).min().unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        for (p, on_pilot) in users.iter().enumerate() {
            if on_pilot.len() != least {
                continue;
            }
            let contamination: f64 = on_pilot
                .iter()
                .map(|&t| beta.column(k).dot(&beta.column(t)) / (norms[k] * norms[t]))
                .sum();
            if best.is_none_or(|(_, c)| contamination < c) {
                best = Some((p, contamination));
            }
        }
        let (p, _) = best.expect("at least one pilot");
        users[p].push(k);
        pilot_of[k] = p;
    }
    PilotAssignment { pilot_of, num_pilots }
}

/// MMSE channel-estimate mean-square γ for every AP–UE pair.
pub fn estimate_quality(
    beta: &DMatrix<f64>,
    pilots: &PilotAssignment,
    pilot_power: f64,
    num_pilot_symbols: usize,
    noise_power: f64,
) -> DMatrix<f64> {
    let energy = num_pilot_symbols as f64 * pilot_power;
    let mut gamma = DMatrix::zeros(beta.nrows(), beta.ncols());
    for k in 0..beta.ncols() {
        let set = pilots.pilot_set(k);
        for l in 0..beta.nrows() {
            let received: f64 = set.iter().map(|&t| beta[(l, t)]).sum();
            gamma[(l, k)] = energy * beta[(l, k)].powi(2) / (energy * received + noise_power);
        }
    }
    gamma
}

/// Strong/weak split per AP for PPZF.
#[derive(Debug, Clone, PartialEq)]
pub struct PpzfClassification {
    /// `strong[(l, k)]` is true when UE `k` is zero-forced at AP `l`.
    pub strong: DMatrix<bool>,
    /// Distinct pilots among the strong UEs of each AP.
    pub strong_pilots: Vec<usize>,
}

/// Marks, per AP, the UEs covering a fraction `strong_fraction` of the AP's
/// total gain as strong. A UE bringing a new pilot is only admitted while
/// the distinct-pilot count stays below `access_antennas`.
pub fn classify_ppzf(
    beta: &DMatrix<f64>,
    pilots: &PilotAssignment,
    strong_fraction: f64,
    access_antennas: usize,
) -> PpzfClassification {
    let (num_aps, num_ues) = beta.shape();
    let max_pilots = access_antennas.saturating_sub(1).min(pilots.num_pilots);
    let mut strong = DMatrix::from_element(num_aps, num_ues, false);
    let mut strong_pilots = vec![0; num_aps];
    for l in 0..num_aps {
        let row = beta.row(l);
        let total: f64 = row.iter().sum();
        let mut order: Vec<usize> = (0..num_ues).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let mut used = vec![false; pilots.num_pilots];
        let mut covered = 0.0;
        for k in order {
            if covered >= strong_fraction * total {
                break;
            }
            let p = pilots.pilot_of[k];
            if !used[p] {
                if strong_pilots[l] == max_pilots {
                    break;
                }
                used[p] = true;
                strong_pilots[l] += 1;
            }
            strong[(l, k)] = true;
            covered += row[k];
        }
    }
    PpzfClassification { strong, strong_pilots }
}

/// Everything the SINR expression needs about the access channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessState {
    pub beta: DMatrix<f64>,
    pub pilots: PilotAssignment,
    pub gamma: DMatrix<f64>,
    pub ppzf: PpzfClassification,
    pub noise_power: f64,
}

impl AccessState {
    pub fn build(deployment: &Deployment, config: &ScenarioConfig) -> Self {
        let beta = compute_large_scale(deployment, config);
        let pilots = assign_pilots(&beta, config.frame.pilot_symbols);
        let noise_power = config.radio.access_noise_power();
        let gamma = estimate_quality(
            &beta,
            &pilots,
            config.radio.pilot_power_w,
            config.frame.pilot_symbols,
            noise_power,
        );
        let ppzf = classify_ppzf(
            &beta,
            &pilots,
            config.qos.strong_fraction,
            config.network.access_antennas,
        );
        Self {
            beta,
            pilots,
            gamma,
            ppzf,
            noise_power,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.beta.ncols()
    }

    /// β − δγ, the non-coherent interference gain.
    pub fn residual_gain(&self, l: usize, k: usize) -> f64 {
        let strong = if self.ppzf.strong[(l, k)] { 1.0 } else { 0.0 };
        (self.beta[(l, k)] - strong * self.gamma[(l, k)]).max(0.0)
    }

    /// Effective SINR for integer antenna counts `antennas` and powers `rho` (W).
    pub fn effective_sinr(&self, antennas: &[usize], rho: &DMatrix<f64>) -> Result<Vec<f64>, AccessError> {
        if antennas.len() != self.num_aps() || rho.shape() != self.beta.shape() {
            return Err(AccessError::Shape(format!(
                "expected {} antenna counts and a {}x{} power matrix",
                self.num_aps(),
                self.num_aps(),
                self.num_ues()
            )));
        }
        let mut excess = Vec::with_capacity(antennas.len());
        for (l, &m) in antennas.iter().enumerate() {
            let min = self.ppzf.strong_pilots[l] + 1;
            if m != 0 && m < min {
                return Err(AccessError::TooFewAntennas {
                    ap: l,
                    antennas: m,
                    min,
                });
            }
            for k in 0..self.num_ues() {
                let power = rho[(l, k)];
                if power < 0.0 {
                    return Err(AccessError::NegativePower { ap: l, ue: k, power });
                }
                if m == 0 && power > 0.0 {
                    return Err(AccessError::PowerOnInactiveAp { ap: l, ue: k, power });
                }
            }
            excess.push(if m == 0 {
                0.0
            } else {
                (m - self.ppzf.strong_pilots[l]) as f64
            });
        }
        Ok(self.sinr_with_excess_antennas(&excess, rho))
    }

    /// SINR with the antenna excess M_l − τ_S,l given directly (may be fractional).
    pub fn sinr_with_excess_antennas(&self, excess: &[f64], rho: &DMatrix<f64>) -> Vec<f64> {
        let (num_aps, num_ues) = self.beta.shape();
        // total power radiated by each AP
        let ap_power: Vec<f64> = (0..num_aps).map(|l| rho.row(l).sum()).collect();
        (0..num_ues)
            .map(|k| {
                let coherent = |t: usize| -> f64 {
                    (0..num_aps)
                        .map(|l| (excess[l] * rho[(l, t)] * self.gamma[(l, k)]).max(0.0).sqrt())
                        .sum()
                };
                let signal = coherent(k).powi(2);
                let contamination: f64 = self
                    .pilots
                    .pilot_set(k)
                    .into_iter()
                    .filter(|&t| t != k)
                    .map(|t| coherent(t).powi(2))
                    .sum();
                let noncoherent: f64 = (0..num_aps).map(|l| ap_power[l] * self.residual_gain(l, k)).sum();
                signal / (contamination + noncoherent + self.noise_power)
            })
            .collect()
    }
}

/// Downlink SE lower bound, bit/s/Hz.
pub fn spectral_efficiency(sinr: &[f64], coherence_symbols: usize, pilot_symbols: usize) -> Vec<f64> {
    let prelog = (coherence_symbols - pilot_symbols) as f64 / coherence_symbols as f64;
    sinr.iter().map(|s| prelog * (1.0 + s).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_deployment;
    use proptest::prelude::*;

    fn state_from(beta: DMatrix<f64>, num_pilots: usize, strong: DMatrix<bool>, noise: f64) -> AccessState {
        let pilots = assign_pilots(&beta, num_pilots);
        let gamma = estimate_quality(&beta, &pilots, 0.1, num_pilots, noise);
        let strong_pilots = (0..beta.nrows())
            .map(|l| {
                let mut seen: Vec<usize> = (0..beta.ncols())
                    .filter(|&k| strong[(l, k)])
                    .map(|k| pilots.pilot_of[k])
                    .collect();
                seen.sort_unstable();
                seen.dedup();
                seen.len()
            })
            .collect();
        AccessState {
            beta,
            pilots,
            gamma,
            ppzf: PpzfClassification { strong, strong_pilots },
            noise_power: noise,
        }
    }

    #[test]
    fn path_loss_is_monotone() {
        let b100 = path_loss_db(100.0, -34.53, 3.76);
        let b200 = path_loss_db(200.0, -34.53, 3.76);
        assert!(b100 > b200);
        assert_eq!(path_loss_db(1.0, -34.53, 3.76), -34.53);
        assert_eq!(path_loss_db(0.0, -34.53, 3.76), -34.53);
    }

    #[test]
    fn path_loss_at_141_m() {
        let expected = -34.53 - 37.6 * 141f64.log10();
        let got = path_loss_db(141.0, -34.53, 3.76);
        assert!((got - expected).abs() < 1e-12);
        assert!((got + 115.4).abs() < 0.1);
    }

    #[test]
    fn large_scale_positive_and_ordered() {
        let cfg = ScenarioConfig::reference(2);
        let mut dep = build_deployment(&cfg, 1).unwrap();
        dep.ap_positions = vec![[0.0, 0.0]];
        dep.ue_positions = vec![[100.0, 0.0], [200.0, 0.0]];
        let beta = compute_large_scale(&dep, &cfg);
        assert!(beta[(0, 0)] > beta[(0, 1)]);
        assert!(beta.iter().all(|&b| b > 0.0));
    }

    #[test]
    fn injective_pilots_when_enough() {
        let beta = DMatrix::from_fn(3, 4, |l, k| 1e-10 / (1.0 + (l * 4 + k) as f64));
        let pilots = assign_pilots(&beta, 8);
        let mut seen = pilots.pilot_of.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        for k in 0..4 {
            assert_eq!(pilots.pilot_set(k), vec![k]);
        }
    }

    #[test]
    fn balanced_reuse() {
        let beta = DMatrix::from_fn(4, 16, |l, k| 1e-10 * (1.0 + ((l * 7 + k * 3) % 11) as f64));
        let pilots = assign_pilots(&beta, 8);
        for p in 0..8 {
            assert_eq!(pilots.pilot_of.iter().filter(|&&q| q == p).count(), 2);
        }
    }

    #[test]
    fn colocated_ues_get_different_pilots() {
        // UEs 0 and 1 sit at the same spot; K = 3 > tau_p = 2
        let cfg = ScenarioConfig::reference(3);
        let mut dep = build_deployment(&cfg, 3).unwrap();
        dep.ue_positions = vec![[100.0, 100.0], [100.0, 100.0], [900.0, 900.0]];
        let beta = compute_large_scale(&dep, &cfg);
        let pilots = assign_pilots(&beta, 2);
        assert_ne!(pilots.pilot_of[0], pilots.pilot_of[1]);

        // a fourth UE next to the pair is paired with the far UE, not the pair
        dep.ue_positions.push([110.0, 100.0]);
        let beta = compute_large_scale(&dep, &cfg);
        let pilots = assign_pilots(&beta, 2);
        assert_ne!(pilots.pilot_of[0], pilots.pilot_of[1]);
        assert!(pilots.shares_pilot(2, 3) || !pilots.shares_pilot(0, 3) || !pilots.shares_pilot(1, 3));
    }

    #[test]
    fn estimate_quality_plug_in() {
        let beta = DMatrix::from_element(1, 1, 1e-10);
        let pilots = assign_pilots(&beta, 8);
        let gamma = estimate_quality(&beta, &pilots, 0.1, 8, 1e-13);
        let expected = 0.8e-20 / (0.8e-10 + 1e-13);
        assert!((gamma[(0, 0)] - expected).abs() < 1e-24);
        assert!((gamma[(0, 0)] - 9.988e-11).abs() < 1e-14);
    }

    #[test]
    fn high_snr_estimate_is_near_perfect() {
        let beta = DMatrix::from_element(1, 1, 1e-6);
        let pilots = assign_pilots(&beta, 8);
        let gamma = estimate_quality(&beta, &pilots, 0.1, 8, 1e-20);
        assert!((gamma[(0, 0)] / 1e-6 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_pilot_halves_estimate() {
        let beta = DMatrix::from_element(1, 2, 1e-6);
        let pilots = assign_pilots(&beta, 1);
        let gamma = estimate_quality(&beta, &pilots, 0.1, 1, 1e-20);
        assert!(gamma[(0, 0)] <= 1e-6 / 2.0 + 1e-18);
    }

    #[test]
    fn ppzf_full_inclusion() {
        let beta = DMatrix::from_element(2, 3, 1e-10);
        let pilots = assign_pilots(&beta, 2);
        let class = classify_ppzf(&beta, &pilots, 1.0, 16);
        assert!(class.strong.iter().all(|&s| s));
        assert_eq!(class.strong_pilots, vec![2, 2]);
    }

    #[test]
    fn ppzf_dominant_ue_only() {
        let beta = DMatrix::from_row_slice(1, 3, &[0.99, 0.005, 0.005]);
        let pilots = assign_pilots(&beta, 8);
        let class = classify_ppzf(&beta, &pilots, 0.95, 16);
        assert_eq!(class.strong_pilots, vec![1]);
        assert!(class.strong[(0, 0)] && !class.strong[(0, 1)] && !class.strong[(0, 2)]);
    }

    #[test]
    fn ppzf_cap_leaves_one_antenna() {
        let beta = DMatrix::from_element(1, 20, 1e-10);
        let pilots = assign_pilots(&beta, 20);
        let class = classify_ppzf(&beta, &pilots, 1.0, 16);
        assert_eq!(class.strong_pilots, vec![15]);
    }

    #[test]
    fn zero_power_zero_sinr() {
        let beta = DMatrix::from_element(2, 2, 1e-10);
        let state = state_from(beta, 8, DMatrix::from_element(2, 2, true), 1e-13);
        let sinr = state.effective_sinr(&[4, 4], &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(sinr, vec![0.0, 0.0]);
    }

    #[test]
    fn single_link_collapses() {
        let beta = DMatrix::from_element(1, 1, 1e-10);
        let mut state = state_from(beta.clone(), 8, DMatrix::from_element(1, 1, true), 1e-13);
        state.gamma = beta;
        let sinr = state.effective_sinr(&[2], &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((sinr[0] - 1e-10 / 1e-13).abs() < 1e-9);
    }

    #[test]
    fn inactive_ap_power_rejected() {
        let beta = DMatrix::from_element(2, 1, 1e-10);
        let state = state_from(beta, 8, DMatrix::from_element(2, 1, true), 1e-13);
        let rho = DMatrix::from_row_slice(2, 1, &[0.5, 0.1]);
        let err = state.effective_sinr(&[3, 0], &rho).unwrap_err();
        assert!(matches!(err, AccessError::PowerOnInactiveAp { ap: 1, ue: 0, .. }));
        let err = state.effective_sinr(&[1, 0], &rho).unwrap_err();
        assert!(matches!(err, AccessError::TooFewAntennas { ap: 0, .. }));
    }

    #[test]
    fn se_values() {
        let se = spectral_efficiency(&[0.0, 1.0, 3.0], 192, 8);
        assert_eq!(se[0], 0.0);
        assert!((se[1] - 184.0 / 192.0).abs() < 1e-12);
        assert!((se[1] - 0.9583).abs() < 1e-4);
        assert!((se[2] - 1.9167).abs() < 1e-4);
    }

    /// Term-by-term evaluation written against the textbook formula, no shared helpers.
    fn reference_sinr(state: &AccessState, antennas: &[usize], rho: &DMatrix<f64>) -> Vec<f64> {
        let (l_count, k_count) = state.beta.shape();
        let mut out = vec![0.0; k_count];
        for k in 0..k_count {
            let mut num = 0.0;
            for l in 0..l_count {
                if antennas[l] > 0 {
                    let eff = antennas[l] as f64 - state.ppzf.strong_pilots[l] as f64;
                    num += (eff * rho[(l, k)] * state.gamma[(l, k)]).sqrt();
                }
            }
            num *= num;
            let mut den = state.noise_power;
            for t in 0..k_count {
                if t != k && state.pilots.pilot_of[t] == state.pilots.pilot_of[k] {
                    let mut s = 0.0;
                    for l in 0..l_count {
                        if antennas[l] > 0 {
                            let eff = antennas[l] as f64 - state.ppzf.strong_pilots[l] as f64;
                            s += (eff * rho[(l, t)] * state.gamma[(l, k)]).sqrt();
                        }
                    }
                    den += s * s;
                }
                for l in 0..l_count {
                    let d = if state.ppzf.strong[(l, k)] { 1.0 } else { 0.0 };
                    den += rho[(l, t)] * (state.beta[(l, k)] - d * state.gamma[(l, k)]);
                }
            }
            out[k] = num / den;
        }
        out
    }

    proptest! {
        #[test]
        fn gamma_never_exceeds_beta(
            gains in proptest::collection::vec(1e-14f64..1e-8, 12),
            tau_p in 1usize..5,
        ) {
            let beta = DMatrix::from_vec(3, 4, gains);
            let pilots = assign_pilots(&beta, tau_p);
            let gamma = estimate_quality(&beta, &pilots, 0.1, tau_p, 4e-13);
            for (g, b) in gamma.iter().zip(beta.iter()) {
                prop_assert!(*g > 0.0 && *g <= *b);
            }
            let class = classify_ppzf(&beta, &pilots, 0.95, 3);
            for l in 0..3 {
                prop_assert!(class.strong_pilots[l] <= tau_p.min(2));
            }
        }

        #[test]
        fn sinr_matches_reference(
            gains in proptest::collection::vec(1e-12f64..1e-9, 6),
            powers in proptest::collection::vec(0.0f64..1.0, 6),
            antennas in proptest::collection::vec(0usize..6, 2),
            strong in proptest::collection::vec(any::<bool>(), 6),
        ) {
            let beta = DMatrix::from_vec(2, 3, gains);
            let strong = DMatrix::from_vec(2, 3, strong);
            let state = state_from(beta, 2, strong, 4e-13);
            let antennas: Vec<usize> = antennas
                .iter()
                .enumerate()
                .map(|(l, &a)| if a == 0 { 0 } else { state.ppzf.strong_pilots[l] + a })
                .collect();
            let mut rho = DMatrix::from_vec(2, 3, powers);
            for l in 0..2 {
                if antennas[l] == 0 {
                    rho.row_mut(l).fill(0.0);
                }
            }
            let got = state.effective_sinr(&antennas, &rho).unwrap();
            let want = reference_sinr(&state, &antennas, &rho);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-12 * w.abs().max(1e-300));
            }
        }

        #[test]
        fn sinr_terms_move_as_expected(
            gains in proptest::collection::vec(1e-12f64..1e-9, 4),
            powers in proptest::collection::vec(0.01f64..1.0, 4),
            eps in 1e-6f64..1e-2,
        ) {
            // numerator never drops and the own-power denominator shift is exactly eps(β−δγ)
            let beta = DMatrix::from_vec(2, 2, gains);
            let state = state_from(beta, 2, DMatrix::from_element(2, 2, false), 4e-13);
            let excess = [3.0, 2.0];
            let rho = DMatrix::from_vec(2, 2, powers);
            let mut bumped = rho.clone();
            bumped[(0, 0)] += eps;
            let num = |r: &DMatrix<f64>| {
                (0..2).map(|l| (excess[l] * r[(l, 0)] * state.gamma[(l, 0)]).sqrt()).sum::<f64>().powi(2)
            };
            prop_assert!(num(&bumped) >= num(&rho));
            let s0 = state.sinr_with_excess_antennas(&excess, &rho)[0];
            let s1 = state.sinr_with_excess_antennas(&excess, &bumped)[0];
            let den0 = num(&rho) / s0;
            let den1 = num(&bumped) / s1;
            let shift = eps * state.residual_gain(0, 0);
            prop_assert!(((den1 - den0) - shift).abs() <= 1e-9 * den0);
        }
    }
}
