//! Wireless fronthaul: LOS mmWave channels, SDMA grouping and ZF gains.
//!
//! The cloud serves its APs group by group (TDMA across groups, SDMA inside a
//! group). Analog beams point at the members of a group; the cloud then
//! applies digital zero-forcing across the group's equivalent channels.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::scenario::{distance, Deployment, ScenarioConfig};

pub type C64 = Complex<f64>;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum FronthaulError {
    #[error("AP {0} has a zero-norm fronthaul direction vector")]
    ZeroVector(usize),
    #[error("{groups} groups of at most {size} APs cannot hold {aps} APs")]
    InfeasibleGrouping { aps: usize, groups: usize, size: usize },
    #[error("equivalent channels of group {0} are linearly dependent")]
    RankDeficient(usize),
    #[error("invalid time shares: {0}")]
    TimeShares(String),
}

/// Half-wavelength ULA response towards `angle` (rad from broadside).
pub fn steering_vector(num_antennas: usize, angle: f64) -> DVector<C64> {
    let phase = PI * angle.sin();
    DVector::from_fn(num_antennas, |n, _| C64::from_polar(1.0, phase * n as f64))
}

/// Free-space gain at `distance_m` for `carrier_hz`.
pub fn free_space_gain(distance_m: f64, carrier_hz: f64) -> f64 {
    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    (wavelength / (4.0 * PI * distance_m.max(1.0))).powi(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FronthaulLink {
    /// Departure angle at the cloud array.
    pub azimuth: f64,
    /// Arrival angle at the AP array.
    pub arrival: f64,
    pub gain: f64,
    pub cloud_steering: DVector<C64>,
    pub ap_steering: DVector<C64>,
}

impl FronthaulLink {
    /// Full M_frh × M_c channel matrix √β · a_AP · a_cloudᴴ.
    pub fn channel_matrix(&self) -> DMatrix<C64> {
        (&self.ap_steering * self.cloud_steering.adjoint()) * C64::from(self.gain.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FronthaulChannels {
    pub links: Vec<FronthaulLink>,
    pub noise_power: f64,
}

impl FronthaulChannels {
    pub fn fronthaul_antennas(&self) -> usize {
        self.links.first().map_or(0, |l| l.ap_steering.len())
    }

    pub fn cloud_antennas(&self) -> usize {
        self.links.first().map_or(0, |l| l.cloud_steering.len())
    }

    /// Gain-scaled cloud-side directions √β·a_cloud(φ_l), used for grouping.
    pub fn direction_vectors(&self) -> Vec<DVector<C64>> {
        self.links
            .iter()
            .map(|l| &l.cloud_steering * C64::from(l.gain.sqrt()))
            .collect()
    }
}

/// Rank-one LOS channel from the cloud to every AP.
pub fn synthesize_channels(deployment: &Deployment, config: &ScenarioConfig) -> FronthaulChannels {
    let net = &config.network;
    let cloud = deployment.cloud_position;
    let links = deployment
        .ap_positions
        .iter()
        .map(|&ap| {
            let azimuth = (ap[1] - cloud[1]).atan2(ap[0] - cloud[0]);
            let arrival = azimuth + PI;
            let gain = free_space_gain(distance(ap, cloud), config.radio.fronthaul_carrier_hz);
            FronthaulLink {
                azimuth,
                arrival,
                gain,
                cloud_steering: steering_vector(net.cloud_antennas, azimuth),
                ap_steering: steering_vector(net.fronthaul_antennas, arrival),
            }
        })
        .collect();
    FronthaulChannels {
        links,
        noise_power: config.radio.fronthaul_noise_power(),
    }
}

/// Equivalent channel row v_lᴴ G_l F_i of AP `ap` towards the beams of `members`.
///
/// Combiner and analog precoder columns are matched steering vectors scaled by
/// 1/√(antenna count).
pub fn equivalent_row(channels: &FronthaulChannels, ap: usize, members: &[usize]) -> DVector<C64> {
    let link = &channels.links[ap];
    let scale = (link.gain * link.ap_steering.len() as f64 / link.cloud_steering.len() as f64).sqrt();
    DVector::from_iterator(
        members.len(),
        members
            .iter()
            .map(|&j| link.cloud_steering.dotc(&channels.links[j].cloud_steering) * scale),
    )
}

/// Equivalent channel rows of every AP towards its own group's beams.
pub fn equivalent_channels(channels: &FronthaulChannels, grouping: &ApGrouping) -> Vec<DVector<C64>> {
    (0..channels.links.len())
        .map(|l| equivalent_row(channels, l, &grouping.groups[grouping.group_of[l]]))
        .collect()
}

/// Pairwise normalized inner-product magnitudes, zero on the diagonal.
pub fn chordal_matrix(vectors: &[DVector<C64>]) -> Result<DMatrix<f64>, FronthaulError> {
    let norms: Vec<f64> = vectors.iter().map(|v| v.norm()).collect();
    if let Some(ap) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(FronthaulError::ZeroVector(ap));
    }
    let n = vectors.len();
    let mut zeta = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let value = (vectors[a].dotc(&vectors[b]).norm() / (norms[a] * norms[b])).min(1.0);
            zeta[(a, b)] = value;
            zeta[(b, a)] = value;
        }
    }
    Ok(zeta)
}

/// Partition of the APs into fronthaul SDMA groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ApGrouping {
    pub group_of: Vec<usize>,
    /// Members per group in increasing index order; groups may be empty.
    pub groups: Vec<Vec<usize>>,
    /// Largest group chordal sum max_i Tr(ζ A_i).
    pub objective: f64,
}

impl ApGrouping {
    pub fn from_groups(groups: Vec<Vec<usize>>, zeta: &DMatrix<f64>) -> Self {
        let mut group_of = vec![0; zeta.nrows()];
        let mut groups = groups;
        for (i, g) in groups.iter_mut().enumerate() {
            g.sort_unstable();
            for &l in g.iter() {
                group_of[l] = i;
            }
        }
        let objective = groups.iter().map(|g| group_chordal_sum(zeta, g)).fold(0.0, f64::max);
        Self {
            group_of,
            groups,
            objective,
        }
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Binary L×I membership α.
    pub fn membership(&self) -> DMatrix<u8> {
        DMatrix::from_fn(self.group_of.len(), self.groups.len(), |l, i| {
            u8::from(self.group_of[l] == i)
        })
    }
}

/// Tr(ζ A) for the group `members`, summed over ordered pairs in index order.
pub fn group_chordal_sum(zeta: &DMatrix<f64>, members: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &a in members {
        for &b in members {
            sum += zeta[(a, b)];
        }
    }
    sum
}

/// Globally optimal min-max grouping by depth-first branch-and-bound.
///
/// APs are placed in index order; a new group is only opened as the next
/// label, which removes label permutations. Branches whose running maximum
/// already exceeds the incumbent are cut.
pub fn group_aps(zeta: &DMatrix<f64>, group_size: usize, num_groups: usize) -> Result<ApGrouping, FronthaulError> {
    let n = zeta.nrows();
    if group_size == 0 || num_groups * group_size < n {
        return Err(FronthaulError::InfeasibleGrouping {
            aps: n,
            groups: num_groups,
            size: group_size,
        });
    }
    let mut search = Search {
        zeta,
        group_size,
        num_groups,
        groups: Vec::with_capacity(num_groups),
        sums: Vec::with_capacity(num_groups),
        best: greedy_grouping(zeta, group_size, num_groups),
    };
    search.best.objective = search
        .best
        .groups
        .iter()
        .map(|g| group_chordal_sum(zeta, g))
        .fold(0.0, f64::max);
    search.descend(0, 0.0);
    let mut groups = search.best.groups;
    groups.resize(num_groups, Vec::new());
    Ok(ApGrouping::from_groups(groups, zeta))
}

struct Incumbent {
    groups: Vec<Vec<usize>>,
    objective: f64,
}

struct Search<'a> {
    zeta: &'a DMatrix<f64>,
    group_size: usize,
    num_groups: usize,
    groups: Vec<Vec<usize>>,
    sums: Vec<f64>,
    best: Incumbent,
}

impl Search<'_> {
    fn cut(&self, bound: f64) -> bool {
        // incremental sums differ from the canonical ones by rounding only
        bound > self.best.objective + 1e-9 * (1.0 + self.best.objective)
    }

    fn descend(&mut self, ap: usize, running_max: f64) {
        let n = self.zeta.nrows();
        if ap == n {
            let objective = self
                .groups
                .iter()
                .map(|g| group_chordal_sum(self.zeta, g))
                .fold(0.0, f64::max);
            if objective < self.best.objective {
                self.best = Incumbent {
                    groups: self.groups.clone(),
                    objective,
                };
            }
            return;
        }
        let free_slots: usize = self.groups.iter().map(|g| self.group_size - g.len()).sum::<usize>()
            + (self.num_groups - self.groups.len()) * self.group_size;
        if free_slots < n - ap {
            return;
        }

        let mut options: Vec<(f64, usize)> = self
            .groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.len() < self.group_size)
            .map(|(i, g)| {
                let added: f64 = g.iter().map(|&m| self.zeta[(ap, m)] + self.zeta[(m, ap)]).sum();
                (added, i)
            })
            .collect();
        options.sort_by(|a, b| (self.sums[a.1] + a.0).total_cmp(&(self.sums[b.1] + b.0)));
        if self.groups.len() < self.num_groups {
            // opening a fresh group costs nothing, try it first
            self.groups.push(vec![ap]);
            self.sums.push(0.0);
            if !self.cut(running_max) {
                self.descend(ap + 1, running_max);
            }
            self.groups.pop();
            self.sums.pop();
        }
        for (added, i) in options {
            let bound = running_max.max(self.sums[i] + added);
            if self.cut(bound) {
                continue;
            }
            self.groups[i].push(ap);
            self.sums[i] += added;
            self.descend(ap + 1, bound);
            self.sums[i] -= added;
            self.groups[i].pop();
        }
    }
}

/// Seeds the search: each AP joins the open group it adds the least to.
fn greedy_grouping(zeta: &DMatrix<f64>, group_size: usize, num_groups: usize) -> Incumbent {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); num_groups];
    let mut sums = vec![0.0; num_groups];
    for ap in 0..zeta.nrows() {
        let (i, added) = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.len() < group_size)
            .map(|(i, g)| (i, g.iter().map(|&m| 2.0 * zeta[(ap, m)]).sum::<f64>()))
            .min_by(|a, b| (sums[a.0] + a.1).total_cmp(&(sums[b.0] + b.1)))
            .expect("capacity checked by caller");
        groups[i].push(ap);
        sums[i] += added;
    }
    groups.retain(|g| !g.is_empty());
    Incumbent {
        groups,
        objective: f64::INFINITY,
    }
}

/// ZF gain Λ_ll = 1 / (σ² [(Ḡ Ḡᴴ)⁻¹]_ll) for every AP.
pub fn zf_gains(channels: &FronthaulChannels, grouping: &ApGrouping) -> Result<Vec<f64>, FronthaulError> {
    let mut gains = vec![0.0; channels.links.len()];
    for (i, members) in grouping.groups.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let size = members.len();
        let mut stacked = DMatrix::<C64>::zeros(size, size);
        for (row, &l) in members.iter().enumerate() {
            let eq = equivalent_row(channels, l, members);
            stacked.row_mut(row).copy_from(&eq.transpose());
        }
        let gram = &stacked * stacked.adjoint();
        let diag_max = (0..size).map(|a| gram[(a, a)].re).fold(0.0, f64::max);
        let chol = gram.cholesky().ok_or(FronthaulError::RankDeficient(i))?;
        let pivot_min = (0..size)
            .map(|a| chol.l_dirty()[(a, a)].re.powi(2))
            .fold(f64::INFINITY, f64::min);
        if pivot_min <= 1e-12 * diag_max {
            return Err(FronthaulError::RankDeficient(i));
        }
        let inverse = chol.inverse();
        for (row, &l) in members.iter().enumerate() {
            gains[l] = 1.0 / (channels.noise_power * inverse[(row, row)].re);
        }
    }
    Ok(gains)
}

/// Achievable fronthaul rate t·B·log2(1 + Λp̄), bit/s.
pub fn fronthaul_rate(zf_gain: f64, power: f64, time_share: f64, bandwidth_hz: f64) -> f64 {
    time_share * bandwidth_hz * (zf_gain * power).ln_1p() / std::f64::consts::LN_2
}

/// Checks t_i ≥ 0 and Σt_i ≤ 1 (within `tol`).
pub fn validate_time_shares(shares: &[f64], tol: f64) -> Result<(), FronthaulError> {
    if let Some(t) = shares.iter().find(|&&t| t < -tol || !t.is_finite()) {
        return Err(FronthaulError::TimeShares(format!("negative share {t}")));
    }
    let total: f64 = shares.iter().sum();
    if total > 1.0 + tol {
        return Err(FronthaulError::TimeShares(format!("shares sum to {total}")));
    }
    Ok(())
}

/// Grouping, ZF gains and equivalent channels for one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct FronthaulPlan {
    pub grouping: ApGrouping,
    pub zf_gain: Vec<f64>,
    /// Uniform starting shares 1/I; the optimizer replaces them.
    pub time_shares: Vec<f64>,
    pub equivalent: Vec<DVector<C64>>,
}

pub fn plan_fronthaul(deployment: &Deployment, config: &ScenarioConfig) -> Result<FronthaulPlan, FronthaulError> {
    let channels = synthesize_channels(deployment, config);
    let zeta = chordal_matrix(&channels.direction_vectors())?;
    let grouping = group_aps(&zeta, config.network.cloud_rf_chains, config.num_groups())?;
    let zf_gain = zf_gains(&channels, &grouping)?;
    let equivalent = equivalent_channels(&channels, &grouping);
    let groups = grouping.num_groups();
    Ok(FronthaulPlan {
        grouping,
        zf_gain,
        time_shares: vec![1.0 / groups as f64; groups],
        equivalent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_deployment;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn link_at(angle: f64, gain: f64, m_frh: usize, m_c: usize) -> FronthaulLink {
        FronthaulLink {
            azimuth: angle,
            arrival: angle + PI,
            gain,
            cloud_steering: steering_vector(m_c, angle),
            ap_steering: steering_vector(m_frh, angle + PI),
        }
    }

    fn channels_from(links: Vec<FronthaulLink>, noise: f64) -> FronthaulChannels {
        FronthaulChannels {
            links,
            noise_power: noise,
        }
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = steering_vector(8, 0.0);
        assert!(a.iter().all(|x| (*x - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn steering_norm_is_antenna_count() {
        for angle in [0.1, 0.7, -1.3, 2.9] {
            assert_relative_eq!(steering_vector(128, angle).norm_squared(), 128.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn doubling_distance_costs_six_db() {
        let g1 = free_space_gain(100.0, 28e9);
        let g2 = free_space_gain(200.0, 28e9);
        assert_relative_eq!(10.0 * (g1 / g2).log10(), 6.0206, epsilon = 1e-4);
    }

    #[test]
    fn gain_falls_with_distance() {
        let cfg = ScenarioConfig::reference(2);
        let dep = build_deployment(&cfg, 1).unwrap();
        let ch = synthesize_channels(&dep, &cfg);
        for (a, b) in [(5, 0), (6, 3)] {
            let da = distance(dep.ap_positions[a], dep.cloud_position);
            let db = distance(dep.ap_positions[b], dep.cloud_position);
            assert!(da < db);
            assert!(ch.links[a].gain > ch.links[b].gain);
        }
    }

    #[test]
    fn singleton_equivalent_gain() {
        let ch = channels_from(vec![link_at(0.4, 2e-9, 64, 128)], 1e-12);
        let eq = equivalent_row(&ch, 0, &[0]);
        // oracle: explicit v^H G f with the full channel matrix
        let link = &ch.links[0];
        let v = &link.ap_steering / C64::from(64f64.sqrt());
        let f = &link.cloud_steering / C64::from(128f64.sqrt());
        let direct = (v.adjoint() * link.channel_matrix() * f)[(0, 0)];
        assert_relative_eq!(eq[0].re, direct.re, max_relative = 1e-10);
        assert_relative_eq!(eq[0].im, direct.im, epsilon = 1e-12 * direct.norm());
        assert_relative_eq!(eq[0].norm_sqr(), 2e-9 * 64.0 * 128.0, max_relative = 1e-10);
    }

    #[test]
    fn equivalent_rows_match_direct_product() {
        let ch = channels_from(
            vec![
                link_at(0.3, 1e-9, 16, 32),
                link_at(-0.8, 3e-9, 16, 32),
                link_at(1.1, 2e-9, 16, 32),
            ],
            1e-12,
        );
        let members = [0, 1, 2];
        for l in 0..3 {
            let link = &ch.links[l];
            let v = &link.ap_steering / C64::from(4.0);
            let g = link.channel_matrix();
            let row = equivalent_row(&ch, l, &members);
            for (j, &m) in members.iter().enumerate() {
                let f = &ch.links[m].cloud_steering / C64::from(32f64.sqrt());
                let direct = (v.adjoint() * &g * f)[(0, 0)];
                assert!((row[j] - direct).norm() <= 1e-10 * direct.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn same_direction_is_parallel() {
        let ch = channels_from(vec![link_at(0.5, 1e-9, 8, 16), link_at(0.5, 4e-9, 8, 16)], 1e-12);
        let zeta = chordal_matrix(&ch.direction_vectors()).unwrap();
        assert_relative_eq!(zeta[(0, 1)], 1.0, epsilon = 1e-12);
        let row = equivalent_row(&ch, 0, &[0, 1]);
        let other = equivalent_row(&ch, 1, &[0, 1]);
        // parallel rows: cross ratio is constant
        let ratio0 = row[1] / row[0];
        let ratio1 = other[1] / other[0];
        assert!((ratio0 - ratio1).norm() < 1e-9);
    }

    #[test]
    fn orthogonal_directions_decouple() {
        // sin φ = 0 and sin φ = 2/M give orthogonal ULA responses
        let m_c = 16;
        let a0 = 0.0;
        let a1 = (2.0 / m_c as f64).asin();
        let ch = channels_from(vec![link_at(a0, 1e-9, 8, m_c), link_at(a1, 2e-9, 8, m_c)], 1e-12);
        let row = equivalent_row(&ch, 0, &[0, 1]);
        assert!(row[1].norm() < 1e-12 * row[0].norm());
        let zeta = chordal_matrix(&ch.direction_vectors()).unwrap();
        assert!(zeta[(0, 1)] < 1e-12);
        let grouping = ApGrouping::from_groups(vec![vec![0, 1]], &zeta);
        let gains = zf_gains(&ch, &grouping).unwrap();
        for l in 0..2 {
            let own = equivalent_row(&ch, l, &[0, 1]).norm_squared() / 1e-12;
            assert_relative_eq!(gains[l], own, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_vector_rejected() {
        let v = vec![DVector::from_element(3, C64::new(1.0, 0.0)), DVector::zeros(3)];
        assert_eq!(chordal_matrix(&v), Err(FronthaulError::ZeroVector(1)));
    }

    #[test]
    fn chordal_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let g = DVector::from_fn(6, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let h = DVector::from_fn(6, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let c = C64::new(rng.gen_range(0.1..3.0), rng.gen_range(-2.0..2.0));
            let z = chordal_matrix(&[g.clone(), h.clone()]).unwrap();
            assert!((0.0..=1.0).contains(&z[(0, 1)]));
            assert_eq!(z[(0, 1)], z[(1, 0)]);
            assert_eq!(z[(0, 0)], 0.0);
            let zc = chordal_matrix(&[&g * c, h.clone()]).unwrap();
            assert_relative_eq!(z[(0, 1)], zc[(0, 1)], epsilon = 1e-12);
            let self_pair = chordal_matrix(&[g.clone(), &g * c]).unwrap();
            assert_relative_eq!(self_pair[(0, 1)], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_cost_pairing_found() {
        let mut zeta = DMatrix::from_element(4, 4, 1.0);
        zeta.fill_diagonal(0.0);
        for (a, b) in [(0, 1), (2, 3)] {
            zeta[(a, b)] = 0.0;
            zeta[(b, a)] = 0.0;
        }
        let g = group_aps(&zeta, 2, 2).unwrap();
        assert_eq!(g.objective, 0.0);
        assert_eq!(g.group_of[0], g.group_of[1]);
        assert_eq!(g.group_of[2], g.group_of[3]);
        assert_ne!(g.group_of[0], g.group_of[2]);
    }

    #[test]
    fn equal_chordal_pairs_cost_twice() {
        let mut zeta = DMatrix::from_element(4, 4, 0.3);
        zeta.fill_diagonal(0.0);
        let g = group_aps(&zeta, 2, 2).unwrap();
        assert_relative_eq!(g.objective, 0.6, epsilon = 1e-15);
        assert!(g.groups.iter().all(|m| m.len() == 2));
    }

    #[test]
    fn grouping_respects_sizes() {
        let mut zeta = DMatrix::from_element(5, 5, 0.2);
        zeta.fill_diagonal(0.0);
        let g = group_aps(&zeta, 2, 3).unwrap();
        assert_eq!(g.groups.iter().map(Vec::len).sum::<usize>(), 5);
        assert!(g.groups.iter().all(|m| m.len() <= 2));
        let alpha = g.membership();
        for l in 0..5 {
            assert_eq!(alpha.row(l).iter().map(|&x| x as usize).sum::<usize>(), 1);
        }
        assert!(matches!(
            group_aps(&zeta, 2, 2),
            Err(FronthaulError::InfeasibleGrouping { .. })
        ));
    }

    #[test]
    fn singleton_zf_gain() {
        let ch = channels_from(vec![link_at(0.2, 1e-9, 8, 16)], 2e-12);
        let zeta = DMatrix::zeros(1, 1);
        let g = ApGrouping::from_groups(vec![vec![0]], &zeta);
        let gains = zf_gains(&ch, &g).unwrap();
        let own = equivalent_row(&ch, 0, &[0]).norm_squared();
        assert_relative_eq!(gains[0], own / 2e-12, max_relative = 1e-12);
    }

    #[test]
    fn zf_matches_pseudo_inverse() {
        let ch = channels_from(
            vec![
                link_at(0.2, 1e-9, 8, 16),
                link_at(0.35, 2e-9, 8, 16),
                link_at(-0.6, 5e-10, 8, 16),
            ],
            1e-12,
        );
        let zeta = DMatrix::zeros(3, 3);
        let g = ApGrouping::from_groups(vec![vec![0, 1, 2]], &zeta);
        let gains = zf_gains(&ch, &g).unwrap();
        let mut stacked = DMatrix::<C64>::zeros(3, 3);
        for l in 0..3 {
            stacked
                .row_mut(l)
                .copy_from(&equivalent_row(&ch, l, &[0, 1, 2]).transpose());
        }
        let pinv = stacked.clone().pseudo_inverse(1e-20).unwrap();
        for l in 0..3 {
            let col_norm = pinv.column(l).norm_squared();
            assert_relative_eq!(gains[l], 1.0 / (1e-12 * col_norm), max_relative = 1e-8);
            let matched = equivalent_row(&ch, l, &[0, 1, 2]).norm_squared() / 1e-12;
            assert!(gains[l] <= matched * (1.0 + 1e-12));
        }
    }

    #[test]
    fn colocated_group_is_rank_deficient() {
        let ch = channels_from(vec![link_at(0.4, 1e-9, 8, 16), link_at(0.4, 1e-9, 8, 16)], 1e-12);
        let zeta = DMatrix::zeros(2, 2);
        let g = ApGrouping::from_groups(vec![vec![0, 1]], &zeta);
        assert_eq!(zf_gains(&ch, &g), Err(FronthaulError::RankDeficient(0)));
    }

    #[test]
    fn rate_formula() {
        assert_eq!(fronthaul_rate(1e6, 0.0, 0.5, 1e8), 0.0);
        assert_relative_eq!(fronthaul_rate(3.0, 1.0, 0.5, 1e8), 1e8, max_relative = 1e-14);
        let a = fronthaul_rate(1e6, 1e-3, 0.25, 1e8);
        let b = fronthaul_rate(1e6, 2e-3, 0.25, 1e8);
        assert!(b > a);
        assert_relative_eq!(fronthaul_rate(1e6, 1e-3, 0.5, 1e8), 2.0 * a, max_relative = 1e-14);
    }

    #[test]
    fn time_share_check() {
        assert!(validate_time_shares(&[0.25; 4], 1e-9).is_ok());
        assert!(validate_time_shares(&[0.6, 0.6], 1e-9).is_err());
        assert!(validate_time_shares(&[-0.1, 0.5], 1e-9).is_err());
    }

    #[test]
    fn reference_deployment_plans() {
        let cfg = ScenarioConfig::reference(4);
        let dep = build_deployment(&cfg, 3).unwrap();
        let plan = plan_fronthaul(&dep, &cfg).unwrap();
        assert_eq!(plan.grouping.num_groups(), 4);
        assert!(plan.zf_gain.iter().all(|&g| g > 0.0));
        assert!(plan.grouping.groups.iter().all(|g| g.len() <= 4));
    }
}
