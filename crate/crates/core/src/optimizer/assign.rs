use nalgebra::DMatrix;

use super::ProblemInputs;

/// Multiples of the target a serving AP must reach on its own with its
/// power split evenly, tried in turn.
const SINR_MARGINS: [f64; 2] = [2.0, 1.0];
/// Total time share the assignment may use.
const TIME_BUDGET: f64 = 0.98;
/// Search nodes per margin.
const MAX_NODES: usize = 200_000;
/// Patterns kept per margin.
const MAX_PATTERNS: usize = 32;

/// Single-AP SINR of every link at full access power, 0 for inactive APs.
pub fn single_link_sinr(inputs: &ProblemInputs, antennas: &[usize]) -> DMatrix<f64> {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    DMatrix::from_fn(aps, ues, |l, k| {
        if antennas[l] == 0 {
            return 0.0;
        }
        let mut only = vec![0; aps];
        only[l] = antennas[l];
        let mut rho = DMatrix::zeros(aps, ues);
        rho[(l, k)] = inputs.access_budget;
        inputs.access.effective_sinr(&only, &rho).map_or(0.0, |s| s[k])
    })
}

/// Smallest time share carrying `loads` UEs per member AP within the group
/// fronthaul budget. Values above 1 grow with the power shortfall.
pub fn group_time(inputs: &ProblemInputs, members: &[usize], loads: &[usize]) -> f64 {
    let per_ue = inputs.split_rate / inputs.fronthaul_bandwidth;
    let needed = |t: f64| -> f64 {
        members
            .iter()
            .filter(|&&l| loads[l] > 0)
            .map(|&l| (loads[l] as f64 * per_ue / t * std::f64::consts::LN_2).exp_m1() / inputs.zf_gain[l])
            .sum()
    };
    if members.iter().all(|&l| loads[l] == 0) {
        return 0.0;
    }
    let full = needed(1.0);
    if full > inputs.fronthaul_budget {
        return 1.0 + full / inputs.fronthaul_budget;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if needed(mid) <= inputs.fronthaul_budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

struct Search<'a> {
    inputs: &'a ProblemInputs,
    single: &'a DMatrix<f64>,
    /// UEs in branching order with their eligible APs, strongest first.
    order: Vec<(usize, Vec<usize>)>,
    margin: f64,
    loads: Vec<usize>,
    owner: Vec<usize>,
    found: Vec<(f64, Vec<usize>)>,
    nodes: usize,
}

impl Search<'_> {
    fn total_time(&self) -> f64 {
        self.inputs
            .grouping
            .groups
            .iter()
            .map(|members| group_time(self.inputs, members, &self.loads))
            .sum()
    }

    /// Every UE already on `l` keeps its margin with one more UE there.
    fn fits(&self, l: usize, k: usize) -> bool {
        let load = (self.loads[l] + 1) as f64;
        let ok = |t: usize| self.single[(l, t)] >= self.margin * self.inputs.sinr_targets[t] * load;
        ok(k) && self.owner.iter().enumerate().all(|(t, &o)| o != l || ok(t))
    }

    fn descend(&mut self, depth: usize) {
        self.nodes += 1;
        let time = self.total_time();
        if time > TIME_BUDGET || self.nodes > MAX_NODES || self.found.len() >= MAX_PATTERNS {
            return;
        }
        let Some((k, options)) = self.order.get(depth).cloned() else {
            self.found.push((time, self.owner.clone()));
            return;
        };
        for l in options {
            if !self.fits(l, k) {
                continue;
            }
            self.loads[l] += 1;
            self.owner[k] = l;
            self.descend(depth + 1);
            self.owner[k] = usize::MAX;
            self.loads[l] -= 1;
        }
    }
}

/// Service patterns with one serving AP per UE that fit the fronthaul time
/// budget, least total time share first.
///
/// A depth-first search places the UEs with the fewest options first and
/// prunes on the partial time share, which only grows as UEs are added. Each
/// serving AP must keep a SINR margin on its own when its power is split
/// evenly over its UEs; a stricter margin is tried before a looser one.
pub fn assign_service(inputs: &ProblemInputs, antennas: &[usize], candidates: &DMatrix<bool>) -> Vec<DMatrix<bool>> {
    let (aps, ues) = (inputs.num_aps(), inputs.num_ues());
    let single = single_link_sinr(inputs, antennas);
    let mut patterns: Vec<DMatrix<bool>> = Vec::new();
    for margin in SINR_MARGINS {
        let mut order: Vec<(usize, Vec<usize>)> = (0..ues)
            .map(|k| {
                let mut options: Vec<usize> = (0..aps)
                    .filter(|&l| candidates[(l, k)] && single[(l, k)] >= margin * inputs.sinr_targets[k])
                    .collect();
                options.sort_by(|&a, &b| single[(b, k)].total_cmp(&single[(a, k)]));
                (k, options)
            })
            .collect();
        if order.iter().any(|(_, o)| o.is_empty()) {
            continue;
        }
        order.sort_by_key(|(k, o)| (o.len(), *k));
        let mut search = Search {
            inputs,
            single: &single,
            order,
            margin,
            loads: vec![0; aps],
            owner: vec![usize::MAX; ues],
            found: Vec::new(),
            nodes: 0,
        };
        search.descend(0);
        search.found.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, owner) in search.found {
            let pattern = DMatrix::from_fn(aps, ues, |l, k| owner[k] == l);
            if !patterns.contains(&pattern) {
                patterns.push(pattern);
            }
        }
    }
    patterns
}
