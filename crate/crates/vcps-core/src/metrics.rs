//! Per-view raw quality/cost components (timeliness, consistency,
//! redundancy, sensing cost, transmission cost), causal min-max
//! normalization, and the AoV/CoV scores with the global objective.

use std::collections::VecDeque;

use crate::domain::MetricWeights;

/// One information copy delivered to an RSU during a slot.
#[derive(Debug, Clone, Copy)]
pub struct DeliveredInfo {
    pub vehicle: usize,
    pub info_type: usize,
    /// Arrival moment a (seconds).
    pub arrival_moment: f64,
    /// Update moment u (seconds).
    pub update_moment: f64,
    /// Queuing time q (seconds).
    pub queuing_time: f64,
    /// Transmission duration g (seconds).
    pub transmission_time: f64,
    /// Transmission energy: integral of tx power over the active time (J).
    pub energy: f64,
}

/// One (vehicle, info type) sensing act inside the RSU's coverage at a slot.
#[derive(Debug, Clone, Copy)]
pub struct SensedInfo {
    pub vehicle: usize,
    pub info_type: usize,
    pub sensing_cost: f64,
}

/// Raw (un-normalized) per-view components for one slot.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawViewComponents {
    pub timeliness: f64,
    pub consistency: f64,
    pub redundancy: f64,
    pub sensing_cost: f64,
    pub transmission_cost: f64,
    /// Number of delivered required information copies; 0 marks the view as
    /// missing for the slot.
    pub delivered_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ViewScore {
    pub aov: f64,
    pub cov: f64,
    pub theta_hat: f64,
    pub psi_hat: f64,
    pub xi_hat: f64,
    pub phi_hat: f64,
    pub omega_hat: f64,
    pub missing: bool,
}

fn is_required(required: &[usize], info_type: usize) -> bool {
    required.binary_search(&info_type).is_ok()
}

/// Theta: per covered vehicle, the maximum staleness a + q + g - u over its
/// delivered required information, summed over vehicles.
pub fn timeliness(required: &[usize], delivered: &[DeliveredInfo]) -> f64 {
    let mut vehicles: Vec<usize> = delivered
        .iter()
        .filter(|d| is_required(required, d.info_type))
        .map(|d| d.vehicle)
        .collect();
    vehicles.sort_unstable();
    vehicles.dedup();
    vehicles
        .iter()
        .map(|&s| {
            delivered
                .iter()
                .filter(|d| d.vehicle == s && is_required(required, d.info_type))
                .map(|d| {
                    d.arrival_moment + d.queuing_time + d.transmission_time - d.update_moment
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// Psi: spread (max - min) of update moments over delivered required info.
/// Zero when fewer than two copies were delivered.
pub fn consistency(required: &[usize], delivered: &[DeliveredInfo]) -> f64 {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for d in delivered.iter().filter(|d| is_required(required, d.info_type)) {
        min = min.min(d.update_moment);
        max = max.max(d.update_moment);
    }
    if max > min {
        max - min
    } else {
        0.0
    }
}

/// Xi: per required type, delivered copies beyond the first (clamped at 0).
pub fn redundancy(required: &[usize], delivered: &[DeliveredInfo]) -> f64 {
    required
        .iter()
        .map(|&ty| {
            let copies = delivered.iter().filter(|d| d.info_type == ty).count();
            copies.saturating_sub(1) as f64
        })
        .sum()
}

/// Phi: sum of sensing costs over covered vehicles sensing required types.
pub fn sensing_cost(required: &[usize], sensed: &[SensedInfo]) -> f64 {
    sensed
        .iter()
        .filter(|s| is_required(required, s.info_type))
        .map(|s| s.sensing_cost)
        .sum()
}

/// Omega: transmission energy spent on delivered required information.
pub fn transmission_cost(required: &[usize], delivered: &[DeliveredInfo]) -> f64 {
    delivered
        .iter()
        .filter(|d| is_required(required, d.info_type))
        .map(|d| d.energy)
        .sum()
}

/// All five raw components of a view at one RSU-slot.
pub fn raw_components(
    required: &[usize],
    delivered: &[DeliveredInfo],
    sensed: &[SensedInfo],
) -> RawViewComponents {
    let delivered_count = delivered
        .iter()
        .filter(|d| is_required(required, d.info_type))
        .count();
    RawViewComponents {
        timeliness: timeliness(required, delivered),
        consistency: consistency(required, delivered),
        redundancy: redundancy(required, delivered),
        sensing_cost: sensing_cost(required, sensed),
        transmission_cost: transmission_cost(required, delivered),
        delivered_count,
    }
}

const N_METRICS: usize = 5;

/// Per-RSU causal min-max scaler over a sliding window of the last W slots'
/// raw values. The current slot's values are pushed before scoring, so the
/// first observation of a metric normalizes to the degenerate value 0.5.
#[derive(Debug, Clone)]
pub struct Normalizer {
    window: usize,
    // one deque of per-slot value lists per metric
    slots: [VecDeque<Vec<f64>>; N_METRICS],
}

impl Normalizer {
    pub fn new(window: usize) -> Self {
        Normalizer {
            window: window.max(1),
            slots: Default::default(),
        }
    }

    /// Pushes the slot's raw values (missing views excluded: their zeroed
    /// components are rule-scored, not observations).
    pub fn observe_slot(&mut self, raws: &[RawViewComponents]) {
        let values: [Vec<f64>; N_METRICS] = [
            raws.iter().filter(|r| r.delivered_count > 0).map(|r| r.timeliness).collect(),
            raws.iter().filter(|r| r.delivered_count > 0).map(|r| r.consistency).collect(),
            raws.iter().filter(|r| r.delivered_count > 0).map(|r| r.redundancy).collect(),
            raws.iter().filter(|r| r.delivered_count > 0).map(|r| r.sensing_cost).collect(),
            raws.iter().filter(|r| r.delivered_count > 0).map(|r| r.transmission_cost).collect(),
        ];
        for (deque, vals) in self.slots.iter_mut().zip(values) {
            deque.push_back(vals);
            while deque.len() > self.window {
                deque.pop_front();
            }
        }
    }

    /// Min-max scales `x` against metric `m`'s window; 0.5 when the window
    /// is degenerate, clamped into [0, 1] otherwise.
    pub fn normalize(&self, metric: usize, x: f64) -> f64 {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for slot in &self.slots[metric] {
            for &v in slot {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if max <= min {
            return 0.5;
        }
        ((x - min) / (max - min)).clamp(0.0, 1.0)
    }

    /// Scores one view from its raw components. A view with nothing
    /// delivered scores AoV = 1, CoV = 0 (worst quality, no cost).
    pub fn score_view(&self, raw: &RawViewComponents, weights: &MetricWeights) -> ViewScore {
        if raw.delivered_count == 0 {
            return ViewScore {
                aov: 1.0,
                cov: 0.0,
                theta_hat: 1.0,
                psi_hat: 1.0,
                xi_hat: 0.0,
                phi_hat: 0.0,
                omega_hat: 0.0,
                missing: true,
            };
        }
        let theta_hat = self.normalize(0, raw.timeliness);
        let psi_hat = self.normalize(1, raw.consistency);
        let xi_hat = self.normalize(2, raw.redundancy);
        let phi_hat = self.normalize(3, raw.sensing_cost);
        let omega_hat = self.normalize(4, raw.transmission_cost);
        ViewScore {
            aov: weights.w1 * theta_hat + weights.w2 * psi_hat,
            cov: weights.w3 * xi_hat + weights.w4 * phi_hat + weights.w5 * omega_hat,
            theta_hat,
            psi_hat,
            xi_hat,
            phi_hat,
            omega_hat,
            missing: false,
        }
    }
}

/// The global objective: mean(1 - AoV) + mean(1 - CoV) over all scored
/// (slot, RSU, view) triples. Lies in [0, 2].
pub fn objective(scores: &[ViewScore]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let n = scores.len() as f64;
    let quality: f64 = scores.iter().map(|s| 1.0 - s.aov).sum::<f64>() / n;
    let cheapness: f64 = scores.iter().map(|s| 1.0 - s.cov).sum::<f64>() / n;
    quality + cheapness
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn weights() -> MetricWeights {
        MetricWeights {
            w1: 0.6,
            w2: 0.4,
            w3: 0.2,
            w4: 0.4,
            w5: 0.4,
        }
    }

    fn delivery(vehicle: usize, ty: usize, a: f64, q: f64, g: f64, u: f64) -> DeliveredInfo {
        DeliveredInfo {
            vehicle,
            info_type: ty,
            arrival_moment: a,
            update_moment: u,
            queuing_time: q,
            transmission_time: g,
            energy: 0.15,
        }
    }

    #[test]
    fn timeliness_hand_sum() {
        let d = [delivery(0, 0, 10.0, 0.5, 0.2, 9.0)];
        assert_relative_eq!(timeliness(&[0], &d), 1.7, max_relative = 1e-12);
    }

    #[test]
    fn timeliness_additive_over_vehicles() {
        let d = [
            delivery(0, 0, 10.0, 0.5, 0.2, 9.0),
            delivery(1, 0, 10.0, 0.5, 0.2, 9.0),
        ];
        assert_relative_eq!(timeliness(&[0], &d), 3.4, max_relative = 1e-12);
    }

    #[test]
    fn timeliness_empty_is_zero() {
        assert_eq!(timeliness(&[0], &[]), 0.0);
    }

    #[test]
    fn consistency_identical_versions() {
        let d = [
            delivery(0, 0, 10.0, 0.0, 0.0, 9.0),
            delivery(1, 1, 10.0, 0.0, 0.0, 9.0),
            delivery(2, 1, 10.0, 0.0, 0.0, 9.0),
        ];
        assert_eq!(consistency(&[0, 1], &d), 0.0);
    }

    #[test]
    fn consistency_spread() {
        let d = [
            delivery(0, 0, 10.0, 0.0, 0.0, 6.0),
            delivery(1, 1, 10.0, 0.0, 0.0, 9.0),
        ];
        assert_relative_eq!(consistency(&[0, 1], &d), 3.0);
    }

    #[test]
    fn consistency_single_copy_is_zero() {
        let d = [delivery(0, 0, 10.0, 0.0, 0.0, 9.0)];
        assert_eq!(consistency(&[0], &d), 0.0);
    }

    #[test]
    fn redundancy_counts_duplicates() {
        let d = [
            delivery(0, 0, 1.0, 0.0, 0.0, 0.0),
            delivery(1, 0, 1.0, 0.0, 0.0, 0.0),
            delivery(2, 0, 1.0, 0.0, 0.0, 0.0),
            delivery(0, 1, 1.0, 0.0, 0.0, 0.0),
        ];
        assert_eq!(redundancy(&[0, 1], &d), 2.0);
    }

    #[test]
    fn redundancy_clamps_undelivered_types() {
        let d = [delivery(0, 0, 1.0, 0.0, 0.0, 0.0)];
        // type 1 never delivered contributes 0, not -1
        assert_eq!(redundancy(&[0, 1], &d), 0.0);
    }

    #[test]
    fn redundancy_all_unique_is_zero() {
        let d = [
            delivery(0, 0, 1.0, 0.0, 0.0, 0.0),
            delivery(1, 1, 1.0, 0.0, 0.0, 0.0),
        ];
        assert_eq!(redundancy(&[0, 1], &d), 0.0);
    }

    #[test]
    fn sensing_cost_sums() {
        let s = [
            SensedInfo { vehicle: 0, info_type: 0, sensing_cost: 0.3 },
            SensedInfo { vehicle: 1, info_type: 1, sensing_cost: 0.7 },
            SensedInfo { vehicle: 1, info_type: 2, sensing_cost: 9.0 }, // not required
        ];
        assert_relative_eq!(sensing_cost(&[0, 1], &s), 1.0);
    }

    #[test]
    fn transmission_cost_sums_energy() {
        // pi = 0.1 W over g = 1.5 s -> 0.15 J per delivery
        let d = [delivery(0, 0, 1.0, 0.0, 1.5, 0.0)];
        assert_relative_eq!(transmission_cost(&[0], &d), 0.15);
    }

    #[test]
    fn nothing_sensed_means_zero_costs() {
        assert_eq!(sensing_cost(&[0], &[]), 0.0);
        assert_eq!(transmission_cost(&[0], &[]), 0.0);
    }

    #[test]
    fn normalize_endpoints_and_degenerate() {
        let mut n = Normalizer::new(10);
        let raw = |theta: f64| RawViewComponents {
            timeliness: theta,
            delivered_count: 1,
            ..Default::default()
        };
        n.observe_slot(&[raw(2.0), raw(6.0)]);
        assert_eq!(n.normalize(0, 2.0), 0.0);
        assert_eq!(n.normalize(0, 6.0), 1.0);
        assert_eq!(n.normalize(0, 4.0), 0.5);
        assert_eq!(n.normalize(0, 99.0), 1.0); // clamped
        // degenerate window: all equal
        let mut n = Normalizer::new(10);
        n.observe_slot(&[raw(3.0), raw(3.0)]);
        assert_eq!(n.normalize(0, 3.0), 0.5);
    }

    #[test]
    fn window_slides() {
        let mut n = Normalizer::new(2);
        let raw = |theta: f64| RawViewComponents {
            timeliness: theta,
            delivered_count: 1,
            ..Default::default()
        };
        n.observe_slot(&[raw(100.0)]);
        n.observe_slot(&[raw(1.0)]);
        n.observe_slot(&[raw(2.0)]); // 100 has left the window
        assert_eq!(n.normalize(0, 2.0), 1.0);
    }

    #[test]
    fn aov_weighted_sum() {
        let n = seeded_normalizer();
        let raw = RawViewComponents {
            timeliness: 0.2,
            consistency: 0.5,
            redundancy: 0.0,
            sensing_cost: 0.0,
            transmission_cost: 0.0,
            delivered_count: 1,
        };
        let score = n.score_view(&raw, &weights());
        // theta_hat = 0.2, psi_hat = 0.5 against the [0,1] windows
        assert_relative_eq!(score.aov, 0.6 * 0.2 + 0.4 * 0.5, max_relative = 1e-12);
    }

    #[test]
    fn cov_upper_corner() {
        let n = seeded_normalizer();
        let raw = RawViewComponents {
            timeliness: 0.5,
            consistency: 0.5,
            redundancy: 1.0,
            sensing_cost: 1.0,
            transmission_cost: 1.0,
            delivered_count: 1,
        };
        let score = n.score_view(&raw, &weights());
        assert_relative_eq!(score.cov, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn missing_view_rule() {
        let n = seeded_normalizer();
        let raw = RawViewComponents::default();
        let score = n.score_view(&raw, &weights());
        assert!(score.missing);
        assert_eq!(score.aov, 1.0);
        assert_eq!(score.cov, 0.0);
    }

    #[test]
    fn objective_range() {
        let n = seeded_normalizer();
        let mid = RawViewComponents {
            timeliness: 0.5,
            consistency: 0.5,
            redundancy: 0.5,
            sensing_cost: 0.5,
            transmission_cost: 0.5,
            delivered_count: 1,
        };
        let s = n.score_view(&mid, &weights());
        let obj = objective(&[s, s]);
        assert!((0.0..=2.0).contains(&obj));
        assert_relative_eq!(obj, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn aov_monotone_in_raw_components() {
        let n = seeded_normalizer();
        let raw = |theta: f64, psi: f64| RawViewComponents {
            timeliness: theta,
            consistency: psi,
            delivered_count: 1,
            ..Default::default()
        };
        let lo = n.score_view(&raw(0.2, 0.3), &weights());
        let hi = n.score_view(&raw(0.4, 0.3), &weights());
        assert!(hi.aov >= lo.aov);
        let hi_psi = n.score_view(&raw(0.2, 0.6), &weights());
        assert!(hi_psi.aov >= lo.aov);
    }

    /// Windows seeded with raw values 0 and 1 for every metric so that
    /// normalization is the identity on [0, 1].
    fn seeded_normalizer() -> Normalizer {
        let mut n = Normalizer::new(10);
        let corner = |v: f64| RawViewComponents {
            timeliness: v,
            consistency: v,
            redundancy: v,
            sensing_cost: v,
            transmission_cost: v,
            delivered_count: 1,
        };
        n.observe_slot(&[corner(0.0), corner(1.0)]);
        n
    }
}
