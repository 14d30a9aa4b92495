//! Discrete-time simulation environment: decodes per-RSU actions into
//! feasible sensing/power/bandwidth decisions, advances queues,
//! transmissions, and mobility, scores views, and emits observations and
//! rewards.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::channel::{self, LinkAllocation};
use crate::domain::Scenario;
use crate::metrics::{self, DeliveredInfo, Normalizer, RawViewComponents, SensedInfo, ViewScore};
use crate::queueing::{self, PkMode, SensedClass, SensingPlan};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("expected {expected} actions (one per RSU), got {got}")]
    WrongActionCount { expected: usize, got: usize },
    #[error("action for RSU {rsu} has length {got}, expected {expected}")]
    WrongActionLength {
        rsu: usize,
        expected: usize,
        got: usize,
    },
    #[error("episode is over; call reset")]
    EpisodeOver,
}

/// A decoded, feasible-by-construction decision for one served vehicle.
#[derive(Debug, Clone)]
pub struct VehicleDecision {
    pub vehicle: usize,
    pub distance: f64,
    pub plan: SensingPlan,
    /// `None` means the reliability floor is unreachable within the power
    /// budget: the vehicle transmits nothing this slot.
    pub tx_power: Option<f64>,
    /// Minimum power satisfying the reliability constraint at this distance.
    pub power_floor: Option<f64>,
    pub bandwidth: f64,
}

/// One RSU's decoded action at a slot.
#[derive(Debug, Clone)]
pub struct DecodedAction {
    pub rsu: usize,
    pub decisions: Vec<VehicleDecision>,
}

#[derive(Debug, Clone)]
struct Upload {
    vehicle: usize,
    info_type: usize,
    rsu: usize,
    /// Transmission start k = sensing slot time + queuing time (seconds).
    start: f64,
    arrival_moment: f64,
    update_moment: f64,
    queuing_time: f64,
    remaining_bits: f64,
    energy: f64,
}

/// One row of the per-slot score dump
/// (`t,rsu_id,view_id,theta,psi,xi,phi,omega,aov,cov`).
#[derive(Debug, Clone)]
pub struct ScoreRow {
    pub t: usize,
    pub rsu: usize,
    pub view: usize,
    pub raw: RawViewComponents,
    pub score: ViewScore,
}

pub const SCORE_CSV_HEADER: &str = "t,rsu_id,view_id,theta,psi,xi,phi,omega,aov,cov";

impl ScoreRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.rsu,
            self.view,
            self.raw.timeliness,
            self.raw.consistency,
            self.raw.redundancy,
            self.raw.sensing_cost,
            self.raw.transmission_cost,
            self.score.aov,
            self.score.cov
        )
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

pub struct Env {
    scenario: Arc<Scenario>,
    t: usize,
    done: bool,
    rng: ChaCha8Rng,
    fading: Gamma<f64>,
    normalizers: Vec<Normalizer>,
    /// Freshest cached update moment per (info type, vehicle), per RSU.
    caches: Vec<BTreeMap<(usize, usize), f64>>,
    in_flight: Vec<Upload>,
    last_decoded: Vec<DecodedAction>,
    score_rows: Vec<ScoreRow>,
    /// Max |V_e^t| over all RSU-slots; fixes the observation layout.
    v_max: usize,
}

impl Env {
    pub fn new(scenario: Arc<Scenario>) -> Self {
        let v_max = (0..scenario.time_slots)
            .flat_map(|t| (0..scenario.rsus.len()).map(move |e| (e, t)))
            .map(|(e, t)| scenario.views_at(e, t).len())
            .max()
            .unwrap_or(0)
            .max(1);
        let mean = scenario.channel.fading_mean;
        let var = scenario.channel.fading_variance.max(1e-12);
        let fading = Gamma::new(mean * mean / var, var / mean).expect("valid fading moments");
        let n_rsus = scenario.rsus.len();
        let window = scenario.norm_window;
        Env {
            rng: ChaCha8Rng::seed_from_u64(scenario.rng_seed),
            scenario,
            t: 0,
            done: false,
            fading,
            normalizers: (0..n_rsus).map(|_| Normalizer::new(window)).collect(),
            caches: vec![BTreeMap::new(); n_rsus],
            in_flight: Vec::new(),
            last_decoded: Vec::new(),
            score_rows: Vec::new(),
            v_max,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn obs_len(&self) -> usize {
        let s = &self.scenario;
        let (e, k, m) = (s.rsus.len(), s.k_max, s.info_types.len());
        e + 1 + k + k * m + m + self.v_max * m
    }

    pub fn action_len(&self) -> usize {
        let (k, m) = (self.scenario.k_max, self.scenario.info_types.len());
        k * (3 * m + 1) + k
    }

    /// Empties queues and caches, rewinds mobility, reseeds the episode's
    /// random draws. Deterministic for a given (scenario, seed).
    pub fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.t = 0;
        self.done = false;
        self.rng = ChaCha8Rng::seed_from_u64(self.scenario.rng_seed ^ seed.wrapping_mul(0x9e3779b97f4a7c15));
        for c in &mut self.caches {
            c.clear();
        }
        let window = self.scenario.norm_window;
        for n in &mut self.normalizers {
            *n = Normalizer::new(window);
        }
        self.in_flight.clear();
        self.last_decoded.clear();
        self.score_rows.clear();
        (0..self.scenario.rsus.len())
            .map(|e| self.observation(e, 0))
            .collect()
    }

    /// The up-to-K vehicles served by `rsu` at slot `t`: in range, assigned
    /// to this RSU (nearest in-range RSU, ties to the lower id), nearest
    /// first, ties by vehicle id.
    pub fn served_vehicles(&self, rsu: usize, t: usize) -> Vec<(usize, f64)> {
        let s = &self.scenario;
        let mut served: Vec<(usize, f64)> = (0..s.vehicles.len())
            .filter_map(|v| {
                let d = s.distance(v, rsu, t);
                if d > s.rsus[rsu].radio_range {
                    return None;
                }
                // assigned to the nearest covering RSU
                let assigned = (0..s.rsus.len())
                    .filter(|&e| s.distance(v, e, t) <= s.rsus[e].radio_range)
                    .min_by(|&a, &b| {
                        s.distance(v, a, t)
                            .total_cmp(&s.distance(v, b, t))
                            .then(a.cmp(&b))
                    })?;
                (assigned == rsu).then_some((v, d))
            })
            .collect();
        served.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        served.truncate(s.k_max);
        served
    }

    /// Turns a raw [0,1] action vector into feasible decisions. Total:
    /// every raw vector decodes, and the result satisfies the sensing,
    /// priority, power, bandwidth, and stability constraints by
    /// construction.
    pub fn decode_action(&self, raw: &[f64], rsu: usize, t: usize) -> DecodedAction {
        let s = &self.scenario;
        let (k_max, m) = (s.k_max, s.info_types.len());
        let served = self.served_vehicles(rsu, t);
        let per_vehicle = 3 * m + 1;
        let band_frac_base = k_max * per_vehicle;

        // bandwidth: proportional shares, equal split when all fractions
        // vanish, so the pool is spent exactly
        let fracs: Vec<f64> = (0..served.len())
            .map(|k| raw[band_frac_base + k].max(0.0))
            .collect();
        let total: f64 = fracs.iter().sum();
        let b_e = s.rsus[rsu].bandwidth;
        let share = |k: usize| {
            if total <= 1e-12 {
                b_e / served.len() as f64
            } else {
                b_e * fracs[k] / total
            }
        };

        let mut decisions = Vec::with_capacity(served.len());
        for (k, &(vehicle, distance)) in served.iter().enumerate() {
            let base = k * per_vehicle;
            let veh = &s.vehicles[vehicle];

            // sensing set, frequencies, priorities
            let mut sensed: Vec<(usize, f64, f64)> = Vec::new(); // (type, lambda, score)
            for entry in &veh.sensable {
                let d = entry.info_type;
                if raw[base + d] > 0.5 {
                    let frac = raw[base + m + d].clamp(0.0, 1.0);
                    let lambda = entry.lambda_min + frac * (entry.lambda_max - entry.lambda_min);
                    sensed.push((d, lambda, raw[base + 2 * m + d]));
                }
            }
            // dense rank: higher score first, ties broken by type id ascending
            sensed.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            let n = sensed.len() as i64;
            let mut plan = SensingPlan {
                sensed: sensed
                    .iter()
                    .enumerate()
                    .map(|(rank, &(info_type, lambda, _))| SensedClass {
                        info_type,
                        lambda,
                        priority: n - rank as i64,
                    })
                    .collect(),
            };

            // stability: rescale into rho < 1, clamp back to lambda_min,
            // then shed lowest-priority classes if clamping undid the rescale
            let rho = queueing::workload(&plan, &s.info_types);
            if rho >= 1.0 {
                let f = 0.99 / rho;
                for c in &mut plan.sensed {
                    let lambda_min = veh.sensable_entry(c.info_type).unwrap().lambda_min;
                    c.lambda = (c.lambda * f).max(lambda_min);
                }
                while queueing::workload(&plan, &s.info_types) >= 1.0 && !plan.sensed.is_empty() {
                    let drop_idx = plan
                        .sensed
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, c)| c.priority)
                        .map(|(i, _)| i)
                        .unwrap();
                    plan.sensed.remove(drop_idx);
                }
            }

            // power: at least the reliability floor, within the budget
            let frac = raw[base + 3 * m].clamp(0.0, 1.0);
            let (tx_power, power_floor) = match channel::min_reliable_power(distance, &s.channel) {
                Ok(floor) if floor <= veh.max_power => {
                    (Some((frac * veh.max_power).max(floor).min(veh.max_power)), Some(floor))
                }
                Ok(floor) => (None, Some(floor)),
                Err(_) => (None, None),
            };

            decisions.push(VehicleDecision {
                vehicle,
                distance,
                plan,
                tx_power,
                power_floor,
                bandwidth: share(k),
            });
        }
        DecodedAction { rsu, decisions }
    }

    /// Advances one slot: decode, sense, transmit, deliver, score, move.
    pub fn step(&mut self, actions: &[Vec<f64>]) -> Result<Step, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let s = Arc::clone(&self.scenario);
        let n_rsus = s.rsus.len();
        if actions.len() != n_rsus {
            return Err(EnvError::WrongActionCount {
                expected: n_rsus,
                got: actions.len(),
            });
        }
        let expected = self.action_len();
        for (e, a) in actions.iter().enumerate() {
            if a.len() != expected {
                return Err(EnvError::WrongActionLength {
                    rsu: e,
                    expected,
                    got: a.len(),
                });
            }
        }

        let t = self.t;
        let t_sec = t as f64 * s.slot_length;
        let slot_end = (t + 1) as f64 * s.slot_length;

        let decoded: Vec<DecodedAction> = (0..n_rsus)
            .map(|e| self.decode_action(&actions[e], e, t))
            .collect();

        // quasi-static fading: one draw per served vehicle-RSU link per slot,
        // in deterministic (rsu, slot-order) sequence
        let mut fading: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for action in &decoded {
            for d in &action.decisions {
                let gain = self.fading.sample(&mut self.rng);
                fading.insert((d.vehicle, action.rsu), gain);
            }
        }

        // sensing: new uploads enter each vehicle's priority queue unless a
        // copy of the same (vehicle, type) is still in flight to the RSU
        for action in &decoded {
            for dec in &action.decisions {
                for class in &dec.plan.sensed {
                    let busy = self.in_flight.iter().any(|u| {
                        u.vehicle == dec.vehicle
                            && u.info_type == class.info_type
                            && u.rsu == action.rsu
                    });
                    if busy {
                        continue;
                    }
                    let info = &s.info_types[class.info_type];
                    let (a, u) = queueing::moments(t_sec, class.lambda, info.update_interval)
                        .expect("decoded lambda > 0");
                    let q = queueing::queuing_time(
                        &dec.plan,
                        &s.info_types,
                        class.info_type,
                        PkMode::PaperLiteral,
                    )
                    .expect("decoded plan is stable");
                    self.in_flight.push(Upload {
                        vehicle: dec.vehicle,
                        info_type: class.info_type,
                        rsu: action.rsu,
                        start: t_sec + q,
                        arrival_moment: a,
                        update_moment: u,
                        queuing_time: q,
                        remaining_bits: info.size_bits,
                        energy: 0.0,
                    });
                }
            }
        }

        // advance transmissions through [t_sec, slot_end)
        let mut deliveries: Vec<Vec<DeliveredInfo>> = vec![Vec::new(); n_rsus];
        let mut kept = Vec::with_capacity(self.in_flight.len());
        for mut up in std::mem::take(&mut self.in_flight) {
            if s.distance(up.vehicle, up.rsu, t) > s.rsus[up.rsu].radio_range {
                continue; // coverage loss: dropped, no handover
            }
            let decision = decoded[up.rsu]
                .decisions
                .iter()
                .find(|d| d.vehicle == up.vehicle);
            let (power, bandwidth) = match decision {
                Some(d) => (d.tx_power, d.bandwidth),
                // in range but unserved this slot (overflow beyond K or
                // assigned elsewhere): link idles, upload is retained
                None => (None, 0.0),
            };
            let active_start = up.start.max(t_sec);
            if active_start >= slot_end {
                kept.push(up);
                continue;
            }
            let rate = match power {
                Some(pi) if bandwidth > 0.0 => {
                    let alloc = LinkAllocation {
                        tx_power: pi,
                        bandwidth,
                        fading_gain: fading[&(up.vehicle, up.rsu)],
                        distance: s.distance(up.vehicle, up.rsu, t),
                    };
                    channel::rate(&alloc, &s.channel).expect("distance > 0")
                }
                _ => 0.0,
            };
            if rate <= 0.0 {
                kept.push(up);
                continue;
            }
            let pi = power.unwrap();
            let span = slot_end - active_start;
            if up.remaining_bits <= rate * span {
                let tx_time = up.remaining_bits / rate;
                up.energy += pi * tx_time;
                let finish = active_start + tx_time;
                let g = finish - up.start;
                deliveries[up.rsu].push(DeliveredInfo {
                    vehicle: up.vehicle,
                    info_type: up.info_type,
                    arrival_moment: up.arrival_moment,
                    update_moment: up.update_moment,
                    queuing_time: up.queuing_time,
                    transmission_time: g,
                    energy: up.energy,
                });
                let cache = &mut self.caches[up.rsu];
                let key = (up.info_type, up.vehicle);
                let fresh = cache.get(&key).is_none_or(|&u0| up.update_moment >= u0);
                if fresh {
                    cache.insert(key, up.update_moment);
                }
            } else {
                up.remaining_bits -= rate * span;
                up.energy += pi * span;
                kept.push(up);
            }
        }
        self.in_flight = kept;

        // per-RSU sensed records (for the sensing-cost component)
        let sensed: Vec<Vec<SensedInfo>> = decoded
            .iter()
            .map(|action| {
                action
                    .decisions
                    .iter()
                    .flat_map(|dec| {
                        let veh = &s.vehicles[dec.vehicle];
                        dec.plan.sensed.iter().map(move |c| SensedInfo {
                            vehicle: dec.vehicle,
                            info_type: c.info_type,
                            sensing_cost: veh
                                .sensable_entry(c.info_type)
                                .map(|e| e.sensing_cost)
                                .unwrap_or(0.0),
                        })
                    })
                    .collect()
            })
            .collect();

        // score views and compute rewards
        let mut rewards = vec![0.0; n_rsus];
        for e in 0..n_rsus {
            let view_ids = s.views_at(e, t);
            if view_ids.is_empty() {
                continue; // reward defined 0 for an empty view set
            }
            let raws: Vec<RawViewComponents> = view_ids
                .iter()
                .map(|&v| {
                    metrics::raw_components(&s.views[v].required, &deliveries[e], &sensed[e])
                })
                .collect();
            self.normalizers[e].observe_slot(&raws);
            let mut sum = 0.0;
            for (&v, raw) in view_ids.iter().zip(&raws) {
                let score = self.normalizers[e].score_view(raw, &s.weights);
                sum += 2.0 - score.aov - score.cov;
                self.score_rows.push(ScoreRow {
                    t,
                    rsu: e,
                    view: v,
                    raw: *raw,
                    score,
                });
            }
            rewards[e] = sum / view_ids.len() as f64;
        }

        self.last_decoded = decoded;
        self.done = t + 1 >= s.time_slots;
        self.t = (t + 1).min(s.time_slots - 1);
        let observations = (0..n_rsus).map(|e| self.observation(e, self.t)).collect();
        Ok(Step {
            observations,
            rewards,
            done: self.done,
        })
    }

    /// Fixed-layout local observation of RSU `e` at slot `t`.
    fn observation(&self, rsu: usize, t: usize) -> Vec<f64> {
        let s = &self.scenario;
        let (n_rsus, k_max, m) = (s.rsus.len(), s.k_max, s.info_types.len());
        let mut obs = Vec::with_capacity(self.obs_len());
        for e in 0..n_rsus {
            obs.push(if e == rsu { 1.0 } else { 0.0 });
        }
        obs.push(t as f64 / s.time_slots as f64);
        let served = self.served_vehicles(rsu, t);
        for k in 0..k_max {
            obs.push(served.get(k).map_or(0.0, |&(_, d)| d / s.rsus[rsu].radio_range));
        }
        for k in 0..k_max {
            for ty in 0..m {
                let v = served
                    .get(k)
                    .map_or(0.0, |&(v, _)| {
                        s.vehicles[v].sensable_entry(ty).map_or(0.0, |_| 1.0)
                    });
                obs.push(v);
            }
        }
        // cache ages: freshest copy per type, 1.0 sentinel when absent
        let t_sec = t as f64 * s.slot_length;
        let horizon = s.time_slots as f64 * s.slot_length;
        for ty in 0..m {
            let freshest = self.caches[rsu]
                .range((ty, 0)..(ty, usize::MAX))
                .map(|(_, &u)| u)
                .fold(f64::NEG_INFINITY, f64::max);
            obs.push(if freshest.is_finite() {
                ((t_sec - freshest) / horizon).clamp(0.0, 1.0)
            } else {
                1.0
            });
        }
        let view_ids = s.views_at(rsu, t);
        for slot in 0..self.v_max {
            for ty in 0..m {
                let bit = view_ids
                    .get(slot)
                    .map_or(0.0, |&v| {
                        if s.views[v].required.binary_search(&ty).is_ok() {
                            1.0
                        } else {
                            0.0
                        }
                    });
                obs.push(bit);
            }
        }
        debug_assert_eq!(obs.len(), self.obs_len());
        obs
    }

    /// The decoded actions of the most recent step, for constraint audits.
    pub fn last_decoded(&self) -> &[DecodedAction] {
        &self.last_decoded
    }

    /// Drains accumulated per-slot score rows.
    pub fn take_score_rows(&mut self) -> Vec<ScoreRow> {
        std::mem::take(&mut self.score_rows)
    }

    /// Audits a decoded action set against the hard constraints; returns one
    /// description per violation found.
    pub fn check_constraints(&self, decoded: &[DecodedAction], t: usize) -> Vec<String> {
        let s = &self.scenario;
        let mut violations = Vec::new();
        for action in decoded {
            let mut bandwidth_sum = 0.0;
            for d in &action.decisions {
                let veh = &s.vehicles[d.vehicle];
                for (i, c) in d.plan.sensed.iter().enumerate() {
                    let entry = match veh.sensable_entry(c.info_type) {
                        Some(e) => e,
                        None => {
                            violations.push(format!(
                                "t={t} rsu={} vehicle={} senses unsensable type {}",
                                action.rsu, d.vehicle, c.info_type
                            ));
                            continue;
                        }
                    };
                    if c.lambda < entry.lambda_min - 1e-12 || c.lambda > entry.lambda_max + 1e-12 {
                        violations.push(format!(
                            "t={t} rsu={} vehicle={} lambda {} outside [{}, {}]",
                            action.rsu, d.vehicle, c.lambda, entry.lambda_min, entry.lambda_max
                        ));
                    }
                    for c2 in &d.plan.sensed[i + 1..] {
                        if c.priority == c2.priority {
                            violations.push(format!(
                                "t={t} rsu={} vehicle={} duplicate priority {}",
                                action.rsu, d.vehicle, c.priority
                            ));
                        }
                    }
                }
                if queueing::workload(&d.plan, &s.info_types) >= 1.0 {
                    violations.push(format!(
                        "t={t} rsu={} vehicle={} workload >= 1",
                        action.rsu, d.vehicle
                    ));
                }
                if let Some(pi) = d.tx_power {
                    if !(0.0..=veh.max_power * (1.0 + 1e-12)).contains(&pi) {
                        violations.push(format!(
                            "t={t} rsu={} vehicle={} power {} outside [0, {}]",
                            action.rsu, d.vehicle, pi, veh.max_power
                        ));
                    }
                    if !channel::reliability_holds(pi, d.distance, &s.channel) {
                        violations.push(format!(
                            "t={t} rsu={} vehicle={} power {} below reliability floor",
                            action.rsu, d.vehicle, pi
                        ));
                    }
                }
                let b_e = s.rsus[action.rsu].bandwidth;
                if d.bandwidth < -1e-9 || d.bandwidth > b_e * (1.0 + 1e-9) {
                    violations.push(format!(
                        "t={t} rsu={} vehicle={} bandwidth {} outside [0, {}]",
                        action.rsu, d.vehicle, d.bandwidth, b_e
                    ));
                }
                bandwidth_sum += d.bandwidth;
            }
            let b_e = s.rsus[action.rsu].bandwidth;
            if bandwidth_sum > b_e * (1.0 + 1e-9) {
                violations.push(format!(
                    "t={t} rsu={} bandwidth sum {} exceeds {}",
                    action.rsu, bandwidth_sum, b_e
                ));
            }
        }
        violations
    }
}

/// Cumulative reward: per-slot mean over RSUs, summed over slots.
pub fn episode_return(per_slot_rewards: &[Vec<f64>]) -> f64 {
    per_slot_rewards
        .iter()
        .map(|r| {
            if r.is_empty() {
                0.0
            } else {
                r.iter().sum::<f64>() / r.len() as f64
            }
        })
        .sum()
}
