//! Core domain types, scenario configuration, and deterministic scenario
//! construction.
//!
//! A [`Scenario`] is built once from a [`ScenarioConfig`] and is immutable
//! afterwards; the same config (including seed) always produces the same
//! scenario.

mod config;
mod trajectory;

pub use config::{
    ChannelConfig, CsvFormat, InfoTypeConfig, MetricWeights, RsuConfig, ScenarioConfig,
    SensableConfig, VehicleConfig, VehicleProfile, VehicleSource, ViewConfig, ViewSchedule,
};
pub use trajectory::{generate_synthetic_trajectories, load_csv_trajectories};

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("invalid config: {0}")]
    Invalid(FieldErrors),
    #[error("slot index {t} out of range (T = {time_slots})")]
    SlotOutOfRange { t: usize, time_slots: usize },
}

impl DomainError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        DomainError::Invalid(FieldErrors(vec![FieldError {
            field: field.to_string(),
            message: message.into(),
        }]))
    }
}

/// One named-field validation failure.
#[derive(Debug, Clone)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// All validation failures found in one pass over a config.
#[derive(Debug, Clone)]
pub struct FieldErrors(pub Vec<FieldError>);

impl std::fmt::Display for FieldErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|e| format!("{}: {}", e.field, e.message))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// A sensed-information class: type id, state update interval, payload size,
/// and the first two moments of its service-time distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationType {
    pub id: usize,
    pub update_interval: f64,
    pub size_bits: f64,
    pub mean_service: f64,
    pub service_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rsu {
    pub id: usize,
    pub location: (f64, f64),
    pub radio_range: f64,
    pub bandwidth: f64,
}

/// One entry of a vehicle's sensable set.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensable {
    pub info_type: usize,
    pub sensing_cost: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    /// One position per slot.
    pub positions: Vec<(f64, f64)>,
    pub sensable: Vec<Sensable>,
    pub max_power: f64,
}

impl Vehicle {
    pub fn sensable_entry(&self, info_type: usize) -> Option<&Sensable> {
        self.sensable.iter().find(|s| s.info_type == info_type)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRequirement {
    pub id: usize,
    /// Required info type ids, sorted ascending.
    pub required: Vec<usize>,
    pub schedule: ViewSchedule,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub time_slots: usize,
    pub slot_length: f64,
    pub rng_seed: u64,
    pub rsus: Vec<Rsu>,
    pub info_types: Vec<InformationType>,
    pub vehicles: Vec<Vehicle>,
    pub views: Vec<ViewRequirement>,
    pub channel: ChannelConfig,
    pub weights: MetricWeights,
    pub k_max: usize,
    pub norm_window: usize,
}

impl Scenario {
    pub fn distance(&self, vehicle: usize, rsu: usize, t: usize) -> f64 {
        let (vx, vy) = self.vehicles[vehicle].positions[t];
        let (rx, ry) = self.rsus[rsu].location;
        ((vx - rx).powi(2) + (vy - ry).powi(2)).sqrt()
    }

    /// Vehicles within radio coverage of `rsu` at slot `t` (distance <= r_e).
    pub fn vehicles_in_range(&self, rsu: usize, t: usize) -> Result<Vec<usize>, DomainError> {
        if t >= self.time_slots {
            return Err(DomainError::SlotOutOfRange {
                t,
                time_slots: self.time_slots,
            });
        }
        let range = self.rsus[rsu].radio_range;
        Ok((0..self.vehicles.len())
            .filter(|&s| self.distance(s, rsu, t) <= range)
            .collect())
    }

    /// View ids scheduled on `rsu` at slot `t`.
    pub fn views_at(&self, rsu: usize, t: usize) -> Vec<usize> {
        self.views
            .iter()
            .filter(|v| v.schedule.rsu_at(t) == rsu)
            .map(|v| v.id)
            .collect()
    }

    /// Canonical textual dump, stable across identically-seeded builds.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write;
        writeln!(s, "T={} slot={} seed={}", self.time_slots, self.slot_length, self.rng_seed)
            .unwrap();
        for r in &self.rsus {
            writeln!(s, "rsu {} @({:.6},{:.6}) r={} b={}", r.id, r.location.0, r.location.1, r.radio_range, r.bandwidth).unwrap();
        }
        for d in &self.info_types {
            writeln!(s, "info {} u={} |d|={} a={} b={}", d.id, d.update_interval, d.size_bits, d.mean_service, d.service_variance).unwrap();
        }
        for v in &self.vehicles {
            write!(s, "veh {} pi={} sens=[", v.id, v.max_power).unwrap();
            for e in &v.sensable {
                write!(s, "({},{:.9},{},{})", e.info_type, e.sensing_cost, e.lambda_min, e.lambda_max).unwrap();
            }
            writeln!(s, "]").unwrap();
            for p in &v.positions {
                writeln!(s, "  {:.9},{:.9}", p.0, p.1).unwrap();
            }
        }
        for v in &self.views {
            writeln!(s, "view {} req={:?}", v.id, v.required).unwrap();
        }
        s
    }
}

/// Builds a fully wired immutable [`Scenario`], validating every config
/// invariant and reporting all violations with their field names.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario, DomainError> {
    build_scenario_from(config, Path::new("."))
}

/// Like [`build_scenario`] but resolving relative CSV paths against `base`.
pub fn build_scenario_from(
    config: &ScenarioConfig,
    base: &Path,
) -> Result<Scenario, DomainError> {
    let mut errors: Vec<FieldError> = Vec::new();
    let mut err = |field: &str, message: String| {
        errors.push(FieldError {
            field: field.to_string(),
            message,
        })
    };

    if config.time_slots == 0 {
        err("time_slots", "must be >= 1".into());
    }
    if config.slot_length <= 0.0 {
        err("slot_length", "must be > 0".into());
    }
    if config.max_vehicles_per_rsu == 0 {
        err("max_vehicles_per_rsu", "must be >= 1".into());
    }
    if config.norm_window == 0 {
        err("norm_window", "must be >= 1".into());
    }

    let w = &config.weights;
    for (name, value) in [
        ("w1", w.w1),
        ("w2", w.w2),
        ("w3", w.w3),
        ("w4", w.w4),
        ("w5", w.w5),
    ] {
        if value < 0.0 {
            err(&format!("weights.{name}"), "must be >= 0".into());
        }
    }
    if (w.w1 + w.w2 - 1.0).abs() > 1e-9 {
        err("weights.w1", format!("w1 + w2 must sum to 1 (got {})", w.w1 + w.w2));
    }
    if (w.w3 + w.w4 + w.w5 - 1.0).abs() > 1e-9 {
        err(
            "weights.w3",
            format!("w3 + w4 + w5 must sum to 1 (got {})", w.w3 + w.w4 + w.w5),
        );
    }

    let c = &config.channel;
    if c.noise_w <= 0.0 {
        err("channel.noise_w", "must be > 0".into());
    }
    if c.antenna_const <= 0.0 {
        err("channel.antenna_const", "must be > 0".into());
    }
    if c.fading_mean <= 0.0 {
        err("channel.fading_mean", "must be > 0".into());
    }
    if c.fading_variance < 0.0 {
        err("channel.fading_variance", "must be >= 0".into());
    }
    if !(c.reliability > 0.0 && c.reliability < 1.0) {
        err("channel.reliability", "delta must lie in (0, 1)".into());
    }
    if c.snr_target < 0.0 {
        err("channel.snr_target", "must be >= 0".into());
    }

    let mut info_types = Vec::with_capacity(config.info_types.len());
    for (i, d) in config.info_types.iter().enumerate() {
        if d.id != i {
            err(&format!("info_types[{i}].id"), format!("ids must be 0..n in order (got {})", d.id));
        }
        if d.update_interval_s <= 0.0 {
            err(&format!("info_types[{i}].update_interval_s"), "must be > 0".into());
        }
        if d.size_bits <= 0.0 {
            err(&format!("info_types[{i}].size_bits"), "must be > 0".into());
        }
        if d.mean_service_s <= 0.0 {
            err(&format!("info_types[{i}].mean_service_s"), "must be > 0".into());
        }
        if d.service_variance_s2 < 0.0 {
            err(&format!("info_types[{i}].service_variance_s2"), "must be >= 0".into());
        }
        info_types.push(InformationType {
            id: d.id,
            update_interval: d.update_interval_s,
            size_bits: d.size_bits,
            mean_service: d.mean_service_s,
            service_variance: d.service_variance_s2,
        });
    }
    if info_types.is_empty() {
        err("info_types", "at least one info type required".into());
    }

    let mut rsus = Vec::with_capacity(config.rsus.len());
    for (i, r) in config.rsus.iter().enumerate() {
        if r.id != i {
            err(&format!("rsus[{i}].id"), format!("ids must be 0..n in order (got {})", r.id));
        }
        if r.radio_range_m <= 0.0 {
            err(&format!("rsus[{i}].radio_range_m"), "must be > 0".into());
        }
        if r.bandwidth_hz <= 0.0 {
            err(&format!("rsus[{i}].bandwidth_hz"), "must be > 0".into());
        }
        rsus.push(Rsu {
            id: r.id,
            location: (r.x_m, r.y_m),
            radio_range: r.radio_range_m,
            bandwidth: r.bandwidth_hz,
        });
    }
    if rsus.is_empty() {
        err("rsus", "at least one RSU required".into());
    }

    let vehicles = match build_vehicles(config, &info_types, base) {
        Ok(v) => v,
        Err(DomainError::Invalid(FieldErrors(es))) => {
            for e in es {
                err(&e.field.clone(), e.message);
            }
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    for (i, v) in vehicles.iter().enumerate() {
        if v.max_power <= 0.0 {
            err(&format!("vehicles[{i}].max_power_w"), "must be > 0".into());
        }
        for (j, s) in v.sensable.iter().enumerate() {
            let f = format!("vehicles[{i}].sensable[{j}]");
            if s.info_type >= info_types.len() {
                err(&f, format!("unknown info type {}", s.info_type));
            }
            if !(s.lambda_min > 0.0 && s.lambda_min <= s.lambda_max) {
                err(&f, "need 0 < lambda_min <= lambda_max".into());
            }
            if s.sensing_cost < 0.0 {
                err(&f, "sensing_cost must be >= 0".into());
            }
        }
    }

    let sensable_union: BTreeSet<usize> = vehicles
        .iter()
        .flat_map(|v| v.sensable.iter().map(|s| s.info_type))
        .collect();
    let mut views = Vec::with_capacity(config.views.len());
    for (i, v) in config.views.iter().enumerate() {
        if v.required.is_empty() {
            err(&format!("views[{i}].required"), "a view needs |D_v| >= 1".into());
        }
        let mut required: Vec<usize> = v.required.clone();
        required.sort_unstable();
        required.dedup();
        for &d in &required {
            if d >= info_types.len() {
                err(&format!("views[{i}].required"), format!("unknown info type {d}"));
            } else if !vehicles.is_empty() && !sensable_union.contains(&d) {
                err(
                    &format!("views[{i}].required"),
                    format!("info type {d} is sensable by no vehicle"),
                );
            }
        }
        match &v.rsu {
            ViewSchedule::Static(e) => {
                if *e >= rsus.len() {
                    err(&format!("views[{i}].rsu"), format!("unknown RSU {e}"));
                }
            }
            ViewSchedule::PerSlot(es) => {
                if es.len() != config.time_slots {
                    err(&format!("views[{i}].rsu"), "per-slot schedule must cover T slots".into());
                }
                if let Some(e) = es.iter().find(|e| **e >= rsus.len()) {
                    err(&format!("views[{i}].rsu"), format!("unknown RSU {e}"));
                }
            }
        }
        views.push(ViewRequirement {
            id: v.id,
            required,
            schedule: v.rsu.clone(),
        });
    }
    if views.is_empty() {
        err("views", "at least one view required".into());
    }

    if !errors.is_empty() {
        return Err(DomainError::Invalid(FieldErrors(errors)));
    }

    Ok(Scenario {
        time_slots: config.time_slots,
        slot_length: config.slot_length,
        rng_seed: config.rng_seed,
        rsus,
        info_types,
        vehicles,
        views,
        channel: config.channel,
        weights: config.weights,
        k_max: config.max_vehicles_per_rsu,
        norm_window: config.norm_window,
    })
}

fn build_vehicles(
    config: &ScenarioConfig,
    info_types: &[InformationType],
    base: &Path,
) -> Result<Vec<Vehicle>, DomainError> {
    match &config.vehicles {
        VehicleSource::Explicit { vehicles } => Ok(vehicles
            .iter()
            .map(|v| {
                let mut positions: Vec<(f64, f64)> =
                    v.trajectory.iter().map(|p| (p[0], p[1])).collect();
                let last = positions.last().copied().unwrap_or((0.0, 0.0));
                positions.resize(config.time_slots, last);
                positions.truncate(config.time_slots);
                Vehicle {
                    id: v.id,
                    positions,
                    sensable: v
                        .sensable
                        .iter()
                        .map(|s| Sensable {
                            info_type: s.info_type,
                            sensing_cost: s.sensing_cost,
                            lambda_min: s.lambda_min_hz,
                            lambda_max: s.lambda_max_hz,
                        })
                        .collect(),
                    max_power: v.max_power_w,
                }
            })
            .collect()),
        VehicleSource::Synthetic {
            count,
            area_km,
            speed_mps,
            profile,
        } => {
            let paths = generate_synthetic_trajectories(
                *count,
                *area_km,
                config.time_slots,
                config.slot_length,
                *speed_mps,
                config.rng_seed,
            )?;
            Ok(assign_profiles(paths, profile, info_types, config.rng_seed))
        }
        VehicleSource::Csv {
            path,
            format,
            profile,
        } => {
            let resolved = base.join(path);
            let paths = load_csv_trajectories(&resolved, *format, config.time_slots)?;
            Ok(assign_profiles(paths, profile, info_types, config.rng_seed))
        }
    }
}

/// Gives generated/ingested vehicles their sensable sets and costs, seeded.
fn assign_profiles(
    paths: Vec<Vec<(f64, f64)>>,
    profile: &VehicleProfile,
    info_types: &[InformationType],
    seed: u64,
) -> Vec<Vehicle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5e4a)); // separate stream from trajectories
    let n_types = info_types.len();
    let per_vehicle = profile.sensable_per_vehicle.unwrap_or(n_types).min(n_types).max(1);
    paths
        .into_iter()
        .enumerate()
        .map(|(id, positions)| {
            // round-robin base type keeps every type covered across the fleet
            let mut types: BTreeSet<usize> = BTreeSet::new();
            types.insert(id % n_types.max(1));
            while types.len() < per_vehicle {
                types.insert(rng.random_range(0..n_types));
            }
            let sensable = types
                .into_iter()
                .map(|info_type| Sensable {
                    info_type,
                    sensing_cost: rng.random_range(profile.sensing_cost[0]..=profile.sensing_cost[1]),
                    lambda_min: profile.lambda_min_hz,
                    lambda_max: profile.lambda_max_hz,
                })
                .collect();
            Vehicle {
                id,
                positions,
                sensable,
                max_power: profile.max_power_w,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::desk_config;

    #[test]
    fn paper_weights_accepted() {
        let cfg = desk_config();
        assert_eq!(cfg.weights.w1, 0.6);
        assert!(build_scenario(&cfg).is_ok());
    }

    #[test]
    fn bad_weight_sum_rejected_with_field_name() {
        let mut cfg = desk_config();
        cfg.weights.w1 = 0.5;
        cfg.weights.w2 = 0.4;
        match build_scenario(&cfg) {
            Err(DomainError::Invalid(errs)) => {
                assert!(errs.0.iter().any(|e| e.field == "weights.w1"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_gives_identical_dump() {
        let cfg = desk_config();
        let a = build_scenario(&cfg).unwrap().dump();
        let b = build_scenario(&cfg).unwrap().dump();
        assert_eq!(a, b);
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let mut cfg = desk_config();
        let r = 500.0;
        cfg.rsus = vec![RsuConfig {
            id: 0,
            x_m: 0.0,
            y_m: 0.0,
            radio_range_m: r,
            bandwidth_hz: 2e7,
        }];
        cfg.views = vec![ViewConfig {
            id: 0,
            required: vec![0],
            rsu: ViewSchedule::Static(0),
        }];
        cfg.vehicles = VehicleSource::Explicit {
            vehicles: vec![
                explicit_vehicle(0, 0.0, 0.0),     // distance 0
                explicit_vehicle(1, r, 0.0),       // exactly r_e
                explicit_vehicle(2, r + 1.0, 0.0), // just outside
            ],
        };
        let scenario = build_scenario(&cfg).unwrap();
        assert_eq!(scenario.vehicles_in_range(0, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn out_of_range_slot_is_an_error() {
        let scenario = build_scenario(&desk_config()).unwrap();
        assert!(scenario.vehicles_in_range(0, scenario.time_slots).is_err());
    }

    #[test]
    fn enlarging_radio_range_is_monotone() {
        let cfg = desk_config();
        let mut scenario = build_scenario(&cfg).unwrap();
        let small: BTreeSet<usize> =
            scenario.vehicles_in_range(0, 10).unwrap().into_iter().collect();
        scenario.rsus[0].radio_range *= 2.0;
        let large: BTreeSet<usize> =
            scenario.vehicles_in_range(0, 10).unwrap().into_iter().collect();
        assert!(small.is_subset(&large));
    }

    #[test]
    fn view_requiring_unsensable_type_rejected() {
        let mut cfg = desk_config();
        cfg.views[0].required = vec![99];
        assert!(matches!(build_scenario(&cfg), Err(DomainError::Invalid(_))));
    }

    fn explicit_vehicle(id: usize, x: f64, y: f64) -> VehicleConfig {
        VehicleConfig {
            id,
            trajectory: vec![[x, y]],
            sensable: vec![SensableConfig {
                info_type: 0,
                sensing_cost: 0.5,
                lambda_min_hz: 0.5,
                lambda_max_hz: 2.0,
            }],
            max_power_w: 0.1,
        }
    }
}
