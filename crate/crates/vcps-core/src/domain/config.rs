//! Scenario configuration as loaded from JSON.
//!
//! The schema is documented in `docs/config-schema.md`. All units are SI:
//! meters, seconds, watts, hertz, bits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of discrete slots T in one episode.
    pub time_slots: usize,
    /// Wall-clock length of one slot in seconds.
    #[serde(default = "default_slot_length")]
    pub slot_length: f64,
    /// Seed for every random draw made during scenario construction.
    pub rng_seed: u64,
    pub rsus: Vec<RsuConfig>,
    pub info_types: Vec<InfoTypeConfig>,
    pub vehicles: VehicleSource,
    pub views: Vec<ViewConfig>,
    pub channel: ChannelConfig,
    pub weights: MetricWeights,
    /// K: number of vehicle slots in each RSU's observation/action encoding.
    pub max_vehicles_per_rsu: usize,
    /// W: sliding-window length (slots) for metric min-max normalization.
    #[serde(default = "default_norm_window")]
    pub norm_window: usize,
}

fn default_slot_length() -> f64 {
    1.0
}

fn default_norm_window() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RsuConfig {
    pub id: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub radio_range_m: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoTypeConfig {
    pub id: usize,
    /// State update interval u_d in seconds.
    pub update_interval_s: f64,
    /// Payload size |d| in bits.
    pub size_bits: f64,
    /// Mean service (transmission preparation) time in seconds.
    pub mean_service_s: f64,
    /// Service-time variance in seconds squared.
    pub service_variance_s2: f64,
}

/// Where vehicle trajectories come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum VehicleSource {
    /// Seeded piecewise-linear waypoint paths inside a square area.
    Synthetic {
        count: usize,
        area_km: f64,
        /// [min, max] speed band in m/s.
        speed_mps: [f64; 2],
        profile: VehicleProfile,
    },
    /// Trajectories ingested from a CSV file (see `docs/config-schema.md`).
    Csv {
        path: String,
        format: CsvFormat,
        profile: VehicleProfile,
    },
    /// Fully explicit vehicles with inline per-slot positions.
    Explicit { vehicles: Vec<VehicleConfig> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvFormat {
    /// Header `vehicle_id,t,x_m,y_m`.
    XyMeters,
    /// Header `vehicle_id,timestamp,lon,lat`; projected to local planar meters.
    LonLat,
}

/// Shared sensing/power profile applied to generated or ingested vehicles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleProfile {
    pub max_power_w: f64,
    pub lambda_min_hz: f64,
    pub lambda_max_hz: f64,
    /// Per-info sensing cost drawn uniform in [lo, hi].
    pub sensing_cost: [f64; 2],
    /// How many info types each vehicle can sense; `None` means all of them.
    #[serde(default)]
    pub sensable_per_vehicle: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleConfig {
    pub id: usize,
    /// One (x, y) pair per slot; shorter lists hold the last position.
    pub trajectory: Vec<[f64; 2]>,
    pub sensable: Vec<SensableConfig>,
    pub max_power_w: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensableConfig {
    pub info_type: usize,
    pub sensing_cost: f64,
    pub lambda_min_hz: f64,
    pub lambda_max_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewConfig {
    pub id: usize,
    /// Info type ids the view requires (|D_v| >= 1).
    pub required: Vec<usize>,
    pub rsu: ViewSchedule,
}

/// Which RSU must construct the view, per slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ViewSchedule {
    /// The same RSU every slot.
    Static(usize),
    /// One RSU id per slot.
    PerSlot(Vec<usize>),
}

impl ViewSchedule {
    pub fn rsu_at(&self, t: usize) -> usize {
        match self {
            ViewSchedule::Static(e) => *e,
            ViewSchedule::PerSlot(es) => es[t.min(es.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// AWGN power N0 in watts (-90 dBm = 1e-12 W).
    pub noise_w: f64,
    /// Antenna constant tau.
    #[serde(default = "default_antenna")]
    pub antenna_const: f64,
    /// Path-loss exponent phi.
    pub path_loss_exp: f64,
    /// Fading gain |h|^2 mean mu.
    pub fading_mean: f64,
    /// Fading gain |h|^2 variance sigma.
    pub fading_variance: f64,
    /// Target SNR (linear) for the reliability constraint.
    pub snr_target: f64,
    /// Reliability threshold delta in (0, 1).
    pub reliability: f64,
}

fn default_antenna() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
}
