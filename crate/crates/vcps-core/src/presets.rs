//! Canned scenario configurations used by tests, benches, and as shipped
//! starting points.

use crate::domain::{
    ChannelConfig, InfoTypeConfig, MetricWeights, RsuConfig, ScenarioConfig, VehicleProfile,
    VehicleSource, ViewConfig, ViewSchedule,
};

/// Small two-RSU scenario (8 vehicles, 3 info types, 4 views, T = 200) that
/// runs in seconds; the workhorse for tests and quick experiments.
pub fn desk_config() -> ScenarioConfig {
    ScenarioConfig {
        time_slots: 200,
        slot_length: 1.0,
        rng_seed: 7,
        rsus: vec![
            RsuConfig {
                id: 0,
                x_m: 250.0,
                y_m: 500.0,
                radio_range_m: 420.0,
                bandwidth_hz: 2e7,
            },
            RsuConfig {
                id: 1,
                x_m: 750.0,
                y_m: 500.0,
                radio_range_m: 420.0,
                bandwidth_hz: 2e7,
            },
        ],
        info_types: vec![
            InfoTypeConfig {
                id: 0,
                update_interval_s: 0.1,
                size_bits: 5e6,
                mean_service_s: 0.02,
                service_variance_s2: 4e-4,
            },
            InfoTypeConfig {
                id: 1,
                update_interval_s: 0.2,
                size_bits: 1e7,
                mean_service_s: 0.03,
                service_variance_s2: 9e-4,
            },
            InfoTypeConfig {
                id: 2,
                update_interval_s: 0.5,
                size_bits: 2e7,
                mean_service_s: 0.05,
                service_variance_s2: 2.5e-3,
            },
        ],
        vehicles: VehicleSource::Synthetic {
            count: 8,
            area_km: 1.0,
            speed_mps: [8.0, 15.0],
            profile: VehicleProfile {
                max_power_w: 0.1,
                lambda_min_hz: 0.5,
                lambda_max_hz: 4.0,
                sensing_cost: [0.2, 1.0],
                sensable_per_vehicle: Some(2),
            },
        },
        views: vec![
            ViewConfig {
                id: 0,
                required: vec![0, 1],
                rsu: ViewSchedule::Static(0),
            },
            ViewConfig {
                id: 1,
                required: vec![1, 2],
                rsu: ViewSchedule::Static(0),
            },
            ViewConfig {
                id: 2,
                required: vec![0, 2],
                rsu: ViewSchedule::Static(1),
            },
            ViewConfig {
                id: 3,
                required: vec![0, 1, 2],
                rsu: ViewSchedule::Static(1),
            },
        ],
        channel: ChannelConfig {
            noise_w: 1e-12,
            antenna_const: 1.0,
            path_loss_exp: 3.0,
            fading_mean: 2.0,
            fading_variance: 0.4,
            snr_target: 10.0,
            reliability: 0.9,
        },
        weights: MetricWeights {
            w1: 0.6,
            w2: 0.4,
            w3: 0.2,
            w4: 0.4,
            w5: 0.4,
        },
        max_vehicles_per_rsu: 6,
        norm_window: 100,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_scenario;

    #[test]
    fn desk_config_builds() {
        let scenario = build_scenario(&desk_config()).unwrap();
        assert_eq!(scenario.rsus.len(), 2);
        assert_eq!(scenario.vehicles.len(), 8);
        assert_eq!(scenario.info_types.len(), 3);
        assert_eq!(scenario.views.len(), 4);
        assert_eq!(scenario.time_slots, 200);
    }

    #[test]
    fn desk_config_roundtrips_through_json() {
        let cfg = desk_config();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(
            build_scenario(&cfg).unwrap().dump(),
            build_scenario(&back).unwrap().dump()
        );
    }
}
