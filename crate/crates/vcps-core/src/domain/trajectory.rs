//! Synthetic trajectory generation and CSV trajectory ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::CsvFormat;
use super::DomainError;

/// Mean Earth radius used by the local equirectangular projection.
const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Piecewise-linear waypoint paths inside an `area_km` x `area_km` square.
///
/// Each vehicle starts at a uniform position, picks a uniform waypoint and a
/// speed from `speed_mps`, walks toward it one slot at a time, then picks the
/// next waypoint. Fully determined by `seed`.
pub fn generate_synthetic_trajectories(
    n_vehicles: usize,
    area_km: f64,
    time_slots: usize,
    slot_length: f64,
    speed_mps: [f64; 2],
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>, DomainError> {
    if n_vehicles == 0 {
        return Err(DomainError::invalid("vehicles.count", "must be >= 1"));
    }
    if area_km <= 0.0 {
        return Err(DomainError::invalid("vehicles.area_km", "must be > 0"));
    }
    if speed_mps[0] <= 0.0 || speed_mps[1] < speed_mps[0] {
        return Err(DomainError::invalid(
            "vehicles.speed_mps",
            "band must satisfy 0 < min <= max",
        ));
    }
    let side = area_km * 1000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_vehicles);
    for _ in 0..n_vehicles {
        let mut pos = (rng.random_range(0.0..side), rng.random_range(0.0..side));
        let mut waypoint = (rng.random_range(0.0..side), rng.random_range(0.0..side));
        let mut speed = rng.random_range(speed_mps[0]..=speed_mps[1]);
        let mut path = Vec::with_capacity(time_slots);
        path.push(pos);
        for _ in 1..time_slots {
            let mut budget = speed * slot_length;
            while budget > 0.0 {
                let (dx, dy) = (waypoint.0 - pos.0, waypoint.1 - pos.1);
                let dist = (dx * dx + dy * dy).sqrt();
                if dist <= budget {
                    pos = waypoint;
                    budget -= dist;
                    waypoint = (rng.random_range(0.0..side), rng.random_range(0.0..side));
                    speed = rng.random_range(speed_mps[0]..=speed_mps[1]);
                } else {
                    pos = (pos.0 + dx / dist * budget, pos.1 + dy / dist * budget);
                    budget = 0.0;
                }
            }
            path.push(pos);
        }
        out.push(path);
    }
    Ok(out)
}

/// Loads per-vehicle trajectories from CSV, interpolating missing slots.
///
/// `xy_meters` rows are `vehicle_id,t,x_m,y_m` with `t` a slot index.
/// `lon_lat` rows are `vehicle_id,timestamp,lon,lat`; positions are projected
/// to planar meters with a local equirectangular approximation centered on
/// the data's mean coordinate.
pub fn load_csv_trajectories(
    path: &Path,
    format: CsvFormat,
    time_slots: usize,
) -> Result<Vec<Vec<(f64, f64)>>, DomainError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| DomainError::invalid("vehicles.path", format!("cannot open: {e}")))?;
    // vehicle id -> slot -> position
    let mut samples: BTreeMap<u64, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    let mut raw: Vec<(u64, usize, f64, f64)> = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| DomainError::invalid("vehicles.path", format!("bad row: {e}")))?;
        if record.len() < 4 {
            return Err(DomainError::invalid("vehicles.path", "rows need 4 columns"));
        }
        let parse = |i: usize| -> Result<f64, DomainError> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| DomainError::invalid("vehicles.path", format!("column {i}: {e}")))
        };
        let vid = parse(0)? as u64;
        let t = parse(1)?.round() as usize;
        raw.push((vid, t, parse(2)?, parse(3)?));
    }
    if raw.is_empty() {
        return Err(DomainError::invalid("vehicles.path", "no trajectory rows"));
    }
    match format {
        CsvFormat::XyMeters => {
            for (vid, t, x, y) in raw {
                samples.entry(vid).or_default().insert(t, (x, y));
            }
        }
        CsvFormat::LonLat => {
            let lat0 = raw.iter().map(|r| r.3).sum::<f64>() / raw.len() as f64;
            let lon0 = raw.iter().map(|r| r.2).sum::<f64>() / raw.len() as f64;
            let lat0_rad = lat0.to_radians();
            for (vid, t, lon, lat) in raw {
                let x = EARTH_RADIUS_M * (lon - lon0).to_radians() * lat0_rad.cos();
                let y = EARTH_RADIUS_M * (lat - lat0).to_radians();
                samples.entry(vid).or_default().insert(t, (x, y));
            }
        }
    }
    let mut out = Vec::with_capacity(samples.len());
    for (_, slots) in samples {
        out.push(interpolate(&slots, time_slots));
    }
    Ok(out)
}

/// Fills all `time_slots` positions from sparse samples by linear
/// interpolation, clamping before the first and after the last sample.
fn interpolate(samples: &BTreeMap<usize, (f64, f64)>, time_slots: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(time_slots);
    for t in 0..time_slots {
        if let Some(p) = samples.get(&t) {
            out.push(*p);
            continue;
        }
        let before = samples.range(..t).next_back();
        let after = samples.range(t + 1..).next();
        out.push(match (before, after) {
            (Some((&ta, &pa)), Some((&tb, &pb))) => {
                let f = (t - ta) as f64 / (tb - ta) as f64;
                (pa.0 + f * (pb.0 - pa.0), pa.1 + f * (pb.1 - pa.1))
            }
            (Some((_, &pa)), None) => pa,
            (None, Some((_, &pb))) => pb,
            (None, None) => (0.0, 0.0),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_slot_trajectory_has_one_position() {
        let paths =
            generate_synthetic_trajectories(3, 3.0, 1, 1.0, [5.0, 15.0], 7).unwrap();
        assert!(paths.iter().all(|p| p.len() == 1));
    }

    #[test]
    fn different_seeds_give_different_paths() {
        let a = generate_synthetic_trajectories(2, 3.0, 50, 1.0, [5.0, 15.0], 1).unwrap();
        let b = generate_synthetic_trajectories(2, 3.0, 50, 1.0, [5.0, 15.0], 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn same_seed_is_deterministic() {
        let a = generate_synthetic_trajectories(4, 3.0, 100, 1.0, [5.0, 15.0], 9).unwrap();
        let b = generate_synthetic_trajectories(4, 3.0, 100, 1.0, [5.0, 15.0], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paths_stay_inside_area() {
        let side = 3000.0;
        let paths =
            generate_synthetic_trajectories(5, 3.0, 200, 1.0, [5.0, 15.0], 11).unwrap();
        for p in &paths {
            for &(x, y) in p {
                assert!((0.0..=side).contains(&x) && (0.0..=side).contains(&y));
            }
        }
    }

    #[test]
    fn grid_coverage_over_long_horizon() {
        // 9 uniformly placed RSU cells in a 3x3 km area: every cell visited.
        let paths =
            generate_synthetic_trajectories(9, 3.0, 1000, 1.0, [10.0, 20.0], 42).unwrap();
        let mut visited = [[false; 3]; 3];
        for p in &paths {
            for &(x, y) in p {
                let cx = ((x / 1000.0) as usize).min(2);
                let cy = ((y / 1000.0) as usize).min(2);
                visited[cx][cy] = true;
            }
        }
        assert!(visited.iter().flatten().all(|&v| v));
    }

    #[test]
    fn csv_interpolation_fills_gaps() {
        let mut samples = BTreeMap::new();
        samples.insert(0, (0.0, 0.0));
        samples.insert(4, (4.0, 8.0));
        let path = interpolate(&samples, 6);
        assert_eq!(path[2], (2.0, 4.0));
        assert_eq!(path[5], (4.0, 8.0)); // clamped past the last sample
    }
}
