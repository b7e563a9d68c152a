//! Deterministic synthetic world generator: a grid road network with daily
//! congestion dynamics, random-walk vehicles, and configurable report
//! sparsity. Ground truth (true per-window travel times and per-trip segment
//! sequences) is retained so every pipeline stage can be checked against it.
//!
//! Congestion follows a half-sine daily bump per road class (arterials peak
//! in the morning, side streets in the evening), with the amplitude scaled
//! per day by a seeded jitter factor so that recent reports carry
//! information beyond the historical hourly mean.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{GpsPoint, Trip};
use crate::prep::{SegmentStats, WindowIndex};
use crate::roadnet::{Junction, RoadNetwork, RoadSegment, METERS_PER_DEGREE};

/// Midnight UTC, 2020-09-13; keeps window 0 aligned to a day boundary.
pub const DEFAULT_START_UNIX: i64 = 1_599_955_200;

const GRID_LON0: f64 = 23.72;
const GRID_LAT0: f64 = 37.98;

const VEHICLE_STREAM_TAG: u64 = 0x76_65_68;
const JITTER_STREAM_TAG: u64 = 0x6a_69_74;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoadClass {
    Arterial,
    Side,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub segment_length_m: f64,
    pub n_vehicles: usize,
    /// Simulated duration in hours.
    pub hours: f64,
    /// Fraction of traversals emitted as GPS trips.
    pub coverage_rho: f64,
    pub gps_noise_sigma_m: f64,
    pub base_speed_mps: f64,
    pub arterial_amplitude: f64,
    pub side_amplitude: f64,
    /// Phase in hours; the congestion bump peaks six hours after the phase.
    pub arterial_phase_h: f64,
    pub side_phase_h: f64,
    /// Scale amplitudes per day by a seeded factor in [0.6, 1.4].
    pub day_jitter: bool,
    pub start_unix: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid_rows: 6,
            grid_cols: 6,
            segment_length_m: 150.0,
            n_vehicles: 3,
            hours: 24.0,
            coverage_rho: 1.0,
            gps_noise_sigma_m: 0.0,
            base_speed_mps: 10.0,
            arterial_amplitude: 0.9,
            side_amplitude: 0.35,
            arterial_phase_h: 2.0, // peak 08:00
            side_phase_h: 12.0,    // peak 18:00
            day_jitter: true,
            start_unix: DEFAULT_START_UNIX,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// The standard acceptance fixture: 6x6 grid, 30% coverage, amplitude
    /// jitter on, 21 simulated days.
    pub fn standard_fixture() -> SynthConfig {
        SynthConfig {
            hours: 21.0 * 24.0,
            coverage_rho: 0.3,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_rows < 2 || self.grid_cols < 2 {
            return Err(Error::InvalidInput("grid must be at least 2x2".into()));
        }
        if !(self.coverage_rho > 0.0 && self.coverage_rho <= 1.0) {
            return Err(Error::InvalidInput("coverage_rho must be in (0, 1]".into()));
        }
        if !(self.hours > 0.0 && self.segment_length_m > 0.0 && self.base_speed_mps > 0.0) {
            return Err(Error::InvalidInput("hours, lengths and speeds must be positive".into()));
        }
        if self.n_vehicles == 0 {
            return Err(Error::InvalidInput("need at least one vehicle".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<SynthConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SynthConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripTruth {
    pub segments: Vec<usize>,
    pub travel_times: Vec<f64>,
    pub enter_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub start_unix: i64,
    pub window_seconds: i64,
    pub n_windows: usize,
    pub n_segments: usize,
    /// True travel time per `[segment][window]`, evaluated at the window
    /// midpoint.
    pub true_tt: Vec<Vec<f64>>,
    /// All simulated traversals per `[segment][window]`, keyed by exit time,
    /// including the ones not emitted as trips.
    pub traversal_counts: Vec<Vec<u32>>,
    /// Per emitted trip: the true segment sequence and traversal times.
    pub trips: BTreeMap<String, TripTruth>,
}

impl GroundTruth {
    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<GroundTruth> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn window_of(&self, t: f64) -> Option<usize> {
        let w = ((t - self.start_unix as f64) / self.window_seconds as f64).floor();
        if w >= 0.0 && (w as usize) < self.n_windows {
            Some(w as usize)
        } else {
            None
        }
    }
}

#[derive(Debug)]
pub struct SynthOutput {
    pub network: RoadNetwork,
    pub classes: Vec<RoadClass>,
    pub trips: Vec<Trip>,
    pub ground_truth: GroundTruth,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, tag: u64, k: u64) -> u64 {
    splitmix64(splitmix64(seed ^ tag) ^ k)
}

fn unit_from_hash(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Grid road network with `rows * cols` junctions and two directed segments
/// per adjacent pair.
pub fn grid_network(rows: usize, cols: usize, segment_length_m: f64) -> RoadNetwork {
    grid_with_classes(rows, cols, segment_length_m).0
}

pub fn grid_with_classes(
    rows: usize,
    cols: usize,
    segment_length_m: f64,
) -> (RoadNetwork, Vec<RoadClass>) {
    let dlat = segment_length_m / METERS_PER_DEGREE;
    let dlon = segment_length_m / (METERS_PER_DEGREE * GRID_LAT0.to_radians().cos());
    let mut junctions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            junctions.push(Junction {
                id: (r * cols + c) as i64,
                lon: GRID_LON0 + c as f64 * dlon,
                lat: GRID_LAT0 + r as f64 * dlat,
            });
        }
    }
    let jid = |r: usize, c: usize| (r * cols + c) as i64;
    let mut segments = Vec::new();
    let mut classes = Vec::new();
    let mut push_pair = |segments: &mut Vec<RoadSegment>, a: i64, b: i64, class: RoadClass| {
        let id = segments.len();
        segments.push(RoadSegment { id, from: a, to: b, length_m: segment_length_m });
        segments.push(RoadSegment { id: id + 1, from: b, to: a, length_m: segment_length_m });
        classes.push(class);
        classes.push(class);
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                let class = if r % 2 == 0 { RoadClass::Arterial } else { RoadClass::Side };
                push_pair(&mut segments, jid(r, c), jid(r, c + 1), class);
            }
            if r + 1 < rows {
                let class = if c % 2 == 0 { RoadClass::Arterial } else { RoadClass::Side };
                push_pair(&mut segments, jid(r, c), jid(r + 1, c), class);
            }
        }
    }
    let net = RoadNetwork::from_parts(junctions, segments).expect("grid network is valid");
    (net, classes)
}

/// Seeded per-day amplitude factor in [0.6, 1.4]; 1.0 when jitter is off.
pub fn day_jitter_factor(cfg: &SynthConfig, day: i64) -> f64 {
    if cfg.day_jitter {
        0.6 + 0.8 * unit_from_hash(stream_seed(cfg.seed, JITTER_STREAM_TAG, day as u64))
    } else {
        1.0
    }
}

fn congestion_bump(t_unix: f64, phase_h: f64) -> f64 {
    let hour_of_day = t_unix.rem_euclid(86_400.0) / 3_600.0;
    ((hour_of_day - phase_h) / 24.0 * TAU).sin().max(0.0)
}

/// True travel time of a segment entered at time `t`.
pub fn true_travel_time(cfg: &SynthConfig, class: RoadClass, length_m: f64, t: f64) -> f64 {
    let (amplitude, phase) = match class {
        RoadClass::Arterial => (cfg.arterial_amplitude, cfg.arterial_phase_h),
        RoadClass::Side => (cfg.side_amplitude, cfg.side_phase_h),
    };
    let day = ((t - cfg.start_unix as f64) / 86_400.0).floor() as i64;
    let slowdown = 1.0 + amplitude * day_jitter_factor(cfg, day) * congestion_bump(t, phase);
    length_m * slowdown / cfg.base_speed_mps
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let (network, classes) = grid_with_classes(cfg.grid_rows, cfg.grid_cols, cfg.segment_length_m);
    let n_segments = network.n_segments();
    let start = cfg.start_unix as f64;
    let end = start + cfg.hours * 3_600.0;
    let n_windows = ((cfg.hours * 3_600.0) / 900.0).ceil() as usize;

    let mut true_tt = vec![vec![0.0; n_windows]; n_segments];
    for (sid, row) in true_tt.iter_mut().enumerate() {
        let len = network.segments()[sid].length_m;
        for (w, cell) in row.iter_mut().enumerate() {
            let mid = start + 900.0 * w as f64 + 450.0;
            *cell = true_travel_time(cfg, classes[sid], len, mid);
        }
    }

    let mut traversal_counts = vec![vec![0u32; n_windows]; n_segments];
    let mut trips = Vec::new();
    let mut trip_truths = BTreeMap::new();
    let window_of = |t: f64| ((t - start) / 900.0).floor() as usize;

    let noise_scale_lon = cfg.gps_noise_sigma_m / (METERS_PER_DEGREE * GRID_LAT0.to_radians().cos());
    let noise_scale_lat = cfg.gps_noise_sigma_m / METERS_PER_DEGREE;

    for v in 0..cfg.n_vehicles {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, VEHICLE_STREAM_TAG, v as u64));
        let mut at = rng.gen_range(0..network.n_junctions());
        let mut prev_segment: Option<usize> = None;
        let mut t = start;
        let mut runs: Vec<Vec<(usize, f64, f64)>> = Vec::new(); // kept (segment, enter, tt)
        let mut run: Vec<(usize, f64, f64)> = Vec::new();

        while t < end {
            let outs = network.out_segments(at);
            let reverse_of_prev = prev_segment.and_then(|p| {
                outs.iter().copied().find(|&s| {
                    network.seg_to_idx(s) == network.seg_from_idx(p)
                        && network.seg_from_idx(s) == network.seg_to_idx(p)
                })
            });
            let choices: Vec<usize> = outs
                .iter()
                .copied()
                .filter(|&s| Some(s) != reverse_of_prev)
                .collect();
            let pool = if choices.is_empty() { outs } else { &choices[..] };
            let sid = pool[rng.gen_range(0..pool.len())];
            let tt = true_travel_time(cfg, classes[sid], network.segments()[sid].length_m, t);
            let exit = t + tt;
            if exit >= end {
                break;
            }
            traversal_counts[sid][window_of(exit)] += 1;
            if rng.gen::<f64>() < cfg.coverage_rho {
                run.push((sid, t, tt));
            } else if !run.is_empty() {
                runs.push(std::mem::take(&mut run));
            }
            prev_segment = Some(sid);
            at = network.seg_to_idx(sid);
            t = exit;
        }
        if !run.is_empty() {
            runs.push(run);
        }

        for (counter, run) in runs.into_iter().enumerate() {
            let trip_id = format!("v{v:03}t{counter:05}");
            let mut points = Vec::with_capacity(run.len() + 1);
            let push_point = |rng: &mut ChaCha8Rng, points: &mut Vec<GpsPoint>, jidx: usize, tau: f64| {
                let j = network.junctions()[jidx];
                let (dlon, dlat) = if cfg.gps_noise_sigma_m > 0.0 {
                    (gauss(rng) * noise_scale_lon, gauss(rng) * noise_scale_lat)
                } else {
                    (0.0, 0.0)
                };
                points.push(GpsPoint { lon: j.lon + dlon, lat: j.lat + dlat, tau });
            };
            push_point(&mut rng, &mut points, network.seg_from_idx(run[0].0), run[0].1);
            for &(sid, enter, tt) in &run {
                push_point(&mut rng, &mut points, network.seg_to_idx(sid), enter + tt);
            }
            trip_truths.insert(
                trip_id.clone(),
                TripTruth {
                    segments: run.iter().map(|&(s, _, _)| s).collect(),
                    travel_times: run.iter().map(|&(_, _, tt)| tt).collect(),
                    enter_s: run.iter().map(|&(_, a, _)| a).collect(),
                },
            );
            trips.push(Trip { trip_id, points });
        }
    }

    Ok(SynthOutput {
        network,
        classes,
        trips,
        ground_truth: GroundTruth {
            start_unix: cfg.start_unix,
            window_seconds: 900,
            n_windows,
            n_segments,
            true_tt,
            traversal_counts,
            trips: trip_truths,
        },
    })
}

/// Writes `network.json`, `trips.csv` and `groundtruth.json` into `dir`.
pub fn write_world(out: &SynthOutput, dir: impl AsRef<FsPath>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    out.network.save(dir.join("network.json"))?;
    crate::ingest::write_trips_csv(dir.join("trips.csv"), &out.trips)?;
    out.ground_truth.save(dir.join("groundtruth.json"))?;
    Ok(())
}

/// True standardized travel times for the `horizon` windows following
/// `position_w`, as a `[horizon][segment]` matrix. This is the evaluation
/// ground truth for forecasts made at `position_w`.
pub fn oracle_z(
    gt: &GroundTruth,
    stats: &SegmentStats,
    index: &WindowIndex,
    position_w: usize,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let w = position_w + k;
        let mid = index.window_mid(w);
        let g = gt.window_of(mid).ok_or_else(|| {
            Error::InvalidInput(format!("window {w} outside ground-truth range"))
        })?;
        let mut row = Vec::with_capacity(gt.n_segments);
        for sid in 0..gt.n_segments {
            row.push(stats.standardize(sid, gt.true_tt[sid][g], mid)?);
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_coverage_single_vehicle_replays_walk() {
        let cfg = SynthConfig {
            grid_rows: 3,
            grid_cols: 3,
            n_vehicles: 1,
            hours: 1.0,
            coverage_rho: 1.0,
            gps_noise_sigma_m: 0.0,
            ..SynthConfig::default()
        };
        let world = generate(&cfg).unwrap();
        assert_eq!(world.trips.len(), 1);
        let trip = &world.trips[0];
        let truth = &world.ground_truth.trips[&trip.trip_id];
        assert_eq!(trip.points.len(), truth.segments.len() + 1);
        let total: u32 = world
            .ground_truth
            .traversal_counts
            .iter()
            .flatten()
            .sum();
        assert_eq!(total as usize, truth.segments.len());
    }

    #[test]
    fn trips_are_physically_consistent() {
        let cfg = SynthConfig {
            grid_rows: 4,
            grid_cols: 4,
            n_vehicles: 3,
            hours: 5.0,
            coverage_rho: 0.6,
            ..SynthConfig::default()
        };
        let world = generate(&cfg).unwrap();
        assert!(!world.trips.is_empty());
        for (id, truth) in &world.ground_truth.trips {
            for ((&sid, &tt), &enter) in truth
                .segments
                .iter()
                .zip(&truth.travel_times)
                .zip(&truth.enter_s)
            {
                let len = world.network.segments()[sid].length_m;
                let want = true_travel_time(&cfg, world.classes[sid], len, enter);
                assert!((tt - want).abs() < 1e-9, "trip {id} segment {sid}");
            }
            // GPS timestamps respect the traversal times up to the f64
            // resolution of absolute unix times (~2.4e-7 s).
            let trip = world.trips.iter().find(|t| &t.trip_id == id).unwrap();
            for (k, &tt) in truth.travel_times.iter().enumerate() {
                let dt = trip.points[k + 1].tau - trip.points[k].tau;
                assert!((dt - tt).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            grid_rows: 4,
            grid_cols: 4,
            n_vehicles: 2,
            hours: 3.0,
            coverage_rho: 0.5,
            gps_noise_sigma_m: 3.0,
            ..SynthConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_world(&generate(&cfg).unwrap(), a.path()).unwrap();
        write_world(&generate(&cfg).unwrap(), b.path()).unwrap();
        for name in ["network.json", "trips.csv", "groundtruth.json"] {
            let fa = std::fs::read(a.path().join(name)).unwrap();
            let fb = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(fa, fb, "{name} differs between runs");
        }
    }

    #[test]
    fn jitter_factor_range_and_determinism() {
        let cfg = SynthConfig::default();
        for day in 0..100 {
            let j = day_jitter_factor(&cfg, day);
            assert!((0.6..=1.4).contains(&j));
            assert_eq!(j, day_jitter_factor(&cfg, day));
        }
        let flat = SynthConfig { day_jitter: false, ..SynthConfig::default() };
        assert_eq!(day_jitter_factor(&flat, 3), 1.0);
    }

    #[test]
    fn constant_world_has_constant_travel_times() {
        let cfg = SynthConfig {
            arterial_amplitude: 0.0,
            side_amplitude: 0.0,
            hours: 6.0,
            ..SynthConfig::default()
        };
        let world = generate(&cfg).unwrap();
        for row in &world.ground_truth.true_tt {
            for &v in row {
                assert!((v - row[0]).abs() < 1e-12);
            }
        }
    }
}
