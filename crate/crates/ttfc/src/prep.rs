//! Report-log preparation: hour-of-day de-trending, per-segment
//! standardization, and 15-minute window aggregation into the sparse
//! travel-time matrix consumed by the model.
//!
//! Transform order: the hourly profile is subtracted first, then the
//! residuals are Z-scored per segment (so the residual mean is ~0 by
//! construction). Inside a window, reports are standardized first and then
//! averaged; with windows aligned to the hour both orders coincide, the
//! stated one is canonical for determinism.

use std::collections::BTreeMap;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ReportLog;

pub const DEFAULT_SIGMA_FLOOR_S: f64 = 1.0;
pub const DEFAULT_WINDOW_SECONDS: i64 = 900;

/// Lowest travel time a destandardized value may take, in seconds.
pub const MIN_TRAVEL_TIME_S: f64 = 0.1;

/// Hour of day (UTC) a report time falls into.
pub fn hour_of(tau: f64) -> usize {
    ((tau / 3600.0).floor() as i64).rem_euclid(24) as usize
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegStat {
    pub mu: f64,
    pub sigma: f64,
    pub hourly: Vec<f64>,
    pub count: usize,
}

/// Per-segment hourly profiles and residual moments, fitted from a report
/// log. Segments without reports fall back to the global mean profile with
/// `sigma = sigma_floor`.
#[derive(Debug, Clone)]
pub struct SegmentStats {
    pub sigma_floor: f64,
    pub segments: Vec<SegStat>,
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    sigma_floor: f64,
    segments: BTreeMap<String, SegStat>,
}

impl SegmentStats {
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    fn seg(&self, segment_id: usize) -> Result<&SegStat> {
        self.segments.get(segment_id).ok_or(Error::UnknownSegment(segment_id))
    }

    /// Z-score of a raw travel time after removing the hourly profile.
    pub fn standardize(&self, segment_id: usize, travel_time_s: f64, tau: f64) -> Result<f64> {
        let s = self.seg(segment_id)?;
        Ok(((travel_time_s - s.hourly[hour_of(tau)]) - s.mu) / s.sigma)
    }

    /// Inverse of [`SegmentStats::standardize`], clamped below at
    /// [`MIN_TRAVEL_TIME_S`].
    pub fn destandardize(&self, segment_id: usize, z: f64, tau: f64) -> Result<f64> {
        let s = self.seg(segment_id)?;
        Ok((s.hourly[hour_of(tau)] + s.mu + z * s.sigma).max(MIN_TRAVEL_TIME_S))
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let file = StatsFile {
            sigma_floor: self.sigma_floor,
            segments: self
                .segments
                .iter()
                .enumerate()
                .map(|(id, s)| (id.to_string(), s.clone()))
                .collect(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<SegmentStats> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: StatsFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let n = file.segments.len();
        let mut segments = vec![None; n];
        for (key, stat) in file.segments {
            let id: usize = key
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad segment key '{key}' in stats file")))?;
            if id >= n {
                return Err(Error::InvalidInput(format!(
                    "stats file segment ids are not contiguous (found {id} among {n})"
                )));
            }
            if stat.hourly.len() != 24 {
                return Err(Error::InvalidInput(format!(
                    "segment {id}: hourly profile must have 24 entries"
                )));
            }
            segments[id] = Some(stat);
        }
        let segments = segments
            .into_iter()
            .enumerate()
            .map(|(id, s)| {
                s.ok_or_else(|| Error::InvalidInput(format!("stats file missing segment {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SegmentStats {
            sigma_floor: file.sigma_floor,
            segments,
        })
    }
}

/// Fits hourly profiles and residual moments. `n_segments` fixes the segment
/// universe; ids in the log beyond it are rejected.
pub fn fit_stats(log: &ReportLog, sigma_floor: f64, n_segments: usize) -> Result<SegmentStats> {
    if log.is_empty() {
        return Err(Error::InvalidInput("cannot fit stats on an empty report log".into()));
    }
    if !(sigma_floor > 0.0) {
        return Err(Error::InvalidInput("sigma_floor must be positive".into()));
    }

    let mut hour_sum = vec![[0.0f64; 24]; n_segments];
    let mut hour_cnt = vec![[0usize; 24]; n_segments];
    let mut global_sum = 0.0;
    for r in log.reports() {
        if r.segment_id >= n_segments {
            return Err(Error::UnknownSegment(r.segment_id));
        }
        let h = hour_of(r.tau);
        hour_sum[r.segment_id][h] += r.travel_time_s;
        hour_cnt[r.segment_id][h] += 1;
        global_sum += r.travel_time_s;
    }
    let global_mean = global_sum / log.len() as f64;

    let mut segments: Vec<SegStat> = (0..n_segments)
        .map(|sid| {
            let mut hourly = vec![0.0; 24];
            let populated: Vec<usize> = (0..24).filter(|&h| hour_cnt[sid][h] > 0).collect();
            let fill = if populated.is_empty() {
                global_mean
            } else {
                let sum: f64 = populated.iter().map(|&h| hour_sum[sid][h] / hour_cnt[sid][h] as f64).sum();
                sum / populated.len() as f64
            };
            for h in 0..24 {
                hourly[h] = if hour_cnt[sid][h] > 0 {
                    hour_sum[sid][h] / hour_cnt[sid][h] as f64
                } else {
                    fill
                };
            }
            SegStat { mu: 0.0, sigma: sigma_floor, hourly, count: 0 }
        })
        .collect();

    let mut res_sum = vec![0.0f64; n_segments];
    let mut res_sumsq = vec![0.0f64; n_segments];
    for r in log.reports() {
        let res = r.travel_time_s - segments[r.segment_id].hourly[hour_of(r.tau)];
        res_sum[r.segment_id] += res;
        res_sumsq[r.segment_id] += res * res;
        segments[r.segment_id].count += 1;
    }
    for (sid, s) in segments.iter_mut().enumerate() {
        if s.count > 0 {
            let n = s.count as f64;
            s.mu = res_sum[sid] / n;
            let var = (res_sumsq[sid] / n - s.mu * s.mu).max(0.0);
            s.sigma = var.sqrt().max(sigma_floor);
        }
    }

    Ok(SegmentStats { sigma_floor, segments })
}

/// Uniform 15-minute (by default) time windows anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowIndex {
    /// Unix seconds of window 0's start.
    pub origin: i64,
    pub window_seconds: i64,
    pub count: usize,
}

impl WindowIndex {
    pub fn new(origin: i64, window_seconds: i64, count: usize) -> WindowIndex {
        WindowIndex { origin, window_seconds, count }
    }

    /// Index covering a log: origin at midnight UTC of the first report's
    /// day, enough windows to hold the last report.
    pub fn covering(log: &ReportLog) -> Result<WindowIndex> {
        let first = log
            .reports()
            .first()
            .ok_or_else(|| Error::InvalidInput("empty report log".into()))?;
        let last = log.reports().last().expect("non-empty");
        let origin = (first.tau / 86_400.0).floor() as i64 * 86_400;
        let count = ((last.tau - origin as f64) / DEFAULT_WINDOW_SECONDS as f64).floor() as usize + 1;
        Ok(WindowIndex::new(origin, DEFAULT_WINDOW_SECONDS, count))
    }

    pub fn window_of(&self, tau: f64) -> Option<usize> {
        let w = ((tau - self.origin as f64) / self.window_seconds as f64).floor();
        if w >= 0.0 && (w as usize) < self.count {
            Some(w as usize)
        } else {
            None
        }
    }

    pub fn window_start(&self, w: usize) -> f64 {
        (self.origin + self.window_seconds * w as i64) as f64
    }

    pub fn window_mid(&self, w: usize) -> f64 {
        self.window_start(w) + self.window_seconds as f64 / 2.0
    }
}

/// The distinct segments observed in one window with their aggregated
/// standardized travel times. May be empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowBatch {
    pub window: usize,
    pub segment_ids: Vec<usize>,
    pub z_values: Vec<f64>,
}

impl WindowBatch {
    pub fn is_empty(&self) -> bool {
        self.segment_ids.is_empty()
    }

    pub fn len(&self) -> usize {
        self.segment_ids.len()
    }
}

/// Sparse segment-by-window matrix of standardized travel times, stored as
/// one batch per window.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub index: WindowIndex,
    pub batches: Vec<WindowBatch>,
    pub stats: SegmentStats,
    pub n_segments: usize,
    /// Reports outside the index range, skipped during aggregation.
    pub skipped_reports: usize,
}

impl WindowedDataset {
    /// Matrix cell `(segment, window)`: present iff the segment was observed
    /// in that window.
    pub fn m_cell(&self, segment_id: usize, window: usize) -> Option<f64> {
        let batch = self.batches.get(window)?;
        let pos = batch.segment_ids.binary_search(&segment_id).ok()?;
        Some(batch.z_values[pos])
    }

    pub fn observed_cells(&self) -> usize {
        self.batches.iter().map(|b| b.len()).sum()
    }

    pub fn density(&self) -> f64 {
        self.observed_cells() as f64 / (self.n_segments as f64 * self.index.count as f64)
    }
}

/// Groups standardized reports into windows; multiple reports for one
/// segment in one window average in z-space.
pub fn build_windows(log: &ReportLog, stats: &SegmentStats, index: WindowIndex) -> Result<WindowedDataset> {
    let n_segments = stats.n_segments();
    let mut sums: Vec<BTreeMap<usize, (f64, usize)>> = vec![BTreeMap::new(); index.count];
    let mut skipped = 0usize;
    for r in log.reports() {
        let Some(w) = index.window_of(r.tau) else {
            skipped += 1;
            continue;
        };
        let z = stats.standardize(r.segment_id, r.travel_time_s, r.tau)?;
        let e = sums[w].entry(r.segment_id).or_insert((0.0, 0));
        e.0 += z;
        e.1 += 1;
    }
    let batches = sums
        .into_iter()
        .enumerate()
        .map(|(w, m)| {
            let mut segment_ids = Vec::with_capacity(m.len());
            let mut z_values = Vec::with_capacity(m.len());
            for (sid, (sum, cnt)) in m {
                segment_ids.push(sid);
                z_values.push(sum / cnt as f64);
            }
            WindowBatch { window: w, segment_ids, z_values }
        })
        .collect();
    Ok(WindowedDataset {
        index,
        batches,
        stats: stats.clone(),
        n_segments,
        skipped_reports: skipped,
    })
}

/// A training/evaluation position: inputs are windows `t-L+1..=t`, targets
/// start at `t+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub t: usize,
}

impl Sample {
    pub fn input_windows(&self, l: usize) -> std::ops::RangeInclusive<usize> {
        (self.t + 1 - l)..=self.t
    }

    pub fn target_window(&self) -> usize {
        self.t + 1
    }
}

/// Sliding-window samples with stride 1. Positions whose first target
/// window is empty are dropped (there is nothing to train on).
pub fn make_samples(ds: &WindowedDataset, l: usize, h: usize) -> Result<Vec<Sample>> {
    if l < 1 || h < 1 {
        return Err(Error::InvalidInput("L and H must be at least 1".into()));
    }
    if ds.index.count < l + h {
        return Err(Error::InvalidInput(format!(
            "dataset too short: {} windows < L+H = {}",
            ds.index.count,
            l + h
        )));
    }
    Ok(((l - 1)..=(ds.index.count - h - 1))
        .map(|t| Sample { t })
        .filter(|s| !ds.batches[s.target_window()].is_empty())
        .collect())
}

/// Chronological window split; returns `(train_end, val_end)` window
/// indexes (exclusive).
pub fn chronological_split(count: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize)> {
    let (a, b, c) = fractions;
    if (a + b + c - 1.0).abs() > 1e-9 || a <= 0.0 || b < 0.0 || c < 0.0 {
        return Err(Error::InvalidInput("split fractions must be non-negative and sum to 1".into()));
    }
    let train_end = (count as f64 * a).round() as usize;
    let val_end = (count as f64 * (a + b)).round() as usize;
    Ok((train_end.min(count), val_end.min(count)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ReportLog, TravelTimeReport};
    use crate::synthgen::{self, SynthConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn report(seg: usize, tt: f64, tau: f64) -> TravelTimeReport {
        TravelTimeReport {
            trip_id: "t".into(),
            segment_id: seg,
            travel_time_s: tt,
            tau,
        }
    }

    /// One segment, hourly profile flat at `hourly`, unit-free sigma.
    fn flat_stats(n: usize, hourly: f64, sigma: f64) -> SegmentStats {
        SegmentStats {
            sigma_floor: 1.0,
            segments: (0..n)
                .map(|_| SegStat {
                    mu: 0.0,
                    sigma,
                    hourly: vec![hourly; 24],
                    count: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn fit_two_reports_same_hour() {
        let tau = 8.0 * 3600.0 + 60.0; // hour 8
        let log = ReportLog::from_reports(vec![report(0, 10.0, tau), report(0, 14.0, tau + 30.0)]);
        let stats = fit_stats(&log, 1.0, 1).unwrap();
        let s = &stats.segments[0];
        assert!((s.hourly[8] - 12.0).abs() < 1e-12);
        assert!(s.mu.abs() < 1e-12);
        assert!((s.sigma - 2.0).abs() < 1e-12, "population std of {{-2,+2}}");
        assert_eq!(s.count, 2);
    }

    #[test]
    fn fit_single_report_gets_sigma_floor() {
        let tau = 5.0 * 3600.0;
        let log = ReportLog::from_reports(vec![report(0, 42.0, tau)]);
        let stats = fit_stats(&log, 1.0, 1).unwrap();
        let s = &stats.segments[0];
        assert!((s.hourly[5] - 42.0).abs() < 1e-12);
        assert!(s.mu.abs() < 1e-12);
        assert_eq!(s.sigma, 1.0);
    }

    #[test]
    fn fit_unobserved_segment_gets_global_mean() {
        let log = ReportLog::from_reports(vec![report(0, 10.0, 0.0), report(0, 20.0, 10.0)]);
        let stats = fit_stats(&log, 1.0, 2).unwrap();
        let s = &stats.segments[1];
        assert!(s.hourly.iter().all(|&v| (v - 15.0).abs() < 1e-12));
        assert_eq!(s.mu, 0.0);
        assert_eq!(s.sigma, 1.0);
        assert_eq!(s.count, 0);
    }

    #[test]
    fn standardize_round_numbers() {
        let stats = flat_stats(1, 50.0, 5.0);
        let z = stats.standardize(0, 60.0, 0.0).unwrap();
        assert!((z - 2.0).abs() < 1e-12);
        assert!(stats.standardize(0, 50.0, 0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn destandardize_is_inverse() {
        let stats = flat_stats(3, 37.0, 4.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(0.5..500.0);
            let tau: f64 = rng.gen_range(0.0..1e6);
            let z = stats.standardize(1, x, tau).unwrap();
            let back = stats.destandardize(1, z, tau).unwrap();
            assert!((back - x).abs() < 1e-9);
        }
    }

    #[test]
    fn destandardize_baseline_and_clamp() {
        let stats = flat_stats(1, 50.0, 5.0);
        assert!((stats.destandardize(0, 0.0, 0.0).unwrap() - 50.0).abs() < 1e-12);
        assert!((stats.destandardize(0, 1.0, 0.0).unwrap() - 55.0).abs() < 1e-12);
        assert_eq!(stats.destandardize(0, -1e6, 0.0).unwrap(), MIN_TRAVEL_TIME_S);
    }

    #[test]
    fn unknown_segment_is_an_error() {
        let stats = flat_stats(1, 50.0, 5.0);
        assert!(matches!(stats.standardize(9, 1.0, 0.0), Err(Error::UnknownSegment(9))));
        assert!(matches!(stats.destandardize(9, 1.0, 0.0), Err(Error::UnknownSegment(9))));
    }

    #[test]
    fn window_cell_averages_z_values() {
        let stats = flat_stats(1, 50.0, 5.0);
        // z-values 0.4 and 0.8 in the same window -> 0.6.
        let log = ReportLog::from_reports(vec![report(0, 52.0, 100.0), report(0, 54.0, 200.0)]);
        let index = WindowIndex::new(0, 900, 2);
        let ds = build_windows(&log, &stats, index).unwrap();
        assert!((ds.m_cell(0, 0).unwrap() - 0.6).abs() < 1e-12);
        assert!(ds.m_cell(0, 1).is_none());
    }

    #[test]
    fn single_report_cell_is_its_z() {
        let stats = flat_stats(1, 50.0, 5.0);
        let log = ReportLog::from_reports(vec![report(0, 52.0, 100.0)]);
        let ds = build_windows(&log, &stats, WindowIndex::new(0, 900, 1)).unwrap();
        assert!((ds.m_cell(0, 0).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_reports_are_counted() {
        let stats = flat_stats(1, 50.0, 5.0);
        let log = ReportLog::from_reports(vec![report(0, 52.0, 100.0), report(0, 52.0, 5000.0)]);
        let ds = build_windows(&log, &stats, WindowIndex::new(0, 900, 2)).unwrap();
        assert_eq!(ds.skipped_reports, 1);
        assert_eq!(ds.observed_cells(), 1);
    }

    #[test]
    fn window_index_covers_log() {
        let log = ReportLog::from_reports(vec![
            report(0, 10.0, 86_400.0 + 100.0),
            report(0, 10.0, 86_400.0 + 3000.0),
        ]);
        let index = WindowIndex::covering(&log).unwrap();
        assert_eq!(index.origin, 86_400);
        assert_eq!(index.count, 4); // 3000 s -> window 3
        assert_eq!(index.window_of(86_400.0 + 100.0), Some(0));
        assert_eq!(index.window_of(86_400.0 + 3000.0), Some(3));
        assert_eq!(index.window_of(0.0), None);
    }

    fn empty_ds(count: usize, filled: &[usize]) -> WindowedDataset {
        let stats = flat_stats(1, 50.0, 5.0);
        WindowedDataset {
            index: WindowIndex::new(0, 900, count),
            batches: (0..count)
                .map(|w| {
                    if filled.contains(&w) {
                        WindowBatch { window: w, segment_ids: vec![0], z_values: vec![0.1] }
                    } else {
                        WindowBatch { window: w, ..Default::default() }
                    }
                })
                .collect(),
            stats,
            n_segments: 1,
            skipped_reports: 0,
        }
    }

    #[test]
    fn sample_counts() {
        let all: Vec<usize> = (0..12).collect();
        let ds = empty_ds(8, &all); // W = L+H with L=5, H=3
        assert_eq!(make_samples(&ds, 5, 3).unwrap().len(), 1);

        let ds = empty_ds(12, &all); // W = L+H+4
        assert_eq!(make_samples(&ds, 5, 3).unwrap().len(), 5);

        assert!(make_samples(&empty_ds(7, &all), 5, 3).is_err());
    }

    #[test]
    fn samples_with_empty_targets_dropped() {
        // Windows 0..12, targets for L=5,H=3 are t+1 in {5..=8}; empty 6, 7, 8.
        let filled: Vec<usize> = (0..12).filter(|w| ![6, 7, 8].contains(w)).collect();
        let ds = empty_ds(12, &filled);
        assert_eq!(make_samples(&ds, 5, 3).unwrap().len(), 2);
    }

    #[test]
    fn chronological_split_bounds() {
        let (tr, va) = chronological_split(100, (0.7, 0.15, 0.15)).unwrap();
        assert_eq!((tr, va), (70, 85));
        assert!(chronological_split(10, (0.5, 0.2, 0.2)).is_err());
    }

    #[test]
    fn stats_roundtrip_via_file() {
        let cfg = SynthConfig {
            grid_rows: 3,
            grid_cols: 3,
            n_vehicles: 2,
            hours: 3.0,
            ..SynthConfig::default()
        };
        let world = synthgen::generate(&cfg).unwrap();
        let mut reports = Vec::new();
        for trip in &world.trips {
            let tr = crate::ingest::map_match(&world.network, trip, 30.0).unwrap();
            reports.extend(crate::ingest::allocate_travel_times(&trip.trip_id, &tr));
        }
        let log = ReportLog::from_reports(reports);
        let stats = fit_stats(&log, 1.0, world.network.n_segments()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.json");
        stats.save(&path).unwrap();
        let loaded = SegmentStats::load(&path).unwrap();
        assert_eq!(loaded.n_segments(), stats.n_segments());
        for (a, b) in stats.segments.iter().zip(&loaded.segments) {
            assert_eq!(a.mu, b.mu);
            assert_eq!(a.sigma, b.sigma);
            assert_eq!(a.hourly, b.hourly);
            assert_eq!(a.count, b.count);
        }
    }

    fn generator_log(cfg: &SynthConfig) -> (synthgen::SynthOutput, ReportLog) {
        let world = synthgen::generate(cfg).unwrap();
        let mut reports = Vec::new();
        for trip in &world.trips {
            let tr = crate::ingest::map_match(&world.network, trip, 30.0).unwrap();
            reports.extend(crate::ingest::allocate_travel_times(&trip.trip_id, &tr));
        }
        (world, ReportLog::from_reports(reports))
    }

    #[test]
    fn cells_match_standardize_then_mean_recompute() {
        let cfg = SynthConfig {
            grid_rows: 4,
            grid_cols: 4,
            n_vehicles: 2,
            hours: 6.0,
            ..SynthConfig::default()
        };
        let (world, log) = generator_log(&cfg);
        let stats = fit_stats(&log, 1.0, world.network.n_segments()).unwrap();
        let index = WindowIndex::covering(&log).unwrap();
        let ds = build_windows(&log, &stats, index).unwrap();

        let mut byhand: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for r in log.reports() {
            if let Some(w) = index.window_of(r.tau) {
                let z = stats.standardize(r.segment_id, r.travel_time_s, r.tau).unwrap();
                let e = byhand.entry((r.segment_id, w)).or_insert((0.0, 0));
                e.0 += z;
                e.1 += 1;
            }
        }
        for ((sid, w), (sum, cnt)) in byhand {
            let want = sum / cnt as f64;
            let got = ds.m_cell(sid, w).unwrap();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_z_values_are_standardized() {
        let cfg = SynthConfig {
            grid_rows: 4,
            grid_cols: 4,
            n_vehicles: 3,
            hours: 48.0,
            ..SynthConfig::default()
        };
        let (world, log) = generator_log(&cfg);
        let stats = fit_stats(&log, 1e-6, world.network.n_segments()).unwrap();
        let mut per_seg: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in log.reports() {
            let z = stats.standardize(r.segment_id, r.travel_time_s, r.tau).unwrap();
            per_seg.entry(r.segment_id).or_default().push(z);
        }
        for (sid, zs) in per_seg {
            if zs.len() < 30 {
                continue;
            }
            let n = zs.len() as f64;
            let mean = zs.iter().sum::<f64>() / n;
            let std = (zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() <= 0.05, "segment {sid} z-mean {mean}");
            assert!((0.9..=1.1).contains(&std), "segment {sid} z-std {std}");
        }
    }

    #[test]
    fn build_windows_invariant_to_report_order() {
        let cfg = SynthConfig {
            grid_rows: 3,
            grid_cols: 3,
            n_vehicles: 2,
            hours: 4.0,
            ..SynthConfig::default()
        };
        let (world, log) = generator_log(&cfg);
        let stats = fit_stats(&log, 1.0, world.network.n_segments()).unwrap();
        let index = WindowIndex::covering(&log).unwrap();
        let a = build_windows(&log, &stats, index).unwrap();
        let mut reversed = log.reports().to_vec();
        reversed.reverse();
        let b = build_windows(&ReportLog::from_reports(reversed), &stats, index).unwrap();
        assert_eq!(a.batches, b.batches);
    }

    #[test]
    fn flat_world_z_values_are_near_zero() {
        let cfg = SynthConfig {
            grid_rows: 4,
            grid_cols: 4,
            n_vehicles: 2,
            hours: 12.0,
            arterial_amplitude: 0.0,
            side_amplitude: 0.0,
            ..SynthConfig::default()
        };
        let (world, log) = generator_log(&cfg);
        let stats = fit_stats(&log, 1.0, world.network.n_segments()).unwrap();
        for r in log.reports() {
            let z = stats.standardize(r.segment_id, r.travel_time_s, r.tau).unwrap();
            assert!(z.abs() < 0.2, "z {z} for segment {}", r.segment_id);
        }
    }

    #[test]
    fn density_tracks_coverage_fraction() {
        let cfg = SynthConfig {
            grid_rows: 8,
            grid_cols: 8,
            n_vehicles: 1,
            hours: 48.0,
            coverage_rho: 0.3,
            ..SynthConfig::default()
        };
        let (world, log) = generator_log(&cfg);
        let stats = fit_stats(&log, 1.0, world.network.n_segments()).unwrap();
        let gt = &world.ground_truth;
        // Align the index to the ground-truth window grid.
        let index = WindowIndex::new(gt.start_unix, gt.window_seconds, gt.n_windows);
        let ds = build_windows(&log, &stats, index).unwrap();
        let covered = gt
            .traversal_counts
            .iter()
            .flatten()
            .filter(|&&c| c > 0)
            .count();
        let coverage = covered as f64 / (gt.n_segments * gt.n_windows) as f64;
        let expected = cfg.coverage_rho * coverage;
        assert!(
            (ds.density() - expected).abs() <= 0.02,
            "density {:.4} vs expected {:.4}",
            ds.density(),
            expected
        );
    }
}
