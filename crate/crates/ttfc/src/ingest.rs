//! GPS trip ingestion: CSV parsing, map matching onto the road network, and
//! per-segment travel-time reports.
//!
//! Matching is greedy nearest-candidate with a continuity preference: among
//! the candidates returned by [`RoadNetwork::project_point`], segments
//! reachable from the previous match within two hops win over globally
//! nearest ones. Gaps between consecutive matches are joined by shortest
//! path; if no route exists the trip splits into independent sub-trips.
//!
//! Elapsed time between consecutive fixes is split across the covered
//! segment pieces proportionally to length (constant speed between fixes),
//! and contiguous pieces on the same segment merge into one traversal. A
//! report's timestamp is the segment exit time: a travel time is only known
//! once the traversal completes.

use std::collections::HashMap;
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::roadnet::{Candidate, RoadNetwork};

pub const DEFAULT_MATCH_RADIUS_M: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub lon: f64,
    pub lat: f64,
    /// Unix seconds.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub trip_id: String,
    pub points: Vec<GpsPoint>,
}

impl Trip {
    pub fn new(trip_id: impl Into<String>, points: Vec<GpsPoint>) -> Result<Trip> {
        let trip = Trip {
            trip_id: trip_id.into(),
            points,
        };
        trip.validate()?;
        Ok(trip)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "trip {} has fewer than 2 points",
                self.trip_id
            )));
        }
        for pair in self.points.windows(2) {
            if !(pair[1].tau > pair[0].tau) {
                return Err(Error::InvalidInput(format!(
                    "trip {} timestamps not strictly increasing",
                    self.trip_id
                )));
            }
        }
        Ok(())
    }
}

/// One completed stay on a segment, with absolute enter/exit times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traversal {
    pub segment_id: usize,
    pub enter_s: f64,
    pub exit_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeReport {
    pub trip_id: String,
    pub segment_id: usize,
    pub travel_time_s: f64,
    /// Unix seconds at which the report enters the system (segment exit).
    pub tau: f64,
}

/// Travel-time reports sorted by report time.
#[derive(Debug, Clone, Default)]
pub struct ReportLog {
    reports: Vec<TravelTimeReport>,
}

impl ReportLog {
    pub fn from_reports(mut reports: Vec<TravelTimeReport>) -> ReportLog {
        reports.sort_by(|a, b| {
            a.tau
                .partial_cmp(&b.tau)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.trip_id.cmp(&b.trip_id))
                .then(a.segment_id.cmp(&b.segment_id))
        });
        ReportLog { reports }
    }

    pub fn reports(&self) -> &[TravelTimeReport] {
        &self.reports
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn save_csv(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["trip_id", "segment_id", "travel_time_s", "t"])
            .map_err(|e| Error::csv(path, e))?;
        for r in &self.reports {
            w.write_record([
                r.trip_id.as_str(),
                &r.segment_id.to_string(),
                &r.travel_time_s.to_string(),
                &r.tau.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<FsPath>) -> Result<ReportLog> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut reports = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let line = i + 2;
            let parse = || -> Option<TravelTimeReport> {
                Some(TravelTimeReport {
                    trip_id: rec.get(0)?.to_string(),
                    segment_id: rec.get(1)?.parse().ok()?,
                    travel_time_s: rec.get(2)?.parse().ok()?,
                    tau: rec.get(3)?.parse().ok()?,
                })
            };
            let report = parse().ok_or_else(|| {
                Error::InvalidInput(format!("{}: malformed report row at line {line}", path.display()))
            })?;
            if !(report.travel_time_s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{}: non-positive travel time at line {line}",
                    path.display()
                )));
            }
            reports.push(report);
        }
        Ok(ReportLog::from_reports(reports))
    }
}

/// Diagnostics accumulated while ingesting a trips file.
#[derive(Debug, Default)]
pub struct IngestStats {
    pub trips_read: usize,
    pub trips_matched: usize,
    pub row_errors: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct MatchedPos {
    cand: Candidate,
    tau: f64,
}

/// Hop count needed to continue from the previous matched position onto a
/// candidate: 0 = forward on the same segment, 1 = immediately follows,
/// 2 = one segment between, 3 = backward on the same segment (continuous
/// but least preferred). `None` means not reachable within two hops.
fn continuation_hops(net: &RoadNetwork, prev: &Candidate, next: &Candidate) -> Option<u8> {
    if next.segment_id == prev.segment_id {
        return if next.fraction + 1e-12 >= prev.fraction {
            Some(0)
        } else {
            Some(3)
        };
    }
    let prev_to = net.seg_to_idx(prev.segment_id);
    if net.seg_from_idx(next.segment_id) == prev_to {
        return Some(1);
    }
    for &mid in net.out_segments(prev_to) {
        if net.seg_from_idx(next.segment_id) == net.seg_to_idx(mid) {
            return Some(2);
        }
    }
    None
}

/// Distances within this band count as ties (projection of a point sitting
/// on a junction yields float dust, not exact zeros).
const DIST_TIE_EPS_M: f64 = 1e-6;

fn better_by_distance_then(a: (f64, u8, usize), b: (f64, u8, usize)) -> bool {
    if a.0 < b.0 - DIST_TIE_EPS_M {
        return true;
    }
    if a.0 > b.0 + DIST_TIE_EPS_M {
        return false;
    }
    (a.1, a.2) < (b.1, b.2)
}

fn continuity_pick(net: &RoadNetwork, prev: &Candidate, cands: &[Candidate]) -> Candidate {
    let mut best: Option<(Candidate, u8)> = None;
    for c in cands {
        if let Some(hops) = continuation_hops(net, prev, c) {
            let better = match &best {
                None => true,
                Some((b, bh)) => better_by_distance_then(
                    (c.distance_m, hops, c.segment_id),
                    (b.distance_m, *bh, b.segment_id),
                ),
            };
            if better {
                best = Some((*c, hops));
            }
        }
    }
    best.map(|(c, _)| c).unwrap_or(cands[0])
}

/// Length-weighted segment pieces covered when moving between two matched
/// positions. `None` means no route exists (the trip must split there).
fn path_pieces(net: &RoadNetwork, a: Candidate, b: Candidate) -> Option<Vec<(usize, f64)>> {
    const EPS: f64 = 1e-9;
    let mut pieces = Vec::new();
    if a.segment_id == b.segment_id {
        if b.fraction >= a.fraction {
            let len = net.segments()[a.segment_id].length_m;
            pieces.push((a.segment_id, (b.fraction - a.fraction) * len));
        }
        // Backward jitter within one segment is treated as stationary.
    } else {
        let route = net.shortest_path_idx(net.seg_to_idx(a.segment_id), net.seg_from_idx(b.segment_id))?;
        let len_a = net.segments()[a.segment_id].length_m;
        pieces.push((a.segment_id, (1.0 - a.fraction) * len_a));
        for &sid in &route.segments {
            pieces.push((sid, net.segments()[sid].length_m));
        }
        let len_b = net.segments()[b.segment_id].length_m;
        pieces.push((b.segment_id, b.fraction * len_b));
    }
    pieces.retain(|&(_, len)| len > EPS);
    Some(pieces)
}

/// Total path length between two positions, used to disambiguate the first
/// match of a trip once the second one is known.
fn path_length(net: &RoadNetwork, a: Candidate, b: Candidate) -> f64 {
    match path_pieces(net, a, b) {
        Some(pieces) => pieces.iter().map(|&(_, len)| len).sum(),
        None => f64::INFINITY,
    }
}

fn match_positions(net: &RoadNetwork, trip: &Trip, radius_m: f64) -> Vec<MatchedPos> {
    let mut positions: Vec<MatchedPos> = Vec::new();
    let mut first_cands: Option<Vec<Candidate>> = None;
    for p in &trip.points {
        let cands = net.project_point(p.lon, p.lat, radius_m);
        if cands.is_empty() {
            continue;
        }
        let pick = match positions.last() {
            None => {
                first_cands = Some(cands.clone());
                cands[0]
            }
            Some(prev) => continuity_pick(net, &prev.cand, &cands),
        };
        positions.push(MatchedPos { cand: pick, tau: p.tau });
    }

    // The first point has no continuity context; once the second match is
    // known, re-pick it to minimize the implied path length.
    if positions.len() >= 2 {
        if let Some(cands) = first_cands {
            let second = positions[1].cand;
            let better = |a: &(f64, f64, usize), b: &(f64, f64, usize)| {
                if a.0 < b.0 - DIST_TIE_EPS_M {
                    return true;
                }
                if a.0 > b.0 + DIST_TIE_EPS_M {
                    return false;
                }
                (a.1, a.2) < (b.1, b.2)
            };
            let mut best = positions[0].cand;
            let mut best_key = (path_length(net, best, second), best.distance_m, best.segment_id);
            for c in &cands {
                let key = (path_length(net, *c, second), c.distance_m, c.segment_id);
                if better(&key, &best_key) {
                    best = *c;
                    best_key = key;
                }
            }
            positions[0].cand = best;
        }
    }
    positions
}

/// Map-matches a trip, returning the ordered traversals (segment id with
/// absolute enter/exit times). Unmatched points are skipped; a trip with
/// fewer than two matched points yields an empty result.
pub fn map_match(net: &RoadNetwork, trip: &Trip, radius_m: f64) -> Result<Vec<Traversal>> {
    if radius_m <= 0.0 {
        return Err(Error::InvalidInput("radius_m must be positive".into()));
    }
    trip.validate()?;
    let positions = match_positions(net, trip, radius_m);
    if positions.len() < 2 {
        return Ok(Vec::new());
    }

    let mut out: Vec<Traversal> = Vec::new();
    let mut open: Option<Traversal> = None;
    let mut cur = positions[0];
    for &next in &positions[1..] {
        let dt = next.tau - cur.tau;
        let pieces = match path_pieces(net, cur.cand, next.cand) {
            Some(p) => p,
            None => {
                // Unroutable gap: close the current sub-trip and restart.
                if let Some(t) = open.take() {
                    out.push(t);
                }
                cur = next;
                continue;
            }
        };
        let total: f64 = pieces.iter().map(|&(_, len)| len).sum();
        if total <= 0.0 {
            // No movement: the elapsed time is presence on the current segment.
            match &mut open {
                Some(t) => t.exit_s = next.tau,
                None => {
                    open = Some(Traversal {
                        segment_id: cur.cand.segment_id,
                        enter_s: cur.tau,
                        exit_s: next.tau,
                    })
                }
            }
            let stationary_backward =
                next.cand.segment_id == cur.cand.segment_id && next.cand.fraction < cur.cand.fraction;
            if !stationary_backward {
                cur = next;
            } else {
                cur.tau = next.tau;
            }
            continue;
        }

        let mut clock = cur.tau;
        let last = pieces.len() - 1;
        for (k, &(sid, len)) in pieces.iter().enumerate() {
            // Give the last piece the exact remainder so the pair's elapsed
            // time is conserved bit-for-bit.
            let piece_dt = if k == last { next.tau - clock } else { dt * len / total };
            match &mut open {
                Some(t) if t.segment_id == sid => t.exit_s = clock + piece_dt,
                _ => {
                    if let Some(t) = open.take() {
                        out.push(t);
                    }
                    open = Some(Traversal {
                        segment_id: sid,
                        enter_s: clock,
                        exit_s: clock + piece_dt,
                    });
                }
            }
            clock += piece_dt;
        }
        cur = next;
    }
    if let Some(t) = open.take() {
        out.push(t);
    }
    Ok(out)
}

/// Converts traversals into travel-time reports (duration, exit timestamp).
pub fn allocate_travel_times(trip_id: &str, traversals: &[Traversal]) -> Vec<TravelTimeReport> {
    traversals
        .iter()
        .filter(|t| t.exit_s > t.enter_s)
        .map(|t| TravelTimeReport {
            trip_id: trip_id.to_string(),
            segment_id: t.segment_id,
            travel_time_s: t.exit_s - t.enter_s,
            tau: t.exit_s,
        })
        .collect()
}

/// Reads a trips CSV (`trip_id,lon,lat,t`, rows grouped by trip id).
/// Malformed rows are skipped and reported with their line number.
pub fn read_trips_csv(path: impl AsRef<FsPath>) -> Result<(Vec<Trip>, Vec<String>)> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut trips: Vec<Trip> = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    let mut cur_id: Option<String> = None;
    let mut cur_points: Vec<GpsPoint> = Vec::new();

    let mut flush = |id: Option<String>, points: &mut Vec<GpsPoint>, errors: &mut Vec<String>| {
        if let Some(id) = id {
            if points.len() >= 2 {
                trips.push(Trip {
                    trip_id: id,
                    points: std::mem::take(points),
                });
            } else {
                errors.push(format!("trip {id}: fewer than 2 valid points, skipped"));
                points.clear();
            }
        }
    };

    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // CSV data starts after the header line
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let parsed = (|| -> Option<(String, GpsPoint)> {
            let id = rec.get(0)?.to_string();
            let lon: f64 = rec.get(1)?.parse().ok()?;
            let lat: f64 = rec.get(2)?.parse().ok()?;
            let tau: f64 = rec.get(3)?.parse().ok()?;
            if !(lon.is_finite() && lat.is_finite() && tau.is_finite()) {
                return None;
            }
            Some((id, GpsPoint { lon, lat, tau }))
        })();
        let (id, point) = match parsed {
            Some(v) => v,
            None => {
                errors.push(format!("line {line}: malformed row"));
                continue;
            }
        };
        if cur_id.as_deref() != Some(id.as_str()) {
            flush(cur_id.take(), &mut cur_points, &mut errors);
            cur_id = Some(id);
        } else if let Some(last) = cur_points.last() {
            if !(point.tau > last.tau) {
                errors.push(format!("line {line}: non-increasing timestamp, row skipped"));
                continue;
            }
        }
        cur_points.push(point);
    }
    flush(cur_id.take(), &mut cur_points, &mut errors);
    Ok((trips, errors))
}

pub fn write_trips_csv(path: impl AsRef<FsPath>, trips: &[Trip]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["trip_id", "lon", "lat", "t"])
        .map_err(|e| Error::csv(path, e))?;
    for trip in trips {
        for p in &trip.points {
            w.write_record([
                trip.trip_id.as_str(),
                &p.lon.to_string(),
                &p.lat.to_string(),
                &p.tau.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Map-matches every trip in a file and returns the merged, time-sorted
/// report log.
pub fn ingest_trips(
    net: &RoadNetwork,
    trips_path: impl AsRef<FsPath>,
    radius_m: f64,
) -> Result<(ReportLog, IngestStats)> {
    let (trips, row_errors) = read_trips_csv(trips_path)?;
    let mut stats = IngestStats {
        trips_read: trips.len(),
        trips_matched: 0,
        row_errors,
    };
    let mut reports = Vec::new();
    for trip in &trips {
        let traversals = map_match(net, trip, radius_m)?;
        if !traversals.is_empty() {
            stats.trips_matched += 1;
        }
        reports.extend(allocate_travel_times(&trip.trip_id, &traversals));
    }
    for r in &reports {
        if r.segment_id >= net.n_segments() {
            return Err(Error::UnknownSegment(r.segment_id));
        }
    }
    Ok((ReportLog::from_reports(reports), stats))
}

/// Longest common subsequence length between two segment sequences; used to
/// score recovery against ground truth.
pub fn lcs_len(a: &[usize], b: &[usize]) -> usize {
    let mut dp = vec![0usize; b.len() + 1];
    for &x in a {
        let mut prev = 0;
        for (j, &y) in b.iter().enumerate() {
            let cur = dp[j + 1];
            dp[j + 1] = if x == y { prev + 1 } else { dp[j + 1].max(dp[j]) };
            prev = cur;
        }
    }
    dp[b.len()]
}

/// Per-trip sums grouped by trip id, for the time-conservation checks.
pub fn report_time_by_trip(log: &ReportLog) -> HashMap<String, f64> {
    let mut sums: HashMap<String, f64> = HashMap::new();
    for r in log.reports() {
        *sums.entry(r.trip_id.clone()).or_default() += r.travel_time_s;
    }
    sums
}
