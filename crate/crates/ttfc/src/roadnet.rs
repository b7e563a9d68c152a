//! Directed road-network graph: junctions with geometry, dense-id road
//! segments, adjacency, point projection and shortest paths.
//!
//! Geographic distances use an equirectangular approximation anchored at the
//! network's mean latitude; at city scale the error is negligible and the
//! math stays dependency-free. Segment geometry is the straight line between
//! its junctions.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// WGS84 equatorial circumference divided by 360, in meters per degree.
pub const METERS_PER_DEGREE: f64 = 111_319.490_793;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Junction {
    pub id: i64,
    pub lon: f64,
    pub lat: f64,
}

/// A directed road segment between two junctions. Ids are dense (`0..|E|-1`)
/// so they can index matrices directly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RoadSegment {
    pub id: usize,
    pub from: i64,
    pub to: i64,
    pub length_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkFile {
    junctions: Vec<Junction>,
    segments: Vec<RoadSegment>,
}

/// A sequence of connected road segments, as used by path/ETA queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub segments: Vec<usize>,
}

impl Path {
    /// Parses a comma-separated list of segment ids.
    pub fn parse(text: &str) -> Result<Path> {
        let segments = text
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidInput(format!("bad segment id '{}'", tok.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if segments.is_empty() {
            return Err(Error::InvalidInput("empty path".into()));
        }
        Ok(Path { segments })
    }

    /// Checks that every segment exists and consecutive segments connect.
    pub fn validate(&self, net: &RoadNetwork) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidInput("empty path".into()));
        }
        for &sid in &self.segments {
            if sid >= net.n_segments() {
                return Err(Error::UnknownSegment(sid));
            }
        }
        for pair in self.segments.windows(2) {
            let (a, b) = (&net.segments[pair[0]], &net.segments[pair[1]]);
            if a.to != b.from {
                return Err(Error::InvalidInput(format!(
                    "segments {} and {} are not connected",
                    a.id, b.id
                )));
            }
        }
        Ok(())
    }
}

/// Result of a shortest-path query. `segments` is empty when origin and
/// destination coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub segments: Vec<usize>,
    pub distance_m: f64,
}

/// A candidate match from projecting a point onto the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub segment_id: usize,
    pub distance_m: f64,
    /// Position of the projected point along the segment, in `[0, 1]`.
    pub fraction: f64,
}

/// Immutable road-network graph. All queries are pure reads, safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    junctions: Vec<Junction>,
    segments: Vec<RoadSegment>,
    /// Per junction index, outgoing segment ids.
    out_adjacency: Vec<Vec<usize>>,
    junction_index: HashMap<i64, usize>,
    seg_from_idx: Vec<usize>,
    seg_to_idx: Vec<usize>,
    /// Projected planar coordinates per junction index, in meters.
    xy: Vec<(f64, f64)>,
    lon0: f64,
    lat0: f64,
    meters_per_deg_lon: f64,
}

impl RoadNetwork {
    pub fn from_parts(junctions: Vec<Junction>, segments: Vec<RoadSegment>) -> Result<RoadNetwork> {
        if junctions.is_empty() {
            return Err(Error::InvalidNetwork("no junctions".into()));
        }
        let mut junction_index = HashMap::with_capacity(junctions.len());
        for (idx, j) in junctions.iter().enumerate() {
            if !(-180.0..=180.0).contains(&j.lon) || !(-90.0..=90.0).contains(&j.lat) {
                return Err(Error::InvalidNetwork(format!(
                    "junction {} has out-of-range coordinates ({}, {})",
                    j.id, j.lon, j.lat
                )));
            }
            if junction_index.insert(j.id, idx).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate junction id {}", j.id)));
            }
        }

        let mut seg_from_idx = Vec::with_capacity(segments.len());
        let mut seg_to_idx = Vec::with_capacity(segments.len());
        for (k, s) in segments.iter().enumerate() {
            if s.id != k {
                return Err(Error::InvalidNetwork(format!(
                    "segment ids must be 0..n-1 in order; found id {} at position {}",
                    s.id, k
                )));
            }
            if s.from == s.to {
                return Err(Error::InvalidNetwork(format!(
                    "segment {} is a self-loop at junction {}",
                    s.id, s.from
                )));
            }
            if !(s.length_m.is_finite() && s.length_m > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "segment {} has non-positive length {}",
                    s.id, s.length_m
                )));
            }
            let from = *junction_index.get(&s.from).ok_or_else(|| {
                Error::InvalidNetwork(format!("dangling reference: segment {} from junction {}", s.id, s.from))
            })?;
            let to = *junction_index.get(&s.to).ok_or_else(|| {
                Error::InvalidNetwork(format!("dangling reference: segment {} to junction {}", s.id, s.to))
            })?;
            seg_from_idx.push(from);
            seg_to_idx.push(to);
        }

        let mut out_adjacency = vec![Vec::new(); junctions.len()];
        for (sid, &from) in seg_from_idx.iter().enumerate() {
            out_adjacency[from].push(sid);
        }

        let lat0 = junctions.iter().map(|j| j.lat).sum::<f64>() / junctions.len() as f64;
        let lon0 = junctions.iter().map(|j| j.lon).sum::<f64>() / junctions.len() as f64;
        let meters_per_deg_lon = METERS_PER_DEGREE * lat0.to_radians().cos();
        let xy = junctions
            .iter()
            .map(|j| ((j.lon - lon0) * meters_per_deg_lon, (j.lat - lat0) * METERS_PER_DEGREE))
            .collect();

        Ok(RoadNetwork {
            junctions,
            segments,
            out_adjacency,
            junction_index,
            seg_from_idx,
            seg_to_idx,
            xy,
            lon0,
            lat0,
            meters_per_deg_lon,
        })
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<RoadNetwork> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: NetworkFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        RoadNetwork::from_parts(file.junctions, file.segments)
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let file = NetworkFile {
            junctions: self.junctions.clone(),
            segments: self.segments.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn n_junctions(&self) -> usize {
        self.junctions.len()
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn segment(&self, id: usize) -> Result<&RoadSegment> {
        self.segments.get(id).ok_or(Error::UnknownSegment(id))
    }

    pub fn junction_idx(&self, id: i64) -> Result<usize> {
        self.junction_index.get(&id).copied().ok_or(Error::UnknownJunction(id))
    }

    pub(crate) fn seg_from_idx(&self, sid: usize) -> usize {
        self.seg_from_idx[sid]
    }

    pub(crate) fn seg_to_idx(&self, sid: usize) -> usize {
        self.seg_to_idx[sid]
    }

    pub(crate) fn out_segments(&self, junction_idx: usize) -> &[usize] {
        &self.out_adjacency[junction_idx]
    }

    /// Projects geographic coordinates to the network's planar frame.
    pub(crate) fn to_xy(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon - self.lon0) * self.meters_per_deg_lon,
            (lat - self.lat0) * METERS_PER_DEGREE,
        )
    }

    /// Inverse of [`RoadNetwork::to_xy`].
    pub fn to_lonlat(&self, x: f64, y: f64) -> (f64, f64) {
        (x / self.meters_per_deg_lon + self.lon0, y / METERS_PER_DEGREE + self.lat0)
    }

    /// Planar position of the point at `fraction` along a segment.
    pub fn point_on_segment(&self, sid: usize, fraction: f64) -> (f64, f64) {
        let (ax, ay) = self.xy[self.seg_from_idx[sid]];
        let (bx, by) = self.xy[self.seg_to_idx[sid]];
        (ax + (bx - ax) * fraction, ay + (by - ay) * fraction)
    }

    /// Segments within `radius_m` of the point, sorted by ascending distance
    /// (ties by ascending segment id).
    pub fn project_point(&self, lon: f64, lat: f64, radius_m: f64) -> Vec<Candidate> {
        let (px, py) = self.to_xy(lon, lat);
        let mut out = Vec::new();
        for s in &self.segments {
            let (ax, ay) = self.xy[self.seg_from_idx[s.id]];
            let (bx, by) = self.xy[self.seg_to_idx[s.id]];
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cx, cy) = (ax + t * dx, ay + t * dy);
            let dist = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
            if dist <= radius_m {
                out.push(Candidate {
                    segment_id: s.id,
                    distance_m: dist,
                    fraction: t,
                });
            }
        }
        out.sort_by(|a, b| {
            a.distance_m
                .partial_cmp(&b.distance_m)
                .unwrap_or(Ordering::Equal)
                .then(a.segment_id.cmp(&b.segment_id))
        });
        out
    }

    /// Minimal-length route between two junctions; `None` if unreachable.
    /// `from == to` yields an empty route of distance zero.
    pub fn shortest_path(&self, from: i64, to: i64) -> Result<Option<Route>> {
        let from_idx = self.junction_idx(from)?;
        let to_idx = self.junction_idx(to)?;
        Ok(self.shortest_path_idx(from_idx, to_idx))
    }

    pub(crate) fn shortest_path_idx(&self, from_idx: usize, to_idx: usize) -> Option<Route> {
        if from_idx == to_idx {
            return Some(Route {
                segments: Vec::new(),
                distance_m: 0.0,
            });
        }

        #[derive(PartialEq)]
        struct Entry {
            dist: f64,
            junction_id: i64,
            idx: usize,
        }
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                // Min-heap via reversed ordering; ties broken by smaller
                // junction id for determinism.
                other
                    .dist
                    .partial_cmp(&self.dist)
                    .unwrap_or(Ordering::Equal)
                    .then(other.junction_id.cmp(&self.junction_id))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let n = self.junctions.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<usize>> = vec![None; n]; // incoming segment id
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[from_idx] = 0.0;
        heap.push(Entry {
            dist: 0.0,
            junction_id: self.junctions[from_idx].id,
            idx: from_idx,
        });

        while let Some(Entry { dist: d, idx, .. }) = heap.pop() {
            if done[idx] {
                continue;
            }
            done[idx] = true;
            if idx == to_idx {
                break;
            }
            for &sid in &self.out_adjacency[idx] {
                let next = self.seg_to_idx[sid];
                let nd = d + self.segments[sid].length_m;
                if nd < dist[next] {
                    dist[next] = nd;
                    prev[next] = Some(sid);
                    heap.push(Entry {
                        dist: nd,
                        junction_id: self.junctions[next].id,
                        idx: next,
                    });
                }
            }
        }

        if !dist[to_idx].is_finite() {
            return None;
        }
        let mut segments = Vec::new();
        let mut at = to_idx;
        while at != from_idx {
            let sid = prev[at].expect("reached junction must have a predecessor");
            segments.push(sid);
            at = self.seg_from_idx[sid];
        }
        segments.reverse();
        Some(Route {
            segments,
            distance_m: dist[to_idx],
        })
    }
}
