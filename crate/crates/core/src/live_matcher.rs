//! Identifying the ridden vehicle from sampled live fleet positions.
//!
//! Each user sample is compared with the path a vehicle drove within a time
//! window around the sample. A vehicle qualifies when enough samples lie
//! within the distance limit; each such sample scores `limit - d` and the
//! highest total wins.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geodesy::{distance_m, point_to_linestring_m, BoundingBox, Linestring, Vertex};
use crate::model::{secs_between, LineType, Timestamp, VehiclePosition};
use crate::segmentation::{ActivitySegment, TracePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveMatchConfig {
    pub max_user_samples: usize,
    pub distance_limit_m: f64,
    /// Half-width of the window around each sample.
    pub window_s: u32,
    pub quorum_fraction: f64,
    /// Samples used by the old point-to-point method.
    pub old_samples: usize,
    /// Margin added around vehicle bounding boxes when pre-selecting candidates.
    pub prefilter_margin_m: f64,
}

impl Default for LiveMatchConfig {
    fn default() -> Self {
        Self {
            max_user_samples: 40,
            distance_limit_m: 100.0,
            window_s: 60,
            quorum_fraction: 0.75,
            old_samples: 4,
            prefilter_margin_m: 200.0,
        }
    }
}

impl LiveMatchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_user_samples == 0 || self.old_samples == 0 {
            return Err("sample counts must be positive".into());
        }
        if !(self.distance_limit_m > 0.0) || self.window_s == 0 {
            return Err("distance limit and window must be positive".into());
        }
        if !(self.quorum_fraction > 0.0 && self.quorum_fraction <= 1.0) {
            return Err(format!("quorum fraction {} outside (0, 1]", self.quorum_fraction));
        }
        if self.prefilter_margin_m < self.distance_limit_m {
            return Err("prefilter margin must not be below the distance limit".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LiveMethod {
    /// Up to 40 samples against per-sample vehicle linestrings.
    New,
    /// Four samples against individual vehicle fixes.
    Old,
}

/// Fleet positions grouped by vehicle, each track time-ordered.
#[derive(Debug, Clone, Default)]
pub struct PositionIndex {
    tracks: Vec<VehicleTrack>,
    by_ref: HashMap<String, usize>,
}

#[derive(Debug, Clone)]
struct VehicleTrack {
    vehicle_ref: String,
    positions: Vec<VehiclePosition>,
}

impl VehicleTrack {
    fn in_window(&self, from: Timestamp, to: Timestamp) -> &[VehiclePosition] {
        let lo = self.positions.partition_point(|p| p.time < from);
        let hi = self.positions.partition_point(|p| p.time <= to);
        &self.positions[lo..hi.max(lo)]
    }
}

impl PositionIndex {
    pub fn new(positions: impl IntoIterator<Item = VehiclePosition>) -> Self {
        let mut grouped: BTreeMap<String, Vec<VehiclePosition>> = BTreeMap::new();
        for p in positions {
            grouped.entry(p.vehicle_ref.clone()).or_default().push(p);
        }
        let tracks: Vec<VehicleTrack> = grouped
            .into_iter()
            .map(|(vehicle_ref, mut positions)| {
                positions.sort_by_key(|p| p.time);
                VehicleTrack {
                    vehicle_ref,
                    positions,
                }
            })
            .collect();
        let by_ref = tracks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.vehicle_ref.clone(), i))
            .collect();
        Self { tracks, by_ref }
    }

    pub fn vehicle_count(&self) -> usize {
        self.tracks.len()
    }

    pub fn position_count(&self) -> usize {
        self.tracks.iter().map(|t| t.positions.len()).sum()
    }

    /// Positions of one vehicle with time in the closed interval `[from, to]`.
    pub fn window(&self, vehicle_ref: &str, from: Timestamp, to: Timestamp) -> &[VehiclePosition] {
        self.by_ref
            .get(vehicle_ref)
            .map_or(&[], |&i| self.tracks[i].in_window(from, to))
    }

    /// Vehicles that could come within `margin_m` of the segment during its
    /// time span widened by `window_s`, in vehicle_ref order.
    pub fn candidates(&self, segment: &ActivitySegment, window_s: u32, margin_m: f64) -> Vec<&str> {
        let pad = chrono::Duration::seconds(i64::from(window_s));
        let (from, to) = (segment.start_time - pad, segment.end_time + pad);
        let seg_box = segment.bbox();
        self.tracks
            .iter()
            .filter(|t| {
                BoundingBox::around(t.in_window(from, to).iter().map(|p| p.position))
                    .is_some_and(|b| b.expanded(margin_m).intersects(&seg_box))
            })
            .map(|t| t.vehicle_ref.as_str())
            .collect()
    }
}

/// Evenly spread sample indices: `round(i * (n - 1) / (m - 1))` for `m`
/// samples out of `n`, or all indices when `n <= m`.
pub fn sample_indices(n: usize, m: usize) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    if m == 1 {
        return vec![0];
    }
    (0..m)
        .map(|i| ((i * (n - 1)) as f64 / (m - 1) as f64).round() as usize)
        .collect()
}

pub fn select_user_samples(segment: &ActivitySegment, max_user_samples: usize) -> Vec<TracePoint> {
    sample_indices(segment.trace.len(), max_user_samples)
        .into_iter()
        .map(|i| segment.trace[i])
        .collect()
}

/// The vehicle's path within `[t - window_s, t + window_s]`, or `None` when
/// it has no positions there.
pub fn vehicle_linestring(
    vehicle_ref: &str,
    t: Timestamp,
    window_s: u32,
    index: &PositionIndex,
) -> Option<Linestring> {
    let pad = chrono::Duration::seconds(i64::from(window_s));
    let window = index.window(vehicle_ref, t - pad, t + pad);
    if window.is_empty() {
        return None;
    }
    let vertices = window
        .iter()
        .map(|p| Vertex {
            point: p.position,
            time: Some(p.time),
        })
        .collect();
    Some(Linestring::new(vertices).expect("window positions are non-empty and time-ordered"))
}

/// Line identity reported by the vehicle position nearest to a matched sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NameVote {
    pub line_type: LineType,
    pub line_name: String,
    pub sample_time: Timestamp,
}

/// Per-vehicle scoring outcome for one segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleScore {
    pub vehicle_ref: String,
    pub score: f64,
    pub matched: usize,
    pub samples: usize,
    pub matched_fraction: f64,
    pub mean_distance_m: f64,
    /// Distance per sample; `None` for an empty window.
    pub distances: Vec<Option<f64>>,
    pub votes: Vec<NameVote>,
}

impl VehicleScore {
    pub fn qualifies(&self, quorum_fraction: f64) -> bool {
        meets_quorum(self.matched, self.samples, quorum_fraction)
    }
}

/// `matched / samples >= quorum`, tolerant of rounding in `quorum * samples`.
pub fn meets_quorum(matched: usize, samples: usize, quorum_fraction: f64) -> bool {
    samples > 0 && matched as f64 + 1e-9 >= quorum_fraction * samples as f64
}

/// Distances and votes for every sample, regardless of quorum.
pub fn measure_vehicle(
    samples: &[TracePoint],
    vehicle_ref: &str,
    method: LiveMethod,
    cfg: &LiveMatchConfig,
    index: &PositionIndex,
) -> VehicleScore {
    let pad = chrono::Duration::seconds(i64::from(cfg.window_s));
    let mut distances = Vec::with_capacity(samples.len());
    let mut votes = Vec::new();
    let mut score = 0.0;
    let mut matched = 0;
    let mut total_d = 0.0;
    for s in samples {
        let window = index.window(vehicle_ref, s.time - pad, s.time + pad);
        let nearest = window.iter().min_by(|a, b| {
            distance_m(s.position, a.position).total_cmp(&distance_m(s.position, b.position))
        });
        let d = match (method, nearest) {
            (_, None) => None,
            (LiveMethod::Old, Some(p)) => Some(distance_m(s.position, p.position)),
            (LiveMethod::New, Some(_)) => vehicle_linestring(vehicle_ref, s.time, cfg.window_s, index)
                .map(|ls| point_to_linestring_m(s.position, &ls)),
        };
        if let (Some(d), Some(p)) = (d, nearest) {
            if d <= cfg.distance_limit_m {
                matched += 1;
                score += cfg.distance_limit_m - d;
                total_d += d;
                votes.push(NameVote {
                    line_type: p.line_type,
                    line_name: p.line_name.clone(),
                    sample_time: s.time,
                });
            }
        }
        distances.push(d);
    }
    VehicleScore {
        vehicle_ref: vehicle_ref.to_string(),
        score,
        matched,
        samples: samples.len(),
        matched_fraction: if samples.is_empty() {
            0.0
        } else {
            matched as f64 / samples.len() as f64
        },
        mean_distance_m: if matched == 0 { f64::INFINITY } else { total_d / matched as f64 },
        distances,
        votes,
    }
}

/// Scores one vehicle; `None` when it misses the quorum.
pub fn score_vehicle(
    samples: &[TracePoint],
    vehicle_ref: &str,
    method: LiveMethod,
    cfg: &LiveMatchConfig,
    index: &PositionIndex,
) -> Option<VehicleScore> {
    let s = measure_vehicle(samples, vehicle_ref, method, cfg, index);
    (s.qualifies(cfg.quorum_fraction) && s.score > 0.0).then_some(s)
}

/// Winner ordering: higher score, higher matched fraction, lower mean
/// distance, then vehicle_ref.
fn rank(a: &VehicleScore, b: &VehicleScore) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.matched_fraction.total_cmp(&a.matched_fraction))
        .then(a.mean_distance_m.total_cmp(&b.mean_distance_m))
        .then_with(|| a.vehicle_ref.cmp(&b.vehicle_ref))
}

/// All pre-selected vehicles, qualifying ones first in winner order.
pub fn rank_vehicles(
    segment: &ActivitySegment,
    method: LiveMethod,
    cfg: &LiveMatchConfig,
    index: &PositionIndex,
) -> Vec<VehicleScore> {
    let n = match method {
        LiveMethod::New => cfg.max_user_samples,
        LiveMethod::Old => cfg.old_samples,
    };
    let samples = select_user_samples(segment, n);
    let mut scores: Vec<VehicleScore> = index
        .candidates(segment, cfg.window_s, cfg.prefilter_margin_m)
        .into_iter()
        .map(|v| measure_vehicle(&samples, v, method, cfg, index))
        .collect();
    scores.sort_by(|a, b| {
        let qa = a.qualifies(cfg.quorum_fraction) && a.score > 0.0;
        let qb = b.qualifies(cfg.quorum_fraction) && b.score > 0.0;
        qb.cmp(&qa).then_with(|| rank(a, b))
    });
    scores
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiveMatchResult {
    pub segment_id: u32,
    pub method: LiveMethod,
    pub vehicle_ref: String,
    pub line_type: LineType,
    pub line_name: String,
    pub score: f64,
    pub matched_fraction: f64,
    pub sample_distances: Vec<Option<f64>>,
}

/// Modal vote; ties go to the vote whose sample is nearest in time to `midpoint`.
fn elect(votes: &[NameVote], midpoint: Timestamp) -> Option<&NameVote> {
    let mut counts: HashMap<(LineType, &str), usize> = HashMap::new();
    for v in votes {
        *counts.entry((v.line_type, v.line_name.as_str())).or_default() += 1;
    }
    votes.iter().min_by(|a, b| {
        let ca = counts[&(a.line_type, a.line_name.as_str())];
        let cb = counts[&(b.line_type, b.line_name.as_str())];
        cb.cmp(&ca)
            .then(secs_between(midpoint, a.sample_time).abs().cmp(&secs_between(midpoint, b.sample_time).abs()))
            .then_with(|| (a.line_type, &a.line_name).cmp(&(b.line_type, &b.line_name)))
    })
}

pub fn match_segment(
    segment: &ActivitySegment,
    method: LiveMethod,
    cfg: &LiveMatchConfig,
    index: &PositionIndex,
) -> Option<LiveMatchResult> {
    if segment.trace.len() < 2 {
        return None;
    }
    let winner = rank_vehicles(segment, method, cfg, index)
        .into_iter()
        .next()
        .filter(|s| s.qualifies(cfg.quorum_fraction) && s.score > 0.0)?;
    let vote = elect(&winner.votes, segment.midpoint())?.clone();
    Some(LiveMatchResult {
        segment_id: segment.segment_id,
        method,
        vehicle_ref: winner.vehicle_ref,
        line_type: vote.line_type,
        line_name: vote.line_name,
        score: winner.score,
        matched_fraction: winner.matched_fraction,
        sample_distances: winner.distances,
    })
}

pub fn match_live(
    segment: &ActivitySegment,
    cfg: &LiveMatchConfig,
    index: &PositionIndex,
) -> Option<LiveMatchResult> {
    match_segment(segment, LiveMethod::New, cfg, index)
}

pub fn match_live_old(
    segment: &ActivitySegment,
    cfg: &LiveMatchConfig,
    index: &PositionIndex,
) -> Option<LiveMatchResult> {
    match_segment(segment, LiveMethod::Old, cfg, index)
}

/// Matches many segments in parallel; results follow input order.
pub fn match_all(
    segments: &[ActivitySegment],
    method: LiveMethod,
    cfg: &LiveMatchConfig,
    index: &PositionIndex,
) -> Vec<Option<LiveMatchResult>> {
    segments
        .par_iter()
        .map(|s| match_segment(s, method, cfg, index))
        .collect()
}
