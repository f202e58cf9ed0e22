//! Cutting filtered point streams into same-activity segments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::geodesy::{BoundingBox, GeoPoint};
use crate::ingest::{format_timestamp, read_csv, read_file, IngestError, LoadOptions};
use crate::model::{secs_between, ActivityKind, FilteredPoint, ManualTrip, Timestamp};

pub const DEFAULT_MAX_GAP_S: u32 = 300;

/// A timestamped trace point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub time: Timestamp,
    pub position: GeoPoint,
}

/// Maximal run of one device's points sharing an activity with no gap above
/// the configured limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivitySegment {
    /// 1-based, ordered by device then start time.
    pub segment_id: u32,
    pub device_id: u32,
    pub activity: ActivityKind,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub trace: Vec<TracePoint>,
}

impl ActivitySegment {
    pub fn duration_s(&self) -> i64 {
        secs_between(self.start_time, self.end_time)
    }

    pub fn midpoint(&self) -> Timestamp {
        self.start_time + chrono::Duration::seconds(self.duration_s() / 2)
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::around(self.trace.iter().map(|p| p.position)).expect("segments are non-empty")
    }

    pub fn positions(&self) -> Vec<GeoPoint> {
        self.trace.iter().map(|p| p.position).collect()
    }
}

/// Splits points into segments.
///
/// A new segment starts whenever the activity changes or two consecutive
/// points of a device are more than `max_gap_s` apart. Input order only
/// matters within a device.
pub fn build_segments(points: &[FilteredPoint], max_gap_s: u32) -> Vec<ActivitySegment> {
    let mut by_device: BTreeMap<u32, Vec<&FilteredPoint>> = BTreeMap::new();
    for p in points {
        by_device.entry(p.device_id).or_default().push(p);
    }
    let mut out: Vec<ActivitySegment> = Vec::new();
    for (device_id, mut pts) in by_device {
        pts.sort_by_key(|p| p.time);
        let mut current: Option<ActivitySegment> = None;
        for p in pts {
            let tp = TracePoint {
                time: p.time,
                position: p.position,
            };
            match current.as_mut() {
                Some(seg)
                    if seg.activity == p.activity
                        && secs_between(seg.end_time, p.time) <= i64::from(max_gap_s) =>
                {
                    seg.end_time = p.time;
                    seg.trace.push(tp);
                }
                _ => {
                    out.extend(current.take());
                    current = Some(ActivitySegment {
                        segment_id: 0,
                        device_id,
                        activity: p.activity,
                        start_time: p.time,
                        end_time: p.time,
                        trace: vec![tp],
                    });
                }
            }
        }
        out.extend(current);
    }
    for (i, seg) in out.iter_mut().enumerate() {
        seg.segment_id = i as u32 + 1;
    }
    out
}

/// IN_VEHICLE segments with at least two points.
pub fn vehicular_candidates(segments: &[ActivitySegment]) -> Vec<ActivitySegment> {
    segments
        .iter()
        .filter(|s| s.activity == ActivityKind::InVehicle && s.trace.len() >= 2)
        .cloned()
        .collect()
}

/// Length in seconds of the intersection of two closed intervals, or `None`
/// when they are disjoint. Touching endpoints give `Some(0)`.
pub fn interval_overlap_s(a: (Timestamp, Timestamp), b: (Timestamp, Timestamp)) -> Option<i64> {
    let start = a.0.max(b.0);
    let end = a.1.min(b.1);
    (start <= end).then(|| secs_between(start, end))
}

/// Overlap between a segment and a logged trip of the same device.
///
/// Trips without both vehicle times never overlap.
pub fn overlap(segment: &ActivitySegment, trip: &ManualTrip) -> Option<i64> {
    if segment.device_id != trip.device_id {
        return None;
    }
    let (dep, arr) = (trip.vehicle_dep_time?, trip.vehicle_arr_time?);
    interval_overlap_s((segment.start_time, segment.end_time), (dep, arr))
}

pub fn write_segments_csv(segments: &[ActivitySegment]) -> String {
    let mut s = String::from("id,device_id,activity,start,end,n_points\n");
    for seg in segments {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            seg.segment_id,
            seg.device_id,
            seg.activity,
            format_timestamp(seg.start_time),
            format_timestamp(seg.end_time),
            seg.trace.len()
        );
    }
    s
}

/// Summary row of an exported segment table. Traces are not exported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentSummary {
    pub segment_id: u32,
    pub device_id: u32,
    pub activity: ActivityKind,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub n_points: usize,
}

impl From<&ActivitySegment> for SegmentSummary {
    fn from(s: &ActivitySegment) -> Self {
        Self {
            segment_id: s.segment_id,
            device_id: s.device_id,
            activity: s.activity,
            start_time: s.start_time,
            end_time: s.end_time,
            n_points: s.trace.len(),
        }
    }
}

pub fn load_segments_csv(path: &Path, opts: &LoadOptions) -> Result<Vec<SegmentSummary>, IngestError> {
    let bytes = read_file(path)?;
    let (rows, _) = read_csv(
        path,
        &bytes,
        opts.permissive,
        |h, row| {
            Ok(SegmentSummary {
                segment_id: row.parse(h.require("id")?)?,
                device_id: row.parse(h.require("device_id")?)?,
                activity: row.parse(h.require("activity")?)?,
                start_time: row.timestamp(h.require("start")?, opts.default_date)?,
                end_time: row.timestamp(h.require("end")?, opts.default_date)?,
                n_points: row.parse(h.require("n_points")?)?,
            })
        },
        |_| Ok(()),
    )?;
    Ok(rows)
}
