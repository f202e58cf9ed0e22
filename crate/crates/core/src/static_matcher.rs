//! Validating timetabled itineraries against a recorded vehicular segment.
//!
//! A plan is discarded when its durations or start time are implausible for
//! the recorded leg, or when its route geometry does not follow the trace.
//! Among the remaining plans the one starting closest to the leg wins.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geodesy::{distance_m, point_to_linestring_m, resample_indices, Linestring};
use crate::ingest::format_timestamp;
use crate::model::{secs_between, LineType};
use crate::planner::{adjusted_query, Itinerary, PlanError, PlanQuery, Planner};
use crate::segmentation::ActivitySegment;

/// Distances in metres, speeds in m/s, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConstants {
    /// Largest displacement of a leg endpoint from the true stop.
    pub d_e_max_m: f64,
    pub v_w_mps: f64,
    /// Slowest plausible transit speed near stops.
    pub v_pt_mps: f64,
    /// Allowed schedule deviation.
    pub t_ept_s: i64,
    pub t_wb_max_s: i64,
    pub t_we_max_s: i64,
    pub t_ptb_max_s: i64,
    pub t_pte_max_s: i64,
    pub dt_pt_max_s: i64,
    pub dt_w_max_s: i64,
    pub dt_max_s: i64,
    pub start_diff_max_s: i64,
    pub route_quorum: f64,
    pub route_limit_m: f64,
    pub max_adjacent_outside: usize,
    pub resample_spacing_m: f64,
    pub n_plans: usize,
}

/// Seconds rounded to the nearest tenth of a minute.
pub fn round_to_tenth_minute(seconds: f64) -> i64 {
    ((seconds / 6.0).round() * 6.0) as i64
}

impl MatchConstants {
    /// Derives the time limits from the base distances and speeds.
    /// `dt_max_s` is a fixed ceiling rather than a derived value.
    pub fn derive(d_e_max_m: f64, v_w_mps: f64, v_pt_mps: f64, t_ept_s: i64, dt_max_s: i64) -> Self {
        let t_w = round_to_tenth_minute(d_e_max_m / v_w_mps);
        let t_pt = round_to_tenth_minute(d_e_max_m / v_pt_mps);
        Self {
            d_e_max_m,
            v_w_mps,
            v_pt_mps,
            t_ept_s,
            t_wb_max_s: t_w,
            t_we_max_s: t_w,
            t_ptb_max_s: t_pt,
            t_pte_max_s: t_pt,
            dt_pt_max_s: 2 * t_pt,
            dt_w_max_s: 2 * t_w,
            dt_max_s,
            start_diff_max_s: t_pt + t_ept_s,
            route_quorum: 0.70,
            route_limit_m: 100.0,
            max_adjacent_outside: 4,
            resample_spacing_m: 100.0,
            n_plans: 3,
        }
    }

    /// Relations between base and derived values that do not hold.
    pub fn inconsistencies(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, got: i64, want: i64| {
            if got != want {
                out.push(format!("{name} = {got}, expected {want}"));
            }
        };
        check("t_wb_max_s", self.t_wb_max_s, round_to_tenth_minute(self.d_e_max_m / self.v_w_mps));
        check("t_we_max_s", self.t_we_max_s, round_to_tenth_minute(self.d_e_max_m / self.v_w_mps));
        check("t_ptb_max_s", self.t_ptb_max_s, round_to_tenth_minute(self.d_e_max_m / self.v_pt_mps));
        check("t_pte_max_s", self.t_pte_max_s, round_to_tenth_minute(self.d_e_max_m / self.v_pt_mps));
        check("dt_pt_max_s", self.dt_pt_max_s, self.t_ptb_max_s + self.t_pte_max_s);
        check("dt_w_max_s", self.dt_w_max_s, self.t_wb_max_s + self.t_we_max_s);
        check("start_diff_max_s", self.start_diff_max_s, self.t_ptb_max_s + self.t_ept_s);
        // The total ceiling is the rounded sum of the transit and walking slack.
        let whole_minutes = ((self.dt_pt_max_s + self.dt_w_max_s) as f64 / 60.0).round() as i64 * 60;
        check("dt_max_s", self.dt_max_s, whole_minutes);
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_e_max_m > 0.0 && self.v_w_mps > 0.0 && self.v_pt_mps > 0.0) {
            return Err("distances and speeds must be positive".into());
        }
        if !(self.route_quorum > 0.0 && self.route_quorum <= 1.0) {
            return Err(format!("route quorum {} outside (0, 1]", self.route_quorum));
        }
        if !(self.route_limit_m > 0.0 && self.resample_spacing_m > 0.0) || self.n_plans == 0 {
            return Err("route limit, resample spacing and plan count must be positive".into());
        }
        Ok(())
    }
}

impl Default for MatchConstants {
    fn default() -> Self {
        Self::derive(500.0, 1.34, 3.0, 180, 1080)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Plan more than the schedule allowance shorter than the leg.
    TooShort,
    /// Plan longer than the leg by more than the total ceiling.
    TooLong,
    /// Ride duration differs from the leg by more than the transit slack.
    TransitDuration,
    /// Boarding too far from the leg start.
    StartDiff,
    /// Too few trace samples near the plan route.
    RouteFraction,
    /// Too many consecutive trace samples away from the plan route.
    AdjacentRun,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::TooShort => "too_short",
            RejectReason::TooLong => "too_long",
            RejectReason::TransitDuration => "transit_duration",
            RejectReason::StartDiff => "start_diff",
            RejectReason::RouteFraction => "route_fraction",
            RejectReason::AdjacentRun => "adjacent_run",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject(r) => r.as_str(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteCheck {
    pub fraction: f64,
    pub max_adjacent_run: usize,
    pub samples: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanAssessment {
    pub itinerary: Itinerary,
    /// Leg duration.
    pub t_v_s: i64,
    /// Plan duration minus leg duration.
    pub delta_total_s: i64,
    /// |ride duration - leg duration|.
    pub delta_transit_s: i64,
    /// |boarding time - leg start|.
    pub start_diff_s: i64,
    pub route: RouteCheck,
    pub verdict: Verdict,
}

/// Fraction of the trace near the plan route and the longest run of
/// consecutive samples away from it.
///
/// The trace is resampled at `resample_spacing_m`; samples closer than
/// `d_e_max_m` along the trace to either end are ignored unless that would
/// leave none.
pub fn route_geometry_check(segment: &ActivitySegment, geometry: &Linestring, c: &MatchConstants) -> RouteCheck {
    let trace = segment.positions();
    let mut along = Vec::with_capacity(trace.len());
    let mut acc = 0.0;
    for (i, p) in trace.iter().enumerate() {
        if i > 0 {
            acc += distance_m(trace[i - 1], *p);
        }
        along.push(acc);
    }
    let total = acc;
    let all = resample_indices(&trace, c.resample_spacing_m);
    let trimmed: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| along[i] >= c.d_e_max_m && total - along[i] >= c.d_e_max_m)
        .collect();
    let used = if trimmed.is_empty() { all } else { trimmed };

    let mut matched = 0;
    let mut run = 0;
    let mut max_run = 0;
    for &i in &used {
        if point_to_linestring_m(trace[i], geometry) <= c.route_limit_m {
            matched += 1;
            run = 0;
        } else {
            run += 1;
            max_run = max_run.max(run);
        }
    }
    let fraction = matched as f64 / used.len() as f64;
    let pass = matched as f64 + 1e-9 >= c.route_quorum * used.len() as f64 && max_run <= c.max_adjacent_outside;
    RouteCheck {
        fraction,
        max_adjacent_run: max_run,
        samples: used.len(),
        pass,
    }
}

/// Applies the duration, start-time and geometry criteria in that order.
pub fn filter_plan(itinerary: &Itinerary, segment: &ActivitySegment, c: &MatchConstants) -> PlanAssessment {
    let t_v = segment.duration_s();
    let t = itinerary.total_duration_s;
    let t_pt = itinerary.transit_duration_s();
    let start_diff = secs_between(segment.start_time, itinerary.transit.board_time).abs();
    let route = route_geometry_check(segment, &itinerary.transit.geometry, c);
    let reason = if t < t_v - c.t_ept_s {
        Some(RejectReason::TooShort)
    } else if t > t_v + c.dt_max_s {
        Some(RejectReason::TooLong)
    } else if (t_pt - t_v).abs() > c.dt_pt_max_s {
        Some(RejectReason::TransitDuration)
    } else if start_diff > c.start_diff_max_s {
        Some(RejectReason::StartDiff)
    } else if !(route.fraction + 1e-9 >= c.route_quorum) {
        Some(RejectReason::RouteFraction)
    } else if route.max_adjacent_run > c.max_adjacent_outside {
        Some(RejectReason::AdjacentRun)
    } else {
        None
    };
    PlanAssessment {
        itinerary: itinerary.clone(),
        t_v_s: t_v,
        delta_total_s: t - t_v,
        delta_transit_s: (t_pt - t_v).abs(),
        start_diff_s: start_diff,
        route,
        verdict: reason.map_or(Verdict::Accept, Verdict::Reject),
    }
}

/// Index of the winning accepted assessment: smallest start difference,
/// then smallest |t - tV|, then trip id.
pub fn pick_winner(assessments: &[PlanAssessment]) -> Option<usize> {
    assessments
        .iter()
        .enumerate()
        .filter(|(_, a)| a.verdict == Verdict::Accept)
        .min_by(|(_, a), (_, b)| {
            a.start_diff_s
                .cmp(&b.start_diff_s)
                .then(a.delta_total_s.abs().cmp(&b.delta_total_s.abs()))
                .then_with(|| a.itinerary.transit.trip_id.cmp(&b.itinerary.transit.trip_id))
        })
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticMatchResult {
    pub segment_id: u32,
    pub line_type: LineType,
    pub line_name: String,
    pub trip_id: String,
    pub assessment: PlanAssessment,
}

/// Everything the static matcher looked at for one segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticOutcome {
    pub segment_id: u32,
    pub query: PlanQuery,
    pub assessments: Vec<PlanAssessment>,
    pub result: Option<StaticMatchResult>,
}

#[derive(Debug, thiserror::Error)]
#[error("segment {segment_id}: {source}")]
pub struct StaticError {
    pub segment_id: u32,
    #[source]
    pub source: PlanError,
}

pub fn match_static(
    segment: &ActivitySegment,
    planner: &dyn Planner,
    c: &MatchConstants,
) -> Result<StaticOutcome, StaticError> {
    let query = adjusted_query(segment, c);
    let plans = planner.plan(&query).map_err(|source| StaticError {
        segment_id: segment.segment_id,
        source,
    })?;
    let assessments: Vec<PlanAssessment> = plans
        .itineraries
        .iter()
        .map(|it| filter_plan(it, segment, c))
        .collect();
    let result = pick_winner(&assessments).map(|i| {
        let a = &assessments[i];
        StaticMatchResult {
            segment_id: segment.segment_id,
            line_type: a.itinerary.transit.line_type,
            line_name: a.itinerary.transit.line_name.clone(),
            trip_id: a.itinerary.transit.trip_id.clone(),
            assessment: a.clone(),
        }
    });
    Ok(StaticOutcome {
        segment_id: segment.segment_id,
        query,
        assessments,
        result,
    })
}

/// Matches many segments in parallel; outcomes follow input order.
pub fn match_all(
    segments: &[ActivitySegment],
    planner: &dyn Planner,
    c: &MatchConstants,
) -> Result<Vec<StaticOutcome>, StaticError> {
    segments.par_iter().map(|s| match_static(s, planner, c)).collect()
}

/// One CSV row per (segment, itinerary).
pub fn write_assessments_csv(outcomes: &[StaticOutcome]) -> String {
    let mut s = String::from(
        "segment_id,trip_id,line_type,line_name,board_time,alight_time,t_v_s,t_s,t_pt_s,\
         delta_total_s,delta_transit_s,start_diff_s,route_fraction,max_adjacent_run,verdict,winner\n",
    );
    for o in outcomes {
        let winner = o.result.as_ref().map(|r| r.trip_id.as_str());
        for a in &o.assessments {
            let tr = &a.itinerary.transit;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{},{},{}",
                o.segment_id,
                tr.trip_id,
                tr.line_type,
                tr.line_name,
                format_timestamp(tr.board_time),
                format_timestamp(tr.alight_time),
                a.t_v_s,
                a.itinerary.total_duration_s,
                a.itinerary.transit_duration_s(),
                a.delta_total_s,
                a.delta_transit_s,
                a.start_diff_s,
                a.route.fraction,
                a.route.max_adjacent_run,
                a.verdict.label(),
                u8::from(winner == Some(tr.trip_id.as_str()) && a.verdict == Verdict::Accept),
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_constants_match_the_published_seconds() {
        let c = MatchConstants::default();
        assert_eq!(
            (c.t_wb_max_s, c.t_we_max_s, c.t_ptb_max_s, c.t_pte_max_s),
            (372, 372, 168, 168)
        );
        assert_eq!((c.dt_pt_max_s, c.dt_w_max_s, c.dt_max_s, c.start_diff_max_s), (336, 744, 1080, 348));
        assert!(c.inconsistencies().is_empty(), "{:?}", c.inconsistencies());
    }

    #[test]
    fn inconsistent_overrides_are_reported() {
        let c = MatchConstants {
            start_diff_max_s: 400,
            ..MatchConstants::default()
        };
        assert_eq!(c.inconsistencies().len(), 1);
    }
}
