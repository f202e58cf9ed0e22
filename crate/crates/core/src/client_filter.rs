//! Offline replay of the mobile client's point filter and ACTIVE/SLEEP duty cycle.
//!
//! The phone accepts a position fix when one of these holds, checked in order:
//!
//! 1. the ping interval has elapsed since the last accepted fix;
//! 2. (accuracy must be better than the limit for the remaining rules)
//!    the top activity is good and differs from the last queued activity;
//! 3. the top activity equals the last queued one and the device moved
//!    farther from the last accepted fix than the fix's accuracy radius.
//!
//! Independently the client drops to SLEEP after an uninterrupted STILL
//! period of `sleep_timer_s`; a displacement larger than the fix accuracy
//! restarts that timer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geodesy::{distance_m, GeoPoint};
use crate::model::{secs_between, ActivityKind, DevicePoint, FilteredPoint, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[default]
    Active,
    Sleep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub sleep_timer_s: u32,
    pub ping_interval_s: u32,
    pub max_accuracy_m: f64,
    pub good_activities: BTreeSet<ActivityKind>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            sleep_timer_s: 40,
            ping_interval_s: 3600,
            max_accuracy_m: 1000.0,
            good_activities: ActivityKind::ALL.into_iter().filter(|a| a.is_good()).collect(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.sleep_timer_s == 0 || self.ping_interval_s == 0 || !(self.max_accuracy_m > 0.0) {
            return Err("filter timers and accuracy limit must be positive".into());
        }
        Ok(())
    }

    fn is_good(&self, a: ActivityKind) -> bool {
        self.good_activities.contains(&a)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterState {
    pub mode: Mode,
    /// Start of the STILL run currently counting towards SLEEP.
    pub sleep_timer_start: Option<Timestamp>,
    /// Position at which the running sleep timer was (re)started.
    pub sleep_anchor: Option<GeoPoint>,
    pub last_accepted: Option<DevicePoint>,
    pub last_queued_activity: Option<ActivityKind>,
    pub last_seen: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    /// Accepted: ping interval elapsed (or first fix ever).
    Ping,
    /// Rejected: accuracy radius not below the limit.
    Accuracy,
    /// Accepted: new good activity.
    ActivityChange,
    /// Accepted: same activity, moved farther than the accuracy radius.
    Moved,
    /// Rejected: same activity, not moved enough.
    Stationary,
    /// Rejected: top activity is not good.
    UnusableActivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub accepted: bool,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("device {device_id}: fix at {time} precedes previous fix at {previous}")]
    OutOfOrder {
        device_id: u32,
        time: Timestamp,
        previous: Timestamp,
    },
}

/// Applies the acceptance rules to one fix.
pub fn accept_point(
    state: &FilterState,
    p: &DevicePoint,
    cfg: &FilterConfig,
) -> Result<(FilterState, Decision), FilterError> {
    if let Some(previous) = state.last_seen {
        if p.time < previous {
            return Err(FilterError::OutOfOrder {
                device_id: p.device_id,
                time: p.time,
                previous,
            });
        }
    }
    let top = p.top_activity();
    let good_top = top.filter(|&a| cfg.is_good(a));

    let reason = match &state.last_accepted {
        None => Reason::Ping,
        Some(last) if secs_between(last.time, p.time) >= i64::from(cfg.ping_interval_s) => Reason::Ping,
        Some(_) if !(p.accuracy < cfg.max_accuracy_m) => Reason::Accuracy,
        Some(_) if good_top.is_some() && good_top != state.last_queued_activity => {
            Reason::ActivityChange
        }
        Some(last) if good_top.is_some() => {
            if distance_m(last.position, p.position) > p.accuracy {
                Reason::Moved
            } else {
                Reason::Stationary
            }
        }
        Some(_) => Reason::UnusableActivity,
    };
    let accepted = matches!(reason, Reason::Ping | Reason::ActivityChange | Reason::Moved);

    let mut next = state.clone();
    next.last_seen = Some(p.time);
    if good_top.is_some() {
        next.last_queued_activity = good_top;
    }
    if accepted {
        next.last_accepted = Some(p.clone());
    }
    Ok((next, Decision { accepted, reason }))
}

/// Advances the ACTIVE/SLEEP machine by one fix. Returns the transition, if any.
fn step_duty_cycle(
    state: &mut FilterState,
    p: &DevicePoint,
    cfg: &FilterConfig,
) -> Option<(Timestamp, Mode, Mode)> {
    let top = p.top_activity();
    match state.mode {
        Mode::Active => {
            if top != Some(ActivityKind::Still) {
                state.sleep_timer_start = None;
                state.sleep_anchor = None;
                return None;
            }
            match (state.sleep_timer_start, state.sleep_anchor) {
                (Some(_), Some(anchor)) if distance_m(anchor, p.position) <= p.accuracy => {}
                _ => {
                    state.sleep_timer_start = Some(p.time);
                    state.sleep_anchor = Some(p.position);
                }
            }
            let start = state.sleep_timer_start.expect("timer running");
            if secs_between(start, p.time) >= i64::from(cfg.sleep_timer_s) {
                state.mode = Mode::Sleep;
                state.sleep_timer_start = None;
                state.sleep_anchor = None;
                let at = start + chrono::Duration::seconds(i64::from(cfg.sleep_timer_s));
                return Some((at, Mode::Active, Mode::Sleep));
            }
            None
        }
        Mode::Sleep => match top {
            Some(a) if a != ActivityKind::Still && cfg.is_good(a) => {
                state.mode = Mode::Active;
                Some((p.time, Mode::Sleep, Mode::Active))
            }
            _ => None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub device_id: u32,
    pub time: Timestamp,
    pub from: Mode,
    pub to: Mode,
}

/// Per-fix annotation produced by [`simulate_duty_cycle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotated {
    /// Index into the input slice.
    pub index: usize,
    pub mode: Mode,
    pub decision: Decision,
    /// Fix belongs to a STILL run that ended in SLEEP.
    pub in_still_run: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DutyCycle {
    /// One entry per input fix, in input order.
    pub points: Vec<Annotated>,
    /// All transitions ordered by (device, time).
    pub transitions: Vec<Transition>,
}

/// Runs the filter and duty cycle over fixes of any number of devices.
///
/// Each device is replayed independently; the input must be time-ordered
/// per device.
pub fn simulate_duty_cycle(
    points: &[DevicePoint],
    cfg: &FilterConfig,
) -> Result<DutyCycle, FilterError> {
    let mut by_device: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        by_device.entry(p.device_id).or_default().push(i);
    }
    let mut annotated: Vec<Option<Annotated>> = vec![None; points.len()];
    let mut transitions = Vec::new();
    for (device_id, indices) in by_device {
        let mut state = FilterState::default();
        // Points of the STILL run currently counting towards SLEEP.
        let mut still_run: Vec<usize> = Vec::new();
        for i in indices {
            let p = &points[i];
            let (mut next, decision) = accept_point(&state, p, cfg)?;
            let timer_before = next.sleep_timer_start;
            let transition = step_duty_cycle(&mut next, p, cfg);
            if let Some((time, from, to)) = transition {
                if to == Mode::Sleep {
                    for &j in &still_run {
                        if let Some(a) = annotated[j].as_mut() {
                            a.in_still_run = true;
                        }
                    }
                }
                transitions.push(Transition {
                    device_id,
                    time,
                    from,
                    to,
                });
            }
            if next.sleep_timer_start != timer_before || next.mode == Mode::Sleep {
                still_run.clear();
            }
            if next.mode == Mode::Active && next.sleep_timer_start.is_some() {
                still_run.push(i);
            }
            annotated[i] = Some(Annotated {
                index: i,
                mode: next.mode,
                decision,
                in_still_run: transition.is_some_and(|t| t.2 == Mode::Sleep),
            });
            state = next;
        }
    }
    Ok(DutyCycle {
        points: annotated.into_iter().map(|a| a.expect("every point annotated")).collect(),
        transitions,
    })
}

/// Streaming activity choice: a good top activity wins; otherwise the
/// previous winner is inherited. The first point of a stream falls back to
/// its best good-ranked activity, then to its raw top activity.
#[derive(Debug, Clone, Default)]
pub struct ActivitySelector {
    previous: Option<ActivityKind>,
}

impl ActivitySelector {
    pub fn next(&mut self, p: &DevicePoint) -> ActivityKind {
        let winner = match p.top_activity() {
            Some(top) if top.is_good() => top,
            top => self.previous.unwrap_or_else(|| {
                p.activities
                    .iter()
                    .map(|a| a.kind)
                    .find(|a| a.is_good())
                    .or(top)
                    .unwrap_or(ActivityKind::Unknown)
            }),
        };
        self.previous = Some(winner);
        winner
    }
}

/// Winning activity for the centre point (`window[len / 2]`) of a window.
/// Only the centre and the points before it are consulted.
///
/// # Panics
/// On an empty window.
pub fn select_activity(window: &[DevicePoint]) -> ActivityKind {
    assert!(!window.is_empty(), "select_activity needs a non-empty window");
    let centre = window.len() / 2;
    let mut selector = ActivitySelector::default();
    window[..=centre]
        .iter()
        .map(|p| selector.next(p))
        .last()
        .expect("non-empty")
}

/// Rebuilds a filtered table from raw device fixes.
///
/// Drops fixes the client filter rejects, fixes recorded in SLEEP and the
/// STILL runs that led into SLEEP, then attaches the selected activity.
pub fn regenerate_filtered(
    points: &[DevicePoint],
    cfg: &FilterConfig,
) -> Result<Vec<FilteredPoint>, FilterError> {
    let cycle = simulate_duty_cycle(points, cfg)?;
    let mut selectors: BTreeMap<u32, ActivitySelector> = BTreeMap::new();
    let mut out = Vec::new();
    for a in &cycle.points {
        let p = &points[a.index];
        let activity = selectors.entry(p.device_id).or_default().next(p);
        if a.decision.accepted && a.mode == Mode::Active && !a.in_still_run {
            out.push(FilteredPoint {
                time: p.time,
                device_id: p.device_id,
                position: p.position,
                activity,
            });
        }
    }
    out.sort_by_key(|p| (p.time, p.device_id));
    Ok(out)
}

/// Comparison of a regenerated filtered table with a reference one, keyed
/// by `(device_id, time)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilteredDiff {
    pub regenerated: usize,
    pub reference: usize,
    pub common: usize,
    pub only_regenerated: usize,
    pub only_reference: usize,
    pub activity_mismatch: usize,
}

pub fn diff_filtered(regenerated: &[FilteredPoint], reference: &[FilteredPoint]) -> FilteredDiff {
    let key = |p: &FilteredPoint| (p.device_id, p.time);
    let ours: BTreeMap<_, _> = regenerated.iter().map(|p| (key(p), p.activity)).collect();
    let theirs: BTreeMap<_, _> = reference.iter().map(|p| (key(p), p.activity)).collect();
    let mut d = FilteredDiff {
        regenerated: regenerated.len(),
        reference: reference.len(),
        ..Default::default()
    };
    for (k, a) in &ours {
        match theirs.get(k) {
            Some(b) => {
                d.common += 1;
                if a != b {
                    d.activity_mismatch += 1;
                }
            }
            None => d.only_regenerated += 1,
        }
    }
    d.only_reference = theirs.keys().filter(|k| !ours.contains_key(k)).count();
    d
}
