//! Walk, one timetabled ride, walk: a minimal journey planner over GTFS.
//!
//! [`GtfsPlanner`] answers queries from an in-memory feed.
//! [`CommandPlanner`] forwards the same queries to an external program as
//! JSON, so another journey planner can be plugged in.

use std::collections::HashMap;
use std::io::Write;
use std::process::{Command, Stdio};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::geodesy::{distance_m, GeoPoint, Linestring};
use crate::ingest::gtfs::{GtfsBundle, ServiceError};
use crate::model::{secs_between, LineType, Timestamp};
use crate::segmentation::ActivitySegment;
use crate::static_matcher::MatchConstants;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanQuery {
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub earliest_start: Timestamp,
    pub max_walk_m: f64,
    pub n_plans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitLeg {
    pub line_type: LineType,
    pub line_name: String,
    pub trip_id: String,
    pub board_stop: String,
    pub board_time: Timestamp,
    pub alight_stop: String,
    pub alight_time: Timestamp,
    #[serde(with = "geometry_points")]
    pub geometry: Linestring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub walk_before_s: i64,
    pub transit: TransitLeg,
    pub walk_after_s: i64,
    pub total_duration_s: i64,
}

impl Itinerary {
    /// Time between arriving at the board stop and boarding.
    pub fn wait_s(&self) -> i64 {
        self.total_duration_s - self.walk_before_s - self.transit_duration_s() - self.walk_after_s
    }

    pub fn transit_duration_s(&self) -> i64 {
        secs_between(self.transit.board_time, self.transit.alight_time)
    }
}

mod geometry_points {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ls: &Linestring, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(ls.points())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Linestring, D::Error> {
        let pts = Vec::<GeoPoint>::deserialize(d)?;
        Linestring::from_points(pts).map_err(serde::de::Error::custom)
    }
}

/// Why a query produced no itineraries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmptyReason {
    NoStopsNearOrigin,
    NoStopsNearDestination,
    NoConnection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Plans {
    pub itineraries: Vec<Itinerary>,
    pub empty_reason: Option<EmptyReason>,
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("invalid query: {0}")]
    Query(String),
    #[error("external planner '{program}': {message}")]
    External { program: String, message: String },
}

pub trait Planner: Send + Sync {
    fn plan(&self, query: &PlanQuery) -> Result<Plans, PlanError>;
}

/// Query for a vehicular segment: its endpoints, a start moved back by the
/// longest tolerated initial walk, twice the endpoint inaccuracy as walking
/// budget and three plans.
pub fn adjusted_query(segment: &ActivitySegment, constants: &MatchConstants) -> PlanQuery {
    let first = segment.trace.first().expect("segments are non-empty");
    let last = segment.trace.last().expect("segments are non-empty");
    PlanQuery {
        origin: first.position,
        destination: last.position,
        earliest_start: segment.start_time - chrono::Duration::seconds(constants.t_wb_max_s),
        max_walk_m: 2.0 * constants.d_e_max_m,
        n_plans: constants.n_plans,
    }
}

/// Walking time in whole seconds, rounded up.
pub fn walk_seconds(distance_m: f64, speed_mps: f64) -> i64 {
    (distance_m / speed_mps).ceil() as i64
}

const CELL_DEG: f64 = 0.01;

/// Planner over one service day of a GTFS feed.
pub struct GtfsPlanner<'a> {
    gtfs: &'a GtfsBundle,
    date: NaiveDate,
    walk_speed_mps: f64,
    active: Vec<bool>,
    /// `(trip, position in trip)` for every call at a stop.
    calls_at_stop: Vec<Vec<(usize, usize)>>,
    grid: HashMap<(i32, i32), Vec<usize>>,
}

impl<'a> GtfsPlanner<'a> {
    pub fn new(gtfs: &'a GtfsBundle, date: NaiveDate, walk_speed_mps: f64) -> Result<Self, PlanError> {
        let active = gtfs.active_trips(date)?;
        let mut calls_at_stop = vec![Vec::new(); gtfs.stops.len()];
        for (trip, range) in gtfs.trip_ranges.iter().enumerate() {
            if !active[trip] {
                continue;
            }
            for (pos, st) in gtfs.stop_times[range.clone()].iter().enumerate() {
                calls_at_stop[st.stop].push((trip, pos));
            }
        }
        let mut grid: HashMap<(i32, i32), Vec<usize>> = HashMap::new();
        for (i, s) in gtfs.stops.iter().enumerate() {
            grid.entry(cell(s.position)).or_default().push(i);
        }
        Ok(Self {
            gtfs,
            date,
            walk_speed_mps,
            active,
            calls_at_stop,
            grid,
        })
    }

    pub fn active_trip_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Stops within `radius_m` of `p` with their distances, by stop index.
    pub fn stops_near(&self, p: GeoPoint, radius_m: f64) -> Vec<(usize, f64)> {
        let dlat = (radius_m / 111_000.0 / CELL_DEG).ceil() as i32 + 1;
        let cos = p.lat.to_radians().cos().max(0.01);
        let dlng = (radius_m / (111_000.0 * cos) / CELL_DEG).ceil() as i32 + 1;
        let (ci, cj) = cell(p);
        let mut out = Vec::new();
        for i in ci - dlat..=ci + dlat {
            for j in cj - dlng..=cj + dlng {
                for &s in self.grid.get(&(i, j)).into_iter().flatten() {
                    let d = distance_m(p, self.gtfs.stops[s].position);
                    if d <= radius_m {
                        out.push((s, d));
                    }
                }
            }
        }
        out.sort_by_key(|&(s, _)| s);
        out
    }

    fn at(&self, secs: u32) -> Timestamp {
        self.date.and_hms_opt(0, 0, 0).expect("midnight") + chrono::Duration::seconds(i64::from(secs))
    }

    /// Ride geometry: the shape between the vertices nearest to the board
    /// and alight stops, or the called stops when no usable shape exists.
    fn geometry(&self, trip: usize, from: usize, to: usize) -> Linestring {
        let calls = &self.gtfs.trip_stop_times(trip)[from..=to];
        let stop_points: Vec<GeoPoint> = calls.iter().map(|c| self.gtfs.stops[c.stop].position).collect();
        let shape = self.gtfs.trips[trip]
            .shape_id
            .as_ref()
            .and_then(|id| self.gtfs.shapes.get(id))
            .filter(|s| s.len() >= 2);
        if let Some(shape) = shape {
            let nearest = |p: GeoPoint, from: usize| {
                (from..shape.len())
                    .min_by(|&a, &b| distance_m(p, shape[a]).total_cmp(&distance_m(p, shape[b])))
                    .unwrap_or(from)
            };
            let i = nearest(stop_points[0], 0);
            let j = nearest(*stop_points.last().expect("two calls"), i);
            if j > i {
                return Linestring::from_points(shape[i..=j].iter().copied()).expect("non-empty");
            }
        }
        Linestring::from_points(stop_points).expect("non-empty")
    }

    fn itinerary(&self, trip: usize, board: usize, alight: usize, d_o: f64, d_d: f64) -> Option<Itinerary> {
        let gtfs = self.gtfs;
        let route = &gtfs.routes[gtfs.trips[trip].route];
        let calls = gtfs.trip_stop_times(trip);
        let walk_before_s = walk_seconds(d_o, self.walk_speed_mps);
        let walk_after_s = walk_seconds(d_d, self.walk_speed_mps);
        let board_time = self.at(calls[board].departure);
        let alight_time = self.at(calls[alight].arrival);
        let start_time = board_time - chrono::Duration::seconds(walk_before_s);
        let end_time = alight_time + chrono::Duration::seconds(walk_after_s);
        let line_name = if route.short_name.is_empty() {
            route.long_name.clone()
        } else {
            route.short_name.clone()
        };
        Some(Itinerary {
            start_time,
            end_time,
            walk_before_s,
            transit: TransitLeg {
                line_type: route.mode?,
                line_name,
                trip_id: gtfs.trips[trip].id.clone(),
                board_stop: gtfs.stops[calls[board].stop].id.clone(),
                board_time,
                alight_stop: gtfs.stops[calls[alight].stop].id.clone(),
                alight_time,
                geometry: self.geometry(trip, board, alight),
            },
            walk_after_s,
            total_duration_s: secs_between(start_time, end_time),
        })
    }
}

fn cell(p: GeoPoint) -> (i32, i32) {
    ((p.lat / CELL_DEG).floor() as i32, (p.lng / CELL_DEG).floor() as i32)
}

/// Ranking key: earlier arrival, shorter duration, then trip and stops.
fn plan_order(a: &Itinerary, b: &Itinerary) -> std::cmp::Ordering {
    a.end_time
        .cmp(&b.end_time)
        .then(a.total_duration_s.cmp(&b.total_duration_s))
        .then_with(|| a.transit.trip_id.cmp(&b.transit.trip_id))
        .then_with(|| a.transit.board_stop.cmp(&b.transit.board_stop))
        .then_with(|| a.transit.alight_stop.cmp(&b.transit.alight_stop))
}

pub fn validate_query(q: &PlanQuery) -> Result<(), PlanError> {
    if !(q.max_walk_m > 0.0) || q.n_plans == 0 {
        return Err(PlanError::Query("max_walk_m and n_plans must be positive".into()));
    }
    Ok(())
}

impl Planner for GtfsPlanner<'_> {
    fn plan(&self, q: &PlanQuery) -> Result<Plans, PlanError> {
        validate_query(q)?;
        let origins = self.stops_near(q.origin, q.max_walk_m);
        if origins.is_empty() {
            return Ok(Plans {
                itineraries: vec![],
                empty_reason: Some(EmptyReason::NoStopsNearOrigin),
            });
        }
        let destinations: HashMap<usize, f64> = self.stops_near(q.destination, q.max_walk_m).into_iter().collect();
        if destinations.is_empty() {
            return Ok(Plans {
                itineraries: vec![],
                empty_reason: Some(EmptyReason::NoStopsNearDestination),
            });
        }
        let midnight = self.date.and_hms_opt(0, 0, 0).expect("midnight");
        let earliest = secs_between(midnight, q.earliest_start);

        // Best itinerary per trip.
        let mut best: HashMap<usize, Itinerary> = HashMap::new();
        for &(o, d_o) in &origins {
            let ready = earliest + walk_seconds(d_o, self.walk_speed_mps);
            for &(trip, board) in &self.calls_at_stop[o] {
                let calls = self.gtfs.trip_stop_times(trip);
                if i64::from(calls[board].departure) < ready {
                    continue;
                }
                for (alight, call) in calls.iter().enumerate().skip(board + 1) {
                    let Some(&d_d) = destinations.get(&call.stop) else { continue };
                    if d_o + d_d > q.max_walk_m {
                        continue;
                    }
                    let Some(it) = self.itinerary(trip, board, alight, d_o, d_d) else { continue };
                    match best.get(&trip) {
                        Some(cur) if plan_order(cur, &it).is_le() => {}
                        _ => {
                            best.insert(trip, it);
                        }
                    }
                }
            }
        }
        let mut itineraries: Vec<Itinerary> = best.into_values().collect();
        itineraries.sort_by(plan_order);
        itineraries.truncate(q.n_plans);
        let empty_reason = itineraries.is_empty().then_some(EmptyReason::NoConnection);
        Ok(Plans {
            itineraries,
            empty_reason,
        })
    }
}

/// Runs an external program once per query: the query is written to its
/// stdin as JSON and a JSON array of itineraries is read from its stdout.
#[derive(Debug, Clone)]
pub struct CommandPlanner {
    pub program: String,
    pub args: Vec<String>,
}

impl Planner for CommandPlanner {
    fn plan(&self, q: &PlanQuery) -> Result<Plans, PlanError> {
        validate_query(q)?;
        let fail = |message: String| PlanError::External {
            program: self.program.clone(),
            message,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        let request = serde_json::to_vec(q).map_err(|e| fail(e.to_string()))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(&request)
            .map_err(|e| fail(e.to_string()))?;
        let output = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !output.status.success() {
            return Err(fail(format!("exited with {}", output.status)));
        }
        let mut itineraries: Vec<Itinerary> =
            serde_json::from_slice(&output.stdout).map_err(|e| fail(format!("bad response: {e}")))?;
        itineraries.truncate(q.n_plans);
        let empty_reason = itineraries.is_empty().then_some(EmptyReason::NoConnection);
        Ok(Plans {
            itineraries,
            empty_reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::gtfs::{CalendarEntry, Route, Stop, StopTime, Trip};

    const M_PER_DEG_LAT: f64 = 111_194.93;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 8, 26).unwrap()
    }

    fn north_of(p: GeoPoint, m: f64) -> GeoPoint {
        GeoPoint::new(p.lat + m / M_PER_DEG_LAT, p.lng)
    }

    /// One route A -> B with the given departure times (seconds after midnight).
    fn fixture(departures: &[u32]) -> GtfsBundle {
        let a = GeoPoint::new(60.17, 24.94);
        let b = GeoPoint::new(60.17, 24.98);
        let mut g = GtfsBundle {
            stops: vec![
                Stop { id: "A".into(), name: "Alpha".into(), position: a },
                Stop { id: "B".into(), name: "Beta".into(), position: b },
            ],
            routes: vec![Route {
                id: "R".into(),
                short_name: "7A".into(),
                long_name: String::new(),
                route_type: 0,
                mode: Some(LineType::Tram),
            }],
            calendar: vec![CalendarEntry {
                service_id: "WK".into(),
                weekdays: [true, true, true, true, true, false, false],
                start: day(),
                end: day(),
            }],
            ..Default::default()
        };
        for (i, &dep) in departures.iter().enumerate() {
            g.trips.push(Trip {
                id: format!("T{i}"),
                route: 0,
                service_id: "WK".into(),
                shape_id: None,
            });
            let start = g.stop_times.len();
            g.stop_times.push(StopTime { trip: i, stop: 0, arrival: dep, departure: dep, sequence: 1 });
            g.stop_times.push(StopTime { trip: i, stop: 1, arrival: dep + 300, departure: dep + 300, sequence: 2 });
            g.trip_ranges.push(start..start + 2);
        }
        g
    }

    fn query(origin: GeoPoint, dest: GeoPoint, h: u32, m: u32) -> PlanQuery {
        PlanQuery {
            origin,
            destination: dest,
            earliest_start: day().and_hms_opt(h, m, 0).unwrap(),
            max_walk_m: 1000.0,
            n_plans: 3,
        }
    }

    #[test]
    fn walk_before_is_hand_computed() {
        let g = fixture(&[36_000]);
        let p = GtfsPlanner::new(&g, day(), 1.34).unwrap();
        let q = query(north_of(g.stops[0].position, 100.0), g.stops[1].position, 9, 55);
        let plans = p.plan(&q).unwrap();
        assert_eq!(plans.itineraries.len(), 1);
        let it = &plans.itineraries[0];
        assert_eq!(it.walk_before_s, 75);
        assert_eq!(it.transit.board_time, day().and_hms_opt(10, 0, 0).unwrap());
        assert_eq!(it.start_time, day().and_hms_opt(9, 58, 45).unwrap());
        assert_eq!(it.wait_s(), 0);
        assert_eq!(it.total_duration_s, 75 + 300);
        assert_eq!((it.transit.line_type, it.transit.line_name.as_str()), (LineType::Tram, "7A"));
    }

    #[test]
    fn departures_too_soon_are_skipped() {
        let g = fixture(&[36_000]);
        let p = GtfsPlanner::new(&g, day(), 1.34).unwrap();
        // Ready at 09:59:00 + 75 s = 10:00:15, after the departure.
        let q = query(north_of(g.stops[0].position, 100.0), g.stops[1].position, 9, 59);
        assert_eq!(p.plan(&q).unwrap().empty_reason, Some(EmptyReason::NoConnection));
    }

    #[test]
    fn far_origin_gives_empty_result() {
        let g = fixture(&[36_000]);
        let p = GtfsPlanner::new(&g, day(), 1.34).unwrap();
        let q = query(north_of(g.stops[0].position, 2000.0), g.stops[1].position, 9, 0);
        let plans = p.plan(&q).unwrap();
        assert!(plans.itineraries.is_empty());
        assert_eq!(plans.empty_reason, Some(EmptyReason::NoStopsNearOrigin));
    }

    #[test]
    fn earlier_trip_ranks_first() {
        let g = fixture(&[36_600, 36_000]);
        let p = GtfsPlanner::new(&g, day(), 1.34).unwrap();
        let plans = p.plan(&query(g.stops[0].position, g.stops[1].position, 9, 55)).unwrap();
        let ids: Vec<_> = plans.itineraries.iter().map(|i| i.transit.trip_id.as_str()).collect();
        assert_eq!(ids, vec!["T1", "T0"]);
    }

    #[test]
    fn inactive_date_is_an_error() {
        let g = fixture(&[36_000]);
        let saturday = NaiveDate::from_ymd_opt(2016, 8, 27).unwrap();
        assert!(matches!(GtfsPlanner::new(&g, saturday, 1.34), Err(PlanError::Service(_))));
    }

    #[test]
    fn itinerary_json_round_trip() {
        let g = fixture(&[36_000]);
        let p = GtfsPlanner::new(&g, day(), 1.34).unwrap();
        let plans = p.plan(&query(g.stops[0].position, g.stops[1].position, 9, 55)).unwrap();
        let json = serde_json::to_string(&plans.itineraries).unwrap();
        let back: Vec<Itinerary> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plans.itineraries);
    }

    #[cfg(unix)]
    #[test]
    fn command_planner_reads_stdout() {
        let g = fixture(&[36_000]);
        let p = GtfsPlanner::new(&g, day(), 1.34).unwrap();
        let q = query(g.stops[0].position, g.stops[1].position, 9, 55);
        let json = serde_json::to_string(&p.plan(&q).unwrap().itineraries).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let canned = dir.path().join("plans.json");
        std::fs::write(&canned, &json).unwrap();
        let ext = CommandPlanner {
            program: "sh".into(),
            args: vec!["-c".into(), format!("cat >/dev/null; cat '{}'", canned.display())],
        };
        assert_eq!(ext.plan(&q).unwrap().itineraries, p.plan(&q).unwrap().itineraries);
        let broken = CommandPlanner { program: "false".into(), args: vec![] };
        assert!(matches!(broken.plan(&q), Err(PlanError::External { .. })));
    }
}
