//! Fixtures, independent oracles and reusable checks for the integration
//! test targets.
#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use triprec_core::client_filter::{select_activity, simulate_duty_cycle, regenerate_filtered, FilterConfig, Mode};
use triprec_core::geodesy::{point_to_segment_m, GeoPoint, Linestring};
use triprec_core::ingest::gtfs::{CalendarEntry, GtfsBundle, Route, Stop, StopTime, Trip};
use triprec_core::live_matcher::{
    match_live, match_live_old, measure_vehicle, select_user_samples, LiveMatchConfig, LiveMethod, PositionIndex,
};
use triprec_core::planner::{walk_seconds, GtfsPlanner, Itinerary, PlanQuery, Planner, TransitLeg};
use triprec_core::segmentation::{ActivitySegment, TracePoint};
use triprec_core::static_matcher::{filter_plan, MatchConstants, RejectReason, Verdict};
use triprec_core::{distance_m, ActivityKind, DevicePoint, LineType, RankedActivity, Timestamp, VehiclePosition};

pub const M_PER_DEG_LAT: f64 = 111_194.926_644_558_74;
pub const ORIGIN: GeoPoint = GeoPoint { lat: 60.17, lng: 24.94 };

pub fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 8, 26).unwrap()
}

pub fn t(seconds: i64) -> Timestamp {
    day().and_hms_opt(10, 0, 0).unwrap() + Duration::seconds(seconds)
}

/// Point `north_m` north and `east_m` east of `ORIGIN` (small offsets).
pub fn offset(north_m: f64, east_m: f64) -> GeoPoint {
    let lat = ORIGIN.lat + north_m / M_PER_DEG_LAT;
    let lng = ORIGIN.lng + east_m / (M_PER_DEG_LAT * lat.to_radians().cos());
    GeoPoint::new(lat, lng)
}

// ---------------------------------------------------------------------------
// Geodesy oracles

/// Great-circle distance through the 3-D chord between unit vectors.
pub fn chord_distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let v = |p: GeoPoint| {
        let (la, lo) = (p.lat.to_radians(), p.lng.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (u, w) = (v(a), v(b));
    let chord = ((u[0] - w[0]).powi(2) + (u[1] - w[1]).powi(2) + (u[2] - w[2]).powi(2)).sqrt();
    2.0 * 6_371_000.0 * (chord / 2.0).asin()
}

/// Vincenty inverse solution on the WGS84 ellipsoid.
pub fn vincenty_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (aa, f) = (6_378_137.0_f64, 1.0 / 298.257_223_563);
    let bb = (1.0 - f) * aa;
    let l = (b.lng - a.lng).to_radians();
    let u1 = ((1.0 - f) * a.lat.to_radians().tan()).atan();
    let u2 = ((1.0 - f) * b.lat.to_radians().tan()).atan();
    let (s1, c1, s2, c2) = (u1.sin(), u1.cos(), u2.sin(), u2.cos());
    let mut lambda = l;
    for _ in 0..200 {
        let (sl, cl) = (lambda.sin(), lambda.cos());
        let sin_sigma = ((c2 * sl).powi(2) + (c1 * s2 - s1 * c2 * cl).powi(2)).sqrt();
        if sin_sigma == 0.0 {
            return 0.0;
        }
        let cos_sigma = s1 * s2 + c1 * c2 * cl;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = c1 * c2 * sl / sin_sigma;
        let cos2_alpha = 1.0 - sin_alpha * sin_alpha;
        let cos_2sm = if cos2_alpha == 0.0 { 0.0 } else { cos_sigma - 2.0 * s1 * s2 / cos2_alpha };
        let c = f / 16.0 * cos2_alpha * (4.0 + f * (4.0 - 3.0 * cos2_alpha));
        let prev = lambda;
        lambda = l + (1.0 - c) * f * sin_alpha * (sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
        if (lambda - prev).abs() < 1e-12 {
            let u_sq = cos2_alpha * (aa * aa - bb * bb) / (bb * bb);
            let big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
            let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
            let d_sigma = big_b
                * sin_sigma
                * (cos_2sm
                    + big_b / 4.0
                        * (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
                            - big_b / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma * sin_sigma) * (-3.0 + 4.0 * cos_2sm * cos_2sm)));
            return bb * big_a * (sigma - d_sigma);
        }
    }
    f64::NAN
}

/// Point-to-segment distance by dense sampling of the segment.
pub fn sampled_segment_distance_m(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    (0..=2000)
        .map(|i| {
            let f = i as f64 / 2000.0;
            distance_m(p, GeoPoint::new(a.lat + f * (b.lat - a.lat), a.lng + f * (b.lng - a.lng)))
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn helsinki_point() -> impl Strategy<Value = GeoPoint> {
    (59.9f64..60.5, 24.4f64..25.4).prop_map(|(lat, lng)| GeoPoint::new(lat, lng))
}

/// Haversine against the chord formula and the ellipsoid.
pub fn check_geodesy(a: GeoPoint, b: GeoPoint) -> Result<(), String> {
    let d = distance_m(a, b);
    let chord = chord_distance_m(a, b);
    if (d - chord).abs() > 1e-6 * d.max(1.0) {
        return Err(format!("haversine {d} vs chord {chord}"));
    }
    if d > 1.0 {
        let v = vincenty_m(a, b);
        if ((d - v) / v).abs() > 0.005 {
            return Err(format!("haversine {d} vs ellipsoid {v}"));
        }
    }
    Ok(())
}

/// Projected point-to-segment against dense sampling, for segments of a few km.
pub fn check_point_to_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> Result<(), String> {
    let fast = point_to_segment_m(p, a, b);
    let slow = sampled_segment_distance_m(p, a, b);
    let step = distance_m(a, b) / 2000.0;
    // The local projection bends straight lat/lng lines by about
    // dlat * tan(lat); a few km near 60N stays under 2e-3.
    let tol = 2e-3 * slow.max(distance_m(a, b));
    if fast > slow + tol + 1e-6 || slow - fast > tol + step {
        return Err(format!("projected {fast} vs sampled {slow}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Device streams

pub fn activity() -> impl Strategy<Value = ActivityKind> {
    prop::sample::select(ActivityKind::ALL.to_vec())
}

/// Random device stream: one or two devices, spacing 1..=10 s.
pub fn device_stream(max_len: usize) -> impl Strategy<Value = Vec<DevicePoint>> {
    prop::collection::vec(
        (
            1i64..=10,
            -60.0f64..60.0,
            -60.0f64..60.0,
            prop::sample::select(vec![5.0, 20.0, 50.0, 200.0, 1500.0]),
            prop::collection::vec(activity(), 1..4),
            1u32..=2,
        ),
        0..max_len,
    )
    .prop_map(|steps| {
        let mut out = Vec::new();
        let mut clock = [0i64; 3];
        let mut pos = [(0.0f64, 0.0f64); 3];
        for (dt, dn, de, accuracy, acts, device) in steps {
            let d = device as usize;
            clock[d] += dt;
            pos[d].0 += dn;
            pos[d].1 += de;
            let mut confidence = 100u8;
            let activities = acts
                .into_iter()
                .map(|kind| {
                    let a = RankedActivity { kind, confidence };
                    confidence = confidence.saturating_sub(20);
                    a
                })
                .collect();
            out.push(DevicePoint {
                time: t(clock[d]),
                device_id: device,
                position: offset(pos[d].0, pos[d].1),
                accuracy,
                activities,
            });
        }
        out.sort_by_key(|p| (p.time, p.device_id));
        out
    })
}

/// Literal recursive statement of the activity selection rule.
pub fn oracle_winner(window: &[DevicePoint], i: usize) -> ActivityKind {
    let p = &window[i];
    let Some(top) = p.activities.first().map(|a| a.kind) else {
        return if i > 0 { oracle_winner(window, i - 1) } else { ActivityKind::Unknown };
    };
    if top.is_good() {
        return top;
    }
    if i > 0 {
        return oracle_winner(window, i - 1);
    }
    p.activities.iter().map(|a| a.kind).find(|a| a.is_good()).unwrap_or(top)
}

/// Replay determinism plus the invariants of the filter and duty cycle.
pub fn check_filter_stream(points: &[DevicePoint]) -> Result<(), String> {
    let cfg = FilterConfig::default();
    let a = simulate_duty_cycle(points, &cfg).map_err(|e| e.to_string())?;
    let b = simulate_duty_cycle(points, &cfg).map_err(|e| e.to_string())?;
    if a != b {
        return Err("duty cycle replay differs".into());
    }
    let ra = regenerate_filtered(points, &cfg).map_err(|e| e.to_string())?;
    let rb = regenerate_filtered(points, &cfg).map_err(|e| e.to_string())?;
    if ra != rb {
        return Err("regenerated table differs".into());
    }
    if ra.len() > points.len() {
        return Err("filtering added points".into());
    }
    for device in [1u32, 2] {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].device_id == device).collect();
        // Liveness: accepted fixes are never further apart than the ping
        // interval plus one input step (10 s at most).
        let mut last: Option<Timestamp> = None;
        for &i in &idx {
            if a.points[i].decision.accepted {
                last = Some(points[i].time);
            } else if let Some(l) = last {
                let gap = (points[i].time - l).num_seconds();
                if gap > i64::from(cfg.ping_interval_s) + 10 {
                    return Err(format!("rejected fix {gap} s after last accepted"));
                }
            }
        }
        // Mode annotations agree with the transition log.
        let mut mode = Mode::Active;
        let mut transitions = a.transitions.iter().filter(|tr| tr.device_id == device).peekable();
        for &i in &idx {
            while let Some(tr) = transitions.peek() {
                if tr.time <= points[i].time {
                    mode = tr.to;
                    transitions.next();
                } else {
                    break;
                }
            }
            if a.points[i].mode != mode {
                return Err(format!("point {i} annotated {:?}, transitions say {mode:?}", a.points[i].mode));
            }
        }
        let stream: Vec<DevicePoint> = idx.iter().map(|&i| points[i].clone()).collect();
        for end in 1..=stream.len() {
            let w = &stream[..end];
            if select_activity(w) != oracle_winner(w, w.len() / 2) {
                return Err(format!("activity selection differs on window of {end}"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Live matching scenarios

pub fn straight_segment(points: &[(i64, GeoPoint)]) -> ActivitySegment {
    ActivitySegment {
        segment_id: 1,
        device_id: 1,
        activity: ActivityKind::InVehicle,
        start_time: t(points[0].0),
        end_time: t(points.last().unwrap().0),
        trace: points.iter().map(|&(s, p)| TracePoint { time: t(s), position: p }).collect(),
    }
}

pub fn vehicle(vehicle_ref: &str, s: i64, p: GeoPoint, line_type: LineType, name: &str) -> VehiclePosition {
    VehiclePosition {
        time: t(s),
        position: p,
        line_type,
        line_name: name.into(),
        vehicle_ref: vehicle_ref.into(),
    }
}

/// `n` samples 200 s apart; the vehicle is at the sample position for the
/// first `matched` samples and 500 m east for the rest.
pub fn quorum_scenario(n: usize, matched: usize) -> (ActivitySegment, PositionIndex) {
    let pts: Vec<(i64, GeoPoint)> = (0..n).map(|i| (i as i64 * 200, offset(i as f64 * 300.0, 0.0))).collect();
    let positions = pts
        .iter()
        .enumerate()
        .map(|(i, &(s, p))| {
            let at = if i < matched { p } else { offset(i as f64 * 300.0, 500.0) };
            vehicle("v1", s, at, LineType::Bus, "16")
        })
        .collect::<Vec<_>>();
    (straight_segment(&pts), PositionIndex::new(positions))
}

/// Eligibility at ceil(0.75 n) matched samples and not one fewer.
pub fn check_quorum_boundary(n: usize) -> Result<(), String> {
    let cfg = LiveMatchConfig::default();
    // 4k >= 3n, evaluated in integers.
    let k = (3 * n).div_ceil(4);
    for (matched, expect) in [(k, true), (k - 1, false)] {
        let (seg, index) = quorum_scenario(n, matched);
        let samples = select_user_samples(&seg, cfg.max_user_samples);
        let s = measure_vehicle(&samples, "v1", LiveMethod::New, &cfg, &index);
        if s.matched != matched {
            return Err(format!("n={n}: expected {matched} matched samples, got {}", s.matched));
        }
        if s.qualifies(cfg.quorum_fraction) != expect || match_live(&seg, &cfg, &index).is_some() != expect {
            return Err(format!("n={n}, matched={matched}: expected eligible={expect}"));
        }
    }
    Ok(())
}

/// Vehicle on a straight northbound line at `kmh`, fixed every 30 s; the
/// user is sampled midway between fixes.
pub fn speed_scenario(kmh: f64) -> (ActivitySegment, PositionIndex) {
    let v = kmh / 3.6;
    let fixes: Vec<VehiclePosition> = (0..=40)
        .map(|i| {
            let s = i * 30;
            vehicle("tram-1", s, offset(v * s as f64, 0.0), LineType::Tram, "7A")
        })
        .collect();
    let user: Vec<(i64, GeoPoint)> = (0..39)
        .map(|i| {
            let s = i * 30 + 15;
            (s, offset(v * s as f64, 0.0))
        })
        .collect();
    (straight_segment(&user), PositionIndex::new(fixes))
}

/// (old method matched, new method matched).
pub fn speed_verdicts(kmh: f64) -> (bool, bool) {
    let (seg, index) = speed_scenario(kmh);
    let cfg = LiveMatchConfig::default();
    (match_live_old(&seg, &cfg, &index).is_some(), match_live(&seg, &cfg, &index).is_some())
}

// ---------------------------------------------------------------------------
// Static matcher closure

/// 20-point northbound trace 101 m apart with the given duration.
pub fn static_segment(n: usize, duration_s: i64) -> ActivitySegment {
    let step = duration_s / (n as i64 - 1);
    let mut pts: Vec<(i64, GeoPoint)> = (0..n).map(|i| (i as i64 * step, offset(i as f64 * 101.0, 0.0))).collect();
    pts.last_mut().unwrap().0 = duration_s;
    straight_segment(&pts)
}

pub fn itinerary(seg: &ActivitySegment, board_offset_s: i64, ride_s: i64, walk_before_s: i64, walk_after_s: i64, geometry: Linestring) -> Itinerary {
    let board = seg.start_time + Duration::seconds(board_offset_s);
    let alight = board + Duration::seconds(ride_s);
    let start = board - Duration::seconds(walk_before_s);
    let end = alight + Duration::seconds(walk_after_s);
    Itinerary {
        start_time: start,
        end_time: end,
        walk_before_s,
        transit: TransitLeg {
            line_type: LineType::Bus,
            line_name: "550".into(),
            trip_id: "trip".into(),
            board_stop: "A".into(),
            board_time: board,
            alight_stop: "B".into(),
            alight_time: alight,
            geometry,
        },
        walk_after_s,
        total_duration_s: (end - start).num_seconds(),
    }
}

pub fn trace_geometry(seg: &ActivitySegment) -> Linestring {
    Linestring::from_points(seg.positions()).unwrap()
}

/// Plan route 300 m east of a northbound trace except between trace indices
/// `from..=to`, where it follows the trace; connections run due east.
pub fn partial_geometry(n: usize, from: usize, to: usize) -> Linestring {
    let y = |i: usize| i as f64 * 101.0;
    let pts = vec![
        offset(y(0) - 1000.0, 300.0),
        offset(y(from), 300.0),
        offset(y(from), 0.0),
        offset(y(to), 0.0),
        offset(y(to), 300.0),
        offset(y(n - 1) + 1000.0, 300.0),
    ];
    Linestring::from_points(pts).unwrap()
}

fn expect(label: &str, v: Verdict, want: Verdict) -> Result<(), String> {
    if v == want {
        Ok(())
    } else {
        Err(format!("{label}: got {v:?}, expected {want:?}"))
    }
}

/// Each discard criterion just inside and just outside its threshold.
pub fn check_threshold_closure(t_v: i64) -> Result<(), String> {
    let c = MatchConstants::default();
    let seg = static_segment(20, t_v);
    let g = trace_geometry(&seg);
    let verdict = |it: &Itinerary| filter_plan(it, &seg, &c).verdict;
    let rej = Verdict::Reject;

    expect("baseline", verdict(&itinerary(&seg, 0, t_v, 0, 0, g.clone())), Verdict::Accept)?;
    // (a) total duration more than tEPT shorter than the leg.
    let short = t_v - c.t_ept_s;
    expect("a-1", verdict(&itinerary(&seg, 0, short + 1, 0, 0, g.clone())), Verdict::Accept)?;
    expect("a+1", verdict(&itinerary(&seg, 0, short - 1, 0, 0, g.clone())), rej(RejectReason::TooShort))?;
    // (b) total duration more than dt_max longer; the ride itself matches.
    let extra = c.dt_max_s;
    expect("b-1", verdict(&itinerary(&seg, 0, t_v, extra / 2, extra / 2 - 1, g.clone())), Verdict::Accept)?;
    expect("b+1", verdict(&itinerary(&seg, 0, t_v, extra / 2, extra / 2 + 1, g.clone())), rej(RejectReason::TooLong))?;
    // (c) ride duration off by more than the transit slack.
    let slack = c.dt_pt_max_s;
    expect("c-1", verdict(&itinerary(&seg, 0, t_v + slack - 1, 0, 0, g.clone())), Verdict::Accept)?;
    expect("c+1", verdict(&itinerary(&seg, 0, t_v + slack + 1, 0, 0, g.clone())), rej(RejectReason::TransitDuration))?;
    // (d) boarding too far from the leg start, either side.
    let sd = c.start_diff_max_s;
    for sign in [1, -1] {
        expect("d-1", verdict(&itinerary(&seg, sign * (sd - 1), t_v, 0, 0, g.clone())), Verdict::Accept)?;
        expect("d+1", verdict(&itinerary(&seg, sign * (sd + 1), t_v, 0, 0, g.clone())), rej(RejectReason::StartDiff))?;
    }
    // (e) 10 kept samples (indices 5..=14): 7 near the route passes, 6 fails.
    expect("e 7/10", verdict(&itinerary(&seg, 0, t_v, 0, 0, partial_geometry(20, 6, 12))), Verdict::Accept)?;
    expect("e 6/10", verdict(&itinerary(&seg, 0, t_v, 0, 0, partial_geometry(20, 6, 11))), rej(RejectReason::RouteFraction))?;
    // (f) 20 kept samples (indices 5..=24): an outside run of 4 passes, 5 fails.
    let long = static_segment(30, t_v);
    let verdict_long = |it: &Itinerary| filter_plan(it, &long, &c).verdict;
    expect("f run 4", verdict_long(&itinerary(&long, 0, t_v, 0, 0, partial_geometry(30, 9, 24))), Verdict::Accept)?;
    expect("f run 5", verdict_long(&itinerary(&long, 0, t_v, 0, 0, partial_geometry(30, 10, 24))), rej(RejectReason::AdjacentRun))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Planner fixtures and brute-force oracle

#[derive(Debug, Clone)]
pub struct FeedSpec {
    /// Stop offsets (north, east) in metres.
    pub stops: Vec<(f64, f64)>,
    /// Per route: stop sequence and trips as (first departure, hop seconds).
    pub routes: Vec<(Vec<usize>, Vec<(u32, Vec<u32>)>)>,
}

pub fn feed_spec() -> impl Strategy<Value = FeedSpec> {
    let stops = prop::collection::vec((0.0f64..3000.0, 0.0f64..3000.0), 4..12);
    stops.prop_flat_map(|stops| {
        let n = stops.len();
        let route = prop::sample::subsequence((0..n).collect::<Vec<_>>(), 2..n.min(6))
            .prop_shuffle()
            .prop_flat_map(|seq| {
                let hops = seq.len() - 1;
                let trip = (34_000u32..40_000, prop::collection::vec(30u32..400, hops..=hops));
                (Just(seq), prop::collection::vec(trip, 1..4))
            });
        (Just(stops), prop::collection::vec(route, 1..=5))
            .prop_map(|(stops, routes)| FeedSpec { stops, routes })
    })
}

pub fn build_feed(spec: &FeedSpec) -> GtfsBundle {
    let mut g = GtfsBundle {
        stops: spec
            .stops
            .iter()
            .enumerate()
            .map(|(i, &(n, e))| Stop {
                id: format!("S{i:02}"),
                name: format!("Stop {i}"),
                position: offset(n, e),
            })
            .collect(),
        calendar: vec![CalendarEntry {
            service_id: "WK".into(),
            weekdays: [true; 7],
            start: day(),
            end: day(),
        }],
        ..Default::default()
    };
    for (r, (seq, trips)) in spec.routes.iter().enumerate() {
        g.routes.push(Route {
            id: format!("R{r}"),
            short_name: format!("{}", 100 + r),
            long_name: String::new(),
            route_type: 3,
            mode: Some(LineType::Bus),
        });
        for (dep, hops) in trips {
            let trip = g.trips.len();
            g.trips.push(Trip {
                id: format!("T{trip:03}"),
                route: r,
                service_id: "WK".into(),
                shape_id: None,
            });
            let start = g.stop_times.len();
            let mut clock = *dep;
            for (k, &stop) in seq.iter().enumerate() {
                if k > 0 {
                    clock += hops[k - 1];
                }
                g.stop_times.push(StopTime {
                    trip,
                    stop,
                    arrival: clock,
                    departure: clock,
                    sequence: k as u32 + 1,
                });
            }
            g.trip_ranges.push(start..g.stop_times.len());
        }
    }
    g
}

/// (trip, board stop, alight stop, start, end) for every planned itinerary.
pub type PlanKey = (String, String, String, Timestamp, Timestamp);

/// Exhaustive scan over every (board stop, alight stop, trip) triple.
pub fn brute_force_plan(g: &GtfsBundle, q: &PlanQuery, walk_speed: f64) -> Vec<PlanKey> {
    let midnight = day().and_hms_opt(0, 0, 0).unwrap();
    let earliest = (q.earliest_start - midnight).num_seconds();
    let mut best: Vec<(i64, i64, PlanKey)> = Vec::new();
    for (trip, range) in g.trip_ranges.iter().enumerate() {
        let calls = &g.stop_times[range.clone()];
        let mut trip_best: Option<(i64, i64, String, String, PlanKey)> = None;
        for i in 0..calls.len() {
            for j in i + 1..calls.len() {
                let (bs, als) = (&g.stops[calls[i].stop], &g.stops[calls[j].stop]);
                let d_o = distance_m(q.origin, bs.position);
                let d_d = distance_m(q.destination, als.position);
                if d_o > q.max_walk_m || d_d > q.max_walk_m || d_o + d_d > q.max_walk_m {
                    continue;
                }
                let wb = walk_seconds(d_o, walk_speed);
                let wa = walk_seconds(d_d, walk_speed);
                if i64::from(calls[i].departure) < earliest + wb {
                    continue;
                }
                let start = i64::from(calls[i].departure) - wb;
                let end = i64::from(calls[j].arrival) + wa;
                let key = (
                    g.trips[trip].id.clone(),
                    bs.id.clone(),
                    als.id.clone(),
                    midnight + Duration::seconds(start),
                    midnight + Duration::seconds(end),
                );
                let cand = (end, end - start, bs.id.clone(), als.id.clone(), key);
                let better = match &trip_best {
                    None => true,
                    Some(cur) => (cand.0, cand.1, &cand.2, &cand.3) < (cur.0, cur.1, &cur.2, &cur.3),
                };
                if better {
                    trip_best = Some(cand);
                }
            }
        }
        if let Some((end, dur, _, _, key)) = trip_best {
            best.push((end, dur, key));
        }
    }
    best.sort_by(|a, b| (a.0, a.1, &a.2 .0, &a.2 .1, &a.2 .2).cmp(&(b.0, b.1, &b.2 .0, &b.2 .1, &b.2 .2)));
    best.into_iter().take(q.n_plans).map(|(_, _, k)| k).collect()
}

pub fn plan_query() -> impl Strategy<Value = PlanQuery> {
    (0.0f64..3000.0, 0.0f64..3000.0, 0.0f64..3000.0, 0.0f64..3000.0, 33_000i64..39_000, 200.0f64..1500.0, 1usize..5)
        .prop_map(|(on, oe, dn, de, start, walk, n)| PlanQuery {
            origin: offset(on, oe),
            destination: offset(dn, de),
            earliest_start: day().and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(start),
            max_walk_m: walk,
            n_plans: n,
        })
}

pub fn check_planner_equivalence(spec: &FeedSpec, q: &PlanQuery) -> Result<(), String> {
    let g = build_feed(spec);
    let planner = GtfsPlanner::new(&g, day(), 1.34).map_err(|e| e.to_string())?;
    let plans = planner.plan(q).map_err(|e| e.to_string())?;
    let got: Vec<PlanKey> = plans
        .itineraries
        .iter()
        .map(|it| {
            (
                it.transit.trip_id.clone(),
                it.transit.board_stop.clone(),
                it.transit.alight_stop.clone(),
                it.start_time,
                it.end_time,
            )
        })
        .collect();
    let want = brute_force_plan(&g, q, 1.34);
    if got != want {
        return Err(format!("planner {got:?}\noracle  {want:?}"));
    }
    for it in &plans.itineraries {
        let walk = distance_m(q.origin, g.stops.iter().find(|s| s.id == it.transit.board_stop).unwrap().position)
            + distance_m(q.destination, g.stops.iter().find(|s| s.id == it.transit.alight_stop).unwrap().position);
        if walk > q.max_walk_m {
            return Err(format!("walk {walk} exceeds {}", q.max_walk_m));
        }
        if it.wait_s() < 0 || it.transit.board_time < it.start_time || it.transit.alight_time > it.end_time {
            return Err(format!("inconsistent times in {it:?}"));
        }
        if it.transit.geometry.len() < 2 {
            return Err("geometry shorter than two points".into());
        }
    }
    Ok(())
}
