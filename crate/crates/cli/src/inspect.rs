//! `inspect-segment`: trace, live candidates and planner assessments for
//! one segment.

use anyhow::{bail, Result};

use triprec_core::config::RunConfig;
use triprec_core::evaluation::Method;
use triprec_core::live_matcher::{match_segment, rank_vehicles, LiveMethod, PositionIndex};
use triprec_core::pipeline::{make_planner, Dataset};
use triprec_core::segmentation::{build_segments, ActivitySegment};
use triprec_core::static_matcher::match_static;
use triprec_core::ActivityKind;

const SHOWN_VEHICLES: usize = 10;

fn fmt_distance(d: Option<f64>) -> String {
    d.map_or("-".to_string(), |d| format!("{d:.0}"))
}

fn print_trace(seg: &ActivitySegment) {
    println!(
        "segment {} device {} {} {} .. {} ({} s, {} points)",
        seg.segment_id,
        seg.device_id,
        seg.activity,
        seg.start_time,
        seg.end_time,
        seg.duration_s(),
        seg.trace.len()
    );
    for p in &seg.trace {
        println!("  {} {:.6} {:.6}", p.time.time(), p.position.lat, p.position.lng);
    }
}

fn print_live(cfg: &RunConfig, seg: &ActivitySegment, method: LiveMethod, index: &PositionIndex) {
    let ranked = rank_vehicles(seg, method, &cfg.live, index);
    let label = Method::from(method).label();
    println!("{label}: {} candidate vehicles", ranked.len());
    for s in ranked.iter().take(SHOWN_VEHICLES) {
        let distances: Vec<String> = s.distances.iter().map(|d| fmt_distance(*d)).collect();
        let line = s
            .votes
            .first()
            .map_or("-".to_string(), |v| format!("{} {}", v.line_type, v.line_name));
        println!(
            "  {} [{line}] score {:.1}, {}/{} within limit ({:.0}%), mean {:.0} m{}",
            s.vehicle_ref,
            s.score,
            s.matched,
            s.samples,
            s.matched_fraction * 100.0,
            s.mean_distance_m,
            if s.qualifies(cfg.live.quorum_fraction) { ", qualifies" } else { "" }
        );
        println!("    distances: {}", distances.join(" "));
    }
    match match_segment(seg, method, &cfg.live, index) {
        Some(r) => println!(
            "  winner: {} {} {} (score {:.1})",
            r.vehicle_ref, r.line_type, r.line_name, r.score
        ),
        None => println!("  no vehicle qualifies"),
    }
}

pub fn run(cfg: &RunConfig, data: &Dataset, id: u32) -> Result<u8> {
    let segments = build_segments(&data.filtered, cfg.segmentation.max_gap_s);
    let Some(seg) = segments.iter().find(|s| s.segment_id == id) else {
        if segments.is_empty() {
            bail!("segment {id} does not exist: the filtered trace has no segments");
        }
        bail!("segment {id} does not exist: valid ids are 1..={}", segments.len());
    };
    print_trace(seg);
    if seg.activity != ActivityKind::InVehicle || seg.trace.len() < 2 {
        println!("not a vehicular candidate");
        return Ok(0);
    }

    if cfg.methods.iter().any(|m| *m != Method::Static) {
        let index = PositionIndex::new(data.positions.iter().cloned());
        for (method, live) in [(Method::NewLive, LiveMethod::New), (Method::OldLive, LiveMethod::Old)] {
            if cfg.methods.contains(&method) {
                print_live(cfg, seg, live, &index);
            }
        }
    }

    if cfg.methods.contains(&Method::Static) {
        let planner = make_planner(cfg, data.gtfs.as_ref())?;
        let outcome = match_static(seg, planner.as_ref(), &cfg.constants)?;
        let q = &outcome.query;
        println!(
            "static: query from {:.6},{:.6} to {:.6},{:.6} at {}, walk <= {:.0} m, {} itineraries",
            q.origin.lat,
            q.origin.lng,
            q.destination.lat,
            q.destination.lng,
            q.earliest_start,
            q.max_walk_m,
            outcome.assessments.len()
        );
        for a in &outcome.assessments {
            let leg = &a.itinerary.transit;
            println!(
                "  {} {} {} {}..{} t_v {} dT {} dPT {} start {} route {:.2} run {}: {}",
                leg.trip_id,
                leg.line_type,
                leg.line_name,
                leg.board_time.time(),
                leg.alight_time.time(),
                a.t_v_s,
                a.delta_total_s,
                a.delta_transit_s,
                a.start_diff_s,
                a.route.fraction,
                a.route.max_adjacent_run,
                a.verdict.label()
            );
        }
        match &outcome.result {
            Some(r) => println!("  winner: {} {} ({})", r.line_type, r.line_name, r.trip_id),
            None => println!("  no itinerary accepted"),
        }
    }
    Ok(0)
}
