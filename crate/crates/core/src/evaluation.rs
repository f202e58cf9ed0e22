//! Joining recognitions to the manual trip log and tabulating the results.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{format_timestamp, read_csv, read_file, IngestError, LoadOptions};
use crate::live_matcher::{LiveMatchResult, LiveMethod};
use crate::model::{LineType, ManualTrip, Timestamp, UnknownVariant};
use crate::segmentation::{interval_overlap_s, ActivitySegment, SegmentSummary};
use crate::static_matcher::StaticMatchResult;
use crate::ActivityKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Static,
    OldLive,
    NewLive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Static, Method::OldLive, Method::NewLive];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Static => "static",
            Method::OldLive => "old_live",
            Method::NewLive => "new_live",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Static => "Static",
            Method::OldLive => "Old live",
            Method::NewLive => "New live",
        }
    }
}

impl From<LiveMethod> for Method {
    fn from(m: LiveMethod) -> Self {
        match m {
            LiveMethod::New => Method::NewLive,
            LiveMethod::Old => Method::OldLive,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "static" => Ok(Method::Static),
            "old_live" | "old" => Ok(Method::OldLive),
            "new_live" | "new" | "live" => Ok(Method::NewLive),
            _ => Err(UnknownVariant {
                kind: "method",
                value: s.to_string(),
            }),
        }
    }
}

/// A line identity attached to a segment by one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    pub method: Method,
    pub segment_id: u32,
    pub device_id: u32,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub line_type: LineType,
    pub line_name: String,
    /// Vehicle ref for live methods, GTFS trip id for the static method.
    pub reference: String,
    pub score: f64,
}

impl Recognition {
    pub fn from_live(segment: &ActivitySegment, r: &LiveMatchResult) -> Self {
        Self {
            method: r.method.into(),
            segment_id: segment.segment_id,
            device_id: segment.device_id,
            start_time: segment.start_time,
            end_time: segment.end_time,
            line_type: r.line_type,
            line_name: r.line_name.clone(),
            reference: r.vehicle_ref.clone(),
            score: r.score,
        }
    }

    pub fn from_static(segment: &ActivitySegment, r: &StaticMatchResult) -> Self {
        Self {
            method: Method::Static,
            segment_id: segment.segment_id,
            device_id: segment.device_id,
            start_time: segment.start_time,
            end_time: segment.end_time,
            line_type: r.line_type,
            line_name: r.line_name.clone(),
            reference: r.trip_id.clone(),
            score: r.assessment.start_diff_s as f64,
        }
    }

    fn interval(&self) -> (Timestamp, Timestamp) {
        (self.start_time, self.end_time)
    }
}

pub fn write_recognitions_csv(recognitions: &[Recognition]) -> String {
    let mut s = String::from("method,segment_id,dev_id,segm_start,segm_end,recd_type,recd_name,reference,score\n");
    for r in recognitions {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.3}",
            r.method,
            r.segment_id,
            r.device_id,
            format_timestamp(r.start_time),
            format_timestamp(r.end_time),
            r.line_type,
            csv_field(&r.line_name),
            csv_field(&r.reference),
            r.score
        );
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn load_recognitions_csv(path: &Path, opts: &LoadOptions) -> Result<Vec<Recognition>, IngestError> {
    let bytes = read_file(path)?;
    let (rows, _) = read_csv(
        path,
        &bytes,
        opts.permissive,
        |h, row| {
            Ok(Recognition {
                method: row.parse(h.require("method")?)?,
                segment_id: row.parse(h.require("segment_id")?)?,
                device_id: row.parse(h.require("dev_id")?)?,
                start_time: row.timestamp(h.require("segm_start")?, opts.default_date)?,
                end_time: row.timestamp(h.require("segm_end")?, opts.default_date)?,
                line_type: row.parse(h.require("recd_type")?)?,
                line_name: row.text(h.require("recd_name")?).to_string(),
                reference: row.text_opt(h.optional("reference")),
                score: row.parse_opt(h.optional("score"))?.unwrap_or(0.0),
            })
        },
        |_| Ok(()),
    )?;
    Ok(rows)
}

/// Canonical form for name comparison.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_uppercase()
}

/// Bus names compare again without trailing variant letters when the exact
/// comparison fails ("550B" matches "550").
fn strip_variant(name: &str) -> &str {
    let stem = name.trim_end_matches(|c: char| c.is_ascii_alphabetic());
    if stem.is_empty() {
        name
    } else {
        stem
    }
}

/// Whether a recognized name counts as the logged one. Subway names are
/// never compared.
pub fn names_match(line_type: LineType, logged: &str, recognized: &str) -> bool {
    if line_type == LineType::Subway {
        return false;
    }
    let (a, b) = (normalize_name(logged), normalize_name(recognized));
    if a.is_empty() || b.is_empty() {
        return false;
    }
    a == b || (line_type == LineType::Bus && strip_variant(&a) == strip_variant(&b))
}

/// How one method fared on one logged trip.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MethodVerdict {
    /// Recognitions overlapping the trip.
    pub overlapping: Vec<usize>,
    /// Some recognition is attributed to this trip, whatever its line type.
    pub recognized_any: bool,
    /// An overlapping recognition has the logged line type.
    pub recognized_type: bool,
    /// An overlapping recognition has the logged line type and name.
    pub recognized_name: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripVerdict {
    /// Position of the trip in the manual log.
    pub trip_index: usize,
    pub trip: ManualTrip,
    /// Vehicular segments overlapping the trip.
    pub segments: Vec<u32>,
    pub methods: BTreeMap<Method, MethodVerdict>,
}

impl TripVerdict {
    pub fn verdict(&self, m: Method) -> MethodVerdict {
        self.methods.get(&m).cloned().unwrap_or_default()
    }

    /// Verdict of the union of `methods`.
    pub fn combined(&self, methods: &[Method]) -> MethodVerdict {
        let mut out = MethodVerdict::default();
        for m in methods {
            let v = self.verdict(*m);
            out.overlapping.extend(v.overlapping);
            out.recognized_any |= v.recognized_any;
            out.recognized_type |= v.recognized_type;
            out.recognized_name |= v.recognized_name;
        }
        out
    }
}

fn trip_interval(t: &ManualTrip) -> Option<(Timestamp, Timestamp)> {
    Some((t.vehicle_dep_time?, t.vehicle_arr_time?))
}

/// Links every logged trip to overlapping vehicular segments and recognitions.
///
/// A trip counts as recognized by type (and name) when an overlapping
/// recognition of the same device carries its line type (and name). Each
/// recognition is also attributed to the single trip it overlaps longest,
/// which credits that trip as recognized regardless of line type.
pub fn join_trips(trips: &[ManualTrip], segments: &[SegmentSummary], recognitions: &[Recognition]) -> Vec<TripVerdict> {
    let intervals: Vec<Option<(Timestamp, Timestamp)>> = trips.iter().map(trip_interval).collect();
    let overlaps = |device_id: u32, span: (Timestamp, Timestamp), t: usize| -> Option<i64> {
        if trips[t].device_id != device_id {
            return None;
        }
        interval_overlap_s(span, intervals[t]?)
    };

    // Recognition index -> trip with the longest overlap; ties go to the earlier log entry.
    let attributed: Vec<Option<usize>> = recognitions
        .iter()
        .map(|r| {
            (0..trips.len())
                .filter_map(|t| overlaps(r.device_id, r.interval(), t).map(|o| (o, t)))
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
                .map(|(_, t)| t)
        })
        .collect();

    trips
        .iter()
        .enumerate()
        .map(|(t, trip)| {
            let segs = segments
                .iter()
                .filter(|s| s.activity == ActivityKind::InVehicle && s.n_points >= 2)
                .filter(|s| overlaps(s.device_id, (s.start_time, s.end_time), t).is_some())
                .map(|s| s.segment_id)
                .collect();
            let mut methods: BTreeMap<Method, MethodVerdict> = BTreeMap::new();
            for (i, r) in recognitions.iter().enumerate() {
                let v = methods.entry(r.method).or_default();
                let overlapping = overlaps(r.device_id, r.interval(), t).is_some();
                if overlapping {
                    v.overlapping.push(i);
                    if trip.line_type == Some(r.line_type) {
                        v.recognized_type = true;
                        if names_match(r.line_type, &trip.line_name, &r.line_name) {
                            v.recognized_name = true;
                        }
                    }
                }
                if attributed[i] == Some(t) {
                    v.recognized_any = true;
                }
            }
            for v in methods.values_mut() {
                v.recognized_any |= v.recognized_type;
            }
            methods.retain(|_, v| !v.overlapping.is_empty() || v.recognized_any);
            TripVerdict {
                trip_index: t,
                trip: trip.clone(),
                segments: segs,
                methods,
            }
        })
        .collect()
}

/// Line types reported as rows, in table order.
pub const REPORT_LINE_TYPES: [LineType; 5] =
    [LineType::Bus, LineType::Tram, LineType::Train, LineType::Subway, LineType::Ferry];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineStats {
    pub line_type: LineType,
    pub recognized: usize,
    /// Not tracked for subway.
    pub name_correct: Option<usize>,
    pub logged: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MethodStats {
    /// Column label, e.g. "New live" or "Combined".
    pub label: String,
    pub rows: Vec<LineStats>,
    /// Public-transport trips recognized at all.
    pub public_transport: usize,
    /// Public-transport trips recognized with the right line type.
    pub public_transport_type: usize,
    pub logged: usize,
}

impl MethodStats {
    pub fn row(&self, t: LineType) -> Option<&LineStats> {
        self.rows.iter().find(|r| r.line_type == t)
    }
}

fn tabulate(label: &str, verdicts: &[TripVerdict], pick: impl Fn(&TripVerdict) -> MethodVerdict) -> MethodStats {
    let pt: Vec<&TripVerdict> = verdicts.iter().filter(|v| v.trip.is_public_transport()).collect();
    let rows = REPORT_LINE_TYPES
        .iter()
        .map(|&lt| {
            let of_type: Vec<_> = pt.iter().filter(|v| v.trip.line_type == Some(lt)).collect();
            LineStats {
                line_type: lt,
                recognized: of_type.iter().filter(|v| pick(v).recognized_type).count(),
                name_correct: (lt != LineType::Subway)
                    .then(|| of_type.iter().filter(|v| pick(v).recognized_name).count()),
                logged: of_type.len(),
            }
        })
        .collect();
    MethodStats {
        label: label.to_string(),
        rows,
        public_transport: pt.iter().filter(|v| pick(v).recognized_any).count(),
        public_transport_type: pt.iter().filter(|v| pick(v).recognized_type).count(),
        logged: pt.len(),
    }
}

/// One column per method plus a combined column when more than one method
/// is selected.
pub fn compute_stats(verdicts: &[TripVerdict], methods: &[Method]) -> Vec<MethodStats> {
    let mut out: Vec<MethodStats> = methods
        .iter()
        .map(|&m| tabulate(m.label(), verdicts, |v| v.verdict(m)))
        .collect();
    if methods.len() > 1 {
        out.push(tabulate("Combined", verdicts, |v| v.combined(methods)));
    }
    out
}

/// Public-transport recognitions attributed to logged car trips.
pub fn car_false_positives(verdicts: &[TripVerdict], methods: &[Method]) -> usize {
    verdicts
        .iter()
        .filter(|v| v.trip.line_type == Some(LineType::Car))
        .filter(|v| v.combined(methods).recognized_any)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Inventory {
    Recognized,
    OverlappingUnrecognized,
    NoVehicularSegment,
}

impl Inventory {
    pub fn title(self) -> &'static str {
        match self {
            Inventory::Recognized => "Recognized trips",
            Inventory::OverlappingUnrecognized => "Unrecognized trips with an overlapping IN_VEHICLE segment",
            Inventory::NoVehicularSegment => "Trips without an overlapping IN_VEHICLE segment",
        }
    }
}

pub fn inventory_of(v: &TripVerdict, verdict: &MethodVerdict) -> Inventory {
    if verdict.recognized_type {
        Inventory::Recognized
    } else if !v.segments.is_empty() {
        Inventory::OverlappingUnrecognized
    } else {
        Inventory::NoVehicularSegment
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(UnknownVariant {
                kind: "report format",
                value: s.to_string(),
            }),
        }
    }
}

/// Statistics grid plus trip inventories. `methods` must list the methods
/// behind the first `methods.len()` columns of `stats`.
pub fn render_report(
    stats: &[MethodStats],
    verdicts: &[TripVerdict],
    recognitions: &[Recognition],
    methods: &[Method],
    format: ReportFormat,
) -> String {
    match format {
        ReportFormat::Text => render_text(stats, verdicts, recognitions, methods),
        ReportFormat::Csv => render_csv(stats),
    }
}

fn render_csv(stats: &[MethodStats]) -> String {
    let mut s = String::from("method,line_type,recognized,name_correct,logged\n");
    for m in stats {
        for r in &m.rows {
            let name = r.name_correct.map(|n| n.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", m.label, r.line_type, r.recognized, name, r.logged);
        }
        let _ = writeln!(s, "{},PUBLIC_TRANSPORT,{},,{}", m.label, m.public_transport, m.logged);
        let _ = writeln!(s, "{},PUBLIC_TRANSPORT_LINE_TYPE,{},,{}", m.label, m.public_transport_type, m.logged);
    }
    s
}

fn grid_rows(stats: &[MethodStats]) -> Vec<(String, Vec<String>, String)> {
    let logged_of = |lt: LineType| stats.first().and_then(|m| m.row(lt)).map_or(0, |r| r.logged);
    let mut rows = Vec::new();
    for lt in REPORT_LINE_TYPES {
        if lt == LineType::Ferry && logged_of(lt) == 0 {
            continue;
        }
        let label = format!("{}{}", &lt.as_str()[..1], lt.as_str()[1..].to_lowercase());
        let cells = stats.iter().map(|m| m.row(lt).map_or(0, |r| r.recognized).to_string()).collect();
        rows.push((label.clone(), cells, logged_of(lt).to_string()));
        if lt != LineType::Subway {
            let cells = stats
                .iter()
                .map(|m| m.row(lt).and_then(|r| r.name_correct).unwrap_or(0).to_string())
                .collect();
            rows.push((format!("{label} (line name)"), cells, String::new()));
        }
    }
    let logged = stats.first().map_or(0, |m| m.logged).to_string();
    rows.push((
        "Public transport".into(),
        stats.iter().map(|m| m.public_transport.to_string()).collect(),
        logged.clone(),
    ));
    rows.push((
        "Public transport (line type)".into(),
        stats.iter().map(|m| m.public_transport_type.to_string()).collect(),
        String::new(),
    ));
    rows
}

fn render_text(stats: &[MethodStats], verdicts: &[TripVerdict], recognitions: &[Recognition], methods: &[Method]) -> String {
    let mut s = String::new();
    let rows = grid_rows(stats);
    let first = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Line type".len());
    let width = stats.iter().map(|m| m.label.len()).max().unwrap_or(0).max(8);
    let _ = write!(s, "{:first$}", "Line type");
    for m in stats {
        let _ = write!(s, "  {:>width$}", m.label);
    }
    let _ = writeln!(s, "  {:>width$}", "Logged");
    for (label, cells, logged) in &rows {
        let _ = write!(s, "{label:first$}");
        for c in cells {
            let _ = write!(s, "  {c:>width$}");
        }
        let _ = writeln!(s, "  {logged:>width$}");
    }

    for &m in methods {
        for inv in [Inventory::Recognized, Inventory::OverlappingUnrecognized, Inventory::NoVehicularSegment] {
            let _ = writeln!(s, "\n{}: {}", m.label(), inv.title());
            let _ = writeln!(s, "dev_id  dep       arr       line_type  line_name   segments  recognized");
            for v in verdicts.iter().filter(|v| v.trip.is_public_transport()) {
                let mv = v.verdict(m);
                if inventory_of(v, &mv) != inv {
                    continue;
                }
                let time = |t: Option<Timestamp>| t.map_or("-".to_string(), |t| t.format("%H:%M:%S").to_string());
                let recd: Vec<String> = mv
                    .overlapping
                    .iter()
                    .map(|&i| {
                        let r = &recognitions[i];
                        format!("{}:{} {}", r.segment_id, r.line_type, r.line_name)
                    })
                    .collect();
                let segs: Vec<String> = v.segments.iter().map(u32::to_string).collect();
                let _ = writeln!(
                    s,
                    "{:<6}  {:<8}  {:<8}  {:<9}  {:<10}  {:<8}  {}",
                    v.trip.device_id,
                    time(v.trip.vehicle_dep_time),
                    time(v.trip.vehicle_arr_time),
                    v.trip.line_type.map_or("-", LineType::as_str),
                    v.trip.line_name,
                    if segs.is_empty() { "-".to_string() } else { segs.join(",") },
                    recd.join("; ")
                );
            }
        }
    }
    s
}

/// One expected cell of the statistics grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateCheck {
    /// Column label ("Static", "Old live", "New live", "Combined").
    pub column: String,
    /// A line type name, "PUBLIC_TRANSPORT" or "PUBLIC_TRANSPORT_LINE_TYPE".
    pub row: String,
    pub expected: usize,
    pub tolerance: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub check: GateCheck,
    pub actual: Option<usize>,
    pub pass: bool,
}

pub fn default_gate() -> Vec<GateCheck> {
    let c = |column: &str, row: &str, expected, tolerance| GateCheck {
        column: column.into(),
        row: row.into(),
        expected,
        tolerance,
    };
    vec![
        c("New live", "SUBWAY", 17, 3),
        c("New live", "TRAM", 8, 3),
        c("New live", "BUS", 4, 3),
        c("New live", "TRAIN", 0, 3),
        c("New live", "PUBLIC_TRANSPORT", 29, 3),
        c("Old live", "SUBWAY", 9, 3),
        c("Old live", "PUBLIC_TRANSPORT", 20, 3),
        c("Static", "PUBLIC_TRANSPORT", 40, 6),
        c("Static", "PUBLIC_TRANSPORT_LINE_TYPE", 39, 6),
        c("Combined", "PUBLIC_TRANSPORT", 48, 6),
    ]
}

pub fn stat_cell(stats: &[MethodStats], column: &str, row: &str) -> Option<usize> {
    let m = stats.iter().find(|m| m.label == column)?;
    match row {
        "PUBLIC_TRANSPORT" => Some(m.public_transport),
        "PUBLIC_TRANSPORT_LINE_TYPE" => Some(m.public_transport_type),
        other => m.row(other.parse().ok()?).map(|r| r.recognized),
    }
}

/// Checks whose column is absent from `stats` are skipped.
pub fn evaluate_gate(stats: &[MethodStats], checks: &[GateCheck]) -> Vec<GateOutcome> {
    checks
        .iter()
        .filter(|c| stats.iter().any(|m| m.label == c.column))
        .map(|c| {
            let actual = stat_cell(stats, &c.column, &c.row);
            let pass = actual.is_some_and(|a| a.abs_diff(c.expected) <= c.tolerance);
            GateOutcome {
                check: c.clone(),
                actual,
                pass,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(h: u32, m: u32, s: u32) -> Timestamp {
        NaiveDate::from_ymd_opt(2016, 8, 26).unwrap().and_hms_opt(h, m, s).unwrap()
    }

    fn trip(device_id: u32, dep: Timestamp, arr: Timestamp, lt: LineType, name: &str) -> ManualTrip {
        ManualTrip {
            device_id,
            line_type: Some(lt),
            line_name: name.into(),
            vehicle_dep_time: Some(dep),
            vehicle_arr_time: Some(arr),
            ..Default::default()
        }
    }

    fn seg(id: u32, device_id: u32, start: Timestamp, end: Timestamp) -> SegmentSummary {
        SegmentSummary {
            segment_id: id,
            device_id,
            activity: ActivityKind::InVehicle,
            start_time: start,
            end_time: end,
            n_points: 5,
        }
    }

    fn recd(method: Method, s: &SegmentSummary, lt: LineType, name: &str) -> Recognition {
        Recognition {
            method,
            segment_id: s.segment_id,
            device_id: s.device_id,
            start_time: s.start_time,
            end_time: s.end_time,
            line_type: lt,
            line_name: name.into(),
            reference: String::new(),
            score: 0.0,
        }
    }

    #[test]
    fn names_compare_case_insensitively_and_skip_subway() {
        assert!(names_match(LineType::Tram, "7A", " 7a "));
        assert!(!names_match(LineType::Subway, "V", "V"));
        assert!(names_match(LineType::Bus, "550", "550B"));
        assert!(!names_match(LineType::Tram, "7A", "7B"));
        assert!(!names_match(LineType::Bus, "16", "61"));
    }

    #[test]
    fn multi_segment_trip_is_recognized() {
        let trips = vec![trip(1, at(10, 6, 0), at(10, 19, 0), LineType::Tram, "7A")];
        let segs = vec![
            seg(12, 1, at(10, 5, 0), at(10, 9, 0)),
            seg(13, 1, at(10, 10, 0), at(10, 12, 0)),
            seg(14, 1, at(10, 13, 0), at(10, 20, 0)),
        ];
        let recs = vec![
            recd(Method::NewLive, &segs[0], LineType::Tram, "7A"),
            recd(Method::NewLive, &segs[2], LineType::Tram, "7A"),
        ];
        let v = join_trips(&trips, &segs, &recs);
        assert_eq!(v[0].segments, vec![12, 13, 14]);
        let mv = v[0].verdict(Method::NewLive);
        assert!(mv.recognized_any && mv.recognized_type && mv.recognized_name);
        assert!(!v[0].verdict(Method::Static).recognized_any);
    }

    #[test]
    fn segment_spanning_two_trips_credits_type_but_attributes_once() {
        // Segment 32 overlaps a short tram trip and a long subway trip and is
        // recognized as tram.
        let trips = vec![
            trip(1, at(12, 0, 0), at(12, 4, 0), LineType::Tram, "9"),
            trip(1, at(12, 6, 0), at(12, 20, 0), LineType::Subway, "V"),
        ];
        let segs = vec![seg(32, 1, at(12, 0, 30), at(12, 19, 0))];
        let recs = vec![recd(Method::NewLive, &segs[0], LineType::Tram, "9")];
        let v = join_trips(&trips, &segs, &recs);
        let tram = v[0].verdict(Method::NewLive);
        let subway = v[1].verdict(Method::NewLive);
        assert!(tram.recognized_type && tram.recognized_any);
        assert!(!subway.recognized_type && subway.recognized_any);
        let stats = compute_stats(&v, &[Method::NewLive]);
        assert_eq!((stats[0].public_transport, stats[0].public_transport_type), (2, 1));
        assert_eq!(inventory_of(&v[1], &subway), Inventory::OverlappingUnrecognized);
    }

    #[test]
    fn car_trips_are_outside_the_denominator() {
        let trips = vec![
            trip(7, at(9, 0, 0), at(9, 30, 0), LineType::Car, ""),
            trip(1, at(9, 0, 0), at(9, 30, 0), LineType::Bus, "16"),
        ];
        let segs = vec![seg(1, 7, at(9, 1, 0), at(9, 29, 0))];
        let recs = vec![recd(Method::Static, &segs[0], LineType::Bus, "550")];
        let v = join_trips(&trips, &segs, &recs);
        let stats = compute_stats(&v, &[Method::Static]);
        assert_eq!(stats[0].logged, 1);
        assert_eq!(stats[0].public_transport, 0);
        assert_eq!(car_false_positives(&v, &[Method::Static]), 1);
        assert_eq!(inventory_of(&v[1], &v[1].verdict(Method::Static)), Inventory::NoVehicularSegment);
    }

    #[test]
    fn empty_input_gives_zero_grid() {
        let stats = compute_stats(&[], &Method::ALL);
        assert_eq!(stats.len(), 4);
        assert!(stats.iter().all(|m| m.public_transport == 0 && m.logged == 0));
        let text = render_report(&stats, &[], &[], &Method::ALL, ReportFormat::Text);
        assert!(text.contains("Public transport (line type)"));
        let csv = render_report(&stats, &[], &[], &Method::ALL, ReportFormat::Csv);
        assert!(csv.starts_with("method,line_type,recognized,name_correct,logged\n"));
        assert_eq!(csv.lines().count(), 1 + 4 * (REPORT_LINE_TYPES.len() + 2));
        assert!("html".parse::<ReportFormat>().is_err());
    }

    #[test]
    fn gate_checks_tolerances() {
        let trips = vec![trip(1, at(9, 0, 0), at(9, 30, 0), LineType::Bus, "16")];
        let segs = vec![seg(1, 1, at(9, 1, 0), at(9, 29, 0))];
        let recs = vec![recd(Method::NewLive, &segs[0], LineType::Bus, "16")];
        let stats = compute_stats(&join_trips(&trips, &segs, &recs), &[Method::NewLive]);
        let out = evaluate_gate(&stats, &default_gate());
        assert_eq!(out.len(), 5);
        let bus = out.iter().find(|o| o.check.row == "BUS").unwrap();
        assert_eq!((bus.actual, bus.pass), (Some(1), true));
        let pt = out.iter().find(|o| o.check.row == "PUBLIC_TRANSPORT").unwrap();
        assert!(!pt.pass);
    }

    #[test]
    fn recognitions_csv_round_trip() {
        let s = seg(5, 2, at(13, 14, 1), at(13, 31, 34));
        let recs = vec![recd(Method::OldLive, &s, LineType::Subway, "To west, V")];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, write_recognitions_csv(&recs)).unwrap();
        assert_eq!(load_recognitions_csv(&path, &LoadOptions::default()).unwrap(), recs);
    }
}
