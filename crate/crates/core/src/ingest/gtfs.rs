//! Static GTFS feed loading with referential-integrity checks.
//!
//! Identifiers are interned: trips, stops and routes are addressed by their
//! position in the bundle's vectors so the multi-million-row `stop_times`
//! table stays compact.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};

use crate::geodesy::GeoPoint;
use crate::model::LineType;

use super::{read_csv, read_file, IngestError, LoadOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub id: String,
    pub name: String,
    pub position: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub id: String,
    pub short_name: String,
    pub long_name: String,
    pub route_type: u16,
    /// `None` for modes that never matter here (funicular, cable car, ...).
    pub mode: Option<LineType>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub id: String,
    pub route: usize,
    pub service_id: String,
    pub shape_id: Option<String>,
}

/// One scheduled call. Times are seconds after service-day midnight and may exceed 24 h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopTime {
    pub trip: usize,
    pub stop: usize,
    pub arrival: u32,
    pub departure: u32,
    pub sequence: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalendarEntry {
    pub service_id: String,
    /// Monday first.
    pub weekdays: [bool; 7],
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalendarDate {
    pub service_id: String,
    pub date: NaiveDate,
    /// 1 adds service, 2 removes it.
    pub exception_type: u8,
}

#[derive(Debug, Clone, Default)]
pub struct GtfsBundle {
    pub stops: Vec<Stop>,
    pub routes: Vec<Route>,
    pub trips: Vec<Trip>,
    /// Grouped by trip, ordered by stop sequence within each trip.
    pub stop_times: Vec<StopTime>,
    pub calendar: Vec<CalendarEntry>,
    pub calendar_dates: Vec<CalendarDate>,
    /// Shape vertices ordered by `shape_pt_sequence`.
    pub shapes: HashMap<String, Vec<GeoPoint>>,
    /// `trip_ranges[t]` is the `stop_times` range of trip `t`.
    pub trip_ranges: Vec<std::ops::Range<usize>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no GTFS service is active on {0}")]
    NoServiceOnDate(NaiveDate),
}

impl GtfsBundle {
    pub fn trip_stop_times(&self, trip: usize) -> &[StopTime] {
        &self.stop_times[self.trip_ranges[trip].clone()]
    }

    /// Service ids running on `date` after applying calendar exceptions.
    pub fn active_services(&self, date: NaiveDate) -> Result<HashSet<String>, ServiceError> {
        let weekday = date.weekday().num_days_from_monday() as usize;
        let mut active: HashSet<String> = self
            .calendar
            .iter()
            .filter(|c| c.start <= date && date <= c.end && c.weekdays[weekday])
            .map(|c| c.service_id.clone())
            .collect();
        for ex in self.calendar_dates.iter().filter(|d| d.date == date) {
            match ex.exception_type {
                1 => {
                    active.insert(ex.service_id.clone());
                }
                2 => {
                    active.remove(&ex.service_id);
                }
                _ => {}
            }
        }
        if active.is_empty() {
            return Err(ServiceError::NoServiceOnDate(date));
        }
        Ok(active)
    }

    /// Trip indices whose service runs on `date`.
    pub fn active_trips(&self, date: NaiveDate) -> Result<Vec<bool>, ServiceError> {
        let services = self.active_services(date)?;
        Ok(self
            .trips
            .iter()
            .map(|t| services.contains(&t.service_id))
            .collect())
    }
}

/// Maps basic and extended GTFS route types to line types.
pub fn line_type_for_route_type(route_type: u16) -> Option<LineType> {
    match route_type {
        0 | 900..=906 => Some(LineType::Tram),
        1 | 400..=405 => Some(LineType::Subway),
        2 | 100..=117 => Some(LineType::Train),
        3 | 11 | 200..=209 | 700..=716 | 800 => Some(LineType::Bus),
        4 | 1000 | 1200 => Some(LineType::Ferry),
        _ => None,
    }
}

/// Parses `H:MM:SS` into seconds, allowing hours beyond 24.
pub fn parse_gtfs_time(raw: &str) -> Option<u32> {
    let mut parts = raw.trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let s: u32 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || m >= 60 || s >= 60 {
        return None;
    }
    Some(h * 3600 + m * 60 + s)
}

fn parse_gtfs_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y%m%d").ok()
}

/// Reads GTFS text files from a directory or a zip archive.
enum Source {
    Dir(PathBuf),
    Zip(HashMap<String, Vec<u8>>),
}

impl Source {
    fn open(path: &Path) -> Result<Self, IngestError> {
        if path.is_dir() {
            return Ok(Source::Dir(path.to_path_buf()));
        }
        let bytes = read_file(path)?;
        let archive_err = |e: zip::result::ZipError| IngestError::Archive {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut archive = zip::ZipArchive::new(std::io::Cursor::new(bytes)).map_err(archive_err)?;
        let mut files = HashMap::new();
        for i in 0..archive.len() {
            let mut entry = archive.by_index(i).map_err(archive_err)?;
            if entry.is_dir() {
                continue;
            }
            // Feeds are sometimes zipped with a top-level folder.
            let name = entry.name().rsplit('/').next().unwrap_or_default().to_string();
            if !name.ends_with(".txt") {
                continue;
            }
            let mut buf = Vec::with_capacity(entry.size() as usize);
            entry.read_to_end(&mut buf).map_err(|source| IngestError::Io {
                path: path.join(&name),
                source,
            })?;
            files.insert(name, buf);
        }
        Ok(Source::Zip(files))
    }

    fn read(&self, file: &str) -> Result<Option<Vec<u8>>, IngestError> {
        match self {
            Source::Dir(dir) => {
                let p = dir.join(file);
                if p.is_file() {
                    read_file(&p).map(Some)
                } else {
                    Ok(None)
                }
            }
            Source::Zip(files) => Ok(files.get(file).cloned()),
        }
    }
}

const MAX_LISTED_OFFENDERS: usize = 10;

struct Dangling {
    file: &'static str,
    count: usize,
    first: Vec<String>,
}

impl Dangling {
    fn new(file: &'static str) -> Self {
        Self {
            file,
            count: 0,
            first: Vec::new(),
        }
    }

    fn push(&mut self, what: impl FnOnce() -> String) {
        self.count += 1;
        if self.first.len() < MAX_LISTED_OFFENDERS {
            self.first.push(what());
        }
    }

    fn check(self, path: &Path) -> Result<(), IngestError> {
        if self.count == 0 {
            return Ok(());
        }
        Err(IngestError::Integrity {
            path: path.to_path_buf(),
            file: self.file.to_string(),
            count: self.count,
            first: self.first,
        })
    }
}

/// Loads a GTFS feed from a zip file or a directory of `.txt` files.
pub fn load_gtfs(path: &Path, opts: &LoadOptions) -> Result<GtfsBundle, IngestError> {
    let source = Source::open(path)?;
    let required = |file: &'static str| -> Result<Vec<u8>, IngestError> {
        source.read(file)?.ok_or_else(|| IngestError::MissingFile {
            path: path.to_path_buf(),
            file: file.to_string(),
        })
    };
    let file_path = |file: &str| path.join(file);

    let stops_path = file_path("stops.txt");
    let (stops, _) = read_csv(
        &stops_path,
        &required("stops.txt")?,
        opts.permissive,
        |h, row| {
            Ok(Stop {
                id: row.required(h.require("stop_id")?)?.to_string(),
                name: row.text_opt(h.optional("stop_name")),
                position: row.coordinate(h.require("stop_lat")?, h.require("stop_lon")?)?,
            })
        },
        |h| h.require("stop_id").map(|_| ()),
    )?;

    let routes_path = file_path("routes.txt");
    let (routes, _) = read_csv(
        &routes_path,
        &required("routes.txt")?,
        opts.permissive,
        |h, row| {
            let route_type: u16 = row.parse(h.require("route_type")?)?;
            Ok(Route {
                id: row.required(h.require("route_id")?)?.to_string(),
                short_name: row.text_opt(h.optional("route_short_name")),
                long_name: row.text_opt(h.optional("route_long_name")),
                route_type,
                mode: line_type_for_route_type(route_type),
            })
        },
        |h| h.require("route_id").map(|_| ()),
    )?;
    let route_index: HashMap<&str, usize> =
        routes.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();

    let trips_path = file_path("trips.txt");
    let mut dangling_routes = Dangling::new("trips.txt");
    let (trips, _) = read_csv(
        &trips_path,
        &required("trips.txt")?,
        opts.permissive,
        |h, row| {
            let route_id = row.required(h.require("route_id")?)?;
            let trip_id = row.required(h.require("trip_id")?)?.to_string();
            let route = match route_index.get(route_id) {
                Some(&r) => r,
                None => {
                    dangling_routes.push(|| format!("trip {trip_id} -> route {route_id}"));
                    usize::MAX
                }
            };
            let shape = row.text_opt(h.optional("shape_id"));
            Ok(Trip {
                id: trip_id,
                route,
                service_id: row.required(h.require("service_id")?)?.to_string(),
                shape_id: (!shape.is_empty()).then_some(shape),
            })
        },
        |h| h.require("trip_id").map(|_| ()),
    )?;
    dangling_routes.check(&trips_path)?;
    let trip_index: HashMap<&str, usize> =
        trips.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    let stop_index: HashMap<&str, usize> =
        stops.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();

    let st_path = file_path("stop_times.txt");
    let mut dangling_refs = Dangling::new("stop_times.txt");
    let (raw_times, _) = read_csv(
        &st_path,
        &required("stop_times.txt")?,
        opts.permissive,
        |h, row| {
            let trip_id = row.required(h.require("trip_id")?)?;
            let stop_id = row.required(h.require("stop_id")?)?;
            let trip = trip_index.get(trip_id).copied();
            let stop = stop_index.get(stop_id).copied();
            if trip.is_none() {
                dangling_refs.push(|| format!("line {}: trip {trip_id}", row.line));
            }
            if stop.is_none() {
                dangling_refs.push(|| format!("line {}: stop {stop_id}", row.line));
            }
            let time = |name: &'static str| -> Result<Option<u32>, IngestError> {
                let col = h.require(name)?;
                let raw = row.text(col);
                if raw.is_empty() {
                    return Ok(None);
                }
                parse_gtfs_time(raw)
                    .map(Some)
                    .ok_or_else(|| row.field_error(col, format!("bad GTFS time '{raw}'")))
            };
            let arrival = time("arrival_time")?;
            let departure = time("departure_time")?;
            Ok((
                trip.unwrap_or(usize::MAX),
                stop.unwrap_or(usize::MAX),
                arrival.or(departure),
                departure.or(arrival),
                row.parse::<u32>(h.require("stop_sequence")?)?,
            ))
        },
        |h| {
            for c in ["trip_id", "stop_id", "arrival_time", "departure_time", "stop_sequence"] {
                h.require(c)?;
            }
            Ok(())
        },
    )?;
    dangling_refs.check(&st_path)?;

    let mut raw_times = raw_times;
    raw_times.sort_by_key(|&(trip, _, _, _, seq)| (trip, seq));
    let mut duplicate_seq = Dangling::new("stop_times.txt");
    for w in raw_times.windows(2) {
        if w[0].0 == w[1].0 && w[0].4 == w[1].4 {
            duplicate_seq.push(|| format!("trip {} repeats stop_sequence {}", trips[w[0].0].id, w[0].4));
        }
    }
    if duplicate_seq.count > 0 {
        return Err(IngestError::Row {
            path: st_path,
            line: 0,
            message: format!(
                "stop sequences not strictly increasing ({}): {}",
                duplicate_seq.count,
                duplicate_seq.first.join("; ")
            ),
        });
    }

    let mut trip_ranges = vec![0..0; trips.len()];
    let mut stop_times = Vec::with_capacity(raw_times.len());
    let mut start = 0;
    while start < raw_times.len() {
        let trip = raw_times[start].0;
        let end = start + raw_times[start..].iter().take_while(|r| r.0 == trip).count();
        let times = interpolate_missing(&raw_times[start..end]).ok_or_else(|| IngestError::Row {
            path: st_path.clone(),
            line: 0,
            message: format!("trip {} has no timed first or last stop", trips[trip].id),
        })?;
        trip_ranges[trip] = stop_times.len()..stop_times.len() + (end - start);
        for (r, (arrival, departure)) in raw_times[start..end].iter().zip(times) {
            stop_times.push(StopTime {
                trip,
                stop: r.1,
                arrival,
                departure,
                sequence: r.4,
            });
        }
        start = end;
    }

    let calendar_bytes = source.read("calendar.txt")?;
    let dates_bytes = source.read("calendar_dates.txt")?;
    if calendar_bytes.is_none() && dates_bytes.is_none() {
        return Err(IngestError::MissingFile {
            path: path.to_path_buf(),
            file: "calendar.txt or calendar_dates.txt".into(),
        });
    }
    let mut calendar = Vec::new();
    if let Some(bytes) = calendar_bytes {
        let cal_path = file_path("calendar.txt");
        const DAYS: [&str; 7] = [
            "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
        ];
        calendar = read_csv(
            &cal_path,
            &bytes,
            opts.permissive,
            |h, row| {
                let mut weekdays = [false; 7];
                for (i, day) in DAYS.iter().enumerate() {
                    weekdays[i] = row.parse::<u8>(h.require(day)?)? == 1;
                }
                let date = |name: &'static str| {
                    let col = h.require(name)?;
                    let raw = row.required(col)?;
                    parse_gtfs_date(raw).ok_or_else(|| row.field_error(col, format!("bad date '{raw}'")))
                };
                Ok(CalendarEntry {
                    service_id: row.required(h.require("service_id")?)?.to_string(),
                    weekdays,
                    start: date("start_date")?,
                    end: date("end_date")?,
                })
            },
            |_| Ok(()),
        )?
        .0;
    }
    let mut calendar_dates = Vec::new();
    if let Some(bytes) = dates_bytes {
        let cd_path = file_path("calendar_dates.txt");
        calendar_dates = read_csv(
            &cd_path,
            &bytes,
            opts.permissive,
            |h, row| {
                let col = h.require("date")?;
                let raw = row.required(col)?;
                Ok(CalendarDate {
                    service_id: row.required(h.require("service_id")?)?.to_string(),
                    date: parse_gtfs_date(raw)
                        .ok_or_else(|| row.field_error(col, format!("bad date '{raw}'")))?,
                    exception_type: row.parse(h.require("exception_type")?)?,
                })
            },
            |_| Ok(()),
        )?
        .0;
    }

    let mut shapes: HashMap<String, Vec<(u32, GeoPoint)>> = HashMap::new();
    if let Some(bytes) = source.read("shapes.txt")? {
        let sh_path = file_path("shapes.txt");
        let (rows, _) = read_csv(
            &sh_path,
            &bytes,
            opts.permissive,
            |h, row| {
                Ok((
                    row.required(h.require("shape_id")?)?.to_string(),
                    row.parse::<u32>(h.require("shape_pt_sequence")?)?,
                    row.coordinate(h.require("shape_pt_lat")?, h.require("shape_pt_lon")?)?,
                ))
            },
            |_| Ok(()),
        )?;
        for (id, seq, p) in rows {
            shapes.entry(id).or_default().push((seq, p));
        }
    }
    let shapes = shapes
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by_key(|&(seq, _)| seq);
            (id, pts.into_iter().map(|(_, p)| p).collect())
        })
        .collect();

    Ok(GtfsBundle {
        stops,
        routes,
        trips,
        stop_times,
        calendar,
        calendar_dates,
        shapes,
        trip_ranges,
    })
}

type RawStopTime = (usize, usize, Option<u32>, Option<u32>, u32);

/// Fills untimed intermediate calls by linear interpolation over call index.
fn interpolate_missing(calls: &[RawStopTime]) -> Option<Vec<(u32, u32)>> {
    let mut out: Vec<Option<(u32, u32)>> = calls
        .iter()
        .map(|&(_, _, a, d, _)| a.zip(d))
        .collect();
    if out.first()?.is_none() || out.last()?.is_none() {
        return None;
    }
    let mut i = 0;
    while i < out.len() {
        if out[i].is_some() {
            i += 1;
            continue;
        }
        let prev = i - 1;
        let next = (i..out.len()).find(|&j| out[j].is_some())?;
        let (t0, t1) = (out[prev]?.1 as f64, out[next]?.0 as f64);
        for (k, slot) in out.iter_mut().enumerate().take(next).skip(i) {
            let f = (k - prev) as f64 / (next - prev) as f64;
            let t = (t0 + f * (t1 - t0)).round() as u32;
            *slot = Some((t, t));
        }
        i = next;
    }
    out.into_iter().collect()
}
