use std::collections::HashSet;
use std::path::Path;

use crate::model::{
    ActivityKind, DeviceModelEntry, DevicePoint, FilteredPoint, LineType, ManualTrip,
    RankedActivity, VehiclePosition,
};

use super::{format_timestamp, read_csv, read_file, IngestError, LoadOptions, Loaded};

const ACTIVITY_COLUMNS: [(&str, &str); 3] = [
    ("activity_1", "activity_1_conf"),
    ("activity_2", "activity_2_conf"),
    ("activity_3", "activity_3_conf"),
];

pub fn load_device_data(path: &Path, opts: &LoadOptions) -> Result<Loaded<DevicePoint>, IngestError> {
    parse_device_data(path, &read_file(path)?, opts)
}

/// Parses a `device_data` table; output is sorted by `(time, device_id)`.
pub fn parse_device_data(
    path: &Path,
    bytes: &[u8],
    opts: &LoadOptions,
) -> Result<Loaded<DevicePoint>, IngestError> {
    let (mut rows, skipped) = read_csv(
        path,
        bytes,
        opts.permissive,
        |h, row| {
            let time = row.timestamp(h.require("time")?, opts.default_date)?;
            let device_id = row.parse(h.require("device_id")?)?;
            let position = row.coordinate(h.require("lat")?, h.require("lng")?)?;
            let acc_col = h.require("accuracy")?;
            let accuracy: f64 = row.parse(acc_col)?;
            if !(accuracy >= 0.0) {
                return Err(row.field_error(acc_col, format!("negative accuracy {accuracy}")));
            }
            let mut activities = Vec::with_capacity(3);
            for (rank, (kind_name, conf_name)) in ACTIVITY_COLUMNS.iter().enumerate() {
                let kind_col = if rank == 0 {
                    Some(h.require(kind_name)?)
                } else {
                    h.optional(kind_name)
                };
                let Some(kind) = row.parse_opt::<ActivityKind>(kind_col)? else {
                    if rank == 0 {
                        return Err(row.field_error(kind_col.unwrap(), "missing value"));
                    }
                    break;
                };
                let conf_col = h.optional(conf_name);
                let confidence: u8 = match row.parse_opt::<u16>(conf_col)? {
                    Some(c) if c <= 100 => c as u8,
                    Some(c) => {
                        return Err(row.field_error(conf_col.unwrap(), format!("confidence {c} above 100")))
                    }
                    None => {
                        return Err(row.error(format!("{kind_name} has no {conf_name}")));
                    }
                };
                if let Some(prev) = activities.last().map(|a: &RankedActivity| a.confidence) {
                    if confidence > prev {
                        return Err(row.field_error(
                            conf_col.unwrap(),
                            format!("confidence {confidence} exceeds higher-ranked {prev}"),
                        ));
                    }
                }
                activities.push(RankedActivity { kind, confidence });
            }
            Ok(DevicePoint {
                time,
                device_id,
                position,
                accuracy,
                activities,
            })
        },
        |h| {
            for c in ["time", "device_id", "lat", "lng", "accuracy", "activity_1"] {
                h.require(c)?;
            }
            Ok(())
        },
    )?;
    rows.sort_by_key(|p| (p.time, p.device_id));
    Ok(Loaded {
        rows,
        skipped,
        notes: Vec::new(),
    })
}

pub fn load_filtered_data(
    path: &Path,
    opts: &LoadOptions,
) -> Result<Loaded<FilteredPoint>, IngestError> {
    parse_filtered_data(path, &read_file(path)?, opts)
}

/// Parses a `device_data_filtered` table; output is sorted by `(time, device_id)`.
pub fn parse_filtered_data(
    path: &Path,
    bytes: &[u8],
    opts: &LoadOptions,
) -> Result<Loaded<FilteredPoint>, IngestError> {
    let (mut rows, skipped) = read_csv(
        path,
        bytes,
        opts.permissive,
        |h, row| {
            Ok(FilteredPoint {
                time: row.timestamp(h.require("time")?, opts.default_date)?,
                device_id: row.parse(h.require("device_id")?)?,
                position: row.coordinate(h.require("lat")?, h.require("lng")?)?,
                activity: row.parse(h.require("activity")?)?,
            })
        },
        |h| {
            for c in ["time", "device_id", "lat", "lng", "activity"] {
                h.require(c)?;
            }
            Ok(())
        },
    )?;
    rows.sort_by_key(|p| (p.time, p.device_id));
    Ok(Loaded {
        rows,
        skipped,
        notes: Vec::new(),
    })
}

pub fn load_transit_live(
    path: &Path,
    opts: &LoadOptions,
) -> Result<Loaded<VehiclePosition>, IngestError> {
    parse_transit_live(path, &read_file(path)?, opts)
}

/// Parses a `transit_live` table.
///
/// Input order is not assumed; output is sorted by `(time, vehicle_ref)`
/// with file order kept among ties. Identical rows are retained and counted
/// in the notes.
pub fn parse_transit_live(
    path: &Path,
    bytes: &[u8],
    opts: &LoadOptions,
) -> Result<Loaded<VehiclePosition>, IngestError> {
    let (mut rows, skipped) = read_csv(
        path,
        bytes,
        opts.permissive,
        |h, row| {
            let (lat, lng) = (h.require("lat")?, h.require("lng")?);
            let position = row.coordinate(lat, lng)?;
            if let Some(bb) = opts.bounds {
                if !bb.contains(position) {
                    return Err(row.error(format!(
                        "position ({}, {}) outside dataset bounds",
                        position.lat, position.lng
                    )));
                }
            }
            let ref_col = h.require("vehicle_ref")?;
            let vehicle_ref = row.required(ref_col)?.to_string();
            let type_col = h.require("line_type")?;
            let line_type: LineType = row.parse(type_col)?;
            if line_type == LineType::Car {
                return Err(row.field_error(type_col, "CAR is not a fleet line type"));
            }
            Ok(VehiclePosition {
                time: row.timestamp(h.require("time")?, opts.default_date)?,
                position,
                line_type,
                line_name: row.text(h.require("line_name")?).to_string(),
                vehicle_ref,
            })
        },
        |h| {
            for c in ["time", "lat", "lng", "line_type", "line_name", "vehicle_ref"] {
                h.require(c)?;
            }
            Ok(())
        },
    )?;
    rows.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.vehicle_ref.cmp(&b.vehicle_ref)));

    let mut seen = HashSet::with_capacity(rows.len());
    let duplicates = rows
        .iter()
        .filter(|p| {
            !seen.insert((
                p.time,
                p.position.lat.to_bits(),
                p.position.lng.to_bits(),
                p.line_type,
                p.line_name.as_str(),
                p.vehicle_ref.as_str(),
            ))
        })
        .count();
    let mut notes = Vec::new();
    if duplicates > 0 {
        notes.push(format!("{duplicates} duplicate rows retained"));
    }
    Ok(Loaded {
        rows,
        skipped,
        notes,
    })
}

pub fn load_manual_log(path: &Path, opts: &LoadOptions) -> Result<Loaded<ManualTrip>, IngestError> {
    parse_manual_log(path, &read_file(path)?, opts)
}

/// Parses a `manual_log` table, keeping file order.
pub fn parse_manual_log(
    path: &Path,
    bytes: &[u8],
    opts: &LoadOptions,
) -> Result<Loaded<ManualTrip>, IngestError> {
    let date = opts.default_date;
    let (rows, skipped) = read_csv(
        path,
        bytes,
        opts.permissive,
        |h, row| {
            let trip = ManualTrip {
                device_id: row.parse(h.require("device_id")?)?,
                st_entrance: row.text_opt(h.optional("st_entrance")),
                st_entry_time: row.timestamp_opt(h.optional("st_entry_time"), date)?,
                line_type: row.parse_opt(Some(h.require("line_type")?))?,
                line_name: row.text_opt(h.optional("line_name")),
                vehicle_dep_time: row.timestamp_opt(Some(h.require("vehicle_dep_time")?), date)?,
                vehicle_dep_stop: row.text_opt(h.optional("vehicle_dep_stop")),
                vehicle_arr_time: row.timestamp_opt(Some(h.require("vehicle_arr_time")?), date)?,
                vehicle_arr_stop: row.text_opt(h.optional("vehicle_arr_stop")),
                st_exit_location: row.text_opt(h.optional("st_exit_location")),
                st_exit_time: row.timestamp_opt(h.optional("st_exit_time"), date)?,
                comments: row.text_opt(h.optional("comments")),
            };
            if let (Some(dep), Some(arr)) = (trip.vehicle_dep_time, trip.vehicle_arr_time) {
                if dep > arr {
                    return Err(row.error(format!(
                        "vehicle_dep_time {dep} is after vehicle_arr_time {arr}"
                    )));
                }
            }
            Ok(trip)
        },
        |h| {
            for c in ["device_id", "line_type", "vehicle_dep_time", "vehicle_arr_time"] {
                h.require(c)?;
            }
            Ok(())
        },
    )?;
    Ok(Loaded {
        rows,
        skipped,
        notes: Vec::new(),
    })
}

pub fn load_device_models(
    path: &Path,
    opts: &LoadOptions,
) -> Result<Loaded<DeviceModelEntry>, IngestError> {
    let bytes = read_file(path)?;
    let mut seen = HashSet::new();
    let (rows, skipped) = read_csv(
        path,
        &bytes,
        opts.permissive,
        |h, row| {
            let col = h.require("device_id")?;
            let device_id = row.parse(col)?;
            if !seen.insert(device_id) {
                return Err(row.field_error(col, format!("duplicate device_id {device_id}")));
            }
            Ok(DeviceModelEntry {
                device_id,
                model: row.text(h.require("model")?).to_string(),
            })
        },
        |h| {
            h.require("device_id")?;
            h.require("model")?;
            Ok(())
        },
    )?;
    Ok(Loaded {
        rows,
        skipped,
        notes: Vec::new(),
    })
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

fn opt_ts(t: Option<crate::model::Timestamp>) -> String {
    t.map(format_timestamp).unwrap_or_default()
}

pub fn write_device_data(rows: &[DevicePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time", "device_id", "lat", "lng", "accuracy"];
    for (k, c) in ACTIVITY_COLUMNS {
        header.push(k);
        header.push(c);
    }
    w.write_record(&header).unwrap();
    for p in rows {
        let mut rec = vec![
            format_timestamp(p.time),
            p.device_id.to_string(),
            p.position.lat.to_string(),
            p.position.lng.to_string(),
            p.accuracy.to_string(),
        ];
        for rank in 0..3 {
            match p.activities.get(rank) {
                Some(a) => {
                    rec.push(a.kind.to_string());
                    rec.push(a.confidence.to_string());
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        w.write_record(&rec).unwrap();
    }
    finish(w)
}

/// Writes the five-column filtered-point format.
pub fn write_filtered_data(rows: &[FilteredPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "device_id", "lat", "lng", "activity"]).unwrap();
    for p in rows {
        w.write_record([
            format_timestamp(p.time),
            p.device_id.to_string(),
            p.position.lat.to_string(),
            p.position.lng.to_string(),
            p.activity.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

pub fn write_transit_live(rows: &[VehiclePosition]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "lat", "lng", "line_type", "line_name", "vehicle_ref"])
        .unwrap();
    for p in rows {
        w.write_record([
            format_timestamp(p.time),
            p.position.lat.to_string(),
            p.position.lng.to_string(),
            p.line_type.to_string(),
            p.line_name.clone(),
            p.vehicle_ref.clone(),
        ])
        .unwrap();
    }
    finish(w)
}

pub fn write_manual_log(rows: &[ManualTrip]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "device_id",
        "st_entrance",
        "st_entry_time",
        "line_type",
        "line_name",
        "vehicle_dep_time",
        "vehicle_dep_stop",
        "vehicle_arr_time",
        "vehicle_arr_stop",
        "st_exit_location",
        "st_exit_time",
        "comments",
    ])
    .unwrap();
    for t in rows {
        w.write_record([
            t.device_id.to_string(),
            t.st_entrance.clone(),
            opt_ts(t.st_entry_time),
            t.line_type.map(|l| l.to_string()).unwrap_or_default(),
            t.line_name.clone(),
            opt_ts(t.vehicle_dep_time),
            t.vehicle_dep_stop.clone(),
            opt_ts(t.vehicle_arr_time),
            t.vehicle_arr_stop.clone(),
            t.st_exit_location.clone(),
            opt_ts(t.st_exit_time),
            t.comments.clone(),
        ])
        .unwrap();
    }
    finish(w)
}
