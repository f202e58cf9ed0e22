//! End-to-end orchestration shared by the command line, the Python module
//! and the dataset acceptance checks.

use std::path::{Path, PathBuf};

use crate::client_filter::{diff_filtered, regenerate_filtered, FilteredDiff};
use crate::config::{DataPaths, PlannerConfig, RunConfig};
use crate::evaluation::{
    compute_stats, evaluate_gate, join_trips, render_report, write_recognitions_csv, GateOutcome, Method,
    MethodStats, Recognition, ReportFormat, TripVerdict,
};
use crate::ingest::{
    load_device_data, load_device_models, load_filtered_data, load_gtfs, load_manual_log, load_train_stops,
    load_transit_live, GtfsBundle, IngestError, LoadOptions,
};
use crate::live_matcher::{self, LiveMatchResult, LiveMethod, PositionIndex};
use crate::model::{DevicePoint, FilteredPoint, ManualTrip, VehiclePosition};
use crate::planner::{CommandPlanner, GtfsPlanner, PlanError, Planner};
use crate::segmentation::{build_segments, vehicular_candidates, write_segments_csv, ActivitySegment, SegmentSummary};
use crate::static_matcher::{self, write_assessments_csv, StaticError, StaticOutcome};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("planner: {0}")]
    Planner(#[from] PlanError),
    #[error("static matching: {0}")]
    Static(#[from] StaticError),
    #[error("static matching needs a GTFS feed")]
    NoGtfs,
    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// All inputs of one run.
#[derive(Debug, Default)]
pub struct Dataset {
    pub device_data: Vec<DevicePoint>,
    pub filtered: Vec<FilteredPoint>,
    pub positions: Vec<VehiclePosition>,
    pub trips: Vec<ManualTrip>,
    pub device_models: usize,
    pub train_records: Option<usize>,
    pub gtfs: Option<GtfsBundle>,
    /// Loader notes and downgraded row errors, prefixed with the file name.
    pub notes: Vec<String>,
}

fn collect<T>(notes: &mut Vec<String>, path: &Path, loaded: crate::ingest::Loaded<T>) -> Vec<T> {
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().to_string());
    notes.extend(loaded.notes.iter().map(|n| format!("{name}: {n}")));
    notes.extend(loaded.skipped.iter().map(|e| format!("skipped: {e}")));
    loaded.rows
}

/// Loads every input. The GTFS feed is read only when `with_gtfs` is set
/// and a feed was found.
pub fn load_dataset(paths: &DataPaths, opts: &LoadOptions, with_gtfs: bool) -> Result<Dataset, IngestError> {
    let mut notes = Vec::new();
    let device_data = collect(&mut notes, &paths.device_data, load_device_data(&paths.device_data, opts)?);
    let filtered = collect(&mut notes, &paths.filtered_data, load_filtered_data(&paths.filtered_data, opts)?);
    let positions = collect(&mut notes, &paths.transit_live, load_transit_live(&paths.transit_live, opts)?);
    let trips = collect(&mut notes, &paths.manual_log, load_manual_log(&paths.manual_log, opts)?);
    let device_models = match &paths.device_models {
        Some(p) => collect(&mut notes, p, load_device_models(p, opts)?).len(),
        None => 0,
    };
    let train_records = match &paths.train_stops {
        Some(p) => Some(load_train_stops(p)?.train_count()),
        None => None,
    };
    let gtfs = match (&paths.gtfs, with_gtfs) {
        (Some(path), true) => Some(load_gtfs(path, opts)?),
        _ => None,
    };
    Ok(Dataset {
        device_data,
        filtered,
        positions,
        trips,
        device_models,
        train_records,
        gtfs,
        notes,
    })
}

impl Dataset {
    /// Human-readable row counts.
    pub fn summary(&self) -> String {
        let mut lines = vec![
            format!("device_data: {} rows", self.device_data.len()),
            format!("device_data_filtered: {} rows", self.filtered.len()),
            format!("transit_live: {} rows", self.positions.len()),
            format!("manual_log: {} rows", self.trips.len()),
        ];
        if self.device_models > 0 {
            lines.push(format!("device_models: {} rows", self.device_models));
        }
        if let Some(n) = self.train_records {
            lines.push(format!("train stop records: {n}"));
        }
        if let Some(g) = &self.gtfs {
            lines.push(format!(
                "gtfs: {} stops, {} routes, {} trips, {} stop_times, {} shapes",
                g.stops.len(),
                g.routes.len(),
                g.trips.len(),
                g.stop_times.len(),
                g.shapes.len()
            ));
        }
        lines.extend(self.notes.iter().cloned());
        lines.join("\n")
    }

    /// Compares a filter replay over the raw fixes with the filtered table.
    pub fn filter_diff(&self, cfg: &RunConfig) -> Result<FilteredDiff, crate::client_filter::FilterError> {
        let regenerated = regenerate_filtered(&self.device_data, &cfg.filter)?;
        Ok(diff_filtered(&regenerated, &self.filtered))
    }
}

pub fn make_planner<'a>(cfg: &RunConfig, gtfs: Option<&'a GtfsBundle>) -> Result<Box<dyn Planner + 'a>, PipelineError> {
    match &cfg.planner {
        PlannerConfig::Embedded => {
            let gtfs = gtfs.ok_or(PipelineError::NoGtfs)?;
            Ok(Box::new(GtfsPlanner::new(gtfs, cfg.date, cfg.constants.v_w_mps)?))
        }
        PlannerConfig::External { program, args } => Ok(Box::new(CommandPlanner {
            program: program.clone(),
            args: args.clone(),
        })),
    }
}

#[derive(Debug, Default)]
pub struct PipelineOutput {
    pub methods: Vec<Method>,
    pub segments: Vec<ActivitySegment>,
    pub candidates: Vec<ActivitySegment>,
    /// Per candidate, in candidate order; empty when the method was not run.
    pub live_new: Vec<Option<LiveMatchResult>>,
    pub live_old: Vec<Option<LiveMatchResult>>,
    pub static_outcomes: Vec<StaticOutcome>,
    pub recognitions: Vec<Recognition>,
    pub verdicts: Vec<TripVerdict>,
    pub stats: Vec<MethodStats>,
    pub gate: Vec<GateOutcome>,
}

/// Segments and matches the data with the selected methods and evaluates
/// the result against the manual log.
pub fn run_pipeline(
    cfg: &RunConfig,
    data: &Dataset,
    planner: Option<&dyn Planner>,
) -> Result<PipelineOutput, PipelineError> {
    let methods = cfg.methods.clone();
    let segments = build_segments(&data.filtered, cfg.segmentation.max_gap_s);
    let candidates = vehicular_candidates(&segments);
    let mut out = PipelineOutput {
        methods: methods.clone(),
        ..Default::default()
    };

    let wants_live = methods.iter().any(|m| matches!(m, Method::NewLive | Method::OldLive));
    if wants_live {
        let index = PositionIndex::new(data.positions.iter().cloned());
        if methods.contains(&Method::NewLive) {
            out.live_new = live_matcher::match_all(&candidates, LiveMethod::New, &cfg.live, &index);
        }
        if methods.contains(&Method::OldLive) {
            out.live_old = live_matcher::match_all(&candidates, LiveMethod::Old, &cfg.live, &index);
        }
    }
    if methods.contains(&Method::Static) {
        let owned;
        let planner = match planner {
            Some(p) => p,
            None => {
                owned = make_planner(cfg, data.gtfs.as_ref())?;
                owned.as_ref()
            }
        };
        out.static_outcomes = static_matcher::match_all(&candidates, planner, &cfg.constants)?;
    }

    for method in &methods {
        match method {
            Method::NewLive | Method::OldLive => {
                let results = if *method == Method::NewLive { &out.live_new } else { &out.live_old };
                for (seg, r) in candidates.iter().zip(results) {
                    if let Some(r) = r {
                        out.recognitions.push(Recognition::from_live(seg, r));
                    }
                }
            }
            Method::Static => {
                for (seg, o) in candidates.iter().zip(&out.static_outcomes) {
                    if let Some(r) = &o.result {
                        out.recognitions.push(Recognition::from_static(seg, r));
                    }
                }
            }
        }
    }

    let summaries: Vec<SegmentSummary> = segments.iter().map(SegmentSummary::from).collect();
    out.verdicts = join_trips(&data.trips, &summaries, &out.recognitions);
    out.stats = compute_stats(&out.verdicts, &methods);
    out.gate = evaluate_gate(&out.stats, &cfg.gate);
    out.segments = segments;
    out.candidates = candidates;
    Ok(out)
}

impl PipelineOutput {
    pub fn report(&self, format: ReportFormat) -> String {
        render_report(&self.stats, &self.verdicts, &self.recognitions, &self.methods, format)
    }

    pub fn gate_passed(&self) -> bool {
        self.gate.iter().all(|g| g.pass)
    }

    pub fn gate_summary(&self) -> String {
        self.gate
            .iter()
            .map(|g| {
                format!(
                    "{} {} / {}: {} (expected {} +/- {})",
                    if g.pass { "PASS" } else { "FAIL" },
                    g.check.column,
                    g.check.row,
                    g.actual.map_or("-".to_string(), |a| a.to_string()),
                    g.check.expected,
                    g.check.tolerance
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Writes segments, recognitions, static assessments and both report
    /// formats. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        let files = [
            ("segments.csv", write_segments_csv(&self.segments)),
            ("recognitions.csv", write_recognitions_csv(&self.recognitions)),
            ("static_assessments.csv", write_assessments_csv(&self.static_outcomes)),
            ("report.txt", self.report(ReportFormat::Text)),
            ("report.csv", self.report(ReportFormat::Csv)),
        ];
        write_files(dir, &files)
    }
}

pub fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Output {
        path: dir.to_path_buf(),
        source,
    })?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| PipelineError::Output {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        })
        .collect()
}
