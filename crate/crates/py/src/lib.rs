//! Python bindings: configuration, dataset loading, the full pipeline and a
//! few building blocks (geodesy, segmentation, live matching).
//!
//! Structured results are returned as plain dicts and lists.

use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};
use serde::Serialize;
use serde_json::Value;

use triprec_core::config::RunConfig;
use triprec_core::evaluation::{Method, ReportFormat};
use triprec_core::ingest::LoadOptions;
use triprec_core::live_matcher::{match_segment, LiveMethod, PositionIndex};
use triprec_core::pipeline::{load_dataset, run_pipeline, Dataset, PipelineOutput};
use triprec_core::segmentation::{build_segments, ActivitySegment, SegmentSummary, TracePoint};
use triprec_core::static_matcher::MatchConstants;
use triprec_core::geodesy::point_to_polyline_m as geo_point_to_polyline;
use triprec_core::{
    distance_m as geo_distance, ActivityKind, FilteredPoint, GeoPoint, LineType, ManualTrip, VehiclePosition,
};

type FilteredRow = (NaiveDateTime, u32, f64, f64, String);
type PositionRow = (NaiveDateTime, f64, f64, String, String, String);
type TripRow = (u32, String, String, NaiveDateTime, NaiveDateTime);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => PyString::new(py, s).into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    json_to_py(py, &serde_json::to_value(v).map_err(value_err)?)
}

fn parse_methods(names: &[String]) -> PyResult<Vec<Method>> {
    let wanted: Vec<Method> = names.iter().map(|n| n.parse().map_err(value_err)).collect::<PyResult<_>>()?;
    Ok(Method::ALL.iter().copied().filter(|m| wanted.contains(m)).collect())
}

/// Run configuration with every threshold at its default.
#[pyclass(name = "Config", module = "triprec", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: RunConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = RunConfig::from_toml(std::path::Path::new("<string>"), text).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = RunConfig::load(&path).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Applies the `TRIPREC_*` environment overrides.
    fn apply_env(&mut self) -> PyResult<()> {
        self.inner.apply_env(|k| std::env::var(k).ok()).map_err(value_err)
    }

    #[getter]
    fn methods(&self) -> Vec<String> {
        self.inner.methods.iter().map(|m| m.as_str().to_string()).collect()
    }

    #[setter]
    fn set_methods(&mut self, names: Vec<String>) -> PyResult<()> {
        let methods = parse_methods(&names)?;
        if methods.is_empty() {
            return Err(value_err("at least one method is required"));
        }
        self.inner.methods = methods;
        Ok(())
    }

    #[getter]
    fn data_dir(&self) -> Option<PathBuf> {
        self.inner.paths.data_dir.clone()
    }

    #[setter]
    fn set_data_dir(&mut self, dir: Option<PathBuf>) {
        self.inner.paths.data_dir = dir;
    }

    #[getter]
    fn gtfs(&self) -> Option<PathBuf> {
        self.inner.paths.gtfs.clone()
    }

    #[setter]
    fn set_gtfs(&mut self, path: Option<PathBuf>) {
        self.inner.paths.gtfs = path;
    }

    #[getter]
    fn out_dir(&self) -> PathBuf {
        self.inner.out_dir.clone()
    }

    #[setter]
    fn set_out_dir(&mut self, dir: PathBuf) {
        self.inner.out_dir = dir;
    }

    #[getter]
    fn date(&self) -> NaiveDate {
        self.inner.date
    }

    #[setter]
    fn set_date(&mut self, date: NaiveDate) {
        self.inner.date = date;
    }

    /// Static-matching constants as a dict.
    fn constants(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.constants)
    }

    fn __repr__(&self) -> String {
        format!("Config(date={}, methods={:?})", self.inner.date, self.methods())
    }
}

/// Input tables of one run.
#[pyclass(name = "Dataset", module = "triprec")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads the tables named by `config`; the GTFS feed only when
    /// `with_gtfs` is set.
    #[staticmethod]
    #[pyo3(signature = (config, with_gtfs = false, permissive = false))]
    fn load(py: Python<'_>, config: &PyConfig, with_gtfs: bool, permissive: bool) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let inner = py.detach(move || {
            let paths = cfg.resolve_paths().map_err(|e| e.to_string())?;
            let opts = LoadOptions {
                permissive,
                default_date: cfg.date,
                ..LoadOptions::default()
            };
            load_dataset(&paths, &opts, with_gtfs).map_err(|e| e.to_string())
        });
        Ok(Self {
            inner: inner.map_err(PyIOError::new_err)?,
        })
    }

    /// Builds a dataset from tuples:
    /// filtered `(time, device_id, lat, lng, activity)`,
    /// positions `(time, lat, lng, line_type, line_name, vehicle_ref)`,
    /// trips `(device_id, line_type, line_name, departure, arrival)`.
    #[staticmethod]
    #[pyo3(signature = (filtered, positions = Vec::new(), trips = Vec::new()))]
    fn from_rows(filtered: Vec<FilteredRow>, positions: Vec<PositionRow>, trips: Vec<TripRow>) -> PyResult<Self> {
        let mut filtered = filtered
            .into_iter()
            .map(|(time, device_id, lat, lng, activity)| {
                Ok(FilteredPoint {
                    time,
                    device_id,
                    position: GeoPoint::new(lat, lng),
                    activity: activity.parse::<ActivityKind>().map_err(value_err)?,
                })
            })
            .collect::<PyResult<Vec<_>>>()?;
        filtered.sort_by_key(|p| (p.device_id, p.time));
        let positions = positions
            .into_iter()
            .map(vehicle_position)
            .collect::<PyResult<Vec<_>>>()?;
        let trips = trips
            .into_iter()
            .map(|(device_id, line_type, line_name, dep, arr)| {
                Ok(ManualTrip {
                    device_id,
                    line_type: Some(line_type.parse::<LineType>().map_err(value_err)?),
                    line_name,
                    vehicle_dep_time: Some(dep),
                    vehicle_arr_time: Some(arr),
                    ..Default::default()
                })
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: Dataset {
                filtered,
                positions,
                trips,
                ..Dataset::default()
            },
        })
    }

    fn summary(&self) -> String {
        self.inner.summary()
    }

    /// Row counts per table.
    fn counts(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let d = &self.inner;
        let dict = PyDict::new(py);
        dict.set_item("device_data", d.device_data.len())?;
        dict.set_item("filtered", d.filtered.len())?;
        dict.set_item("transit_live", d.positions.len())?;
        dict.set_item("manual_log", d.trips.len())?;
        dict.set_item("gtfs_trips", d.gtfs.as_ref().map(|g| g.trips.len()))?;
        Ok(dict.into_any().unbind())
    }

    /// Activity segments of the filtered trace, without their traces.
    #[pyo3(signature = (max_gap_s = 300))]
    fn segments(&self, py: Python<'_>, max_gap_s: u32) -> PyResult<Py<PyAny>> {
        let summaries: Vec<SegmentSummary> = build_segments(&self.inner.filtered, max_gap_s)
            .iter()
            .map(SegmentSummary::from)
            .collect();
        to_py(py, &summaries)
    }
}

fn vehicle_position((time, lat, lng, line_type, line_name, vehicle_ref): PositionRow) -> PyResult<VehiclePosition> {
    Ok(VehiclePosition {
        time,
        position: GeoPoint::new(lat, lng),
        line_type: line_type.parse().map_err(value_err)?,
        line_name,
        vehicle_ref,
    })
}

/// Result of [`run`].
#[pyclass(name = "Output", module = "triprec")]
struct PyOutput {
    inner: PipelineOutput,
}

#[pymethods]
impl PyOutput {
    /// Statistics grid and trip inventories; `format` is "text" or "csv".
    #[pyo3(signature = (format = "text"))]
    fn report(&self, format: &str) -> PyResult<String> {
        let format = match format {
            "text" => ReportFormat::Text,
            "csv" => ReportFormat::Csv,
            other => return Err(value_err(format!("unknown report format '{other}'"))),
        };
        Ok(self.inner.report(format))
    }

    #[getter]
    fn gate_passed(&self) -> bool {
        self.inner.gate_passed()
    }

    fn gate(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let list = PyList::empty(py);
        for g in &self.inner.gate {
            let dict = PyDict::new(py);
            dict.set_item("column", &g.check.column)?;
            dict.set_item("row", &g.check.row)?;
            dict.set_item("expected", g.check.expected)?;
            dict.set_item("tolerance", g.check.tolerance)?;
            dict.set_item("actual", g.actual)?;
            dict.set_item("pass", g.pass)?;
            list.append(dict)?;
        }
        Ok(list.into_any().unbind())
    }

    fn recognitions(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.recognitions)
    }

    fn stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.stats)
    }

    fn segments(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let summaries: Vec<SegmentSummary> = self.inner.segments.iter().map(SegmentSummary::from).collect();
        to_py(py, &summaries)
    }

    /// Writes the output tables and reports; returns the written paths.
    fn write(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        self.inner.write(&dir).map_err(|e| PyIOError::new_err(e.to_string()))
    }
}

/// Runs segmentation, the configured matchers and the evaluation.
#[pyfunction]
fn run(py: Python<'_>, config: &PyConfig, dataset: &PyDataset) -> PyResult<PyOutput> {
    let cfg = &config.inner;
    let data = &dataset.inner;
    let inner = py.detach(|| run_pipeline(cfg, data, None).map_err(|e| e.to_string()));
    Ok(PyOutput {
        inner: inner.map_err(PyValueError::new_err)?,
    })
}

/// Great-circle distance in meters between two `(lat, lng)` pairs.
#[pyfunction]
fn distance_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    geo_distance(GeoPoint::new(a.0, a.1), GeoPoint::new(b.0, b.1))
}

/// Distance in meters from `p` to the polyline through `points`.
#[pyfunction]
fn point_to_polyline_m(p: (f64, f64), points: Vec<(f64, f64)>) -> PyResult<f64> {
    geo_point_to_polyline(GeoPoint::new(p.0, p.1), points.into_iter().map(|(a, b)| GeoPoint::new(a, b))).map_err(value_err)
}

/// Static-matching constants derived from the four base parameters and the
/// maximum plan duration difference.
#[pyfunction]
#[pyo3(signature = (d_e_max_m = 500.0, v_w_mps = 1.34, v_pt_mps = 3.0, t_ept_s = 180, dt_max_s = 1080))]
fn derive_constants(py: Python<'_>, d_e_max_m: f64, v_w_mps: f64, v_pt_mps: f64, t_ept_s: i64, dt_max_s: i64) -> PyResult<Py<PyAny>> {
    let c = MatchConstants::derive(d_e_max_m, v_w_mps, v_pt_mps, t_ept_s, dt_max_s);
    c.validate().map_err(value_err)?;
    to_py(py, &c)
}

/// Matches one vehicular trace `[(time, lat, lng)]` against vehicle
/// positions with the "new" or "old" live method. Returns `None` when no
/// vehicle qualifies.
#[pyfunction]
#[pyo3(signature = (trace, positions, method = "new", config = None))]
fn match_live(
    py: Python<'_>,
    trace: Vec<(NaiveDateTime, f64, f64)>,
    positions: Vec<PositionRow>,
    method: &str,
    config: Option<&PyConfig>,
) -> PyResult<Py<PyAny>> {
    let method = match method {
        "new" => LiveMethod::New,
        "old" => LiveMethod::Old,
        other => return Err(value_err(format!("unknown live method '{other}'"))),
    };
    let mut trace: Vec<TracePoint> = trace
        .into_iter()
        .map(|(time, lat, lng)| TracePoint {
            time,
            position: GeoPoint::new(lat, lng),
        })
        .collect();
    trace.sort_by_key(|p| p.time);
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Err(value_err("trace is empty"));
    };
    let segment = ActivitySegment {
        segment_id: 1,
        device_id: 0,
        activity: ActivityKind::InVehicle,
        start_time: first.time,
        end_time: last.time,
        trace,
    };
    let index = PositionIndex::new(positions.into_iter().map(vehicle_position).collect::<PyResult<Vec<_>>>()?);
    let defaults = RunConfig::default();
    let cfg = config.map_or(&defaults.live, |c| &c.inner.live);
    match match_segment(&segment, method, cfg, &index) {
        Some(r) => to_py(py, &r),
        None => Ok(py.None()),
    }
}

#[pymodule]
fn triprec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyOutput>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(distance_m, m)?)?;
    m.add_function(wrap_pyfunction!(point_to_polyline_m, m)?)?;
    m.add_function(wrap_pyfunction!(derive_constants, m)?)?;
    m.add_function(wrap_pyfunction!(match_live, m)?)?;
    Ok(())
}
