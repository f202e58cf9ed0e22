//! Recognition of public-transport trips from mobile-device traces.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`ingest`] parses the device, fleet, log and timetable inputs.
//! 2. [`client_filter`] replays the device-side point filter and duty cycle.
//! 3. [`segmentation`] cuts filtered points into same-activity segments.
//! 4. [`live_matcher`] matches vehicular segments against live fleet positions.
//! 5. [`planner`] and [`static_matcher`] validate timetabled itineraries.
//! 6. [`evaluation`] joins verdicts to the manual log and tabulates results.
//!
//! [`pipeline`] chains the stages under a [`config::RunConfig`].

pub mod client_filter;
pub mod config;
pub mod evaluation;
pub mod geodesy;
pub mod ingest;
pub mod live_matcher;
pub mod model;
pub mod pipeline;
pub mod planner;
pub mod segmentation;
pub mod static_matcher;

pub use geodesy::{distance_m, point_to_linestring_m, resample_min_spacing, GeoPoint, Linestring};
pub use model::*;
