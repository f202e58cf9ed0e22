//! Domain model shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::geodesy::GeoPoint;

/// Wall-clock local time without a zone, as recorded in every table of the dataset.
pub type Timestamp = NaiveDateTime;

/// Signed number of seconds from `from` to `to`.
pub fn secs_between(from: Timestamp, to: Timestamp) -> i64 {
    (to - from).num_seconds()
}

/// Activity estimates reported by the platform activity recognition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivityKind {
    InVehicle,
    OnBicycle,
    Running,
    Still,
    Tilting,
    Unknown,
    Walking,
}

impl ActivityKind {
    pub const ALL: [ActivityKind; 7] = [
        ActivityKind::InVehicle,
        ActivityKind::OnBicycle,
        ActivityKind::Running,
        ActivityKind::Still,
        ActivityKind::Tilting,
        ActivityKind::Unknown,
        ActivityKind::Walking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityKind::InVehicle => "IN_VEHICLE",
            ActivityKind::OnBicycle => "ON_BICYCLE",
            ActivityKind::Running => "RUNNING",
            ActivityKind::Still => "STILL",
            ActivityKind::Tilting => "TILTING",
            ActivityKind::Unknown => "UNKNOWN",
            ActivityKind::Walking => "WALKING",
        }
    }

    /// Everything except UNKNOWN and TILTING carries usable movement information.
    pub fn is_good(self) -> bool {
        !matches!(self, ActivityKind::Unknown | ActivityKind::Tilting)
    }
}

impl fmt::Display for ActivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} '{value}'")]
pub struct UnknownVariant {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for ActivityKind {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        ActivityKind::ALL
            .iter()
            .copied()
            .find(|a| a.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| UnknownVariant {
                kind: "activity",
                value: s.to_string(),
            })
    }
}

/// Transport mode of a fleet vehicle, a timetabled route or a logged trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LineType {
    Subway,
    Bus,
    Tram,
    Train,
    Ferry,
    Car,
}

impl LineType {
    pub const ALL: [LineType; 6] = [
        LineType::Subway,
        LineType::Bus,
        LineType::Tram,
        LineType::Train,
        LineType::Ferry,
        LineType::Car,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LineType::Subway => "SUBWAY",
            LineType::Bus => "BUS",
            LineType::Tram => "TRAM",
            LineType::Train => "TRAIN",
            LineType::Ferry => "FERRY",
            LineType::Car => "CAR",
        }
    }

    pub fn is_public_transport(self) -> bool {
        self != LineType::Car
    }
}

impl fmt::Display for LineType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LineType {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        LineType::ALL
            .iter()
            .copied()
            .find(|l| l.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| UnknownVariant {
                kind: "line type",
                value: s.to_string(),
            })
    }
}

/// One ranked activity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankedActivity {
    pub kind: ActivityKind,
    pub confidence: u8,
}

/// One sampled mobile-device fix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DevicePoint {
    pub time: Timestamp,
    pub device_id: u32,
    pub position: GeoPoint,
    /// Radius in meters estimated by the fused location provider.
    pub accuracy: f64,
    /// Up to three estimates, highest confidence first.
    pub activities: Vec<RankedActivity>,
}

impl DevicePoint {
    pub fn top_activity(&self) -> Option<ActivityKind> {
        self.activities.first().map(|a| a.kind)
    }
}

/// A device fix after activity selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilteredPoint {
    pub time: Timestamp,
    pub device_id: u32,
    pub position: GeoPoint,
    pub activity: ActivityKind,
}

/// One live fleet sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehiclePosition {
    pub time: Timestamp,
    pub position: GeoPoint,
    pub line_type: LineType,
    pub line_name: String,
    pub vehicle_ref: String,
}

/// One manually logged trip leg.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ManualTrip {
    pub device_id: u32,
    pub st_entrance: String,
    pub st_entry_time: Option<Timestamp>,
    pub line_type: Option<LineType>,
    pub line_name: String,
    pub vehicle_dep_time: Option<Timestamp>,
    pub vehicle_dep_stop: String,
    pub vehicle_arr_time: Option<Timestamp>,
    pub vehicle_arr_stop: String,
    pub st_exit_location: String,
    pub st_exit_time: Option<Timestamp>,
    pub comments: String,
}

impl ManualTrip {
    pub fn is_public_transport(&self) -> bool {
        self.line_type.is_some_and(LineType::is_public_transport)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceModelEntry {
    pub device_id: u32,
    pub model: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activity_round_trips_through_text() {
        for a in ActivityKind::ALL {
            assert_eq!(a.as_str().parse::<ActivityKind>().unwrap(), a);
        }
        assert!("FLYING".parse::<ActivityKind>().is_err());
    }

    #[test]
    fn good_activities_exclude_unknown_and_tilting() {
        let good: Vec<_> = ActivityKind::ALL.iter().filter(|a| a.is_good()).collect();
        assert_eq!(good.len(), 5);
        assert!(!ActivityKind::Tilting.is_good());
        assert!(!ActivityKind::Unknown.is_good());
    }

    #[test]
    fn line_type_parsing_is_case_insensitive() {
        assert_eq!("ferry".parse::<LineType>().unwrap(), LineType::Ferry);
        assert!("BOAT".parse::<LineType>().is_err());
    }
}
