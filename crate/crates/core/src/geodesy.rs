//! WGS84 primitives used by the matchers.
//!
//! Distances are haversine great-circle distances on a sphere of radius
//! 6,371 km. Against the ellipsoid this is within 0.5% at Helsinki
//! latitudes, far below the 100 m matching limits. Point-to-segment
//! distances are computed in an equirectangular projection centred on the
//! query point, which at city scale is accurate to well under a meter.

use serde::{Deserialize, Serialize};

use crate::model::Timestamp;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lng: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lng: f64) -> Self {
        Self { lat, lng }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lng)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("linestring has no vertices")]
    EmptyLinestring,
    #[error("linestring timestamps decrease at vertex {0}")]
    TimeOrder(usize),
}

/// A polyline vertex, optionally timestamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub point: GeoPoint,
    pub time: Option<Timestamp>,
}

/// Ordered polyline with at least one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Linestring {
    vertices: Vec<Vertex>,
}

impl Linestring {
    pub fn new(vertices: Vec<Vertex>) -> Result<Self, GeoError> {
        if vertices.is_empty() {
            return Err(GeoError::EmptyLinestring);
        }
        let mut last = None;
        for (i, v) in vertices.iter().enumerate() {
            if let Some(t) = v.time {
                if last.is_some_and(|l| t < l) {
                    return Err(GeoError::TimeOrder(i));
                }
                last = Some(t);
            }
        }
        Ok(Self { vertices })
    }

    pub fn from_points(points: impl IntoIterator<Item = GeoPoint>) -> Result<Self, GeoError> {
        Self::new(
            points
                .into_iter()
                .map(|point| Vertex { point, time: None })
                .collect(),
        )
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn points(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        self.vertices.iter().map(|v| v.point)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        // Reversal breaks time order, so timestamps are dropped.
        vertices.iter_mut().for_each(|v| v.time = None);
        Self { vertices }
    }
}

/// Great-circle distance in meters.
pub fn distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lng - a.lng).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Local planar coordinates (east, north) in meters of `q` around `origin`.
fn project(origin: GeoPoint, q: GeoPoint) -> (f64, f64) {
    let mut dlng = q.lng - origin.lng;
    if dlng > 180.0 {
        dlng -= 360.0;
    } else if dlng < -180.0 {
        dlng += 360.0;
    }
    let x = EARTH_RADIUS_M * dlng.to_radians() * origin.lat.to_radians().cos();
    let y = EARTH_RADIUS_M * (q.lat - origin.lat).to_radians();
    (x, y)
}

/// Distance from `p` to the segment `a`-`b`.
pub fn point_to_segment_m(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    let da = distance_m(p, a);
    let db = distance_m(p, b);
    let (ax, ay) = project(p, a);
    let (bx, by) = project(p, b);
    let (sx, sy) = (bx - ax, by - ay);
    let len2 = sx * sx + sy * sy;
    if len2 <= f64::EPSILON {
        return da.min(db);
    }
    let t = -(ax * sx + ay * sy) / len2;
    if t <= 0.0 || t >= 1.0 {
        return da.min(db);
    }
    let (cx, cy) = (ax + t * sx, ay + t * sy);
    (cx * cx + cy * cy).sqrt().min(da).min(db)
}

/// Minimum distance from `p` to any segment of `ls`.
pub fn point_to_linestring_m(p: GeoPoint, ls: &Linestring) -> f64 {
    point_to_polyline_m(p, ls.vertices.iter().map(|v| v.point))
        .expect("linestring is never empty")
}

/// Same as [`point_to_linestring_m`] over a bare point sequence; `Err` when empty.
pub fn point_to_polyline_m(
    p: GeoPoint,
    points: impl IntoIterator<Item = GeoPoint>,
) -> Result<f64, GeoError> {
    let mut iter = points.into_iter();
    let first = iter.next().ok_or(GeoError::EmptyLinestring)?;
    let mut best = distance_m(p, first);
    let mut prev = first;
    for q in iter {
        best = best.min(point_to_segment_m(p, prev, q));
        prev = q;
    }
    Ok(best)
}

/// Keeps the first point and then every point at least `spacing_m` from the last kept one.
pub fn resample_min_spacing(trace: &[GeoPoint], spacing_m: f64) -> Vec<GeoPoint> {
    resample_indices(trace, spacing_m)
        .into_iter()
        .map(|i| trace[i])
        .collect()
}

/// Indices into `trace` selected by [`resample_min_spacing`].
pub fn resample_indices(trace: &[GeoPoint], spacing_m: f64) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut last: Option<GeoPoint> = None;
    for (i, &p) in trace.iter().enumerate() {
        match last {
            Some(l) if distance_m(l, p) < spacing_m => {}
            _ => {
                kept.push(i);
                last = Some(p);
            }
        }
    }
    kept
}

/// Axis-aligned lat/lng rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lng: f64,
    pub max_lat: f64,
    pub max_lng: f64,
}

impl BoundingBox {
    pub fn around(points: impl IntoIterator<Item = GeoPoint>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut bb = Self {
            min_lat: first.lat,
            min_lng: first.lng,
            max_lat: first.lat,
            max_lng: first.lng,
        };
        for p in iter {
            bb.include(p);
        }
        Some(bb)
    }

    pub fn include(&mut self, p: GeoPoint) {
        self.min_lat = self.min_lat.min(p.lat);
        self.max_lat = self.max_lat.max(p.lat);
        self.min_lng = self.min_lng.min(p.lng);
        self.max_lng = self.max_lng.max(p.lng);
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lng..=self.max_lng).contains(&p.lng)
    }

    /// Grows the box by at least `margin_m` in every direction.
    pub fn expanded(&self, margin_m: f64) -> Self {
        let dlat = (margin_m / EARTH_RADIUS_M).to_degrees();
        let max_abs_lat = self.min_lat.abs().max(self.max_lat.abs()).min(89.0);
        let dlng = dlat / max_abs_lat.to_radians().cos();
        Self {
            min_lat: self.min_lat - dlat,
            min_lng: self.min_lng - dlng,
            max_lat: self.max_lat + dlat,
            max_lng: self.max_lng + dlng,
        }
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
            && self.min_lng <= other.max_lng
            && other.min_lng <= self.max_lng
    }
}
