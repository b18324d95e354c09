//! Small-area conversion between WGS-84 coordinates and a local
//! east/north/up frame anchored at an intersection reference point.
//!
//! The projection is equirectangular about the reference point, scaled by the
//! ellipsoid's meridional and prime-vertical radii of curvature at the
//! reference latitude. Within a few kilometres of the reference it agrees
//! with geodesic distances to well under 0.1%.
//!
//! Headings and bearings use the compass convention everywhere: 0 = north,
//! 90 = east, clockwise.

use thiserror::Error;

use crate::j2735::{DEG_PER_COUNT, M_PER_ELEV_COUNT};

/// WGS-84 semi-major axis, meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

/// Largest latitude/longitude separation from the reference accepted by [`to_local`].
pub const VALIDITY_DEG: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("point is {dlat:.4} deg / {dlon:.4} deg from the reference; limit is 1 deg")]
    OutOfValidity { dlat: f64, dlon: f64 },
    #[error("bearing between coincident points is undefined")]
    DegenerateSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub elev_m: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64, elev_m: f64) -> Self {
        GeoPoint { lat_deg, lon_deg, elev_m }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat_deg) && (-180.0..=180.0).contains(&self.lon_deg) && self.elev_m.is_finite()
    }

    /// From message integer units (1e-7 deg, 0.1 m).
    pub fn from_counts(lat: i32, lon: i32, elev: i32) -> Self {
        GeoPoint {
            lat_deg: f64::from(lat) * DEG_PER_COUNT,
            lon_deg: f64::from(lon) * DEG_PER_COUNT,
            elev_m: f64::from(elev) * M_PER_ELEV_COUNT,
        }
    }

    /// Latitude and longitude in 1e-7 degree counts, rounded half away from zero.
    pub fn lat_lon_counts(&self) -> (i64, i64) {
        ((self.lat_deg / DEG_PER_COUNT).round() as i64, (self.lon_deg / DEG_PER_COUNT).round() as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalPoint {
    pub east_m: f64,
    pub north_m: f64,
    pub up_m: f64,
}

impl LocalPoint {
    pub fn new(east_m: f64, north_m: f64, up_m: f64) -> Self {
        LocalPoint { east_m, north_m, up_m }
    }

    pub fn horizontal_norm(&self) -> f64 {
        self.east_m.hypot(self.north_m)
    }

    pub fn horizontal_distance(&self, other: &LocalPoint) -> f64 {
        (self.east_m - other.east_m).hypot(self.north_m - other.north_m)
    }

    /// Rotates the horizontal components clockwise (compass sense) by `deg`.
    pub fn rotated(&self, deg: f64) -> LocalPoint {
        let (s, c) = deg.to_radians().sin_cos();
        LocalPoint {
            east_m: self.east_m * c + self.north_m * s,
            north_m: -self.east_m * s + self.north_m * c,
            up_m: self.up_m,
        }
    }
}

fn e2() -> f64 {
    WGS84_F * (2.0 - WGS84_F)
}

/// Meridional radius of curvature at `lat_deg`.
pub fn meridional_radius(lat_deg: f64) -> f64 {
    let s = lat_deg.to_radians().sin();
    WGS84_A * (1.0 - e2()) / (1.0 - e2() * s * s).powf(1.5)
}

/// Prime-vertical radius of curvature at `lat_deg`.
pub fn prime_vertical_radius(lat_deg: f64) -> f64 {
    let s = lat_deg.to_radians().sin();
    WGS84_A / (1.0 - e2() * s * s).sqrt()
}

/// Longitude difference folded into [-180, 180).
fn wrap_dlon(d: f64) -> f64 {
    (d + 180.0).rem_euclid(360.0) - 180.0
}

fn wrap_lon(lon: f64) -> f64 {
    let w = wrap_dlon(lon);
    if w == -180.0 && lon > 0.0 {
        180.0
    } else {
        w
    }
}

pub fn to_local(reference: &GeoPoint, p: &GeoPoint) -> Result<LocalPoint, GeoError> {
    let dlat = p.lat_deg - reference.lat_deg;
    let dlon = wrap_dlon(p.lon_deg - reference.lon_deg);
    if dlat.abs() >= VALIDITY_DEG || dlon.abs() >= VALIDITY_DEG {
        return Err(GeoError::OutOfValidity { dlat, dlon });
    }
    let m = meridional_radius(reference.lat_deg);
    let n = prime_vertical_radius(reference.lat_deg);
    Ok(LocalPoint {
        east_m: dlon.to_radians() * n * reference.lat_deg.to_radians().cos(),
        north_m: dlat.to_radians() * m,
        up_m: p.elev_m - reference.elev_m,
    })
}

/// Inverse of [`to_local`]. Meant for offsets up to ~100 km.
pub fn from_local(reference: &GeoPoint, lp: &LocalPoint) -> GeoPoint {
    let m = meridional_radius(reference.lat_deg);
    let n = prime_vertical_radius(reference.lat_deg);
    let dlat = (lp.north_m / m).to_degrees();
    let dlon = (lp.east_m / (n * reference.lat_deg.to_radians().cos())).to_degrees();
    GeoPoint {
        lat_deg: reference.lat_deg + dlat,
        lon_deg: wrap_lon(reference.lon_deg + dlon),
        elev_m: reference.elev_m + lp.up_m,
    }
}

/// Compass bearing from `from` to `to` in [0, 360).
pub fn bearing_deg(from: &LocalPoint, to: &LocalPoint) -> Result<f64, GeoError> {
    let de = to.east_m - from.east_m;
    let dn = to.north_m - from.north_m;
    if de == 0.0 && dn == 0.0 {
        return Err(GeoError::DegenerateSegment);
    }
    Ok(normalize_deg(de.atan2(dn).to_degrees()))
}

/// Folds an angle into [0, 360).
pub fn normalize_deg(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Smallest absolute difference between two angles, in [0, 180].
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = normalize_deg(a - b);
    d.min(360.0 - d)
}
