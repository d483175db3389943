//! Reference frames and geodesy.
//!
//! Earth frame is North-East-Down (NED), body frame is Head-Right-Down.
//! Attitude is carried as a unit quaternion; the body-to-earth matrix is
//! derived on demand.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Three-component vector. Units depend on context (m, m/s, rad/s, N, ...).
pub type Vec3 = Vector3<f64>;

/// WGS84 semi-major axis, m.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS84 first eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Largest local offset accepted by the flat-earth conversion, m.
pub const FLAT_EARTH_LIMIT: f64 = 50_000.0;

/// Closest approach to a pole for the flat-earth conversion, deg.
const POLE_EXCLUSION_DEG: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("latitude {0} deg outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} deg outside (-180, 180]")]
    Longitude(f64),
    #[error("non-finite geodetic coordinate")]
    NonFinite,
    #[error("origin latitude {0} deg too close to a pole for local conversion")]
    NearPole(f64),
    #[error("local offset {0:.1} m exceeds the flat-earth limit")]
    OffsetTooLarge(f64),
    #[error("quaternion norm {0} is not usable as a rotation")]
    DegenerateQuaternion(f64),
}

/// Body-to-earth rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from raw quaternion components, normalizing them.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self, FrameError> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(FrameError::DegenerateQuaternion(n));
        }
        Ok(Self(UnitQuaternion::new_normalize(q)))
    }

    /// Yaw-pitch-roll (Z-Y-X) Euler angles in radians.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self(UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match nalgebra::Unit::try_new(axis, 1e-15) {
            Some(a) => Self(UnitQuaternion::from_axis_angle(&a, angle)),
            None => Self::identity(),
        }
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// `(w, x, y, z)` components.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `(roll, pitch, yaw)` in radians.
    pub fn euler(&self) -> (f64, f64, f64) {
        self.0.euler_angles()
    }

    /// The body-to-earth matrix.
    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    /// Expresses a body-frame vector in the earth frame.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    /// Expresses an earth-frame vector in the body frame.
    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.0.inverse_transform_vector(v)
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    pub fn renormalize(&mut self) {
        self.0.renormalize();
    }

    /// Angle of the rotation taking `self` onto `other`, rad.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.0.angle_to(&other.0)
    }

    /// Angle between body down axis and earth down axis, rad.
    pub fn tilt(&self) -> f64 {
        let down = self.rotate(&Vec3::z());
        down.z.clamp(-1.0, 1.0).acos()
    }

    pub fn is_finite(&self) -> bool {
        self.wxyz().iter().all(|c| c.is_finite())
    }
}

/// Free-function form of [`Rotation::rotate`].
pub fn rotate(r: &Rotation, v: &Vec3) -> Vec3 {
    r.rotate(v)
}

/// Cross-product matrix: `skew(w) * v == w.cross(v)`.
pub fn skew(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Latitude/longitude in degrees, altitude in metres (positive up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl GeoPosition {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Result<Self, FrameError> {
        let p = Self {
            latitude,
            longitude,
            altitude,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if !(self.latitude.is_finite() && self.longitude.is_finite() && self.altitude.is_finite()) {
            return Err(FrameError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(FrameError::Latitude(self.latitude));
        }
        if !(self.longitude > -180.0 && self.longitude <= 180.0) {
            return Err(FrameError::Longitude(self.longitude));
        }
        Ok(())
    }
}

/// Meridian and prime-vertical radii of curvature at geodetic latitude `lat` (rad).
pub fn radii_of_curvature(lat: f64) -> (f64, f64) {
    let s = lat.sin();
    let d = 1.0 - WGS84_E2 * s * s;
    let prime_vertical = WGS84_A / d.sqrt();
    let meridian = WGS84_A * (1.0 - WGS84_E2) / (d * d.sqrt());
    (meridian, prime_vertical)
}

fn check_origin(origin: &GeoPosition) -> Result<(), FrameError> {
    origin.validate()?;
    if origin.latitude.abs() > 90.0 - POLE_EXCLUSION_DEG {
        return Err(FrameError::NearPole(origin.latitude));
    }
    Ok(())
}

fn wrap_longitude(lon: f64) -> f64 {
    let mut l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l <= -180.0 {
        l += 360.0;
    }
    l
}

/// Local NED offset from `origin` to geodetic position.
///
/// Flat-earth approximation using the WGS84 radii of curvature at the
/// origin. Offsets beyond [`FLAT_EARTH_LIMIT`] are refused.
pub fn ned_to_lla(origin: &GeoPosition, p_ned: &Vec3) -> Result<GeoPosition, FrameError> {
    check_origin(origin)?;
    let dist = p_ned.norm();
    if !dist.is_finite() {
        return Err(FrameError::NonFinite);
    }
    if dist > FLAT_EARTH_LIMIT {
        return Err(FrameError::OffsetTooLarge(dist));
    }
    let lat0 = origin.latitude.to_radians();
    let (rm, rn) = radii_of_curvature(lat0);
    let dlat = p_ned.x / rm;
    let dlon = p_ned.y / (rn * lat0.cos());
    Ok(GeoPosition {
        latitude: (origin.latitude + dlat.to_degrees()).clamp(-90.0, 90.0),
        longitude: wrap_longitude(origin.longitude + dlon.to_degrees()),
        altitude: origin.altitude - p_ned.z,
    })
}

/// Inverse of [`ned_to_lla`] for positions near `origin`.
pub fn lla_to_ned(origin: &GeoPosition, p: &GeoPosition) -> Result<Vec3, FrameError> {
    check_origin(origin)?;
    p.validate()?;
    let lat0 = origin.latitude.to_radians();
    let (rm, rn) = radii_of_curvature(lat0);
    let dlon = wrap_longitude(p.longitude - origin.longitude);
    Ok(Vec3::new(
        (p.latitude - origin.latitude).to_radians() * rm,
        dlon.to_radians() * rn * lat0.cos(),
        origin.altitude - p.altitude,
    ))
}
