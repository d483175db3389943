//! Environment models: normal gravity, standard atmosphere, geomagnetic
//! field and composite wind, evaluated at the vehicle pose.

mod wind;

pub use wind::{wind_at, GustConfig, ShearConfig, TurbulenceConfig, WindConfig, WindModel, MIN_TURBULENCE_AIRSPEED};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{self, FrameError, GeoPosition, Vec3, WGS84_A, WGS84_E2, WGS84_F};
use crate::rigidbody::VehicleState;

/// Normal gravity at the equator, m/s^2.
const GAMMA_E: f64 = 9.780_325_335_9;
/// Somigliana constant.
const SOMIGLIANA_K: f64 = 0.001_931_852_652_41;
/// omega^2 a^2 b / GM for WGS84.
const WGS84_M: f64 = 0.003_449_786_506_84;

/// Sea-level standard temperature, K.
pub const ISA_T0: f64 = 288.15;
/// Sea-level standard pressure, Pa.
pub const ISA_P0: f64 = 101_325.0;
/// Sea-level standard density, kg/m^3.
pub const ISA_RHO0: f64 = 1.225;
/// Troposphere lapse rate, K/m.
pub const ISA_LAPSE: f64 = 0.0065;
/// Specific gas constant of dry air, J/(kg K).
pub const R_AIR: f64 = 287.052_87;
/// Standard gravity, m/s^2.
pub const G0: f64 = 9.806_65;

const ISA_MIN_ALT: f64 = -1000.0;
const ISA_MAX_ALT: f64 = 11_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("altitude {0} m outside the modelled troposphere [-1000, 11000]")]
    AltitudeOutOfRange(f64),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Normal gravity magnitude (down-positive) on the WGS84 ellipsoid with a
/// second-order free-air correction.
pub fn gravity_at(p: &GeoPosition) -> f64 {
    let s2 = p.latitude.to_radians().sin().powi(2);
    let surface = GAMMA_E * (1.0 + SOMIGLIANA_K * s2) / (1.0 - WGS84_E2 * s2).sqrt();
    let h = p.altitude;
    surface
        * (1.0 - 2.0 / WGS84_A * (1.0 + WGS84_F + WGS84_M - 2.0 * WGS84_F * s2) * h + 3.0 * h * h / (WGS84_A * WGS84_A))
}

/// Standard-atmosphere state at one altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atmosphere {
    /// K
    pub temperature: f64,
    /// Pa
    pub pressure: f64,
    /// kg/m^3
    pub density: f64,
}

/// International Standard Atmosphere, troposphere segment.
pub fn isa_at(h: f64) -> Result<Atmosphere, EnvError> {
    if !(ISA_MIN_ALT..=ISA_MAX_ALT).contains(&h) {
        return Err(EnvError::AltitudeOutOfRange(h));
    }
    if h == 0.0 {
        return Ok(Atmosphere {
            temperature: ISA_T0,
            pressure: ISA_P0,
            density: ISA_RHO0,
        });
    }
    let temperature = ISA_T0 - ISA_LAPSE * h;
    let ratio = temperature / ISA_T0;
    let pressure = ISA_P0 * ratio.powf(G0 / (ISA_LAPSE * R_AIR));
    let density = ISA_RHO0 * ratio.powf(G0 / (ISA_LAPSE * R_AIR) - 1.0);
    Ok(Atmosphere {
        temperature,
        pressure,
        density,
    })
}

/// Altitude at which the standard atmosphere has pressure `p` (Pa).
pub fn isa_altitude(pressure: f64) -> f64 {
    ISA_T0 / ISA_LAPSE * (1.0 - (pressure / ISA_P0).powf(ISA_LAPSE * R_AIR / G0))
}

/// Centred tilted-dipole geomagnetic field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleField {
    /// First-degree Gauss coefficients g10, g11, h11 in nT.
    pub g10: f64,
    pub g11: f64,
    pub h11: f64,
}

impl Default for DipoleField {
    /// Epoch 2020.0 dipole terms.
    fn default() -> Self {
        Self {
            g10: -29_404.8,
            g11: -1_450.9,
            h11: 4_652.5,
        }
    }
}

/// Geomagnetic reference radius, m.
const MAG_REFERENCE_RADIUS: f64 = 6_371_200.0;

impl DipoleField {
    /// Equatorial surface field strength, uT.
    pub fn equatorial_strength(&self) -> f64 {
        (self.g10 * self.g10 + self.g11 * self.g11 + self.h11 * self.h11).sqrt() * 1e-3
    }

    /// Unit vector (earth-centred, earth-fixed) toward the geomagnetic north pole.
    pub fn north_pole_axis(&self) -> Vec3 {
        -Vec3::new(self.g11, self.h11, self.g10).normalize()
    }

    /// Geodetic latitude/longitude of the geomagnetic north pole, deg.
    pub fn north_pole(&self) -> (f64, f64) {
        let n = self.north_pole_axis();
        (n.z.asin().to_degrees(), n.y.atan2(n.x).to_degrees())
    }

    /// Field vector in the local NED frame, uT.
    pub fn field_ned(&self, p: &GeoPosition) -> Vec3 {
        let (lat, lon) = (p.latitude.to_radians(), p.longitude.to_radians());
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        let up = Vec3::new(cl * co, cl * so, sl);
        let axis = self.north_pole_axis();
        let r = MAG_REFERENCE_RADIUS + p.altitude;
        let scale = self.equatorial_strength() * (MAG_REFERENCE_RADIUS / r).powi(3);
        let b = (axis - up * (3.0 * axis.dot(&up))) * scale;
        let north = Vec3::new(-sl * co, -sl * so, cl);
        let east = Vec3::new(-so, co, 0.0);
        Vec3::new(b.dot(&north), b.dot(&east), -b.dot(&up))
    }
}

/// Geomagnetic field in NED, uT, from the default dipole.
pub fn mag_at(p: &GeoPosition) -> Vec3 {
    DipoleField::default().field_ned(p)
}

/// Environment quantities at the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSample {
    /// Gravity magnitude, down-positive, m/s^2.
    pub g: f64,
    /// Air density, kg/m^3.
    pub rho: f64,
    /// Air temperature, K.
    pub temperature: f64,
    /// Static pressure, Pa.
    pub pressure: f64,
    /// Magnetic field, earth frame, uT.
    pub mag_e: Vec3,
    /// Wind velocity, earth frame, m/s.
    pub wind_e: Vec3,
}

impl EnvSample {
    /// Sea-level standard values, no wind, a horizontal northward field.
    pub fn standard() -> Self {
        Self {
            g: G0,
            rho: ISA_RHO0,
            temperature: ISA_T0,
            pressure: ISA_P0,
            mag_e: Vec3::new(30.0, 0.0, 0.0),
            wind_e: Vec3::zeros(),
        }
    }

    /// Gravity vector in the earth frame.
    pub fn gravity_e(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.g)
    }
}

/// Environment configuration as it appears in vehicle/scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentConfig {
    /// Geodetic position of the local NED origin.
    pub origin: GeoPosition,
    pub wind: WindConfig,
    pub magnetic: DipoleField,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            origin: GeoPosition {
                latitude: 40.0,
                longitude: 116.3,
                altitude: 50.0,
            },
            wind: WindConfig::default(),
            magnetic: DipoleField::default(),
        }
    }
}

/// Per-vehicle environment. Owns the stateful wind model.
#[derive(Debug, Clone)]
pub struct Environment {
    origin: GeoPosition,
    magnetic: DipoleField,
    wind: WindModel,
}

impl Environment {
    /// `ground_height` is the terrain plane height above the NED origin, used
    /// as the zero of the wind-shear profile.
    pub fn new(cfg: &EnvironmentConfig, ground_height: f64) -> Result<Self, EnvError> {
        // ned_to_lla applies the origin checks
        frames::ned_to_lla(&cfg.origin, &Vec3::zeros())?;
        Ok(Self {
            origin: cfg.origin,
            magnetic: cfg.magnetic,
            wind: WindModel::new(cfg.wind.clone(), ground_height),
        })
    }

    pub fn origin(&self) -> &GeoPosition {
        &self.origin
    }

    pub fn wind_model(&self) -> &WindModel {
        &self.wind
    }

    /// Replaces the gust component (fault injection); `None` restores the
    /// configured gust.
    pub fn override_gust(&mut self, gust: Option<GustConfig>) {
        self.wind.override_gust(gust);
    }

    /// Samples the environment at `state` for the tick starting at `t`.
    pub fn sample(&mut self, state: &VehicleState, t: f64, dt: f64) -> Result<EnvSample, EnvError> {
        let geo = frames::ned_to_lla(&self.origin, &state.p_e)?;
        let atm = isa_at(geo.altitude)?;
        let mean_wind = self.wind.mean_wind(&state.p_e, t);
        let airspeed = (state.v_e - mean_wind).norm();
        let wind_e = self.wind.sample(&state.p_e, airspeed, t, dt);
        Ok(EnvSample {
            g: gravity_at(&geo),
            rho: atm.density,
            temperature: atm.temperature,
            pressure: atm.pressure,
            mag_e: self.magnetic.field_ned(&geo),
            wind_e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(lat: f64, lon: f64, h: f64) -> GeoPosition {
        GeoPosition::new(lat, lon, h).unwrap()
    }

    #[test]
    fn gravity_equator_and_pole() {
        assert!((gravity_at(&geo(0.0, 0.0, 0.0)) - 9.78033).abs() < 1e-4);
        assert!((gravity_at(&geo(90.0, 0.0, 0.0)) - 9.83219).abs() < 1e-4);
        assert!(gravity_at(&geo(45.0, 0.0, 1000.0)) < gravity_at(&geo(45.0, 0.0, 0.0)));
    }

    #[test]
    fn isa_reference_points() {
        let a0 = isa_at(0.0).unwrap();
        assert_eq!(a0.temperature, 288.15);
        assert_eq!(a0.density, 1.225);
        assert_eq!(a0.pressure, 101_325.0);
        assert!((isa_at(1000.0).unwrap().temperature - 281.65).abs() < 1e-12);
        assert!((isa_at(5000.0).unwrap().density - 0.7364).abs() < 1e-3);
        assert!(isa_at(12_000.0).is_err());
        assert!(isa_at(-1500.0).is_err());
    }

    #[test]
    fn isa_density_continuous_at_zero() {
        let a = isa_at(1e-9).unwrap();
        assert!((a.density - ISA_RHO0).abs() < 1e-6);
        assert!((a.pressure - ISA_P0).abs() < 1e-3);
    }

    #[test]
    fn isa_altitude_inverts_pressure() {
        for h in [-500.0, 0.0, 123.4, 4000.0] {
            let p = isa_at(h).unwrap().pressure;
            assert!((isa_altitude(p) - h).abs() < 1e-6);
        }
    }

    #[test]
    fn dipole_equator_is_horizontal_and_pole_vertical() {
        let d = DipoleField::default();
        let (plat, plon) = d.north_pole();
        assert!((plat - 80.6).abs() < 0.1 && (plon + 72.7).abs() < 0.1);
        let b0 = d.equatorial_strength();

        let pole = d.field_ned(&geo(plat, plon, 0.0));
        assert!(pole.xy().norm() < 1e-6 * pole.norm());
        assert!(pole.z > 0.0);
        assert!((pole.norm() / b0 - 2.0).abs() < 1e-9);

        // antipode of the pole axis rotated 90 deg lies on the geomagnetic equator
        let eq_lat = -(90.0 - plat);
        let eq = d.field_ned(&geo(eq_lat, plon, 0.0));
        assert!(eq.z.abs() < 1e-9 * eq.norm());
        assert!((eq.norm() - b0).abs() < 1e-9);
    }

    #[test]
    fn dipole_magnitude_within_band() {
        for lat in (-89..=89).step_by(7) {
            for lon in (-179..=180).step_by(13) {
                let b = mag_at(&geo(lat as f64, lon as f64, 0.0)).norm();
                assert!((20.0..=70.0).contains(&b), "{lat} {lon} {b}");
            }
        }
    }

    #[test]
    fn environment_samples_standard_values_at_origin() {
        let cfg = EnvironmentConfig {
            origin: geo(0.0, 0.0, 0.0),
            ..Default::default()
        };
        let mut env = Environment::new(&cfg, 0.0).unwrap();
        let s = env.sample(&VehicleState::default(), 0.0, 1e-3).unwrap();
        assert_eq!(s.rho, ISA_RHO0);
        assert_eq!(s.wind_e, Vec3::zeros());
        assert!((s.g - 9.78033).abs() < 1e-4);
    }
}
