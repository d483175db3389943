//! Sensor data and product models.
//!
//! Ideal quantities are derived from the true vehicle state and environment,
//! then corrupted channel by channel:
//!
//! ```text
//! x'  = x + b + n            n ~ N(0, sigma_a_eff^2),  b_{k+1} = b_k + sigma_b sqrt(dt) eta
//! x'' = T_e K_e (x' + l)     l = lever-arm acceleration (accelerometer only)
//! ```
//!
//! with `sigma_a_eff = sigma_a + vibration_gain * mean rotor speed`.

use std::collections::VecDeque;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::EnvSample;
use crate::frames::{self, FrameError, GeoPosition, Rotation, Vec3};
use crate::rigidbody::VehicleState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("invalid error model for {channel}: {reason}")]
    InvalidModel {
        channel: &'static str,
        reason: &'static str,
    },
    #[error("sensor rate {0} Hz must be positive")]
    Rate(f64),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Error model of a three-axis channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProductErrorModel {
    /// White-noise standard deviation per axis (channel units).
    pub noise_std: Vec3,
    /// Bias random-walk intensity per axis (channel units / sqrt(s)).
    pub bias_walk: Vec3,
    /// Bias at power-on (channel units).
    pub initial_bias: Vec3,
    /// Installation misalignment as a rotation vector, rad.
    pub misalignment: Vec3,
    /// Diagonal scale factors.
    pub scale: Vec3,
    /// Sensor position relative to the centre of mass, m (accelerometer only).
    pub position_offset: Vec3,
    /// Added noise std per rad/s of mean rotor speed.
    pub vibration_gain: f64,
}

impl Default for ProductErrorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl ProductErrorModel {
    /// Transparent model: output equals input exactly.
    pub fn ideal() -> Self {
        Self {
            noise_std: Vec3::zeros(),
            bias_walk: Vec3::zeros(),
            initial_bias: Vec3::zeros(),
            misalignment: Vec3::zeros(),
            scale: Vec3::repeat(1.0),
            position_offset: Vec3::zeros(),
            vibration_gain: 0.0,
        }
    }

    /// Isotropic white noise only.
    pub fn white(std: f64) -> Self {
        Self {
            noise_std: Vec3::repeat(std),
            ..Self::ideal()
        }
    }

    pub fn is_ideal(&self) -> bool {
        *self == Self::ideal()
    }

    pub fn validate(&self, channel: &'static str) -> Result<(), SensorError> {
        let bad = |reason| Err(SensorError::InvalidModel { channel, reason });
        if self.noise_std.iter().chain(self.bias_walk.iter()).any(|s| !(*s >= 0.0)) {
            return bad("noise and bias-walk std must be non-negative");
        }
        if self.scale.iter().any(|k| !(0.9..=1.1).contains(k)) {
            return bad("scale factors must lie in [0.9, 1.1]");
        }
        if !(self.misalignment.norm() <= 5f64.to_radians()) {
            return bad("misalignment must be within 5 deg");
        }
        if !(self.vibration_gain >= 0.0) {
            return bad("vibration gain must be non-negative");
        }
        if self
            .initial_bias
            .iter()
            .chain(self.position_offset.iter())
            .any(|v| !v.is_finite())
        {
            return bad("non-finite bias or offset");
        }
        Ok(())
    }

    fn calibration_matrix(&self) -> Matrix3<f64> {
        Rotation::from_axis_angle(self.misalignment, self.misalignment.norm()).matrix()
            * Matrix3::from_diagonal(&self.scale)
    }
}

/// Error model of a scalar channel (scalar forms of the three-axis model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalarErrorModel {
    pub noise_std: f64,
    pub bias_walk: f64,
    pub initial_bias: f64,
    pub scale: f64,
    pub vibration_gain: f64,
}

impl Default for ScalarErrorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl ScalarErrorModel {
    pub fn ideal() -> Self {
        Self {
            noise_std: 0.0,
            bias_walk: 0.0,
            initial_bias: 0.0,
            scale: 1.0,
            vibration_gain: 0.0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        *self == Self::ideal()
    }

    pub fn validate(&self, channel: &'static str) -> Result<(), SensorError> {
        let bad = |reason| Err(SensorError::InvalidModel { channel, reason });
        if !(self.noise_std >= 0.0 && self.bias_walk >= 0.0 && self.vibration_gain >= 0.0) {
            return bad("std values must be non-negative");
        }
        if !(0.9..=1.1).contains(&self.scale) {
            return bad("scale must lie in [0.9, 1.1]");
        }
        if !self.initial_bias.is_finite() {
            return bad("non-finite bias");
        }
        Ok(())
    }
}

/// Specific force sensed at the centre of mass, body frame, m/s^2.
pub fn ideal_accel(state: &VehicleState, env: &EnvSample) -> Vec3 {
    state.inertial_accel_b() - state.att.inverse_rotate(&env.gravity_e())
}

/// Extra acceleration seen by a sensor displaced by `offset` from the
/// centre of mass.
pub fn lever_arm_accel(state: &VehicleState, offset: &Vec3) -> Vec3 {
    state.alpha_b.cross(offset) + state.w_b.cross(&state.w_b.cross(offset))
}

pub fn ideal_gyro(state: &VehicleState) -> Vec3 {
    state.w_b
}

/// Magnetic field in the body frame, uT.
pub fn ideal_mag(state: &VehicleState, env: &EnvSample) -> Vec3 {
    state.att.inverse_rotate(&env.mag_e)
}

/// Static pressure at the vehicle, Pa.
pub fn ideal_baro(env: &EnvSample) -> f64 {
    env.pressure
}

/// Position and NED velocity as a GPS receiver reports them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub position: GeoPosition,
    pub velocity_ned: Vec3,
}

pub fn ideal_gps(state: &VehicleState, origin: &GeoPosition) -> Result<GpsFix, FrameError> {
    Ok(GpsFix {
        position: frames::ned_to_lla(origin, &state.p_e)?,
        velocity_ned: state.v_e,
    })
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

/// Stateful three-axis corruption channel.
#[derive(Debug, Clone)]
pub struct ErrorChannel {
    model: ProductErrorModel,
    calibration: Matrix3<f64>,
    ideal: bool,
    bias: Vec3,
    rng: ChaCha8Rng,
}

impl ErrorChannel {
    pub fn new(model: ProductErrorModel, seed: u64) -> Self {
        Self {
            calibration: model.calibration_matrix(),
            ideal: model.is_ideal(),
            bias: model.initial_bias,
            rng: ChaCha8Rng::seed_from_u64(seed),
            model,
        }
    }

    pub fn model(&self) -> &ProductErrorModel {
        &self.model
    }

    pub fn bias(&self) -> Vec3 {
        self.bias
    }

    /// Corrupts one sample.
    ///
    /// `lever` is the installation lever-arm term added before calibration;
    /// `noise_scale` multiplies the white-noise std (1.0 nominal).
    pub fn corrupt(&mut self, ideal: &Vec3, lever: &Vec3, rotor_mean_speed: f64, noise_scale: f64, dt: f64) -> Vec3 {
        if self.ideal {
            return *ideal;
        }
        let walk = normal3(&mut self.rng);
        self.bias += self.model.bias_walk.component_mul(&walk) * dt.sqrt();
        let std = (self.model.noise_std + Vec3::repeat(self.model.vibration_gain * rotor_mean_speed)) * noise_scale;
        let noise = std.component_mul(&normal3(&mut self.rng));
        self.calibration * (ideal + self.bias + noise + lever)
    }
}

/// Stateful scalar corruption channel.
#[derive(Debug, Clone)]
pub struct ScalarChannel {
    model: ScalarErrorModel,
    ideal: bool,
    bias: f64,
    rng: ChaCha8Rng,
}

impl ScalarChannel {
    pub fn new(model: ScalarErrorModel, seed: u64) -> Self {
        Self {
            ideal: model.is_ideal(),
            bias: model.initial_bias,
            rng: ChaCha8Rng::seed_from_u64(seed),
            model,
        }
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn corrupt(&mut self, ideal: f64, rotor_mean_speed: f64, noise_scale: f64, dt: f64) -> f64 {
        if self.ideal {
            return ideal;
        }
        let walk: f64 = StandardNormal.sample(&mut self.rng);
        self.bias += self.model.bias_walk * dt.sqrt() * walk;
        let std = (self.model.noise_std + self.model.vibration_gain * rotor_mean_speed) * noise_scale;
        let n: f64 = StandardNormal.sample(&mut self.rng);
        self.model.scale * (ideal + self.bias + std * n)
    }
}

/// GPS receiver error model: white noise on NED position and velocity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GpsErrorModel {
    /// m
    pub position_std: Vec3,
    /// m/s
    pub velocity_std: Vec3,
}

/// Sampling rates, Hz, and GPS latency, s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorRates {
    pub imu_hz: f64,
    pub mag_hz: f64,
    pub baro_hz: f64,
    pub gps_hz: f64,
    pub gps_latency: f64,
}

impl Default for SensorRates {
    fn default() -> Self {
        Self {
            imu_hz: 1000.0,
            mag_hz: 100.0,
            baro_hz: 50.0,
            gps_hz: 10.0,
            gps_latency: 0.1,
        }
    }
}

/// Complete sensor configuration of a vehicle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub rates: SensorRates,
    pub accel: ProductErrorModel,
    pub gyro: ProductErrorModel,
    pub mag: ProductErrorModel,
    pub baro: ScalarErrorModel,
    pub gps: GpsErrorModel,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), SensorError> {
        self.accel.validate("accel")?;
        self.gyro.validate("gyro")?;
        self.mag.validate("mag")?;
        self.baro.validate("baro")?;
        let r = &self.rates;
        for hz in [r.imu_hz, r.mag_hz, r.baro_hz, r.gps_hz] {
            if !(hz > 0.0 && hz.is_finite()) {
                return Err(SensorError::Rate(hz));
            }
        }
        if !(r.gps_latency >= 0.0) {
            return Err(SensorError::InvalidModel {
                channel: "gps",
                reason: "latency must be non-negative",
            });
        }
        if self
            .gps
            .position_std
            .iter()
            .chain(self.gps.velocity_std.iter())
            .any(|s| !(*s >= 0.0))
        {
            return Err(SensorError::InvalidModel {
                channel: "gps",
                reason: "noise std must be non-negative",
            });
        }
        Ok(())
    }
}

/// Sensor channels a fault can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorChannel {
    Accel,
    Gyro,
    Mag,
    Baro,
    Gps,
}

impl SensorChannel {
    pub const ALL: [SensorChannel; 5] = [Self::Accel, Self::Gyro, Self::Mag, Self::Baro, Self::Gps];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// What a lost channel outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossPolicy {
    /// Repeat the last value produced before the loss.
    HoldLast,
    /// Output zeros (GPS: stop producing fixes).
    Zero,
}

/// Per-channel fault modifiers applied while sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelFault {
    pub loss: Option<LossPolicy>,
    /// Added after calibration. Scalar channels use `x`.
    pub bias_offset: Option<Vec3>,
    pub noise_scale: f64,
}

impl Default for ChannelFault {
    fn default() -> Self {
        Self {
            loss: None,
            bias_offset: None,
            noise_scale: 1.0,
        }
    }
}

/// Latest corrupted outputs and which ones were refreshed on this tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorReadings {
    /// m/s^2, body frame
    pub accel: Vec3,
    /// rad/s, body frame
    pub gyro: Vec3,
    /// uT, body frame
    pub mag: Vec3,
    /// Pa
    pub pressure: f64,
    /// K
    pub temperature: f64,
    /// Fix released this tick (after latency), if any.
    pub gps: Option<GpsFix>,
    pub imu_fresh: bool,
    pub mag_fresh: bool,
    pub baro_fresh: bool,
}

fn divider(physics_hz: f64, hz: f64) -> u64 {
    ((physics_hz / hz).round() as u64).max(1)
}

/// All sensor channels of one vehicle.
#[derive(Debug, Clone)]
pub struct SensorSuite {
    cfg: SensorConfig,
    origin: GeoPosition,
    dt: f64,
    accel: ErrorChannel,
    gyro: ErrorChannel,
    mag: ErrorChannel,
    baro: ScalarChannel,
    gps_rng: ChaCha8Rng,
    gps_queue: VecDeque<(u64, GpsFix)>,
    last_gps: Option<GpsFix>,
    dividers: [u64; 4],
    gps_delay_ticks: u64,
    readings: SensorReadings,
}

impl SensorSuite {
    /// `physics_hz` is the tick rate; channel rates are rounded to whole
    /// tick dividers and the GPS latency to whole ticks.
    pub fn new(cfg: SensorConfig, origin: GeoPosition, physics_hz: f64, seed: u64) -> Result<Self, SensorError> {
        cfg.validate()?;
        frames::ned_to_lla(&origin, &Vec3::zeros())?;
        let sub = |k: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
        let r = &cfg.rates;
        Ok(Self {
            origin,
            dt: 1.0 / physics_hz,
            accel: ErrorChannel::new(cfg.accel.clone(), sub(1)),
            gyro: ErrorChannel::new(cfg.gyro.clone(), sub(2)),
            mag: ErrorChannel::new(cfg.mag.clone(), sub(3)),
            baro: ScalarChannel::new(cfg.baro.clone(), sub(4)),
            gps_rng: ChaCha8Rng::seed_from_u64(sub(5)),
            gps_queue: VecDeque::new(),
            last_gps: None,
            dividers: [
                divider(physics_hz, r.imu_hz),
                divider(physics_hz, r.mag_hz),
                divider(physics_hz, r.baro_hz),
                divider(physics_hz, r.gps_hz),
            ],
            gps_delay_ticks: (r.gps_latency * physics_hz).round() as u64,
            readings: SensorReadings::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    pub fn readings(&self) -> &SensorReadings {
        &self.readings
    }

    /// Samples every channel due on `tick`.
    ///
    /// `faults` is indexed by [`SensorChannel::index`].
    pub fn sample(
        &mut self,
        tick: u64,
        state: &VehicleState,
        env: &EnvSample,
        rotor_mean_speed: f64,
        faults: &[ChannelFault; 5],
    ) -> Result<&SensorReadings, SensorError> {
        let due = |d: u64| tick.is_multiple_of(d);
        let r = &mut self.readings;
        r.imu_fresh = false;
        r.mag_fresh = false;
        r.baro_fresh = false;
        r.gps = None;

        if due(self.dividers[0]) {
            let dt = self.dt * self.dividers[0] as f64;
            let lever = if self.cfg.accel.position_offset == Vec3::zeros() {
                Vec3::zeros()
            } else {
                lever_arm_accel(state, &self.cfg.accel.position_offset)
            };
            let f = &faults[SensorChannel::Accel.index()];
            let a = self
                .accel
                .corrupt(&ideal_accel(state, env), &lever, rotor_mean_speed, f.noise_scale, dt);
            r.accel = apply_vec_fault(a, r.accel, f);
            let f = &faults[SensorChannel::Gyro.index()];
            let g = self
                .gyro
                .corrupt(&ideal_gyro(state), &Vec3::zeros(), rotor_mean_speed, f.noise_scale, dt);
            r.gyro = apply_vec_fault(g, r.gyro, f);
            r.temperature = env.temperature;
            r.imu_fresh = true;
        }
        if due(self.dividers[1]) {
            let dt = self.dt * self.dividers[1] as f64;
            let f = &faults[SensorChannel::Mag.index()];
            let m = self.mag.corrupt(
                &ideal_mag(state, env),
                &Vec3::zeros(),
                rotor_mean_speed,
                f.noise_scale,
                dt,
            );
            r.mag = apply_vec_fault(m, r.mag, f);
            r.mag_fresh = true;
        }
        if due(self.dividers[2]) {
            let dt = self.dt * self.dividers[2] as f64;
            let f = &faults[SensorChannel::Baro.index()];
            let mut p = self.baro.corrupt(ideal_baro(env), rotor_mean_speed, f.noise_scale, dt);
            if let Some(off) = f.bias_offset {
                p += off.x;
            }
            r.pressure = match f.loss {
                None => p,
                Some(LossPolicy::HoldLast) => r.pressure,
                Some(LossPolicy::Zero) => 0.0,
            };
            r.baro_fresh = true;
        }
        if due(self.dividers[3]) {
            let f = &faults[SensorChannel::Gps.index()];
            let ideal = ideal_gps(state, &self.origin)?;
            let fix = self.corrupt_gps(ideal, state, f)?;
            self.gps_queue.push_back((tick + self.gps_delay_ticks, fix));
        }
        // release everything whose latency has elapsed; policy applies at release
        while let Some((due_tick, fix)) = self.gps_queue.front().copied() {
            if due_tick > tick {
                break;
            }
            self.gps_queue.pop_front();
            let f = &faults[SensorChannel::Gps.index()];
            match f.loss {
                None => {
                    self.last_gps = Some(fix);
                    self.readings.gps = Some(fix);
                }
                Some(LossPolicy::HoldLast) => self.readings.gps = self.last_gps,
                Some(LossPolicy::Zero) => self.readings.gps = None,
            }
        }
        Ok(&self.readings)
    }

    fn corrupt_gps(&mut self, ideal: GpsFix, state: &VehicleState, f: &ChannelFault) -> Result<GpsFix, SensorError> {
        let m = &self.cfg.gps;
        let mut p = state.p_e;
        let mut v = ideal.velocity_ned;
        if m.position_std != Vec3::zeros() || m.velocity_std != Vec3::zeros() {
            p += (m.position_std * f.noise_scale).component_mul(&normal3(&mut self.gps_rng));
            v += (m.velocity_std * f.noise_scale).component_mul(&normal3(&mut self.gps_rng));
        }
        if let Some(off) = f.bias_offset {
            p += off;
        }
        if p == state.p_e {
            return Ok(GpsFix {
                position: ideal.position,
                velocity_ned: v,
            });
        }
        Ok(GpsFix {
            position: frames::ned_to_lla(&self.origin, &p)?,
            velocity_ned: v,
        })
    }
}

fn apply_vec_fault(value: Vec3, last: Vec3, f: &ChannelFault) -> Vec3 {
    let v = match f.bias_offset {
        Some(off) => value + off,
        None => value,
    };
    match f.loss {
        None => v,
        Some(LossPolicy::HoldLast) => last,
        Some(LossPolicy::Zero) => Vec3::zeros(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level_hover() -> VehicleState {
        VehicleState::at_rest(Vec3::new(0.0, 0.0, -10.0), Rotation::identity())
    }

    #[test]
    fn hover_specific_force_points_up() {
        let env = EnvSample::standard();
        let a = ideal_accel(&level_hover(), &env);
        assert_eq!(a, Vec3::new(0.0, 0.0, -env.g));
    }

    #[test]
    fn free_fall_reads_zero() {
        let env = EnvSample::standard();
        let mut s = VehicleState::at_rest(Vec3::zeros(), Rotation::from_euler(0.3, 0.2, 0.1));
        // body acceleration equal to gravity resolved in the body frame
        s.a_b = s.att.inverse_rotate(&env.gravity_e());
        assert!(ideal_accel(&s, &env).norm() < 1e-12);
    }

    #[test]
    fn rolled_stand_resolves_gravity() {
        let env = EnvSample::standard();
        let roll = 30f64.to_radians();
        let s = VehicleState::at_rest(Vec3::zeros(), Rotation::from_euler(roll, 0.0, 0.0));
        let a = ideal_accel(&s, &env);
        let expect = Vec3::new(0.0, -env.g * roll.sin(), -env.g * roll.cos());
        assert!((a - expect).norm() < 1e-12, "{a}");
        assert!((a.norm() - env.g).abs() < 1e-12);
    }

    #[test]
    fn stationary_level_gyro_mag_baro_gps() {
        let env = EnvSample::standard();
        let s = VehicleState::default();
        assert_eq!(ideal_gyro(&s), Vec3::zeros());
        assert_eq!(ideal_mag(&s, &env), env.mag_e);
        assert_eq!(ideal_baro(&env), 101_325.0);
        let origin = GeoPosition::new(47.0, 8.0, 400.0).unwrap();
        assert_eq!(ideal_gps(&s, &origin).unwrap().position, origin);
    }

    #[test]
    fn ideal_model_is_bitwise_transparent() {
        let mut ch = ErrorChannel::new(ProductErrorModel::ideal(), 3);
        for v in [Vec3::new(-0.0, 1e-300, -5.5), Vec3::new(f64::MAX, -1.0, 0.1)] {
            let out = ch.corrupt(&v, &Vec3::zeros(), 900.0, 1.0, 1e-3);
            for i in 0..3 {
                assert_eq!(out[i].to_bits(), v[i].to_bits());
            }
        }
        let mut sc = ScalarChannel::new(ScalarErrorModel::ideal(), 3);
        assert_eq!(sc.corrupt(-0.0, 10.0, 1.0, 1e-3).to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn identical_seeds_reproduce_streams() {
        let model = ProductErrorModel {
            noise_std: Vec3::repeat(0.1),
            bias_walk: Vec3::repeat(0.01),
            ..ProductErrorModel::ideal()
        };
        let mut a = ErrorChannel::new(model.clone(), 77);
        let mut b = ErrorChannel::new(model, 77);
        for _ in 0..1000 {
            let x = Vec3::new(1.0, 2.0, 3.0);
            assert_eq!(
                a.corrupt(&x, &Vec3::zeros(), 0.0, 1.0, 1e-3),
                b.corrupt(&x, &Vec3::zeros(), 0.0, 1.0, 1e-3)
            );
        }
    }

    #[test]
    fn calibration_scales_and_rotates() {
        let model = ProductErrorModel {
            scale: Vec3::new(1.05, 1.0, 1.0),
            misalignment: Vec3::new(0.0, 0.0, 2f64.to_radians()),
            ..ProductErrorModel::ideal()
        };
        let mut ch = ErrorChannel::new(model, 1);
        let out = ch.corrupt(&Vec3::x(), &Vec3::zeros(), 0.0, 1.0, 1e-3);
        assert!((out.norm() - 1.05).abs() < 1e-12);
        assert!((out.y / out.x - 2f64.to_radians().tan()).abs() < 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(ProductErrorModel::ideal().validate("x").is_ok());
        let bad_scale = ProductErrorModel {
            scale: Vec3::new(1.2, 1.0, 1.0),
            ..ProductErrorModel::ideal()
        };
        assert!(bad_scale.validate("x").is_err());
        let bad_mis = ProductErrorModel {
            misalignment: Vec3::new(0.1, 0.0, 0.0),
            ..ProductErrorModel::ideal()
        };
        assert!(bad_mis.validate("x").is_err());
        assert!(ProductErrorModel::white(-1.0).validate("x").is_err());
    }

    #[test]
    fn lever_arm_centripetal() {
        let s = VehicleState {
            w_b: Vec3::new(0.0, 0.0, 2.0),
            ..Default::default()
        };
        let a = lever_arm_accel(&s, &Vec3::new(0.1, 0.0, 0.0));
        assert!((a - Vec3::new(-0.4, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gps_latency_and_rate() {
        let origin = GeoPosition::new(40.0, 116.0, 50.0).unwrap();
        let cfg = SensorConfig::default();
        let mut suite = SensorSuite::new(cfg, origin, 1000.0, 1).unwrap();
        let env = EnvSample::standard();
        let faults = [ChannelFault::default(); 5];
        let mut released = Vec::new();
        for tick in 0..400u64 {
            let s = VehicleState::at_rest(Vec3::new(tick as f64, 0.0, 0.0), Rotation::identity());
            let r = suite.sample(tick, &s, &env, 0.0, &faults).unwrap();
            if let Some(fix) = r.gps {
                released.push((tick, fix));
            }
        }
        // 10 Hz with 100 ms latency: first fix at tick 100, taken at tick 0
        assert_eq!(released[0].0, 100);
        assert_eq!(released[0].1.position, origin);
        assert_eq!(released.iter().map(|r| r.0).collect::<Vec<_>>(), vec![100, 200, 300]);
    }

    #[test]
    fn gps_hold_last_repeats_fix() {
        let origin = GeoPosition::new(40.0, 116.0, 50.0).unwrap();
        let mut suite = SensorSuite::new(SensorConfig::default(), origin, 1000.0, 1).unwrap();
        let env = EnvSample::standard();
        let mut faults = [ChannelFault::default(); 5];
        let mut fixes = Vec::new();
        for tick in 0..600u64 {
            if tick == 250 {
                faults[SensorChannel::Gps.index()].loss = Some(LossPolicy::HoldLast);
            }
            let s = VehicleState::at_rest(Vec3::new(tick as f64, 0.0, 0.0), Rotation::identity());
            if let Some(fix) = suite.sample(tick, &s, &env, 0.0, &faults).unwrap().gps {
                fixes.push(fix);
            }
        }
        assert_eq!(fixes.len(), 5);
        assert_ne!(fixes[0], fixes[1]);
        assert!(fixes[2..].iter().all(|f| *f == fixes[1]));
    }
}
