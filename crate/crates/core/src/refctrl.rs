//! Reference flight controller.
//!
//! Stands in for an external autopilot. Each step it reads the emulated
//! chips over SPI and drains GPS frames from the UART, estimates attitude with
//! a complementary filter and position with GPS/baro blending, and runs a
//! cascaded position, velocity, attitude and rate loop. The result is four
//! PWM pulse widths for a quad-X airframe in the rotor order
//! front-right, rear-left, front-left, rear-right.
//!
//! The controller only sees bus bytes and its own configuration. Setpoints
//! are NED metres relative to the configured mission reference.

use serde::{Deserialize, Serialize};

use crate::buscodec::{self, SensorBus};
use crate::environment::{isa_altitude, mag_at, G0};
use crate::frames::{lla_to_ned, GeoPosition, Rotation, Vec3};

/// Roll, pitch and yaw mixing signs per rotor.
pub const MIX_ROLL: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
pub const MIX_PITCH: [f64; 4] = [1.0, -1.0, 1.0, -1.0];
pub const MIX_YAW: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub p: f64,
    pub i: f64,
    pub d: f64,
    /// Bound on the integral contribution.
    pub i_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            p: 0.0,
            i: 0.0,
            d: 0.0,
            i_limit: 0.0,
        }
    }
}

impl PidGains {
    pub const fn new(p: f64, i: f64, d: f64, i_limit: f64) -> Self {
        Self { p, i, d, i_limit }
    }

    fn valid(&self) -> bool {
        [self.p, self.i, self.d, self.i_limit]
            .iter()
            .all(|g| *g >= 0.0 && g.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Time constant of the tilt correction from the accelerometer, s.
    pub attitude_tau: f64,
    /// Time constant of the heading correction from the magnetometer, s.
    pub heading_tau: f64,
    /// Scales the accelerometer correction (0 disables it).
    pub accel_weight: f64,
    /// Scales the magnetometer correction (0 disables it).
    pub mag_weight: f64,
    /// Natural frequency of the baro altitude blend, rad/s.
    pub baro_frequency: f64,
    /// Fraction of the GPS position and velocity innovation applied per fix.
    pub gps_position_gain: f64,
    pub gps_velocity_gain: f64,
    /// Without a fix for this long the estimate is flagged degraded, s.
    pub gps_timeout: f64,
    /// Smoothing factor per fix for the GPS-derived acceleration that is
    /// removed from the accelerometer before the tilt correction.
    pub gps_accel_gain: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            attitude_tau: 2.0,
            heading_tau: 1.0,
            accel_weight: 1.0,
            mag_weight: 1.0,
            baro_frequency: 2.0,
            gps_position_gain: 0.3,
            gps_velocity_gain: 0.3,
            gps_timeout: 1.0,
            gps_accel_gain: 0.5,
        }
    }
}

/// Gains and limits. Defaults are tuned for the shipped F450-class vehicle
/// and are not normative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Mission reference; setpoints and estimates are NED metres from here.
    pub reference: GeoPosition,
    /// Throttle that holds the vehicle in hover.
    pub hover_throttle: f64,
    /// rad
    pub max_tilt: f64,
    /// m/s
    pub max_climb: f64,
    pub max_descent: f64,
    pub max_horizontal_speed: f64,
    /// 1/s
    pub position_p_xy: f64,
    pub position_p_z: f64,
    /// Velocity loops output acceleration, m/s^2.
    pub velocity_xy: PidGains,
    pub velocity_z: PidGains,
    /// 1/s
    pub attitude_p_xy: f64,
    pub attitude_p_yaw: f64,
    /// rad/s
    pub max_rate_xy: f64,
    pub max_rate_yaw: f64,
    /// Rate loops output normalized throttle differentials.
    pub rate_xy: PidGains,
    pub rate_yaw: PidGains,
    pub max_yaw_command: f64,
    pub estimator: EstimatorConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            reference: GeoPosition {
                latitude: 40.0,
                longitude: 116.3,
                altitude: 50.0,
            },
            hover_throttle: 0.61,
            max_tilt: 30f64.to_radians(),
            max_climb: 3.0,
            max_descent: 1.5,
            max_horizontal_speed: 5.0,
            position_p_xy: 1.0,
            position_p_z: 1.2,
            velocity_xy: PidGains::new(2.0, 0.4, 0.0, 2.0),
            velocity_z: PidGains::new(4.0, 2.0, 0.0, 4.0),
            attitude_p_xy: 7.0,
            attitude_p_yaw: 3.0,
            max_rate_xy: 3.5,
            max_rate_yaw: 1.5,
            rate_xy: PidGains::new(0.05, 0.05, 0.001, 0.05),
            rate_yaw: PidGains::new(0.2, 0.05, 0.0, 0.05),
            max_yaw_command: 0.12,
            estimator: EstimatorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid controller config: {0}")]
pub struct ConfigError(pub &'static str);

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let gains = [self.velocity_xy, self.velocity_z, self.rate_xy, self.rate_yaw];
        if !gains.iter().all(PidGains::valid) {
            return Err(ConfigError("PID gains must be finite and non-negative"));
        }
        let scalars = [
            self.position_p_xy,
            self.position_p_z,
            self.attitude_p_xy,
            self.attitude_p_yaw,
        ];
        if !scalars.iter().all(|g| *g >= 0.0 && g.is_finite()) {
            return Err(ConfigError("loop gains must be finite and non-negative"));
        }
        let limits = [
            self.max_tilt,
            self.max_climb,
            self.max_descent,
            self.max_horizontal_speed,
            self.max_rate_xy,
            self.max_rate_yaw,
            self.max_yaw_command,
        ];
        if !limits.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return Err(ConfigError("limits must be positive"));
        }
        if self.max_tilt >= std::f64::consts::FRAC_PI_2 {
            return Err(ConfigError("max tilt must be below 90 deg"));
        }
        if !(self.hover_throttle > 0.0 && self.hover_throttle < 1.0) {
            return Err(ConfigError("hover throttle must lie in (0, 1)"));
        }
        let e = &self.estimator;
        if !(e.attitude_tau > 0.0 && e.heading_tau > 0.0 && e.gps_timeout > 0.0) {
            return Err(ConfigError("estimator time constants must be positive"));
        }
        if !(0.0..=1.0).contains(&e.gps_accel_gain) {
            return Err(ConfigError("GPS acceleration gain must be in [0, 1]"));
        }
        if ![
            e.accel_weight,
            e.mag_weight,
            e.baro_frequency,
            e.gps_position_gain,
            e.gps_velocity_gain,
        ]
        .iter()
        .all(|g| *g >= 0.0 && g.is_finite())
            || e.gps_position_gain > 1.0
            || e.gps_velocity_gain > 1.0
        {
            return Err(ConfigError("estimator gains out of range"));
        }
        if self.reference.validate().is_err() {
            return Err(ConfigError("invalid reference position"));
        }
        Ok(())
    }
}

/// Commanded behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Setpoint {
    /// Motors at minimum pulse.
    Idle,
    /// Hold a NED position (m from the reference) and yaw (rad).
    Position {
        position: Vec3,
        #[serde(default)]
        yaw: f64,
    },
    /// Direct attitude (rad) and collective throttle in [0, 1].
    Attitude {
        roll: f64,
        pitch: f64,
        yaw: f64,
        throttle: f64,
    },
}

/// Decoded sensor values for one estimator update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusSample {
    /// m/s^2
    pub accel: Vec3,
    /// rad/s
    pub gyro: Vec3,
    /// uT
    pub mag: Vec3,
    /// Pa
    pub pressure: f64,
}

/// Decoded GPS fix in reference-relative NED.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsMeasurement {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Estimator output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// m, NED from the reference
    pub position: Vec3,
    /// m/s, NED
    pub velocity: Vec3,
    pub attitude: Rotation,
    /// rad/s, body
    pub rates: Vec3,
    /// No recent GPS fix: horizontal position is dead-reckoned.
    pub degraded: bool,
}

/// Complementary attitude filter with GPS/baro position blending.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    reference: GeoPosition,
    declination: f64,
    att: Rotation,
    pos: Vec3,
    vel: Vec3,
    rates: Vec3,
    initialized: bool,
    baro_seen: bool,
    last_fix: Option<f64>,
    last_gps_velocity: Option<Vec3>,
    /// Kinematic acceleration from GPS velocity differences, NED.
    gps_accel: Vec3,
    t: f64,
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Attitude whose body down axis is `z_b` (earth frame, unit) with heading `yaw`.
fn attitude_from_down_axis(z_b: &Vec3, yaw: f64) -> Rotation {
    let heading = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    let y_b = z_b.cross(&heading).normalize();
    let x_b = y_b.cross(z_b);
    let m = nalgebra::Matrix3::from_columns(&[x_b, y_b, *z_b]);
    Rotation::from_unit_quaternion(nalgebra::UnitQuaternion::from_matrix(&m))
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig, reference: GeoPosition) -> Self {
        let m = mag_at(&reference);
        Self {
            cfg,
            reference,
            declination: m.y.atan2(m.x),
            att: Rotation::identity(),
            pos: Vec3::zeros(),
            vel: Vec3::zeros(),
            rates: Vec3::zeros(),
            initialized: false,
            baro_seen: false,
            last_fix: None,
            last_gps_velocity: None,
            gps_accel: Vec3::zeros(),
            t: 0.0,
        }
    }

    /// Magnetic declination used for heading, rad.
    pub fn declination(&self) -> f64 {
        self.declination
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            position: self.pos,
            velocity: self.vel,
            attitude: self.att,
            rates: self.rates,
            degraded: self.last_fix.is_none_or(|t| self.t - t > self.cfg.gps_timeout),
        }
    }

    fn heading_error(&self, mag: &Vec3) -> Option<f64> {
        let h = self.att.rotate(mag);
        if h.x.hypot(h.y) < 1e-6 {
            return None;
        }
        Some(wrap_pi(h.y.atan2(h.x) - self.declination))
    }

    fn initialize(&mut self, s: &BusSample) {
        if s.accel.norm() > 1e-6 {
            // tilt from gravity alone, then heading from the field
            let down_b = -s.accel.normalize();
            let roll = down_b.y.atan2(down_b.z);
            let pitch = (-down_b.x).atan2(down_b.y.hypot(down_b.z));
            self.att = Rotation::from_euler(roll, pitch, 0.0);
            if let Some(err) = self.heading_error(&s.mag) {
                self.att = Rotation::from_euler(roll, pitch, -err);
            }
        }
        self.initialized = true;
    }

    /// Propagates with one IMU sample and applies the mag and baro corrections.
    pub fn update(&mut self, s: &BusSample, dt: f64) {
        if !self.initialized {
            self.initialize(s);
        }
        self.t += dt;
        let mut w = s.gyro;
        // gravity direction: specific force minus the kinematic acceleration
        let kinematic = if self.estimate().degraded {
            Vec3::zeros()
        } else {
            self.gps_accel
        };
        let gravity_b = s.accel - self.att.inverse_rotate(&kinematic);
        let a_norm = gravity_b.norm();
        if self.cfg.accel_weight > 0.0 && (0.5 * G0..1.5 * G0).contains(&a_norm) {
            let measured_up = gravity_b / a_norm;
            let estimated_up = self.att.inverse_rotate(&-Vec3::z());
            w += measured_up.cross(&estimated_up) * (self.cfg.accel_weight / self.cfg.attitude_tau);
        }
        if self.cfg.mag_weight > 0.0 {
            if let Some(err) = self.heading_error(&s.mag) {
                let k = self.cfg.mag_weight / self.cfg.heading_tau;
                w += self.att.inverse_rotate(&Vec3::new(0.0, 0.0, -k * err));
            }
        }
        let dq = Rotation::from_axis_angle(w, w.norm() * dt);
        self.att = self.att.compose(&dq);
        self.att.renormalize();
        self.rates = s.gyro;

        let accel_e = self.att.rotate(&s.accel) + Vec3::new(0.0, 0.0, G0);
        self.pos += self.vel * dt + accel_e * (0.5 * dt * dt);
        self.vel += accel_e * dt;

        if (10_000.0..=120_000.0).contains(&s.pressure) {
            let z_baro = -(isa_altitude(s.pressure) - self.reference.altitude);
            if !self.baro_seen {
                self.pos.z = z_baro;
                self.baro_seen = true;
            }
            let wn = self.cfg.baro_frequency;
            let e = z_baro - self.pos.z;
            self.pos.z += 2.0 * wn * e * dt;
            self.vel.z += wn * wn * e * dt;
        }
    }

    /// Blends one GPS fix into the horizontal position and velocity.
    pub fn correct_gps(&mut self, fix: &GpsMeasurement) {
        if self.last_fix.is_none() {
            self.pos.x = fix.position.x;
            self.pos.y = fix.position.y;
            self.vel.x = fix.velocity.x;
            self.vel.y = fix.velocity.y;
        } else {
            let (kp, kv) = (self.cfg.gps_position_gain, self.cfg.gps_velocity_gain);
            self.pos.x += kp * (fix.position.x - self.pos.x);
            self.pos.y += kp * (fix.position.y - self.pos.y);
            self.vel.x += kv * (fix.velocity.x - self.vel.x);
            self.vel.y += kv * (fix.velocity.y - self.vel.y);
        }
        if let (Some(t), Some(v)) = (self.last_fix, self.last_gps_velocity) {
            let dt = self.t - t;
            if dt > 0.0 && dt <= self.cfg.gps_timeout {
                let raw = (fix.velocity - v) / dt;
                self.gps_accel += (raw - self.gps_accel) * self.cfg.gps_accel_gain;
            } else {
                self.gps_accel = Vec3::zeros();
            }
        }
        self.last_gps_velocity = Some(fix.velocity);
        self.last_fix = Some(self.t);
    }

    pub fn reference(&self) -> &GeoPosition {
        &self.reference
    }
}

#[derive(Debug, Clone, Default)]
struct Pid {
    integral: f64,
    prev: Option<f64>,
}

impl Pid {
    /// PID on `error` with derivative taken on the measurement.
    fn step(&mut self, g: &PidGains, error: f64, measurement: f64, dt: f64) -> f64 {
        if g.i > 0.0 {
            self.integral = (self.integral + g.i * error * dt).clamp(-g.i_limit, g.i_limit);
        }
        let d = match self.prev {
            Some(prev) if g.d > 0.0 => -(measurement - prev) / dt * g.d,
            _ => 0.0,
        };
        self.prev = Some(measurement);
        g.p * error + self.integral + d
    }

    fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One controller step's outputs, including intermediate setpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// us per rotor
    pub pwm: [f64; 4],
    pub estimate: Estimate,
    pub velocity_sp: Vec3,
    pub attitude_sp: Rotation,
    pub rate_sp: Vec3,
    /// Collective throttle before mixing.
    pub collective: f64,
}

/// Counters for bus traffic the controller could not use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BusDiagnostics {
    pub gps_frames: u64,
    pub rejected_gps_frames: u64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    estimator: Estimator,
    vel_pid: [Pid; 3],
    rate_pid: [Pid; 3],
    diagnostics: BusDiagnostics,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            estimator: Estimator::new(cfg.estimator, cfg.reference),
            cfg,
            vel_pid: Default::default(),
            rate_pid: Default::default(),
            diagnostics: BusDiagnostics::default(),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    pub fn diagnostics(&self) -> BusDiagnostics {
        self.diagnostics
    }

    /// Checks the WHO_AM_I register of every chip.
    pub fn probe(bus: &mut SensorBus) -> bool {
        [&mut bus.imu, &mut bus.mag, &mut bus.baro].into_iter().all(|chip| {
            let l = *chip.layout();
            buscodec::spi_read(chip, l.who_am_i_addr, 1) == [l.who_am_i]
        })
    }

    /// Reads every chip and decodes the blocks.
    pub fn read_bus(bus: &mut SensorBus) -> BusSample {
        let imu: [u8; 14] = buscodec::spi_read(&mut bus.imu, 0x3B, 14).try_into().expect("14 bytes");
        let mag: [u8; 6] = buscodec::spi_read(&mut bus.mag, 0x03, 6).try_into().expect("6 bytes");
        let baro: [u8; 5] = buscodec::spi_read(&mut bus.baro, 0x77, 5).try_into().expect("5 bytes");
        let imu = buscodec::decode_imu(&imu);
        BusSample {
            accel: imu.accel,
            gyro: imu.gyro,
            mag: buscodec::decode_mag(&mag),
            pressure: buscodec::decode_baro(&baro).0,
        }
    }

    /// Reads the bus, updates the estimate and computes the PWM outputs.
    pub fn step(&mut self, bus: &mut SensorBus, setpoint: &Setpoint, dt: f64) -> ControlOutput {
        let sample = Self::read_bus(bus);
        self.estimator.update(&sample, dt);
        for frame in bus.drain_uart() {
            self.diagnostics.gps_frames += 1;
            match buscodec::decode_gps(&frame) {
                Ok(fix) => match lla_to_ned(&self.cfg.reference, &fix.position) {
                    Ok(p) => self.estimator.correct_gps(&GpsMeasurement {
                        position: p,
                        velocity: fix.velocity_ned,
                    }),
                    Err(_) => self.diagnostics.rejected_gps_frames += 1,
                },
                Err(_) => self.diagnostics.rejected_gps_frames += 1,
            }
        }
        let est = self.estimator.estimate();
        self.control(&est, setpoint, dt)
    }

    /// Control law on a given estimate.
    pub fn control(&mut self, est: &Estimate, setpoint: &Setpoint, dt: f64) -> ControlOutput {
        let c = &self.cfg;
        let (velocity_sp, attitude_sp, collective) = match *setpoint {
            Setpoint::Idle => {
                self.vel_pid
                    .iter_mut()
                    .chain(self.rate_pid.iter_mut())
                    .for_each(Pid::reset);
                return ControlOutput {
                    pwm: [buscodec::PWM_MIN; 4],
                    estimate: *est,
                    velocity_sp: Vec3::zeros(),
                    attitude_sp: est.attitude,
                    rate_sp: Vec3::zeros(),
                    collective: 0.0,
                };
            }
            Setpoint::Attitude {
                roll,
                pitch,
                yaw,
                throttle,
            } => (
                Vec3::zeros(),
                Rotation::from_euler(roll, pitch, yaw),
                throttle.clamp(0.0, 1.0),
            ),
            Setpoint::Position { position, yaw } => {
                let e = position - est.position;
                let mut v_sp = Vec3::new(e.x * c.position_p_xy, e.y * c.position_p_xy, e.z * c.position_p_z);
                let h = v_sp.xy().norm();
                if h > c.max_horizontal_speed {
                    let s = c.max_horizontal_speed / h;
                    v_sp.x *= s;
                    v_sp.y *= s;
                }
                v_sp.z = v_sp.z.clamp(-c.max_climb, c.max_descent);

                let ve = v_sp - est.velocity;
                let gains = [c.velocity_xy, c.velocity_xy, c.velocity_z];
                let mut a_sp = Vec3::zeros();
                for k in 0..3 {
                    a_sp[k] = self.vel_pid[k].step(&gains[k], ve[k], est.velocity[k], dt);
                }
                a_sp.z = a_sp.z.clamp(-0.5 * G0, 0.7 * G0);

                // desired specific force; thrust acts along body -z
                let f_des = a_sp - Vec3::new(0.0, 0.0, G0);
                let mut z_b = -f_des.normalize();
                let tilt = z_b.z.clamp(-1.0, 1.0).acos();
                if tilt > c.max_tilt {
                    let horiz = Vec3::new(z_b.x, z_b.y, 0.0).normalize();
                    z_b = horiz * c.max_tilt.sin() + Vec3::z() * c.max_tilt.cos();
                }
                let att_sp = attitude_from_down_axis(&z_b, yaw);
                let body_down_e = est.attitude.rotate(&Vec3::z());
                let thrust = (-f_des.dot(&body_down_e)).max(0.0);
                let collective = c.hover_throttle * (thrust / G0).sqrt();
                (v_sp, att_sp, collective)
            }
        };

        // attitude error as a body-frame rotation vector
        let err = est.attitude.inverse().compose(&attitude_sp).quaternion().scaled_axis();
        let mut rate_sp = Vec3::new(
            err.x * c.attitude_p_xy,
            err.y * c.attitude_p_xy,
            err.z * c.attitude_p_yaw,
        );
        rate_sp.x = rate_sp.x.clamp(-c.max_rate_xy, c.max_rate_xy);
        rate_sp.y = rate_sp.y.clamp(-c.max_rate_xy, c.max_rate_xy);
        rate_sp.z = rate_sp.z.clamp(-c.max_rate_yaw, c.max_rate_yaw);

        let re = rate_sp - est.rates;
        let gains = [c.rate_xy, c.rate_xy, c.rate_yaw];
        let mut u = Vec3::zeros();
        for k in 0..3 {
            u[k] = self.rate_pid[k].step(&gains[k], re[k], est.rates[k], dt);
        }
        u.z = u.z.clamp(-c.max_yaw_command, c.max_yaw_command);

        ControlOutput {
            pwm: mix(collective, &u),
            estimate: *est,
            velocity_sp,
            attitude_sp,
            rate_sp,
            collective,
        }
    }
}

/// Quad-X mix of collective and roll/pitch/yaw commands into PWM pulses.
pub fn mix(collective: f64, u: &Vec3) -> [f64; 4] {
    std::array::from_fn(|i| {
        let sigma = collective + MIX_ROLL[i] * u.x + MIX_PITCH[i] * u.y + MIX_YAW[i] * u.z;
        buscodec::throttle_to_pwm(sigma.clamp(0.0, 1.0))
    })
}
