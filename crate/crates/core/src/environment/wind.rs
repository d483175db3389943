//! Composite wind: prevailing + shear + discrete gust + Dryden turbulence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::frames::Vec3;

/// Airspeed floor used by the turbulence shaping filters, m/s.
pub const MIN_TURBULENCE_AIRSPEED: f64 = 1.0;

const FT: f64 = 0.3048;

/// Power-law wind shear, `speed = ref_speed * (h / ref_height)^exponent`
/// for heights above ground, zero at or below ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearConfig {
    /// m/s at `ref_height`
    pub ref_speed: f64,
    /// m above ground
    pub ref_height: f64,
    pub exponent: f64,
    /// Direction the wind blows toward, degrees clockwise from north.
    #[serde(default)]
    pub direction_deg: f64,
}

/// "1 - cosine" discrete gust: rises from zero at `start`, peaks at
/// `amplitude_e` half-way and returns to zero at `start + duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GustConfig {
    /// Peak gust vector, earth frame, m/s.
    pub amplitude_e: Vec3,
    /// s
    pub start: f64,
    /// s
    pub duration: f64,
}

impl GustConfig {
    pub fn velocity(&self, t: f64) -> Vec3 {
        if self.duration <= 0.0 || t < self.start || t > self.start + self.duration {
            return Vec3::zeros();
        }
        let phase = 2.0 * std::f64::consts::PI * (t - self.start) / self.duration;
        self.amplitude_e * (0.5 * (1.0 - phase.cos()))
    }
}

/// Dryden turbulence intensities and scale lengths for the north, east and
/// down axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceConfig {
    /// m/s
    pub sigma: Vec3,
    /// m
    pub length: Vec3,
}

impl TurbulenceConfig {
    /// Low-altitude intensities and scales for height `h` (m, clamped to the
    /// 10-1000 ft band) and wind speed at 20 ft `w20` (m/s).
    pub fn low_altitude(h: f64, w20: f64) -> Self {
        let h_ft = (h / FT).clamp(10.0, 1000.0);
        let denom = 0.177 + 0.000_823 * h_ft;
        let l_w = h_ft * FT;
        let l_uv = h_ft / denom.powf(1.2) * FT;
        let sigma_w = 0.1 * w20;
        let sigma_uv = sigma_w / denom.powf(0.4);
        Self {
            sigma: Vec3::new(sigma_uv, sigma_uv, sigma_w),
            length: Vec3::new(l_uv, l_uv, l_w),
        }
    }
}

/// Wind configuration. Every component defaults to absent/zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WindConfig {
    /// Prevailing wind, earth frame, m/s.
    pub constant_e: Vec3,
    pub shear: Option<ShearConfig>,
    pub gust: Option<GustConfig>,
    pub turbulence: Option<TurbulenceConfig>,
    pub seed: u64,
}

/// Longitudinal channel: H(s) = K / (1 + T s).
#[derive(Debug, Clone, Copy, Default)]
struct FirstOrderShaper {
    x: f64,
}

impl FirstOrderShaper {
    fn step(&mut self, sigma: f64, length: f64, airspeed: f64, dt: f64, noise: f64) -> f64 {
        let tc = length / airspeed;
        let gain = sigma * (2.0 * length / (std::f64::consts::PI * airspeed)).sqrt();
        let a = (-dt / tc).exp();
        let out = self.x;
        self.x = a * self.x + (1.0 - a) * gain * noise;
        out
    }
}

/// Lateral/vertical channel: H(s) = K (1 + sqrt(3) T s) / (1 + T s)^2.
#[derive(Debug, Clone, Copy, Default)]
struct SecondOrderShaper {
    x: [f64; 2],
}

impl SecondOrderShaper {
    fn step(&mut self, sigma: f64, length: f64, airspeed: f64, dt: f64, noise: f64) -> f64 {
        let tc = length / airspeed;
        let gain = sigma * (length / (std::f64::consts::PI * airspeed)).sqrt();
        // companion form: x'' + 2/T x' + x/T^2 = u, y = K (x + sqrt(3) T x') / T^2
        let inv_t2 = 1.0 / (tc * tc);
        let out = gain * inv_t2 * (self.x[0] + 3f64.sqrt() * tc * self.x[1]);
        let r = dt / tc;
        let e = (-r).exp();
        let phi = [[e * (1.0 + r), e * dt], [-e * dt * inv_t2, e * (1.0 - r)]];
        let gamma = [tc * tc * (1.0 - e * (1.0 + r)), dt * e];
        let [x0, x1] = self.x;
        self.x = [
            phi[0][0] * x0 + phi[0][1] * x1 + gamma[0] * noise,
            phi[1][0] * x0 + phi[1][1] * x1 + gamma[1] * noise,
        ];
        out
    }
}

/// Stateful wind generator for one vehicle.
#[derive(Debug, Clone)]
pub struct WindModel {
    cfg: WindConfig,
    gust_override: Option<GustConfig>,
    ground_height: f64,
    rng: ChaCha8Rng,
    u: FirstOrderShaper,
    v: SecondOrderShaper,
    w: SecondOrderShaper,
}

impl WindModel {
    /// `ground_height`: terrain height above the NED origin, m.
    pub fn new(cfg: WindConfig, ground_height: f64) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self {
            cfg,
            gust_override: None,
            ground_height,
            rng,
            u: FirstOrderShaper::default(),
            v: SecondOrderShaper::default(),
            w: SecondOrderShaper::default(),
        }
    }

    pub fn config(&self) -> &WindConfig {
        &self.cfg
    }

    pub fn override_gust(&mut self, gust: Option<GustConfig>) {
        self.gust_override = gust;
    }

    fn shear(&self, p_e: &Vec3) -> Vec3 {
        let Some(s) = &self.cfg.shear else {
            return Vec3::zeros();
        };
        let h = -p_e.z - self.ground_height;
        if h <= 0.0 || s.ref_height <= 0.0 {
            return Vec3::zeros();
        }
        let speed = s.ref_speed * (h / s.ref_height).powf(s.exponent);
        let dir = s.direction_deg.to_radians();
        Vec3::new(dir.cos(), dir.sin(), 0.0) * speed
    }

    fn gust(&self, t: f64) -> Vec3 {
        match self.gust_override.as_ref().or(self.cfg.gust.as_ref()) {
            Some(g) => g.velocity(t),
            None => Vec3::zeros(),
        }
    }

    /// Deterministic part of the wind (everything except turbulence).
    pub fn mean_wind(&self, p_e: &Vec3, t: f64) -> Vec3 {
        self.cfg.constant_e + self.shear(p_e) + self.gust(t)
    }

    /// Advances the turbulence filters by `dt` and returns the total wind.
    ///
    /// Must be called once per tick. Airspeeds below
    /// [`MIN_TURBULENCE_AIRSPEED`] are floored.
    pub fn sample(&mut self, p_e: &Vec3, airspeed: f64, t: f64, dt: f64) -> Vec3 {
        self.mean_wind(p_e, t) + self.turbulence(airspeed, dt)
    }

    fn turbulence(&mut self, airspeed: f64, dt: f64) -> Vec3 {
        let Some(turb) = &self.cfg.turbulence else {
            return Vec3::zeros();
        };
        let va = if airspeed.is_finite() {
            airspeed.max(MIN_TURBULENCE_AIRSPEED)
        } else {
            MIN_TURBULENCE_AIRSPEED
        };
        // unit-intensity white noise held over the tick
        let scale = (std::f64::consts::PI / dt).sqrt();
        let mut draw = || -> f64 {
            let n: f64 = StandardNormal.sample(&mut self.rng);
            n * scale
        };
        let (nu, nv, nw) = (draw(), draw(), draw());
        let (s, l) = (turb.sigma, turb.length);
        Vec3::new(
            if s.x > 0.0 {
                self.u.step(s.x, l.x, va, dt, nu)
            } else {
                0.0
            },
            if s.y > 0.0 {
                self.v.step(s.y, l.y, va, dt, nv)
            } else {
                0.0
            },
            if s.z > 0.0 {
                self.w.step(s.z, l.z, va, dt, nw)
            } else {
                0.0
            },
        )
    }
}

/// Stateless convenience wrapper: one tick of `model` at `t`.
pub fn wind_at(model: &mut WindModel, p_e: &Vec3, airspeed: f64, t: f64, dt: f64) -> Vec3 {
    model.sample(p_e, airspeed, t, dt)
}
