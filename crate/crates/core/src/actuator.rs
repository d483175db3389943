//! Motor-propeller actuator: affine steady-state map from throttle to rotor
//! speed followed by a first- or second-order linear response, rate limit
//! and saturation.

use std::io::Read;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActuatorError {
    #[error("invalid actuator parameter: {0}")]
    InvalidParams(&'static str),
    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(&'static str),
    #[error("identified steady map is not increasing (c1 = {0})")]
    NonMonotone(f64),
    #[error("log error: {0}")]
    Log(String),
}

/// Linear dynamic response between the steady-state target and the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "order", rename_all = "snake_case")]
pub enum Dynamics {
    /// `1 / (tau s + 1)`
    First { tau: f64 },
    /// `wn^2 / (s^2 + 2 zeta wn s + wn^2)`
    Second { natural_frequency: f64, damping: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorParams {
    /// Steady map offset, rad/s.
    pub c0: f64,
    /// Steady map slope, rad/s per unit throttle.
    pub c1: f64,
    pub dynamics: Dynamics,
    /// rad/s
    pub min: f64,
    /// rad/s
    pub max: f64,
    /// rad/s^2
    pub rate_limit: f64,
}

impl ActuatorParams {
    pub fn first_order(c0: f64, c1: f64, tau: f64, min: f64, max: f64, rate_limit: f64) -> Self {
        Self {
            c0,
            c1,
            dynamics: Dynamics::First { tau },
            min,
            max,
            rate_limit,
        }
    }

    pub fn validate(&self) -> Result<(), ActuatorError> {
        if !(self.c1 > 0.0 && self.c1.is_finite() && self.c0.is_finite()) {
            return Err(ActuatorError::InvalidParams("c1 must be positive"));
        }
        if !(self.min >= 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(ActuatorError::InvalidParams("need max >= min >= 0"));
        }
        if !(self.rate_limit > 0.0) {
            return Err(ActuatorError::InvalidParams("rate limit must be positive"));
        }
        match self.dynamics {
            Dynamics::First { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(ActuatorError::InvalidParams("tau must be positive"))
            }
            Dynamics::Second {
                natural_frequency,
                damping,
            } if !(natural_frequency > 0.0 && natural_frequency.is_finite() && damping > 0.0) => Err(
                ActuatorError::InvalidParams("natural frequency and damping must be positive"),
            ),
            _ => Ok(()),
        }
    }

    /// Steady-state rotor speed for throttle `sigma` (clamped to `[0, 1]`),
    /// before saturation.
    pub fn steady(&self, sigma: f64) -> f64 {
        self.c0 + self.c1 * clamp_throttle(sigma)
    }

    /// Throttle whose steady state is `delta`, clamped to `[0, 1]`.
    pub fn throttle_for(&self, delta: f64) -> f64 {
        clamp_throttle((delta - self.c0) / self.c1)
    }

    fn saturate(&self, delta: f64) -> f64 {
        delta.clamp(self.min, self.max)
    }
}

fn clamp_throttle(sigma: f64) -> f64 {
    if sigma.is_nan() {
        0.0
    } else {
        sigma.clamp(0.0, 1.0)
    }
}

/// State of one actuator unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorState {
    /// Rotor speed, rad/s.
    pub delta: f64,
    /// Rotor acceleration, rad/s^2 (second-order dynamics only).
    pub rate: f64,
}

impl ActuatorState {
    /// Steady state under constant throttle `sigma`.
    pub fn settled(params: &ActuatorParams, sigma: f64) -> Self {
        Self {
            delta: params.saturate(params.steady(sigma)),
            rate: 0.0,
        }
    }
}

fn second_order_zoh(wn: f64, zeta: f64, dt: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    // augmented [A B; 0 0] so that exp(M dt) carries the input integral
    let m = Matrix3::new(0.0, 1.0, 0.0, -wn * wn, -2.0 * zeta * wn, wn * wn, 0.0, 0.0, 0.0) * dt;
    let e = m.exp();
    ([[e[(0, 0)], e[(0, 1)]], [e[(1, 0)], e[(1, 1)]]], [e[(0, 2)], e[(1, 2)]])
}

/// Advances one actuator by `dt` under throttle `sigma`.
///
/// First-order dynamics use the exact exponential discretization; second
/// order uses the exact zero-order-hold transition. The result is then rate
/// limited and saturated. Throttle is clamped to `[0, 1]`; NaN reads as 0.
pub fn actuator_step(state: &ActuatorState, params: &ActuatorParams, sigma: f64, dt: f64) -> ActuatorState {
    let target = params.steady(sigma);
    let (raw, mut rate) = match params.dynamics {
        Dynamics::First { tau } => {
            let a = (-dt / tau).exp();
            (target + (state.delta - target) * a, 0.0)
        }
        Dynamics::Second {
            natural_frequency,
            damping,
        } => {
            let (phi, gamma) = second_order_zoh(natural_frequency, damping, dt);
            (
                phi[0][0] * state.delta + phi[0][1] * state.rate + gamma[0] * target,
                phi[1][0] * state.delta + phi[1][1] * state.rate + gamma[1] * target,
            )
        }
    };
    let max_change = params.rate_limit * dt;
    let change = raw - state.delta;
    let mut delta = raw;
    if change.abs() > max_change {
        delta = state.delta + max_change.copysign(change);
        rate = params.rate_limit.copysign(change);
    }
    let clamped = params.saturate(delta);
    if clamped != delta {
        rate = 0.0;
    }
    ActuatorState { delta: clamped, rate }
}

/// First-order model recovered from a throttle/speed log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderFit {
    pub c0: f64,
    pub c1: f64,
    pub tau: f64,
    /// RMS difference between the log and the fitted response, rad/s.
    pub rms_residual: f64,
}

/// One row of an identification log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSample {
    pub sigma: f64,
    pub delta: f64,
    pub t: f64,
}

struct Segment<'a> {
    sigma: f64,
    t0: f64,
    rows: &'a [LogSample],
}

fn segments(log: &[LogSample]) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=log.len() {
        if k == log.len() || (log[k].sigma - log[start].sigma).abs() > 1e-9 {
            out.push(Segment {
                sigma: log[start].sigma,
                t0: log[start].t,
                rows: &log[start..k],
            });
            start = k;
        }
    }
    out
}

/// Least-squares fit of `delta = ss + amp * exp(-(t - t0)/tau)` for fixed tau.
fn fit_segment(seg: &Segment<'_>, tau: f64) -> (f64, f64, f64) {
    let (mut s11, mut s1e, mut see, mut sy, mut sye) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in seg.rows {
        let e = (-(r.t - seg.t0) / tau).exp();
        s11 += 1.0;
        s1e += e;
        see += e * e;
        sy += r.delta;
        sye += r.delta * e;
    }
    let det = s11 * see - s1e * s1e;
    let (ss, amp) = if det.abs() > 1e-12 * s11 * see.max(1e-300) {
        ((sy * see - s1e * sye) / det, (s11 * sye - s1e * sy) / det)
    } else {
        (sy / s11, 0.0)
    };
    let sse = seg
        .rows
        .iter()
        .map(|r| {
            let e = (-(r.t - seg.t0) / tau).exp();
            (r.delta - ss - amp * e).powi(2)
        })
        .sum();
    (ss, amp, sse)
}

fn total_sse(segs: &[Segment<'_>], tau: f64) -> f64 {
    segs.iter().map(|s| fit_segment(s, tau).2).sum()
}

/// Identifies `(c0, c1, tau)` of a first-order actuator from a log that
/// contains at least one throttle step.
///
/// The time constant is found by minimizing the total residual over all
/// constant-throttle segments, each segment fitted with its own steady value
/// and transient amplitude. The steady map is then a least-squares line
/// through the per-segment steady values.
pub fn identify_first_order(log: &[LogSample]) -> Result<FirstOrderFit, ActuatorError> {
    if log.len() < 6 {
        return Err(ActuatorError::InsufficientExcitation("log too short"));
    }
    if log
        .iter()
        .any(|r| !(r.sigma.is_finite() && r.delta.is_finite() && r.t.is_finite()))
    {
        return Err(ActuatorError::Log("non-finite sample".into()));
    }
    let segs: Vec<Segment<'_>> = segments(log).into_iter().filter(|s| s.rows.len() >= 3).collect();
    let levels: Vec<f64> = segs.iter().map(|s| s.sigma).collect();
    let spread =
        levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - levels.iter().cloned().fold(f64::INFINITY, f64::min);
    if segs.len() < 2 || !(spread > 1e-6) {
        return Err(ActuatorError::InsufficientExcitation("no throttle step found"));
    }
    let dt_min = log
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let span = log[log.len() - 1].t - log[0].t;
    if !(dt_min.is_finite() && span > 0.0) {
        return Err(ActuatorError::Log("time column not increasing".into()));
    }

    // coarse log-spaced scan, then golden section around the best cell
    let (lo, hi) = ((dt_min * 0.1).ln(), span.ln());
    let n = 80;
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let costs: Vec<f64> = grid.iter().map(|g| total_sse(&segs, g.exp())).collect();
    let best = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (total_sse(&segs, x1.exp()), total_sse(&segs, x2.exp()));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = total_sse(&segs, x1.exp());
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = total_sse(&segs, x2.exp());
        }
    }
    let tau = (0.5 * (a + b)).exp();

    let steady: Vec<(f64, f64)> = segs.iter().map(|s| (s.sigma, fit_segment(s, tau).0)).collect();
    let m = steady.len() as f64;
    let mx = steady.iter().map(|p| p.0).sum::<f64>() / m;
    let my = steady.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = steady.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = steady.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    if !(c1 > 0.0) {
        return Err(ActuatorError::NonMonotone(c1));
    }
    let rms_residual = (total_sse(&segs, tau) / log.len() as f64).sqrt();
    Ok(FirstOrderFit {
        c0,
        c1,
        tau,
        rms_residual,
    })
}

/// Reads rotor `index` from a simulation CSV log (columns `t`,
/// `throttle_<index>`, `delta_<index>`) and identifies it.
pub fn identify_from_csv<R: Read>(reader: R, index: usize) -> Result<FirstOrderFit, ActuatorError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ActuatorError::Log(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ActuatorError::Log(format!("missing column {name}")))
    };
    let (ct, cs, cd) = (
        col("t")?,
        col(&format!("throttle_{index}"))?,
        col(&format!("delta_{index}"))?,
    );
    let mut log = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ActuatorError::Log(e.to_string()))?;
        let get = |c: usize| -> Result<f64, ActuatorError> {
            rec.get(c)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| ActuatorError::Log(e.to_string()))
        };
        log.push(LogSample {
            t: get(ct)?,
            sigma: get(cs)?,
            delta: get(cd)?,
        });
    }
    identify_first_order(&log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn esc(tau: f64) -> ActuatorParams {
        ActuatorParams::first_order(100.0, 800.0, tau, 0.0, 2000.0, 1e7)
    }

    #[test]
    fn first_order_step_hits_time_constant() {
        let p = esc(0.05);
        let dt = 1e-3;
        let mut s = ActuatorState::settled(&p, 0.0);
        let start = s.delta;
        for _ in 0..50 {
            s = actuator_step(&s, &p, 1.0, dt);
        }
        let frac = (s.delta - start) / (900.0 - 100.0);
        assert!((frac - (1.0 - (-1.0f64).exp())).abs() < 1e-12, "{frac}");
        assert!((frac - 0.632).abs() < 0.01 * 0.632);
    }

    #[test]
    fn steady_state_is_fixed_point() {
        let p = esc(0.05);
        let s = ActuatorState::settled(&p, 0.37);
        let n = actuator_step(&s, &p, 0.37, 1e-3);
        assert_eq!(n, s);
    }

    #[test]
    fn decays_to_floor_without_undershoot() {
        let p = ActuatorParams::first_order(0.0, 800.0, 0.02, 0.0, 1000.0, 1e7);
        let mut s = ActuatorState {
            delta: 600.0,
            rate: 0.0,
        };
        for _ in 0..2000 {
            s = actuator_step(&s, &p, 0.0, 1e-3);
            assert!(s.delta >= 0.0);
        }
        assert!(s.delta < 1e-6);
    }

    #[test]
    fn throttle_clamped() {
        let p = esc(0.05);
        assert_eq!(p.steady(1.5), p.steady(1.0));
        assert_eq!(p.steady(-1.0), p.steady(0.0));
        assert_eq!(p.steady(f64::NAN), p.steady(0.0));
    }

    #[test]
    fn rate_limit_bounds_change() {
        let p = ActuatorParams::first_order(0.0, 1000.0, 0.01, 0.0, 1000.0, 5000.0);
        let mut s = ActuatorState::default();
        for _ in 0..100 {
            let n = actuator_step(&s, &p, 1.0, 1e-3);
            assert!((n.delta - s.delta).abs() <= 5000.0 * 1e-3 + 1e-9);
            s = n;
        }
    }

    #[test]
    fn saturation_limits_output() {
        let p = ActuatorParams::first_order(100.0, 800.0, 0.01, 150.0, 700.0, 1e7);
        let s = ActuatorState::settled(&p, 1.0);
        assert_eq!(s.delta, 700.0);
        let s = ActuatorState::settled(&p, 0.0);
        assert_eq!(s.delta, 150.0);
    }

    #[test]
    fn second_order_settles_to_target() {
        let p = ActuatorParams {
            dynamics: Dynamics::Second {
                natural_frequency: 60.0,
                damping: 0.7,
            },
            ..esc(1.0)
        };
        p.validate().unwrap();
        let mut s = ActuatorState::settled(&p, 0.0);
        let mut peak: f64 = 0.0;
        for _ in 0..1000 {
            s = actuator_step(&s, &p, 1.0, 1e-3);
            peak = peak.max(s.delta);
        }
        assert!((s.delta - 900.0).abs() < 1e-6);
        // zeta = 0.7 overshoot is about 4.6 %
        let overshoot = (peak - 900.0) / 800.0;
        assert!((overshoot - 0.046).abs() < 0.002, "{overshoot}");
    }

    #[test]
    fn params_validation() {
        assert!(esc(0.05).validate().is_ok());
        assert!(esc(0.0).validate().is_err());
        assert!(ActuatorParams { c1: 0.0, ..esc(0.1) }.validate().is_err());
        assert!(ActuatorParams {
            min: 10.0,
            max: 5.0,
            ..esc(0.1)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn constant_throttle_is_insufficient() {
        let log: Vec<LogSample> = (0..100)
            .map(|k| LogSample {
                sigma: 0.5,
                delta: 500.0,
                t: k as f64 * 1e-3,
            })
            .collect();
        assert!(matches!(
            identify_first_order(&log),
            Err(ActuatorError::InsufficientExcitation(_))
        ));
    }

    #[test]
    fn serde_round_trip_tagged() {
        let p = esc(0.05);
        let text = toml::to_string(&p).unwrap();
        assert!(text.contains("order = \"first\""), "{text}");
        let back: ActuatorParams = toml::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
