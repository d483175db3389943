//! Scheduled and condition-triggered fault injection.
//!
//! A schedule is validated once at load. During a run the [`FaultEngine`] is
//! updated at every tick boundary and reports the set of active effects; the
//! simulation applies them to shadow copies of the baseline parameters, so an
//! empty effect set leaves every signal untouched.
//!
//! Scenario syntax:
//!
//! ```toml
//! [[faults]]
//! target = "actuator_1"                  # actuator_<i>, sensor_<accel|gyro|mag|baro|gps>, wind, payload
//! kind = { type = "loss_of_effectiveness", factor = 0.0 }
//! trigger = { at = 5.0 }                 # or altitude_above / altitude_below / speed_above
//! duration = 2.0                         # omit for a permanent fault
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::GustConfig;
use crate::frames::Vec3;
use crate::rigidbody::VehicleState;
use crate::sensors::{ChannelFault, LossPolicy, SensorChannel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("unknown fault target `{0}`")]
    Target(String),
    #[error("fault {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("faults {0} and {1} may be active on the same target and kind at the same time")]
    Conflict(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FaultTarget {
    Actuator(usize),
    Sensor(SensorChannel),
    Wind,
    Payload,
}

impl fmt::Display for FaultTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Actuator(i) => write!(f, "actuator_{i}"),
            Self::Sensor(c) => write!(f, "sensor_{}", sensor_name(*c)),
            Self::Wind => f.write_str("wind"),
            Self::Payload => f.write_str("payload"),
        }
    }
}

fn sensor_name(c: SensorChannel) -> &'static str {
    match c {
        SensorChannel::Accel => "accel",
        SensorChannel::Gyro => "gyro",
        SensorChannel::Mag => "mag",
        SensorChannel::Baro => "baro",
        SensorChannel::Gps => "gps",
    }
}

impl TryFrom<String> for FaultTarget {
    type Error = FaultError;

    fn try_from(s: String) -> Result<Self, FaultError> {
        s.parse()
    }
}

impl std::str::FromStr for FaultTarget {
    type Err = FaultError;

    fn from_str(s: &str) -> Result<Self, FaultError> {
        let err = || FaultError::Target(s.to_string());
        match s {
            "wind" => return Ok(Self::Wind),
            "payload" => return Ok(Self::Payload),
            _ => {}
        }
        if let Some(i) = s.strip_prefix("actuator_") {
            return i.parse().map(Self::Actuator).map_err(|_| err());
        }
        if let Some(name) = s.strip_prefix("sensor_") {
            return SensorChannel::ALL
                .into_iter()
                .find(|c| sensor_name(*c) == name)
                .map(Self::Sensor)
                .ok_or_else(err);
        }
        Err(err())
    }
}

impl From<FaultTarget> for String {
    fn from(t: FaultTarget) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultKind {
    /// Scales the rotor thrust and torque coefficients.
    LossOfEffectiveness {
        factor: f64,
    },
    /// Freezes the rotor speed at `value` (rad/s), or at its value on
    /// activation when omitted.
    StuckAt {
        value: Option<f64>,
    },
    SignalLoss {
        policy: LossPolicy,
    },
    /// Added to the calibrated output. Scalar channels use the first
    /// component; GPS takes NED metres.
    BiasJump {
        offset: Vec3,
    },
    /// Multiplies the white-noise std.
    NoiseScale {
        factor: f64,
    },
    /// Replaces the configured gust with a 1 - cos gust starting at activation.
    GustOverride {
        amplitude_e: Vec3,
        gust_duration: f64,
    },
    /// Adds `delta` kg to the vehicle mass.
    MassChange {
        delta: f64,
    },
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::LossOfEffectiveness { .. } => "loss_of_effectiveness",
            Self::StuckAt { .. } => "stuck_at",
            Self::SignalLoss { .. } => "signal_loss",
            Self::BiasJump { .. } => "bias_jump",
            Self::NoiseScale { .. } => "noise_scale",
            Self::GustOverride { .. } => "gust_override",
            Self::MassChange { .. } => "mass_change",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// s
    At(f64),
    /// Height above the origin, m.
    AltitudeAbove(f64),
    AltitudeBelow(f64),
    /// Ground speed, m/s.
    SpeedAbove(f64),
}

impl Trigger {
    fn fires(&self, t: f64, state: &VehicleState) -> bool {
        match *self {
            Self::At(t_on) => t >= t_on,
            Self::AltitudeAbove(h) => state.height() > h,
            Self::AltitudeBelow(h) => state.height() < h,
            Self::SpeedAbove(v) => state.v_e.norm() > v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub target: FaultTarget,
    pub kind: FaultKind,
    pub trigger: Trigger,
    /// s; `None` keeps the fault active to the end of the run.
    #[serde(default)]
    pub duration: Option<f64>,
}

impl FaultSpec {
    pub fn describe(&self) -> String {
        format!("{} {}", self.target, self.kind.name())
    }
}

/// Checks ranges, target/kind compatibility and overlap.
///
/// `n_actuators` bounds actuator indices and `mass` is the baseline mass.
pub fn validate_schedule(faults: &[FaultSpec], n_actuators: usize, mass: f64) -> Result<(), FaultError> {
    for (index, f) in faults.iter().enumerate() {
        let bad = |reason: &str| {
            Err(FaultError::Invalid {
                index,
                reason: reason.to_string(),
            })
        };
        let compatible = matches!(
            (&f.target, &f.kind),
            (
                FaultTarget::Actuator(_),
                FaultKind::LossOfEffectiveness { .. } | FaultKind::StuckAt { .. }
            ) | (
                FaultTarget::Sensor(_),
                FaultKind::SignalLoss { .. } | FaultKind::BiasJump { .. } | FaultKind::NoiseScale { .. }
            ) | (FaultTarget::Wind, FaultKind::GustOverride { .. })
                | (FaultTarget::Payload, FaultKind::MassChange { .. })
        );
        if !compatible {
            return bad(&format!("{} cannot target {}", f.kind.name(), f.target));
        }
        if let FaultTarget::Actuator(i) = f.target {
            if i >= n_actuators {
                return bad(&format!("actuator index {i} out of range (vehicle has {n_actuators})"));
            }
        }
        match f.trigger {
            Trigger::At(t) if !(t >= 0.0 && t.is_finite()) => return bad("trigger time must be >= 0"),
            Trigger::AltitudeAbove(x) | Trigger::AltitudeBelow(x) | Trigger::SpeedAbove(x) if !x.is_finite() => {
                return bad("trigger threshold must be finite")
            }
            _ => {}
        }
        if let Some(d) = f.duration {
            if !(d > 0.0 && d.is_finite()) {
                return bad("duration must be positive");
            }
        }
        match &f.kind {
            FaultKind::LossOfEffectiveness { factor } if !(0.0..=1.0).contains(factor) => {
                return bad("loss-of-effectiveness factor must lie in [0, 1]")
            }
            FaultKind::StuckAt { value: Some(v) } if !(v.is_finite() && *v >= 0.0) => {
                return bad("stuck-at value must be a finite non-negative speed")
            }
            FaultKind::NoiseScale { factor } if !(*factor >= 1.0 && factor.is_finite()) => {
                return bad("noise scale must be >= 1")
            }
            FaultKind::BiasJump { offset } if !offset.iter().all(|x| x.is_finite()) => {
                return bad("bias offset must be finite")
            }
            FaultKind::GustOverride {
                amplitude_e,
                gust_duration,
            } if !(amplitude_e.iter().all(|x| x.is_finite()) && *gust_duration > 0.0) => {
                return bad("gust needs a finite amplitude and positive duration")
            }
            FaultKind::MassChange { delta } if !(mass + delta > 0.0 && delta.is_finite()) => {
                return bad("mass change would leave a non-positive mass")
            }
            _ => {}
        }
    }
    for i in 0..faults.len() {
        for j in i + 1..faults.len() {
            let (a, b) = (&faults[i], &faults[j]);
            if a.target != b.target || a.kind.name() != b.kind.name() {
                continue;
            }
            // state triggers have no known window, so any pairing may overlap
            let overlap = match (a.trigger, b.trigger) {
                (Trigger::At(ta), Trigger::At(tb)) => {
                    let end = |t: f64, d: Option<f64>| d.map_or(f64::INFINITY, |d| t + d);
                    ta < end(tb, b.duration) && tb < end(ta, a.duration)
                }
                _ => true,
            };
            if overlap {
                return Err(FaultError::Conflict(i, j));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultEventKind {
    Activated,
    Deactivated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultEvent {
    pub t: f64,
    pub index: usize,
    pub kind: FaultEventKind,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Pending,
    Active { since: f64, stuck: Option<f64> },
    Done,
}

/// Effects of the currently active faults.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveEffects {
    /// Thrust/torque factor per actuator.
    pub effectiveness: Vec<Option<f64>>,
    /// Frozen rotor speed per actuator.
    pub stuck: Vec<Option<f64>>,
    pub sensors: [ChannelFault; 5],
    pub gust: Option<GustConfig>,
    pub mass_delta: Option<f64>,
}

impl ActiveEffects {
    fn none(n_actuators: usize) -> Self {
        Self {
            effectiveness: vec![None; n_actuators],
            stuck: vec![None; n_actuators],
            sensors: [ChannelFault::default(); 5],
            gust: None,
            mass_delta: None,
        }
    }

    pub fn any_actuator(&self) -> bool {
        self.effectiveness.iter().chain(&self.stuck).any(Option::is_some)
    }
}

/// Tracks trigger and expiry of every fault in a validated schedule.
#[derive(Debug, Clone)]
pub struct FaultEngine {
    faults: Vec<FaultSpec>,
    phases: Vec<Phase>,
    effects: ActiveEffects,
}

impl FaultEngine {
    pub fn new(faults: Vec<FaultSpec>, n_actuators: usize, mass: f64) -> Result<Self, FaultError> {
        validate_schedule(&faults, n_actuators, mass)?;
        Ok(Self {
            phases: vec![Phase::Pending; faults.len()],
            faults,
            effects: ActiveEffects::none(n_actuators),
        })
    }

    pub fn schedule(&self) -> &[FaultSpec] {
        &self.faults
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn effects(&self) -> &ActiveEffects {
        &self.effects
    }

    pub fn active(&self) -> impl Iterator<Item = &FaultSpec> {
        self.faults
            .iter()
            .zip(&self.phases)
            .filter(|(_, p)| matches!(p, Phase::Active { .. }))
            .map(|(f, _)| f)
    }

    /// Advances the schedule to the tick boundary at `t`. `rotor_speeds` are
    /// the current actuator outputs, captured by stuck-at faults on
    /// activation. Returns the transitions that happened at this boundary.
    pub fn update(&mut self, t: f64, state: &VehicleState, rotor_speeds: &[f64]) -> Vec<FaultEvent> {
        let mut events = Vec::new();
        if self.faults.is_empty() {
            return events;
        }
        let mut changed = false;
        for (index, (f, phase)) in self.faults.iter().zip(self.phases.iter_mut()).enumerate() {
            let event = |kind| FaultEvent {
                t,
                index,
                kind,
                description: f.describe(),
            };
            if let Phase::Pending = phase {
                if f.trigger.fires(t, state) {
                    let stuck = match (&f.kind, f.target) {
                        (FaultKind::StuckAt { value }, FaultTarget::Actuator(i)) => {
                            Some(value.unwrap_or(rotor_speeds.get(i).copied().unwrap_or(0.0)))
                        }
                        _ => None,
                    };
                    *phase = Phase::Active { since: t, stuck };
                    events.push(event(FaultEventKind::Activated));
                    changed = true;
                }
            }
            if let Phase::Active { since, .. } = *phase {
                if f.duration.is_some_and(|d| t >= since + d) {
                    *phase = Phase::Done;
                    events.push(event(FaultEventKind::Deactivated));
                    changed = true;
                }
            }
        }
        if changed {
            self.rebuild_effects();
        }
        events
    }

    fn rebuild_effects(&mut self) {
        let mut e = ActiveEffects::none(self.effects.effectiveness.len());
        for (f, phase) in self.faults.iter().zip(&self.phases) {
            let Phase::Active { since, stuck } = *phase else {
                continue;
            };
            match (f.target, &f.kind) {
                (FaultTarget::Actuator(i), FaultKind::LossOfEffectiveness { factor }) => {
                    e.effectiveness[i] = Some(*factor)
                }
                (FaultTarget::Actuator(i), FaultKind::StuckAt { .. }) => e.stuck[i] = stuck,
                (FaultTarget::Sensor(c), kind) => {
                    let ch = &mut e.sensors[c.index()];
                    match kind {
                        FaultKind::SignalLoss { policy } => ch.loss = Some(*policy),
                        FaultKind::BiasJump { offset } => ch.bias_offset = Some(*offset),
                        FaultKind::NoiseScale { factor } => ch.noise_scale = *factor,
                        _ => {}
                    }
                }
                (
                    FaultTarget::Wind,
                    FaultKind::GustOverride {
                        amplitude_e,
                        gust_duration,
                    },
                ) => {
                    e.gust = Some(GustConfig {
                        amplitude_e: *amplitude_e,
                        start: since,
                        duration: *gust_duration,
                    })
                }
                (FaultTarget::Payload, FaultKind::MassChange { delta }) => e.mass_delta = Some(*delta),
                _ => {}
            }
        }
        self.effects = e;
    }
}
