//! Force and moment aggregation.
//!
//! The body-frame wrench is the superposition of aerodynamic, gravity,
//! ground-contact and per-actuator contributions, each resolved at the
//! centre of mass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{EnvSample, ISA_RHO0};
use crate::frames::Vec3;
use crate::rigidbody::{ForceMoment, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForceModelError {
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
    #[error("reference mixer needs four rotors in X layout: {0}")]
    NotQuadX(&'static str),
}

/// Quadratic drag on the relative airspeed plus linear rotational damping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeroParams {
    /// Diagonal drag coefficients (area folded in), body axes.
    pub drag: Vec3,
    /// Rotational damping, N m / (rad/s), body axes.
    pub rotational_damping: Vec3,
}

impl AeroParams {
    pub fn none() -> Self {
        Self {
            drag: Vec3::zeros(),
            rotational_damping: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<(), ForceModelError> {
        if self
            .drag
            .iter()
            .chain(self.rotational_damping.iter())
            .all(|c| *c >= 0.0 && c.is_finite())
        {
            Ok(())
        } else {
            Err(ForceModelError::InvalidParams(
                "aerodynamic coefficients must be non-negative",
            ))
        }
    }
}

/// Penalty ground contact on a set of body-frame contact points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Ground plane height above the NED origin, m.
    pub ground_altitude: f64,
    /// Total vertical stiffness, N/m, shared equally between contact points.
    pub stiffness: f64,
    /// Total damping, N/(m/s), shared equally; also the viscous friction
    /// coefficient before the Coulomb cap.
    pub damping: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Penetration over which normal damping ramps in, m. Keeps the normal
    /// force continuous at touchdown.
    pub damping_ramp: f64,
    /// Contact points in the body frame, m.
    pub points: Vec<Vec3>,
}

impl ContactParams {
    /// Bottom corners of a cuboid with half-extents `(hx, hy)` whose base
    /// sits `hz` below the centre of mass.
    pub fn cuboid(hx: f64, hy: f64, hz: f64, stiffness: f64, damping: f64, friction: f64) -> Self {
        Self {
            ground_altitude: 0.0,
            stiffness,
            damping,
            friction,
            damping_ramp: 0.005,
            points: vec![
                Vec3::new(hx, hy, hz),
                Vec3::new(hx, -hy, hz),
                Vec3::new(-hx, -hy, hz),
                Vec3::new(-hx, hy, hz),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), ForceModelError> {
        if !(self.stiffness > 0.0) {
            return Err(ForceModelError::InvalidParams("contact stiffness must be positive"));
        }
        if !(self.damping >= 0.0 && self.friction >= 0.0 && self.damping_ramp >= 0.0) {
            return Err(ForceModelError::InvalidParams(
                "contact damping/friction must be non-negative",
            ));
        }
        if self.points.is_empty() {
            return Err(ForceModelError::InvalidParams("contact needs at least one point"));
        }
        Ok(())
    }

    /// NED z of the ground plane.
    pub fn ground_z(&self) -> f64 {
        -self.ground_altitude
    }
}

/// One rotor: position, spin sense and aerodynamic coefficients.
///
/// `spin` is the sign of the reaction torque about body z (down): a
/// propeller turning clockwise seen from above has `spin = -1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorGeometry {
    pub position: Vec3,
    pub spin: f64,
    /// Thrust coefficient, N/(rad/s)^2 at sea-level density.
    pub c_t: f64,
    /// Torque coefficient, N m/(rad/s)^2 at sea-level density.
    pub c_m: f64,
}

impl RotorGeometry {
    pub fn validate(&self) -> Result<(), ForceModelError> {
        if !(self.c_t > 0.0 && self.c_m > 0.0) {
            return Err(ForceModelError::InvalidParams("rotor coefficients must be positive"));
        }
        if self.spin != 1.0 && self.spin != -1.0 {
            return Err(ForceModelError::InvalidParams("rotor spin must be +1 or -1"));
        }
        Ok(())
    }

    /// X quadrotor, rotor order front-right, rear-left, front-left,
    /// rear-right; the first two spin counter-clockwise seen from above.
    pub fn quad_x(arm: f64, c_t: f64, c_m: f64) -> Vec<RotorGeometry> {
        let d = arm / 2f64.sqrt();
        [(d, d, 1.0), (-d, -d, 1.0), (d, -d, -1.0), (-d, d, -1.0)]
            .into_iter()
            .map(|(x, y, spin)| RotorGeometry {
                position: Vec3::new(x, y, 0.0),
                spin,
                c_t,
                c_m,
            })
            .collect()
    }
}

/// Checks a rotor set; a four-rotor set must have balanced spin.
pub fn validate_rotors(rotors: &[RotorGeometry]) -> Result<(), ForceModelError> {
    for r in rotors {
        r.validate()?;
    }
    if rotors.len() == 4 && rotors.iter().map(|r| r.spin).sum::<f64>() != 0.0 {
        return Err(ForceModelError::InvalidParams("quadrotor spins must cancel"));
    }
    Ok(())
}

/// Wrench of one rotor spinning at `delta` rad/s, resolved at the centre of mass.
///
/// Thrust and reaction torque scale with `rho / rho0`.
pub fn actuator_wrench(geom: &RotorGeometry, delta: f64, env: &EnvSample) -> ForceMoment {
    let density = env.rho / ISA_RHO0;
    let d2 = delta * delta;
    let force = Vec3::new(0.0, 0.0, -density * geom.c_t * d2);
    let reaction = Vec3::new(0.0, 0.0, density * geom.spin * geom.c_m * d2);
    ForceMoment::new(force, geom.position.cross(&force) + reaction)
}

/// Aerodynamic wrench from the relative air velocity.
pub fn aero_wrench(state: &VehicleState, env: &EnvSample, aero: &AeroParams) -> ForceMoment {
    let v_rel_e = env.wind_e - state.att.rotate(&state.v_b);
    let v_rel_b = state.att.inverse_rotate(&v_rel_e);
    let force = v_rel_b.component_mul(&aero.drag) * (0.5 * env.rho * v_rel_b.norm());
    let moment = -state.w_b.component_mul(&aero.rotational_damping);
    ForceMoment::new(force, moment)
}

/// Weight expressed in the body frame.
pub fn gravity_wrench(state: &VehicleState, env: &EnvSample, mass: f64) -> ForceMoment {
    ForceMoment::new(
        state.att.inverse_rotate(&Vec3::new(0.0, 0.0, mass * env.g)),
        Vec3::zeros(),
    )
}

/// Spring-damper ground reaction with Coulomb-capped viscous friction.
pub fn contact_wrench(state: &VehicleState, contact: &ContactParams) -> ForceMoment {
    let n = contact.points.len() as f64;
    let (k, c) = (contact.stiffness / n, contact.damping / n);
    let ground = contact.ground_z();
    let mut total = ForceMoment::zero();
    for r in &contact.points {
        let p = state.p_e + state.att.rotate(r);
        let depth = p.z - ground;
        if depth <= 0.0 {
            continue;
        }
        let v = state.att.rotate(&(state.v_b + state.w_b.cross(r)));
        let ramp = if contact.damping_ramp > 0.0 {
            (depth / contact.damping_ramp).min(1.0)
        } else {
            1.0
        };
        let normal = (k * depth + c * ramp * v.z).max(0.0);
        let mut friction = -Vec3::new(v.x, v.y, 0.0) * c;
        let cap = contact.friction * normal;
        let mag = friction.norm();
        if mag > cap {
            friction = if mag > 0.0 {
                friction * (cap / mag)
            } else {
                Vec3::zeros()
            };
        }
        let f_e = friction + Vec3::new(0.0, 0.0, -normal);
        let f_b = state.att.inverse_rotate(&f_e);
        total += ForceMoment::new(f_b, r.cross(&f_b));
    }
    total
}

/// True when any contact point is at or below the ground plane.
pub fn in_contact(state: &VehicleState, contact: &ContactParams) -> bool {
    let ground = contact.ground_z();
    contact
        .points
        .iter()
        .any(|r| (state.p_e + state.att.rotate(r)).z >= ground)
}

/// Per-source wrench components for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WrenchComponents {
    pub aero: ForceMoment,
    pub gravity: ForceMoment,
    pub contact: ForceMoment,
    pub actuators: ForceMoment,
}

impl WrenchComponents {
    pub fn total(&self) -> ForceMoment {
        self.aero + self.gravity + self.contact + self.actuators
    }
}

/// Evaluates every wrench source at `state`.
#[allow(clippy::too_many_arguments)]
pub fn total_wrench(
    state: &VehicleState,
    env: &EnvSample,
    deltas: &[f64],
    aero: &AeroParams,
    contact: &ContactParams,
    rotors: &[RotorGeometry],
    mass: f64,
) -> WrenchComponents {
    WrenchComponents {
        aero: aero_wrench(state, env, aero),
        gravity: gravity_wrench(state, env, mass),
        contact: contact_wrench(state, contact),
        actuators: rotors
            .iter()
            .zip(deltas)
            .map(|(g, d)| actuator_wrench(g, *d, env))
            .sum(),
    }
}

/// Thrust and body torques `(T, roll, pitch, yaw)` from the textbook X-quad
/// mixing matrix, at sea-level density. Only accepts the [`RotorGeometry::quad_x`] layout.
pub fn quadcopter_mixer_reference(deltas: &[f64], rotors: &[RotorGeometry]) -> Result<[f64; 4], ForceModelError> {
    if rotors.len() != 4 || deltas.len() != 4 {
        return Err(ForceModelError::NotQuadX("rotor count"));
    }
    let d = rotors[0].position.x;
    let (c_t, c_m) = (rotors[0].c_t, rotors[0].c_m);
    let expect = [(d, d, 1.0), (-d, -d, 1.0), (d, -d, -1.0), (-d, d, -1.0)];
    for (r, (x, y, s)) in rotors.iter().zip(expect) {
        if r.position != Vec3::new(x, y, 0.0) || r.spin != s || r.c_t != c_t || r.c_m != c_m || d <= 0.0 {
            return Err(ForceModelError::NotQuadX("layout"));
        }
    }
    let w: Vec<f64> = deltas.iter().map(|x| x * x).collect();
    let thrust = c_t * (w[0] + w[1] + w[2] + w[3]);
    let roll = d * c_t * (-w[0] + w[1] + w[2] - w[3]);
    let pitch = d * c_t * (w[0] - w[1] + w[2] - w[3]);
    let yaw = c_m * (w[0] + w[1] - w[2] - w[3]);
    Ok([thrust, roll, pitch, yaw])
}
