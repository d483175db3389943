//! Six-degree-of-freedom rigid body.
//!
//! Integrates
//!
//! ```text
//! p_e'  = R v_b
//! v_b'  = -w_b x v_b + F_b / m
//! R'    = R [w_b]x            (carried as a unit quaternion)
//! J w_b' = -w_b x (J w_b) + M_b
//! ```
//!
//! with classical fixed-step Runge-Kutta, force and moment held constant
//! across the step unless a state-dependent force law is supplied through
//! [`step_with`].

use nalgebra::{Matrix3, Quaternion, SymmetricEigen, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{Rotation, Vec3};

/// Largest accepted integration step, s.
pub const MAX_STEP: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("mass must be positive and finite, got {0}")]
    Mass(f64),
    #[error("inertia matrix is not symmetric")]
    InertiaAsymmetric,
    #[error("inertia matrix is not positive definite (smallest eigenvalue {0})")]
    InertiaNotPositive(f64),
    #[error("principal moments violate the triangle inequality")]
    InertiaTriangle,
    #[error("step size {0} s outside (0, {MAX_STEP}]")]
    StepSize(f64),
    #[error("non-finite {0} in state or input")]
    NonFinite(&'static str),
}

/// Total body-frame force and moment acting at the centre of mass.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceMoment {
    pub force: Vec3,
    pub moment: Vec3,
}

impl ForceMoment {
    pub fn new(force: Vec3, moment: Vec3) -> Self {
        Self { force, moment }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|c| c.is_finite())
    }
}

impl std::ops::Add for ForceMoment {
    type Output = ForceMoment;
    fn add(self, rhs: ForceMoment) -> ForceMoment {
        ForceMoment::new(self.force + rhs.force, self.moment + rhs.moment)
    }
}

impl std::ops::AddAssign for ForceMoment {
    fn add_assign(&mut self, rhs: ForceMoment) {
        self.force += rhs.force;
        self.moment += rhs.moment;
    }
}

impl std::iter::Sum for ForceMoment {
    fn sum<I: Iterator<Item = ForceMoment>>(iter: I) -> Self {
        iter.fold(ForceMoment::zero(), |a, b| a + b)
    }
}

/// Mass and inertia. Constructed through [`BodyParams::new`], which checks
/// physical admissibility and caches the inverse inertia.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBodyParams", into = "RawBodyParams")]
pub struct BodyParams {
    mass: f64,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBodyParams {
    mass: f64,
    inertia: [[f64; 3]; 3],
}

impl TryFrom<RawBodyParams> for BodyParams {
    type Error = DynamicsError;
    fn try_from(raw: RawBodyParams) -> Result<Self, Self::Error> {
        let j = Matrix3::from_fn(|r, c| raw.inertia[r][c]);
        BodyParams::new(raw.mass, j)
    }
}

impl From<BodyParams> for RawBodyParams {
    fn from(p: BodyParams) -> Self {
        let mut inertia = [[0.0; 3]; 3];
        for (r, row) in inertia.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = p.inertia[(r, c)];
            }
        }
        RawBodyParams { mass: p.mass, inertia }
    }
}

impl BodyParams {
    pub fn new(mass: f64, inertia: Matrix3<f64>) -> Result<Self, DynamicsError> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(DynamicsError::Mass(mass));
        }
        if inertia.iter().any(|c| !c.is_finite()) {
            return Err(DynamicsError::NonFinite("inertia"));
        }
        if (inertia - inertia.transpose()).abs().max() > 1e-12 {
            return Err(DynamicsError::InertiaAsymmetric);
        }
        let eig = SymmetricEigen::new(inertia).eigenvalues;
        let min = eig.min();
        if min <= 0.0 {
            return Err(DynamicsError::InertiaNotPositive(min));
        }
        let (a, b, c) = (eig[0], eig[1], eig[2]);
        let slack = 1e-12 * (a + b + c);
        if a + b + slack < c || a + c + slack < b || b + c + slack < a {
            return Err(DynamicsError::InertiaTriangle);
        }
        let inertia_inv = inertia.try_inverse().ok_or(DynamicsError::InertiaNotPositive(min))?;
        Ok(Self {
            mass,
            inertia,
            inertia_inv,
        })
    }

    pub fn diagonal(mass: f64, jx: f64, jy: f64, jz: f64) -> Result<Self, DynamicsError> {
        Self::new(mass, Matrix3::from_diagonal(&Vec3::new(jx, jy, jz)))
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }

    /// Same inertia with a different mass.
    pub fn with_mass(&self, mass: f64) -> Result<Self, DynamicsError> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(DynamicsError::Mass(mass));
        }
        Ok(Self { mass, ..self.clone() })
    }
}

/// Vehicle motion state plus the derived outputs refreshed after each step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Position, NED earth frame, m.
    pub p_e: Vec3,
    /// Velocity, body frame, m/s.
    pub v_b: Vec3,
    /// Body-to-earth attitude.
    pub att: Rotation,
    /// Angular rate, body frame, rad/s.
    pub w_b: Vec3,
    /// Velocity, earth frame, m/s (derived).
    pub v_e: Vec3,
    /// Body-frame velocity derivative, m/s^2 (derived).
    pub a_b: Vec3,
    /// Body angular acceleration, rad/s^2 (derived).
    pub alpha_b: Vec3,
}

impl VehicleState {
    pub fn at_rest(p_e: Vec3, att: Rotation) -> Self {
        Self {
            p_e,
            att,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.p_e, self.v_b, self.w_b, self.v_e, self.a_b, self.alpha_b]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
            && self.att.is_finite()
    }

    /// Inertial acceleration expressed in the body frame (`v_b' + w_b x v_b`).
    pub fn inertial_accel_b(&self) -> Vec3 {
        self.a_b + self.w_b.cross(&self.v_b)
    }

    /// Altitude above the NED origin, m.
    pub fn height(&self) -> f64 {
        -self.p_e.z
    }
}

/// Time derivative of the integrated states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub p_dot: Vec3,
    pub v_dot: Vec3,
    pub q_dot: Quaternion<f64>,
    pub w_dot: Vec3,
}

/// Right-hand side of the rigid-body equations.
pub fn derivatives(s: &VehicleState, params: &BodyParams, fm: &ForceMoment) -> StateDerivative {
    raw_derivative(&s.p_e, &s.v_b, s.att.quaternion().quaternion(), &s.w_b, params, fm)
}

fn raw_derivative(
    _p: &Vec3,
    v: &Vec3,
    q: &Quaternion<f64>,
    w: &Vec3,
    params: &BodyParams,
    fm: &ForceMoment,
) -> StateDerivative {
    let unit = UnitQuaternion::new_unchecked(*q);
    let p_dot = unit.transform_vector(v);
    let v_dot = -w.cross(v) + fm.force / params.mass;
    // q' = 1/2 q (x) (0, w)
    let q_dot = q * Quaternion::new(0.0, w.x, w.y, w.z) * 0.5;
    let jw = params.inertia * w;
    let w_dot = params.inertia_inv * (fm.moment - w.cross(&jw));
    StateDerivative {
        p_dot,
        v_dot,
        q_dot,
        w_dot,
    }
}

/// One RK4 step with `fm` held constant.
pub fn step(s: &VehicleState, params: &BodyParams, fm: &ForceMoment, dt: f64) -> Result<VehicleState, DynamicsError> {
    if !fm.is_finite() {
        return Err(DynamicsError::NonFinite("force/moment"));
    }
    step_with(s, params, dt, |_| *fm)
}

/// One RK4 step where the force law is re-evaluated at every stage.
///
/// `force` receives the stage state (position, velocity, attitude and rate
/// populated; derived outputs zeroed). The returned state's derived outputs
/// are computed from the force evaluated at the final state.
pub fn step_with<F>(s: &VehicleState, params: &BodyParams, dt: f64, mut force: F) -> Result<VehicleState, DynamicsError>
where
    F: FnMut(&VehicleState) -> ForceMoment,
{
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(DynamicsError::StepSize(dt));
    }
    if !s.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    let q0 = *s.att.quaternion().quaternion();

    let stage = |p: Vec3, v: Vec3, q: Quaternion<f64>, w: Vec3| VehicleState {
        p_e: p,
        v_b: v,
        att: Rotation::from_unit_quaternion(UnitQuaternion::new_unchecked(q)),
        w_b: w,
        ..Default::default()
    };
    let mut eval = |p: Vec3, v: Vec3, q: Quaternion<f64>, w: Vec3| {
        let fm = force(&stage(p, v, q, w));
        raw_derivative(&p, &v, &q, &w, params, &fm)
    };

    let k1 = eval(s.p_e, s.v_b, q0, s.w_b);
    let h = 0.5 * dt;
    let k2 = eval(
        s.p_e + k1.p_dot * h,
        s.v_b + k1.v_dot * h,
        q0 + k1.q_dot * h,
        s.w_b + k1.w_dot * h,
    );
    let k3 = eval(
        s.p_e + k2.p_dot * h,
        s.v_b + k2.v_dot * h,
        q0 + k2.q_dot * h,
        s.w_b + k2.w_dot * h,
    );
    let k4 = eval(
        s.p_e + k3.p_dot * dt,
        s.v_b + k3.v_dot * dt,
        q0 + k3.q_dot * dt,
        s.w_b + k3.w_dot * dt,
    );

    let sixth = dt / 6.0;
    let p = s.p_e + (k1.p_dot + (k2.p_dot + k3.p_dot) * 2.0 + k4.p_dot) * sixth;
    let v = s.v_b + (k1.v_dot + (k2.v_dot + k3.v_dot) * 2.0 + k4.v_dot) * sixth;
    let q = q0 + (k1.q_dot + (k2.q_dot + k3.q_dot) * 2.0 + k4.q_dot) * sixth;
    let w = s.w_b + (k1.w_dot + (k2.w_dot + k3.w_dot) * 2.0 + k4.w_dot) * sixth;

    if !(p.iter().chain(v.iter()).chain(w.iter()).all(|c| c.is_finite()) && q.coords.iter().all(|c| c.is_finite())) {
        return Err(DynamicsError::NonFinite("integrated state"));
    }
    let att = Rotation::from_unit_quaternion(UnitQuaternion::new_normalize(q));
    let mut next = VehicleState {
        p_e: p,
        v_b: v,
        att,
        w_b: w,
        ..Default::default()
    };
    let fm_end = force(&next);
    refresh_outputs(&mut next, params, &fm_end);
    Ok(next)
}

/// Recomputes `v_e`, `a_b` and `alpha_b` from the current state and `fm`.
pub fn refresh_outputs(s: &mut VehicleState, params: &BodyParams, fm: &ForceMoment) {
    let d = derivatives(s, params, fm);
    s.v_e = d.p_dot;
    s.a_b = d.v_dot;
    s.alpha_b = d.w_dot;
}

/// Rotational kinetic energy `1/2 w^T J w`.
pub fn rotational_energy(s: &VehicleState, params: &BodyParams) -> f64 {
    0.5 * s.w_b.dot(&(params.inertia * s.w_b))
}

/// Angular momentum expressed in the earth frame.
pub fn angular_momentum_e(s: &VehicleState, params: &BodyParams) -> Vec3 {
    s.att.rotate(&(params.inertia * s.w_b))
}
