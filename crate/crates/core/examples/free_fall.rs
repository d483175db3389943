//! Drops a body from rest with gravity only and compares against 1/2 g t^2.

use uavsim::environment::G0;
use uavsim::frames::{Rotation, Vec3};
use uavsim::rigidbody::{step, BodyParams, ForceMoment, VehicleState};

fn main() {
    let body = BodyParams::diagonal(1.4, 0.0211, 0.0219, 0.0366).expect("valid body");
    let weight = ForceMoment::new(Vec3::new(0.0, 0.0, body.mass() * G0), Vec3::zeros());
    let dt = 1e-3;
    let mut s = VehicleState::at_rest(Vec3::zeros(), Rotation::identity());
    println!("{:>6} {:>14} {:>14} {:>10}", "t", "z", "g t^2 / 2", "error");
    for k in 1..=1000 {
        s = step(&s, &body, &weight, dt).expect("finite step");
        if k % 100 == 0 {
            let t = k as f64 * dt;
            let exact = 0.5 * G0 * t * t;
            println!("{t:6.2} {:14.9} {:14.9} {:10.2e}", s.p_e.z, exact, s.p_e.z - exact);
        }
    }
}
