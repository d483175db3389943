//! Spins an asymmetric body with no applied wrench and tracks the invariants.

use uavsim::frames::{Rotation, Vec3};
use uavsim::rigidbody::{angular_momentum_e, rotational_energy, step, BodyParams, ForceMoment, VehicleState};

fn main() {
    let body = BodyParams::diagonal(1.0, 1.0, 2.0, 3.0).expect("valid body");
    let mut s = VehicleState::at_rest(Vec3::zeros(), Rotation::identity());
    s.w_b = Vec3::new(1.0, 1.0, 0.0);
    let e0 = rotational_energy(&s, &body);
    let h0 = angular_momentum_e(&s, &body).norm();
    let dt = 1e-3;
    let mut worst = (0.0f64, 0.0f64);
    for k in 1..=100_000 {
        s = step(&s, &body, &ForceMoment::zero(), dt).expect("finite step");
        let de = (rotational_energy(&s, &body) - e0).abs() / e0;
        let dh = (angular_momentum_e(&s, &body).norm() - h0).abs() / h0;
        worst = (worst.0.max(de), worst.1.max(dh));
        if k % 20_000 == 0 {
            let w = s.w_b;
            println!(
                "t={:5.1} s  w_b=({:+.4}, {:+.4}, {:+.4})  dE/E={de:.2e}  d|H|/|H|={dh:.2e}",
                k as f64 * dt,
                w.x,
                w.y,
                w.z
            );
        }
    }
    println!("worst relative drift: energy {:.2e}, momentum {:.2e}", worst.0, worst.1);
}
