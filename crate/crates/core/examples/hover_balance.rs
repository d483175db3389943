//! Finds the rotor speed that balances the weight and checks the net wrench.

use uavsim::environment::{EnvSample, G0};
use uavsim::forcemoment::{actuator_wrench, gravity_wrench, RotorGeometry};
use uavsim::frames::{Rotation, Vec3};
use uavsim::rigidbody::VehicleState;

fn main() {
    let mass = 1.4;
    let rotors = RotorGeometry::quad_x(0.225, 1.105e-5, 1.779e-7);
    let env = EnvSample::standard();
    let delta = (mass * env.g / (4.0 * rotors[0].c_t)).sqrt();
    let state = VehicleState::at_rest(Vec3::new(0.0, 0.0, -10.0), Rotation::identity());
    let mut force = gravity_wrench(&state, &env, mass).force;
    let mut moment = Vec3::zeros();
    for (i, r) in rotors.iter().enumerate() {
        let w = actuator_wrench(r, delta, &env);
        println!(
            "rotor {i}: thrust {:.6} N (mg/4 = {:.6} N)",
            -w.force.z,
            mass * G0 / 4.0
        );
        force += w.force;
        moment += w.moment;
    }
    println!("rotor speed {delta:.3} rad/s");
    println!("net force {:.3e} N, net moment {:.3e} N m", force.norm(), moment.norm());
}
