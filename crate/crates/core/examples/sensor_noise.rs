//! Corrupts a constant gyro reading and reports noise and bias-walk statistics.

use uavsim::frames::Vec3;
use uavsim::sensors::{ErrorChannel, ProductErrorModel};

fn main() {
    let dt = 1e-3;
    let model = ProductErrorModel {
        noise_std: Vec3::repeat(0.005),
        ..ProductErrorModel::ideal()
    };
    let mut ch = ErrorChannel::new(model, 1);
    let truth = Vec3::new(0.1, -0.2, 0.05);
    let n = 200_000;
    let mut sum = Vec3::zeros();
    let mut sq = Vec3::zeros();
    for _ in 0..n {
        let e = ch.corrupt(&truth, &Vec3::zeros(), 0.0, 1.0, dt) - truth;
        sum += e;
        sq += e.component_mul(&e);
    }
    let mean = sum / n as f64;
    let std = (sq / n as f64 - mean.component_mul(&mean)).map(f64::sqrt);
    println!(
        "white noise: configured std 0.005, measured {:.5} {:.5} {:.5}",
        std.x, std.y, std.z
    );

    let walk = 1e-3;
    let seeds = 200;
    let t_end = 100.0;
    let steps = (t_end / dt) as usize / 10;
    let mut var = 0.0;
    for seed in 0..seeds {
        let mut ch = ErrorChannel::new(
            ProductErrorModel {
                bias_walk: Vec3::repeat(walk),
                ..ProductErrorModel::ideal()
            },
            seed,
        );
        for _ in 0..steps {
            ch.corrupt(&truth, &Vec3::zeros(), 0.0, 1.0, dt * 10.0);
        }
        var += ch.bias().norm_squared() / 3.0;
    }
    var /= seeds as f64;
    println!(
        "bias walk at t={t_end} s: variance {var:.3e}, expected sigma_b^2 t = {:.3e}",
        walk * walk * t_end
    );

    let mut ideal = ErrorChannel::new(ProductErrorModel::ideal(), 9);
    let out = ideal.corrupt(&truth, &Vec3::zeros(), 0.0, 1.0, dt);
    println!("identity model transparent: {}", out == truth);
}
