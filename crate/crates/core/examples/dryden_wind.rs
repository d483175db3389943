//! Generates Dryden turbulence and reports per-axis variance and correlation time.

use uavsim::environment::{TurbulenceConfig, WindConfig, WindModel};
use uavsim::frames::Vec3;

fn correlation_time(x: &[f64], dt: f64) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>();
    (1..n / 10)
        .find(|&lag| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / c0 < (-1.0f64).exp())
        .map_or(f64::INFINITY, |lag| lag as f64 * dt)
}

fn main() {
    let turbulence = TurbulenceConfig {
        sigma: Vec3::new(1.5, 1.0, 0.7),
        length: Vec3::new(20.0, 20.0, 10.0),
    };
    println!(
        "sigma {:?} m/s, length {:?} m",
        turbulence.sigma.as_slice(),
        turbulence.length.as_slice()
    );
    let dt = 1e-3;
    for airspeed in [10.0, 20.0] {
        let mut model = WindModel::new(
            WindConfig {
                turbulence: Some(turbulence.clone()),
                seed: 42,
                ..Default::default()
            },
            0.0,
        );
        let xs: Vec<Vec3> = (0..600_000)
            .map(|k| model.sample(&Vec3::new(0.0, 0.0, -50.0), airspeed, k as f64 * dt, dt))
            .collect();
        for (axis, name) in ["u", "v", "w"].iter().enumerate() {
            let col: Vec<f64> = xs.iter().map(|v| v[axis]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            println!(
                "V={airspeed:4.1} m/s  {name}: variance {var:.4} (configured {:.4}), 1/e time {:.3} s",
                turbulence.sigma[axis].powi(2),
                correlation_time(&col, dt)
            );
        }
    }
}
