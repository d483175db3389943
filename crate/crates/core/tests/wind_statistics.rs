use uavsim::environment::{TurbulenceConfig, WindConfig, WindModel};
use uavsim::frames::Vec3;

const DT: f64 = 1e-3;

fn turbulence_only(sigma: Vec3, length: Vec3, seed: u64) -> WindModel {
    WindModel::new(
        WindConfig {
            turbulence: Some(TurbulenceConfig { sigma, length }),
            seed,
            ..Default::default()
        },
        0.0,
    )
}

fn series(model: &mut WindModel, airspeed: f64, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|k| model.sample(&Vec3::new(0.0, 0.0, -50.0), airspeed, k as f64 * DT, DT))
        .collect()
}

fn variance(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// First lag (interpolated, seconds) where the sample autocorrelation drops below 1/e.
fn correlation_time(x: &[f64]) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let target = (-1.0f64).exp();
    let mut prev = 1.0;
    for lag in 1..n / 10 {
        let r = c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / c0;
        if r < target {
            let frac = (prev - target) / (prev - r);
            return (lag as f64 - 1.0 + frac) * DT;
        }
        prev = r;
    }
    f64::INFINITY
}

#[test]
fn dryden_variance_matches_sigma() {
    let sigma = Vec3::new(1.5, 1.0, 0.7);
    let mut m = turbulence_only(sigma, Vec3::new(2.0, 2.0, 1.0), 11);
    let xs = series(&mut m, 20.0, 1_000_000);
    for axis in 0..3 {
        let col: Vec<f64> = xs.iter().map(|v| v[axis]).collect();
        let ratio = variance(&col) / (sigma[axis] * sigma[axis]);
        assert!((ratio - 1.0).abs() < 0.05, "axis {axis}: variance ratio {ratio}");
    }
}

#[test]
fn dryden_correlation_time_scales_with_airspeed() {
    for axis in 0..3 {
        let mut slow = turbulence_only(Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0), 5);
        let mut fast = turbulence_only(Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0), 5);
        let a: Vec<f64> = series(&mut slow, 20.0, 1_000_000).iter().map(|v| v[axis]).collect();
        let b: Vec<f64> = series(&mut fast, 40.0, 1_000_000).iter().map(|v| v[axis]).collect();
        let ratio = correlation_time(&a) / correlation_time(&b);
        assert!((ratio - 2.0).abs() < 0.2, "axis {axis}: ratio {ratio}");
    }
}

#[test]
fn longitudinal_correlation_time_is_length_over_airspeed() {
    let mut m = turbulence_only(Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0), 9);
    let u: Vec<f64> = series(&mut m, 20.0, 1_000_000).iter().map(|v| v.x).collect();
    let tau = correlation_time(&u);
    assert!((tau / 0.1 - 1.0).abs() < 0.1, "tau {tau}");
}
