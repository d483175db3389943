use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uavsim::actuator::{actuator_step, identify_first_order, ActuatorParams, ActuatorState, LogSample};

const TRUE_C0: f64 = 100.0;
const TRUE_C1: f64 = 800.0;
const TRUE_TAU: f64 = 0.05;

fn synthetic_log(noise: Option<(f64, u64)>) -> Vec<LogSample> {
    let p = ActuatorParams::first_order(TRUE_C0, TRUE_C1, TRUE_TAU, 0.0, 2000.0, 1e9);
    let dt = 1e-3;
    let script = [(0.2, 400), (0.8, 500), (0.4, 500), (0.6, 400)];
    let mut state = ActuatorState::settled(&p, script[0].0);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.map_or(0, |n| n.1));
    let mut log = Vec::new();
    let mut k = 0usize;
    for (sigma, n) in script {
        for _ in 0..n {
            let mut delta = state.delta;
            if let Some((rel, _)) = noise {
                delta += Normal::new(0.0, rel * state.delta).unwrap().sample(&mut rng);
            }
            log.push(LogSample {
                sigma,
                delta,
                t: k as f64 * dt,
            });
            state = actuator_step(&state, &p, sigma, dt);
            k += 1;
        }
    }
    log
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn noiseless_log_recovers_parameters() {
    let fit = identify_first_order(&synthetic_log(None)).unwrap();
    assert!(rel(fit.c0, TRUE_C0) < 1e-6, "{fit:?}");
    assert!(rel(fit.c1, TRUE_C1) < 1e-6, "{fit:?}");
    assert!(rel(fit.tau, TRUE_TAU) < 1e-6, "{fit:?}");
    assert!(fit.rms_residual < 1e-6);
}

#[test]
fn noisy_logs_recover_parameters_within_five_percent() {
    for seed in 0..100 {
        let fit = identify_first_order(&synthetic_log(Some((0.01, seed)))).unwrap();
        assert!(rel(fit.c0, TRUE_C0) < 0.05, "seed {seed}: {fit:?}");
        assert!(rel(fit.c1, TRUE_C1) < 0.05, "seed {seed}: {fit:?}");
        assert!(rel(fit.tau, TRUE_TAU) < 0.05, "seed {seed}: {fit:?}");
    }
}
