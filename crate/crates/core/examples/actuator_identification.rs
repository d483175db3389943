//! Logs a throttle step sequence from a motor model and identifies (c0, c1, tau).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uavsim::actuator::{actuator_step, identify_first_order, ActuatorParams, ActuatorState, LogSample};

fn main() {
    let truth = ActuatorParams::first_order(-141.4, 1148.0, 0.0136, 0.0, 1100.0, 1e9);
    let dt = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = ActuatorState::settled(&truth, 0.3);
    let mut log = Vec::new();
    for (k, sigma) in [0.3, 0.7, 0.5, 0.9, 0.4]
        .iter()
        .flat_map(|s| std::iter::repeat_n(*s, 300))
        .enumerate()
    {
        // 1% multiplicative tachometer noise
        let noisy = state.delta * (1.0 + Normal::new(0.0, 0.01).expect("valid").sample(&mut rng));
        log.push(LogSample {
            sigma,
            delta: noisy,
            t: k as f64 * dt,
        });
        state = actuator_step(&state, &truth, sigma, dt);
    }
    let fit = identify_first_order(&log).expect("identifiable log");
    println!("true       c0 {:9.3}  c1 {:9.3}  tau {:.5}", -141.4, 1148.0, 0.0136);
    println!(
        "identified c0 {:9.3}  c1 {:9.3}  tau {:.5}  (rms residual {:.2} rad/s)",
        fit.c0, fit.c1, fit.tau, fit.rms_residual
    );
    println!("hover throttle for 1.4 kg: {:.3}", {
        let per_rotor: f64 = 1.4 * 9.80665 / 4.0 / 1.105e-5;
        truth.throttle_for(per_rotor.sqrt())
    });
}
