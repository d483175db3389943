//! Full pipeline: takes off to 10 m under the reference controller and prints the trajectory.

use uavsim::frames::Vec3;
use uavsim::harness::{all_metrics, LoadedScenario};
use uavsim::refctrl::Setpoint;
use uavsim::simloop::{run, ScriptEntry, SimSetup, VehicleConfig};

fn main() {
    // a scenario file path may be given; otherwise the builtin vehicle flies a default script
    let setup = match std::env::args().nth(1) {
        Some(path) => LoadedScenario::load(path.as_ref()).expect("valid scenario").setup,
        None => {
            let mut s = SimSetup::new(VehicleConfig::f450());
            s.sim.stop_time = 20.0;
            s.script = vec![ScriptEntry {
                t: 1.0,
                setpoint: Setpoint::Position {
                    position: Vec3::new(0.0, 0.0, -10.0),
                    yaw: 0.0,
                },
            }];
            s
        }
    };
    let r = run(setup).expect("valid setup");
    let log = &r.log;
    let col = |n: &str| log.column(n).expect("logged column");
    let (t, z, est_z, roll, pitch) = (col("t"), col("z"), col("est_z"), col("roll"), col("pitch"));
    let every = (log.rows.len() / 20).max(1);
    for row in log.rows.iter().step_by(every) {
        println!(
            "t={:6.2}  alt={:7.3} m  est={:7.3} m  roll={:+6.2} deg  pitch={:+6.2} deg",
            row[t],
            -row[z],
            -row[est_z],
            row[roll].to_degrees(),
            row[pitch].to_degrees()
        );
    }
    println!("termination: {:?}", r.termination);
    println!(
        "{:.2} s simulated in {:.3} s ({:.0}x real time)",
        r.sim_time,
        r.wall_time,
        r.sim_time / r.wall_time
    );
    for (name, value) in all_metrics(log).expect("complete log") {
        println!("{name}: {value:?}");
    }
}
