//! Spins the car by 80 degrees in the corridor and compares the bare RRT*
//! follower with the learned-field controller.

use sbamp::experiments::{corridor, run_scenario, CorridorDisturbance, Mode};

fn main() {
    let scenario = corridor(CorridorDisturbance::Rotate, 80f64.to_radians(), &[0]);
    for mode in [Mode::BareRrt, Mode::Sbamp] {
        let log = run_scenario(&scenario, mode, 0).unwrap();
        let m = &log.metrics;
        println!(
            "{:8}: recovered {:5}  t_recover {:6.2} s  collisions {}  plans {}/{}  command rate {:5.1} Hz  goal error {:.2} m",
            mode.as_str(),
            m.recovered,
            m.time_to_recovery,
            m.collisions,
            m.successful_plans,
            m.plan_attempts,
            m.command_rate,
            m.final_goal_error
        );
        for row in log.trajectory.iter().step_by(60).take(8) {
            println!("    t {:5.2}  ({:5.2}, {:5.2})  heading {:5.2}  v {:.2}", row.t, row.x, row.y, row.theta, row.v_cmd);
        }
    }
}
