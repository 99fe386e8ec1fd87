//! Feeds a stream of slightly different paths to the supervisor while it
//! drives a car, and prints every switch with the speed on either side.

use sbamp::ds::{Mat2, MixtureModel};
use sbamp::planner::WaypointPath;
use sbamp::supervisor::{Supervisor, SupervisorConfig};
use sbamp::vehicle::{SteeringGains, VehicleParams, VehicleState};
use sbamp::{Pose, Vec2};

fn main() {
    let cfg = SupervisorConfig::default();
    let mut sup = Supervisor::new(cfg.clone(), MixtureModel::single(-Mat2::identity(), Vec2::zeros(), cfg.eps_stab).unwrap()).unwrap();
    let mut car = VehicleState::new(Pose::new(0.0, 0.0, 0.0), VehicleParams::default());
    let mut speeds = Vec::new();
    for i in 0..(10.0 / cfg.dt_c) as usize {
        let t = i as f64 * cfg.dt_c;
        if i % 30 == 0 {
            let w = if (i / 30) % 2 == 0 { 0.3 } else { -0.3 };
            let pts = [(0.0, 0.0), (2.0, w), (4.0, 0.0), (6.0, w), (8.0, 0.0)];
            let path = WaypointPath::new(pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), t);
            sup.on_new_path(path, &car.position(), t);
        }
        let v = sup.control_step(&car.position(), t);
        speeds.push(v.norm());
        car = car.step(&car.ds_to_command(&v, &SteeringGains::default()), cfg.dt_c);
    }
    for e in sup.events() {
        let i = (e.t / cfg.dt_c).round() as usize;
        let before = if i == 0 { 0.0 } else { speeds[i - 1] };
        println!("{:6.3} s  {:16} {:14} speed {:.4} -> {:.4}", e.t, e.event.as_str(), e.detail, before, speeds[i]);
    }
    println!("tau_D {:.3} s, {} switches, dwell bound over the run holds: {}", sup.tau_d(), sup.switch_times().len(), sup.dwell_admissible(0.0, 10.0));
    println!("final position ({:.2}, {:.2})", car.pose.x, car.pose.y);
}
