//! Constant-steering circles against L / tan(delta), and the RK4 error
//! shrinking sixteenfold per halved step.

use sbamp::vehicle::{DriveCommand, VehicleParams, VehicleState};
use sbamp::{Pose, Vec2};

fn main() {
    let params = VehicleParams::default();
    for delta in [0.1f64, 0.2, 0.4] {
        let mut car = VehicleState::new(Pose::new(0.0, 0.0, 0.0), params);
        let radius = params.wheelbase / delta.tan();
        let centre = Vec2::new(0.0, radius);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            car = car.step(&DriveCommand { v: 1.0, delta }, 0.01);
            worst = worst.max(((car.position() - centre).norm() - radius).abs());
        }
        println!("delta {delta:.1} rad: radius {radius:.4} m, worst deviation {worst:.2e} m");
    }

    let cmd = DriveCommand { v: 1.0, delta: 0.35 };
    let w = cmd.v / params.wheelbase * cmd.delta.tan();
    let exact = Vec2::new(w.sin() / w, (1.0 - w.cos()) / w);
    let mut previous: Option<f64> = None;
    for steps in [5, 10, 20, 40, 80] {
        let mut car = VehicleState::new(Pose::new(0.0, 0.0, 0.0), params);
        for _ in 0..steps {
            car = car.step(&cmd, 1.0 / steps as f64);
        }
        let err = (car.position() - exact).norm();
        let order = previous.map_or(String::new(), |p| format!("  order {:.2}", (p / err).log2()));
        println!("{steps:>3} steps over 1 s: error {err:.3e}{order}");
        previous = Some(err);
    }
}
