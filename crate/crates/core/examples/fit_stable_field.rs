//! Fits a stable mixture of linear systems to a demonstration along an
//! L-shaped path and checks that the field contracts toward its end.

use sbamp::ds::{fit_warm, symmetric_part_max_eig, synthesize_demo, FitConfig};
use sbamp::planner::WaypointPath;
use sbamp::Vec2;

fn main() {
    let path = WaypointPath::new(vec![Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(3.0, 2.0)], 0.0);
    let demo = synthesize_demo(&path, 1.0, 0.05).unwrap();
    let (model, report) = fit_warm(&demo, 3, 0.1, &FitConfig::default(), None).unwrap();
    println!("{} samples, objective {:.5} -> {:.5}", demo.len(), report.initial_objective, report.objective);
    for (k, c) in model.components().iter().enumerate() {
        println!("component {k}: prior {:.3}, max eig(A+A^T) {:.4}", model.priors()[k], symmetric_part_max_eig(&c.a));
    }

    let mut x = Vec2::new(-0.5, 1.0);
    let dt = 0.02;
    for step in 0..=400 {
        if step % 100 == 0 {
            println!("t {:>4.1} s  x ({:.3}, {:.3})  V {:.5}", step as f64 * dt, x.x, x.y, (x - model.attractor()).norm_squared());
        }
        x += model.evaluate(&x) * dt;
    }
}
