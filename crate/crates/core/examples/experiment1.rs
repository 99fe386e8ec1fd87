//! Planning frequency against lateral teleport distance on the
//! straightaway.

use sbamp::experiments::{experiment1, frequency_curve};

fn main() {
    let e = experiment1(&[0.0, 1.0, 2.0, 2.5, 3.0, 4.0], 10).unwrap();
    println!("calibrated planner cost {:.2e} s per iteration", e.c_iter);
    println!("delta_d  bare_rrt f_plan  sbamp f_plan  sbamp command rate");
    for r in frequency_curve(&e) {
        println!("{:7.1}  {:12.2} Hz  {:9.2} Hz  {:15.1} Hz", r.delta_d, r.bare_rrt_f_plan_hz, r.sbamp_f_plan_hz, r.sbamp_command_rate_hz);
    }
}
