//! Failure thresholds for lateral jumps, spins and the corner trap in the
//! corridor, found by bisection.

use sbamp::experiments::{experiment2, CorridorDisturbance, Mode};

fn main() {
    let seeds = [0, 1, 2];
    for d in [CorridorDisturbance::Translate, CorridorDisturbance::Rotate, CorridorDisturbance::CornerTrap] {
        let (lo, hi) = d.range();
        for mode in [Mode::BareRrt, Mode::Sbamp] {
            let r = experiment2(mode, d, &seeds, 6).unwrap();
            println!("{:12} {:8} threshold {:.3} in [{lo}, {hi}] after {} trials", d.as_str(), mode.as_str(), r.threshold, r.rows.len());
        }
    }
}
