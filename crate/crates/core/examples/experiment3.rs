//! Randomized shoves, spins and a random obstacle on the loop track.

use sbamp::experiments::{experiment3, Mode};

fn main() {
    let seeds: Vec<u64> = (0..20).collect();
    for mode in [Mode::BareRrt, Mode::Sbamp] {
        let r = experiment3(mode, &seeds, 1.0).unwrap();
        let failed: Vec<u64> = r.rows.iter().filter(|row| !row.recovered).map(|row| row.seed).collect();
        println!(
            "{:8}: recovery rate {:.2}, collisions {} ({} on recovered runs), failed seeds {:?}",
            mode.as_str(),
            r.recovery_rate,
            r.collisions,
            r.collisions_on_recovered,
            failed
        );
    }
}
