//! Builds a map of a walled room from simulated lidar scans, then inflates
//! it for planning.

use sbamp::grid::{Cell, OccupancyGrid};
use sbamp::Pose;

fn main() {
    let mut truth = OccupancyGrid::covering(0.0, 0.0, 6.0, 4.0, 0.05, Cell::Free).unwrap();
    truth.close_border();
    truth.fill_rect(2.5, 1.0, 3.0, 3.0, Cell::Occupied);

    let mut map = OccupancyGrid::covering(0.0, 0.0, 6.0, 4.0, 0.05, Cell::Unknown).unwrap();
    for pose in [Pose::new(1.0, 2.0, 0.0), Pose::new(5.0, 2.0, std::f64::consts::PI), Pose::new(2.75, 0.5, 1.2)] {
        let scan = truth.simulate_scan(pose, 2.0 * std::f64::consts::PI, 720, 8.0);
        map.integrate_scan(&scan).unwrap();
        println!(
            "after scan from ({:.1}, {:.1}): free {}, occupied {}, unknown {}",
            pose.x,
            pose.y,
            map.count(Cell::Free),
            map.count(Cell::Occupied),
            map.count(Cell::Unknown)
        );
    }

    let mut inflated = map.clone();
    inflated.inflate(0.2);
    println!("inflated by 0.2 m: occupied {}", inflated.count(Cell::Occupied));
    println!("{}", inflated.to_map_string().lines().take(6).collect::<Vec<_>>().join("\n"));
}
