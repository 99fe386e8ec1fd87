//! Plans around a wall with RRT* and shows the cost falling as the tree is
//! refined.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbamp::grid::{Cell, OccupancyGrid};
use sbamp::planner::{plan_detailed, PlannerConfig};
use sbamp::Vec2;

fn main() {
    let mut map = OccupancyGrid::covering(0.0, 0.0, 10.0, 10.0, 0.05, Cell::Free).unwrap();
    map.fill_rect(4.0, 2.0, 5.0, 10.0, Cell::Occupied);
    let (start, goal) = (Vec2::new(1.0, 8.0), Vec2::new(9.0, 8.0));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let out = plan_detailed(&map, start, goal, &PlannerConfig::default(), &mut rng).unwrap();

    let first = out.best_cost_history.iter().position(|c| c.is_finite()).unwrap();
    println!("first solution at iteration {} with cost {:.3} m", first + 1, out.best_cost_history[first]);
    for it in [500, 1000, 2000, 5000] {
        println!("best cost after {it:>4} iterations: {:.3} m", out.best_cost_history[it - 1]);
    }
    let short = out.path.shortcut(&map);
    println!("tree nodes {}, path {} waypoints, shortcut to {} ({:.3} m)", out.tree.len(), out.path.len(), short.len(), short.cost);
    print!("{}", short.to_csv());
}
