use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::Cell;

fn empty_map() -> OccupancyGrid {
    OccupancyGrid::new(0.05, Vec2::new(0.0, 0.0), 200, 200, Cell::Free).unwrap()
}

#[test]
fn steer_within_step_returns_target() {
    assert_eq!(steer(&Vec2::new(0.0, 0.0), &Vec2::new(0.3, 0.0), 1.0), Vec2::new(0.3, 0.0));
}

#[test]
fn steer_clips_to_step() {
    assert_eq!(steer(&Vec2::new(0.0, 0.0), &Vec2::new(10.0, 0.0), 1.0), Vec2::new(1.0, 0.0));
}

#[test]
fn steer_zero_length() {
    let p = Vec2::new(2.0, -1.0);
    assert_eq!(steer(&p, &p, 0.5), p);
}

#[test]
fn empty_map_plan_is_near_straight_line() {
    let g = empty_map();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = plan_detailed(&g, Vec2::new(1.0, 1.0), Vec2::new(9.0, 1.0), &PlannerConfig::default(), &mut rng)
        .unwrap();
    assert_eq!(out.iterations, 5000);
    assert!(out.path.cost <= 1.05 * 8.0, "cost {}", out.path.cost);
    assert!(out.path.cost >= 8.0);
    assert!(out.path.is_collision_free(&g));
    out.tree.check_invariants(1e-9).unwrap();
    assert!((out.path.cost - polyline_length(&out.path.waypoints)).abs() < 1e-12);
}

#[test]
fn goal_in_obstacle_is_invalid() {
    let mut g = empty_map();
    g.fill_rect(8.0, 0.0, 10.0, 2.0, Cell::Occupied);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let err = plan(&g, Vec2::new(1.0, 1.0), Vec2::new(9.0, 1.0), &PlannerConfig::default(), &mut rng).unwrap_err();
    assert!(matches!(err, PlanError::InvalidEndpoint { which: "goal", .. }));
}

#[test]
fn separating_wall_times_out() {
    let mut g = empty_map();
    g.fill_rect(4.9, 0.0, 5.1, 10.0, Cell::Occupied);
    let cfg = PlannerConfig { max_iterations: 800, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let err = plan(&g, Vec2::new(1.0, 1.0), Vec2::new(9.0, 1.0), &cfg, &mut rng).unwrap_err();
    assert_eq!(err, PlanError::Timeout { iterations: 800 });
}

#[test]
fn best_cost_is_monotone_and_runs_are_deterministic() {
    let mut g = empty_map();
    g.fill_rect(4.0, 2.0, 5.0, 10.0, Cell::Occupied);
    let cfg = PlannerConfig { max_iterations: 2000, ..Default::default() };
    for seed in 0..3 {
        let run = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            plan_detailed(&g, Vec2::new(1.0, 8.0), Vec2::new(9.0, 8.0), &cfg, &mut rng).unwrap()
        };
        let a = run(seed);
        let b = run(seed);
        assert_eq!(a.path, b.path);
        assert!(a.best_cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.path.is_collision_free(&g));
    }
}

#[test]
fn refinement_budget_stops_early() {
    let g = empty_map();
    let cfg = PlannerConfig { refine_iterations: Some(50), goal_bias: 0.2, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let out = plan_detailed(&g, Vec2::new(1.0, 1.0), Vec2::new(4.0, 1.0), &cfg, &mut rng).unwrap();
    let first = out.best_cost_history.iter().position(|c| c.is_finite()).unwrap() + 1;
    assert_eq!(out.iterations, first + 50);
}

#[derive(PartialEq)]
struct Entry(f64, usize);
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// 8-connected shortest path between cell centers over Free cells.
fn grid_dijkstra(g: &OccupancyGrid, from: Vec2, to: Vec2) -> f64 {
    let (w, h) = (g.width(), g.height());
    let s = g.world_to_cell(&from).unwrap();
    let t = g.world_to_cell(&to).unwrap();
    let mut dist = vec![f64::INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    dist[s.1 * w + s.0] = 0.0;
    heap.push(Entry(0.0, s.1 * w + s.0));
    while let Some(Entry(d, k)) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        let (i, j) = ((k % w) as i64, (k / w) as i64);
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                let (ni, nj) = (i + di, j + dj);
                if (di, dj) == (0, 0) || ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                    continue;
                }
                if g.get((ni as usize, nj as usize)) != Cell::Free {
                    continue;
                }
                let nk = nj as usize * w + ni as usize;
                let nd = d + g.resolution() * ((di * di + dj * dj) as f64).sqrt();
                if nd < dist[nk] {
                    dist[nk] = nd;
                    heap.push(Entry(nd, nk));
                }
            }
        }
    }
    dist[t.1 * w + t.0]
}

#[test]
fn plan_cost_respects_grid_shortest_path_bound() {
    let mut g = OccupancyGrid::new(0.5, Vec2::new(0.0, 0.0), 20, 20, Cell::Free).unwrap();
    g.fill_rect(3.0, 0.0, 3.5, 7.0, Cell::Occupied);
    g.fill_rect(6.5, 3.0, 7.0, 10.0, Cell::Occupied);
    let (start, goal) = (Vec2::new(1.0, 1.0), Vec2::new(9.0, 9.0));
    let octile_excess = 1.0 / (std::f64::consts::PI / 8.0).cos();
    let bound = grid_dijkstra(&g, start, goal) / octile_excess - 0.5 * 2f64.sqrt();
    let cfg = PlannerConfig { steer_step: 1.0, max_iterations: 3000, ..Default::default() };
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = plan(&g, start, goal, &cfg, &mut rng).unwrap();
        assert!(p.cost >= bound, "seed {seed}: cost {} < bound {bound}", p.cost);
        assert!(p.is_collision_free(&g));
    }
}
