//! Built-in scenarios for the three experiments.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CollisionPolicy, Scenario, ScenarioConfig, ScheduledPerturbation, Trigger};
use crate::geometry::Pose;
use crate::grid::{Cell, OccupancyGrid};
use crate::rng;
use crate::vehicle::{Direction, Perturbation};

const RESOLUTION: f64 = 0.05;

/// Anchor of the straightaway's side channel, m.
pub const CHANNEL_X: f64 = 6.0;
const CHANNEL_HALF_WIDTH: f64 = 0.35;
const CORRIDOR_HALF_WIDTH: f64 = 0.75;

/// Straight corridor `y in [-0.75, 0.75]`, 24 m long, with a dead-end side
/// channel (0.7 m wide, reaching `y = 4.5`) at `x = 6`. Before every planning cycle
/// the vehicle is placed `delta_d` meters to the left of the corridor
/// centre at the channel, so larger offsets start the planner deeper in the
/// channel.
pub fn straightaway(delta_d: f64, runs: usize) -> Scenario {
    let mut map = OccupancyGrid::covering(-0.5, -1.5, 24.5, 5.0, RESOLUTION, Cell::Occupied).unwrap();
    map.fill_rect(0.0, -CORRIDOR_HALF_WIDTH, 24.0, CORRIDOR_HALF_WIDTH, Cell::Free);
    map.fill_rect(CHANNEL_X - CHANNEL_HALF_WIDTH, 0.0, CHANNEL_X + CHANNEL_HALF_WIDTH, 4.5, Cell::Free);
    let place = Perturbation::CornerTrap { pose: Pose::new(CHANNEL_X, delta_d, 0.0) };
    let config = ScenarioConfig {
        name: format!("straightaway_dd{delta_d}"),
        start: Pose::new(CHANNEL_X, 0.0, 0.0),
        goal: [23.5, 0.0],
        route: vec![[0.5, 0.0], [23.5, 0.0]],
        dt_g: 0.2,
        duration: 10.0,
        perturbations: vec![ScheduledPerturbation { trigger: Trigger::EachPlanCycle, perturbation: place }],
        seeds: (0..runs as u64).collect(),
        collision_policy: CollisionPolicy::Halt,
        ..ScenarioConfig::default()
    };
    Scenario::new(config, map).expect("built-in scenario is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorridorDisturbance {
    Translate,
    Rotate,
    CornerTrap,
}

impl CorridorDisturbance {
    pub fn as_str(self) -> &'static str {
        match self {
            CorridorDisturbance::Translate => "translate",
            CorridorDisturbance::Rotate => "rotate",
            CorridorDisturbance::CornerTrap => "corner_trap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "translate" => Some(CorridorDisturbance::Translate),
            "rotate" => Some(CorridorDisturbance::Rotate),
            "corner_trap" => Some(CorridorDisturbance::CornerTrap),
            _ => None,
        }
    }

    /// Magnitude range searched by the threshold experiment.
    pub fn range(self) -> (f64, f64) {
        match self {
            CorridorDisturbance::Translate => (0.0, 0.85),
            CorridorDisturbance::Rotate => (0.0, std::f64::consts::PI),
            CorridorDisturbance::CornerTrap => (0.0, 0.4),
        }
    }
}

/// Trap pose for the corridor: facing the obstacle block 0.9 m ahead, with
/// the side gap to the upper wall shrinking from 0.5 m as `magnitude` grows.
pub fn corner_trap_pose(magnitude: f64) -> Pose {
    Pose::new(3.2 - 0.9, 1.0 - (0.5 - magnitude), 0.0)
}

/// A 5 m x 2 m corridor with a block on the upper wall. Shoves and spins
/// fire after 0.5 m of progress, the trap after 1 m.
pub fn corridor(disturbance: CorridorDisturbance, magnitude: f64, seeds: &[u64]) -> Scenario {
    let mut map = OccupancyGrid::covering(-0.5, -1.5, 5.5, 1.5, RESOLUTION, Cell::Occupied).unwrap();
    map.fill_rect(0.0, -1.0, 5.0, 1.0, Cell::Free);
    map.fill_rect(3.2, 0.4, 3.6, 1.0, Cell::Occupied);
    let perturbation = match disturbance {
        CorridorDisturbance::Translate => Perturbation::Translate { distance: magnitude, direction: Direction::Left },
        CorridorDisturbance::Rotate => Perturbation::Rotate { angle: magnitude },
        CorridorDisturbance::CornerTrap => Perturbation::CornerTrap { pose: corner_trap_pose(magnitude) },
    };
    let trigger_at = match disturbance {
        CorridorDisturbance::CornerTrap => 1.0,
        _ => 0.5,
    };
    let config = ScenarioConfig {
        name: format!("corridor_{}_{magnitude}", disturbance.as_str()),
        start: Pose::new(0.4, 0.0, 0.0),
        goal: [4.4, 0.0],
        route: vec![[0.4, 0.0], [4.4, 0.0]],
        duration: 20.0,
        perturbations: vec![ScheduledPerturbation { trigger: Trigger::PastArclength(trigger_at), perturbation }],
        seeds: seeds.to_vec(),
        ..ScenarioConfig::default()
    };
    Scenario::new(config, map).expect("built-in scenario is valid")
}

/// One lap of a rectangular loop (12 m x 8 m outside, 3 m lanes) with a
/// random block near one wall of the top straight, then a random lateral
/// shove of up to 1 m and a random spin of up to 90 degrees, both on the
/// bottom straight. `scale` multiplies both perturbation magnitudes.
pub fn loop_track(seed: u64, scale: f64) -> Scenario {
    let mut r = rng::stream(seed, 0x100F);
    let mut map = OccupancyGrid::covering(-0.5, -0.5, 12.5, 8.5, RESOLUTION, Cell::Occupied).unwrap();
    map.fill_rect(0.0, 0.0, 12.0, 8.0, Cell::Free);
    map.fill_rect(3.0, 3.0, 9.0, 5.0, Cell::Occupied);
    let bx = r.random_range(4.0..8.0);
    let side = if r.random_bool(0.5) { 1.0 } else { -1.0 };
    let by = 6.5 + side * r.random_range(0.75..0.95);
    map.fill_rect(bx - 0.2, by - 0.2, bx + 0.2, by + 0.2, Cell::Occupied);

    let shove = Perturbation::Translate {
        distance: scale * r.random_range(0.0..1.0),
        direction: if r.random_bool(0.5) { Direction::Left } else { Direction::Right },
    };
    let spin = Perturbation::Rotate { angle: scale * r.random_range(-FRAC_PI_2..FRAC_PI_2) };
    let shove_at = r.random_range(0.5..1.5);
    let spin_at = r.random_range(3.5..4.5);
    let config = ScenarioConfig {
        name: format!("loop_seed{seed}"),
        start: Pose::new(4.0, 1.5, 0.0),
        goal: [3.0, 1.5],
        route: vec![
            [4.0, 1.5],
            [9.5, 1.5],
            [10.5, 2.5],
            [10.5, 5.5],
            [9.5, 6.5],
            [2.5, 6.5],
            [1.5, 5.5],
            [1.5, 2.5],
            [2.5, 1.5],
            [3.0, 1.5],
        ],
        duration: 90.0,
        perturbations: vec![
            ScheduledPerturbation { trigger: Trigger::PastArclength(shove_at), perturbation: shove },
            ScheduledPerturbation { trigger: Trigger::PastArclength(spin_at), perturbation: spin },
        ],
        seeds: vec![seed],
        planning_inflation: 0.3,
        ..ScenarioConfig::default()
    };
    Scenario::new(config, map).expect("built-in scenario is valid")
}
