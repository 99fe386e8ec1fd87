//! Incremental RRT* over an occupancy grid.

mod kdtree;
mod path;
mod tree;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::grid::{FreeSampler, GridError, OccupancyGrid};

pub use kdtree::KdTree;
pub use path::{polyline_length, PathParseError, WaypointPath};
pub use tree::{Node, Tree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("InvalidEndpoint: {which} ({x}, {y}) is not in free space")]
    InvalidEndpoint { which: &'static str, x: f64, y: f64 },
    #[error("PlanTimeout: no path within {iterations} iterations")]
    Timeout { iterations: usize },
    #[error("EmptyTree: nearest-neighbour query on an empty tree")]
    EmptyTree,
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl PlanError {
    /// Iterations spent before the error surfaced.
    pub fn iterations(&self) -> usize {
        match self {
            PlanError::Timeout { iterations } => *iterations,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Maximum extension length, meters.
    pub steer_step: f64,
    /// Rewiring-radius constant.
    pub rewire_gamma: f64,
    pub max_iterations: usize,
    /// A node within this distance of the goal (and with a free segment to
    /// it) completes a path, meters.
    pub goal_radius: f64,
    /// Probability of sampling the goal instead of free space.
    pub goal_bias: f64,
    /// Stop this many iterations after the first solution; `None` spends
    /// the whole `max_iterations` budget refining.
    pub refine_iterations: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            steer_step: 0.5,
            rewire_gamma: 12.0,
            max_iterations: 5000,
            goal_radius: 0.3,
            goal_bias: 0.05,
            refine_iterations: None,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.steer_step > 0.0) {
            return Err(PlanError::InvalidConfig("steer_step must be > 0".into()));
        }
        if !(self.rewire_gamma > 0.0) {
            return Err(PlanError::InvalidConfig("rewire_gamma must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(PlanError::InvalidConfig("goal_bias must lie in [0, 1)".into()));
        }
        if !(self.goal_radius >= 0.0) {
            return Err(PlanError::InvalidConfig("goal_radius must be >= 0".into()));
        }
        Ok(())
    }

    /// Neighbourhood radius once the tree holds `n` nodes.
    pub fn neighbor_radius(&self, n: usize) -> f64 {
        let n = n.max(2) as f64;
        (self.rewire_gamma * (n.ln() / n).sqrt()).min(self.steer_step)
    }
}

/// A successful search together with its bookkeeping.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub path: WaypointPath,
    /// Iterations consumed, including refinement.
    pub iterations: usize,
    pub tree: Tree,
    /// Best goal-reaching cost after each iteration (infinite before the
    /// first solution).
    pub best_cost_history: Vec<f64>,
}

/// Point at most `step` from `from` along the segment toward `toward`.
pub fn steer(from: &Vec2, toward: &Vec2, step: f64) -> Vec2 {
    let d = toward - from;
    let len = d.norm();
    if len <= step {
        *toward
    } else {
        from + d * (step / len)
    }
}

pub fn plan<R: Rng + ?Sized>(
    grid: &OccupancyGrid,
    start: Vec2,
    goal: Vec2,
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<WaypointPath, PlanError> {
    plan_detailed(grid, start, goal, config, rng).map(|o| o.path)
}

pub fn plan_detailed<R: Rng + ?Sized>(
    grid: &OccupancyGrid,
    start: Vec2,
    goal: Vec2,
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanOutcome, PlanError> {
    config.validate()?;
    if !grid.is_free(&start) {
        return Err(PlanError::InvalidEndpoint { which: "start", x: start.x, y: start.y });
    }
    if !grid.is_free(&goal) {
        return Err(PlanError::InvalidEndpoint { which: "goal", x: goal.x, y: goal.y });
    }
    let sampler = FreeSampler::new(grid)?;
    let mut tree = Tree::new(start);
    let mut goal_nodes: Vec<usize> = Vec::new();
    let mut history = Vec::with_capacity(config.max_iterations);
    let mut first_solution: Option<usize> = None;

    let reaches_goal = |p: &Vec2| {
        (p - goal).norm() <= config.goal_radius && grid.segment_free(p, &goal).unwrap_or(false)
    };
    if reaches_goal(&start) {
        goal_nodes.push(0);
        first_solution = Some(0);
    }

    let mut iterations = 0;
    while iterations < config.max_iterations {
        if let (Some(first), Some(refine)) = (first_solution, config.refine_iterations) {
            if iterations >= first + refine {
                break;
            }
        }
        iterations += 1;

        let target = if config.goal_bias > 0.0 && rng.random::<f64>() < config.goal_bias {
            goal
        } else {
            sampler.sample(grid, rng)
        };
        let nearest = tree.nearest(&target)?;
        let from = tree.node(nearest).position;
        let candidate = steer(&from, &target, config.steer_step);
        if candidate == from || !grid.segment_free(&from, &candidate).unwrap_or(false) {
            history.push(best_cost(&tree, &goal_nodes, &goal));
            continue;
        }

        let radius = config.neighbor_radius(tree.len() + 1);
        let neighbors = tree.near(&candidate, radius);

        // choose parent: cheapest free connection, lowest index on ties
        let mut parent = nearest;
        let mut parent_cost = tree.node(nearest).cost + (candidate - from).norm();
        for &n in &neighbors {
            let node = tree.node(n);
            let c = node.cost + (candidate - node.position).norm();
            if (c < parent_cost || (c == parent_cost && n < parent))
                && grid.segment_free(&node.position, &candidate).unwrap_or(false)
            {
                parent = n;
                parent_cost = c;
            }
        }
        let new = tree.add(candidate, parent);
        tree.rewire(new, &neighbors, grid);

        if reaches_goal(&candidate) {
            goal_nodes.push(new);
            first_solution.get_or_insert(iterations);
        }
        history.push(best_cost(&tree, &goal_nodes, &goal));
    }

    let Some(best) = best_goal_node(&tree, &goal_nodes, &goal) else {
        return Err(PlanError::Timeout { iterations });
    };
    let mut waypoints = tree.path_to(best);
    if waypoints.last() != Some(&goal) {
        waypoints.push(goal);
    }
    Ok(PlanOutcome {
        path: WaypointPath::new(waypoints, 0.0),
        iterations,
        tree,
        best_cost_history: history,
    })
}

fn best_goal_node(tree: &Tree, goal_nodes: &[usize], goal: &Vec2) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &g in goal_nodes {
        let c = tree.node(g).cost + (tree.node(g).position - goal).norm();
        if best.is_none_or(|(bc, bi)| c < bc || (c == bc && g < bi)) {
            best = Some((c, g));
        }
    }
    best.map(|(_, i)| i)
}

fn best_cost(tree: &Tree, goal_nodes: &[usize], goal: &Vec2) -> f64 {
    best_goal_node(tree, goal_nodes, goal)
        .map(|g| tree.node(g).cost + (tree.node(g).position - goal).norm())
        .unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests;
