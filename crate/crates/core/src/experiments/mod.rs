//! Scenarios, the fixed-step co-simulation loop and the three experiments.
//!
//! The planner runs on a slow clock: a cycle starts every `dt_g` seconds
//! (or as soon as the previous plan is delivered, if that is later) and its
//! result arrives after a simulated latency of `c_iter` seconds per
//! iteration consumed. The controller runs every `dt_c` seconds.

mod scenarios;
mod suite;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ds::{Mat2, MixtureModel};
use crate::geometry::{wrap_angle, Pose, Vec2};
use crate::grid::{GridError, MapParseError, OccupancyGrid};
use crate::planner::{plan_detailed, PlanError, PlannerConfig, WaypointPath};
use crate::rng;
use crate::supervisor::{Supervisor, SupervisorConfig, SupervisorEvent};
use crate::vehicle::{DriveCommand, Perturbation, SteeringGains, TrajectoryRow, VehicleParams, VehicleState};

pub use scenarios::{corner_trap_pose, corridor, loop_track, straightaway, CorridorDisturbance};
pub use suite::{
    corridor_trial, corridor_trial_with, experiment1, experiment1_with, experiment2, experiment2_with, experiment3,
    experiment3_with, frequency_curve, write_csv, Exp1Row, Exp1Summary, Exp2Result, Exp2Row, Exp3Row, Exp3Summary,
    Experiment1, FrequencyCurveRow, Tweak,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Map(#[from] MapParseError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BareRrt,
    Sbamp,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::BareRrt => "bare_rrt",
            Mode::Sbamp => "sbamp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bare_rrt" => Some(Mode::BareRrt),
            "sbamp" => Some(Mode::Sbamp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Once, at the first control tick at or after this time, s.
    AtTime(f64),
    /// Once, when progress along the route first reaches this arclength, m.
    PastArclength(f64),
    /// Immediately before every planning cycle starts.
    EachPlanCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledPerturbation {
    pub trigger: Trigger,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPolicy {
    /// The run ends at the first collision.
    Terminate,
    /// The vehicle stops where it was until the next perturbation moves it.
    Halt,
}

/// Everything a run needs besides the map. Serialized as the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Map file, relative to the scenario file. Built-in scenarios leave it
    /// empty.
    pub map_path: Option<String>,
    pub start: Pose,
    pub goal: [f64; 2],
    /// Nominal route for progress and recovery; empty means the first
    /// successful plan.
    pub route: Vec<[f64; 2]>,
    pub dt_c: f64,
    pub dt_g: f64,
    /// Nominal speed, m/s; also the vehicle's speed limit.
    pub speed: f64,
    pub duration: f64,
    pub perturbations: Vec<ScheduledPerturbation>,
    pub seeds: Vec<u64>,
    pub planner: PlannerConfig,
    pub supervisor: SupervisorConfig,
    pub vehicle: VehicleParams,
    pub gains: SteeringGains,
    /// Obstacle growth for planning, m.
    pub planning_inflation: f64,
    /// Obstacle growth for collision checks of the vehicle's reference
    /// point, m.
    pub collision_radius: f64,
    pub corridor_tolerance: f64,
    pub goal_tolerance: f64,
    /// Plans target the route point this far past the vehicle's progress;
    /// `None` plans straight to the goal, m.
    pub plan_horizon: Option<f64>,
    /// Simulated planning seconds per iteration; `None` calibrates.
    pub c_iter: Option<f64>,
    /// Calibration leaves this factor of headroom over the slowest nominal
    /// plan.
    pub latency_margin: f64,
    pub calibration_plans: usize,
    pub collision_policy: CollisionPolicy,
    pub pursuit_lookahead: f64,
    /// Planned paths are shortcut, then resampled to at most this spacing.
    pub waypoint_spacing: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            map_path: None,
            start: Pose::new(0.0, 0.0, 0.0),
            goal: [1.0, 0.0],
            route: Vec::new(),
            dt_c: 1.0 / 60.0,
            dt_g: 1.0,
            speed: 1.0,
            duration: 30.0,
            perturbations: Vec::new(),
            seeds: vec![0],
            planner: PlannerConfig {
                max_iterations: 3000,
                goal_bias: 0.3,
                refine_iterations: Some(20),
                ..PlannerConfig::default()
            },
            supervisor: SupervisorConfig::default(),
            vehicle: VehicleParams::default(),
            gains: SteeringGains::default(),
            planning_inflation: 0.2,
            collision_radius: 0.1,
            corridor_tolerance: 0.5,
            goal_tolerance: 0.3,
            plan_horizon: Some(4.0),
            c_iter: None,
            latency_margin: 1.05,
            calibration_plans: 200,
            collision_policy: CollisionPolicy::Terminate,
            pursuit_lookahead: 2.0,
            waypoint_spacing: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
        if !(self.dt_c > 0.0 && self.dt_g > 0.0 && self.duration > 0.0 && self.speed > 0.0) {
            return bad("dt_c, dt_g, duration and speed must be positive");
        }
        let ratio = self.dt_g / self.dt_c;
        if (ratio - ratio.round()).abs() * self.dt_c > 1e-9 {
            return bad("dt_c must divide dt_g");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.c_iter.is_some_and(|c| !(c > 0.0)) {
            return bad("c_iter must be positive");
        }
        if !(self.latency_margin >= 1.0) || self.calibration_plans == 0 {
            return bad("latency_margin must be >= 1 and calibration_plans positive");
        }
        self.planner.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.supervisor_config().validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Supervisor settings with the scenario's clocks and speed.
    pub fn supervisor_config(&self) -> SupervisorConfig {
        SupervisorConfig { dt_c: self.dt_c, dt_g: self.dt_g, demo_speed: self.speed, ..self.supervisor.clone() }
    }

    pub fn vehicle_params(&self) -> VehicleParams {
        VehicleParams { v_max: self.speed, ..self.vehicle }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Ground-truth map without inflation.
    pub map: OccupancyGrid,
}

impl Scenario {
    pub fn new(config: ScenarioConfig, map: OccupancyGrid) -> Result<Self, ScenarioError> {
        config.validate()?;
        Ok(Self { config, map })
    }

    /// Loads a scenario file and the map it names.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let config: ScenarioConfig = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_config(config, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_config(config: ScenarioConfig, base: &Path) -> Result<Self, ScenarioError> {
        let Some(map_path) = &config.map_path else {
            return Err(ScenarioError::Invalid("map_path is required".into()));
        };
        let map = OccupancyGrid::load(&base.join(map_path))?;
        Self::new(config, map)
    }

    pub fn planning_map(&self) -> OccupancyGrid {
        let mut m = self.map.clone();
        m.inflate(self.config.planning_inflation);
        m
    }

    pub fn collision_map(&self) -> OccupancyGrid {
        let mut m = self.map.clone();
        m.inflate(self.config.collision_radius);
        m
    }

    pub fn goal(&self) -> Vec2 {
        Vec2::new(self.config.goal[0], self.config.goal[1])
    }

    pub fn route(&self) -> Option<WaypointPath> {
        if self.config.route.len() < 2 {
            return None;
        }
        Some(WaypointPath::new(self.config.route.iter().map(|p| Vec2::new(p[0], p[1])).collect(), 0.0))
    }
}

/// Arclength progress along a route, searched near the previous value so
/// that looping routes do not jump between laps.
#[derive(Debug, Clone)]
pub struct RouteTracker {
    route: WaypointPath,
    arcs: Vec<f64>,
    progress: f64,
}

impl RouteTracker {
    pub fn new(route: WaypointPath, start: &Vec2) -> Self {
        let arcs = route.arclengths();
        let mut t = Self { route, arcs, progress: 0.0 };
        t.progress = t.project_window(start, 0.0, 3.0);
        t
    }

    pub fn route(&self) -> &WaypointPath {
        &self.route
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn length(&self) -> f64 {
        *self.arcs.last().unwrap()
    }

    fn project_window(&self, p: &Vec2, lo: f64, hi: f64) -> f64 {
        let mut best = (f64::INFINITY, self.progress);
        for (i, w) in self.route.waypoints.windows(2).enumerate() {
            if self.arcs[i + 1] < lo || self.arcs[i] > hi {
                continue;
            }
            let (q, t) = crate::geometry::project_on_segment(p, &w[0], &w[1]);
            let s = self.arcs[i] + t * (self.arcs[i + 1] - self.arcs[i]);
            let d = (q - p).norm_squared();
            if d < best.0 && s >= lo && s <= hi {
                best = (d, s);
            }
        }
        best.1
    }

    /// Updates progress from `p`, looking a little behind and further ahead.
    pub fn update(&mut self, p: &Vec2) -> f64 {
        self.progress = self.project_window(p, self.progress - 1.0, self.progress + 3.0).max(0.0);
        self.progress
    }

    /// Distance from `p` to the route near the current progress.
    pub fn lateral(&self, p: &Vec2) -> f64 {
        (self.route.point_at(self.progress) - p).norm().min(self.route.distance(p))
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        self.route.point_at(s)
    }
}

/// Simulated planner timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    /// Seconds per planner iteration.
    pub c_iter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanRecord {
    pub t_start: f64,
    pub t_delivery: f64,
    pub iterations: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    /// Successful replans per simulated second, Hz.
    pub f_plan: f64,
    pub recovered: bool,
    /// Infinite when the run did not recover, s.
    pub time_to_recovery: f64,
    pub collisions: usize,
    /// Ticks that carried a command from a valid reference, per second.
    pub command_rate: f64,
    pub mean_v: f64,
    pub final_goal_error: f64,
    pub successful_plans: usize,
    pub plan_attempts: usize,
    pub elapsed: f64,
    pub goal_reached: bool,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub metrics: RunMetrics,
    pub trajectory: Vec<TrajectoryRow>,
    pub events: Vec<SupervisorEvent>,
    pub plans: Vec<PlanRecord>,
    /// Times at which perturbations fired.
    pub perturbation_times: Vec<f64>,
    /// Ticks on which the controller emitted a command.
    pub command_ticks: usize,
}

/// Latency constant that makes the slowest of a batch of nominal plans
/// (from the start pose toward the first local goal) take `dt_g / margin`.
pub fn calibrate_latency(scenario: &Scenario) -> Result<LatencyModel, PlanError> {
    let cfg = &scenario.config;
    if let Some(c_iter) = cfg.c_iter {
        return Ok(LatencyModel { c_iter });
    }
    let map = scenario.planning_map();
    let start = cfg.start.position();
    let goal = match scenario.route() {
        Some(route) => local_goal(&map, &RouteTracker::new(route, &start), cfg.plan_horizon, &scenario.goal()),
        None => scenario.goal(),
    };
    let mut worst = 1;
    for i in 0..cfg.calibration_plans {
        let mut r = rng::stream(0xCA1B_0000, i as u64);
        let out = plan_detailed(&map, start, goal, &cfg.planner, &mut r)?;
        worst = worst.max(out.iterations);
    }
    Ok(LatencyModel { c_iter: cfg.dt_g / (worst as f64 * cfg.latency_margin) })
}

const GOAL_CLEARANCE: f64 = 0.25;

fn local_goal(map: &OccupancyGrid, tracker: &RouteTracker, horizon: Option<f64>, goal: &Vec2) -> Vec2 {
    let Some(h) = horizon else { return *goal };
    let end = tracker.length();
    let target = (tracker.progress() + h).min(end);
    if target >= end {
        return *goal;
    }
    // nearest route point with some clearance, searching ahead first
    let clear = |p: &Vec2| {
        map.is_free(p)
            && (0..8).all(|j| {
                let a = j as f64 * std::f64::consts::FRAC_PI_4;
                map.is_free(&(p + Vec2::new(a.cos(), a.sin()) * GOAL_CLEARANCE))
            })
    };
    for pass in [1.0, -1.0] {
        let mut k = 0.0;
        while k <= 2.0 {
            let p = tracker.point_at((target + pass * k).clamp(0.0, end));
            if clear(&p) {
                return p;
            }
            k += 0.05;
        }
    }
    *goal
}

/// Geometric path follower for the baseline: constant speed toward the
/// path point `lookahead` ahead of the vehicle's projection.
pub fn pure_pursuit(state: &VehicleState, path: &WaypointPath, lookahead: f64, speed: f64) -> DriveCommand {
    let pos = state.position();
    let target = path.point_at(path.project(&pos) + lookahead);
    let d = target - pos;
    let dist = d.norm();
    if dist < 1e-9 {
        return DriveCommand::default();
    }
    let alpha = wrap_angle(d.y.atan2(d.x) - state.pose.theta);
    let curvature = 2.0 * alpha.sin() / dist;
    let p = state.params;
    let delta = (p.wheelbase * curvature).atan().clamp(-p.delta_max, p.delta_max);
    DriveCommand { v: speed.min(p.v_max), delta }
}

struct InFlight {
    record: PlanRecord,
    result: Result<WaypointPath, PlanError>,
}

/// Runs one scenario in one mode. Identical inputs give identical logs.
pub fn run_scenario(scenario: &Scenario, mode: Mode, seed: u64) -> Result<RunLog, ScenarioError> {
    let latency = calibrate_latency(scenario).map_err(|e| ScenarioError::Invalid(format!("calibration: {e}")))?;
    run_scenario_with(scenario, mode, seed, latency)
}

pub fn run_scenario_with(
    scenario: &Scenario,
    mode: Mode,
    seed: u64,
    latency: LatencyModel,
) -> Result<RunLog, ScenarioError> {
    let cfg = &scenario.config;
    let plan_map = scenario.planning_map();
    let collision_map = scenario.collision_map();
    let goal = scenario.goal();
    let dt = cfg.dt_c;
    let steps = (cfg.duration / dt).round() as usize;
    let ticks_per_cycle = (cfg.dt_g / dt).round() as usize;

    let mut car = VehicleState::new(cfg.start, cfg.vehicle_params());
    let hold = MixtureModel::single(-Mat2::identity(), car.position(), cfg.supervisor.eps_stab)
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let mut supervisor =
        Supervisor::new(cfg.supervisor_config(), hold).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let mut tracker = scenario.route().map(|r| RouteTracker::new(r, &car.position()));

    let mut follower_path: Option<WaypointPath> = None;
    let mut in_flight: Option<InFlight> = None;
    let mut next_start_tick = 0usize;
    let mut cycle = 0u64;
    let mut fired = vec![false; cfg.perturbations.len()];

    let mut trajectory = Vec::with_capacity(steps);
    let mut plans = Vec::new();
    let mut perturbation_times = Vec::new();
    let mut collisions = 0;
    let mut halted = false;
    let mut terminated_at = None;
    let mut goal_reached_at: Option<f64> = None;
    let mut command_ticks = 0usize;
    let mut speed_sum = 0.0;
    // first return to the route corridor after the last perturbation
    let mut returned_at: Option<f64> = None;

    for i in 0..steps {
        let t = i as f64 * dt;
        let progress = tracker.as_mut().map(|tr| tr.update(&car.position())).unwrap_or(0.0);

        let mut perturbed = false;
        for (j, p) in cfg.perturbations.iter().enumerate() {
            let due = match p.trigger {
                Trigger::AtTime(at) => !fired[j] && t + 1e-9 >= at,
                Trigger::PastArclength(s) => !fired[j] && tracker.is_some() && progress >= s,
                Trigger::EachPlanCycle => false,
            };
            if due {
                fired[j] = true;
                car = car.apply_perturbation(&p.perturbation, Some(&scenario.map)).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                perturbed = true;
            }
        }

        if let Some(f) = in_flight.as_ref() {
            if f.record.t_delivery <= t + 1e-9 {
                let f = in_flight.take().unwrap();
                plans.push(f.record);
                match f.result {
                    Ok(path) => {
                        if tracker.is_none() {
                            tracker = Some(RouteTracker::new(path.clone(), &car.position()));
                        }
                        match mode {
                            Mode::Sbamp => {
                                supervisor.on_new_path(path, &car.position(), t);
                            }
                            Mode::BareRrt => follower_path = Some(path),
                        }
                    }
                    Err(_) => {
                        if mode == Mode::BareRrt {
                            follower_path = None;
                        }
                    }
                }
            }
        }

        if in_flight.is_none() && i >= next_start_tick {
            for p in cfg.perturbations.iter().filter(|p| p.trigger == Trigger::EachPlanCycle) {
                car = car.apply_perturbation(&p.perturbation, Some(&scenario.map)).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                perturbed = true;
            }
            if perturbed {
                if let Some(tr) = tracker.as_mut() {
                    tr.update(&car.position());
                }
            }
            let start = car.position();
            let target = match &tracker {
                Some(tr) => local_goal(&plan_map, tr, cfg.plan_horizon, &goal),
                None => goal,
            };
            let mut r = rng::stream(seed, cycle);
            cycle += 1;
            let (result, iterations) = match plan_detailed(&plan_map, start, target, &cfg.planner, &mut r) {
                Ok(out) => (Ok(out.path.shortcut(&plan_map).densify(cfg.waypoint_spacing)), out.iterations),
                Err(e) => {
                    let n = e.iterations().max(1);
                    (Err(e), n)
                }
            };
            let ticks = (latency.c_iter * iterations as f64 / dt).ceil().max(1.0) as usize;
            let delivery_tick = i + ticks;
            let success = result.is_ok();
            let mut result = result;
            if let Ok(p) = result.as_mut() {
                p.stamp = t;
            }
            in_flight = Some(InFlight {
                record: PlanRecord { t_start: t, t_delivery: delivery_tick as f64 * dt, iterations, success },
                result,
            });
            next_start_tick = (i + ticks_per_cycle).max(delivery_tick);
        }

        if perturbed {
            perturbation_times.push(t);
            returned_at = None;
            goal_reached_at = None;
            halted = false;
        }

        let parked = goal_reached_at.is_some();
        let (cmd, commanded) = match mode {
            Mode::Sbamp => {
                let v = supervisor.control_step(&car.position(), t);
                let cmd = if parked || halted { DriveCommand::default() } else { car.ds_to_command(&v, &cfg.gains) };
                (cmd, true)
            }
            Mode::BareRrt => match &follower_path {
                Some(path) if !parked && !halted => (pure_pursuit(&car, path, cfg.pursuit_lookahead, cfg.speed), true),
                Some(_) => (DriveCommand::default(), true),
                None => (DriveCommand::default(), false),
            },
        };
        if commanded {
            command_ticks += 1;
        }
        speed_sum += cmd.v;
        trajectory.push(TrajectoryRow {
            t,
            x: car.pose.x,
            y: car.pose.y,
            theta: car.pose.theta,
            v_cmd: cmd.v,
            delta_cmd: cmd.delta,
        });

        let next = car.step(&cmd, dt);
        if collision_map.is_free(&next.position()) {
            car = next;
        } else if !halted {
            collisions += 1;
            match cfg.collision_policy {
                CollisionPolicy::Terminate => {
                    terminated_at = Some(t + dt);
                    break;
                }
                CollisionPolicy::Halt => halted = true,
            }
        }

        let pos = car.position();
        if let Some(tr) = &tracker {
            if !perturbation_times.is_empty() && returned_at.is_none() && tr.lateral(&pos) <= cfg.corridor_tolerance {
                returned_at = Some(t + dt);
            }
        }
        if goal_reached_at.is_none() && (pos - goal).norm() <= cfg.goal_tolerance {
            goal_reached_at = Some(t + dt);
        }
    }

    let elapsed = terminated_at.unwrap_or(steps as f64 * dt);
    // plans still in flight at the end are not counted
    let successful_plans = plans.iter().filter(|p| p.success && p.t_delivery <= elapsed + 1e-9).count();
    let last_perturbation = perturbation_times.last().copied();
    // the goal flag is cleared by every perturbation, so reaching it here
    // means reaching it after the last one
    let returned = last_perturbation.is_none() || returned_at.is_some();
    let recovered = terminated_at.is_none() && collisions == 0 && returned && goal_reached_at.is_some();
    let time_to_recovery = match (recovered, last_perturbation, returned_at) {
        (false, _, _) => f64::INFINITY,
        (true, Some(p), Some(r)) => r - p,
        _ => 0.0,
    };
    let metrics = RunMetrics {
        f_plan: successful_plans as f64 / elapsed,
        recovered,
        time_to_recovery,
        collisions,
        command_rate: command_ticks as f64 / elapsed,
        mean_v: speed_sum / trajectory.len().max(1) as f64,
        final_goal_error: (car.position() - goal).norm(),
        successful_plans,
        plan_attempts: plans.len(),
        elapsed,
        goal_reached: goal_reached_at.is_some(),
    };
    Ok(RunLog {
        metrics,
        trajectory,
        events: supervisor.events().to_vec(),
        plans,
        perturbation_times,
        command_ticks,
    })
}
