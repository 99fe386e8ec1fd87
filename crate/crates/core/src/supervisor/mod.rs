//! Switching logic between planner updates and the stable field controller.
//!
//! New paths trigger a refit and a recenter of the attractor; every such
//! switch, and optionally every waypoint advance, is recorded and held to an
//! average dwell-time budget `N <= N0 + (t2 - t1) / tau_d` over all windows.
//! Switches that would break the budget are deferred, never dropped.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ds::{fit_warm, synthesize_demo, FitConfig, MixtureModel};
use crate::geometry::Vec2;
use crate::planner::WaypointPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisorError {
    #[error("invalid supervisor config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisorConfig {
    /// Mixture components per fit.
    pub k: usize,
    pub eps_stab: f64,
    /// The attractor advances once the vehicle is this close, m.
    pub waypoint_radius: f64,
    /// Also advance once the vehicle's progress along the path passes the
    /// attractor while it stays within this lateral distance, m. Keeps a car
    /// with a finite turning radius from orbiting a waypoint it overshot.
    pub pass_lateral_limit: f64,
    /// Magnitude blend after a switch, s.
    pub blend_window: f64,
    pub n0: usize,
    /// Dwell time; `None` means `min(20 dt_c, dt_g)`.
    pub tau_d: Option<f64>,
    pub dt_c: f64,
    pub dt_g: f64,
    /// Limit on the change of commanded speed, m/s^2.
    pub a_max: f64,
    pub count_waypoint_advance: bool,
    /// Waypoints past the attractor included in the demo window.
    pub fit_lookahead: usize,
    /// The demo window starts behind the vehicle when needed so that it is
    /// at least this long, m. Before the first waypoint the first segment
    /// is extended backwards.
    pub min_fit_length: f64,
    pub demo_speed: f64,
    pub demo_spacing: f64,
    pub fit: FitConfig,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            k: 4,
            eps_stab: 0.1,
            waypoint_radius: 0.3,
            pass_lateral_limit: 0.5,
            blend_window: 0.1,
            n0: 1,
            tau_d: None,
            dt_c: 1.0 / 60.0,
            dt_g: 1.0,
            a_max: 6.0,
            count_waypoint_advance: true,
            fit_lookahead: 0,
            min_fit_length: 1.0,
            demo_speed: 1.0,
            demo_spacing: 0.05,
            fit: FitConfig::default(),
        }
    }
}

impl SupervisorConfig {
    pub fn tau_d(&self) -> f64 {
        self.tau_d.unwrap_or((20.0 * self.dt_c).min(self.dt_g))
    }

    pub fn validate(&self) -> Result<(), SupervisorError> {
        let bad = |m: String| Err(SupervisorError::InvalidConfig(m));
        let tau = self.tau_d();
        if !(self.dt_c > 0.0 && self.dt_c < tau && tau <= self.dt_g) {
            return bad(format!("need dt_c < tau_d <= dt_g, got {} < {} <= {}", self.dt_c, tau, self.dt_g));
        }
        if self.k == 0 || !(self.eps_stab > 0.0) {
            return bad("k and eps_stab must be positive".into());
        }
        if !(self.blend_window > 0.0 && self.a_max > 0.0 && self.waypoint_radius > 0.0) {
            return bad("blend_window, a_max and waypoint_radius must be positive".into());
        }
        if !(self.demo_speed > 0.0 && self.demo_spacing > 0.0) {
            return bad("demo_speed and demo_spacing must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Switch,
    Defer,
    FitFail,
    WaypointAdvance,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Switch => "switch",
            EventKind::Defer => "defer",
            EventKind::FitFail => "fit_fail",
            EventKind::WaypointAdvance => "waypoint_advance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorEvent {
    pub t: f64,
    pub event: EventKind,
    pub detail: String,
}

/// What `on_new_path` did with a delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathOutcome {
    /// Same route as the active or pending path.
    Ignored,
    Switched,
    Deferred,
    FitFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    /// `V` strictly decreased across every switch-free interval that did
    /// not start inside the tolerance.
    pub monotone: bool,
    pub final_v: f64,
    /// (interval start, interval end, V(end) - V(start)) for each interval
    /// that failed to decrease.
    pub violations: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Supervisor {
    config: SupervisorConfig,
    tau_d: f64,
    model: MixtureModel,
    path: Option<WaypointPath>,
    waypoint: usize,
    switch_times: Vec<f64>,
    last_velocity: Vec2,
    blend: Option<(f64, f64)>,
    pending: Option<WaypointPath>,
    advance_pending: bool,
    events: Vec<SupervisorEvent>,
}

impl Supervisor {
    pub fn new(config: SupervisorConfig, initial: MixtureModel) -> Result<Self, SupervisorError> {
        config.validate()?;
        Ok(Self {
            tau_d: config.tau_d(),
            config,
            model: initial,
            path: None,
            waypoint: 0,
            switch_times: Vec::new(),
            last_velocity: Vec2::zeros(),
            blend: None,
            pending: None,
            advance_pending: false,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &SupervisorConfig {
        &self.config
    }

    pub fn tau_d(&self) -> f64 {
        self.tau_d
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    pub fn current_path(&self) -> Option<&WaypointPath> {
        self.path.as_ref()
    }

    pub fn active_waypoint(&self) -> usize {
        self.waypoint
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn last_velocity(&self) -> Vec2 {
        self.last_velocity
    }

    pub fn pending(&self) -> Option<&WaypointPath> {
        self.pending.as_ref()
    }

    pub fn events(&self) -> &[SupervisorEvent] {
        &self.events
    }

    fn log(&mut self, t: f64, event: EventKind, detail: String) {
        self.events.push(SupervisorEvent { t, event, detail });
    }

    /// Number of recorded switches in `[t1, t2]` is within the budget.
    pub fn dwell_admissible(&self, t1: f64, t2: f64) -> bool {
        let n = self.switch_times.iter().filter(|&&s| s >= t1 && s <= t2).count();
        n as f64 <= self.config.n0 as f64 + (t2 - t1) / self.tau_d + 1e-9
    }

    /// Whether recording one more switch at `t` keeps every window within
    /// budget. Windows that end earlier are unchanged, and windows ending at
    /// `t` are tightest when they start at a recorded switch.
    pub fn switch_admissible(&self, t: f64) -> bool {
        let n = self.switch_times.len();
        if self.config.n0 == 0 {
            return false;
        }
        self.switch_times.iter().enumerate().all(|(i, &s)| {
            let count = n - i + 1;
            count as f64 <= self.config.n0 as f64 + (t - s) / self.tau_d + 1e-9
        })
    }

    fn record_switch(&mut self, t: f64) {
        if let Some(&last) = self.switch_times.last() {
            debug_assert!(t > last, "switch times must increase");
        }
        self.switch_times.push(t);
        self.blend = Some((t, self.last_velocity.norm()));
    }

    /// Handles a path delivered at time `t` with the vehicle at `vehicle_pos`.
    pub fn on_new_path(&mut self, path: WaypointPath, vehicle_pos: &Vec2, t: f64) -> PathOutcome {
        let known = |p: &Option<WaypointPath>| p.as_ref().is_some_and(|q| q.same_route(&path));
        if known(&self.pending) || (self.pending.is_none() && known(&self.path)) {
            return PathOutcome::Ignored;
        }
        if path.len() < 2 {
            self.log(t, EventKind::FitFail, "path has fewer than two waypoints".into());
            return PathOutcome::FitFailed;
        }
        if !self.switch_admissible(t) {
            self.log(t, EventKind::Defer, format!("path stamp {}", path.stamp));
            self.pending = Some(path);
            return PathOutcome::Deferred;
        }
        self.pending = None;
        self.adopt(path, vehicle_pos, t)
    }

    fn adopt(&mut self, path: WaypointPath, vehicle_pos: &Vec2, t: f64) -> PathOutcome {
        let arcs = path.arclengths();
        let progress = path.project(vehicle_pos);
        let target = first_ahead(&arcs, progress);
        let window_end = (target + self.config.fit_lookahead).min(path.len() - 1);
        let begin = progress.min(arcs[window_end] - self.config.min_fit_length);
        let head = if begin >= 0.0 {
            path.point_at(begin)
        } else {
            let w = &path.waypoints;
            let dir = (w[1] - w[0]).try_normalize(1e-12).unwrap_or_else(Vec2::zeros);
            w[0] + dir * begin
        };
        let mut window = vec![head];
        window.extend(
            path.waypoints[..=window_end]
                .iter()
                .zip(&arcs)
                .filter(|(_, s)| **s > begin + 1e-9)
                .map(|(w, _)| *w),
        );
        let window = WaypointPath::new(window, path.stamp);
        let k = self.config.k;
        let spacing = self.config.demo_spacing.min(window.cost / (8 * k) as f64);
        let fitted = synthesize_demo(&window, self.config.demo_speed, spacing).and_then(|demo| {
            fit_warm(&demo, k, self.config.eps_stab, &self.config.fit, Some(&self.model))
        });
        match fitted {
            Ok((model, report)) => {
                self.model = model.shift_attractor(path.waypoints[target]);
                self.waypoint = target;
                self.path = Some(path);
                self.advance_pending = false;
                self.record_switch(t);
                let detail = format!("waypoint {target} k {} residual {:.6}", self.model.k(), report.objective);
                self.log(t, EventKind::Switch, detail);
                PathOutcome::Switched
            }
            Err(e) => {
                self.log(t, EventKind::FitFail, e.to_string());
                PathOutcome::FitFailed
            }
        }
    }

    fn wants_advance(&self, xi: &Vec2) -> bool {
        let Some(path) = &self.path else { return false };
        if self.waypoint + 1 >= path.len() {
            return false;
        }
        let attractor = self.model.attractor();
        if (xi - attractor).norm() < self.config.waypoint_radius {
            return true;
        }
        let arcs = path.arclengths();
        path.distance(xi) < self.config.pass_lateral_limit && path.project(xi) >= arcs[self.waypoint]
    }

    /// Velocity command at `xi` and time `t`.
    pub fn control_step(&mut self, xi: &Vec2, t: f64) -> Vec2 {
        if self.pending.is_some() && self.switch_admissible(t) {
            let path = self.pending.take().unwrap();
            self.adopt(path, xi, t);
        } else if self.wants_advance(xi) {
            if !self.config.count_waypoint_advance || self.switch_admissible(t) {
                self.waypoint += 1;
                let next = self.path.as_ref().unwrap().waypoints[self.waypoint];
                self.model = self.model.shift_attractor(next);
                if self.config.count_waypoint_advance {
                    self.record_switch(t);
                } else {
                    self.blend = Some((t, self.last_velocity.norm()));
                }
                self.advance_pending = false;
                self.log(t, EventKind::WaypointAdvance, format!("waypoint {}", self.waypoint));
            } else if !self.advance_pending {
                self.advance_pending = true;
                self.log(t, EventKind::Defer, format!("waypoint {}", self.waypoint + 1));
            }
        }

        let field = self.model.evaluate(xi);
        let field_speed = field.norm();
        let previous = self.last_velocity.norm();
        let mut speed = match self.blend {
            Some((start, from)) if t - start < self.config.blend_window => {
                from + (field_speed - from) * ((t - start) / self.config.blend_window).max(0.0)
            }
            _ => {
                self.blend = None;
                field_speed
            }
        };
        let step = self.config.a_max * self.config.dt_c;
        speed = speed.clamp((previous - step).max(0.0), previous + step);
        let direction = if field_speed > 0.0 {
            field / field_speed
        } else if previous > 0.0 {
            self.last_velocity / previous
        } else {
            Vec2::zeros()
        };
        self.last_velocity = direction * speed;
        self.last_velocity
    }

    /// Checks descent of `V = |xi - goal|^2` across the switch-free
    /// intervals of a time-sorted trajectory.
    pub fn lyapunov_monitor(&self, trajectory: &[(f64, Vec2)], goal: &Vec2, v_tol: f64) -> LyapunovReport {
        let v = |x: &Vec2| (x - goal).norm_squared();
        let Some(last) = trajectory.last() else {
            return LyapunovReport { monotone: true, final_v: 0.0, violations: Vec::new() };
        };
        let mut violations = Vec::new();
        let mut start = 0;
        let mut cuts = self.switch_times.iter().peekable();
        for i in 1..trajectory.len() {
            let boundary = cuts.peek().is_some_and(|&&s| trajectory[i].0 >= s);
            if boundary || i + 1 == trajectory.len() {
                while cuts.peek().is_some_and(|&&s| trajectory[i].0 >= s) {
                    cuts.next();
                }
                let (t0, x0) = &trajectory[start];
                let (t1, x1) = &trajectory[i];
                let change = v(x1) - v(x0);
                if v(x0) > v_tol && change >= 0.0 {
                    violations.push((*t0, *t1, change));
                }
                start = i;
            }
        }
        LyapunovReport { monotone: violations.is_empty(), final_v: v(&last.1), violations }
    }

    pub fn write_events_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_events_csv(&self.events, out)
    }
}

pub fn write_events_csv<W: Write>(events: &[SupervisorEvent], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "event", "detail"])?;
    for e in events {
        w.write_record([format!("{:.6}", e.t).as_str(), e.event.as_str(), e.detail.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Index of the first waypoint strictly ahead of arclength `progress`,
/// never the start point; the last waypoint if none is ahead.
pub fn first_ahead(arcs: &[f64], progress: f64) -> usize {
    (1..arcs.len()).find(|&i| arcs[i] > progress + 1e-9).unwrap_or(arcs.len() - 1)
}
