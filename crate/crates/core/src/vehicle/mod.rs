//! Ackermann (kinematic bicycle) vehicle, DS-to-actuation conversion and
//! perturbations.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose, Vec2};
use crate::grid::{Cell, OccupancyGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("perturbation places the vehicle in an occupied cell at ({x:.3}, {y:.3})")]
    PerturbationIntoObstacle { x: f64, y: f64 },
    #[error("perturbation places the vehicle outside the map at ({x:.3}, {y:.3})")]
    OutOfBounds { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub v_max: f64,
    pub delta_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { wheelbase: 0.33, v_max: 1.0, delta_max: 0.4189 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub pose: Pose,
    pub params: VehicleParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DriveCommand {
    /// Speed, m/s.
    pub v: f64,
    /// Steering angle, rad.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteeringGains {
    /// Steering per radian of heading error.
    pub k_delta: f64,
    /// Lower bound of the slow-down factor applied when the desired
    /// direction is behind the vehicle. Zero stops the car outright, which
    /// can deadlock it when the field points backwards.
    pub min_turn_factor: f64,
}

impl Default for SteeringGains {
    fn default() -> Self {
        Self { k_delta: 2.0, min_turn_factor: 0.25 }
    }
}

impl VehicleState {
    pub fn new(pose: Pose, params: VehicleParams) -> Self {
        assert!(params.wheelbase > 0.0, "wheelbase must be positive");
        Self { pose, params }
    }

    pub fn position(&self) -> Vec2 {
        self.pose.position()
    }

    /// Rate of (x, y, theta) at `pose` under `cmd`.
    pub fn derivative(&self, pose: &Pose, cmd: &DriveCommand) -> [f64; 3] {
        [
            cmd.v * pose.theta.cos(),
            cmd.v * pose.theta.sin(),
            cmd.v / self.params.wheelbase * cmd.delta.tan(),
        ]
    }

    /// One fourth-order Runge-Kutta step of length `dt`.
    pub fn step(&self, cmd: &DriveCommand, dt: f64) -> Self {
        let p = self.pose;
        let at = |k: [f64; 3], h: f64| Pose { x: p.x + h * k[0], y: p.y + h * k[1], theta: p.theta + h * k[2] };
        let k1 = self.derivative(&p, cmd);
        let k2 = self.derivative(&at(k1, dt / 2.0), cmd);
        let k3 = self.derivative(&at(k2, dt / 2.0), cmd);
        let k4 = self.derivative(&at(k3, dt), cmd);
        let inc = |i: usize| dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        Self { pose: Pose::new(p.x + inc(0), p.y + inc(1), p.theta + inc(2)), params: self.params }
    }

    /// Converts a desired planar velocity into speed and steering.
    pub fn ds_to_command(&self, desired: &Vec2, gains: &SteeringGains) -> DriveCommand {
        let speed = desired.norm();
        if !(speed > 0.0) {
            return DriveCommand::default();
        }
        let mut v = speed.min(self.params.v_max);
        let error = wrap_angle(desired.y.atan2(desired.x) - self.pose.theta);
        let delta = (gains.k_delta * error).clamp(-self.params.delta_max, self.params.delta_max);
        if error.abs() > FRAC_PI_2 {
            v *= error.cos().abs().max(gains.min_turn_factor).min(1.0);
        }
        DriveCommand { v, delta }
    }

    /// Applies `p`; when a map is given, the result must land in a free
    /// cell.
    pub fn apply_perturbation(&self, p: &Perturbation, map: Option<&OccupancyGrid>) -> Result<Self, VehicleError> {
        let pose = p.apply(&self.pose);
        if let Some(map) = map {
            let (x, y) = (pose.x, pose.y);
            match map.cell_at(&pose.position()) {
                Err(_) => return Err(VehicleError::OutOfBounds { x, y }),
                Ok(Cell::Occupied) => return Err(VehicleError::PerturbationIntoObstacle { x, y }),
                Ok(_) => {}
            }
        }
        Ok(Self { pose, params: self.params })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Perpendicular to the heading, to the vehicle's left.
    Left,
    Right,
    Forward,
    Backward,
    /// Fixed world-frame angle, rad.
    World(f64),
}

impl Direction {
    pub fn unit(&self, theta: f64) -> Vec2 {
        let angle = match *self {
            Direction::Left => theta + FRAC_PI_2,
            Direction::Right => theta - FRAC_PI_2,
            Direction::Forward => theta,
            Direction::Backward => theta + std::f64::consts::PI,
            Direction::World(a) => a,
        };
        Vec2::new(angle.cos(), angle.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Translate { distance: f64, direction: Direction },
    Rotate { angle: f64 },
    CornerTrap { pose: Pose },
}

impl Perturbation {
    pub fn apply(&self, pose: &Pose) -> Pose {
        match *self {
            Perturbation::Translate { distance, direction } => {
                let d = direction.unit(pose.theta) * distance;
                Pose::new(pose.x + d.x, pose.y + d.y, pose.theta)
            }
            Perturbation::Rotate { angle } => Pose::new(pose.x, pose.y, pose.theta + angle),
            Perturbation::CornerTrap { pose } => Pose::new(pose.x, pose.y, pose.theta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_cmd: f64,
    pub delta_cmd: f64,
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
