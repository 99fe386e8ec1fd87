use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;

fn car(x: f64, y: f64, theta: f64, wheelbase: f64) -> VehicleState {
    VehicleState::new(Pose::new(x, y, theta), VehicleParams { wheelbase, ..VehicleParams::default() })
}

#[test]
fn straight_step() {
    let s = car(0.0, 0.0, 0.0, 0.33).step(&DriveCommand { v: 1.0, delta: 0.0 }, 0.1);
    assert_abs_diff_eq!(s.pose.x, 0.1, epsilon = 1e-15);
    assert_eq!(s.pose.y, 0.0);
    assert_eq!(s.pose.theta, 0.0);
}

#[test]
fn yaw_rate_formula() {
    let c = car(0.0, 0.0, 0.0, 0.3);
    let d = c.derivative(&c.pose, &DriveCommand { v: 1.0, delta: FRAC_PI_4 });
    assert_abs_diff_eq!(d[2], 1.0 / 0.3, epsilon = 1e-12);
}

#[test]
fn constant_steering_traces_the_turning_circle() {
    let delta: f64 = 0.3;
    let mut c = car(0.0, 0.0, 0.0, 0.33);
    let radius = 0.33 / delta.tan();
    // closed form: centre at (0, R)
    let centre = Vec2::new(0.0, radius);
    let cmd = DriveCommand { v: 1.0, delta };
    for _ in 0..2000 {
        c = c.step(&cmd, 0.01);
        let r = (c.position() - centre).norm();
        assert!((r - radius).abs() / radius < 1e-3, "radius {r} vs {radius}");
    }
}

#[test]
fn rk4_is_fourth_order() {
    let cmd = DriveCommand { v: 1.0, delta: 0.35 };
    let start = car(0.0, 0.0, 0.2, 0.33);
    let exact = |t: f64| {
        let w = cmd.v / 0.33 * cmd.delta.tan();
        let th = 0.2 + w * t;
        Vec2::new((th.sin() - 0.2f64.sin()) / w, (0.2f64.cos() - th.cos()) / w)
    };
    let err = |dt: f64| (start.step(&cmd, dt).position() - exact(dt)).norm();
    let mut orders = Vec::new();
    for dt in [0.4, 0.2, 0.1, 0.05] {
        orders.push((err(dt) / err(dt / 2.0)).log2());
    }
    // local error is O(dt^5)
    for o in orders {
        assert!(o >= 3.8, "observed order {o}");
    }
}

#[test]
fn aligned_command_goes_straight() {
    let c = car(0.0, 0.0, 0.0, 0.33);
    let cmd = c.ds_to_command(&Vec2::new(0.5, 0.0), &SteeringGains::default());
    assert_eq!(cmd, DriveCommand { v: 0.5, delta: 0.0 });
}

#[test]
fn zero_velocity_gives_zero_command() {
    let c = car(1.0, 2.0, 0.5, 0.33);
    assert_eq!(c.ds_to_command(&Vec2::zeros(), &SteeringGains::default()), DriveCommand::default());
}

#[test]
fn perpendicular_command_saturates_steering() {
    let c = car(0.0, 0.0, 0.0, 0.33);
    let cmd = c.ds_to_command(&Vec2::new(0.0, -2.0), &SteeringGains::default());
    assert_eq!(cmd.delta, -c.params.delta_max);
    assert_eq!(cmd.v, 1.0);
}

#[test]
fn backwards_command_slows_but_keeps_moving() {
    let c = car(0.0, 0.0, 0.0, 0.33);
    let gains = SteeringGains::default();
    let cmd = c.ds_to_command(&Vec2::new(-1.0, 0.01), &gains);
    assert_abs_diff_eq!(cmd.v, 1.0 * (PI - 0.01f64.atan()).cos().abs(), epsilon = 1e-9);
    let side = c.ds_to_command(&Vec2::new(-0.1, 1.0), &gains);
    assert_abs_diff_eq!(side.v, gains.min_turn_factor, epsilon = 1e-12);
}

#[test]
fn perturbations() {
    let c = car(0.0, 0.0, 0.0, 0.33);
    let left = c.apply_perturbation(&Perturbation::Translate { distance: 2.5, direction: Direction::Left }, None).unwrap();
    assert_abs_diff_eq!(left.pose.x, 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(left.pose.y, 2.5, epsilon = 1e-15);
    let turned = car(0.0, 0.0, 3.0, 0.33).apply_perturbation(&Perturbation::Rotate { angle: FRAC_PI_2 }, None).unwrap();
    assert_abs_diff_eq!(turned.pose.theta, 3.0 + FRAC_PI_2 - 2.0 * PI, epsilon = 1e-12);
}

#[test]
fn corner_trap_into_wall_is_rejected() {
    let mut map = OccupancyGrid::covering(0.0, 0.0, 4.0, 4.0, 0.1, Cell::Free).unwrap();
    map.fill_rect(2.0, 2.0, 3.0, 3.0, Cell::Occupied);
    let c = car(1.0, 1.0, 0.0, 0.33);
    let bad = Perturbation::CornerTrap { pose: Pose::new(2.5, 2.5, 0.0) };
    assert_eq!(c.apply_perturbation(&bad, Some(&map)).unwrap_err(), VehicleError::PerturbationIntoObstacle { x: 2.5, y: 2.5 });
    let outside = Perturbation::Translate { distance: 10.0, direction: Direction::Forward };
    assert!(matches!(c.apply_perturbation(&outside, Some(&map)), Err(VehicleError::OutOfBounds { .. })));
    let ok = Perturbation::CornerTrap { pose: Pose::new(1.5, 3.5, PI) };
    assert_eq!(c.apply_perturbation(&ok, Some(&map)).unwrap().pose, Pose::new(1.5, 3.5, PI));
}

#[test]
fn perturbation_json_shape() {
    let p: Perturbation = serde_json::from_str(r#"{"kind":"translate","distance":1.0,"direction":"left"}"#).unwrap();
    assert_eq!(p, Perturbation::Translate { distance: 1.0, direction: Direction::Left });
    let r: Perturbation = serde_json::from_str(r#"{"kind":"translate","distance":1.0,"direction":{"world":0.5}}"#).unwrap();
    assert_eq!(r, Perturbation::Translate { distance: 1.0, direction: Direction::World(0.5) });
}

#[test]
fn trajectory_csv_header() {
    let mut buf = Vec::new();
    write_trajectory_csv(&[TrajectoryRow { t: 0.0, x: 1.0, y: 2.0, theta: 0.5, v_cmd: 1.0, delta_cmd: 0.1 }], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x,y,theta,v_cmd,delta_cmd");
}

proptest! {
    #[test]
    fn zero_speed_is_identity(x in -10.0..10.0f64, y in -10.0..10.0f64, th in -PI..PI, delta in -0.4..0.4f64, dt in 1e-3..1.0f64) {
        let c = car(x, y, th, 0.33);
        let s = c.step(&DriveCommand { v: 0.0, delta }, dt);
        prop_assert_eq!(s.pose, c.pose);
    }

    #[test]
    fn heading_stays_wrapped(th in -PI..PI, v in 0.0..1.0f64, delta in -0.4189..0.4189f64, angle in -10.0..10.0f64) {
        let c = car(0.0, 0.0, th, 0.33);
        let s = c.step(&DriveCommand { v, delta }, 0.5);
        prop_assert!(s.pose.theta > -PI && s.pose.theta <= PI);
        let r = s.apply_perturbation(&Perturbation::Rotate { angle }, None).unwrap();
        prop_assert!(r.pose.theta > -PI && r.pose.theta <= PI);
    }

    #[test]
    fn commands_respect_limits(th in -PI..PI, dx in -5.0..5.0f64, dy in -5.0..5.0f64) {
        let c = car(0.0, 0.0, th, 0.33);
        let cmd = c.ds_to_command(&Vec2::new(dx, dy), &SteeringGains::default());
        prop_assert!(cmd.v >= 0.0 && cmd.v <= c.params.v_max);
        prop_assert!(cmd.delta.abs() <= c.params.delta_max);
    }
}
