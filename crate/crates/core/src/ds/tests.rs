use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::planner::WaypointPath;

fn gauss_oracle(x: &Vec2, mu: &Vec2, s: &Mat2) -> f64 {
    // written out by hand so it shares nothing with the model's cache
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    let dx = x.x - mu.x;
    let dy = x.y - mu.y;
    let q = (s[(1, 1)] * dx * dx - (s[(0, 1)] + s[(1, 0)]) * dx * dy + s[(0, 0)] * dy * dy) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}

fn random_stable(rng: &mut ChaCha8Rng, eps: f64) -> Mat2 {
    let p = StableParams {
        s: rng.random_range(-2.0..2.0),
        l11: rng.random_range(-1.5..1.5),
        l21: rng.random_range(-1.5..1.5),
        l22: rng.random_range(-1.5..1.5),
    };
    p.matrix(eps)
}

fn random_spd(rng: &mut ChaCha8Rng) -> Mat2 {
    let a = Mat2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    a * a.transpose() + Mat2::identity() * 0.1
}

fn random_model(rng: &mut ChaCha8Rng, k: usize) -> MixtureModel {
    random_model_with_margin(rng, k, 0.1)
}

fn random_model_with_margin(rng: &mut ChaCha8Rng, k: usize, eps: f64) -> MixtureModel {
    let attractor = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    MixtureModel::new(
        (0..k).map(|_| LinearSubsystem::with_attractor(random_stable(rng, eps), &attractor)).collect(),
        (0..k).map(|_| Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect(),
        (0..k).map(|_| random_spd(rng)).collect(),
        raw.iter().map(|r| r / total).collect(),
        attractor,
        eps,
    )
    .unwrap()
}

fn two_component(attractor: Vec2) -> MixtureModel {
    let a1 = Mat2::new(-1.0, 0.0, 0.0, -2.0);
    let a2 = -Mat2::identity();
    MixtureModel::new(
        vec![LinearSubsystem::with_attractor(a1, &attractor), LinearSubsystem::with_attractor(a2, &attractor)],
        vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)],
        vec![Mat2::identity(); 2],
        vec![0.5, 0.5],
        attractor,
        0.1,
    )
    .unwrap()
}

#[test]
fn single_component_weight_is_one() {
    let m = MixtureModel::single(-Mat2::identity(), Vec2::zeros(), 0.1).unwrap();
    for x in [Vec2::new(0.0, 0.0), Vec2::new(5.0, -3.0), Vec2::new(1e3, 1e3)] {
        assert_eq!(m.responsibilities(&x).weights, vec![1.0]);
    }
}

#[test]
fn equidistant_point_splits_evenly() {
    let m = two_component(Vec2::zeros());
    let r = m.responsibilities(&Vec2::new(1.0, 0.7));
    assert_abs_diff_eq!(r.weights[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(r.weights[1], 0.5, epsilon = 1e-12);
    assert!(!r.fallback);
}

#[test]
fn responsibilities_match_direct_densities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random_model(&mut rng, 3);
    for _ in 0..100 {
        let x = Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let dens: Vec<f64> = (0..3).map(|k| m.priors()[k] * gauss_oracle(&x, &m.means()[k], &m.covariances()[k])).collect();
        let total: f64 = dens.iter().sum();
        let r = m.responsibilities(&x);
        assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for k in 0..3 {
            assert_abs_diff_eq!(r.weights[k], dens[k] / total, epsilon = 1e-10);
        }
    }
}

#[test]
fn far_away_point_falls_back_to_nearest_mean() {
    let m = two_component(Vec2::zeros());
    let r = m.responsibilities(&Vec2::new(1e6, 0.0));
    assert!(r.fallback);
    assert_eq!(r.weights, vec![0.0, 1.0]);
    assert!(m.evaluate(&Vec2::new(1e6, 0.0)).x.is_finite());
}

#[test]
fn attractor_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let m = random_model(&mut rng, 3);
        assert_abs_diff_eq!(m.evaluate(&m.attractor()).norm(), 0.0, epsilon = 1e-12);
    }
}

#[test]
fn single_identity_field() {
    let m = MixtureModel::single(-Mat2::identity(), Vec2::zeros(), 0.1).unwrap();
    assert_eq!(m.evaluate(&Vec2::new(2.0, 0.0)), Vec2::new(-2.0, 0.0));
}

#[test]
fn two_component_matches_hand_evaluation() {
    let attractor = Vec2::new(3.0, 1.0);
    let m = two_component(attractor);
    let x = Vec2::new(1.0, 2.5);
    assert_abs_diff_eq!(m.responsibilities(&x).weights[0], 0.5, epsilon = 1e-12);
    // x - x* = (-2, 1.5); component 1 gives (2, -3), component 2 gives (2, -1.5)
    let expected = Vec2::new(0.5 * 2.0 + 0.5 * 2.0, 0.5 * -3.0 + 0.5 * -1.5);
    assert_abs_diff_eq!(m.evaluate(&x), expected, epsilon = 1e-12);
}

#[test]
fn shift_sets_offsets() {
    let m = MixtureModel::single(Mat2::new(-1.0, 0.0, 0.0, -2.0), Vec2::zeros(), 0.1).unwrap();
    let s = m.shift_attractor(Vec2::new(3.0, 1.0));
    assert_eq!(s.components()[0].b, Vec2::new(3.0, 2.0));
    assert_eq!(s.components()[0].a, m.components()[0].a);
    assert_eq!(s.shift_attractor(Vec2::new(3.0, 1.0)), s);
}

#[test]
fn shifted_models_vanish_at_new_attractor() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let k = 1 + rng.random_range(0..4usize);
        let m = random_model(&mut rng, k);
        let x = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let s = m.shift_attractor(x);
        assert_eq!(s.evaluate(&x), Vec2::zeros());
        assert_eq!(s.means(), m.means());
        assert_eq!(s.priors(), m.priors());
    }
}

#[test]
fn shifted_single_component_depends_only_on_offset() {
    let a = Mat2::new(-1.0, 0.5, -0.5, -2.0);
    let m = MixtureModel::single(a, Vec2::zeros(), 0.1).unwrap();
    let d = Vec2::new(0.3, -0.7);
    for x in [Vec2::new(1.0, 2.0), Vec2::new(-4.0, 0.5)] {
        assert_abs_diff_eq!(m.shift_attractor(x).evaluate(&(x + d)), a * d, epsilon = 1e-12);
    }
}

#[test]
fn lyapunov_rate_negative_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10_000 {
        let k = 1 + rng.random_range(0..4usize);
        let m = random_model(&mut rng, k);
        let x = m.attractor() + Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let dist2 = (x - m.attractor()).norm_squared();
        if dist2 < 1e-12 {
            continue;
        }
        // exact bound: rate <= -2 eps |x - x*|^2
        let rate = m.lyapunov_rate(&x);
        assert!(rate < 0.0 && rate <= -2.0 * m.eps_stab() * dist2 * (1.0 - 1e-9), "rate {rate}");
    }
}

#[test]
fn integration_converges_to_attractor() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        // |x - x*| <= |x0 - x*| exp(-eps t), so eps = 0.2 reaches 1e-3 well inside 60 s
        let m = random_model_with_margin(&mut rng, 3, 0.2);
        let mut x = m.attractor() + Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let h = 1e-3;
        let mut t = 0.0;
        while (x - m.attractor()).norm() > 1e-3 && t < 60.0 {
            let k1 = m.evaluate(&x);
            let k2 = m.evaluate(&(x + k1 * (h / 2.0)));
            let k3 = m.evaluate(&(x + k2 * (h / 2.0)));
            let k4 = m.evaluate(&(x + k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            t += h;
        }
        assert!((x - m.attractor()).norm() <= 1e-3, "did not converge in 60 s");
    }
}

#[test]
fn rejects_unstable_or_malformed_models() {
    let unstable = MixtureModel::single(Mat2::new(0.0, 1.0, -1.0, 0.0), Vec2::zeros(), 0.1);
    assert!(matches!(unstable, Err(DsError::InvalidModel(_))));
    let bad_priors = MixtureModel::new(
        vec![LinearSubsystem::with_attractor(-Mat2::identity(), &Vec2::zeros())],
        vec![Vec2::zeros()],
        vec![Mat2::identity()],
        vec![0.7],
        Vec2::zeros(),
        0.1,
    );
    assert!(bad_priors.is_err());
}

#[test]
fn stable_params_roundtrip_through_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let a = random_stable(&mut rng, 0.1) - Mat2::identity() * 0.01;
        let p = StableParams::from_matrix(&a, 0.1, 1e-3);
        assert_abs_diff_eq!(p.matrix(0.1), a, epsilon = 1e-9);
    }
}

fn path(points: &[(f64, f64)]) -> WaypointPath {
    WaypointPath::new(points.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), 0.0)
}

#[test]
fn straight_demo_has_constant_velocity_and_terminal_stop() {
    let d = synthesize_demo(&path(&[(0.0, 0.0), (1.0, 0.0)]), 1.0, 0.25).unwrap();
    assert_eq!(d.len(), 5);
    for (i, (x, v)) in d.samples[..4].iter().enumerate() {
        assert_abs_diff_eq!(*x, Vec2::new(0.25 * i as f64, 0.0), epsilon = 1e-9);
        assert_abs_diff_eq!(*v, Vec2::new(1.0, 0.0), epsilon = 1e-12);
    }
    assert_eq!(d.samples[4], (Vec2::new(1.0, 0.0), Vec2::zeros()));
    assert_abs_diff_eq!(d.rate, 4.0);
}

#[test]
fn demo_positions_lie_on_the_spline() {
    let wp = [(0.0, 0.0), (1.0, 0.5), (2.0, -0.3), (3.5, 0.2)];
    let p = path(&wp);
    let spline = NaturalSpline::through(&p.waypoints).unwrap();
    let d = synthesize_demo(&p, 0.8, 0.1).unwrap();
    for (x, v) in &d.samples[..d.len() - 1] {
        // nearest spline parameter by dense scan then golden refinement
        let mut best = (f64::INFINITY, 0.0);
        let n = 20_000;
        for i in 0..=n {
            let t = spline.param_end() * i as f64 / n as f64;
            let dist = (spline.eval(t) - x).norm();
            if dist < best.0 {
                best = (dist, t);
            }
        }
        let (mut lo, mut hi) = (best.1 - 1e-3, best.1 + 1e-3);
        for _ in 0..100 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if (spline.eval(m1) - x).norm() < (spline.eval(m2) - x).norm() {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        assert!((spline.eval(lo) - x).norm() < 1e-9);
        assert_abs_diff_eq!(v.norm(), 0.8, epsilon = 1e-12);
    }
}

#[test]
fn demo_samples_are_evenly_spaced_in_arclength() {
    let p = path(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
    let spline = NaturalSpline::through(&p.waypoints).unwrap();
    let d = synthesize_demo(&p, 1.0, 0.2).unwrap();
    // oracle: fine polyline length of the spline between consecutive samples
    let n = 200_000;
    let pts: Vec<Vec2> = (0..=n).map(|i| spline.eval(spline.param_end() * i as f64 / n as f64)).collect();
    let mut s_of = Vec::new();
    let mut acc = 0.0;
    let mut j = 0;
    for (x, _) in &d.samples[..d.len() - 1] {
        while (pts[j] - x).norm() > 2e-5 {
            acc += (pts[j + 1] - pts[j]).norm();
            j += 1;
        }
        s_of.push(acc);
    }
    for w in s_of.windows(2) {
        assert_abs_diff_eq!(w[1] - w[0], 0.2, epsilon = 1e-4);
    }
}

#[test]
fn l_shape_tangent_turns_one_way() {
    let d = synthesize_demo(&path(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)]), 1.0, 0.05).unwrap();
    let vs: Vec<Vec2> = d.samples[..d.len() - 1].iter().map(|s| s.1).collect();
    let start = vs.len() / 4;
    let end = 3 * vs.len() / 4;
    for w in vs[start..end].windows(2) {
        let cross = w[0].x * w[1].y - w[0].y * w[1].x;
        assert!(cross > 0.0, "tangent must keep turning left, cross {cross}");
    }
}

#[test]
fn coincident_waypoints_are_degenerate() {
    let r = synthesize_demo(&path(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]), 1.0, 0.1);
    assert_eq!(r.unwrap_err(), DsError::DegeneratePath);
}

fn spiral_demo() -> DemoDataset {
    // 100 samples on a spiral that shrinks to the origin, velocity from xi' = -xi
    let samples: Vec<(Vec2, Vec2)> = (0..100)
        .map(|i| {
            let t = i as f64 / 99.0;
            let r = 1.0 - t;
            let x = Vec2::new(r * (4.0 * PI * t).cos(), r * (4.0 * PI * t).sin());
            (x, -x)
        })
        .collect();
    DemoDataset::new(samples, 50.0).unwrap()
}

#[test]
fn fit_recovers_isotropic_contraction() {
    let m = fit(&spiral_demo(), 1, 0.1, &FitConfig::default()).unwrap();
    let a = m.components()[0].a;
    assert!((a + Mat2::identity()).norm() < 0.15, "A = {a}");
    assert_eq!(m.attractor(), Vec2::zeros());
}

#[test]
fn fit_recovers_anisotropic_field() {
    let target = Mat2::new(-1.0, 0.8, -0.8, -3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<(Vec2, Vec2)> = (0..200)
        .map(|_| {
            let x = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            (x, target * x)
        })
        .chain(std::iter::once((Vec2::zeros(), Vec2::zeros())))
        .collect();
    let m = fit(&DemoDataset::new(samples, 50.0).unwrap(), 2, 0.1, &FitConfig::default()).unwrap();
    for c in m.components() {
        assert!((c.a - target).norm() < 0.05, "A = {}", c.a);
    }
}

#[test]
fn fitted_components_respect_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for k in 1..=4 {
        let wp: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, rng.random_range(-1.0..1.0))).collect();
        let d = synthesize_demo(&path(&wp), 1.0, 0.05).unwrap();
        let m = fit(&d, k, 0.1, &FitConfig::default()).unwrap();
        for c in m.components() {
            assert!(symmetric_part_max_eig(&c.a) <= -0.1 + 1e-12);
        }
        assert_abs_diff_eq!(m.evaluate(&d.terminal()).norm(), 0.0, epsilon = 1e-12);
    }
}

#[test]
fn straight_line_residual_near_unconstrained_optimum() {
    let d = synthesize_demo(&path(&[(0.0, 0.0), (3.0, 0.0)]), 1.0, 0.05).unwrap();
    let end = d.terminal();
    let n = d.len() as f64;
    // unconstrained least squares for a single affine-free linear map around the terminal point
    let mut gram = Mat2::zeros();
    let mut cross = Mat2::zeros();
    for (x, v) in &d.samples {
        let e = x - end;
        gram += e * e.transpose();
        cross += v * e.transpose();
    }
    // the gram matrix is rank one here, so use the pseudo-inverse along x
    let a_ls = Mat2::new(cross[(0, 0)] / gram[(0, 0)], 0.0, 0.0, 0.0);
    let ls_residual: f64 = d.samples.iter().map(|(x, v)| (v - a_ls * (x - end)).norm_squared()).sum::<f64>() / n;
    let m = fit(&d, 1, 0.1, &FitConfig::default()).unwrap();
    let fit_residual: f64 = d.samples.iter().map(|(x, v)| (v - m.evaluate(x)).norm_squared()).sum::<f64>() / n;
    assert!(fit_residual <= 10.0 * ls_residual + 1e-9, "fit {fit_residual} vs ls {ls_residual}");
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = 3;
    let attractor = Vec2::new(0.5, -0.2);
    let samples: Vec<(Vec2, Vec2)> = (0..40)
        .map(|_| {
            (
                Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
                Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            )
        })
        .collect();
    let weights: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let t: f64 = raw.iter().sum();
            raw.iter().map(|r| r / t).collect()
        })
        .collect();
    let params: Vec<StableParams> = (0..k)
        .map(|_| StableParams {
            s: rng.random_range(-1.0..1.0),
            l11: rng.random_range(-1.0..1.0),
            l21: rng.random_range(-1.0..1.0),
            l22: rng.random_range(-1.0..1.0),
        })
        .collect();
    let (_, grad) = objective_and_gradient(&params, 0.1, &samples, &weights, &attractor);
    let h = 1e-6;
    for c in 0..k {
        for field in 0..4 {
            let bump = |delta: f64| {
                let mut p = params.clone();
                let f = match field {
                    0 => &mut p[c].s,
                    1 => &mut p[c].l11,
                    2 => &mut p[c].l21,
                    _ => &mut p[c].l22,
                };
                *f += delta;
                objective_and_gradient(&p, 0.1, &samples, &weights, &attractor).0
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let g = grad[c];
            let analytic = [g.s, g.l11, g.l21, g.l22][field];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-5, "component {c} field {field}: {analytic} vs {numeric}");
        }
    }
}

#[test]
fn fit_rejects_bad_data() {
    let short = DemoDataset { samples: vec![(Vec2::zeros(), Vec2::zeros()); 7], rate: 50.0 };
    assert_eq!(fit(&short, 2, 0.1, &FitConfig::default()).unwrap_err(), DsError::TooFewSamples { needed: 8, got: 7, k: 2 });
    let mut bad = spiral_demo();
    bad.samples[3].1.x = f64::NAN;
    assert!(matches!(fit(&bad, 1, 0.1, &FitConfig::default()), Err(DsError::InvalidData(_))));
}

#[test]
fn warm_start_never_worse_than_cold() {
    let d1 = synthesize_demo(&path(&[(0.0, 0.0), (1.0, 0.4), (2.0, 0.0), (3.0, 0.5)]), 1.0, 0.05).unwrap();
    let d2 = synthesize_demo(&path(&[(0.2, 0.1), (1.1, 0.5), (2.0, 0.1), (3.0, 0.6)]), 1.0, 0.05).unwrap();
    let first = fit(&d1, 3, 0.1, &FitConfig::default()).unwrap();
    let (warm, _) = fit_warm(&d2, 3, 0.1, &FitConfig::default(), Some(&first)).unwrap();
    let (cold, _) = fit_warm(&d2, 3, 0.1, &FitConfig::default(), None).unwrap();
    let residual = |m: &MixtureModel| d2.samples.iter().map(|(x, v)| (v - m.evaluate(x)).norm_squared()).sum::<f64>();
    assert!(residual(&warm) <= residual(&cold) * (1.0 + 1e-6) + 1e-12);
    for c in warm.components() {
        assert!(c.is_stable(0.1));
    }
}

#[test]
fn batch_fit_uses_origin_attractor() {
    let demos: Vec<DemoDataset> = (0..3)
        .map(|i| synthesize_demo(&path(&[(i as f64, 0.0), (i as f64 + 2.0, 1.0)]), 1.0, 0.1).unwrap())
        .collect();
    let (m, _) = fit_batch(&demos, 2, 0.1, &FitConfig::default()).unwrap();
    assert_eq!(m.attractor(), Vec2::zeros());
    let v = m.evaluate(&Vec2::new(-2.0, -1.0));
    assert!(v.x > 0.0 && v.y > 0.0);
}

#[test]
fn json_roundtrip_preserves_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = random_model(&mut rng, 4);
    let back = MixtureModel::from_json(&m.to_json()).unwrap();
    for _ in 0..100 {
        let x = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        assert_abs_diff_eq!(back.evaluate(&x), m.evaluate(&x), epsilon = 1e-12);
    }
    assert!(matches!(MixtureModel::from_json("{\"K\": 1}"), Err(DsError::Parse(_))));
}

proptest! {
    #[test]
    fn weights_form_a_partition_of_unity(seed in any::<u64>(), k in 1usize..5, x in -20.0..20.0f64, y in -20.0..20.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, k);
        let r = m.responsibilities(&Vec2::new(x, y));
        prop_assert!(r.weights.iter().all(|w| *w >= 0.0));
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
