//! Stability-constrained least-squares fit of the mixture's linear parts.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

use super::em::fit_gmm;
use super::spline::DemoDataset;
use super::{DsError, LinearSubsystem, Mat2, MixtureModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Gradient-descent iteration cap.
    pub max_iterations: usize,
    /// Stop when the gradient norm drops below this.
    pub gradient_tol: f64,
    /// Stop when the relative objective decrease of an iteration is below this.
    pub relative_tol: f64,
    pub em_iterations: usize,
    /// Added to every EM covariance diagonal, m^2.
    pub reg_covar: f64,
    /// Components whose spread collapses below this are pruned, m^2.
    pub cov_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            gradient_tol: 1e-8,
            relative_tol: 1e-10,
            em_iterations: 100,
            reg_covar: 1e-3,
            cov_floor: 1e-8,
        }
    }
}

/// Unconstrained parameters of one linear part:
/// `A = [[0, s], [-s, 0]] - L L^T - eps I` with `L = [[l11, 0], [l21, l22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StableParams {
    pub s: f64,
    pub l11: f64,
    pub l21: f64,
    pub l22: f64,
}

impl StableParams {
    pub fn matrix(&self, eps: f64) -> Mat2 {
        let Self { s, l11, l21, l22 } = *self;
        Mat2::new(
            -l11 * l11 - eps,
            s - l11 * l21,
            -s - l11 * l21,
            -(l21 * l21 + l22 * l22) - eps,
        )
    }

    /// Parameters of the closest matrix satisfying the margin: the skew part
    /// is kept and the symmetric part's eigenvalues are clipped to at most
    /// `-eps - margin`.
    pub fn from_matrix(a: &Mat2, eps: f64, margin: f64) -> Self {
        let s = 0.5 * (a[(0, 1)] - a[(1, 0)]);
        let sym = (a + a.transpose()) * 0.5;
        let mut eig = SymmetricEigen::new(sym);
        eig.eigenvalues.iter_mut().for_each(|l| *l = l.min(-eps - margin));
        let sym = eig.recompose();
        // M = -sym - eps I is positive definite by the clipping above
        let m = -sym - Mat2::identity() * eps;
        let l11 = m[(0, 0)].sqrt();
        let l21 = m[(1, 0)] / l11;
        let l22 = (m[(1, 1)] - l21 * l21).max(0.0).sqrt();
        Self { s, l11, l21, l22 }
    }

    fn to_array(self) -> [f64; 4] {
        [self.s, self.l11, self.l21, self.l22]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self { s: v[0], l11: v[1], l21: v[2], l22: v[3] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub pruned: usize,
    pub warm_started: bool,
}

/// Mean squared velocity residual
/// `J = (1/N) sum_n |v_n - sum_k w_nk A_k e_n|^2` with `e_n = x_n - attractor`,
/// and its gradient with respect to every parameter.
pub fn objective_and_gradient(
    params: &[StableParams],
    eps: f64,
    samples: &[(Vec2, Vec2)],
    weights: &[Vec<f64>],
    attractor: &Vec2,
) -> (f64, Vec<StableParams>) {
    let mats: Vec<Mat2> = params.iter().map(|p| p.matrix(eps)).collect();
    let n = samples.len() as f64;
    let mut j = 0.0;
    let mut grads = vec![Mat2::zeros(); params.len()];
    for ((x, v), w) in samples.iter().zip(weights) {
        let e = x - attractor;
        let pred: Vec2 = mats.iter().zip(w).map(|(a, g)| a * e * *g).sum();
        let r = v - pred;
        j += r.norm_squared();
        let outer = r * e.transpose();
        for (g, wk) in grads.iter_mut().zip(w) {
            *g -= outer * (2.0 * wk / n);
        }
    }
    let grad = params
        .iter()
        .zip(&grads)
        .map(|(p, g)| {
            let gs = g + g.transpose();
            let l = nalgebra::Matrix2::new(p.l11, 0.0, p.l21, p.l22);
            let dl = -(gs * l);
            StableParams { s: g[(0, 1)] - g[(1, 0)], l11: dl[(0, 0)], l21: dl[(1, 0)], l22: dl[(1, 1)] }
        })
        .collect();
    (j / n, grad)
}

/// Fits a fresh model; `b_k` puts the attractor at the last demo position.
pub fn fit(data: &DemoDataset, k: usize, eps_stab: f64, config: &FitConfig) -> Result<MixtureModel, DsError> {
    fit_warm(data, k, eps_stab, config, None).map(|(m, _)| m)
}

/// Like [`fit`], seeding the descent from `previous` linear parts when the
/// component count matches. The better of the warm and cold starting points
/// is used, so warm starting never hurts the objective.
pub fn fit_warm(
    data: &DemoDataset,
    k: usize,
    eps_stab: f64,
    config: &FitConfig,
    previous: Option<&MixtureModel>,
) -> Result<(MixtureModel, FitReport), DsError> {
    data.validate()?;
    fit_samples(&data.samples, data.terminal(), k, eps_stab, config, previous)
}

/// Offline fit on several demonstrations that share an attractor: each demo
/// is expressed relative to its own terminal point and the model's
/// attractor is the origin. Shift it to the goal before use.
pub fn fit_batch(
    demos: &[DemoDataset],
    k: usize,
    eps_stab: f64,
    config: &FitConfig,
) -> Result<(MixtureModel, FitReport), DsError> {
    let mut samples = Vec::new();
    for d in demos {
        d.validate()?;
        let end = d.terminal();
        samples.extend(d.samples.iter().map(|(x, v)| (x - end, *v)));
    }
    if samples.is_empty() {
        return Err(DsError::InvalidData("no demonstrations".into()));
    }
    fit_samples(&samples, Vec2::zeros(), k, eps_stab, config, None)
}

fn fit_samples(
    samples: &[(Vec2, Vec2)],
    attractor: Vec2,
    k: usize,
    eps: f64,
    config: &FitConfig,
    previous: Option<&MixtureModel>,
) -> Result<(MixtureModel, FitReport), DsError> {
    if k == 0 {
        return Err(DsError::InvalidData("k must be at least 1".into()));
    }
    if !(eps > 0.0) {
        return Err(DsError::InvalidData("eps_stab must be positive".into()));
    }
    if samples.len() < 4 * k {
        return Err(DsError::TooFewSamples { needed: 4 * k, got: samples.len(), k });
    }
    let finite = |v: &Vec2| v.x.is_finite() && v.y.is_finite();
    if samples.iter().any(|(x, v)| !finite(x) || !finite(v)) {
        return Err(DsError::InvalidData("non-finite sample".into()));
    }
    let positions: Vec<Vec2> = samples.iter().map(|s| s.0).collect();
    let gmm = fit_gmm(&positions, k, config.em_iterations, config.reg_covar, config.cov_floor)?;
    let k = gmm.k();
    let placeholder = vec![LinearSubsystem::with_attractor(-Mat2::identity() * (1.0 + eps), &attractor); k];
    let resp_model = MixtureModel::new(
        placeholder,
        gmm.means.clone(),
        gmm.covariances.clone(),
        gmm.priors.clone(),
        attractor,
        eps,
    )?;
    let weights: Vec<Vec<f64>> = positions.iter().map(|x| resp_model.responsibilities(x).weights).collect();

    let cold = cold_start(samples, &weights, &attractor, k, eps);
    let objective = |p: &[StableParams]| objective_and_gradient(p, eps, samples, &weights, &attractor).0;
    let mut params = cold;
    let mut warm_started = false;
    if let Some(prev) = previous.filter(|m| m.k() == k) {
        let warm: Vec<StableParams> =
            prev.components().iter().map(|c| StableParams::from_matrix(&c.a, eps, 1e-3)).collect();
        if objective(&warm) < objective(&params) {
            params = warm;
            warm_started = true;
        }
    }
    let (initial_objective, _) = objective_and_gradient(&params, eps, samples, &weights, &attractor);
    let (params, objective, iterations) = descend(params, eps, samples, &weights, &attractor, config);

    let components = params.iter().map(|p| LinearSubsystem::with_attractor(p.matrix(eps), &attractor)).collect();
    let model = MixtureModel::new(components, gmm.means, gmm.covariances, gmm.priors, attractor, eps)?;
    Ok((model, FitReport { initial_objective, objective, iterations, pruned: gmm.pruned, warm_started }))
}

/// Per-component weighted ridge regression toward the best isotropic
/// contraction, projected onto the stable set.
fn cold_start(samples: &[(Vec2, Vec2)], weights: &[Vec<f64>], attractor: &Vec2, k: usize, eps: f64) -> Vec<StableParams> {
    let mut ee = 0.0;
    let mut ev = 0.0;
    for (x, v) in samples {
        let e = x - attractor;
        ee += e.norm_squared();
        ev += e.dot(v);
    }
    let c0 = if ee > 0.0 { (-ev / ee).max(eps + 0.01) } else { 1.0 };
    (0..k)
        .map(|j| {
            let mut gram = Mat2::zeros();
            let mut cross = Mat2::zeros();
            let mut scale = 0.0;
            for ((x, v), w) in samples.iter().zip(weights) {
                let e = x - attractor;
                gram += e * e.transpose() * w[j];
                cross += v * e.transpose() * w[j];
                scale += w[j] * e.norm_squared();
            }
            let lambda = 1e-3 * scale.max(1e-12);
            let lhs = gram + Mat2::identity() * lambda;
            let rhs = cross - Mat2::identity() * (lambda * c0);
            let a = lhs.try_inverse().map(|inv| rhs * inv).unwrap_or_else(|| -Mat2::identity() * c0);
            StableParams::from_matrix(&a, eps, 1e-3)
        })
        .collect()
}

fn descend(
    mut params: Vec<StableParams>,
    eps: f64,
    samples: &[(Vec2, Vec2)],
    weights: &[Vec<f64>],
    attractor: &Vec2,
    config: &FitConfig,
) -> (Vec<StableParams>, f64, usize) {
    let (mut j, mut grad) = objective_and_gradient(&params, eps, samples, weights, attractor);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let g2: f64 = grad.iter().map(|g| g.to_array().iter().map(|x| x * x).sum::<f64>()).sum();
        if g2.sqrt() < config.gradient_tol {
            break;
        }
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<StableParams> = params
                .iter()
                .zip(&grad)
                .map(|(p, g)| {
                    let (p, g) = (p.to_array(), g.to_array());
                    StableParams::from_array([0, 1, 2, 3].map(|i| p[i] - step * g[i]))
                })
                .collect();
            let (jt, gt) = objective_and_gradient(&trial, eps, samples, weights, attractor);
            if jt <= j - 1e-4 * step * g2 {
                accepted = Some((trial, jt, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, jt, gt)) = accepted else { break };
        let improvement = j - jt;
        params = trial;
        j = jt;
        grad = gt;
        step *= 2.0;
        if improvement <= config.relative_tol * j.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (params, j, iterations)
}
