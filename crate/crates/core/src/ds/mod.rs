//! Mixture of linear dynamical systems with a shared attractor.
//!
//! The field is `f(x) = sum_k g_k(x) (A_k x + b_k)` where the weights `g_k`
//! are normalized Gaussian posteriors and every `A_k + A_k^T` is negative
//! definite with margin `eps_stab`. With `b_k = -A_k x*` the attractor `x*`
//! is a fixed point and `|x - x*|^2` strictly decreases along the flow.

mod em;
mod fit;
mod io;
mod spline;

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::Vec2;

pub use em::{fit_gmm, GaussianMixture};
pub use fit::{fit, fit_batch, fit_warm, objective_and_gradient, FitConfig, FitReport, StableParams};
pub use spline::{synthesize_demo, DemoDataset, NaturalSpline};

pub type Mat2 = nalgebra::Matrix2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DsError {
    #[error("invalid demonstration data: {0}")]
    InvalidData(String),
    #[error("need at least {needed} samples for {k} components, got {got}")]
    TooFewSamples { needed: usize, got: usize, k: usize },
    #[error("degenerate path: all waypoints coincide")]
    DegeneratePath,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model parse error: {0}")]
    Parse(String),
}

/// Largest eigenvalue of `A + A^T`.
pub fn symmetric_part_max_eig(a: &Mat2) -> f64 {
    let p = 2.0 * a[(0, 0)];
    let r = 2.0 * a[(1, 1)];
    let q = a[(0, 1)] + a[(1, 0)];
    0.5 * (p + r) + (0.25 * (p - r) * (p - r) + q * q).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSubsystem {
    pub a: Mat2,
    pub b: Vec2,
}

impl LinearSubsystem {
    pub fn with_attractor(a: Mat2, attractor: &Vec2) -> Self {
        Self { a, b: -(a * attractor) }
    }

    pub fn eval(&self, x: &Vec2) -> Vec2 {
        self.a * x + self.b
    }

    pub fn is_stable(&self, eps_stab: f64) -> bool {
        symmetric_part_max_eig(&self.a) <= -eps_stab * (1.0 - 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct GaussCache {
    inv: Mat2,
    /// log of 1 / (2 pi sqrt(det))
    log_norm: f64,
}

/// Weights of one responsibility evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub weights: Vec<f64>,
    /// Every density underflowed and the nearest mean took all the weight.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    components: Vec<LinearSubsystem>,
    means: Vec<Vec2>,
    covariances: Vec<Mat2>,
    priors: Vec<f64>,
    attractor: Vec2,
    eps_stab: f64,
    cache: Vec<GaussCache>,
}

impl MixtureModel {
    pub fn new(
        components: Vec<LinearSubsystem>,
        means: Vec<Vec2>,
        covariances: Vec<Mat2>,
        priors: Vec<f64>,
        attractor: Vec2,
        eps_stab: f64,
    ) -> Result<Self, DsError> {
        let k = components.len();
        if k == 0 {
            return Err(DsError::InvalidModel("at least one component required".into()));
        }
        if means.len() != k || covariances.len() != k || priors.len() != k {
            return Err(DsError::InvalidModel("component, mean, covariance and prior counts differ".into()));
        }
        if !(eps_stab > 0.0) {
            return Err(DsError::InvalidModel("eps_stab must be > 0".into()));
        }
        let total: f64 = priors.iter().sum();
        if priors.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(DsError::InvalidModel(format!("priors must be non-negative and sum to 1 (sum {total})")));
        }
        for (i, c) in components.iter().enumerate() {
            if !c.is_stable(eps_stab) {
                return Err(DsError::InvalidModel(format!(
                    "component {i}: max eig of A + A^T is {} > -{eps_stab}",
                    symmetric_part_max_eig(&c.a)
                )));
            }
        }
        let mut cache = Vec::with_capacity(k);
        for (i, s) in covariances.iter().enumerate() {
            let det = s.determinant();
            if (s[(0, 1)] - s[(1, 0)]).abs() > 1e-12 * s.norm() || !(det > 0.0) || !(s[(0, 0)] > 0.0) {
                return Err(DsError::InvalidModel(format!("covariance {i} is not symmetric positive definite")));
            }
            let inv = s.try_inverse().ok_or_else(|| DsError::InvalidModel(format!("covariance {i} singular")))?;
            cache.push(GaussCache { inv, log_norm: -(2.0 * PI).ln() - 0.5 * det.ln() });
        }
        Ok(Self { components, means, covariances, priors, attractor, eps_stab, cache })
    }

    /// Single isotropic component with linear part `a`.
    pub fn single(a: Mat2, attractor: Vec2, eps_stab: f64) -> Result<Self, DsError> {
        Self::new(
            vec![LinearSubsystem::with_attractor(a, &attractor)],
            vec![attractor],
            vec![Mat2::identity()],
            vec![1.0],
            attractor,
            eps_stab,
        )
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[LinearSubsystem] {
        &self.components
    }

    pub fn means(&self) -> &[Vec2] {
        &self.means
    }

    pub fn covariances(&self) -> &[Mat2] {
        &self.covariances
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn attractor(&self) -> Vec2 {
        self.attractor
    }

    pub fn eps_stab(&self) -> f64 {
        self.eps_stab
    }

    fn weighted_density(&self, k: usize, x: &Vec2) -> f64 {
        let d = x - self.means[k];
        let c = &self.cache[k];
        self.priors[k] * (c.log_norm - 0.5 * d.dot(&(c.inv * d))).exp()
    }

    fn nearest_mean(&self, x: &Vec2) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, m) in self.means.iter().enumerate() {
            let d = (m - x).norm_squared();
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    pub fn responsibilities(&self, x: &Vec2) -> Responsibilities {
        let mut weights: Vec<f64> = (0..self.k()).map(|k| self.weighted_density(k, x)).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 && total.is_finite() {
            weights.iter_mut().for_each(|w| *w /= total);
            Responsibilities { weights, fallback: false }
        } else {
            let hot = self.nearest_mean(x);
            weights.iter_mut().enumerate().for_each(|(k, w)| *w = if k == hot { 1.0 } else { 0.0 });
            Responsibilities { weights, fallback: true }
        }
    }

    /// Desired velocity at `x`.
    pub fn evaluate(&self, x: &Vec2) -> Vec2 {
        let mut total = 0.0;
        let mut acc = Vec2::zeros();
        for (k, c) in self.components.iter().enumerate() {
            let w = self.weighted_density(k, x);
            total += w;
            acc += c.eval(x) * w;
        }
        if total > 0.0 && total.is_finite() {
            acc / total
        } else {
            self.components[self.nearest_mean(x)].eval(x)
        }
    }

    /// Recenters every component on `x_i`; linear parts and responsibility
    /// parameters are untouched.
    pub fn shift_attractor(&self, x_i: Vec2) -> Self {
        let mut out = self.clone();
        for c in &mut out.components {
            c.b = -(c.a * x_i);
        }
        out.attractor = x_i;
        out
    }

    /// Time derivative of `|x - x*|^2` along the field.
    pub fn lyapunov_rate(&self, x: &Vec2) -> f64 {
        2.0 * (x - self.attractor).dot(&self.evaluate(x))
    }
}

#[cfg(test)]
mod tests;
