//! Expectation-maximization for a 2-D Gaussian mixture.

use std::f64::consts::PI;

use crate::geometry::Vec2;

use super::{DsError, Mat2};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub means: Vec<Vec2>,
    pub covariances: Vec<Mat2>,
    pub priors: Vec<f64>,
    /// Components dropped because their covariance collapsed or they lost
    /// all support.
    pub pruned: usize,
}

impl GaussianMixture {
    pub fn k(&self) -> usize {
        self.means.len()
    }
}

fn log_density(x: &Vec2, mean: &Vec2, cov: &Mat2) -> f64 {
    let det = cov.determinant();
    let inv = cov.try_inverse().unwrap_or_else(Mat2::identity);
    let d = x - mean;
    -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * d.dot(&(inv * d))
}

/// Fits `k` components to `points`. Initial clusters are contiguous chunks
/// of the input order, which for trajectory data splits the path into
/// consecutive segments and keeps the fit deterministic.
///
/// `reg_covar` is added to every covariance diagonal. A component that has
/// collapsed onto a point (larger covariance eigenvalue below `cov_floor`
/// before regularization) or carries less than one sample of weight is
/// pruned. Data on a straight line is fine: only one axis is degenerate.
pub fn fit_gmm(points: &[Vec2], k: usize, iterations: usize, reg_covar: f64, cov_floor: f64) -> Result<GaussianMixture, DsError> {
    let n = points.len();
    if k == 0 {
        return Err(DsError::InvalidData("k must be at least 1".into()));
    }
    if n < k {
        return Err(DsError::TooFewSamples { needed: k, got: n, k });
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(DsError::InvalidData("non-finite position".into()));
    }
    let mut resp = vec![vec![0.0; k]; n];
    for (i, r) in resp.iter_mut().enumerate() {
        r[(i * k / n).min(k - 1)] = 1.0;
    }
    let mut gmm = m_step(points, &resp, reg_covar);
    let mut pruned = 0;
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..iterations {
        // prune collapsed components before the next E-step
        let keep: Vec<bool> = (0..gmm.k())
            .map(|j| gmm.priors[j] * n as f64 >= 1.0 && max_eig(&gmm.covariances[j]) - reg_covar >= cov_floor)
            .collect();
        let dropped = keep.iter().filter(|b| !**b).count();
        if dropped > 0 && dropped < keep.len() {
            log::warn!("pruning {dropped} degenerate mixture component(s)");
            pruned += dropped;
            retain_mask(&mut gmm.means, &keep);
            retain_mask(&mut gmm.covariances, &keep);
            retain_mask(&mut gmm.priors, &keep);
            let total: f64 = gmm.priors.iter().sum();
            gmm.priors.iter_mut().for_each(|p| *p /= total);
        }
        let kk = gmm.k();
        let mut ll = 0.0;
        resp = points
            .iter()
            .map(|x| {
                let logs: Vec<f64> =
                    (0..kk).map(|j| gmm.priors[j].ln() + log_density(x, &gmm.means[j], &gmm.covariances[j])).collect();
                let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
                ll += max + total.ln();
                logs.iter().map(|l| (l - max).exp() / total).collect()
            })
            .collect();
        gmm = m_step(points, &resp, reg_covar);
        if (ll - prev_ll).abs() <= 1e-8 * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }
    gmm.pruned = pruned;
    Ok(gmm)
}

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap());
}

fn m_step(points: &[Vec2], resp: &[Vec<f64>], reg_covar: f64) -> GaussianMixture {
    let k = resp[0].len();
    let n = points.len() as f64;
    let mut means = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    let mut priors = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.iter().map(|r| r[j]).sum::<f64>();
        let nk_safe = nk.max(1e-300);
        let mean = points.iter().zip(resp).map(|(p, r)| p * r[j]).sum::<Vec2>() / nk_safe;
        let mut cov = Mat2::zeros();
        for (p, r) in points.iter().zip(resp) {
            let d = p - mean;
            cov += d * d.transpose() * r[j];
        }
        cov /= nk_safe;
        cov[(0, 1)] = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
        cov[(1, 0)] = cov[(0, 1)];
        cov += Mat2::identity() * reg_covar;
        means.push(mean);
        covariances.push(cov);
        priors.push(nk / n);
    }
    GaussianMixture { means, covariances, priors, pruned: 0 }
}

fn max_eig(s: &Mat2) -> f64 {
    let p = s[(0, 0)];
    let r = s[(1, 1)];
    let q = s[(0, 1)];
    0.5 * (p + r) + (0.25 * (p - r) * (p - r) + q * q).sqrt()
}
