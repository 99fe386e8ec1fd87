//! Natural cubic spline through waypoints and demonstration synthesis.

use crate::geometry::Vec2;
use crate::planner::WaypointPath;

use super::DsError;

/// DemoDataset sample rate is implied by spacing and speed.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    /// (position m, velocity m/s) pairs.
    pub samples: Vec<(Vec2, Vec2)>,
    /// Sampling rate, Hz.
    pub rate: f64,
}

impl DemoDataset {
    pub fn new(samples: Vec<(Vec2, Vec2)>, rate: f64) -> Result<Self, DsError> {
        let d = Self { samples, rate };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DsError> {
        if self.samples.is_empty() {
            return Err(DsError::InvalidData("empty dataset".into()));
        }
        let finite = |v: &Vec2| v.x.is_finite() && v.y.is_finite();
        if let Some(i) = self.samples.iter().position(|(p, v)| !finite(p) || !finite(v)) {
            return Err(DsError::InvalidData(format!("sample {i} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Last demonstrated position.
    pub fn terminal(&self) -> Vec2 {
        self.samples.last().map(|s| s.0).unwrap_or_else(Vec2::zeros)
    }
}

/// Per-axis natural cubic spline parameterized by cumulative chord length.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    points: Vec<Vec2>,
    /// Second derivatives at the knots.
    moments: Vec<Vec2>,
}

impl NaturalSpline {
    pub fn through(points: &[Vec2]) -> Result<Self, DsError> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q| (q - p).norm() > 1e-12) {
                pts.push(*p);
            }
        }
        if pts.len() < 2 {
            return Err(DsError::DegeneratePath);
        }
        let mut knots = vec![0.0];
        for w in pts.windows(2) {
            knots.push(knots.last().unwrap() + (w[1] - w[0]).norm());
        }
        let n = pts.len();
        let mut moments = vec![Vec2::zeros(); n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas)
            let m = n - 2;
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![Vec2::zeros(); m];
            for i in 0..m {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = ((pts[i + 2] - pts[i + 1]) / h[i + 1] - (pts[i + 1] - pts[i]) / h[i]) * 6.0;
            }
            for i in 1..m {
                let factor = h[i] / diag[i - 1];
                diag[i] -= factor * upper[i - 1];
                let prev = rhs[i - 1];
                rhs[i] -= prev * factor;
            }
            let mut sol = vec![Vec2::zeros(); m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                sol[i] = (rhs[i] - sol[i + 1] * upper[i]) / diag[i];
            }
            moments[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self { knots, points: pts, moments })
    }

    pub fn param_end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn segment(&self, t: f64) -> usize {
        match self.knots.binary_search_by(|k| k.total_cmp(&t)) {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    pub fn eval(&self, t: f64) -> Vec2 {
        let t = t.clamp(0.0, self.param_end());
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        self.points[i] * a
            + self.points[i + 1] * b
            + (self.moments[i] * (a * a * a - a) + self.moments[i + 1] * (b * b * b - b)) * (h * h / 6.0)
    }

    pub fn derivative(&self, t: f64) -> Vec2 {
        let t = t.clamp(0.0, self.param_end());
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        (self.points[i + 1] - self.points[i]) / h
            + (self.moments[i + 1] * (3.0 * b * b - 1.0) - self.moments[i] * (3.0 * a * a - 1.0)) * (h / 6.0)
    }

    /// Table of (parameter, arclength) with `per_segment` subdivisions per
    /// knot interval, integrated with 3-point Gauss-Legendre.
    fn arclength_table(&self, per_segment: usize) -> Vec<(f64, f64)> {
        let nodes = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
        let mut table = vec![(0.0, 0.0)];
        let mut s = 0.0;
        for w in self.knots.windows(2) {
            let dt = (w[1] - w[0]) / per_segment as f64;
            for j in 0..per_segment {
                let t0 = w[0] + dt * j as f64;
                let mid = t0 + 0.5 * dt;
                s += nodes.iter().map(|(x, wt)| wt * self.derivative(mid + 0.5 * dt * x).norm()).sum::<f64>() * 0.5 * dt;
                table.push((t0 + dt, s));
            }
        }
        table
    }
}

/// Samples a constant-speed demonstration along the spline through the
/// path: positions every `sample_spacing` meters of arclength with velocity
/// `nominal_speed` along the unit tangent, plus a terminal zero-velocity
/// sample at the path end.
pub fn synthesize_demo(path: &WaypointPath, nominal_speed: f64, sample_spacing: f64) -> Result<DemoDataset, DsError> {
    if path.len() < 2 {
        return Err(DsError::DegeneratePath);
    }
    if !(nominal_speed > 0.0) || !(sample_spacing > 0.0) {
        return Err(DsError::InvalidData("speed and spacing must be positive".into()));
    }
    let spline = NaturalSpline::through(&path.waypoints)?;
    let table = spline.arclength_table(64);
    let total = table.last().unwrap().1;
    let mut samples = Vec::new();
    let mut k = 0usize;
    let mut cursor = 0;
    loop {
        let s = k as f64 * sample_spacing;
        if s >= total - 1e-9 {
            break;
        }
        while cursor + 1 < table.len() - 1 && table[cursor + 1].1 < s {
            cursor += 1;
        }
        let (t0, s0) = table[cursor];
        let (t1, s1) = table[cursor + 1];
        let t = if s1 > s0 { t0 + (t1 - t0) * (s - s0) / (s1 - s0) } else { t0 };
        let tangent = spline.derivative(t);
        let norm = tangent.norm();
        let velocity = if norm > 0.0 { tangent * (nominal_speed / norm) } else { Vec2::zeros() };
        samples.push((spline.eval(t), velocity));
        k += 1;
    }
    samples.push((spline.eval(spline.param_end()), Vec2::zeros()));
    DemoDataset::new(samples, nominal_speed / sample_spacing)
}
