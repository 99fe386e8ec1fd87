use std::fmt::Write as _;
use std::io::Read;

use crate::geometry::{project_on_segment, Vec2};
use crate::grid::OccupancyGrid;

/// Ordered waypoints from the vehicle to the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    pub waypoints: Vec<Vec2>,
    /// Total polyline length, meters.
    pub cost: f64,
    /// Simulation time at which the path became available, seconds.
    pub stamp: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PathParseError {
    #[error("path csv line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WaypointPath {
    pub fn new(waypoints: Vec<Vec2>, stamp: f64) -> Self {
        let cost = polyline_length(&waypoints);
        Self { waypoints, cost, stamp }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn first(&self) -> Option<&Vec2> {
        self.waypoints.first()
    }

    pub fn last(&self) -> Option<&Vec2> {
        self.waypoints.last()
    }

    /// Same geometry, ignoring the stamp.
    pub fn same_route(&self, other: &WaypointPath) -> bool {
        self.waypoints == other.waypoints
    }

    pub fn is_collision_free(&self, grid: &OccupancyGrid) -> bool {
        self.waypoints
            .windows(2)
            .all(|w| grid.segment_free(&w[0], &w[1]).unwrap_or(false))
    }

    /// Cumulative arclength at each waypoint.
    pub fn arclengths(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.waypoints.len());
        for (i, w) in self.waypoints.iter().enumerate() {
            if i > 0 {
                acc += (w - self.waypoints[i - 1]).norm();
            }
            out.push(acc);
        }
        out
    }

    /// Arclength of the point on the polyline closest to `p`; earliest
    /// segment wins ties.
    pub fn project(&self, p: &Vec2) -> f64 {
        let s = self.arclengths();
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.waypoints.windows(2).enumerate() {
            let (q, t) = project_on_segment(p, &w[0], &w[1]);
            let d = (q - p).norm_squared();
            if d < best.0 {
                best = (d, s[i] + t * (s[i + 1] - s[i]));
            }
        }
        if self.waypoints.len() == 1 {
            return 0.0;
        }
        best.1
    }

    /// Distance from `p` to the polyline.
    pub fn distance(&self, p: &Vec2) -> f64 {
        match self.waypoints.len() {
            0 => f64::INFINITY,
            1 => (self.waypoints[0] - p).norm(),
            _ => self
                .waypoints
                .windows(2)
                .map(|w| (project_on_segment(p, &w[0], &w[1]).0 - p).norm())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Point at arclength `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let arcs = self.arclengths();
        if s <= 0.0 || self.waypoints.len() == 1 {
            return self.waypoints[0];
        }
        for i in 1..self.waypoints.len() {
            if s <= arcs[i] {
                let seg = arcs[i] - arcs[i - 1];
                let t = if seg > 0.0 { (s - arcs[i - 1]) / seg } else { 1.0 };
                return self.waypoints[i - 1] + (self.waypoints[i] - self.waypoints[i - 1]) * t;
            }
        }
        *self.waypoints.last().unwrap()
    }

    /// Greedy line-of-sight pruning: from each kept waypoint, jump to the
    /// farthest later waypoint reachable by a free segment. Keeps both ends
    /// and never lengthens the path.
    pub fn shortcut(&self, grid: &OccupancyGrid) -> WaypointPath {
        if self.waypoints.len() <= 2 {
            return self.clone();
        }
        let last = self.waypoints.len() - 1;
        let mut kept = vec![self.waypoints[0]];
        let mut i = 0;
        while i < last {
            let mut j = last;
            while j > i + 1 && !grid.segment_free(&self.waypoints[i], &self.waypoints[j]).unwrap_or(false) {
                j -= 1;
            }
            kept.push(self.waypoints[j]);
            i = j;
        }
        WaypointPath::new(kept, self.stamp)
    }

    /// Splits every segment longer than `max_spacing` into equal pieces.
    /// Original waypoints are kept.
    pub fn densify(&self, max_spacing: f64) -> WaypointPath {
        if !(max_spacing > 0.0) || self.waypoints.len() < 2 {
            return self.clone();
        }
        let mut out = vec![self.waypoints[0]];
        for w in self.waypoints.windows(2) {
            let n = ((w[1] - w[0]).norm() / max_spacing).ceil().max(1.0) as usize;
            for k in 1..=n {
                out.push(w[0] + (w[1] - w[0]) * (k as f64 / n as f64));
            }
        }
        WaypointPath::new(out, self.stamp)
    }

    /// CSV dump: a `# stamp=.. cost=..` comment, then `index,x,y` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# stamp={} cost={}\nindex,x,y\n", self.stamp, self.cost);
        for (i, w) in self.waypoints.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", w.x, w.y);
        }
        out
    }

    pub fn from_csv<R: Read>(mut reader: R) -> Result<Self, PathParseError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut stamp = 0.0;
        if let Some(first) = text.lines().next().filter(|l| l.starts_with('#')) {
            for field in first.trim_start_matches('#').split_whitespace() {
                if let Some(v) = field.strip_prefix("stamp=") {
                    stamp = v.parse().map_err(|_| PathParseError::Malformed {
                        line: 1,
                        message: format!("bad stamp `{v}`"),
                    })?;
                }
            }
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut waypoints = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(k + 2);
            let field = |i: usize, name: &str| -> Result<f64, PathParseError> {
                rec.get(i)
                    .ok_or_else(|| PathParseError::Malformed { line, message: format!("missing column {name}") })?
                    .trim()
                    .parse()
                    .map_err(|_| PathParseError::Malformed { line, message: format!("bad {name} value") })
            };
            waypoints.push(Vec2::new(field(1, "x")?, field(2, "y")?));
        }
        if waypoints.is_empty() {
            return Err(PathParseError::Malformed { line: 1, message: "no waypoints".into() });
        }
        Ok(Self::new(waypoints, stamp))
    }
}

pub fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}
