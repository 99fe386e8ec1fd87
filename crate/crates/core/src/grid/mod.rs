//! Occupancy grid: scan integration, inflation, collision queries and
//! free-space sampling.

mod mapfile;
pub mod raster;

use std::ops::ControlFlow;

use rand::Rng;
use thiserror::Error;

use crate::geometry::{Pose, Vec2};

pub use mapfile::MapParseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("point ({x}, {y}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("grid has no free cell to sample from")]
    EmptyFreeSpace,
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    pub fn symbol(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Occupied => '#',
            Cell::Unknown => '?',
        }
    }

    pub fn from_symbol(c: char) -> Option<Cell> {
        match c {
            '.' => Some(Cell::Free),
            '#' => Some(Cell::Occupied),
            '?' => Some(Cell::Unknown),
            _ => None,
        }
    }
}

/// Grid index `(column, row)`; column grows with x, row with y.
pub type CellIndex = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Vec2,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    inflation_radius: f64,
}

/// A fan of range measurements taken from one sensor pose.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScan {
    pub pose: Pose,
    /// Beam angles relative to the sensor heading.
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl RangeScan {
    fn is_hit(&self, range: f64) -> bool {
        range.is_finite() && range > 0.0 && range < self.max_range
    }
}

impl OccupancyGrid {
    pub fn new(
        resolution: f64,
        origin: Vec2,
        width: usize,
        height: usize,
        fill: Cell,
    ) -> Result<Self, GridError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::InvalidGeometry(format!("resolution {resolution} must be > 0")));
        }
        if width == 0 || height == 0 {
            return Err(GridError::InvalidGeometry("width and height must be non-zero".into()));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(GridError::InvalidGeometry("origin must be finite".into()));
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            cells: vec![fill; width * height],
            inflation_radius: 0.0,
        })
    }

    /// Grid covering the axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn covering(x0: f64, y0: f64, x1: f64, y1: f64, resolution: f64, fill: Cell) -> Result<Self, GridError> {
        let width = ((x1 - x0) / resolution).round() as usize;
        let height = ((y1 - y0) / resolution).round() as usize;
        Self::new(resolution, Vec2::new(x0, y0), width, height, fill)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn inflation_radius(&self) -> f64 {
        self.inflation_radius
    }

    /// Upper-right world corner.
    pub fn extent(&self) -> Vec2 {
        self.origin + Vec2::new(self.width as f64, self.height as f64) * self.resolution
    }

    fn to_lattice(&self, p: &Vec2) -> (f64, f64) {
        ((p.x - self.origin.x) / self.resolution, (p.y - self.origin.y) / self.resolution)
    }

    fn lattice_in_bounds(&self, c: (i64, i64)) -> Option<CellIndex> {
        if c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < self.width && (c.1 as usize) < self.height {
            Some((c.0 as usize, c.1 as usize))
        } else {
            None
        }
    }

    pub fn world_to_cell(&self, p: &Vec2) -> Result<CellIndex, GridError> {
        let (u, v) = self.to_lattice(p);
        if !(u.is_finite() && v.is_finite()) {
            return Err(GridError::OutOfBounds { x: p.x, y: p.y });
        }
        self.lattice_in_bounds((u.floor() as i64, v.floor() as i64))
            .ok_or(GridError::OutOfBounds { x: p.x, y: p.y })
    }

    /// World coordinates of the cell center.
    pub fn cell_to_world(&self, c: CellIndex) -> Vec2 {
        self.origin + Vec2::new(c.0 as f64 + 0.5, c.1 as f64 + 0.5) * self.resolution
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        self.world_to_cell(p).is_ok()
    }

    pub fn get(&self, c: CellIndex) -> Cell {
        self.cells[c.1 * self.width + c.0]
    }

    /// Direct cell write, for map authoring.
    pub fn set(&mut self, c: CellIndex, state: Cell) {
        self.cells[c.1 * self.width + c.0] = state;
    }

    pub fn cell_at(&self, p: &Vec2) -> Result<Cell, GridError> {
        Ok(self.get(self.world_to_cell(p)?))
    }

    pub fn is_free(&self, p: &Vec2) -> bool {
        matches!(self.cell_at(p), Ok(Cell::Free))
    }

    pub fn is_occupied(&self, p: &Vec2) -> bool {
        matches!(self.cell_at(p), Ok(Cell::Occupied))
    }

    pub fn count(&self, state: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = (CellIndex, Cell)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(k, &c)| ((k % self.width, k / self.width), c))
    }

    /// Sets every cell whose center lies inside the rectangle.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, state: Cell) {
        let (lo_x, hi_x) = (x0.min(x1), x0.max(x1));
        let (lo_y, hi_y) = (y0.min(y1), y0.max(y1));
        for j in 0..self.height {
            for i in 0..self.width {
                let c = self.cell_to_world((i, j));
                if c.x >= lo_x && c.x <= hi_x && c.y >= lo_y && c.y <= hi_y {
                    self.set((i, j), state);
                }
            }
        }
    }

    /// Marks the outermost ring of cells Occupied.
    pub fn close_border(&mut self) {
        for i in 0..self.width {
            self.set((i, 0), Cell::Occupied);
            self.set((i, self.height - 1), Cell::Occupied);
        }
        for j in 0..self.height {
            self.set((0, j), Cell::Occupied);
            self.set((self.width - 1, j), Cell::Occupied);
        }
    }

    /// Fuses one range scan: cells along each beam become Free, the cell
    /// holding a hit becomes Occupied. Beams at `max_range` only clear.
    pub fn integrate_scan(&mut self, scan: &RangeScan) -> Result<(), GridError> {
        let origin = scan.pose.position();
        self.world_to_cell(&origin)?;
        let start = self.to_lattice(&origin);

        let mut hits = Vec::new();
        for (&angle, &range) in scan.angles.iter().zip(&scan.ranges) {
            if range.is_nan() || range <= 0.0 {
                continue;
            }
            let hit = scan.is_hit(range);
            let reach = if hit { range } else { scan.max_range };
            let dir = scan.pose.theta + angle;
            let end_world = origin + Vec2::new(dir.cos(), dir.sin()) * reach;
            let end = self.to_lattice(&end_world);
            let end_cell = (end.0.floor() as i64, end.1.floor() as i64);

            let mut entered = false;
            let _ = raster::traverse(start, end, |c, _| {
                if hit && c == end_cell {
                    return ControlFlow::Break(());
                }
                match self.lattice_in_bounds(c) {
                    Some(idx) => {
                        entered = true;
                        self.set(idx, Cell::Free);
                        ControlFlow::Continue(())
                    }
                    None if entered => ControlFlow::Break(()),
                    None => ControlFlow::Continue(()),
                }
            });
            if hit {
                if let Some(idx) = self.lattice_in_bounds(end_cell) {
                    hits.push(idx);
                }
            }
        }
        for idx in hits {
            self.set(idx, Cell::Occupied);
        }
        Ok(())
    }

    /// Marks Occupied every cell whose center lies within `radius` of an
    /// Occupied cell center.
    pub fn inflate(&mut self, radius: f64) {
        self.inflation_radius = radius.max(0.0);
        if radius <= 0.0 {
            return;
        }
        let reach = (radius / self.resolution).floor() as i64;
        let r2 = (radius / self.resolution).powi(2);
        let occupied: Vec<CellIndex> = self
            .cells()
            .filter(|(_, c)| *c == Cell::Occupied)
            .map(|(idx, _)| idx)
            .collect();
        let offsets: Vec<(i64, i64)> = (-reach..=reach)
            .flat_map(|di| (-reach..=reach).map(move |dj| (di, dj)))
            .filter(|&(di, dj)| ((di * di + dj * dj) as f64) <= r2 + 1e-9)
            .collect();
        for (i, j) in occupied {
            for &(di, dj) in &offsets {
                if let Some(idx) = self.lattice_in_bounds((i as i64 + di, j as i64 + dj)) {
                    self.set(idx, Cell::Occupied);
                }
            }
        }
    }

    /// True iff every cell touched by segment `a`-`b` is Free.
    pub fn segment_free(&self, a: &Vec2, b: &Vec2) -> Result<bool, GridError> {
        self.world_to_cell(a)?;
        self.world_to_cell(b)?;
        let flow = raster::traverse(self.to_lattice(a), self.to_lattice(b), |c, _| {
            match self.lattice_in_bounds(c) {
                Some(idx) if self.get(idx) == Cell::Free => ControlFlow::Continue(()),
                _ => ControlFlow::Break(()),
            }
        });
        Ok(flow.is_continue())
    }

    /// Distance along the ray to the first Occupied cell, capped at
    /// `max_range`. Leaving the grid counts as no hit.
    pub fn raycast(&self, from: &Vec2, angle: f64, max_range: f64) -> f64 {
        let end = from + Vec2::new(angle.cos(), angle.sin()) * max_range;
        let mut range = max_range;
        let _ = raster::traverse(self.to_lattice(from), self.to_lattice(&end), |c, t| {
            match self.lattice_in_bounds(c) {
                Some(idx) if self.get(idx) == Cell::Occupied => {
                    range = (t * max_range).max(self.resolution * 1e-3);
                    ControlFlow::Break(())
                }
                Some(_) => ControlFlow::Continue(()),
                None => ControlFlow::Break(()),
            }
        });
        range
    }

    /// Simulated range scan against this grid taken as ground truth.
    pub fn simulate_scan(&self, pose: Pose, fov: f64, beams: usize, max_range: f64) -> RangeScan {
        let angles: Vec<f64> = (0..beams)
            .map(|k| {
                if beams == 1 {
                    0.0
                } else {
                    -fov / 2.0 + fov * k as f64 / (beams - 1) as f64
                }
            })
            .collect();
        let ranges = angles
            .iter()
            .map(|a| self.raycast(&pose.position(), pose.theta + a, max_range))
            .collect();
        RangeScan { pose, angles, ranges, max_range }
    }

    pub fn free_sampler(&self) -> Result<FreeSampler, GridError> {
        FreeSampler::new(self)
    }

    /// One uniform sample over the Free cells.
    pub fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec2, GridError> {
        Ok(self.free_sampler()?.sample(self, rng))
    }
}

/// Precomputed list of Free cells for repeated uniform sampling.
#[derive(Debug, Clone)]
pub struct FreeSampler {
    free: Vec<CellIndex>,
}

impl FreeSampler {
    pub fn new(grid: &OccupancyGrid) -> Result<Self, GridError> {
        let free: Vec<CellIndex> = grid
            .cells()
            .filter(|(_, c)| *c == Cell::Free)
            .map(|(idx, _)| idx)
            .collect();
        if free.is_empty() {
            return Err(GridError::EmptyFreeSpace);
        }
        Ok(Self { free })
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    /// Uniform cell choice, then a uniform point within the cell.
    pub fn sample<R: Rng + ?Sized>(&self, grid: &OccupancyGrid, rng: &mut R) -> Vec2 {
        let (i, j) = self.free[rng.random_range(0..self.free.len())];
        // keep strictly inside the cell so world_to_cell maps back to it
        let u = rng.random::<f64>().min(1.0 - 1e-9);
        let v = rng.random::<f64>().min(1.0 - 1e-9);
        grid.origin + Vec2::new(i as f64 + u, j as f64 + v) * grid.resolution
    }
}
