//! Text map format.
//!
//! ```text
//! resolution=0.05
//! origin_x=0
//! origin_y=0
//! width=4
//! height=2
//! inflation_radius=0
//! ..#.
//! ?...
//! ```
//!
//! Rows are written top (highest y) first. Floats use the shortest
//! representation that round-trips, so `to_map_string` after
//! `from_map_str` reproduces a canonical file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{Cell, OccupancyGrid};
use crate::geometry::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("map line {line}{}: {message}", key.as_ref().map(|k| format!(" (key `{k}`)")).unwrap_or_default())]
pub struct MapParseError {
    pub line: usize,
    pub key: Option<String>,
    pub message: String,
}

const KEYS: [&str; 6] = ["resolution", "origin_x", "origin_y", "width", "height", "inflation_radius"];

impl OccupancyGrid {
    pub fn to_map_string(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height + 128);
        let _ = writeln!(out, "resolution={}", self.resolution);
        let _ = writeln!(out, "origin_x={}", self.origin.x);
        let _ = writeln!(out, "origin_y={}", self.origin.y);
        let _ = writeln!(out, "width={}", self.width);
        let _ = writeln!(out, "height={}", self.height);
        let _ = writeln!(out, "inflation_radius={}", self.inflation_radius);
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                out.push(self.get((i, j)).symbol());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_map_str(text: &str) -> Result<Self, MapParseError> {
        let err = |line: usize, key: Option<&str>, message: String| MapParseError {
            line,
            key: key.map(str::to_string),
            message,
        };
        let mut values: [Option<f64>; 6] = [None; 6];
        let mut lines = text.lines().enumerate().peekable();
        while values.iter().any(Option::is_none) {
            let Some((n, line)) = lines.next() else {
                let missing = KEYS
                    .iter()
                    .zip(&values)
                    .find(|(_, v)| v.is_none())
                    .map(|(k, _)| *k)
                    .unwrap_or("?");
                return Err(err(text.lines().count() + 1, Some(missing), "missing header key".into()));
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(n + 1, None, format!("expected key=value header line, found `{line}`")));
            };
            let key = key.trim();
            let slot = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| err(n + 1, Some(key), "unknown header key".into()))?;
            if values[slot].is_some() {
                return Err(err(n + 1, Some(key), "duplicate header key".into()));
            }
            let parsed: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(n + 1, Some(key), format!("cannot parse `{}` as a number", value.trim())))?;
            values[slot] = Some(parsed);
        }
        let [resolution, ox, oy, width, height, inflation] = values.map(|v| v.unwrap_or_default());
        for (value, key) in [(width, "width"), (height, "height")] {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(err(0, Some(key), format!("must be a positive integer, got {value}")));
            }
        }
        if inflation < 0.0 {
            return Err(err(0, Some("inflation_radius"), "must be >= 0".into()));
        }
        let (width, height) = (width as usize, height as usize);
        let mut grid = OccupancyGrid::new(resolution, Vec2::new(ox, oy), width, height, Cell::Unknown)
            .map_err(|e| err(0, Some("resolution"), e.to_string()))?;
        grid.inflation_radius = inflation;

        for row in 0..height {
            let Some((n, line)) = lines.next() else {
                return Err(err(text.lines().count() + 1, None, format!("expected {height} grid rows, found {row}")));
            };
            let j = height - 1 - row;
            let mut count = 0;
            for (i, ch) in line.chars().enumerate() {
                let cell = Cell::from_symbol(ch)
                    .ok_or_else(|| err(n + 1, None, format!("invalid cell character `{ch}` at column {}", i + 1)))?;
                if i >= width {
                    return Err(err(n + 1, None, format!("row longer than width {width}")));
                }
                grid.set((i, j), cell);
                count += 1;
            }
            if count != width {
                return Err(err(n + 1, None, format!("row has {count} cells, expected {width}")));
            }
        }
        if let Some((n, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(err(n + 1, None, format!("unexpected trailing content `{line}`")));
        }
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self, MapParseError> {
        let text = std::fs::read_to_string(path).map_err(|e| MapParseError {
            line: 0,
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_map_str(&text)
    }
}
