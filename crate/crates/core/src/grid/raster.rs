//! Supercover traversal of a segment through a unit-cell lattice.
//!
//! Coordinates are in cell units: cell `(i, j)` covers `[i, i+1) x [j, j+1)`.
//! Every cell whose closed square the segment touches is reported, including
//! both side neighbours when the segment passes exactly through a lattice
//! corner.

use std::ops::ControlFlow;

/// Visits each cell touched by the segment `a`-`b` in order of entry.
///
/// The callback receives the cell and the segment parameter in [0, 1] at
/// which the segment enters it. Returning `ControlFlow::Break` stops the walk.
pub fn traverse<F>(a: (f64, f64), b: (f64, f64), mut visit: F) -> ControlFlow<()>
where
    F: FnMut((i64, i64), f64) -> ControlFlow<()>,
{
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut cell = (a.0.floor() as i64, a.1.floor() as i64);
    let end = (b.0.floor() as i64, b.1.floor() as i64);

    let (step_x, mut t_max_x, t_delta_x) = axis_setup(a.0, dx);
    let (step_y, mut t_max_y, t_delta_y) = axis_setup(a.1, dy);

    visit(cell, 0.0)?;
    while cell != end {
        if t_max_x < t_max_y {
            if t_max_x > 1.0 {
                break;
            }
            cell.0 += step_x;
            visit(cell, t_max_x)?;
            t_max_x += t_delta_x;
        } else if t_max_y < t_max_x {
            if t_max_y > 1.0 {
                break;
            }
            cell.1 += step_y;
            visit(cell, t_max_y)?;
            t_max_y += t_delta_y;
        } else {
            // exact corner crossing
            if t_max_x > 1.0 || !t_max_x.is_finite() {
                break;
            }
            let t = t_max_x;
            visit((cell.0 + step_x, cell.1), t)?;
            visit((cell.0, cell.1 + step_y), t)?;
            cell = (cell.0 + step_x, cell.1 + step_y);
            visit(cell, t)?;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
    }
    ControlFlow::Continue(())
}

fn axis_setup(start: f64, delta: f64) -> (i64, f64, f64) {
    if delta > 0.0 {
        let next = start.floor() + 1.0;
        (1, (next - start) / delta, 1.0 / delta)
    } else if delta < 0.0 {
        let prev = start.floor();
        (-1, (start - prev) / -delta, -1.0 / delta)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// All cells touched by the segment, in traversal order.
pub fn supercover(a: (f64, f64), b: (f64, f64)) -> Vec<(i64, i64)> {
    let mut cells = Vec::new();
    let _ = traverse(a, b, |c, _| {
        cells.push(c);
        ControlFlow::Continue(())
    });
    cells
}
