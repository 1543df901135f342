//! Parallel-beam CT projector backed by exact pixel intersection lengths.
//!
//! Rays are traced once at construction and stored in CSR form, so forward
//! and adjoint applications are sparse products and the adjoint is the exact
//! transpose by construction.

use super::{ImageGrid, LinearOperator};
use crate::error::{Error, Result};
use std::sync::Arc;

struct Csr {
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Csr {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for row in 0..self.rows {
            let mut acc = 0.0;
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            y[row] = acc;
        }
        y
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        for row in 0..self.rows {
            let yi = y[row];
            if yi == 0.0 {
                continue;
            }
            for k in self.indptr[row]..self.indptr[row + 1] {
                x[self.indices[k] as usize] += self.values[k] * yi;
            }
        }
        x
    }
}

/// Intersection lengths of one ray with every pixel it crosses.
///
/// The image occupies [-w/2, w/2] x [-h/2, h/2] with unit pixels, row 0 at
/// the top. The ray is the line { p : p . (cos theta, sin theta) = s },
/// traversed along direction (-sin theta, cos theta). Returns pairs of
/// (column-stacked pixel index, length).
pub fn trace_ray(grid: ImageGrid, theta: f64, s: f64) -> Vec<(usize, f64)> {
    let w = grid.width as f64;
    let h = grid.height as f64;
    let (xmin, xmax) = (-w / 2.0, w / 2.0);
    let (ymin, ymax) = (-h / 2.0, h / 2.0);
    let dir = (-theta.sin(), theta.cos());
    let p0 = (s * theta.cos(), s * theta.sin());

    let Some((t0, t1)) = clip_to_box(p0, dir, xmin, xmax, ymin, ymax) else {
        return Vec::new();
    };

    // crossing times with the pixel grid lines, classified at midpoints
    let mut events = vec![t0, t1];
    if dir.0.abs() > 1e-12 {
        for k in 0..=grid.width {
            let t = (xmin + k as f64 - p0.0) / dir.0;
            if t > t0 && t < t1 {
                events.push(t);
            }
        }
    }
    if dir.1.abs() > 1e-12 {
        for k in 0..=grid.height {
            let t = (ymin + k as f64 - p0.1) / dir.1;
            if t > t0 && t < t1 {
                events.push(t);
            }
        }
    }
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut out = Vec::with_capacity(events.len());
    for pair in events.windows(2) {
        let len = pair[1] - pair[0];
        if len <= 1e-12 {
            continue;
        }
        let tm = 0.5 * (pair[0] + pair[1]);
        let px = p0.0 + tm * dir.0;
        let py = p0.1 + tm * dir.1;
        let col = (px - xmin).floor();
        let rowf = (ymax - py).floor();
        if col < 0.0 || col >= w || rowf < 0.0 || rowf >= h {
            continue;
        }
        out.push((grid.index(rowf as usize, col as usize), len));
    }
    out
}

/// Parameter interval of the line p0 + t*dir inside the box, if any.
fn clip_to_box(
    p0: (f64, f64),
    dir: (f64, f64),
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (p, d, lo, hi) in [
        (p0.0, dir.0, xmin, xmax),
        (p0.1, dir.1, ymin, ymax),
    ] {
        if d.abs() < 1e-12 {
            if p < lo || p > hi {
                return None;
            }
        } else {
            let ta = (lo - p) / d;
            let tb = (hi - p) / d;
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    if t1 > t0 + 1e-12 {
        Some((t0, t1))
    } else {
        None
    }
}

/// Offsets of the detector bins: `n_rays` equispaced values spanning the
/// grid diagonal.
pub(crate) fn ray_offsets(grid: ImageGrid, n_rays: usize) -> Vec<f64> {
    let diag = ((grid.width * grid.width + grid.height * grid.height) as f64).sqrt();
    (0..n_rays)
        .map(|r| ((r as f64 + 0.5) / n_rays as f64 - 0.5) * diag)
        .collect()
}

/// Line-integral projector over `n_angles` equispaced angles in [0, pi) and
/// `n_rays` offsets spanning the grid diagonal; row a * n_rays + r holds the
/// ray at angle index a and offset index r.
pub fn ct_parallel(grid: ImageGrid, n_angles: usize, n_rays: usize) -> Result<LinearOperator> {
    if n_angles == 0 || n_rays == 0 {
        return Err(Error::InvalidParameter(
            "ct_parallel needs at least one angle and one ray".into(),
        ));
    }
    if grid.len() == 0 {
        return Err(Error::InvalidParameter("empty image grid".into()));
    }
    let offsets = ray_offsets(grid, n_rays);
    let rows = n_angles * n_rays;
    let mut indptr = Vec::with_capacity(rows + 1);
    let mut indices: Vec<u32> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    indptr.push(0);
    for a in 0..n_angles {
        let theta = a as f64 * std::f64::consts::PI / n_angles as f64;
        for &s in &offsets {
            for (idx, len) in trace_ray(grid, theta, s) {
                indices.push(idx as u32);
                values.push(len);
            }
            indptr.push(indices.len());
        }
    }
    let csr = Arc::new(Csr {
        indptr,
        indices,
        values,
        rows,
        cols: grid.len(),
    });
    let fwd = Arc::clone(&csr);
    let adj = Arc::clone(&csr);
    Ok(LinearOperator::new(
        rows,
        grid.len(),
        true,
        move |x| fwd.forward(x),
        move |y| adj.adjoint(y),
    ))
}
