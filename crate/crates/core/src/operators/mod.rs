//! Matrix-free linear operators with forward and adjoint applications.
//!
//! Operators are immutable after construction and cheap to clone (the
//! underlying kernels are shared). The adjoint may deliberately differ from
//! the exact transpose; `matched` records whether it is exact, and solvers
//! that depend on a true transpose check the flag.

mod ct;

pub use ct::{ct_parallel, trace_ray};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use std::sync::Arc;

type Kernel = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Linear map R^n -> R^m given by its forward and adjoint actions.
#[derive(Clone)]
pub struct LinearOperator {
    m: usize,
    n: usize,
    matched: bool,
    forward: Kernel,
    adjoint: Kernel,
}

impl std::fmt::Debug for LinearOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearOperator")
            .field("m", &self.m)
            .field("n", &self.n)
            .field("matched", &self.matched)
            .finish()
    }
}

impl LinearOperator {
    pub fn new(
        m: usize,
        n: usize,
        matched: bool,
        forward: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        adjoint: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        LinearOperator {
            m,
            n,
            matched,
            forward: Arc::new(forward),
            adjoint: Arc::new(adjoint),
        }
    }

    /// Output dimension m.
    pub fn rows(&self) -> usize {
        self.m
    }

    /// Input dimension n.
    pub fn cols(&self) -> usize {
        self.n
    }

    /// True iff the adjoint is the exact transpose of the forward map.
    pub fn is_matched(&self) -> bool {
        self.matched
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "operator forward input dimension");
        let y = (self.forward)(x);
        debug_assert_eq!(y.len(), self.m);
        y
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.m, "operator adjoint input dimension");
        let x = (self.adjoint)(y);
        debug_assert_eq!(x.len(), self.n);
        x
    }

    /// Materializes the operator densely by applying it to basis vectors.
    /// Test and diagnostic use only.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut cols = Vec::with_capacity(self.n);
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e[j] = 1.0;
            cols.push(self.apply(&e));
            e[j] = 0.0;
        }
        DenseMatrix::from_columns(&cols)
    }
}

/// Wraps a dense matrix as a matched operator.
pub fn from_dense(m: &DenseMatrix) -> Result<LinearOperator> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let a = Arc::new(m.clone());
    let b = Arc::clone(&a);
    Ok(LinearOperator::new(
        m.rows(),
        m.cols(),
        true,
        move |x| a.matvec(x),
        move |y| b.tr_matvec(y),
    ))
}

/// Pixel grid with column-stacking vectorization: pixel (row i, col j) of an
/// image maps to vector index `j * height + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageGrid {
    pub height: usize,
    pub width: usize,
}

impl ImageGrid {
    pub fn square(n: usize) -> Self {
        ImageGrid {
            height: n,
            width: n,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        col * self.height + row
    }

    /// Reshapes a column-stacked vector into a height x width matrix.
    pub fn to_matrix(&self, v: &[f64]) -> DenseMatrix {
        assert_eq!(v.len(), self.len());
        DenseMatrix::from_col_major(self.height, self.width, v.to_vec())
    }
}

/// Boundary handling for image-domain convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Reflect across the edge (half-sample symmetric). Keeps the blur
    /// matrix symmetric for symmetric kernels.
    Reflexive,
    /// Values outside the image are zero.
    Zero,
}

fn reflect(mut idx: i64, len: i64) -> Option<usize> {
    loop {
        if idx < 0 {
            idx = -idx - 1;
        } else if idx >= len {
            idx = 2 * len - idx - 1;
        } else {
            return Some(idx as usize);
        }
    }
}

fn boundary_index(idx: i64, len: i64, boundary: Boundary) -> Option<usize> {
    match boundary {
        Boundary::Reflexive => reflect(idx, len),
        Boundary::Zero => {
            if idx >= 0 && idx < len {
                Some(idx as usize)
            } else {
                None
            }
        }
    }
}

/// 2D Gaussian blur with a normalized separable kernel truncated at four
/// standard deviations. The adjoint is the exact transpose (scatter form of
/// the same stencil), so the operator is matched for any boundary.
pub fn gaussian_blur(grid: ImageGrid, variance: f64, boundary: Boundary) -> Result<LinearOperator> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "blur variance must be positive, got {variance}"
        )));
    }
    if grid.len() == 0 {
        return Err(Error::InvalidParameter("empty image grid".into()));
    }
    let sigma = variance.sqrt();
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut taps: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|t| (-((t * t) as f64) / (2.0 * variance)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= total;
    }

    let n = grid.len();
    let taps_f = taps.clone();
    let grid_f = grid;
    let forward = move |x: &[f64]| {
        let tmp = conv_axis(x, grid_f, &taps_f, radius, boundary, Axis::Col, Mode::Gather);
        conv_axis(&tmp, grid_f, &taps_f, radius, boundary, Axis::Row, Mode::Gather)
    };
    let taps_a = taps;
    let adjoint = move |y: &[f64]| {
        let tmp = conv_axis(y, grid_f, &taps_a, radius, boundary, Axis::Row, Mode::Scatter);
        conv_axis(&tmp, grid_f, &taps_a, radius, boundary, Axis::Col, Mode::Scatter)
    };
    Ok(LinearOperator::new(n, n, true, forward, adjoint))
}

#[derive(Clone, Copy)]
enum Axis {
    /// Along the height of each image column.
    Col,
    /// Along the width of each image row.
    Row,
}

#[derive(Clone, Copy)]
enum Mode {
    Gather,
    Scatter,
}

fn conv_axis(
    x: &[f64],
    grid: ImageGrid,
    taps: &[f64],
    radius: usize,
    boundary: Boundary,
    axis: Axis,
    mode: Mode,
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let (lines, len, stride, line_stride) = match axis {
        Axis::Col => (grid.width, grid.height as i64, 1usize, grid.height),
        Axis::Row => (grid.height, grid.width as i64, grid.height, 1usize),
    };
    for line in 0..lines {
        let base = line * line_stride;
        for i in 0..len {
            let center = base + (i as usize) * stride;
            for (ti, &w) in taps.iter().enumerate() {
                let off = ti as i64 - radius as i64;
                let Some(j) = boundary_index(i + off, len, boundary) else {
                    continue;
                };
                let other = base + j * stride;
                match mode {
                    Mode::Gather => out[center] += w * x[other],
                    Mode::Scatter => out[other] += w * x[center],
                }
            }
        }
    }
    out
}

/// Keeps a random subset of ceil(keep_fraction * n) pixels; the adjoint
/// scatters back with zeros in the dropped positions.
pub fn subsample_mask(grid: ImageGrid, keep_fraction: f64, seed: u64) -> Result<LinearOperator> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "keep_fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    let n = grid.len();
    let keep = ((keep_fraction * n as f64).ceil() as usize).min(n);
    if keep == 0 || n == 0 {
        return Err(Error::InvalidParameter("mask keeps no pixels".into()));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices.truncate(keep);
    indices.sort_unstable();

    let kept = Arc::new(indices);
    let kept_a = Arc::clone(&kept);
    let forward = move |x: &[f64]| kept.iter().map(|&i| x[i]).collect::<Vec<f64>>();
    let adjoint = move |y: &[f64]| {
        let mut out = vec![0.0; n];
        for (row, &i) in kept_a.iter().enumerate() {
            out[i] = y[row];
        }
        out
    };
    Ok(LinearOperator::new(keep, n, true, forward, adjoint))
}

/// Composition outer . inner (inner applied first).
pub fn compose(outer: &LinearOperator, inner: &LinearOperator) -> Result<LinearOperator> {
    if outer.cols() != inner.rows() {
        return Err(Error::DimensionMismatch {
            expected: outer.cols(),
            found: inner.rows(),
        });
    }
    let of = outer.clone();
    let inn = inner.clone();
    let of2 = outer.clone();
    let inn2 = inner.clone();
    Ok(LinearOperator::new(
        outer.rows(),
        inner.cols(),
        outer.is_matched() && inner.is_matched(),
        move |x| of.apply(&inn.apply(x)),
        move |y| inn2.apply_adjoint(&of2.apply_adjoint(y)),
    ))
}

/// Mean over random unit probe pairs of |x^T (A y) - y^T (A# x)|, the
/// bilinear-form discrepancy between the forward map and the adjoint.
pub fn asymmetry_measure(op: &LinearOperator, n_probes: usize, seed: u64) -> f64 {
    assert!(n_probes >= 1);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..n_probes {
        let x = unit_vector(op.rows(), &mut rng);
        let y = unit_vector(op.cols(), &mut rng);
        let ay = op.apply(&y);
        let asx = op.apply_adjoint(&x);
        acc += (linalg::dot(&x, &ay) - linalg::dot(&y, &asx)).abs();
    }
    acc / n_probes as f64
}

fn unit_vector(len: usize, rng: &mut StdRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let nv = linalg::norm2(&v);
        if nv > 0.0 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

const PERTURBATION_RANK: usize = 8;
const CALIBRATION_PROBES: usize = 100;

/// Replaces the adjoint of a matched operator by A# = A^T + E, where E is a
/// fixed seeded low-rank perturbation whose magnitude is calibrated so the
/// asymmetry measure lands on `asymmetry_target`. A target of zero returns
/// the operator unchanged (still matched).
pub fn perturb_adjoint(
    op: &LinearOperator,
    asymmetry_target: f64,
    seed: u64,
) -> Result<LinearOperator> {
    if !op.is_matched() {
        return Err(Error::UnmatchedOperator("perturb_adjoint"));
    }
    if asymmetry_target < 0.0 || !asymmetry_target.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "asymmetry target must be >= 0, got {asymmetry_target}"
        )));
    }
    if asymmetry_target == 0.0 {
        return Ok(op.clone());
    }

    let m = op.rows();
    let n = op.cols();
    let mut rng = StdRng::seed_from_u64(seed);
    let g_cols: Vec<Vec<f64>> = (0..PERTURBATION_RANK)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let h_cols: Vec<Vec<f64>> = (0..PERTURBATION_RANK)
        .map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect())
        .collect();

    // |x^T A y - y^T (A^T + E) x| = |y^T E x|; calibrate the scale of E on a
    // fixed probe set so the measured mean equals the target there exactly
    let mut calib = StdRng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut raw = 0.0;
    for _ in 0..CALIBRATION_PROBES {
        let x = unit_vector(m, &mut calib);
        let y = unit_vector(n, &mut calib);
        let mut val = 0.0;
        for t in 0..PERTURBATION_RANK {
            val += linalg::dot(&g_cols[t], &y) * linalg::dot(&h_cols[t], &x);
        }
        raw += val.abs();
    }
    raw /= CALIBRATION_PROBES as f64;
    let scale = asymmetry_target / raw;

    let base = op.clone();
    let fwd = op.clone();
    let g = Arc::new(g_cols);
    let h = Arc::new(h_cols);
    let adjoint = move |x: &[f64]| {
        let mut out = base.apply_adjoint(x);
        for t in 0..PERTURBATION_RANK {
            let coef = scale * linalg::dot(&h[t], x);
            linalg::axpy(coef, &g[t], &mut out);
        }
        out
    };
    Ok(LinearOperator::new(
        m,
        n,
        false,
        move |x| fwd.apply(x),
        adjoint,
    ))
}
