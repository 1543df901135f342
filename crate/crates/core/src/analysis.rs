//! Numerical verification of the solver theory: optimal-in-subspace
//! residuals, the deterministic residual bounds for the sketched solvers,
//! and the Monte Carlo check of the Gaussian expectation identity.
//!
//! These are diagnostics, not part of any solver hot path; everything here
//! may materialize small dense matrices freely.

use crate::error::{Error, Result};
use crate::linalg::{
    axpy, least_squares, norm2, qr_decompose, svd, DenseMatrix,
};
use crate::operators::LinearOperator;
use crate::sketch::SketchOperator;

/// Relative singular value threshold for the full-rank preconditions.
const RANK_RTOL: f64 = 1e-12;

/// Best attainable residual for solutions in range(Z), with the orthonormal
/// range basis used by the bound evaluators.
#[derive(Debug, Clone)]
pub struct OptimalResidual {
    pub r_opt: f64,
    pub y_opt: Vec<f64>,
    /// Orthonormal columns spanning range(A Z).
    pub q: DenseMatrix,
    /// False when A Z was rank deficient and a minimum-norm fallback was
    /// used; the bound preconditions do not hold in that case.
    pub full_rank: bool,
}

/// Computes min_y ||A Z y - b|| by materializing A Z (one forward apply per
/// column) and projecting b onto its range. The complement projector is
/// never materialized; its action is v -> v - Q (Q^T v).
pub fn optimal_residual(
    a: &LinearOperator,
    z: &DenseMatrix,
    b: &[f64],
) -> Result<OptimalResidual> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    if z.cols() == 0 {
        return Ok(OptimalResidual {
            r_opt: norm2(b),
            y_opt: vec![],
            q: DenseMatrix::zeros(a.rows(), 0),
            full_rank: true,
        });
    }
    if z.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            found: z.rows(),
        });
    }
    let az_cols: Vec<Vec<f64>> = (0..z.cols()).map(|j| a.apply(z.col(j))).collect();
    let az = DenseMatrix::from_columns(&az_cols);

    let f = qr_decompose(&az, true);
    let rank = f.rank(RANK_RTOL * az.frob_norm());
    let full_rank = rank == z.cols();
    let q = if full_rank {
        qr_decompose(&az, false).q_thin()
    } else {
        // orthonormal basis of the column space from the pivoted factors
        let qfull = f.q_thin();
        qfull.leading_cols(rank)
    };
    let qtb = q.tr_matvec(b);
    let mut resid = b.to_vec();
    let proj = q.matvec(&qtb);
    for (r, p) in resid.iter_mut().zip(&proj) {
        *r -= p;
    }
    let y_opt = least_squares(&az, b)?;
    Ok(OptimalResidual {
        r_opt: norm2(&resid),
        y_opt,
        q,
        full_rank,
    })
}

/// Moore-Penrose pseudoinverse of a small dense matrix via the SVD.
fn pseudoinverse(m: &DenseMatrix) -> Result<DenseMatrix> {
    let f = svd(m)?;
    let tol = RANK_RTOL * f.sigma.first().copied().unwrap_or(0.0);
    let k = f.sigma.len();
    // V * Sigma^+ * U^T
    let mut vs = f.vt.transpose();
    for j in 0..k {
        let s = f.sigma[j];
        let inv = if s > tol { 1.0 / s } else { 0.0 };
        for v in vs.col_mut(j) {
            *v *= inv;
        }
    }
    Ok(vs.matmul(&f.u.transpose()))
}

fn require_full_rank(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.rows() < m.cols() {
        return Err(Error::RankDeficient(what));
    }
    let f = svd(m)?;
    let smax = f.sigma.first().copied().unwrap_or(0.0);
    let smin = f.sigma.last().copied().unwrap_or(0.0);
    if smax == 0.0 || smin <= RANK_RTOL * smax {
        return Err(Error::RankDeficient(what));
    }
    Ok(())
}

/// Largest singular value of G (I - Q Q^T) for a k x m matrix G: equals
/// ||G Q_perp||_2 without materializing the orthonormal complement.
fn projected_spectral_norm(g: &DenseMatrix, q: &DenseMatrix) -> Result<f64> {
    let gq = g.matmul(q);
    let correction = gq.matmul(&q.transpose());
    let n_mat = DenseMatrix::from_fn(g.rows(), g.cols(), |i, j| {
        g.get(i, j) - correction.get(i, j)
    });
    Ok(svd(&n_mat)?.sigma.first().copied().unwrap_or(0.0))
}

/// Residual inflation factor sqrt(1 + ||(SQ)^+ S Q_perp||^2) bounding the
/// sketched-LSQR residual relative to the optimal one. `q` must have
/// orthonormal columns spanning range(A Z).
pub fn bound_sflsqr(sketch: &SketchOperator, q: &DenseMatrix) -> Result<f64> {
    if q.cols() == 0 || q.cols() == q.rows() {
        // empty subspace or full space: the complement term vanishes
        return Ok(1.0);
    }
    let sq = sketch.apply_to_matrix(q);
    require_full_rank(&sq, "S Q in bound_sflsqr")?;
    let pinv = pseudoinverse(&sq)?;
    let g = pinv.matmul(&sketch.to_dense());
    let sigma = projected_spectral_norm(&g, q)?;
    Ok((1.0 + sigma * sigma).sqrt())
}

/// Residual inflation factor sqrt(1 + ||(S A^T Q)^+ S A^T Q_perp||^2) for
/// sketched LSMR. The operator must carry the exact transpose; the bound is
/// stated for A^T, not an unmatched surrogate.
pub fn bound_sflsmr(
    sketch: &SketchOperator,
    a: &LinearOperator,
    q: &DenseMatrix,
) -> Result<f64> {
    let sat = sketched_transpose(sketch, a)?;
    bound_sflsmr_with(&sat, a, q)
}

/// Materializes S A^T (s x m) with one forward apply per sketch row.
pub fn sketched_transpose(sketch: &SketchOperator, a: &LinearOperator) -> Result<DenseMatrix> {
    if sketch.input_dim() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            found: sketch.input_dim(),
        });
    }
    let st = sketch.to_dense().transpose(); // n x s, columns are sketch rows
    let cols: Vec<Vec<f64>> = (0..st.cols()).map(|j| a.apply(st.col(j))).collect();
    Ok(DenseMatrix::from_columns(&cols).transpose())
}

/// Bound factor with a precomputed S A^T (see `sketched_transpose`); useful
/// when evaluating the bound across many subspace dimensions.
pub fn bound_sflsmr_with(sat: &DenseMatrix, a: &LinearOperator, q: &DenseMatrix) -> Result<f64> {
    if !a.is_matched() {
        return Err(Error::UnmatchedOperator("bound_sflsmr"));
    }
    if q.cols() == 0 || q.cols() == q.rows() {
        return Ok(1.0);
    }
    // S A^T Q = (S A^T) Q
    let satq = sat.matmul(q);
    require_full_rank(&satq, "S A^T Q in bound_sflsmr")?;
    let pinv = pseudoinverse(&satq)?;
    let g = pinv.matmul(sat);
    let sigma = projected_spectral_norm(&g, q)?;
    Ok((1.0 + sigma * sigma).sqrt())
}

/// One row of a bound verification run.
#[derive(Debug, Clone)]
pub struct BoundRow {
    /// Subspace dimension (iteration count).
    pub k: usize,
    pub r_opt: f64,
    pub r_sflsqr: f64,
    pub r_sflsmr: f64,
    /// r_opt times the sFLSQR inflation factor.
    pub bound1: f64,
    /// r_opt times the sFLSMR inflation factor.
    pub bound2: f64,
    pub ok1: bool,
    pub ok2: bool,
}

/// Per-iteration bound report.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
}

/// Slack granted to the inequalities to absorb floating-point noise.
pub const BOUND_SLACK: f64 = 1e-9;

/// Evaluates both deterministic bounds on the basis prefixes Z_1..Z_K
/// against recorded per-iteration residuals of the two sketched solvers.
/// `sketch_m` acts on R^m (sFLSQR side), `sketch_n` on R^n (sFLSMR side);
/// `a` must be matched.
pub fn verify_bounds(
    a: &LinearOperator,
    b: &[f64],
    z: &DenseMatrix,
    sketch_m: &SketchOperator,
    sketch_n: &SketchOperator,
    r_sflsqr: &[f64],
    r_sflsmr: &[f64],
) -> Result<BoundReport> {
    let kmax = z.cols().min(r_sflsqr.len()).min(r_sflsmr.len());
    let sat = sketched_transpose(sketch_n, a)?;
    let mut rows = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let zk = z.leading_cols(k);
        let opt = optimal_residual(a, &zk, b)?;
        if !opt.full_rank {
            return Err(Error::RankDeficient("verify_bounds basis"));
        }
        let f1 = bound_sflsqr(sketch_m, &opt.q)?;
        let f2 = bound_sflsmr_with(&sat, a, &opt.q)?;
        let bound1 = opt.r_opt * f1;
        let bound2 = opt.r_opt * f2;
        rows.push(BoundRow {
            k,
            r_opt: opt.r_opt,
            r_sflsqr: r_sflsqr[k - 1],
            r_sflsmr: r_sflsmr[k - 1],
            bound1,
            bound2,
            ok1: r_sflsqr[k - 1] <= bound1 + BOUND_SLACK,
            ok2: r_sflsmr[k - 1] <= bound2 + BOUND_SLACK,
        });
    }
    Ok(BoundReport { rows })
}

/// Result of the Gaussian expectation check.
#[derive(Debug, Clone, Copy)]
pub struct CorollaryCheck {
    /// Mean over trials of the squared true residual of the sketched
    /// minimizer.
    pub empirical_mean: f64,
    /// (r_opt)^2 * (1 + s / (s - k - 1)).
    pub predicted: f64,
    pub r_opt_squared: f64,
}

/// Monte Carlo estimate of E[(r^sFLSQR)^2] over fresh Gaussian sketches of
/// `s` rows on the fixed subspace spanned by Z, compared with the predicted
/// value (r_opt)^2 * (1 + s/(s-k-1)).
pub fn corollary_check(
    a: &LinearOperator,
    z: &DenseMatrix,
    b: &[f64],
    s: usize,
    n_trials: usize,
    seed: u64,
) -> Result<CorollaryCheck> {
    let k = z.cols();
    if s <= k + 1 {
        return Err(Error::InvalidParameter(format!(
            "expectation formula has a pole at s <= k + 1 (s = {s}, k = {k})"
        )));
    }
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
    }
    let az_cols: Vec<Vec<f64>> = (0..k).map(|j| a.apply(z.col(j))).collect();
    let az = DenseMatrix::from_columns(&az_cols);
    let opt = optimal_residual(a, z, b)?;
    let r_opt_squared = opt.r_opt * opt.r_opt;

    let mut mean = 0.0;
    for t in 0..n_trials {
        let sk = SketchOperator::gaussian(s, a.rows(), seed.wrapping_add(t as u64), 1.0)?;
        let s_az = sk.apply_to_matrix(&az);
        let s_b = sk.apply(b);
        let y = least_squares(&s_az, &s_b)?;
        let mut r = b.to_vec();
        for (j, col) in az_cols.iter().enumerate() {
            axpy(-y[j], col, &mut r);
        }
        let rn = norm2(&r);
        mean += rn * rn;
    }
    mean /= n_trials as f64;

    let predicted = r_opt_squared * (1.0 + s as f64 / (s - k - 1) as f64);
    Ok(CorollaryCheck {
        empirical_mean: mean,
        predicted,
        r_opt_squared,
    })
}
