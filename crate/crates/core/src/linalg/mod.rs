//! Self-contained dense linear-algebra kernels.
//!
//! Everything in here operates on small projected or sketched systems
//! (at most a few hundred columns), so plain O(n^3) Householder and
//! Golub-Kahan-Reinsch kernels are used instead of an external BLAS/LAPACK
//! dependency.

mod svd;

pub use svd::{randomized_svd, svd, SvdFactors};

use crate::error::{Error, Result};

/// Dense matrix with column-major storage: entry (i, j) lives at
/// `data[j * rows + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds a matrix from column slices; all columns must share one length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        assert!(!cols.is_empty(), "from_columns needs at least one column");
        let rows = cols[0].len();
        let mut data = Vec::with_capacity(rows * cols.len());
        for c in cols {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        DenseMatrix {
            rows,
            cols: cols.len(),
            data,
        }
    }

    /// Interprets `data` (length rows*cols, column-major) as a matrix.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn push_col(&mut self, c: &[f64]) {
        assert_eq!(c.len(), self.rows);
        self.data.extend_from_slice(c);
        self.cols += 1;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for j in 0..self.cols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = self.col(j);
            for i in 0..self.rows {
                y[i] += col[i] * xj;
            }
        }
        y
    }

    pub fn tr_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut x = vec![0.0; self.cols];
        for j in 0..self.cols {
            x[j] = dot(self.col(j), y);
        }
        x
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let y = self.matvec(other.col(j));
            out.col_mut(j).copy_from_slice(&y);
        }
        out
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Subview of columns `0..k`.
    pub fn leading_cols(&self, k: usize) -> DenseMatrix {
        assert!(k <= self.cols);
        DenseMatrix {
            rows: self.rows,
            cols: k,
            data: self.data[..k * self.rows].to_vec(),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

// ── Householder QR ──────────────────────────────────────────────────

/// Householder QR factorization; with `pivot` the columns are permuted so the
/// diagonal of R is nonincreasing in magnitude, which exposes the numerical
/// rank.
pub struct QrFactors {
    rows: usize,
    cols: usize,
    /// Packed reflectors: column k holds v_k (length rows - k) with v_k[0] = 1.
    reflectors: Vec<Vec<f64>>,
    taus: Vec<f64>,
    r: DenseMatrix,
    perm: Vec<usize>,
}

/// Computes (v, tau, alpha) with (I - tau v v^T) x = alpha e1 and v[0] = 1.
pub(crate) fn householder_vector(x: &[f64]) -> (Vec<f64>, f64, f64) {
    let normx = norm2(x);
    if normx == 0.0 {
        return (vec![0.0; x.len()], 0.0, 0.0);
    }
    let alpha = if x[0] >= 0.0 { -normx } else { normx };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let v0 = v[0];
    // v0 = x[0] - alpha has magnitude >= normx, never zero here
    for vi in v.iter_mut() {
        *vi /= v0;
    }
    let tau = -v0 / alpha;
    (v, tau, alpha)
}

pub fn qr_decompose(a: &DenseMatrix, pivot: bool) -> QrFactors {
    let m = a.rows();
    let n = a.cols();
    let kmax = m.min(n);
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors = Vec::with_capacity(kmax);
    let mut taus = Vec::with_capacity(kmax);

    for k in 0..kmax {
        if pivot {
            // exact remaining column norms; cheap at the sizes used here
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let nj = norm2(&work.col(j)[k..]);
                if nj > best_norm {
                    best_norm = nj;
                    best = j;
                }
            }
            if best != k {
                perm.swap(k, best);
                for i in 0..m {
                    let tmp = work.get(i, k);
                    work.set(i, k, work.get(i, best));
                    work.set(i, best, tmp);
                }
            }
        }

        let (v, tau, alpha) = householder_vector(&work.col(k)[k..]);
        work.set(k, k, alpha);
        for i in k + 1..m {
            work.set(i, k, 0.0);
        }
        // apply I - tau v v^T to the trailing columns
        if tau != 0.0 {
            for j in k + 1..n {
                let col = work.col_mut(j);
                let mut s = 0.0;
                for (i, vi) in v.iter().enumerate() {
                    s += vi * col[k + i];
                }
                s *= tau;
                for (i, vi) in v.iter().enumerate() {
                    col[k + i] -= s * vi;
                }
            }
        }
        reflectors.push(v);
        taus.push(tau);
    }

    QrFactors {
        rows: m,
        cols: n,
        reflectors,
        taus,
        r: work,
        perm,
    }
}

impl QrFactors {
    /// R factor stored in the upper triangle (rows x cols).
    pub fn r_entry(&self, i: usize, j: usize) -> f64 {
        if i <= j {
            self.r.get(i, j)
        } else {
            0.0
        }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Number of diagonal entries of R above `threshold` in magnitude.
    pub fn rank(&self, threshold: f64) -> usize {
        let kmax = self.rows.min(self.cols);
        let mut r = 0;
        for k in 0..kmax {
            if self.r.get(k, k).abs() > threshold {
                r += 1;
            } else {
                break;
            }
        }
        r
    }

    /// Applies Q^T to a vector of length rows.
    pub fn apply_qt(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = y.to_vec();
        for (k, (v, &tau)) in self.reflectors.iter().zip(&self.taus).enumerate() {
            if tau == 0.0 {
                continue;
            }
            let mut s = 0.0;
            for (i, vi) in v.iter().enumerate() {
                s += vi * out[k + i];
            }
            s *= tau;
            for (i, vi) in v.iter().enumerate() {
                out[k + i] -= s * vi;
            }
        }
        out
    }

    /// Materializes the thin Q factor (rows x min(rows, cols)).
    pub fn q_thin(&self) -> DenseMatrix {
        let kmax = self.rows.min(self.cols);
        let mut q = DenseMatrix::zeros(self.rows, kmax);
        for j in 0..kmax {
            q.set(j, j, 1.0);
        }
        // Q = H_0 H_1 ... H_{kmax-1} applied to the identity columns
        for k in (0..kmax).rev() {
            let v = &self.reflectors[k];
            let tau = self.taus[k];
            if tau == 0.0 {
                continue;
            }
            for j in 0..kmax {
                let col = q.col_mut(j);
                let mut s = 0.0;
                for (i, vi) in v.iter().enumerate() {
                    s += vi * col[k + i];
                }
                s *= tau;
                for (i, vi) in v.iter().enumerate() {
                    col[k + i] -= s * vi;
                }
            }
        }
        q
    }
}

/// Thin QR without pivoting: returns (Q, R) with Q rows x min(m,n) orthonormal.
pub fn qr_thin(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let f = qr_decompose(a, false);
    let k = a.rows().min(a.cols());
    let mut r = DenseMatrix::zeros(k, a.cols());
    for j in 0..a.cols() {
        for i in 0..k.min(j + 1) {
            r.set(i, j, f.r_entry(i, j));
        }
    }
    (f.q_thin(), r)
}

/// Minimizes ||M y - rhs||_2 for a tall matrix M (rows >= cols).
///
/// Full-rank systems go through column-pivoted Householder QR. If the
/// pivoted R exposes rank deficiency (threshold 1e-12 * ||M||_F), the
/// minimum-norm minimizer is returned instead, computed from the SVD.
pub fn least_squares(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.rows() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            found: rhs.len(),
        });
    }
    if m.rows() < m.cols() {
        return Err(Error::DimensionMismatch {
            expected: m.cols(),
            found: m.rows(),
        });
    }
    if !m.is_finite() || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let n = m.cols();
    let threshold = 1e-12 * m.frob_norm();
    let f = qr_decompose(m, true);
    if f.rank(threshold) < n {
        return min_norm_via_svd(m, rhs, threshold);
    }

    let qtb = f.apply_qt(rhs);
    // back substitution on R y_perm = (Q^T rhs)[0..n]
    let mut y_perm = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in i + 1..n {
            s -= f.r_entry(i, j) * y_perm[j];
        }
        y_perm[i] = s / f.r_entry(i, i);
    }
    let mut y = vec![0.0; n];
    for (k, &pk) in f.perm.iter().enumerate() {
        y[pk] = y_perm[k];
    }
    Ok(y)
}

fn min_norm_via_svd(m: &DenseMatrix, rhs: &[f64], threshold: f64) -> Result<Vec<f64>> {
    let fac = svd(m)?;
    let utb = fac.u.tr_matvec(rhs);
    let mut w = vec![0.0; fac.sigma.len()];
    for (i, &s) in fac.sigma.iter().enumerate() {
        if s > threshold {
            w[i] = utb[i] / s;
        }
    }
    Ok(fac.vt.tr_matvec(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    pub(crate) fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = StdRng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    pub(crate) fn random_vector(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Normal-equations oracle: solves M^T M y = M^T rhs by Gauss-Jordan
    /// elimination with partial pivoting on the explicitly formed system.
    fn normal_equations_oracle(m: &DenseMatrix, rhs: &[f64]) -> Vec<f64> {
        let n = m.cols();
        let mt = m.transpose();
        let mtm = mt.matmul(m);
        let mtb = m.tr_matvec(rhs);
        // augmented system [MtM | Mtb]
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = mtm.get(i, j);
            }
            a[i][n] = mtb[i];
        }
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            a.swap(k, piv);
            let p = a[k][k];
            for j in k..=n {
                a[k][j] /= p;
            }
            for i in 0..n {
                if i != k {
                    let f = a[i][k];
                    for j in k..=n {
                        a[i][j] -= f * a[k][j];
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n]).collect()
    }

    #[test]
    fn least_squares_identity() {
        let m = DenseMatrix::identity(3);
        let y = least_squares(&m, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn least_squares_mean_of_samples() {
        let m = DenseMatrix::from_columns(&[vec![1.0, 1.0]]);
        let y = least_squares(&m, &[1.0, 3.0]).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let m = random_matrix(20, 5, 7);
        let rhs = random_vector(20, 70);
        let y = least_squares(&m, &rhs).unwrap();
        let oracle = normal_equations_oracle(&m, &rhs);
        let diff: f64 = y
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = norm2(&oracle);
        assert!(diff / scale < 1e-10, "rel diff {}", diff / scale);
    }

    #[test]
    fn least_squares_residual_orthogonal_to_range() {
        for seed in 0..5u64 {
            let m = random_matrix(30, 8, seed);
            let rhs = random_vector(30, seed + 100);
            let y = least_squares(&m, &rhs).unwrap();
            let mut r = m.matvec(&y);
            for (ri, bi) in r.iter_mut().zip(&rhs) {
                *ri -= bi;
            }
            let g = m.tr_matvec(&r);
            let bound = 1e-9 * m.frob_norm() * norm2(&rhs);
            assert!(norm2(&g) <= bound, "{} > {}", norm2(&g), bound);
        }
    }

    #[test]
    fn least_squares_rank_deficient_min_norm() {
        // two identical columns: minimizer set is a line, the minimum-norm
        // solution splits the coefficient evenly
        let m = DenseMatrix::from_columns(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let y = least_squares(&m, &[1.0, 3.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!((y[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_rejects_bad_inputs() {
        let m = DenseMatrix::zeros(3, 2);
        assert!(matches!(
            least_squares(&m, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let wide = DenseMatrix::zeros(2, 3);
        assert!(least_squares(&wide, &[1.0, 2.0]).is_err());
        let mut bad = DenseMatrix::zeros(3, 2);
        bad.set(0, 0, f64::NAN);
        assert!(matches!(
            least_squares(&bad, &[1.0, 2.0, 3.0]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn qr_thin_orthonormal() {
        let a = random_matrix(12, 5, 3);
        let (q, r) = qr_thin(&a);
        let qtq = q.transpose().matmul(&q);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq.get(i, j) - want).abs() < 1e-12);
            }
        }
        let qr = q.matmul(&r);
        let mut err = 0.0f64;
        for j in 0..5 {
            for i in 0..12 {
                err = err.max((qr.get(i, j) - a.get(i, j)).abs());
            }
        }
        assert!(err < 1e-12);
    }
}
