//! Singular value decomposition: Householder bidiagonalization followed by
//! implicit-shift QR iteration on the bidiagonal factor, plus the randomized
//! truncated SVD used by the -RND solver variants.

use super::{qr_thin, DenseMatrix};
use crate::error::{Error, Result};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

/// Thin SVD factors: `u * diag(sigma) * vt` reconstructs the input.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// Left singular vectors, orthonormal columns (rows x k).
    pub u: DenseMatrix,
    /// Singular values, nonincreasing and nonnegative (length k).
    pub sigma: Vec<f64>,
    /// Right singular vectors transposed (k x cols).
    pub vt: DenseMatrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DenseMatrix {
        let k = self.sigma.len();
        let mut us = self.u.clone();
        for j in 0..k {
            let s = self.sigma[j];
            for v in us.col_mut(j) {
                *v *= s;
            }
        }
        us.matmul(&self.vt)
    }

    /// Keeps the leading `r` singular triplets.
    pub fn truncate(mut self, r: usize) -> SvdFactors {
        let r = r.min(self.sigma.len());
        self.sigma.truncate(r);
        let u = self.u.leading_cols(r);
        let mut vt = DenseMatrix::zeros(r, self.vt.cols());
        for j in 0..self.vt.cols() {
            for i in 0..r {
                vt.set(i, j, self.vt.get(i, j));
            }
        }
        SvdFactors { u, sigma: self.sigma, vt }
    }
}

/// Full (thin) SVD of a dense matrix.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let f = svd_tall(&a.transpose())?;
        Ok(SvdFactors {
            u: f.vt.transpose(),
            sigma: f.sigma,
            vt: f.u.transpose(),
        })
    }
}

fn svd_tall(a: &DenseMatrix) -> Result<SvdFactors> {
    let m = a.rows();
    let n = a.cols();
    if n == 0 {
        return Ok(SvdFactors {
            u: DenseMatrix::zeros(m, 0),
            sigma: vec![],
            vt: DenseMatrix::zeros(0, 0),
        });
    }

    let (mut d, mut e, mut u, mut v) = bidiagonalize(a);
    bidiagonal_qr(&mut d, &mut e, &mut u, &mut v)?;

    Ok(SvdFactors {
        u,
        sigma: d,
        vt: v.transpose(),
    })
}

/// Reduces a tall matrix (m >= n) to upper bidiagonal form B = U^T A V,
/// returning (diag, offdiag, U thin m x n, V n x n).
fn bidiagonalize(a: &DenseMatrix) -> (Vec<f64>, Vec<f64>, DenseMatrix, DenseMatrix) {
    let m = a.rows();
    let n = a.cols();
    let mut work = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut left: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    let mut right: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n.saturating_sub(1));

    for k in 0..n {
        // left reflector zeroes column k below the diagonal
        let (v, tau, alpha) = super::householder_vector(&work.col(k)[k..]);
        d[k] = alpha;
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
        left.push((v, tau));

        // right reflector zeroes row k right of the superdiagonal
        if k + 1 < n {
            let row: Vec<f64> = (k + 1..n).map(|j| work.get(k, j)).collect();
            let (v2, tau2, alpha2) = super::householder_vector(&row);
            e[k] = alpha2;
            if tau2 != 0.0 {
                for i in k + 1..m {
                    let mut s = 0.0;
                    for (jj, vj) in v2.iter().enumerate() {
                        s += vj * work.get(i, k + 1 + jj);
                    }
                    s *= tau2;
                    for (jj, vj) in v2.iter().enumerate() {
                        let cur = work.get(i, k + 1 + jj);
                        work.set(i, k + 1 + jj, cur - s * vj);
                    }
                }
            }
            right.push((v2, tau2));
        }
    }

    // accumulate U = H_0 ... H_{n-1} restricted to the first n columns
    let mut u = DenseMatrix::zeros(m, n);
    for j in 0..n {
        u.set(j, j, 1.0);
    }
    for k in (0..n).rev() {
        let (v, tau) = &left[k];
        if *tau == 0.0 {
            continue;
        }
        for j in 0..n {
            let col = u.col_mut(j);
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

    // accumulate V = G_0 ... G_{n-2}
    let mut v = DenseMatrix::identity(n);
    for k in (0..right.len()).rev() {
        let (vk, tau) = &right[k];
        if *tau == 0.0 {
            continue;
        }
        for j in 0..n {
            let col = v.col_mut(j);
            let mut s = 0.0;
            for (i, vi) in vk.iter().enumerate() {
                s += vi * col[k + 1 + i];
            }
            s *= tau;
            for (i, vi) in vk.iter().enumerate() {
                col[k + 1 + i] -= s * vi;
            }
        }
    }

    (d, e, u, v)
}

/// Givens rotation (c, s) with c*f + s*g = r and -s*f + c*g = 0.
fn givens(f: f64, g: f64) -> (f64, f64) {
    if g == 0.0 {
        (1.0, 0.0)
    } else if f == 0.0 {
        (0.0, if g > 0.0 { 1.0 } else { -1.0 })
    } else {
        let r = f.hypot(g);
        (f / r, g / r)
    }
}

fn rotate_cols(m: &mut DenseMatrix, j1: usize, j2: usize, c: f64, s: f64) {
    let rows = m.rows();
    for i in 0..rows {
        let a = m.get(i, j1);
        let b = m.get(i, j2);
        m.set(i, j1, c * a + s * b);
        m.set(i, j2, c * b - s * a);
    }
}

/// Implicit-shift QR iteration on an upper bidiagonal matrix, accumulating
/// the rotations into `u` and `v`. On return `d` holds the singular values
/// sorted nonincreasing and `e` is zeroed.
fn bidiagonal_qr(
    d: &mut [f64],
    e: &mut [f64],
    u: &mut DenseMatrix,
    v: &mut DenseMatrix,
) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let scale = d
        .iter()
        .chain(e.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));

    if n > 1 && scale > 0.0 {
        let max_iter = 60 * n * n;
        let mut iter = 0usize;
        let mut hi = n - 1;

        while hi > 0 {
            if e[hi - 1].abs() <= eps * (d[hi - 1].abs() + d[hi].abs()) {
                e[hi - 1] = 0.0;
                hi -= 1;
                continue;
            }

            let mut lo = hi - 1;
            while lo > 0 {
                if e[lo - 1].abs() <= eps * (d[lo - 1].abs() + d[lo].abs()) {
                    e[lo - 1] = 0.0;
                    break;
                }
                lo -= 1;
            }

            iter += 1;
            if iter > max_iter {
                return Err(Error::NoConvergence("bidiagonal QR iteration"));
            }

            // a vanishing diagonal entry inside the block breaks the shift
            // formula; chase its off-diagonal off the bottom with left
            // rotations, which splits the block
            let mut split = false;
            for idx in lo..hi {
                if d[idx].abs() <= eps * scale {
                    d[idx] = 0.0;
                    let mut z = e[idx];
                    e[idx] = 0.0;
                    for j in idx + 1..=hi {
                        let (c, s) = givens(d[j], z);
                        d[j] = c * d[j] + s * z;
                        if j < hi {
                            z = -s * e[j];
                            e[j] *= c;
                        }
                        // mixes basis columns idx and j of U
                        let rows = u.rows();
                        for row in 0..rows {
                            let uj = u.get(row, j);
                            let ui = u.get(row, idx);
                            u.set(row, j, c * uj + s * ui);
                            u.set(row, idx, c * ui - s * uj);
                        }
                    }
                    split = true;
                    break;
                }
            }
            if split {
                continue;
            }

            // Wilkinson shift from the trailing 2x2 of B^T B
            let dm = d[hi - 1];
            let dn = d[hi];
            let em = e[hi - 1];
            let em1 = if hi >= 2 && hi - 1 > lo { e[hi - 2] } else { 0.0 };
            let t11 = dm * dm + em1 * em1;
            let t12 = dm * em;
            let t22 = dn * dn + em * em;
            let diff = (t11 - t22) / 2.0;
            let sgn = if diff >= 0.0 { 1.0 } else { -1.0 };
            let mu = t22 - t12 * t12 / (diff + sgn * (diff * diff + t12 * t12).sqrt());

            let mut x = d[lo] * d[lo] - mu;
            let mut z = d[lo] * e[lo];

            for k in lo..hi {
                let (c, s) = givens(x, z);
                if k > lo {
                    e[k - 1] = c * x + s * z;
                }
                let dk = d[k];
                let ek = e[k];
                let dk1 = d[k + 1];
                d[k] = c * dk + s * ek;
                e[k] = c * ek - s * dk;
                let bulge = s * dk1;
                d[k + 1] = c * dk1;
                rotate_cols(v, k, k + 1, c, s);

                let (c2, s2) = givens(d[k], bulge);
                d[k] = c2 * d[k] + s2 * bulge;
                let old_ek = e[k];
                let old_dk1 = d[k + 1];
                e[k] = c2 * old_ek + s2 * old_dk1;
                d[k + 1] = c2 * old_dk1 - s2 * old_ek;
                if k + 1 < hi {
                    let old_ek1 = e[k + 1];
                    x = e[k];
                    z = s2 * old_ek1;
                    e[k + 1] = c2 * old_ek1;
                }
                rotate_cols(u, k, k + 1, c2, s2);
            }
        }
    }

    // sign fix and descending sort
    for i in 0..n {
        if d[i] < 0.0 {
            d[i] = -d[i];
            for r in 0..v.rows() {
                let val = v.get(r, i);
                v.set(r, i, -val);
            }
        }
    }
    for i in 0..n {
        let mut best = i;
        for j in i + 1..n {
            if d[j] > d[best] {
                best = j;
            }
        }
        if best != i {
            d.swap(i, best);
            for r in 0..u.rows() {
                let tmp = u.get(r, i);
                u.set(r, i, u.get(r, best));
                u.set(r, best, tmp);
            }
            for r in 0..v.rows() {
                let tmp = v.get(r, i);
                v.set(r, i, v.get(r, best));
                v.set(r, best, tmp);
            }
        }
    }
    Ok(())
}

/// Randomized truncated SVD with oversampling and power iterations.
///
/// Draws a seeded Gaussian test matrix, captures an approximate range basis,
/// optionally refines it with power iterations, and solves the small
/// projected SVD. Returns rank-`r` factors.
pub fn randomized_svd(
    a: &DenseMatrix,
    r: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<SvdFactors> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    if r == 0 {
        return Err(Error::InvalidParameter("rank must be >= 1".into()));
    }
    let min_dim = a.rows().min(a.cols());
    let l = r + oversample;
    if l > min_dim {
        return Err(Error::RankTooLarge {
            requested: l,
            limit: min_dim,
        });
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let omega = DenseMatrix::from_fn(a.cols(), l, |_, _| rng.sample(StandardNormal));
    let y = a.matmul(&omega);
    let (mut q, _) = qr_thin(&y);
    for _ in 0..power_iters {
        let (z, _) = qr_thin(&a.transpose().matmul(&q));
        let (q2, _) = qr_thin(&a.matmul(&z));
        q = q2;
    }
    let b = q.transpose().matmul(a);
    let f = svd(&b)?;
    let u = q.matmul(&f.u);
    Ok(SvdFactors {
        u,
        sigma: f.sigma,
        vt: f.vt,
    }
    .truncate(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = StdRng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Two-sided Jacobi eigenvalue iteration on a symmetric matrix; test
    /// oracle, independent of the bidiagonal QR path.
    fn jacobi_eigenvalues(g: &DenseMatrix) -> Vec<f64> {
        let n = g.rows();
        let mut a = g.clone();
        let scale = a.frob_norm().max(1e-300);
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    off = off.max(a.get(p, q).abs());
                }
            }
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq.abs() <= 1e-18 * scale {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        eig
    }

    fn assert_orthonormal_cols(m: &DenseMatrix, tol: f64) {
        let g = m.transpose().matmul(m);
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (g.get(i, j) - want).abs() < tol,
                    "gram[{i}][{j}] = {}",
                    g.get(i, j)
                );
            }
        }
    }

    fn reconstruction_error(a: &DenseMatrix, f: &SvdFactors) -> f64 {
        let rec = f.reconstruct();
        let mut diff = 0.0f64;
        for j in 0..a.cols() {
            for i in 0..a.rows() {
                let d = rec.get(i, j) - a.get(i, j);
                diff += d * d;
            }
        }
        diff.sqrt()
    }

    #[test]
    fn svd_diagonal() {
        let mut a = DenseMatrix::zeros(3, 3);
        a.set(0, 0, 3.0);
        a.set(1, 1, 2.0);
        a.set(2, 2, 1.0);
        let f = svd(&a).unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-14);
        assert!((f.sigma[1] - 2.0).abs() < 1e-14);
        assert!((f.sigma[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_zero_matrix() {
        let a = DenseMatrix::zeros(4, 3);
        let f = svd(&a).unwrap();
        assert_eq!(f.sigma, vec![0.0, 0.0, 0.0]);
        assert_orthonormal_cols(&f.u, 1e-12);
        assert_orthonormal_cols(&f.vt.transpose(), 1e-12);
    }

    #[test]
    fn svd_matches_jacobi_eigen_oracle() {
        let a = random_matrix(8, 5, 1);
        let f = svd(&a).unwrap();
        let g = a.transpose().matmul(&a);
        let eig = jacobi_eigenvalues(&g);
        for (s, lam) in f.sigma.iter().zip(&eig) {
            assert!(
                (s - lam.max(0.0).sqrt()).abs() < 1e-9,
                "sigma {s} vs sqrt(eig) {}",
                lam.max(0.0).sqrt()
            );
        }
    }

    #[test]
    fn svd_round_trip_various_shapes() {
        for &(m, n, seed) in &[
            (200usize, 200usize, 11u64),
            (120, 80, 12),
            (50, 170, 13),
            (7, 7, 14),
            (40, 1, 15),
            (1, 40, 16),
        ] {
            let a = random_matrix(m, n, seed);
            let f = svd(&a).unwrap();
            let rel = reconstruction_error(&a, &f) / a.frob_norm();
            assert!(rel < 1e-10, "{m}x{n}: rel err {rel}");
            assert_orthonormal_cols(&f.u, 1e-10);
            assert_orthonormal_cols(&f.vt.transpose(), 1e-10);
            for w in f.sigma.windows(2) {
                assert!(w[0] >= w[1]);
                assert!(w[1] >= 0.0);
            }
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, f64::INFINITY);
        assert!(matches!(svd(&a), Err(Error::NonFinite)));
    }

    #[test]
    fn randomized_svd_exact_rank_one() {
        let u: Vec<f64> = (0..10).map(|i| (i as f64 + 1.0) * 0.3).collect();
        let v: Vec<f64> = (0..10).map(|i| ((i as f64) * 0.7).sin() + 1.5).collect();
        let a = DenseMatrix::from_fn(10, 10, |i, j| u[i] * v[j]);
        let f = randomized_svd(&a, 1, 5, 1, 42).unwrap();
        let expected = norm2(&u) * norm2(&v);
        assert!((f.sigma[0] - expected).abs() < 1e-8);
        let rel = reconstruction_error(&a, &f) / a.frob_norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn randomized_svd_close_to_truncated_svd() {
        // spectrum (1, 1e-8, 1e-9, ...): rank-1 capture should be near exact
        let n = 12;
        let q1 = qr_thin(&random_matrix(n, n, 5)).0;
        let q2 = qr_thin(&random_matrix(n, n, 6)).0;
        let mut sig = DenseMatrix::zeros(n, n);
        sig.set(0, 0, 1.0);
        for i in 1..n {
            sig.set(i, i, 1e-8 * 0.1f64.powi(i as i32 - 1));
        }
        let a = q1.matmul(&sig).matmul(&q2.transpose());
        let f = randomized_svd(&a, 1, 5, 2, 9).unwrap();
        let diff = {
            let rec = f.reconstruct();
            DenseMatrix::from_fn(n, n, |i, j| a.get(i, j) - rec.get(i, j))
        };
        // spectral norm of the deviation via the exact SVD oracle
        let spectral = svd(&diff).unwrap().sigma[0];
        assert!(spectral <= 1e-6, "spectral {spectral}");
    }

    #[test]
    fn randomized_svd_rank_checks() {
        let a = random_matrix(10, 6, 3);
        assert!(matches!(
            randomized_svd(&a, 3, 5, 1, 0),
            Err(Error::RankTooLarge { .. })
        ));
        assert!(randomized_svd(&a, 0, 2, 1, 0).is_err());
    }

    #[test]
    fn randomized_svd_leading_value_not_above_exact() {
        for seed in 0..5u64 {
            let a = random_matrix(30, 20, seed + 50);
            let exact = svd(&a).unwrap();
            let f = randomized_svd(&a, 5, 5, 1, seed).unwrap();
            assert!(f.sigma[0] <= exact.sigma[0] + 1e-8);
        }
    }
}
