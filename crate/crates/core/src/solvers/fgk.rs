//! Flexible Golub-Kahan factorization with partial reorthogonalization.
//!
//! After k steps the state holds W (m x (k+1)), the modified basis
//! Z = tau(P) (n x k), the pre-truncation directions P, an upper-Hessenberg
//! H ((k+1) x k) and an upper-triangular T ((k+1) x (k+1)), both banded
//! according to the orthogonalization window. The relation
//! A Z_k = W_{k+1} H_{k+1,k} holds by construction for any window and any
//! tau; A# W_k = P_k T_k holds whenever tau is the identity.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, scale, DenseMatrix};
use crate::operators::LinearOperator;
use crate::truncate::TruncationOperator;

/// Relative threshold below which a new basis vector counts as zero.
const BREAKDOWN_RTOL: f64 = 1e-14;

/// Outcome of one factorization step.
pub enum FgkStep {
    /// A column was appended. Carries A z_k (before orthogonalization) and
    /// the raw adjoint direction A# w_{k+1}; the sketched solvers consume
    /// both.
    Advanced {
        a_z: Vec<f64>,
        raw_adjoint: Vec<f64>,
    },
    /// A basis vector vanished; the state is unchanged and remains valid for
    /// the previous iteration count.
    Breakdown,
}

pub struct FgkState {
    k: usize,
    window: usize,
    beta: f64,
    w_cols: Vec<Vec<f64>>,
    z_cols: Vec<Vec<f64>>,
    p_cols: Vec<Vec<f64>>,
    /// Column j (0-based) holds rows 0..=j+1 of H's column j.
    h_cols: Vec<Vec<f64>>,
    /// Column j (0-based) holds rows 0..=j of T's column j; one column ahead
    /// of Z because the next direction is orthogonalized eagerly.
    t_cols: Vec<Vec<f64>>,
    raw_adjoint: Vec<f64>,
    z_breakdown: bool,
}

impl FgkState {
    /// Starts the factorization from w_1 = b / ||b||.
    pub fn new(a: &LinearOperator, b: &[f64], window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter("window must be >= 1".into()));
        }
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: b.len(),
            });
        }
        let beta = norm2(b);
        if beta == 0.0 {
            return Err(Error::ZeroRhs);
        }
        let mut w1 = b.to_vec();
        scale(1.0 / beta, &mut w1);
        let raw = a.apply_adjoint(&w1);
        let t11 = norm2(&raw);
        let z_breakdown = t11 == 0.0;
        let mut p_cols = Vec::new();
        if !z_breakdown {
            let mut p1 = raw.clone();
            scale(1.0 / t11, &mut p1);
            p_cols.push(p1);
        }
        Ok(FgkState {
            k: 0,
            window,
            beta,
            w_cols: vec![w1],
            z_cols: Vec::new(),
            p_cols,
            h_cols: Vec::new(),
            t_cols: vec![vec![t11]],
            raw_adjoint: raw,
            z_breakdown,
        })
    }

    /// Performs one step: apply tau to the pending direction, advance W and
    /// H, compute the next adjoint direction, and orthogonalize it against
    /// the window of Z columns, extending T.
    pub fn step(&mut self, a: &LinearOperator, tau: &TruncationOperator) -> Result<FgkStep> {
        if self.z_breakdown {
            return Ok(FgkStep::Breakdown);
        }
        let k = self.k + 1; // 1-based index of the iteration being performed

        let z_k = tau.apply_indexed(&self.p_cols[k - 1], k as u64)?;
        let a_z = a.apply(&z_k);

        // orthogonalize A z_k against w_j, j = max(1, k - window) ..= k
        let mut w = a_z.clone();
        let mut h_col = vec![0.0; k + 1];
        let lo = if k > self.window { k - self.window } else { 1 };
        for j in lo..=k {
            let c = dot(&self.w_cols[j - 1], &w);
            h_col[j - 1] = c;
            axpy(-c, &self.w_cols[j - 1], &mut w);
        }
        let w_scale = norm2(&a_z);
        let w_norm = norm2(&w);
        if w_scale == 0.0 || w_norm <= BREAKDOWN_RTOL * w_scale {
            return Ok(FgkStep::Breakdown);
        }
        h_col[k] = w_norm;
        scale(1.0 / w_norm, &mut w);

        self.z_cols.push(z_k);
        self.w_cols.push(w.clone());
        self.h_cols.push(h_col);

        // next direction via the adjoint, orthogonalized against z_j,
        // j = max(1, (k+1) - window) ..= k
        let raw = a.apply_adjoint(&w);
        self.raw_adjoint = raw.clone();
        let mut z = raw.clone();
        let mut t_col = vec![0.0; k + 1];
        let lo2 = if k + 1 > self.window {
            k + 1 - self.window
        } else {
            1
        };
        for j in lo2..=k {
            let c = dot(&self.z_cols[j - 1], &z);
            t_col[j - 1] = c;
            axpy(-c, &self.z_cols[j - 1], &mut z);
        }
        let z_scale = norm2(&raw);
        let z_norm = norm2(&z);
        if z_scale == 0.0 || z_norm <= BREAKDOWN_RTOL * z_scale {
            self.z_breakdown = true;
        } else {
            t_col[k] = z_norm;
            scale(1.0 / z_norm, &mut z);
            self.p_cols.push(z);
        }
        self.t_cols.push(t_col);
        self.k = k;

        Ok(FgkStep::Advanced {
            a_z,
            raw_adjoint: raw,
        })
    }

    pub fn steps(&self) -> usize {
        self.k
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Raw adjoint direction A# w_{k+1} computed by the latest step.
    pub fn raw_adjoint(&self) -> &[f64] {
        &self.raw_adjoint
    }

    pub fn z_columns(&self) -> &[Vec<f64>] {
        &self.z_cols
    }

    pub fn w_columns(&self) -> &[Vec<f64>] {
        &self.w_cols
    }

    pub fn p_columns(&self) -> &[Vec<f64>] {
        &self.p_cols
    }

    /// H entry (i, j), 0-based, of the (k+1) x k Hessenberg factor.
    pub fn h_entry(&self, i: usize, j: usize) -> f64 {
        if j < self.h_cols.len() && i < self.h_cols[j].len() {
            self.h_cols[j][i]
        } else {
            0.0
        }
    }

    /// T entry (i, j), 0-based, of the (k+1) x (k+1) triangular factor.
    pub fn t_entry(&self, i: usize, j: usize) -> f64 {
        if j < self.t_cols.len() && i < self.t_cols[j].len() {
            self.t_cols[j][i]
        } else {
            0.0
        }
    }

    /// Materializes H_{k+1,k}.
    pub fn h_matrix(&self) -> DenseMatrix {
        let k = self.k;
        DenseMatrix::from_fn(k + 1, k, |i, j| self.h_entry(i, j))
    }

    /// Materializes T_{k+1} (the eagerly extended triangular factor).
    pub fn t_matrix(&self) -> DenseMatrix {
        let k = self.k;
        DenseMatrix::from_fn(k + 1, k + 1, |i, j| self.t_entry(i, j))
    }

    /// Materializes Z_k.
    pub fn z_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_columns(&self.z_cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::from_dense;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn random_dense(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = StdRng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn random_vec(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn run_steps(
        a: &LinearOperator,
        b: &[f64],
        window: usize,
        steps: usize,
    ) -> FgkState {
        let mut st = FgkState::new(a, b, window).unwrap();
        let tau = TruncationOperator::Identity;
        for _ in 0..steps {
            match st.step(a, &tau).unwrap() {
                FgkStep::Advanced { .. } => {}
                FgkStep::Breakdown => break,
            }
        }
        st
    }

    #[test]
    fn identity_tau_full_window_reproduces_gkb_bidiagonal() {
        let m = random_dense(20, 12, 1);
        let a = from_dense(&m).unwrap();
        let b = random_vec(20, 2);
        let st = run_steps(&a, &b, 100, 10);
        assert_eq!(st.steps(), 10);
        // H must be lower bidiagonal ((k+1) x k with diagonal + subdiagonal)
        for j in 0..10 {
            for i in 0..=10 {
                let h = st.h_entry(i, j);
                if i == j || i == j + 1 {
                    assert!(h.abs() > 0.0);
                } else {
                    assert!(h.abs() < 1e-10, "H[{i}][{j}] = {h}");
                }
            }
        }
        // W orthonormal under the full window
        for i in 0..st.w_columns().len() {
            for j in 0..=i {
                let d = dot(&st.w_columns()[i], &st.w_columns()[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
        // P orthonormal as well
        for i in 0..st.p_columns().len() {
            for j in 0..=i {
                let d = dot(&st.p_columns()[i], &st.p_columns()[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn windowed_h_and_t_are_banded() {
        let m = random_dense(30, 20, 3);
        let a = from_dense(&m).unwrap();
        let b = random_vec(30, 4);
        let window = 2;
        let st = run_steps(&a, &b, window, 12);
        for j in 0..st.steps() {
            let k = j + 1; // 1-based column index
            for i in 0..st.steps() + 1 {
                if i + 1 < k.saturating_sub(window).max(1) {
                    assert_eq!(st.h_entry(i, j), 0.0, "H[{i}][{j}] outside band");
                }
                if i > k {
                    assert_eq!(st.h_entry(i, j), 0.0, "H[{i}][{j}] below subdiagonal");
                }
            }
        }
        for j in 0..=st.steps() {
            let k = j + 1;
            for i in 0..=st.steps() {
                if i + 1 < k.saturating_sub(window).max(1) || i > j {
                    assert_eq!(st.t_entry(i, j), 0.0, "T[{i}][{j}] outside band");
                }
            }
        }
    }

    #[test]
    fn factorization_identity_any_window() {
        // ||A Z_k - W_{k+1} H_{k+1,k}||_F tiny for a windowed run
        let m = random_dense(40, 25, 5);
        let a = from_dense(&m).unwrap();
        let b = random_vec(40, 6);
        for window in [2usize, 5, 100] {
            let st = run_steps(&a, &b, window, 10);
            let z = st.z_matrix();
            let az = DenseMatrix::from_columns(
                &(0..z.cols()).map(|j| a.apply(z.col(j))).collect::<Vec<_>>(),
            );
            let w = DenseMatrix::from_columns(st.w_columns());
            let wh = w.matmul(&st.h_matrix());
            let mut err = 0.0f64;
            for j in 0..az.cols() {
                for i in 0..az.rows() {
                    let d = az.get(i, j) - wh.get(i, j);
                    err += d * d;
                }
            }
            let scale_ref = m.frob_norm() * z.frob_norm();
            assert!(err.sqrt() <= 1e-10 * scale_ref, "window {window}");
        }
    }

    #[test]
    fn adjoint_factorization_identity_with_identity_tau() {
        // A^T W_k = P_k T_k holds exactly when tau is the identity
        let m = random_dense(35, 18, 7);
        let a = from_dense(&m).unwrap();
        let b = random_vec(35, 8);
        for window in [2usize, 50] {
            let st = run_steps(&a, &b, window, 9);
            let k = st.steps();
            let p = DenseMatrix::from_columns(&st.p_columns()[..k]);
            let t = DenseMatrix::from_fn(k, k, |i, j| st.t_entry(i, j));
            let pt = p.matmul(&t);
            let mut err = 0.0f64;
            let mut scale_ref = 0.0f64;
            for j in 0..k {
                let atw = a.apply_adjoint(&st.w_columns()[j]);
                for i in 0..a.cols() {
                    let d = atw[i] - pt.get(i, j);
                    err += d * d;
                    scale_ref += atw[i] * atw[i];
                }
            }
            assert!(
                err.sqrt() <= 1e-10 * scale_ref.sqrt().max(1.0),
                "window {window}: {err}"
            );
        }
    }

    #[test]
    fn breakdown_on_rank_deficient_operator() {
        // rank-2 matrix: the third direction must vanish
        let u = random_dense(12, 2, 9);
        let v = random_dense(8, 2, 10);
        let m = u.matmul(&v.transpose());
        let a = from_dense(&m).unwrap();
        let b = m.matvec(&random_vec(8, 11)); // b inside range(A)
        let mut st = FgkState::new(&a, &b, 50).unwrap();
        let tau = TruncationOperator::Identity;
        let mut advanced = 0;
        for _ in 0..5 {
            match st.step(&a, &tau).unwrap() {
                FgkStep::Advanced { .. } => advanced += 1,
                FgkStep::Breakdown => break,
            }
        }
        assert!(advanced <= 2, "rank-2 operator advanced {advanced} steps");
        assert_eq!(st.steps(), advanced);
    }

    #[test]
    fn zero_rhs_is_rejected() {
        let m = random_dense(5, 4, 12);
        let a = from_dense(&m).unwrap();
        assert!(matches!(
            FgkState::new(&a, &[0.0; 5], 2),
            Err(Error::ZeroRhs)
        ));
    }
}
