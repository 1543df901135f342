//! The solver family: GKB-based LSQR/LSMR, the flexible Golub-Kahan
//! factorization with a configurable orthogonalization window, FLSQR/FLSMR
//! (full orthogonalization), and the sketched variants sFLSQR/sFLSMR.

mod fgk;
mod flexible;
mod gkb;

pub use fgk::{FgkState, FgkStep};
pub use flexible::{flsmr, flsqr, sflsmr, sflsqr};
pub use gkb::{lsmr, lsqr};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::sketch::SketchOperator;
use crate::truncate::TruncationOperator;

/// Which residual feeds the discrepancy-principle test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    True,
    Sketched,
}

/// Shared solver configuration.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub maxit: usize,
    /// Relative tolerance on the iteration's objective value.
    pub tol: f64,
    /// Orthogonalization window: the new direction is orthogonalized against
    /// this many previous basis vectors.
    pub window: usize,
    pub tau: TruncationOperator,
    pub sketch: Option<SketchOperator>,
    /// Discrepancy-principle safety factor (> 1).
    pub eta: f64,
    /// Noise norm; enables discrepancy stopping when set.
    pub delta_e: Option<f64>,
    /// Residual the discrepancy rule inspects.
    pub discrepancy_on: ResidualKind,
    /// Ground truth for per-iteration error norms, when known.
    pub x_true: Option<Vec<f64>>,
    /// Record per-iteration true residuals and errors (one extra pass per
    /// iteration); switch off for timing runs.
    pub track_history: bool,
    /// Keep the solution basis Z in the returned history.
    pub store_basis: bool,
    /// Keep every iteration's projected coefficient vector y_k; together
    /// with the basis this reconstructs any iterate.
    pub store_y: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            maxit: 50,
            tol: 1e-8,
            window: 2,
            tau: TruncationOperator::Identity,
            sketch: None,
            eta: 1.01,
            delta_e: None,
            discrepancy_on: ResidualKind::True,
            x_true: None,
            track_history: true,
            store_basis: false,
            store_y: false,
        }
    }
}

impl SolverConfig {
    pub fn with_maxit(maxit: usize) -> Self {
        SolverConfig {
            maxit,
            ..SolverConfig::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.maxit == 0 {
            return Err(Error::InvalidParameter("maxit must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("window must be >= 1".into()));
        }
        if self.delta_e.is_some() && !(self.eta > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discrepancy safety factor eta must exceed 1, got {}",
                self.eta
            )));
        }
        if let Some(d) = self.delta_e {
            if d < 0.0 {
                return Err(Error::InvalidParameter("delta_e must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    /// The objective value fell below tol relative to its initial size.
    Tolerance,
    /// Discrepancy principle fired.
    Discrepancy,
    /// A new basis vector vanished; the history up to the previous
    /// iteration is returned.
    Breakdown,
}

/// Per-iteration solver statistics.
#[derive(Debug, Clone)]
pub struct IterationStats {
    /// ||A x_k - b||, NaN when history tracking is off.
    pub true_residual: f64,
    /// Objective value of the iteration's minimization (sketched objective
    /// for the sketched solvers, projected objective otherwise).
    pub sketched_residual: f64,
    /// ||x_k - x_true|| / ||x_true|| when the ground truth is known.
    pub error: Option<f64>,
}

/// Full record of one solver run.
#[derive(Debug, Clone)]
pub struct SolveHistory {
    pub iterations: Vec<IterationStats>,
    /// 1-based iteration at which a stopping rule fired, if any.
    pub stop_iteration: Option<usize>,
    pub stop_reason: StopReason,
    /// Final iterate.
    pub x: Vec<f64>,
    /// Final projected coefficients.
    pub y: Vec<f64>,
    /// Solution basis Z (n x k), kept when `store_basis` is set.
    pub basis_z: Option<DenseMatrix>,
    /// Per-iteration coefficient vectors, kept when `store_y` is set.
    pub ys: Vec<Vec<f64>>,
    /// Size the tolerance test compares objectives against (for example
    /// ||b|| for LSQR, ||S b|| for sFLSQR).
    pub objective_scale: f64,
}

impl SolveHistory {
    pub fn true_residuals(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.true_residual).collect()
    }

    pub fn errors(&self) -> Vec<Option<f64>> {
        self.iterations.iter().map(|it| it.error).collect()
    }

    pub fn final_true_residual(&self) -> f64 {
        self.iterations
            .last()
            .map(|it| it.true_residual)
            .unwrap_or(f64::NAN)
    }

    pub fn min_error(&self) -> Option<f64> {
        self.iterations
            .iter()
            .filter_map(|it| it.error)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }
}

/// First 1-based iteration whose true residual satisfies the discrepancy
/// principle ||A x_k - b|| <= eta * delta_e.
pub fn discrepancy_stop(history: &SolveHistory, eta: f64, delta_e: f64) -> Option<usize> {
    history
        .iterations
        .iter()
        .position(|it| it.true_residual <= eta * delta_e)
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history_with_residuals(res: &[f64]) -> SolveHistory {
        SolveHistory {
            iterations: res
                .iter()
                .map(|&r| IterationStats {
                    true_residual: r,
                    sketched_residual: r,
                    error: None,
                })
                .collect(),
            stop_iteration: None,
            stop_reason: StopReason::MaxIterations,
            x: vec![],
            y: vec![],
            basis_z: None,
            ys: vec![],
            objective_scale: 1.0,
        }
    }

    #[test]
    fn discrepancy_none_when_all_above() {
        let h = history_with_residuals(&[0.9, 0.5, 0.3]);
        assert_eq!(discrepancy_stop(&h, 1.01, 0.1), None);
    }

    #[test]
    fn discrepancy_zero_delta_catches_exact_solve() {
        let h = history_with_residuals(&[0.5, 1e-16, 0.0]);
        assert_eq!(discrepancy_stop(&h, 1.01, 0.0), Some(3));
    }

    #[test]
    fn discrepancy_first_crossing() {
        let h = history_with_residuals(&[0.9, 0.2, 0.09, 0.05]);
        assert_eq!(discrepancy_stop(&h, 1.0, 0.1), Some(3));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default();
        cfg.maxit = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.delta_e = Some(0.1);
        cfg.eta = 1.0;
        assert!(cfg.validate().is_err());
        cfg.eta = 1.01;
        assert!(cfg.validate().is_ok());
    }
}
