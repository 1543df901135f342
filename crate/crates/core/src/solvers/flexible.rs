//! Flexible and sketched solvers on top of the FGK factorization.
//!
//! FLSQR/FLSMR require full orthogonalization (window >= maxit) because
//! their projected problems rely on the orthonormality of the stored bases;
//! the sketched variants run with any window and solve a small sketched
//! least-squares problem per iteration instead.

use super::{FgkState, FgkStep, IterationStats, ResidualKind, SolveHistory, SolverConfig, StopReason};
use crate::error::{Error, Result};
use crate::linalg::{axpy, least_squares, norm2, DenseMatrix};
use crate::operators::LinearOperator;

#[derive(Clone, Copy, PartialEq)]
enum FlexMode {
    Flsqr,
    Flsmr,
    Sflsqr,
    Sflsmr,
}

/// Flexible LSQR: minimizes ||b - A Z_k y|| through the projected problem
/// ||beta e1 - H_{k+1,k} y||. Accepts unmatched adjoints.
pub fn flsqr(a: &LinearOperator, b: &[f64], cfg: &SolverConfig) -> Result<SolveHistory> {
    require_full_window(cfg)?;
    run_flexible(a, b, cfg, FlexMode::Flsqr)
}

/// Flexible LSMR: minimizes the T-weighted projected objective
/// ||T_{k+1} (beta e1 - H_{k+1,k} y)||. Accepts unmatched adjoints.
pub fn flsmr(a: &LinearOperator, b: &[f64], cfg: &SolverConfig) -> Result<SolveHistory> {
    require_full_window(cfg)?;
    run_flexible(a, b, cfg, FlexMode::Flsmr)
}

/// Sketched flexible LSQR: per iteration solves
/// min_y ||S (A Z_k y - b)|| with the sketch acting on R^m.
pub fn sflsqr(a: &LinearOperator, b: &[f64], cfg: &SolverConfig) -> Result<SolveHistory> {
    let sketch = cfg
        .sketch
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("sflsqr needs a sketch operator".into()))?;
    if sketch.input_dim() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: sketch.input_dim(),
        });
    }
    run_flexible(a, b, cfg, FlexMode::Sflsqr)
}

/// Sketched flexible LSMR: per iteration solves
/// min_y ||S (A# A Z_k y - A# b)|| with the sketch acting on R^n.
pub fn sflsmr(a: &LinearOperator, b: &[f64], cfg: &SolverConfig) -> Result<SolveHistory> {
    let sketch = cfg
        .sketch
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("sflsmr needs a sketch operator".into()))?;
    if sketch.input_dim() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            found: sketch.input_dim(),
        });
    }
    run_flexible(a, b, cfg, FlexMode::Sflsmr)
}

fn require_full_window(cfg: &SolverConfig) -> Result<()> {
    if cfg.window < cfg.maxit {
        return Err(Error::InvalidParameter(format!(
            "flexible solvers need window >= maxit (window {}, maxit {})",
            cfg.window, cfg.maxit
        )));
    }
    Ok(())
}

fn run_flexible(
    a: &LinearOperator,
    b: &[f64],
    cfg: &SolverConfig,
    mode: FlexMode,
) -> Result<SolveHistory> {
    cfg.validate()?;
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }

    let mut state = FgkState::new(a, b, cfg.window)?;
    let beta = state.beta();
    let track = cfg.track_history || cfg.delta_e.is_some();

    // sketched right-hand sides and incrementally sketched columns
    let mut s_b: Vec<f64> = Vec::new();
    let mut s_az_cols: Vec<Vec<f64>> = Vec::new();
    let mut s_adj_b: Vec<f64> = Vec::new();
    let mut s_aw_cols: Vec<Vec<f64>> = Vec::new();
    match mode {
        FlexMode::Sflsqr => {
            s_b = cfg.sketch.as_ref().unwrap().apply(b);
        }
        FlexMode::Sflsmr => {
            let sz = cfg.sketch.as_ref().unwrap().apply(state.raw_adjoint());
            s_adj_b = sz.iter().map(|v| beta * v).collect();
            s_aw_cols.push(sz);
        }
        _ => {}
    }
    let obj_scale = match mode {
        FlexMode::Flsqr => beta,
        FlexMode::Flsmr => beta * state.t_entry(0, 0),
        FlexMode::Sflsqr => norm2(&s_b),
        FlexMode::Sflsmr => norm2(&s_adj_b),
    };

    let mut az_cols: Vec<Vec<f64>> = Vec::new();
    let mut iterations = Vec::new();
    let mut stop_iteration = None;
    let mut stop_reason = StopReason::MaxIterations;
    let mut y_final: Vec<f64> = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();

    for k in 1..=cfg.maxit {
        let (a_z, raw_adjoint) = match state.step(a, &cfg.tau)? {
            FgkStep::Advanced { a_z, raw_adjoint } => (a_z, raw_adjoint),
            FgkStep::Breakdown => {
                stop_reason = StopReason::Breakdown;
                if k > 1 {
                    stop_iteration = Some(k - 1);
                }
                break;
            }
        };

        let (y, objective) = match mode {
            FlexMode::Flsqr => {
                let h = state.h_matrix();
                let mut rhs = vec![0.0; k + 1];
                rhs[0] = beta;
                let y = least_squares(&h, &rhs)?;
                let obj = objective_norm(&h, &y, &rhs);
                (y, obj)
            }
            FlexMode::Flsmr => {
                let t = state.t_matrix();
                let h = state.h_matrix();
                let m_proj = t.matmul(&h);
                let rhs: Vec<f64> = (0..k + 1).map(|i| beta * t.get(i, 0)).collect();
                let y = least_squares(&m_proj, &rhs)?;
                let obj = objective_norm(&m_proj, &y, &rhs);
                (y, obj)
            }
            FlexMode::Sflsqr => {
                let sketch = cfg.sketch.as_ref().unwrap();
                s_az_cols.push(sketch.apply(&a_z));
                let m_sk = DenseMatrix::from_columns(&s_az_cols);
                let y = least_squares(&m_sk, &s_b)?;
                let obj = objective_norm(&m_sk, &y, &s_b);
                (y, obj)
            }
            FlexMode::Sflsmr => {
                let sketch = cfg.sketch.as_ref().unwrap();
                let s_z = sketch.apply(&raw_adjoint);
                let mut cols = s_aw_cols.clone();
                cols.push(s_z.clone());
                let m_cols = DenseMatrix::from_columns(&cols);
                let m_proj = m_cols.matmul(&state.h_matrix());
                let y = least_squares(&m_proj, &s_adj_b)?;
                let obj = objective_norm(&m_proj, &y, &s_adj_b);
                s_aw_cols.push(s_z);
                (y, obj)
            }
        };

        if track {
            az_cols.push(a_z);
        }

        let mut stats = IterationStats {
            true_residual: f64::NAN,
            sketched_residual: objective,
            error: None,
        };
        if track {
            let mut r = b.to_vec();
            for (j, col) in az_cols.iter().enumerate() {
                axpy(-y[j], col, &mut r);
            }
            stats.true_residual = norm2(&r);
            if let Some(xt) = &cfg.x_true {
                let x = assemble(state.z_columns(), &y);
                let diff: f64 = x
                    .iter()
                    .zip(xt)
                    .map(|(xi, ti)| (xi - ti) * (xi - ti))
                    .sum::<f64>()
                    .sqrt();
                stats.error = Some(diff / norm2(xt));
            }
        }
        let true_res = stats.true_residual;
        iterations.push(stats);
        if cfg.store_y {
            ys.push(y.clone());
        }
        y_final = y;

        if objective < cfg.tol * obj_scale {
            stop_iteration = Some(k);
            stop_reason = StopReason::Tolerance;
            break;
        }
        if let Some(delta_e) = cfg.delta_e {
            let watched = match cfg.discrepancy_on {
                ResidualKind::True => true_res,
                ResidualKind::Sketched => objective,
            };
            if watched <= cfg.eta * delta_e {
                stop_iteration = Some(k);
                stop_reason = StopReason::Discrepancy;
                break;
            }
        }
    }

    let x = if y_final.is_empty() {
        vec![0.0; a.cols()]
    } else {
        assemble(state.z_columns(), &y_final)
    };
    let basis_z = (cfg.store_basis && !y_final.is_empty()).then(|| {
        DenseMatrix::from_columns(&state.z_columns()[..y_final.len()])
    });
    Ok(SolveHistory {
        iterations,
        stop_iteration,
        stop_reason,
        x,
        y: y_final,
        basis_z,
        ys,
        objective_scale: obj_scale,
    })
}

fn objective_norm(m: &DenseMatrix, y: &[f64], rhs: &[f64]) -> f64 {
    let my = m.matvec(y);
    let mut acc = 0.0;
    for (a, b) in my.iter().zip(rhs) {
        acc += (a - b) * (a - b);
    }
    acc.sqrt()
}

fn assemble(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; cols[0].len()];
    for (j, yj) in y.iter().enumerate() {
        axpy(*yj, &cols[j], &mut x);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{from_dense, perturb_adjoint};
    use crate::sketch::SketchOperator;
    use crate::solvers::{lsmr, lsqr};
    use crate::truncate::TruncationOperator;
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

    fn full_window_cfg(maxit: usize) -> SolverConfig {
        let mut cfg = SolverConfig::with_maxit(maxit);
        cfg.window = maxit;
        cfg.tol = 0.0;
        cfg.store_basis = true;
        cfg
    }

    #[test]
    fn flsqr_equals_lsqr_with_identity_tau() {
        let m = random_dense(25, 15, 1);
        let a = from_dense(&m).unwrap();
        let b = random_vec(25, 2);
        for k in [1usize, 3, 7, 12] {
            let cfg = full_window_cfg(k);
            let hf = flsqr(&a, &b, &cfg).unwrap();
            let hl = lsqr(&a, &b, &cfg).unwrap();
            let gap: f64 = hf
                .x
                .iter()
                .zip(&hl.x)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            assert!(gap / norm2(&hl.x) < 1e-8, "k={k}: gap {gap}");
        }
    }

    #[test]
    fn flsmr_equals_lsmr_with_identity_tau() {
        let m = random_dense(25, 15, 3);
        let a = from_dense(&m).unwrap();
        let b = random_vec(25, 4);
        for k in [1usize, 4, 9, 12] {
            let cfg = full_window_cfg(k);
            let hf = flsmr(&a, &b, &cfg).unwrap();
            let hl = lsmr(&a, &b, &cfg).unwrap();
            let gap: f64 = hf
                .x
                .iter()
                .zip(&hl.x)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            assert!(gap / norm2(&hl.x) < 1e-8, "k={k}: gap {gap}");
        }
    }

    #[test]
    fn sflsqr_identity_sketch_reduces_to_lsqr() {
        let m = random_dense(20, 12, 5);
        let a = from_dense(&m).unwrap();
        let b = random_vec(20, 6);
        for k in [2usize, 6, 10] {
            let mut cfg = full_window_cfg(k);
            cfg.sketch = Some(SketchOperator::identity(20));
            let hs = sflsqr(&a, &b, &cfg).unwrap();
            let hl = lsqr(&a, &b, &cfg).unwrap();
            let gap: f64 = hs
                .x
                .iter()
                .zip(&hl.x)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            assert!(gap / norm2(&hl.x) < 1e-8, "k={k}: gap {gap}");
        }
    }

    #[test]
    fn sflsmr_identity_sketch_reduces_to_lsmr() {
        let m = random_dense(20, 12, 7);
        let a = from_dense(&m).unwrap();
        let b = random_vec(20, 8);
        for k in [2usize, 5, 10] {
            let mut cfg = full_window_cfg(k);
            cfg.sketch = Some(SketchOperator::identity(12));
            let hs = sflsmr(&a, &b, &cfg).unwrap();
            let hl = lsmr(&a, &b, &cfg).unwrap();
            let gap: f64 = hs
                .x
                .iter()
                .zip(&hl.x)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            assert!(gap / norm2(&hl.x) < 1e-8, "k={k}: gap {gap}");
        }
    }

    #[test]
    fn flsqr_projected_equals_true_residual_under_full_orthogonalization() {
        let m = random_dense(30, 18, 9);
        let a = from_dense(&m).unwrap();
        let b = random_vec(30, 10);
        let cfg = full_window_cfg(12);
        let h = flsqr(&a, &b, &cfg).unwrap();
        for it in &h.iterations {
            assert!(
                (it.sketched_residual - it.true_residual).abs() < 1e-9 * it.true_residual.max(1.0),
                "projected {} vs true {}",
                it.sketched_residual,
                it.true_residual
            );
        }
    }

    #[test]
    fn flsmr_projected_equals_normal_equation_residual() {
        let m = random_dense(30, 18, 11);
        let a = from_dense(&m).unwrap();
        let b = random_vec(30, 12);
        let cfg = full_window_cfg(10);
        let h = flsmr(&a, &b, &cfg).unwrap();
        // at the final iterate: ||A^T(b - A x)|| equals the projected value
        let mut r = b.clone();
        let ax = a.apply(&h.x);
        for (ri, ai) in r.iter_mut().zip(&ax) {
            *ri -= ai;
        }
        let atr = norm2(&a.apply_adjoint(&r));
        let proj = h.iterations.last().unwrap().sketched_residual;
        assert!(
            (atr - proj).abs() < 1e-9 * atr.max(1.0),
            "normal-eq residual {atr} vs projected {proj}"
        );
    }

    #[test]
    fn flsmr_first_iteration_matches_closed_form() {
        let m = random_dense(14, 9, 13);
        let a = from_dense(&m).unwrap();
        let b = random_vec(14, 14);
        let cfg = full_window_cfg(1);
        let h = flsmr(&a, &b, &cfg).unwrap();
        // direct scalar minimization of ||A^T(b - A z1 y)||
        let beta = norm2(&b);
        let w1: Vec<f64> = b.iter().map(|v| v / beta).collect();
        let p_raw = a.apply_adjoint(&w1);
        let z1: Vec<f64> = {
            let n = norm2(&p_raw);
            p_raw.iter().map(|v| v / n).collect()
        };
        let az = a.apply(&z1);
        let at_az = a.apply_adjoint(&az);
        let at_b = a.apply_adjoint(&b);
        let y_closed = crate::linalg::dot(&at_az, &at_b) / crate::linalg::dot(&at_az, &at_az);
        assert!((h.y[0] - y_closed).abs() < 1e-10 * y_closed.abs().max(1.0));
    }

    #[test]
    fn sflsqr_sketched_objective_monotone() {
        let m = random_dense(60, 30, 15);
        let a = from_dense(&m).unwrap();
        let b = random_vec(60, 16);
        let mut cfg = SolverConfig::with_maxit(20);
        cfg.window = 2;
        cfg.tol = 0.0;
        cfg.sketch = Some(SketchOperator::gaussian_scaled(41, 60, 3).unwrap());
        let h = sflsqr(&a, &b, &cfg).unwrap();
        let objs: Vec<f64> = h.iterations.iter().map(|it| it.sketched_residual).collect();
        for w in objs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn window_and_sketch_prerequisites_enforced() {
        let m = random_dense(10, 6, 17);
        let a = from_dense(&m).unwrap();
        let b = random_vec(10, 18);
        let mut cfg = SolverConfig::with_maxit(5);
        cfg.window = 2;
        assert!(flsqr(&a, &b, &cfg).is_err());
        assert!(flsmr(&a, &b, &cfg).is_err());
        // sketched solvers need a sketch of the right dimension
        assert!(sflsqr(&a, &b, &cfg).is_err());
        cfg.sketch = Some(SketchOperator::identity(6));
        assert!(sflsqr(&a, &b, &cfg).is_err());
        cfg.sketch = Some(SketchOperator::identity(10));
        assert!(sflsqr(&a, &b, &cfg).is_ok());
        cfg.sketch = Some(SketchOperator::identity(10));
        assert!(sflsmr(&a, &b, &cfg).is_err());
        cfg.sketch = Some(SketchOperator::identity(6));
        assert!(sflsmr(&a, &b, &cfg).is_ok());
    }

    #[test]
    fn sketched_solvers_accept_unmatched_adjoints() {
        let m = random_dense(24, 16, 19);
        let base = from_dense(&m).unwrap();
        let a = perturb_adjoint(&base, 1e-2, 7).unwrap();
        let b = random_vec(24, 20);
        let mut cfg = SolverConfig::with_maxit(8);
        cfg.window = 2;
        cfg.sketch = Some(SketchOperator::gaussian_scaled(17, 24, 5).unwrap());
        let h = sflsqr(&a, &b, &cfg).unwrap();
        assert_eq!(h.iterations.len(), 8);
        cfg.sketch = Some(SketchOperator::gaussian_scaled(13, 16, 6).unwrap());
        let h = sflsmr(&a, &b, &cfg).unwrap();
        assert_eq!(h.iterations.len(), 8);
        // flexible solvers also accept unmatched operators
        let mut cfg = full_window_cfg(8);
        cfg.tol = 1e-14;
        assert!(flsqr(&a, &b, &cfg).is_ok());
        assert!(flsmr(&a, &b, &cfg).is_ok());
    }

    #[test]
    fn truncated_basis_stays_low_rank() {
        use crate::operators::ImageGrid;
        let grid = ImageGrid::square(8);
        let m = random_dense(70, 64, 21);
        let a = from_dense(&m).unwrap();
        let b = random_vec(70, 22);
        let mut cfg = SolverConfig::with_maxit(6);
        cfg.window = 2;
        cfg.tol = 0.0;
        cfg.tau = TruncationOperator::rank_exact(3, grid);
        cfg.sketch = Some(SketchOperator::gaussian_scaled(13, 70, 9).unwrap());
        cfg.store_basis = true;
        let h = sflsqr(&a, &b, &cfg).unwrap();
        let z = h.basis_z.unwrap();
        for j in 0..z.cols() {
            let img = grid.to_matrix(z.col(j));
            let sig = crate::linalg::svd(&img).unwrap().sigma;
            let tail: f64 = sig[3..].iter().sum();
            assert!(tail < 1e-10 * sig[0].max(1e-300), "column {j} rank > 3");
        }
    }

    #[test]
    fn discrepancy_stopping_fires() {
        // consistent system plus noise of known norm
        let m = random_dense(40, 20, 23);
        let a = from_dense(&m).unwrap();
        let x0 = random_vec(20, 24);
        let clean = m.matvec(&x0);
        let noise_raw = random_vec(40, 25);
        let delta_e = 1e-3 * norm2(&clean);
        let sc = delta_e / norm2(&noise_raw);
        let b: Vec<f64> = clean
            .iter()
            .zip(&noise_raw)
            .map(|(c, e)| c + sc * e)
            .collect();
        let mut cfg = full_window_cfg(20);
        cfg.delta_e = Some(delta_e);
        cfg.eta = 1.01;
        let h = flsqr(&a, &b, &cfg).unwrap();
        assert_eq!(h.stop_reason, StopReason::Discrepancy);
        assert!(h.final_true_residual() <= 1.01 * delta_e);
    }
}
