//! CSV, manifest and image writers. Numeric columns carry 17 significant
//! digits so runs can be diffed across languages and platforms.

use sketched_krylov::analysis::BoundReport;
use sketched_krylov::linalg::norm2;
use sketched_krylov::operators::ImageGrid;
use sketched_krylov::pgm;
use sketched_krylov::solvers::SolveHistory;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Per-solver convergence CSV: `iter,res_rel,sketched_res_rel,err_rel`.
pub fn write_history_csv(
    path: &Path,
    history: &SolveHistory,
    b: &[f64],
    sketched_rhs_norm: f64,
) -> io::Result<()> {
    let nb = norm2(b);
    let mut out = String::from("iter,res_rel,sketched_res_rel,err_rel\n");
    for (k, it) in history.iterations.iter().enumerate() {
        let err = it.error.map(fmt_f64).unwrap_or_else(|| "nan".into());
        let _ = writeln!(
            out,
            "{},{},{},{}",
            k + 1,
            fmt_f64(it.true_residual / nb),
            fmt_f64(it.sketched_residual / sketched_rhs_norm),
            err
        );
    }
    fs::write(path, out)
}

/// Bound verification CSV: `k,r_opt,r_sflsqr,r_sflsmr,bound1,bound2,ok1,ok2`.
pub fn write_bounds_csv(path: &Path, report: &BoundReport) -> io::Result<()> {
    let mut out = String::from("k,r_opt,r_sflsqr,r_sflsmr,bound1,bound2,ok1,ok2\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.k,
            fmt_f64(row.r_opt),
            fmt_f64(row.r_sflsqr),
            fmt_f64(row.r_sflsmr),
            fmt_f64(row.bound1),
            fmt_f64(row.bound2),
            row.ok1,
            row.ok2
        );
    }
    fs::write(path, out)
}

/// Plain key=value manifest; every CSV in the directory is reproducible
/// from it.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> io::Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    fs::write(path, out)
}

pub fn write_image(path: &Path, grid: ImageGrid, data: &[f64]) -> io::Result<()> {
    pgm::write_pgm16(path, grid, data)
}
