//! Experiment driver: builds the requested test problem, runs the selected
//! solvers, and emits machine-readable convergence data (CSV), images (PGM)
//! and a manifest that fully reproduces the run.

mod config;
mod output;

use config::{Experiment, RunConfig, SketchChoice, SolverName};
use sketched_krylov::analysis;
use sketched_krylov::linalg::norm2;
use sketched_krylov::operators::ImageGrid;
use sketched_krylov::problems::{self, split_seed, streams, Problem};
use sketched_krylov::sketch::SketchOperator;
use sketched_krylov::solvers::{
    flsmr, flsqr, lsmr, lsqr, sflsmr, sflsqr, SolveHistory, SolverConfig, StopReason,
};
use sketched_krylov::truncate::{RandomizedParams, TruncationOperator};
use std::error::Error;
use std::process::ExitCode;
use std::time::Instant;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{}", config::USAGE);
        return ExitCode::SUCCESS;
    }
    let cfg = match config::parse_args(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("skrylov: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("skrylov: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cfg: &RunConfig) -> Result<(), Box<dyn Error>> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    match cfg.experiment {
        Experiment::Synth | Experiment::Deblur | Experiment::Ct => run_solvers(cfg),
        Experiment::Bounds => run_bounds(cfg),
        Experiment::Corollary => run_corollary(cfg),
        Experiment::Timing => run_timing(cfg),
    }
}

fn build_problem(cfg: &RunConfig) -> Result<Problem, Box<dyn Error>> {
    Ok(match cfg.experiment {
        Experiment::Synth | Experiment::Bounds | Experiment::Corollary => {
            problems::synthetic_decay(cfg.m, cfg.n, cfg.rho, cfg.delta, cfg.seed)?
        }
        Experiment::Deblur | Experiment::Timing => problems::deblur_inpaint_problem(
            cfg.n,
            cfg.variance,
            cfg.keep,
            cfg.delta,
            6,
            cfg.seed,
        )?,
        Experiment::Ct => problems::ct_problem(
            cfg.n,
            cfg.angles,
            cfg.rays,
            cfg.delta,
            cfg.asymmetry,
            cfg.seed,
        )?,
    })
}

fn image_grid(cfg: &RunConfig) -> Option<ImageGrid> {
    match cfg.experiment {
        Experiment::Deblur | Experiment::Ct | Experiment::Timing => {
            Some(ImageGrid::square(cfg.n))
        }
        _ => None,
    }
}

fn truncation_for(cfg: &RunConfig, solver: SolverName) -> TruncationOperator {
    let rank = cfg.effective_rank();
    let grid = match image_grid(cfg) {
        Some(g) if rank > 0 => g,
        _ => return TruncationOperator::Identity,
    };
    match solver {
        SolverName::Lsqr | SolverName::Lsmr => TruncationOperator::Identity,
        SolverName::SflsqrRnd | SolverName::SflsmrRnd => TruncationOperator::rank_randomized(
            rank,
            grid,
            RandomizedParams {
                seed: split_seed(cfg.seed, streams::TRUNCATION),
                ..RandomizedParams::default()
            },
        ),
        _ => TruncationOperator::rank_exact(rank, grid),
    }
}

fn sketch_for(cfg: &RunConfig, solver: SolverName, problem: &Problem) -> Option<SketchOperator> {
    let (dim, stream) = match solver {
        SolverName::Sflsqr | SolverName::SflsqrRnd => (problem.a.rows(), streams::SKETCH),
        SolverName::Sflsmr | SolverName::SflsmrRnd => (problem.a.cols(), streams::SKETCH_N),
        _ => return None,
    };
    let rows = cfg.sketch_rows().min(dim);
    let seed = split_seed(cfg.seed, stream);
    Some(match cfg.sketch {
        SketchChoice::Gaussian => {
            SketchOperator::gaussian_scaled(rows, dim, seed).expect("validated dims")
        }
        SketchChoice::CountSketch => {
            SketchOperator::countsketch(rows, dim, seed).expect("validated dims")
        }
    })
}

fn solver_config(
    cfg: &RunConfig,
    solver: SolverName,
    problem: &Problem,
    track_history: bool,
) -> SolverConfig {
    let mut sc = SolverConfig::with_maxit(cfg.maxit);
    sc.tol = cfg.tol;
    sc.window = match solver {
        SolverName::Flsqr | SolverName::Flsmr => cfg.maxit,
        _ => cfg.window,
    };
    sc.tau = truncation_for(cfg, solver);
    sc.sketch = sketch_for(cfg, solver, problem);
    sc.eta = cfg.eta;
    sc.delta_e = cfg.discrepancy.then_some(problem.delta_e);
    sc.x_true = problem.x_true.clone();
    sc.track_history = track_history;
    sc
}

fn dispatch(
    solver: SolverName,
    problem: &Problem,
    sc: &SolverConfig,
) -> sketched_krylov::Result<SolveHistory> {
    match solver {
        SolverName::Lsqr => lsqr(&problem.a, &problem.b, sc),
        SolverName::Lsmr => lsmr(&problem.a, &problem.b, sc),
        SolverName::Flsqr => flsqr(&problem.a, &problem.b, sc),
        SolverName::Flsmr => flsmr(&problem.a, &problem.b, sc),
        SolverName::Sflsqr | SolverName::SflsqrRnd => sflsqr(&problem.a, &problem.b, sc),
        SolverName::Sflsmr | SolverName::SflsmrRnd => sflsmr(&problem.a, &problem.b, sc),
    }
}

fn stop_reason_name(r: StopReason) -> &'static str {
    match r {
        StopReason::MaxIterations => "maxit",
        StopReason::Tolerance => "tolerance",
        StopReason::Discrepancy => "discrepancy",
        StopReason::Breakdown => "breakdown",
    }
}

fn base_manifest(cfg: &RunConfig) -> Vec<(String, String)> {
    let mut m = vec![
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("experiment".into(), cfg.experiment.name().into()),
        ("seed".into(), cfg.seed.to_string()),
        ("maxit".into(), cfg.maxit.to_string()),
        ("tol".into(), output::fmt_f64(cfg.tol)),
        ("window".into(), cfg.window.to_string()),
        (
            "sketch".into(),
            match cfg.sketch {
                SketchChoice::Gaussian => "gaussian".into(),
                SketchChoice::CountSketch => "countsketch".into(),
            },
        ),
        ("sketch_rows".into(), cfg.sketch_rows().to_string()),
        ("rank".into(), cfg.effective_rank().to_string()),
        ("eta".into(), output::fmt_f64(cfg.eta)),
        ("discrepancy".into(), cfg.discrepancy.to_string()),
        ("delta".into(), output::fmt_f64(cfg.delta)),
        (
            "seed_noise".into(),
            split_seed(cfg.seed, streams::NOISE).to_string(),
        ),
        (
            "seed_sketch_m".into(),
            split_seed(cfg.seed, streams::SKETCH).to_string(),
        ),
        (
            "seed_sketch_n".into(),
            split_seed(cfg.seed, streams::SKETCH_N).to_string(),
        ),
    ];
    match cfg.experiment {
        Experiment::Synth | Experiment::Bounds => {
            m.push(("m".into(), cfg.m.to_string()));
            m.push(("n".into(), cfg.n.to_string()));
            m.push(("rho".into(), output::fmt_f64(cfg.rho)));
        }
        Experiment::Deblur | Experiment::Timing => {
            m.push(("n".into(), cfg.n.to_string()));
            m.push(("variance".into(), output::fmt_f64(cfg.variance)));
            m.push(("keep".into(), output::fmt_f64(cfg.keep)));
        }
        Experiment::Ct => {
            m.push(("n".into(), cfg.n.to_string()));
            m.push(("angles".into(), cfg.angles.to_string()));
            m.push(("rays".into(), cfg.rays.to_string()));
            m.push(("asymmetry".into(), output::fmt_f64(cfg.asymmetry)));
        }
        Experiment::Corollary => {
            m.push(("m".into(), cfg.m.to_string()));
            m.push(("n".into(), cfg.n.to_string()));
            m.push(("k".into(), cfg.k.to_string()));
            m.push(("s".into(), cfg.s.to_string()));
            m.push(("trials".into(), cfg.trials.to_string()));
        }
    }
    m
}

fn run_solvers(cfg: &RunConfig) -> Result<(), Box<dyn Error>> {
    let problem = build_problem(cfg)?;
    let mut manifest = base_manifest(cfg);
    manifest.push(("delta_e".into(), output::fmt_f64(problem.delta_e)));
    manifest.push((
        "solvers".into(),
        cfg.solvers
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join(","),
    ));

    if let (Some(grid), Some(x_true)) = (image_grid(cfg), problem.x_true.as_ref()) {
        output::write_image(&cfg.out_dir.join("x_true.pgm"), grid, x_true)?;
    }
    if cfg.experiment == Experiment::Ct {
        let sino_grid = ImageGrid {
            height: cfg.rays,
            width: cfg.angles,
        };
        output::write_image(&cfg.out_dir.join("sinogram.pgm"), sino_grid, &problem.b)?;
    }

    for &solver in &cfg.solvers {
        let sc = solver_config(cfg, solver, &problem, true);
        let history = dispatch(solver, &problem, &sc)?;
        let csv = cfg.out_dir.join(format!("{}.csv", solver.name()));
        output::write_history_csv(&csv, &history, &problem.b, history.objective_scale)?;
        if let Some(grid) = image_grid(cfg) {
            let recon = cfg.out_dir.join(format!("{}_recon.pgm", solver.name()));
            output::write_image(&recon, grid, &history.x)?;
        }
        manifest.push((
            format!("{}_iterations", solver.name()),
            history.iterations.len().to_string(),
        ));
        manifest.push((
            format!("{}_stop_reason", solver.name()),
            stop_reason_name(history.stop_reason).into(),
        ));
        if let Some(k) = history.stop_iteration {
            manifest.push((format!("{}_stop_iteration", solver.name()), k.to_string()));
        }
        println!(
            "{}: {} iterations, final relative residual {:.4e} ({})",
            solver.name(),
            history.iterations.len(),
            history.final_true_residual() / norm2(&problem.b),
            stop_reason_name(history.stop_reason),
        );
    }
    output::write_manifest(&cfg.out_dir.join("manifest.txt"), &manifest)?;
    Ok(())
}

fn run_bounds(cfg: &RunConfig) -> Result<(), Box<dyn Error>> {
    let problem = build_problem(cfg)?;
    let s_rows = cfg.sketch_rows();
    // the bound theory is stated for Gaussian sketches; the sketch choice
    // flag still selects what the solvers run with
    let sk_m = match cfg.sketch {
        SketchChoice::Gaussian => SketchOperator::gaussian_scaled(
            s_rows.min(cfg.m),
            cfg.m,
            split_seed(cfg.seed, streams::SKETCH),
        )?,
        SketchChoice::CountSketch => SketchOperator::countsketch(
            s_rows.min(cfg.m),
            cfg.m,
            split_seed(cfg.seed, streams::SKETCH),
        )?,
    };
    let sk_n = match cfg.sketch {
        SketchChoice::Gaussian => SketchOperator::gaussian_scaled(
            s_rows.min(cfg.n),
            cfg.n,
            split_seed(cfg.seed, streams::SKETCH_N),
        )?,
        SketchChoice::CountSketch => SketchOperator::countsketch(
            s_rows.min(cfg.n),
            cfg.n,
            split_seed(cfg.seed, streams::SKETCH_N),
        )?,
    };

    let mut sc = SolverConfig::with_maxit(cfg.maxit);
    sc.tol = 0.0;
    sc.window = cfg.window;
    sc.store_basis = true;
    sc.x_true = problem.x_true.clone();
    let mut sc_q = sc.clone();
    sc_q.sketch = Some(sk_m.clone());
    let hq = sflsqr(&problem.a, &problem.b, &sc_q)?;
    let mut sc_m = sc.clone();
    sc_m.sketch = Some(sk_n.clone());
    let hm = sflsmr(&problem.a, &problem.b, &sc_m)?;

    let z = hq
        .basis_z
        .as_ref()
        .expect("basis stored for bound evaluation");
    let report = analysis::verify_bounds(
        &problem.a,
        &problem.b,
        z,
        &sk_m,
        &sk_n,
        &hq.true_residuals(),
        &hm.true_residuals(),
    )?;
    output::write_bounds_csv(&cfg.out_dir.join("bounds.csv"), &report)?;
    output::write_history_csv(
        &cfg.out_dir.join("sflsqr.csv"),
        &hq,
        &problem.b,
        hq.objective_scale,
    )?;
    output::write_history_csv(
        &cfg.out_dir.join("sflsmr.csv"),
        &hm,
        &problem.b,
        hm.objective_scale,
    )?;
    let violations = report.rows.iter().filter(|r| !r.ok1 || !r.ok2).count();
    let mut manifest = base_manifest(cfg);
    manifest.push(("bound_violations".into(), violations.to_string()));
    output::write_manifest(&cfg.out_dir.join("manifest.txt"), &manifest)?;
    println!(
        "bounds: {} iterations checked, {} violations",
        report.rows.len(),
        violations
    );
    Ok(())
}

fn run_corollary(cfg: &RunConfig) -> Result<(), Box<dyn Error>> {
    let problem = build_problem(cfg)?;
    // fixed subspace: k bidiagonalization steps
    let mut sc = SolverConfig::with_maxit(cfg.k);
    sc.tol = 0.0;
    sc.store_basis = true;
    sc.track_history = false;
    let h = lsqr(&problem.a, &problem.b, &sc)?;
    let z = h.basis_z.as_ref().expect("basis stored");
    let check = analysis::corollary_check(
        &problem.a,
        z,
        &problem.b,
        cfg.s,
        cfg.trials,
        split_seed(cfg.seed, streams::SKETCH),
    )?;
    let rel_err = (check.empirical_mean - check.predicted).abs() / check.predicted;
    let line = format!(
        "{},{},{}\n",
        output::fmt_f64(check.empirical_mean),
        output::fmt_f64(check.predicted),
        output::fmt_f64(rel_err)
    );
    std::fs::write(
        cfg.out_dir.join("corollary.csv"),
        format!("empirical,predicted,rel_err\n{line}"),
    )?;
    let mut manifest = base_manifest(cfg);
    manifest.push(("r_opt_squared".into(), output::fmt_f64(check.r_opt_squared)));
    output::write_manifest(&cfg.out_dir.join("manifest.txt"), &manifest)?;
    println!(
        "corollary: empirical {:.6e}, predicted {:.6e}, rel_err {:.4}",
        check.empirical_mean, check.predicted, rel_err
    );
    Ok(())
}

fn run_timing(cfg: &RunConfig) -> Result<(), Box<dyn Error>> {
    let problem = build_problem(cfg)?;
    let mut medians: Vec<(SolverName, f64)> = Vec::new();
    let mut samples: Vec<(SolverName, Vec<f64>)> = cfg
        .solvers
        .iter()
        .map(|&s| (s, Vec::with_capacity(cfg.repeats)))
        .collect();
    // repeats interleave the solvers so background load cancels out of the
    // ordering comparison
    for _ in 0..cfg.repeats.max(1) {
        for (solver, times) in samples.iter_mut() {
            let sc = solver_config(cfg, *solver, &problem, false);
            let t = Instant::now();
            dispatch(*solver, &problem, &sc)?;
            times.push(t.elapsed().as_secs_f64());
        }
    }
    let mut csv = String::from("solver,median_seconds,repeats\n");
    for (solver, mut times) in samples {
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = times[times.len() / 2];
        medians.push((solver, med));
        csv.push_str(&format!(
            "{},{},{}\n",
            solver.name(),
            output::fmt_f64(med),
            times.len()
        ));
        println!("{}: median {:.3} s", solver.name(), med);
    }
    std::fs::write(cfg.out_dir.join("timings.csv"), csv)?;
    let mut manifest = base_manifest(cfg);
    manifest.push(("repeats".into(), cfg.repeats.to_string()));
    output::write_manifest(&cfg.out_dir.join("manifest.txt"), &manifest)?;
    Ok(())
}
