//! Flag and config-file parsing. Flags are `--key value` pairs (plus a few
//! boolean switches); an optional config file supplies the same keys as
//! `key=value` lines, with command-line flags taking precedence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Synth,
    Deblur,
    Ct,
    Bounds,
    Corollary,
    Timing,
}

impl Experiment {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "synth" => Experiment::Synth,
            "deblur" => Experiment::Deblur,
            "ct" => Experiment::Ct,
            "bounds" => Experiment::Bounds,
            "corollary" => Experiment::Corollary,
            "timing" => Experiment::Timing,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Synth => "synth",
            Experiment::Deblur => "deblur",
            Experiment::Ct => "ct",
            Experiment::Bounds => "bounds",
            Experiment::Corollary => "corollary",
            Experiment::Timing => "timing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverName {
    Lsqr,
    Lsmr,
    Flsqr,
    Flsmr,
    Sflsqr,
    Sflsmr,
    SflsqrRnd,
    SflsmrRnd,
}

impl SolverName {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "lsqr" => SolverName::Lsqr,
            "lsmr" => SolverName::Lsmr,
            "flsqr" => SolverName::Flsqr,
            "flsmr" => SolverName::Flsmr,
            "sflsqr" => SolverName::Sflsqr,
            "sflsmr" => SolverName::Sflsmr,
            "sflsqr-rnd" => SolverName::SflsqrRnd,
            "sflsmr-rnd" => SolverName::SflsmrRnd,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverName::Lsqr => "lsqr",
            SolverName::Lsmr => "lsmr",
            SolverName::Flsqr => "flsqr",
            SolverName::Flsmr => "flsmr",
            SolverName::Sflsqr => "sflsqr",
            SolverName::Sflsmr => "sflsmr",
            SolverName::SflsqrRnd => "sflsqr-rnd",
            SolverName::SflsmrRnd => "sflsmr-rnd",
        }
    }

    pub fn needs_exact_transpose(&self) -> bool {
        matches!(self, SolverName::Lsqr | SolverName::Lsmr)
    }

    pub fn uses_randomized_truncation(&self) -> bool {
        matches!(self, SolverName::SflsqrRnd | SolverName::SflsmrRnd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchChoice {
    Gaussian,
    CountSketch,
}

/// Fully parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub solvers: Vec<SolverName>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub maxit: usize,
    pub tol: f64,
    pub window: usize,
    pub sketch: SketchChoice,
    pub sketch_rows: Option<usize>,
    /// Truncation rank; `None` means the experiment default (scaled rank
    /// for image problems, no truncation otherwise).
    pub rank: Option<usize>,
    pub eta: f64,
    pub discrepancy: bool,
    // problem geometry
    pub m: usize,
    pub n: usize,
    pub rho: f64,
    pub delta: f64,
    pub variance: f64,
    pub keep: f64,
    pub angles: usize,
    pub rays: usize,
    pub asymmetry: f64,
    // corollary
    pub k: usize,
    pub s: usize,
    pub trials: usize,
    // timing
    pub repeats: usize,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

pub const USAGE: &str = "usage: skrylov <experiment> [--key value ...]

experiments:
  synth      dense system with prescribed singular value decay
  deblur     Gaussian blur + random subsampling of a low-rank scene
  ct         parallel-beam CT of the Shepp-Logan phantom (unmatched adjoint)
  bounds     per-iteration residual bounds on the synth problem
  corollary  Monte Carlo check of the Gaussian expectation identity
  timing     median wall times per solver on the deblur problem

common flags (defaults in parentheses):
  --out DIR           output directory (out)
  --seed N            master seed (1)
  --maxit N           iterations (50)
  --tol X             relative objective tolerance (1e-8)
  --window N          orthogonalization window for sketched solvers (2)
  --solvers a,b,c     subset of lsqr,lsmr,flsqr,flsmr,sflsqr,sflsmr,
                      sflsqr-rnd,sflsmr-rnd (per experiment)
  --sketch KIND       gaussian | countsketch (countsketch)
  --sketch-rows N     sketch rows (2*maxit + 1)
  --rank N            truncation rank, 0 disables truncation
  --eta X             discrepancy safety factor (1.01)
  --discrepancy       stop by the discrepancy principle
  --config FILE       key=value file supplying the same keys (flags win)

problem flags:
  synth:  --m (1024) --n (512) --rho (1.01) --delta (0.10)
  deblur: --n (64) --variance (0.25) --keep (0.8) --delta (0.05)
  ct:     --n (64) --angles (60) --rays (96) --delta (0.05)
          --asymmetry (0.04)
  corollary: --k (10) --s (41) --trials (2000) --m (200) --n (100)
  timing: --n (128) --repeats (5)
";

/// Parses the command line (after the binary name).
pub fn parse_args(args: &[String]) -> Result<RunConfig, ConfigError> {
    if args.is_empty() {
        return err(USAGE);
    }
    let experiment = Experiment::parse(&args[0])
        .ok_or_else(|| ConfigError(format!("unknown experiment '{}'\n\n{USAGE}", args[0])))?;

    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    let mut flags_seen: BTreeMap<String, String> = BTreeMap::new();
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        let Some(key) = a.strip_prefix("--") else {
            return err(format!("expected a --flag, found '{a}'"));
        };
        match key {
            "discrepancy" => {
                flags_seen.insert("discrepancy".into(), "true".into());
                i += 1;
            }
            _ => {
                let Some(v) = args.get(i + 1) else {
                    return err(format!("flag --{key} needs a value"));
                };
                flags_seen.insert(key.to_string(), v.clone());
                i += 2;
            }
        }
    }

    // config file first, flags override
    if let Some(path) = flags_seen.get("config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config file {path}: {e}")))?;
        for (lineno, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return err(format!("{path}:{}: expected key=value", lineno + 1));
            };
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    kv.extend(flags_seen);

    let get_usize = |kv: &BTreeMap<String, String>, key: &str, default: usize| {
        match kv.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| ConfigError(format!("--{key}: expected an integer, got '{v}'"))),
        }
    };
    let get_f64 = |kv: &BTreeMap<String, String>, key: &str, default: f64| match kv.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| ConfigError(format!("--{key}: expected a number, got '{v}'"))),
    };

    let (def_n, def_delta) = match experiment {
        Experiment::Synth | Experiment::Bounds => (512, 0.10),
        Experiment::Deblur => (64, 0.05),
        Experiment::Ct => (64, 0.05),
        Experiment::Corollary => (100, 0.10),
        Experiment::Timing => (128, 0.05),
    };
    let def_m = match experiment {
        Experiment::Synth | Experiment::Bounds => 1024,
        Experiment::Corollary => 200,
        _ => 0,
    };

    let maxit = get_usize(&kv, "maxit", 50)?;
    let mut cfg = RunConfig {
        experiment,
        solvers: Vec::new(),
        out_dir: PathBuf::from(kv.get("out").cloned().unwrap_or_else(|| "out".into())),
        seed: get_usize(&kv, "seed", 1)? as u64,
        maxit,
        tol: get_f64(&kv, "tol", 1e-8)?,
        window: get_usize(&kv, "window", 2)?,
        sketch: match kv.get("sketch").map(String::as_str) {
            None | Some("countsketch") => SketchChoice::CountSketch,
            Some("gaussian") => SketchChoice::Gaussian,
            Some(other) => return err(format!("--sketch: unknown kind '{other}'")),
        },
        sketch_rows: match kv.get("sketch-rows") {
            None => None,
            Some(v) => Some(v.parse::<usize>().map_err(|_| {
                ConfigError(format!("--sketch-rows: expected an integer, got '{v}'"))
            })?),
        },
        rank: match kv.get("rank") {
            None => None,
            Some(v) => Some(v.parse::<usize>().map_err(|_| {
                ConfigError(format!("--rank: expected an integer, got '{v}'"))
            })?),
        },
        eta: get_f64(&kv, "eta", 1.01)?,
        discrepancy: kv.get("discrepancy").map(String::as_str) == Some("true"),
        m: get_usize(&kv, "m", def_m)?,
        n: get_usize(&kv, "n", def_n)?,
        rho: get_f64(&kv, "rho", 1.01)?,
        delta: get_f64(&kv, "delta", def_delta)?,
        variance: get_f64(&kv, "variance", 0.25)?,
        keep: get_f64(&kv, "keep", 0.8)?,
        angles: get_usize(&kv, "angles", 60)?,
        rays: get_usize(&kv, "rays", 96)?,
        asymmetry: get_f64(&kv, "asymmetry", 0.04)?,
        k: get_usize(&kv, "k", 10)?,
        s: get_usize(&kv, "s", 41)?,
        trials: get_usize(&kv, "trials", 2000)?,
        repeats: get_usize(&kv, "repeats", 5)?,
    };

    let default_solvers: &[SolverName] = match experiment {
        Experiment::Synth => &[SolverName::Lsqr, SolverName::Sflsqr, SolverName::Sflsmr],
        Experiment::Deblur => &[
            SolverName::Lsqr,
            SolverName::Flsqr,
            SolverName::Sflsqr,
            SolverName::Sflsmr,
        ],
        Experiment::Ct => &[SolverName::Flsqr, SolverName::Sflsqr, SolverName::Sflsmr],
        Experiment::Timing => &[
            SolverName::Lsqr,
            SolverName::Flsqr,
            SolverName::Sflsqr,
            SolverName::Flsmr,
            SolverName::Sflsmr,
        ],
        Experiment::Bounds | Experiment::Corollary => &[],
    };
    cfg.solvers = match kv.get("solvers") {
        None => default_solvers.to_vec(),
        Some(list) => {
            let mut out = Vec::new();
            for tok in list.split(',').filter(|t| !t.is_empty()) {
                let s = SolverName::parse(tok)
                    .ok_or_else(|| ConfigError(format!("unknown solver '{tok}'")))?;
                out.push(s);
            }
            out
        }
    };

    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    if cfg.maxit == 0 {
        return err("--maxit must be at least 1");
    }
    if cfg.window == 0 {
        return err("--window must be at least 1");
    }
    if !(cfg.eta > 1.0) {
        return err(format!(
            "--eta must exceed 1 for the discrepancy principle, got {}",
            cfg.eta
        ));
    }
    if !(0.0..1.0).contains(&cfg.delta) {
        return err(format!("--delta must lie in [0, 1), got {}", cfg.delta));
    }
    match cfg.experiment {
        Experiment::Synth | Experiment::Bounds => {
            if cfg.m < cfg.n {
                return err(format!(
                    "synth problems need m >= n, got m = {}, n = {}",
                    cfg.m, cfg.n
                ));
            }
            if cfg.rho < 1.0 {
                return err(format!("--rho must be >= 1, got {}", cfg.rho));
            }
        }
        Experiment::Deblur | Experiment::Timing => {
            if !(cfg.keep > 0.0 && cfg.keep <= 1.0) {
                return err(format!("--keep must lie in (0, 1], got {}", cfg.keep));
            }
            if cfg.variance <= 0.0 {
                return err(format!("--variance must be positive, got {}", cfg.variance));
            }
        }
        Experiment::Ct => {
            if cfg.angles == 0 || cfg.rays == 0 {
                return err("--angles and --rays must be at least 1");
            }
            if cfg.asymmetry < 0.0 {
                return err(format!("--asymmetry must be >= 0, got {}", cfg.asymmetry));
            }
            if cfg.asymmetry > 0.0 {
                if let Some(bad) = cfg.solvers.iter().find(|s| s.needs_exact_transpose()) {
                    return err(format!(
                        "solver '{}' needs the exact transpose, but --asymmetry {} makes the \
                         adjoint unmatched; drop it from --solvers or set --asymmetry 0",
                        bad.name(),
                        cfg.asymmetry
                    ));
                }
            }
        }
        Experiment::Corollary => {
            if cfg.s <= cfg.k + 1 {
                return err(format!(
                    "the expectation formula needs s >= k + 2, got s = {}, k = {}",
                    cfg.s, cfg.k
                ));
            }
            if cfg.trials == 0 {
                return err("--trials must be at least 1");
            }
            if cfg.m < cfg.n {
                return err(format!(
                    "corollary problems need m >= n, got m = {}, n = {}",
                    cfg.m, cfg.n
                ));
            }
        }
    }
    if cfg.solvers.iter().any(|s| s.uses_randomized_truncation()) && cfg.effective_rank() == 0 {
        return err(
            "sflsqr-rnd / sflsmr-rnd use randomized low-rank truncation; set --rank > 0",
        );
    }
    if cfg.effective_rank() > 0
        && matches!(
            cfg.experiment,
            Experiment::Synth | Experiment::Bounds | Experiment::Corollary
        )
    {
        return err(
            "--rank needs an image-grid problem (deblur, ct or timing); synth vectors              have no 2D reshape",
        );
    }
    if cfg.solvers.is_empty()
        && !matches!(cfg.experiment, Experiment::Bounds | Experiment::Corollary)
    {
        return err("no solvers selected");
    }
    if let Some(s_rows) = cfg.sketch_rows {
        if s_rows == 0 {
            return err("--sketch-rows must be at least 1");
        }
    }
    let uses_sketch = matches!(cfg.experiment, Experiment::Bounds)
        || cfg.solvers.iter().any(|s| {
            matches!(
                s,
                SolverName::Sflsqr
                    | SolverName::Sflsmr
                    | SolverName::SflsqrRnd
                    | SolverName::SflsmrRnd
            )
        });
    if uses_sketch && cfg.sketch_rows() < cfg.maxit {
        return err(format!(
            "the sketched least-squares systems grow to maxit columns, so \
             --sketch-rows ({}) must be at least --maxit ({}); the default is 2*maxit + 1",
            cfg.sketch_rows(),
            cfg.maxit
        ));
    }
    Ok(())
}

impl RunConfig {
    /// Sketch rows: explicit flag or the 2*maxit + 1 default.
    pub fn sketch_rows(&self) -> usize {
        self.sketch_rows.unwrap_or(2 * self.maxit + 1)
    }

    /// Truncation rank after applying experiment defaults.
    pub fn effective_rank(&self) -> usize {
        match self.rank {
            Some(r) => r,
            None => match self.experiment {
                Experiment::Deblur | Experiment::Timing => {
                    sketched_krylov::problems::default_truncation_rank(self.n)
                }
                _ => 0,
            },
        }
    }
}
