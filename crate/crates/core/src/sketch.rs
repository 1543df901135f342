//! Randomized sketching operators with seeded, reproducible construction.
//!
//! A sketch maps R^d to R^s (s <= d) while approximately preserving the
//! norms of vectors drawn from a low-dimensional subspace. Gaussian sketches
//! carry the strongest guarantees; CountSketch applies in O(d). An identity
//! kind is provided so sketched solvers can be collapsed onto their
//! unsketched counterparts in tests.

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchKind {
    Gaussian,
    CountSketch,
    Identity,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(DenseMatrix),
    /// One (row, sign) pair per input coordinate.
    Count { rows: Vec<usize>, signs: Vec<f64> },
    Identity,
}

/// Seeded random linear map from R^d to R^s.
#[derive(Debug, Clone)]
pub struct SketchOperator {
    s: usize,
    d: usize,
    kind: SketchKind,
    seed: u64,
    scale: f64,
    storage: Storage,
}

impl SketchOperator {
    /// Gaussian sketch: entries i.i.d. N(0,1) times `scale`.
    ///
    /// With `scale = 1/sqrt(s)` the sketched norm is an unbiased estimate of
    /// the true norm; the solver iterates themselves are invariant to the
    /// scale choice.
    pub fn gaussian(s: usize, d: usize, seed: u64, scale: f64) -> Result<Self> {
        check_dims(s, d)?;
        let mut rng = StdRng::seed_from_u64(seed);
        let m = DenseMatrix::from_fn(s, d, |_, _| {
            let g: f64 = rng.sample(StandardNormal);
            g * scale
        });
        Ok(SketchOperator {
            s,
            d,
            kind: SketchKind::Gaussian,
            seed,
            scale,
            storage: Storage::Dense(m),
        })
    }

    /// Convenience constructor with the unbiased 1/sqrt(s) scaling.
    pub fn gaussian_scaled(s: usize, d: usize, seed: u64) -> Result<Self> {
        Self::gaussian(s, d, seed, 1.0 / (s as f64).sqrt())
    }

    /// CountSketch: each input coordinate is hashed to one output row with a
    /// random sign, so application costs O(d).
    pub fn countsketch(s: usize, d: usize, seed: u64) -> Result<Self> {
        check_dims(s, d)?;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(d);
        let mut signs = Vec::with_capacity(d);
        for _ in 0..d {
            rows.push(rng.random_range(0..s));
            signs.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
        }
        Ok(SketchOperator {
            s,
            d,
            kind: SketchKind::CountSketch,
            seed,
            scale: 1.0,
            storage: Storage::Count { rows, signs },
        })
    }

    /// Identity sketch (s = d); collapses sketched solvers onto their
    /// unsketched counterparts.
    pub fn identity(d: usize) -> Self {
        SketchOperator {
            s: d,
            d,
            kind: SketchKind::Identity,
            seed: 0,
            scale: 1.0,
            storage: Storage::Identity,
        }
    }

    pub fn rows(&self) -> usize {
        self.s
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.d, "sketch input dimension mismatch");
        match &self.storage {
            Storage::Dense(m) => m.matvec(v),
            Storage::Count { rows, signs } => {
                let mut out = vec![0.0; self.s];
                for (j, (&r, &sg)) in rows.iter().zip(signs).enumerate() {
                    out[r] += sg * v[j];
                }
                out
            }
            Storage::Identity => v.to_vec(),
        }
    }

    /// Materializes the sketch as a dense s x d matrix. Intended for
    /// diagnostics and test oracles, not the application hot path.
    pub fn to_dense(&self) -> DenseMatrix {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Count { rows, signs } => {
                let mut m = DenseMatrix::zeros(self.s, self.d);
                for (j, (&r, &sg)) in rows.iter().zip(signs).enumerate() {
                    m.set(r, j, sg);
                }
                m
            }
            Storage::Identity => DenseMatrix::identity(self.d),
        }
    }

    /// Applies the sketch to each column of a matrix.
    pub fn apply_to_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        let cols: Vec<Vec<f64>> = (0..m.cols()).map(|j| self.apply(m.col(j))).collect();
        DenseMatrix::from_columns(&cols)
    }
}

fn check_dims(s: usize, d: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::InvalidParameter("sketch rows must be >= 1".into()));
    }
    if s > d {
        return Err(Error::InvalidParameter(format!(
            "sketch rows {s} exceed input dimension {d}"
        )));
    }
    Ok(())
}

/// Empirical embedding distortion of `sketch` on the subspace spanned by the
/// orthonormal columns of `basis`: min and max of ||S V c|| / ||V c|| over
/// random coefficient probes.
pub fn embedding_distortion(
    sketch: &SketchOperator,
    basis: &DenseMatrix,
    n_probes: usize,
    seed: u64,
) -> (f64, f64) {
    assert_eq!(basis.rows(), sketch.input_dim());
    let mut rng = StdRng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for _ in 0..n_probes.max(1) {
        let c: Vec<f64> = (0..basis.cols()).map(|_| rng.sample(StandardNormal)).collect();
        let v = basis.matvec(&c);
        let nv = linalg::norm2(&v);
        if nv == 0.0 {
            continue;
        }
        let sv = sketch.apply(&v);
        let ratio = linalg::norm2(&sv) / nv;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (lo, hi)
}

/// Exact distortion extremes: smallest and largest singular values of the
/// materialized S*V (the basis columns must be orthonormal).
pub fn embedding_distortion_exact(
    sketch: &SketchOperator,
    basis: &DenseMatrix,
) -> Result<(f64, f64)> {
    let sv = sketch.apply_to_matrix(basis);
    let f = linalg::svd(&sv)?;
    let smax = f.sigma.first().copied().unwrap_or(0.0);
    let smin = f.sigma.last().copied().unwrap_or(0.0);
    Ok((smin, smax))
}
