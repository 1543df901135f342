//! Basis-modification operators applied column-wise to the flexible solution
//! basis: identity, exact rank-r truncation of the reshaped vector, and its
//! randomized counterpart.
//!
//! The truncation acts on an already-normalized direction vector and the
//! result is not re-normalized afterwards.

use crate::error::{Error, Result};
use crate::linalg::{randomized_svd, svd};
use crate::operators::ImageGrid;

/// Parameters of the randomized truncation backend.
#[derive(Debug, Clone, Copy)]
pub struct RandomizedParams {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RandomizedParams {
    fn default() -> Self {
        // standard HMT-style defaults
        RandomizedParams {
            oversample: 5,
            power_iters: 1,
            seed: 0,
        }
    }
}

/// Operator tau: R^n -> R^n modifying one basis vector.
#[derive(Debug, Clone)]
pub enum TruncationOperator {
    /// Leaves the vector untouched; recovers the classical solvers.
    Identity,
    /// Reshape to `grid`, replace by the best rank-r approximation in the
    /// Frobenius norm, reshape back.
    RankExact { r: usize, grid: ImageGrid },
    /// Same, with the randomized truncated SVD as backend. Each call derives
    /// a fresh Gaussian stream from (seed, call index) so a solver run is
    /// deterministic while successive iterations stay decorrelated.
    RankRandomized {
        r: usize,
        grid: ImageGrid,
        params: RandomizedParams,
    },
}

impl TruncationOperator {
    pub fn rank_exact(r: usize, grid: ImageGrid) -> Self {
        TruncationOperator::RankExact { r, grid }
    }

    pub fn rank_randomized(r: usize, grid: ImageGrid, params: RandomizedParams) -> Self {
        TruncationOperator::RankRandomized { r, grid, params }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, TruncationOperator::Identity)
    }

    /// Applies the operator; `call_index` seeds the randomized kind (solvers
    /// pass their iteration counter, standalone callers may pass 0).
    pub fn apply_indexed(&self, c: &[f64], call_index: u64) -> Result<Vec<f64>> {
        match self {
            TruncationOperator::Identity => Ok(c.to_vec()),
            TruncationOperator::RankExact { r, grid } => {
                check_rank_grid(*r, *grid, c.len())?;
                let mat = grid.to_matrix(c);
                let fac = svd(&mat)?.truncate(*r);
                Ok(fac.reconstruct().data().to_vec())
            }
            TruncationOperator::RankRandomized { r, grid, params } => {
                check_rank_grid(*r, *grid, c.len())?;
                let mat = grid.to_matrix(c);
                let min_dim = grid.height.min(grid.width);
                // cap the oversampling instead of failing near full rank
                let oversample = params.oversample.min(min_dim - *r);
                let seed = params
                    .seed
                    .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    .wrapping_add(call_index);
                let fac = randomized_svd(&mat, *r, oversample, params.power_iters, seed)?;
                Ok(fac.reconstruct().data().to_vec())
            }
        }
    }

    pub fn apply(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.apply_indexed(c, 0)
    }
}

fn check_rank_grid(r: usize, grid: ImageGrid, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: len,
        });
    }
    let min_dim = grid.height.min(grid.width);
    if r == 0 || r > min_dim {
        return Err(Error::RankTooLarge {
            requested: r,
            limit: min_dim,
        });
    }
    Ok(())
}
