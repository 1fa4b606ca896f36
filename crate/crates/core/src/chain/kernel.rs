use std::sync::Arc;

use super::{ChainError, TransitionMatrix};
use crate::scalar::Real;

/// One epoch of three-point transitions `Q_{i,j,l} = Pr{X_t = j | X_{t-1} = i, X_{t+1} = l}`.
///
/// Stored as `[i][l][j]` so that the law over the middle state is contiguous.
/// `(i, l)` pairs whose conditioning event is impossible are marked undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSlice<R: Real> {
    n: usize,
    values: Vec<R>,
    defined: Vec<bool>,
}

impl<R: Real> KernelSlice<R> {
    /// Build from a closure returning the middle-state law for each `(i, l)`.
    pub fn from_fn(
        n: usize,
        mut law: impl FnMut(usize, usize) -> Option<Vec<R>>,
    ) -> Result<Self, ChainError> {
        let mut values = vec![R::ZERO; n * n * n];
        let mut defined = vec![false; n * n];
        for i in 0..n {
            for l in 0..n {
                if let Some(row) = law(i, l) {
                    if row.len() != n {
                        return Err(ChainError::Shape { expected: n, got: row.len() });
                    }
                    let s: R = row.iter().copied().sum();
                    if (s - R::ONE).abs() > R::PROB_TOL {
                        return Err(ChainError::RowNotStochastic { row: i * n + l, sum: s.as_f64() });
                    }
                    let base = (i * n + l) * n;
                    values[base..base + n].copy_from_slice(&row);
                    defined[i * n + l] = true;
                }
            }
        }
        Ok(Self { n, values, defined })
    }

    /// Law over the middle state, `None` if undefined.
    pub fn law(&self, i: usize, l: usize) -> Option<&[R]> {
        let n = self.n;
        self.defined[i * n + l].then(|| &self.values[(i * n + l) * n..(i * n + l + 1) * n])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> Option<R> {
        self.law(i, l).map(|row| row[j])
    }
}

/// Three-point transitions for interior epochs `t = 1..=T-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreePointKernel<R: Real> {
    n: usize,
    horizon: usize,
    slices: Vec<Arc<KernelSlice<R>>>,
}

impl<R: Real> ThreePointKernel<R> {
    /// `slices[t - 1]` holds epoch `t`.
    pub fn new(
        n: usize,
        horizon: usize,
        slices: Vec<Arc<KernelSlice<R>>>,
    ) -> Result<Self, ChainError> {
        if horizon < 2 {
            return Err(ChainError::HorizonTooShort { got: horizon, min: 2 });
        }
        if slices.len() != horizon - 1 {
            return Err(ChainError::Shape { expected: horizon - 1, got: slices.len() });
        }
        if let Some(s) = slices.iter().find(|s| s.n != n) {
            return Err(ChainError::Shape { expected: n, got: s.n });
        }
        Ok(Self { n, horizon, slices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Slice for interior epoch `t` in `1..=T-1`.
    pub fn slice(&self, t: usize) -> &KernelSlice<R> {
        assert!(t >= 1 && t < self.horizon, "epoch {t} is not interior");
        &self.slices[t - 1]
    }

    pub fn get(&self, t: usize, i: usize, j: usize, l: usize) -> Option<R> {
        self.slice(t).get(i, j, l)
    }
}

/// Three-point transitions of the reciprocal chain induced by a base chain:
/// `Q_{i,j,l} = A_{ij} A_{jl} / (A^2)_{il}`, identical at every interior epoch.
pub fn three_point_from_base<R: Real>(
    base: &TransitionMatrix<R>,
    horizon: usize,
) -> Result<ThreePointKernel<R>, ChainError> {
    if horizon < 2 {
        return Err(ChainError::HorizonTooShort { got: horizon, min: 2 });
    }
    let n = base.n();
    let slice = KernelSlice::from_fn(n, |i, l| {
        let weights: Vec<R> = (0..n).map(|j| base.get(i, j) * base.get(j, l)).collect();
        let denom: R = weights.iter().copied().sum();
        (denom > R::ZERO).then(|| weights.into_iter().map(|w| w / denom).collect())
    })?;
    let shared = Arc::new(slice);
    ThreePointKernel::new(n, horizon, vec![shared; horizon - 1])
}
