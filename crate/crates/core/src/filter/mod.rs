//! Normalized forward filters for reciprocal, Markov and Schrödinger target
//! models.
//!
//! Every filter consumes per-epoch likelihood tables through [`Evidence`], so
//! one body serves the clutter-free, single- and multi-detection regimes. The
//! table for an epoch is filled once and shared by every destination.

mod markov;
mod reciprocal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::GridSpec;
use crate::observation::Point;
use crate::scalar::{self, Real};

pub use markov::{hmc_filter, hsc_filter, markov_filter};
pub use reciprocal::{clutter_embedded_hrc_step, hrc_filter, HrcFilterState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    /// The observation at epoch `t` has zero probability under the model.
    #[error("zero-likelihood evidence at epoch {t}")]
    ZeroEvidence { t: usize },
    #[error("expected {expected} observation epochs, got {got}")]
    Epochs { expected: usize, got: usize },
    #[error("model has {model} states but the evidence covers {evidence}")]
    States { model: usize, evidence: usize },
    #[error("{0}")]
    Unsupported(&'static str),
}

/// Per-epoch observation likelihoods `C_i(t) = Pr{Y_t | X_t = i}`.
pub trait Evidence<R: Real> {
    fn n_states(&self) -> usize;

    fn epochs(&self) -> usize;

    /// Write `C_i(t)` for every state into `out`.
    fn fill(&self, t: usize, out: &mut [R]);
}

/// Precomputed likelihood table, `rows[t][i] = C_i(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodTable<R: Real> {
    pub rows: Vec<Vec<R>>,
}

impl<R: Real> Evidence<R> for LikelihoodTable<R> {
    fn n_states(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn epochs(&self) -> usize {
        self.rows.len()
    }

    fn fill(&self, t: usize, out: &mut [R]) {
        out.copy_from_slice(&self.rows[t]);
    }
}

/// Materialize every epoch of an evidence source.
pub fn tabulate<R: Real, E: Evidence<R> + ?Sized>(evidence: &E) -> LikelihoodTable<R> {
    let n = evidence.n_states();
    let rows = (0..evidence.epochs())
        .map(|t| {
            let mut row = vec![R::ZERO; n];
            evidence.fill(t, &mut row);
            row
        })
        .collect();
    LikelihoodTable { rows }
}

/// Normalize in place and return the normalizer, or fail when it vanishes.
pub(crate) fn normalize<R: Real>(v: &mut [R], t: usize) -> Result<R, FilterError> {
    let h = scalar::sum(v);
    if !(h > R::ZERO) || !h.is_finite() {
        return Err(FilterError::ZeroEvidence { t });
    }
    for x in v.iter_mut() {
        *x = *x / h;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput<R: Real> {
    /// `q_i(t)` for `t = 0..=T`.
    pub marginals: Vec<Vec<R>>,
    /// HRC only: destination marginals `Σ_i q_i^k(t)` for `t = 0..=T`.
    pub destinations: Option<Vec<Vec<R>>>,
    /// Normalizers `h(t)` for `t = 0..=T`.
    pub h: Vec<R>,
    pub loglik: R,
    /// Transition multiply-adds performed by the recursion.
    pub ops: u64,
}

impl<R: Real> FilterOutput<R> {
    pub fn horizon(&self) -> usize {
        self.marginals.len() - 1
    }

    pub fn conditional_means(&self, grid: &GridSpec) -> Vec<Point<R>> {
        self.marginals.iter().map(|q| conditional_mean(q, grid)).collect()
    }

    pub fn map_states(&self) -> Vec<usize> {
        self.marginals.iter().map(|q| map_estimate(q)).collect()
    }

    pub fn report(&self, grid: &GridSpec, with_marginals: bool) -> FilterReport {
        FilterReport {
            loglik: self.loglik.as_f64(),
            h: self.h.iter().map(|h| h.as_f64()).collect(),
            conditional_means: self
                .conditional_means(grid)
                .into_iter()
                .map(|p| [p[0].as_f64(), p[1].as_f64()])
                .collect(),
            map_states: self.map_states(),
            marginals: with_marginals.then(|| {
                self.marginals
                    .iter()
                    .map(|q| q.iter().map(|x| x.as_f64()).collect())
                    .collect()
            }),
        }
    }
}

/// Serializable summary of a filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub loglik: f64,
    pub h: Vec<f64>,
    pub conditional_means: Vec<[f64; 2]>,
    pub map_states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<Vec<f64>>>,
}

/// Posterior-weighted average of cell centers.
pub fn conditional_mean<R: Real>(posterior: &[R], grid: &GridSpec) -> Point<R> {
    let mut mean = [R::ZERO; 2];
    for (i, &p) in posterior.iter().enumerate() {
        if p != R::ZERO {
            let c = grid.center::<R>(i);
            mean[0] = mean[0] + p * c[0];
            mean[1] = mean[1] + p * c[1];
        }
    }
    mean
}

/// Most probable state; ties go to the lowest index.
pub fn map_estimate<R: Real>(posterior: &[R]) -> usize {
    scalar::argmax(posterior)
}

pub(crate) fn check_shape<R: Real, E: Evidence<R> + ?Sized>(
    evidence: &E,
    n: usize,
    horizon: usize,
) -> Result<(), FilterError> {
    if evidence.n_states() != n {
        return Err(FilterError::States { model: n, evidence: evidence.n_states() });
    }
    if evidence.epochs() != horizon + 1 {
        return Err(FilterError::Epochs { expected: horizon + 1, got: evidence.epochs() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditional_mean_examples() {
        let g = GridSpec::new(8, 8).unwrap();
        let mut point = vec![0.0; 64];
        point[g.state(3, 4).unwrap()] = 1.0;
        assert_eq!(conditional_mean(&point, &g), [3.0, 4.0]);

        let uniform = vec![1.0f64 / 64.0; 64];
        let m = conditional_mean(&uniform, &g);
        assert!((m[0] - 4.5).abs() < 1e-12 && (m[1] - 4.5).abs() < 1e-12);

        let mut split = vec![0.0; 64];
        split[g.state(1, 1).unwrap()] = 0.5;
        split[g.state(8, 8).unwrap()] = 0.5;
        assert_eq!(conditional_mean(&split, &g), [4.5, 4.5]);
    }

    #[test]
    fn map_examples() {
        assert_eq!(map_estimate(&[0.0, 1.0, 0.0]), 1);
        assert_eq!(map_estimate(&[0.25f64; 4]), 0);
        assert_eq!(map_estimate(&[0.2, 0.5, 0.3]), 1);
    }

    #[test]
    fn zero_normalizer_is_an_error() {
        let mut v = vec![0.0f64; 3];
        assert_eq!(normalize(&mut v, 4), Err(FilterError::ZeroEvidence { t: 4 }));
        let mut w = vec![1.0f64, 3.0];
        assert_eq!(normalize(&mut w, 0).unwrap(), 4.0);
        assert_eq!(w, vec![0.25, 0.75]);
    }

    #[test]
    fn report_round_trips() {
        let g = GridSpec::new(2, 2).unwrap();
        let out = FilterOutput {
            marginals: vec![vec![0.25f64; 4], vec![0.0, 1.0, 0.0, 0.0]],
            destinations: None,
            h: vec![0.5, 0.25],
            loglik: (0.125f64).ln(),
            ops: 0,
        };
        let r = out.report(&g, true);
        assert_eq!(r.map_states, vec![0, 1]);
        assert_eq!(r.conditional_means[1], [2.0, 1.0]);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<FilterReport>(&json).unwrap(), r);
        assert!(!serde_json::to_string(&out.report(&g, false)).unwrap().contains("marginals"));
    }
}
