//! Likelihood-ratio track-extraction detectors and ROC/AUC evaluation.
//!
//! The null hypothesis is "every detection is clutter" (`ε = 1`, resp.
//! `λ₀ = 1`); the alternative runs the matching target filter with the rate
//! that generated the data. The statistic is the log-likelihood ratio.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    bridges_from_kernel, solve_schrodinger, three_point_from_base, BridgeFamily, ChainError,
    EndpointDistribution, SchrodingerBridge, SinkhornOptions, TransitionMatrix,
};
use crate::filter::{hmc_filter, hrc_filter, hsc_filter, Evidence, FilterError, FilterOutput};
use crate::gridworld::{benefit_indicator, build_random_walk, GridError, GridSpec};
use crate::observation::{
    clutter_point_likelihood, ClutterModel, MultiObsModel, ObservationError, ObservationModel,
    ObservationRecord, SingleObsModel,
};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Hrc,
    Hmc,
    Hsc,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Hrc, DetectorKind::Hmc, DetectorKind::Hsc];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Hrc => "hrc",
            DetectorKind::Hmc => "hmc",
            DetectorKind::Hsc => "hsc",
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything the three trackers need, built once from a base chain and an
/// endpoint law and shared read-only across trials.
#[derive(Debug, Clone)]
pub struct TrackerModels<R: Real> {
    pub grid: GridSpec,
    pub horizon: usize,
    pub base: TransitionMatrix<R>,
    pub endpoints: EndpointDistribution<R>,
    pub bridges: BridgeFamily<R>,
    pub sb: SchrodingerBridge<R>,
    /// Row marginal of the endpoint law: the Markov trackers' initial law.
    pub pi0: Vec<R>,
    /// Column marginal: the Schrödinger bridge's terminal law.
    pub pi_t: Vec<R>,
}

impl<R: Real> TrackerModels<R> {
    /// Bridges come from the three-point kernel by the backward recursion;
    /// the Schrödinger bridge matches the endpoint law's two marginals.
    pub fn new(
        grid: GridSpec,
        base: TransitionMatrix<R>,
        endpoints: EndpointDistribution<R>,
        horizon: usize,
    ) -> Result<Self, DetectError> {
        endpoints.check_feasible(&base, horizon)?;
        let kernel = three_point_from_base(&base, horizon)?;
        let bridges = bridges_from_kernel(&kernel, &endpoints)?;
        let pi0 = endpoints.initial_marginal();
        let pi_t = endpoints.terminal_marginal();
        let sb = solve_schrodinger(&base, &pi0, &pi_t, horizon, SinkhornOptions::default())?;
        Ok(Self { grid, horizon, base, endpoints, bridges, sb, pi0, pi_t })
    }

    pub fn gridworld(
        grid: GridSpec,
        p_stay: f64,
        endpoints: EndpointDistribution<R>,
        horizon: usize,
    ) -> Result<Self, DetectError> {
        let base = build_random_walk(&grid, p_stay)?;
        Self::new(grid, base, endpoints, horizon)
    }

    pub fn beta(&self) -> R {
        benefit_indicator(&self.endpoints, self.horizon, &self.grid)
    }

    pub fn run_filter<E: Evidence<R> + ?Sized>(
        &self,
        kind: DetectorKind,
        evidence: &E,
    ) -> Result<FilterOutput<R>, FilterError> {
        match kind {
            DetectorKind::Hrc => hrc_filter(evidence, &self.bridges, &self.endpoints),
            DetectorKind::Hmc => hmc_filter(evidence, &self.base, &self.pi0),
            DetectorKind::Hsc => hsc_filter(evidence, &self.sb, &self.pi0),
        }
    }
}

/// Alternative target model plus the observation regime it is tested under.
/// An alternative rate of exactly 1 is allowed and makes the test degenerate
/// (statistic identically zero).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec<R: Real> {
    pub kind: DetectorKind,
    pub alternative: ObservationModel<R>,
}

impl<R: Real> DetectorSpec<R> {
    pub fn is_degenerate(&self) -> bool {
        match &self.alternative {
            ObservationModel::ClutterFree(_) => false,
            ObservationModel::Single(m) => m.epsilon == R::ONE,
            ObservationModel::Multi(m) => m.lambda0 == R::ONE,
        }
    }
}

fn check_arity<R: Real>(records: &[ObservationRecord<R>], m: usize) -> Result<(), ObservationError> {
    match records.iter().find(|r| r.points.len() != m) {
        Some(r) => Err(ObservationError::Arity { t: r.t, expected: m, got: r.points.len() }),
        None => Ok(()),
    }
}

/// `Σ_t log Σ_j c_j(Y_t) Pr{U = j}`.
pub fn null_loglik_single<R: Real>(
    records: &[ObservationRecord<R>],
    model: &SingleObsModel<R>,
    grid: &GridSpec,
) -> Result<R, ObservationError> {
    check_arity(records, 1)?;
    Ok(records
        .iter()
        .map(|r| clutter_point_likelihood(&r.points[0], &model.noise, &model.clutter, grid).ln())
        .sum())
}

/// `Σ_t Σ_l log Σ_j c_j(y_t^l) Pr{U = j}`.
pub fn null_loglik_multi<R: Real>(
    records: &[ObservationRecord<R>],
    model: &MultiObsModel<R>,
    grid: &GridSpec,
) -> Result<R, ObservationError> {
    check_arity(records, model.m())?;
    Ok(records
        .iter()
        .flat_map(|r| r.points.iter())
        .map(|y| clutter_point_likelihood(y, &model.noise, &model.clutter, grid).ln())
        .sum())
}

/// Null log-likelihood for the regime of `obs`; the clutter-free regime is
/// tested against uniform clutter.
pub fn null_loglik<R: Real>(
    records: &[ObservationRecord<R>],
    obs: &ObservationModel<R>,
    grid: &GridSpec,
) -> Result<R, ObservationError> {
    match obs {
        ObservationModel::ClutterFree(noise) => {
            let model = SingleObsModel {
                epsilon: R::ONE,
                noise: *noise,
                clutter: ClutterModel::uniform(grid.n()),
            };
            null_loglik_single(records, &model, grid)
        }
        ObservationModel::Single(m) => null_loglik_single(records, m, grid),
        ObservationModel::Multi(m) => null_loglik_multi(records, m, grid),
    }
}

/// Alternative-filter log-likelihood minus the null log-likelihood.
pub fn log_likelihood_ratio<R: Real>(
    records: &[ObservationRecord<R>],
    spec: &DetectorSpec<R>,
    models: &TrackerModels<R>,
) -> Result<R, DetectError> {
    let evidence = spec.alternative.evidence(&models.grid, records)?;
    let alt = models.run_filter(spec.kind, &evidence)?;
    let null = null_loglik(records, &spec.alternative, &models.grid)?;
    Ok(alt.loglik - null)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_d: f64,
}

/// Empirical ROC: one point per distinct score plus the `±∞` sentinels,
/// ordered by decreasing threshold so both rates are nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_h1: usize,
    pub n_h0: usize,
}

/// Detection rule "declare a target iff score > τ". The `-∞` sentinel
/// declares a target on every trial, including scores of `-∞`.
pub fn roc_from_scores(h1_scores: &[f64], h0_scores: &[f64]) -> RocCurve {
    assert!(
        h1_scores.iter().chain(h0_scores).all(|s| !s.is_nan()),
        "ROC scores must not be NaN"
    );
    let desc = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let h1 = desc(h1_scores);
    let h0 = desc(h0_scores);
    let mut thresholds: Vec<f64> = h1.iter().chain(&h0).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let (n1, n0) = (h1.len().max(1) as f64, h0.len().max(1) as f64);
    let mut points = vec![RocPoint { threshold: f64::INFINITY, p_fa: 0.0, p_d: 0.0 }];
    let (mut i1, mut i0) = (0usize, 0usize);
    for tau in thresholds {
        while i1 < h1.len() && h1[i1] > tau {
            i1 += 1;
        }
        while i0 < h0.len() && h0[i0] > tau {
            i0 += 1;
        }
        if tau == f64::INFINITY {
            continue;
        }
        points.push(RocPoint { threshold: tau, p_fa: i0 as f64 / n0, p_d: i1 as f64 / n1 });
    }
    points.push(RocPoint { threshold: f64::NEG_INFINITY, p_fa: 1.0, p_d: 1.0 });
    RocCurve { points, n_h1: h1.len(), n_h0: h0.len() }
}

/// `(P_FA, P_D)` of the rule "score > τ".
pub fn rates_at(h1_scores: &[f64], h0_scores: &[f64], tau: f64) -> (f64, f64) {
    let frac = |v: &[f64]| v.iter().filter(|&&s| s > tau).count() as f64 / v.len().max(1) as f64;
    (frac(h0_scores), frac(h1_scores))
}

/// Trapezoidal area under the curve over the `P_FA` axis.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].p_fa - w[0].p_fa) * (w[1].p_d + w[0].p_d) / 2.0)
        .sum()
}

pub fn delta_auc(a: &RocCurve, b: &RocCurve) -> f64 {
    auc(a) - auc(b)
}

/// Hanley–McNeil standard error of an empirical AUC.
pub fn auc_standard_error(area: f64, n_h1: usize, n_h0: usize) -> f64 {
    let (n1, n0) = (n_h1 as f64, n_h0 as f64);
    let q1 = area / (2.0 - area);
    let q2 = 2.0 * area * area / (1.0 + area);
    let var = (area * (1.0 - area) + (n1 - 1.0) * (q1 - area * area) + (n0 - 1.0) * (q2 - area * area))
        / (n1 * n0);
    var.max(0.0).sqrt()
}
