use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig, Metric, SweepAxis, SweepSpec};
use crate::chain::sample_rc_path;
use crate::detect::{
    auc, auc_standard_error, null_loglik, rates_at, roc_from_scores, DetectError, DetectorKind,
    RocCurve, TrackerModels,
};
use crate::filter::{tabulate, FilterError};
use crate::gridworld::GridSpec;
use crate::observation::{ObservationModel, ObservationRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model construction failed: {0}")]
    Model(#[from] DetectError),
    #[error("trial {trial} ({hypothesis}): {source}")]
    Trial {
        trial: usize,
        hypothesis: &'static str,
        #[source]
        source: DetectError,
    },
}

const TARGET_STREAM: u64 = 0;
const NULL_STREAM: u64 = 1;

/// Random stream of one trial: depends only on `(seed, trial, stream)`, so
/// trial `i` sees the same data whatever the trial count or worker count.
pub fn trial_rng(seed: u64, trial: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * trial as u64 + stream);
    rng
}

/// RC path `X_0..X_T` and its observations.
pub fn simulate_target(
    models: &TrackerModels<f64>,
    obs: &ObservationModel<f64>,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<ObservationRecord<f64>>) {
    let path = sample_rc_path(&models.bridges, &models.endpoints, rng);
    let records = path
        .iter()
        .enumerate()
        .map(|(t, &x)| obs.generate(t, x, &models.grid, rng))
        .collect();
    (path, records)
}

/// Pure-clutter sequence of the same shape as a target sequence.
pub fn simulate_null(
    null_obs: &ObservationModel<f64>,
    horizon: usize,
    grid: &GridSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<ObservationRecord<f64>> {
    (0..=horizon).map(|t| null_obs.generate(t, 0, grid, rng)).collect()
}

/// Log-LR of each detector. An observation sequence that is impossible
/// under a detector's target model scores `-∞`.
fn score_sequence(
    records: &[ObservationRecord<f64>],
    obs: &ObservationModel<f64>,
    models: &TrackerModels<f64>,
    detectors: &[DetectorKind],
) -> Result<Vec<f64>, DetectError> {
    let table = tabulate(&obs.evidence(&models.grid, records)?);
    let null = null_loglik(records, obs, &models.grid)?;
    detectors
        .iter()
        .map(|&kind| match models.run_filter(kind, &table) {
            Ok(out) => Ok(out.loglik - null),
            Err(FilterError::ZeroEvidence { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e.into()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorResult {
    pub kind: DetectorKind,
    pub auc: f64,
    pub auc_se: f64,
    /// Minimum-error operating point (`τ = 0`).
    pub p_fa_at_zero: f64,
    pub p_d_at_zero: f64,
    pub roc: RocCurve,
    #[serde(skip)]
    pub h1_scores: Vec<f64>,
    #[serde(skip)]
    pub h0_scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `value / se`, infinite when the standard error vanishes.
    pub fn z(&self) -> f64 {
        if self.se == 0.0 {
            if self.value == 0.0 {
                0.0
            } else {
                self.value.signum() * f64::INFINITY
            }
        } else {
            self.value / self.se
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub detectors: Vec<DetectorResult>,
    /// `AUC_HRC - AUC_HMC`, standard errors combined in quadrature.
    pub delta_auc: Option<Estimate>,
}

impl DetectionMetrics {
    pub fn get(&self, kind: DetectorKind) -> Option<&DetectorResult> {
        self.detectors.iter().find(|d| d.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerResult {
    pub kind: DetectorKind,
    /// `RMSE_CM(t)` for `t = 0..=T`.
    pub rmse_cm: Vec<f64>,
    pub rmse_aps: f64,
    /// Standard error of `rmse_aps` over trials.
    pub rmse_aps_se: f64,
    #[serde(skip)]
    pub aps_per_trial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteringMetrics {
    pub trackers: Vec<TrackerResult>,
    /// Paired `RMSE_APS(HMC) - RMSE_APS(HRC)`.
    pub aps_benefit: Option<Estimate>,
}

impl FilteringMetrics {
    pub fn get(&self, kind: DetectorKind) -> Option<&TrackerResult> {
        self.trackers.iter().find(|d| d.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub beta: f64,
    pub alpha: Option<f64>,
    pub detection: Option<DetectionMetrics>,
    pub filtering: Option<FilteringMetrics>,
    pub runtime_secs: f64,
}

/// Mean and standard error of the paired differences `a[r] - b[r]`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Estimate {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_and_se(&d)
}

fn mean_and_se(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate { value: mean, se: (var / n).sqrt() }
}

fn detection(
    cfg: &ExperimentConfig,
    models: &TrackerModels<f64>,
    obs: &ObservationModel<f64>,
) -> Result<DetectionMetrics, HarnessError> {
    let half = cfg.trials / 2;
    let null_obs = obs.null(models.grid.n());
    let scored: Vec<(Vec<f64>, Vec<f64>)> = (0..half)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial, TARGET_STREAM);
            let (_, records) = simulate_target(models, obs, &mut rng);
            let h1 = score_sequence(&records, obs, models, &cfg.detectors)
                .map_err(|source| HarnessError::Trial { trial, hypothesis: "target", source })?;
            let mut rng = trial_rng(cfg.seed, trial, NULL_STREAM);
            let records = simulate_null(&null_obs, models.horizon, &models.grid, &mut rng);
            let h0 = score_sequence(&records, obs, models, &cfg.detectors)
                .map_err(|source| HarnessError::Trial { trial, hypothesis: "null", source })?;
            Ok((h1, h0))
        })
        .collect::<Result<_, HarnessError>>()?;

    let detectors: Vec<DetectorResult> = cfg
        .detectors
        .iter()
        .enumerate()
        .map(|(d, &kind)| {
            let h1: Vec<f64> = scored.iter().map(|(s, _)| s[d]).collect();
            let h0: Vec<f64> = scored.iter().map(|(_, s)| s[d]).collect();
            let roc = roc_from_scores(&h1, &h0);
            let area = auc(&roc);
            let (p_fa_at_zero, p_d_at_zero) = rates_at(&h1, &h0, 0.0);
            DetectorResult {
                kind,
                auc: area,
                auc_se: auc_standard_error(area, h1.len(), h0.len()),
                p_fa_at_zero,
                p_d_at_zero,
                roc,
                h1_scores: h1,
                h0_scores: h0,
            }
        })
        .collect();
    let pick = |k: DetectorKind| detectors.iter().find(|d| d.kind == k);
    let delta_auc = match (pick(DetectorKind::Hrc), pick(DetectorKind::Hmc)) {
        (Some(r), Some(m)) => Some(Estimate {
            value: r.auc - m.auc,
            se: (r.auc_se.powi(2) + m.auc_se.powi(2)).sqrt(),
        }),
        _ => None,
    };
    Ok(DetectionMetrics { detectors, delta_auc })
}

fn filtering(
    cfg: &ExperimentConfig,
    models: &TrackerModels<f64>,
    obs: &ObservationModel<f64>,
) -> Result<FilteringMetrics, HarnessError> {
    let horizon = models.horizon;
    let grid = &models.grid;
    // errs[trial][tracker][t] = squared Euclidean error of the conditional mean.
    let errs: Vec<Vec<Vec<f64>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial, TARGET_STREAM);
            let (path, records) = simulate_target(models, obs, &mut rng);
            let wrap = |source: DetectError| HarnessError::Trial { trial, hypothesis: "target", source };
            let evidence = obs.evidence(grid, &records).map_err(|e| wrap(e.into()))?;
            let table = tabulate(&evidence);
            cfg.detectors
                .iter()
                .map(|&kind| {
                    let out = models.run_filter(kind, &table).map_err(|e| wrap(e.into()))?;
                    Ok(out
                        .conditional_means(grid)
                        .iter()
                        .zip(&path)
                        .map(|(m, &x)| {
                            let c = grid.center::<f64>(x);
                            (m[0] - c[0]).powi(2) + (m[1] - c[1]).powi(2)
                        })
                        .collect())
                })
                .collect()
        })
        .collect::<Result<_, HarnessError>>()?;

    let r = cfg.trials as f64;
    let trackers: Vec<TrackerResult> = cfg
        .detectors
        .iter()
        .enumerate()
        .map(|(d, &kind)| {
            let rmse_cm = (0..=horizon)
                .map(|t| (errs.iter().map(|e| e[d][t]).sum::<f64>() / r).sqrt())
                .collect();
            let aps: Vec<f64> = errs
                .iter()
                .map(|e| (e[d][1..=horizon].iter().sum::<f64>() / horizon as f64).sqrt())
                .collect();
            let est = mean_and_se(&aps);
            TrackerResult { kind, rmse_cm, rmse_aps: est.value, rmse_aps_se: est.se, aps_per_trial: aps }
        })
        .collect();
    let pick = |k: DetectorKind| trackers.iter().find(|d| d.kind == k);
    let aps_benefit = match (pick(DetectorKind::Hrc), pick(DetectorKind::Hmc)) {
        (Some(r), Some(m)) => Some(paired_difference(&m.aps_per_trial, &r.aps_per_trial)),
        _ => None,
    };
    Ok(FilteringMetrics { trackers, aps_benefit })
}

fn run_with(cfg: &ExperimentConfig, metrics: &[Metric]) -> Result<MetricsReport, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let models = cfg.tracker_models::<f64>()?;
    let obs = cfg.observation_model::<f64>()?;
    let detection = if metrics.contains(&Metric::Detection) {
        Some(detection(cfg, &models, &obs)?)
    } else {
        None
    };
    let filtering = if metrics.contains(&Metric::Filtering) {
        Some(filtering(cfg, &models, &obs)?)
    } else {
        None
    };
    Ok(MetricsReport {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        trials: cfg.trials,
        beta: models.beta(),
        alpha: cfg.alpha(),
        detection,
        filtering,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// `R/2` target-present and `R/2` pure-clutter sequences scored by every
/// configured detector.
pub fn run_detection_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    run_with(cfg, &[Metric::Detection])
}

/// `R` target-present sequences tracked by every configured filter.
pub fn run_filtering_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    run_with(cfg, &[Metric::Filtering])
}

/// Every metric family the config asks for.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    run_with(cfg, &cfg.metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: Vec<(SweepAxis, f64)>,
    pub beta: f64,
    pub report: MetricsReport,
}

/// Run every point of the config's sweep (or the config itself if it has
/// none), in order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, HarnessError> {
    cfg.validate()?;
    cfg.points()?
        .into_iter()
        .map(|p| {
            let report = run_experiment(&p.config)?;
            Ok(SweepRow { key: p.key, beta: report.beta, report })
        })
        .collect()
}

/// Sweep one axis over `values`, replacing any sweep in `cfg`.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>, HarnessError> {
    let mut cfg = cfg.clone();
    cfg.sweep = vec![SweepSpec { axis, values: values.to_vec() }];
    run_sweep(&cfg)
}
