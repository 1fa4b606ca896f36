use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detect::{DetectError, DetectorKind, TrackerModels};
use crate::gridworld::{EndpointSpec, GridSpec};
use crate::observation::{ClutterModel, MultiObsModel, NoiseModel, ObservationModel, SingleObsModel};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Invalid { field: field.into(), message: message.to_string() }
    }

    /// Prefix the field path, e.g. to locate an error inside a sweep point.
    fn within(self, prefix: &str) -> Self {
        match self {
            ConfigError::Invalid { field, message } => {
                ConfigError::Invalid { field: format!("{prefix}{field}"), message }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationSpec {
    ClutterFree,
    Single {
        epsilon: f64,
    },
    Multi {
        m: usize,
        lambda0: f64,
        /// Per-slot priors; defaults to `(1 - lambda0) / m` each.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambdas: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Detection,
    Filtering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "horizon", alias = "T")]
    Horizon,
    #[serde(rename = "p_stay", alias = "p_R")]
    PStay,
    #[serde(rename = "m", alias = "M")]
    M,
    #[serde(rename = "epsilon")]
    Epsilon,
    #[serde(rename = "sigma2")]
    Sigma2,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Horizon => "horizon",
            SweepAxis::PStay => "p_stay",
            SweepAxis::M => "m",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Sigma2 => "sigma2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

fn default_grid() -> GridSpec {
    GridSpec { width: 8, height: 8 }
}

fn default_detectors() -> Vec<DetectorKind> {
    DetectorKind::ALL.to_vec()
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Detection]
}

/// One Monte Carlo study. Sweeps, if present, are expanded as the cartesian
/// product of their axes, first axis outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    pub p_stay: f64,
    pub horizon: usize,
    pub endpoints: EndpointSpec,
    pub observation: ObservationSpec,
    pub sigma2: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorKind>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepSpec>,
}

/// One expanded sweep point: axis values and the resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub key: Vec<(SweepAxis, f64)>,
    pub config: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical compact JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn has_metric(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }

    /// Check every field of this configuration and of every sweep point.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_point()?;
        for (a, s) in self.sweep.iter().enumerate() {
            if s.values.is_empty() {
                return Err(ConfigError::invalid(format!("sweep[{a}].values"), "must not be empty"));
            }
            if self.sweep[..a].iter().any(|o| o.axis == s.axis) {
                return Err(ConfigError::invalid(format!("sweep[{a}].axis"), "axis repeated"));
            }
            for (v, &value) in s.values.iter().enumerate() {
                let mut point = self.clone();
                point.sweep.clear();
                let prefix = format!("sweep[{a}].values[{v}] -> ");
                point.apply(s.axis, value).map_err(|e| e.within(&prefix))?;
                point.validate_point().map_err(|e| e.within(&prefix))?;
            }
        }
        Ok(())
    }

    fn validate_point(&self) -> Result<(), ConfigError> {
        let grid = GridSpec::new(self.grid.width, self.grid.height)
            .map_err(|e| ConfigError::invalid("grid", e))?;
        if !(self.p_stay > 0.0 && self.p_stay < 1.0) {
            return Err(ConfigError::invalid("p_stay", format!("{} is not in (0, 1)", self.p_stay)));
        }
        if self.horizon < 2 {
            return Err(ConfigError::invalid("horizon", format!("{} is below 2", self.horizon)));
        }
        if let EndpointSpec::Mixture { alpha } = self.endpoints {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(ConfigError::invalid("endpoints.alpha", format!("{alpha} is not in [0, 1]")));
            }
        }
        let pi = self
            .endpoints
            .build::<f64>(&grid)
            .map_err(|e| ConfigError::invalid("endpoints", e))?;
        let base = crate::gridworld::build_random_walk::<f64>(&grid, self.p_stay)
            .map_err(|e| ConfigError::invalid("p_stay", e))?;
        pi.check_feasible(&base, self.horizon)
            .map_err(|e| ConfigError::invalid("endpoints", e))?;
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(ConfigError::invalid("sigma2", format!("{} is not a finite variance", self.sigma2)));
        }
        match &self.observation {
            ObservationSpec::ClutterFree => {}
            ObservationSpec::Single { epsilon } => {
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(ConfigError::invalid("observation.epsilon", format!("{epsilon} is not in [0, 1]")));
                }
            }
            ObservationSpec::Multi { m, lambda0, lambdas } => {
                if *m == 0 {
                    return Err(ConfigError::invalid("observation.m", "must be at least 1"));
                }
                if !(0.0..=1.0).contains(lambda0) {
                    return Err(ConfigError::invalid("observation.lambda0", format!("{lambda0} is not in [0, 1]")));
                }
                if let Some(l) = lambdas {
                    if l.len() != *m {
                        return Err(ConfigError::invalid(
                            "observation.lambdas",
                            format!("has {} entries for m = {m}", l.len()),
                        ));
                    }
                }
            }
        }
        self.observation_model::<f64>()?;
        if self.trials < 2 || self.trials % 2 != 0 {
            return Err(ConfigError::invalid("trials", format!("{} must be even and at least 2", self.trials)));
        }
        if self.detectors.is_empty() {
            return Err(ConfigError::invalid("detectors", "must name at least one detector"));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].contains(d) {
                return Err(ConfigError::invalid(format!("detectors[{i}]"), format!("`{d}` repeated")));
            }
        }
        if self.metrics.is_empty() {
            return Err(ConfigError::invalid("metrics", "must request at least one metric"));
        }
        Ok(())
    }

    /// Set one sweep axis.
    pub fn apply(&mut self, axis: SweepAxis, value: f64) -> Result<(), ConfigError> {
        let whole = |v: f64, field: &str| -> Result<usize, ConfigError> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(ConfigError::invalid(field, format!("{v} is not a whole number")))
            }
        };
        match axis {
            SweepAxis::Alpha => match &mut self.endpoints {
                EndpointSpec::Mixture { alpha } => *alpha = value,
                _ => return Err(ConfigError::invalid("endpoints", "alpha sweep needs mixture endpoints")),
            },
            SweepAxis::Horizon => self.horizon = whole(value, "horizon")?,
            SweepAxis::PStay => self.p_stay = value,
            SweepAxis::M => match &mut self.observation {
                ObservationSpec::Multi { m, lambdas, .. } => {
                    *m = whole(value, "observation.m")?;
                    *lambdas = None;
                }
                _ => return Err(ConfigError::invalid("observation", "m sweep needs the multi regime")),
            },
            SweepAxis::Epsilon => match &mut self.observation {
                ObservationSpec::Single { epsilon } => *epsilon = value,
                _ => return Err(ConfigError::invalid("observation", "epsilon sweep needs the single regime")),
            },
            SweepAxis::Sigma2 => self.sigma2 = value,
        }
        Ok(())
    }

    /// Expand the sweep. Point `j` runs with seed `derive_seed(seed, j)`;
    /// a config without a sweep is its own single point with its own seed.
    pub fn points(&self) -> Result<Vec<SweepPoint>, ConfigError> {
        if self.sweep.is_empty() {
            return Ok(vec![SweepPoint { key: Vec::new(), config: self.clone() }]);
        }
        let mut keys: Vec<Vec<(SweepAxis, f64)>> = vec![Vec::new()];
        for s in &self.sweep {
            keys = keys
                .into_iter()
                .flat_map(|k| {
                    s.values.iter().map(move |&v| {
                        let mut k = k.clone();
                        k.push((s.axis, v));
                        k
                    })
                })
                .collect();
        }
        keys.into_iter()
            .enumerate()
            .map(|(j, key)| {
                let mut config = self.clone();
                config.sweep.clear();
                for &(axis, v) in &key {
                    config.apply(axis, v)?;
                }
                config.seed = derive_seed(self.seed, j as u64);
                Ok(SweepPoint { key, config })
            })
            .collect()
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid
    }

    pub fn observation_model<R: Real>(&self) -> Result<ObservationModel<R>, ConfigError> {
        let n = self.grid.n();
        let noise = NoiseModel::new(R::of(self.sigma2)).map_err(|e| ConfigError::invalid("sigma2", e))?;
        Ok(match &self.observation {
            ObservationSpec::ClutterFree => ObservationModel::ClutterFree(noise),
            ObservationSpec::Single { epsilon } => ObservationModel::Single(
                SingleObsModel::new(R::of(*epsilon), noise, ClutterModel::uniform(n))
                    .map_err(|e| ConfigError::invalid("observation.epsilon", e))?,
            ),
            ObservationSpec::Multi { m, lambda0, lambdas } => {
                let lambdas = match lambdas {
                    Some(l) => l.iter().map(|&v| R::of(v)).collect(),
                    None => vec![(R::ONE - R::of(*lambda0)) / R::of(*m as f64); *m],
                };
                ObservationModel::Multi(
                    MultiObsModel::new(R::of(*lambda0), lambdas, noise, ClutterModel::uniform(n))
                        .map_err(|e| ConfigError::invalid("observation", e))?,
                )
            }
        })
    }

    pub fn tracker_models<R: Real>(&self) -> Result<TrackerModels<R>, DetectError> {
        let endpoints = self.endpoints.build::<R>(&self.grid)?;
        TrackerModels::gridworld(self.grid, self.p_stay, endpoints, self.horizon)
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.endpoints {
            EndpointSpec::Mixture { alpha } => Some(alpha),
            EndpointSpec::Crossing => Some(1.0),
            _ => None,
        }
    }
}

/// SplitMix64 finalizer of `seed + index`: decorrelated seeds for sweep points.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
