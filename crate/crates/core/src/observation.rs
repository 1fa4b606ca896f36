//! Clutter observation models: likelihood evaluation for the filters and
//! forward generation for simulation.
//!
//! A detection is a 2-D point. Target detections are the target cell center
//! plus isotropic Gaussian noise; clutter detections are the center of a cell
//! drawn from the clutter law plus the same noise. With `sigma2 = 0` the
//! "density" is the exact-match indicator, so every likelihood becomes a
//! probability over the finite alphabet of cell centers.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::draw_index;
use crate::filter::Evidence;
use crate::gridworld::GridSpec;
use crate::scalar::Real;

pub type Point<R> = [R; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservationError {
    #[error("noise variance {0} must be nonnegative")]
    NegativeVariance(f64),
    #[error("{name} = {value} must lie in [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("association priors sum to {0}, not 1")]
    PriorsNotNormalized(f64),
    #[error("clutter law has {got} entries for {expected} states or is not normalized")]
    Clutter { expected: usize, got: usize },
    #[error("epoch {t} carries {got} detections, the model expects {expected}")]
    Arity { t: usize, expected: usize, got: usize },
    #[error("at least one detection per epoch is required")]
    NoSlots,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<R: Real> {
    pub sigma2: R,
}

impl<R: Real> NoiseModel<R> {
    pub fn new(sigma2: R) -> Result<Self, ObservationError> {
        if !(sigma2 >= R::ZERO) {
            return Err(ObservationError::NegativeVariance(sigma2.as_f64()));
        }
        Ok(Self { sigma2 })
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma2 == R::ZERO
    }

    /// Density of `y` for a detection centered at `center`.
    #[inline]
    pub fn density(&self, y: &Point<R>, center: &Point<R>) -> R {
        let dx = y[0] - center[0];
        let dy = y[1] - center[1];
        if self.is_noiseless() {
            return if dx == R::ZERO && dy == R::ZERO { R::ONE } else { R::ZERO };
        }
        let two = R::of(2.0);
        (-(dx * dx + dy * dy) / (two * self.sigma2)).exp() / (two * R::PI() * self.sigma2)
    }

    fn perturb<G: Rng + ?Sized>(&self, center: Point<R>, rng: &mut G) -> Point<R> {
        if self.is_noiseless() {
            return center;
        }
        let normal = Normal::new(0.0, self.sigma2.as_f64().sqrt()).expect("finite variance");
        [
            center[0] + R::of(normal.sample(rng)),
            center[1] + R::of(normal.sample(rng)),
        ]
    }
}

/// Temporally independent law of the clutter source cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterModel<R: Real> {
    weights: Vec<R>,
}

impl<R: Real> ClutterModel<R> {
    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![R::ONE / R::of(n as f64); n] }
    }

    pub fn new(weights: Vec<R>) -> Result<Self, ObservationError> {
        let n = weights.len();
        if crate::chain::check_distribution(&weights, n).is_err() {
            return Err(ObservationError::Clutter { expected: n, got: n });
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }
}

/// One detection per epoch; it is clutter with probability `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleObsModel<R: Real> {
    pub epsilon: R,
    pub noise: NoiseModel<R>,
    pub clutter: ClutterModel<R>,
}

impl<R: Real> SingleObsModel<R> {
    pub fn new(
        epsilon: R,
        noise: NoiseModel<R>,
        clutter: ClutterModel<R>,
    ) -> Result<Self, ObservationError> {
        check_probability("epsilon", epsilon)?;
        Ok(Self { epsilon, noise, clutter })
    }

    /// Uniform clutter over `n` states.
    pub fn uniform(epsilon: R, sigma2: R, n: usize) -> Result<Self, ObservationError> {
        Self::new(epsilon, NoiseModel::new(sigma2)?, ClutterModel::uniform(n))
    }
}

/// `M` detections per epoch with at most one from the target. Slot `l` holds
/// the target with prior `lambdas[l]`; no slot does with prior `lambda0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiObsModel<R: Real> {
    pub lambda0: R,
    pub lambdas: Vec<R>,
    pub noise: NoiseModel<R>,
    pub clutter: ClutterModel<R>,
}

impl<R: Real> MultiObsModel<R> {
    pub fn new(
        lambda0: R,
        lambdas: Vec<R>,
        noise: NoiseModel<R>,
        clutter: ClutterModel<R>,
    ) -> Result<Self, ObservationError> {
        if lambdas.is_empty() {
            return Err(ObservationError::NoSlots);
        }
        check_probability("lambda0", lambda0)?;
        for &l in &lambdas {
            check_probability("lambda", l)?;
        }
        let total = lambda0 + lambdas.iter().copied().sum::<R>();
        if (total - R::ONE).abs() > R::PROB_TOL {
            return Err(ObservationError::PriorsNotNormalized(total.as_f64()));
        }
        Ok(Self { lambda0, lambdas, noise, clutter })
    }

    /// Exchangeable slots: `lambda_l = (1 - lambda0) / M`, uniform clutter.
    pub fn exchangeable(m: usize, lambda0: R, sigma2: R, n: usize) -> Result<Self, ObservationError> {
        if m == 0 {
            return Err(ObservationError::NoSlots);
        }
        let share = (R::ONE - lambda0) / R::of(m as f64);
        Self::new(lambda0, vec![share; m], NoiseModel::new(sigma2)?, ClutterModel::uniform(n))
    }

    pub fn m(&self) -> usize {
        self.lambdas.len()
    }
}

fn check_probability<R: Real>(name: &'static str, value: R) -> Result<(), ObservationError> {
    if !(value >= R::ZERO && value <= R::ONE) {
        return Err(ObservationError::Probability { name, value: value.as_f64() });
    }
    Ok(())
}

/// Detections recorded at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "R: Real + Serialize", deserialize = "R: Real + Deserialize<'de>"))]
pub struct ObservationRecord<R: Real> {
    pub t: usize,
    pub points: Vec<Point<R>>,
}

/// `c_i = Pr{y | X = i}` for a target detection.
pub fn point_likelihood<R: Real>(y: &Point<R>, i: usize, noise: &NoiseModel<R>, grid: &GridSpec) -> R {
    noise.density(y, &grid.center(i))
}

/// `Σ_j c_j Pr{U = j}`: likelihood of `y` as a clutter detection.
pub fn clutter_point_likelihood<R: Real>(
    y: &Point<R>,
    noise: &NoiseModel<R>,
    clutter: &ClutterModel<R>,
    grid: &GridSpec,
) -> R {
    clutter
        .weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > R::ZERO)
        .map(|(j, &w)| w * point_likelihood(y, j, noise, grid))
        .sum()
}

/// `(1 - ε) c_i + ε Σ_j c_j Pr{U = j}`.
pub fn single_obs_likelihood<R: Real>(
    y: &Point<R>,
    i: usize,
    model: &SingleObsModel<R>,
    grid: &GridSpec,
) -> R {
    let eps = model.epsilon;
    (R::ONE - eps) * point_likelihood(y, i, &model.noise, grid)
        + eps * clutter_point_likelihood(y, &model.noise, &model.clutter, grid)
}

/// Sum over the association events: target in slot `l` with every other slot
/// clutter, plus every slot clutter.
pub fn multi_obs_likelihood<R: Real>(
    ys: &[Point<R>],
    i: usize,
    model: &MultiObsModel<R>,
    grid: &GridSpec,
) -> Result<R, ObservationError> {
    if ys.len() != model.m() {
        return Err(ObservationError::Arity { t: 0, expected: model.m(), got: ys.len() });
    }
    let clutter: Vec<R> = ys
        .iter()
        .map(|y| clutter_point_likelihood(y, &model.noise, &model.clutter, grid))
        .collect();
    let target: Vec<R> = ys.iter().map(|y| point_likelihood(y, i, &model.noise, grid)).collect();
    let excluded = leave_one_out_products(&clutter);
    let all: R = clutter.iter().copied().product();
    Ok(combine_associations(model, &target, &excluded, all))
}

/// `out[l] = Π_{m != l} xs[m]` from prefix and suffix products.
fn leave_one_out_products<R: Real>(xs: &[R]) -> Vec<R> {
    let m = xs.len();
    let mut out = vec![R::ONE; m];
    let mut prefix = R::ONE;
    for l in 0..m {
        out[l] = prefix;
        prefix = prefix * xs[l];
    }
    let mut suffix = R::ONE;
    for l in (0..m).rev() {
        out[l] = out[l] * suffix;
        suffix = suffix * xs[l];
    }
    out
}

#[inline]
fn combine_associations<R: Real>(model: &MultiObsModel<R>, target: &[R], excluded: &[R], all: R) -> R {
    let mut acc = model.lambda0 * all;
    for ((&lam, &c), &rest) in model.lambdas.iter().zip(target).zip(excluded) {
        acc = acc + lam * c * rest;
    }
    acc
}

/// `C_i` for every state at one epoch, plus the number of point-density and
/// accumulation operations spent (at most `3 M N`).
pub fn multi_obs_likelihood_table<R: Real>(
    ys: &[Point<R>],
    model: &MultiObsModel<R>,
    grid: &GridSpec,
) -> Result<(Vec<R>, u64), ObservationError> {
    let n = grid.n();
    let m = model.m();
    if ys.len() != m {
        return Err(ObservationError::Arity { t: 0, expected: m, got: ys.len() });
    }
    let mut out = vec![R::ZERO; n];
    let ops = fill_multi(ys, model, grid, &mut out);
    Ok((out, ops))
}

fn fill_multi<R: Real>(ys: &[Point<R>], model: &MultiObsModel<R>, grid: &GridSpec, out: &mut [R]) -> u64 {
    let n = grid.n();
    let m = ys.len();
    let mut ops = 0u64;
    // dens[l * n + i] = c^l_i
    let mut dens = vec![R::ZERO; m * n];
    for (l, y) in ys.iter().enumerate() {
        for i in 0..n {
            dens[l * n + i] = point_likelihood(y, i, &model.noise, grid);
        }
    }
    ops += (m * n) as u64;
    let clutter: Vec<R> = (0..m)
        .map(|l| {
            dens[l * n..(l + 1) * n]
                .iter()
                .zip(model.clutter.weights())
                .map(|(&c, &w)| c * w)
                .sum()
        })
        .collect();
    ops += (m * n) as u64;
    let excluded = leave_one_out_products(&clutter);
    let all: R = clutter.iter().copied().product();
    let mut target = vec![R::ZERO; m];
    for (i, slot) in out.iter_mut().enumerate() {
        for l in 0..m {
            target[l] = dens[l * n + i];
        }
        *slot = combine_associations(model, &target, &excluded, all);
    }
    ops += (m * n) as u64;
    ops
}

fn noisy_center<R: Real, G: Rng + ?Sized>(
    state: usize,
    noise: &NoiseModel<R>,
    grid: &GridSpec,
    rng: &mut G,
) -> Point<R> {
    noise.perturb(grid.center(state), rng)
}

/// One detection: the target with probability `1 - ε`, otherwise clutter.
pub fn generate_single<R: Real, G: Rng + ?Sized>(
    t: usize,
    state: usize,
    model: &SingleObsModel<R>,
    grid: &GridSpec,
    rng: &mut G,
) -> ObservationRecord<R> {
    let is_clutter = rng.random::<f64>() < model.epsilon.as_f64();
    let source = if is_clutter { draw_index(model.clutter.weights(), rng) } else { state };
    ObservationRecord { t, points: vec![noisy_center(source, &model.noise, grid, rng)] }
}

/// `M` detections: draw the association, put the noisy target in the chosen
/// slot (if any) and independent clutter everywhere else.
pub fn generate_multi<R: Real, G: Rng + ?Sized>(
    t: usize,
    state: usize,
    model: &MultiObsModel<R>,
    grid: &GridSpec,
    rng: &mut G,
) -> ObservationRecord<R> {
    let mut priors = Vec::with_capacity(model.m() + 1);
    priors.push(model.lambda0);
    priors.extend_from_slice(&model.lambdas);
    let association = draw_index(&priors, rng);
    let points = (0..model.m())
        .map(|slot| {
            let source = if association == slot + 1 {
                state
            } else {
                draw_index(model.clutter.weights(), rng)
            };
            noisy_center(source, &model.noise, grid, rng)
        })
        .collect();
    ObservationRecord { t, points }
}

/// Observation regime used by trackers, detectors and the harness.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationModel<R: Real> {
    /// Every detection is the target (`C_i = c_i`).
    ClutterFree(NoiseModel<R>),
    Single(SingleObsModel<R>),
    Multi(MultiObsModel<R>),
}

impl<R: Real> ObservationModel<R> {
    pub fn noise(&self) -> &NoiseModel<R> {
        match self {
            ObservationModel::ClutterFree(noise) => noise,
            ObservationModel::Single(m) => &m.noise,
            ObservationModel::Multi(m) => &m.noise,
        }
    }

    pub fn detections_per_epoch(&self) -> usize {
        match self {
            ObservationModel::Multi(m) => m.m(),
            _ => 1,
        }
    }

    /// The no-target hypothesis of the same regime (`ε = 1` or `λ₀ = 1`).
    /// The clutter-free regime has no clutter law of its own; its null is
    /// uniform clutter over `n` states.
    pub fn null(&self, n: usize) -> Self {
        match self {
            ObservationModel::ClutterFree(noise) => ObservationModel::Single(SingleObsModel {
                epsilon: R::ONE,
                noise: *noise,
                clutter: ClutterModel::uniform(n),
            }),
            ObservationModel::Single(m) => ObservationModel::Single(SingleObsModel {
                epsilon: R::ONE,
                ..m.clone()
            }),
            ObservationModel::Multi(m) => ObservationModel::Multi(MultiObsModel {
                lambda0: R::ONE,
                lambdas: vec![R::ZERO; m.m()],
                ..m.clone()
            }),
        }
    }

    pub fn generate<G: Rng + ?Sized>(
        &self,
        t: usize,
        state: usize,
        grid: &GridSpec,
        rng: &mut G,
    ) -> ObservationRecord<R> {
        match self {
            ObservationModel::ClutterFree(noise) => ObservationRecord {
                t,
                points: vec![noisy_center(state, noise, grid, rng)],
            },
            ObservationModel::Single(m) => generate_single(t, state, m, grid, rng),
            ObservationModel::Multi(m) => generate_multi(t, state, m, grid, rng),
        }
    }

    /// Likelihood tables over a recorded sequence.
    pub fn evidence<'a>(
        &'a self,
        grid: &'a GridSpec,
        records: &'a [ObservationRecord<R>],
    ) -> Result<SequenceEvidence<'a, R>, ObservationError> {
        let expected = self.detections_per_epoch();
        for r in records {
            if r.points.len() != expected {
                return Err(ObservationError::Arity { t: r.t, expected, got: r.points.len() });
            }
        }
        Ok(SequenceEvidence { model: self, grid, records })
    }
}

/// Per-epoch likelihood tables `C_i(t)` for a recorded sequence.
#[derive(Debug, Clone, Copy)]
pub struct SequenceEvidence<'a, R: Real> {
    model: &'a ObservationModel<R>,
    grid: &'a GridSpec,
    records: &'a [ObservationRecord<R>],
}

impl<R: Real> Evidence<R> for SequenceEvidence<'_, R> {
    fn n_states(&self) -> usize {
        self.grid.n()
    }

    fn epochs(&self) -> usize {
        self.records.len()
    }

    fn fill(&self, t: usize, out: &mut [R]) {
        let grid = self.grid;
        let points = &self.records[t].points;
        match self.model {
            ObservationModel::ClutterFree(noise) => {
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = point_likelihood(&points[0], i, noise, grid);
                }
            }
            ObservationModel::Single(m) => {
                let y = &points[0];
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = point_likelihood(y, i, &m.noise, grid);
                }
                let clutter: R = out
                    .iter()
                    .zip(m.clutter.weights())
                    .map(|(&c, &w)| c * w)
                    .sum();
                let eps = m.epsilon;
                for slot in out.iter_mut() {
                    *slot = (R::ONE - eps) * *slot + eps * clutter;
                }
            }
            ObservationModel::Multi(m) => {
                fill_multi(points, m, grid, out);
            }
        }
    }
}
