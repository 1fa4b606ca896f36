//! Rectangular cellular state space with an 8-connected random-walk base
//! process and the crossing / loitering endpoint families.
//!
//! Cell `(x, y)` uses one-based coordinates `x ∈ 1..=width`, `y ∈ 1..=height`
//! and maps to the zero-based state `(y - 1) * width + (x - 1)`. Its center
//! sits at the real point `(x, y)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, EndpointDistribution, TransitionMatrix};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid must have at least 2 cells, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("stay probability {0} must lie strictly between 0 and 1")]
    StayProbability(f64),
    #[error("mixture weight alpha = {0} must lie in [0, 1]")]
    Alpha(f64),
    #[error("crossing endpoints need a grid at least 2 wide and 2 high")]
    NoCorners,
    #[error("cell ({x}, {y}) is outside the grid")]
    OutOfBounds { x: usize, y: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(width: usize, height: usize) -> Result<Self, GridError> {
        if width * height < 2 {
            return Err(GridError::TooSmall { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn n(&self) -> usize {
        self.width * self.height
    }

    /// State index of one-based cell `(x, y)`.
    pub fn state(&self, x: usize, y: usize) -> Result<usize, GridError> {
        if x == 0 || y == 0 || x > self.width || y > self.height {
            return Err(GridError::OutOfBounds { x, y });
        }
        Ok((y - 1) * self.width + (x - 1))
    }

    /// One-based cell coordinates of a state.
    pub fn cell(&self, state: usize) -> (usize, usize) {
        (state % self.width + 1, state / self.width + 1)
    }

    pub fn center<R: Real>(&self, state: usize) -> [R; 2] {
        let (x, y) = self.cell(state);
        [R::of(x as f64), R::of(y as f64)]
    }

    /// In-bounds 8-connected neighbours, excluding the cell itself.
    pub fn neighbors(&self, state: usize) -> Vec<usize> {
        let (x, y) = self.cell(state);
        let mut out = Vec::with_capacity(8);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 1 && ny >= 1 && nx <= self.width as i64 && ny <= self.height as i64 {
                    out.push((ny as usize - 1) * self.width + nx as usize - 1);
                }
            }
        }
        out
    }

    /// Fewest 8-connected moves between two states (Chebyshev distance).
    pub fn min_steps(&self, i: usize, j: usize) -> usize {
        let (xi, yi) = self.cell(i);
        let (xj, yj) = self.cell(j);
        xi.abs_diff(xj).max(yi.abs_diff(yj))
    }

    /// Corner states in the order (1,1), (W,1), (1,H), (W,H).
    pub fn corners(&self) -> [usize; 4] {
        let (w, h) = (self.width, self.height);
        [0, w - 1, (h - 1) * w, h * w - 1]
    }
}

/// Random walk that stays put with probability `p_stay` and otherwise moves to
/// one of the in-bounds 8-neighbours uniformly.
pub fn build_random_walk<R: Real>(
    grid: &GridSpec,
    p_stay: f64,
) -> Result<TransitionMatrix<R>, GridError> {
    if !(p_stay > 0.0 && p_stay < 1.0) {
        return Err(GridError::StayProbability(p_stay));
    }
    let n = grid.n();
    let mut data = vec![R::ZERO; n * n];
    for i in 0..n {
        let nb = grid.neighbors(i);
        let share = R::of((1.0 - p_stay) / nb.len() as f64);
        data[i * n + i] = R::of(p_stay);
        for j in nb {
            data[i * n + j] = share;
        }
    }
    Ok(TransitionMatrix::from_flat(n, data)?)
}

/// Uniform over the four (corner -> diagonally opposite corner) pairs.
pub fn endpoints_crossing<R: Real>(grid: &GridSpec) -> Result<EndpointDistribution<R>, GridError> {
    if grid.width < 2 || grid.height < 2 {
        return Err(GridError::NoCorners);
    }
    let n = grid.n();
    let [c1, c2, c3, c4] = grid.corners();
    let mut data = vec![R::ZERO; n * n];
    for (a, b) in [(c1, c4), (c4, c1), (c2, c3), (c3, c2)] {
        data[a * n + b] = R::of(0.25);
    }
    Ok(EndpointDistribution::from_flat(n, data)?)
}

/// Diagonal endpoint law: start at `i` with probability `weights[i]` and return there.
pub fn endpoints_loitering<R: Real>(
    grid: &GridSpec,
    weights: &[R],
) -> Result<EndpointDistribution<R>, GridError> {
    let n = grid.n();
    crate::chain::check_distribution(weights, n)?;
    let mut data = vec![R::ZERO; n * n];
    for (i, &w) in weights.iter().enumerate() {
        data[i * n + i] = w;
    }
    Ok(EndpointDistribution::from_flat(n, data)?)
}

pub fn endpoints_uniform_loitering<R: Real>(
    grid: &GridSpec,
) -> Result<EndpointDistribution<R>, GridError> {
    let n = grid.n();
    endpoints_loitering(grid, &vec![R::ONE / R::of(n as f64); n])
}

/// `alpha * crossing + (1 - alpha) * uniform loitering`.
pub fn endpoints_mixture<R: Real>(
    grid: &GridSpec,
    alpha: f64,
) -> Result<EndpointDistribution<R>, GridError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GridError::Alpha(alpha));
    }
    let cross = endpoints_crossing::<R>(grid)?;
    let loiter = endpoints_uniform_loitering::<R>(grid)?;
    let a = R::of(alpha);
    let data = cross
        .as_flat()
        .iter()
        .zip(loiter.as_flat())
        .map(|(&c, &l)| a * c + (R::ONE - a) * l)
        .collect();
    Ok(EndpointDistribution::from_flat(grid.n(), data)?)
}

/// Endpoint-mass-weighted mean of the minimal step count, divided by `T`.
pub fn benefit_indicator<R: Real>(
    endpoints: &EndpointDistribution<R>,
    horizon: usize,
    grid: &GridSpec,
) -> R {
    let n = grid.n();
    let mut acc = R::ZERO;
    for i in 0..n {
        for j in 0..n {
            let p = endpoints.get(i, j);
            if p > R::ZERO {
                acc = acc + p * R::of(grid.min_steps(i, j) as f64);
            }
        }
    }
    let beta = acc / R::of(horizon as f64);
    // Only round-off may push a feasible law above 1.
    if beta > R::ONE && beta - R::ONE <= R::PROB_TOL {
        R::ONE
    } else {
        beta
    }
}

/// Endpoint family as written in experiment configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointSpec {
    Crossing,
    Loitering {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Mixture { alpha: f64 },
    /// Unit mass on one ordered pair of one-based cells.
    Pair { source: [usize; 2], dest: [usize; 2] },
    Explicit { pi: Vec<Vec<f64>> },
}

impl EndpointSpec {
    pub fn build<R: Real>(&self, grid: &GridSpec) -> Result<EndpointDistribution<R>, GridError> {
        match self {
            EndpointSpec::Crossing => endpoints_crossing(grid),
            EndpointSpec::Loitering { weights: None } => endpoints_uniform_loitering(grid),
            EndpointSpec::Loitering { weights: Some(w) } => {
                let w: Vec<R> = w.iter().map(|&v| R::of(v)).collect();
                endpoints_loitering(grid, &w)
            }
            EndpointSpec::Mixture { alpha } => endpoints_mixture(grid, *alpha),
            EndpointSpec::Pair { source, dest } => {
                let s = grid.state(source[0], source[1])?;
                let d = grid.state(dest[0], dest[1])?;
                Ok(EndpointDistribution::point_mass(grid.n(), s, d)?)
            }
            EndpointSpec::Explicit { pi } => {
                let rows = pi.iter().map(|r| r.iter().map(|&v| R::of(v)).collect()).collect();
                Ok(EndpointDistribution::from_rows(rows)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;

    use super::*;

    fn grid8() -> GridSpec {
        GridSpec::new(8, 8).unwrap()
    }

    #[test]
    fn index_map_is_a_bijection() {
        let g = GridSpec::new(5, 3).unwrap();
        let mut seen = vec![false; g.n()];
        for y in 1..=3 {
            for x in 1..=5 {
                let s = g.state(x, y).unwrap();
                assert!(!seen[s]);
                seen[s] = true;
                assert_eq!(g.cell(s), (x, y));
            }
        }
        assert!(seen.iter().all(|&b| b));
        assert!(g.state(6, 1).is_err());
    }

    #[test]
    fn random_walk_rows() {
        let g = grid8();
        let a = build_random_walk::<f64>(&g, 0.5).unwrap();
        let interior = g.state(4, 4).unwrap();
        for j in g.neighbors(interior) {
            assert_eq!(a.get(interior, j), 0.0625);
        }
        let corner = g.state(1, 1).unwrap();
        assert_eq!(g.neighbors(corner).len(), 3);
        for j in g.neighbors(corner) {
            assert!((a.get(corner, j) - 0.5 / 3.0).abs() < 1e-16);
        }
        assert_eq!(g.neighbors(g.state(1, 4).unwrap()).len(), 5);
        for i in 0..g.n() {
            let s: f64 = a.row_slice(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert_eq!(a.get(i, i), 0.5);
        }
        assert!(build_random_walk::<f64>(&g, 1.0).is_err());
        assert!(build_random_walk::<f64>(&g, 0.0).is_err());
    }

    #[test]
    fn off_diagonal_mass_shrinks_as_stay_probability_grows() {
        let g = GridSpec::new(3, 3).unwrap();
        let mut prev = f64::INFINITY;
        for p in [0.1, 0.5, 0.9, 0.99, 0.999] {
            let a = build_random_walk::<f64>(&g, p).unwrap();
            let off: f64 = (0..g.n())
                .flat_map(|i| (0..g.n()).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a.get(i, j))
                .sum();
            assert!(off < prev);
            prev = off;
        }
    }

    #[test]
    fn min_steps_matches_bfs() {
        let g = grid8();
        assert_eq!(g.min_steps(0, 0), 0);
        assert_eq!(g.min_steps(g.state(1, 1).unwrap(), g.state(8, 8).unwrap()), 7);
        assert_eq!(g.min_steps(g.state(1, 1).unwrap(), g.state(1, 5).unwrap()), 4);
        for src in 0..g.n() {
            let mut dist = vec![usize::MAX; g.n()];
            dist[src] = 0;
            let mut q = VecDeque::from([src]);
            while let Some(u) = q.pop_front() {
                for v in g.neighbors(u) {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            for dst in 0..g.n() {
                assert_eq!(g.min_steps(src, dst), dist[dst]);
            }
        }
    }

    #[test]
    fn crossing_and_loitering_laws() {
        let g = grid8();
        let c = endpoints_crossing::<f64>(&g).unwrap();
        let s11 = g.state(1, 1).unwrap();
        let s88 = g.state(8, 8).unwrap();
        assert_eq!(c.get(s11, s88), 0.25);
        assert_eq!(c.get(s88, s11), 0.25);
        assert_eq!(c.get(s11, s11), 0.0);
        assert!((c.as_flat().iter().sum::<f64>() - 1.0).abs() < 1e-15);

        let l = endpoints_uniform_loitering::<f64>(&g).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(l.get(i, j), if i == j { 1.0 / 64.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn mixture_endpoints() {
        let g = grid8();
        let s11 = g.state(1, 1).unwrap();
        let s88 = g.state(8, 8).unwrap();
        assert_eq!(endpoints_mixture::<f64>(&g, 0.0).unwrap(), endpoints_uniform_loitering(&g).unwrap());
        assert_eq!(endpoints_mixture::<f64>(&g, 1.0).unwrap(), endpoints_crossing(&g).unwrap());
        let m = endpoints_mixture::<f64>(&g, 0.5).unwrap();
        assert_eq!(m.get(s11, s88), 0.125);
        assert_eq!(m.get(g.state(4, 5).unwrap(), g.state(4, 5).unwrap()), 1.0 / 128.0);
        assert_eq!(m.get(s11, s11), 1.0 / 128.0);
        assert!(endpoints_mixture::<f64>(&g, 1.5).is_err());
    }

    #[test]
    fn benefit_indicator_matches_shortcut() {
        let g = grid8();
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for horizon in [7, 8, 12, 16, 32] {
                let pi = endpoints_mixture::<f64>(&g, alpha).unwrap();
                let beta = benefit_indicator(&pi, horizon, &g);
                assert!((beta - 7.0 * alpha / horizon as f64).abs() < 1e-12);
            }
        }
        let pi = endpoints_mixture::<f64>(&g, 1.0).unwrap();
        assert_eq!(benefit_indicator(&pi, 16, &g), 0.4375);
        let loiter = endpoints_uniform_loitering::<f64>(&g).unwrap();
        assert_eq!(benefit_indicator(&loiter, 16, &g), 0.0);
    }

    #[test]
    fn endpoint_spec_parses() {
        let spec: EndpointSpec = serde_json::from_str(r#"{"kind":"mixture","alpha":0.25}"#).unwrap();
        assert_eq!(spec, EndpointSpec::Mixture { alpha: 0.25 });
        let spec: EndpointSpec =
            serde_json::from_str(r#"{"kind":"pair","source":[1,1],"dest":[8,8]}"#).unwrap();
        let pi = spec.build::<f64>(&grid8()).unwrap();
        assert_eq!(pi.get(0, 63), 1.0);
    }
}
