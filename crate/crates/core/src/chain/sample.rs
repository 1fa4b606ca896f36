use rand::Rng;

use super::{BridgeFamily, Dynamics, EndpointDistribution};
use crate::scalar::Real;

/// Draw an index with probability proportional to `weights`.
pub fn draw_index<R: Real, G: Rng + ?Sized>(weights: &[R], rng: &mut G) -> usize {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        let w = w.as_f64();
        if w <= 0.0 {
            continue;
        }
        if u < w {
            return i;
        }
        u -= w;
        last = i;
    }
    last
}

/// Draw `(X_0, X_T)` from the endpoint law, then run the bridge pinned at
/// `X_T` forward from `X_0`. Returns `X_0, ..., X_T`.
pub fn sample_rc_path<R: Real, G: Rng + ?Sized>(
    bridges: &BridgeFamily<R>,
    endpoints: &EndpointDistribution<R>,
    rng: &mut G,
) -> Vec<usize> {
    let n = bridges.n();
    let pair = draw_index(endpoints.as_flat(), rng);
    let (source, dest) = (pair / n, pair % n);
    let mut path = Vec::with_capacity(bridges.horizon() + 1);
    path.push(source);
    for t in 0..bridges.horizon() - 1 {
        let row = bridges
            .row(t, dest, path[t])
            .expect("bridge family consistent with its endpoint law");
        path.push(draw_index(row, rng));
    }
    path.push(dest);
    path
}

/// Ancestral sampling of `X_0, ..., X_T` under (possibly time-varying) dynamics.
pub fn sample_markov_path<R: Real, D: Dynamics<R> + ?Sized, G: Rng + ?Sized>(
    dynamics: &D,
    initial: &[R],
    horizon: usize,
    rng: &mut G,
) -> Vec<usize> {
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(draw_index(initial, rng));
    for t in 0..horizon {
        let row = dynamics
            .row(t, path[t])
            .expect("sampled state has a defined transition row");
        path.push(draw_index(row, rng));
    }
    path
}
