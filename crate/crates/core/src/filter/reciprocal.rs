use super::{check_shape, normalize, Evidence, FilterError, FilterOutput};
use crate::chain::{BridgeFamily, EndpointDistribution};
use crate::gridworld::GridSpec;
use crate::observation::{point_likelihood, Point, SingleObsModel};
use crate::scalar::Real;

/// Joint posterior `q_i^k(t) = Pr{X_t = i, X_T = k | Y_0..Y_t}`.
///
/// Stored destination-major (`q[k * n + i]`) so the per-destination bridge
/// recursion walks contiguous memory. At `t = T` only the diagonal `i = k`
/// carries mass.
#[derive(Debug, Clone, PartialEq)]
pub struct HrcFilterState<R: Real> {
    pub t: usize,
    n: usize,
    horizon: usize,
    q: Vec<R>,
    pub h: R,
    pub loglik: R,
    pub ops: u64,
}

impl<R: Real> HrcFilterState<R> {
    /// `q_i^k(0) = C_0(i) Π_{ik} / h(0)`.
    pub fn init(
        bridges: &BridgeFamily<R>,
        endpoints: &EndpointDistribution<R>,
        c0: &[R],
    ) -> Result<Self, FilterError> {
        let n = bridges.n();
        if endpoints.n() != n || c0.len() != n {
            return Err(FilterError::States { model: n, evidence: c0.len() });
        }
        let mut q = vec![R::ZERO; n * n];
        for k in 0..n {
            for i in 0..n {
                q[k * n + i] = c0[i] * endpoints.get(i, k);
            }
        }
        let h = normalize(&mut q, 0)?;
        Ok(Self { t: 0, n, horizon: bridges.horizon(), q, h, loglik: h.ln(), ops: 0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, k: usize) -> R {
        self.q[k * self.n + i]
    }

    /// `q_i(t) = Σ_k q_i^k(t)`.
    pub fn marginal(&self) -> Vec<R> {
        let n = self.n;
        let mut out = vec![R::ZERO; n];
        for row in self.q.chunks(n) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o = *o + x;
            }
        }
        out
    }

    /// `Σ_i q_i^k(t)` for every destination `k`.
    pub fn destination_marginal(&self) -> Vec<R> {
        self.q.chunks(self.n).map(|row| row.iter().copied().sum()).collect()
    }

    /// Unnormalized `Σ_j B^k_{j,i}(t) q_j^k(t)` for the next epoch.
    fn predict(&self, bridges: &BridgeFamily<R>) -> (Vec<R>, u64) {
        let n = self.n;
        let mut pred = vec![R::ZERO; n * n];
        let mut ops = 0u64;
        if self.t + 1 == self.horizon {
            // Final step: every bridge is pinned onto its destination.
            for (k, row) in self.q.chunks(n).enumerate() {
                pred[k * n + k] = row.iter().copied().sum();
            }
            return (pred, (n * n) as u64);
        }
        for (k, row) in self.q.chunks(n).enumerate() {
            let out = &mut pred[k * n..(k + 1) * n];
            for (i, &mass) in row.iter().enumerate() {
                if mass == R::ZERO {
                    continue;
                }
                let Some(b) = bridges.row(self.t, k, i) else { continue };
                for &j in bridges.support(self.t, k, i) {
                    let j = j as usize;
                    out[j] = out[j] + mass * b[j];
                }
                ops += bridges.support(self.t, k, i).len() as u64;
            }
        }
        (pred, ops)
    }

    fn commit(&mut self, mut next: Vec<R>, ops: u64) -> Result<(), FilterError> {
        let t = self.t + 1;
        let h = normalize(&mut next, t)?;
        self.q = next;
        self.t = t;
        self.h = h;
        self.loglik = self.loglik + h.ln();
        self.ops += ops;
        Ok(())
    }

    /// Advance one epoch with likelihoods `c[i] = C_i(t + 1)`. The step into
    /// `t = T` is the terminal update `q^k(T) = C_T(k) Σ_i q_i^k(T-1) / h(T)`.
    pub fn step(&mut self, bridges: &BridgeFamily<R>, c: &[R]) -> Result<(), FilterError> {
        assert!(self.t < self.horizon, "filter already reached the horizon");
        let n = self.n;
        let (mut next, ops) = self.predict(bridges);
        for row in next.chunks_mut(n) {
            for (x, &ci) in row.iter_mut().zip(c) {
                *x = *x * ci;
            }
        }
        self.commit(next, ops)
    }
}

/// Normalized HRC filter over `Y_0..Y_T`.
pub fn hrc_filter<R: Real, E: Evidence<R> + ?Sized>(
    evidence: &E,
    bridges: &BridgeFamily<R>,
    endpoints: &EndpointDistribution<R>,
) -> Result<FilterOutput<R>, FilterError> {
    let n = bridges.n();
    let horizon = bridges.horizon();
    check_shape(evidence, n, horizon)?;
    let mut c = vec![R::ZERO; n];
    evidence.fill(0, &mut c);
    let mut state = HrcFilterState::init(bridges, endpoints, &c)?;
    let mut marginals = vec![state.marginal()];
    let mut destinations = vec![state.destination_marginal()];
    let mut h = vec![state.h];
    for t in 1..=horizon {
        evidence.fill(t, &mut c);
        state.step(bridges, &c)?;
        marginals.push(state.marginal());
        destinations.push(state.destination_marginal());
        h.push(state.h);
    }
    Ok(FilterOutput {
        marginals,
        destinations: Some(destinations),
        h,
        loglik: state.loglik,
        ops: state.ops,
    })
}

/// One HRC step for the single-detection model written on the joint
/// (target, clutter source) state. With time-invariant uniform clutter the
/// clutter source sums out to the state-independent constant
/// `ε / N Σ_u c_u`, so the step costs no more than the plain recursion.
pub fn clutter_embedded_hrc_step<R: Real>(
    state: &HrcFilterState<R>,
    y: &Point<R>,
    bridges: &BridgeFamily<R>,
    model: &SingleObsModel<R>,
    grid: &GridSpec,
) -> Result<HrcFilterState<R>, FilterError> {
    if !model.clutter.is_uniform() {
        return Err(FilterError::Unsupported("clutter-embedded step needs uniform clutter"));
    }
    let n = state.n;
    let target: Vec<R> = (0..n).map(|i| point_likelihood(y, i, &model.noise, grid)).collect();
    let uniform = R::ONE / R::of(n as f64);
    let clutter_mass: R = target.iter().map(|&c| model.epsilon * uniform * c).sum();
    let target_weight = R::ONE - model.epsilon;

    let (mut next, ops) = state.predict(bridges);
    for row in next.chunks_mut(n) {
        for (x, &c) in row.iter_mut().zip(&target) {
            if *x != R::ZERO {
                *x = *x * target_weight * c + *x * clutter_mass;
            }
        }
    }
    let mut out = state.clone();
    out.commit(next, ops)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::chain::{bridges_from_base_closed_form, TransitionMatrix};
    use crate::filter::LikelihoodTable;
    use crate::observation::single_obs_likelihood;

    fn two_state() -> (TransitionMatrix<f64>, EndpointDistribution<f64>) {
        let a = TransitionMatrix::from_rows(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let pi = EndpointDistribution::from_rows(vec![vec![0.1, 0.4], vec![0.3, 0.2]]).unwrap();
        (a, pi)
    }

    /// Enumerate all paths: `Pr{path} = Π_{x0 xT} Π A / (A^T)_{x0 xT}`.
    fn brute_loglik(a: &TransitionMatrix<f64>, pi: &EndpointDistribution<f64>, c: &[Vec<f64>]) -> f64 {
        let n = a.n();
        let horizon = c.len() - 1;
        let at = a.power(horizon);
        let mut total = 0.0;
        for code in 0..n.pow(horizon as u32 + 1) {
            let path: Vec<usize> = (0..=horizon).map(|t| code / n.pow(t as u32) % n).collect();
            let (x0, xt) = (path[0], path[horizon]);
            if pi.get(x0, xt) == 0.0 {
                continue;
            }
            let mut p = pi.get(x0, xt) / at[x0 * n + xt];
            for t in 0..horizon {
                p *= a.get(path[t], path[t + 1]);
            }
            for t in 0..=horizon {
                p *= c[t][path[t]];
            }
            total += p;
        }
        total.ln()
    }

    #[test]
    fn noiseless_two_state_matches_enumeration() {
        let (a, pi) = two_state();
        let b = bridges_from_base_closed_form(&a, &pi, 3).unwrap();
        let path = [0usize, 1, 1, 0];
        let rows: Vec<Vec<f64>> = path
            .iter()
            .map(|&s| (0..2).map(|i| if i == s { 1.0 } else { 0.0 }).collect())
            .collect();
        let out = hrc_filter(&LikelihoodTable { rows: rows.clone() }, &b, &pi).unwrap();
        for (t, q) in out.marginals.iter().enumerate() {
            assert_eq!(q[path[t]], 1.0);
        }
        assert!((out.loglik - brute_loglik(&a, &pi, &rows)).abs() < 1e-12);
    }

    #[test]
    fn random_likelihoods_match_enumeration() {
        let (a, pi) = two_state();
        let b = bridges_from_base_closed_form(&a, &pi, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random(), rng.random()]).collect();
        let out = hrc_filter(&LikelihoodTable { rows: rows.clone() }, &b, &pi).unwrap();
        assert!((out.loglik - brute_loglik(&a, &pi, &rows)).abs() < 1e-12);
        for (q, d) in out.marginals.iter().zip(out.destinations.as_ref().unwrap()) {
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Terminal epoch: X_T = k, so both marginals coincide.
        assert_eq!(out.marginals[4], out.destinations.as_ref().unwrap()[4]);
    }

    #[test]
    fn impossible_observation_reports_its_epoch() {
        let a = TransitionMatrix::identity(2).unwrap();
        let pi = EndpointDistribution::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let b = bridges_from_base_closed_form(&a, &pi, 2).unwrap();
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let err = hrc_filter(&LikelihoodTable { rows }, &b, &pi).unwrap_err();
        assert_eq!(err, FilterError::ZeroEvidence { t: 1 });
    }

    #[test]
    fn wrong_epoch_count_is_rejected() {
        let (a, pi) = two_state();
        let b = bridges_from_base_closed_form(&a, &pi, 3).unwrap();
        let rows = vec![vec![1.0, 1.0]; 3];
        assert!(matches!(
            hrc_filter(&LikelihoodTable { rows }, &b, &pi),
            Err(FilterError::Epochs { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn step_cost_is_at_most_cubic() {
        let g = GridSpec::new(3, 3).unwrap();
        let a = crate::gridworld::build_random_walk::<f64>(&g, 0.3).unwrap();
        let pi = EndpointDistribution::markov_induced(&a, &vec![1.0 / 9.0; 9], 5).unwrap();
        let b = bridges_from_base_closed_form(&a, &pi, 5).unwrap();
        let out = hrc_filter(&LikelihoodTable { rows: vec![vec![1.0; 9]; 6] }, &b, &pi).unwrap();
        assert!(out.ops > 0 && out.ops <= 5 * 9 * 9 * 9, "{}", out.ops);
    }

    fn embedded_vs_substituted(eps: f64, seed: u64) -> f64 {
        let g = GridSpec::new(3, 2).unwrap();
        let a = crate::gridworld::build_random_walk::<f64>(&g, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w: Vec<f64> = (0..36).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let pi = EndpointDistribution::from_flat(6, w).unwrap();
        let b = bridges_from_base_closed_form(&a, &pi, 4).unwrap();
        let model = SingleObsModel::uniform(eps, 0.8, 6).unwrap();
        let ys: Vec<[f64; 2]> = (0..5)
            .map(|_| [rng.random_range(0.5..3.5), rng.random_range(0.5..2.5)])
            .collect();
        let table = |y: &[f64; 2]| -> Vec<f64> {
            (0..6).map(|i| single_obs_likelihood(y, i, &model, &g)).collect()
        };
        let mut plain = HrcFilterState::init(&b, &pi, &table(&ys[0])).unwrap();
        let mut embedded = plain.clone();
        let mut worst = 0.0f64;
        for y in &ys[1..] {
            plain.step(&b, &table(y)).unwrap();
            embedded = clutter_embedded_hrc_step(&embedded, y, &b, &model, &g).unwrap();
            for (p, e) in plain.q.iter().zip(&embedded.q) {
                worst = worst.max((p - e).abs());
            }
            worst = worst.max((plain.loglik - embedded.loglik).abs());
        }
        worst
    }

    #[test]
    fn clutter_embedded_step_matches_substitution() {
        for (eps, seed) in [(0.0, 1), (0.3, 2), (0.8, 3), (1.0, 4)] {
            let dev = embedded_vs_substituted(eps, seed);
            assert!(dev < 1e-12, "eps {eps}: {dev}");
        }
    }

    #[test]
    fn all_clutter_step_follows_pure_dynamics() {
        let (a, pi) = two_state();
        let b = bridges_from_base_closed_form(&a, &pi, 3).unwrap();
        let flat = vec![0.3, 0.3];
        let mut s = HrcFilterState::init(&b, &pi, &flat).unwrap();
        let prior = s.q.clone();
        s.step(&b, &flat).unwrap();
        for k in 0..2 {
            for j in 0..2 {
                let expected: f64 = (0..2).map(|i| prior[k * 2 + i] * b.transition(0, k, i, j)).sum();
                assert!((s.get(j, k) - expected).abs() < 1e-15);
            }
        }
        assert!((s.h - 0.3).abs() < 1e-15);
    }
}
