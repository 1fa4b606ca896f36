use std::collections::VecDeque;

use super::{ChainError, EndpointDistribution, ThreePointKernel, TransitionMatrix};
use crate::linalg;
use crate::scalar::Real;

/// The `N` destination-pinned Markov bridges equivalent to a reciprocal chain.
///
/// `row(t, k, i)` is `Pr{X_{t+1} = · | X_t = i, X_T = k}` for `t = 0..=T-2`.
/// The final step `T-1 -> T` is the deterministic pin onto `k` and is not
/// stored. Rows whose conditioning event is impossible are flagged unreachable
/// and hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeFamily<R: Real> {
    n: usize,
    horizon: usize,
    initial: Vec<Option<Vec<R>>>,
    values: Vec<R>,
    reachable: Vec<bool>,
    support: Vec<Vec<u32>>,
}

impl<R: Real> BridgeFamily<R> {
    fn from_parts(
        n: usize,
        horizon: usize,
        initial: Vec<Option<Vec<R>>>,
        values: Vec<R>,
        reachable: Vec<bool>,
    ) -> Self {
        let support = values
            .chunks(n)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != R::ZERO)
                    .map(|(j, _)| j as u32)
                    .collect()
            })
            .collect();
        Self { n, horizon, initial, values, reachable, support }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    fn row_index(&self, t: usize, k: usize, i: usize) -> usize {
        debug_assert!(t + 1 < self.horizon);
        (t * self.n + k) * self.n + i
    }

    /// `π^k`, or `None` when destination `k` has zero probability.
    pub fn initial(&self, k: usize) -> Option<&[R]> {
        self.initial[k].as_deref()
    }

    pub fn is_reachable(&self, t: usize, k: usize, i: usize) -> bool {
        self.reachable[self.row_index(t, k, i)]
    }

    /// Stored transition row for `t <= T-2`.
    pub fn row(&self, t: usize, k: usize, i: usize) -> Option<&[R]> {
        let r = self.row_index(t, k, i);
        self.reachable[r].then(|| &self.values[r * self.n..(r + 1) * self.n])
    }

    pub fn support(&self, t: usize, k: usize, i: usize) -> &[u32] {
        &self.support[self.row_index(t, k, i)]
    }

    /// `B^k_{i,j}(t)` for every `t = 0..=T-1`, including the final pin.
    /// Unreachable rows read as zero.
    pub fn transition(&self, t: usize, k: usize, i: usize, j: usize) -> R {
        if t + 1 == self.horizon {
            return if j == k { R::ONE } else { R::ZERO };
        }
        self.row(t, k, i).map_or(R::ZERO, |row| row[j])
    }

    /// Largest `|row sum - 1|` over all reachable stored rows.
    pub fn max_row_error(&self) -> R {
        let mut worst = R::ZERO;
        for (r, row) in self.values.chunks(self.n).enumerate() {
            if self.reachable[r] {
                let s: R = row.iter().copied().sum();
                worst = worst.max((s - R::ONE).abs());
            }
        }
        worst
    }

    /// Distribution of `X_t`, `t = 0..=T`, under bridge `k` started from `π^k`.
    pub fn propagate(&self, k: usize) -> Option<Vec<Vec<R>>> {
        let n = self.n;
        let mut out = vec![self.initial(k)?.to_vec()];
        for t in 0..self.horizon {
            let cur = &out[t];
            let mut next = vec![R::ZERO; n];
            for (i, &mass) in cur.iter().enumerate() {
                if mass == R::ZERO {
                    continue;
                }
                for (j, slot) in next.iter_mut().enumerate() {
                    *slot = *slot + mass * self.transition(t, k, i, j);
                }
            }
            out.push(next);
        }
        Some(out)
    }

    /// Add `delta` to one stored entry. Used to build negative controls for
    /// the oracle suites.
    #[doc(hidden)]
    pub fn perturb_entry(&mut self, t: usize, k: usize, i: usize, j: usize, delta: R) {
        let r = self.row_index(t, k, i);
        self.values[r * self.n + j] = self.values[r * self.n + j] + delta;
    }

    /// Every state that carries mass under `π^k` must have a usable row at
    /// every later epoch.
    fn check_consistent(&self) -> Result<(), ChainError> {
        let n = self.n;
        for k in 0..n {
            let Some(init) = self.initial(k) else { continue };
            let mut cur = init.to_vec();
            for t in 0..self.horizon - 1 {
                let mut next = vec![R::ZERO; n];
                for (i, &mass) in cur.iter().enumerate() {
                    if mass == R::ZERO {
                        continue;
                    }
                    let row = self
                        .row(t, k, i)
                        .ok_or(ChainError::Inconsistent { t, dest: k, state: i })?;
                    for (slot, &b) in next.iter_mut().zip(row) {
                        *slot = *slot + mass * b;
                    }
                }
                cur = next;
            }
        }
        Ok(())
    }
}

fn pinned_initials<R: Real>(endpoints: &EndpointDistribution<R>) -> Vec<Option<Vec<R>>> {
    (0..endpoints.n()).map(|k| endpoints.pinned_initial(k)).collect()
}

/// Markov bridges from three-point transitions by the backward recursion
/// `B^k_{ij}(t) ∝ Q_{i,j,l}(t+1) / B^k_{j,l}(t+1)` started from
/// `B^k_{ij}(T-2) = Q_{i,j,k}(T-1)`.
///
/// The ratio is proportional to `B^k_{ij}(t)` with a factor that depends on the
/// pivot `l` but not on `j`, so every successor in a row must be expressed on
/// one common scale. The first live successor is pivoted on its most likely
/// next state; further pivots are chained through successors that reach both.
pub fn bridges_from_kernel<R: Real>(
    kernel: &ThreePointKernel<R>,
    endpoints: &EndpointDistribution<R>,
) -> Result<BridgeFamily<R>, ChainError> {
    let n = kernel.n();
    if endpoints.n() != n {
        return Err(ChainError::Shape { expected: n, got: endpoints.n() });
    }
    let horizon = kernel.horizon();
    let stages = horizon - 1;
    let mut values = vec![R::ZERO; stages * n * n * n];
    let mut reachable = vec![false; stages * n * n];

    let last = horizon - 2;
    let q_last = kernel.slice(horizon - 1);
    for k in 0..n {
        for i in 0..n {
            if let Some(law) = q_last.law(i, k) {
                let r = (last * n + k) * n + i;
                values[r * n..(r + 1) * n].copy_from_slice(law);
                reachable[r] = true;
            }
        }
    }

    let mut pivot_scale = vec![R::ZERO; n];
    let mut scale_known = vec![false; n];
    let mut weight = vec![R::ZERO; n];
    let mut resolved = vec![false; n];
    let mut queue = VecDeque::new();

    for t in (0..last).rev() {
        let q = kernel.slice(t + 1);
        for k in 0..n {
            let next_base = ((t + 1) * n + k) * n;
            let next_row = |j: usize| -> Option<&[R]> {
                let r = next_base + j;
                reachable[r].then(|| &values[r * n..(r + 1) * n])
            };
            // For each pivot l, the successors j with B^k_{j,l}(t+1) > 0.
            let mut column: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut best_pivot = vec![usize::MAX; n];
            for j in 0..n {
                if let Some(row) = next_row(j) {
                    best_pivot[j] = crate::scalar::argmax(row);
                    for (l, &b) in row.iter().enumerate() {
                        if b > R::ZERO {
                            column[l].push(j);
                        }
                    }
                }
            }

            let mut rows_out: Vec<(usize, Option<Vec<R>>)> = Vec::with_capacity(n);
            for i in 0..n {
                let ratio = |j: usize, l: usize| -> Option<R> {
                    let b = next_row(j)?[l];
                    let qv = q.get(i, j, l)?;
                    (b > R::ZERO && qv > R::ZERO).then(|| qv / b)
                };
                pivot_scale.fill(R::ZERO);
                scale_known.fill(false);
                weight.fill(R::ZERO);
                resolved.fill(false);
                queue.clear();

                let live = |j: usize| best_pivot[j] != usize::MAX && ratio(j, best_pivot[j]).is_some();
                let Some(seed) = (0..n).find(|&j| live(j)) else {
                    rows_out.push((i, None));
                    continue;
                };
                pivot_scale[best_pivot[seed]] = R::ONE;
                scale_known[best_pivot[seed]] = true;
                queue.push_back(best_pivot[seed]);

                while let Some(l) = queue.pop_front() {
                    for &j in &column[l] {
                        if resolved[j] {
                            continue;
                        }
                        let Some(w) = ratio(j, l) else { continue };
                        let u = pivot_scale[l] * w;
                        weight[j] = u;
                        resolved[j] = true;
                        let row = next_row(j).expect("j is in a pivot column");
                        for (l2, &b) in row.iter().enumerate() {
                            if b > R::ZERO && !scale_known[l2] {
                                if let Some(w2) = ratio(j, l2) {
                                    pivot_scale[l2] = u / w2;
                                    scale_known[l2] = true;
                                    queue.push_back(l2);
                                }
                            }
                        }
                    }
                }

                if let Some(j) = (0..n).find(|&j| !resolved[j] && live(j)) {
                    return Err(ChainError::Underdetermined { t, dest: k, state: i, successor: j });
                }
                let total: R = weight.iter().copied().sum();
                rows_out.push((i, Some(weight.iter().map(|&w| w / total).collect())));
            }

            for (i, row) in rows_out {
                if let Some(row) = row {
                    let r = (t * n + k) * n + i;
                    values[r * n..(r + 1) * n].copy_from_slice(&row);
                    reachable[r] = true;
                }
            }
        }
    }

    let family = BridgeFamily::from_parts(n, horizon, pinned_initials(endpoints), values, reachable);
    family.check_consistent()?;
    Ok(family)
}

/// Markov bridges of a base chain in closed form:
/// `B^k_{ij}(t) = A_{ij} (A^{T-t-1})_{jk} / (A^{T-t})_{ik}`.
pub fn bridges_from_base_closed_form<R: Real>(
    base: &TransitionMatrix<R>,
    endpoints: &EndpointDistribution<R>,
    horizon: usize,
) -> Result<BridgeFamily<R>, ChainError> {
    let n = base.n();
    if endpoints.n() != n {
        return Err(ChainError::Shape { expected: n, got: endpoints.n() });
    }
    if horizon < 2 {
        return Err(ChainError::HorizonTooShort { got: horizon, min: 2 });
    }
    let powers = linalg::powers(base.as_flat(), n, horizon);
    endpoints.check_feasible_with(&powers[horizon])?;

    let stages = horizon - 1;
    let mut values = vec![R::ZERO; stages * n * n * n];
    let mut reachable = vec![false; stages * n * n];
    for t in 0..stages {
        let ahead = &powers[horizon - t - 1];
        let here = &powers[horizon - t];
        for k in 0..n {
            for i in 0..n {
                let denom = here[i * n + k];
                if denom <= R::ZERO {
                    continue;
                }
                let r = (t * n + k) * n + i;
                reachable[r] = true;
                let row = &mut values[r * n..(r + 1) * n];
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = base.get(i, j) * ahead[j * n + k] / denom;
                }
            }
        }
    }
    Ok(BridgeFamily::from_parts(n, horizon, pinned_initials(endpoints), values, reachable))
}
