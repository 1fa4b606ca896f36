use super::{check_distribution, ChainError, Dynamics, TransitionMatrix};
use crate::linalg;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Stop once the largest relative change of any scaling entry falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000 }
    }
}

/// Time-inhomogeneous Markov chain closest to a base chain among those with
/// prescribed laws of `X_0` and `X_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchrodingerBridge<R: Real> {
    n: usize,
    horizon: usize,
    /// `S(t)` for `t = 0..T`, row-major; rows with `psi_t(i) = 0` are zero.
    transitions: Vec<Vec<R>>,
    reachable: Vec<Vec<bool>>,
    support: Vec<Vec<Vec<u32>>>,
    pub lambda0: Vec<R>,
    pub lambda_t: Vec<R>,
    /// `psi[t] = A^(T-t) lambda_T` for `t = 0..=T`.
    pub psi: Vec<Vec<R>>,
    pub iterations: usize,
}

impl<R: Real> SchrodingerBridge<R> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn matrix(&self, t: usize) -> &[R] {
        &self.transitions[t]
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> R {
        self.transitions[t][i * self.n + j]
    }

    pub fn max_row_error(&self) -> R {
        let n = self.n;
        let mut worst = R::ZERO;
        for (m, flags) in self.transitions.iter().zip(&self.reachable) {
            for i in (0..n).filter(|&i| flags[i]) {
                let s: R = m[i * n..(i + 1) * n].iter().copied().sum();
                worst = worst.max((s - R::ONE).abs());
            }
        }
        worst
    }

    /// Push `initial` through `S(0), ..., S(T-1)`.
    pub fn propagate(&self, initial: &[R]) -> Vec<R> {
        self.transitions
            .iter()
            .fold(initial.to_vec(), |d, m| linalg::vec_mat(&d, m, self.n))
    }
}

impl<R: Real> Dynamics<R> for SchrodingerBridge<R> {
    fn n_states(&self) -> usize {
        self.n
    }

    fn row(&self, t: usize, i: usize) -> Option<&[R]> {
        self.reachable[t][i].then(|| &self.transitions[t][i * self.n..(i + 1) * self.n])
    }

    fn support(&self, t: usize, i: usize) -> &[u32] {
        &self.support[t][i]
    }
}

/// Solve for the scalings `λ₀, λ_T` with `π_T = λ_T ∘ (λ₀ A^T)` and
/// `π₀ = λ₀ ∘ (A^T λ_T)` by alternating proportional fitting, starting from
/// `λ_T = 1`, then form `S_{ij}(t) = A_{ij} ψ_{t+1}(j) / ψ_t(i)`.
pub fn solve_schrodinger<R: Real>(
    base: &TransitionMatrix<R>,
    pi0: &[R],
    pi_t: &[R],
    horizon: usize,
    opts: SinkhornOptions,
) -> Result<SchrodingerBridge<R>, ChainError> {
    let n = base.n();
    check_distribution(pi0, n)?;
    check_distribution(pi_t, n)?;
    if horizon < 1 {
        return Err(ChainError::HorizonTooShort { got: horizon, min: 1 });
    }
    let kernel = base.power(horizon);
    for k in (0..n).filter(|&k| pi_t[k] > R::ZERO) {
        if !(0..n).any(|i| pi0[i] > R::ZERO && kernel[i * n + k] > R::ZERO) {
            return Err(ChainError::InfeasibleMarginals(format!(
                "terminal state {k} is unreachable from the initial support"
            )));
        }
    }
    for i in (0..n).filter(|&i| pi0[i] > R::ZERO) {
        if !(0..n).any(|k| pi_t[k] > R::ZERO && kernel[i * n + k] > R::ZERO) {
            return Err(ChainError::InfeasibleMarginals(format!(
                "initial state {i} reaches no terminal state in the support"
            )));
        }
    }

    let tol = R::of(opts.tol);
    let tiny = R::min_positive_value();
    let mut lambda_t = vec![R::ONE; n];
    let mut lambda0 = vec![R::ZERO; n];
    let mut iterations = 0;
    let mut change = R::infinity();
    while iterations < opts.max_iter {
        iterations += 1;
        let back = linalg::mat_vec(&kernel, &lambda_t, n);
        let new0: Vec<R> = (0..n)
            .map(|i| if pi0[i] > R::ZERO { pi0[i] / back[i] } else { R::ZERO })
            .collect();
        let fwd = linalg::vec_mat(&new0, &kernel, n);
        let new_t: Vec<R> = (0..n)
            .map(|k| if pi_t[k] > R::ZERO { pi_t[k] / fwd[k] } else { R::ZERO })
            .collect();
        if new0.iter().chain(&new_t).any(|v| !v.is_finite()) {
            return Err(ChainError::InfeasibleMarginals(
                "scaling diverged; the marginal pair admits no coupling".into(),
            ));
        }
        change = R::ZERO;
        for (old, new) in lambda0.iter().chain(&lambda_t).zip(new0.iter().chain(&new_t)) {
            let rel = (*new - *old).abs() / old.abs().max(new.abs()).max(tiny);
            change = change.max(rel);
        }
        lambda0 = new0;
        lambda_t = new_t;
        if change < tol {
            break;
        }
    }
    if change >= tol {
        let fwd = linalg::vec_mat(&lambda0, &kernel, n);
        let residual = (0..n)
            .map(|k| (lambda_t[k] * fwd[k] - pi_t[k]).abs())
            .fold(R::ZERO, R::max);
        return Err(ChainError::NoConvergence { iterations, residual: residual.as_f64() });
    }

    let mut psi = vec![lambda_t.clone()];
    for _ in 0..horizon {
        let next = linalg::mat_vec(base.as_flat(), psi.last().unwrap(), n);
        psi.push(next);
    }
    psi.reverse();

    let mut transitions = Vec::with_capacity(horizon);
    let mut reachable = Vec::with_capacity(horizon);
    let mut support = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut m = vec![R::ZERO; n * n];
        let mut flags = vec![false; n];
        for i in 0..n {
            let denom = psi[t][i];
            if denom <= R::ZERO {
                continue;
            }
            flags[i] = true;
            for j in 0..n {
                m[i * n + j] = base.get(i, j) * psi[t + 1][j] / denom;
            }
        }
        support.push(linalg::row_supports(&m, n));
        transitions.push(m);
        reachable.push(flags);
    }

    Ok(SchrodingerBridge {
        n,
        horizon,
        transitions,
        reachable,
        support,
        lambda0,
        lambda_t,
        psi,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_push_forward_leaves_base_dynamics_unchanged() {
        let a = TransitionMatrix::<f64>::from_rows(vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.6, 0.3],
            vec![0.3, 0.3, 0.4],
        ])
        .unwrap();
        let pi0 = vec![0.5, 0.3, 0.2];
        let horizon = 5;
        let pi_t = a.propagate(&pi0, horizon);
        let sb = solve_schrodinger(&a, &pi0, &pi_t, horizon, SinkhornOptions::default()).unwrap();
        for t in 0..horizon {
            for i in 0..3 {
                for j in 0..3 {
                    assert!((sb.get(t, i, j) - a.get(i, j)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn single_step_pinning() {
        let a = TransitionMatrix::<f64>::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let sb = solve_schrodinger(&a, &[1.0, 0.0], &[0.0, 1.0], 1, SinkhornOptions::default())
            .unwrap();
        assert_eq!(sb.get(0, 0, 0), 0.0);
        assert!((sb.get(0, 0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unreachable_terminal_support() {
        let a = TransitionMatrix::<f64>::identity(2).unwrap();
        let err = solve_schrodinger(&a, &[1.0, 0.0], &[0.0, 1.0], 3, SinkhornOptions::default());
        assert!(matches!(err, Err(ChainError::InfeasibleMarginals(_))));
    }

    #[test]
    fn reports_non_convergence_with_residual() {
        let a = TransitionMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let opts = SinkhornOptions { tol: 1e-300, max_iter: 3 };
        match solve_schrodinger(&a, &[0.2, 0.8], &[0.9, 0.1], 2, opts) {
            Err(ChainError::NoConvergence { iterations: 3, residual }) => assert!(residual >= 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
