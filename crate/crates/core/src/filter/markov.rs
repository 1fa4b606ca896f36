use super::{check_shape, normalize, Evidence, FilterError, FilterOutput};
use crate::chain::{Dynamics, SchrodingerBridge, TransitionMatrix};
use crate::scalar::Real;

/// Forward recursion `q(t) ∝ C(t) ∘ (S(t-1)' q(t-1))` under any, possibly
/// time-varying, Markov dynamics.
pub fn markov_filter<R: Real, D: Dynamics<R> + ?Sized, E: Evidence<R> + ?Sized>(
    evidence: &E,
    dynamics: &D,
    initial: &[R],
) -> Result<FilterOutput<R>, FilterError> {
    let n = dynamics.n_states();
    let horizon = evidence.epochs().saturating_sub(1);
    check_shape(evidence, n, horizon)?;
    if initial.len() != n {
        return Err(FilterError::States { model: n, evidence: initial.len() });
    }
    let mut c = vec![R::ZERO; n];
    evidence.fill(0, &mut c);
    let mut q: Vec<R> = initial.iter().zip(&c).map(|(&p, &ci)| p * ci).collect();
    let h0 = normalize(&mut q, 0)?;
    let mut h = vec![h0];
    let mut loglik = h0.ln();
    let mut marginals = vec![q.clone()];
    let mut ops = 0u64;
    for t in 1..=horizon {
        let mut next = vec![R::ZERO; n];
        for (i, &mass) in q.iter().enumerate() {
            if mass == R::ZERO {
                continue;
            }
            let Some(row) = dynamics.row(t - 1, i) else { continue };
            let support = dynamics.support(t - 1, i);
            for &j in support {
                let j = j as usize;
                next[j] = next[j] + mass * row[j];
            }
            ops += support.len() as u64;
        }
        evidence.fill(t, &mut c);
        for (x, &ci) in next.iter_mut().zip(&c) {
            *x = *x * ci;
        }
        let ht = normalize(&mut next, t)?;
        loglik = loglik + ht.ln();
        h.push(ht);
        marginals.push(next.clone());
        q = next;
    }
    Ok(FilterOutput { marginals, destinations: None, h, loglik, ops })
}

/// HMC filter on the time-homogeneous base chain.
pub fn hmc_filter<R: Real, E: Evidence<R> + ?Sized>(
    evidence: &E,
    base: &TransitionMatrix<R>,
    pi0: &[R],
) -> Result<FilterOutput<R>, FilterError> {
    markov_filter(evidence, base, pi0)
}

/// HSC filter on the Schrödinger bridge transitions `S(t)`.
pub fn hsc_filter<R: Real, E: Evidence<R> + ?Sized>(
    evidence: &E,
    sb: &SchrodingerBridge<R>,
    pi0: &[R],
) -> Result<FilterOutput<R>, FilterError> {
    if evidence.epochs() != sb.horizon() + 1 {
        return Err(FilterError::Epochs { expected: sb.horizon() + 1, got: evidence.epochs() });
    }
    markov_filter(evidence, sb, pi0)
}
