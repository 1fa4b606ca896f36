//! Base Markov chains, reciprocal chains and their bridge decompositions.
//!
//! State indices are zero-based throughout. A reciprocal chain on epochs
//! `0..=T` is carried as a base transition matrix plus a joint law over
//! `(X_0, X_T)`; [`BridgeFamily`] holds the equivalent set of destination
//! pinned Markov bridges and [`SchrodingerBridge`] the marginal-matching
//! Markov alternative.

mod bridge;
mod kernel;
mod sample;
mod schrodinger;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::scalar::Real;

pub use bridge::{bridges_from_base_closed_form, bridges_from_kernel, BridgeFamily};
pub use kernel::{three_point_from_base, KernelSlice, ThreePointKernel};
pub use sample::{draw_index, sample_markov_path, sample_rc_path};
pub use schrodinger::{solve_schrodinger, SchrodingerBridge, SinkhornOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("at least 2 states are required, got {0}")]
    TooFewStates(usize),
    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, not 1")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("distribution sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("horizon T = {got} is below the minimum of {min}")]
    HorizonTooShort { got: usize, min: usize },
    #[error("endpoint pair ({source_state}, {dest}) has mass but the destination is unreachable in T steps")]
    Infeasible { source_state: usize, dest: usize },
    #[error("kernel and endpoint law are inconsistent: state {state} at epoch {t} has no way to reach destination {dest}")]
    Inconsistent { t: usize, dest: usize, state: usize },
    #[error("bridge row (t={t}, dest={dest}, state={state}) is underdetermined: successor {successor} shares no pivot with the others")]
    Underdetermined { t: usize, dest: usize, state: usize, successor: usize },
    #[error("marginals cannot be bridged: {0}")]
    InfeasibleMarginals(String),
    #[error("scaling iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Time-indexed Markov dynamics on `n` states: `row(t, i)` is the law of
/// `X_{t+1}` given `X_t = i`, or `None` if that conditioning event is impossible.
pub trait Dynamics<R: Real>: Sync {
    fn n_states(&self) -> usize;

    fn row(&self, t: usize, i: usize) -> Option<&[R]>;

    /// Columns holding nonzero entries of `row(t, i)`.
    fn support(&self, t: usize, i: usize) -> &[u32];
}

/// Row-stochastic `n x n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixDoc<R>", into = "MatrixDoc<R>")]
#[serde(bound(
    serialize = "R: Real + Serialize",
    deserialize = "R: Real + Deserialize<'de>"
))]
pub struct TransitionMatrix<R: Real> {
    n: usize,
    data: Vec<R>,
    support: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc<R> {
    n: usize,
    rows: Vec<Vec<R>>,
}

impl<R: Real> TryFrom<MatrixDoc<R>> for TransitionMatrix<R> {
    type Error = ChainError;

    fn try_from(doc: MatrixDoc<R>) -> Result<Self, ChainError> {
        if doc.rows.len() != doc.n {
            return Err(ChainError::Shape { expected: doc.n, got: doc.rows.len() });
        }
        TransitionMatrix::from_rows(doc.rows)
    }
}

impl<R: Real> From<TransitionMatrix<R>> for MatrixDoc<R> {
    fn from(m: TransitionMatrix<R>) -> Self {
        MatrixDoc { n: m.n, rows: m.rows() }
    }
}

fn check_entries<R: Real>(data: &[R], n: usize) -> Result<(), ChainError> {
    for (idx, &v) in data.iter().enumerate() {
        if !(v >= R::ZERO && v <= R::ONE) {
            return Err(ChainError::EntryOutOfRange {
                row: idx / n,
                col: idx % n,
                value: v.as_f64(),
            });
        }
    }
    Ok(())
}

fn flatten<R: Real>(rows: Vec<Vec<R>>) -> Result<(usize, Vec<R>), ChainError> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * n);
    for row in rows {
        if row.len() != n {
            return Err(ChainError::Shape { expected: n, got: row.len() });
        }
        data.extend(row);
    }
    Ok((n, data))
}

impl<R: Real> TransitionMatrix<R> {
    pub fn from_rows(rows: Vec<Vec<R>>) -> Result<Self, ChainError> {
        let (n, data) = flatten(rows)?;
        Self::from_flat(n, data)
    }

    pub fn from_flat(n: usize, data: Vec<R>) -> Result<Self, ChainError> {
        if n < 2 {
            return Err(ChainError::TooFewStates(n));
        }
        if data.len() != n * n {
            return Err(ChainError::Shape { expected: n * n, got: data.len() });
        }
        check_entries(&data, n)?;
        for i in 0..n {
            let s: R = data[i * n..(i + 1) * n].iter().copied().sum();
            if (s - R::ONE).abs() > R::PROB_TOL {
                return Err(ChainError::RowNotStochastic { row: i, sum: s.as_f64() });
            }
        }
        let support = linalg::row_supports(&data, n);
        Ok(Self { n, data, support })
    }

    pub fn identity(n: usize) -> Result<Self, ChainError> {
        Self::from_flat(n, linalg::identity(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.n + j]
    }

    pub fn row_slice(&self, i: usize) -> &[R] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_flat(&self) -> &[R] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<R>> {
        self.data.chunks(self.n).map(<[R]>::to_vec).collect()
    }

    /// `A^p` as a row-major flat matrix.
    pub fn power(&self, p: usize) -> Vec<R> {
        linalg::powers(&self.data, self.n, p).pop().expect("powers is nonempty")
    }

    /// `[A^0, ..., A^max]`.
    pub fn powers(&self, max: usize) -> Vec<Vec<R>> {
        linalg::powers(&self.data, self.n, max)
    }

    /// Push a row-vector distribution forward `steps` epochs.
    pub fn propagate(&self, dist: &[R], steps: usize) -> Vec<R> {
        let mut d = dist.to_vec();
        for _ in 0..steps {
            d = linalg::vec_mat(&d, &self.data, self.n);
        }
        d
    }
}

impl<R: Real> Dynamics<R> for TransitionMatrix<R> {
    fn n_states(&self) -> usize {
        self.n
    }

    fn row(&self, _t: usize, i: usize) -> Option<&[R]> {
        Some(self.row_slice(i))
    }

    fn support(&self, _t: usize, i: usize) -> &[u32] {
        &self.support[i]
    }
}

/// Joint law of `(X_0, X_T)`; entry `(i, k)` is `Pr{X_0 = i, X_T = k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixDoc<R>", into = "MatrixDoc<R>")]
#[serde(bound(
    serialize = "R: Real + Serialize",
    deserialize = "R: Real + Deserialize<'de>"
))]
pub struct EndpointDistribution<R: Real> {
    n: usize,
    data: Vec<R>,
}

impl<R: Real> TryFrom<MatrixDoc<R>> for EndpointDistribution<R> {
    type Error = ChainError;

    fn try_from(doc: MatrixDoc<R>) -> Result<Self, ChainError> {
        if doc.rows.len() != doc.n {
            return Err(ChainError::Shape { expected: doc.n, got: doc.rows.len() });
        }
        EndpointDistribution::from_rows(doc.rows)
    }
}

impl<R: Real> From<EndpointDistribution<R>> for MatrixDoc<R> {
    fn from(m: EndpointDistribution<R>) -> Self {
        MatrixDoc { n: m.n, rows: m.rows() }
    }
}

impl<R: Real> EndpointDistribution<R> {
    pub fn from_rows(rows: Vec<Vec<R>>) -> Result<Self, ChainError> {
        let (n, data) = flatten(rows)?;
        Self::from_flat(n, data)
    }

    pub fn from_flat(n: usize, data: Vec<R>) -> Result<Self, ChainError> {
        if n < 2 {
            return Err(ChainError::TooFewStates(n));
        }
        if data.len() != n * n {
            return Err(ChainError::Shape { expected: n * n, got: data.len() });
        }
        check_entries(&data, n)?;
        let total: R = data.iter().copied().sum();
        if (total - R::ONE).abs() > R::PROB_TOL {
            return Err(ChainError::NotNormalized(total.as_f64()));
        }
        Ok(Self { n, data })
    }

    /// Unit mass on a single `(source, dest)` pair.
    pub fn point_mass(n: usize, source: usize, dest: usize) -> Result<Self, ChainError> {
        let mut data = vec![R::ZERO; n * n];
        data[source * n + dest] = R::ONE;
        Self::from_flat(n, data)
    }

    /// `Π_{ik} = π₀(i) (A^T)_{ik}`: the endpoint law of the base chain itself.
    pub fn markov_induced(
        base: &TransitionMatrix<R>,
        initial: &[R],
        horizon: usize,
    ) -> Result<Self, ChainError> {
        let n = base.n();
        let p = base.power(horizon);
        let mut data = vec![R::ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                data[i * n + k] = initial[i] * p[i * n + k];
            }
        }
        Self::from_flat(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> R {
        self.data[i * self.n + k]
    }

    pub fn as_flat(&self) -> &[R] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<R>> {
        self.data.chunks(self.n).map(<[R]>::to_vec).collect()
    }

    /// Law of `X_0`.
    pub fn initial_marginal(&self) -> Vec<R> {
        self.data.chunks(self.n).map(|r| r.iter().copied().sum()).collect()
    }

    /// Law of `X_T`.
    pub fn terminal_marginal(&self) -> Vec<R> {
        (0..self.n).map(|k| (0..self.n).map(|i| self.get(i, k)).sum()).collect()
    }

    /// `Pr{X_0 = · | X_T = k}`, or `None` when `k` has no mass.
    pub fn pinned_initial(&self, k: usize) -> Option<Vec<R>> {
        let col: Vec<R> = (0..self.n).map(|i| self.get(i, k)).collect();
        let total: R = col.iter().copied().sum();
        (total > R::ZERO).then(|| col.into_iter().map(|v| v / total).collect())
    }

    /// Every pair with mass must be connected by a positive-probability path
    /// of exactly `horizon` base steps.
    pub fn check_feasible(
        &self,
        base: &TransitionMatrix<R>,
        horizon: usize,
    ) -> Result<(), ChainError> {
        self.check_feasible_with(&base.power(horizon))
    }

    pub(crate) fn check_feasible_with(&self, power_t: &[R]) -> Result<(), ChainError> {
        for i in 0..self.n {
            for k in 0..self.n {
                if self.get(i, k) > R::ZERO && power_t[i * self.n + k] <= R::ZERO {
                    return Err(ChainError::Infeasible { source_state: i, dest: k });
                }
            }
        }
        Ok(())
    }
}

/// Check that `dist` is a probability vector of length `n`.
pub fn check_distribution<R: Real>(dist: &[R], n: usize) -> Result<(), ChainError> {
    if dist.len() != n {
        return Err(ChainError::Shape { expected: n, got: dist.len() });
    }
    for (i, &v) in dist.iter().enumerate() {
        if !(v >= R::ZERO && v <= R::ONE) {
            return Err(ChainError::EntryOutOfRange { row: 0, col: i, value: v.as_f64() });
        }
    }
    let s: R = dist.iter().copied().sum();
    if (s - R::ONE).abs() > R::PROB_TOL {
        return Err(ChainError::NotNormalized(s.as_f64()));
    }
    Ok(())
}

/// Base chain, endpoint law and horizon: everything needed to build the
/// reciprocal, Markov and Schrödinger trackers. Serializes as
/// `{"n", "horizon", "a": [[..]], "pi": [[..]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc<R>", into = "ModelDoc<R>")]
#[serde(bound(
    serialize = "R: Real + Serialize",
    deserialize = "R: Real + Deserialize<'de>"
))]
pub struct ChainModel<R: Real> {
    pub base: TransitionMatrix<R>,
    pub endpoints: EndpointDistribution<R>,
    pub horizon: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc<R> {
    n: usize,
    horizon: usize,
    a: Vec<Vec<R>>,
    pi: Vec<Vec<R>>,
}

impl<R: Real> TryFrom<ModelDoc<R>> for ChainModel<R> {
    type Error = ChainError;

    fn try_from(doc: ModelDoc<R>) -> Result<Self, ChainError> {
        if doc.a.len() != doc.n {
            return Err(ChainError::Shape { expected: doc.n, got: doc.a.len() });
        }
        if doc.pi.len() != doc.n {
            return Err(ChainError::Shape { expected: doc.n, got: doc.pi.len() });
        }
        ChainModel::new(
            TransitionMatrix::from_rows(doc.a)?,
            EndpointDistribution::from_rows(doc.pi)?,
            doc.horizon,
        )
    }
}

impl<R: Real> From<ChainModel<R>> for ModelDoc<R> {
    fn from(m: ChainModel<R>) -> Self {
        ModelDoc {
            n: m.base.n(),
            horizon: m.horizon,
            a: m.base.rows(),
            pi: m.endpoints.rows(),
        }
    }
}

impl<R: Real> ChainModel<R> {
    pub fn new(
        base: TransitionMatrix<R>,
        endpoints: EndpointDistribution<R>,
        horizon: usize,
    ) -> Result<Self, ChainError> {
        if base.n() != endpoints.n() {
            return Err(ChainError::Shape { expected: base.n(), got: endpoints.n() });
        }
        if horizon < 2 {
            return Err(ChainError::HorizonTooShort { got: horizon, min: 2 });
        }
        endpoints.check_feasible(&base, horizon)?;
        Ok(Self { base, endpoints, horizon })
    }
}
