//! Brute-force verification oracles: exact sequence likelihoods and filtered
//! marginals by enumerating every state sequence, and the randomized
//! small-instance suites that compare them with the fast recursions.
//!
//! Path probabilities come straight from the base chain and the endpoint law
//! (`Π_{x0 xT} Π_t A_{x_t x_{t+1}} / (A^T)_{x0 xT}` for the reciprocal chain),
//! never from the bridge family, so the oracle is independent of the code it
//! checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    bridges_from_base_closed_form, bridges_from_kernel, sample_rc_path, solve_schrodinger,
    three_point_from_base, BridgeFamily, EndpointDistribution, SchrodingerBridge, SinkhornOptions,
    TransitionMatrix,
};
use crate::detect::{null_loglik, DetectorKind};
use crate::filter::{hmc_filter, hrc_filter, hsc_filter, tabulate, FilterOutput};
use crate::gridworld::GridSpec;
use crate::observation::{
    clutter_point_likelihood, multi_obs_likelihood, point_likelihood, single_obs_likelihood,
    ClutterModel, MultiObsModel, NoiseModel, ObservationModel, ObservationRecord, Point,
    SingleObsModel,
};

/// Largest enumeration the oracles will attempt.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("enumeration of {0} terms exceeds the limit of {ENUMERATION_LIMIT}")]
    TooLarge(u128),
    #[error("no oracle suite selected")]
    EmptySelection,
    #[error("epoch {t} is outside the observed sequence")]
    Epoch { t: usize },
    #[error("could not build a random instance: {0}")]
    Instance(String),
}

/// Target model whose path law the oracle enumerates.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleModel {
    Reciprocal { base: TransitionMatrix<f64>, endpoints: EndpointDistribution<f64> },
    Markov { base: TransitionMatrix<f64>, initial: Vec<f64> },
    Schrodinger { sb: SchrodingerBridge<f64>, initial: Vec<f64> },
}

impl OracleModel {
    fn n(&self) -> usize {
        match self {
            OracleModel::Reciprocal { base, .. } | OracleModel::Markov { base, .. } => base.n(),
            OracleModel::Schrodinger { sb, .. } => sb.n(),
        }
    }

    fn path_probability(&self, path: &[usize], at: &[f64]) -> f64 {
        let horizon = path.len() - 1;
        match self {
            OracleModel::Reciprocal { base, endpoints } => {
                let n = base.n();
                let (x0, xt) = (path[0], path[horizon]);
                let pi = endpoints.get(x0, xt);
                if pi == 0.0 {
                    return 0.0;
                }
                let steps: f64 = path.windows(2).map(|w| base.get(w[0], w[1])).product();
                pi * steps / at[x0 * n + xt]
            }
            OracleModel::Markov { base, initial } => {
                initial[path[0]] * path.windows(2).map(|w| base.get(w[0], w[1])).product::<f64>()
            }
            OracleModel::Schrodinger { sb, initial } => {
                initial[path[0]]
                    * path
                        .windows(2)
                        .enumerate()
                        .map(|(t, w)| sb.get(t, w[0], w[1]))
                        .product::<f64>()
            }
        }
    }
}

/// `Pr{Y_t | X_t = state}` by summing explicitly over the detection-source
/// events of one epoch (target or clutter for each slot).
pub fn association_sum(
    points: &[Point<f64>],
    state: usize,
    obs: &ObservationModel<f64>,
    grid: &GridSpec,
) -> f64 {
    let target = |y: &Point<f64>, noise: &NoiseModel<f64>| point_likelihood(y, state, noise, grid);
    match obs {
        ObservationModel::ClutterFree(noise) => target(&points[0], noise),
        ObservationModel::Single(m) => {
            let y = &points[0];
            (1.0 - m.epsilon) * target(y, &m.noise)
                + m.epsilon * clutter_point_likelihood(y, &m.noise, &m.clutter, grid)
        }
        ObservationModel::Multi(m) => {
            let mut total = 0.0;
            for a in 0..=m.m() {
                let prior = if a == 0 { m.lambda0 } else { m.lambdas[a - 1] };
                let mut p = prior;
                for (slot, y) in points.iter().enumerate() {
                    p *= if a == slot + 1 {
                        target(y, &m.noise)
                    } else {
                        clutter_point_likelihood(y, &m.noise, &m.clutter, grid)
                    };
                }
                total += p;
            }
            total
        }
    }
}

struct Enumeration {
    total: f64,
    /// Unnormalized `Pr{X_t = i, Y_0..Y_t}`.
    joint: Vec<Vec<f64>>,
}

fn enumerate(
    model: &OracleModel,
    records: &[ObservationRecord<f64>],
    obs: &ObservationModel<f64>,
    grid: &GridSpec,
) -> Result<Enumeration, OracleError> {
    let n = model.n();
    let epochs = records.len();
    let associations = obs.detections_per_epoch() as u128 + 1;
    let count = (n as u128).pow(epochs as u32) * associations * epochs as u128;
    if count > ENUMERATION_LIMIT {
        return Err(OracleError::TooLarge(count));
    }
    let at = match model {
        OracleModel::Reciprocal { base, .. } => base.power(epochs - 1),
        _ => Vec::new(),
    };
    let lik: Vec<Vec<f64>> = records
        .iter()
        .map(|r| (0..n).map(|i| association_sum(&r.points, i, obs, grid)).collect())
        .collect();
    let mut joint = vec![vec![0.0; n]; epochs];
    let mut total = 0.0;
    let mut path = vec![0usize; epochs];
    for code in 0..(n as u64).pow(epochs as u32) {
        let mut c = code;
        for x in path.iter_mut() {
            *x = (c % n as u64) as usize;
            c /= n as u64;
        }
        let p = model.path_probability(&path, &at);
        if p == 0.0 {
            continue;
        }
        let mut w = p;
        for t in 0..epochs {
            w *= lik[t][path[t]];
            joint[t][path[t]] += w;
        }
        total += w;
    }
    Ok(Enumeration { total, joint })
}

/// Exact `Pr{Y_0..Y_T}` by enumeration.
pub fn brute_force_sequence_likelihood(
    model: &OracleModel,
    records: &[ObservationRecord<f64>],
    obs: &ObservationModel<f64>,
    grid: &GridSpec,
) -> Result<f64, OracleError> {
    Ok(enumerate(model, records, obs, grid)?.total)
}

/// Exact filtered marginal `Pr{X_t = · | Y_0..Y_t}` by enumeration.
pub fn brute_force_posterior(
    model: &OracleModel,
    records: &[ObservationRecord<f64>],
    obs: &ObservationModel<f64>,
    grid: &GridSpec,
    t: usize,
) -> Result<Vec<f64>, OracleError> {
    if t >= records.len() {
        return Err(OracleError::Epoch { t });
    }
    let e = enumerate(model, records, obs, grid)?;
    let z: f64 = e.joint[t].iter().sum();
    Ok(e.joint[t].iter().map(|x| x / z).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSuite {
    Filters,
    Bridges,
    Likelihoods,
}

impl OracleSuite {
    pub const ALL: [OracleSuite; 3] = [OracleSuite::Filters, OracleSuite::Bridges, OracleSuite::Likelihoods];

    pub fn name(self) -> &'static str {
        match self {
            OracleSuite::Filters => "filters",
            OracleSuite::Bridges => "bridges",
            OracleSuite::Likelihoods => "likelihoods",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub instances: usize,
    pub seed: u64,
    /// Negative control: add `1e-3` to one bridge entry on the sampled path.
    pub perturb: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { instances: 60, seed: 2024, perturb: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub suite: OracleSuite,
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

/// Accumulates the worst deviation per named check, in first-seen order.
struct Tally {
    suite: OracleSuite,
    checks: Vec<OracleCheck>,
}

impl Tally {
    fn new(suite: OracleSuite) -> Self {
        Self { suite, checks: Vec::new() }
    }

    fn record(&mut self, name: &str, tolerance: f64, deviation: f64) {
        // NaN must fail, so it is folded in as +inf.
        let dev = if deviation.is_nan() { f64::INFINITY } else { deviation };
        match self.checks.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.max_deviation = c.max_deviation.max(dev);
                c.cases += 1;
            }
            None => self.checks.push(OracleCheck {
                suite: self.suite,
                name: name.to_string(),
                max_deviation: dev,
                tolerance,
                cases: 1,
            }),
        }
    }
}

/// Small random reciprocal-chain instance on a grid with at most 4 cells.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub grid: GridSpec,
    pub horizon: usize,
    pub base: TransitionMatrix<f64>,
    pub endpoints: EndpointDistribution<f64>,
    pub bridges: BridgeFamily<f64>,
    pub sb: SchrodingerBridge<f64>,
    pub pi0: Vec<f64>,
}

impl RandomInstance {
    pub fn generate(rng: &mut ChaCha8Rng) -> Result<Self, OracleError> {
        const GRIDS: [(usize, usize); 4] = [(2, 1), (3, 1), (2, 2), (4, 1)];
        for _ in 0..1000 {
            let (w, h) = GRIDS[rng.random_range(0..GRIDS.len())];
            let grid = GridSpec::new(w, h).map_err(|e| OracleError::Instance(e.to_string()))?;
            let n = grid.n();
            let horizon = rng.random_range(2..=5);
            let mut rows = vec![vec![0.0; n]; n];
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    if i == j || rng.random::<f64>() > 0.3 {
                        *x = rng.random_range(0.05..1.0);
                    }
                }
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
            }
            let Ok(base) = TransitionMatrix::from_rows(rows) else { continue };
            let at = base.power(horizon);
            let mut pi = vec![0.0; n * n];
            for (slot, &reach) in pi.iter_mut().zip(&at) {
                if reach > 0.0 && rng.random::<f64>() < 0.6 {
                    *slot = rng.random_range(0.05..1.0);
                }
            }
            let s: f64 = pi.iter().sum();
            if s == 0.0 {
                continue;
            }
            pi.iter_mut().for_each(|x| *x /= s);
            let Ok(endpoints) = EndpointDistribution::from_flat(n, pi) else { continue };
            let Ok(kernel) = three_point_from_base(&base, horizon) else { continue };
            let Ok(bridges) = bridges_from_kernel(&kernel, &endpoints) else { continue };
            let pi0 = endpoints.initial_marginal();
            let pi_t = endpoints.terminal_marginal();
            let Ok(sb) = solve_schrodinger(&base, &pi0, &pi_t, horizon, SinkhornOptions::default())
            else {
                continue;
            };
            return Ok(Self { grid, horizon, base, endpoints, bridges, sb, pi0 });
        }
        Err(OracleError::Instance("no valid instance in 1000 draws".into()))
    }

    fn oracle_model(&self, kind: DetectorKind) -> OracleModel {
        match kind {
            DetectorKind::Hrc => OracleModel::Reciprocal {
                base: self.base.clone(),
                endpoints: self.endpoints.clone(),
            },
            DetectorKind::Hmc => OracleModel::Markov { base: self.base.clone(), initial: self.pi0.clone() },
            DetectorKind::Hsc => OracleModel::Schrodinger { sb: self.sb.clone(), initial: self.pi0.clone() },
        }
    }
}

fn random_regimes(rng: &mut ChaCha8Rng, n: usize, sigma2: f64) -> Vec<(&'static str, ObservationModel<f64>)> {
    let noise = NoiseModel::new(sigma2).expect("valid variance");
    let eps = rng.random_range(0.1..0.9);
    let lambda0 = rng.random_range(0.0..0.6);
    let split = rng.random_range(0.2..0.8);
    let single = SingleObsModel::new(eps, noise, ClutterModel::uniform(n)).expect("valid model");
    let m1 = MultiObsModel::new(lambda0, vec![1.0 - lambda0], noise, ClutterModel::uniform(n))
        .expect("valid model");
    let m2 = MultiObsModel::new(
        lambda0,
        vec![(1.0 - lambda0) * split, (1.0 - lambda0) * (1.0 - split)],
        noise,
        ClutterModel::uniform(n),
    )
    .expect("valid model");
    vec![
        ("clutter_free", ObservationModel::ClutterFree(noise)),
        ("single", ObservationModel::Single(single)),
        ("multi_m1", ObservationModel::Multi(m1)),
        ("multi_m2", ObservationModel::Multi(m2)),
    ]
}

fn relative_error(loglik: f64, exact: f64) -> f64 {
    ((loglik - exact.ln()).exp() - 1.0).abs()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn filters_suite(opts: &OracleOptions, tally: &mut Tally) -> Result<(), OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for case in 0..opts.instances {
        let mut inst = RandomInstance::generate(&mut rng)?;
        let grid = inst.grid;
        let n = grid.n();
        let path = sample_rc_path(&inst.bridges, &inst.endpoints, &mut rng);
        if opts.perturb {
            let k = path[inst.horizon];
            inst.bridges.perturb_entry(0, k, path[0], path[1], 1e-3);
        }
        // Noiseless on most instances, as the enumeration alphabet is then
        // exactly the cell centers; every fourth instance adds noise.
        let sigma2 = if case % 4 == 3 { 0.5 } else { 0.0 };
        for (label, obs) in random_regimes(&mut rng, n, sigma2) {
            let records: Vec<ObservationRecord<f64>> = path
                .iter()
                .enumerate()
                .map(|(t, &x)| obs.generate(t, x, &grid, &mut rng))
                .collect();
            let table = tabulate(&obs.evidence(&grid, &records).expect("matching arity"));
            for kind in DetectorKind::ALL {
                let out: Result<FilterOutput<f64>, _> = match kind {
                    DetectorKind::Hrc => hrc_filter(&table, &inst.bridges, &inst.endpoints),
                    DetectorKind::Hmc => hmc_filter(&table, &inst.base, &inst.pi0),
                    DetectorKind::Hsc => hsc_filter(&table, &inst.sb, &inst.pi0),
                };
                let model = inst.oracle_model(kind);
                let e = enumerate(&model, &records, &obs, &grid)?;
                let (ll_dev, q_dev) = match out {
                    Ok(out) => {
                        let mut q_dev = 0.0f64;
                        for (t, q) in out.marginals.iter().enumerate() {
                            let z: f64 = e.joint[t].iter().sum();
                            let exact: Vec<f64> = e.joint[t].iter().map(|x| x / z).collect();
                            q_dev = q_dev.max(max_abs_diff(q, &exact));
                        }
                        (relative_error(out.loglik, e.total), q_dev)
                    }
                    // A positive-probability sequence must never abort.
                    Err(_) => (f64::INFINITY, f64::INFINITY),
                };
                tally.record(&format!("{kind}/{label} loglik (relative)"), 1e-8, ll_dev);
                tally.record(&format!("{kind}/{label} marginals"), 1e-8, q_dev);
            }
        }
    }
    Ok(())
}

fn bridges_suite(opts: &OracleOptions, tally: &mut Tally) -> Result<(), OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xB1D6E);
    for _ in 0..opts.instances {
        let mut inst = RandomInstance::generate(&mut rng)?;
        let n = inst.grid.n();
        let horizon = inst.horizon;
        if opts.perturb {
            let path = sample_rc_path(&inst.bridges, &inst.endpoints, &mut rng);
            inst.bridges.perturb_entry(0, path[horizon], path[0], path[1], 1e-3);
        }
        let closed = bridges_from_base_closed_form(&inst.base, &inst.endpoints, horizon)
            .map_err(|e| OracleError::Instance(e.to_string()))?;
        let mut rec_dev = 0.0f64;
        let mut reach_dev = 0.0f64;
        for k in (0..n).filter(|&k| inst.bridges.initial(k).is_some()) {
            for t in 0..horizon {
                for i in 0..n {
                    for j in 0..n {
                        let d = (inst.bridges.transition(t, k, i, j) - closed.transition(t, k, i, j)).abs();
                        rec_dev = rec_dev.max(d);
                    }
                }
            }
            let laws = inst.bridges.propagate(k).expect("destination has mass");
            reach_dev = reach_dev.max((laws[horizon][k] - 1.0).abs());
        }
        tally.record("recursion vs closed form", 1e-10, rec_dev);
        tally.record("row sums", 1e-12, inst.bridges.max_row_error());
        tally.record("terminal pin mass", 1e-10, reach_dev);

        // Pr{X_{t+1} = j | X_t = i, X_T = k} by enumerating the RC path law.
        let model = OracleModel::Reciprocal { base: inst.base.clone(), endpoints: inst.endpoints.clone() };
        let at = inst.base.power(horizon);
        let epochs = horizon + 1;
        // pair[t][(k * n + i) * n + j] and single[t][k * n + i]
        let mut pair = vec![vec![0.0; n * n * n]; horizon];
        let mut single = vec![vec![0.0; n * n]; horizon];
        let mut path = vec![0usize; epochs];
        for code in 0..(n as u64).pow(epochs as u32) {
            let mut c = code;
            for x in path.iter_mut() {
                *x = (c % n as u64) as usize;
                c /= n as u64;
            }
            let p = model.path_probability(&path, &at);
            if p == 0.0 {
                continue;
            }
            let k = path[horizon];
            for t in 0..horizon {
                single[t][k * n + path[t]] += p;
                pair[t][(k * n + path[t]) * n + path[t + 1]] += p;
            }
        }
        let mut cond_dev = 0.0f64;
        for t in 0..horizon {
            for k in 0..n {
                for i in 0..n {
                    let denom = single[t][k * n + i];
                    if denom <= 1e-300 {
                        continue;
                    }
                    for j in 0..n {
                        let exact = pair[t][(k * n + i) * n + j] / denom;
                        cond_dev = cond_dev.max((inst.bridges.transition(t, k, i, j) - exact).abs());
                    }
                }
            }
        }
        tally.record("bridge conditionals vs enumeration", 1e-10, cond_dev);
    }
    Ok(())
}

fn likelihoods_suite(opts: &OracleOptions, tally: &mut Tally) -> Result<(), OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x11CE);
    for case in 0..opts.instances {
        let grid = GridSpec::new(rng.random_range(2..=4), rng.random_range(1..=3))
            .map_err(|e| OracleError::Instance(e.to_string()))?;
        let n = grid.n();
        let sigma2 = if case % 2 == 0 { 0.0 } else { rng.random_range(0.2..2.0) };
        let noise = NoiseModel::new(sigma2).expect("valid variance");
        let point = |rng: &mut ChaCha8Rng| -> Point<f64> {
            if sigma2 == 0.0 {
                grid.center(rng.random_range(0..n))
            } else {
                [rng.random_range(0.0..grid.width as f64 + 1.0), rng.random_range(0.0..grid.height as f64 + 1.0)]
            }
        };
        let m = rng.random_range(1..=3);
        let lambda0 = rng.random_range(0.0..0.5);
        let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x *= (1.0 - lambda0) / s);
        let multi = MultiObsModel::new(lambda0, w, noise, ClutterModel::uniform(n)).expect("valid model");
        let single = SingleObsModel::new(rng.random_range(0.0..1.0), noise, ClutterModel::uniform(n))
            .expect("valid model");
        let multi_obs = ObservationModel::Multi(multi.clone());
        let single_obs = ObservationModel::Single(single.clone());
        let ys: Vec<Point<f64>> = (0..m).map(|_| point(&mut rng)).collect();
        let mut multi_dev = 0.0f64;
        let mut single_dev = 0.0f64;
        for i in 0..n {
            let exact = association_sum(&ys, i, &multi_obs, &grid);
            let fast = multi_obs_likelihood(&ys, i, &multi, &grid).expect("matching arity");
            multi_dev = multi_dev.max((fast - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
            let exact = association_sum(&ys[..1], i, &single_obs, &grid);
            let fast = single_obs_likelihood(&ys[0], i, &single, &grid);
            single_dev = single_dev.max((fast - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
        }
        tally.record("multi likelihood vs association enumeration", 1e-12, multi_dev);
        tally.record("single likelihood vs event enumeration", 1e-12, single_dev);

        // All-clutter alternative reproduces the null likelihood through the filter.
        let inst = RandomInstance::generate(&mut rng)?;
        let g = inst.grid;
        let all_clutter = ObservationModel::Single(SingleObsModel::uniform(1.0, sigma2, g.n()).expect("valid"));
        let records: Vec<_> = (0..=inst.horizon).map(|t| all_clutter.generate(t, 0, &g, &mut rng)).collect();
        let table = tabulate(&all_clutter.evidence(&g, &records).expect("matching arity"));
        let null = null_loglik(&records, &all_clutter, &g).expect("matching arity");
        let filtered = hrc_filter(&table, &inst.bridges, &inst.endpoints).map(|o| o.loglik);
        tally.record(
            "null loglik vs all-clutter filter",
            1e-10,
            filtered.map_or(f64::INFINITY, |l| (l - null).abs()),
        );
        let exact = brute_force_sequence_likelihood(&inst.oracle_model(DetectorKind::Hrc), &records, &all_clutter, &g)?;
        tally.record("null loglik vs enumeration", 1e-10, (exact.ln() - null).abs());
    }
    Ok(())
}

/// Run the selected suites; an empty selection is an error.
pub fn run_oracle_suites(suites: &[OracleSuite], opts: &OracleOptions) -> Result<Vec<OracleCheck>, OracleError> {
    if suites.is_empty() || opts.instances == 0 {
        return Err(OracleError::EmptySelection);
    }
    let mut out = Vec::new();
    for &suite in suites {
        let mut tally = Tally::new(suite);
        match suite {
            OracleSuite::Filters => filters_suite(opts, &mut tally)?,
            OracleSuite::Bridges => bridges_suite(opts, &mut tally)?,
            OracleSuite::Likelihoods => likelihoods_suite(opts, &mut tally)?,
        }
        out.extend(tally.checks);
    }
    Ok(out)
}
