use hrc_core::chain::{
    bridges_from_base_closed_form, bridges_from_kernel, sample_markov_path, solve_schrodinger,
    three_point_from_base, EndpointDistribution, SinkhornOptions, TransitionMatrix,
};
use hrc_core::detect::{auc, roc_from_scores, TrackerModels};
use hrc_core::filter::{hmc_filter, hrc_filter, hsc_filter, LikelihoodTable};
use hrc_core::gridworld::{build_random_walk, endpoints_mixture, GridSpec};
use hrc_core::observation::{
    clutter_point_likelihood, multi_obs_likelihood, point_likelihood, single_obs_likelihood,
    MultiObsModel, ObservationModel, SingleObsModel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_stochastic(n: usize, rng: &mut ChaCha8Rng) -> TransitionMatrix<f64> {
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            row
        })
        .collect();
    TransitionMatrix::from_rows(rows).unwrap()
}

fn random_distribution(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn max_bridge_gap(a: &hrc_core::BridgeFamilyF64, b: &hrc_core::BridgeFamilyF64) -> f64 {
    let n = a.n();
    let mut worst: f64 = 0.0;
    for t in 0..a.horizon() {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((a.transition(t, k, i, j) - b.transition(t, k, i, j)).abs());
                }
            }
        }
    }
    worst
}

fn random_table(n: usize, epochs: usize, rng: &mut ChaCha8Rng) -> LikelihoodTable<f64> {
    LikelihoodTable {
        rows: (0..epochs).map(|_| (0..n).map(|_| rng.random_range(0.01..1.0)).collect()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dense_bridges_match_closed_form(seed in any::<u64>(), n in 2usize..6, horizon in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_stochastic(n, &mut rng);
        let pi = EndpointDistribution::from_flat(n, random_distribution(n * n, &mut rng)).unwrap();
        let rec = bridges_from_kernel(&three_point_from_base(&base, horizon).unwrap(), &pi).unwrap();
        let closed = bridges_from_base_closed_form(&base, &pi, horizon).unwrap();
        prop_assert!(max_bridge_gap(&rec, &closed) <= 1e-10);
        prop_assert!(rec.max_row_error() <= 1e-12);
    }

    // Sparse grid walks force the recursion to chain several pivots per row;
    // the result must not depend on which ones it picked.
    #[test]
    fn pivot_choice_does_not_change_bridges(
        w in 2usize..5, h in 2usize..4, p_stay in 0.05f64..0.95, alpha in 0.0f64..=1.0, extra in 0usize..4,
    ) {
        let grid = GridSpec::new(w, h).unwrap();
        let base = build_random_walk::<f64>(&grid, p_stay).unwrap();
        let horizon = grid.min_steps(0, grid.n() - 1).max(2) + extra;
        let pi = endpoints_mixture::<f64>(&grid, alpha).unwrap();
        let rec = bridges_from_kernel(&three_point_from_base(&base, horizon).unwrap(), &pi).unwrap();
        let closed = bridges_from_base_closed_form(&base, &pi, horizon).unwrap();
        prop_assert!(max_bridge_gap(&rec, &closed) <= 1e-10);
        prop_assert!(rec.max_row_error() <= 1e-12);
    }

    #[test]
    fn filters_stay_normalized(seed in any::<u64>(), alpha in 0.0f64..=1.0, horizon in 3usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = GridSpec::new(3, 3).unwrap();
        let pi = endpoints_mixture::<f64>(&grid, alpha).unwrap();
        let models = TrackerModels::gridworld(grid, 0.3, pi, horizon.max(4)).unwrap();
        let table = random_table(grid.n(), models.horizon + 1, &mut rng);
        let outs = [
            hrc_filter(&table, &models.bridges, &models.endpoints).unwrap(),
            hmc_filter(&table, &models.base, &models.pi0).unwrap(),
            hsc_filter(&table, &models.sb, &models.pi0).unwrap(),
        ];
        for out in &outs {
            for q in &out.marginals {
                prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(q.iter().all(|&x| x >= 0.0));
            }
            let total: f64 = out.h.iter().map(|h| h.ln()).sum();
            prop_assert!((total - out.loglik).abs() <= 1e-10 * total.abs().max(1.0));
        }
    }

    #[test]
    fn roc_is_monotone_and_auc_is_the_rank_statistic(
        h1 in prop::collection::vec(-5i32..5, 1..40),
        h0 in prop::collection::vec(-5i32..5, 1..40),
    ) {
        // Integer-valued scores make ties common.
        let h1: Vec<f64> = h1.into_iter().map(f64::from).collect();
        let h0: Vec<f64> = h0.into_iter().map(f64::from).collect();
        let curve = roc_from_scores(&h1, &h0);
        let pts = &curve.points;
        prop_assert_eq!((pts[0].p_fa, pts[0].p_d), (0.0, 0.0));
        prop_assert_eq!((pts[pts.len() - 1].p_fa, pts[pts.len() - 1].p_d), (1.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[1].p_fa >= w[0].p_fa && w[1].p_d >= w[0].p_d);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
        let mut wins = 0.0;
        for a in &h1 {
            for b in &h0 {
                wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        let mann_whitney = wins / (h1.len() * h0.len()) as f64;
        prop_assert!((auc(&curve) - mann_whitney).abs() <= 1e-12);
    }

    #[test]
    fn single_slot_multi_model_nests_single(
        lambda0 in 0.0f64..=1.0, sigma2 in 0.1f64..3.0, x in 0.0f64..4.0, y in 0.0f64..4.0,
    ) {
        let grid = GridSpec::new(4, 4).unwrap();
        let n = grid.n();
        let multi = MultiObsModel::exchangeable(1, lambda0, sigma2, n).unwrap();
        let single = SingleObsModel::uniform(lambda0, sigma2, n).unwrap();
        for i in 0..n {
            let a = multi_obs_likelihood(&[[x, y]], i, &multi, &grid).unwrap();
            let b = single_obs_likelihood(&[x, y], i, &single, &grid);
            prop_assert!((a - b).abs() <= 1e-14 * b.max(1e-300));
        }
    }

    #[test]
    fn multi_likelihood_matches_direct_association_sum(
        seed in any::<u64>(), m in 1usize..6, lambda0 in 0.0f64..=1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = GridSpec::new(3, 3).unwrap();
        let n = grid.n();
        let model = MultiObsModel::exchangeable(m, lambda0, 0.7, n).unwrap();
        let ys: Vec<[f64; 2]> = (0..m).map(|_| [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]).collect();
        let clutter: Vec<f64> = ys.iter().map(|y| clutter_point_likelihood(y, &model.noise, &model.clutter, &grid)).collect();
        for i in 0..n {
            let mut direct = model.lambda0 * clutter.iter().product::<f64>();
            for l in 0..m {
                let others: f64 = (0..m).filter(|&r| r != l).map(|r| clutter[r]).product();
                direct += model.lambdas[l] * point_likelihood(&ys[l], i, &model.noise, &grid) * others;
            }
            let got = multi_obs_likelihood(&ys, i, &model, &grid).unwrap();
            prop_assert!((got - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn markov_endpoint_law_collapses_hrc_to_hmc(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = GridSpec::new(4, 4).unwrap();
        let n = grid.n();
        let horizon = 6;
        let base = build_random_walk::<f64>(&grid, rng.random_range(0.1..0.9)).unwrap();
        let pi0 = random_distribution(n, &mut rng);
        let pi = EndpointDistribution::markov_induced(&base, &pi0, horizon).unwrap();
        let bridges = bridges_from_kernel(&three_point_from_base(&base, horizon).unwrap(), &pi).unwrap();
        let obs = ObservationModel::Single(SingleObsModel::uniform(0.4, 1.0, n).unwrap());
        let path = sample_markov_path(&base, &pi0, horizon, &mut rng);
        let records: Vec<_> = path.iter().enumerate().map(|(t, &x)| obs.generate(t, x, &grid, &mut rng)).collect();
        let ev = obs.evidence(&grid, &records).unwrap();
        let rc = hrc_filter(&ev, &bridges, &pi).unwrap();
        let mc = hmc_filter(&ev, &base, &pi0).unwrap();
        for (a, b) in rc.marginals.iter().zip(&mc.marginals) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
        prop_assert!((rc.loglik - mc.loglik).abs() <= 1e-9 * mc.loglik.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn schrodinger_bridge_attains_both_marginals(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = GridSpec::new(8, 8).unwrap();
        let n = grid.n();
        let base = build_random_walk::<f64>(&grid, rng.random_range(0.1..0.9)).unwrap();
        let pi0 = random_distribution(n, &mut rng);
        let pi_t = random_distribution(n, &mut rng);
        let sb = solve_schrodinger(&base, &pi0, &pi_t, 12, SinkhornOptions::default()).unwrap();
        let reached = sb.propagate(&pi0);
        let err = reached.iter().zip(&pi_t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-8);
        prop_assert!(sb.max_row_error() <= 1e-12);
    }
}
