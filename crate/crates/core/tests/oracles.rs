mod common;

use gdro_core::budgeter::{BudgeterConfig, BudgeterState, DpWeighting};
use gdro_core::oracles::bounded_diff::{normalized_gradient, score_bound};
use gdro_core::oracles::convex_game::minimize_weighted_loss;
use gdro_core::oracles::{
    lse_value_and_best_response, shadow_price_best_response, sqrt_allocation, ConvexGameSpec, EntropicSurrogateQuery,
    RolloutGameSpec, VarianceAllocQuery,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn distribution(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.05f64..1.0, len).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lse_matches_reference_and_sandwich(
        losses in proptest::collection::vec(-50.0f64..50.0, 1..40),
        eta in prop_oneof![Just(0.1f64), Just(1.0), Just(10.0), 0.01f64..100.0],
    ) {
        let r = lse_value_and_best_response(&EntropicSurrogateQuery { losses: losses.clone(), temperature: eta }).unwrap();
        let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r.value >= max);
        prop_assert!(r.value <= max + (losses.len() as f64).ln() / eta + 1e-12 * (1.0 + max.abs()));
        prop_assert!((r.value - reference_lse(&losses, eta)).abs() <= 1e-12 * (1.0 + max.abs()));
        for (p, e) in r.distribution.iter().zip(reference_softmax(&losses, eta)) {
            prop_assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sqrt_law_matches_newton_solver(
        (q, v) in (2usize..12).prop_flat_map(|b| (distribution(b..b + 1), proptest::collection::vec(0.01f64..5.0, b))),
        budget in 1.0f64..16.0,
    ) {
        let r = sqrt_allocation(&VarianceAllocQuery { variances: v.clone(), shares: q.clone(), mean_budget: budget }).unwrap();
        let n = newton_allocation(&v, &q, budget);
        for (a, e) in r.allocation.iter().zip(&n) {
            prop_assert!((a - e).abs() < 1e-9 * budget.max(1.0));
        }
        prop_assert!(r.optimal_value <= r.uniform_value * (1.0 + 1e-12));
    }

    #[test]
    fn shadow_price_response_minimizes_penalized_variance(v in 0.01f64..10.0, mu in 0.001f64..10.0) {
        let n = shadow_price_best_response(v, mu).unwrap();
        let f = |x: f64| v / x + mu * x;
        prop_assert!(f(n) <= f(n * 1.001) && f(n) <= f(n * 0.999));
    }

    #[test]
    fn dp_matches_enumeration(
        seed in any::<u64>(),
        bins in 1usize..=4,
        k in 2usize..=5,
        m in 1usize..=12,
        unweighted in any::<bool>(),
    ) {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n_min = r.random_range(1..=2usize);
        let n_max = n_min + k - 1;
        let target = r.random_range(m * n_min..=m * n_max);
        let weighting = if unweighted { DpWeighting::Unweighted } else { DpWeighting::CountWeighted };
        let cfg = BudgeterConfig { n_min, n_max, mean_budget: target as f64 / m as f64, weighting, ..BudgeterConfig::default() };
        let mut state = BudgeterState::new(bins, cfg).unwrap();
        for b in 0..bins {
            for _ in 0..r.random_range(0..5) {
                state.update_arm_scores(b, r.random_range(n_min..=n_max), r.random_range(0.0..3.0)).unwrap();
            }
        }
        let mut counts = vec![0usize; bins];
        for _ in 0..m {
            counts[r.random_range(0..bins)] += 1;
        }
        let got = state.select_allocation(&counts, m).unwrap();
        let arms: Vec<usize> = (n_min..=n_max).collect();
        let log_p: Vec<Vec<f64>> = (0..bins).map(|b| state.arm_distribution(b).iter().map(|p| p.ln()).collect()).collect();
        let (want, total, obj, feasible) = brute_force_allocation(&counts, &arms, &log_p, target, !unweighted);
        prop_assert_eq!(got.arms, want);
        prop_assert_eq!(got.total, total);
        prop_assert_eq!(got.feasible, feasible);
        prop_assert!((got.objective - obj).abs() <= 1e-9 * (1.0 + obj.abs()));
    }

    #[test]
    fn rollout_hull_optimum_equals_lp_dual(seed in any::<u64>(), bins in 1usize..=4, k in 1usize..=5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let spec = RolloutGameSpec::random(&mut r, bins, k, 10);
        let hull = spec.brute_force_optimum().expect("budget within arm range");
        let dual = rollout_lp_optimum(&spec);
        prop_assert!((hull - dual).abs() < 1e-9 * (1.0 + hull.abs()), "hull {} dual {}", hull, dual);
    }

    #[test]
    fn fista_inner_solver_matches_projected_centroid(seed in any::<u64>(), d in 1usize..=10, b in 1usize..=8, q in distribution(1..9)) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let spec = ConvexGameSpec::random(&mut r, d, b, 10, 0.0);
        let mut weights: Vec<f64> = q.into_iter().chain(std::iter::repeat(0.1)).take(b).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let sol = minimize_weighted_loss(&spec, &weights, 1e-10);
        prop_assert!(sol.converged);
        let exact = convex_inner_minimum(&spec, &weights);
        prop_assert!(sol.value >= exact - 1e-12);
        prop_assert!(sol.value - exact < 1e-8);
    }

    #[test]
    fn group_gradient_and_score_bound_match_reference(
        probs in distribution(2..9),
        answers_raw in proptest::collection::vec(0usize..100, 1..10),
        eps in 1e-6f64..2.0,
    ) {
        let a = probs.len();
        let answers: Vec<usize> = answers_raw.iter().map(|x| x % a).collect();
        let rewards: Vec<f64> = answers.iter().map(|&y| if y == 0 { 2.0 } else { 0.0 }).collect();
        let g = normalized_gradient(&answers, &rewards, &probs, eps, None);
        let e = reference_group_gradient(&answers, &rewards, &probs, eps);
        for (x, y) in g.iter().zip(&e) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
        prop_assert!((score_bound(&probs) - reference_score_bound(&probs)).abs() < 1e-12);
    }
}

#[test]
fn newton_reference_solves_a_hand_instance() {
    // Two equal-share bins with variances 1 and 4: n proportional to sqrt(v) gives (8/3, 16/3) at budget 4.
    let n = newton_allocation(&[1.0, 4.0], &[0.5, 0.5], 4.0);
    assert!((n[0] - 8.0 / 3.0).abs() < 1e-12);
    assert!((n[1] - 16.0 / 3.0).abs() < 1e-12);
}

#[test]
fn lp_dual_reference_on_hand_instance() {
    // One bin, arms {1, 2}, costs {1, 0.5}, budget 1.5: the optimum mixes evenly for 0.75.
    let spec = RolloutGameSpec {
        shares: vec![1.0],
        arms: vec![1, 2],
        costs: vec![vec![1.0, 0.5]],
        mean_budget: 1.5,
        dual_cap: 5.0,
        horizon: 1,
        primal_step: None,
        dual_step: None,
    };
    assert!((rollout_lp_optimum(&spec) - 0.75).abs() < 1e-12);
}
