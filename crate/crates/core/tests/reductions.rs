mod common;

use csp_sched::generate::{generate, CapacityProfile, GeneratorConfig, UtilityModel, WindowModel};
use csp_sched::mixed::{
    compute_lb, discretize, discretize_with, level_count, level_fractions, map_back, LevelArithmetic,
    Origin,
};
use csp_sched::model::{angle_stats, evaluate, weighted_loads};
use csp_sched::oracle::{exact_solve, exact_solve_mixed, OracleBudget};
use csp_sched::ufp::{
    solve_large_local_ratio, solve_small_greedy, solve_split, to_bag_ufp, BagUfpSolver,
    DeltaSplit, ExactBag, LocalRatio,
};
use csp_sched::Instance;
use proptest::prelude::*;

fn nba_instance(seed: u64, n: usize, m: usize, magnitudes: (f64, f64)) -> Instance {
    generate(&GeneratorConfig {
        seed,
        n,
        m,
        capacity_profile: CapacityProfile::Valley,
        magnitude_range: magnitudes,
        constant_demands: true,
        window_model: WindowModel::RandomContiguous,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn mixed_instance(seed: u64, n: usize, m: usize) -> Instance {
    generate(&GeneratorConfig {
        seed,
        n,
        m,
        elastic_fraction: 0.5,
        magnitude_range: (1.0, 15.0),
        utility_model: UtilityModel::Uniform,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn magnitude_and_complex_feasibility_sandwich(seed in 0u64..100_000, m in 1usize..4) {
        let inst = nba_instance(seed, 5, m, (1.0, 10.0));
        let cos = (angle_stats(&inst).phi / 2.0).cos();
        let bag = to_bag_ufp(&inst).unwrap();
        for sel in common::all_selections(&inst) {
            let mag = bag.loads(&sel);
            if bag.is_feasible(&sel) {
                prop_assert!(common::selection_fits(&inst, &sel, 1.0));
            }
            // The magnitude relaxation accepts every feasible selection at x = cos(phi / 2).
            if common::selection_fits(&inst, &sel, 1.0) {
                prop_assert!(mag.iter().zip(&inst.capacities).all(|(l, c)| cos * l <= c * (1.0 + 1e-9)));
            }
        }
    }

    #[test]
    fn split_solution_dominates_both_sides(seed in 0u64..100_000, n in 0usize..8, m in 1usize..5, delta in prop::sample::select(vec![0.25, 0.5, 1.0])) {
        let inst = nba_instance(seed, n, m, (1.0, 10.0));
        let (sel, report) = solve_split(&inst, delta).unwrap();
        let bag = to_bag_ufp(&inst).unwrap();
        let split = DeltaSplit::new(&bag, delta).unwrap();
        let large = solve_large_local_ratio(&bag, &split);
        let small = solve_small_greedy(&bag, &split);
        prop_assert!(report.utility + 1e-12 >= bag.utility(&large).max(bag.utility(&small)));
        prop_assert!(common::selection_fits(&inst, &sel, 1.0));
        prop_assert!(bag.is_feasible(&small));
        prop_assert_eq!(split.small.len() + split.large.len(), inst.pref_count());
        if split.small.is_empty() {
            prop_assert_eq!(&sel, &large);
        }
        if split.large.is_empty() && !small.is_empty() {
            prop_assert_eq!(&sel, &small);
        }
    }

    #[test]
    fn local_ratio_is_half_optimal_among_disjoint(seed in 0u64..100_000, n in 1usize..7, m in 1usize..6) {
        let inst = nba_instance(seed, n, m, (6.0, 10.0));
        let bag = to_bag_ufp(&inst).unwrap();
        let all: Vec<_> = bag.refs().collect();
        let lr = LocalRatio.solve(&bag, &all).unwrap();
        let disjoint = |s: &csp_sched::Selection| {
            let v: Vec<_> = s.iter().collect();
            s.respects_bags()
                && v.iter().enumerate().all(|(i, a)| v[i + 1..].iter().all(|b| !bag.demand(*a).overlaps(bag.demand(*b))))
        };
        prop_assert!(disjoint(&lr));
        let best = common::all_selections(&inst)
            .into_iter()
            .filter(|s| disjoint(s))
            .map(|s| bag.utility(&s))
            .fold(0.0, f64::max);
        prop_assert!(bag.utility(&lr) + 1e-9 >= 0.5 * best);
        let exact = ExactBag::default().solve(&bag, &all).unwrap();
        prop_assert!(bag.is_feasible(&exact));
        prop_assert!(bag.utility(&exact) + 1e-9 >= bag.utility(&lr));
    }

    #[test]
    fn lower_bound_witness_is_feasible(seed in 0u64..100_000, n in 1usize..4, m in 1usize..3) {
        let inst = mixed_instance(seed, n, m);
        let lb = compute_lb(&inst).unwrap();
        prop_assert!(lb.value > 0.0);
        prop_assert!(common::fits(&inst, &[(lb.witness, lb.fraction)], 1.0));
        prop_assert!(common::close(lb.value, lb.fraction * inst.pref(lb.witness).utility));
        let grid = exact_solve_mixed(&inst, 10, &OracleBudget::default()).unwrap();
        prop_assert!(grid.utility + grid.grid_error + 1e-9 >= lb.value);
    }

    #[test]
    fn levels_are_geometric_and_bounded(n in 1usize..50, u in 0.01f64..100.0, eps in 0.05f64..0.95, lb in 0.01f64..100.0) {
        let lb = lb.min(u * n as f64 * 10.0);
        for a in [LevelArithmetic::Float, LevelArithmetic::Exact] {
            let f = level_fractions(n, u, eps, lb, a);
            if let Some(&top) = f.last() {
                prop_assert!(top <= 1.0 && top >= 1.0 / (1.0 + eps) - 1e-12);
            }
            for w in f.windows(2).take(f.len().saturating_sub(2)) {
                prop_assert!((w[1] / w[0] - (1.0 + eps)).abs() <= 1e-9);
            }
            let ratio = n as f64 * u / (eps * lb);
            let bound = if ratio > 1.0 { ratio.ln() / eps.ln_1p() + 1.0 } else { 0.0 };
            prop_assert!(f.len() as f64 <= bound + 1e-9);
        }
        let exact = level_fractions(n, u, eps, lb, LevelArithmetic::Exact).len();
        prop_assert!(exact.abs_diff(level_count(n, u, eps, lb)) <= 1);
    }

    #[test]
    fn map_back_keeps_loads_and_bound(seed in 0u64..100_000, n in 1usize..4, m in 1usize..3, eps in prop::sample::select(vec![0.25, 0.5])) {
        let inst = mixed_instance(seed, n, m);
        let budget = OracleBudget::default();
        let d = discretize(&inst, eps).unwrap();
        let (sel, _) = exact_solve(&d.instance, &budget).unwrap();
        let sol = map_back(&sel, &d.map).unwrap();
        let before = evaluate(&d.instance, &sel).unwrap().per_slot_load;
        let after = weighted_loads(&inst, &sol.weighted()).unwrap();
        prop_assert_eq!(before, after);
        let grid = exact_solve_mixed(&inst, 20, &budget).unwrap();
        let u: f64 = sol.weighted().iter().map(|&(r, x)| x * inst.pref(r).utility).sum();
        prop_assert!(u + 1e-9 >= (1.0 - eps) * grid.utility - grid.grid_error);
        for r in d.instance.pref_refs() {
            if let Origin::Level { fraction, .. } = d.map.origin(r) {
                prop_assert!(fraction > 0.0 && fraction <= 1.0);
            }
        }
        let exact = discretize_with(&inst, eps, LevelArithmetic::Exact).unwrap();
        prop_assert!(exact.map.level_count().abs_diff(d.map.level_count()) <= inst.pref_count());
    }
}
