//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any
//! failure.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force, close, feasible_selections, fits, selection_fits};
use csp_sched::fptas::{self, dkp_exact, round_demands};
use csp_sched::generate::{generate, CapacityProfile, GeneratorConfig, UtilityModel, WindowModel};
use csp_sched::io::solution_to_json;
use csp_sched::mixed::{discretize, map_back};
use csp_sched::model::{angle_stats, angle_sum_bound_check, evaluate, weighted_loads};
use csp_sched::oracle::{exact_fit_solve, exact_solve, exact_solve_mixed, IntDemand, OracleBudget};
use csp_sched::ptas::{solve_ptas_with, PtasConfig, PtasStats};
use csp_sched::solver::{solve, Algorithm, SolveOptions};
use csp_sched::ufp::{
    carry_back, crossing_bound_check, solve_large_local_ratio, to_bag_ufp, DeltaSplit,
};
use csp_sched::{ComplexPower, Exec, Instance, PrefRef, Selection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: usize, checked: usize, what: &str, elapsed: Duration, limit: Option<Duration>) -> Outcome {
    let in_time = limit.is_none_or(|l| elapsed < l);
    let limit_txt = limit.map(|l| format!(" (limit {:.0?})", l)).unwrap_or_default();
    Outcome {
        pass: failures == 0 && in_time,
        detail: format!(
            "{failures} violations over {checked} {what}, {:.2?}{limit_txt}",
            elapsed
        ),
    }
}

fn gen(cfg: GeneratorConfig) -> Instance {
    generate(&cfg).expect("generator output is valid")
}

fn c1_greedy_ratio() -> Outcome {
    let start = Instant::now();
    let mut bad = 0;
    let mut worst = f64::INFINITY;
    let count = 500;
    for seed in 0..count {
        let inst = gen(GeneratorConfig {
            seed,
            n: 1 + (seed as usize % 8),
            max_prefs_per_user: 3,
            m: 1,
            ..GeneratorConfig::default()
        });
        let (sel, _) = csp_sched::greedy::solve(&inst).unwrap();
        let opt = brute_force(&inst);
        let u = sel.utility(&inst);
        let bound = 0.5 * (angle_stats(&inst).phi / 2.0).cos();
        if opt > 0.0 {
            worst = worst.min(u / opt);
        }
        if u < bound * opt - 1e-9 * opt || !selection_fits(&inst, &sel, 1.0) {
            bad += 1;
        }
    }
    let mut o = outcome(bad, count as usize, "instances", start.elapsed(), Some(Duration::from_secs(10)));
    o.detail += &format!(", worst ratio {worst:.4}");
    o
}

/// Instances for the bi-criteria checks: one or two slots, up to six users,
/// some of them in the second quadrant.
fn fptas_instances() -> Vec<(Instance, f64)> {
    let mut out = Vec::new();
    for seed in 0..50u64 {
        let inst = gen(GeneratorConfig {
            seed: 1000 + seed,
            n: 1 + (seed as usize % 6),
            max_prefs_per_user: 2,
            m: 1 + (seed as usize % 2),
            angle_max: if seed % 3 == 0 { 2.0 } else { FRAC_PI_2 },
            ..GeneratorConfig::default()
        });
        for eps in [0.25, 0.5] {
            out.push((inst.clone(), eps));
        }
    }
    out
}

fn c2_fptas() -> Outcome {
    let start = Instant::now();
    let cases = fptas_instances();
    let mut bad = 0;
    for (inst, eps) in &cases {
        let (sel, report) = fptas::solve_bifptas(inst, *eps).unwrap();
        let opt = brute_force(inst);
        if report.utility < opt - 1e-9 * opt.max(1.0) || !selection_fits(inst, &sel, 1.0 + 4.0 * eps) {
            bad += 1;
        }
    }
    outcome(bad, cases.len(), "runs", start.elapsed(), Some(Duration::from_secs(300)))
}

fn c3_rounding() -> Outcome {
    let start = Instant::now();
    let mut bad = 0;
    let mut checked = 0;
    for (inst, eps) in fptas_instances() {
        let (rounded, scale) = round_demands(&inst, eps).unwrap();
        for sel in feasible_selections(&inst) {
            checked += 1;
            let m = inst.slots();
            let (mut re, mut im) = (vec![0i64; m], vec![0i64; m]);
            for r in sel.iter() {
                let (a, b) = rounded.signed(r);
                for t in 0..m {
                    re[t] += a[t];
                    im[t] += b[t];
                }
            }
            let over = (0..m).any(|t| {
                let mag = (re[t] as f64 * scale.l[t]).hypot(im[t] as f64 * scale.l[t]);
                let c = inst.capacities[t];
                mag > (1.0 + 2.0 * eps) * c + 1e-9 * c
            });
            if over {
                bad += 1;
            }
        }
    }
    outcome(bad, checked, "feasible selections", start.elapsed(), None)
}

fn c4_dkp() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    let count = 1000;
    for _ in 0..count {
        let m = rng.random_range(1..=2);
        let n = rng.random_range(0..=5);
        let users: Vec<Vec<IntDemand>> = (0..n)
            .map(|_| {
                (0..rng.random_range(1..=3))
                    .map(|_| IntDemand {
                        re: (0..m).map(|_| rng.random_range(0..=6)).collect(),
                        im: (0..m).map(|_| rng.random_range(0..=6)).collect(),
                        utility: rng.random_range(1..=20) as f64,
                    })
                    .collect()
            })
            .collect();
        let c1: Vec<i64> = (0..m).map(|_| rng.random_range(0..=12)).collect();
        let c2: Vec<i64> = (0..m).map(|_| rng.random_range(0..=12)).collect();
        let dp = dkp_exact(&users, &c1, &c2, u64::MAX).unwrap().map(|(_, u)| u);
        let ex = exact_fit_solve(&users, &c1, &c2, &OracleBudget::default())
            .unwrap()
            .map(|(_, u)| u);
        if dp != ex {
            bad += 1;
        }
    }
    outcome(bad, count, "inputs", start.elapsed(), None)
}

struct PtasRun {
    a_bad: usize,
    a_count: usize,
    b_bad: usize,
    b_count: usize,
    worst_b: f64,
    stats: PtasStats,
    elapsed: Duration,
}

fn ptas_runs() -> PtasRun {
    let start = Instant::now();
    let mut stats = PtasStats::default();
    let mut merge = |s: &PtasStats| {
        stats.guesses += s.guesses;
        stats.max_fractional = stats.max_fractional.max(s.max_fractional);
        stats.purification_violations += s.purification_violations;
        stats.objective_decreases += s.objective_decreases;
    };
    let (mut a_bad, mut a_count) = (0, 0);
    for seed in 0..50u64 {
        let m = 1 + (seed as usize % 2);
        let eps = if seed % 4 < 2 { 0.5 } else { 0.75 };
        let cfg = PtasConfig::new(eps);
        let inst = gen(GeneratorConfig {
            seed: 2000 + seed,
            n: 1 + (seed as usize % 6),
            max_prefs_per_user: 2,
            m,
            ..GeneratorConfig::default()
        });
        assert!(inst.user_count() <= cfg.guess_size(m));
        let o = solve_ptas_with(&inst, &cfg).unwrap();
        merge(&o.stats);
        a_count += 1;
        let opt = brute_force(&inst);
        if !close(o.report.utility, opt) || !selection_fits(&inst, &o.solution.chosen, 1.0) {
            a_bad += 1;
        }
    }
    let (mut b_bad, mut b_count, mut worst_b) = (0, 0, f64::INFINITY);
    for seed in 0..20u64 {
        let inst = gen(GeneratorConfig {
            seed: 3000 + seed,
            n: 20,
            max_prefs_per_user: 1,
            m: 1,
            magnitude_range: (2.0, 5.0),
            ..GeneratorConfig::default()
        });
        let o = solve_ptas_with(&inst, &PtasConfig::new(0.5)).unwrap();
        merge(&o.stats);
        b_count += 1;
        let opt = brute_force(&inst);
        worst_b = worst_b.min(o.report.utility / opt);
        if o.report.utility < 0.5 * opt || !selection_fits(&inst, &o.solution.chosen, 1.0) {
            b_bad += 1;
        }
    }
    PtasRun {
        a_bad,
        a_count,
        b_bad,
        b_count,
        worst_b,
        stats,
        elapsed: start.elapsed(),
    }
}

fn c5_ptas(run: &PtasRun) -> Outcome {
    let mut o = outcome(
        run.a_bad + run.b_bad,
        run.a_count + run.b_count,
        "instances",
        run.elapsed,
        Some(Duration::from_secs(900)),
    );
    o.detail += &format!(
        " [(a) {}/{} exact, (b) {}/{} within 0.5, worst (b) ratio {:.4}]",
        run.a_count - run.a_bad,
        run.a_count,
        run.b_count - run.b_bad,
        run.b_count,
        run.worst_b
    );
    o
}

fn c6_purification(run: &PtasRun) -> Outcome {
    let s = &run.stats;
    let bad = (s.purification_violations + s.objective_decreases) as usize;
    let mut o = outcome(bad, s.guesses as usize, "guesses", run.elapsed, None);
    o.detail += &format!(", max fractional free variables {}", s.max_fractional);
    o
}

fn c7_cone_sum() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = 0;
    let count = 1000;
    for _ in 0..count {
        let k = rng.random_range(2..=10);
        let base = rng.random_range(0.0..PI);
        let width = rng.random_range(0.0..=FRAC_PI_2);
        let v: Vec<ComplexPower> = (0..k)
            .map(|_| {
                ComplexPower::from_polar(rng.random_range(0.1..10.0), base + rng.random_range(0.0..=width))
            })
            .collect();
        let mut spread: f64 = 0.0;
        for a in &v {
            for b in &v {
                let cos = (a.re * b.re + a.im * b.im) / (a.re.hypot(a.im) * b.re.hypot(b.im));
                spread = spread.max(cos.clamp(-1.0, 1.0).acos());
            }
        }
        let lhs: f64 = v.iter().map(|d| d.re.hypot(d.im)).sum::<f64>()
            / v.iter().map(|d| d.re).sum::<f64>().hypot(v.iter().map(|d| d.im).sum());
        let rhs = 1.0 / (spread / 2.0).cos();
        let lib = angle_sum_bound_check(&v).unwrap();
        if lhs > rhs + 1e-9 || !lib.holds {
            bad += 1;
        }
    }
    let ortho = [ComplexPower::new(1.0, 0.0), ComplexPower::new(0.0, 1.0)];
    let eq = angle_sum_bound_check(&ortho).unwrap();
    if (eq.lhs - eq.rhs).abs() > 1e-9 || (eq.lhs - 2f64.sqrt()).abs() > 1e-9 {
        bad += 1;
    }
    outcome(bad, count + 1, "vector sets", start.elapsed(), None)
}

fn c8_ufp() -> Outcome {
    let start = Instant::now();
    let mut bad = 0;
    let mut checked = 0;
    let mut lr_checked = 0;
    for seed in 0..500u64 {
        let inst = gen(GeneratorConfig {
            seed: 8000 + seed,
            n: 1 + (seed as usize % 6),
            max_prefs_per_user: 2,
            m: 1 + (seed as usize % 4),
            capacity_profile: if seed % 2 == 0 {
                CapacityProfile::Constant
            } else {
                CapacityProfile::Valley
            },
            magnitude_range: (1.0, 10.0),
            constant_demands: true,
            window_model: WindowModel::RandomContiguous,
            ..GeneratorConfig::default()
        });
        let bag = to_bag_ufp(&inst).unwrap();
        assert!(csp_sched::ufp::check_nba(&bag));
        for sel in common::all_selections(&inst) {
            if bag.is_feasible(&sel) {
                checked += 1;
                if !selection_fits(&inst, &sel, 1.0) || carry_back(&inst, &sel).is_err() {
                    bad += 1;
                }
            }
            if selection_fits(&inst, &sel, 1.0) {
                checked += 1;
                if !crossing_bound_check(&inst, &sel, 0.5) || !crossing_bound_check(&inst, &sel, 1.0) {
                    bad += 1;
                }
            }
        }
        // Local ratio against the best disjoint bag-respecting large subset.
        let split = DeltaSplit::new(&bag, 0.5).unwrap();
        let lr = solve_large_local_ratio(&bag, &split);
        let disjoint = |s: &Selection| {
            let v: Vec<PrefRef> = s.iter().collect();
            s.respects_bags()
                && v.iter().enumerate().all(|(i, a)| {
                    v[i + 1..].iter().all(|b| !bag.demand(*a).overlaps(bag.demand(*b)))
                })
        };
        let best = common::all_selections(&inst)
            .into_iter()
            .filter(|s| s.iter().all(|r| split.large.contains(&r)) && disjoint(s))
            .map(|s| bag.utility(&s))
            .fold(0.0, f64::max);
        lr_checked += 1;
        if !disjoint(&lr) || bag.utility(&lr) < 0.5 * best - 1e-9 {
            bad += 1;
        }
    }
    outcome(
        bad,
        checked + lr_checked,
        "selection and local-ratio checks",
        start.elapsed(),
        None,
    )
}

fn c9_mixed() -> Outcome {
    let start = Instant::now();
    let mut bad = 0;
    let mut count = 0;
    let budget = OracleBudget::default();
    for seed in 0..50u64 {
        let inst = gen(GeneratorConfig {
            seed: 9000 + seed,
            n: 1 + (seed as usize % 3),
            max_prefs_per_user: 2,
            m: 1 + (seed as usize % 2),
            elastic_fraction: 0.5,
            magnitude_range: (2.0, 14.0),
            utility_model: UtilityModel::Uniform,
            ..GeneratorConfig::default()
        });
        let grid = exact_solve_mixed(&inst, 20, &budget).unwrap();
        for eps in [0.25, 0.5] {
            count += 1;
            let d = discretize(&inst, eps).unwrap();
            let (sel, _) = exact_solve(&d.instance, &budget).unwrap();
            let sol = map_back(&sel, &d.map).unwrap();
            let before = evaluate(&d.instance, &sel).unwrap().per_slot_load;
            let after = weighted_loads(&inst, &sol.weighted()).unwrap();
            let same = before.iter().zip(&after).all(|(a, b)| (*a - *b).norm() <= 1e-9);
            let u: f64 = sol.weighted().iter().map(|&(r, x)| x * inst.pref(r).utility).sum();
            let floor = (1.0 - eps) * grid.utility - grid.grid_error;
            if !same || u < floor - 1e-9 || !fits(&inst, &sol.weighted(), 1.0) {
                bad += 1;
            }
        }
    }
    outcome(bad, count, "runs", start.elapsed(), None)
}

fn c10_determinism() -> Outcome {
    let start = Instant::now();
    let mut bad = 0;
    let mut count = 0;
    let algorithms = ["exact", "greedy", "greedy-sequential", "fptas", "ptas", "ufp", "mixed+exact", "mixed+ptas"];
    for seed in 0..6u64 {
        for m in [1, 2] {
            let cfg = GeneratorConfig {
                seed: 10_000 + seed,
                n: 5,
                m,
                constant_demands: true,
                window_model: WindowModel::RandomContiguous,
                ..GeneratorConfig::default()
            };
            let inst = gen(cfg.clone());
            if inst != gen(cfg.clone()) {
                bad += 1;
            }
            let elastic = gen(GeneratorConfig {
                elastic_fraction: 0.5,
                ..cfg
            });
            for name in algorithms {
                let alg: Algorithm = name.parse().unwrap();
                let target = if matches!(alg, Algorithm::Mixed(_)) { &elastic } else { &inst };
                let run = |exec| {
                    let opts = SolveOptions {
                        exec,
                        ..SolveOptions::default()
                    };
                    solve(&alg, target, &opts).map(|(s, _)| solution_to_json(target, &s))
                };
                let outs = [run(Exec::Parallel), run(Exec::Parallel), run(Exec::Sequential)];
                match &outs {
                    [Ok(a), Ok(b), Ok(c)] => {
                        count += 1;
                        if a != b || a != c {
                            bad += 1;
                        }
                    }
                    // Greedy is defined for one slot only.
                    [Err(_), Err(_), Err(_)] if m > 1 && alg == Algorithm::Greedy => {}
                    _ => {
                        count += 1;
                        bad += 1;
                    }
                }
            }
        }
    }
    outcome(bad, count, "solver reruns", start.elapsed(), None)
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |n: &str, title: &str, o: Outcome| {
        all &= o.pass;
        println!(
            "criterion {n:>2} {:<36} {}  {}",
            title,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    };
    report("1", "greedy ratio", c1_greedy_ratio());
    report("2", "fptas bi-criteria", c2_fptas());
    report("3", "magnitude rounding", c3_rounding());
    report("4", "exact-fit dp", c4_dkp());
    let run = ptas_runs();
    report("5", "ptas", c5_ptas(&run));
    report("6", "purification", c6_purification(&run));
    report("7", "cone sum bound", c7_cone_sum());
    report("8", "ufp carry-back and crossing bound", c8_ufp());
    report("9", "mixed reduction", c9_mixed());
    report("10", "determinism", c10_determinism());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
