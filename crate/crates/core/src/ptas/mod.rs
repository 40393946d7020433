//! `(1 - eps, 1)` scheme for first-quadrant demands over a constant number
//! of slots.
//!
//! For every guess `S1` of at most `ceil(8m / eps)` inelastic preferences
//! (bag-respecting and feasible on its own), preferences worth more than the
//! cheapest member of `S1` are excluded, the convex relaxation is solved
//! near-optimally, its real and imaginary loads become the budgets of a
//! linear program, the relaxation point is purified to a vertex of that
//! program, and fractional inelastic variables are rounded down. Elastic
//! preferences stay fractional. The best rounded solution over all guesses
//! wins; ties go to the earliest guess (by size, then lexicographically).

pub mod purify;
pub mod relaxation;

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use crate::complex::ComplexPower;
use crate::error::{CspError, Result};
use crate::exec::Exec;
use crate::model::{
    angle_stats, ensure_valid, evaluate_mixed, is_feasible_mixed, within_capacity,
    FractionalSolution, Instance, MixedSolution, PrefRef, Selection, SolveReport,
};

pub use purify::{projection_budget, purify_to_bfs, ProjectionBudget, PurifyResult, INTEGRAL_TOL};
pub use relaxation::{CuttingPlane, RelaxationResult, RelaxationSolver, RelaxedProblem};

pub const NAME: &str = "ptas";

/// Guesses evaluated per parallel batch.
const BATCH: usize = 1024;

#[derive(Clone, Debug)]
pub struct PtasConfig {
    pub epsilon: f64,
    pub max_slots: usize,
    /// Cap on the number of bag-respecting guesses of size at most `K`.
    pub max_guesses: f64,
    /// Additive relaxation accuracy; defaults to `eps / 2` times the largest utility.
    pub delta: Option<f64>,
    pub relaxation: CuttingPlane,
    pub exec: Exec,
    /// Keep one [`GuessTrace`] per executed guess.
    pub trace: bool,
}

impl PtasConfig {
    pub fn new(epsilon: f64) -> Self {
        PtasConfig {
            epsilon,
            max_slots: 3,
            max_guesses: 5e6,
            delta: None,
            relaxation: CuttingPlane::default(),
            exec: Exec::default(),
            trace: false,
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// `ceil(8m / eps)`.
    pub fn guess_size(&self, m: usize) -> usize {
        (8.0 * m as f64 / self.epsilon - 1e-9).ceil() as usize
    }
}

/// Per-guess diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct GuessTrace {
    pub s1: Vec<PrefRef>,
    pub relaxation_lower: f64,
    pub relaxation_upper: f64,
    pub relaxation_converged: bool,
    /// Objective of the relaxation point and of the purified vertex.
    pub lp_start: f64,
    pub lp_end: f64,
    /// Fractional free variables after purification.
    pub fractional: usize,
    pub rounded_utility: f64,
}

/// Counters over every executed guess. A correct run keeps every
/// `*_violations` and `*_failures` field at zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PtasStats {
    pub guesses: u64,
    pub max_fractional: usize,
    /// Guesses whose vertex had more than `4m` fractional free variables.
    pub purification_violations: u64,
    /// Guesses where purification lowered the objective.
    pub objective_decreases: u64,
    /// Full-size guesses whose round-down lost more than `4m` times the
    /// average utility of `S1`.
    pub loss_bound_violations: u64,
    /// Relaxations stopped by the iteration cap before reaching `delta`.
    pub relaxation_gap_failures: u64,
    /// Budgets outside the capacity disk.
    pub budget_violations: u64,
    /// Round-downs that needed the strict fallback to stay feasible.
    pub rounding_fallbacks: u64,
    pub purification_steps: u64,
    pub exact_steps: u64,
}

impl PtasStats {
    fn merge(mut self, o: &PtasStats) -> PtasStats {
        self.guesses += o.guesses;
        self.max_fractional = self.max_fractional.max(o.max_fractional);
        self.purification_violations += o.purification_violations;
        self.objective_decreases += o.objective_decreases;
        self.loss_bound_violations += o.loss_bound_violations;
        self.relaxation_gap_failures += o.relaxation_gap_failures;
        self.budget_violations += o.budget_violations;
        self.rounding_fallbacks += o.rounding_fallbacks;
        self.purification_steps += o.purification_steps;
        self.exact_steps += o.exact_steps;
        self
    }
}

#[derive(Clone, Debug)]
pub struct PtasOutcome {
    pub solution: MixedSolution,
    pub report: SolveReport,
    pub best_guess: Vec<PrefRef>,
    pub stats: PtasStats,
    pub traces: Vec<GuessTrace>,
}

/// Number of bag-respecting subsets of inelastic preferences with at most
/// `k` members: the coefficients of `prod_k (1 + a_k z)` up to degree `k`.
pub fn guess_count_bound(instance: &Instance, k: usize) -> f64 {
    let mut c = vec![0.0f64; k + 1];
    c[0] = 1.0;
    for u in &instance.users {
        let a = u.preferences.iter().filter(|p| !p.is_elastic()).count() as f64;
        if a == 0.0 {
            continue;
        }
        for i in (1..=k).rev() {
            c[i] += a * c[i - 1];
        }
    }
    c.iter().sum()
}

fn inelastic_refs(instance: &Instance) -> Vec<PrefRef> {
    instance
        .pref_refs()
        .filter(|&r| !instance.pref(r).is_elastic())
        .collect()
}

/// Calls `visit` on every feasible bag-respecting guess with at most `k`
/// members, ordered by size and then lexicographically.
pub fn for_each_guess(instance: &Instance, k: usize, mut visit: impl FnMut(&[PrefRef])) {
    let items = inelastic_refs(instance);
    let mut load = vec![ComplexPower::ZERO; instance.slots()];
    let mut cur = Vec::new();
    for size in 0..=k.min(instance.user_count()) {
        let mut found = false;
        guess_dfs(instance, &items, 0, size, &mut cur, &mut load, &mut found, &mut visit);
        if !found {
            // Feasibility is inherited by subsets, so no larger guess exists.
            break;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn guess_dfs(
    instance: &Instance,
    items: &[PrefRef],
    from: usize,
    size: usize,
    cur: &mut Vec<PrefRef>,
    load: &mut [ComplexPower],
    found: &mut bool,
    visit: &mut impl FnMut(&[PrefRef]),
) {
    if cur.len() == size {
        *found = true;
        visit(cur);
        return;
    }
    let need = size - cur.len();
    for i in from..items.len() {
        if items.len() - i < need {
            break;
        }
        let r = items[i];
        if cur.last().is_some_and(|l| l.user >= r.user) {
            continue;
        }
        let p = instance.pref(r);
        let saved: Vec<ComplexPower> = p.window.iter().map(|&t| load[t]).collect();
        let mut ok = true;
        for (t, s) in p.slots() {
            load[t] += s;
            ok &= within_capacity(load[t].norm(), instance.capacities[t], 1.0);
        }
        if ok {
            cur.push(r);
            guess_dfs(instance, items, i + 1, size, cur, load, found, visit);
            cur.pop();
        }
        for (&t, v) in p.window.iter().zip(saved) {
            load[t] = v;
        }
    }
}

/// All guesses, in evaluation order.
pub fn enumerate_guesses(instance: &Instance, k: usize, cap: f64) -> Result<Vec<Vec<PrefRef>>> {
    let bound = guess_count_bound(instance, k);
    if bound > cap {
        return Err(CspError::resource("ptas guesses", bound, cap));
    }
    let mut out = Vec::new();
    for_each_guess(instance, k, |g| out.push(g.to_vec()));
    Ok(out)
}

/// `S0`: inelastic preferences outside `S1` worth strictly more than the
/// cheapest member of `S1`.
pub fn excluded_set(instance: &Instance, s1: &[PrefRef]) -> Vec<PrefRef> {
    let Some(min) = s1
        .iter()
        .map(|&r| instance.pref(r).utility)
        .reduce(f64::min)
    else {
        return Vec::new();
    };
    inelastic_refs(instance)
        .into_iter()
        .filter(|r| !s1.contains(r) && instance.pref(*r).utility > min)
        .collect()
}

/// Preferences left free for a guess: not in `S1` or `S0`, and not owned by
/// a user already served by `S1`.
fn free_set(instance: &Instance, s1: &[PrefRef], s0: &[PrefRef]) -> Vec<PrefRef> {
    let users: BTreeSet<usize> = s1.iter().map(|r| r.user).collect();
    instance
        .pref_refs()
        .filter(|r| !users.contains(&r.user) && !s0.contains(r))
        .collect()
}

/// Near-optimal feasible point of the relaxation with `S1` at 1 and `S0` at 0.
pub fn solve_relaxation(
    instance: &Instance,
    s1: &[PrefRef],
    s0: &[PrefRef],
    delta: f64,
) -> Result<FractionalSolution> {
    let free = free_set(instance, s1, s0);
    let r = CuttingPlane::default().solve(
        &RelaxedProblem {
            instance,
            fixed_one: s1,
            free: &free,
        },
        delta,
    )?;
    Ok(r.x)
}

struct GuessResult {
    solution: MixedSolution,
    utility: f64,
    stats: PtasStats,
    trace: Option<GuessTrace>,
}

fn round_down(instance: &Instance, x: &FractionalSolution, tol: f64) -> MixedSolution {
    let mut out = MixedSolution::default();
    for (r, v) in x.iter() {
        if instance.pref(r).is_elastic() {
            let v = if v >= 1.0 - tol { 1.0 } else { v };
            if v > tol {
                out.fractional.set(r, v);
            }
        } else if v >= 1.0 - tol {
            out.chosen.insert(r);
        }
    }
    out
}

fn run_guess(
    instance: &Instance,
    config: &PtasConfig,
    delta: f64,
    k: usize,
    s1: &[PrefRef],
) -> Result<GuessResult> {
    let m = instance.slots();
    let mut stats = PtasStats {
        guesses: 1,
        ..PtasStats::default()
    };
    let s0 = excluded_set(instance, s1);
    let free = free_set(instance, s1, &s0);
    let relax = config.relaxation.solve(
        &RelaxedProblem {
            instance,
            fixed_one: s1,
            free: &free,
        },
        delta,
    )?;
    if !relax.converged {
        stats.relaxation_gap_failures += 1;
    }
    let budget = projection_budget(instance, &relax.x);
    if !budget.outside_disk(instance).is_empty() {
        stats.budget_violations += 1;
    }
    let fixed: BTreeSet<PrefRef> = s1.iter().chain(&s0).copied().collect();
    let pure = purify_to_bfs(instance, &budget, &relax.x, &fixed)?;
    stats.purification_steps += pure.steps as u64;
    stats.exact_steps += pure.exact_steps as u64;
    let lp_start = relax.x.utility(instance);
    let lp_end = pure.x.utility(instance);
    if lp_end < lp_start - 1e-9 * lp_start.abs().max(1.0) {
        stats.objective_decreases += 1;
    }
    let fractional = pure
        .x
        .iter()
        .filter(|(r, v)| !fixed.contains(r) && *v > INTEGRAL_TOL && *v < 1.0 - INTEGRAL_TOL)
        .count();
    stats.max_fractional = fractional;
    if fractional > 4 * m {
        stats.purification_violations += 1;
    }

    let mut solution = round_down(instance, &pure.x, INTEGRAL_TOL);
    if !is_feasible_mixed(instance, &solution, 1.0) {
        stats.rounding_fallbacks += 1;
        solution = round_down(instance, &pure.x, 0.0);
        if !is_feasible_mixed(instance, &solution, 1.0) {
            solution = MixedSolution::integral(s1.iter().copied().collect());
        }
    }
    let utility = evaluate_mixed(instance, &solution)?.utility;
    if !s1.is_empty() && s1.len() == k {
        let avg = s1.iter().map(|&r| instance.pref(r).utility).sum::<f64>() / s1.len() as f64;
        if lp_end - utility > 4.0 * m as f64 * avg + 1e-9 * lp_end.abs().max(1.0) {
            stats.loss_bound_violations += 1;
        }
    }
    let trace = config.trace.then(|| GuessTrace {
        s1: s1.to_vec(),
        relaxation_lower: relax.lower,
        relaxation_upper: relax.upper,
        relaxation_converged: relax.converged,
        lp_start,
        lp_end,
        fractional,
        rounded_utility: utility,
    });
    Ok(GuessResult {
        solution,
        utility,
        stats,
        trace,
    })
}

pub fn solve_ptas(instance: &Instance, epsilon: f64) -> Result<(Selection, SolveReport)> {
    let o = solve_ptas_with(instance, &PtasConfig::new(epsilon))?;
    Ok((o.solution.chosen, o.report))
}

struct Acc {
    best: Option<(f64, Vec<PrefRef>, MixedSolution)>,
    stats: PtasStats,
    traces: Vec<GuessTrace>,
    error: Option<CspError>,
}

pub fn solve_ptas_with(instance: &Instance, config: &PtasConfig) -> Result<PtasOutcome> {
    let start = Instant::now();
    ensure_valid(instance)?;
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(CspError::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {}",
            config.epsilon
        )));
    }
    let m = instance.slots();
    if m > config.max_slots {
        return Err(CspError::precondition(
            NAME,
            format!(
                "ptas needs a constant number of slots: m={m} exceeds the cap {}",
                config.max_slots
            ),
        ));
    }
    let phi = angle_stats(instance).phi;
    if phi > FRAC_PI_2 + 1e-12 {
        return Err(CspError::precondition(
            NAME,
            format!("ptas requires demands in the first quadrant (phi <= pi/2), got phi={phi}"),
        ));
    }
    let k = config.guess_size(m);
    let bound = guess_count_bound(instance, k);
    if bound > config.max_guesses {
        return Err(CspError::resource("ptas guesses", bound, config.max_guesses));
    }
    let u_max = instance
        .pref_refs()
        .map(|r| instance.pref(r).utility)
        .fold(0.0, f64::max);
    let delta = config.delta.unwrap_or(config.epsilon / 2.0 * u_max).max(1e-12);

    let mut acc = Acc {
        best: None,
        stats: PtasStats::default(),
        traces: Vec::new(),
        error: None,
    };
    let mut batch: Vec<Vec<PrefRef>> = Vec::with_capacity(BATCH);
    let flush = |batch: &mut Vec<Vec<PrefRef>>, acc: &mut Acc| {
        if acc.error.is_none() {
            let results = config
                .exec
                .map(batch, |g| run_guess(instance, config, delta, k, g));
            for (g, r) in batch.iter().zip(results) {
                match r {
                    Ok(r) => {
                        acc.stats = std::mem::take(&mut acc.stats).merge(&r.stats);
                        acc.traces.extend(r.trace);
                        if acc.best.as_ref().is_none_or(|b| r.utility > b.0) {
                            acc.best = Some((r.utility, g.clone(), r.solution));
                        }
                    }
                    Err(e) => {
                        acc.error.get_or_insert(e);
                    }
                }
            }
        }
        batch.clear();
    };
    for_each_guess(instance, k, |g| {
        batch.push(g.to_vec());
        if batch.len() >= BATCH {
            flush(&mut batch, &mut acc);
        }
    });
    flush(&mut batch, &mut acc);
    if let Some(e) = acc.error {
        return Err(e);
    }
    let (solution, best_guess) = match acc.best {
        Some((_, g, s)) => (s, g),
        None => (MixedSolution::default(), Vec::new()),
    };
    let report = evaluate_mixed(instance, &solution)?.with_solver(NAME, start.elapsed());
    Ok(PtasOutcome {
        solution,
        report,
        best_guess,
        stats: acc.stats,
        traces: acc.traces,
    })
}
