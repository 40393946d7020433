//! Exhaustive solvers used as ground truth.
//!
//! Every routine enumerates one option per user (skip, or one preference)
//! depth-first in user order, trying "skip" before preference 0, 1, ...
//! The incumbent is replaced only on a strictly larger utility, so the
//! reported optimum is the first one met in that order.

use crate::complex::ComplexPower;
use crate::error::{CspError, Result};
use crate::exec::Exec;
use crate::model::{
    ensure_valid, within_capacity, FractionalSolution, Instance, MixedSolution, PrefRef,
    Selection,
};

/// Cap on the number of complete assignments an oracle may enumerate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleBudget {
    pub max_assignments: f64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_assignments: 2e7,
        }
    }
}

impl OracleBudget {
    fn check(&self, required: f64) -> Result<()> {
        if required > self.max_assignments {
            Err(CspError::resource(
                "instance too large for oracle",
                required,
                self.max_assignments,
            ))
        } else {
            Ok(())
        }
    }
}

/// One way a user can participate: preference index and weight.
#[derive(Clone, Copy, Debug)]
struct Opt {
    pref: usize,
    x: f64,
}

struct Space<'a> {
    instance: &'a Instance,
    options: Vec<Vec<Opt>>,
    /// All demands in the closed first quadrant, so loads only grow.
    monotone: bool,
}

#[derive(Clone, Debug)]
struct Best {
    utility: f64,
    choice: Vec<Option<usize>>,
}

impl Best {
    /// Left-biased: `other` wins only with strictly larger utility.
    fn merge(self, other: Option<Best>) -> Best {
        match other {
            Some(o) if o.utility > self.utility => o,
            _ => self,
        }
    }
}

impl<'a> Space<'a> {
    fn new(instance: &'a Instance, options: Vec<Vec<Opt>>) -> Self {
        let monotone = instance
            .users
            .iter()
            .flat_map(|u| &u.preferences)
            .flat_map(|p| &p.values)
            .all(|v| v.re >= 0.0 && v.im >= 0.0);
        Space {
            instance,
            options,
            monotone,
        }
    }

    fn assignments(&self) -> f64 {
        self.options.iter().map(|o| (o.len() + 1) as f64).product()
    }

    fn apply(&self, load: &mut [ComplexPower], user: usize, o: Opt, saved: &mut Vec<ComplexPower>) {
        let p = &self.instance.users[user].preferences[o.pref];
        for (t, v) in p.slots() {
            saved.push(load[t]);
            load[t] += if o.x == 1.0 { v } else { v * o.x };
        }
    }

    fn undo(&self, load: &mut [ComplexPower], user: usize, o: Opt, saved: &mut Vec<ComplexPower>) {
        let p = &self.instance.users[user].preferences[o.pref];
        for &t in p.window.iter().rev() {
            load[t] = saved.pop().expect("balanced undo");
        }
    }

    fn touched_ok(&self, load: &[ComplexPower], user: usize, o: Opt) -> bool {
        let p = &self.instance.users[user].preferences[o.pref];
        p.window
            .iter()
            .all(|&t| within_capacity(load[t].norm(), self.instance.capacities[t], 1.0))
    }

    fn all_ok(&self, load: &[ComplexPower]) -> bool {
        load.iter()
            .zip(&self.instance.capacities)
            .all(|(l, &c)| within_capacity(l.norm(), c, 1.0))
    }

    fn utility_of(&self, user: usize, o: Opt) -> f64 {
        let u = self.instance.users[user].preferences[o.pref].utility;
        if o.x == 1.0 {
            u
        } else {
            u * o.x
        }
    }

    /// Replays a prefix; `None` when monotone pruning already rules it out.
    fn start(&self, prefix: &[Option<usize>]) -> Option<(Vec<ComplexPower>, f64)> {
        let mut load = vec![ComplexPower::ZERO; self.instance.slots()];
        let mut utility = 0.0;
        let mut saved = Vec::new();
        for (k, c) in prefix.iter().enumerate() {
            if let Some(i) = *c {
                let o = self.options[k][i];
                self.apply(&mut load, k, o, &mut saved);
                if self.monotone && !self.touched_ok(&load, k, o) {
                    return None;
                }
                utility += self.utility_of(k, o);
            }
        }
        Some((load, utility))
    }

    fn search(&self, prefix: &[Option<usize>]) -> Option<Best> {
        let (mut load, utility) = self.start(prefix)?;
        let mut st = Dfs {
            space: self,
            load: &mut load,
            choice: prefix.to_vec(),
            saved: Vec::new(),
            best: None,
        };
        st.choice.resize(self.options.len(), None);
        st.run(prefix.len(), utility);
        st.best
    }

    /// Searches the whole space, fanning out over assignment prefixes.
    fn solve(&self, exec: Exec) -> Best {
        let empty = Best {
            utility: 0.0,
            choice: vec![None; self.options.len()],
        };
        if !exec.is_parallel() {
            return self.search(&[]).unwrap_or(empty);
        }
        let mut depth = 0;
        let mut width = 1usize;
        while depth < self.options.len() && width < 256 {
            width *= self.options[depth].len() + 1;
            depth += 1;
        }
        let prefixes = prefixes(&self.options[..depth]);
        exec.map_reduce(&prefixes, None, |p| self.search(p), |a: Option<Best>, b| match a {
            None => b,
            Some(a) => Some(a.merge(b)),
        })
        .map_or(empty, |b| b)
    }
}

struct Dfs<'s, 'a> {
    space: &'s Space<'a>,
    load: &'s mut Vec<ComplexPower>,
    choice: Vec<Option<usize>>,
    saved: Vec<ComplexPower>,
    best: Option<Best>,
}

impl Dfs<'_, '_> {
    fn run(&mut self, k: usize, utility: f64) {
        let n = self.space.options.len();
        if k == n {
            if !self.space.monotone && !self.space.all_ok(self.load) {
                return;
            }
            if self.best.as_ref().is_none_or(|b| utility > b.utility) {
                self.best = Some(Best {
                    utility,
                    choice: self.choice.clone(),
                });
            }
            return;
        }
        self.choice[k] = None;
        self.run(k + 1, utility);
        for i in 0..self.space.options[k].len() {
            let o = self.space.options[k][i];
            self.space.apply(self.load, k, o, &mut self.saved);
            if !self.space.monotone || self.space.touched_ok(self.load, k, o) {
                self.choice[k] = Some(i);
                self.run(k + 1, utility + self.space.utility_of(k, o));
            }
            self.space.undo(self.load, k, o, &mut self.saved);
        }
        self.choice[k] = None;
    }
}

fn prefixes(options: &[Vec<Opt>]) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![Vec::new()];
    for opts in options {
        let mut next = Vec::with_capacity(out.len() * (opts.len() + 1));
        for p in &out {
            for c in std::iter::once(None).chain((0..opts.len()).map(Some)) {
                let mut q: Vec<Option<usize>> = p.clone();
                q.push(c);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn integral_options(instance: &Instance) -> Vec<Vec<Opt>> {
    instance
        .users
        .iter()
        .map(|u| {
            (0..u.preferences.len())
                .map(|pref| Opt { pref, x: 1.0 })
                .collect()
        })
        .collect()
}

/// Maximum-utility capacity-feasible selection, elastic tags ignored.
pub fn exact_solve(instance: &Instance, budget: &OracleBudget) -> Result<(Selection, f64)> {
    exact_solve_with(instance, budget, Exec::default())
}

pub fn exact_solve_with(
    instance: &Instance,
    budget: &OracleBudget,
    exec: Exec,
) -> Result<(Selection, f64)> {
    ensure_valid(instance)?;
    let space = Space::new(instance, integral_options(instance));
    budget.check(space.assignments())?;
    let best = space.solve(exec);
    let sel = Selection::from_choices(&best.choice);
    Ok((sel, best.utility))
}

/// Result of the grid-search oracle for instances with elastic preferences.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedOracleResult {
    pub utility: f64,
    pub solution: MixedSolution,
    /// Upper bound on how far the grid optimum may sit below the continuous
    /// one: total elastic utility over the grid resolution.
    pub grid_error: f64,
}

/// Best mixed solution with each elastic amount on the grid `{1/G, ..., 1}`.
pub fn exact_solve_mixed(
    instance: &Instance,
    grid_resolution: usize,
    budget: &OracleBudget,
) -> Result<MixedOracleResult> {
    if grid_resolution < 10 {
        return Err(CspError::InvalidArgument(format!(
            "grid resolution {grid_resolution} is below 10"
        )));
    }
    ensure_valid(instance)?;
    let g = grid_resolution as f64;
    let options: Vec<Vec<Opt>> = instance
        .users
        .iter()
        .map(|u| {
            let mut v = Vec::new();
            for (pref, p) in u.preferences.iter().enumerate() {
                if p.is_elastic() {
                    v.extend((1..=grid_resolution).map(|i| Opt { pref, x: i as f64 / g }));
                } else {
                    v.push(Opt { pref, x: 1.0 });
                }
            }
            v
        })
        .collect();
    let space = Space::new(instance, options);
    budget.check(space.assignments())?;
    let best = space.solve(Exec::default());
    let mut solution = MixedSolution::default();
    let mut fractional = FractionalSolution::new();
    for (k, c) in best.choice.iter().enumerate() {
        if let Some(i) = *c {
            let o = space.options[k][i];
            let r = PrefRef::new(k, o.pref);
            if instance.pref(r).is_elastic() {
                fractional.set(r, o.x);
            } else {
                solution.chosen.insert(r);
            }
        }
    }
    solution.fractional = fractional;
    let elastic_u: f64 = instance
        .users
        .iter()
        .flat_map(|u| &u.preferences)
        .filter(|p| p.is_elastic())
        .map(|p| p.utility)
        .sum();
    Ok(MixedOracleResult {
        utility: best.utility,
        solution,
        grid_error: elastic_u / g,
    })
}

/// A demand rounded to integer multiples of the per-slot grid, dense over
/// all slots.
#[derive(Clone, Debug, PartialEq)]
pub struct IntDemand {
    pub re: Vec<i64>,
    pub im: Vec<i64>,
    pub utility: f64,
}

/// Maximum-utility choice (at most one demand per user) whose coordinate
/// sums equal `(c1, c2)` exactly. Indices in the returned selection refer to
/// positions in `users`.
pub fn exact_fit_solve(
    users: &[Vec<IntDemand>],
    c1: &[i64],
    c2: &[i64],
    budget: &OracleBudget,
) -> Result<Option<(Selection, f64)>> {
    let required: f64 = users.iter().map(|u| (u.len() + 1) as f64).product();
    budget.check(required)?;
    let mut best: Option<(Vec<Option<usize>>, f64)> = None;
    let mut choice = vec![None; users.len()];
    let mut s1 = vec![0i64; c1.len()];
    let mut s2 = vec![0i64; c2.len()];
    fit_dfs(users, c1, c2, 0, 0.0, &mut s1, &mut s2, &mut choice, &mut best);
    Ok(best.map(|(c, u)| (Selection::from_choices(&c), u)))
}

#[allow(clippy::too_many_arguments)]
fn fit_dfs(
    users: &[Vec<IntDemand>],
    c1: &[i64],
    c2: &[i64],
    k: usize,
    utility: f64,
    s1: &mut [i64],
    s2: &mut [i64],
    choice: &mut [Option<usize>],
    best: &mut Option<(Vec<Option<usize>>, f64)>,
) {
    if k == users.len() {
        if s1 == c1 && s2 == c2 && best.as_ref().is_none_or(|b| utility > b.1) {
            *best = Some((choice.to_vec(), utility));
        }
        return;
    }
    choice[k] = None;
    fit_dfs(users, c1, c2, k + 1, utility, s1, s2, choice, best);
    for (j, d) in users[k].iter().enumerate() {
        for t in 0..s1.len() {
            s1[t] += d.re[t];
            s2[t] += d.im[t];
        }
        choice[k] = Some(j);
        fit_dfs(users, c1, c2, k + 1, utility + d.utility, s1, s2, choice, best);
        for t in 0..s1.len() {
            s1[t] -= d.re[t];
            s2[t] -= d.im[t];
        }
    }
    choice[k] = None;
}
