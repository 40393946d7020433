//! Reduction of first-quadrant instances with constant demands over
//! contiguous windows to real-valued bag unsplittable flow on a path.
//!
//! Replacing every demand by its magnitude gives a real instance whose
//! feasible selections stay feasible for the complex one, because
//! `|sum s| <= sum |s|`. Demands are split by size relative to their
//! bottleneck capacity. Large ones are solved as a disjoint interval
//! selection with a local-ratio 2-approximation, small ones by an efficiency
//! greedy. The better of the two is returned.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use crate::error::{CspError, Result};
use crate::exec::Exec;
use crate::model::{
    angle_stats, ensure_valid, evaluate, loads_within, within_capacity, Instance, PrefRef,
    Selection, SolveReport,
};

pub const NAME: &str = "ufp";

/// Default split threshold.
pub const DEFAULT_DELTA: f64 = 0.5;

/// A constant real demand on the slots `start..=end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BagDemand {
    pub start: usize,
    pub end: usize,
    pub demand: f64,
    pub utility: f64,
}

impl BagDemand {
    pub fn overlaps(&self, other: &BagDemand) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }
}

/// `users[k][j]` is preference `j` of user `k` of the source instance.
#[derive(Clone, Debug, PartialEq)]
pub struct RealBagInstance {
    pub capacities: Vec<f64>,
    pub users: Vec<Vec<BagDemand>>,
}

impl RealBagInstance {
    pub fn demand(&self, r: PrefRef) -> &BagDemand {
        &self.users[r.user][r.pref]
    }

    pub fn refs(&self) -> impl Iterator<Item = PrefRef> + '_ {
        self.users
            .iter()
            .enumerate()
            .flat_map(|(k, u)| (0..u.len()).map(move |j| PrefRef::new(k, j)))
    }

    /// Slot of least capacity in the interval, smallest index on ties.
    pub fn bottleneck(&self, r: PrefRef) -> usize {
        let d = self.demand(r);
        let mut best = d.start;
        for t in d.start..=d.end {
            if self.capacities[t] < self.capacities[best] {
                best = t;
            }
        }
        best
    }

    pub fn loads(&self, selection: &Selection) -> Vec<f64> {
        let mut load = vec![0.0; self.capacities.len()];
        for r in selection.iter() {
            let d = self.demand(r);
            for l in &mut load[d.start..=d.end] {
                *l += d.demand;
            }
        }
        load
    }

    pub fn utility(&self, selection: &Selection) -> f64 {
        selection.iter().map(|r| self.demand(r).utility).sum()
    }

    /// Bags respected and `sum |s| <= C_t` on every slot.
    pub fn is_feasible(&self, selection: &Selection) -> bool {
        selection.respects_bags()
            && self
                .loads(selection)
                .iter()
                .zip(&self.capacities)
                .all(|(&l, &c)| within_capacity(l, c, 1.0))
    }
}

fn is_constant(values: &[crate::complex::ComplexPower]) -> bool {
    let v0 = values[0];
    let tol = 1e-12 * v0.norm().max(1.0);
    values.iter().all(|&v| (v - v0).norm() <= tol)
}

/// Substitutes demand magnitudes. Rejects non-constant or non-contiguous
/// preferences and anything outside the first quadrant.
pub fn to_bag_ufp(instance: &Instance) -> Result<RealBagInstance> {
    ensure_valid(instance)?;
    let phi = angle_stats(instance).phi;
    if phi > FRAC_PI_2 {
        return Err(CspError::precondition(
            NAME,
            format!("demand arguments must lie in [0, pi/2], found phi={phi}"),
        ));
    }
    let mut users = Vec::with_capacity(instance.user_count());
    for (k, u) in instance.users.iter().enumerate() {
        let mut prefs = Vec::with_capacity(u.preferences.len());
        for (j, p) in u.preferences.iter().enumerate() {
            let (uid, pid) = instance.ids(PrefRef::new(k, j));
            if p.window.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(CspError::precondition(
                    NAME,
                    format!("window of {uid}/{pid} is not contiguous"),
                ));
            }
            if !is_constant(&p.values) {
                return Err(CspError::precondition(
                    NAME,
                    format!("demand of {uid}/{pid} is not constant over its window"),
                ));
            }
            prefs.push(BagDemand {
                start: p.window[0],
                end: *p.window.last().unwrap(),
                demand: p.values[0].norm(),
                utility: p.utility,
            });
        }
        users.push(prefs);
    }
    Ok(RealBagInstance {
        capacities: instance.capacities.clone(),
        users,
    })
}

/// A demand larger than the smallest capacity, if any: `(pref, |s|, C_min)`.
pub fn nba_violation(bag: &RealBagInstance) -> Option<(PrefRef, f64, f64)> {
    let c_min = bag.capacities.iter().copied().fold(f64::INFINITY, f64::min);
    bag.refs()
        .map(|r| (r, bag.demand(r).demand))
        .find(|&(_, d)| d > c_min)
        .map(|(r, d)| (r, d, c_min))
}

/// Largest demand at most the smallest capacity.
pub fn check_nba(bag: &RealBagInstance) -> bool {
    nba_violation(bag).is_none()
}

/// Partition into demands with `|s| <= delta * C_b` (small) and the rest,
/// `b` being the bottleneck slot. Both lists are in `(user, pref)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaSplit {
    pub delta: f64,
    pub small: Vec<PrefRef>,
    pub large: Vec<PrefRef>,
}

impl DeltaSplit {
    pub fn new(bag: &RealBagInstance, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(CspError::InvalidArgument(format!(
                "delta {delta} is outside (0, 1]"
            )));
        }
        let (small, large) = bag
            .refs()
            .partition(|&r| bag.demand(r).demand <= delta * bag.capacities[bag.bottleneck(r)]);
        Ok(DeltaSplit {
            delta,
            small,
            large,
        })
    }
}

/// A bag-UFP method restricted to a subset of the preferences. The result
/// must be feasible for `bag`.
pub trait BagUfpSolver: Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, bag: &RealBagInstance, items: &[PrefRef]) -> Result<Selection>;
}

/// Pairwise disjoint intervals, one per bag, by the local-ratio stack
/// method. The weight of the result is at least half the best disjoint
/// selection among `items`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LocalRatio;

/// Efficiency order `u / (|s| |T|)`, skipping insertions that do not fit.
#[derive(Clone, Copy, Debug, Default)]
pub struct EfficiencyGreedy;

/// Exhaustive search over `items`; for micro instances only.
#[derive(Clone, Copy, Debug)]
pub struct ExactBag {
    pub max_assignments: f64,
}

impl Default for ExactBag {
    fn default() -> Self {
        ExactBag {
            max_assignments: 2e7,
        }
    }
}

impl BagUfpSolver for LocalRatio {
    fn name(&self) -> &'static str {
        "local-ratio"
    }

    fn solve(&self, bag: &RealBagInstance, items: &[PrefRef]) -> Result<Selection> {
        let mut order: Vec<PrefRef> = items.to_vec();
        order.sort_by_key(|&r| {
            let d = bag.demand(r);
            (d.end, d.start, r)
        });
        let mut weight: Vec<f64> = order.iter().map(|&r| bag.demand(r).utility).collect();
        let mut stack = Vec::new();
        for i in 0..order.len() {
            let w = weight[i];
            if w <= 0.0 {
                continue;
            }
            stack.push(i);
            // Every later item in conflict with i contains i's right end or
            // shares its bag; at most two of them fit in any solution.
            let di = bag.demand(order[i]);
            for j in i + 1..order.len() {
                if order[j].user == order[i].user || bag.demand(order[j]).start <= di.end {
                    weight[j] -= w;
                }
            }
        }
        let mut used_slot = vec![false; bag.capacities.len()];
        let mut used_user = vec![false; bag.users.len()];
        let mut out = Selection::new();
        while let Some(i) = stack.pop() {
            let r = order[i];
            let d = bag.demand(r);
            if used_user[r.user] || used_slot[d.start..=d.end].iter().any(|&u| u) {
                continue;
            }
            used_user[r.user] = true;
            used_slot[d.start..=d.end].iter_mut().for_each(|u| *u = true);
            out.insert(r);
        }
        Ok(out)
    }
}

impl BagUfpSolver for EfficiencyGreedy {
    fn name(&self) -> &'static str {
        "efficiency-greedy"
    }

    fn solve(&self, bag: &RealBagInstance, items: &[PrefRef]) -> Result<Selection> {
        let eff = |r: PrefRef| {
            let d = bag.demand(r);
            let len = (d.end - d.start + 1) as f64;
            if d.demand > 0.0 {
                d.utility / (d.demand * len)
            } else {
                f64::INFINITY
            }
        };
        let mut order: Vec<PrefRef> = items.to_vec();
        order.sort_by(|&a, &b| eff(b).total_cmp(&eff(a)).then(a.cmp(&b)));
        let mut load = vec![0.0; bag.capacities.len()];
        let mut used_user = vec![false; bag.users.len()];
        let mut out = Selection::new();
        for r in order {
            let d = bag.demand(r);
            if used_user[r.user] {
                continue;
            }
            if (d.start..=d.end).any(|t| load[t] + d.demand > bag.capacities[t]) {
                continue;
            }
            for l in &mut load[d.start..=d.end] {
                *l += d.demand;
            }
            used_user[r.user] = true;
            out.insert(r);
        }
        Ok(out)
    }
}

impl BagUfpSolver for ExactBag {
    fn name(&self) -> &'static str {
        "exact-bag"
    }

    fn solve(&self, bag: &RealBagInstance, items: &[PrefRef]) -> Result<Selection> {
        let mut by_user: Vec<Vec<PrefRef>> = vec![Vec::new(); bag.users.len()];
        for &r in items {
            by_user[r.user].push(r);
        }
        by_user.retain(|v| !v.is_empty());
        let count: f64 = by_user.iter().map(|v| (v.len() + 1) as f64).product();
        if count > self.max_assignments {
            return Err(CspError::resource(
                "instance too large for exact bag solver",
                count,
                self.max_assignments,
            ));
        }
        struct Search<'a> {
            bag: &'a RealBagInstance,
            by_user: &'a [Vec<PrefRef>],
            load: Vec<f64>,
            chosen: Vec<PrefRef>,
            best: (f64, Vec<PrefRef>),
        }
        impl Search<'_> {
            fn go(&mut self, k: usize, u: f64) {
                if k == self.by_user.len() {
                    if u > self.best.0 {
                        self.best = (u, self.chosen.clone());
                    }
                    return;
                }
                self.go(k + 1, u);
                for i in 0..self.by_user[k].len() {
                    let r = self.by_user[k][i];
                    let d = *self.bag.demand(r);
                    if (d.start..=d.end).any(|t| {
                        !within_capacity(self.load[t] + d.demand, self.bag.capacities[t], 1.0)
                    }) {
                        continue;
                    }
                    for l in &mut self.load[d.start..=d.end] {
                        *l += d.demand;
                    }
                    self.chosen.push(r);
                    self.go(k + 1, u + d.utility);
                    self.chosen.pop();
                    for l in &mut self.load[d.start..=d.end] {
                        *l -= d.demand;
                    }
                }
            }
        }
        let mut s = Search {
            bag,
            by_user: &by_user,
            load: vec![0.0; bag.capacities.len()],
            chosen: Vec::new(),
            best: (0.0, Vec::new()),
        };
        s.go(0, 0.0);
        Ok(s.best.1.into_iter().collect())
    }
}

pub fn solve_large_local_ratio(bag: &RealBagInstance, split: &DeltaSplit) -> Selection {
    LocalRatio
        .solve(bag, &split.large)
        .expect("local ratio is infallible")
}

pub fn solve_small_greedy(bag: &RealBagInstance, split: &DeltaSplit) -> Selection {
    EfficiencyGreedy
        .solve(bag, &split.small)
        .expect("greedy is infallible")
}

/// Certifies a bag-feasible selection against the complex capacities.
/// Failure means the upstream solver broke bag feasibility.
pub fn carry_back(instance: &Instance, selection: &Selection) -> Result<(Selection, SolveReport)> {
    let report = evaluate(instance, selection)?;
    if !selection.respects_bags() || !loads_within(instance, &report.per_slot_load, 1.0) {
        return Err(CspError::Numerical(format!(
            "carried-back selection is infeasible (beta={})",
            report.violation_beta
        )));
    }
    Ok((selection.clone(), report))
}

/// Best of the large-side and small-side solutions, each from its own
/// solver. The large side wins ties.
pub fn solve_split_with(
    instance: &Instance,
    delta: f64,
    large: &dyn BagUfpSolver,
    small: &dyn BagUfpSolver,
    exec: Exec,
) -> Result<(Selection, SolveReport)> {
    let start = Instant::now();
    let bag = to_bag_ufp(instance)?;
    if let Some((r, d, c_min)) = nba_violation(&bag) {
        let (uid, pid) = instance.ids(r);
        return Err(CspError::precondition(
            NAME,
            format!(
                "largest demand must not exceed the smallest capacity: \
                 {uid}/{pid} has |s|={d} > C_min={c_min}"
            ),
        ));
    }
    let split = DeltaSplit::new(&bag, delta)?;
    let (l, s) = exec.join(
        || large.solve(&bag, &split.large),
        || small.solve(&bag, &split.small),
    );
    let (l, s) = (l?, s?);
    let chosen = if bag.utility(&s) > bag.utility(&l) { s } else { l };
    let (chosen, report) = carry_back(instance, &chosen)?;
    Ok((chosen, report.with_solver(NAME, start.elapsed())))
}

pub fn solve_split(instance: &Instance, delta: f64) -> Result<(Selection, SolveReport)> {
    solve_split_with(instance, delta, &LocalRatio, &EfficiencyGreedy, Exec::default())
}

/// `2 floor(sec(phi / 2) / delta^2)`.
pub fn crossing_bound(phi: f64, delta: f64) -> usize {
    let x = 1.0 / ((phi / 2.0).cos() * delta * delta);
    2 * (x + 1e-12).floor() as usize
}

/// At every slot, the number of selected `delta`-large demands whose window
/// contains it is within [`crossing_bound`]. Magnitudes are the largest over
/// each window, which is exact for constant demands.
pub fn crossing_bound_check(instance: &Instance, selection: &Selection, delta: f64) -> bool {
    let bound = crossing_bound(angle_stats(instance).phi, delta);
    let mut count = vec![0usize; instance.slots()];
    for r in selection.iter() {
        let p = instance.pref(r);
        let b = p
            .window
            .iter()
            .copied()
            .reduce(|a, t| if instance.capacities[t] < instance.capacities[a] { t } else { a });
        let Some(b) = b else { continue };
        let mag = p.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if mag > delta * instance.capacities[b] {
            for &t in &p.window {
                count[t] += 1;
            }
        }
    }
    count.iter().all(|&c| c <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::ComplexPower;
    use crate::model::{is_feasible, DemandPreference, User};

    fn pref(id: &str, window: std::ops::RangeInclusive<usize>, s: ComplexPower, u: f64) -> DemandPreference {
        let window: Vec<usize> = window.collect();
        let values = vec![s; window.len()];
        DemandPreference::new(id, window, values, u)
    }

    fn real(id: &str, window: std::ops::RangeInclusive<usize>, s: f64, u: f64) -> DemandPreference {
        pref(id, window, ComplexPower::new(s, 0.0), u)
    }

    #[test]
    fn magnitudes_are_substituted() {
        let inst = Instance::new(
            vec![10.0; 4],
            vec![User::new("a", vec![pref("p", 1..=2, ComplexPower::new(3.0, 4.0), 1.0)])],
        );
        let bag = to_bag_ufp(&inst).unwrap();
        assert_eq!(
            bag.users[0][0],
            BagDemand {
                start: 1,
                end: 2,
                demand: 5.0,
                utility: 1.0
            }
        );
    }

    #[test]
    fn non_constant_and_gapped_windows_are_rejected() {
        let varying = DemandPreference::new(
            "p",
            vec![0, 1],
            vec![ComplexPower::new(1.0, 1.0), ComplexPower::new(2.0, 2.0)],
            1.0,
        );
        let inst = Instance::new(vec![10.0; 2], vec![User::new("a", vec![varying])]);
        let e = to_bag_ufp(&inst).unwrap_err().to_string();
        assert!(e.contains("a/p") && e.contains("constant"), "{e}");

        let gapped = DemandPreference::new("q", vec![0, 2], vec![ComplexPower::new(1.0, 0.0); 2], 1.0);
        let inst = Instance::new(vec![10.0; 3], vec![User::new("b", vec![gapped])]);
        let e = to_bag_ufp(&inst).unwrap_err().to_string();
        assert!(e.contains("b/q") && e.contains("contiguous"), "{e}");
    }

    #[test]
    fn nba_examples() {
        let bag = |demands: &[f64]| RealBagInstance {
            capacities: vec![5.0, 9.0],
            users: demands
                .iter()
                .map(|&d| {
                    vec![BagDemand {
                        start: 0,
                        end: 1,
                        demand: d,
                        utility: 1.0,
                    }]
                })
                .collect(),
        };
        assert!(check_nba(&bag(&[3.0, 5.0])));
        assert!(!check_nba(&bag(&[6.0])));
        assert!(check_nba(&bag(&[])));
    }

    #[test]
    fn bottleneck_ties_go_left() {
        let bag = RealBagInstance {
            capacities: vec![7.0, 3.0, 3.0, 5.0],
            users: vec![vec![BagDemand {
                start: 0,
                end: 3,
                demand: 1.0,
                utility: 1.0,
            }]],
        };
        assert_eq!(bag.bottleneck(PrefRef::new(0, 0)), 1);
    }

    #[test]
    fn local_ratio_examples() {
        let inst = Instance::new(
            vec![10.0; 4],
            vec![
                User::new("a", vec![real("p", 0..=1, 8.0, 5.0)]),
                User::new("b", vec![real("p", 2..=3, 8.0, 3.0)]),
            ],
        );
        let bag = to_bag_ufp(&inst).unwrap();
        let split = DeltaSplit::new(&bag, 0.5).unwrap();
        let sel = solve_large_local_ratio(&bag, &split);
        assert_eq!(bag.utility(&sel), 8.0);

        let inst = Instance::new(
            vec![10.0; 4],
            vec![User::new(
                "a",
                vec![real("p", 0..=1, 8.0, 5.0), real("q", 1..=3, 8.0, 3.0)],
            )],
        );
        let bag = to_bag_ufp(&inst).unwrap();
        let split = DeltaSplit::new(&bag, 0.5).unwrap();
        assert_eq!(solve_large_local_ratio(&bag, &split).len(), 1);
    }

    #[test]
    fn greedy_keeps_a_feasible_prefix() {
        let inst = Instance::new(
            vec![10.0],
            vec![
                User::new("a", vec![real("p", 0..=0, 4.0, 4.0)]),
                User::new("b", vec![real("p", 0..=0, 4.0, 3.0)]),
                User::new("c", vec![real("p", 0..=0, 4.0, 2.0)]),
            ],
        );
        let bag = to_bag_ufp(&inst).unwrap();
        let split = DeltaSplit::new(&bag, 1.0).unwrap();
        let sel = solve_small_greedy(&bag, &split);
        assert_eq!(bag.utility(&sel), 7.0);
        assert!(is_feasible(&inst, &sel, 1.0));
        let empty = DeltaSplit::new(&bag, 0.1).unwrap();
        assert!(solve_small_greedy(&bag, &empty).is_empty());
    }

    #[test]
    fn split_picks_the_better_side() {
        // One large demand worth 5 against two small ones worth 3 each.
        let inst = Instance::new(
            vec![10.0],
            vec![
                User::new("a", vec![real("p", 0..=0, 9.0, 5.0)]),
                User::new("b", vec![real("p", 0..=0, 3.0, 3.0)]),
                User::new("c", vec![real("p", 0..=0, 3.0, 3.0)]),
            ],
        );
        let (sel, report) = solve_split(&inst, 0.5).unwrap();
        assert_eq!(report.utility, 6.0);
        assert_eq!(sel.len(), 2);
        assert!(report.violation_beta <= 1.0);
    }

    #[test]
    fn nba_violation_names_the_demand() {
        let inst = Instance::new(
            vec![5.0, 9.0],
            vec![User::new("big", vec![real("p", 1..=1, 6.0, 1.0)])],
        );
        let e = solve_split(&inst, 0.5).unwrap_err().to_string();
        assert!(e.contains("big/p") && e.contains("C_min=5"), "{e}");
    }

    #[test]
    fn crossing_bound_formula() {
        assert_eq!(crossing_bound(0.0, 1.0), 2);
        assert_eq!(crossing_bound(0.0, 0.5), 8);
        assert_eq!(crossing_bound(FRAC_PI_2, 1.0), 2);
    }

    #[test]
    fn exact_bag_beats_heuristics() {
        let inst = Instance::new(
            vec![10.0, 10.0],
            vec![
                User::new("a", vec![real("p", 0..=1, 6.0, 6.0), real("q", 0..=0, 5.0, 4.0)]),
                User::new("b", vec![real("p", 0..=1, 5.0, 5.0)]),
                User::new("c", vec![real("p", 1..=1, 5.0, 4.0)]),
            ],
        );
        let bag = to_bag_ufp(&inst).unwrap();
        let all: Vec<PrefRef> = bag.refs().collect();
        let exact = ExactBag::default().solve(&bag, &all).unwrap();
        assert!(bag.is_feasible(&exact));
        assert_eq!(bag.utility(&exact), 13.0);
        for s in [&LocalRatio as &dyn BagUfpSolver, &EfficiencyGreedy] {
            let sel = s.solve(&bag, &all).unwrap();
            assert!(bag.is_feasible(&sel));
            assert!(bag.utility(&sel) <= 13.0);
        }
    }
}
