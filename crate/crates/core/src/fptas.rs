//! Bi-criteria scheme for a constant number of slots: round every demand to
//! a per-slot grid, then find the best selection whose rounded load lies in
//! a slightly enlarged disk, by exact-fit dynamic programming.
//!
//! Users split into `N+` (every real part `>= 0`) and `N-` (every real part
//! `< 0`). For `N-` the rounded real parts are negated so both sides work
//! with nonnegative integer coordinates. A guess `(xi+, xi-, zeta+, zeta-)`
//! fixes the exact coordinate sums of the two sides; it is admissible when
//! `(xi+ - xi-)^2 + (zeta+ + zeta-)^2 <= ((1 + 2 eps) C)^2` in every slot.
//!
//! Rather than running the exact-fit program once per guess, each side's
//! table of reachable exact sums is built once; every reachable pair of sums
//! is a guess, so scanning pairs evaluates all guesses at once.
//! [`solve_by_guess_loop`] keeps the one-program-per-guess formulation.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use crate::error::{CspError, Result};
use crate::exec::Exec;
use crate::model::{angle_stats, ensure_valid, evaluate, Instance, PrefRef, Selection, SolveReport};
use crate::oracle::IntDemand;

pub const NAME: &str = "fptas";

/// Rough bytes per sparse table entry, used to turn a memory cap into an
/// entry count.
pub const TABLE_ENTRY_BYTES: u64 = 96;

const SNAP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct FptasConfig {
    pub epsilon: f64,
    pub max_slots: usize,
    /// Cap on admissible-guess candidates examined (pairs of table states).
    pub max_guesses: f64,
    /// Cap on live entries per dynamic-programming table.
    pub max_table_entries: u64,
    pub grid: GridExtent,
    pub exec: Exec,
}

impl FptasConfig {
    pub fn new(epsilon: f64) -> Self {
        FptasConfig {
            epsilon,
            max_slots: 3,
            max_guesses: 2e8,
            max_table_entries: (2u64 << 30) / TABLE_ENTRY_BYTES,
            grid: GridExtent::Extended,
            exec: Exec::default(),
        }
    }

    pub fn with_memory_cap_bytes(mut self, bytes: u64) -> Self {
        self.max_table_entries = (bytes / TABLE_ENTRY_BYTES).max(1);
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

/// How far the guess grid reaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridExtent {
    /// Per-coordinate bounds `ceil(C(1+tan θ)/L)`, `ceil(C tan θ/L)` and `ceil(C/L)`.
    Tight,
    /// Tight bounds plus `n` grid units per coordinate. Rounding up can push
    /// the rounded load of a feasible selection past the tight bounds by up
    /// to `n` units; the extension keeps every such selection reachable.
    Extended,
}

/// Per-slot grid steps `L_t = eps C_t / (n (tan(theta) + 1))`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundingScale {
    pub l: Vec<f64>,
    pub epsilon: f64,
    pub theta: f64,
    pub n: usize,
}

impl RoundingScale {
    pub fn tan_theta(&self) -> f64 {
        self.theta.tan()
    }
}

/// Rounded demands in grid units, dense over all slots. For `N-` users the
/// real coordinates are already negated.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundedInstance {
    pub users: Vec<Vec<IntDemand>>,
    pub second_quadrant: Vec<bool>,
}

impl RoundedInstance {
    /// Original (unnegated) rounded demand as multiples of `L_t`.
    pub fn signed(&self, r: PrefRef) -> (Vec<i64>, Vec<i64>) {
        let d = &self.users[r.user][r.pref];
        let sign = if self.second_quadrant[r.user] { -1 } else { 1 };
        (d.re.iter().map(|v| v * sign).collect(), d.im.clone())
    }
}

fn snap(q: f64) -> Option<f64> {
    let r = q.round();
    ((q - r).abs() <= SNAP_TOL * q.abs().max(1.0)).then_some(r)
}

/// `ceil(q)`, treating values within relative `1e-9` of an integer as that integer.
pub fn ceil_snapped(q: f64) -> i64 {
    snap(q).unwrap_or_else(|| q.ceil()) as i64
}

pub fn floor_snapped(q: f64) -> i64 {
    snap(q).unwrap_or_else(|| q.floor()) as i64
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CspError::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

pub fn rounding_scale(instance: &Instance, epsilon: f64) -> Result<RoundingScale> {
    check_epsilon(epsilon)?;
    let theta = angle_stats(instance).theta;
    if theta >= FRAC_PI_2 - 1e-9 {
        return Err(CspError::precondition(
            NAME,
            "fptas requires phi < pi so that tan(theta) is finite",
        ));
    }
    let n = instance.user_count().max(1);
    let tan = theta.tan();
    Ok(RoundingScale {
        l: instance
            .capacities
            .iter()
            .map(|c| epsilon * c / (n as f64 * (tan + 1.0)))
            .collect(),
        epsilon,
        theta,
        n: instance.user_count(),
    })
}

/// Rounds one value: imaginary part up, real part away from zero.
pub fn round_value(re: f64, im: f64, l: f64) -> (i64, i64) {
    let r = if re >= 0.0 {
        ceil_snapped(re / l)
    } else {
        floor_snapped(re / l)
    };
    (r, ceil_snapped(im / l))
}

pub fn round_demands(instance: &Instance, epsilon: f64) -> Result<(RoundedInstance, RoundingScale)> {
    let scale = rounding_scale(instance, epsilon)?;
    let m = instance.slots();
    let mut users = Vec::with_capacity(instance.user_count());
    let mut second = Vec::with_capacity(instance.user_count());
    for u in &instance.users {
        let neg = u.is_second_quadrant();
        let sign = if neg { -1 } else { 1 };
        second.push(neg);
        users.push(
            u.preferences
                .iter()
                .map(|p| {
                    let mut d = IntDemand {
                        re: vec![0; m],
                        im: vec![0; m],
                        utility: p.utility,
                    };
                    for (t, v) in p.slots() {
                        let (r, i) = round_value(v.re, v.im, scale.l[t]);
                        d.re[t] = r * sign;
                        d.im[t] = i;
                    }
                    d
                })
                .collect(),
        );
    }
    Ok((
        RoundedInstance {
            users,
            second_quadrant: second,
        },
        scale,
    ))
}

/// Per-slot grid sizes in units of `L_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GuessGrid {
    pub xi_plus_max: Vec<i64>,
    pub xi_minus_max: Vec<i64>,
    pub zeta_max: Vec<i64>,
    /// `(1 + 2 eps) C_t / L_t`.
    pub radius: Vec<f64>,
}

/// A guess in units of `L_t`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GuessVector {
    pub xi_plus: Vec<i64>,
    pub xi_minus: Vec<i64>,
    pub zeta_plus: Vec<i64>,
    pub zeta_minus: Vec<i64>,
}

impl GuessVector {
    /// Slot-major key: `(xi+(t), xi-(t), zeta+(t), zeta-(t))` for t = 0, 1, ...
    pub fn order_key(&self) -> Vec<i64> {
        let mut k = Vec::with_capacity(4 * self.xi_plus.len());
        for t in 0..self.xi_plus.len() {
            k.extend([
                self.xi_plus[t],
                self.xi_minus[t],
                self.zeta_plus[t],
                self.zeta_minus[t],
            ]);
        }
        k
    }

    /// Values in power units.
    pub fn scaled(&self, scale: &RoundingScale) -> [Vec<f64>; 4] {
        let f = |v: &Vec<i64>| v.iter().zip(&scale.l).map(|(&a, l)| a as f64 * l).collect();
        [
            f(&self.xi_plus),
            f(&self.xi_minus),
            f(&self.zeta_plus),
            f(&self.zeta_minus),
        ]
    }
}

pub fn is_admissible(g: &GuessVector, radius: &[f64]) -> bool {
    (0..radius.len()).all(|t| {
        admissible_slot(
            g.xi_plus[t],
            g.xi_minus[t],
            g.zeta_plus[t],
            g.zeta_minus[t],
            radius[t],
        )
    })
}

#[inline]
fn admissible_slot(xp: i64, xm: i64, zp: i64, zm: i64, radius: f64) -> bool {
    let a = (xp - xm) as f64;
    let b = (zp + zm) as f64;
    a * a + b * b <= radius * radius * (1.0 + 1e-12)
}

impl GuessGrid {
    pub fn new(instance: &Instance, scale: &RoundingScale, extent: GridExtent) -> Self {
        let tan = scale.tan_theta();
        let extra = match extent {
            GridExtent::Tight => 0,
            GridExtent::Extended => scale.n as i64,
        };
        let per_slot = |f: &dyn Fn(f64, f64) -> f64| -> Vec<i64> {
            instance
                .capacities
                .iter()
                .zip(&scale.l)
                .map(|(&c, &l)| ceil_snapped(f(c, l)) + extra)
                .collect()
        };
        GuessGrid {
            xi_plus_max: per_slot(&|c, l| c * (1.0 + tan) / l),
            xi_minus_max: per_slot(&|c, l| c * tan / l),
            zeta_max: per_slot(&|c, l| c / l),
            radius: instance
                .capacities
                .iter()
                .zip(&scale.l)
                .map(|(&c, &l)| (1.0 + 2.0 * scale.epsilon) * c / l)
                .collect(),
        }
    }

    /// Size of the full product, before the admissibility filter.
    pub fn raw_count(&self) -> f64 {
        (0..self.radius.len())
            .map(|t| {
                (self.xi_plus_max[t] + 1) as f64
                    * (self.xi_minus_max[t] + 1) as f64
                    * ((self.zeta_max[t] + 1) as f64).powi(2)
            })
            .product()
    }

    /// Admissible guesses in slot-major lexicographic order.
    pub fn admissible(&self) -> impl Iterator<Item = GuessVector> + '_ {
        let m = self.radius.len();
        let limits: Vec<i64> = (0..m)
            .flat_map(|t| {
                [
                    self.xi_plus_max[t],
                    self.xi_minus_max[t],
                    self.zeta_max[t],
                    self.zeta_max[t],
                ]
            })
            .collect();
        let mut cur: Option<Vec<i64>> = Some(vec![0; 4 * m]);
        std::iter::from_fn(move || loop {
            let c = cur.as_mut()?;
            let g = GuessVector {
                xi_plus: (0..m).map(|t| c[4 * t]).collect(),
                xi_minus: (0..m).map(|t| c[4 * t + 1]).collect(),
                zeta_plus: (0..m).map(|t| c[4 * t + 2]).collect(),
                zeta_minus: (0..m).map(|t| c[4 * t + 3]).collect(),
            };
            // Odometer increment, last coordinate fastest.
            let mut i = c.len();
            loop {
                if i == 0 {
                    cur = None;
                    break;
                }
                i -= 1;
                if c[i] < limits[i] {
                    c[i] += 1;
                    break;
                }
                c[i] = 0;
            }
            if is_admissible(&g, &self.radius) {
                return Some(g);
            }
        })
    }
}

/// Raw and admissible guess counts for an instance.
pub fn enumerate_guesses(
    instance: &Instance,
    scale: &RoundingScale,
    extent: GridExtent,
) -> (GuessGrid, Vec<GuessVector>) {
    let grid = GuessGrid::new(instance, scale, extent);
    let all = grid.admissible().collect();
    (grid, all)
}

#[derive(Clone, Copy, Debug)]
struct Node {
    parent: Option<usize>,
    user: usize,
    pref: usize,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    utility: f64,
    node: Option<usize>,
}

/// Exact-sum table: every reachable `(c1, c2)` within bounds, with the best
/// utility reaching it and a back-pointer into `arena`.
struct Table {
    m: usize,
    states: BTreeMap<Vec<i64>, Entry>,
    arena: Vec<Node>,
}

impl Table {
    fn build(
        users: &[(usize, &Vec<IntDemand>)],
        m: usize,
        upper: &[i64],
        max_entries: u64,
    ) -> Result<Table> {
        let mut states = BTreeMap::new();
        states.insert(
            vec![0i64; 2 * m],
            Entry {
                utility: 0.0,
                node: None,
            },
        );
        let mut arena = Vec::new();
        for &(user, prefs) in users {
            let mut next = states.clone();
            for (key, e) in &states {
                for (j, d) in prefs.iter().enumerate() {
                    let mut k = key.clone();
                    let mut ok = true;
                    for t in 0..m {
                        k[t] += d.re[t];
                        k[m + t] += d.im[t];
                        ok &= k[t] <= upper[t] && k[m + t] <= upper[m + t];
                    }
                    if !ok {
                        continue;
                    }
                    let u = e.utility + d.utility;
                    let better = next.get(&k).is_none_or(|x: &Entry| u > x.utility);
                    if better {
                        arena.push(Node {
                            parent: e.node,
                            user,
                            pref: j,
                        });
                        next.insert(
                            k,
                            Entry {
                                utility: u,
                                node: Some(arena.len() - 1),
                            },
                        );
                    }
                }
            }
            if next.len() as u64 > max_entries {
                return Err(CspError::resource(
                    "dynamic-programming table entries",
                    next.len() as f64,
                    max_entries as f64,
                ));
            }
            states = next;
        }
        Ok(Table { m, states, arena })
    }

    fn selection(&self, mut node: Option<usize>) -> Vec<PrefRef> {
        let mut out = Vec::new();
        while let Some(i) = node {
            let n = self.arena[i];
            out.push(PrefRef::new(n.user, n.pref));
            node = n.parent;
        }
        out
    }

    fn lookup(&self, c1: &[i64], c2: &[i64]) -> Option<(Vec<PrefRef>, f64)> {
        let mut key = c1.to_vec();
        key.extend_from_slice(c2);
        debug_assert_eq!(key.len(), 2 * self.m);
        self.states
            .get(&key)
            .map(|e| (self.selection(e.node), e.utility))
    }
}

/// Best utility of a selection (at most one demand per user, skipping
/// allowed) whose coordinate sums equal `(c1, c2)` exactly. Selection indices
/// refer to positions in `users`.
pub fn dkp_exact(
    users: &[Vec<IntDemand>],
    c1: &[i64],
    c2: &[i64],
    max_entries: u64,
) -> Result<Option<(Selection, f64)>> {
    let m = c1.len();
    if c2.len() != m || users.iter().flatten().any(|d| d.re.len() != m || d.im.len() != m) {
        return Err(CspError::InvalidArgument("dimension mismatch".into()));
    }
    if users
        .iter()
        .flatten()
        .any(|d| d.re.iter().chain(&d.im).any(|&v| v < 0))
    {
        return Err(CspError::InvalidArgument(
            "exact-fit demands must have nonnegative coordinates".into(),
        ));
    }
    if c1.iter().chain(c2).any(|&v| v < 0) {
        return Ok(None);
    }
    let indexed: Vec<(usize, &Vec<IntDemand>)> = users.iter().enumerate().collect();
    let mut upper = c1.to_vec();
    upper.extend_from_slice(c2);
    let table = Table::build(&indexed, m, &upper, max_entries)?;
    Ok(table
        .lookup(c1, c2)
        .map(|(refs, u)| (refs.into_iter().collect(), u)))
}

/// Diagnostics of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FptasStats {
    pub raw_guesses: f64,
    pub plus_states: usize,
    pub minus_states: usize,
    pub admissible_pairs: u64,
}

#[derive(Clone, Debug)]
pub struct FptasOutcome {
    pub selection: Selection,
    pub report: SolveReport,
    pub guess: Option<GuessVector>,
    pub stats: FptasStats,
}

fn check_slots(instance: &Instance, config: &FptasConfig) -> Result<()> {
    if instance.slots() > config.max_slots {
        return Err(CspError::precondition(
            NAME,
            format!(
                "fptas needs a constant number of slots: m={} exceeds the cap {}",
                instance.slots(),
                config.max_slots
            ),
        ));
    }
    Ok(())
}

fn finish(
    instance: &Instance,
    selection: Selection,
    guess: Option<GuessVector>,
    stats: FptasStats,
    start: Instant,
) -> Result<FptasOutcome> {
    let report = evaluate(instance, &selection)?.with_solver(NAME, start.elapsed());
    Ok(FptasOutcome {
        selection,
        report,
        guess,
        stats,
    })
}

pub fn solve_bifptas(instance: &Instance, epsilon: f64) -> Result<(Selection, SolveReport)> {
    let o = solve_bifptas_with(instance, &FptasConfig::new(epsilon))?;
    Ok((o.selection, o.report))
}

/// Best selection over all admissible guesses; among equal utilities the
/// guess with the smallest slot-major key wins.
pub fn solve_bifptas_with(instance: &Instance, config: &FptasConfig) -> Result<FptasOutcome> {
    let start = Instant::now();
    ensure_valid(instance)?;
    check_epsilon(config.epsilon)?;
    check_slots(instance, config)?;
    if instance.user_count() == 0 {
        return finish(instance, Selection::new(), None, FptasStats::default(), start);
    }
    let (rounded, scale) = round_demands(instance, config.epsilon)?;
    let grid = GuessGrid::new(instance, &scale, config.grid);
    let m = instance.slots();
    let side = |neg: bool, re_max: &[i64]| -> Result<Table> {
        let users: Vec<(usize, &Vec<IntDemand>)> = rounded
            .users
            .iter()
            .enumerate()
            .filter(|(k, _)| rounded.second_quadrant[*k] == neg)
            .collect();
        let mut upper = re_max.to_vec();
        upper.extend_from_slice(&grid.zeta_max);
        Table::build(&users, m, &upper, config.max_table_entries)
    };
    let plus = side(false, &grid.xi_plus_max)?;
    let minus = side(true, &grid.xi_minus_max)?;
    let pairs = plus.states.len() as f64 * minus.states.len() as f64;
    if pairs > config.max_guesses {
        return Err(CspError::resource("fptas guess pairs", pairs, config.max_guesses));
    }
    let mut stats = FptasStats {
        raw_guesses: grid.raw_count(),
        plus_states: plus.states.len(),
        minus_states: minus.states.len(),
        admissible_pairs: 0,
    };

    let plus_states: Vec<(&Vec<i64>, &Entry)> = plus.states.iter().collect();
    let mut minus_states: Vec<(&Vec<i64>, &Entry)> = minus.states.iter().collect();
    // Utility descending lets each scan stop early; the key breaks ties.
    minus_states.sort_by(|a, b| b.1.utility.total_cmp(&a.1.utility).then(a.0.cmp(b.0)));

    let guess_of = |p: &[i64], q: &[i64]| GuessVector {
        xi_plus: p[..m].to_vec(),
        xi_minus: q[..m].to_vec(),
        zeta_plus: p[m..].to_vec(),
        zeta_minus: q[m..].to_vec(),
    };

    #[derive(Clone)]
    struct Cand {
        utility: f64,
        key: Vec<i64>,
        plus: usize,
        minus: usize,
        pairs: u64,
    }
    let better = |a: Option<Cand>, b: Option<Cand>| -> Option<Cand> {
        match (a, b) {
            (None, b) => b,
            (a, None) => a,
            (Some(a), Some(b)) => {
                let pairs = a.pairs + b.pairs;
                let win = if b.utility > a.utility || (b.utility == a.utility && b.key < a.key) {
                    b
                } else {
                    a
                };
                Some(Cand { pairs, ..win })
            }
        }
    };
    let idx: Vec<usize> = (0..plus_states.len()).collect();
    let best = config.exec.map_reduce(
        &idx,
        None,
        |&i| {
            let (pk, pe) = plus_states[i];
            let mut best: Option<Cand> = None;
            let mut count = 0u64;
            for (j, (qk, qe)) in minus_states.iter().enumerate() {
                let u = pe.utility + qe.utility;
                if let Some(b) = &best {
                    if u < b.utility {
                        break;
                    }
                }
                let ok = (0..m).all(|t| admissible_slot(pk[t], qk[t], pk[m + t], qk[m + t], grid.radius[t]));
                if !ok {
                    continue;
                }
                count += 1;
                let key = guess_of(pk, qk).order_key();
                let c = Cand {
                    utility: u,
                    key,
                    plus: i,
                    minus: j,
                    pairs: 0,
                };
                best = better(best, Some(c));
            }
            best.map(|b| Cand { pairs: count, ..b })
        },
        better,
    );
    let Some(best) = best else {
        return finish(instance, Selection::new(), None, stats, start);
    };
    stats.admissible_pairs = best.pairs;
    let (pk, pe) = plus_states[best.plus];
    let (qk, qe) = minus_states[best.minus];
    let selection: Selection = plus
        .selection(pe.node)
        .into_iter()
        .chain(minus.selection(qe.node))
        .collect();
    finish(instance, selection, Some(guess_of(pk, qk)), stats, start)
}

/// Same optimization, one pair of exact-fit programs per admissible guess.
/// Exponentially slower; kept as an independent route for testing.
pub fn solve_by_guess_loop(instance: &Instance, config: &FptasConfig) -> Result<FptasOutcome> {
    let start = Instant::now();
    ensure_valid(instance)?;
    check_epsilon(config.epsilon)?;
    check_slots(instance, config)?;
    if instance.user_count() == 0 {
        return finish(instance, Selection::new(), None, FptasStats::default(), start);
    }
    let (rounded, scale) = round_demands(instance, config.epsilon)?;
    let grid = GuessGrid::new(instance, &scale, config.grid);
    if grid.raw_count() > config.max_guesses {
        return Err(CspError::resource("fptas guesses", grid.raw_count(), config.max_guesses));
    }
    let split = |neg: bool| -> (Vec<usize>, Vec<Vec<IntDemand>>) {
        let ids: Vec<usize> = (0..rounded.users.len())
            .filter(|&k| rounded.second_quadrant[k] == neg)
            .collect();
        let users = ids.iter().map(|&k| rounded.users[k].clone()).collect();
        (ids, users)
    };
    let (plus_ids, plus_users) = split(false);
    let (minus_ids, minus_users) = split(true);
    let mut stats = FptasStats {
        raw_guesses: grid.raw_count(),
        ..FptasStats::default()
    };
    let mut best: Option<(f64, Selection, GuessVector)> = None;
    for g in grid.admissible() {
        stats.admissible_pairs += 1;
        let Some((yp, up)) = dkp_exact(&plus_users, &g.xi_plus, &g.zeta_plus, config.max_table_entries)?
        else {
            continue;
        };
        let Some((ym, um)) =
            dkp_exact(&minus_users, &g.xi_minus, &g.zeta_minus, config.max_table_entries)?
        else {
            continue;
        };
        let u = up + um;
        if best.as_ref().is_none_or(|b| u > b.0) {
            let sel = yp
                .iter()
                .map(|r| PrefRef::new(plus_ids[r.user], r.pref))
                .chain(ym.iter().map(|r| PrefRef::new(minus_ids[r.user], r.pref)))
                .collect();
            best = Some((u, sel, g));
        }
    }
    match best {
        Some((_, sel, g)) => finish(instance, sel, Some(g), stats, start),
        None => finish(instance, Selection::new(), None, stats, start),
    }
}
