//! Single-slot greedy with multiple-choice preprocessing.
//!
//! Demands are replaced by their magnitudes. Each user's preferences are
//! reduced to the upper concave hull of `(|s|, u)` through the origin, which
//! turns the choice among preferences into a chain of incremental items with
//! strictly decreasing efficiency. Packing items by efficiency gives the
//! optimum of the magnitude relaxation; stopping at the first overflow and
//! comparing with the best single demand gives an integral solution within
//! `cos(phi / 2) / 2` of the optimum.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use crate::error::{CspError, Result};
use crate::model::{
    angle_stats, evaluate, validate, FractionalSolution, Instance, PrefRef, Selection,
    SolveReport, Violation,
};

pub const NAME: &str = "greedy";

/// One point of a reduced preference chain. `pref` is `None` for the dummy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    pub pref: Option<usize>,
    pub magnitude: f64,
    pub utility: f64,
}

/// Levels strictly increase in magnitude and utility while both the average
/// and the incremental efficiency strictly decrease. Level 0 is the dummy.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedPreferenceSet {
    pub user: usize,
    pub levels: Vec<Level>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncrementalItem {
    pub user: usize,
    /// At least 1; taking the item moves the user from `level - 1` to `level`.
    pub level: usize,
    pub delta_u: f64,
    pub delta_s: f64,
}

fn require_single_slot(instance: &Instance) -> Result<()> {
    if instance.slots() != 1 {
        return Err(CspError::precondition(
            NAME,
            format!("greedy requires m=1, got m={}", instance.slots()),
        ));
    }
    Ok(())
}

fn require_first_quadrant(instance: &Instance) -> Result<()> {
    let phi = angle_stats(instance).phi;
    if phi > FRAC_PI_2 + 1e-12 {
        return Err(CspError::precondition(
            NAME,
            format!("greedy requires demands in the first quadrant (phi <= pi/2), got phi={phi}"),
        ));
    }
    Ok(())
}

/// Drops every preference that some optimum can avoid: dominated ones, ones
/// with no better efficiency, and ones below the chord of their neighbours.
pub fn reduce_preferences(instance: &Instance, user: usize) -> Result<ReducedPreferenceSet> {
    require_single_slot(instance)?;
    let prefs = &instance
        .users
        .get(user)
        .ok_or_else(|| CspError::UnknownId(format!("user #{user}")))?
        .preferences;
    let mut pts: Vec<Level> = prefs
        .iter()
        .enumerate()
        .map(|(j, p)| Level {
            pref: Some(j),
            magnitude: p.value_at(0).norm(),
            utility: p.utility,
        })
        .collect();
    pts.sort_by(|a, b| {
        a.magnitude
            .total_cmp(&b.magnitude)
            .then(b.utility.total_cmp(&a.utility))
            .then(a.pref.cmp(&b.pref))
    });
    let mut hull = vec![Level {
        pref: None,
        magnitude: 0.0,
        utility: 0.0,
    }];
    for c in pts {
        let top = hull[hull.len() - 1];
        if c.utility <= top.utility {
            continue;
        }
        while hull.len() >= 2 {
            let b = hull[hull.len() - 1];
            let a = hull[hull.len() - 2];
            if b.magnitude == 0.0 {
                break;
            }
            let lhs = (b.utility - a.utility) * (c.magnitude - b.magnitude);
            let rhs = (c.utility - b.utility) * (b.magnitude - a.magnitude);
            if lhs <= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(c);
    }
    Ok(ReducedPreferenceSet { user, levels: hull })
}

impl ReducedPreferenceSet {
    pub fn items(&self) -> impl Iterator<Item = IncrementalItem> + '_ {
        self.levels.windows(2).enumerate().map(|(i, w)| IncrementalItem {
            user: self.user,
            level: i + 1,
            delta_u: w[1].utility - w[0].utility,
            delta_s: w[1].magnitude - w[0].magnitude,
        })
    }
}

/// Efficiency descending, then user, then level. Zero-size items first.
pub fn efficiency_order(a: &IncrementalItem, b: &IncrementalItem) -> Ordering {
    let lhs = b.delta_u * a.delta_s;
    let rhs = a.delta_u * b.delta_s;
    lhs.total_cmp(&rhs)
        .then(a.user.cmp(&b.user))
        .then(a.level.cmp(&b.level))
}

struct Prepared {
    sets: Vec<ReducedPreferenceSet>,
    items: Vec<IncrementalItem>,
    capacity: f64,
}

/// `oversize` admits demands larger than the capacity; the relaxation is
/// still well defined for them.
fn prepare(instance: &Instance, oversize: bool) -> Result<Prepared> {
    let violations: Vec<Violation> = validate(instance)
        .into_iter()
        .filter(|v| !(oversize && matches!(v, Violation::ExceedsCapacity { .. })))
        .collect();
    if !violations.is_empty() {
        return Err(CspError::InvalidInstance(violations));
    }
    require_single_slot(instance)?;
    require_first_quadrant(instance)?;
    let sets = (0..instance.user_count())
        .map(|k| reduce_preferences(instance, k))
        .collect::<Result<Vec<_>>>()?;
    let mut items: Vec<IncrementalItem> = sets.iter().flat_map(|s| s.items()).collect();
    items.sort_by(efficiency_order);
    Ok(Prepared {
        sets,
        items,
        capacity: instance.capacities[0],
    })
}

/// Optimum of the magnitude relaxation. At most one item is split, so at
/// most two variables (adjacent levels of one user) are fractional.
pub fn solve_fractional(instance: &Instance) -> Result<(FractionalSolution, f64)> {
    let prep = prepare(instance, true)?;
    let mut level = vec![0usize; instance.user_count()];
    let mut split: Option<(IncrementalItem, f64)> = None;
    let mut used = 0.0;
    for it in &prep.items {
        if used + it.delta_s <= prep.capacity {
            used += it.delta_s;
            level[it.user] = it.level;
        } else {
            split = Some((*it, (prep.capacity - used) / it.delta_s));
            break;
        }
    }
    let mut x = FractionalSolution::new();
    let mut utility = 0.0;
    for (k, &l) in level.iter().enumerate() {
        let lv = prep.sets[k].levels[l];
        if let Some(j) = lv.pref {
            x.set(PrefRef::new(k, j), 1.0);
            utility += lv.utility;
        }
    }
    if let Some((it, f)) = split.filter(|&(_, f)| f > 0.0) {
        let levels = &prep.sets[it.user].levels;
        let upper = levels[it.level].pref.expect("items never end at the dummy");
        x.set(PrefRef::new(it.user, upper), f);
        if let Some(lower) = levels[it.level - 1].pref {
            x.set(PrefRef::new(it.user, lower), 1.0 - f);
        }
        utility += f * it.delta_u;
    }
    Ok((x, utility))
}

/// Integral greedy: pack items by efficiency until the first one that does
/// not fit, then return the better of that packing and the best single
/// demand (the packing wins ties).
pub fn solve(instance: &Instance) -> Result<(Selection, SolveReport)> {
    let start = Instant::now();
    let prep = prepare(instance, false)?;
    let mut level = vec![0usize; instance.user_count()];
    let mut used = 0.0;
    for it in &prep.items {
        if used + it.delta_s > prep.capacity {
            break;
        }
        used += it.delta_s;
        level[it.user] = it.level;
    }
    let packed: Selection = level
        .iter()
        .enumerate()
        .filter_map(|(k, &l)| prep.sets[k].levels[l].pref.map(|j| PrefRef::new(k, j)))
        .collect();
    let packed_u = packed.utility(instance);
    let mut best_single: Option<(PrefRef, f64)> = None;
    for r in instance.pref_refs() {
        let u = instance.pref(r).utility;
        if best_single.is_none_or(|(_, b)| u > b) {
            best_single = Some((r, u));
        }
    }
    let chosen = match best_single {
        Some((r, u)) if u > packed_u => [r].into_iter().collect(),
        _ => packed,
    };
    let report = evaluate(instance, &chosen)?.with_solver(NAME, start.elapsed());
    Ok((chosen, report))
}
