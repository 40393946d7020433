//! Instances, selections and their evaluation.
//!
//! Slots are indexed from zero inside the library; the JSON format in
//! [`crate::io`] uses one-based slot numbers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::time::Duration;

use crate::complex::ComplexPower;
use crate::error::{CspError, Result};

/// Relative tolerance applied to every capacity comparison.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Elasticity {
    #[default]
    Inelastic,
    Elastic,
}

/// One candidate demand of a user.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandPreference {
    pub id: String,
    /// Ascending, duplicate-free slot indices. Need not be contiguous.
    pub window: Vec<usize>,
    /// `values[i]` is the demand at slot `window[i]`.
    pub values: Vec<ComplexPower>,
    pub utility: f64,
    pub elasticity: Elasticity,
}

impl DemandPreference {
    pub fn new(
        id: impl Into<String>,
        window: Vec<usize>,
        values: Vec<ComplexPower>,
        utility: f64,
    ) -> Self {
        DemandPreference {
            id: id.into(),
            window,
            values,
            utility,
            elasticity: Elasticity::Inelastic,
        }
    }

    pub fn elastic(mut self) -> Self {
        self.elasticity = Elasticity::Elastic;
        self
    }

    pub fn is_elastic(&self) -> bool {
        self.elasticity == Elasticity::Elastic
    }

    /// Demand at slot `t`, zero outside the window.
    pub fn value_at(&self, t: usize) -> ComplexPower {
        match self.window.binary_search(&t) {
            Ok(i) => self.values[i],
            Err(_) => ComplexPower::ZERO,
        }
    }

    pub fn slots(&self) -> impl Iterator<Item = (usize, ComplexPower)> + '_ {
        self.window.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct User {
    pub id: String,
    pub preferences: Vec<DemandPreference>,
}

impl User {
    pub fn new(id: impl Into<String>, preferences: Vec<DemandPreference>) -> Self {
        User {
            id: id.into(),
            preferences,
        }
    }

    /// True when every demand value of this user has a negative real part
    /// (second quadrant). Users with no negative values count as first quadrant.
    pub fn is_second_quadrant(&self) -> bool {
        let mut any = false;
        for p in &self.preferences {
            for v in &p.values {
                if v.re >= 0.0 {
                    return false;
                }
                any = true;
            }
        }
        any
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub capacities: Vec<f64>,
    pub users: Vec<User>,
}

/// Reference to preference `pref` of user `user`, both by position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrefRef {
    pub user: usize,
    pub pref: usize,
}

impl PrefRef {
    pub const fn new(user: usize, pref: usize) -> Self {
        PrefRef { user, pref }
    }
}

impl Instance {
    pub fn new(capacities: Vec<f64>, users: Vec<User>) -> Self {
        Instance { capacities, users }
    }

    /// Number of slots.
    pub fn slots(&self) -> usize {
        self.capacities.len()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn pref(&self, r: PrefRef) -> &DemandPreference {
        &self.users[r.user].preferences[r.pref]
    }

    pub fn get_pref(&self, r: PrefRef) -> Option<&DemandPreference> {
        self.users.get(r.user)?.preferences.get(r.pref)
    }

    /// Every (user, preference) pair in ascending order.
    pub fn pref_refs(&self) -> impl Iterator<Item = PrefRef> + '_ {
        self.users.iter().enumerate().flat_map(|(k, u)| {
            (0..u.preferences.len()).map(move |j| PrefRef::new(k, j))
        })
    }

    pub fn pref_count(&self) -> usize {
        self.users.iter().map(|u| u.preferences.len()).sum()
    }

    pub fn has_elastic(&self) -> bool {
        self.users
            .iter()
            .flat_map(|u| &u.preferences)
            .any(|p| p.is_elastic())
    }

    pub fn find(&self, user_id: &str, pref_id: &str) -> Result<PrefRef> {
        let k = self
            .users
            .iter()
            .position(|u| u.id == user_id)
            .ok_or_else(|| CspError::UnknownId(format!("user {user_id}")))?;
        let j = self.users[k]
            .preferences
            .iter()
            .position(|p| p.id == pref_id)
            .ok_or_else(|| CspError::UnknownId(format!("preference {user_id}/{pref_id}")))?;
        Ok(PrefRef::new(k, j))
    }

    pub fn ids(&self, r: PrefRef) -> (&str, &str) {
        let u = &self.users[r.user];
        (&u.id, &u.preferences[r.pref].id)
    }

    /// Multiplies every demand by `e^{i rho}`.
    pub fn rotated(&self, rho: f64) -> Instance {
        let mut out = self.clone();
        for p in out.users.iter_mut().flat_map(|u| u.preferences.iter_mut()) {
            for v in &mut p.values {
                *v = v.rotate(rho);
            }
        }
        out
    }

    /// Rotates all demands so that the smallest argument is zero. Accepts
    /// inputs with arguments anywhere in `(-pi, pi]` (for example fourth
    /// quadrant loads) as long as their angular spread is below `pi`.
    pub fn normalized(&self) -> Result<Instance> {
        let args: Vec<f64> = self
            .users
            .iter()
            .flat_map(|u| &u.preferences)
            .flat_map(|p| &p.values)
            .filter(|v| v.norm() > 0.0)
            .map(|v| v.arg())
            .collect();
        let Some(min) = args.iter().copied().reduce(f64::min) else {
            return Ok(self.clone());
        };
        let max = args.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max - min >= PI {
            return Err(CspError::InvalidArgument(format!(
                "demand arguments span {:.6} rad; no rotation brings them into [0, pi)",
                max - min
            )));
        }
        let mut out = self.rotated(-min);
        // Clean up round-off that lands just below the real axis.
        for p in out.users.iter_mut().flat_map(|u| u.preferences.iter_mut()) {
            for v in &mut p.values {
                if v.im < 0.0 && v.im > -1e-12 * v.norm().max(1.0) {
                    v.im = 0.0;
                }
            }
        }
        Ok(out)
    }
}

/// One broken instance invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoSlots,
    NonPositiveCapacity { slot: usize, capacity: f64 },
    DuplicateUserId(String),
    DuplicatePreferenceId { user: String, pref: String },
    EmptyPreferences { user: String },
    EmptyWindow { user: String, pref: String },
    WindowNotAscending { user: String, pref: String },
    ValuesMisaligned { user: String, pref: String },
    BadSlotIndex { user: String, pref: String, slot: usize },
    NonFinite { user: String, pref: String },
    NonPositiveUtility { user: String, pref: String, utility: f64 },
    OutsideUpperHalfPlane { user: String, pref: String, slot: usize },
    ExceedsCapacity { user: String, pref: String, slot: usize, magnitude: f64, capacity: f64 },
    QuadrantMixing { user: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoSlots => write!(f, "instance has no slots"),
            NonPositiveCapacity { slot, capacity } => {
                write!(f, "capacity C_{} = {capacity} is not positive", slot + 1)
            }
            DuplicateUserId(u) => write!(f, "duplicate user id {u}"),
            DuplicatePreferenceId { user, pref } => {
                write!(f, "duplicate preference id {user}/{pref}")
            }
            EmptyPreferences { user } => write!(f, "user {user} has no preferences"),
            EmptyWindow { user, pref } => write!(f, "{user}/{pref}: empty window"),
            WindowNotAscending { user, pref } => {
                write!(f, "{user}/{pref}: window is not strictly ascending")
            }
            ValuesMisaligned { user, pref } => {
                write!(f, "{user}/{pref}: values are not aligned with window")
            }
            BadSlotIndex { user, pref, slot } => {
                write!(f, "{user}/{pref}: slot {} out of range", slot + 1)
            }
            NonFinite { user, pref } => write!(f, "{user}/{pref}: non-finite value"),
            NonPositiveUtility { user, pref, utility } => {
                write!(f, "{user}/{pref}: utility {utility} is not positive")
            }
            OutsideUpperHalfPlane { user, pref, slot } => write!(
                f,
                "{user}/{pref}: demand at slot {} has argument outside [0, pi)",
                slot + 1
            ),
            ExceedsCapacity {
                user,
                pref,
                slot,
                magnitude,
                capacity,
            } => write!(
                f,
                "{user}/{pref}: |s|={magnitude} > C_t={capacity} at slot {}",
                slot + 1
            ),
            QuadrantMixing { user } => write!(f, "quadrant mixing in user {user}"),
        }
    }
}

/// Lists every broken invariant; an empty list means the instance is valid.
pub fn validate(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = instance.slots();
    if m == 0 {
        out.push(Violation::NoSlots);
    }
    for (t, &c) in instance.capacities.iter().enumerate() {
        if !(c > 0.0 && c.is_finite()) {
            out.push(Violation::NonPositiveCapacity { slot: t, capacity: c });
        }
    }
    let mut user_ids = HashSet::new();
    for user in &instance.users {
        if !user_ids.insert(user.id.as_str()) {
            out.push(Violation::DuplicateUserId(user.id.clone()));
        }
        if user.preferences.is_empty() {
            out.push(Violation::EmptyPreferences {
                user: user.id.clone(),
            });
        }
        let mut pref_ids = HashSet::new();
        let (mut nonneg, mut neg) = (false, false);
        for p in &user.preferences {
            let ids = || (user.id.clone(), p.id.clone());
            if !pref_ids.insert(p.id.as_str()) {
                let (user, pref) = ids();
                out.push(Violation::DuplicatePreferenceId { user, pref });
            }
            if !p.utility.is_finite() || p.utility <= 0.0 {
                let (user, pref) = ids();
                out.push(Violation::NonPositiveUtility {
                    user,
                    pref,
                    utility: p.utility,
                });
            }
            if p.window.is_empty() {
                let (user, pref) = ids();
                out.push(Violation::EmptyWindow { user, pref });
            }
            if p.window.windows(2).any(|w| w[0] >= w[1]) {
                let (user, pref) = ids();
                out.push(Violation::WindowNotAscending { user, pref });
            }
            if p.window.len() != p.values.len() {
                let (user, pref) = ids();
                out.push(Violation::ValuesMisaligned { user, pref });
                continue;
            }
            for (t, v) in p.slots() {
                if t >= m {
                    let (user, pref) = ids();
                    out.push(Violation::BadSlotIndex { user, pref, slot: t });
                    continue;
                }
                if !v.is_finite() {
                    let (user, pref) = ids();
                    out.push(Violation::NonFinite { user, pref });
                    continue;
                }
                if !v.in_upper_half_plane() {
                    let (user, pref) = ids();
                    out.push(Violation::OutsideUpperHalfPlane { user, pref, slot: t });
                }
                let cap = instance.capacities[t];
                // Elastic demands may be scaled down, so only inelastic ones
                // must fit on their own.
                if !p.is_elastic() && v.norm() > cap * (1.0 + FEASIBILITY_TOL) {
                    let (user, pref) = ids();
                    out.push(Violation::ExceedsCapacity {
                        user,
                        pref,
                        slot: t,
                        magnitude: v.norm(),
                        capacity: cap,
                    });
                }
                if v.re >= 0.0 {
                    nonneg = true;
                } else {
                    neg = true;
                }
            }
        }
        if nonneg && neg {
            out.push(Violation::QuadrantMixing {
                user: user.id.clone(),
            });
        }
    }
    out
}

/// Rejects the instance with every violation when it is not valid.
pub fn ensure_valid(instance: &Instance) -> Result<()> {
    let v = validate(instance);
    if v.is_empty() {
        Ok(())
    } else {
        Err(CspError::InvalidInstance(v))
    }
}

/// An integral choice: a set of (user, preference) pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Selection {
    chosen: BTreeSet<PrefRef>,
}

impl Selection {
    pub fn new() -> Self {
        Selection::default()
    }

    /// Builds a selection from one optional choice per user.
    pub fn from_choices(choices: &[Option<usize>]) -> Self {
        choices
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.map(|j| PrefRef::new(k, j)))
            .collect()
    }

    pub fn insert(&mut self, r: PrefRef) -> bool {
        self.chosen.insert(r)
    }

    pub fn contains(&self, r: PrefRef) -> bool {
        self.chosen.contains(&r)
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = PrefRef> + '_ {
        self.chosen.iter().copied()
    }

    pub fn extend(&mut self, other: &Selection) {
        self.chosen.extend(other.iter());
    }

    /// At most one preference per user.
    pub fn respects_bags(&self) -> bool {
        let v: Vec<_> = self.chosen.iter().collect();
        v.windows(2).all(|w| w[0].user != w[1].user)
    }

    pub fn utility(&self, instance: &Instance) -> f64 {
        self.iter().map(|r| instance.pref(r).utility).sum()
    }
}

impl FromIterator<PrefRef> for Selection {
    fn from_iter<I: IntoIterator<Item = PrefRef>>(iter: I) -> Self {
        Selection {
            chosen: iter.into_iter().collect(),
        }
    }
}

/// A fractional assignment `x(k, j)` in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FractionalSolution {
    pub x: BTreeMap<PrefRef, f64>,
}

impl FractionalSolution {
    pub fn new() -> Self {
        FractionalSolution::default()
    }

    pub fn get(&self, r: PrefRef) -> f64 {
        self.x.get(&r).copied().unwrap_or(0.0)
    }

    /// Stores `value`, dropping exact zeros.
    pub fn set(&mut self, r: PrefRef, value: f64) {
        if value == 0.0 {
            self.x.remove(&r);
        } else {
            self.x.insert(r, value);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PrefRef, f64)> + '_ {
        self.x.iter().map(|(&r, &v)| (r, v))
    }

    /// `sum_j x(k, j) <= 1` for every user and every value within `[0, 1]`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let mut per_user: BTreeMap<usize, f64> = BTreeMap::new();
        for (r, v) in self.iter() {
            if v < -tol || v > 1.0 + tol {
                return false;
            }
            *per_user.entry(r.user).or_default() += v;
        }
        per_user.values().all(|&s| s <= 1.0 + tol)
    }

    pub fn utility(&self, instance: &Instance) -> f64 {
        self.iter().map(|(r, v)| instance.pref(r).utility * v).sum()
    }

    /// Number of components strictly between `tol` and `1 - tol`.
    pub fn fractional_count(&self, tol: f64) -> usize {
        self.x.values().filter(|&&v| v > tol && v < 1.0 - tol).count()
    }
}

/// Integral choices plus fractional amounts for elastic preferences.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MixedSolution {
    pub chosen: Selection,
    pub fractional: FractionalSolution,
}

impl MixedSolution {
    pub fn integral(chosen: Selection) -> Self {
        MixedSolution {
            chosen,
            fractional: FractionalSolution::new(),
        }
    }

    /// Every (preference, weight) pair: chosen ones at weight 1.
    pub fn weighted(&self) -> Vec<(PrefRef, f64)> {
        let mut out: Vec<(PrefRef, f64)> = self.chosen.iter().map(|r| (r, 1.0)).collect();
        out.extend(self.fractional.iter());
        out.sort_by_key(|a| a.0);
        out
    }

    pub fn respects_bags(&self) -> bool {
        let w = self.weighted();
        w.windows(2).all(|p| p[0].0.user != p[1].0.user)
    }
}

/// Outcome of evaluating a solution against the capacities.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub utility: f64,
    pub per_slot_load: Vec<ComplexPower>,
    /// Smallest `beta >= 1` with `|load_t| <= beta * C_t` for every slot.
    pub violation_beta: f64,
    pub solver_name: String,
    pub elapsed: Duration,
}

impl SolveReport {
    pub fn with_solver(mut self, name: impl Into<String>, elapsed: Duration) -> Self {
        self.solver_name = name.into();
        self.elapsed = elapsed;
        self
    }
}

fn check_ref(instance: &Instance, r: PrefRef) -> Result<&DemandPreference> {
    instance
        .get_pref(r)
        .ok_or_else(|| CspError::UnknownId(format!("user #{} preference #{}", r.user, r.pref)))
}

/// Loads of weighted preferences, summed in the order given.
pub fn weighted_loads(
    instance: &Instance,
    weighted: &[(PrefRef, f64)],
) -> Result<Vec<ComplexPower>> {
    let mut load = vec![ComplexPower::ZERO; instance.slots()];
    for &(r, w) in weighted {
        let p = check_ref(instance, r)?;
        for (t, v) in p.slots() {
            if t < load.len() {
                load[t] += if w == 1.0 { v } else { v * w };
            }
        }
    }
    Ok(load)
}

pub fn violation_beta(instance: &Instance, load: &[ComplexPower]) -> f64 {
    load.iter()
        .zip(&instance.capacities)
        .map(|(l, c)| l.norm() / c)
        .fold(1.0, f64::max)
}

fn report_from_weighted(instance: &Instance, weighted: &[(PrefRef, f64)]) -> Result<SolveReport> {
    let per_slot_load = weighted_loads(instance, weighted)?;
    let utility = weighted
        .iter()
        .map(|&(r, w)| {
            let u = instance.pref(r).utility;
            if w == 1.0 {
                u
            } else {
                u * w
            }
        })
        .sum();
    Ok(SolveReport {
        utility,
        violation_beta: violation_beta(instance, &per_slot_load),
        per_slot_load,
        solver_name: String::new(),
        elapsed: Duration::ZERO,
    })
}

/// Utility, per-slot loads and capacity violation of an integral selection.
pub fn evaluate(instance: &Instance, selection: &Selection) -> Result<SolveReport> {
    let w: Vec<_> = selection.iter().map(|r| (r, 1.0)).collect();
    report_from_weighted(instance, &w)
}

/// Same as [`evaluate`] for a mixed solution.
pub fn evaluate_mixed(instance: &Instance, solution: &MixedSolution) -> Result<SolveReport> {
    report_from_weighted(instance, &solution.weighted())
}

/// `|load_t| <= beta * C_t` on every slot and at most one preference per user.
pub fn is_feasible(instance: &Instance, selection: &Selection, beta: f64) -> bool {
    if !selection.respects_bags() {
        return false;
    }
    match evaluate(instance, selection) {
        Ok(r) => loads_within(instance, &r.per_slot_load, beta),
        Err(_) => false,
    }
}

pub fn is_feasible_mixed(instance: &Instance, solution: &MixedSolution, beta: f64) -> bool {
    if !solution.respects_bags() || !solution.fractional.is_consistent(FEASIBILITY_TOL) {
        return false;
    }
    match evaluate_mixed(instance, solution) {
        Ok(r) => loads_within(instance, &r.per_slot_load, beta),
        Err(_) => false,
    }
}

pub fn loads_within(instance: &Instance, load: &[ComplexPower], beta: f64) -> bool {
    load.iter()
        .zip(&instance.capacities)
        .all(|(l, &c)| within_capacity(l.norm(), c, beta))
}

#[inline]
pub fn within_capacity(magnitude: f64, capacity: f64, beta: f64) -> bool {
    magnitude <= beta * capacity + FEASIBILITY_TOL * capacity
}

/// Maximum demand argument `phi` and its excess over the first quadrant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleStats {
    pub phi: f64,
    pub theta: f64,
}

pub fn angle_stats(instance: &Instance) -> AngleStats {
    let phi = instance
        .users
        .iter()
        .flat_map(|u| &u.preferences)
        .flat_map(|p| &p.values)
        .filter(|v| v.norm() > 0.0)
        .map(|v| v.arg())
        .fold(0.0, f64::max);
    AngleStats {
        phi,
        theta: (phi - FRAC_PI_2).max(0.0),
    }
}

/// Both sides of the bound `sum |d_i| / |sum d_i| <= sec(theta / 2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleSumCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Largest pairwise angle among the nonzero vectors.
    pub max_angle: f64,
    pub holds: bool,
}

pub fn angle_sum_bound_check(vectors: &[ComplexPower]) -> Result<AngleSumCheck> {
    let nz: Vec<ComplexPower> = vectors.iter().copied().filter(|v| v.norm() > 0.0).collect();
    if nz.is_empty() {
        return Err(CspError::InvalidArgument(
            "angle sum bound needs at least one nonzero vector".into(),
        ));
    }
    let mut max_angle: f64 = 0.0;
    for (i, a) in nz.iter().enumerate() {
        for b in &nz[i + 1..] {
            max_angle = max_angle.max(a.angle_to(*b));
        }
    }
    if max_angle > FRAC_PI_2 + 1e-12 {
        return Err(CspError::InvalidArgument(format!(
            "pairwise angle {max_angle} exceeds pi/2"
        )));
    }
    let sum = nz.iter().fold(ComplexPower::ZERO, |a, &b| a + b);
    let lhs = nz.iter().map(|v| v.norm()).sum::<f64>() / sum.norm();
    let rhs = 1.0 / (max_angle / 2.0).cos();
    Ok(AngleSumCheck {
        lhs,
        rhs,
        max_angle,
        holds: lhs <= rhs + 1e-9,
    })
}
