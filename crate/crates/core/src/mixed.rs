//! Elastic preferences replaced by geometric ladders of inelastic levels.
//!
//! Level `i` of an elastic preference with utility `u` takes the fraction
//! `f_i = eps LB (1 + eps)^i / (n u)` of its demand and utility, for
//! `i = 1..=n_kj` with `n_kj` the first level reaching the full demand. Any
//! inelastic solver run on the ladder instance yields a mixed solution with
//! the same per-slot loads, losing at most a factor `1 - eps` in utility.

use std::time::Instant;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use crate::complex::ComplexPower;
use crate::error::{CspError, Result};
use crate::model::{
    ensure_valid, evaluate_mixed, DemandPreference, Elasticity, FractionalSolution, Instance,
    MixedSolution, PrefRef, Selection, SolveReport, User, FEASIBILITY_TOL,
};

pub const NAME: &str = "mixed";

/// A lower bound on the mixed optimum, with a feasible solution attaining it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    pub witness: PrefRef,
    /// Amount of the witness taken; 1 for inelastic witnesses.
    pub fraction: f64,
}

/// Largest of the inelastic utilities and of `min(u min_t C_t / |s_t|, u)`
/// over elastic preferences. First maximum in preference order wins.
pub fn compute_lb(instance: &Instance) -> Result<LowerBound> {
    let mut best: Option<LowerBound> = None;
    for r in instance.pref_refs() {
        let p = instance.pref(r);
        let fraction = if p.is_elastic() {
            p.slots()
                .filter(|(_, s)| s.norm() > 0.0)
                .map(|(t, s)| instance.capacities[t] / s.norm())
                .fold(1.0, f64::min)
        } else {
            1.0
        };
        let value = p.utility * fraction;
        if best.is_none_or(|b| value > b.value) {
            best = Some(LowerBound {
                value,
                witness: r,
                fraction,
            });
        }
    }
    best.ok_or_else(|| CspError::InvalidArgument("lower bound of an instance without preferences".into()))
}

/// How the level fractions are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LevelArithmetic {
    #[default]
    Float,
    /// Exact rationals for the level count and the clamp test, so the top
    /// level is the first one whose fraction reaches 1.
    Exact,
}

/// Where a preference of the ladder instance comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Origin {
    Inelastic(PrefRef),
    Level {
        source: PrefRef,
        level: usize,
        fraction: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelMap {
    pub epsilon: f64,
    pub lb: LowerBound,
    /// `origins[k][j]` for preference `j` of user `k` of the ladder instance.
    pub origins: Vec<Vec<Origin>>,
}

impl LevelMap {
    pub fn origin(&self, r: PrefRef) -> Origin {
        self.origins[r.user][r.pref]
    }

    pub fn level_count(&self) -> usize {
        self.origins
            .iter()
            .flatten()
            .filter(|o| matches!(o, Origin::Level { .. }))
            .count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discretized {
    pub instance: Instance,
    pub map: LevelMap,
}

/// `max(0, ceil(log_{1+eps}(n u / (eps LB))))`.
pub fn level_count(n: usize, utility: f64, epsilon: f64, lb: f64) -> usize {
    let ratio = n as f64 * utility / (epsilon * lb);
    if ratio <= 1.0 {
        return 0;
    }
    (ratio.ln() / epsilon.ln_1p()).ceil() as usize
}

/// Fractions `f_1..f_{n_kj}`, the last clamped to 1.
pub fn level_fractions(
    n: usize,
    utility: f64,
    epsilon: f64,
    lb: f64,
    arithmetic: LevelArithmetic,
) -> Vec<f64> {
    match arithmetic {
        LevelArithmetic::Float => {
            let base = epsilon * lb / (n as f64 * utility);
            (1..=level_count(n, utility, epsilon, lb))
                .map(|i| (base * (1.0 + epsilon).powi(i as i32)).min(1.0))
                .collect()
        }
        LevelArithmetic::Exact => {
            let q = |x: f64| BigRational::from_float(x).expect("finite");
            let one = BigRational::one();
            let ratio = q(epsilon) * q(lb) / (BigRational::from_integer(n.into()) * q(utility));
            let step = &one + q(epsilon);
            let mut f = ratio.clone();
            let mut out = Vec::new();
            if ratio >= one {
                return out;
            }
            loop {
                f *= &step;
                if f >= one {
                    out.push(1.0);
                    return out;
                }
                out.push(f.to_f64().expect("fraction below 1"));
            }
        }
    }
}

/// The ladder instance. Levels whose demand exceeds a capacity are left out
/// since no capacity-feasible solution can use them, and users left without
/// preferences are dropped.
pub fn discretize(instance: &Instance, epsilon: f64) -> Result<Discretized> {
    discretize_with(instance, epsilon, LevelArithmetic::Float)
}

pub fn discretize_with(
    instance: &Instance,
    epsilon: f64,
    arithmetic: LevelArithmetic,
) -> Result<Discretized> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CspError::InvalidArgument(format!(
            "epsilon {epsilon} is outside (0, 1)"
        )));
    }
    ensure_valid(instance)?;
    let lb = compute_lb(instance)?;
    let n = instance.user_count();
    let mut users = Vec::new();
    let mut origins = Vec::new();
    for (k, user) in instance.users.iter().enumerate() {
        let mut prefs = Vec::new();
        let mut from = Vec::new();
        for (j, p) in user.preferences.iter().enumerate() {
            let r = PrefRef::new(k, j);
            if !p.is_elastic() {
                prefs.push(p.clone());
                from.push(Origin::Inelastic(r));
                continue;
            }
            let fractions = level_fractions(n, p.utility, epsilon, lb.value, arithmetic);
            for (i, &f) in fractions.iter().enumerate() {
                let values: Vec<ComplexPower> = p.values.iter().map(|&v| v * f).collect();
                let fits = p
                    .window
                    .iter()
                    .zip(&values)
                    .all(|(&t, v)| v.norm() <= instance.capacities[t] * (1.0 + FEASIBILITY_TOL));
                if !fits {
                    continue;
                }
                let level = i + 1;
                prefs.push(DemandPreference {
                    id: format!("{}#L{level}", p.id),
                    window: p.window.clone(),
                    values,
                    utility: p.utility * f,
                    elasticity: Elasticity::Inelastic,
                });
                from.push(Origin::Level {
                    source: r,
                    level,
                    fraction: f,
                });
            }
        }
        if !prefs.is_empty() {
            users.push(User::new(user.id.clone(), prefs));
            origins.push(from);
        }
    }
    Ok(Discretized {
        instance: Instance::new(instance.capacities.clone(), users),
        map: LevelMap {
            epsilon,
            lb,
            origins,
        },
    })
}

/// Chosen levels become fractional amounts of their elastic source; the
/// rest is copied. Loads are unchanged term by term.
pub fn map_back(selection: &Selection, map: &LevelMap) -> Result<MixedSolution> {
    if !selection.respects_bags() {
        return Err(CspError::InvalidArgument(
            "ladder selection picks two preferences of one user".into(),
        ));
    }
    let mut chosen = Selection::new();
    let mut fractional = FractionalSolution::new();
    for r in selection.iter() {
        let origin = map
            .origins
            .get(r.user)
            .and_then(|o| o.get(r.pref))
            .ok_or_else(|| CspError::UnknownId(format!("ladder preference {r:?}")))?;
        match *origin {
            Origin::Inelastic(src) => {
                chosen.insert(src);
            }
            Origin::Level {
                source, fraction, ..
            } => {
                assert!(fraction <= 1.0, "level fraction {fraction} above 1");
                fractional.set(source, fraction);
            }
        }
    }
    Ok(MixedSolution { chosen, fractional })
}

/// Runs `inner` on the ladder instance and maps its choice back.
pub fn solve_mixed<F>(instance: &Instance, epsilon: f64, inner: F) -> Result<(MixedSolution, SolveReport)>
where
    F: FnOnce(&Instance) -> Result<Selection>,
{
    let start = Instant::now();
    let d = discretize(instance, epsilon)?;
    let sel = inner(&d.instance)?;
    let sol = map_back(&sel, &d.map)?;
    let report = evaluate_mixed(instance, &sol)?.with_solver(NAME, start.elapsed());
    Ok((sol, report))
}
