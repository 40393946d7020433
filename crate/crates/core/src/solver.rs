//! Uniform entry point over all algorithms.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::complex::ComplexPower;
use crate::error::{CspError, Result};
use crate::exec::Exec;
use crate::fptas::{self, FptasConfig};
use crate::greedy;
use crate::mixed;
use crate::model::{
    ensure_valid, evaluate, evaluate_mixed, within_capacity, DemandPreference, Instance,
    MixedSolution, PrefRef, Selection, SolveReport, User,
};
use crate::oracle::{self, OracleBudget};
use crate::ptas::{self, PtasConfig};
use crate::ufp;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Exact,
    Greedy,
    /// Single-slot greedy applied slot by slot on residual capacity. No
    /// approximation guarantee.
    GreedySequential,
    Fptas,
    Ptas,
    Ufp,
    /// Elastic demands discretized into levels, then the inner algorithm.
    Mixed(Box<Algorithm>),
}

impl Algorithm {
    pub const NAMES: &'static [&'static str] = &[
        "exact",
        "greedy",
        "greedy-sequential",
        "fptas",
        "ptas",
        "ufp",
        "mixed+<inner>",
    ];

    /// Capacity factor the output is guaranteed to respect.
    pub fn advertised_beta(&self, epsilon: f64) -> f64 {
        match self {
            Algorithm::Fptas => 1.0 + 4.0 * epsilon,
            Algorithm::Mixed(inner) => inner.advertised_beta(epsilon),
            _ => 1.0,
        }
    }

    /// Whether the output may contain fractional elastic amounts.
    pub fn handles_elastic(&self) -> bool {
        matches!(self, Algorithm::Exact | Algorithm::Ptas | Algorithm::Mixed(_))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Exact => f.write_str("exact"),
            Algorithm::Greedy => f.write_str("greedy"),
            Algorithm::GreedySequential => f.write_str("greedy-sequential"),
            Algorithm::Fptas => f.write_str("fptas"),
            Algorithm::Ptas => f.write_str("ptas"),
            Algorithm::Ufp => f.write_str("ufp"),
            Algorithm::Mixed(inner) => write!(f, "mixed+{inner}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = CspError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(inner) = s.strip_prefix("mixed+") {
            let inner: Algorithm = inner.parse()?;
            if matches!(inner, Algorithm::Mixed(_)) {
                return Err(CspError::InvalidArgument(format!(
                    "nested mixed algorithm {s:?}"
                )));
            }
            return Ok(Algorithm::Mixed(Box::new(inner)));
        }
        Ok(match s {
            "exact" => Algorithm::Exact,
            "greedy" => Algorithm::Greedy,
            "greedy-sequential" => Algorithm::GreedySequential,
            "fptas" => Algorithm::Fptas,
            "ptas" => Algorithm::Ptas,
            "ufp" => Algorithm::Ufp,
            _ => {
                return Err(CspError::InvalidArgument(format!(
                    "unknown algorithm {s:?}; expected one of {}",
                    Algorithm::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub epsilon: f64,
    /// Split threshold for `ufp`.
    pub delta: f64,
    pub exec: Exec,
    pub oracle: OracleBudget,
    /// Memory cap for the FPTAS tables, in bytes.
    pub memory_cap_bytes: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            epsilon: 0.5,
            delta: ufp::DEFAULT_DELTA,
            exec: Exec::default(),
            oracle: OracleBudget::default(),
            memory_cap_bytes: None,
        }
    }
}

/// Runs `algorithm` and reports against the original instance. The report
/// carries the algorithm's display name.
pub fn solve(
    algorithm: &Algorithm,
    instance: &Instance,
    options: &SolveOptions,
) -> Result<(MixedSolution, SolveReport)> {
    let start = Instant::now();
    if instance.has_elastic() && !algorithm.handles_elastic() {
        return Err(CspError::precondition(
            "solver",
            format!("{algorithm} does not accept elastic preferences; use mixed+{algorithm}"),
        ));
    }
    let solution = match algorithm {
        Algorithm::Mixed(inner) => {
            let inner_opts = options.clone();
            let (sol, _) = mixed::solve_mixed(instance, options.epsilon, |d| {
                solve(inner, d, &inner_opts).map(|(s, _)| s.chosen)
            })?;
            sol
        }
        Algorithm::Ptas => {
            let cfg = PtasConfig::new(options.epsilon).with_exec(options.exec);
            ptas::solve_ptas_with(instance, &cfg)?.solution
        }
        _ => MixedSolution::integral(solve_integral(algorithm, instance, options)?),
    };
    let report = evaluate_mixed(instance, &solution)?.with_solver(algorithm.to_string(), start.elapsed());
    Ok((solution, report))
}

fn solve_integral(
    algorithm: &Algorithm,
    instance: &Instance,
    options: &SolveOptions,
) -> Result<Selection> {
    Ok(match algorithm {
        Algorithm::Exact => oracle::exact_solve_with(instance, &options.oracle, options.exec)?.0,
        Algorithm::Greedy => greedy::solve(instance)?.0,
        Algorithm::GreedySequential => greedy_sequential(instance)?.0,
        Algorithm::Fptas => {
            let mut cfg = FptasConfig::new(options.epsilon).with_exec(options.exec);
            if let Some(bytes) = options.memory_cap_bytes {
                cfg = cfg.with_memory_cap_bytes(bytes);
            }
            fptas::solve_bifptas_with(instance, &cfg)?.selection
        }
        Algorithm::Ufp => ufp::solve_split(instance, options.delta)?.0,
        Algorithm::Ptas | Algorithm::Mixed(_) => unreachable!("handled by solve"),
    })
}

pub const GREEDY_SEQUENTIAL: &str = "greedy-sequential";

/// Slot by slot, the single-slot greedy over the unassigned users' demands
/// at that slot, with capacity `C_t - |load_t|`. A picked preference is kept
/// only if every slot of its window stays within capacity. Heuristic only.
pub fn greedy_sequential(instance: &Instance) -> Result<(Selection, SolveReport)> {
    let start = Instant::now();
    ensure_valid(instance)?;
    let phi = crate::model::angle_stats(instance).phi;
    if phi > std::f64::consts::FRAC_PI_2 {
        return Err(CspError::precondition(
            GREEDY_SEQUENTIAL,
            format!("demand arguments must lie in [0, pi/2], found phi={phi}"),
        ));
    }
    let m = instance.slots();
    let mut load = vec![ComplexPower::ZERO; m];
    let mut assigned = vec![false; instance.user_count()];
    let mut chosen = Selection::new();
    for t in 0..m {
        let residual = instance.capacities[t] - load[t].norm();
        if residual <= 0.0 {
            continue;
        }
        // Single-slot view: candidate preferences that touch t and fit alone.
        let mut back: Vec<Vec<PrefRef>> = Vec::new();
        let mut users = Vec::new();
        for (k, u) in instance.users.iter().enumerate() {
            if assigned[k] {
                continue;
            }
            let mut prefs = Vec::new();
            let mut refs = Vec::new();
            for (j, p) in u.preferences.iter().enumerate() {
                if let Some(pos) = p.window.iter().position(|&w| w == t) {
                    let s = p.values[pos];
                    if s.norm() <= residual {
                        prefs.push(DemandPreference::new(format!("p{j}"), vec![0], vec![s], p.utility));
                        refs.push(PrefRef::new(k, j));
                    }
                }
            }
            if !prefs.is_empty() {
                users.push(User::new(u.id.clone(), prefs));
                back.push(refs);
            }
        }
        if users.is_empty() {
            continue;
        }
        let single = Instance::new(vec![residual], users);
        let (picked, _) = greedy::solve(&single)?;
        for r in picked.iter() {
            let orig = back[r.user][r.pref];
            let p = instance.pref(orig);
            let fits = p
                .slots()
                .all(|(w, s)| within_capacity((load[w] + s).norm(), instance.capacities[w], 1.0));
            if fits {
                for (w, s) in p.slots() {
                    load[w] += s;
                }
                assigned[orig.user] = true;
                chosen.insert(orig);
            }
        }
    }
    let report = evaluate(instance, &chosen)?.with_solver(GREEDY_SEQUENTIAL, start.elapsed());
    Ok((chosen, report))
}
