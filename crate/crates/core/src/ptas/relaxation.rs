//! Convex relaxation with some preferences fixed.
//!
//! The disk constraint `|v_fixed + sum s x| <= C` is the intersection of the
//! half-planes `d . (v_fixed + sum s x) <= C` over unit directions `d`. The
//! cutting-plane solver keeps a finite set of them in a linear program: its
//! optimum is an upper bound, and shrinking the free part of that optimum
//! back into every disk gives a feasible point and a lower bound. Directions
//! of violated loads are added until the two bounds are within `delta`.

use std::f64::consts::FRAC_PI_8;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::complex::ComplexPower;
use crate::error::{CspError, Result};
use crate::model::{FractionalSolution, Instance, PrefRef};

/// The relaxation for one guess: `fixed_one` at 1, `free` in `[0, 1]` with
/// at most total weight 1 per user, every other preference at 0.
#[derive(Clone, Debug)]
pub struct RelaxedProblem<'a> {
    pub instance: &'a Instance,
    pub fixed_one: &'a [PrefRef],
    pub free: &'a [PrefRef],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationResult {
    /// Feasible point, including the preferences fixed at 1.
    pub x: FractionalSolution,
    /// Objective of `x`.
    pub lower: f64,
    /// Proven upper bound on the relaxation optimum.
    pub upper: f64,
    pub iterations: usize,
    /// `upper - lower <= delta` was reached.
    pub converged: bool,
}

/// A method for the relaxation. Implementations must return a feasible
/// point; `converged` reports whether it is `delta`-optimal.
pub trait RelaxationSolver: Sync {
    fn solve(&self, problem: &RelaxedProblem<'_>, delta: f64) -> Result<RelaxationResult>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CuttingPlane {
    pub max_iterations: usize,
}

impl Default for CuttingPlane {
    fn default() -> Self {
        CuttingPlane {
            max_iterations: 200,
        }
    }
}

/// Loads of the preferences fixed at 1.
pub fn fixed_loads(instance: &Instance, fixed_one: &[PrefRef]) -> Vec<ComplexPower> {
    let mut v = vec![ComplexPower::ZERO; instance.slots()];
    for &r in fixed_one {
        for (t, s) in instance.pref(r).slots() {
            v[t] += s;
        }
    }
    v
}

/// Largest `a` in `[0, 1]` with `|v + a f| <= c`; 0 when `|v| > c` already.
pub fn max_scale(v: ComplexPower, f: ComplexPower, c: f64) -> f64 {
    let a = f.dot(f);
    let cc = v.dot(v) - c * c;
    if cc > 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return 1.0;
    }
    let b = 2.0 * v.dot(f);
    let disc = (b * b - 4.0 * a * cc).max(0.0);
    // Stable form of the larger root; cc <= 0 keeps it nonnegative.
    let root = if b >= 0.0 {
        -2.0 * cc / (b + disc.sqrt())
    } else {
        (-b + disc.sqrt()) / (2.0 * a)
    };
    if root.is_nan() {
        return 0.0;
    }
    (root * (1.0 - 1e-12)).clamp(0.0, 1.0)
}

impl RelaxationSolver for CuttingPlane {
    fn solve(&self, p: &RelaxedProblem<'_>, delta: f64) -> Result<RelaxationResult> {
        let inst = p.instance;
        let m = inst.slots();
        let v_fixed = fixed_loads(inst, p.fixed_one);
        let fixed_u: f64 = p.fixed_one.iter().map(|&r| inst.pref(r).utility).sum();
        let mut x = FractionalSolution::new();
        for &r in p.fixed_one {
            x.set(r, 1.0);
        }
        if p.free.is_empty() {
            return Ok(RelaxationResult {
                x,
                lower: fixed_u,
                upper: fixed_u,
                iterations: 0,
                converged: true,
            });
        }

        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<Variable> = p
            .free
            .iter()
            .map(|&r| lp.add_var(inst.pref(r).utility, (0.0, 1.0)))
            .collect();
        let mut i = 0;
        while i < p.free.len() {
            let user = p.free[i].user;
            let mut j = i;
            while j < p.free.len() && p.free[j].user == user {
                j += 1;
            }
            if j - i > 1 {
                let expr: Vec<(Variable, f64)> = vars[i..j].iter().map(|&v| (v, 1.0)).collect();
                lp.add_constraint(expr, ComparisonOp::Le, 1.0);
            }
            i = j;
        }
        // Per slot: the free variables touching it and their demand there.
        let mut touch: Vec<Vec<(usize, ComplexPower)>> = vec![Vec::new(); m];
        for (i, &r) in p.free.iter().enumerate() {
            for (t, s) in inst.pref(r).slots() {
                touch[t].push((i, s));
            }
        }
        let cut = |t: usize, d: ComplexPower| -> (Vec<(Variable, f64)>, f64) {
            let expr = touch[t]
                .iter()
                .map(|&(i, s)| (vars[i], s.dot(d)))
                .filter(|&(_, c)| c != 0.0)
                .collect();
            let rhs = (inst.capacities[t] - v_fixed[t].dot(d)).max(0.0);
            (expr, rhs)
        };
        for t in 0..m {
            if touch[t].is_empty() {
                continue;
            }
            for k in 0..=4 {
                let (expr, rhs) = cut(t, ComplexPower::from_polar(1.0, k as f64 * FRAC_PI_8));
                if !expr.is_empty() {
                    lp.add_constraint(expr, ComparisonOp::Le, rhs);
                }
            }
        }

        let lp_err = |e: microlp::Error| CspError::Numerical(format!("relaxation LP: {e}"));
        let mut sol = lp
            .solve()
            .map_err(lp_err)?
            .into_solution()
            .map_err(|_| CspError::Numerical("relaxation LP interrupted".into()))?;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let vals: Vec<f64> = vars
                .iter()
                .map(|&v| sol.var_value(v).clamp(0.0, 1.0))
                .collect();
            let upper = fixed_u + sol.objective();
            let mut free_load = vec![ComplexPower::ZERO; m];
            for (t, tt) in touch.iter().enumerate() {
                for &(i, s) in tt {
                    free_load[t] += s * vals[i];
                }
            }
            let alpha = (0..m)
                .map(|t| max_scale(v_fixed[t], free_load[t], inst.capacities[t]))
                .fold(1.0, f64::min);
            let lower = fixed_u
                + p.free
                    .iter()
                    .zip(&vals)
                    .map(|(&r, &v)| inst.pref(r).utility * v * alpha)
                    .sum::<f64>();
            let violated: Vec<usize> = (0..m)
                .filter(|&t| (v_fixed[t] + free_load[t]).norm() > inst.capacities[t] * (1.0 + 1e-12))
                .collect();
            let converged = upper - lower <= delta;
            if converged || violated.is_empty() || iterations >= self.max_iterations {
                for (&r, &v) in p.free.iter().zip(&vals) {
                    x.set(r, v * alpha);
                }
                return Ok(RelaxationResult {
                    x,
                    lower,
                    upper: upper.max(lower),
                    iterations,
                    converged: converged || violated.is_empty(),
                });
            }
            for t in violated {
                let load = v_fixed[t] + free_load[t];
                let d = ComplexPower::new(load.re / load.norm(), load.im / load.norm());
                let (expr, rhs) = cut(t, d);
                sol = sol
                    .add_constraint(expr, ComparisonOp::Le, rhs)
                    .map_err(lp_err)?
                    .into_solution()
                    .map_err(|_| CspError::Numerical("relaxation LP interrupted".into()))?;
            }
        }
    }
}
