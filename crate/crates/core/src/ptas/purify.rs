//! Moves a feasible point of the projection-budget LP to a vertex without
//! lowering the objective.
//!
//! The LP has one real and one imaginary budget row per slot, one row
//! `sum_j x(k, j) <= 1` per user, and bounds `0 <= x <= 1`; preferences in
//! `fixed` keep their starting values. Each step takes a direction in the
//! kernel of the tight rows restricted to the fractional free columns,
//! orients it uphill, and walks until a bound or another row becomes tight.
//! Tight rows stay tight, so the walk ends at a point whose fractional
//! columns are linearly independent on the tight rows.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{CspError, Result};
use crate::model::{FractionalSolution, Instance, PrefRef};

/// Real and imaginary loads of the relaxation point, per slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionBudget {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ProjectionBudget {
    /// Slots whose budget lies outside the capacity disk.
    pub fn outside_disk(&self, instance: &Instance) -> Vec<usize> {
        (0..self.re.len())
            .filter(|&t| {
                let c = instance.capacities[t];
                self.re[t].hypot(self.im[t]) > c * (1.0 + 1e-9)
            })
            .collect()
    }
}

pub fn projection_budget(instance: &Instance, x: &FractionalSolution) -> ProjectionBudget {
    let m = instance.slots();
    let mut b = ProjectionBudget {
        re: vec![0.0; m],
        im: vec![0.0; m],
    };
    for (r, v) in x.iter() {
        for (t, s) in instance.pref(r).slots() {
            b.re[t] += s.re * v;
            b.im[t] += s.im * v;
        }
    }
    b
}

/// Values within this distance of 0 or 1 count as integral.
pub const INTEGRAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PurifyResult {
    pub x: FractionalSolution,
    pub steps: usize,
    /// Kernel directions that needed exact rational elimination.
    pub exact_steps: usize,
}

fn is_fractional(v: f64) -> bool {
    v > INTEGRAL_TOL && v < 1.0 - INTEGRAL_TOL
}

fn snap(v: f64) -> f64 {
    if v <= INTEGRAL_TOL {
        0.0
    } else if v >= 1.0 - INTEGRAL_TOL {
        1.0
    } else {
        v
    }
}

struct Rows {
    /// Per budget row (real rows for slots 0..m, then imaginary rows):
    /// coefficient per free variable index.
    budget: Vec<Vec<(usize, f64)>>,
    /// Budget right-hand side minus the fixed contribution.
    rhs: Vec<f64>,
    scale: Vec<f64>,
    /// Free variable indices per user, in order.
    users: Vec<Vec<usize>>,
    /// User-row capacity left after fixed preferences.
    user_rhs: Vec<f64>,
}

/// Vertex of the LP reached from `x_start` by kernel moves.
pub fn purify_to_bfs(
    instance: &Instance,
    budget: &ProjectionBudget,
    x_start: &FractionalSolution,
    fixed: &BTreeSet<PrefRef>,
) -> Result<PurifyResult> {
    let m = instance.slots();
    let free: Vec<PrefRef> = instance.pref_refs().filter(|r| !fixed.contains(r)).collect();
    let mut x: Vec<f64> = free.iter().map(|&r| snap(x_start.get(r))).collect();

    let mut rows = Rows {
        budget: vec![Vec::new(); 2 * m],
        rhs: budget.re.iter().chain(&budget.im).copied().collect(),
        scale: instance.capacities.iter().chain(&instance.capacities).copied().collect(),
        users: Vec::new(),
        user_rhs: Vec::new(),
    };
    for &r in fixed {
        let v = x_start.get(r);
        for (t, s) in instance.pref(r).slots() {
            rows.rhs[t] -= s.re * v;
            rows.rhs[m + t] -= s.im * v;
        }
    }
    for (i, &r) in free.iter().enumerate() {
        for (t, s) in instance.pref(r).slots() {
            if s.re != 0.0 {
                rows.budget[t].push((i, s.re));
            }
            if s.im != 0.0 {
                rows.budget[m + t].push((i, s.im));
            }
        }
    }
    let mut by_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in free.iter().enumerate() {
        by_user.entry(r.user).or_default().push(i);
    }
    for (&k, idx) in &by_user {
        let used: f64 = (0..instance.users[k].preferences.len())
            .map(|j| PrefRef::new(k, j))
            .filter(|r| fixed.contains(r))
            .map(|r| x_start.get(r))
            .sum();
        rows.users.push(idx.clone());
        rows.user_rhs.push(1.0 - used);
    }
    let utility: Vec<f64> = free.iter().map(|&r| instance.pref(r).utility).collect();

    let budget_slack = |x: &[f64], b: usize| -> f64 {
        rows.rhs[b] - rows.budget[b].iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    };
    let user_slack =
        |x: &[f64], u: usize| -> f64 { rows.user_rhs[u] - rows.users[u].iter().map(|&i| x[i]).sum::<f64>() };
    let row_tol = |b: usize| 1e-9 * rows.scale[b].max(1.0);

    let max_steps = 4 * (free.len() + rows.budget.len() + rows.users.len()) + 16;
    let mut steps = 0;
    let mut exact_steps = 0;
    loop {
        let cols: Vec<usize> = (0..free.len()).filter(|&i| is_fractional(x[i])).collect();
        if cols.is_empty() {
            break;
        }
        let col_pos: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let mut tight_budget = Vec::new();
        let mut loose_budget = Vec::new();
        for b in 0..rows.budget.len() {
            if !rows.budget[b].iter().any(|(i, _)| col_pos.contains_key(i)) {
                continue;
            }
            if budget_slack(&x, b) <= row_tol(b) {
                tight_budget.push(b);
            } else {
                loose_budget.push(b);
            }
        }
        let mut tight_users = Vec::new();
        let mut loose_users = Vec::new();
        for u in 0..rows.users.len() {
            if !rows.users[u].iter().any(|i| col_pos.contains_key(i)) {
                continue;
            }
            if user_slack(&x, u) <= INTEGRAL_TOL {
                tight_users.push(u);
            } else {
                loose_users.push(u);
            }
        }
        let mut a: Vec<Vec<f64>> = Vec::new();
        for &b in &tight_budget {
            let mut row = vec![0.0; cols.len()];
            for &(i, c) in &rows.budget[b] {
                if let Some(&p) = col_pos.get(&i) {
                    row[p] = c;
                }
            }
            a.push(row);
        }
        for &u in &tight_users {
            let mut row = vec![0.0; cols.len()];
            for i in &rows.users[u] {
                if let Some(&p) = col_pos.get(i) {
                    row[p] = 1.0;
                }
            }
            a.push(row);
        }
        let dir = match kernel_vector(&a, cols.len()) {
            Kernel::None => break,
            Kernel::Vector(d) if residual_ok(&a, &d) => d,
            _ => {
                exact_steps += 1;
                match exact_kernel_vector(&a, cols.len()) {
                    Some(d) => d,
                    None => break,
                }
            }
        };
        steps += 1;
        if steps > max_steps {
            return Err(CspError::Numerical(format!(
                "purification did not reach a vertex within {max_steps} steps"
            )));
        }
        let gain: f64 = cols.iter().zip(&dir).map(|(&i, d)| utility[i] * d).sum();
        let sign = if gain < 0.0 { -1.0 } else { 1.0 };
        let d: Vec<f64> = dir.iter().map(|v| v * sign).collect();

        let mut step = f64::INFINITY;
        for (p, &i) in cols.iter().enumerate() {
            if d[p] > 0.0 {
                step = step.min((1.0 - x[i]) / d[p]);
            } else if d[p] < 0.0 {
                step = step.min(x[i] / -d[p]);
            }
        }
        for &b in &loose_budget {
            let rate: f64 = rows.budget[b]
                .iter()
                .filter_map(|(i, c)| col_pos.get(i).map(|&p| c * d[p]))
                .sum();
            if rate > 0.0 {
                step = step.min(budget_slack(&x, b).max(0.0) / rate);
            }
        }
        for &u in &loose_users {
            let rate: f64 = rows.users[u]
                .iter()
                .filter_map(|i| col_pos.get(i).map(|&p| d[p]))
                .sum();
            if rate > 0.0 {
                step = step.min(user_slack(&x, u).max(0.0) / rate);
            }
        }
        if !step.is_finite() {
            return Err(CspError::Numerical("unbounded purification direction".into()));
        }
        for (p, &i) in cols.iter().enumerate() {
            x[i] = snap((x[i] + step * d[p]).clamp(0.0, 1.0));
        }
    }
    let mut out = FractionalSolution::new();
    for &r in fixed {
        out.set(r, x_start.get(r));
    }
    for (i, &r) in free.iter().enumerate() {
        out.set(r, x[i]);
    }
    Ok(PurifyResult {
        x: out,
        steps,
        exact_steps,
    })
}

enum Kernel {
    None,
    Vector(Vec<f64>),
}

/// Nonzero `d` with `a d = 0` by Gaussian elimination with partial pivoting.
fn kernel_vector(a: &[Vec<f64>], ncols: usize) -> Kernel {
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let norm = r
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    let tol = 1e-11 * norm;
    let mut pivots: Vec<usize> = Vec::new();
    let mut row = 0;
    for col in 0..ncols {
        if row == r.len() {
            break;
        }
        let (best, val) = (row..r.len())
            .map(|i| (i, r[i][col].abs()))
            .fold((row, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if val <= tol {
            continue;
        }
        r.swap(row, best);
        let p = r[row][col];
        for v in r[row].iter_mut() {
            *v /= p;
        }
        for i in 0..r.len() {
            if i != row && r[i][col] != 0.0 {
                let f = r[i][col];
                for j in 0..ncols {
                    r[i][j] -= f * r[row][j];
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let Some(free) = (0..ncols).find(|c| !pivots.contains(c)) else {
        return Kernel::None;
    };
    let mut d = vec![0.0; ncols];
    d[free] = 1.0;
    for (i, &pc) in pivots.iter().enumerate() {
        d[pc] = -r[i][free];
    }
    Kernel::Vector(d)
}

fn residual_ok(a: &[Vec<f64>], d: &[f64]) -> bool {
    let dn = d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    a.iter().all(|row| {
        let rn = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        let s: f64 = row.iter().zip(d).map(|(x, y)| x * y).sum();
        s.abs() <= 1e-9 * rn * dn.max(1.0)
    })
}

/// Same elimination over exact rationals built from the float entries.
fn exact_kernel_vector(a: &[Vec<f64>], ncols: usize) -> Option<Vec<f64>> {
    let mut r: Vec<Vec<BigRational>> = a
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| BigRational::from_float(v).unwrap_or_else(BigRational::zero))
                .collect()
        })
        .collect();
    let mut pivots: Vec<usize> = Vec::new();
    let mut row = 0;
    for col in 0..ncols {
        if row == r.len() {
            break;
        }
        let Some(best) = (row..r.len()).find(|&i| !r[i][col].is_zero()) else {
            continue;
        };
        r.swap(row, best);
        let p = r[row][col].clone();
        for v in r[row].iter_mut() {
            *v = &*v / &p;
        }
        for i in 0..r.len() {
            if i != row && !r[i][col].is_zero() {
                let f = r[i][col].clone();
                for j in 0..ncols {
                    let delta = &f * &r[row][j];
                    r[i][j] -= delta;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free = (0..ncols).find(|c| !pivots.contains(c))?;
    let mut d = vec![0.0; ncols];
    d[free] = 1.0;
    for (i, &pc) in pivots.iter().enumerate() {
        d[pc] = -r[i][free].to_f64().unwrap_or(0.0);
    }
    Some(d)
}
