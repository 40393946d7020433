//! Test-side ground truth, written independently of the library solvers.
#![allow(dead_code)]

use csp_sched::{Instance, PrefRef, Selection};

/// Per-slot `(re, im)` sums of a weighted choice, straight from the values.
pub fn loads(inst: &Instance, picks: &[(PrefRef, f64)]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); inst.capacities.len()];
    for &(r, w) in picks {
        let p = &inst.users[r.user].preferences[r.pref];
        for (i, &t) in p.window.iter().enumerate() {
            out[t].0 += w * p.values[i].re;
            out[t].1 += w * p.values[i].im;
        }
    }
    out
}

pub fn fits(inst: &Instance, picks: &[(PrefRef, f64)], beta: f64) -> bool {
    loads(inst, picks)
        .iter()
        .zip(&inst.capacities)
        .all(|(&(re, im), &c)| re.hypot(im) <= beta * c + 1e-9 * c)
}

pub fn selection_fits(inst: &Instance, sel: &Selection, beta: f64) -> bool {
    let mut users: Vec<usize> = sel.iter().map(|r| r.user).collect();
    users.dedup();
    users.len() == sel.len() && fits(inst, &picks(sel), beta)
}

pub fn picks(sel: &Selection) -> Vec<(PrefRef, f64)> {
    sel.iter().map(|r| (r, 1.0)).collect()
}

fn first_quadrant(inst: &Instance) -> bool {
    inst.users
        .iter()
        .flat_map(|u| &u.preferences)
        .flat_map(|p| &p.values)
        .all(|v| v.re >= 0.0 && v.im >= 0.0)
}

/// Calls `visit` on every bag-respecting selection (one option per user,
/// skipping allowed). With `prune`, branches already over capacity are cut,
/// which is only sound when loads never shrink.
fn walk(inst: &Instance, prune: bool, visit: &mut dyn FnMut(&[PrefRef])) {
    fn go(
        inst: &Instance,
        k: usize,
        cur: &mut Vec<PrefRef>,
        prune: bool,
        visit: &mut dyn FnMut(&[PrefRef]),
    ) {
        if k == inst.users.len() {
            visit(cur);
            return;
        }
        go(inst, k + 1, cur, prune, visit);
        for j in 0..inst.users[k].preferences.len() {
            cur.push(PrefRef::new(k, j));
            let ok = !prune || fits(inst, &cur.iter().map(|&r| (r, 1.0)).collect::<Vec<_>>(), 1.0);
            if ok {
                go(inst, k + 1, cur, prune, visit);
            }
            cur.pop();
        }
    }
    go(inst, 0, &mut Vec::new(), prune, visit);
}

pub fn all_selections(inst: &Instance) -> Vec<Selection> {
    let mut out = Vec::new();
    walk(inst, false, &mut |s| out.push(s.iter().copied().collect()));
    out
}

pub fn feasible_selections(inst: &Instance) -> Vec<Selection> {
    let mut out = Vec::new();
    walk(inst, first_quadrant(inst), &mut |s| {
        let w: Vec<_> = s.iter().map(|&r| (r, 1.0)).collect();
        if fits(inst, &w, 1.0) {
            out.push(s.iter().copied().collect());
        }
    });
    out
}

/// Optimal utility over capacity-feasible selections.
pub fn brute_force(inst: &Instance) -> f64 {
    let mut best = 0.0f64;
    walk(inst, first_quadrant(inst), &mut |s| {
        let w: Vec<_> = s.iter().map(|&r| (r, 1.0)).collect();
        if fits(inst, &w, 1.0) {
            let u: f64 = s
                .iter()
                .map(|r| inst.users[r.user].preferences[r.pref].utility)
                .sum();
            best = best.max(u);
        }
    });
    best
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}
