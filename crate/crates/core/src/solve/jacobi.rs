//! Geodesic descent on the Jacobi length `L_c = int sqrt(2 (V - c)) |dq|`.
//!
//! Semi-implicit preconditioned descent with the tension matrix `f / h`,
//! equal-arclength redistribution after every step, and level-set
//! projection of free ends. The curve is turned into a timed path with
//! `time_reparam` at the end.

use super::time_domain::seed_endpoints;
use super::{better, EndTreatment, Method, MinimizerResult, SolverConfig};
use crate::action::{action, jacobi_length, time_reparam, DiscretePath, TimeGrid, REPARAM_EPS};
use crate::error::{Error, Result};
use crate::potential::{newton_to_level, Potential, Side, SublevelPartition};
use crate::vecops::{dist, lerp, norm, solve_tridiagonal};

pub fn minimize_jacobi(
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
) -> Result<MinimizerResult> {
    cfg.validate()?;
    if (part.level() - c).abs() > 1e-14 * (1.0 + c.abs()) {
        return Err(Error::Input(format!("partition built for c = {}, solving at c = {c}", part.level())));
    }
    let mut best = descend(p, part, c, cfg, None)?;
    if let Some(ms) = &cfg.multi_start {
        for r in 0..ms.starts {
            if let Ok(res) = descend(p, part, c, cfg, Some(r)) {
                best = better(best, res);
            }
        }
    }
    Ok(best)
}

fn descend(
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
    bend: Option<usize>,
) -> Result<MinimizerResult> {
    let (start, end, ends) = seed_endpoints(part, cfg)?;
    let free = [ends[0] != EndTreatment::Point, ends[1] != EndTreatment::Point];
    let dim = p.dim();
    let n = cfg.jacobi_segments + 1;
    let guard = cfg.radius.unwrap_or(part.radius()) + 1.0;

    let mut curve: Vec<Vec<f64>> = (0..n).map(|k| lerp(&start, &end, k as f64 / (n - 1) as f64)).collect();
    if let (Some(r), Some(ms)) = (bend, &cfg.multi_start) {
        ms.bend(r, &mut curve);
        curve = trim_to_gap(p, part, c, &curve, free);
    }
    if curve.iter().any(|x| norm(x) > guard) {
        let reached = curve.iter().map(|x| norm(x)).fold(0.0, f64::max);
        return Err(Error::Coercivity { radius: guard, reached });
    }
    let reg_scale = p.curvature_scale().sqrt();
    let mut length = polyline_jacobi(p, c, &curve);
    let mut alpha: f64 = 0.5;
    let mut stat = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut quiet = 0;
    let mut guard_streak = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let (g, seg_f, seg_len) = gradient(p, c, &curve);
        // normal component at interior nodes
        let mut gn = g.clone();
        for k in 1..n - 1 {
            let t: Vec<f64> = (0..dim).map(|i| curve[k + 1][i] - curve[k - 1][i]).collect();
            let tn = norm(&t);
            if tn > 0.0 {
                let s: f64 = (0..dim).map(|i| gn[k][i] * t[i]).sum::<f64>() / (tn * tn);
                for i in 0..dim {
                    gn[k][i] -= s * t[i];
                }
            }
        }
        stat = (1..n - 1)
            .map(|k| norm(&gn[k]) / (0.5 * (seg_len[k - 1] + seg_len[k])))
            .fold(0.0, f64::max);
        if stat <= cfg.grad_tol {
            converged = true;
            break;
        }
        // tension preconditioner, one coordinate at a time
        let h_avg = seg_len.iter().sum::<f64>() / seg_len.len() as f64;
        let reg = reg_scale * h_avg;
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for k in 0..n {
            let mut d = reg;
            if k > 0 {
                d += seg_f[k - 1] / seg_len[k - 1];
            }
            if k + 1 < n {
                d += seg_f[k] / seg_len[k];
                off[k] = -seg_f[k] / seg_len[k];
            }
            diag[k] = d;
        }
        let mut dir = vec![vec![0.0; dim]; n];
        for i in 0..dim {
            let mut rhs: Vec<f64> = (0..n).map(|k| if (k == 0 && !free[0]) || (k == n - 1 && !free[1]) { 0.0 } else { gn[k][i] }).collect();
            // pinned ends: decouple them with a dominant diagonal
            let mut dg = diag.clone();
            let mut of = off.clone();
            if !free[0] {
                dg[0] = 1.0;
                of[0] = 0.0;
            }
            if !free[1] {
                dg[n - 1] = 1.0;
                of[n - 2] = 0.0;
            }
            solve_tridiagonal(&dg, &of, &mut rhs);
            for k in 0..n {
                dir[k][i] = rhs[k];
            }
        }
        let mut accepted = false;
        let mut guard_hit = false;
        let mut a = (2.0 * alpha).min(1.0);
        for _ in 0..30 {
            let mut trial: Vec<Vec<f64>> = curve
                .iter()
                .zip(&dir)
                .map(|(x, d)| x.iter().zip(d).map(|(xi, di)| xi - a * di).collect())
                .collect();
            for (idx, k) in [(0usize, 0usize), (1, n - 1)] {
                if free[idx] {
                    match newton_to_level(p, c, &trial[k]) {
                        Some(y) => trial[k] = y,
                        None => trial[k] = curve[k].clone(),
                    }
                }
            }
            let trial = redistribute(&trim_to_gap(p, part, c, &trial, free), n);
            if trial.iter().any(|x| norm(x) > guard) {
                guard_hit = true;
                a *= 0.5;
                continue;
            }
            let l_new = polyline_jacobi(p, c, &trial);
            if l_new.is_finite() && l_new <= length {
                let dl = length - l_new;
                quiet = if dl <= 1e-14 * length { quiet + 1 } else { 0 };
                curve = trial;
                length = l_new;
                alpha = a;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        guard_streak = if guard_hit { guard_streak + 1 } else { 0 };
        if guard_streak >= 10 {
            let reached = curve.iter().map(|x| norm(x)).fold(0.0, f64::max);
            return Err(Error::Coercivity { radius: guard, reached });
        }
        if !accepted || quiet >= 50 {
            // no further decrease at this resolution
            converged = quiet >= 50 || stat <= 1e3 * cfg.grad_tol;
            break;
        }
    }
    let pts: Vec<f64> = curve.concat();
    let geo = DiscretePath::new(TimeGrid::uniform(0.0, 1.0, n)?, dim, pts)?;
    let value = jacobi_length(&geo, p, c);
    let timed = time_reparam(&geo, p, c, REPARAM_EPS)?;
    let total = timed.path.grid().t_plus();
    let path = timed.path.shifted(-0.5 * total);
    let breakdown = action(&path, p, c)?;
    Ok(MinimizerResult {
        method: Method::Jacobi,
        value,
        m_c_estimate: converged.then_some(value),
        constraint_violation: breakdown.constraint_violation,
        breakdown,
        path,
        converged,
        iterations,
        grad_norm: stat,
        ends,
        free_length: false,
        history: vec![(n - 1, value)],
    })
}

fn conformal(p: &Potential, c: f64, x: &[f64]) -> f64 {
    (2.0 * (p.value(x) - c).max(0.0)).sqrt()
}

fn polyline_jacobi(p: &Potential, c: f64, curve: &[Vec<f64>]) -> f64 {
    curve
        .windows(2)
        .map(|w| conformal(p, c, &lerp(&w[0], &w[1], 0.5)) * dist(&w[0], &w[1]))
        .sum()
}

/// Gradient of the midpoint-rule Jacobi length, plus per-segment conformal
/// factors and lengths.
fn gradient(p: &Potential, c: f64, curve: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = curve.len();
    let dim = curve[0].len();
    let mut g = vec![vec![0.0; dim]; n];
    let mut seg_f = Vec::with_capacity(n - 1);
    let mut seg_len = Vec::with_capacity(n - 1);
    let mut gv = vec![0.0; dim];
    for k in 0..n - 1 {
        let (a, b) = (&curve[k], &curve[k + 1]);
        let m = lerp(a, b, 0.5);
        let l = dist(a, b).max(1e-300);
        let f = conformal(p, c, &m);
        seg_f.push(f);
        seg_len.push(l);
        p.gradient_into(&m, &mut gv);
        for i in 0..dim {
            let e = (b[i] - a[i]) / l;
            let grad_f = if f > 0.0 { gv[i] / f } else { 0.0 };
            g[k][i] += -f * e + 0.5 * grad_f * l;
            g[k + 1][i] += f * e + 0.5 * grad_f * l;
        }
    }
    (g, seg_f, seg_len)
}

/// Cuts free ends back to the last exit from the minus component and the
/// first entry into the plus one. Pieces of the curve inside `{V < c}` have
/// zero Jacobi length, so without this the descent cannot push them out.
pub(super) fn trim_to_gap(p: &Potential, part: &SublevelPartition, c: f64, curve: &[Vec<f64>], free: [bool; 2]) -> Vec<Vec<f64>> {
    let n = curve.len();
    let inside = |k: usize, side: Side| p.value(&curve[k]) < c && part.side_of(&curve[k]) == side;
    let last = if free[1] { (1..n).find(|&k| inside(k, Side::Plus)).unwrap_or(n - 1) } else { n - 1 };
    let first = if free[0] { (0..last).rev().find(|&k| inside(k, Side::Minus)).unwrap_or(0) } else { 0 };
    if first == 0 && last == n - 1 {
        return curve.to_vec();
    }
    let crossing = |a: &[f64], b: &[f64]| -> Vec<f64> {
        // a is inside, b outside
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if p.value(&lerp(a, b, mid)) < c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = lerp(a, b, hi);
        newton_to_level(p, c, &x).unwrap_or(x)
    };
    let mut out = Vec::with_capacity(last + 2 - first);
    out.push(if first > 0 || (free[0] && inside(0, Side::Minus)) { crossing(&curve[first], &curve[first + 1]) } else { curve[0].clone() });
    out.extend(curve[first + 1..last].iter().cloned());
    out.push(if last < n - 1 || (free[1] && inside(n - 1, Side::Plus)) { crossing(&curve[last], &curve[last - 1]) } else { curve[n - 1].clone() });
    redistribute(&out, n)
}

/// Equal-arclength resampling of the polyline to `n` nodes, ends kept.
fn redistribute(curve: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let m = curve.len();
    let mut cum = vec![0.0; m];
    for k in 1..m {
        cum[k] = cum[k - 1] + dist(&curve[k - 1], &curve[k]);
    }
    let total = cum[m - 1];
    if !(total > 0.0) && m == n {
        return curve.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    out.push(curve[0].clone());
    let mut j = 0;
    for k in 1..n - 1 {
        let s = total * k as f64 / (n - 1) as f64;
        while j + 1 < m - 1 && cum[j + 1] < s {
            j += 1;
        }
        let seg = cum[j + 1] - cum[j];
        let u = if seg > 0.0 { (s - cum[j]) / seg } else { 0.0 };
        out.push(lerp(&curve[j], &curve[j + 1], u));
    }
    out.push(curve[m - 1].clone());
    out
}
