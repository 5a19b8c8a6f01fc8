//! Limited-memory BFGS with a problem-supplied initial inverse Hessian
//! (preconditioner) and Armijo backtracking.

use std::collections::VecDeque;

use crate::error::Result;
use crate::vecops::dot;

pub(crate) trait Objective {
    /// Objective value; fills `grad`. `Ok(None)` marks the point as not
    /// evaluable (non-finite values), which the line search treats like a
    /// failed Armijo test.
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Result<Option<f64>>;

    /// Applies the inverse preconditioner at `x` to `v` in place.
    fn precondition(&mut self, x: &[f64], v: &mut [f64]);

    /// Scaled stationarity measure used for the convergence test.
    fn stationarity(&self, x: &[f64], grad: &[f64]) -> f64;

    /// False if `x` must be rejected outright (coercivity guard).
    fn admissible(&self, _x: &[f64]) -> bool {
        true
    }

    /// Largest step multiple of `d` worth trying from `x`.
    fn max_step(&self, _x: &[f64], _d: &[f64]) -> f64 {
        f64::INFINITY
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub iterations: usize,
    pub converged: bool,
    pub stationarity: f64,
    /// Longest run of consecutive iterations whose line search hit the
    /// admissibility guard.
    pub guard_streak: usize,
}

pub(crate) struct Settings {
    pub memory: usize,
    pub tol: f64,
    pub max_iters: usize,
}

pub(crate) fn minimize<O: Objective>(obj: &mut O, x: &mut Vec<f64>, s: &Settings) -> Result<Outcome> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let Some(mut f) = obj.eval(x, &mut g)? else {
        return Err(crate::error::Error::Evaluation { node: 0 });
    };
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(s.memory);
    let mut stat = obj.stationarity(x, &g);
    let mut guard_streak = 0;
    let mut worst_streak = 0;
    let mut stalls = 0;
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;
    for it in 0..s.max_iters {
        iterations = it;
        if stat <= s.tol {
            return Ok(Outcome { iterations: it, converged: true, stationarity: stat, guard_streak: worst_streak });
        }
        let g_sq = dot(&g, &g);
        let mut d = two_loop(obj, x, &g, &hist);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = two_loop(obj, x, &g, &hist);
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                break;
            }
        }
        let mut alpha = obj.max_step(x, &d).min(1.0);
        let mut accepted = false;
        let mut guard_hit = false;
        let mut best_fallback: Option<(f64, f64)> = None; // (alpha, |g|^2)
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = x[i] + alpha * d[i];
            }
            if !obj.admissible(&trial) {
                guard_hit = true;
                alpha *= 0.5;
                continue;
            }
            if let Some(ft) = obj.eval(&trial, &mut g_trial)? {
                if ft <= f + 1e-4 * alpha * slope {
                    accepted = true;
                    break;
                }
                // near the noise floor Armijo may be unsatisfiable; remember
                // steps that at least reduce the gradient
                if ft <= f + 1e-12 * f.abs().max(1e-300) {
                    let gg = dot(&g_trial, &g_trial);
                    if gg < g_sq && best_fallback.is_none_or(|(_, b)| gg < b) {
                        best_fallback = Some((alpha, gg));
                    }
                }
            }
            alpha *= 0.5;
        }
        if guard_hit {
            guard_streak += 1;
            worst_streak = worst_streak.max(guard_streak);
        } else {
            guard_streak = 0;
        }
        if !accepted {
            if let Some((a, _)) = best_fallback {
                alpha = a;
                for i in 0..n {
                    trial[i] = x[i] + alpha * d[i];
                }
                if obj.eval(&trial, &mut g_trial)?.is_some() {
                    accepted = true;
                }
            }
        }
        if !accepted {
            stalls += 1;
            hist.clear();
            if stalls >= 3 {
                break;
            }
            continue;
        }
        stalls = 0;
        let f_new = obj.eval(&trial, &mut g_trial)?.expect("accepted trial is evaluable");
        let sv: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let yv: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-12 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            if hist.len() == s.memory {
                hist.pop_front();
            }
            hist.push_back((sv, yv, 1.0 / sy));
        }
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        f = f_new;
        stat = obj.stationarity(x, &g);
    }
    let converged = stat <= s.tol;
    Ok(Outcome { iterations: iterations + 1, converged, stationarity: stat, guard_streak: worst_streak })
}

fn two_loop<O: Objective>(obj: &mut O, x: &[f64], g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    obj.precondition(x, &mut q);
    for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
