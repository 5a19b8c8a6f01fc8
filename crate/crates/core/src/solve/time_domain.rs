use super::jacobi::trim_to_gap;
use super::lbfgs::{self, Objective, Settings};
use super::{better, EndTreatment, EndpointMode, Method, MinimizerResult, SolverConfig, WindowMode};
use crate::action::{action, time_reparam, DiscretePath, TimeGrid, REPARAM_EPS};
use crate::error::{Error, Result};
use crate::potential::{Potential, Side, SublevelPartition};
use crate::vecops::{dist, lerp, norm, solve_block_tridiagonal};

/// Guard-hit streak after which the solve is declared to escape `B_{R+1}`.
const GUARD_STREAK_LIMIT: usize = 10;

/// Nodes with `|V - c|` below this (relative) are treated as touching the
/// level set in the stationarity test.
const CONTACT_BAND: f64 = 1e-6;

/// Largest node displacement per line search, relative to the guard radius.
const MAX_NODE_STEP: f64 = 0.1;

/// Nodes of the polyline that is timed to build the default initial path.
const SEED_NODES: usize = 401;

pub fn minimize_time_domain(
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
) -> Result<MinimizerResult> {
    cfg.validate()?;
    check_level(part, c)?;
    let mut best = solve_from_seed(p, part, c, cfg, None)?;
    if let Some(ms) = &cfg.multi_start {
        for r in 0..ms.starts {
            // a bent start that escapes or fails is simply discarded
            if let Ok(res) = solve_from_seed(p, part, c, cfg, Some(r)) {
                best = better(best, res);
            }
        }
    }
    Ok(best)
}

fn solve_from_seed(
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
    bend: Option<usize>,
) -> Result<MinimizerResult> {
    let (start, end, mut ends) = seed_endpoints(part, cfg)?;
    let mut line: Vec<Vec<f64>> = (0..SEED_NODES).map(|k| lerp(&start, &end, k as f64 / (SEED_NODES - 1) as f64)).collect();
    if let (Some(r), Some(ms)) = (bend, &cfg.multi_start) {
        ms.bend(r, &mut line);
        let free = [ends[0] != EndTreatment::Point, ends[1] != EndTreatment::Point];
        line = trim_to_gap(p, part, c, &line, free);
    }
    let (start, end) = (line[0].clone(), line[SEED_NODES - 1].clone());
    let timed = timed_seed(p, c, &line);
    let pinned = [ends[0] == EndTreatment::Point, ends[1] == EndTreatment::Point];
    let brake_travel = match cfg.window {
        WindowMode::Auto if !pinned[0] && !pinned[1] => timed.as_ref().map(|t| t.grid().t_plus()),
        _ => None,
    };
    let free_length = match cfg.window {
        WindowMode::Fixed => false,
        WindowMode::Free => true,
        WindowMode::Auto => pinned[0] != pinned[1],
    };
    if free_length && cfg.endpoint_mode == EndpointMode::Auto {
        // with a free length the optimal ends are turning points on {V = c};
        // the two-sided level penalty is smooth there, dist^2 is not
        for e in &mut ends {
            if *e == EndTreatment::Terminal {
                *e = EndTreatment::Level;
            }
        }
    }
    let Some(travel) = brake_travel else {
        return solve_window(p, part, c, cfg, timed, &start, &end, cfg.half_width, ends, free_length);
    };
    // Brake problems: the window is a multiple of the seed's travel time.
    // Whether the contact clusters settle quickly depends on where the grid
    // falls relative to the turning points, so a few widths are tried on a
    // short budget before the first one gets the full budget.
    let mut short = cfg.clone();
    short.max_iters = cfg.max_iters.min(BRAKE_TRY_ITERS);
    let mut best: Option<MinimizerResult> = None;
    for &f in &BRAKE_WINDOW_FACTORS {
        let hw = (f * travel).min(cfg.half_width);
        match solve_window(p, part, c, &short, timed.clone(), &start, &end, hw, ends, false) {
            Ok(r) if r.converged => return Ok(r),
            Ok(r) => best = Some(match best { Some(b) => better(b, r), None => r }),
            Err(e) => log::debug!("brake window {hw:.3}: {e}"),
        }
    }
    if cfg.max_iters > short.max_iters {
        let hw = (BRAKE_WINDOW_FACTORS[0] * travel).min(cfg.half_width);
        let r = solve_window(p, part, c, cfg, timed, &start, &end, hw, ends, false)?;
        best = Some(match best { Some(b) => better(b, r), None => r });
    }
    best.ok_or_else(|| Error::Input("no brake window could be solved".into()))
}

/// Window half-widths tried for brake problems, in units of the seed's
/// travel time.
const BRAKE_WINDOW_FACTORS: [f64; 4] = [1.5, 1.7, 1.9, 2.2];
const BRAKE_TRY_ITERS: usize = 1000;

#[allow(clippy::too_many_arguments)]
fn solve_window(
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
    timed: Option<DiscretePath>,
    start: &[f64],
    end: &[f64],
    half_width: f64,
    ends: [EndTreatment; 2],
    free_length: bool,
) -> Result<MinimizerResult> {
    let coarse = (cfg.segments >> cfg.continuation_levels).max(16);
    let init = initial_path(timed, start, end, half_width, coarse, free_length)?;
    check_radius(&init, guard_radius(part, cfg))?;
    let mut result = solve_levels(p, part, c, cfg, init, ends, free_length)?;
    let mut m = coarse;
    while m < cfg.segments {
        m = (2 * m).min(cfg.segments);
        let warm = resample(&result.path, m);
        let mut level_cfg = cfg.clone();
        level_cfg.penalty_weights = vec![*cfg.penalty_weights.last().unwrap()];
        let next = solve_levels(p, part, c, &level_cfg, warm, ends, free_length)?;
        let mut hist = result.history.clone();
        hist.extend(next.history.iter().cloned());
        let iterations = result.iterations + next.iterations;
        result = next;
        result.history = hist;
        result.iterations = iterations;
    }
    Ok(result)
}

/// Minimizes starting from `init` (resampled to `cfg.segments`), with the
/// end treatments and window mode given explicitly.
pub fn minimize_time_domain_from(
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
    init: &DiscretePath,
    ends: [EndTreatment; 2],
    free_length: bool,
) -> Result<MinimizerResult> {
    cfg.validate()?;
    check_level(part, c)?;
    if init.dim() != p.dim() {
        return Err(Error::Input("initial path dimension does not match the potential".into()));
    }
    let warm = resample(init, cfg.segments);
    check_radius(&warm, guard_radius(part, cfg))?;
    solve_levels(p, part, c, cfg, warm, ends, free_length)
}

fn check_level(part: &SublevelPartition, c: f64) -> Result<()> {
    if (part.level() - c).abs() > 1e-14 * (1.0 + c.abs()) {
        return Err(Error::Input(format!("partition built for c = {}, solving at c = {c}", part.level())));
    }
    Ok(())
}

fn guard_radius(part: &SublevelPartition, cfg: &SolverConfig) -> f64 {
    cfg.radius.unwrap_or(part.radius()) + 1.0
}

fn check_radius(path: &DiscretePath, guard: f64) -> Result<()> {
    let reached = (0..path.n_nodes()).map(|k| norm(path.point(k))).fold(0.0, f64::max);
    if reached > guard {
        return Err(Error::Coercivity { radius: guard, reached });
    }
    Ok(())
}

fn resample(path: &DiscretePath, segments: usize) -> DiscretePath {
    let g = path.grid();
    path.resample(TimeGrid::uniform(g.t_minus(), g.t_plus(), segments + 1).expect("valid window"))
}

/// Chooses the seed points and end treatments; for ends that are not pinned
/// to a point, the seed is moved to where the straight segment between the
/// anchors leaves the corresponding sublevel component.
pub(super) fn seed_endpoints(
    part: &SublevelPartition,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>, [EndTreatment; 2])> {
    let (a, b) = cfg.anchors.clone().unwrap_or_else(|| part.default_anchors());
    let dim = part.potential().dim();
    if a.len() != dim || b.len() != dim {
        return Err(Error::Input("anchor dimension does not match the potential".into()));
    }
    let (sa, sb) = (part.side_of(&a), part.side_of(&b));
    if sa != Side::Minus || sb != Side::Plus {
        return Err(Error::Input(format!(
            "seed points must lie in the minus and plus components (got {sa:?} and {sb:?}); the connection condition is unmet"
        )));
    }
    let treat = |anchor: &[f64]| match cfg.endpoint_mode {
        EndpointMode::Auto => {
            if part.is_point_like(anchor) {
                EndTreatment::Point
            } else {
                EndTreatment::Terminal
            }
        }
        EndpointMode::PinnedToPoint => EndTreatment::Point,
        EndpointMode::PinnedToSet => EndTreatment::Level,
        EndpointMode::FreeWithTerminalPenalty => EndTreatment::Terminal,
    };
    let ends = [treat(&a), treat(&b)];
    let leave = |side: Side, from_start: bool| -> f64 {
        // last parameter (from the given end) still inside the component
        let n = 4000;
        let at = |s: f64| lerp(&a, &b, s);
        let inside = |s: f64| part.side_of(&at(s)) == side;
        let (mut lo, mut hi) = (0.0, 1.0);
        for i in 1..=n {
            let s = i as f64 / n as f64;
            let s = if from_start { s } else { 1.0 - s };
            if !inside(s) {
                let prev = if from_start { s - 1.0 / n as f64 } else { s + 1.0 / n as f64 };
                lo = prev;
                hi = s;
                break;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let (s0, s1) = (
        if ends[0] == EndTreatment::Point && part.is_point_like(&a) { 0.0 } else { leave(Side::Minus, true) },
        if ends[1] == EndTreatment::Point && part.is_point_like(&b) { 1.0 } else { leave(Side::Plus, false) },
    );
    if !(s0 < s1) {
        return Err(Error::Input("seed segment does not leave the minus component before entering the plus one".into()));
    }
    Ok((lerp(&a, &b, s0), lerp(&a, &b, s1), ends))
}

/// Seed polyline timed with speed `sqrt(2 (V - c))`.
fn timed_seed(p: &Potential, c: f64, line: &[Vec<f64>]) -> Option<DiscretePath> {
    let fine = TimeGrid::uniform(0.0, 1.0, line.len()).ok()?;
    let path = DiscretePath::new(fine, p.dim(), line.concat()).ok()?;
    time_reparam(&path, p, c, REPARAM_EPS).ok().map(|r| r.path)
}

/// Places the timed seed on the solver grid: `[0, L]` for a free length,
/// centred in `[-T, T]` (compressed if needed) otherwise.
fn initial_path(
    timed: Option<DiscretePath>,
    start: &[f64],
    end: &[f64],
    half_width: f64,
    segments: usize,
    free_length: bool,
) -> Result<DiscretePath> {
    if free_length {
        let timed = match timed {
            Some(t) => t,
            None => DiscretePath::straight(TimeGrid::uniform(0.0, half_width, 401)?, start, end)?,
        };
        let l = timed.grid().t_plus();
        return Ok(timed.resample(TimeGrid::uniform(0.0, l, segments + 1)?));
    }
    let grid = TimeGrid::uniform(-half_width, half_width, segments + 1)?;
    let Some(timed) = timed else {
        return DiscretePath::straight(grid, start, end);
    };
    let l = timed.grid().t_plus();
    let scale = if l > 2.0 * half_width { 2.0 * half_width / l } else { 1.0 };
    let nodes: Vec<f64> = timed.times().iter().map(|t| (t - 0.5 * l) * scale).collect();
    let centred = DiscretePath::new(TimeGrid::from_nodes(nodes)?, timed.dim(), timed.coords().to_vec())?;
    let mut path = centred.resample(grid);
    let n = path.n_nodes();
    path.point_mut(0).copy_from_slice(start);
    path.point_mut(n - 1).copy_from_slice(end);
    Ok(path)
}

fn solve_levels(
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
    init: DiscretePath,
    ends: [EndTreatment; 2],
    free_length: bool,
) -> Result<MinimizerResult> {
    let n = init.n_nodes();
    let dim = init.dim();
    let segments = n - 1;
    let t_minus = init.grid().t_minus();
    let length = init.grid().t_plus() - t_minus;
    let window = if free_length {
        Window::Capped(2.0 * cfg.half_width)
    } else {
        Window::Fixed(length / segments as f64)
    };
    let mut prob = TdProblem {
        p,
        part,
        c,
        dim,
        n,
        q: init.coords().to_vec(),
        k0: if ends[0] == EndTreatment::Point { 1 } else { 0 },
        k1: if ends[1] == EndTreatment::Point { n - 2 } else { n - 1 },
        ends,
        window,
        weight: cfg.penalty_weights[0],
        curvature: p.curvature_scale(),
        guard: guard_radius(part, cfg),
        last_ku: 1.0,
        scratch_v: vec![0.0; n],
        scratch_g: vec![0.0; n * dim],
    };
    let mut x = prob.pack(length);
    let mut iterations = 0;
    let mut outcome = None;
    // with an end on a level set the soft stages let the ends sink into the
    // set and the minimizer then creeps back out along the penalty corner;
    // starting from the feasible timed seed at the final weight is faster
    let weights = if ends == [EndTreatment::Point; 2] {
        &cfg.penalty_weights[..]
    } else {
        &cfg.penalty_weights[cfg.penalty_weights.len() - 1..]
    };
    for &w in weights {
        prob.weight = w;
        let settings = Settings { memory: 12, tol: cfg.grad_tol, max_iters: cfg.max_iters };
        let out = lbfgs::minimize(&mut prob, &mut x, &settings)?;
        iterations += out.iterations;
        if out.guard_streak >= GUARD_STREAK_LIMIT {
            let reached = prob.max_trial_norm(&x);
            return Err(Error::Coercivity { radius: prob.guard, reached });
        }
        outcome = Some(out);
    }
    let out = outcome.expect("at least one penalty stage");
    prob.unpack(&x);
    let length = prob.length(&x);
    let grid = if free_length {
        TimeGrid::uniform(-0.5 * length, 0.5 * length, n)?
    } else {
        TimeGrid::uniform(t_minus, t_minus + length, n)?
    };
    let path = DiscretePath::new(grid, dim, prob.q.clone())?;
    let breakdown = action(&path, p, c)?;
    let violation = breakdown.constraint_violation;
    let converged = out.converged && violation <= cfg.feasibility_tol;
    let value = breakdown.total;
    Ok(MinimizerResult {
        method: Method::TimeDomain,
        path,
        value,
        m_c_estimate: converged.then_some(value),
        breakdown,
        converged,
        iterations,
        grad_norm: out.stationarity,
        constraint_violation: violation,
        ends,
        free_length,
        history: vec![(segments, value)],
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Window {
    /// Fixed step.
    Fixed(f64),
    /// Free length `L = cap * sigmoid(z)`. Unbounded lengths are ill-posed:
    /// nodes dwelling just inside `{V < c}` gain more than the quadratic
    /// penalty costs, without limit as `L` grows.
    Capped(f64),
}

/// Penalized discrete action over the free nodes, plus one length variable
/// unless the window is fixed.
struct TdProblem<'a> {
    p: &'a Potential,
    part: &'a SublevelPartition,
    c: f64,
    dim: usize,
    n: usize,
    q: Vec<f64>,
    /// Free nodes are `k0..=k1`.
    k0: usize,
    k1: usize,
    ends: [EndTreatment; 2],
    window: Window,
    weight: f64,
    curvature: f64,
    guard: f64,
    last_ku: f64,
    scratch_v: Vec<f64>,
    scratch_g: Vec<f64>,
}

impl TdProblem<'_> {
    /// Per-node stationarity residual `|g_k| / omega_k`, with the inward
    /// normal force removed at nodes in contact with `{V = c}`.
    fn node_residuals(&self, x: &[f64], grad: &[f64]) -> Vec<f64> {
        let dt = self.dt(x);
        let (dim, n, c) = (self.dim, self.n, self.c);
        let m = self.n_free() * dim;
        let band = CONTACT_BAND * (1.0 + c.abs());
        let mut gv = vec![0.0; dim];
        let mut gk = vec![0.0; dim];
        let mut out = Vec::with_capacity(self.n_free());
        for (j, chunk) in x[..m].chunks(dim).enumerate() {
            let k = self.k0 + j;
            gk.copy_from_slice(&grad[j * dim..(j + 1) * dim]);
            let v = self.p.value(chunk);
            let level_end = (k == 0 && self.ends[0] == EndTreatment::Level)
                || (k == n - 1 && self.ends[1] == EndTreatment::Level);
            if !level_end && (v - c).abs() <= band {
                // node in contact with {V = c}: a force pushing it into the
                // set is carried by the constraint, not a residual
                self.p.gradient_into(chunk, &mut gv);
                let gn = norm(&gv);
                if gn > 0.0 {
                    let viol = (c - v).max(0.0);
                    let along: f64 = gk.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>() / gn;
                    let raw = along + 2.0 * self.weight * viol * gn;
                    if raw > 0.0 {
                        for i in 0..dim {
                            gk[i] -= along * gv[i] / gn;
                        }
                    }
                }
            }
            out.push(norm(&gk) / self.node_weight(k, dt));
        }
        out
    }

    fn n_free(&self) -> usize {
        self.k1 + 1 - self.k0
    }

    fn pack(&self, length: f64) -> Vec<f64> {
        let mut x = self.q[self.k0 * self.dim..(self.k1 + 1) * self.dim].to_vec();
        match self.window {
            Window::Fixed(_) => {}
            Window::Capped(cap) => {
                let r = (length / cap).clamp(0.05, 0.95);
                x.push((r / (1.0 - r)).ln());
            }
        }
        x
    }

    fn length(&self, x: &[f64]) -> f64 {
        match self.window {
            Window::Fixed(dt) => dt * (self.n - 1) as f64,
            Window::Capped(cap) => cap * sigmoid(x[x.len() - 1]),
        }
    }

    /// `d ln L / d(length variable)`.
    fn log_length_slope(&self, x: &[f64]) -> f64 {
        match self.window {
            Window::Fixed(_) => 0.0,
            Window::Capped(_) => 1.0 - sigmoid(x[x.len() - 1]),
        }
    }

    fn unpack(&mut self, x: &[f64]) {
        let m = self.n_free() * self.dim;
        self.q[self.k0 * self.dim..(self.k1 + 1) * self.dim].copy_from_slice(&x[..m]);
    }

    fn dt(&self, x: &[f64]) -> f64 {
        match self.window {
            Window::Fixed(dt) => dt,
            _ => self.length(x) / (self.n - 1) as f64,
        }
    }

    fn node_weight(&self, k: usize, dt: f64) -> f64 {
        if k == 0 || k == self.n - 1 {
            0.5 * dt
        } else {
            dt
        }
    }

    fn side(&self, end: usize) -> Side {
        if end == 0 {
            Side::Minus
        } else {
            Side::Plus
        }
    }

    fn max_trial_norm(&self, x: &[f64]) -> f64 {
        let m = self.n_free() * self.dim;
        x[..m].chunks(self.dim).map(norm).fold(0.0, f64::max)
    }
}

impl Objective for TdProblem<'_> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Result<Option<f64>> {
        self.unpack(x);
        let (n, dim, c, w) = (self.n, self.dim, self.c, self.weight);
        let dt = self.dt(x);
        if !(dt > 0.0) || !dt.is_finite() {
            return Ok(None);
        }
        let mut gv = vec![0.0; dim];
        for k in 0..n {
            let v = self.p.value(&self.q[k * dim..(k + 1) * dim]);
            if !v.is_finite() {
                return Ok(None);
            }
            self.scratch_v[k] = v;
        }
        let mut g = std::mem::take(&mut self.scratch_g);
        g.iter_mut().for_each(|x| *x = 0.0);
        let mut kinetic = 0.0;
        let mut pot = 0.0;
        let mut pen_int = 0.0;
        for k in 0..n - 1 {
            let mut d2 = 0.0;
            for i in 0..dim {
                let d = self.q[(k + 1) * dim + i] - self.q[k * dim + i];
                d2 += d * d;
                g[k * dim + i] -= d / dt;
                g[(k + 1) * dim + i] += d / dt;
            }
            kinetic += 0.5 * d2 / dt;
            pot += dt * (0.5 * (self.scratch_v[k] + self.scratch_v[k + 1]) - c);
        }
        for k in 0..n {
            let q = &self.q[k * dim..(k + 1) * dim];
            let om = if k == 0 || k == n - 1 { 0.5 * dt } else { dt };
            let level_end = (k == 0 && self.ends[0] == EndTreatment::Level)
                || (k == n - 1 && self.ends[1] == EndTreatment::Level);
            let viol = if level_end { 0.0 } else { (c - self.scratch_v[k]).max(0.0) };
            pen_int += w * viol * viol;
            self.p.gradient_into(q, &mut gv);
            let coef = om - 2.0 * w * viol;
            for i in 0..dim {
                g[k * dim + i] += coef * gv[i];
            }
        }
        let mut pen_end = 0.0;
        for end in 0..2 {
            let k = if end == 0 { 0 } else { n - 1 };
            let q = self.q[k * dim..(k + 1) * dim].to_vec();
            match self.ends[end] {
                EndTreatment::Point => {}
                EndTreatment::Level => {
                    let r = self.scratch_v[k] - c;
                    pen_end += w * r * r;
                    self.p.gradient_into(&q, &mut gv);
                    for i in 0..dim {
                        g[k * dim + i] += 2.0 * w * r * gv[i];
                    }
                }
                EndTreatment::Terminal => {
                    let proj = self.part.project(self.side(end), &q);
                    let d = dist(&q, &proj);
                    pen_end += w * d * d;
                    for i in 0..dim {
                        g[k * dim + i] += 2.0 * w * (q[i] - proj[i]);
                    }
                }
            }
        }
        self.scratch_g = g;
        self.last_ku = (kinetic + pot.abs()).max(1e-300);
        let m = self.n_free() * dim;
        grad[..m].copy_from_slice(&self.scratch_g[self.k0 * dim..(self.k1 + 1) * dim]);
        if !matches!(self.window, Window::Fixed(_)) {
            grad[m] = (pot - kinetic) * self.log_length_slope(x);
        }
        let f = kinetic + pot + pen_int + pen_end;
        Ok(f.is_finite().then_some(f))
    }

    fn precondition(&mut self, x: &[f64], v: &mut [f64]) {
        let (dim, n) = (self.dim, self.n);
        self.unpack(x);
        let dt = self.dt(x);
        let nf = self.n_free();
        let bs = dim * dim;
        let mut diag = vec![0.0; nf * bs];
        let mut gv = vec![0.0; dim];
        for j in 0..nf {
            let k = self.k0 + j;
            let om = self.node_weight(k, dt);
            let mut a = self.curvature * om;
            if k > 0 {
                a += 1.0 / dt;
            }
            if k + 1 < n {
                a += 1.0 / dt;
            }
            let block = &mut diag[j * bs..(j + 1) * bs];
            for i in 0..dim {
                block[i * dim + i] = a;
            }
            let q = self.q[k * dim..(k + 1) * dim].to_vec();
            let vk = self.p.value(&q);
            let is_end = k == 0 || k == n - 1;
            let end_idx = if k == 0 { 0 } else { 1 };
            let mut rank1 = |u: &[f64], s: f64| {
                for i in 0..dim {
                    for l in 0..dim {
                        block[i * dim + l] += s * u[i] * u[l];
                    }
                }
            };
            let level_end = is_end && self.ends[end_idx] == EndTreatment::Level;
            if vk < self.c && !level_end {
                self.p.gradient_into(&q, &mut gv);
                rank1(&gv, 2.0 * self.weight);
            }
            if is_end {
                match self.ends[end_idx] {
                    EndTreatment::Point => {}
                    EndTreatment::Level => {
                        self.p.gradient_into(&q, &mut gv);
                        rank1(&gv, 2.0 * self.weight);
                    }
                    EndTreatment::Terminal => {
                        self.p.gradient_into(&q, &mut gv);
                        let gn = norm(&gv);
                        if gn > 0.0 {
                            let u: Vec<f64> = gv.iter().map(|x| x / gn).collect();
                            rank1(&u, 2.0 * self.weight);
                        } else {
                            for i in 0..dim {
                                block[i * dim + i] += 2.0 * self.weight;
                            }
                        }
                    }
                }
            }
        }
        let off = vec![-1.0 / dt; nf.saturating_sub(1)];
        let m = nf * dim;
        let ok = solve_block_tridiagonal(dim, &diag, &off, &mut v[..m]);
        if !ok {
            v[..m].iter_mut().for_each(|x| *x *= dt);
        }
        if !matches!(self.window, Window::Fixed(_)) {
            let s = self.log_length_slope(x);
            v[m] /= self.last_ku * (s * s).max(1e-12);
        }
    }

    fn stationarity(&self, x: &[f64], grad: &[f64]) -> f64 {
        let r = self.node_residuals(x, grad);
        let mut worst = r.iter().fold(0.0, |m: f64, v| m.max(*v));
        if !matches!(self.window, Window::Fixed(_)) {
            worst = worst.max(grad[self.n_free() * self.dim].abs() / self.last_ku);
        }
        worst
    }


    fn admissible(&self, x: &[f64]) -> bool {
        self.max_trial_norm(x) <= self.guard
    }

    fn max_step(&self, _x: &[f64], d: &[f64]) -> f64 {
        let m = self.n_free() * self.dim;
        let largest = d[..m].chunks(self.dim).map(norm).fold(0.0, f64::max);
        let mut cap = if largest > 0.0 { MAX_NODE_STEP * self.guard / largest } else { f64::INFINITY };
        if !matches!(self.window, Window::Fixed(_)) {
            // at most a factor e in window length per step
            cap = cap.min(1.0 / d[m].abs().max(1e-300));
        }
        cap
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
