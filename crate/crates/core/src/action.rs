//! Discrete paths, the action `J_c`, its gradient, the Jacobi length and
//! the arclength-to-time reparametrization.
//!
//! Kinetic energy uses the piecewise-constant velocity on each segment and
//! the potential term uses the trapezoid rule, so the gradient below is the
//! usual Stormer/Verlet stencil.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::vecops::{dist, norm, GAUSS8};

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// `n_nodes` equally spaced times from `t_minus` to `t_plus`.
    pub fn uniform(t_minus: f64, t_plus: f64, n_nodes: usize) -> Result<TimeGrid> {
        if n_nodes < 3 {
            return Err(Error::param("M", format!("need at least 3 nodes, got {n_nodes}")));
        }
        if !(t_plus > t_minus) || !t_minus.is_finite() || !t_plus.is_finite() {
            return Err(Error::param("window", format!("need t_minus < t_plus, got [{t_minus}, {t_plus}]")));
        }
        let m = (n_nodes - 1) as f64;
        let nodes = (0..n_nodes)
            .map(|k| if k + 1 == n_nodes { t_plus } else { t_minus + (t_plus - t_minus) * k as f64 / m })
            .collect();
        Ok(TimeGrid { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<TimeGrid> {
        if nodes.len() < 3 {
            return Err(Error::param("M", format!("need at least 3 nodes, got {}", nodes.len())));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("time nodes must be finite and strictly increasing".into()));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn t_minus(&self) -> f64 {
        self.nodes[0]
    }
    pub fn t_plus(&self) -> f64 {
        *self.nodes.last().unwrap()
    }
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    /// Length of segment `k` (between nodes `k` and `k + 1`).
    pub fn dt(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }
    pub fn is_uniform(&self) -> bool {
        let h = self.dt(0);
        (1..self.nodes.len() - 1).all(|k| (self.dt(k) - h).abs() <= 1e-12 * h.abs().max(1.0))
    }
    pub fn shifted(&self, s: f64) -> TimeGrid {
        TimeGrid {
            nodes: self.nodes.iter().map(|t| t + s).collect(),
        }
    }
}

/// A path sampled at the nodes of a time grid. Points are stored flat,
/// node-major (`points[k * dim + i]`).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePath {
    grid: TimeGrid,
    dim: usize,
    points: Vec<f64>,
}

impl DiscretePath {
    pub fn new(grid: TimeGrid, dim: usize, points: Vec<f64>) -> Result<DiscretePath> {
        if dim == 0 {
            return Err(Error::param("dim", "must be >= 1"));
        }
        if points.len() != grid.n_nodes() * dim {
            return Err(Error::Input(format!(
                "expected {} coordinates, got {}",
                grid.n_nodes() * dim,
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!("non-finite coordinate at node {}", i / dim)));
        }
        Ok(DiscretePath { grid, dim, points })
    }

    pub fn from_points(grid: TimeGrid, pts: &[Vec<f64>]) -> Result<DiscretePath> {
        let dim = pts.first().map_or(0, |p| p.len());
        if pts.iter().any(|p| p.len() != dim) {
            return Err(Error::Input("points have mixed dimensions".into()));
        }
        DiscretePath::new(grid, dim, pts.concat())
    }

    /// Straight segment from `a` to `b`, uniform in time.
    pub fn straight(grid: TimeGrid, a: &[f64], b: &[f64]) -> Result<DiscretePath> {
        if a.len() != b.len() {
            return Err(Error::Input("endpoint dimensions differ".into()));
        }
        let (t0, t1) = (grid.t_minus(), grid.t_plus());
        let mut pts = Vec::with_capacity(grid.n_nodes() * a.len());
        for &t in grid.nodes() {
            let s = (t - t0) / (t1 - t0);
            pts.extend(a.iter().zip(b).map(|(x, y)| x + s * (y - x)));
        }
        DiscretePath::new(grid, a.len(), pts)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }
    pub fn times(&self) -> &[f64] {
        self.grid.nodes()
    }
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }
    pub fn point_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.points[k * self.dim..(k + 1) * self.dim]
    }
    pub fn coords(&self) -> &[f64] {
        &self.points
    }
    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.points
    }
    pub fn first(&self) -> &[f64] {
        self.point(0)
    }
    pub fn last(&self) -> &[f64] {
        self.point(self.n_nodes() - 1)
    }

    pub fn shifted(&self, s: f64) -> DiscretePath {
        DiscretePath {
            grid: self.grid.shifted(s),
            dim: self.dim,
            points: self.points.clone(),
        }
    }

    /// Nodes `i..=j` as a path of their own.
    pub fn slice(&self, i: usize, j: usize) -> Result<DiscretePath> {
        if !(i < j && j < self.n_nodes() && j - i >= 2) {
            return Err(Error::Input(format!("bad node range {i}..={j}")));
        }
        let grid = TimeGrid::from_nodes(self.times()[i..=j].to_vec())?;
        DiscretePath::new(grid, self.dim, self.points[i * self.dim..(j + 1) * self.dim].to_vec())
    }

    /// Piecewise-linear interpolation, clamped to the end points outside
    /// the grid.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let ts = self.times();
        if t <= ts[0] {
            return self.first().to_vec();
        }
        if t >= ts[ts.len() - 1] {
            return self.last().to_vec();
        }
        let k = ts.partition_point(|&x| x <= t).saturating_sub(1).min(ts.len() - 2);
        let s = (t - ts[k]) / (ts[k + 1] - ts[k]);
        self.point(k)
            .iter()
            .zip(self.point(k + 1))
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }

    /// Re-samples the path at the nodes of `grid` by linear interpolation.
    pub fn resample(&self, grid: TimeGrid) -> DiscretePath {
        let mut pts = Vec::with_capacity(grid.n_nodes() * self.dim);
        for &t in grid.nodes() {
            pts.extend(self.sample(t));
        }
        DiscretePath {
            grid,
            dim: self.dim,
            points: pts,
        }
    }

    /// Total Euclidean length of the polygon through the nodes.
    pub fn polygon_length(&self) -> f64 {
        (0..self.n_nodes() - 1).map(|k| dist(self.point(k), self.point(k + 1))).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionBreakdown {
    pub kinetic: f64,
    pub potential_excess: f64,
    pub total: f64,
    pub per_segment: Vec<f64>,
    pub constraint_violation: f64,
}

fn values(path: &DiscretePath, p: &Potential) -> Result<Vec<f64>> {
    check_dim(path, p)?;
    (0..path.n_nodes())
        .map(|k| {
            let v = p.value(path.point(k));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation { node: k })
            }
        })
        .collect()
}

fn check_dim(path: &DiscretePath, p: &Potential) -> Result<()> {
    if path.dim() != p.dim() {
        return Err(Error::Input(format!(
            "path dimension {} does not match potential dimension {}",
            path.dim(),
            p.dim()
        )));
    }
    Ok(())
}

pub fn action(path: &DiscretePath, p: &Potential, c: f64) -> Result<ActionBreakdown> {
    action_between(path, p, c, 0, path.n_nodes() - 1)
}

/// Action restricted to the time interval `[t_i, t_j]` (node indices).
pub fn action_between(path: &DiscretePath, p: &Potential, c: f64, i: usize, j: usize) -> Result<ActionBreakdown> {
    if !(i < j && j < path.n_nodes()) {
        return Err(Error::Input(format!("bad node range {i}..={j}")));
    }
    let v = values(path, p)?;
    let grid = path.grid();
    let mut kinetic = 0.0;
    let mut potential_excess = 0.0;
    let mut violation = 0.0;
    let mut per_segment = Vec::with_capacity(j - i);
    for k in i..j {
        let h = grid.dt(k);
        let d2: f64 = path
            .point(k)
            .iter()
            .zip(path.point(k + 1))
            .map(|(a, b)| (b - a) * (b - a))
            .sum();
        let kin = 0.5 * d2 / h;
        let pot = h * (0.5 * (v[k] + v[k + 1]) - c);
        kinetic += kin;
        potential_excess += pot;
        per_segment.push(kin + pot);
        let w = 0.5 * h;
        violation += w * ((c - v[k]).max(0.0).powi(2) + (c - v[k + 1]).max(0.0).powi(2));
    }
    Ok(ActionBreakdown {
        kinetic,
        potential_excess,
        total: kinetic + potential_excess,
        per_segment,
        constraint_violation: violation,
    })
}

/// Gradient of the discrete action with respect to every node coordinate
/// (flat, same layout as the path). End nodes are zeroed if `fixed_ends`.
pub fn action_gradient(path: &DiscretePath, p: &Potential, c: f64, fixed_ends: bool) -> Result<Vec<f64>> {
    let _ = c; // the level only shifts J by a constant on a fixed grid
    check_dim(path, p)?;
    let n = path.n_nodes();
    let dim = path.dim();
    let grid = path.grid();
    let mut g = vec![0.0; n * dim];
    let mut gv = vec![0.0; dim];
    for k in 0..n {
        let q = path.point(k);
        if !p.value(q).is_finite() {
            return Err(Error::Evaluation { node: k });
        }
        p.gradient_into(q, &mut gv);
        let mut w = 0.0;
        let out = &mut g[k * dim..(k + 1) * dim];
        if k > 0 {
            let h = grid.dt(k - 1);
            w += 0.5 * h;
            for (o, (a, b)) in out.iter_mut().zip(q.iter().zip(path.point(k - 1))) {
                *o += (a - b) / h;
            }
        }
        if k + 1 < n {
            let h = grid.dt(k);
            w += 0.5 * h;
            for (o, (a, b)) in out.iter_mut().zip(path.point(k + 1).iter().zip(q)) {
                *o -= (a - b) / h;
            }
        }
        for (o, gi) in out.iter_mut().zip(&gv) {
            *o += w * gi;
        }
    }
    if fixed_ends {
        g[..dim].iter_mut().for_each(|x| *x = 0.0);
        g[(n - 1) * dim..].iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(g)
}

/// Length of the curve in the Jacobi metric `sqrt(2 (V - c)) |dq|`
/// (midpoint rule, negative excess clamped to 0).
pub fn jacobi_length(curve: &DiscretePath, p: &Potential, c: f64) -> f64 {
    let dim = curve.dim();
    let mut mid = vec![0.0; dim];
    let mut total = 0.0;
    for k in 0..curve.n_nodes() - 1 {
        let (a, b) = (curve.point(k), curve.point(k + 1));
        for i in 0..dim {
            mid[i] = 0.5 * (a[i] + b[i]);
        }
        total += (2.0 * (p.value(&mid) - c).max(0.0)).sqrt() * dist(a, b);
    }
    total
}

/// `sqrt(2 mu) |dq|`, the minimal action of a segment on which `V - c >= mu`.
pub fn segment_lower_bound(mu: f64, delta_q: &[f64]) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::param("mu", format!("must be >= 0, got {mu}")));
    }
    Ok((2.0 * mu).sqrt() * norm(delta_q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EndFlag {
    Finite,
    Divergent,
}

#[derive(Clone, Debug)]
pub struct Reparam {
    /// The curve with times starting at 0 and speed `sqrt(2 (V - c))`.
    pub path: DiscretePath,
    pub start: EndFlag,
    pub end: EndFlag,
    /// Travel time of each segment.
    pub segment_times: Vec<f64>,
}

/// Default clip parameter for [`time_reparam`].
pub const REPARAM_EPS: f64 = 1e-6;

/// Assigns times to a geometric curve so that the speed is
/// `sqrt(2 (V - c))`, i.e. `dt = ds / sqrt(2 (V - c))`.
///
/// End segments may touch the level. With `I(d)` the time spent on the end
/// segment from normalized distance `d` to its far node, an end is flagged
/// divergent when `I(eps^2) - I(eps) > 0.1 I(eps)` (the integral keeps
/// growing like `ln(1/d)`); its time is then clipped at `I(eps)`.
pub fn time_reparam(curve: &DiscretePath, p: &Potential, c: f64, eps: f64) -> Result<Reparam> {
    check_dim(curve, p)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("eps", "must lie in (0, 1)"));
    }
    let n = curve.n_nodes();
    for k in 1..n - 1 {
        let ex = p.value(curve.point(k)) - c;
        if !ex.is_finite() {
            return Err(Error::Evaluation { node: k });
        }
        if ex <= 0.0 {
            return Err(Error::Constraint { node: k, excess: ex });
        }
    }
    let mut times = Vec::with_capacity(n - 1);
    let mut flags = [EndFlag::Finite, EndFlag::Finite];
    for k in 0..n - 1 {
        let (a, b) = (curve.point(k), curve.point(k + 1));
        let h = dist(a, b);
        if h == 0.0 {
            return Err(Error::Input(format!("repeated node at segment {k}")));
        }
        let seg_time = if k == 0 {
            let (t, f) = end_segment_time(p, c, a, b, eps);
            flags[0] = f;
            t
        } else if k == n - 2 {
            let (t, f) = end_segment_time(p, c, b, a, eps);
            flags[1] = f;
            t
        } else {
            GAUSS8
                .iter()
                .map(|&(s, w)| {
                    let x: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect();
                    w * h / (2.0 * (p.value(&x) - c).max(f64::MIN_POSITIVE)).sqrt()
                })
                .sum()
        };
        times.push(seg_time);
    }
    let mut nodes = Vec::with_capacity(n);
    let mut t = 0.0;
    nodes.push(t);
    for dt in &times {
        t += dt;
        nodes.push(t);
    }
    let grid = TimeGrid::from_nodes(nodes)?;
    Ok(Reparam {
        path: DiscretePath::new(grid, curve.dim(), curve.coords().to_vec())?,
        start: flags[0],
        end: flags[1],
        segment_times: times,
    })
}

/// Time along the segment from `end` to `far`, integrating near `end` in the
/// variable `y = ln s` so both `s^(-1/2)` and `s^(-1)` endpoint behaviour
/// are resolved.
fn end_segment_time(p: &Potential, c: f64, end: &[f64], far: &[f64], eps: f64) -> (f64, EndFlag) {
    let h = dist(end, far);
    let base = p.value(end).min(c);
    let f = |s: f64| -> f64 {
        let x: Vec<f64> = end.iter().zip(far).map(|(a, b)| a + s * (b - a)).collect();
        let g = (p.value(&x) - base).max(0.0);
        if g <= 0.0 {
            f64::INFINITY
        } else {
            h / (2.0 * g).sqrt()
        }
    };
    // I(d) = int_d^1 f(s) ds = int_{ln d}^0 f(e^y) e^y dy
    let integral = |lo: f64, hi: f64| -> f64 {
        let pieces = 48;
        let w = (hi - lo) / pieces as f64;
        let mut total = 0.0;
        for j in 0..pieces {
            let y0 = lo + j as f64 * w;
            for &(s, wt) in GAUSS8.iter() {
                let y = y0 + s * w;
                let e = y.exp();
                total += wt * w * f(e) * e;
            }
        }
        total
    };
    let l1 = eps.ln();
    let i_eps = integral(l1, 0.0);
    let extra = integral(2.0 * l1, l1);
    if !i_eps.is_finite() || !extra.is_finite() || extra > 0.1 * i_eps {
        let t = if i_eps.is_finite() { i_eps } else { f64::MAX.sqrt() };
        (t, EndFlag::Divergent)
    } else {
        (i_eps + extra, EndFlag::Finite)
    }
}
