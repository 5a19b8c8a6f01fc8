//! Minimization of `J_c` over paths joining the two sublevel components.
//!
//! Two independent routes are provided: a time-domain penalty method
//! ([`minimize_time_domain`]) and geodesic descent on the Jacobi length
//! followed by time reparametrization ([`minimize_jacobi`]).

mod jacobi;
mod lbfgs;
mod time_domain;

pub use jacobi::minimize_jacobi;
pub use time_domain::{minimize_time_domain, minimize_time_domain_from};

use serde::{Deserialize, Serialize};

use crate::action::{ActionBreakdown, DiscretePath};
use crate::error::{Error, Result};
use crate::potential::{Family, Potential, SublevelPartition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointMode {
    /// Point-like sides are pinned, the others get a terminal penalty.
    Auto,
    PinnedToPoint,
    /// Penalty `w (V - c)^2` on the end node.
    PinnedToSet,
    /// Penalty `w dist^2(q_end, side)` on the end node.
    FreeWithTerminalPenalty,
}

/// How the time window is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// Fixed `[-T, T]` when both ends are points. When neither is, a fixed
    /// window of 1.5 times the timed seed's travel time (at most `T`), which
    /// leaves room for the brake turning points. With one end of each kind,
    /// a free length capped at `2T`.
    Auto,
    /// `[-T, T]`.
    Fixed,
    /// The window length is an unknown of the minimization, capped at `2T`.
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Window half-width `T`.
    pub half_width: f64,
    /// Number of segments `M` (the grid has `M + 1` nodes).
    pub segments: usize,
    pub penalty_weights: Vec<f64>,
    pub endpoint_mode: EndpointMode,
    pub window: WindowMode,
    pub grad_tol: f64,
    pub feasibility_tol: f64,
    /// Iteration cap per optimization stage.
    pub max_iters: usize,
    /// Number of grid halvings solved first as warm starts.
    pub continuation_levels: usize,
    /// Segments used by the Jacobi-length solver.
    pub jacobi_segments: usize,
    /// Explicit `(minus, plus)` seed points; defaults come from the partition.
    pub anchors: Option<(Vec<f64>, Vec<f64>)>,
    /// Coercivity radius `R`; defaults to the partition's.
    pub radius: Option<f64>,
    /// Optional seeded multi-start; off by default.
    pub multi_start: Option<MultiStart>,
}

/// Extra solves from randomly bent copies of the default seed path; the
/// lowest converged value wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiStart {
    pub seed: u64,
    pub starts: usize,
    /// Peak displacement of the bend, in position units.
    pub amplitude: f64,
}

impl MultiStart {
    /// Adds `a sin(pi s) v` to node `k` of `n`, with `v` a random unit
    /// vector drawn for start number `start`. End nodes do not move.
    pub(crate) fn bend(&self, start: usize, points: &mut [Vec<f64>]) {
        use rand::{Rng, SeedableRng};
        let n = points.len();
        let dim = points.first().map_or(0, |p| p.len());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(start as u64));
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len = crate::vecops::norm(&v);
        if len == 0.0 {
            return;
        }
        v.iter_mut().for_each(|x| *x /= len);
        for (k, p) in points.iter_mut().enumerate() {
            let s = k as f64 / (n - 1) as f64;
            let a = self.amplitude * (std::f64::consts::PI * s).sin();
            for (x, vi) in p.iter_mut().zip(&v) {
                *x += a * vi;
            }
        }
    }
}

impl SolverConfig {
    pub fn for_family(p: &Potential) -> SolverConfig {
        let half_width = match p.family() {
            Family::DoubleWell { .. } => 12.0,
            Family::Duffing => 10.0,
            Family::Pendulum => 8.0,
            Family::Custom(_) => 10.0,
        };
        SolverConfig {
            half_width,
            segments: 1024,
            penalty_weights: vec![1e2, 1e4, 1e6],
            endpoint_mode: EndpointMode::Auto,
            window: WindowMode::Auto,
            grad_tol: 1e-6,
            feasibility_tol: 1e-8,
            max_iters: 20_000,
            continuation_levels: 0,
            jacobi_segments: 256,
            anchors: None,
            radius: None,
            multi_start: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::param("T", format!("must be > 0, got {}", self.half_width)));
        }
        if self.segments < 16 {
            return Err(Error::param("M", format!("must be >= 16, got {}", self.segments)));
        }
        if self.jacobi_segments < 16 {
            return Err(Error::param("jacobi_segments", "must be >= 16"));
        }
        if self.penalty_weights.is_empty() || self.penalty_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::param("penalty_weights", "need at least one positive weight"));
        }
        if self.penalty_weights.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("penalty_weights", "must be strictly increasing"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::param("grad_tol", "must be > 0"));
        }
        if !(self.feasibility_tol > 0.0) {
            return Err(Error::param("feasibility_tol", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be > 0"));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::param("R", "must be > 0"));
            }
        }
        if let Some(ms) = &self.multi_start {
            if !(ms.amplitude >= 0.0) || !ms.amplitude.is_finite() {
                return Err(Error::param("multi_start.amplitude", "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TimeDomain,
    Jacobi,
}

/// How an end of the path was actually treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndTreatment {
    Point,
    Level,
    Terminal,
}

#[derive(Clone, Debug)]
pub struct MinimizerResult {
    pub method: Method,
    pub path: DiscretePath,
    /// Attained `J_c` (time domain) or Jacobi length.
    pub value: f64,
    pub breakdown: ActionBreakdown,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub constraint_violation: f64,
    /// `Some(value)` when converged and feasible.
    pub m_c_estimate: Option<f64>,
    pub ends: [EndTreatment; 2],
    pub free_length: bool,
    /// `(segments, value)` after each grid level, coarse to fine.
    pub history: Vec<(usize, f64)>,
}

/// Keeps the better of two results: converged beats unconverged, then the
/// lower value.
pub(crate) fn better(a: MinimizerResult, b: MinimizerResult) -> MinimizerResult {
    match (a.converged, b.converged) {
        (true, false) => a,
        (false, true) => b,
        _ if b.value < a.value => b,
        _ => a,
    }
}

/// Time at which `path` first reaches distance `rho` from the set measured
/// by `dist`, linearly interpolated between nodes.
pub fn crossing_time(path: &DiscretePath, dist: impl Fn(&[f64]) -> f64, rho: f64) -> Result<f64> {
    let t = path.times();
    let mut prev = dist(path.point(0));
    if prev >= rho {
        return Err(Error::Normalization(format!(
            "path starts at distance {prev:.4} >= rho0 = {rho:.4}"
        )));
    }
    for k in 1..path.n_nodes() {
        let d = dist(path.point(k));
        if d >= rho {
            let s = (rho - prev) / (d - prev);
            return Ok(t[k - 1] + s * (t[k] - t[k - 1]));
        }
        prev = d;
    }
    Err(Error::Normalization(format!("path never reaches distance rho0 = {rho:.4}")))
}

/// Shifts time so that the path is at distance `rho0` from `{V <= c}` at
/// `t = 0` (first crossing).
pub fn normalize_translation(path: &DiscretePath, part: &SublevelPartition) -> Result<DiscretePath> {
    let t0 = crossing_time(path, |x| part.dist(x), part.rho0())?;
    Ok(path.shifted(-t0))
}

/// Re-minimizes at twice the grid resolution, warm started by linear
/// interpolation of `result`.
pub fn refine(
    result: &MinimizerResult,
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
) -> Result<MinimizerResult> {
    refine_to(result, p, part, c, cfg, 2 * (result.path.n_nodes() - 1))
}

pub fn refine_to(
    result: &MinimizerResult,
    p: &Potential,
    part: &SublevelPartition,
    c: f64,
    cfg: &SolverConfig,
    segments: usize,
) -> Result<MinimizerResult> {
    if !result.converged {
        return Err(Error::Precondition("refine needs a converged result".into()));
    }
    if result.method != Method::TimeDomain {
        return Err(Error::Precondition("refine applies to time-domain results".into()));
    }
    let mut fine_cfg = cfg.clone();
    fine_cfg.segments = segments;
    fine_cfg.continuation_levels = 0;
    fine_cfg.penalty_weights = vec![*cfg.penalty_weights.last().unwrap()];
    let mut out = minimize_time_domain_from(p, part, c, &fine_cfg, &result.path, result.ends, result.free_length)?;
    if !out.converged {
        // warm starts can stall at the contact clusters of brake orbits;
        // a cold solve picks its own window
        log::info!("warm-started refinement to M = {segments} stalled; solving from the seed");
        let cold_cfg = SolverConfig { segments, ..cfg.clone() };
        if let Ok(cold) = minimize_time_domain(p, part, c, &cold_cfg) {
            out = better(out, cold);
        }
    }
    if !out.converged {
        log::warn!("refinement to M = {segments} did not converge; keeping the coarse result");
        let mut kept = result.clone();
        kept.history.push((segments, out.value));
        return Ok(kept);
    }
    let mut hist = result.history.clone();
    hist.extend(out.history.iter().cloned());
    out.history = hist;
    Ok(out)
}

/// Symmetric Hausdorff distance between the node sets of two polylines,
/// with each polyline densified to segments of length at most `step`.
pub fn hausdorff(a: &DiscretePath, b: &DiscretePath, step: f64) -> f64 {
    let pa = densify(a, step);
    let pb = densify(b, step);
    let one_way = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        x.iter()
            .map(|p| y.iter().map(|q| crate::vecops::dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0_f64, f64::max)
    };
    one_way(&pa, &pb).max(one_way(&pb, &pa))
}

fn densify(path: &DiscretePath, step: f64) -> Vec<Vec<f64>> {
    let mut out = vec![path.point(0).to_vec()];
    for k in 0..path.n_nodes() - 1 {
        let (a, b) = (path.point(k), path.point(k + 1));
        let n = (crate::vecops::dist(a, b) / step).ceil().max(1.0) as usize;
        for j in 1..=n {
            out.push(crate::vecops::lerp(a, b, j as f64 / n as f64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::TimeGrid;
    use crate::potential::{build_partition, make_double_well, LabelingRule};
    use approx::assert_abs_diff_eq;

    fn tanh_path() -> DiscretePath {
        let grid = TimeGrid::uniform(-12.0, 12.0, 4097).unwrap();
        let pts: Vec<Vec<f64>> = grid.nodes().iter().map(|t| vec![(2f64.sqrt() * t).tanh(), 0.0]).collect();
        DiscretePath::from_points(grid, &pts).unwrap()
    }

    #[test]
    fn normalization_of_exact_heteroclinic() {
        let p = make_double_well(5.0, 2).unwrap();
        let part = build_partition(&p, 0.0, LabelingRule::NearestWell).unwrap();
        let path = tanh_path();
        let t0 = crossing_time(&path, |x| part.dist(x), part.rho0()).unwrap();
        // first crossing is on the way out of a_-: tanh(sqrt2 t0) = -0.5
        assert_abs_diff_eq!(t0, -0.5f64.atanh() / 2f64.sqrt(), epsilon = 1e-4);
        let norm = normalize_translation(&path, &part).unwrap();
        let again = crossing_time(&norm, |x| part.dist(x), part.rho0()).unwrap();
        assert!(again.abs() < 1e-12);
    }

    #[test]
    fn normalization_fails_on_constant_path() {
        let p = make_double_well(5.0, 2).unwrap();
        let part = build_partition(&p, 0.0, LabelingRule::NearestWell).unwrap();
        let grid = TimeGrid::uniform(-1.0, 1.0, 11).unwrap();
        let path = DiscretePath::straight(grid, &[-1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert!(matches!(normalize_translation(&path, &part), Err(Error::Normalization(_))));
    }

    #[test]
    fn config_validation() {
        let p = make_double_well(5.0, 2).unwrap();
        let mut cfg = SolverConfig::for_family(&p);
        assert!(cfg.validate().is_ok());
        cfg.segments = 8;
        assert!(matches!(cfg.validate(), Err(Error::Parameter { name: "M", .. })));
        let mut cfg = SolverConfig::for_family(&p);
        cfg.penalty_weights = vec![1e4, 1e2];
        assert!(cfg.validate().is_err());
    }
}
