//! Contact times, orbit taxonomy and whole-line extensions.
//!
//! A minimizer's connecting interval `(alpha, omega)` runs from the last
//! contact with the minus component to the first subsequent contact with
//! the plus one. A contact is finite when the path reaches the level set
//! at a regular point and infinite when it only approaches a critical
//! point. Two finite contacts give a brake orbit, one a homoclinic, none a
//! heteroclinic.

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::action::{time_reparam, DiscretePath, EndFlag, REPARAM_EPS};
use crate::error::{Error, Result};
use crate::potential::{newton_to_level, Potential, SetShape, Side, SublevelPartition};
use crate::vecops::{dist, norm};

/// Default level tolerance for contacts and limit sets.
pub const TOL_LEVEL: f64 = 1e-6;
/// Default share of nodes used for a limit-set estimate.
pub const TAIL_FRACTION: f64 = 0.1;
/// Tail clusters wider than this are reported as unsettled.
pub const SETTLED_DIAMETER: f64 = 1e-3;

/// Gradient norm below which a point counts as critical.
pub fn tol_crit(p: &Potential) -> f64 {
    1e-4 * p.gradient_scale()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Contact {
    Finite(f64),
    /// The path only approaches the set as `t -> -inf` (for alpha) or
    /// `t -> +inf` (for omega).
    Infinite,
}

impl Contact {
    pub fn is_finite(self) -> bool {
        matches!(self, Contact::Finite(_))
    }

    pub fn time(self) -> Option<f64> {
        match self {
            Contact::Finite(t) => Some(t),
            Contact::Infinite => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContactTimes {
    pub alpha: Contact,
    pub omega: Contact,
    /// Node indices bounding the connecting interval.
    pub alpha_node: usize,
    pub omega_node: usize,
    /// Set only for finite contacts.
    pub contact_point_minus: Option<Vec<f64>>,
    pub contact_point_plus: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrbitClass {
    Brake {
        sigma: f64,
        tau: f64,
        period: f64,
    },
    Homoclinic {
        sigma: f64,
        contact_side: Side,
        limit_side: Side,
    },
    Heteroclinic,
    /// A limit-set tail did not settle; the path is probably not resolved
    /// on its window.
    Unknown { reason: String },
}

impl OrbitClass {
    pub fn name(&self) -> &'static str {
        match self {
            OrbitClass::Brake { .. } => "brake",
            OrbitClass::Homoclinic { .. } => "homoclinic",
            OrbitClass::Heteroclinic => "heteroclinic",
            OrbitClass::Unknown { .. } => "unknown",
        }
    }
}

/// Tail cluster of a path near an infinite contact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitSetEstimate {
    pub side: Side,
    pub points: Vec<Vec<f64>>,
    pub centroid: Vec<f64>,
    pub diameter: f64,
    pub max_level_dev: f64,
    pub max_grad: f64,
    /// Largest finite-difference speed over the tail.
    pub max_speed: f64,
    pub settled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub class: OrbitClass,
    pub grad_at_minus_contact: Option<f64>,
    pub grad_at_plus_contact: Option<f64>,
    pub limit_minus: Option<LimitSetEstimate>,
    pub limit_plus: Option<LimitSetEstimate>,
}

/// A classified orbit with its whole-line extension.
#[derive(Clone, Debug)]
pub struct ConnectingOrbit {
    /// The path restricted to the connecting interval (heteroclinic and
    /// homoclinic: including the tails toward the limit sets).
    pub base: DiscretePath,
    pub class: Classification,
    pub contacts: ContactTimes,
    pub c: f64,
}

fn near(p: &Potential, part: &SublevelPartition, x: &[f64], side: Side, tol: f64) -> bool {
    p.value(x) - part.level() <= tol && part.territory(x) == side
}

/// Contact times of `path` with the two components, `tol` being the level
/// tolerance on `V - c`.
pub fn contact_times(path: &DiscretePath, part: &SublevelPartition, p: &Potential, tol: f64) -> Result<ContactTimes> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be > 0"));
    }
    let n = path.n_nodes();
    let ia = (0..n)
        .rev()
        .find(|&k| near(p, part, path.point(k), Side::Minus, tol))
        .ok_or_else(|| Error::Connection("the path never comes near the minus component".into()))?;
    let ib = (ia + 1..n)
        .find(|&k| near(p, part, path.point(k), Side::Plus, tol))
        .ok_or_else(|| Error::Connection("the path never reaches the plus component after leaving the minus one".into()))?;

    let crit = tol_crit(p);
    let (start_flag, end_flag) = if ib - ia >= 2 {
        let mut curve = path.slice(ia, ib)?;
        // a dwell cluster jitters around the level; put regular contact
        // nodes on it so the end-segment test sees the true approach
        let last = curve.n_nodes() - 1;
        for k in [0, last] {
            if p.gradient_norm(curve.point(k)) > crit {
                if let Some(y) = newton_to_level(p, part.level(), curve.point(k)) {
                    curve.point_mut(k).copy_from_slice(&y);
                }
            }
        }
        match time_reparam(&curve, p, part.level(), REPARAM_EPS) {
            Ok(r) => (r.start, r.end),
            Err(_) => (EndFlag::Finite, EndFlag::Finite),
        }
    } else {
        (EndFlag::Finite, EndFlag::Finite)
    };
    let first = path.point(0);
    let last = path.point(n - 1);
    // asymptotic approach: the path end sits on the set at a critical point,
    // or the travel time diverges next to one. Dwell at a regular turning
    // point can also read as divergent, hence the looser gradient gate.
    let asymptotic = |x: &[f64], flag: EndFlag| {
        let g = p.gradient_norm(x);
        g <= crit || (flag == EndFlag::Divergent && g <= 100.0 * crit)
    };
    let alpha_infinite = near(p, part, first, Side::Minus, tol) && asymptotic(first, start_flag);
    let omega_infinite = near(p, part, last, Side::Plus, tol) && asymptotic(last, end_flag);
    let t = path.times();
    let (alpha, contact_point_minus) =
        if alpha_infinite { (Contact::Infinite, None) } else { (Contact::Finite(t[ia]), Some(path.point(ia).to_vec())) };
    let (omega, contact_point_plus) =
        if omega_infinite { (Contact::Infinite, None) } else { (Contact::Finite(t[ib]), Some(path.point(ib).to_vec())) };
    Ok(ContactTimes { alpha, omega, alpha_node: ia, omega_node: ib, contact_point_minus, contact_point_plus })
}

/// Assigns the orbit class. Finite contacts must be regular points of `V`;
/// infinite ones get a limit-set estimate from the path tails.
pub fn classify(ct: &ContactTimes, p: &Potential, part: &SublevelPartition, path: &DiscretePath) -> Result<Classification> {
    let c = part.level();
    let crit = tol_crit(p);
    let grad_at = |x: &Option<Vec<f64>>, side: &str| -> Result<Option<f64>> {
        match x {
            None => Ok(None),
            Some(x) => {
                let g = p.gradient_norm(x);
                if g <= crit {
                    return Err(Error::Inconsistency(format!(
                        "finite {side} contact at a critical point (|grad V| = {g:.3e})"
                    )));
                }
                Ok(Some(g))
            }
        }
    };
    let grad_minus = grad_at(&ct.contact_point_minus, "minus")?;
    let grad_plus = grad_at(&ct.contact_point_plus, "plus")?;
    let limit_minus = (!ct.alpha.is_finite()).then(|| alpha_limit_set(path, p, c, TAIL_FRACTION, Side::Minus));
    let limit_plus = (!ct.omega.is_finite()).then(|| limit_set(path, p, c, TAIL_FRACTION, Side::Plus));

    let mut class = match (ct.alpha, ct.omega) {
        (Contact::Finite(sigma), Contact::Finite(tau)) => OrbitClass::Brake { sigma, tau, period: 2.0 * (tau - sigma) },
        (Contact::Finite(sigma), Contact::Infinite) => {
            OrbitClass::Homoclinic { sigma, contact_side: Side::Minus, limit_side: Side::Plus }
        }
        (Contact::Infinite, Contact::Finite(sigma)) => {
            OrbitClass::Homoclinic { sigma, contact_side: Side::Plus, limit_side: Side::Minus }
        }
        (Contact::Infinite, Contact::Infinite) => OrbitClass::Heteroclinic,
    };
    if !matches!(class, OrbitClass::Brake { .. }) {
        let floor = level_gradient_floor(part);
        if floor > crit {
            return Err(Error::Inconsistency(format!(
                "c = {c} is a regular value (min |grad V| on the level set {floor:.3e}) but the orbit is {}",
                class.name()
            )));
        }
    }
    for l in limit_minus.iter().chain(&limit_plus) {
        if !l.settled {
            log::warn!("unsettled {:?} tail (diameter {:.3e}); classification downgraded", l.side, l.diameter);
            class = OrbitClass::Unknown { reason: format!("unsettled {:?} tail, diameter {:.3e}", l.side, l.diameter) };
        } else if l.max_level_dev > TOL_LEVEL || l.max_grad > crit {
            return Err(Error::Inconsistency(format!(
                "{:?} limit set is not critical on the level (|V - c| = {:.3e}, |grad V| = {:.3e})",
                l.side, l.max_level_dev, l.max_grad
            )));
        }
    }
    Ok(Classification {
        class,
        grad_at_minus_contact: grad_minus,
        grad_at_plus_contact: grad_plus,
        limit_minus,
        limit_plus,
    })
}

/// Estimate of the omega-limit set from the final `tail_fraction` of nodes.
pub fn limit_set(path: &DiscretePath, p: &Potential, c: f64, tail_fraction: f64, side: Side) -> LimitSetEstimate {
    let n = path.n_nodes();
    let m = tail_len(n, tail_fraction);
    tail_estimate(path, p, c, (n - m..n).collect(), side)
}

/// Estimate of the alpha-limit set from the first `tail_fraction` of nodes.
pub fn alpha_limit_set(path: &DiscretePath, p: &Potential, c: f64, tail_fraction: f64, side: Side) -> LimitSetEstimate {
    let m = tail_len(path.n_nodes(), tail_fraction);
    tail_estimate(path, p, c, (0..m).collect(), side)
}

fn tail_len(n: usize, fraction: f64) -> usize {
    ((fraction.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(2, n)
}

fn tail_estimate(path: &DiscretePath, p: &Potential, c: f64, idx: Vec<usize>, side: Side) -> LimitSetEstimate {
    let dim = path.dim();
    let points: Vec<Vec<f64>> = idx.iter().map(|&k| path.point(k).to_vec()).collect();
    let mut centroid = vec![0.0; dim];
    for x in &points {
        for i in 0..dim {
            centroid[i] += x[i] / points.len() as f64;
        }
    }
    let mut diameter: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            diameter = diameter.max(dist(a, b));
        }
    }
    let max_level_dev = points.iter().map(|x| (p.value(x) - c).abs()).fold(0.0, f64::max);
    let max_grad = points.iter().map(|x| p.gradient_norm(x)).fold(0.0, f64::max);
    let t = path.times();
    let max_speed = idx
        .windows(2)
        .map(|w| dist(path.point(w[0]), path.point(w[1])) / (t[w[1]] - t[w[0]]))
        .fold(0.0, f64::max);
    LimitSetEstimate {
        side,
        points,
        centroid,
        diameter,
        max_level_dev,
        max_grad,
        max_speed,
        settled: diameter <= SETTLED_DIAMETER,
    }
}

/// Smallest `|grad V|` found on sampled points of the level set `{V = c}`.
pub fn level_gradient_floor(part: &SublevelPartition) -> f64 {
    let p = part.potential();
    let dim = p.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut shell = |radius: f64| -> Vec<Vec<f64>> {
        if radius == 0.0 {
            return vec![vec![0.0; dim]];
        }
        (0..256)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let r = norm(&v).max(1e-12);
                v.iter().map(|x| x * radius / r).collect()
            })
            .collect()
    };
    let mut floor = f64::INFINITY;
    for side in [Side::Minus, Side::Plus] {
        let pts: Vec<Vec<f64>> = match part.shape(side) {
            SetShape::Points(pts) => pts.clone(),
            SetShape::Stars(comps) => comps.iter().flat_map(|s| s.boundary.iter().cloned()).collect(),
            SetShape::Ball { radius } | SetShape::Exterior { radius } => shell(*radius),
            SetShape::LatticePoints { .. } => vec![vec![0.0; dim]],
            SetShape::LatticeBlobs { blob, .. } => blob.boundary.clone(),
        };
        for x in pts {
            floor = floor.min(p.gradient_norm(&x));
        }
    }
    floor
}

impl ConnectingOrbit {
    /// Contact times, classification and the base path in one go.
    pub fn build(path: &DiscretePath, p: &Potential, part: &SublevelPartition) -> Result<ConnectingOrbit> {
        let contacts = contact_times(path, part, p, TOL_LEVEL)?;
        let class = classify(&contacts, p, part, path)?;
        let n = path.n_nodes();
        let (i, j) = match class.class {
            OrbitClass::Brake { .. } => (contacts.alpha_node, contacts.omega_node),
            OrbitClass::Homoclinic { contact_side: Side::Plus, .. } => (0, contacts.omega_node),
            OrbitClass::Homoclinic { .. } => (contacts.alpha_node, n - 1),
            _ => (0, n - 1),
        };
        let base = if j - i >= 2 { path.slice(i, j)? } else { path.clone() };
        Ok(ConnectingOrbit { base, class, contacts, c: part.level() })
    }

    /// Action of the whole orbit over one traversal: a homoclinic or a
    /// brake orbit runs its base twice (out and back), a heteroclinic once.
    pub fn full_action(&self, p: &Potential) -> Result<f64> {
        let j = crate::action::action(&self.base, p, self.c)?.total;
        Ok(match self.class.class {
            OrbitClass::Brake { .. } | OrbitClass::Homoclinic { .. } => 2.0 * j,
            _ => j,
        })
    }

    /// Position on the whole-line orbit at time `t`.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        match self.class.class {
            OrbitClass::Brake { sigma, tau, period } => {
                let u = (t - sigma).rem_euclid(period);
                let half = tau - sigma;
                if u <= half {
                    self.base.sample(sigma + u)
                } else {
                    self.base.sample(sigma + (period - u))
                }
            }
            OrbitClass::Homoclinic { sigma, contact_side, .. } => {
                let s = t - sigma;
                // contact at the end of the base: the orbit lives at t <= sigma
                let back = if contact_side == Side::Plus { -s.abs() } else { s.abs() };
                self.base.sample(sigma + back)
            }
            _ => self.base.sample(t),
        }
    }
}

/// Whole-line extension of `orbit`, see [`ConnectingOrbit::sample`].
pub fn extend(orbit: &ConnectingOrbit, t: f64) -> Vec<f64> {
    orbit.sample(t)
}
