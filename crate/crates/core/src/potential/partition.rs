use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_sphere, Family, Potential};
use crate::error::{Error, Result};
use crate::lattice::{box_points, round_to_lattice, Lattice};
use crate::vecops::{dist, norm};

/// Absolute slack on `V - c` when deciding sublevel membership.
pub const TOL_LEVEL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Minus,
    Plus,
    Above,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
            Side::Above => Side::Above,
        }
    }
}

/// How points of `{V <= c}` are assigned to the two components.
#[derive(Clone, Debug, PartialEq)]
pub enum LabelingRule {
    /// Nearest of the two known minima; the first one is the minus side.
    NearestWell,
    /// Inside `B_r0(0)` is minus, outside is plus.
    Radial { r0: f64 },
    /// Nearest integer point in the sublattice is minus, otherwise plus.
    Sublattice(Lattice),
    /// Nearest anchor decides; anchors are listed per side.
    NearestAnchor { minus: Vec<Vec<f64>>, plus: Vec<Vec<f64>> },
}

impl LabelingRule {
    pub fn default_for(p: &Potential) -> LabelingRule {
        match p.family() {
            Family::DoubleWell { .. } => LabelingRule::NearestWell,
            Family::Duffing => LabelingRule::Radial {
                r0: std::f64::consts::FRAC_1_SQRT_2,
            },
            Family::Pendulum => LabelingRule::Sublattice(Lattice::zero(p.dim())),
            Family::Custom(_) => {
                let m = p.known_minima();
                LabelingRule::NearestAnchor {
                    minus: m.first().cloned().into_iter().collect(),
                    plus: m.iter().skip(1).cloned().collect(),
                }
            }
        }
    }
}

/// A sublevel component that is star shaped about `anchor`, stored as a
/// cloud of boundary points found by bisection along rays.
#[derive(Clone, Debug)]
pub struct StarComponent {
    pub anchor: Vec<f64>,
    pub boundary: Vec<Vec<f64>>,
    /// Largest gap between neighbouring boundary points (resolution).
    pub spacing: f64,
    pub r_min: f64,
    pub r_max: f64,
}

/// Geometric description of one side of the partition.
#[derive(Clone, Debug)]
pub enum SetShape {
    Points(Vec<Vec<f64>>),
    Stars(Vec<StarComponent>),
    /// Closed ball `|x| <= radius` (a point when the radius is 0).
    Ball { radius: f64 },
    Exterior { radius: f64 },
    /// Lattice points of the sublattice (or of its complement).
    LatticePoints { lattice: Lattice, complement: bool },
    /// Translates of a blob around 0 by the sublattice (or its complement).
    LatticeBlobs { blob: StarComponent, lattice: Lattice, complement: bool },
}

/// The split of `{V <= c}` into two closed pieces at positive distance.
///
/// Immutable after construction; share it freely across threads.
#[derive(Clone, Debug)]
pub struct SublevelPartition {
    potential: Potential,
    c: f64,
    rule: LabelingRule,
    minus: SetShape,
    plus: SetShape,
    component_distance: f64,
    rho0: f64,
    radius: f64,
}

pub fn build_partition(p: &Potential, c: f64, rule: LabelingRule) -> Result<SublevelPartition> {
    build_partition_with_radius(p, c, rule, p.default_radius())
}

impl SublevelPartition {
    pub fn potential(&self) -> &Potential {
        &self.potential
    }
    pub fn level(&self) -> f64 {
        self.c
    }
    pub fn rule(&self) -> &LabelingRule {
        &self.rule
    }
    pub fn rho0(&self) -> f64 {
        self.rho0
    }
    /// Sampled distance between the two labeled pieces (= 4 rho0).
    pub fn component_distance(&self) -> f64 {
        self.component_distance
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn shape(&self, side: Side) -> &SetShape {
        match side {
            Side::Minus => &self.minus,
            _ => &self.plus,
        }
    }

    pub fn with_radius(&self, radius: f64) -> Result<SublevelPartition> {
        build_partition_with_radius(&self.potential, self.c, self.rule.clone(), radius)
    }

    pub fn side_of(&self, x: &[f64]) -> Side {
        if self.potential.value(x) > self.c + TOL_LEVEL {
            return Side::Above;
        }
        self.territory(x)
    }

    /// Side by the labeling rule alone, ignoring the level.
    pub fn territory(&self, x: &[f64]) -> Side {
        match &self.rule {
            LabelingRule::NearestWell => {
                let m = self.potential.known_minima();
                if dist(x, &m[0]) <= dist(x, &m[1]) {
                    Side::Minus
                } else {
                    Side::Plus
                }
            }
            LabelingRule::Radial { r0 } => {
                if norm(x) < *r0 {
                    Side::Minus
                } else {
                    Side::Plus
                }
            }
            LabelingRule::Sublattice(l) => {
                if l.contains(&round_to_lattice(x)) {
                    Side::Minus
                } else {
                    Side::Plus
                }
            }
            LabelingRule::NearestAnchor { minus, plus } => {
                let dm = minus.iter().map(|a| dist(x, a)).fold(f64::INFINITY, f64::min);
                let dp = plus.iter().map(|a| dist(x, a)).fold(f64::INFINITY, f64::min);
                if dm <= dp {
                    Side::Minus
                } else {
                    Side::Plus
                }
            }
        }
    }

    pub fn dist_minus(&self, x: &[f64]) -> f64 {
        dist(x, &self.project(Side::Minus, x))
    }

    pub fn dist_plus(&self, x: &[f64]) -> f64 {
        dist(x, &self.project(Side::Plus, x))
    }

    /// Distance to the whole sublevel set.
    pub fn dist(&self, x: &[f64]) -> f64 {
        self.dist_minus(x).min(self.dist_plus(x))
    }

    pub fn dist_side(&self, side: Side, x: &[f64]) -> f64 {
        dist(x, &self.project(side, x))
    }

    /// An (approximately) nearest point of the given side to `x`.
    pub fn project(&self, side: Side, x: &[f64]) -> Vec<f64> {
        match self.shape(side) {
            SetShape::Points(pts) => nearest(pts.iter().cloned(), x),
            SetShape::Ball { radius } => {
                let r = norm(x);
                if r <= *radius {
                    x.to_vec()
                } else {
                    x.iter().map(|v| v * radius / r).collect()
                }
            }
            SetShape::Exterior { radius } => {
                let r = norm(x);
                if r >= *radius {
                    x.to_vec()
                } else if r < 1e-300 {
                    let mut e = vec![0.0; x.len()];
                    e[0] = *radius;
                    e
                } else {
                    x.iter().map(|v| v * radius / r).collect()
                }
            }
            SetShape::Stars(stars) => {
                let mut best = None;
                let mut best_d = f64::INFINITY;
                for s in stars {
                    let y = self.star_project(s, x, &|z| self.territory(z) == side, &s.anchor);
                    let d = dist(&y, x);
                    if d < best_d {
                        best_d = d;
                        best = Some(y);
                    }
                }
                best.unwrap_or_else(|| x.to_vec())
            }
            SetShape::LatticePoints { lattice, complement } => {
                let members = lattice_neighbours(lattice, *complement, x);
                nearest(members.into_iter().map(|v| v.iter().map(|&k| k as f64).collect()), x)
            }
            SetShape::LatticeBlobs { blob, lattice, complement } => {
                let members = lattice_neighbours(lattice, *complement, x);
                let mut best = x.to_vec();
                let mut best_d = f64::INFINITY;
                for xi in members {
                    let shift: Vec<f64> = xi.iter().map(|&k| k as f64).collect();
                    let local: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a - b).collect();
                    let zero = vec![0i64; x.len()];
                    let y = self.star_project(blob, &local, &|z| round_to_lattice(z) == zero, &blob.anchor);
                    let d = dist(&y, &local);
                    if d < best_d {
                        best_d = d;
                        best = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
                    }
                }
                best
            }
        }
    }

    /// True when the sublevel component containing `anchor` is the single
    /// critical point `anchor` itself (level equals `V(anchor)` and
    /// `grad V(anchor) = 0`).
    pub fn is_point_like(&self, anchor: &[f64]) -> bool {
        let v = self.potential.value(anchor);
        (v - self.c).abs() <= TOL_LEVEL && self.potential.gradient_norm(anchor) <= 1e-9
    }

    /// Default anchor points `(minus, plus)` used to seed paths.
    pub fn default_anchors(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.potential.dim();
        match &self.rule {
            LabelingRule::NearestWell => {
                let m = self.potential.known_minima();
                (m[0].clone(), m[1].clone())
            }
            LabelingRule::Radial { .. } => {
                let mut e = vec![0.0; dim];
                e[0] = match self.plus {
                    SetShape::Exterior { radius } => radius,
                    _ => 1.0,
                };
                (vec![0.0; dim], e)
            }
            LabelingRule::Sublattice(l) => {
                let target = lattice_candidates(l, 2)
                    .into_iter()
                    .next()
                    .expect("non-full sublattice has a complement point");
                (vec![0.0; dim], target.iter().map(|&k| k as f64).collect())
            }
            LabelingRule::NearestAnchor { minus, plus } => (minus[0].clone(), plus[0].clone()),
        }
    }

    fn star_project(
        &self,
        s: &StarComponent,
        x: &[f64],
        same_territory: &dyn Fn(&[f64]) -> bool,
        _anchor: &[f64],
    ) -> Vec<f64> {
        let v = self.potential.value(x);
        if v <= self.c + TOL_LEVEL && same_territory(x) {
            return x.to_vec();
        }
        let da = dist(x, &s.anchor);
        let mut best = nearest(s.boundary.iter().cloned(), x);
        let mut best_d = dist(&best, x);
        if da - s.r_max > best_d + 1e-12 {
            return best;
        }
        if best_d <= 4.0 * s.spacing + 1e-9 {
            if let Some(y) = newton_to_level(&self.potential, self.c, x) {
                let d = dist(&y, x);
                if d < best_d && same_territory(&y) {
                    best_d = d;
                    best = y;
                }
            }
        }
        let _ = best_d;
        best
    }
}

fn nearest(pts: impl Iterator<Item = Vec<f64>>, x: &[f64]) -> Vec<f64> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for p in pts {
        let d = dist(&p, x);
        if d < best_d {
            best_d = d;
            best = Some(p);
        }
    }
    best.unwrap_or_else(|| x.to_vec())
}

/// Moves `x` onto `{V = c}` along the gradient (Newton on `V - c`).
pub(crate) fn newton_to_level(p: &Potential, c: f64, x: &[f64]) -> Option<Vec<f64>> {
    let mut y = x.to_vec();
    let mut g = vec![0.0; y.len()];
    for _ in 0..30 {
        let r = p.value(&y) - c;
        if r.abs() <= 1e-14 * (1.0 + c.abs()) {
            return Some(y);
        }
        p.gradient_into(&y, &mut g);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2 < 1e-24 {
            return None;
        }
        for (yi, gi) in y.iter_mut().zip(&g) {
            *yi -= r * gi / g2;
        }
    }
    let r = p.value(&y) - c;
    (r.abs() <= 1e-10).then_some(y)
}

/// Sublattice members (or complement members) near `x`, widening the search
/// box until something is found. 0 is always a member of the sublattice.
fn lattice_neighbours(l: &Lattice, complement: bool, x: &[f64]) -> Vec<Vec<i64>> {
    let center = round_to_lattice(x);
    for radius in 1..=4 {
        let found: Vec<Vec<i64>> = box_points(&center, radius)
            .into_iter()
            .filter(|v| l.contains(v) != complement)
            .collect();
        if !found.is_empty() {
            return found;
        }
    }
    if complement {
        Vec::new()
    } else {
        vec![vec![0; x.len()]]
    }
}

/// Complement points of the sublattice within sup-radius `radius` of 0,
/// ordered by Euclidean norm, ties broken towards the lexicographically
/// largest vector (so `e1` precedes `e2` precedes `-e2` precedes `-e1`).
pub fn lattice_candidates(l: &Lattice, radius: i64) -> Vec<Vec<i64>> {
    let zero = vec![0i64; l.dim()];
    let mut c: Vec<Vec<i64>> = box_points(&zero, radius)
        .into_iter()
        .filter(|v| !l.contains(v))
        .collect();
    c.sort_by(|a, b| {
        let na: i64 = a.iter().map(|x| x * x).sum();
        let nb: i64 = b.iter().map(|x| x * x).sum();
        na.cmp(&nb).then_with(|| b.cmp(a))
    });
    c
}

fn ray_directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..720)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / 720.0;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let n = 2000;
            let golden = PI * (3.0 - 5.0_f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    vec![r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..4000).map(|_| sample_sphere(&mut rng, dim)).collect()
        }
    }
}

/// Marches rays out of `anchor` until `V > c`, then bisects. Fails with
/// `NoSplit` if a ray leaves the anchor's territory while still below the
/// level, or never exceeds the level inside `max_radius`.
fn build_star(
    p: &Potential,
    c: f64,
    anchor: &[f64],
    max_radius: f64,
    same_territory: &dyn Fn(&[f64]) -> bool,
) -> Result<StarComponent> {
    let dirs = ray_directions(p.dim());
    let step = (max_radius / 400.0).min(0.01);
    let mut boundary = Vec::with_capacity(dirs.len());
    let mut radii = Vec::with_capacity(dirs.len());
    let at = |u: &[f64], r: f64| -> Vec<f64> { anchor.iter().zip(u).map(|(a, b)| a + r * b).collect() };
    for u in &dirs {
        let mut lo = 0.0;
        let mut hi = None;
        let mut r = step;
        while r <= max_radius {
            let x = at(u, r);
            if p.value(&x) > c {
                hi = Some(r);
                break;
            }
            if !same_territory(&x) {
                return Err(Error::NoSplit {
                    c,
                    reason: format!("sublevel set around {anchor:?} reaches the other component"),
                });
            }
            lo = r;
            r += step;
        }
        let Some(mut hi) = hi else {
            return Err(Error::NoSplit {
                c,
                reason: format!("sublevel component around {anchor:?} is not bounded by R = {max_radius}"),
            });
        };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if p.value(&at(u, mid)) > c {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        radii.push(lo);
        boundary.push(at(u, lo));
    }
    let mut spacing: f64 = 0.0;
    for (i, b) in boundary.iter().enumerate() {
        let mut nearest_d = f64::INFINITY;
        for (j, o) in boundary.iter().enumerate() {
            if i != j {
                nearest_d = nearest_d.min(dist(b, o));
            }
        }
        if nearest_d.is_finite() {
            spacing = spacing.max(nearest_d);
        }
    }
    let r_min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    Ok(StarComponent {
        anchor: anchor.to_vec(),
        boundary,
        spacing,
        r_min,
        r_max,
    })
}

fn cloud_distance(a: &StarComponent, b: &StarComponent, shift: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for x in &a.boundary {
        for y in &b.boundary {
            let d: f64 = x
                .iter()
                .zip(y)
                .zip(shift)
                .map(|((p, q), s)| (p - q - s).powi(2))
                .sum::<f64>();
            best = best.min(d);
        }
    }
    best.sqrt()
}

fn build_partition_with_radius(
    p: &Potential,
    c: f64,
    rule: LabelingRule,
    radius: f64,
) -> Result<SublevelPartition> {
    if !c.is_finite() {
        return Err(Error::param("c", "must be finite"));
    }
    if !(radius > 0.0) {
        return Err(Error::param("R", "must be > 0"));
    }
    let dim = p.dim();
    let (minus, plus, distance) = match (&rule, p.family()) {
        (LabelingRule::Radial { r0 }, Family::Duffing) => {
            if c < 0.0 {
                return Err(Error::Geometry(format!("c = {c} < 0 leaves no inner component")));
            }
            if c >= 0.25 {
                return Err(Error::NoSplit {
                    c,
                    reason: "V <= 1/4 everywhere, the sublevel set is connected".into(),
                });
            }
            let disc = (1.0 - 4.0 * c).sqrt();
            let r_in = ((1.0 - disc) / 2.0).sqrt();
            let r_out = ((1.0 + disc) / 2.0).sqrt();
            if !(r_in < *r0 && *r0 < r_out) {
                return Err(Error::NoSplit {
                    c,
                    reason: format!("r0 = {r0} does not separate radii {r_in:.4} and {r_out:.4}"),
                });
            }
            (SetShape::Ball { radius: r_in }, SetShape::Exterior { radius: r_out }, r_out - r_in)
        }
        (LabelingRule::Radial { .. }, _) => {
            return Err(Error::param("labeling", "radial rule is only available for the duffing family"));
        }
        (LabelingRule::Sublattice(l), Family::Pendulum) => {
            if l.dim() != dim {
                return Err(Error::param("labeling", "sublattice dimension mismatch"));
            }
            if l.is_full() {
                return Err(Error::NoSplit {
                    c,
                    reason: "sublattice is all of Z^N, the plus side is empty".into(),
                });
            }
            if c < 0.0 {
                return Err(Error::Geometry(format!("c = {c} < 0, sublevel set empty")));
            }
            let candidates = lattice_candidates(l, 2);
            let zero = vec![0.0; dim];
            if c <= TOL_LEVEL {
                let d = candidates
                    .iter()
                    .map(|v| norm(&v.iter().map(|&k| k as f64).collect::<Vec<_>>()))
                    .fold(f64::INFINITY, f64::min);
                (
                    SetShape::LatticePoints { lattice: l.clone(), complement: false },
                    SetShape::LatticePoints { lattice: l.clone(), complement: true },
                    d,
                )
            } else {
                let zero_i = vec![0i64; dim];
                let blob = build_star(p, c, &zero, 0.75, &|z| round_to_lattice(z) == zero_i)?;
                let mut best = f64::INFINITY;
                for v in &candidates {
                    let shift: Vec<f64> = v.iter().map(|&k| k as f64).collect();
                    if norm(&shift) - 2.0 * blob.r_max >= best {
                        continue;
                    }
                    best = best.min(cloud_distance(&blob, &blob, &shift));
                }
                (
                    SetShape::LatticeBlobs { blob: blob.clone(), lattice: l.clone(), complement: false },
                    SetShape::LatticeBlobs { blob, lattice: l.clone(), complement: true },
                    best,
                )
            }
        }
        (LabelingRule::Sublattice(_), _) => {
            return Err(Error::param("labeling", "sublattice rule is only available for the pendulum family"));
        }
        (LabelingRule::NearestWell, _) | (LabelingRule::NearestAnchor { .. }, _) => {
            let (minus_anchors, plus_anchors) = match &rule {
                LabelingRule::NearestWell => {
                    let m = p.known_minima();
                    if m.len() < 2 {
                        return Err(Error::param("labeling", "nearest-well rule needs two known minima"));
                    }
                    (vec![m[0].clone()], vec![m[1].clone()])
                }
                LabelingRule::NearestAnchor { minus, plus } => {
                    if minus.is_empty() || plus.is_empty() {
                        return Err(Error::param("labeling", "each side needs at least one anchor"));
                    }
                    (minus.clone(), plus.clone())
                }
                _ => unreachable!(),
            };
            let mut all = minus_anchors.clone();
            all.extend(plus_anchors.iter().cloned());
            for a in &all {
                if p.value(a) > c + TOL_LEVEL {
                    return Err(Error::Geometry(format!(
                        "anchor {a:?} has V = {} > c = {c}; sublevel component empty",
                        p.value(a)
                    )));
                }
            }
            let point_like = all.iter().all(|a| {
                (p.value(a) - c).abs() <= TOL_LEVEL && p.gradient_norm(a) <= 1e-9
            });
            if point_like {
                let mut d = f64::INFINITY;
                for a in &minus_anchors {
                    for b in &plus_anchors {
                        d = d.min(dist(a, b));
                    }
                }
                (SetShape::Points(minus_anchors), SetShape::Points(plus_anchors), d)
            } else {
                let territory_of = |x: &[f64]| -> usize {
                    let mut best = 0;
                    let mut bd = f64::INFINITY;
                    for (i, a) in all.iter().enumerate() {
                        let d = dist(x, a);
                        if d < bd {
                            bd = d;
                            best = i;
                        }
                    }
                    best
                };
                let mut stars = Vec::new();
                for (i, a) in all.iter().enumerate() {
                    stars.push(build_star(p, c, a, radius, &|z| territory_of(z) == i)?);
                }
                let nm = minus_anchors.len();
                let zero = vec![0.0; dim];
                let mut d = f64::INFINITY;
                for a in &stars[..nm] {
                    for b in &stars[nm..] {
                        d = d.min(cloud_distance(a, b, &zero));
                    }
                }
                let plus_stars = stars.split_off(nm);
                (SetShape::Stars(stars), SetShape::Stars(plus_stars), d)
            }
        }
    };
    if !(distance > 1e-9) {
        return Err(Error::NoSplit {
            c,
            reason: format!("labeled components touch (sampled distance {distance:.3e})"),
        });
    }
    Ok(SublevelPartition {
        potential: p.clone(),
        c,
        rule,
        minus,
        plus,
        component_distance: distance,
        rho0: distance / 4.0,
        radius,
    })
}

/// Sampled estimate of `h_{r,C}`: the infimum of `V - c` over
/// `{|x| <= C, dist(x, V^c) >= r}`.
///
/// A grid scan locates the minimum, a finer local grid refines it, and a
/// first-order Lipschitz slack is subtracted so the value errs low.
pub fn margin_h(p: &Potential, part: &SublevelPartition, r: f64, big_c: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::param("r", "must be > 0"));
    }
    if !(big_c >= r) {
        return Err(Error::param("C", "must be >= r"));
    }
    let dim = p.dim();
    let c = part.level();
    let feasible = |x: &[f64]| norm(x) <= big_c && part.dist(x) >= r;

    let per_axis: usize = match dim {
        1 => 20_001,
        2 => 401,
        3 => 81,
        _ => 0,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |x: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        if feasible(&x) {
            let v = p.value(&x);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                *best = Some((v, x));
            }
        }
    };
    let h;
    if per_axis > 0 {
        h = 2.0 * big_c / (per_axis - 1) as f64;
        let total = per_axis.pow(dim as u32);
        for mut idx in 0..total {
            let mut x = vec![0.0; dim];
            for xi in x.iter_mut() {
                *xi = -big_c + h * (idx % per_axis) as f64;
                idx /= per_axis;
            }
            consider(x, &mut best);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 200_000;
        for _ in 0..n {
            consider(super::sample_ball(&mut rng, dim, big_c), &mut best);
        }
        h = big_c * (1.0 / n as f64).powf(1.0 / dim as f64) * 2.0;
    }
    let Some((_, x0)) = best.clone() else {
        return Err(Error::Geometry(format!(
            "no sampled point with |x| <= {big_c} at distance >= {r} from the sublevel set"
        )));
    };
    // local refinement on a grid 10x finer around the coarse minimizer
    let fine = h / 10.0;
    if dim <= 3 {
        let k = 10usize;
        let side = 2 * k + 1;
        for mut idx in 0..side.pow(dim as u32) {
            let mut x = x0.clone();
            for xi in x.iter_mut() {
                *xi += fine * ((idx % side) as f64 - k as f64);
                idx /= side;
            }
            consider(x, &mut best);
        }
    }
    let (vmin, xmin) = best.unwrap();
    let slack = 0.5 * fine * (dim as f64).sqrt() * p.gradient_norm(&xmin);
    let estimate = vmin - c - slack;
    if !(estimate > 0.0) {
        return Err(Error::Geometry(format!(
            "margin estimate {estimate:.3e} <= 0 (c not admissible or r too small)"
        )));
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_double_well, make_duffing, make_pendulum};
    use approx::assert_abs_diff_eq;

    #[test]
    fn double_well_at_zero_is_two_points() {
        let p = make_double_well(5.0, 2).unwrap();
        let part = build_partition(&p, 0.0, LabelingRule::NearestWell).unwrap();
        assert_abs_diff_eq!(part.component_distance(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(part.rho0(), 0.5, epsilon = 1e-15);
        assert_eq!(part.side_of(&[-1.0, 0.0]), Side::Minus);
        assert_eq!(part.side_of(&[1.0, 0.0]), Side::Plus);
        assert_eq!(part.side_of(&[0.0, 0.0]), Side::Above);
        assert_abs_diff_eq!(part.dist_minus(&[-1.0, 0.5]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn double_well_no_split_above_saddle() {
        let p = make_double_well(5.0, 2).unwrap();
        let err = build_partition(&p, 2.0, LabelingRule::NearestWell).unwrap_err();
        assert!(matches!(err, Error::NoSplit { .. }), "{err}");
        assert!(build_partition(&p, 1.0, LabelingRule::NearestWell).is_err());
    }

    #[test]
    fn double_well_positive_level() {
        let p = make_double_well(5.0, 2).unwrap();
        let part = build_partition(&p, 0.5, LabelingRule::NearestWell).unwrap();
        let xc = (1.0 - 0.5_f64.sqrt()).sqrt();
        // inner turning points bound the components along the axis
        assert_abs_diff_eq!(part.component_distance(), 2.0 * xc, epsilon = 1e-4);
        assert_abs_diff_eq!(part.dist_minus(&[-xc, 0.0]), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(part.dist_minus(&[-xc + 0.1, 0.0]), 0.1, epsilon = 1e-6);
        assert_eq!(part.side_of(&[-1.0, 0.1]), Side::Minus);
        assert_eq!(part.side_of(&[1.0, -0.1]), Side::Plus);
    }

    #[test]
    fn pendulum_sublattice_zero() {
        let p = make_pendulum(2).unwrap();
        let part = build_partition(&p, 0.0, LabelingRule::Sublattice(Lattice::zero(2))).unwrap();
        assert_abs_diff_eq!(part.component_distance(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(part.rho0(), 0.25, epsilon = 1e-15);
        assert_eq!(part.side_of(&[0.0, 0.0]), Side::Minus);
        assert_eq!(part.side_of(&[1.0, 0.0]), Side::Plus);
        assert_eq!(part.side_of(&[-3.0, 2.0]), Side::Plus);
        assert_abs_diff_eq!(part.dist_minus(&[2.0, 0.0]), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(part.dist_plus(&[0.25, 0.0]), 0.75, epsilon = 1e-15);
        assert_eq!(part.default_anchors().1, vec![1.0, 0.0]);
    }

    #[test]
    fn pendulum_positive_level_blobs() {
        let p = make_pendulum(2).unwrap();
        let part = build_partition(&p, 0.3, LabelingRule::Sublattice(Lattice::zero(2))).unwrap();
        let x0 = (1.0 - 0.3_f64).acos() / (2.0 * PI);
        assert_abs_diff_eq!(part.component_distance(), 1.0 - 2.0 * x0, epsilon = 1e-4);
        assert_abs_diff_eq!(part.dist_plus(&[0.5, 0.0]), 0.5 - x0, epsilon = 1e-7);
        assert_eq!(part.side_of(&[1.0 + 0.01, 0.02]), Side::Plus);
        assert!(build_partition(&p, 2.5, LabelingRule::Sublattice(Lattice::zero(2))).is_err());
    }

    #[test]
    fn pendulum_translation_equivariance() {
        let p = make_pendulum(2).unwrap();
        let l = Lattice::span(2, &[vec![1, 0]]);
        let part = build_partition(&p, 0.2, LabelingRule::Sublattice(l)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = crate::potential::sample_ball(&mut rng, 2, 2.0);
            let y = vec![x[0] + 3.0, x[1]];
            assert_eq!(part.side_of(&x), part.side_of(&y));
        }
    }

    #[test]
    fn duffing_radial() {
        let p = make_duffing(2).unwrap();
        let rule = LabelingRule::default_for(&p);
        let part = build_partition(&p, 0.0, rule.clone()).unwrap();
        assert_abs_diff_eq!(part.rho0(), 0.25, epsilon = 1e-15);
        assert_eq!(part.side_of(&[0.0, 0.0]), Side::Minus);
        assert_eq!(part.side_of(&[0.0, 1.2]), Side::Plus);
        assert_abs_diff_eq!(part.dist_plus(&[0.3, 0.4]), 0.5, epsilon = 1e-15);
        assert!(matches!(build_partition(&p, 0.3, rule).unwrap_err(), Error::NoSplit { .. }));
    }

    #[test]
    fn labels_never_overlap() {
        let p = make_double_well(5.0, 2).unwrap();
        let part = build_partition(&p, 0.3, LabelingRule::NearestWell).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let x = crate::potential::sample_ball(&mut rng, 2, 3.0);
            match part.side_of(&x) {
                Side::Minus => {
                    assert!(p.value(&x) <= 0.3 + TOL_LEVEL);
                    assert!(part.dist_minus(&x) < 1e-12);
                }
                Side::Plus => {
                    assert!(p.value(&x) <= 0.3 + TOL_LEVEL);
                    assert!(part.dist_plus(&x) < 1e-12);
                }
                Side::Above => {}
            }
        }
    }

    #[test]
    fn margin_examples() {
        let p = make_double_well(5.0, 1).unwrap();
        let part = build_partition(&p, 0.0, LabelingRule::NearestWell).unwrap();
        let h = margin_h(&p, &part, 0.5, 2.0).unwrap();
        assert_abs_diff_eq!(h, 0.5625, epsilon = 1e-3);
        assert!(h <= 0.5625 + 1e-12);

        let p = make_pendulum(1).unwrap();
        let part = build_partition(&p, 0.0, LabelingRule::Sublattice(Lattice::zero(1))).unwrap();
        let h = margin_h(&p, &part, 0.25, 1.0).unwrap();
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-3);

        assert!(matches!(margin_h(&p, &part, 0.9, 1.0), Err(Error::Geometry(_))));
    }

    #[test]
    fn margin_monotone_in_r() {
        let p = make_double_well(5.0, 2).unwrap();
        let part = build_partition(&p, 0.1, LabelingRule::NearestWell).unwrap();
        let mut last = 0.0;
        for r in [0.1, 0.2, 0.3, 0.4, 0.5] {
            let h = margin_h(&p, &part, r, 3.0).unwrap();
            assert!(h >= last - 1e-6, "r = {r}: {h} < {last}");
            last = h;
        }
    }
}
