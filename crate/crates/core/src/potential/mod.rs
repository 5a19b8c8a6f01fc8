//! Potentials `V : R^N -> R` with analytic gradients, the built-in
//! double-well / Duffing / pendulum families, and the sublevel-set partition.

mod partition;

pub(crate) use partition::newton_to_level;
pub use partition::{build_partition, lattice_candidates, margin_h, LabelingRule, SetShape, Side, StarComponent, SublevelPartition};

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vecops::norm;

/// A user supplied scalar field for the `custom` family.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

/// Family tag plus its parameters.
#[derive(Clone)]
pub enum Family {
    /// `(x1^2 - 1)^2 + kappa * sum_{i>=2} x_i^2`, wells at `(+-1, 0, ..., 0)`.
    DoubleWell { kappa: f64 },
    /// `|x|^2 (1 - |x|^2)`: strict minimum at 0, `{V > 0}` is the open unit ball.
    Duffing,
    /// `sum_i (1 - cos 2 pi x_i)`, zero exactly on the integer lattice.
    Pendulum,
    Custom(Arc<dyn ScalarField>),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::DoubleWell { kappa } => write!(f, "DoubleWell {{ kappa: {kappa} }}"),
            Family::Duffing => write!(f, "Duffing"),
            Family::Pendulum => write!(f, "Pendulum"),
            Family::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::DoubleWell { .. } => "double-well",
            Family::Duffing => "duffing",
            Family::Pendulum => "pendulum",
            Family::Custom(_) => "custom",
        }
    }
}

/// A potential on `R^dim`. Immutable after construction and cheap to clone.
#[derive(Clone, Debug)]
pub struct Potential {
    dim: usize,
    family: Family,
    known_minima: Vec<Vec<f64>>,
}

pub fn make_double_well(kappa: f64, dim: usize) -> Result<Potential> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::param("kappa", format!("must be > 0, got {kappa}")));
    }
    if dim < 1 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    let mut a_minus = vec![0.0; dim];
    let mut a_plus = vec![0.0; dim];
    a_minus[0] = -1.0;
    a_plus[0] = 1.0;
    Ok(Potential {
        dim,
        family: Family::DoubleWell { kappa },
        known_minima: vec![a_minus, a_plus],
    })
}

pub fn make_duffing(dim: usize) -> Result<Potential> {
    if dim < 1 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    Ok(Potential {
        dim,
        family: Family::Duffing,
        known_minima: vec![vec![0.0; dim]],
    })
}

pub fn make_pendulum(dim: usize) -> Result<Potential> {
    if dim < 1 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    Ok(Potential {
        dim,
        family: Family::Pendulum,
        known_minima: vec![vec![0.0; dim]],
    })
}

/// Wraps an arbitrary field. `known_minima` should list the zeros used as
/// anchors by the nearest-anchor labeling rule.
pub fn make_custom(
    dim: usize,
    field: Arc<dyn ScalarField>,
    known_minima: Vec<Vec<f64>>,
) -> Result<Potential> {
    if dim < 1 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    if known_minima.iter().any(|m| m.len() != dim) {
        return Err(Error::param("known_minima", "dimension mismatch"));
    }
    Ok(Potential {
        dim,
        family: Family::Custom(field),
        known_minima,
    })
}

impl Potential {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn known_minima(&self) -> &[Vec<f64>] {
        &self.known_minima
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.family {
            Family::DoubleWell { kappa } => {
                let a = x[0] * x[0] - 1.0;
                a * a + kappa * x[1..].iter().map(|y| y * y).sum::<f64>()
            }
            Family::Duffing => {
                let r2: f64 = x.iter().map(|y| y * y).sum();
                r2 * (1.0 - r2)
            }
            Family::Pendulum => x.iter().map(|y| 1.0 - (2.0 * PI * y).cos()).sum(),
            Family::Custom(f) => f.value(x),
        }
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::DoubleWell { kappa } => {
                out[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
                for i in 1..x.len() {
                    out[i] = 2.0 * kappa * x[i];
                }
            }
            Family::Duffing => {
                let r2: f64 = x.iter().map(|y| y * y).sum();
                let s = 2.0 * (1.0 - 2.0 * r2);
                for i in 0..x.len() {
                    out[i] = s * x[i];
                }
            }
            Family::Pendulum => {
                for i in 0..x.len() {
                    out[i] = 2.0 * PI * (2.0 * PI * x[i]).sin();
                }
            }
            Family::Custom(f) => f.gradient(x, out),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn gradient_norm(&self, x: &[f64]) -> f64 {
        norm(&self.gradient(x))
    }

    /// Typical gradient magnitude; scales the criticality tolerance.
    pub fn gradient_scale(&self) -> f64 {
        match self.family {
            Family::Pendulum => 2.0 * PI,
            _ => 1.0,
        }
    }

    /// Rough Hessian magnitude near the minima, used to shift preconditioners.
    pub fn curvature_scale(&self) -> f64 {
        match &self.family {
            Family::DoubleWell { kappa } => 8.0_f64.max(2.0 * kappa),
            Family::Duffing => 2.0,
            Family::Pendulum => 4.0 * PI * PI,
            Family::Custom(_) => 1.0,
        }
    }

    /// Default coercivity radius R.
    pub fn default_radius(&self) -> f64 {
        match self.family {
            Family::DoubleWell { .. } => 3.0,
            Family::Duffing => 1.5,
            // corner of the default search box [-1.5, 2.5]^N
            Family::Pendulum => 2.5 * (self.dim as f64).sqrt(),
            Family::Custom(_) => 3.0,
        }
    }

    /// Worst relative mismatch between central differences of `value` and
    /// `gradient` at the given points, `|fd - g| / (1 + |g|)`.
    pub fn gradient_check(&self, points: &[Vec<f64>], step: f64) -> f64 {
        let mut worst = 0.0_f64;
        let mut x = vec![0.0; self.dim];
        for p in points {
            let g = self.gradient(p);
            let scale = 1.0 + norm(&g);
            let mut err2 = 0.0;
            for i in 0..self.dim {
                x.copy_from_slice(p);
                let h = step * (1.0 + p[i].abs());
                x[i] = p[i] + h;
                let fp = self.value(&x);
                x[i] = p[i] - h;
                let fm = self.value(&x);
                let fd = (fp - fm) / (2.0 * h);
                err2 += (fd - g[i]).powi(2);
            }
            worst = worst.max(err2.sqrt() / scale);
        }
        worst
    }

    /// Sampled checks of the family hypotheses inside `B_radius(0)`.
    ///
    /// Fails with a `Geometry` error naming the first violated property.
    pub fn validate_family(&self, radius: f64, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..samples)
            .map(|_| sample_ball(&mut rng, self.dim, radius))
            .collect();
        let fd = self.gradient_check(&pts, 1e-5);
        if fd > 1e-5 {
            return Err(Error::Geometry(format!("gradient inconsistent with value: {fd:.3e}")));
        }
        match &self.family {
            Family::DoubleWell { .. } => {
                for m in &self.known_minima {
                    if self.value(m).abs() > 1e-14 {
                        return Err(Error::Geometry("V != 0 at a well".into()));
                    }
                }
                for p in &pts {
                    let near = self
                        .known_minima
                        .iter()
                        .any(|m| crate::vecops::dist(p, m) < 1e-9);
                    if !near && self.value(p) <= 0.0 {
                        return Err(Error::Geometry("V <= 0 away from the wells".into()));
                    }
                }
                // V stays above a positive constant outside B_2
                let outside = (0..samples)
                    .map(|_| {
                        let mut u = sample_sphere(&mut rng, self.dim);
                        let r = 2.0 + 8.0 * rng.gen::<f64>();
                        u.iter_mut().for_each(|v| *v *= r);
                        self.value(&u)
                    })
                    .fold(f64::INFINITY, f64::min);
                if !(outside > 0.0) {
                    return Err(Error::Geometry("V not bounded below at infinity".into()));
                }
            }
            Family::Duffing => {
                let origin = vec![0.0; self.dim];
                if self.value(&origin) != 0.0 {
                    return Err(Error::Geometry("V(0) != 0".into()));
                }
                for p in &pts {
                    let r = norm(p);
                    let v = self.value(p);
                    if r > 1e-9 && r < 1.0 - 1e-9 && v <= 0.0 {
                        return Err(Error::Geometry("V <= 0 in the punctured ball".into()));
                    }
                    if r > 1.0 + 1e-9 && v > 0.0 {
                        return Err(Error::Geometry("{V > 0} not inside the unit ball".into()));
                    }
                }
                for _ in 0..samples {
                    let u = sample_sphere(&mut rng, self.dim);
                    if self.gradient_norm(&u) <= 1e-8 {
                        return Err(Error::Geometry("grad V vanishes on the boundary shell".into()));
                    }
                }
            }
            Family::Pendulum => {
                for p in &pts {
                    let v = self.value(p);
                    for i in 0..self.dim {
                        let mut q = p.clone();
                        q[i] += 1.0;
                        if (self.value(&q) - v).abs() > 1e-12 * (1.0 + v.abs()) {
                            return Err(Error::Geometry("V not Z^N periodic".into()));
                        }
                    }
                    let off_lattice = p.iter().any(|y| (y - y.round()).abs() > 1e-9);
                    if v < 0.0 || (off_lattice && v <= 0.0) {
                        return Err(Error::Geometry("V has a zero off the lattice".into()));
                    }
                }
            }
            Family::Custom(_) => {}
        }
        Ok(())
    }
}

pub(crate) fn sample_sphere<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                // Box-Muller; keeps the dependency list short
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            })
            .collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub(crate) fn sample_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let u = sample_sphere(rng, dim);
    let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
    u.into_iter().map(|x| x * r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn double_well_values() {
        let p = make_double_well(5.0, 2).unwrap();
        assert_eq!(p.value(&[1.0, 0.0]), 0.0);
        assert_eq!(p.gradient(&[-1.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(p.value(&[0.0, 0.0]), 1.0);
        assert_eq!(p.known_minima().len(), 2);
    }

    #[test]
    fn duffing_values() {
        let p = make_duffing(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(p.value(&[s, s]), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.value(&[0.5, 0.5]), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p.gradient_norm(&[s, s]), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.gradient_norm(&[0.0, -1.0]), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn pendulum_values() {
        let p = make_pendulum(2).unwrap();
        assert_abs_diff_eq!(p.value(&[3.0, -2.0]), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.value(&[0.5, 0.0]), 2.0, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = sample_ball(&mut rng, 2, 3.0);
            let y = vec![x[0] + 1.0, x[1]];
            assert_abs_diff_eq!(p.value(&x), p.value(&y), epsilon = 1e-13);
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(make_double_well(0.0, 2), Err(Error::Parameter { name: "kappa", .. })));
        assert!(matches!(make_double_well(-1.0, 2), Err(Error::Parameter { .. })));
        assert!(matches!(make_double_well(5.0, 0), Err(Error::Parameter { name: "dim", .. })));
        assert!(make_duffing(0).is_err());
        assert!(make_pendulum(0).is_err());
    }

    #[test]
    fn family_suites_pass() {
        for dim in 1..=3 {
            make_double_well(5.0, dim).unwrap().validate_family(3.0, 100, 1).unwrap();
            make_duffing(dim).unwrap().validate_family(1.5, 100, 2).unwrap();
            make_pendulum(dim).unwrap().validate_family(3.0, 100, 3).unwrap();
        }
    }

    #[test]
    fn gradient_consistency_on_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [
            make_double_well(5.0, 2).unwrap(),
            make_duffing(2).unwrap(),
            make_pendulum(2).unwrap(),
        ] {
            let pts: Vec<_> = (0..100).map(|_| sample_ball(&mut rng, 2, p.default_radius())).collect();
            assert!(p.gradient_check(&pts, 1e-5) <= 1e-5, "{:?}", p.family());
        }
    }

    #[test]
    fn broken_gradient_is_caught() {
        struct Wrong;
        impl ScalarField for Wrong {
            fn value(&self, x: &[f64]) -> f64 {
                x[0] * x[0]
            }
            fn gradient(&self, x: &[f64], out: &mut [f64]) {
                out[0] = x[0];
            }
        }
        let p = make_custom(1, Arc::new(Wrong), vec![vec![0.0]]).unwrap();
        assert!(p.validate_family(1.0, 20, 0).is_err());
    }
}
