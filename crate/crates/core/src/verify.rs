//! Independent checks on computed orbits.
//!
//! Velocities and accelerations come from centered differences of the
//! nodes, and shooting uses its own velocity-Verlet integrator; nothing here
//! calls into the solver or its gradient.

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::action::{action, action_between, DiscretePath};
use crate::classify::{ConnectingOrbit, OrbitClass};
use crate::error::{Error, Result};
use crate::potential::{Potential, SublevelPartition};
use crate::vecops::{dist, norm};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub energy: f64,
    /// Bound on `|K - U| / max(J, 1)`.
    pub equip: f64,
    pub el: f64,
    pub shoot: f64,
    pub drift: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { energy: 1e-3, equip: 1e-4, el: 1e-3, shoot: 5e-3, drift: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub thresholds: Thresholds,
    pub subintervals: usize,
    pub seed: u64,
    /// Step of the shooting integrator.
    pub dt: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { thresholds: Thresholds::default(), subintervals: 8, seed: 0, dt: 1e-4 }
    }
}

impl VerifyConfig {
    /// Default settings with the shooting step shrunk for stiff wells, so the
    /// Verlet drift, which grows like `(dt omega)^2`, stays under threshold.
    pub fn for_potential(p: &Potential) -> VerifyConfig {
        let dt = 1e-4 * (10.0 / p.curvature_scale()).min(1.0);
        VerifyConfig { dt, ..VerifyConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub class: String,
    pub energy_dev: f64,
    pub equip_res: f64,
    pub el_res: f64,
    pub symmetry_res: f64,
    /// Brake orbits only.
    pub shoot_pos_err: Option<f64>,
    pub shoot_vel_err: Option<f64>,
    pub energy_drift: Option<f64>,
    pub passed: Checks,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checks {
    pub energy: bool,
    pub equip: bool,
    pub el: bool,
    pub shoot: Option<bool>,
    pub drift: Option<bool>,
}

impl Checks {
    pub fn all(&self) -> bool {
        self.energy && self.equip && self.el && self.shoot.unwrap_or(true) && self.drift.unwrap_or(true)
    }
}

/// Centered-difference velocity at interior node `k`.
fn velocity(path: &DiscretePath, k: usize) -> Vec<f64> {
    let t = path.times();
    let h = t[k + 1] - t[k - 1];
    path.point(k + 1).iter().zip(path.point(k - 1)).map(|(a, b)| (a - b) / h).collect()
}

/// Largest `|1/2 |q'|^2 - V(q) + c|` over interior nodes.
pub fn energy_profile(path: &DiscretePath, p: &Potential, c: f64) -> Result<f64> {
    let n = path.n_nodes();
    if n < 3 {
        return Err(Error::Input("energy profile needs at least 3 nodes".into()));
    }
    Ok((1..n - 1)
        .map(|k| {
            let v = velocity(path, k);
            (0.5 * crate::vecops::dot(&v, &v) - p.value(path.point(k)) + c).abs()
        })
        .fold(0.0, f64::max))
}

/// Observed order of a quantity that should scale like `dt^q` when the
/// grid is refined by `ratio`.
pub fn observed_order(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (coarse / fine).ln() / ratio.ln()
}

/// `|K - U|` on the nodes inside `[t0, t1]`.
pub fn equipartition(path: &DiscretePath, p: &Potential, c: f64, interval: (f64, f64)) -> Result<f64> {
    let t = path.times();
    let (t0, t1) = interval;
    let slack = 1e-12 * (1.0 + t[t.len() - 1].abs().max(t[0].abs()));
    if !(t0 < t1) || t0 < t[0] - slack || t1 > t[t.len() - 1] + slack {
        return Err(Error::Input(format!(
            "interval [{t0}, {t1}] is not inside the connecting interval [{}, {}]",
            t[0],
            t[t.len() - 1]
        )));
    }
    let i = t.partition_point(|&s| s < t0 - slack);
    let j = t.partition_point(|&s| s <= t1 + slack).saturating_sub(1);
    if j <= i {
        return Ok(0.0);
    }
    let b = action_between(path, p, c, i, j)?;
    Ok((b.kinetic - b.potential_excess).abs())
}

/// Largest `|q'' - grad V(q)|` over interior nodes, with the three-point
/// second difference (non-uniform grids allowed).
pub fn el_res(path: &DiscretePath, p: &Potential) -> f64 {
    let n = path.n_nodes();
    let t = path.times();
    let mut g = vec![0.0; path.dim()];
    let mut worst: f64 = 0.0;
    for k in 1..n.saturating_sub(1) {
        let (hm, hp) = (t[k] - t[k - 1], t[k + 1] - t[k]);
        p.gradient_into(path.point(k), &mut g);
        let (a, b, x) = (path.point(k - 1), path.point(k + 1), path.point(k));
        let r: f64 = (0..path.dim())
            .map(|i| {
                let acc = 2.0 * ((b[i] - x[i]) / hp - (x[i] - a[i]) / hm) / (hp + hm);
                (acc - g[i]).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    worst
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// `max |E(t) - E(0)|` with `E = 1/2 |v|^2 - V(q)`.
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn last_position(&self) -> &[f64] {
        self.positions.last().expect("non-empty trajectory")
    }
    pub fn last_velocity(&self) -> &[f64] {
        self.velocities.last().expect("non-empty trajectory")
    }
}

/// Velocity Verlet for `q'' = grad V(q)` over `[0, t_span]`. The step is
/// shrunk slightly so that the last step lands on `t_span`.
pub fn shoot(p: &Potential, x0: &[f64], v0: &[f64], t_span: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_span > 0.0) {
        return Err(Error::param("dt", "dt and the time span must be > 0"));
    }
    if x0.len() != p.dim() || v0.len() != p.dim() {
        return Err(Error::Input("initial state dimension does not match the potential".into()));
    }
    let steps = (t_span / dt).ceil().max(1.0) as usize;
    let h = t_span / steps as f64;
    let energy = |x: &[f64], v: &[f64]| 0.5 * crate::vecops::dot(v, v) - p.value(x);
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut a = p.gradient(&x);
    let e0 = energy(&x, &v);
    let mut drift: f64 = 0.0;
    let mut times = vec![0.0];
    let mut positions = vec![x.clone()];
    let mut velocities = vec![v.clone()];
    for s in 1..=steps {
        for i in 0..x.len() {
            v[i] += 0.5 * h * a[i];
            x[i] += h * v[i];
        }
        a = p.gradient(&x);
        for i in 0..x.len() {
            v[i] += 0.5 * h * a[i];
        }
        let e = energy(&x, &v);
        if !e.is_finite() || x.iter().chain(&v).any(|z| !z.is_finite()) {
            return Err(Error::BlowUp { t_last: (s - 1) as f64 * h });
        }
        drift = drift.max((e - e0).abs());
        times.push(s as f64 * h);
        positions.push(x.clone());
        velocities.push(v.clone());
    }
    Ok(Trajectory { times, positions, velocities, energy_drift: drift })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BrakeCrosscheck {
    pub pos_err: f64,
    pub vel_err: f64,
    pub energy_drift: f64,
}

/// Shoots from `(q(sigma), 0)` for `tau - sigma` and compares with
/// `(q(tau), 0)`.
pub fn crosscheck_brake(orbit: &ConnectingOrbit, p: &Potential, dt: f64) -> Result<BrakeCrosscheck> {
    let OrbitClass::Brake { sigma, tau, .. } = orbit.class.class else {
        return Err(Error::Precondition(format!("shooting check needs a brake orbit, got {}", orbit.class.class.name())));
    };
    let start = orbit.sample(sigma);
    let target = orbit.sample(tau);
    let traj = shoot(p, &start, &vec![0.0; p.dim()], tau - sigma, dt)?;
    Ok(BrakeCrosscheck {
        pos_err: dist(traj.last_position(), &target),
        vel_err: norm(traj.last_velocity()),
        energy_drift: traj.energy_drift,
    })
}

/// `|K - U| / max(J, 1)` over the whole path and over `count` random
/// subintervals (worst case).
pub fn equip_res(path: &DiscretePath, p: &Potential, c: f64, count: usize, seed: u64) -> Result<f64> {
    let total = action(path, p, c)?.total;
    let scale = total.abs().max(1.0);
    let t = path.times();
    let (a, b) = (t[0], t[t.len() - 1]);
    let mut worst = equipartition(path, p, c, (a, b))? / scale;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let u: f64 = rng.gen_range(a..b);
        let w: f64 = rng.gen_range(a..b);
        if u != w {
            worst = worst.max(equipartition(path, p, c, (u.min(w), u.max(w)))? / scale);
        }
    }
    Ok(worst)
}

/// Largest reflection (and, for brake orbits, periodicity) mismatch of the
/// whole-line sampler over seeded offsets.
pub fn symmetry_res(orbit: &ConnectingOrbit, seed: u64) -> f64 {
    let (sigma, span, period) = match orbit.class.class {
        OrbitClass::Brake { sigma, tau, period } => (sigma, tau - sigma, Some(period)),
        OrbitClass::Homoclinic { sigma, .. } => {
            let g = orbit.base.grid();
            (sigma, g.t_plus() - g.t_minus(), None)
        }
        _ => return 0.0,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..64 {
        let s: f64 = rng.gen_range(0.0..2.0 * span);
        let x = orbit.sample(sigma + s);
        worst = worst.max(dist(&x, &orbit.sample(sigma - s)));
        if let Some(per) = period {
            worst = worst.max(dist(&x, &orbit.sample(sigma + s + per)));
        }
    }
    worst
}

/// All checks that apply to the orbit's class, on its connecting interval.
pub fn full_report(orbit: &ConnectingOrbit, p: &Potential, cfg: &VerifyConfig) -> VerificationReport {
    let mut report = path_report(&orbit.base, p, orbit.c, cfg, orbit.class.class.name());
    report.symmetry_res = symmetry_res(orbit, cfg.seed);
    if matches!(orbit.class.class, OrbitClass::Brake { .. }) {
        let th = &cfg.thresholds;
        match crosscheck_brake(orbit, p, cfg.dt) {
            Ok(x) => {
                report.shoot_pos_err = Some(x.pos_err);
                report.shoot_vel_err = Some(x.vel_err);
                report.energy_drift = Some(x.energy_drift);
                report.passed.shoot = Some(x.pos_err <= th.shoot && x.vel_err <= th.shoot);
                report.passed.drift = Some(x.energy_drift <= th.drift);
            }
            Err(e) => {
                log::warn!("shooting check failed: {e}");
                report.passed.shoot = Some(false);
                report.passed.drift = Some(false);
            }
        }
    }
    report
}

/// Classifies `path` first; paths that cannot be classified get the
/// path-level checks only and class "unknown".
pub fn report_path(path: &DiscretePath, p: &Potential, part: &SublevelPartition, cfg: &VerifyConfig) -> VerificationReport {
    match ConnectingOrbit::build(path, p, part) {
        Ok(orbit) => full_report(&orbit, p, cfg),
        Err(e) => {
            log::info!("path not classified: {e}");
            path_report(path, p, part.level(), cfg, "unknown")
        }
    }
}

fn path_report(path: &DiscretePath, p: &Potential, c: f64, cfg: &VerifyConfig, class: &str) -> VerificationReport {
    let th = &cfg.thresholds;
    let energy_dev = energy_profile(path, p, c).unwrap_or(f64::INFINITY);
    let equip = equip_res(path, p, c, cfg.subintervals, cfg.seed).unwrap_or(f64::INFINITY);
    let el = el_res(path, p);
    VerificationReport {
        class: class.to_string(),
        energy_dev,
        equip_res: equip,
        el_res: el,
        symmetry_res: 0.0,
        shoot_pos_err: None,
        shoot_vel_err: None,
        energy_drift: None,
        passed: Checks {
            energy: energy_dev <= th.energy,
            equip: equip <= th.equip,
            el: el <= th.el,
            shoot: None,
            drift: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::TimeGrid;
    use crate::potential::{make_double_well, make_pendulum};
    use std::f64::consts::PI;

    fn kink(n: usize, t: f64) -> DiscretePath {
        let grid = TimeGrid::uniform(-t, t, n).unwrap();
        let pts: Vec<Vec<f64>> = grid.nodes().iter().map(|&s| vec![2.0 / PI * (2.0 * PI * s).exp().atan()]).collect();
        DiscretePath::from_points(grid, &pts).unwrap()
    }

    #[test]
    fn exact_kink_conserves_energy() {
        let p = make_pendulum(1).unwrap();
        let coarse = energy_profile(&kink(4001, 4.0), &p, 0.0).unwrap();
        let fine = energy_profile(&kink(8001, 4.0), &p, 0.0).unwrap();
        assert!(fine <= 1e-4, "{fine}");
        assert!(observed_order(coarse, fine, 2.0) > 1.8);
    }

    #[test]
    fn constant_path_at_a_well() {
        let p = make_double_well(5.0, 2).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 11).unwrap();
        let path = DiscretePath::straight(grid, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(energy_profile(&path, &p, 0.0).unwrap(), 0.0);
        assert_eq!(el_res(&path, &p), 0.0);
        assert_eq!(equip_res(&path, &p, 0.0, 8, 0).unwrap(), 0.0);
    }

    #[test]
    fn straight_line_is_not_equipartitioned() {
        // x from -1 to 1 in unit time: K = 2, U = 8/15
        let p = make_double_well(5.0, 1).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 20001).unwrap();
        let path = DiscretePath::straight(grid, &[-1.0], &[1.0]).unwrap();
        let r = equipartition(&path, &p, 0.0, (0.0, 1.0)).unwrap();
        assert!((r - (2.0 - 8.0 / 15.0)).abs() < 1e-6, "{r}");
        assert!(equipartition(&path, &p, 0.0, (-0.5, 1.0)).is_err());
    }

    #[test]
    fn shooting_stays_at_a_critical_point() {
        let p = make_pendulum(1).unwrap();
        let tr = shoot(&p, &[0.5], &[0.0], 2.0, 1e-3).unwrap();
        assert!((tr.last_position()[0] - 0.5).abs() < 1e-14);
        assert!(tr.energy_drift < 1e-14);
    }

    #[test]
    fn double_well_turning_points() {
        let p = make_double_well(5.0, 1).unwrap();
        let x0 = (1.0 - 0.5f64.sqrt()).sqrt();
        let tr = shoot(&p, &[x0], &[0.0], 1.7811503961193502, 1e-4).unwrap();
        assert!((tr.last_position()[0] + x0).abs() < 1e-6);
        assert!(tr.last_velocity()[0].abs() < 1e-6);
        assert!(tr.energy_drift < 1e-8, "{}", tr.energy_drift);
    }

    #[test]
    fn shooting_is_reversible() {
        let p = make_double_well(5.0, 2).unwrap();
        let fwd = shoot(&p, &[0.2, 0.01], &[0.3, -0.1], 1.0, 1e-3).unwrap();
        let v: Vec<f64> = fwd.last_velocity().iter().map(|x| -x).collect();
        let back = shoot(&p, fwd.last_position(), &v, 1.0, 1e-3).unwrap();
        assert!(dist(back.last_position(), &[0.2, 0.01]) < 1e-8);
    }

    #[test]
    fn runaway_is_a_blow_up() {
        let p = make_double_well(5.0, 1).unwrap();
        assert!(matches!(shoot(&p, &[3.0], &[10.0], 100.0, 1e-2), Err(Error::BlowUp { .. })));
    }
}
