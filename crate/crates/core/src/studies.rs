//! End-to-end experiments: one family at one level, the `c -> 0` ladder,
//! and the lattice-multiplicity procedure for the pendulum.

use rayon::prelude::*;
use serde::Serialize;

use crate::action::DiscretePath;
use crate::classify::{ConnectingOrbit, OrbitClass};
use crate::error::{Error, Result};
use crate::lattice::{round_to_lattice, Lattice};
use crate::potential::{build_partition, lattice_candidates, Family, LabelingRule, Potential, SublevelPartition};
use crate::solve::{crossing_time, hausdorff, minimize_jacobi, minimize_time_domain, MinimizerResult, SolverConfig};
use crate::vecops::dist;
use crate::verify::{full_report, VerificationReport, VerifyConfig};

/// Everything `run_family` produces for one level.
#[derive(Clone, Debug)]
pub struct FamilyRun {
    pub c: f64,
    pub orbit: ConnectingOrbit,
    pub report: VerificationReport,
    /// Homoclinic orbits report the action of the full (reflected) orbit,
    /// the other classes the action over the connecting interval.
    pub m_c: f64,
    pub time_domain: MinimizerResult,
    pub jacobi: MinimizerResult,
    pub agreement: SolverAgreement,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverAgreement {
    pub time_domain_value: f64,
    pub jacobi_value: f64,
    pub relative_gap: f64,
    pub hausdorff: f64,
}

/// Partition, both solvers, classification of the time-domain minimizer and
/// verification, at level `c`.
pub fn run_family(p: &Potential, c: f64, cfg: &SolverConfig, vcfg: &VerifyConfig) -> Result<FamilyRun> {
    let part = build_partition(p, c, LabelingRule::default_for(p))?;
    run_on_partition(p, &part, cfg, vcfg)
}

pub fn run_on_partition(
    p: &Potential,
    part: &SublevelPartition,
    cfg: &SolverConfig,
    vcfg: &VerifyConfig,
) -> Result<FamilyRun> {
    let c = part.level();
    let td = minimize_time_domain(p, part, c, cfg)?;
    let jc = minimize_jacobi(p, part, c, cfg)?;
    if !td.converged {
        log::warn!("time-domain solve at c = {c} stopped at |g| = {:.2e}", td.grad_norm);
    }
    let orbit = ConnectingOrbit::build(&td.path, p, part)?;
    let report = full_report(&orbit, p, vcfg);
    let m_c = match orbit.class.class {
        OrbitClass::Homoclinic { .. } => orbit.full_action(p)?,
        _ => td.value,
    };
    let agreement = SolverAgreement {
        time_domain_value: td.value,
        jacobi_value: jc.value,
        relative_gap: (td.value - jc.value).abs() / td.value.abs().max(f64::MIN_POSITIVE),
        hausdorff: hausdorff(&td.path, &jc.path, 1e-2),
    };
    Ok(FamilyRun { c, orbit, report, m_c, time_domain: td, jacobi: jc, agreement })
}

/// Ladder of levels decreasing to the limit `c = 0`.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    /// Strictly decreasing positive levels; the `c = 0` limit is solved
    /// separately.
    pub c_sequence: Vec<f64>,
    /// Comparison window `[-W, W]` after translation normalization.
    pub window: f64,
    /// Sampling step on the comparison window.
    pub sample_step: f64,
    /// Allowed growth between consecutive distances.
    pub slack: f64,
    pub solver: SolverConfig,
    pub verify: VerifyConfig,
}

impl SweepConfig {
    pub fn double_well_ladder(p: &Potential) -> SweepConfig {
        SweepConfig {
            c_sequence: vec![0.2, 0.1, 0.05, 0.025],
            window: 3.0,
            sample_step: 1e-2,
            slack: 0.1,
            solver: SolverConfig { segments: 2048, ..SolverConfig::for_family(p) },
            verify: VerifyConfig::for_potential(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_sequence.is_empty() {
            return Err(Error::param("c_sequence", "must not be empty"));
        }
        if self.c_sequence.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::param("c_sequence", "levels must be finite and > 0"));
        }
        if self.c_sequence.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param("c_sequence", "must be strictly decreasing"));
        }
        if !(self.window > 0.0) || !(self.sample_step > 0.0) || !(self.slack >= 0.0) {
            return Err(Error::param("window", "window, sample_step must be > 0 and slack >= 0"));
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub c: f64,
    pub m_c: Option<f64>,
    pub class: Option<String>,
    /// Sup over the window of the position difference to the limit orbit.
    pub position_distance: Option<f64>,
    pub velocity_distance: Option<f64>,
    pub verified: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub family: String,
    pub window: f64,
    /// `rho0` of the `c = 0` partition, used to fix translations.
    pub rho0: f64,
    pub limit_value: f64,
    pub limit_class: String,
    pub rows: Vec<SweepRow>,
    /// Distances nonincreasing up to the configured slack.
    pub monotone: bool,
    /// `|m_c - m_0| / m_0` at the last rung that solved.
    pub last_gap: Option<f64>,
    #[serde(skip)]
    pub orbits: Vec<Option<FamilyRun>>,
    #[serde(skip)]
    pub limit: Option<FamilyRun>,
}

/// Solves the limit orbit and every rung (concurrently), normalizes
/// translations with the `c = 0` partition and reports the distance ladder.
/// A rung that fails is recorded and the study continues.
pub fn sweep_and_converge(p: &Potential, cfg: &SweepConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let part0 = build_partition(p, 0.0, LabelingRule::default_for(p))?;
    let limit = run_on_partition(p, &part0, &cfg.solver, &cfg.verify)?;
    let t0 = orbit_crossing(&limit.orbit, &part0)?;
    let runs: Vec<Result<FamilyRun>> =
        cfg.c_sequence.par_iter().map(|&c| run_family(p, c, &cfg.solver, &cfg.verify)).collect();

    let mut rows = Vec::with_capacity(runs.len());
    let mut orbits = Vec::with_capacity(runs.len());
    for (&c, run) in cfg.c_sequence.iter().zip(runs) {
        let row = match &run {
            Ok(r) => match orbit_crossing(&r.orbit, &part0) {
                Ok(tc) => {
                    let (dq, dv) = orbit_distance(&r.orbit, tc, &limit.orbit, t0, cfg.window, cfg.sample_step);
                    SweepRow {
                        c,
                        m_c: Some(r.m_c),
                        class: Some(r.orbit.class.class.name().into()),
                        position_distance: Some(dq),
                        velocity_distance: Some(dv),
                        verified: Some(r.report.passed.all()),
                        error: None,
                    }
                }
                Err(e) => failed_row(c, Some(r), &e),
            },
            Err(e) => failed_row(c, None, e),
        };
        rows.push(row);
        orbits.push(run.ok());
    }
    let d: Vec<f64> = rows.iter().filter_map(|r| r.position_distance).collect();
    let monotone = d.len() == rows.len() && d.windows(2).all(|w| w[1] <= (1.0 + cfg.slack) * w[0]);
    let last_gap = rows.iter().rev().find_map(|r| r.m_c).map(|m| (m - limit.m_c).abs() / limit.m_c);
    Ok(ConvergenceStudy {
        family: p.family().name().into(),
        window: cfg.window,
        rho0: part0.rho0(),
        limit_value: limit.m_c,
        limit_class: limit.orbit.class.class.name().into(),
        rows,
        monotone,
        last_gap,
        orbits,
        limit: Some(limit),
    })
}

fn failed_row(c: f64, run: Option<&FamilyRun>, e: &Error) -> SweepRow {
    SweepRow {
        c,
        m_c: run.map(|r| r.m_c),
        class: run.map(|r| r.orbit.class.class.name().into()),
        position_distance: None,
        velocity_distance: None,
        verified: run.map(|r| r.report.passed.all()),
        error: Some(format!("{}: {e}", e.stage())),
    }
}

/// First time the orbit's base reaches distance `rho0` from the `c = 0` sets.
fn orbit_crossing(orbit: &ConnectingOrbit, part0: &SublevelPartition) -> Result<f64> {
    crossing_time(&orbit.base, |x| part0.dist(x), part0.rho0())
}

/// Sup distances of positions and centered-difference velocities between
/// two whole-line orbits, each shifted by its crossing time.
pub fn orbit_distance(a: &ConnectingOrbit, ta: f64, b: &ConnectingOrbit, tb: f64, window: f64, step: f64) -> (f64, f64) {
    let n = (2.0 * window / step).round() as usize;
    let h = 0.5 * step;
    let (mut dq, mut dv) = (0.0_f64, 0.0_f64);
    for k in 0..=n {
        let s = -window + k as f64 * step;
        dq = dq.max(dist(&a.sample(ta + s), &b.sample(tb + s)));
        let va = diff(&a.sample(ta + s + h), &a.sample(ta + s - h), 2.0 * h);
        let vb = diff(&b.sample(tb + s + h), &b.sample(tb + s - h), 2.0 * h);
        dv = dv.max(dist(&va, &vb));
    }
    (dq, dv)
}

fn diff(a: &[f64], b: &[f64], h: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y) / h).collect()
}

/// One generator found by the multiplicity procedure.
#[derive(Clone, Debug, Serialize)]
pub struct GeneratorOrbit {
    pub xi: Vec<i64>,
    /// The lattice target the solve was seeded toward.
    pub target: Vec<i64>,
    pub value: f64,
    pub class: String,
    /// `|q(end) - q(start)|` of the minimizer.
    pub displacement: f64,
    pub report: VerificationReport,
    #[serde(skip)]
    pub path: DiscretePath,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplicityResult {
    pub c: f64,
    pub generators: Vec<Vec<i64>>,
    pub orbits: Vec<GeneratorOrbit>,
    /// Integer span of the generators is all of `Z^N`.
    pub spans: bool,
    /// `[Z^N : span]` when the span has full rank.
    pub index: Option<i64>,
    pub max_displacement: f64,
}

/// Candidate directions are ranked by the Jacobi value reached toward
/// them; values within this relative gap count as ties.
const TIE_GAP: f64 = 1e-6;

/// Grows a sublattice of `Z^N` one minimizer at a time: solve between the
/// current sublattice and its complement, read off the lattice displacement
/// the minimizer achieves, and add it as a generator, until the generators
/// span `Z^N` or `max_generators` is reached.
pub fn pendulum_multiplicity(
    p: &Potential,
    c: f64,
    max_generators: usize,
    cfg: &SolverConfig,
    vcfg: &VerifyConfig,
) -> Result<MultiplicityResult> {
    if !matches!(p.family(), Family::Pendulum) {
        return Err(Error::Precondition("multiplicity applies to the pendulum family".into()));
    }
    if max_generators == 0 {
        return Err(Error::param("max_generators", "must be >= 1"));
    }
    let dim = p.dim();
    let mut lattice = Lattice::zero(dim);
    let mut generators: Vec<Vec<i64>> = Vec::new();
    let mut orbits = Vec::new();
    while !lattice.is_full() && generators.len() < max_generators {
        let part = build_partition(p, c, LabelingRule::Sublattice(lattice.clone()))?;
        let target = best_direction(p, &part, c, cfg)?;
        let mut solve_cfg = cfg.clone();
        solve_cfg.anchors = Some((vec![0.0; dim], target.iter().map(|&k| k as f64).collect()));
        let run = run_on_partition(p, &part, &solve_cfg, vcfg)?;
        let path = &run.time_domain.path;
        let xi: Vec<i64> = round_to_lattice(path.last()).iter().zip(round_to_lattice(path.first())).map(|(a, b)| a - b).collect();
        if lattice.contains(&xi) {
            return Err(Error::Stagnation(format!(
                "minimizer toward {target:?} ended at displacement {xi:?}, already in the sublattice"
            )));
        }
        log::info!("generator {} = {xi:?} (value {:.6})", generators.len() + 1, run.m_c);
        generators.push(xi.clone());
        lattice = Lattice::span(dim, &generators);
        orbits.push(GeneratorOrbit {
            xi,
            target,
            value: run.m_c,
            class: run.orbit.class.class.name().into(),
            displacement: dist(path.last(), path.first()),
            report: run.report,
            path: path.clone(),
        });
    }
    let max_displacement = orbits.iter().map(|o| o.displacement).fold(0.0, f64::max);
    Ok(MultiplicityResult {
        c,
        spans: lattice.is_full(),
        index: lattice.index(),
        generators,
        orbits,
        max_displacement,
    })
}

/// Complement point next to the origin with the lowest coarse Jacobi value;
/// ties go to the earlier candidate, i.e. the lexicographically largest.
fn best_direction(p: &Potential, part: &SublevelPartition, c: f64, cfg: &SolverConfig) -> Result<Vec<i64>> {
    let Some(l) = (match part.rule() {
        LabelingRule::Sublattice(l) => Some(l),
        _ => None,
    }) else {
        return Err(Error::Precondition("multiplicity needs a sublattice partition".into()));
    };
    let candidates = lattice_candidates(l, 1);
    let mut best: Option<(f64, Vec<i64>)> = None;
    for cand in candidates {
        let mut coarse = cfg.clone();
        coarse.anchors = Some((vec![0.0; p.dim()], cand.iter().map(|&k| k as f64).collect()));
        coarse.jacobi_segments = coarse.jacobi_segments.min(64);
        let value = match minimize_jacobi(p, part, c, &coarse) {
            Ok(r) => r.value,
            Err(e) => {
                log::debug!("candidate {cand:?} skipped: {e}");
                continue;
            }
        };
        let better = match &best {
            None => true,
            Some((v, _)) => value < v * (1.0 - TIE_GAP),
        };
        if better {
            best = Some((value, cand));
        }
    }
    best.map(|(_, v)| v)
        .ok_or_else(|| Error::Stagnation("no complement direction could be solved".into()))
}
