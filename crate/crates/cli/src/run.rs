//! Command pipelines behind `orbitforge run` and `orbitforge verify`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use orbitforge::classify::Classification;
use orbitforge::potential::{build_partition, LabelingRule, Potential};
use orbitforge::solve::MinimizerResult;
use orbitforge::studies::{pendulum_multiplicity, run_family, sweep_and_converge, FamilyRun, SolverAgreement};
use orbitforge::verify::{report_path, VerificationReport, VerifyConfig};

use crate::config::{self, Command, RunConfig};
use crate::io::{read_orbit_csv, write_json, write_orbit_csv};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Outcome of a command that ran to completion.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub summary: PathBuf,
}

/// Overrides given on the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    family: FamilyInfo,
    passed: bool,
    timings: Timings,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct FamilyInfo {
    name: String,
    dim: usize,
    kappa: Option<f64>,
    c: f64,
}

impl FamilyInfo {
    fn new(p: &Potential, c: f64) -> Self {
        let kappa = match p.family() {
            orbitforge::potential::Family::DoubleWell { kappa } => Some(*kappa),
            _ => None,
        };
        FamilyInfo { name: p.family().name().into(), dim: p.dim(), kappa, c }
    }
}

#[derive(Serialize, Default)]
struct Timings {
    total_s: f64,
    solve_s: Option<f64>,
}

#[derive(Serialize)]
struct SolverSummary {
    value: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
    constraint_violation: f64,
    nodes: usize,
}

impl SolverSummary {
    fn new(r: &MinimizerResult) -> Self {
        SolverSummary {
            value: r.value,
            converged: r.converged,
            iterations: r.iterations,
            grad_norm: r.grad_norm,
            constraint_violation: r.constraint_violation,
            nodes: r.path.n_nodes(),
        }
    }
}

#[derive(Serialize)]
struct OrbitSummary {
    c: f64,
    m_c: f64,
    class: String,
    classification: Classification,
    verification: VerificationReport,
    agreement: SolverAgreement,
    time_domain: SolverSummary,
    jacobi: SolverSummary,
    orbit_csv: String,
}

fn orbit_summary(run: &FamilyRun, csv: &str) -> OrbitSummary {
    OrbitSummary {
        c: run.c,
        m_c: run.m_c,
        class: run.orbit.class.class.name().into(),
        classification: run.orbit.class.clone(),
        verification: run.report.clone(),
        agreement: run.agreement.clone(),
        time_domain: SolverSummary::new(&run.time_domain),
        jacobi: SolverSummary::new(&run.jacobi),
        orbit_csv: csv.into(),
    }
}

fn pipeline(e: orbitforge::Error) -> CliError {
    CliError::Pipeline { stage: e.stage(), source: e }
}

/// Loads `config_path` and runs its command.
pub fn run(config_path: &Path, ov: &Overrides) -> Result<Outcome, CliError> {
    let cfg = config::load(config_path)?;
    run_config(&cfg, ov)
}

pub fn run_config(cfg: &RunConfig, ov: &Overrides) -> Result<Outcome, CliError> {
    let out = ov.out.clone().unwrap_or_else(|| cfg.output.clone());
    let workers = ov.workers.unwrap_or(cfg.workers as usize).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    pool.install(|| match cfg.command {
        Command::Solve => solve(cfg, &out),
        Command::Sweep => sweep(cfg, &out),
        Command::Multiplicity => multiplicity(cfg, &out),
        Command::Verify => {
            let p = cfg.potential()?;
            let csv = &cfg.orbit.as_ref().expect("checked at load").csv;
            verify_file(csv, &p, cfg.family.c, &cfg.verify_config(&p), &out)
        }
    })
}

fn solve(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let p = cfg.potential()?;
    let c = cfg.family.c;
    let scfg = cfg.solver_config(&p)?;
    let run = run_family(&p, c, &scfg, &cfg.verify_config(&p)).map_err(pipeline)?;
    let solve_s = start.elapsed().as_secs_f64();
    let csv = "orbit_main.csv";
    write_orbit_csv(&out.join(csv), &run.orbit.base, &p, c)?;
    let passed = run.report.passed.all();
    let summary = out.join("summary.json");
    write_json(
        &summary,
        &Summary {
            schema_version: SCHEMA_VERSION,
            command: "solve",
            family: FamilyInfo::new(&p, c),
            passed,
            timings: Timings { total_s: start.elapsed().as_secs_f64(), solve_s: Some(solve_s) },
            body: orbit_summary(&run, csv),
        },
    )?;
    Ok(Outcome { passed, summary })
}

#[derive(Serialize)]
struct SweepBody {
    limit: OrbitSummary,
    rungs: Vec<Option<OrbitSummary>>,
    monotone: bool,
    last_gap: Option<f64>,
    study_json: String,
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let p = cfg.potential()?;
    let scfg = cfg.sweep_config(&p)?;
    let study = sweep_and_converge(&p, &scfg).map_err(pipeline)?;
    let solve_s = start.elapsed().as_secs_f64();
    let limit = study.limit.as_ref().expect("sweep returns the limit orbit");
    write_orbit_csv(&out.join("orbit_limit.csv"), &limit.orbit.base, &p, 0.0)?;
    let limit_summary = orbit_summary(limit, "orbit_limit.csv");
    let mut rungs = Vec::new();
    for (k, run) in study.orbits.iter().enumerate() {
        rungs.push(match run {
            Some(r) => {
                let name = format!("orbit_rung{k}.csv");
                write_orbit_csv(&out.join(&name), &r.orbit.base, &p, r.c)?;
                Some(orbit_summary(r, &name))
            }
            None => None,
        });
    }
    #[derive(Serialize)]
    struct StudyFile<'a> {
        schema_version: u32,
        #[serde(flatten)]
        study: &'a orbitforge::studies::ConvergenceStudy,
    }
    write_json(&out.join("study.json"), &StudyFile { schema_version: SCHEMA_VERSION, study: &study })?;
    let passed = limit.report.passed.all()
        && study.rows.iter().all(|r| r.error.is_none() && r.verified == Some(true));
    let summary = out.join("summary.json");
    write_json(
        &summary,
        &Summary {
            schema_version: SCHEMA_VERSION,
            command: "sweep",
            family: FamilyInfo::new(&p, 0.0),
            passed,
            timings: Timings { total_s: start.elapsed().as_secs_f64(), solve_s: Some(solve_s) },
            body: SweepBody {
                limit: limit_summary,
                rungs,
                monotone: study.monotone,
                last_gap: study.last_gap,
                study_json: "study.json".into(),
            },
        },
    )?;
    Ok(Outcome { passed, summary })
}

#[derive(Serialize)]
struct MultiplicityBody<'a> {
    result: &'a orbitforge::studies::MultiplicityResult,
    orbit_csvs: Vec<String>,
}

fn multiplicity(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let p = cfg.potential()?;
    let c = cfg.family.c;
    let scfg = cfg.solver_config(&p)?;
    let res = pendulum_multiplicity(&p, c, cfg.max_generators(&p), &scfg, &cfg.verify_config(&p)).map_err(pipeline)?;
    let solve_s = start.elapsed().as_secs_f64();
    let mut csvs = Vec::new();
    for o in &res.orbits {
        let tag: Vec<String> = o.xi.iter().map(|k| if *k < 0 { format!("m{}", -k) } else { k.to_string() }).collect();
        let name = format!("orbit_xi_{}.csv", tag.join("_"));
        write_orbit_csv(&out.join(&name), &o.path, &p, c)?;
        csvs.push(name);
    }
    let passed = res.spans && res.orbits.iter().all(|o| o.report.passed.all());
    let summary = out.join("summary.json");
    write_json(
        &summary,
        &Summary {
            schema_version: SCHEMA_VERSION,
            command: "multiplicity",
            family: FamilyInfo::new(&p, c),
            passed,
            timings: Timings { total_s: start.elapsed().as_secs_f64(), solve_s: Some(solve_s) },
            body: MultiplicityBody { result: &res, orbit_csvs: csvs },
        },
    )?;
    Ok(Outcome { passed, summary })
}

#[derive(Serialize)]
struct VerifyBody {
    orbit_csv: String,
    class: String,
    verification: VerificationReport,
}

/// Re-verifies an orbit CSV against `p` at level `c`.
pub fn verify_file(csv: &Path, p: &Potential, c: f64, vcfg: &VerifyConfig, out: &Path) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let path = read_orbit_csv(csv)?;
    if path.dim() != p.dim() {
        return Err(CliError::Input(format!(
            "{} has {} coordinates, the potential has dimension {}",
            csv.display(),
            path.dim(),
            p.dim()
        )));
    }
    let part = build_partition(p, c, LabelingRule::default_for(p)).map_err(pipeline)?;
    let report = report_path(&path, p, &part, vcfg);
    let passed = report.passed.all();
    let summary = out.join("summary.json");
    write_json(
        &summary,
        &Summary {
            schema_version: SCHEMA_VERSION,
            command: "verify",
            family: FamilyInfo::new(p, c),
            passed,
            timings: Timings { total_s: start.elapsed().as_secs_f64(), solve_s: None },
            body: VerifyBody { orbit_csv: csv.display().to_string(), class: report.class.clone(), verification: report },
        },
    )?;
    Ok(Outcome { passed, summary })
}
