//! Run configuration files.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! command = "solve"        # solve | verify | sweep | multiplicity
//! output = "out"           # relative to the config file
//! seed = 0
//! workers = 1
//!
//! [family]
//! name = "double-well"     # double-well | duffing | pendulum
//! kappa = 5.0              # double-well only
//! dim = 2
//! c = 0.0
//!
//! [solver]                 # every key optional
//! half_width = 12.0
//! segments = 1024
//! jacobi_segments = 256
//! grad_tol = 1e-6
//! max_iters = 20000
//! starts = 0               # extra bent starts, seeded by `seed`
//! amplitude = 0.3
//!
//! [verify]                 # every key optional
//! dt = 1e-4
//! subintervals = 8
//!
//! [sweep]                  # command = "sweep"
//! c = [0.2, 0.1, 0.05, 0.025]
//! window = 3.0
//! slack = 0.1
//!
//! [multiplicity]           # command = "multiplicity"
//! max_generators = 4
//!
//! [orbit]                  # command = "verify"
//! csv = "orbit_main.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use orbitforge::potential::{make_double_well, make_duffing, make_pendulum, Potential};
use orbitforge::solve::{MultiStart, SolverConfig};
use orbitforge::studies::SweepConfig;
use orbitforge::verify::VerifyConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Verify,
    Sweep,
    Multiplicity,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: i64,
    pub family: FamilyBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    pub sweep: Option<SweepBlock>,
    pub multiplicity: Option<MultiplicityBlock>,
    pub orbit: Option<OrbitBlock>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_workers() -> i64 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyBlock {
    pub name: String,
    pub kappa: Option<f64>,
    #[serde(default = "default_dim")]
    pub dim: i64,
    #[serde(default)]
    pub c: f64,
}

fn default_dim() -> i64 {
    2
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub half_width: Option<f64>,
    pub segments: Option<i64>,
    pub jacobi_segments: Option<i64>,
    pub grad_tol: Option<f64>,
    pub max_iters: Option<i64>,
    pub starts: Option<i64>,
    pub amplitude: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub dt: Option<f64>,
    pub subintervals: Option<i64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub c: Vec<f64>,
    pub window: Option<f64>,
    pub slack: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplicityBlock {
    pub max_generators: Option<i64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitBlock {
    pub csv: PathBuf,
}

/// Reads and parses `path`; relative paths inside are resolved against the
/// file's directory.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    if cfg.output.is_relative() {
        cfg.output = base.join(&cfg.output);
    }
    if let Some(o) = &mut cfg.orbit {
        if o.csv.is_relative() {
            o.csv = base.join(&o.csv);
        }
    }
    Ok(cfg)
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

fn field(name: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{name}`: {reason}"))
}

fn count(name: &str, v: Option<i64>, min: i64) -> Result<Option<usize>, CliError> {
    match v {
        Some(x) if x < min => Err(field(name, format!("must be >= {min}, got {x}"))),
        Some(x) => Ok(Some(x as usize)),
        None => Ok(None),
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => Err(field(name, format!("must be finite and > 0, got {x}"))),
        _ => Ok(()),
    }
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        count("workers", Some(self.workers), 1)?;
        count("family.dim", Some(self.family.dim), 1)?;
        if !self.family.c.is_finite() || self.family.c < 0.0 {
            return Err(field("family.c", format!("must be finite and >= 0, got {}", self.family.c)));
        }
        positive("family.kappa", self.family.kappa)?;
        let s = &self.solver;
        positive("solver.half_width", s.half_width)?;
        count("solver.segments", s.segments, 16)?;
        count("solver.jacobi_segments", s.jacobi_segments, 16)?;
        positive("solver.grad_tol", s.grad_tol)?;
        count("solver.max_iters", s.max_iters, 1)?;
        count("solver.starts", s.starts, 0)?;
        if let Some(a) = s.amplitude {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(field("solver.amplitude", format!("must be finite and >= 0, got {a}")));
            }
        }
        positive("verify.dt", self.verify.dt)?;
        count("verify.subintervals", self.verify.subintervals, 1)?;
        match self.command {
            Command::Sweep => {
                let sw = self.sweep.as_ref().ok_or_else(|| field("sweep", "required for command = \"sweep\""))?;
                positive("sweep.window", sw.window)?;
                if let Some(x) = sw.slack {
                    if !(x >= 0.0) {
                        return Err(field("sweep.slack", format!("must be >= 0, got {x}")));
                    }
                }
            }
            Command::Multiplicity => {
                if let Some(m) = &self.multiplicity {
                    count("multiplicity.max_generators", m.max_generators, 1)?;
                }
            }
            Command::Verify => {
                self.orbit.as_ref().ok_or_else(|| field("orbit", "required for command = \"verify\""))?;
            }
            Command::Solve => {}
        }
        self.potential()?;
        Ok(())
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        let f = &self.family;
        make_potential(&f.name, f.kappa, f.dim as usize)
    }

    pub fn solver_config(&self, p: &Potential) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let mut cfg = SolverConfig::for_family(p);
        if let Some(x) = s.half_width {
            cfg.half_width = x;
        }
        if let Some(x) = s.segments {
            cfg.segments = x as usize;
        }
        if let Some(x) = s.jacobi_segments {
            cfg.jacobi_segments = x as usize;
        }
        if let Some(x) = s.grad_tol {
            cfg.grad_tol = x;
        }
        if let Some(x) = s.max_iters {
            cfg.max_iters = x as usize;
        }
        if let Some(n) = s.starts.filter(|&n| n > 0) {
            cfg.multi_start = Some(MultiStart { seed: self.seed, starts: n as usize, amplitude: s.amplitude.unwrap_or(0.3) });
        }
        cfg.validate().map_err(|e| CliError::Config(format!("solver: {e}")))?;
        Ok(cfg)
    }

    pub fn verify_config(&self, p: &Potential) -> VerifyConfig {
        let mut v = VerifyConfig::for_potential(p);
        v.seed = self.seed;
        if let Some(dt) = self.verify.dt {
            v.dt = dt;
        }
        if let Some(n) = self.verify.subintervals {
            v.subintervals = n as usize;
        }
        v
    }

    pub fn sweep_config(&self, p: &Potential) -> Result<SweepConfig, CliError> {
        let sw = self.sweep.as_ref().ok_or_else(|| field("sweep", "missing"))?;
        let mut cfg = SweepConfig::double_well_ladder(p);
        cfg.c_sequence = sw.c.clone();
        if let Some(w) = sw.window {
            cfg.window = w;
        }
        if let Some(s) = sw.slack {
            cfg.slack = s;
        }
        cfg.solver = self.solver_config(p)?;
        cfg.verify = self.verify_config(p);
        cfg.validate().map_err(|e| CliError::Config(format!("sweep: {e}")))?;
        Ok(cfg)
    }

    pub fn max_generators(&self, p: &Potential) -> usize {
        self.multiplicity
            .as_ref()
            .and_then(|m| m.max_generators)
            .map_or(2 * p.dim(), |n| n as usize)
    }
}

pub fn make_potential(name: &str, kappa: Option<f64>, dim: usize) -> Result<Potential, CliError> {
    let p = match name {
        "double-well" => make_double_well(kappa.unwrap_or(5.0), dim),
        "duffing" => make_duffing(dim),
        "pendulum" => make_pendulum(dim),
        other => {
            return Err(field("family.name", format!("unknown family `{other}` (double-well, duffing, pendulum)")))
        }
    };
    p.map_err(|e| CliError::Config(format!("family: {e}")))
}

/// Potential and level given on the command line as
/// `family[:key=value,...]`, with keys `kappa`, `dim` and `c`.
pub fn parse_potential_spec(spec: &str) -> Result<(Potential, f64), CliError> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let (mut kappa, mut dim, mut c) = (None, 2usize, 0.0);
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--potential: expected key=value, got `{kv}`")))?;
        let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("--potential: `{k}`: {e}"));
        match k.trim() {
            "kappa" => kappa = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
            "dim" => dim = v.trim().parse::<usize>().map_err(|e| bad(&e))?,
            "c" => c = v.trim().parse::<f64>().map_err(|e| bad(&e))?,
            other => return Err(CliError::Config(format!("--potential: unknown key `{other}`"))),
        }
    }
    Ok((make_potential(name.trim(), kappa, dim)?, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"
command = "solve"
[family]
name = "double-well"
kappa = 5.0
c = 0.0
"#;

    #[test]
    fn minimal_config() {
        let cfg = parse(SOLVE).unwrap();
        assert_eq!(cfg.command, Command::Solve);
        assert_eq!(cfg.workers, 1);
        let p = cfg.potential().unwrap();
        assert_eq!(cfg.solver_config(&p).unwrap().segments, 1024);
    }

    #[test]
    fn negative_segments_name_the_field() {
        let text = format!("{SOLVE}\n[solver]\nsegments = -4\n");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("solver.segments"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{SOLVE}\n[solver]\nsegmnets = 64\n");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("segmnets") && err.contains("line"), "{err}");
    }

    #[test]
    fn sweep_needs_its_block() {
        let text = SOLVE.replace("\"solve\"", "\"sweep\"");
        assert!(parse(&text).unwrap_err().to_string().contains("sweep"));
    }

    #[test]
    fn potential_specs() {
        let (p, c) = parse_potential_spec("double-well:kappa=5,dim=2,c=0.5").unwrap();
        assert_eq!((p.dim(), c), (2, 0.5));
        assert_eq!(parse_potential_spec("pendulum").unwrap().0.dim(), 2);
        assert!(parse_potential_spec("pendulum:dim").is_err());
        assert!(parse_potential_spec("morse").is_err());
    }
}
