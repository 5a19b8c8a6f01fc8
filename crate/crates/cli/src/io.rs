//! Orbit CSV files and atomic output writes.

use std::fmt::Write as _;
use std::path::Path;

use orbitforge::action::{DiscretePath, TimeGrid};
use orbitforge::potential::Potential;

use crate::CliError;

/// Writes `bytes` to a temporary sibling of `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Speed at every node: centered differences inside, one-sided at the ends.
fn speeds(path: &DiscretePath) -> Vec<f64> {
    let n = path.n_nodes();
    let t = path.times();
    (0..n)
        .map(|k| {
            let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
            let h = t[b] - t[a];
            let d2: f64 = path.point(b).iter().zip(path.point(a)).map(|(x, y)| (x - y) * (x - y)).sum();
            d2.sqrt() / h
        })
        .collect()
}

/// Columns `t, q_1..q_N, speed, V, E+c`, every number with 17 significant
/// digits so that reading the file back is exact.
pub fn orbit_csv(path: &DiscretePath, p: &Potential, c: f64) -> String {
    let dim = path.dim();
    let mut out = String::from("t");
    for i in 1..=dim {
        let _ = write!(out, ",q_{i}");
    }
    out.push_str(",speed,V,E+c\n");
    for (k, v) in speeds(path).into_iter().enumerate() {
        let q = path.point(k);
        let pot = p.value(q);
        let _ = write!(out, "{:.16e}", path.times()[k]);
        for x in q {
            let _ = write!(out, ",{x:.16e}");
        }
        let _ = writeln!(out, ",{v:.16e},{pot:.16e},{:.16e}", 0.5 * v * v - pot + c);
    }
    out
}

pub fn write_orbit_csv(file: &Path, path: &DiscretePath, p: &Potential, c: f64) -> Result<(), CliError> {
    write_atomic(file, orbit_csv(path, p, c).as_bytes())
}

/// Reads the `t` and `q_i` columns of an orbit CSV; the derived columns are
/// ignored.
pub fn read_orbit_csv(file: &Path) -> Result<DiscretePath, CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
    let bad = |line: usize, msg: String| CliError::Input(format!("{}:{line}: {msg}", file.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty file".into()))?.split(',').collect();
    if header.first() != Some(&"t") {
        return Err(bad(1, "first column must be `t`".into()));
    }
    let dim = header.iter().skip(1).take_while(|h| h.starts_with("q_")).count();
    if dim == 0 {
        return Err(bad(1, "no `q_i` columns".into()));
    }
    let mut times = Vec::new();
    let mut coords = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < dim + 1 {
            return Err(bad(i + 2, format!("expected at least {} columns", dim + 1)));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(i + 2, format!("`{s}`: {e}")));
        times.push(parse(fields[0])?);
        for f in &fields[1..=dim] {
            coords.push(parse(f)?);
        }
    }
    let grid = TimeGrid::from_nodes(times).map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
    DiscretePath::new(grid, dim, coords).map_err(|e| CliError::Input(format!("{}: {e}", file.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use orbitforge::potential::make_double_well;

    #[test]
    fn csv_round_trip_is_exact() {
        let p = make_double_well(5.0, 2).unwrap();
        let grid = TimeGrid::uniform(-1.0, 1.0, 7).unwrap();
        let path = DiscretePath::straight(grid, &[-1.0, 0.1], &[1.0 / 3.0, 0.2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("orbit.csv");
        write_orbit_csv(&f, &path, &p, 0.0).unwrap();
        let back = read_orbit_csv(&f).unwrap();
        assert_eq!(back.times(), path.times());
        assert_eq!(back.coords(), path.coords());
    }

    #[test]
    fn header_and_columns() {
        let p = make_double_well(5.0, 1).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        let path = DiscretePath::straight(grid, &[-1.0], &[1.0]).unwrap();
        let text = orbit_csv(&path, &p, 0.0);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,q_1,speed,V,E+c"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, -1.0, 2.0, 0.0, 2.0]);
    }

    #[test]
    fn malformed_rows_report_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("bad.csv");
        std::fs::write(&f, "t,q_1\n0,1\n0.5,x\n").unwrap();
        let err = read_orbit_csv(&f).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }
}
