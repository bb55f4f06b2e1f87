//! Trajectory files.
//!
//! A trajectory is a CSV with header `t,x0,x1,..` and one row per sample,
//! written with shortest round-trip float formatting. A JSON sidecar with the
//! same stem records how it was produced.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Contents of the `.json` sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMeta {
    pub dt: f64,
    pub steps_per_lyapunov_time: Option<usize>,
    /// `None` for imported series.
    pub system: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn trajectory_csv(traj: &Trajectory, t0: f64) -> String {
    let mut s = String::from("t");
    for v in 0..traj.dim() {
        let _ = write!(s, ",x{v}");
    }
    s.push('\n');
    for (i, row) in traj.rows().enumerate() {
        let _ = write!(s, "{}", t0 + i as f64 * traj.dt());
        for x in row {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value).expect("value serializes") + "\n"))
}

/// CSV plus, when given, its sidecar.
pub fn write_trajectory(path: &Path, traj: &Trajectory, meta: Option<&TrajectoryMeta>) -> Result<()> {
    write(path, &trajectory_csv(traj, 0.0))?;
    if let Some(m) = meta {
        write_json(&sidecar_path(path), m)?;
    }
    Ok(())
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a numeric CSV. A non-numeric first row is a header; a leading
/// column named `t` is time and fixes `dt`, otherwise `dt = 1`.
/// A sidecar next to the file, if present, supplies `dt` and the Lyapunov grid.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(path, format!("{other:?}")),
        })?;
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if line == 0 => header = Some(rec.iter().map(str::to_string).collect()),
            Err(e) => return Err(parse_err(path, format!("line {}: {e}", line + 1))),
        }
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    let has_time = header.as_ref().is_some_and(|h| h.first().is_some_and(|c| c == "t"));
    let mut dt = 1.0;
    if has_time {
        if rows.len() > 1 {
            dt = rows[1][0] - rows[0][0];
        }
        for r in rows.iter_mut() {
            r.remove(0);
        }
    }
    let meta = sidecar_path(path);
    let mut spl = None;
    if meta.exists() {
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let m: TrajectoryMeta = serde_json::from_str(&text).map_err(|e| parse_err(&meta, e.to_string()))?;
        dt = m.dt;
        spl = m.steps_per_lyapunov_time;
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(parse_err(path, format!("time column is not increasing (dt = {dt})")));
    }
    Trajectory::from_rows(&rows, dt)
        .map_err(|e| parse_err(path, e.to_string()))
        .map(|t| t.with_steps_per_lyapunov_time(spl))
}

/// Long-format curve table: first column `key`, then one column per series.
pub fn curves_csv(key: &str, first_key: usize, series: &[Vec<f64>]) -> String {
    let mut s = String::from(key);
    for v in 0..series.len() {
        let _ = write!(s, ",x{v}");
    }
    s.push('\n');
    let n = series.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..n {
        let _ = write!(s, "{}", first_key + i);
        for c in series {
            match c.get(i) {
                Some(x) => {
                    let _ = write!(s, ",{x}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let t = Trajectory::new(vec![0.1, 1.0 / 3.0, -2e-300, 7.25, std::f64::consts::PI, 1e17], 3, 0.037).unwrap();
        write_trajectory(&p, &t, None).unwrap();
        let back = read_trajectory(&p).unwrap();
        assert_eq!(back.states(), t.states());
        assert_eq!(back.dt(), 0.037);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,x0,x1,x2\n0,"));
    }

    #[test]
    fn sidecar_wins_over_the_time_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let t = Trajectory::new(vec![1.0, 2.0, 3.0], 1, 0.1).unwrap();
        let meta = TrajectoryMeta {
            dt: 0.125,
            steps_per_lyapunov_time: Some(8),
            system: None,
            params: BTreeMap::new(),
            seed: 3,
        };
        write_trajectory(&p, &t, Some(&meta)).unwrap();
        let back = read_trajectory(&p).unwrap();
        assert_eq!(back.dt(), 0.125);
        assert_eq!(back.steps_per_lyapunov_time(), Some(8));
    }

    #[test]
    fn headerless_and_named_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "1,2\n3,4\n5,6\n").unwrap();
        let t = read_trajectory(&p).unwrap();
        assert_eq!((t.len(), t.dim(), t.dt()), (3, 2, 1.0));
        std::fs::write(&p, "ecg, resp\n1,2\n3,4\n").unwrap();
        assert_eq!(read_trajectory(&p).unwrap().states(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn malformed_files_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "t,x0\n0,1\n1,oops\n").unwrap();
        assert_eq!(read_trajectory(&p).unwrap_err().exit_code(), 3);
        std::fs::write(&p, "t,x0\n").unwrap();
        assert_eq!(read_trajectory(&p).unwrap_err().exit_code(), 3);
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert_eq!(read_trajectory(&p).unwrap_err().exit_code(), 3);
        let missing = read_trajectory(&dir.path().join("none.csv")).unwrap_err();
        assert_eq!(missing.exit_code(), 2);
        assert!(missing.to_string().contains("none.csv"));
    }

    #[test]
    fn curves_pad_short_series() {
        assert_eq!(curves_csv("lag", 1, &[vec![0.5, 0.25], vec![1.0]]), "lag,x0,x1\n1,0.5,1\n2,0.25,\n");
    }
}
