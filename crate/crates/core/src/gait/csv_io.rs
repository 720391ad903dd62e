//! `t,q1,q2,q3` trial files and their `.meta` sidecars.

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use super::GaitTrial;
use crate::error::{Error, Result};

/// Largest tolerated deviation of a timestamp from the uniform grid (s).
const TIME_JITTER: f64 = 1e-6;

/// Sidecar metadata for a trial file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialMeta {
    pub subject_id: Option<String>,
    pub trial_id: Option<String>,
}

/// Formats a value with 17 significant digits.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Loads a trial and, when present, its `.meta` sidecar.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn load_csv(path: impl AsRef<Path>) -> Result<GaitTrial> {
    let path = path.as_ref();
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut trial = parse_csv(&text, path)?;
    let meta_path = path.with_extension("meta");
    if meta_path.exists() {
        let (cadence, meta) = load_meta(&meta_path)?;
        trial.cadence = cadence;
        trial.meta = meta;
    }
    Ok(trial)
}

fn parse_csv(text: &str, path: &Path) -> Result<GaitTrial> {
    let err = |row: usize, reason: String| Error::Csv {
        path: PathBuf::from(path),
        row,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| err(0, format!("unreadable header: {e}")))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names != ["t", "q1", "q2", "q3"] {
        return Err(err(0, format!("malformed header {names:?}, expected t,q1,q2,q3")));
    }

    let mut t = Vec::new();
    let mut q: [Vec<f64>; 3] = Default::default();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| err(row, e.to_string()))?;
        if record.len() != 4 {
            return Err(err(row, format!("expected 4 fields, found {}", record.len())));
        }
        let mut vals = [0.0; 4];
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(row, format!("field `{}` is not a number: {field:?}", names[j])))?;
            if !v.is_finite() {
                return Err(err(row, format!("field `{}` is not finite", names[j])));
            }
            vals[j] = v;
        }
        if let Some(&prev) = t.last() {
            if vals[0] <= prev {
                return Err(err(row, "non-monotonic time".into()));
            }
        }
        t.push(vals[0]);
        for j in 0..3 {
            q[j].push(vals[j + 1]);
        }
    }
    if t.len() < 2 {
        return Err(err(t.len(), "a trial needs at least two rows".into()));
    }
    let n = t.len();
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    for (i, &ti) in t.iter().enumerate() {
        if (ti - (t[0] + i as f64 * dt)).abs() > TIME_JITTER {
            return Err(err(i + 1, format!("non-uniform sampling (expected dt = {dt})")));
        }
    }
    GaitTrial::new(dt, t[0], q)
}

/// Writes `t,q1,q2,q3` with 17 significant digits.
pub fn write_csv(trial: &GaitTrial, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("t,q1,q2,q3\n");
    for i in 0..trial.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt17(trial.time(i)),
            fmt17(trial.q[0][i]),
            fmt17(trial.q[1][i]),
            fmt17(trial.q[2][i])
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes the `.meta` sidecar next to `csv_path`.
pub fn write_meta(trial: &GaitTrial, csv_path: impl AsRef<Path>) -> Result<()> {
    let path = csv_path.as_ref().with_extension("meta");
    let mut out = String::new();
    if let Some(c) = trial.cadence {
        let _ = writeln!(out, "cadence_bpm = {c}");
    }
    if let Some(s) = &trial.meta.subject_id {
        let _ = writeln!(out, "subject_id = {s}");
    }
    if let Some(s) = &trial.meta.trial_id {
        let _ = writeln!(out, "trial_id = {s}");
    }
    std::fs::write(&path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads a key-value sidecar: `cadence_bpm`, `subject_id`, `trial_id`.
pub fn load_meta(path: impl AsRef<Path>) -> Result<(Option<f64>, TrialMeta)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut cadence = None;
    let mut meta = TrialMeta::default();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Csv {
                path: path.into(),
                row: k + 1,
                reason: format!("expected `key = value`, found {line:?}"),
            });
        };
        let value = value.trim();
        match key.trim() {
            "cadence_bpm" => {
                cadence = Some(value.parse().map_err(|_| Error::Csv {
                    path: path.into(),
                    row: k + 1,
                    reason: format!("cadence_bpm is not a number: {value:?}"),
                })?)
            }
            "subject_id" => meta.subject_id = Some(value.to_string()),
            "trial_id" => meta.trial_id = Some(value.to_string()),
            _ => {}
        }
    }
    Ok((cadence, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "t,q1,q2,q3\n0.0,1.5,3.1,6.2\n0.01,1.49,3.12,6.1\n");
        let trial = load_csv(&p).unwrap();
        assert_eq!(trial.len(), 2);
        assert!((trial.dt - 0.01).abs() < 1e-15);
    }

    #[test]
    fn nan_is_reported_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("t,q1,q2,q3\n");
        for i in 0..20 {
            let q2 = if i == 16 { "NaN".to_string() } else { "3.1".to_string() };
            body.push_str(&format!("{},1.5,{q2},6.2\n", i as f64 * 0.01));
        }
        let p = write(dir.path(), "nan.csv", &body);
        let msg = load_csv(&p).unwrap_err().to_string();
        assert!(msg.contains("row 17"), "{msg}");
        assert!(msg.contains("q2"), "{msg}");
    }

    #[test]
    fn header_and_time_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "h.csv", "time,a,b,c\n0,1,2,3\n0.01,1,2,3\n");
        assert!(load_csv(&p).unwrap_err().to_string().contains("row 0"));

        let p = write(dir.path(), "m.csv", "t,q1,q2,q3\n0,1,2,6\n0.01,1,2,6\n0.005,1,2,6\n");
        let msg = load_csv(&p).unwrap_err().to_string();
        assert!(msg.contains("row 3") && msg.contains("non-monotonic"), "{msg}");

        let p = write(
            dir.path(),
            "u.csv",
            "t,q1,q2,q3\n0,1,2,6\n0.01,1,2,6\n0.025,1,2,6\n0.03,1,2,6\n",
        );
        assert!(load_csv(&p).unwrap_err().to_string().contains("non-uniform"));
    }

    #[test]
    fn meta_sidecar_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "t,q1,q2,q3\n0,1,2,6\n0.01,1,2,6\n");
        write(
            dir.path(),
            "s.meta",
            "cadence_bpm = 115\nsubject_id = A\ntrial_id = 3\n",
        );
        let trial = load_csv(&p).unwrap();
        assert_eq!(trial.cadence, Some(115.0));
        assert_eq!(trial.meta.subject_id.as_deref(), Some("A"));
        assert_eq!(trial.meta.trial_id.as_deref(), Some("3"));
    }
}
