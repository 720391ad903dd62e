//! Plain-text matrix blocks.
//!
//! A model file is a first line naming the model kind followed by blocks:
//!
//! ```text
//! <name> <rows> <cols>
//! <row 1 values, space separated>
//! ...
//! ```
//!
//! Values are written with 17 significant digits so they read back exactly.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gait::fmt17;

pub(crate) fn write_block(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Parsed model file: its kind and named blocks in file order.
pub(crate) struct Blocks {
    pub kind: String,
    pub blocks: Vec<(String, DMatrix<f64>)>,
}

impl Blocks {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            context: "model file".into(),
            reason,
        };
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let kind = lines.next().ok_or_else(|| bad("empty file".into()))?.to_string();
        let mut blocks = Vec::new();
        while let Some(header) = lines.next() {
            let parts: Vec<&str> = header.split_whitespace().collect();
            let [name, rows, cols] = parts[..] else {
                return Err(bad(format!("expected `<name> <rows> <cols>`, found {header:?}")));
            };
            let dims = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(format!("bad dimension in {header:?}")))
            };
            let (r, c) = (dims(rows)?, dims(cols)?);
            let mut data = Vec::with_capacity(r * c);
            for i in 0..r {
                let line = lines
                    .next()
                    .ok_or_else(|| bad(format!("block `{name}` ends after {i} rows")))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| bad(format!("bad value {v:?} in block `{name}`")))
                    })
                    .collect::<Result<_>>()?;
                if row.len() != c {
                    return Err(bad(format!(
                        "block `{name}` row {} has {} values, expected {c}",
                        i + 1,
                        row.len()
                    )));
                }
                data.extend(row);
            }
            blocks.push((name.to_string(), DMatrix::from_row_slice(r, c, &data)));
        }
        Ok(Self { kind, blocks })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format {
                context: "model file".into(),
                reason: format!("expected a `{kind}` file, found `{}`", self.kind),
            })
        }
    }

    pub fn get(&self, name: &str, rows: Option<usize>, cols: Option<usize>) -> Result<&DMatrix<f64>> {
        let m = self
            .blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Format {
                context: "model file".into(),
                reason: format!("missing block `{name}`"),
            })?;
        if rows.is_some_and(|r| r != m.nrows()) || cols.is_some_and(|c| c != m.ncols()) {
            return Err(Error::Format {
                context: "model file".into(),
                reason: format!("block `{name}` has shape {}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(m)
    }

    pub fn has(&self, name: &str) -> bool {
        self.blocks.iter().any(|(n, _)| n == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-17, 3.0, 1.0 / 3.0, f64::MAX, -0.0]);
        let mut s = String::from("thing\n");
        write_block(&mut s, "M", &m);
        let b = Blocks::parse(&s).unwrap();
        b.expect_kind("thing").unwrap();
        assert_eq!(b.get("M", Some(2), Some(3)).unwrap(), &m);
        assert!(b.get("M", Some(3), None).is_err());
        assert!(b.expect_kind("other").is_err());
    }

    #[test]
    fn truncated_block() {
        assert!(Blocks::parse("k\nM 2 2\n1 2\n").is_err());
        assert!(Blocks::parse("k\nM 1 2\n1\n").is_err());
    }
}
