//! Feature tables (`label<TAB>v1,...,vd` under a `# dim=d count=n` header)
//! and two-column precomputed score tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::{FeatureVector, Label};
use crate::error::{Error, Result};
use crate::scorefn::PrecomputedScores;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    rows: Vec<(Label, FeatureVector)>,
}

impl FeatureTable {
    pub fn new(dim: usize, rows: Vec<(Label, FeatureVector)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("feature table dimension must be positive"));
        }
        for (_, x) in &rows {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.dim(),
                });
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[(Label, FeatureVector)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row indices carrying `label`.
    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, (l, _))| *l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature vector of row `i`, keyed by its row index.
    pub fn keyed_row(&self, i: usize) -> FeatureVector {
        self.rows[i].1.clone().with_key(i as u64)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# dim={} count={}\n", self.dim, self.rows.len());
        for (label, x) in &self.rows {
            let _ = write!(out, "{}\t", label.as_u8());
            for (k, v) in x.values().iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (dim, count) = match lines.next() {
            Some((_, header)) => parse_header(header)?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        };
        let mut rows = Vec::with_capacity(count);
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let (label, values) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `label<TAB>values`".into()))?;
            let label = match label.trim() {
                "0" => Label::Ood,
                "1" => Label::Id,
                other => return Err(err(format!("label must be 0 or 1, got `{other}`"))),
            };
            let values = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| err(format!("bad value `{v}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(err(format!("expected {dim} values, got {}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err("non-finite feature value".into()));
            }
            rows.push((label, FeatureVector::new(values)?));
        }
        if rows.len() != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("header declares {count} rows, found {}", rows.len()),
            });
        }
        Self::new(dim, rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let err = |message: &str| Error::Parse {
        line: 1,
        message: message.to_string(),
    };
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| err("header must start with `#`"))?;
    let (mut dim, mut count) = (None, None);
    for field in body.split_whitespace() {
        match field.split_once('=') {
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            Some(("count", v)) => count = v.parse::<usize>().ok(),
            _ => return Err(err("unknown header field")),
        }
    }
    match (dim, count) {
        (Some(d), Some(c)) if d > 0 => Ok((d, c)),
        _ => Err(err("header needs `dim=<d> count=<n>` with d >= 1")),
    }
}

/// Parses `sample_index,score` lines (comma or whitespace separated,
/// `#` comments allowed).
pub fn parse_score_table(text: &str) -> Result<PrecomputedScores> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let mut parts = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty());
        let (Some(k), Some(s), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected two columns".into()));
        };
        let k = k
            .parse::<u64>()
            .map_err(|e| err(format!("bad sample index `{k}`: {e}")))?;
        let s = s
            .parse::<f64>()
            .map_err(|e| err(format!("bad score `{s}`: {e}")))?;
        if !s.is_finite() {
            return Err(err("non-finite score".into()));
        }
        entries.push((k, s));
    }
    PrecomputedScores::new(entries)
}

pub fn load_score_table(path: impl AsRef<Path>) -> Result<PrecomputedScores> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_score_table(&text)
}
