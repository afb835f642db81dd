//! JSON-lines run traces: one header record, one record per step (with
//! evaluation fields at checkpoints) and one summary record.
//!
//! Non-finite floats are written as the strings `"inf"`, `"-inf"` and
//! `"nan"`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Seeds;
use crate::engine::StepOutcome;
use crate::error::{Error, Result};
use crate::metrics::PhaseViolation;

/// Serde adapter for `f64` fields that may be infinite.
pub mod ext_f64 {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct F;

    impl Visitor<'_> for F {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(F)
    }
}

/// Evaluation fields attached to a step at a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(with = "ext_f64")]
    pub true_fpr: f64,
    #[serde(with = "ext_f64")]
    pub true_tpr: f64,
    #[serde(with = "ext_f64")]
    pub psi: f64,
    #[serde(with = "ext_f64")]
    pub lambda: f64,
    /// Cumulative labeled OOD samples so far.
    pub labeled_ood: u64,
    pub eval_fpr: Option<f64>,
    pub eval_tpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(flatten)]
    pub outcome: StepOutcome,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub method: String,
    pub scenario: Option<String>,
    pub master_seed: u64,
    pub seeds: Seeds,
    pub config_hash: String,
    pub horizon: u64,
}

/// Largest estimation error relative to the confidence width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageAudit {
    pub checks: u64,
    /// Largest `sup |fpr_hat - FPR|` seen at a check.
    pub max_error: f64,
    pub exceeded: bool,
    pub first_exceedance: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub scenario: Option<String>,
    pub master_seed: u64,
    pub seeds: Seeds,
    pub config_hash: String,
    pub horizon: u64,
    pub final_eval_fpr: Option<f64>,
    pub final_eval_tpr: Option<f64>,
    pub final_true_fpr: f64,
    pub final_true_tpr: f64,
    /// First step at which the confidence width became valid.
    pub t0_step: Option<u64>,
    /// First step after which a new scorer was deployed.
    pub first_update_step: Option<u64>,
    /// Largest checkpoint truth FPR from `t0_step` on (from step 1 for
    /// methods without a confidence width).
    pub max_true_fpr_after_t0: f64,
    pub violations: Vec<PhaseViolation>,
    pub labeled_ood: u64,
    pub queries: u64,
    pub updates_accepted: u64,
    pub updates_rejected: u64,
    pub coverage: Option<CoverageAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(StepRecord),
    Summary(RunSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub summary: RunSummary,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("trace records always serialize")
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", json(&Line::Header(self.header.clone())));
        for s in &self.steps {
            out.push_str(&step_line(s));
            out.push('\n');
        }
        let _ = writeln!(out, "{}", json(&Line::Summary(self.summary.clone())));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut summary = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line, message };
            if summary.is_some() {
                return Err(err("record after the summary".into()));
            }
            match serde_json::from_str::<Line>(raw).map_err(|e| err(e.to_string()))? {
                Line::Header(h) if header.is_none() && line == 1 => header = Some(h),
                Line::Header(_) => return Err(err("unexpected header record".into())),
                Line::Step(_) | Line::Summary(_) if header.is_none() => {
                    return Err(err("trace must start with a header".into()))
                }
                Line::Step(s) => steps.push(s),
                Line::Summary(s) => summary = Some(s),
            }
        }
        let header = header.ok_or(Error::Parse {
            line: 1,
            message: "empty trace".into(),
        })?;
        let summary = summary.ok_or(Error::Parse {
            line: text.lines().count().max(1),
            message: "missing summary record".into(),
        })?;
        Ok(Self {
            header,
            steps,
            summary,
        })
    }
}

fn step_line(s: &StepRecord) -> String {
    // `Line::Step` cannot borrow, so build the tagged object directly.
    let mut v = serde_json::to_value(s).expect("step records always serialize");
    if let serde_json::Value::Object(map) = &mut v {
        let mut tagged = serde_json::Map::with_capacity(map.len() + 1);
        tagged.insert("record".into(), "step".into());
        tagged.extend(std::mem::take(map));
        return serde_json::Value::Object(tagged).to_string();
    }
    unreachable!("step records serialize to objects")
}

pub fn write_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(trace.to_jsonl().as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Trace::parse(&text)
}

/// Hex SHA-256 of the value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values always serialize");
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Label;
    use crate::engine::UpdateEvent;

    fn header() -> TraceHeader {
        TraceHeader {
            method: "asat".into(),
            scenario: Some("stationary-overlap".into()),
            master_seed: 3,
            seeds: Seeds::from_master(3),
            config_hash: config_hash(&1u8),
            horizon: 10,
        }
    }

    fn summary() -> RunSummary {
        RunSummary {
            method: "asat".into(),
            scenario: None,
            master_seed: 3,
            seeds: Seeds::from_master(3),
            config_hash: "x".into(),
            horizon: 10,
            final_eval_fpr: None,
            final_eval_tpr: Some(0.5),
            final_true_fpr: 0.0,
            final_true_tpr: 0.1,
            t0_step: None,
            first_update_step: Some(4),
            max_true_fpr_after_t0: 0.0,
            violations: vec![PhaseViolation {
                phase_start: 1,
                max_violation: 0.0,
                violation_steps: vec![],
                recovery_step: Some(1),
            }],
            labeled_ood: 2,
            queries: 5,
            updates_accepted: 1,
            updates_rejected: 0,
            coverage: None,
        }
    }

    fn step(t: u64) -> StepRecord {
        StepRecord {
            outcome: StepOutcome {
                t,
                score: -0.1 * t as f64,
                predicted: Label::Ood,
                queried: true,
                via_importance: false,
                true_label: Some(Label::Id),
                emitted: Label::Id,
                threshold: if t < 3 { f64::INFINITY } else { 0.25 },
                g_version: 1,
                update: (t == 4).then_some(UpdateEvent::Accepted),
            },
            checkpoint: (t % 2 == 0).then(|| Checkpoint {
                true_fpr: 0.01,
                true_tpr: 0.7,
                psi: f64::INFINITY,
                lambda: 0.25,
                labeled_ood: t,
                eval_fpr: None,
                eval_tpr: Some(1.0 / 3.0),
            }),
        }
    }

    #[test]
    fn empty_trace_is_header_and_summary() {
        let t = Trace {
            header: header(),
            steps: vec![],
            summary: summary(),
        };
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(Trace::parse(&text).unwrap(), t);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let t = Trace {
            header: header(),
            steps: (1..=10_000).map(step).collect(),
            summary: summary(),
        };
        let text = t.to_jsonl();
        assert!(text.lines().nth(1).unwrap().contains("\"threshold\":\"inf\""));
        let back = Trace::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn corrupted_line_reports_its_number() {
        let t = Trace {
            header: header(),
            steps: (1..=5).map(step).collect(),
            summary: summary(),
        };
        let mut lines: Vec<String> = t.to_jsonl().lines().map(String::from).collect();
        lines[3] = lines[3].replace("\"score\"", "\"scor");
        let e = Trace::parse(&lines.join("\n")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 4, .. }), "{e}");
    }

    #[test]
    fn hash_tracks_content() {
        assert_eq!(config_hash(&(1, 2.5)), config_hash(&(1, 2.5)));
        assert_ne!(config_hash(&(1, 2.5)), config_hash(&(1, 2.6)));
        assert_eq!(config_hash(&0u8).len(), 64);
    }
}
