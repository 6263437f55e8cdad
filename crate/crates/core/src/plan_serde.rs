//! Plan files: one JSON document holding everything `prepare` needs, with a
//! trailing SHA-256 checksum of the document's compact form.
//!
//! ```text
//! {
//!   "version": 1,
//!   "task": {"type": "numeric"},
//!   "outcome": "yN",
//!   "meanY": 0.8,
//!   "controls": {...},
//!   "inputs": [{"name": "x", "kind": "categorical"}, ...],
//!   "specs": [{"code": "lev", "varName": "x_lev_NA", "spec": {...}}, ...],
//!   "scoreFrame": [{"varName": "x_lev_NA", "sig": 0.68, ...}, ...],
//!   "scaling": [{"varName": "x_lev_NA", "mean": 0.2, "slope": 0.25}, ...],
//!   "hash": "sha256:..."
//! }
//! ```
//!
//! Floats are written in their shortest round-trip form, so reading a plan
//! back recovers every parameter bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{Controls, InputColumn, ScaleParams, ScoreFrameRow, Task, TreatmentPlan};
use crate::encoders::Treatment;
use crate::error::{Error, Result};

pub const PLAN_FORMAT_VERSION: u32 = 1;

const HASH_PREFIX: &str = "sha256:";

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PlanDoc {
    version: u32,
    task: Task,
    outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grand_rate: Option<f64>,
    controls: Controls,
    inputs: Vec<InputColumn>,
    specs: Vec<Treatment>,
    score_frame: Vec<ScoreFrameRow>,
    scaling: Vec<ScaleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hash: Option<String>,
}

impl PlanDoc {
    fn from_plan(plan: &TreatmentPlan) -> Self {
        PlanDoc {
            version: PLAN_FORMAT_VERSION,
            task: plan.task.clone(),
            outcome: plan.outcome.clone(),
            mean_y: plan.mean_y,
            grand_rate: plan.grand_rate,
            controls: plan.controls.clone(),
            inputs: plan.inputs.clone(),
            specs: plan.specs.clone(),
            score_frame: plan.score_frame.clone(),
            scaling: plan.scaling.clone(),
            hash: None,
        }
    }

    fn into_plan(self) -> TreatmentPlan {
        TreatmentPlan {
            task: self.task,
            outcome: self.outcome,
            mean_y: self.mean_y,
            grand_rate: self.grand_rate,
            controls: self.controls,
            inputs: self.inputs,
            specs: self.specs,
            score_frame: self.score_frame,
            scaling: self.scaling,
        }
    }

    fn checksum(&self) -> Result<String> {
        debug_assert!(self.hash.is_none());
        let compact = serde_json::to_vec(self)?;
        let digest = Sha256::digest(&compact);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(format!("{HASH_PREFIX}{hex}"))
    }
}

/// Serializes a plan to its file form (pretty-printed, newline-terminated).
pub fn plan_to_string(plan: &TreatmentPlan) -> Result<String> {
    plan.validate()?;
    let mut doc = PlanDoc::from_plan(plan);
    doc.hash = Some(doc.checksum()?);
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// Parses a plan file, checking format version, field names, checksum and
/// plan invariants, in that order.
pub fn plan_from_str(text: &str) -> Result<TreatmentPlan> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::PlanFormat(format!("not a plan document: {e}")))?;
    match value.get("version") {
        Some(v) if v.as_u64() == Some(PLAN_FORMAT_VERSION as u64) => {}
        Some(v) => {
            return Err(Error::PlanVersion {
                found: v.to_string(),
                expected: PLAN_FORMAT_VERSION,
            })
        }
        None => {
            return Err(Error::PlanVersion {
                found: "none".into(),
                expected: PLAN_FORMAT_VERSION,
            })
        }
    }
    let mut doc: PlanDoc = serde_json::from_value(value)
        .map_err(|e| Error::PlanFormat(format!("{e} (format version {PLAN_FORMAT_VERSION})")))?;
    let stored = doc
        .hash
        .take()
        .ok_or_else(|| Error::PlanFormat("missing hash".into()))?;
    let computed = doc.checksum()?;
    if stored != computed {
        return Err(Error::PlanChecksum { stored, computed });
    }
    let plan = doc.into_plan();
    plan.validate()?;
    Ok(plan)
}

/// Writes a plan atomically: the file at `path` is either the old content or
/// the complete new plan.
pub fn save_plan(plan: &TreatmentPlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = plan_to_string(plan)?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(text.as_bytes())
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<TreatmentPlan> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    plan_from_str(&text)
}
