//! Applying a treatment plan to new data.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::design::TreatmentPlan;
use crate::error::{Error, Result};
use crate::frame::{Frame, NumericColumn};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrepareOptions {
    /// Keep only variables with `sig < prune_sig`.
    pub prune_sig: Option<f64>,
    /// Keep only these derived variables.
    pub var_restriction: Option<Vec<String>>,
    /// Rescale each column into outcome units using the plan's frozen slopes.
    pub scale: bool,
}

/// Indices of the plan's derived variables that survive pruning and
/// restriction, in scoreFrame order.
pub fn surviving(plan: &TreatmentPlan, opts: &PrepareOptions) -> Result<Vec<usize>> {
    let restrict: Option<HashSet<&str>> = match &opts.var_restriction {
        Some(names) => {
            let known: HashSet<&str> = plan.var_names().collect();
            if let Some(unknown) = names.iter().find(|n| !known.contains(n.as_str())) {
                return Err(Error::Prepare(format!(
                    "unknown derived variable {unknown:?}"
                )));
            }
            Some(names.iter().map(String::as_str).collect())
        }
        None => None,
    };
    if let Some(p) = opts.prune_sig {
        if p.is_nan() {
            return Err(Error::Prepare("pruneSig is NaN".into()));
        }
    }
    Ok(plan
        .score_frame
        .iter()
        .enumerate()
        .filter(|(_, row)| opts.prune_sig.is_none_or(|p| row.sig < p))
        .filter(|(_, row)| {
            restrict
                .as_ref()
                .is_none_or(|r| r.contains(row.var_name.as_str()))
        })
        .map(|(i, _)| i)
        .collect())
}

/// Encodes `frame` with the surviving variables of `plan`, one numeric column
/// each, followed by the outcome column when `frame` has it.
pub fn prepare(plan: &TreatmentPlan, frame: &Frame, opts: &PrepareOptions) -> Result<Frame> {
    if opts.scale && plan.scaling.is_empty() && !plan.specs.is_empty() {
        return Err(Error::Prepare(
            "plan has no outcome, so it cannot scale".into(),
        ));
    }
    let keep = surviving(plan, opts)?;
    let columns: Vec<Vec<f64>> = keep
        .par_iter()
        .map(|&i| {
            let spec = &plan.specs[i];
            let mut values = spec.apply(frame.column(spec.orig_name())?)?;
            if opts.scale {
                let s = &plan.scaling[i];
                values.iter_mut().for_each(|v| *v = s.slope * (*v - s.mean));
            }
            Ok(values)
        })
        .collect::<Result<_>>()?;

    let mut out = Frame::new(frame.nrows());
    for (&i, values) in keep.iter().zip(columns) {
        out.push_column(plan.specs[i].var_name(), NumericColumn::new(values))?;
    }
    if let Some(name) = &plan.outcome {
        if let Some(col) = frame.get(name) {
            if out.get(name).is_none() {
                out.push_column(name.clone(), col.clone())?;
            }
        }
    }
    Ok(out)
}

/// Rescales already-prepared columns with the plan's frozen parameters.
/// Columns that are not derived variables of the plan pass through.
pub fn scale_columns(plan: &TreatmentPlan, treated: &Frame) -> Result<Frame> {
    if plan.scaling.is_empty() && !plan.specs.is_empty() {
        return Err(Error::Prepare(
            "plan has no outcome, so it cannot scale".into(),
        ));
    }
    let mut out = Frame::new(treated.nrows());
    for (name, col) in treated.columns() {
        match plan.scaling.iter().find(|s| s.var_name == name) {
            Some(s) if Some(name) != plan.outcome.as_deref() => {
                let x = treated.numeric(name)?;
                let scaled = x.values().iter().map(|v| s.slope * (v - s.mean)).collect();
                out.push_column(name, NumericColumn::new(scaled))?;
            }
            _ => out.push_column(name, col.clone())?,
        }
    }
    Ok(out)
}
