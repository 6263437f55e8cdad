//! Cross frames: training data whose complex derived columns were each
//! produced by encoders fit without the row they encode.

use crate::design::{design, Controls, Task, TreatmentPlan};
use crate::error::{Error, Result};
use crate::frame::{Column, Frame, NumericColumn};
use crate::splits::{default_plan, SplitMethod, SplitPlan};

#[derive(Clone, Debug)]
pub struct CrossFrameResult {
    /// Plan fit on all rows, for use on future data.
    pub treatments: TreatmentPlan,
    /// Derived variables for every input row, plus the outcome.
    pub cross_frame: Frame,
    pub method: SplitMethod,
    pub eval_sets: SplitPlan,
}

fn cross_frame(
    frame: &Frame,
    varlist: &[String],
    task: Task,
    outcome_name: &str,
    controls: &Controls,
    split_plan: Option<SplitPlan>,
    seed: u64,
) -> Result<CrossFrameResult> {
    let eval_sets = match split_plan {
        Some(p) => p,
        None => {
            // The split is stratified on the outcome; validate it first so
            // outcome errors surface as such.
            let y = match &task {
                Task::Numeric => crate::design::numeric_outcome(frame, outcome_name)?,
                Task::Binomial { target } => {
                    crate::design::target_indicator(frame, outcome_name, target)?
                }
                Task::NoTarget => return Err(Error::Design("cross frames need an outcome".into())),
            };
            default_plan(frame.nrows(), controls.ncross, &y, seed)?
        }
    };
    let designed = design(
        frame,
        varlist,
        task,
        Some(outcome_name),
        controls,
        Some(&eval_sets),
        seed,
    )?;

    let mut out = Frame::new(frame.nrows());
    for ((spec, naive), cross) in designed
        .plan
        .specs
        .iter()
        .zip(designed.naive)
        .zip(designed.cross)
    {
        let values = cross.unwrap_or(naive);
        out.push_column(spec.var_name(), NumericColumn::new(values))?;
    }
    let outcome: Column = frame.column(outcome_name)?.clone();
    if out.get(outcome_name).is_none() {
        out.push_column(outcome_name, outcome)?;
    }
    Ok(CrossFrameResult {
        treatments: designed.plan,
        cross_frame: out,
        method: eval_sets.method(),
        eval_sets,
    })
}

/// Cross frame for a numeric outcome. Without `split_plan`, rows are split
/// into `controls.ncross` y-stratified folds drawn from `seed`.
pub fn mk_cross_frame_n(
    frame: &Frame,
    varlist: &[String],
    outcome_name: &str,
    controls: &Controls,
    split_plan: Option<SplitPlan>,
    seed: u64,
) -> Result<CrossFrameResult> {
    cross_frame(
        frame,
        varlist,
        Task::Numeric,
        outcome_name,
        controls,
        split_plan,
        seed,
    )
}

/// Cross frame for a binary outcome, `outcome == target_level`.
pub fn mk_cross_frame_c(
    frame: &Frame,
    varlist: &[String],
    outcome_name: &str,
    target_level: &str,
    controls: &Controls,
    split_plan: Option<SplitPlan>,
    seed: u64,
) -> Result<CrossFrameResult> {
    let task = Task::Binomial {
        target: target_level.to_string(),
    };
    cross_frame(
        frame,
        varlist,
        task,
        outcome_name,
        controls,
        split_plan,
        seed,
    )
}
