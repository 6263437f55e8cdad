//! Building treatment plans from a training frame.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{
    self, derived_name, lev_name, CatBSpec, CatDSpec, CatNSpec, CatPSpec, FoldEncoder, LevControls,
    Treatment, TreatmentCode, CATB_EPSILON,
};
use crate::error::{Error, Result};
use crate::frame::{CategoricalColumn, Column, ColumnKind, Frame, NumericColumn};
use crate::significance::{cross_validated_sig, ols_line, single_variable_sig, Outcome, SigResult};
use crate::splits::{default_plan, SplitPlan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Task {
    Numeric,
    Binomial {
        target: String,
    },
    #[serde(rename = "none")]
    NoTarget,
}

impl Task {
    pub fn label(&self) -> &'static str {
        match self {
            Task::Numeric => "numeric",
            Task::Binomial { .. } => "binomial",
            Task::NoTarget => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Controls {
    /// Minimum level frequency for an indicator column.
    pub min_fraction: f64,
    /// Levels seen at most this many times are candidates for pooling.
    pub rare_count: usize,
    /// Pooling threshold; `None` disables pooling.
    pub rare_sig: Option<f64>,
    /// Pseudo-observations of the grand mean added to each level.
    pub sm_factor: f64,
    /// Folds used for cross-validated significance.
    pub ncross: usize,
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            min_fraction: 0.02,
            rare_count: 0,
            rare_sig: None,
            sm_factor: 0.0,
            ncross: 3,
        }
    }
}

impl Controls {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_fraction) {
            return Err(Error::Design(format!(
                "minFraction {} outside [0, 1]",
                self.min_fraction
            )));
        }
        if let Some(p) = self.rare_sig {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Design(format!("rareSig {p} outside [0, 1]")));
            }
        }
        if !(self.sm_factor.is_finite() && self.sm_factor >= 0.0) {
            return Err(Error::Design(format!(
                "smFactor {} must be finite and >= 0",
                self.sm_factor
            )));
        }
        if self.ncross < 2 {
            return Err(Error::Design(format!(
                "ncross must be at least 2, got {}",
                self.ncross
            )));
        }
        Ok(())
    }

    fn lev_controls(&self) -> LevControls {
        LevControls {
            min_fraction: self.min_fraction,
            rare_count: self.rare_count,
            rare_sig: self.rare_sig,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScoreFrameRow {
    pub var_name: String,
    pub sig: f64,
    pub extra_model_degrees: usize,
    pub orig_name: String,
    pub code: TreatmentCode,
    /// False when the significance fit hit its iteration cap.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub converged: bool,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

/// Centering and slope for y-aware scaling of one derived variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScaleParams {
    pub var_name: String,
    pub mean: f64,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InputColumn {
    pub name: String,
    pub kind: ColumnKind,
}

/// A fitted, serializable set of treatments plus their diagnostics.
/// `specs[i]` and `score_frame[i]` describe the same derived variable.
#[derive(Clone, Debug, PartialEq)]
pub struct TreatmentPlan {
    pub task: Task,
    pub outcome: Option<String>,
    pub mean_y: Option<f64>,
    pub grand_rate: Option<f64>,
    pub controls: Controls,
    pub inputs: Vec<InputColumn>,
    pub specs: Vec<Treatment>,
    pub score_frame: Vec<ScoreFrameRow>,
    /// Empty for plans without an outcome.
    pub scaling: Vec<ScaleParams>,
}

impl TreatmentPlan {
    pub fn var_names(&self) -> impl Iterator<Item = &str> {
        self.score_frame.iter().map(|r| r.var_name.as_str())
    }

    pub fn input_kind(&self, name: &str) -> Option<ColumnKind> {
        self.inputs.iter().find(|c| c.name == name).map(|c| c.kind)
    }

    /// Checks the invariants a loaded plan must satisfy.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::PlanFormat(msg));
        if self.specs.len() != self.score_frame.len() {
            return bad(format!(
                "{} specs but {} scoreFrame rows",
                self.specs.len(),
                self.score_frame.len()
            ));
        }
        let mut seen = HashSet::new();
        for (spec, row) in self.specs.iter().zip(&self.score_frame) {
            if spec.var_name() != row.var_name
                || spec.orig_name() != row.orig_name
                || spec.code() != row.code
            {
                return bad(format!(
                    "spec {} does not match its scoreFrame row",
                    spec.var_name()
                ));
            }
            if !seen.insert(row.var_name.as_str()) {
                return bad(format!("duplicate derived variable {}", row.var_name));
            }
            if !(0.0..=1.0).contains(&row.sig) {
                return bad(format!("sig of {} outside [0, 1]", row.var_name));
            }
            match self.input_kind(spec.orig_name()) {
                Some(k) if k == spec.code().input_kind() => {}
                _ => {
                    return bad(format!(
                        "input {} missing or of wrong kind",
                        spec.orig_name()
                    ))
                }
            }
            if !spec.is_finite() {
                return bad(format!("non-finite parameter in {}", spec.var_name()));
            }
        }
        match (&self.task, &self.outcome) {
            (Task::NoTarget, None) => {
                if !self.scaling.is_empty() {
                    return bad("scaling parameters on a plan without outcome".into());
                }
            }
            (Task::NoTarget, Some(_)) => return bad("outcome on a plan without target".into()),
            (_, None) => return bad("missing outcome name".into()),
            (_, Some(_)) => {
                if self.scaling.len() != self.specs.len()
                    || self.scaling.iter().zip(&self.score_frame).any(|(s, r)| {
                        s.var_name != r.var_name || !s.mean.is_finite() || !s.slope.is_finite()
                    })
                {
                    return bad("scaling parameters do not match scoreFrame".into());
                }
            }
        }
        Ok(())
    }
}

/// The outcome as the design sees it.
enum DesignOutcome {
    Numeric(Vec<f64>),
    Binary(Vec<f64>),
    None,
}

impl DesignOutcome {
    fn as_outcome(&self) -> Option<Outcome<'_>> {
        match self {
            DesignOutcome::Numeric(y) => Some(Outcome::Numeric(y)),
            DesignOutcome::Binary(y) => Some(Outcome::Binary(y)),
            DesignOutcome::None => None,
        }
    }
}

fn is_constant(v: &[f64]) -> bool {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    v.is_empty() || hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1.0)
}

pub(crate) fn numeric_outcome(frame: &Frame, name: &str) -> Result<Vec<f64>> {
    let col = frame.numeric(name)?;
    if col.bad_count() > 0 {
        return Err(Error::Outcome(format!(
            "outcome {name:?} has {} missing or non-finite values",
            col.bad_count()
        )));
    }
    let y = col.values().to_vec();
    if is_constant(&y) {
        return Err(Error::Outcome(format!(
            "outcome {name:?} must take more than one value"
        )));
    }
    Ok(y)
}

/// 0/1 indicator of `outcome == target`. Numeric outcomes compare as numbers.
pub fn target_indicator(frame: &Frame, name: &str, target: &str) -> Result<Vec<f64>> {
    let y: Vec<f64> = match frame.column(name)? {
        Column::Numeric(col) => {
            if col.bad_count() > 0 {
                return Err(Error::Outcome(format!(
                    "outcome {name:?} has missing values"
                )));
            }
            let t: f64 = crate::frame::parse_numeric(target).ok_or_else(|| {
                Error::Outcome(format!(
                    "target {target:?} is not a number but outcome {name:?} is numeric"
                ))
            })?;
            col.values()
                .iter()
                .map(|&v| if v == t { 1.0 } else { 0.0 })
                .collect()
        }
        Column::Categorical(col) => {
            if col.codes().iter().any(Option::is_none) {
                return Err(Error::Outcome(format!(
                    "outcome {name:?} has missing values"
                )));
            }
            (0..col.len())
                .map(|r| if col.get(r) == Some(target) { 1.0 } else { 0.0 })
                .collect()
        }
    };
    let pos = y.iter().filter(|&&v| v == 1.0).count();
    if pos == 0 {
        return Err(Error::Outcome(format!(
            "target {target:?} never occurs in {name:?}"
        )));
    }
    if pos == y.len() {
        return Err(Error::Outcome(format!(
            "target {target:?} is the only value of {name:?}"
        )));
    }
    Ok(y)
}

fn check_varlist(
    frame: &Frame,
    varlist: &[String],
    outcome: Option<&str>,
) -> Result<Vec<InputColumn>> {
    if varlist.is_empty() {
        return Err(Error::Design("empty variable list".into()));
    }
    let mut seen = HashSet::new();
    let mut inputs = Vec::with_capacity(varlist.len());
    for v in varlist {
        if Some(v.as_str()) == outcome {
            return Err(Error::Design(format!(
                "outcome {v:?} cannot be an input variable"
            )));
        }
        if !seen.insert(v.as_str()) {
            return Err(Error::Design(format!("variable {v:?} listed twice")));
        }
        let kind = frame.column(v)?.kind();
        inputs.push(InputColumn {
            name: v.clone(),
            kind,
        });
    }
    Ok(inputs)
}

/// One derived variable before names are deduplicated.
struct Derived {
    treatment: Treatment,
    sig: SigResult,
    /// Design-time encoding of every row (naive path).
    naive: Vec<f64>,
    /// Out-of-fold encoding, for complex variables.
    cross: Option<Vec<f64>>,
}

struct Context<'a> {
    controls: &'a Controls,
    outcome: &'a DesignOutcome,
    split: Option<&'a SplitPlan>,
}

impl Context<'_> {
    fn simple(&self, treatment: Treatment, naive: Vec<f64>) -> Result<Option<Derived>> {
        if is_constant(&naive) {
            return Ok(None);
        }
        let sig = match self.outcome.as_outcome() {
            Some(o) => single_variable_sig(&naive, o, 0)?,
            None => SigResult {
                sig: 1.0,
                extra_model_degrees: 0,
                converged: true,
            },
        };
        Ok(Some(Derived {
            treatment,
            sig,
            naive,
            cross: None,
        }))
    }

    fn complex(
        &self,
        treatment: Treatment,
        naive: Vec<f64>,
        extra: usize,
        fold: &FoldEncoder<'_>,
    ) -> Result<Option<Derived>> {
        if is_constant(&naive) {
            return Ok(None);
        }
        let code = treatment.code();
        let (sig, cross) = match (self.outcome.as_outcome(), self.split) {
            (Some(o), Some(plan)) => {
                let (sig, x) = cross_validated_sig(plan, o, extra, |train, app| {
                    fold.encode(code, train, app)
                })?;
                (sig, Some(x))
            }
            _ => (
                SigResult {
                    sig: 1.0,
                    extra_model_degrees: extra,
                    converged: true,
                },
                None,
            ),
        };
        Ok(Some(Derived {
            treatment,
            sig,
            naive,
            cross,
        }))
    }

    fn numeric(&self, name: &str, col: &NumericColumn) -> Result<Vec<Derived>> {
        let mut out = Vec::new();
        if col.bad_count() == col.len() {
            return Ok(out);
        }
        let spec = encoders::fit_clean(name, col);
        let naive = encoders::apply_clean(&spec, col);
        let t = Treatment::Clean {
            var_name: derived_name(name, TreatmentCode::Clean),
            spec,
        };
        out.extend(self.simple(t, naive)?);
        if col.bad_count() > 0 {
            let spec = encoders::fit_isbad(name);
            let naive = encoders::apply_isbad(&spec, col);
            let t = Treatment::IsBad {
                var_name: derived_name(name, TreatmentCode::IsBad),
                spec,
            };
            out.extend(self.simple(t, naive)?);
        }
        Ok(out)
    }

    fn categorical(&self, name: &str, col: &CategoricalColumn) -> Result<Vec<Derived>> {
        let mut out = Vec::new();
        let levs = encoders::fit_levs(
            name,
            col,
            &self.controls.lev_controls(),
            self.outcome.as_outcome(),
        )?;
        for spec in levs.specs {
            let naive = encoders::apply_lev(&spec, col);
            let t = Treatment::Lev {
                var_name: lev_name(name, &spec.target),
                spec,
            };
            out.extend(self.simple(t, naive)?);
        }

        let observed = {
            let mut seen = vec![false; col.slot_count()];
            (0..col.len()).for_each(|r| seen[col.slot(r)] = true);
            seen.iter().filter(|&&s| s).count()
        };
        let extra = observed.saturating_sub(1);
        let rows: Vec<usize> = (0..col.len()).collect();
        let pool = levs.pool.as_ref();
        let y: &[f64] = match self.outcome {
            DesignOutcome::Numeric(y) | DesignOutcome::Binary(y) => y,
            DesignOutcome::None => &[],
        };
        let sm = self.controls.sm_factor;
        let fold = FoldEncoder {
            orig_name: name,
            col,
            y,
            sm_factor: sm,
            pool,
        };

        let catp: CatPSpec = encoders::fit_catp_rows(name, col, &rows, pool);
        let naive = encoders::apply_catp(&catp, col);
        let t = Treatment::CatP {
            var_name: derived_name(name, TreatmentCode::CatP),
            spec: catp,
        };
        out.extend(self.complex(t, naive, extra, &fold)?);

        match self.outcome {
            DesignOutcome::Numeric(y) => {
                let catn: CatNSpec = encoders::fit_catn_rows(name, col, y, &rows, sm, pool);
                let naive = encoders::apply_catn(&catn, col);
                let t = Treatment::CatN {
                    var_name: derived_name(name, TreatmentCode::CatN),
                    spec: catn,
                };
                out.extend(self.complex(t, naive, extra, &fold)?);

                let catd: CatDSpec = encoders::fit_catd_rows(name, col, y, &rows, pool);
                let naive = encoders::apply_catd(&catd, col);
                let t = Treatment::CatD {
                    var_name: derived_name(name, TreatmentCode::CatD),
                    spec: catd,
                };
                out.extend(self.complex(t, naive, extra, &fold)?);
            }
            DesignOutcome::Binary(y) => {
                let catb: CatBSpec =
                    encoders::fit_catb_rows(name, col, y, &rows, CATB_EPSILON, sm, pool)?;
                let naive = encoders::apply_catb(&catb, col);
                let t = Treatment::CatB {
                    var_name: derived_name(name, TreatmentCode::CatB),
                    spec: catb,
                };
                out.extend(self.complex(t, naive, extra, &fold)?);
            }
            DesignOutcome::None => {}
        }
        Ok(out)
    }
}

/// A plan together with the design-time encodings of its training rows.
pub(crate) struct Designed {
    pub plan: TreatmentPlan,
    pub naive: Vec<Vec<f64>>,
    pub cross: Vec<Option<Vec<f64>>>,
}

fn dedupe(names: &mut [Derived]) {
    let mut seen: HashSet<String> = HashSet::new();
    for d in names.iter_mut() {
        let base = d.treatment.var_name().to_string();
        let mut name = base.clone();
        let mut i = 1;
        while !seen.insert(name.clone()) {
            name = format!("{base}_{i}");
            i += 1;
        }
        if name != base {
            d.treatment.set_var_name(name);
        }
    }
}

pub(crate) fn design(
    frame: &Frame,
    varlist: &[String],
    task: Task,
    outcome_name: Option<&str>,
    controls: &Controls,
    split: Option<&SplitPlan>,
    seed: u64,
) -> Result<Designed> {
    controls.validate()?;
    let inputs = check_varlist(frame, varlist, outcome_name)?;
    let (outcome, mean_y, grand_rate) = match (&task, outcome_name) {
        (Task::Numeric, Some(o)) => {
            let y = numeric_outcome(frame, o)?;
            let m = y.iter().sum::<f64>() / y.len() as f64;
            (DesignOutcome::Numeric(y), Some(m), None)
        }
        (Task::Binomial { target }, Some(o)) => {
            let y = target_indicator(frame, o, target)?;
            let r = y.iter().sum::<f64>() / y.len() as f64;
            (DesignOutcome::Binary(y), None, Some(r))
        }
        (Task::NoTarget, None) => (DesignOutcome::None, None, None),
        (Task::NoTarget, Some(_)) => {
            return Err(Error::Design("no-target design takes no outcome".into()))
        }
        (_, None) => return Err(Error::Design("outcome name required".into())),
    };

    let default_split;
    let split = match (&outcome, split) {
        (DesignOutcome::None, _) => None,
        (_, Some(p)) => {
            if p.nrows() != frame.nrows() {
                return Err(Error::Split(format!(
                    "split plan covers {} rows, frame has {}",
                    p.nrows(),
                    frame.nrows()
                )));
            }
            Some(p)
        }
        (DesignOutcome::Numeric(y) | DesignOutcome::Binary(y), None) => {
            default_split = default_plan(frame.nrows(), controls.ncross, y, seed)?;
            Some(&default_split)
        }
    };

    let ctx = Context {
        controls,
        outcome: &outcome,
        split,
    };
    let per_var: Vec<Vec<Derived>> = varlist
        .par_iter()
        .map(|v| match frame.column(v)? {
            Column::Numeric(c) => ctx.numeric(v, c),
            Column::Categorical(c) => ctx.categorical(v, c),
        })
        .collect::<Result<_>>()?;
    let mut derived: Vec<Derived> = per_var.into_iter().flatten().collect();
    dedupe(&mut derived);

    let y = match &outcome {
        DesignOutcome::Numeric(y) | DesignOutcome::Binary(y) => Some(y.as_slice()),
        DesignOutcome::None => None,
    };
    let mut specs = Vec::with_capacity(derived.len());
    let mut score_frame = Vec::with_capacity(derived.len());
    let mut scaling = Vec::new();
    let mut naive = Vec::with_capacity(derived.len());
    let mut cross = Vec::with_capacity(derived.len());
    for d in derived {
        let var_name = d.treatment.var_name().to_string();
        if let Some(y) = y {
            let mean = d.naive.iter().sum::<f64>() / d.naive.len() as f64;
            let (slope, _) = ols_line(&d.naive, y);
            scaling.push(ScaleParams {
                var_name: var_name.clone(),
                mean,
                slope,
            });
        }
        score_frame.push(ScoreFrameRow {
            var_name,
            sig: d.sig.sig,
            extra_model_degrees: d.sig.extra_model_degrees,
            orig_name: d.treatment.orig_name().to_string(),
            code: d.treatment.code(),
            converged: d.sig.converged,
        });
        specs.push(d.treatment);
        naive.push(d.naive);
        cross.push(d.cross);
    }

    Ok(Designed {
        plan: TreatmentPlan {
            task,
            outcome: outcome_name.map(str::to_string),
            mean_y,
            grand_rate,
            controls: controls.clone(),
            inputs,
            specs,
            score_frame,
            scaling,
        },
        naive,
        cross,
    })
}

/// Designs a plan for a numeric outcome.
pub fn design_treatments_n(
    frame: &Frame,
    varlist: &[String],
    outcome_name: &str,
    controls: &Controls,
    seed: u64,
) -> Result<TreatmentPlan> {
    design(
        frame,
        varlist,
        Task::Numeric,
        Some(outcome_name),
        controls,
        None,
        seed,
    )
    .map(|d| d.plan)
}

/// Designs a plan for a binary outcome, `outcome == target_level`.
pub fn design_treatments_c(
    frame: &Frame,
    varlist: &[String],
    outcome_name: &str,
    target_level: &str,
    controls: &Controls,
    seed: u64,
) -> Result<TreatmentPlan> {
    let task = Task::Binomial {
        target: target_level.to_string(),
    };
    design(
        frame,
        varlist,
        task,
        Some(outcome_name),
        controls,
        None,
        seed,
    )
    .map(|d| d.plan)
}

/// Designs a plan without an outcome: only clean, isBAD, lev and catP, all
/// scored with sig 1.
pub fn design_treatments_z(
    frame: &Frame,
    varlist: &[String],
    controls: &Controls,
) -> Result<TreatmentPlan> {
    design(frame, varlist, Task::NoTarget, None, controls, None, 0).map(|d| d.plan)
}
