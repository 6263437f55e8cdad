//! Fitted treatments for single input columns.
//!
//! | code    | input       | output                                            |
//! |---------|-------------|---------------------------------------------------|
//! | `clean` | numeric     | value, with bad entries replaced by training mean |
//! | `isBAD` | numeric     | 1 where the value was bad                         |
//! | `lev`   | categorical | 1 where the level matches (or is pooled-rare)     |
//! | `catN`  | categorical | conditional mean of y minus grand mean            |
//! | `catB`  | categorical | conditional logit of target rate minus grand      |
//! | `catP`  | categorical | training prevalence of the level                  |
//! | `catD`  | categorical | within-level standard deviation of y              |
//!
//! Levels unseen at fit time are "novel". Indicators encode them as 0; the
//! `cat*` treatments use the pooled-rare value when a rare pool exists and a
//! neutral value otherwise (0, except catD which uses its fallback).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{CategoricalColumn, Column, ColumnKind, Level, NumericColumn};
use crate::significance::{single_variable_sig, Outcome};

/// Pseudo-count added to each class when estimating level-conditional
/// target rates for catB.
pub const CATB_EPSILON: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TreatmentCode {
    #[serde(rename = "clean")]
    Clean,
    #[serde(rename = "isBAD")]
    IsBad,
    #[serde(rename = "lev")]
    Lev,
    #[serde(rename = "catN")]
    CatN,
    #[serde(rename = "catB")]
    CatB,
    #[serde(rename = "catP")]
    CatP,
    #[serde(rename = "catD")]
    CatD,
}

impl TreatmentCode {
    pub fn label(self) -> &'static str {
        match self {
            TreatmentCode::Clean => "clean",
            TreatmentCode::IsBad => "isBAD",
            TreatmentCode::Lev => "lev",
            TreatmentCode::CatN => "catN",
            TreatmentCode::CatB => "catB",
            TreatmentCode::CatP => "catP",
            TreatmentCode::CatD => "catD",
        }
    }

    /// Whether the derived variable summarizes a whole categorical column,
    /// hiding extra model degrees of freedom.
    pub fn is_complex(self) -> bool {
        matches!(
            self,
            TreatmentCode::CatN | TreatmentCode::CatB | TreatmentCode::CatP | TreatmentCode::CatD
        )
    }

    pub fn input_kind(self) -> ColumnKind {
        match self {
            TreatmentCode::Clean | TreatmentCode::IsBad => ColumnKind::Numeric,
            _ => ColumnKind::Categorical,
        }
    }
}

impl fmt::Display for TreatmentCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Replaces every character outside `[A-Za-z0-9]` with `.`.
pub fn mangle(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '.' })
        .collect()
}

pub fn derived_name(orig: &str, code: TreatmentCode) -> String {
    format!("{orig}_{}", code.label())
}

pub fn lev_name(orig: &str, target: &LevTarget) -> String {
    match target {
        LevTarget::Level(Level::Missing) => format!("{orig}_lev_NA"),
        LevTarget::Level(Level::Value(v)) => format!("{orig}_lev_x.{}", mangle(v)),
        LevTarget::Rare(_) => format!("{orig}_lev_rare"),
    }
}

/// Level → value lookup, serialized as a list of `[level, value]` pairs with
/// `null` for the missing level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(Level, f64)>", into = "Vec<(Level, f64)>")]
pub struct LevelTable(BTreeMap<Level, f64>);

impl LevelTable {
    pub fn get(&self, level: &Level) -> Option<f64> {
        self.0.get(level).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Level, f64)> {
        self.0.iter().map(|(l, &v)| (l, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<(Level, f64)>> for LevelTable {
    fn from(v: Vec<(Level, f64)>) -> Self {
        LevelTable(v.into_iter().collect())
    }
}

impl From<LevelTable> for Vec<(Level, f64)> {
    fn from(t: LevelTable) -> Self {
        t.0.into_iter().collect()
    }
}

impl FromIterator<(Level, f64)> for LevelTable {
    fn from_iter<I: IntoIterator<Item = (Level, f64)>>(iter: I) -> Self {
        LevelTable(iter.into_iter().collect())
    }
}

/// Rare levels pooled into one group, and the value the group encodes to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct PooledRare {
    pub levels: BTreeSet<Level>,
    pub value: f64,
}

/// Shared lookup for the `cat*` treatments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct LevelEncoding {
    pub table: LevelTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<PooledRare>,
    pub novel: f64,
}

impl LevelEncoding {
    pub fn lookup(&self, level: &Level) -> f64 {
        if let Some(v) = self.table.get(level) {
            return v;
        }
        match &self.pooled {
            Some(p) if p.levels.contains(level) => p.value,
            _ => self.novel,
        }
    }

    fn apply_rows(&self, col: &CategoricalColumn, rows: &[usize]) -> Vec<f64> {
        let slot_values: Vec<f64> = (0..col.slot_count())
            .map(|s| self.lookup(&col.slot_level(s)))
            .collect();
        rows.iter().map(|&r| slot_values[col.slot(r)]).collect()
    }
}

/// Running count, mean, squared deviation and positive count for one group.
#[derive(Clone, Copy, Debug, Default)]
struct GroupStats {
    n: usize,
    mean: f64,
    m2: f64,
    sum: f64,
}

impl GroupStats {
    fn push(&mut self, y: f64) {
        self.n += 1;
        self.sum += y;
        let d = y - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (y - self.mean);
    }

    fn merge(&mut self, o: &GroupStats) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.mean += d * o.n as f64 / n as f64;
        self.sum += o.sum;
        self.n = n;
    }

    /// Sample standard deviation, `None` below two observations.
    fn sd(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.m2 / (self.n - 1) as f64).max(0.0).sqrt())
    }
}

/// Training rows grouped by level, with rare levels optionally pooled.
struct Grouped {
    levels: Vec<(Level, GroupStats)>,
    pooled: Option<(BTreeSet<Level>, GroupStats)>,
    total: GroupStats,
}

impl Grouped {
    fn collect(
        col: &CategoricalColumn,
        y: Option<&[f64]>,
        rows: &[usize],
        pool: Option<&BTreeSet<Level>>,
    ) -> Grouped {
        let mut slots = vec![GroupStats::default(); col.slot_count()];
        let mut total = GroupStats::default();
        for &r in rows {
            let v = y.map_or(0.0, |y| y[r]);
            slots[col.slot(r)].push(v);
            total.push(v);
        }
        let mut levels = Vec::new();
        let mut pooled: Option<(BTreeSet<Level>, GroupStats)> =
            pool.map(|_| (BTreeSet::new(), GroupStats::default()));
        for (s, st) in slots.iter().enumerate() {
            if st.n == 0 {
                continue;
            }
            let level = col.slot_level(s);
            match (&mut pooled, pool) {
                (Some((members, acc)), Some(p)) if p.contains(&level) => {
                    members.insert(level);
                    acc.merge(st);
                }
                _ => levels.push((level, *st)),
            }
        }
        if matches!(&pooled, Some((m, _)) if m.is_empty()) {
            pooled = None;
        }
        levels.sort_by(|a, b| a.0.cmp(&b.0));
        Grouped {
            levels,
            pooled,
            total,
        }
    }

    fn encode<F: Fn(&GroupStats) -> f64>(&self, value: F, default_novel: f64) -> LevelEncoding {
        let table = self
            .levels
            .iter()
            .map(|(l, st)| (l.clone(), value(st)))
            .collect();
        let pooled = self.pooled.as_ref().map(|(levels, st)| PooledRare {
            levels: levels.clone(),
            value: value(st),
        });
        let novel = pooled.as_ref().map_or(default_novel, |p| p.value);
        LevelEncoding {
            table,
            pooled,
            novel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CleanSpec {
    pub orig_name: String,
    pub fill_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct IsBadSpec {
    pub orig_name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevTarget {
    Level(Level),
    Rare(BTreeSet<Level>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct LevSpec {
    pub orig_name: String,
    pub target: LevTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CatNSpec {
    pub orig_name: String,
    pub grand_mean: f64,
    pub sm_factor: f64,
    pub impacts: LevelEncoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CatBSpec {
    pub orig_name: String,
    /// Observed fraction of target rows.
    pub grand_rate: f64,
    pub epsilon: f64,
    pub sm_factor: f64,
    pub deltas: LevelEncoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CatPSpec {
    pub orig_name: String,
    pub prevalences: LevelEncoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CatDSpec {
    pub orig_name: String,
    pub fallback_deviation: f64,
    pub deviations: LevelEncoding,
}

fn expect_numeric<'a>(name: &str, col: &'a Column) -> Result<&'a NumericColumn> {
    col.as_numeric().ok_or(Error::ColumnKind {
        name: name.to_string(),
        expected: "numeric",
        found: "categorical",
    })
}

fn expect_categorical<'a>(name: &str, col: &'a Column) -> Result<&'a CategoricalColumn> {
    col.as_categorical().ok_or(Error::ColumnKind {
        name: name.to_string(),
        expected: "categorical",
        found: "numeric",
    })
}

pub fn fit_clean(orig_name: &str, col: &NumericColumn) -> CleanSpec {
    CleanSpec {
        orig_name: orig_name.to_string(),
        fill_value: crate::frame::column_stats(col).mean,
    }
}

pub fn apply_clean(spec: &CleanSpec, col: &NumericColumn) -> Vec<f64> {
    col.values()
        .iter()
        .zip(col.bad_mask())
        .map(|(&v, &bad)| if bad { spec.fill_value } else { v })
        .collect()
}

pub fn fit_isbad(orig_name: &str) -> IsBadSpec {
    IsBadSpec {
        orig_name: orig_name.to_string(),
    }
}

pub fn apply_isbad(_spec: &IsBadSpec, col: &NumericColumn) -> Vec<f64> {
    col.bad_mask()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect()
}

/// Controls for indicator construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevControls {
    pub min_fraction: f64,
    pub rare_count: usize,
    pub rare_sig: Option<f64>,
}

/// Indicators fitted for one column, and the rare pool (if any) the `cat*`
/// treatments of the same column should share.
#[derive(Clone, Debug, PartialEq)]
pub struct LevFit {
    pub specs: Vec<LevSpec>,
    pub pool: Option<BTreeSet<Level>>,
}

/// One indicator per level with frequency ≥ `min_fraction` (the missing
/// level included). When `rare_count > 0` and `rare_sig` is set, levels seen
/// at most `rare_count` times are pooled into one extra indicator, kept only
/// if that indicator's significance against `outcome` is ≤ `rare_sig`.
/// Without an outcome the pooled indicator scores sig 1.
pub fn fit_levs(
    orig_name: &str,
    col: &CategoricalColumn,
    controls: &LevControls,
    outcome: Option<Outcome<'_>>,
) -> Result<LevFit> {
    let n = col.len();
    let rows: Vec<usize> = (0..n).collect();
    let grouped = Grouped::collect(col, None, &rows, None);
    let mut specs: Vec<LevSpec> = grouped
        .levels
        .iter()
        .filter(|(_, st)| n > 0 && st.n as f64 / n as f64 >= controls.min_fraction)
        .map(|(l, _)| LevSpec {
            orig_name: orig_name.to_string(),
            target: LevTarget::Level(l.clone()),
        })
        .collect();

    let mut pool = None;
    if let (true, Some(threshold)) = (controls.rare_count > 0, controls.rare_sig) {
        let rare: BTreeSet<Level> = grouped
            .levels
            .iter()
            .filter(|(_, st)| st.n <= controls.rare_count)
            .map(|(l, _)| l.clone())
            .collect();
        if !rare.is_empty() {
            let spec = LevSpec {
                orig_name: orig_name.to_string(),
                target: LevTarget::Rare(rare.clone()),
            };
            let indicator = apply_lev(&spec, col);
            let sig = match outcome {
                Some(o) => single_variable_sig(&indicator, o, 0)?.sig,
                None => 1.0,
            };
            if sig <= threshold {
                specs.push(spec);
                pool = Some(rare);
            }
        }
    }
    Ok(LevFit { specs, pool })
}

pub fn apply_lev(spec: &LevSpec, col: &CategoricalColumn) -> Vec<f64> {
    let hit: Vec<bool> = (0..col.slot_count())
        .map(|s| {
            let level = col.slot_level(s);
            match &spec.target {
                LevTarget::Level(l) => *l == level,
                LevTarget::Rare(set) => set.contains(&level),
            }
        })
        .collect();
    (0..col.len())
        .map(|r| if hit[col.slot(r)] { 1.0 } else { 0.0 })
        .collect()
}

fn all_rows(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn check_outcome_len(col: &CategoricalColumn, y: &[f64]) -> Result<()> {
    if col.len() != y.len() {
        return Err(Error::Domain(format!(
            "column has {} rows, outcome has {}",
            col.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Impact code for a numeric outcome:
/// `(Σ_level y + sm·ȳ) / (n_level + sm) − ȳ`.
pub fn fit_catn(
    orig_name: &str,
    col: &CategoricalColumn,
    y: &[f64],
    sm_factor: f64,
) -> Result<CatNSpec> {
    check_outcome_len(col, y)?;
    Ok(fit_catn_rows(
        orig_name,
        col,
        y,
        &all_rows(col.len()),
        sm_factor,
        None,
    ))
}

pub(crate) fn fit_catn_rows(
    orig_name: &str,
    col: &CategoricalColumn,
    y: &[f64],
    rows: &[usize],
    sm_factor: f64,
    pool: Option<&BTreeSet<Level>>,
) -> CatNSpec {
    let g = Grouped::collect(col, Some(y), rows, pool);
    let grand = if g.total.n > 0 {
        g.total.sum / g.total.n as f64
    } else {
        0.0
    };
    let impacts = g.encode(
        |st| (st.sum + sm_factor * grand) / (st.n as f64 + sm_factor) - grand,
        0.0,
    );
    CatNSpec {
        orig_name: orig_name.to_string(),
        grand_mean: grand,
        sm_factor,
        impacts,
    }
}

pub fn apply_catn(spec: &CatNSpec, col: &CategoricalColumn) -> Vec<f64> {
    spec.impacts.apply_rows(col, &all_rows(col.len()))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn smoothed_rate(pos: f64, n: f64, epsilon: f64) -> f64 {
    (pos + epsilon) / (n + 2.0 * epsilon)
}

/// Impact code for a binary outcome: the logit of the smoothed level rate
/// `(n_pos + sm·r + ε) / (n + sm + 2ε)` minus the logit of the smoothed grand
/// rate `(N_pos + ε) / (N + 2ε)`, where `r` is the observed grand rate.
pub fn fit_catb(
    orig_name: &str,
    col: &CategoricalColumn,
    y_indicator: &[f64],
    epsilon: f64,
    sm_factor: f64,
) -> Result<CatBSpec> {
    check_outcome_len(col, y_indicator)?;
    fit_catb_rows(
        orig_name,
        col,
        y_indicator,
        &all_rows(col.len()),
        epsilon,
        sm_factor,
        None,
    )
}

pub(crate) fn fit_catb_rows(
    orig_name: &str,
    col: &CategoricalColumn,
    y: &[f64],
    rows: &[usize],
    epsilon: f64,
    sm_factor: f64,
    pool: Option<&BTreeSet<Level>>,
) -> Result<CatBSpec> {
    let g = Grouped::collect(col, Some(y), rows, pool);
    let n = g.total.n as f64;
    let grand_rate = if n > 0.0 { g.total.sum / n } else { f64::NAN };
    if !(grand_rate > 0.0 && grand_rate < 1.0) {
        return Err(Error::Outcome(
            "binary outcome must take both values in the design rows".into(),
        ));
    }
    let grand_logit = logit(smoothed_rate(g.total.sum, n, epsilon));
    let deltas = g.encode(
        |st| {
            let p = smoothed_rate(
                st.sum + sm_factor * grand_rate,
                st.n as f64 + sm_factor,
                epsilon,
            );
            logit(p) - grand_logit
        },
        0.0,
    );
    Ok(CatBSpec {
        orig_name: orig_name.to_string(),
        grand_rate,
        epsilon,
        sm_factor,
        deltas,
    })
}

pub fn apply_catb(spec: &CatBSpec, col: &CategoricalColumn) -> Vec<f64> {
    spec.deltas.apply_rows(col, &all_rows(col.len()))
}

/// Level prevalence in the training rows; novel levels get 0.
pub fn fit_catp(orig_name: &str, col: &CategoricalColumn) -> CatPSpec {
    fit_catp_rows(orig_name, col, &all_rows(col.len()), None)
}

pub(crate) fn fit_catp_rows(
    orig_name: &str,
    col: &CategoricalColumn,
    rows: &[usize],
    pool: Option<&BTreeSet<Level>>,
) -> CatPSpec {
    let g = Grouped::collect(col, None, rows, pool);
    let n = g.total.n as f64;
    CatPSpec {
        orig_name: orig_name.to_string(),
        prevalences: g.encode(|st| st.n as f64 / n, 0.0),
    }
}

pub fn apply_catp(spec: &CatPSpec, col: &CategoricalColumn) -> Vec<f64> {
    spec.prevalences.apply_rows(col, &all_rows(col.len()))
}

/// Within-level sample standard deviation of y. Levels with fewer than two
/// rows, and novel levels, get the fallback: the largest deviation among
/// levels with at least two rows, or the overall deviation of y when there
/// are none.
pub fn fit_catd(orig_name: &str, col: &CategoricalColumn, y: &[f64]) -> Result<CatDSpec> {
    check_outcome_len(col, y)?;
    Ok(fit_catd_rows(orig_name, col, y, &all_rows(col.len()), None))
}

pub(crate) fn fit_catd_rows(
    orig_name: &str,
    col: &CategoricalColumn,
    y: &[f64],
    rows: &[usize],
    pool: Option<&BTreeSet<Level>>,
) -> CatDSpec {
    let g = Grouped::collect(col, Some(y), rows, pool);
    let fallback = g
        .levels
        .iter()
        .map(|(_, st)| st)
        .chain(g.pooled.as_ref().map(|(_, st)| st))
        .filter_map(GroupStats::sd)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
        .or_else(|| g.total.sd())
        .unwrap_or(0.0);
    let mut deviations = g.encode(|st| st.sd().unwrap_or(fallback), fallback);
    if deviations.pooled.is_none() {
        deviations.novel = fallback;
    }
    CatDSpec {
        orig_name: orig_name.to_string(),
        fallback_deviation: fallback,
        deviations,
    }
}

pub fn apply_catd(spec: &CatDSpec, col: &CategoricalColumn) -> Vec<f64> {
    spec.deviations.apply_rows(col, &all_rows(col.len()))
}

/// A fitted derived variable: its name plus the treatment producing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all_fields = "camelCase", deny_unknown_fields)]
pub enum Treatment {
    #[serde(rename = "clean")]
    Clean { var_name: String, spec: CleanSpec },
    #[serde(rename = "isBAD")]
    IsBad { var_name: String, spec: IsBadSpec },
    #[serde(rename = "lev")]
    Lev { var_name: String, spec: LevSpec },
    #[serde(rename = "catN")]
    CatN { var_name: String, spec: CatNSpec },
    #[serde(rename = "catB")]
    CatB { var_name: String, spec: CatBSpec },
    #[serde(rename = "catP")]
    CatP { var_name: String, spec: CatPSpec },
    #[serde(rename = "catD")]
    CatD { var_name: String, spec: CatDSpec },
}

impl Treatment {
    pub fn var_name(&self) -> &str {
        match self {
            Treatment::Clean { var_name, .. }
            | Treatment::IsBad { var_name, .. }
            | Treatment::Lev { var_name, .. }
            | Treatment::CatN { var_name, .. }
            | Treatment::CatB { var_name, .. }
            | Treatment::CatP { var_name, .. }
            | Treatment::CatD { var_name, .. } => var_name,
        }
    }

    pub(crate) fn set_var_name(&mut self, name: String) {
        match self {
            Treatment::Clean { var_name, .. }
            | Treatment::IsBad { var_name, .. }
            | Treatment::Lev { var_name, .. }
            | Treatment::CatN { var_name, .. }
            | Treatment::CatB { var_name, .. }
            | Treatment::CatP { var_name, .. }
            | Treatment::CatD { var_name, .. } => *var_name = name,
        }
    }

    pub fn orig_name(&self) -> &str {
        match self {
            Treatment::Clean { spec, .. } => &spec.orig_name,
            Treatment::IsBad { spec, .. } => &spec.orig_name,
            Treatment::Lev { spec, .. } => &spec.orig_name,
            Treatment::CatN { spec, .. } => &spec.orig_name,
            Treatment::CatB { spec, .. } => &spec.orig_name,
            Treatment::CatP { spec, .. } => &spec.orig_name,
            Treatment::CatD { spec, .. } => &spec.orig_name,
        }
    }

    pub fn code(&self) -> TreatmentCode {
        match self {
            Treatment::Clean { .. } => TreatmentCode::Clean,
            Treatment::IsBad { .. } => TreatmentCode::IsBad,
            Treatment::Lev { .. } => TreatmentCode::Lev,
            Treatment::CatN { .. } => TreatmentCode::CatN,
            Treatment::CatB { .. } => TreatmentCode::CatB,
            Treatment::CatP { .. } => TreatmentCode::CatP,
            Treatment::CatD { .. } => TreatmentCode::CatD,
        }
    }

    /// Encodes every row of `col`, which must be the kind this treatment was
    /// designed on.
    pub fn apply(&self, col: &Column) -> Result<Vec<f64>> {
        let name = self.orig_name();
        Ok(match self {
            Treatment::Clean { spec, .. } => apply_clean(spec, expect_numeric(name, col)?),
            Treatment::IsBad { spec, .. } => apply_isbad(spec, expect_numeric(name, col)?),
            Treatment::Lev { spec, .. } => apply_lev(spec, expect_categorical(name, col)?),
            Treatment::CatN { spec, .. } => apply_catn(spec, expect_categorical(name, col)?),
            Treatment::CatB { spec, .. } => apply_catb(spec, expect_categorical(name, col)?),
            Treatment::CatP { spec, .. } => apply_catp(spec, expect_categorical(name, col)?),
            Treatment::CatD { spec, .. } => apply_catd(spec, expect_categorical(name, col)?),
        })
    }

    /// All finite-valued parameters are finite; used when loading plans.
    pub(crate) fn is_finite(&self) -> bool {
        fn enc(e: &LevelEncoding) -> bool {
            e.novel.is_finite()
                && e.table.iter().all(|(_, v)| v.is_finite())
                && e.pooled.as_ref().is_none_or(|p| p.value.is_finite())
        }
        match self {
            Treatment::Clean { spec, .. } => spec.fill_value.is_finite(),
            Treatment::IsBad { .. } | Treatment::Lev { .. } => true,
            Treatment::CatN { spec, .. } => spec.grand_mean.is_finite() && enc(&spec.impacts),
            Treatment::CatB { spec, .. } => spec.grand_rate.is_finite() && enc(&spec.deltas),
            Treatment::CatP { spec, .. } => enc(&spec.prevalences),
            Treatment::CatD { spec, .. } => {
                spec.fallback_deviation.is_finite() && enc(&spec.deviations)
            }
        }
    }
}

/// Fits the `cat*` treatment `code` on `rows` of `col` and encodes `app`
/// rows. Used for out-of-fold encodings, so a training subset whose outcome
/// does not vary (catB) encodes every app row as 0.
pub(crate) struct FoldEncoder<'a> {
    pub orig_name: &'a str,
    pub col: &'a CategoricalColumn,
    pub y: &'a [f64],
    pub sm_factor: f64,
    pub pool: Option<&'a BTreeSet<Level>>,
}

impl FoldEncoder<'_> {
    pub fn encode(&self, code: TreatmentCode, train: &[usize], app: &[usize]) -> Vec<f64> {
        let enc = match code {
            TreatmentCode::CatN => {
                fit_catn_rows(
                    self.orig_name,
                    self.col,
                    self.y,
                    train,
                    self.sm_factor,
                    self.pool,
                )
                .impacts
            }
            TreatmentCode::CatB => {
                match fit_catb_rows(
                    self.orig_name,
                    self.col,
                    self.y,
                    train,
                    CATB_EPSILON,
                    self.sm_factor,
                    self.pool,
                ) {
                    Ok(spec) => spec.deltas,
                    Err(_) => return vec![0.0; app.len()],
                }
            }
            TreatmentCode::CatP => {
                fit_catp_rows(self.orig_name, self.col, train, self.pool).prevalences
            }
            TreatmentCode::CatD => {
                fit_catd_rows(self.orig_name, self.col, self.y, train, self.pool).deviations
            }
            other => unreachable!("{other} is not fold-encoded"),
        };
        enc.apply_rows(self.col, app)
    }
}
