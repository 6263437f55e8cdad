//! Cross-validation split plans.
//!
//! A plan is an ordered list of folds, each naming a training row set and a
//! disjoint application row set. Models fit on `train` are only ever used to
//! score rows in `app`.
//!
//! All randomness comes from [`Xoshiro256PlusPlus`] seeded through SplitMix64
//! (`seed_from_u64`), so a given seed yields the same plan on every platform.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::CategoricalColumn;

/// Fold count used by cross frames and cross-validated significance.
pub const DEFAULT_NSPLITS: usize = 3;

pub fn seeded_rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fold {
    pub train: Vec<usize>,
    pub app: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitMethod {
    OneWay,
    KWay,
    StratifiedY,
    Grouped,
    UserSupplied,
}

impl SplitMethod {
    pub fn label(self) -> &'static str {
        match self {
            SplitMethod::OneWay => "oneway",
            SplitMethod::KWay => "kwaycross",
            SplitMethod::StratifiedY => "kwaycrossystratified",
            SplitMethod::Grouped => "kwaycrossystratifiedgrouped",
            SplitMethod::UserSupplied => "userfunction",
        }
    }

    /// Built-in plans partition the rows; user plans need not.
    pub fn is_partition(self) -> bool {
        !matches!(self, SplitMethod::UserSupplied)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    folds: Vec<Fold>,
    method: SplitMethod,
    nrows: usize,
}

impl SplitPlan {
    /// Validates and builds a plan. Every fold must have nonempty, disjoint,
    /// in-range train and app sets; partition methods must also have pairwise
    /// disjoint app sets covering every row.
    pub fn new(folds: Vec<Fold>, method: SplitMethod, nrows: usize) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Split("plan has no folds".into()));
        }
        let mut in_train = vec![false; nrows];
        let mut app_owner: Vec<Option<usize>> = vec![None; nrows];
        for (i, fold) in folds.iter().enumerate() {
            if fold.train.is_empty() || fold.app.is_empty() {
                return Err(Error::Split(format!(
                    "fold {i} has an empty train or app set"
                )));
            }
            in_train.iter_mut().for_each(|b| *b = false);
            for &r in &fold.train {
                if r >= nrows {
                    return Err(Error::Split(format!(
                        "fold {i}: train index {r} out of range for {nrows} rows"
                    )));
                }
                in_train[r] = true;
            }
            for &r in &fold.app {
                if r >= nrows {
                    return Err(Error::Split(format!(
                        "fold {i}: app index {r} out of range for {nrows} rows"
                    )));
                }
                if in_train[r] {
                    return Err(Error::Split(format!(
                        "fold {i}: row {r} is in both train and app"
                    )));
                }
                if method.is_partition() {
                    if let Some(j) = app_owner[r] {
                        return Err(Error::Split(format!(
                            "row {r} is in the app sets of folds {j} and {i}"
                        )));
                    }
                }
                app_owner[r] = Some(i);
            }
        }
        if method.is_partition() {
            if let Some(r) = app_owner.iter().position(Option::is_none) {
                return Err(Error::Split(format!("row {r} is not in any app set")));
            }
        }
        Ok(SplitPlan {
            folds,
            method,
            nrows,
        })
    }

    pub fn folds(&self) -> &[Fold] {
        &self.folds
    }

    pub fn method(&self) -> SplitMethod {
        self.method
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.folds).expect("folds serialize")
    }
}

fn check_nrows(nrows: usize) -> Result<()> {
    if nrows < 2 {
        return Err(Error::Split(format!("need at least 2 rows, got {nrows}")));
    }
    Ok(())
}

fn check_k(nrows: usize, k: usize) -> Result<()> {
    check_nrows(nrows)?;
    if k < 2 {
        return Err(Error::Split(format!("need at least 2 splits, got {k}")));
    }
    if k > nrows {
        return Err(Error::Split(format!(
            "{k} splits requested for only {nrows} rows"
        )));
    }
    Ok(())
}

/// Turns a row → fold assignment into a plan with sorted index sets.
fn plan_from_assignment(assign: &[usize], k: usize, method: SplitMethod) -> Result<SplitPlan> {
    let nrows = assign.len();
    let mut apps: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (r, &f) in assign.iter().enumerate() {
        apps[f].push(r);
    }
    let folds = apps
        .into_iter()
        .enumerate()
        .map(|(f, app)| Fold {
            train: (0..nrows).filter(|&r| assign[r] != f).collect(),
            app,
        })
        .collect();
    SplitPlan::new(folds, method, nrows)
}

/// Leave-one-out plan: fold `i` applies to row `i` and trains on the rest.
pub fn one_way_holdout(nrows: usize) -> Result<SplitPlan> {
    check_nrows(nrows)?;
    let assign: Vec<usize> = (0..nrows).collect();
    plan_from_assignment(&assign, nrows, SplitMethod::OneWay)
}

/// Unstratified k-way plan: rows are shuffled and dealt round-robin, so app
/// set sizes differ by at most one.
pub fn k_way_cross_validation(nrows: usize, k: usize, seed: u64) -> Result<SplitPlan> {
    check_k(nrows, k)?;
    let mut rng = seeded_rng(seed);
    let mut perm: Vec<usize> = (0..nrows).collect();
    perm.shuffle(&mut rng);
    let mut assign = vec![0; nrows];
    for (i, &r) in perm.iter().enumerate() {
        assign[r] = i % k;
    }
    plan_from_assignment(&assign, k, SplitMethod::KWay)
}

/// Deals items, already ordered by a stratification key, into `k` folds: each
/// consecutive block of `k` items goes one per fold under a fresh random
/// rotation of the fold order.
fn deal_blocks<R: Rng>(ordered: &[usize], k: usize, rng: &mut R, assign: &mut [usize]) {
    let mut order: Vec<usize> = (0..k).collect();
    for block in ordered.chunks(k) {
        order.shuffle(rng);
        for (&item, &f) in block.iter().zip(&order) {
            assign[item] = f;
        }
    }
}

/// Sorts indices by key, breaking ties by a random draw.
fn order_by_key<R: RngCore>(keys: &[f64], rng: &mut R) -> Vec<usize> {
    let ties: Vec<u64> = (0..keys.len()).map(|_| rng.next_u64()).collect();
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(ties[a].cmp(&ties[b])));
    idx
}

fn check_y(y: &[f64], nrows: usize) -> Result<()> {
    if y.len() != nrows {
        return Err(Error::Split(format!(
            "outcome has {} entries for {nrows} rows",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Split("outcome has non-finite entries".into()));
    }
    Ok(())
}

/// Y-stratified k-way plan: rows sorted by `y` (random tie-breaking) are dealt
/// in blocks of `k`, one row per fold, so every fold sees a similar outcome
/// distribution.
pub fn k_way_stratified_y(nrows: usize, k: usize, y: &[f64], seed: u64) -> Result<SplitPlan> {
    check_k(nrows, k)?;
    check_y(y, nrows)?;
    let mut rng = seeded_rng(seed);
    let ordered = order_by_key(y, &mut rng);
    let mut assign = vec![0; nrows];
    deal_blocks(&ordered, k, &mut rng, &mut assign);
    plan_from_assignment(&assign, k, SplitMethod::StratifiedY)
}

/// Grouped k-way plan: whole groups are assigned to folds, stratified on each
/// group's mean outcome. Missing group values form one group.
pub fn grouped_k_way(
    nrows: usize,
    k: usize,
    groups: &CategoricalColumn,
    y: Option<&[f64]>,
    seed: u64,
) -> Result<SplitPlan> {
    check_k(nrows, k)?;
    if groups.len() != nrows {
        return Err(Error::Split(format!(
            "group column has {} entries for {nrows} rows",
            groups.len()
        )));
    }
    if let Some(y) = y {
        check_y(y, nrows)?;
    }
    let slots = groups.slot_count();
    let mut sums = vec![0.0; slots];
    let mut counts = vec![0usize; slots];
    for r in 0..nrows {
        let s = groups.slot(r);
        counts[s] += 1;
        sums[s] += y.map_or(0.0, |y| y[r]);
    }
    let present: Vec<usize> = (0..slots).filter(|&s| counts[s] > 0).collect();
    if present.len() < k {
        return Err(Error::Split(format!(
            "{} distinct groups cannot fill {k} folds",
            present.len()
        )));
    }
    let means: Vec<f64> = present
        .iter()
        .map(|&s| sums[s] / counts[s] as f64)
        .collect();
    let mut rng = seeded_rng(seed);
    let ordered = order_by_key(&means, &mut rng);
    let mut group_fold = vec![0; present.len()];
    deal_blocks(&ordered, k, &mut rng, &mut group_fold);
    let mut slot_fold = vec![0; slots];
    for (g, &s) in present.iter().enumerate() {
        slot_fold[s] = group_fold[g];
    }
    let assign: Vec<usize> = (0..nrows).map(|r| slot_fold[groups.slot(r)]).collect();
    plan_from_assignment(&assign, k, SplitMethod::Grouped)
}

/// The plan used when the caller supplies none: y-stratified with `k` folds,
/// falling back to leave-one-out when there are fewer than `2k` rows.
pub fn default_plan(nrows: usize, k: usize, y: &[f64], seed: u64) -> Result<SplitPlan> {
    if nrows < 2 * k {
        one_way_holdout(nrows)
    } else {
        k_way_stratified_y(nrows, k, y, seed)
    }
}

/// Which built-in splitter to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitStrategy {
    OneWay,
    KWay,
    StratifiedY,
    Grouped,
}

/// Inputs a splitter may consult.
#[derive(Clone, Copy, Debug)]
pub struct SplitRequest<'a> {
    pub nrows: usize,
    pub nsplits: usize,
    pub groups: Option<&'a CategoricalColumn>,
    pub y: Option<&'a [f64]>,
    pub seed: u64,
}

impl SplitStrategy {
    pub fn plan(self, req: &SplitRequest<'_>) -> Result<SplitPlan> {
        match self {
            SplitStrategy::OneWay => one_way_holdout(req.nrows),
            SplitStrategy::KWay => k_way_cross_validation(req.nrows, req.nsplits, req.seed),
            SplitStrategy::StratifiedY => {
                let y = req
                    .y
                    .ok_or_else(|| Error::Split("stratified plan needs an outcome".into()))?;
                k_way_stratified_y(req.nrows, req.nsplits, y, req.seed)
            }
            SplitStrategy::Grouped => {
                let groups = req
                    .groups
                    .ok_or_else(|| Error::Split("grouped plan needs a group column".into()))?;
                grouped_k_way(req.nrows, req.nsplits, groups, req.y, req.seed)
            }
        }
    }
}

/// Parses a user plan: a JSON array of `{"train": [...], "app": [...]}` with
/// 0-based row indices. App sets may overlap across folds.
pub fn split_plan_from_json(text: &str, nrows: usize) -> Result<SplitPlan> {
    let folds: Vec<Fold> =
        serde_json::from_str(text).map_err(|e| Error::Split(format!("bad plan file: {e}")))?;
    SplitPlan::new(folds, SplitMethod::UserSupplied, nrows)
}

pub fn load_split_plan(path: impl AsRef<Path>, nrows: usize) -> Result<SplitPlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    split_plan_from_json(&text, nrows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn app_sizes(plan: &SplitPlan) -> Vec<usize> {
        let mut s: Vec<usize> = plan.folds().iter().map(|f| f.app.len()).collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn one_way_three_rows_matches_printed_structure() {
        let plan = one_way_holdout(3).unwrap();
        assert_eq!(plan.method().label(), "oneway");
        let expect = [
            (vec![1, 2], vec![0]),
            (vec![0, 2], vec![1]),
            (vec![0, 1], vec![2]),
        ];
        for (fold, (train, app)) in plan.folds().iter().zip(expect) {
            assert_eq!(fold.train, train);
            assert_eq!(fold.app, app);
        }
    }

    #[test]
    fn one_way_edge_sizes() {
        let plan = one_way_holdout(2).unwrap();
        assert!(plan.folds().iter().all(|f| f.train.len() == 1));
        assert!(one_way_holdout(1).is_err());
        assert!(one_way_holdout(0).is_err());
    }

    #[test]
    fn k_way_sizes() {
        assert_eq!(
            app_sizes(&k_way_cross_validation(6, 3, 1).unwrap()),
            vec![2, 2, 2]
        );
        assert_eq!(
            app_sizes(&k_way_cross_validation(7, 3, 1).unwrap()),
            vec![2, 2, 3]
        );
        assert!(k_way_cross_validation(3, 4, 1).is_err());
        assert!(k_way_cross_validation(5, 1, 1).is_err());
    }

    #[test]
    fn stratified_deals_each_block_across_folds() {
        let y = [1.0, 2.0, 3.0, 4.0];
        for seed in 0..20 {
            let plan = k_way_stratified_y(4, 2, &y, seed).unwrap();
            for f in plan.folds() {
                assert_eq!(f.app.len(), 2);
                assert_eq!(f.app.iter().filter(|&&r| r < 2).count(), 1);
            }
        }
    }

    #[test]
    fn stratified_constant_y_is_valid() {
        let plan = k_way_stratified_y(10, 3, &[0.5; 10], 9).unwrap();
        assert_eq!(app_sizes(&plan), vec![3, 3, 4]);
    }

    #[test]
    fn stratified_rejects_bad_y() {
        assert!(k_way_stratified_y(4, 2, &[1.0, f64::NAN, 0.0, 1.0], 0).is_err());
        assert!(k_way_stratified_y(4, 2, &[1.0], 0).is_err());
    }

    #[test]
    fn grouped_keeps_groups_whole() {
        let g = CategoricalColumn::from_strs(&[
            Some("a"),
            Some("b"),
            Some("a"),
            Some("c"),
            None,
            Some("b"),
            Some("c"),
            None,
        ]);
        let plan = grouped_k_way(8, 2, &g, None, 5).unwrap();
        for f in plan.folds() {
            let groups: std::collections::BTreeSet<_> = f.app.iter().map(|&r| g.slot(r)).collect();
            assert_eq!(groups.len(), 2);
            for &r in &f.train {
                assert!(!groups.contains(&g.slot(r)));
            }
        }
        assert!(grouped_k_way(8, 5, &g, None, 5).is_err());
    }

    #[test]
    fn user_plan_rules() {
        let ok = split_plan_from_json(
            r#"[{"train":[0],"app":[1,2]},{"train":[0,1],"app":[2]}]"#,
            3,
        )
        .unwrap();
        assert_eq!(ok.method().label(), "userfunction");
        assert!(split_plan_from_json(r#"[{"train":[0],"app":[0]}]"#, 3).is_err());
        assert!(split_plan_from_json("[]", 3).is_err());
        assert!(split_plan_from_json(r#"[{"train":[0],"app":[3]}]"#, 3).is_err());
        assert!(split_plan_from_json(r#"[{"train":[],"app":[1]}]"#, 3).is_err());
        assert!(split_plan_from_json(r#"[{"train":[0],"app":[1],"x":1}]"#, 3).is_err());
    }

    #[test]
    fn default_plan_falls_back_to_one_way() {
        let y = [1.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(
            default_plan(5, 3, &y, 0).unwrap().method(),
            SplitMethod::OneWay
        );
        let y6 = [1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(
            default_plan(6, 3, &y6, 0).unwrap().method(),
            SplitMethod::StratifiedY
        );
    }

    #[test]
    fn seed_determinism() {
        let y: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        assert_eq!(
            k_way_stratified_y(50, 4, &y, 77).unwrap(),
            k_way_stratified_y(50, 4, &y, 77).unwrap()
        );
        assert_ne!(
            k_way_cross_validation(50, 4, 1).unwrap(),
            k_way_cross_validation(50, 4, 2).unwrap()
        );
    }
}
