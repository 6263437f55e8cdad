//! Shared fixtures for the integration tests.

#![allow(dead_code)]

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use treatkit::frame::{CategoricalColumn, Column, Frame, NumericColumn};

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn cat(values: &[Option<&str>]) -> Column {
    Column::from(CategoricalColumn::from_strs(values))
}

pub fn num(values: Vec<f64>) -> Column {
    Column::from(NumericColumn::new(values))
}

/// The five-row frame used by the worked examples: a categorical `x` with a
/// missing value, a numeric `z` with a missing value, a numeric outcome `yN`
/// and a logical outcome `y`.
pub fn small_frame() -> Frame {
    Frame::from_columns(vec![
        (
            "x",
            cat(&[Some("a"), Some("a"), Some("b"), Some("b"), None]),
        ),
        (
            "z",
            Column::from(NumericColumn::from_options([
                Some(0.0),
                Some(1.0),
                Some(2.0),
                None,
                Some(4.0),
            ])),
        ),
        ("yN", num(vec![1.0, 1.0, 0.0, 1.0, 1.0])),
        (
            "y",
            cat(&[
                Some("TRUE"),
                Some("TRUE"),
                Some("FALSE"),
                Some("TRUE"),
                Some("TRUE"),
            ]),
        ),
    ])
    .unwrap()
}

pub fn zip_codes(count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("z{i:02}")).collect()
}

/// Zip-code impact example: 25 zips with value equal to their index, the
/// first three carrying 80% of the mass, `y = value + noise + noise`.
/// Only zips for which `keep` returns true are drawn.
pub fn zip_frame(seed: u64, n: usize, keep: impl Fn(&str) -> bool) -> Frame {
    let zips = zip_codes(25);
    let weights: Vec<f64> = (0..25)
        .map(|i| if i < 3 { 0.8 / 3.0 } else { 0.2 / 22.0 })
        .zip(&zips)
        .map(|(w, z)| if keep(z) { w } else { 0.0 })
        .collect();
    let dist = rand::distr::weighted::WeightedIndex::new(&weights).unwrap();
    let mut r = rng(seed);
    let mut zipvar = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let i = dist.sample(&mut r);
        zipvar.push(zips[i].clone());
        y.push((i + 1) as f64 + normal(&mut r) + normal(&mut r));
    }
    Frame::from_columns(vec![
        (
            "zip",
            Column::from(CategoricalColumn::from_values(
                zipvar.iter().map(|s| Some(s.as_str())),
            )),
        ),
        ("y", num(y)),
    ])
    .unwrap()
}

pub struct NestedBiasData {
    pub frame: Frame,
    /// 0 = calibration, 1 = train, 2 = test
    pub group: Vec<u8>,
}

/// Four 500-level categoricals; the outcome depends only on whether the two
/// "good" variables fall in the upper half of their levels.
pub fn nested_bias_data(seed: u64, n: usize, nlev: usize) -> NestedBiasData {
    let mut r = rng(seed);
    let draw = |r: &mut Xoshiro256PlusPlus| -> Vec<usize> {
        (0..n).map(|_| r.random_range(1..=nlev)).collect()
    };
    let bad1 = draw(&mut r);
    let bad2 = draw(&mut r);
    let good1 = draw(&mut r);
    let good2 = draw(&mut r);
    let half = nlev / 2;
    let sign = |v: usize| if v > half { 1.0 } else { -1.0 };
    let y: Vec<Option<&str>> = (0..n)
        .map(|i| {
            let s = 0.2 * normal(&mut r) + 0.5 * sign(good1[i]) + 0.3 * sign(good2[i]);
            Some(if s > 0.0 { "TRUE" } else { "FALSE" })
        })
        .collect();
    let group: Vec<u8> = (0..n)
        .map(|_| {
            let u: f64 = r.random();
            if u < 0.6 {
                0
            } else if u < 0.8 {
                1
            } else {
                2
            }
        })
        .collect();
    let level = |v: &[usize]| -> Column {
        Column::from(CategoricalColumn::from_values(
            v.iter().map(|i| Some(format!("level{i}"))),
        ))
    };
    let frame = Frame::from_columns(vec![
        ("xBad1", level(&bad1)),
        ("xBad2", level(&bad2)),
        ("xGood1", level(&good1)),
        ("xGood2", level(&good2)),
        ("y", cat(&y)),
    ])
    .unwrap();
    NestedBiasData { frame, group }
}

/// Signal and noise inputs for the pruning experiment: `y = sN + value(sC) +
/// noise`, with `nN` and `nC` unrelated to `y`.
pub fn pruning_data(seed: u64, n: usize) -> Frame {
    let mut r = rng(seed);
    let nlev = 100;
    let zips: Vec<String> = (1..=nlev).map(|i| format!("z{i:03}")).collect();
    let zipval: Vec<f64> = (0..nlev).map(|_| r.random::<f64>()).collect();
    let sig_n: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let noise_n: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let sig_c: Vec<usize> = (0..n).map(|_| r.random_range(0..nlev)).collect();
    let noise_c: Vec<usize> = (0..n).map(|_| r.random_range(0..nlev)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| sig_n[i] + zipval[sig_c[i]] + normal(&mut r))
        .collect();
    let level = |v: &[usize]| -> Column {
        Column::from(CategoricalColumn::from_values(
            v.iter().map(|&i| Some(zips[i].as_str())),
        ))
    };
    Frame::from_columns(vec![
        ("sN", num(sig_n)),
        ("nN", num(noise_n)),
        ("sC", level(&sig_c)),
        ("nC", level(&noise_c)),
        ("y", num(y)),
    ])
    .unwrap()
}

/// Multivariate logistic regression by Newton's method; returns
/// coefficients with the intercept first.
#[allow(clippy::needless_range_loop)]
pub fn logistic_multi(columns: &[&[f64]], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let p = columns.len() + 1;
    let row = |i: usize| -> Vec<f64> {
        std::iter::once(1.0)
            .chain(columns.iter().map(|c| c[i]))
            .collect()
    };
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for i in 0..n {
            let xi = row(i);
            let eta: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = (mu * (1.0 - mu)).max(1e-12);
            for a in 0..p {
                grad[a] += (y[i] - mu) * xi[a];
                for b in 0..p {
                    hess[a][b] += w * xi[a] * xi[b];
                }
            }
        }
        for (a, h) in hess.iter_mut().enumerate() {
            h[a] += 1e-9;
        }
        let step = solve(hess, grad);
        let size: f64 = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
        if size < 1e-10 {
            break;
        }
    }
    beta
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Fraction of rows where `intercept + Σ coef·x > 0` agrees with `y == 1`.
pub fn accuracy(beta: &[f64], columns: &[&[f64]], y: &[f64]) -> f64 {
    let hits = (0..y.len())
        .filter(|&i| {
            let eta = beta[0]
                + columns
                    .iter()
                    .zip(&beta[1..])
                    .map(|(c, b)| c[i] * b)
                    .sum::<f64>();
            (eta > 0.0) == (y[i] == 1.0)
        })
        .count();
    hits as f64 / y.len() as f64
}
