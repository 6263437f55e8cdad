//! Reference implementations for tests. Nothing here calls into the crate's
//! numeric code: integrals are done by adaptive quadrature, fits by closed
//! form or plain Newton iteration.

#![allow(dead_code)]

use std::collections::HashSet;

use treatkit::splits::SplitPlan;

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
    let (v, err) = whole;
    // stop once the error estimate is below tolerance or at roundoff level
    if err <= tol || err <= 50.0 * f64::EPSILON * v.abs() || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    let (l, r) = (gk15(f, a, m), gk15(f, m, b));
    adapt(f, a, m, l, tol * 0.5, depth - 1) + adapt(f, m, b, r, tol * 0.5, depth - 1)
}

/// Adaptive Gauss-Kronrod integral of `f` over `[a, b]` to relative
/// accuracy `rel`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    let parts: Vec<(f64, f64, (f64, f64))> = (0..pieces)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == pieces { b } else { lo + h };
            (lo, hi, gk15(&f, lo, hi))
        })
        .collect();
    let estimate: f64 = parts.iter().map(|p| p.2 .0.abs()).sum();
    let tol = (rel * estimate / pieces as f64).max(f64::MIN_POSITIVE);
    parts
        .into_iter()
        .map(|(lo, hi, w)| adapt(&f, lo, hi, w, tol, 50))
        .sum()
}

/// I_x(a, b) as the ratio of two integrals of the beta density kernel.
/// Endpoint singularities are removed by substituting `u = t^a` on
/// `[0, 1/2]` and `v = (1 - t)^b` on `[1/2, 1]`.
pub fn oracle_beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0 && (0.0..=1.0).contains(&x));
    let tol = 1e-14;
    // ∫_0^m t^{a-1}(1-t)^{b-1} dt for m ≤ 1/2
    let left = |m: f64| {
        integrate(
            |u: f64| (1.0 - u.powf(1.0 / a)).powf(b - 1.0) / a,
            0.0,
            m.powf(a),
            tol,
        )
    };
    // ∫_m^1 t^{a-1}(1-t)^{b-1} dt for m ≥ 1/2
    let right = |m: f64| {
        integrate(
            |v: f64| (1.0 - v.powf(1.0 / b)).powf(a - 1.0) / b,
            0.0,
            (1.0 - m).powf(b),
            tol,
        )
    };
    let lo = left(0.5);
    let hi = right(0.5);
    let total = lo + hi;
    if x <= 0.5 {
        left(x) / total
    } else {
        1.0 - right(x) / total
    }
}

/// ∫_lo^hi t^{s-1} e^{-t} dt, with the `u = t^s` substitution near zero.
fn gamma_kernel_integral(s: f64, lo: f64, hi: f64) -> f64 {
    let tol = 1e-14;
    let kernel = |t: f64| ((s - 1.0) * t.ln() - t).exp();
    let mut total = 0.0;
    if lo < 1.0 {
        let top = hi.min(1.0);
        total += integrate(
            |u: f64| (-u.powf(1.0 / s)).exp() / s,
            lo.powf(s),
            top.powf(s),
            tol,
        );
    }
    if hi > 1.0 {
        total += integrate(kernel, lo.max(1.0), hi, tol);
    }
    total
}

fn gamma_upper_integral(s: f64, x: f64) -> f64 {
    let mut total = 0.0;
    let mut a = x;
    let mut width = 1.0_f64.max(s.sqrt());
    loop {
        let piece = gamma_kernel_integral(s, a, a + width);
        total += piece;
        a += width;
        width *= 2.0;
        if a > s + 10.0 && piece <= total * 1e-18 {
            break;
        }
        if a > 1e6 {
            break;
        }
    }
    total
}

/// Q(s, x) = Γ(s, x) / Γ(s) by quadrature.
pub fn oracle_gamma_q(s: f64, x: f64) -> f64 {
    assert!(s > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    let upper = gamma_upper_integral(s, x);
    let lower = gamma_kernel_integral(s, 0.0, x);
    upper / (upper + lower)
}

/// P[χ²_df ≥ x].
pub fn oracle_chisq_sf(df: f64, x: f64) -> f64 {
    oracle_gamma_q(df / 2.0, x / 2.0)
}

/// P[F_{d1,d2} ≥ f].
pub fn oracle_f_sf(d1: f64, d2: f64, f: f64) -> f64 {
    oracle_beta_cdf(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub f: f64,
    pub p: f64,
}

/// Least squares line with its F statistic and p-value at `1 + extra`
/// numerator degrees.
pub fn oracle_ols_extra(x: &[f64], y: &[f64], extra: usize) -> OlsFit {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let ybar = sy / n;
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let d1 = 1.0 + extra as f64;
    let d2 = n - 2.0 - extra as f64;
    let f = ((sst - sse) / d1) / (sse / d2);
    OlsFit {
        slope,
        intercept,
        f,
        p: oracle_f_sf(d1, d2, f),
    }
}

pub fn oracle_ols(x: &[f64], y: &[f64]) -> OlsFit {
    oracle_ols_extra(x, y, 0)
}

fn log_lik(x: &[f64], y: &[f64], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let eta = b0 + b1 * xi;
            // log(1 + e^eta) computed stably
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            yi * eta - softplus
        })
        .sum()
}

pub struct LogisticRef {
    pub intercept: f64,
    pub slope: f64,
    pub deviance_drop: f64,
    pub p: f64,
}

/// Newton-Raphson logistic regression of y on (1, x).
pub fn oracle_logistic(x: &[f64], y: &[f64]) -> LogisticRef {
    let n = y.len() as f64;
    let rate = y.iter().sum::<f64>() / n;
    let null_ll = n * (rate * rate.ln() + (1.0 - rate) * (1.0 - rate).ln());
    let (mut b0, mut b1) = ((rate / (1.0 - rate)).ln(), 0.0);
    let mut ll = log_lik(x, y, b0, b1);
    for _ in 0..200 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let p = 1.0 / (1.0 + (-(b0 + b1 * xi)).exp());
            let w = p * (1.0 - p);
            g0 += yi - p;
            g1 += (yi - p) * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        if det.abs() < 1e-300 {
            break;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        let mut step = 1.0;
        let mut next = log_lik(x, y, b0 + d0, b1 + d1);
        while next < ll && step > 1e-8 {
            step *= 0.5;
            next = log_lik(x, y, b0 + step * d0, b1 + step * d1);
        }
        b0 += step * d0;
        b1 += step * d1;
        let done = (next - ll).abs() < 1e-13;
        ll = next;
        if done {
            break;
        }
    }
    let drop = (2.0 * (ll - null_ll)).max(0.0);
    LogisticRef {
        intercept: b0,
        slope: b1,
        deviance_drop: drop,
        p: oracle_chisq_sf(1.0, drop),
    }
}

#[derive(Debug, Default, PartialEq)]
pub struct SplitReport {
    pub folds: usize,
    pub all_in_range: bool,
    pub all_nonempty: bool,
    pub train_app_disjoint: bool,
    pub apps_pairwise_disjoint: bool,
    pub apps_cover_rows: bool,
    pub no_duplicates: bool,
    pub train_is_complement: bool,
}

impl SplitReport {
    pub fn is_partition(&self) -> bool {
        self.all_in_range
            && self.all_nonempty
            && self.train_app_disjoint
            && self.apps_pairwise_disjoint
            && self.apps_cover_rows
            && self.no_duplicates
    }
}

/// Exhaustive structural check of a split plan by brute-force set logic.
pub fn oracle_split_check(plan: &SplitPlan, nrows: usize) -> SplitReport {
    let folds = plan.folds();
    let mut r = SplitReport {
        folds: folds.len(),
        all_in_range: true,
        all_nonempty: !folds.is_empty(),
        train_app_disjoint: true,
        apps_pairwise_disjoint: true,
        apps_cover_rows: true,
        no_duplicates: true,
        train_is_complement: true,
    };
    let mut covered = vec![0usize; nrows];
    for f in folds {
        if f.train.is_empty() || f.app.is_empty() {
            r.all_nonempty = false;
        }
        let train: HashSet<usize> = f.train.iter().copied().collect();
        let app: HashSet<usize> = f.app.iter().copied().collect();
        if train.len() != f.train.len() || app.len() != f.app.len() {
            r.no_duplicates = false;
        }
        for &i in f.train.iter().chain(&f.app) {
            if i >= nrows {
                r.all_in_range = false;
            }
        }
        if train.iter().any(|i| app.contains(i)) {
            r.train_app_disjoint = false;
        }
        if train.len() + app.len() != nrows {
            r.train_is_complement = false;
        }
        for &i in &f.app {
            if i < nrows {
                covered[i] += 1;
            }
        }
    }
    if covered.iter().any(|&c| c > 1) {
        r.apps_pairwise_disjoint = false;
    }
    if covered.contains(&0) {
        r.apps_cover_rows = false;
    }
    r
}

/// Two-sided Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let lo = v - i as f64 / n;
            let hi = (i + 1) as f64 / n - v;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical KS distance at α = 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Panics if the oracles disagree with closed forms.
pub fn self_check() {
    for x in [0.0, 0.1, 0.5, 0.93, 1.0] {
        assert!((oracle_beta_cdf(1.0, 1.0, x) - x).abs() < 1e-14);
        // I_x(2, 1) = x^2
        assert!((oracle_beta_cdf(2.0, 1.0, x) - x * x).abs() < 1e-13);
    }
    for x in [0.0, 0.3, 2.0, 11.0] {
        assert!((oracle_gamma_q(1.0, x) - (-x).exp()).abs() < 1e-13);
    }
    // χ²₂ survival is e^{-x/2}
    assert!((oracle_chisq_sf(2.0, 3.0) - (-1.5f64).exp()).abs() < 1e-13);
}
