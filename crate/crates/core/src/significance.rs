//! Single-variable significance of derived variables.
//!
//! Numeric outcomes use the F test of a one-variable least-squares fit;
//! binary outcomes use the deviance (chi-squared) test of a one-variable
//! logistic fit. Both report `P[statistic >= observed]` under the null.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splits::SplitPlan;

/// Outcome as seen by the significance tests. Binary outcomes are 0/1.
#[derive(Clone, Copy, Debug)]
pub enum Outcome<'a> {
    Numeric(&'a [f64]),
    Binary(&'a [f64]),
}

impl<'a> Outcome<'a> {
    pub fn values(&self) -> &'a [f64] {
        match *self {
            Outcome::Numeric(y) | Outcome::Binary(y) => y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigResult {
    pub sig: f64,
    pub extra_model_degrees: usize,
    /// False when the logistic fit hit its iteration cap.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub converged: bool,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

impl SigResult {
    fn new(sig: f64, extra_model_degrees: usize) -> Self {
        SigResult {
            sig: sig.clamp(0.0, 1.0),
            extra_model_degrees,
            converged: true,
        }
    }
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "incomplete beta needs a, b > 0 (got {a}, {b})"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "incomplete beta needs 0 <= x <= 1 (got {x})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Regularized upper incomplete gamma function `Q(s, x) = Γ(s, x) / Γ(s)`.
pub fn reg_upper_gamma_q(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!(
            "incomplete gamma needs s > 0 (got {s})"
        )));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "incomplete gamma needs x >= 0 (got {x})"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let ln_front = -x + s * x.ln() - ln_gamma(s);
    let v = if x < s + 1.0 {
        // series for P, then complement
        let mut ap = s;
        let mut sum = 1.0 / s;
        let mut del = sum;
        for _ in 0..CF_MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * CF_EPS {
                break;
            }
        }
        1.0 - sum * ln_front.exp()
    } else {
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / CF_TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=CF_MAX_ITER {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < CF_TINY {
                d = CF_TINY;
            }
            c = b + an / c;
            if c.abs() < CF_TINY {
                c = CF_TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < CF_EPS {
                break;
            }
        }
        ln_front.exp() * h
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Upper tail of the F distribution, `P[F(df1, df2) >= f]`.
pub fn f_upper_tail(f: f64, df1: f64, df2: f64) -> Result<f64> {
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    reg_incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

/// Upper tail of the chi-squared distribution.
pub fn chisq_upper_tail(stat: f64, df: f64) -> Result<f64> {
    if stat <= 0.0 {
        return Ok(1.0);
    }
    reg_upper_gamma_q(df / 2.0, stat / 2.0)
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Slope and intercept of the least-squares line `y ≈ intercept + slope·x`.
/// Constant `x` gives slope 0.
pub fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let (sxx, sxy) = x.iter().zip(y).fold((0.0, 0.0), |(sxx, sxy), (&xi, &yi)| {
        let dx = xi - mx;
        (sxx + dx * dx, sxy + dx * (yi - my))
    });
    if sxx == 0.0 || is_constant(x) {
        (0.0, my)
    } else {
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    }
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "variable has {} values, outcome has {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// F-test significance of `y ~ 1 + x`, with `extra_degrees` added to the
/// numerator degrees of freedom and removed from the denominator.
///
/// Returns sig 1 when `x` or `y` is constant or there are too few rows to
/// leave positive residual degrees of freedom.
pub fn f_test_sig(x: &[f64], y: &[f64], extra_degrees: usize) -> Result<SigResult> {
    check_lengths(x, y)?;
    let n = x.len();
    let df1 = 1 + extra_degrees;
    if n <= df1 + 1 || is_constant(x) || is_constant(y) {
        return Ok(SigResult::new(1.0, extra_degrees));
    }
    let df2 = n - 1 - df1;
    let mx = mean(x);
    let my = mean(y);
    let (sxx, sxy, syy) = x
        .iter()
        .zip(y)
        .fold((0.0, 0.0, 0.0), |(sxx, sxy, syy), (&xi, &yi)| {
            let dx = xi - mx;
            let dy = yi - my;
            (sxx + dx * dx, sxy + dx * dy, syy + dy * dy)
        });
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(SigResult::new(1.0, extra_degrees));
    }
    let ssr = (sxy * sxy / sxx).min(syy);
    let sse = syy - ssr;
    // residual at rounding level means a perfect fit
    let sig = if sse <= syy * 1e-15 {
        0.0
    } else {
        let f = (ssr / df1 as f64) / (sse / df2 as f64);
        f_upper_tail(f, df1 as f64, df2 as f64)?
    };
    Ok(SigResult::new(sig, extra_degrees))
}

const IRLS_MAX_ITER: usize = 50;
const IRLS_TOL: f64 = 1e-10;
const IRLS_RIDGE: f64 = 1e-12;

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Result of a one-variable logistic fit on standardized `x`.
#[derive(Clone, Copy, Debug)]
pub struct LogisticFit {
    pub null_deviance: f64,
    pub residual_deviance: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits `logit P[y=1] = b0 + b1·x` by iteratively reweighted least squares.
pub fn logistic_fit(x: &[f64], y: &[f64]) -> Result<LogisticFit> {
    check_lengths(x, y)?;
    let n = x.len() as f64;
    let ybar = mean(y);
    if !(ybar > 0.0 && ybar < 1.0) {
        return Err(Error::Outcome(
            "binary outcome must take both values".into(),
        ));
    }
    let null_deviance = -2.0
        * y.iter()
            .map(|&yi| yi * ybar.ln() + (1.0 - yi) * (-ybar).ln_1p())
            .sum::<f64>();

    // standardize x; deviance is invariant under affine maps of x
    let mx = mean(x);
    let sd = (x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n).sqrt();
    let xs: Vec<f64> = if sd > 0.0 {
        x.iter().map(|v| (v - mx) / sd).collect()
    } else {
        vec![0.0; x.len()]
    };

    let loglik = |b0: f64, b1: f64| -> f64 {
        xs.iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let eta = b0 + b1 * xi;
                yi * eta - softplus(eta)
            })
            .sum()
    };

    let (mut b0, mut b1) = ((ybar / (1.0 - ybar)).ln(), 0.0);
    let mut ll = loglik(b0, b1);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=IRLS_MAX_ITER {
        iterations = it;
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in xs.iter().zip(y) {
            let p = logistic(b0 + b1 * xi);
            let w = p * (1.0 - p);
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
            g0 += yi - p;
            g1 += (yi - p) * xi;
        }
        h00 += IRLS_RIDGE;
        h11 += IRLS_RIDGE;
        let det = h00 * h11 - h01 * h01;
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        // step halving keeps the likelihood from decreasing
        let mut step = 1.0;
        let mut next = loglik(b0 + d0, b1 + d1);
        while next < ll - 1e-12 && step > 1e-6 {
            step *= 0.5;
            next = loglik(b0 + step * d0, b1 + step * d1);
        }
        b0 += step * d0;
        b1 += step * d1;
        let change = (next - ll).abs();
        ll = next;
        if change < IRLS_TOL {
            converged = true;
            break;
        }
    }
    let residual_deviance = (-2.0 * ll).max(0.0);
    Ok(LogisticFit {
        null_deviance,
        residual_deviance,
        iterations,
        converged,
    })
}

/// Deviance-test significance of a one-variable logistic model, against a
/// chi-squared distribution with `1 + extra_degrees` degrees of freedom.
pub fn chisq_test_sig(x: &[f64], y: &[f64], extra_degrees: usize) -> Result<SigResult> {
    check_lengths(x, y)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Outcome("binary outcome must be 0/1".into()));
    }
    if is_constant(y) {
        return Err(Error::Outcome(
            "binary outcome must take both values".into(),
        ));
    }
    if is_constant(x) {
        return Ok(SigResult::new(1.0, extra_degrees));
    }
    let fit = logistic_fit(x, y)?;
    let stat = (fit.null_deviance - fit.residual_deviance).max(0.0);
    let sig = chisq_upper_tail(stat, (1 + extra_degrees) as f64)?;
    let mut r = SigResult::new(sig, extra_degrees);
    r.converged = fit.converged;
    Ok(r)
}

/// Significance of `x` against the outcome with the test matching its kind.
pub fn single_variable_sig(
    x: &[f64],
    outcome: Outcome<'_>,
    extra_degrees: usize,
) -> Result<SigResult> {
    match outcome {
        Outcome::Numeric(y) => f_test_sig(x, y, extra_degrees),
        Outcome::Binary(y) => chisq_test_sig(x, y, extra_degrees),
    }
}

/// Assembles a full-length out-of-fold vector: for each fold, `encode(train,
/// app)` must return one value per app row, computed from the train rows
/// only. Where user plans overlap, later folds overwrite earlier ones; rows in
/// no app set get 0.
pub fn out_of_fold<F>(plan: &SplitPlan, mut encode: F) -> Vec<f64>
where
    F: FnMut(&[usize], &[usize]) -> Vec<f64>,
{
    let mut out = vec![0.0; plan.nrows()];
    for fold in plan.folds() {
        let vals = encode(&fold.train, &fold.app);
        debug_assert_eq!(vals.len(), fold.app.len());
        for (&r, v) in fold.app.iter().zip(vals) {
            out[r] = v;
        }
    }
    out
}

/// Significance of a complex derived variable, measured on its out-of-fold
/// encoding. The hidden degrees are already paid for by fitting each value
/// without its own row, so the test itself is one-degree; the stated
/// `extra_model_degrees` is carried through to the result.
pub fn cross_validated_sig<F>(
    plan: &SplitPlan,
    outcome: Outcome<'_>,
    extra_model_degrees: usize,
    encode: F,
) -> Result<(SigResult, Vec<f64>)>
where
    F: FnMut(&[usize], &[usize]) -> Vec<f64>,
{
    let y = outcome.values();
    if y.len() != plan.nrows() {
        return Err(Error::Domain(format!(
            "outcome has {} rows, split plan covers {}",
            y.len(),
            plan.nrows()
        )));
    }
    if is_constant(y) {
        return Err(Error::Outcome(
            "outcome must take more than one value".into(),
        ));
    }
    let x = out_of_fold(plan, encode);
    let mut r = single_variable_sig(&x, outcome, 0)?;
    r.extra_model_degrees = extra_model_degrees;
    Ok((r, x))
}
