//! Spearman correlation, least squares with inference, one-sample t-tests
//! and min-max normalization.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} observations, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined for a constant series")]
    ConstantSeries,
    #[error("design matrix is rank deficient (column `{0}` is collinear)")]
    Collinear(String),
    #[error("value outside domain: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult<T> {
    pub rho: T,
    pub p_value: T,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult<T> {
    /// Term names; the first entry is `"intercept"`.
    pub terms: Vec<String>,
    pub coefficients: Vec<T>,
    pub standard_errors: Vec<T>,
    pub t_values: Vec<T>,
    /// Two-sided p-values.
    pub p_values: Vec<T>,
    pub r_squared: T,
    pub df_resid: usize,
    pub n: usize,
}

impl<T: Scalar> RegressionResult<T> {
    pub fn term(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// Every difference is zero.
    AllZero,
    /// Zero spread around a non-zero mean; the statistic is infinite.
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult<T> {
    pub statistic: T,
    pub p_value: T,
    pub df: usize,
    pub tail: Tail,
    pub mean: T,
    pub sd: T,
    pub n: usize,
    pub degenerate: Option<Degeneracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries<T> {
    pub values: Vec<T>,
    pub min: T,
    pub max: T,
    /// Set when all inputs are equal and every value maps to 0.5.
    pub degenerate: bool,
}

impl<T: Scalar> NormalizedSeries<T> {
    pub fn denormalize(&self) -> Vec<T> {
        if self.degenerate {
            return vec![self.min; self.values.len()];
        }
        let span = self.max - self.min;
        self.values.iter().map(|&v| self.min + v * span).collect()
    }
}

pub fn min_max_normalize<T: Scalar>(xs: &[T]) -> NormalizedSeries<T> {
    let Some(&first) = xs.first() else {
        return NormalizedSeries { values: Vec::new(), min: T::zero(), max: T::zero(), degenerate: true };
    };
    let (min, max) = xs.iter().fold((first, first), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if max == min {
        return NormalizedSeries { values: vec![T::lit(0.5); xs.len()], min, max, degenerate: true };
    }
    let span = max - min;
    NormalizedSeries { values: xs.iter().map(|&x| (x - min) / span).collect(), min, max, degenerate: false }
}

/// Average ranks (1-based), ties share the mean of their positions.
pub fn mid_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = T::from_usize_lossy(i + j + 2) / T::lit(2.0);
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    let my = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::ConstantSeries);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

fn check_pair<T>(x: &[T], y: &[T]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples { need: 3, got: x.len() });
    }
    Ok(())
}

fn spearman_rho<T: Scalar>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    pearson(&mid_ranks(x), &mid_ranks(y))
}

/// Spearman rank correlation with a two-sided t-approximation p-value.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<SpearmanResult<T>, StatsError> {
    check_pair(x, y)?;
    let rho = spearman_rho(x, y)?;
    let df = x.len() - 2;
    let p_value = if rho.abs() == T::one() {
        T::zero()
    } else {
        let t = rho * (T::from_usize_lossy(df) / (T::one() - rho * rho)).sqrt();
        student_t_sf(t.abs(), T::from_usize_lossy(df)) * T::lit(2.0)
    };
    Ok(SpearmanResult { rho, p_value: clamp01(p_value), n: x.len() })
}

/// Spearman correlation with a two-sided permutation p-value, for small samples.
pub fn spearman_permutation<T: Scalar>(
    x: &[T],
    y: &[T],
    shuffles: usize,
    seed: u64,
) -> Result<SpearmanResult<T>, StatsError> {
    check_pair(x, y)?;
    let rx = mid_ranks(x);
    let mut ry = mid_ranks(y);
    let rho = pearson(&rx, &ry)?;
    let mut rng = rng_from_seed(seed);
    let threshold = rho.abs() - T::lit(1e-12);
    let mut hits = 0usize;
    for _ in 0..shuffles {
        ry.shuffle(&mut rng);
        if pearson(&rx, &ry)?.abs() >= threshold {
            hits += 1;
        }
    }
    let p_value = T::from_usize_lossy(hits + 1) / T::from_usize_lossy(shuffles + 1);
    Ok(SpearmanResult { rho, p_value, n: x.len() })
}

/// Least squares with intercept, solved by Householder QR.
pub fn ols<T: Scalar>(
    y: &[T],
    predictors: &[(&str, &[T])],
) -> Result<RegressionResult<T>, StatsError> {
    let n = y.len();
    let p = predictors.len() + 1;
    if n <= p {
        return Err(StatsError::TooFewSamples { need: p + 1, got: n });
    }
    let mut terms = vec!["intercept".to_string()];
    // Column-major design matrix.
    let mut a: Vec<Vec<T>> = vec![vec![T::one(); n]];
    for (name, col) in predictors {
        if col.len() != n {
            return Err(StatsError::LengthMismatch(n, col.len()));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::Domain(format!("non-finite value in `{name}`")));
        }
        terms.push((*name).to_string());
        a.push(col.to_vec());
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::Domain("non-finite response".into()));
    }
    let col_norms: Vec<T> = a.iter().map(|c| norm(c)).collect();
    let mut qty = y.to_vec();
    for k in 0..p {
        let alpha = norm(&a[k][k..]);
        let scale = col_norms[k].max(T::min_positive_value());
        if alpha <= scale * T::epsilon() * T::from_usize_lossy(n) * T::lit(16.0) {
            return Err(StatsError::Collinear(terms[k].clone()));
        }
        let alpha = if a[k][k] > T::zero() { -alpha } else { alpha };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, &x| s + x * x);
        let reflect = |col: &mut [T]| {
            let dot = v.iter().zip(col.iter()).fold(T::zero(), |s, (&vi, &ci)| s + vi * ci);
            let f = T::lit(2.0) * dot / vnorm2;
            for (c, &vi) in col.iter_mut().zip(&v) {
                *c = *c - f * vi;
            }
        };
        for col in a.iter_mut().skip(k + 1) {
            reflect(&mut col[k..]);
        }
        reflect(&mut qty[k..]);
        a[k][k] = alpha;
        for x in a[k][k + 1..].iter_mut() {
            *x = T::zero();
        }
    }
    // R is upper triangular: r[i][j] = a[j][i] for i <= j.
    let r = |i: usize, j: usize| a[j][i];
    let mut beta = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut s = qty[i];
        for j in i + 1..p {
            s = s - r(i, j) * beta[j];
        }
        beta[i] = s / r(i, i);
    }
    // R^{-1}, upper triangular.
    let mut rinv = vec![vec![T::zero(); p]; p];
    for j in 0..p {
        rinv[j][j] = T::one() / r(j, j);
        for i in (0..j).rev() {
            let mut s = T::zero();
            for k in i + 1..=j {
                s = s + r(i, k) * rinv[k][j];
            }
            rinv[i][j] = -s / r(i, i);
        }
    }
    let fitted: Vec<T> = (0..n)
        .map(|row| {
            let mut s = beta[0];
            for (j, (_, col)) in predictors.iter().enumerate() {
                s = s + beta[j + 1] * col[row];
            }
            s
        })
        .collect();
    let rss = y.iter().zip(&fitted).fold(T::zero(), |s, (&yi, &fi)| s + (yi - fi) * (yi - fi));
    let ymean = y.iter().fold(T::zero(), |s, &v| s + v) / T::from_usize_lossy(n);
    let tss = y.iter().fold(T::zero(), |s, &v| s + (v - ymean) * (v - ymean));
    let r_squared = if tss == T::zero() { T::one() } else { clamp01(T::one() - rss / tss) };
    let df_resid = n - p;
    let sigma2 = rss / T::from_usize_lossy(df_resid);
    let dft = T::from_usize_lossy(df_resid);
    let mut standard_errors = Vec::with_capacity(p);
    let mut t_values = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for i in 0..p {
        let diag = rinv[i].iter().fold(T::zero(), |s, &x| s + x * x);
        let se = (sigma2 * diag).sqrt();
        let (t, pv) = if se > T::zero() {
            let t = beta[i] / se;
            (t, clamp01(T::lit(2.0) * student_t_sf(t.abs(), dft)))
        } else if beta[i] == T::zero() {
            (T::zero(), T::one())
        } else {
            (T::infinity() * beta[i].signum(), T::zero())
        };
        standard_errors.push(se);
        t_values.push(t);
        p_values.push(pv);
    }
    Ok(RegressionResult {
        terms,
        coefficients: beta,
        standard_errors,
        t_values,
        p_values,
        r_squared,
        df_resid,
        n,
    })
}

fn norm<T: Scalar>(xs: &[T]) -> T {
    let scale = xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    scale * xs.iter().fold(T::zero(), |s, &x| s + (x / scale) * (x / scale)).sqrt()
}

fn clamp01<T: Scalar>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

/// One-sample t-test of the mean against zero.
pub fn one_sample_t<T: Scalar>(diffs: &[T], tail: Tail) -> Result<TTestResult<T>, StatsError> {
    let n = diffs.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { need: 2, got: n });
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::Domain("non-finite difference".into()));
    }
    let nt = T::from_usize_lossy(n);
    let mean = diffs.iter().fold(T::zero(), |s, &d| s + d) / nt;
    let ss = diffs.iter().fold(T::zero(), |s, &d| s + (d - mean) * (d - mean));
    let sd = (ss / (nt - T::one())).sqrt();
    let df = n - 1;
    let (statistic, degenerate) = if sd > T::zero() {
        (mean / (sd / nt.sqrt()), None)
    } else if mean == T::zero() {
        (T::zero(), Some(Degeneracy::AllZero))
    } else {
        (T::infinity() * mean.signum(), Some(Degeneracy::ZeroVariance))
    };
    let dft = T::from_usize_lossy(df);
    let p_value = match tail {
        Tail::Greater => student_t_sf(statistic, dft),
        Tail::Less => student_t_sf(-statistic, dft),
        Tail::TwoSided => T::lit(2.0) * student_t_sf(statistic.abs(), dft),
    };
    Ok(TTestResult { statistic, p_value: clamp01(p_value), df, tail, mean, sd, n, degenerate })
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf<T: Scalar>(t: T, df: T) -> T {
    if t.is_nan() {
        return T::nan();
    }
    if t == T::infinity() {
        return T::zero();
    }
    if t == T::neg_infinity() {
        return T::one();
    }
    let half = T::lit(0.5);
    let x = df / (df + t * t);
    let tail = half * reg_inc_beta(df * half, half, x);
    if t > T::zero() {
        tail
    } else {
        T::one() - tail
    }
}

pub fn student_t_cdf<T: Scalar>(t: T, df: T) -> T {
    T::one() - student_t_sf(t, df)
}

/// Natural log of the gamma function (Lanczos, g = 7, nine terms), `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let half = T::lit(0.5);
    if x < half {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx).
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut a = T::lit(COEF[0]);
    let t = x + T::lit(G) + half;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a = a + T::lit(c) / (x + T::from_usize_lossy(i));
    }
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by the modified Lentz continued fraction.
pub fn reg_inc_beta<T: Scalar>(a: T, b: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (T::one() - x).ln();
    let front = ln_front.exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        T::one() - front * beta_cf(b, a, T::one() - x) / b
    }
}

fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> T {
    const MAX_ITER: usize = 500;
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let one = T::one();
    let two = T::lit(2.0);
    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = T::from_usize_lossy(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn t_tail_matches_reference_values() {
        let cases = [
            (2.0, 10.0, 0.036694017385370196),
            (-1.5, 3.0, 0.8847080673775886),
            (0.3, 1.0, 0.4072264209222577),
            (50.0, 5.0, 3.023878813300617e-08),
            (4.2, 63.0, 4.2768689763878685e-05),
        ];
        for (t, df, want) in cases {
            assert_relative_eq!(student_t_sf(t, df), want, max_relative = 1e-10);
        }
        assert_relative_eq!(student_t_sf(10.0, 99.0), 5.469878503996061e-17, max_relative = 1e-8);
    }

    #[test]
    fn special_functions_reference_values() {
        assert_relative_eq!(ln_gamma(0.5), 0.5723649429247, epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(10.3), 13.482036786138359, epsilon = 1e-12);
        assert_relative_eq!(reg_inc_beta(2.5, 3.5, 0.4), 0.4869041915261176, epsilon = 1e-13);
    }

    #[test]
    fn spearman_reference_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let y = [2.0, 1.0, 4.0, 3.0, 7.0, 8.0, 6.0, 5.0];
        let r = spearman(&x, &y).unwrap();
        assert_relative_eq!(r.rho, 0.7380952380952381, epsilon = 1e-14);
        assert_relative_eq!(r.p_value, 0.03655276105286081, max_relative = 1e-9);
        let x = [1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 5.0];
        let y = [1.0, 3.0, 2.0, 2.0, 5.0, 4.0, 6.0, 6.0];
        let r = spearman(&x, &y).unwrap();
        assert_relative_eq!(r.rho, 0.9007775105401477, epsilon = 1e-14);
        assert_relative_eq!(r.p_value, 0.0022640090646742633, max_relative = 1e-9);
    }

    #[test]
    fn spearman_extremes_and_errors() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 40.0]).unwrap().rho, 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap().rho, -1.0);
        assert_eq!(spearman(&x, &[1.0; 4]), Err(StatsError::ConstantSeries));
        assert!(matches!(spearman(&x[..2], &x[..2]), Err(StatsError::TooFewSamples { .. })));
        assert!(matches!(spearman(&x, &x[..3]), Err(StatsError::LengthMismatch(4, 3))));
    }

    #[test]
    fn permutation_p_is_small_for_perfect_order() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let r = spearman_permutation(&x, &x, 10_000, 3).unwrap();
        assert_eq!(r.rho, 1.0);
        // 2 of 5040 orderings reach |rho| = 1.
        assert!(r.p_value < 0.002, "{}", r.p_value);
        let y = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0];
        let r = spearman_permutation(&x, &y, 10_000, 3).unwrap();
        assert!(r.p_value > 0.05);
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn ols_reference_values() {
        let x1 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let x2 = [2.0, 1.0, 4.0, 3.0, 7.0, 5.0, 8.0, 6.0];
        let y = [3.1, 2.9, 6.2, 5.8, 10.1, 8.7, 12.5, 10.9];
        let r = ols(&y, &[("x1", &x1), ("x2", &x2)]).unwrap();
        let beta = [0.6756493506493471, 0.5610389610389617, 0.9610389610389616];
        let se = [0.1148046622482802, 0.03971988273097739, 0.03971988273097741];
        let t = [5.8852082957063745, 14.124889663921628, 24.195412850236096];
        let p = [0.0020124842716854985, 3.2013584608637094e-05, 2.2476202043165768e-06];
        for i in 0..3 {
            assert_relative_eq!(r.coefficients[i], beta[i], max_relative = 1e-10);
            assert_relative_eq!(r.standard_errors[i], se[i], max_relative = 1e-10);
            assert_relative_eq!(r.t_values[i], t[i], max_relative = 1e-10);
            assert_relative_eq!(r.p_values[i], p[i], max_relative = 1e-8);
        }
        assert_relative_eq!(r.r_squared, 0.9988733652414026, epsilon = 1e-12);
        assert_eq!(r.terms, ["intercept", "x1", "x2"]);
        assert_eq!(r.df_resid, 5);
    }

    #[test]
    fn ols_exact_fit_and_collinearity() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = ols(&y, &[("x", &x)]).unwrap();
        assert_relative_eq!(r.coefficients[1], 2.0, epsilon = 1e-9);
        assert_relative_eq!(r.coefficients[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(r.r_squared, 1.0, epsilon = 1e-9);
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(ols(&y, &[("x", &x), ("twice", &twice)]), Err(StatsError::Collinear("twice".into())));
        assert_eq!(ols(&y, &[("c", &[3.0; 10])]), Err(StatsError::Collinear("c".into())));
        assert!(matches!(ols(&y[..2], &[("x", &x[..2])]), Err(StatsError::TooFewSamples { .. })));
    }

    #[test]
    fn ols_works_in_f32() {
        let x: Vec<f32> = (0..20).map(|i| i as f32).collect();
        let y: Vec<f32> = x.iter().map(|v| 0.5 * v - 3.0).collect();
        let r = ols(&y, &[("x", &x)]).unwrap();
        assert!((r.coefficients[1] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn t_test_examples() {
        let r = one_sample_t(&[0.0; 5], Tail::Greater).unwrap();
        assert_eq!((r.statistic, r.p_value, r.degenerate), (0.0, 0.5, Some(Degeneracy::AllZero)));
        let r = one_sample_t(&[0.2; 5], Tail::Greater).unwrap();
        assert_eq!(r.statistic, f64::INFINITY);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.degenerate, Some(Degeneracy::ZeroVariance));
        // mean 1, sd 1 over 100 values.
        let diffs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let r = one_sample_t(&diffs, Tail::Greater).unwrap();
        assert_eq!(r.mean, 1.0);
        let sd = (100.0f64 / 99.0).sqrt();
        assert_eq!(r.statistic, 1.0 / (sd / 10.0));
        assert_eq!(r.df, 99);
        assert!(matches!(one_sample_t(&[1.0], Tail::Greater), Err(StatsError::TooFewSamples { .. })));
    }

    #[test]
    fn normalize_examples() {
        let s = min_max_normalize(&[0.0, 5.0, 10.0]);
        assert_eq!(s.values, vec![0.0, 0.5, 1.0]);
        assert!(!s.degenerate);
        let s = min_max_normalize(&[7.0]);
        assert_eq!(s.values, vec![0.5]);
        assert!(s.degenerate);
        assert_eq!(s.denormalize(), vec![7.0]);
    }

    proptest! {
        #[test]
        fn normalize_round_trip(xs in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let s = min_max_normalize(&xs);
            for (a, b) in s.denormalize().iter().zip(&xs) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            for v in &s.values {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        #[test]
        fn spearman_monotone_invariance(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 5..30)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(r) = spearman(&x, &y) {
                let xt: Vec<f64> = x.iter().map(|v| v.exp()).collect();
                let yt: Vec<f64> = y.iter().map(|v| v * v * v + 3.0 * v).collect();
                let rt = spearman(&xt, &yt).unwrap();
                prop_assert!((r.rho - rt.rho).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }
        }

        #[test]
        fn t_statistic_scale_invariant(
            diffs in prop::collection::vec(-5.0f64..5.0, 3..40),
            c in 0.01f64..100.0,
        ) {
            let a = one_sample_t(&diffs, Tail::Greater).unwrap();
            let scaled: Vec<f64> = diffs.iter().map(|d| d * c).collect();
            let b = one_sample_t(&scaled, Tail::Greater).unwrap();
            if a.degenerate.is_none() {
                prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * (1.0 + a.statistic.abs()));
            }
            prop_assert!((0.0..=1.0).contains(&a.p_value));
        }

        #[test]
        fn ols_residuals_orthogonal(
            rows in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 6..60)
        ) {
            let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
            if let Ok(fit) = ols(&y, &[("x1", &x1), ("x2", &x2)]) {
                let b = &fit.coefficients;
                let resid: Vec<f64> =
                    (0..y.len()).map(|i| y[i] - b[0] - b[1] * x1[i] - b[2] * x2[i]).collect();
                for col in [&vec![1.0; y.len()], &x1, &x2] {
                    let dot: f64 = resid.iter().zip(col.iter()).map(|(r, c)| r * c).sum();
                    prop_assert!(dot.abs() <= 1e-8);
                }
                prop_assert!((0.0..=1.0).contains(&fit.r_squared));
                for p in &fit.p_values {
                    prop_assert!((0.0..=1.0).contains(p));
                }
            }
        }
    }
}
