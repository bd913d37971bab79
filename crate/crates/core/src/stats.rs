//! Meta-evaluation statistics: Pearson correlation, linear-fit MSE, quadratic
//! weighted kappa and the two one-tailed significance tests.
//!
//! Moments use the 1/n convention throughout, except the t-test, which needs
//! unbiased variances.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("variance is zero")]
    DegenerateVariance,
    #[error("correlation {0} has |r| >= 1; Fisher transform undefined")]
    DegenerateR(f64),
    #[error("rating {value} outside 1..={categories}")]
    OutOfRange { value: u32, categories: u32 },
    #[error("non-finite sample value")]
    NonFinite,
}

/// Paired metric scores `x` and human ratings `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSamples {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PairedSamples {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, StatsError> {
        if x.len() != y.len() {
            return Err(StatsError::LengthMismatch(x.len(), y.len()));
        }
        if x.len() < 2 {
            return Err(StatsError::TooFewSamples { needed: 2, got: x.len() });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (1/n).
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64
}

fn moments(s: &PairedSamples) -> (f64, f64, f64, f64, f64) {
    let (mx, my) = (mean(&s.x), mean(&s.y));
    let n = s.len() as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in s.x.iter().zip(&s.y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (mx, my, sxx / n, syy / n, sxy / n)
}

/// Pearson correlation, clamped to [−1, 1].
pub fn pearson(s: &PairedSamples) -> Result<f64, StatsError> {
    let (_, _, vx, vy, cov) = moments(s);
    if vx == 0.0 || vy == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Least-squares line `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

pub fn fit_linear(s: &PairedSamples) -> Result<LinearFit, StatsError> {
    let (mx, my, vx, _, cov) = moments(s);
    if vx == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let slope = cov / vx;
    Ok(LinearFit { slope, intercept: my - slope * mx })
}

/// Squared residuals of the least-squares fit, one per sample.
pub fn squared_residuals(s: &PairedSamples) -> Result<Vec<f64>, StatsError> {
    let fit = fit_linear(s)?;
    Ok(s.x.iter().zip(&s.y).map(|(&x, &y)| (fit.predict(x) - y).powi(2)).collect())
}

/// Mean squared residual after the best linear map from `x` to `y`.
pub fn mse(s: &PairedSamples) -> Result<f64, StatsError> {
    Ok(mean(&squared_residuals(s)?))
}

/// Quadratic weighted kappa for two raters over categories `1..=categories`.
pub fn quadratic_weighted_kappa(r1: &[u32], r2: &[u32], categories: u32) -> Result<f64, StatsError> {
    if r1.len() != r2.len() {
        return Err(StatsError::LengthMismatch(r1.len(), r2.len()));
    }
    if r1.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    if categories < 2 {
        return Err(StatsError::OutOfRange { value: categories, categories: 2 });
    }
    let k = categories as usize;
    for &v in r1.iter().chain(r2) {
        if v < 1 || v > categories {
            return Err(StatsError::OutOfRange { value: v, categories });
        }
    }
    let mut observed = vec![vec![0.0f64; k]; k];
    let mut row = vec![0.0f64; k];
    let mut col = vec![0.0f64; k];
    for (&a, &b) in r1.iter().zip(r2) {
        let (i, j) = (a as usize - 1, b as usize - 1);
        observed[i][j] += 1.0;
        row[i] += 1.0;
        col[j] += 1.0;
    }
    let n = r1.len() as f64;
    let scale = ((k - 1) * (k - 1)) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64) - (j as f64)).powi(2) / scale;
            num += w * observed[i][j];
            den += w * row[i] * col[j] / n;
        }
    }
    if den == 0.0 {
        // Both raters used one and the same category throughout.
        return Ok(1.0);
    }
    Ok(1.0 - num / den)
}

/// Mean pairwise quadratic weighted kappa over rater slots. `ratings[item][r]`
/// is rater `r`'s rating of `item`; items lacking either rater of a pair are
/// skipped for that pair.
pub fn multi_rater_kappa(ratings: &[Vec<u32>], categories: u32) -> Result<f64, StatsError> {
    let raters = ratings.iter().map(Vec::len).max().unwrap_or(0);
    let mut kappas = Vec::new();
    for a in 0..raters {
        for b in a + 1..raters {
            let (r1, r2): (Vec<u32>, Vec<u32>) =
                ratings.iter().filter(|item| item.len() > b).map(|item| (item[a], item[b])).unzip();
            if !r1.is_empty() {
                kappas.push(quadratic_weighted_kappa(&r1, &r2, categories)?);
            }
        }
    }
    if kappas.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 2, got: raters });
    }
    Ok(mean(&kappas))
}

fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// One-tailed p-value for H1: ρ_a > ρ_b, comparing Fisher-transformed
/// correlations from samples of size `n_a` and `n_b`.
pub fn fisher_z_test(r_a: f64, r_b: f64, n_a: usize, n_b: usize) -> Result<f64, StatsError> {
    for r in [r_a, r_b] {
        if r.is_nan() || r.abs() >= 1.0 {
            return Err(StatsError::DegenerateR(r));
        }
    }
    for n in [n_a, n_b] {
        if n < 4 {
            return Err(StatsError::TooFewSamples { needed: 4, got: n });
        }
    }
    let se = (1.0 / (n_a - 3) as f64 + 1.0 / (n_b - 3) as f64).sqrt();
    let z = (r_a.atanh() - r_b.atanh()) / se;
    Ok(normal_sf(z))
}

/// Student-t CDF via the regularized incomplete beta function.
fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let tail = 0.5 * beta_reg(dof / 2.0, 0.5, dof / (dof + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Result of a Welch two-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub dof: f64,
    /// One-tailed p-value for H1: mean(a) < mean(b).
    pub p_value: f64,
}

/// Welch's unequal-variance t-test on two samples.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewSamples { needed: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = variance(a) * na / (na - 1.0);
    let vb = variance(b) * nb / (nb - 1.0);
    let (sa, sb) = (va / na, vb / nb);
    if sa + sb == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let dof = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTest { t, dof, p_value: student_t_cdf(t, dof) })
}

/// One-tailed p-value for H1: mean(a) < mean(b); `a` and `b` are typically
/// squared residuals of two metrics.
pub fn two_sample_t_test(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    welch_t_test(a, b).map(|t| t.p_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(x: &[f64], y: &[f64]) -> PairedSamples {
        PairedSamples::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.5];
        assert_eq!(pearson(&ps(&x, &x)).unwrap(), 1.0);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert_eq!(pearson(&ps(&x, &y)).unwrap(), -1.0);
        // Centered x = (-1.5, -.5, .5, 1.5), y = (-1.5, .5, -.5, 1.5):
        // cov = 4/4 = 1, var = 5/4 each -> r = 0.8.
        let r = pearson(&ps(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(pearson(&ps(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0])), Err(StatsError::DegenerateVariance));
        assert_eq!(pearson(&ps(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0])), Err(StatsError::DegenerateVariance));
        assert_eq!(fit_linear(&ps(&[1.0, 1.0], &[1.0, 2.0])), Err(StatsError::DegenerateVariance));
        assert!(PairedSamples::new(vec![1.0], vec![1.0]).is_err());
        assert!(PairedSamples::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(PairedSamples::new(vec![1.0, f64::NAN], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_fit_examples() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let s = ps(&x, &y);
        let fit = fit_linear(&s).unwrap();
        assert_eq!((fit.slope, fit.intercept), (2.0, 1.0));
        assert_eq!(mse(&s).unwrap(), 0.0);

        let s = ps(&[0.0, 1.0], &[0.0, 0.0]);
        let fit = fit_linear(&s).unwrap();
        assert_eq!((fit.slope, fit.intercept), (0.0, 0.0));
        assert_eq!(mse(&s).unwrap(), 0.0);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(quadratic_weighted_kappa(&[1, 2, 3, 3], &[1, 2, 3, 3], 3).unwrap(), 1.0);
        assert_eq!(quadratic_weighted_kappa(&[2, 2], &[2, 2], 3).unwrap(), 1.0);
        // Σ w·O = 1/2, Σ w·E = 13/8 -> κ = 1 − 4/13.
        let k = quadratic_weighted_kappa(&[1, 2, 3, 1], &[1, 3, 3, 2], 3).unwrap();
        assert!((k - 9.0 / 13.0).abs() < 1e-12);
        let k = quadratic_weighted_kappa(&[1, 2, 3], &[3, 2, 1], 3).unwrap();
        assert!(k < 0.0);
        assert!((k + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_errors() {
        assert!(matches!(quadratic_weighted_kappa(&[1, 2], &[1], 3), Err(StatsError::LengthMismatch(2, 1))));
        assert!(matches!(quadratic_weighted_kappa(&[1, 4], &[1, 2], 3), Err(StatsError::OutOfRange { value: 4, .. })));
        assert!(matches!(quadratic_weighted_kappa(&[0, 1], &[1, 2], 3), Err(StatsError::OutOfRange { value: 0, .. })));
    }

    #[test]
    fn multi_rater_kappa_averages_pairs() {
        let items = vec![vec![1, 1, 2], vec![2, 3, 3], vec![3, 3], vec![1, 2, 1]];
        let k = multi_rater_kappa(&items, 3).unwrap();
        let k01 = quadratic_weighted_kappa(&[1, 2, 3, 1], &[1, 3, 3, 2], 3).unwrap();
        let k02 = quadratic_weighted_kappa(&[1, 2, 1], &[2, 3, 1], 3).unwrap();
        let k12 = quadratic_weighted_kappa(&[1, 3, 2], &[2, 3, 1], 3).unwrap();
        assert!((k - (k01 + k02 + k12) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_z_test(0.4, 0.4, 100, 80).unwrap(), 0.5);
        // z = (atanh .9 − atanh .1) / sqrt(2/997) ≈ 32.9
        assert!(fisher_z_test(0.9, 0.1, 1000, 1000).unwrap() < 1e-3);
        assert!(fisher_z_test(0.1, 0.9, 1000, 1000).unwrap() > 0.999);
        assert!(matches!(fisher_z_test(0.3, 0.2, 3, 50), Err(StatsError::TooFewSamples { .. })));
        assert!(matches!(fisher_z_test(1.0, 0.2, 30, 50), Err(StatsError::DegenerateR(_))));
    }

    #[test]
    fn fisher_matches_hand_evaluation() {
        // atanh(.5) = .549306, atanh(.3) = .309520, se = sqrt(1/47 + 1/47)
        // z = .239786 / .206284 = 1.16241, 1 − Φ(1.16241) = .12253
        let p = fisher_z_test(0.5, 0.3, 50, 50).unwrap();
        assert!((p - 0.12253).abs() < 1e-4, "{p}");
    }

    #[test]
    fn t_test_examples() {
        let a = [0.2, 0.5, 0.1, 0.9];
        assert_eq!(two_sample_t_test(&a, &a).unwrap(), 0.5);
        let zeros: Vec<f64> = (0..20).map(|i| 1e-3 * (i % 3) as f64).collect();
        let ones: Vec<f64> = (0..20).map(|i| 1.0 + 1e-3 * (i % 2) as f64).collect();
        assert!(two_sample_t_test(&zeros, &ones).unwrap() < 1e-10);
        assert!(matches!(two_sample_t_test(&[1.0], &a), Err(StatsError::TooFewSamples { .. })));
        assert_eq!(two_sample_t_test(&[1.0, 1.0], &[2.0, 2.0]), Err(StatsError::DegenerateVariance));
    }

    #[test]
    fn t_test_matches_hand_evaluation() {
        // a: mean 2, s² = 2/3; b: mean 3.5, s² = 5/3; n = 4 each.
        // t = −1.5 / sqrt(1/6 + 5/12) = −1.963961, Welch dof = 5.068966,
        // one-tailed p = 0.052982 (independently evaluated).
        let r = welch_t_test(&[1.0, 2.0, 2.0, 3.0], &[2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((r.t + 1.963961).abs() < 1e-6);
        assert!((r.dof - 5.068966).abs() < 1e-6);
        assert!((r.p_value - 0.052982).abs() < 1e-6, "{}", r.p_value);
    }

    fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..30).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(1.0f64..3.0, n)))
    }

    proptest! {
        #[test]
        fn mse_equals_var_y_times_one_minus_r_squared((x, y) in sample()) {
            let s = ps(&x, &y);
            prop_assume!(variance(&x) > 1e-6 && variance(&y) > 1e-6);
            let r = pearson(&s).unwrap();
            let m = mse(&s).unwrap();
            prop_assert!((m - variance(&y) * (1.0 - r * r)).abs() < 1e-9);
        }

        #[test]
        fn pearson_affine_invariance((x, y) in sample(), a in 0.1f64..10.0, b in -10.0f64..10.0) {
            prop_assume!(variance(&x) > 1e-6 && variance(&y) > 1e-6);
            let r = pearson(&ps(&x, &y)).unwrap();
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let yt: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&ps(&xt, &y)).unwrap() - r).abs() < 1e-12);
            prop_assert!((pearson(&ps(&x, &yt)).unwrap() - r).abs() < 1e-12);
            let xn: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&ps(&xn, &y)).unwrap() + r).abs() < 1e-12);
        }

        #[test]
        fn mse_invariant_to_affine_x((x, y) in sample(), a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0], b in -10.0f64..10.0) {
            prop_assume!(variance(&x) > 1e-6);
            let m = mse(&ps(&x, &y)).unwrap();
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((mse(&ps(&xt, &y)).unwrap() - m).abs() < 1e-9);
        }
    }

    #[test]
    fn mse_not_invariant_to_affine_y() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 3.0];
        let m = mse(&ps(&x, &y)).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| 3.0 * v + 1.0).collect();
        let m2 = mse(&ps(&x, &scaled)).unwrap();
        assert!((m2 - 9.0 * m).abs() < 1e-12);
        assert!((m2 - m).abs() > 0.1);
    }
}
