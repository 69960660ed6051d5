//! Summary statistics, pairwise t-tests, and one-way ANOVA used to compare
//! detector configurations across repeated runs.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::special::{f_upper_p, t_two_sided_p};
use super::EvalError;

/// Normal quantile used for the 95% confidence interval.
pub const CI_Z: f64 = 1.96;

/// Mean, sample standard deviation, and 95% confidence interval of repeated
/// run scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryStats {
    /// Number of values.
    pub n: usize,
    /// Arithmetic mean.
    pub mean: f64,
    /// Sample standard deviation (n-1 divisor).
    pub std: f64,
    /// Lower 95% confidence bound.
    pub ci_low: f64,
    /// Upper 95% confidence bound.
    pub ci_high: f64,
}

/// 95% confidence bounds `mean ± 1.96·std/√n`.
pub fn ci_bounds(mean: f64, std: f64, n: usize) -> (f64, f64) {
    let half = CI_Z * std / (n as f64).sqrt();
    (mean - half, mean + half)
}

/// Summarize run scores. Needs at least two values for a sample deviation.
pub fn mean_std_ci(values: &[f64]) -> Result<SummaryStats, EvalError> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFewValues { got: n, needed: 2 });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let std = (ss / (n - 1) as f64).sqrt();
    let (ci_low, ci_high) = ci_bounds(mean, std, n);
    Ok(SummaryStats {
        n,
        mean,
        std,
        ci_low,
        ci_high,
    })
}

/// Two-sample t-test flavor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TTestKind {
    /// Pooled-variance Student t, df = n_a + n_b - 2.
    #[default]
    Pooled,
    /// Welch t with Satterthwaite degrees of freedom.
    Welch,
}

/// Two-sided t-test outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    /// Test statistic.
    pub t: f64,
    /// Degrees of freedom (fractional under Welch).
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Two-sided two-sample t-test on raw values.
pub fn pairwise_t_test(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTest, EvalError> {
    let sa = mean_std_ci(a)?;
    let sb = mean_std_ci(b)?;
    t_test_from_summary(sa.mean, sa.std, sa.n, sb.mean, sb.std, sb.n, kind)
}

/// Two-sided two-sample t-test from summary statistics, for comparing
/// against published mean/std tables directly.
pub fn t_test_from_summary(
    mean_a: f64,
    std_a: f64,
    n_a: usize,
    mean_b: f64,
    std_b: f64,
    n_b: usize,
    kind: TTestKind,
) -> Result<TTest, EvalError> {
    if n_a < 2 {
        return Err(EvalError::TooFewValues { got: n_a, needed: 2 });
    }
    if n_b < 2 {
        return Err(EvalError::TooFewValues { got: n_b, needed: 2 });
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    let (va, vb) = (std_a * std_a, std_b * std_b);
    let (se, df) = match kind {
        TTestKind::Pooled => {
            let df = na + nb - 2.0;
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            ((sp2 * (1.0 / na + 1.0 / nb)).sqrt(), df)
        }
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (se2.sqrt(), df)
        }
    };
    // NaN standard error must fail this guard too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(se > 0.0) || !df.is_finite() {
        return Err(EvalError::ZeroVariance);
    }
    let t = (mean_a - mean_b) / se;
    Ok(TTest {
        t,
        df,
        p: t_two_sided_p(t, df),
    })
}

/// One-way ANOVA outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anova {
    /// Between/within mean-square ratio.
    pub f: f64,
    /// Between-groups degrees of freedom (k - 1).
    pub df_between: f64,
    /// Within-groups degrees of freedom (N - k).
    pub df_within: f64,
    /// Upper-tail p-value.
    pub p: f64,
}

/// One-way analysis of variance across run-score groups.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova, EvalError> {
    if groups.len() < 2 {
        return Err(EvalError::TooFewGroups { got: groups.len() });
    }
    for g in groups {
        if g.len() < 2 {
            return Err(EvalError::TooFewValues {
                got: g.len(),
                needed: 2,
            });
        }
    }
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n_total as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    let df_between = (groups.len() - 1) as f64;
    let df_within = (n_total - groups.len()) as f64;
    // NaN within-group scatter must fail this guard too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(ssw > 0.0) {
        return Err(EvalError::ZeroVariance);
    }
    let f = (ssb / df_between) / (ssw / df_within);
    Ok(Anova {
        f,
        df_between,
        df_within,
        p: f_upper_p(f, df_between, df_within),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;
    use alloc::vec;

    #[test]
    fn summary_reproduces_published_interval_format() {
        // Published rows give (mean, std, n=5); the interval formula must
        // land on the printed bounds.
        let (lo, hi) = ci_bounds(85.8, 3.19, 5);
        assert!((lo - 83.0).abs() < 0.05 && (hi - 88.6).abs() < 0.05);
        let (lo, hi) = ci_bounds(81.0, 3.54, 5);
        assert!((lo - 77.9).abs() < 0.05 && (hi - 84.1).abs() < 0.05);
    }

    #[test]
    fn summary_from_values_uses_sample_std() {
        let s = mean_std_ci(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((s.mean - 5.0).abs() < 1e-12);
        // Sum of squares 32 over n-1 = 7.
        assert!((s.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert!((s.ci_high - s.mean - 1.96 * s.std / 8.0f64.sqrt()).abs() < 1e-12);

        let c = mean_std_ci(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!((c.std, c.ci_low, c.ci_high), (0.0, 3.0, 3.0));

        assert!(mean_std_ci(&[1.0]).is_err());
    }

    #[test]
    fn t_test_reproduces_published_p_values() {
        // 98.0 +/- 2.74 vs 79.8 +/- 8.65, n = 5 each -> p printed as .002.
        let r = t_test_from_summary(98.0, 2.74, 5, 79.8, 8.65, 5, TTestKind::Pooled).unwrap();
        assert!((r.t - 4.485_151_0).abs() < 1e-6, "t {}", r.t);
        assert!((r.p - 0.002_041_816).abs() < 1e-8, "p {}", r.p);

        // 98.0 +/- 2.74 vs 92.0 +/- 2.74 -> printed .009.
        let r = t_test_from_summary(98.0, 2.74, 5, 92.0, 2.74, 5, TTestKind::Pooled).unwrap();
        assert!((r.p - 0.008_538_255).abs() < 1e-8, "p {}", r.p);

        // 84.8 +/- 5.31 vs 75.0 +/- 0.00 -> printed .003; one group may be
        // constant as long as the pooled variance is positive.
        let r = t_test_from_summary(84.8, 5.31, 5, 75.0, 0.0, 5, TTestKind::Pooled).unwrap();
        assert!((r.p - 0.003_312_886).abs() < 1e-8, "p {}", r.p);

        // Both constant: undefined.
        assert!(matches!(
            t_test_from_summary(1.0, 0.0, 5, 2.0, 0.0, 5, TTestKind::Pooled),
            Err(EvalError::ZeroVariance)
        ));
    }

    #[test]
    fn t_test_on_identical_samples_is_null() {
        let a = [3.0, 4.0, 5.0, 6.0, 7.0];
        let r = pairwise_t_test(&a, &a, TTestKind::Pooled).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
        assert_eq!(r.df, 8.0);
    }

    #[test]
    fn welch_differs_from_pooled_under_unequal_variance() {
        let a = [10.0, 10.2, 9.8, 10.1, 9.9];
        let b = [5.0, 15.0, 2.0, 18.0, 9.0];
        let pooled = pairwise_t_test(&a, &b, TTestKind::Pooled).unwrap();
        let welch = pairwise_t_test(&a, &b, TTestKind::Welch).unwrap();
        assert_eq!(pooled.df, 8.0);
        assert!(welch.df < 8.0 - 1.0, "welch df {}", welch.df);
        assert!(welch.p > pooled.p);
    }

    #[test]
    fn anova_matches_quadrature_reference() {
        // Fixed 3x5 fixture; F from the definitional sums of squares and p
        // from an independent numerical integration of the F tail.
        let groups = vec![
            vec![64.0, 72.0, 68.0, 77.0, 56.0],
            vec![91.0, 85.0, 87.0, 75.0, 78.0],
            vec![79.0, 69.0, 74.0, 61.0, 70.0],
        ];
        let a = one_way_anova(&groups).unwrap();
        assert!((a.f - 6.917_382_683_4).abs() < 1e-9, "F {}", a.f);
        assert!((a.p - 0.010_042_927_9).abs() < 1e-6, "p {}", a.p);
        assert_eq!((a.df_between, a.df_within), (2.0, 12.0));
    }

    #[test]
    fn anova_of_equal_means_is_null() {
        let groups = vec![
            vec![1.0, 2.0, 3.0],   // mean 2
            vec![0.0, 2.0, 4.0],   // mean 2
            vec![-1.0, 2.0, 5.0],  // mean 2
        ];
        let a = one_way_anova(&groups).unwrap();
        assert!(a.f.abs() < 1e-12);
        assert!((a.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_group_anova_is_t_squared() {
        let mut rng = SeedRng::new(53);
        for _ in 0..20 {
            let a: Vec<f64> = (0..5).map(|_| rng.normal() * 3.0 + 80.0).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.normal() * 5.0 + 85.0).collect();
            let t = pairwise_t_test(&a, &b, TTestKind::Pooled).unwrap();
            let f = one_way_anova(&[a, b]).unwrap();
            assert!((f.f - t.t * t.t).abs() < 1e-9);
            assert!((f.p - t.p).abs() < 1e-9);
        }
    }

    #[test]
    fn anova_rejects_degenerate_input() {
        assert!(matches!(
            one_way_anova(&[vec![1.0, 2.0]]),
            Err(EvalError::TooFewGroups { got: 1 })
        ));
        assert!(one_way_anova(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(matches!(
            one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]),
            Err(EvalError::ZeroVariance)
        ));
    }
}
