//! Statistical test kit used by the verification layer: normal distribution
//! helpers, Kolmogorov-Smirnov tests, and chi-square confidence intervals.
//!
//! Everything is implemented directly from the classical formulas so the
//! acceptance targets do not depend on an external statistics stack.

use serde::{Deserialize, Serialize};

/// Significance level used throughout the verification suite.
pub const ALPHA: f64 = 0.01;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile by bisection on [`normal_cdf`]; accurate to
/// ~1e-12, plenty for confidence bounds.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Survival function of the Kolmogorov distribution, `Q(lambda) = P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form, fast-converging for small lambda.
        let f = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for j in 0..20 {
            let m = (2 * j + 1) as f64;
            let term = (-m * m * f).exp();
            cdf += term;
            if term < 1e-18 {
                break;
            }
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut q = 0.0;
        let mut sign = 1.0;
        for j in 1..100 {
            let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
            q += sign * term;
            sign = -sign;
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * q).clamp(0.0, 1.0)
    }
}

fn stephens_lambda(d: f64, effective_n: f64) -> f64 {
    let s = effective_n.sqrt();
    d * (s + 0.12 + 0.11 / s)
}

/// One-sample Kolmogorov-Smirnov test against the CDF `f`.
/// Returns the statistic and the asymptotic p-value (Stephens correction).
pub fn ks_one_sample(samples: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    assert!(!samples.is_empty());
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let c = f(x);
        d = d.max((i + 1) as f64 / n - c).max(c - i as f64 / n);
    }
    (d, kolmogorov_sf(stephens_lambda(d, n)))
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    (d, kolmogorov_sf(stephens_lambda(d, ne)))
}

/// Chi-square quantile via the Wilson-Hilferty cube approximation; intended
/// for the large degrees of freedom of ensemble variance intervals.
pub fn chi2_quantile(p: f64, dof: f64) -> f64 {
    let z = normal_quantile(p);
    let a = 2.0 / (9.0 * dof);
    dof * (1.0 - a + z * a.sqrt()).powi(3)
}

/// Sample mean and unbiased variance.
pub fn mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Outcome of one statistical check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub estimate: f64,
    /// Central confidence interval at confidence `1 - ALPHA`.
    pub ci: (f64, f64),
    pub target: f64,
    /// Absolute tolerance on `estimate - target`; tests that pass on a
    /// p-value instead carry 0 here.
    pub tolerance: f64,
    pub p_value: Option<f64>,
    pub pass: bool,
}

impl TestReport {
    /// Pass iff `|estimate - target| <= tolerance`.
    pub fn by_tolerance(
        name: impl Into<String>,
        estimate: f64,
        ci: (f64, f64),
        target: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            name: name.into(),
            estimate,
            ci,
            target,
            tolerance,
            p_value: None,
            pass: (estimate - target).abs() <= tolerance,
        }
    }

    /// Pass iff the p-value exceeds [`ALPHA`].
    pub fn by_p_value(
        name: impl Into<String>,
        estimate: f64,
        ci: (f64, f64),
        target: f64,
        p_value: f64,
    ) -> Self {
        Self {
            name: name.into(),
            estimate,
            ci,
            target,
            tolerance: 0.0,
            p_value: Some(p_value),
            pass: p_value > ALPHA,
        }
    }

    pub fn summary_line(&self) -> String {
        let p = self
            .p_value
            .map_or(String::new(), |p| format!(", p={p:.4}"));
        format!(
            "{}: estimate={:.6} target={:.6} ci=[{:.6}, {:.6}]{} -> {}",
            self.name,
            self.estimate,
            self.target,
            self.ci.0,
            self.ci.1,
            p,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// Combined Gaussian diagnostics for one fluctuation sample: zero mean
/// (z-test), variance against the target (chi-square interval), and
/// normality against `N(0, variance_target)` (Kolmogorov-Smirnov).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianCheck {
    pub mean: TestReport,
    pub variance: TestReport,
    pub normality: TestReport,
    pub pass: bool,
}

pub fn gaussian_check(samples: &[f64], variance_target: f64) -> crate::Result<GaussianCheck> {
    if samples.len() < 200 {
        return Err(crate::Error::TooFewSamples { needed: 200, got: samples.len() });
    }
    let n = samples.len() as f64;
    let (mean, var) = mean_and_variance(samples);
    let z_hi = normal_quantile(1.0 - ALPHA / 2.0);

    let se = (var / n).sqrt();
    let z = mean / se;
    let mean_p = 2.0 * (1.0 - normal_cdf(z.abs()));
    let mean_report =
        TestReport::by_p_value("mean", mean, (mean - z_hi * se, mean + z_hi * se), 0.0, mean_p);

    let dof = n - 1.0;
    let ci = (
        dof * var / chi2_quantile(1.0 - ALPHA / 2.0, dof),
        dof * var / chi2_quantile(ALPHA / 2.0, dof),
    );
    let variance_report = TestReport {
        name: "variance".into(),
        estimate: var,
        ci,
        target: variance_target,
        tolerance: 0.0,
        p_value: None,
        pass: variance_target >= ci.0 && variance_target <= ci.1,
    };

    let sd = variance_target.sqrt();
    let (d, p) = ks_one_sample(samples, |x| normal_cdf(x / sd));
    let normality_report = TestReport::by_p_value("normality", d, (0.0, 0.0), 0.0, p);

    let pass = mean_report.pass && variance_report.pass && normality_report.pass;
    Ok(GaussianCheck { mean: mean_report, variance: variance_report, normality: normality_report, pass })
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}
