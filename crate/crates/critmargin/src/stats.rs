//! Statistical primitives: Student-t and normal quantiles, dispersion,
//! kernel bandwidths, and the percentile-error bound used to audit
//! fitted percentile curves.
//!
//! Quantiles are computed dependency-free, by bisection on the regularized
//! incomplete-beta CDF (Student t) and on an erfc-based CDF (normal), so
//! they can be verified directly against standard tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A confidence or percentile level in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Confidence(f64);

impl Confidence {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value < 1.0 {
            Ok(Confidence(value))
        } else {
            Err(Error::InvalidArgument(format!(
                "confidence must lie in (0, 1), got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Confidence {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Confidence::new(value)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}

/// Effective number of samples supporting a kernel-density column.
/// May be fractional; always positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSampleSize(f64);

impl EffectiveSampleSize {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(EffectiveSampleSize(value))
        } else {
            Err(Error::InvalidArgument(format!(
                "effective sample size must be positive, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

// ---------------------------------------------------------------------------
// Gamma / incomplete beta machinery
// ---------------------------------------------------------------------------

/// Natural log of the gamma function (Lanczos approximation, g = 7).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
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
    if x < 0.5 {
        // Reflection for the left half-plane.
        std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = COEFFS[0];
        for (i, &c) in COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail mass P(|T| > t) of the Student t distribution.
fn t_two_sided_tail(t: f64, dof: f64) -> f64 {
    inc_beta(0.5 * dof, 0.5, dof / (dof + t * t))
}

/// Complementary error function (rational Chebyshev fit, |error| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98
                                    + t * (1.488_515_87
                                        + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal CDF.
fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Public quantile operations
// ---------------------------------------------------------------------------

/// Two-sided Student-t quantile: the value `t` such that a central interval
/// [-t, t] carries probability mass `alpha` under a t distribution with
/// `dof` degrees of freedom.
pub fn t_quantile_two_sided(alpha: Confidence, dof: u64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::InvalidArgument(
            "degrees of freedom must be at least 1".into(),
        ));
    }
    let tail = 1.0 - alpha.value();
    let dof = dof as f64;

    // Bracket the root of I(t) - tail, decreasing in t.
    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_two_sided_tail(hi, dof) > tail {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::InvalidArgument(format!(
                "t quantile does not converge for alpha {}",
                alpha.value()
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = t_two_sided_tail(mid, dof);
        if (f - tail).abs() < 1e-14 {
            return Ok(mid);
        }
        if f > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One-sided standard-normal quantile: the value `z` with upper-tail mass
/// `1 - alpha` above it, i.e. `Phi(z) = alpha`. Antisymmetry around the
/// median is enforced exactly.
pub fn z_quantile_one_sided(alpha: Confidence) -> f64 {
    let p = alpha.value();
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -z_quantile_one_sided(Confidence(1.0 - p));
    }
    let mut lo = 0.0;
    let mut hi = 40.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Dispersion and bandwidths
// ---------------------------------------------------------------------------

/// Sample standard deviation with Bessel's correction.
pub fn sample_stdev_bessel(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "standard deviation needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Kernel bandwidth for a two-dimensional density plot: `stdev * m^(-1/6)`.
/// The exponent denominator is 4 plus the number of plot dimensions.
pub fn scott_bandwidth(stdev: f64, m: usize) -> f64 {
    assert!(m >= 1, "sample count must be at least 1");
    stdev * (m as f64).powf(-1.0 / 6.0)
}

// ---------------------------------------------------------------------------
// Percentile-error bound
// ---------------------------------------------------------------------------

/// Bound on how far an estimated percentile's true coverage can fall below
/// the nominal level `beta`, at confidence `alpha`, for an effective sample
/// of size `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileErrorBound {
    /// Exact solution of `eps = z_alpha * sqrt(b*(1-b*)) / sqrt(d)` with
    /// `b* = beta - eps`, taking the root below `beta`.
    pub tighter: f64,
    /// `0.5 * z_alpha / sqrt(d)`, from `sqrt(b*(1-b*)) <= 0.5`.
    pub looser: f64,
    /// Set when `d * (1 - beta) < 5` and the normal approximation behind
    /// the bound becomes questionable.
    pub normal_approx_warning: bool,
}

/// Solves the percentile-error bound for the underestimation side
/// (`beta* < beta`), which is the side that can void a coverage guarantee.
pub fn percentile_error_bound(
    d: EffectiveSampleSize,
    beta: Confidence,
    alpha: Confidence,
) -> PercentileErrorBound {
    let d = d.value();
    let b = beta.value();
    let z = z_quantile_one_sided(alpha);
    let z2 = z * z;

    // eps^2 * d = z^2 * (b - eps)(1 - b + eps) rearranges to the quadratic
    // (d + z^2) eps^2 - z^2 (2b - 1) eps - z^2 b (1 - b) = 0; the positive
    // root is the underestimation bound.
    let qa = d + z2;
    let qb = z2 * (2.0 * b - 1.0);
    let qc = z2 * b * (1.0 - b);
    let disc = qb * qb + 4.0 * qa * qc;
    let tighter = (qb + disc.sqrt()) / (2.0 * qa);
    let looser = 0.5 * z / d.sqrt();

    PercentileErrorBound {
        tighter,
        looser,
        normal_approx_warning: d * (1.0 - b) < 5.0,
    }
}

// ---------------------------------------------------------------------------
// Effective sample size
// ---------------------------------------------------------------------------

/// Kernel shape used when estimating how many tuples support a density column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Box,
    Gaussian,
}

/// Effective sample size of a kernel-density column: the typical number of
/// kernels overlapping a given horizontal position. For a Gaussian kernel the
/// box-kernel count picks up a factor `sqrt(2*pi)`. Near the axis boundary
/// only one side carries kernels, which halves the count.
pub fn effective_sample_size(
    m: usize,
    bandwidth: f64,
    proxy_range: f64,
    kernel: Kernel,
    boundary_halving: bool,
) -> Result<EffectiveSampleSize> {
    if proxy_range.is_nan() || proxy_range <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "proxy range must be positive, got {proxy_range}"
        )));
    }
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let base = m as f64 * bandwidth / proxy_range;
    let mut d = match kernel {
        Kernel::Box => base,
        Kernel::Gaussian => (2.0 * std::f64::consts::PI).sqrt() * base,
    };
    if boundary_halving {
        d *= 0.5;
    }
    EffectiveSampleSize::new(d)
}
