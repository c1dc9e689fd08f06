//! Standard normal CDF and quantile function.
//!
//! The quantile uses a rational-approximation seed refined by two Newton
//! steps against an erf-series CDF, giving errors well below 1e-10 across
//! the usable range.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// erf(x) via the stable all-positive-term series
/// `erf(x) = (2/sqrt(pi)) e^{-x^2} sum_k x^{2k+1} 2^k / (1*3*...*(2k+1))`,
/// used for |x| <= 2.5.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= 2.0 * x2 / (2.0 * k as f64 + 1.0);
        let prev = sum;
        sum += term;
        if sum == prev || k > 200 {
            break;
        }
    }
    2.0 / PI.sqrt() * (-x2).exp() * sum
}

/// erfc(x) for x > 2.5 via the classical continued fraction
/// `erfc(x) = e^{-x^2} / sqrt(pi) * 1 / (x + 1/(2x + 2/(x + 3/(2x + ...))))`
/// evaluated with the modified Lentz algorithm.
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    // Partial denominators are all x; partial numerators run
    // 1, 1/2, 1, 3/2, 2, ...
    for n in 0..200 {
        let a = if n == 0 { 1.0 } else { n as f64 / 2.0 };
        let b = x;
        d = b + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() * f
}

fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x <= 2.5 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

/// Standard normal CDF.
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Rational-approximation seed for the quantile (relative error ~1e-9).
#[allow(clippy::excessive_precision)]
fn inverse_cdf_seed(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Quantile of the standard normal distribution.
///
/// Panics on `p` outside (0, 1).
pub fn inverse_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p={p} outside (0, 1)");
    let mut z = inverse_cdf_seed(p);
    for _ in 0..2 {
        let err = cdf(z) - p;
        let density = pdf(z);
        if density <= 0.0 {
            break;
        }
        z -= err / density;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((cdf(1.0) - 0.8413447460685429).abs() < 1e-12);
        assert!((cdf(-1.0) - 0.15865525393145707).abs() < 1e-12);
        assert!((cdf(3.0) - 0.9986501019683699).abs() < 1e-12);
    }

    #[test]
    fn quantile_reference_values() {
        // Frozen high-precision references.
        assert!((inverse_cdf(0.5) - 0.0).abs() < 1e-12);
        assert!((inverse_cdf(0.75) - 0.6744897501960817).abs() < 1e-10);
        assert!((inverse_cdf(0.95) - 1.6448536269514722).abs() < 1e-10);
        assert!((inverse_cdf(0.975) - 1.959963984540054).abs() < 1e-10);
        assert!((inverse_cdf(0.999) - 3.090232306167813).abs() < 1e-10);
        assert!((inverse_cdf(0.025) + 1.959963984540054).abs() < 1e-10);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for k in 1..200 {
            let p = k as f64 / 200.0;
            let z = inverse_cdf(p);
            assert!((cdf(z) - p).abs() < 1e-12, "p={p}");
        }
    }
}
