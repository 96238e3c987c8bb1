//! Special functions used by the analytic laws and the gamma fit.
//!
//! Log-gamma and the regularized incomplete gamma come from `statrs`; this
//! module adds the edge cases the laws need (`x = 0`, `x = inf`) and the
//! gamma quantile used for equiprobable binning.

use statrs::function::gamma as sg;

pub fn ln_gamma(x: f64) -> f64 {
    sg::ln_gamma(x)
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    sg::ln_gamma(n as f64 + 1.0)
}

/// Regularized lower incomplete gamma `P(a, x)` for `a > 0`, `x >= 0`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        sg::gamma_lr(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        sg::gamma_ur(a, x)
    }
}

/// Log-density of a gamma law with `shape` and `rate` at `x > 0`.
pub fn ln_gamma_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
}

/// Density of a gamma law; handles `x = 0` for every shape.
pub fn gamma_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => rate,
            _ => 0.0,
        };
    }
    ln_gamma_pdf(shape, rate, x).exp()
}

/// Quantile of the gamma law: the `x` with `P(shape, rate * x) = p`.
///
/// Newton steps on the CDF safeguarded by a bisection bracket; converges to
/// a relative tolerance of about `1e-13` in `x`.
pub fn gamma_quantile(shape: f64, rate: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // Work on the unit-rate variable.
    let target_lower = p <= 0.5;
    let f = |t: f64| {
        if target_lower {
            gamma_p(shape, t) - p
        } else {
            (1.0 - p) - gamma_q(shape, t)
        }
    };
    // Wilson-Hilferty starting point.
    let z = normal_quantile(p);
    let c = 1.0 / (9.0 * shape);
    let mut t = shape * (1.0 - c + z * c.sqrt()).powi(3);
    if !(t.is_finite() && t > 0.0) {
        t = shape.max(1e-3);
    }
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let v = f(t);
        if v == 0.0 {
            break;
        }
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let dens = gamma_pdf(shape, 1.0, t);
        let mut next = if dens > 0.0 && dens.is_finite() {
            t - v / dens
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * t.max(lo) + 1.0
            };
        }
        if (next - t).abs() <= 1e-14 * t {
            t = next;
            break;
        }
        t = next;
    }
    t / rate
}

/// Standard normal quantile (Acklam's rational approximation, ~1e-9).
/// Only used to seed [`gamma_quantile`].
pub fn normal_quantile(p: f64) -> f64 {
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
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}
