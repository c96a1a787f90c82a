//! Special functions used by the CIR oracle.
//!
//! `ln_gamma` comes from statrs; the modified Bessel function of the first
//! kind is evaluated here in log form so that `e^{-x} I_ν(x)` style products
//! stay finite for the arguments the noncentral chi-square density needs.

use std::f64::consts::PI;

pub use statrs::function::gamma::ln_gamma;

/// Which expansion produced a Bessel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselRoute {
    PowerSeries,
    LargeArgument,
}

/// `ln I_ν(x)` for `ν > -1`, `x > 0`.
///
/// Small and moderate arguments use the ascending power series (all terms
/// positive, summed outward from the largest one). Large arguments use the
/// Hankel expansion `e^x / sqrt(2πx) · Σ (-1)^k a_k(ν) / x^k`.
pub fn ln_bessel_i(nu: f64, x: f64) -> f64 {
    ln_bessel_i_with_route(nu, x).0
}

pub fn ln_bessel_i_with_route(nu: f64, x: f64) -> (f64, BesselRoute) {
    debug_assert!(nu > -1.0);
    if x <= 0.0 {
        return if nu == 0.0 {
            (0.0, BesselRoute::PowerSeries)
        } else {
            (f64::NEG_INFINITY, BesselRoute::PowerSeries)
        };
    }
    if x > large_argument_threshold(nu) {
        if let Some(v) = ln_bessel_i_hankel(nu, x) {
            return (v, BesselRoute::LargeArgument);
        }
    }
    (ln_bessel_i_series(nu, x), BesselRoute::PowerSeries)
}

fn large_argument_threshold(nu: f64) -> f64 {
    30.0 + 0.25 * nu * nu
}

/// Ascending series `Σ (x/2)^{2k+ν} / (k! Γ(k+ν+1))`, accumulated relative to
/// its largest term.
pub fn ln_bessel_i_series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    // Peak of the term sequence: (k+1)(k+ν+1) = x²/4.
    let peak = {
        let k = 0.5 * (-(nu + 2.0) + (nu * nu + x * x).sqrt());
        if k.is_finite() && k > 0.0 {
            k.floor() as u64
        } else {
            0
        }
    };
    let kf = peak as f64;
    let ln_peak = (2.0 * kf + nu) * half.ln() - ln_gamma(kf + 1.0) - ln_gamma(kf + nu + 1.0);

    let mut sum = 1.0;
    // Upward.
    let mut term = 1.0;
    let mut k = kf;
    loop {
        term *= q / ((k + 1.0) * (k + nu + 1.0));
        sum += term;
        k += 1.0;
        if term < 1e-17 * sum {
            break;
        }
    }
    // Downward.
    let mut term = 1.0;
    let mut k = kf;
    while k >= 1.0 {
        term *= k * (k + nu) / q;
        sum += term;
        k -= 1.0;
        if term < 1e-17 * sum {
            break;
        }
    }
    ln_peak + sum.ln()
}

/// Hankel large-argument expansion. Returns `None` when the asymptotic terms
/// stop decreasing before reaching double precision.
pub fn ln_bessel_i_hankel(nu: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut sum: f64 = 1.0;
    let mut term: f64 = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let j = (2 * k - 1) as f64;
        term *= -(mu - j * j) / (8.0 * k as f64 * x);
        let mag = term.abs();
        if mag < 1e-17 * sum.abs() {
            return Some(x - 0.5 * (2.0 * PI * x).ln() + sum.ln());
        }
        if mag > prev {
            return None;
        }
        prev = mag;
        sum += term;
    }
    None
}

/// Pairwise summation; result independent of how callers chunk the input.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
