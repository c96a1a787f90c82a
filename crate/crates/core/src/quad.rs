//! Adaptive Gauss–Kronrod quadrature.

use crate::error::{Error, Result};

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
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

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-8,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(non_finite(a, b, c));
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(non_finite(
                a,
                b,
                if f1.is_finite() { c + dx } else { c - dx },
            ));
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

fn non_finite(lo: f64, hi: f64, at: f64) -> Error {
    Error::QuadratureFailure {
        lo,
        hi,
        reason: format!("non-finite integrand at {at:e}"),
    }
}

/// Adaptive bisection with a GK15 rule on each piece. Intervals are refined
/// largest-error first until the global estimate meets the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = gk15(&f, lo, hi)?;
    let mut pieces = vec![(lo, hi, v, e)];
    let mut value = v;
    let mut error = e;
    let mut evals = 15;
    while error > tol.abs.max(tol.rel * value.abs()) {
        if pieces.len() >= tol.max_intervals {
            return Err(Error::QuadratureFailure {
                lo,
                hi,
                reason: format!("interval budget exhausted (error {error:e})"),
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (pa, pb, pv, pe) = pieces.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            // Cannot split further; accept what we have.
            pieces.push((pa, pb, pv, pe));
            break;
        }
        let (v1, e1) = gk15(&f, pa, mid)?;
        let (v2, e2) = gk15(&f, mid, pb)?;
        evals += 30;
        value += v1 + v2 - pv;
        error += e1 + e2 - pe;
        pieces.push((pa, mid, v1, e1));
        pieces.push((mid, pb, v2, e2));
    }
    // Re-sum to shed accumulated rounding from the running updates.
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
    let value: f64 = pieces.iter().map(|p| p.2).sum();
    let error: f64 = pieces.iter().map(|p| p.3).sum();
    Ok(QuadResult {
        value: sign * value,
        error,
        evaluations: evals,
    })
}

/// `∫_0^∞ f` for integrands with at most an integrable power singularity at
/// 0 and decay at infinity. The axis is cut into octaves `[s 2^j, s 2^{j+1}]`
/// around `scale`; octaves are added outward until they stop contributing.
pub fn integrate_positive_axis<F: Fn(f64) -> f64>(
    f: F,
    scale: f64,
    tol: Tolerance,
) -> Result<QuadResult> {
    let mut total = 0.0;
    let mut error = 0.0;
    let mut evals = 0;
    let panel_tol = Tolerance {
        abs: tol.abs * 1e-2,
        ..tol
    };
    let mut quiet = 0;
    let mut lo = scale;
    for _ in 0..400 {
        let hi = 2.0 * lo;
        let r = integrate(&f, lo, hi, panel_tol)?;
        total += r.value;
        error += r.error;
        evals += r.evaluations;
        lo = hi;
        if r.value.abs() <= 1e-3 * tol.abs.max(tol.rel * total.abs()) {
            quiet += 1;
            if quiet >= 4 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    quiet = 0;
    let mut hi = scale;
    for _ in 0..1100 {
        let lo = 0.5 * hi;
        if lo <= f64::MIN_POSITIVE {
            break;
        }
        let r = integrate(&f, lo, hi, panel_tol)?;
        total += r.value;
        error += r.error;
        evals += r.evaluations;
        hi = lo;
        if r.value.abs() <= 1e-3 * tol.abs.max(tol.rel * total.abs()) {
            quiet += 1;
            if quiet >= 4 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    Ok(QuadResult {
        value: total,
        error,
        evaluations: evals,
    })
}
