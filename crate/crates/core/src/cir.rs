//! Constant-coefficient CIR oracle. `X_t / L_t` is noncentral chi-square with
//! `δ = 4a/γ²` degrees of freedom and noncentrality `ζ_t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::derive_path_seed;
use crate::quad::{integrate, Tolerance};
use crate::special::{ln_bessel_i, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIRParams {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub x: f64,
    pub t: f64,
    pub l_t: f64,
    pub delta: f64,
    pub zeta: f64,
}

/// `(L_t, ζ_t / x)`; `ζ_t` is linear in the start point.
fn scale_and_noncentrality(b: f64, gamma: f64, t: f64) -> (f64, f64) {
    let g2 = gamma * gamma;
    if b == 0.0 {
        return (g2 * t / 4.0, 4.0 / (g2 * t));
    }
    let l = -(-b * t).exp_m1() * g2 / (4.0 * b);
    let z = 4.0 * b / (g2 * (b * t).exp_m1());
    (l, z)
}

pub fn cir_params(a: f64, b: f64, gamma: f64, x: f64, t: f64) -> Result<CIRParams> {
    if !(a > 0.0) {
        return Err(invalid("a", "a must be > 0"));
    }
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "gamma must be > 0"));
    }
    if !(x >= 0.0) {
        return Err(invalid("x", "start must be >= 0"));
    }
    if !(t > 0.0) {
        return Err(Error::DegenerateTime(t));
    }
    if !b.is_finite() {
        return Err(invalid("b", "b must be finite"));
    }
    let (l_t, z) = scale_and_noncentrality(b, gamma, t);
    Ok(CIRParams {
        a,
        b,
        gamma,
        x,
        t,
        l_t,
        delta: 4.0 * a / (gamma * gamma),
        zeta: x * z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Series,
    Bessel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub y: f64,
    pub pdf: f64,
    pub log_pdf: f64,
    pub series_terms_used: usize,
    pub method: OracleMethod,
}

/// Hard cap on Poisson-mixture terms.
pub const MAX_TERMS: usize = 10_000;

fn ln_central_chi2(z: f64, k: f64) -> f64 {
    let h = 0.5 * k;
    if z == 0.0 {
        return match h.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => -std::f64::consts::LN_2,
            _ => f64::NEG_INFINITY,
        };
    }
    (h - 1.0) * z.ln() - 0.5 * z - h * std::f64::consts::LN_2 - ln_gamma(h)
}

/// Log of the noncentral chi-square density as the Poisson mixture
/// `Σ_n Pois(n; ζ/2) χ²_{δ+2n}(z)`, summed outward from its largest term.
/// Returns the value and the number of terms used.
pub fn ln_ncx2_pdf_series(z: f64, delta: f64, zeta: f64) -> Result<(f64, usize)> {
    if !(delta > 0.0) || !(zeta >= 0.0) || !(z >= 0.0) {
        return Err(invalid("delta", "need delta > 0, zeta >= 0, z >= 0"));
    }
    if zeta == 0.0 || z == 0.0 {
        return Ok((ln_central_chi2(z, delta) - 0.5 * zeta, 1));
    }
    let h = 0.5 * delta;
    let w = 0.25 * zeta * z;
    // Largest term: (n+1)(n+h) ≈ ζz/4.
    let n0 = {
        let n = 0.5 * (-h + (h * h + 4.0 * w).sqrt());
        if n.is_finite() && n > 0.0 {
            n.floor()
        } else {
            0.0
        }
    };
    let ln_peak = -0.5 * zeta + n0 * (0.5 * zeta).ln() - ln_gamma(n0 + 1.0)
        + ln_central_chi2(z, delta + 2.0 * n0);
    let mut sum = 1.0;
    let mut terms = 1;
    let mut term = 1.0;
    let mut n = n0;
    loop {
        let next = term * w / ((n + 1.0) * (n + h));
        n += 1.0;
        terms += 1;
        sum += next;
        let decreasing = next < term;
        term = next;
        if decreasing && term < 1e-16 * sum {
            break;
        }
        if terms > MAX_TERMS {
            return Err(Error::SeriesNotConverged { terms });
        }
    }
    let mut term = 1.0;
    let mut n = n0;
    while n >= 1.0 {
        term *= n * (n - 1.0 + h) / w;
        n -= 1.0;
        terms += 1;
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
        if terms > MAX_TERMS {
            return Err(Error::SeriesNotConverged { terms });
        }
    }
    Ok((ln_peak + sum.ln(), terms))
}

/// Log density through `½ e^{−(z+ζ)/2} (z/ζ)^{δ/4−1/2} I_{δ/2−1}(√(ζz))`.
pub fn ln_ncx2_pdf_bessel(z: f64, delta: f64, zeta: f64) -> f64 {
    if zeta == 0.0 || z == 0.0 {
        return ln_central_chi2(z, delta) - 0.5 * zeta;
    }
    let nu = 0.5 * delta - 1.0;
    -std::f64::consts::LN_2 - 0.5 * (z + zeta)
        + (0.25 * delta - 0.5) * (z / zeta).ln()
        + ln_bessel_i(nu, (zeta * z).sqrt())
}

pub fn ncx2_pdf(z: f64, delta: f64, zeta: f64) -> Result<f64> {
    Ok(ln_ncx2_pdf_series(z, delta, zeta)?.0.exp())
}

pub fn cir_density(p: &CIRParams, y: f64) -> Result<DensityPoint> {
    if !(y > 0.0) {
        return Err(invalid("y", "y must be > 0"));
    }
    let (ln, terms) = ln_ncx2_pdf_series(y / p.l_t, p.delta, p.zeta)?;
    let log_pdf = ln - p.l_t.ln();
    Ok(DensityPoint {
        y,
        pdf: log_pdf.exp(),
        log_pdf,
        series_terms_used: terms,
        method: OracleMethod::Series,
    })
}

pub fn cir_density_bessel(p: &CIRParams, y: f64) -> Result<DensityPoint> {
    if !(y > 0.0) {
        return Err(invalid("y", "y must be > 0"));
    }
    let log_pdf = ln_ncx2_pdf_bessel(y / p.l_t, p.delta, p.zeta) - p.l_t.ln();
    Ok(DensityPoint {
        y,
        pdf: log_pdf.exp(),
        log_pdf,
        series_terms_used: 0,
        method: OracleMethod::Bessel,
    })
}

/// `ln p_t(y)`, `−∞` where the density underflows.
pub fn cir_log_density(p: &CIRParams, y: f64) -> Result<f64> {
    cir_density(p, y).map(|d| d.log_pdf)
}

/// Mean and variance of `X_t`.
pub fn cir_mean_var(p: &CIRParams) -> (f64, f64) {
    let (a, b, g2, x, t) = (p.a, p.b, p.gamma * p.gamma, p.x, p.t);
    if b == 0.0 {
        return (x + a * t, x * g2 * t + 0.5 * a * g2 * t * t);
    }
    let decay = (-b * t).exp();
    let one_minus = -(-b * t).exp_m1();
    let mean = x * decay + a / b * one_minus;
    let var = x * g2 / b * decay * one_minus + a * g2 / (2.0 * b * b) * one_minus * one_minus;
    (mean, var)
}

/// One noncentral chi-square variate.
pub fn sample_ncx2<R: Rng + ?Sized>(rng: &mut R, delta: f64, zeta: f64) -> f64 {
    if delta > 1.0 {
        let chi = ChiSquared::new(delta - 1.0).expect("delta > 1").sample(rng);
        let n: f64 = StandardNormal.sample(rng);
        let s = n + zeta.sqrt();
        chi + s * s
    } else {
        let k = if zeta > 0.0 {
            Poisson::new(0.5 * zeta).expect("finite rate").sample(rng)
        } else {
            0.0
        };
        ChiSquared::new(delta + 2.0 * k)
            .expect("positive dof")
            .sample(rng)
    }
}

/// `L_t · Z`, `Z ~ χ'²(δ, ζ_t)`, from a fresh generator seeded with `seed`.
pub fn cir_exact_sample(p: &CIRParams, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.l_t * sample_ncx2(&mut rng, p.delta, p.zeta)
}

/// `n` independent exact draws; draw `i` uses the seed derived from
/// `(master_seed, i)`, so the output does not depend on the thread count.
pub fn cir_exact_samples(p: &CIRParams, n: usize, master_seed: u64) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .map(|i| cir_exact_sample(p, derive_path_seed(master_seed, i as u64)))
        .collect()
}

/// Exact one-step transition of the CIR process over a fixed step.
#[derive(Debug, Clone, Copy)]
pub struct CirTransition {
    l: f64,
    zeta_per_x: f64,
    delta: f64,
}

impl CirTransition {
    pub fn new(a: f64, b: f64, gamma: f64, dt: f64) -> Result<Self> {
        let p = cir_params(a, b, gamma, 0.0, dt)?;
        let (l, zeta_per_x) = scale_and_noncentrality(b, gamma, dt);
        Ok(Self {
            l,
            zeta_per_x,
            delta: p.delta,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, x: f64) -> f64 {
        self.l * sample_ncx2(rng, self.delta, self.zeta_per_x * x.max(0.0))
    }
}

/// `∫_0^y p_t` for an increasing list of points, accumulated piecewise by
/// adaptive quadrature.
pub fn cir_cdf_at_sorted(p: &CIRParams, sorted: &[f64]) -> Result<Vec<f64>> {
    let f = |y: f64| {
        if y > 0.0 {
            cir_log_density(p, y).map(f64::exp).unwrap_or(f64::NAN)
        } else {
            0.0
        }
    };
    let tol = Tolerance::new(1e-13, 1e-10);
    let mut out = Vec::with_capacity(sorted.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &y in sorted {
        if y < prev {
            return Err(invalid("sorted", "points must be increasing"));
        }
        if prev == 0.0 && y > 0.0 {
            acc += integral_from_zero(&f, y, tol)?;
        } else if y > prev {
            acc += integrate(f, prev, y, tol)?.value;
        }
        prev = y;
        out.push(acc.min(1.0));
    }
    Ok(out)
}

/// `∫_0^y f` over octave panels shrinking toward 0, for integrands with an
/// integrable power singularity at the origin.
fn integral_from_zero(f: &dyn Fn(f64) -> f64, y: f64, tol: Tolerance) -> Result<f64> {
    let mut total = 0.0;
    let mut hi = y;
    for _ in 0..1000 {
        let lo = 0.5 * hi;
        let piece = integrate(f, lo, hi, tol)?.value;
        total += piece;
        hi = lo;
        if piece.abs() < 1e-17 * total.abs().max(1e-300) || hi < 1e-300 {
            break;
        }
    }
    Ok(total)
}
