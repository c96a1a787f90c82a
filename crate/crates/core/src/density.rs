//! Density estimation from samples: Gaussian and log-Gaussian kernel
//! estimates, and Fourier inversion of the localised empirical
//! characteristic function `E[e^{iξX} φ_R(X − y0)] / m0`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cir::{cir_log_density, CIRParams};
use crate::error::{invalid, Error, Result};
use crate::special::pairwise_sum;
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Analytic,
    Kde,
    KdeLog,
    FourierLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelVariant {
    Gaussian,
    LogGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierDiagnostics {
    pub m0: f64,
    pub xi_cutoff: f64,
    pub xi_step: f64,
    /// Largest `|Im|` of the inversion relative to the largest `|Re|`.
    pub imaginary_residue: f64,
    /// Most negative value relative to the peak (0 if none).
    pub ripple: f64,
    /// Mean `|cf|` over the outer tenth of the ξ range.
    pub tail_cf_magnitude: f64,
    /// Rough size of the discarded part of the inversion integral.
    pub truncation_estimate: f64,
    /// `(ξ, |cf(ξ)|)` at roughly 64 points on `ξ ≥ 0`.
    pub cf_decay: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub method: EstimateMethod,
    pub bandwidth: Option<f64>,
    pub n_samples: usize,
    /// `(y0, R)` for localised estimates.
    pub localization: Option<(f64, f64)>,
    pub fourier: Option<FourierDiagnostics>,
}

/// Analytic CIR density on a grid (zero where `y ≤ 0`).
pub fn analytic_density(p: &CIRParams, grid: &[f64]) -> Result<DensityEstimate> {
    let values = grid
        .iter()
        .map(|&y| {
            if y > 0.0 {
                cir_log_density(p, y).map(f64::exp)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        values,
        method: EstimateMethod::Analytic,
        bandwidth: None,
        n_samples: 0,
        localization: None,
        fourier: None,
    })
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let sd = (pairwise_sum(&sq) / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        Ok(h)
    } else {
        Ok(1e-3 * mean.abs().max(1.0))
    }
}

/// Kernels further than this many bandwidths away are skipped.
const KERNEL_REACH: f64 = 8.5;

fn gaussian_sum(sorted: &[f64], at: f64, h: f64) -> f64 {
    let lo = sorted.partition_point(|x| *x < at - KERNEL_REACH * h);
    let hi = sorted.partition_point(|x| *x <= at + KERNEL_REACH * h);
    let terms: Vec<f64> = sorted[lo..hi]
        .iter()
        .map(|x| {
            let u = (at - x) / h;
            (-0.5 * u * u).exp()
        })
        .collect();
    pairwise_sum(&terms)
}

/// Kernel density estimate. `bandwidth = None` applies Silverman's rule to
/// the samples (to their logarithms for the log variant).
pub fn kde(
    samples: &[f64],
    grid: &[f64],
    bandwidth: Option<f64>,
    variant: KernelVariant,
) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut work: Vec<f64> = match variant {
        KernelVariant::Gaussian => samples.to_vec(),
        KernelVariant::LogGaussian => {
            if let Some(bad) = samples.iter().find(|x| !(**x > 0.0)) {
                return Err(Error::NonpositiveSample(*bad));
            }
            samples.iter().map(|x| x.ln()).collect()
        }
    };
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => {
            return Err(invalid(
                "bandwidth",
                format!("bandwidth must be > 0, got {h}"),
            ))
        }
        None => silverman_bandwidth(&work)?,
    };
    work.sort_by(f64::total_cmp);
    let norm = 1.0 / (work.len() as f64 * h * (2.0 * PI).sqrt());
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&y| match variant {
            KernelVariant::Gaussian => norm * gaussian_sum(&work, y, h),
            KernelVariant::LogGaussian => {
                if y > 0.0 {
                    norm * gaussian_sum(&work, y.ln(), h) / y
                } else {
                    0.0
                }
            }
        })
        .collect();
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        values,
        method: match variant {
            KernelVariant::Gaussian => EstimateMethod::Kde,
            KernelVariant::LogGaussian => EstimateMethod::KdeLog,
        },
        bandwidth: Some(h),
        n_samples: samples.len(),
        localization: None,
        fourier: None,
    })
}

// ---------------------------------------------------------------------------
// Localisation and Fourier inversion

fn smoothstep5(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Bump `φ_R(x)`: 1 for `|x| ≤ R`, 0 for `|x| ≥ 2R`, a quintic smoothstep in
/// between (twice continuously differentiable).
pub fn bump(x: f64, radius: f64) -> f64 {
    let s = ((x.abs() - radius) / radius).clamp(0.0, 1.0);
    1.0 - smoothstep5(s)
}

/// Derivative of order `k ≤ 3` of the bump.
pub fn bump_derivative(x: f64, radius: f64, k: usize) -> f64 {
    if k == 0 {
        return bump(x, radius);
    }
    let s = (x.abs() - radius) / radius;
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    let d = match k {
        1 => 30.0 * s * s * (s - 1.0) * (s - 1.0),
        2 => 60.0 * s * (2.0 * s * s - 3.0 * s + 1.0),
        3 => 60.0 * (6.0 * s * s - 6.0 * s + 1.0),
        _ => return f64::NAN,
    };
    // d/dx = sign(x)/R d/ds; odd orders pick up the sign.
    let sign = if k % 2 == 1 { x.signum() } else { 1.0 };
    -sign * d / radius.powi(k as i32)
}

/// Empirical localised characteristic function on a ξ grid, stored as
/// separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedCf {
    pub m0: f64,
    pub xi: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// `sqrt(Σ w²) / Σ w`: the modulus of an empirical cf made of noise.
    pub noise_floor: f64,
}

struct Localized {
    /// `x_i − y0` for samples with positive weight.
    offsets: Vec<f64>,
    weights: Vec<f64>,
    total: f64,
    m0: f64,
    noise_floor: f64,
}

fn localize(samples: &[f64], y0: f64, radius: f64) -> Result<Localized> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(radius > 0.0 && radius <= 1.0) {
        return Err(invalid("radius", "R must lie in (0, 1]"));
    }
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    for &x in samples {
        let w = bump(x - y0, radius);
        if w > 0.0 {
            offsets.push(x - y0);
            weights.push(w);
        }
    }
    if weights.is_empty() {
        return Err(Error::ZeroMass);
    }
    let total = pairwise_sum(&weights);
    let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    Ok(Localized {
        m0: total / samples.len() as f64,
        noise_floor: pairwise_sum(&sq).sqrt() / total,
        offsets,
        weights,
        total,
    })
}

impl Localized {
    /// `Σ w e^{iξ(x−y0)} / Σ w`.
    fn centred_cf(&self, xi: f64) -> (f64, f64) {
        let re: Vec<f64> = self
            .offsets
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * (xi * d).cos())
            .collect();
        let im: Vec<f64> = self
            .offsets
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * (xi * d).sin())
            .collect();
        (
            pairwise_sum(&re) / self.total,
            pairwise_sum(&im) / self.total,
        )
    }
}

/// `m0 = mean φ_R(X − y0)` and `cf(ξ) = mean e^{iξX} φ_R(X − y0) / m0`.
pub fn empirical_localized_cf(
    samples: &[f64],
    y0: f64,
    radius: f64,
    xi_grid: &[f64],
) -> Result<LocalizedCf> {
    let loc = localize(samples, y0, radius)?;
    let (re, im): (Vec<f64>, Vec<f64>) = xi_grid
        .par_iter()
        .map(|&xi| {
            if xi == 0.0 {
                return (1.0, 0.0);
            }
            let (cr, ci) = loc.centred_cf(xi);
            // Undo the centring: multiply by e^{iξ y0}.
            let (s, c) = (xi * y0).sin_cos();
            (cr * c - ci * s, cr * s + ci * c)
        })
        .unzip();
    Ok(LocalizedCf {
        m0: loc.m0,
        xi: xi_grid.to_vec(),
        re,
        im,
        noise_floor: loc.noise_floor,
    })
}

/// Uniform symmetric grid `{−n h, …, n h}`.
pub fn symmetric_xi_grid(xi_max: f64, step: f64) -> Vec<f64> {
    let n = (xi_max / step).round() as i64;
    (-n..=n).map(|j| j as f64 * step).collect()
}

/// Default ξ range and step.
pub const XI_MAX: f64 = 256.0;
pub const XI_STEP: f64 = 0.05;

/// Tolerance on `cf(−ξ) = conj cf(ξ)`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// `p^{(k)}(y) = m0/(2π) ∫ (−iξ)^k e^{−iξy} cf(ξ) dξ` by the trapezoidal rule.
pub fn invert_cf(
    m0: f64,
    re: &[f64],
    im: &[f64],
    xi_grid: &[f64],
    target: &[f64],
    k: u32,
) -> Result<DensityEstimate> {
    let n = xi_grid.len();
    if n < 3 || re.len() != n || im.len() != n {
        return Err(invalid(
            "xi_grid",
            "need at least three ξ points with matching cf values",
        ));
    }
    let step = xi_grid[1] - xi_grid[0];
    if !(step > 0.0)
        || xi_grid
            .windows(2)
            .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step)
    {
        return Err(invalid("xi_grid", "ξ grid must be uniform and increasing"));
    }
    if (0..n).any(|j| (xi_grid[j] + xi_grid[n - 1 - j]).abs() > 1e-9 * step) {
        return Err(invalid("xi_grid", "ξ grid must be symmetric about 0"));
    }
    let defect = (0..n)
        .map(|j| {
            let r = n - 1 - j;
            (re[j] - re[r]).abs().max((im[j] + im[r]).abs())
        })
        .fold(0.0, f64::max);
    if defect > HERMITIAN_TOL {
        return Err(Error::NonHermitian(defect));
    }

    // (−iξ)^k = ξ^k (−i)^k; (−i)^k cycles through 1, −i, −1, i.
    let (pr, pi) = match k % 4 {
        0 => (1.0, 0.0),
        1 => (0.0, -1.0),
        2 => (-1.0, 0.0),
        _ => (0.0, 1.0),
    };
    let weights: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let xk = xi_grid[j].powi(k as i32);
            let trap = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            let (a, b) = (re[j] * xk * trap, im[j] * xk * trap);
            (a * pr - b * pi, a * pi + b * pr)
        })
        .collect();
    let scale = m0 * step / (2.0 * PI);
    let pairs: Vec<(f64, f64)> = target
        .par_iter()
        .map(|&y| {
            let mut rs = Vec::with_capacity(n);
            let mut is = Vec::with_capacity(n);
            for (j, &(a, b)) in weights.iter().enumerate() {
                // e^{−iξy} (a + ib)
                let (s, c) = (xi_grid[j] * y).sin_cos();
                rs.push(a * c + b * s);
                is.push(b * c - a * s);
            }
            (scale * pairwise_sum(&rs), scale * pairwise_sum(&is))
        })
        .collect();
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let imag = pairs.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    let lowest = values.iter().copied().fold(0.0f64, f64::min);
    let xi_max = xi_grid[n - 1];
    let outer: Vec<f64> = (0..n)
        .filter(|&j| xi_grid[j] >= 0.9 * xi_max)
        .map(|j| re[j].hypot(im[j]))
        .collect();
    let tail = pairwise_sum(&outer) / outer.len().max(1) as f64;
    let decay_stride = (n / 2 / 64).max(1);
    let cf_decay = (n / 2..n)
        .step_by(decay_stride)
        .map(|j| (xi_grid[j], re[j].hypot(im[j])))
        .collect();
    Ok(DensityEstimate {
        grid: target.to_vec(),
        values,
        method: EstimateMethod::FourierLocal,
        bandwidth: None,
        n_samples: 0,
        localization: None,
        fourier: Some(FourierDiagnostics {
            m0,
            xi_cutoff: xi_max,
            xi_step: step,
            imaginary_residue: if peak > 0.0 { imag / peak } else { imag },
            ripple: if peak > 0.0 && lowest < 0.0 {
                -lowest / peak
            } else {
                0.0
            },
            tail_cf_magnitude: tail,
            truncation_estimate: m0 / PI * tail * 0.1 * xi_max * xi_max.powi(k as i32),
            cf_decay,
        }),
    })
}

/// How far the ξ range of an empirical inversion extends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiCutoff {
    Fixed(f64),
    /// Stop where the modulus of the empirical cf, averaged over a unit
    /// window, first falls below `factor` times its noise floor. Pure noise
    /// has mean modulus about 0.89 of the floor, so `factor = 1` cuts where
    /// signal and noise are comparable. The default of 0.5 runs a little into
    /// the noise, which pays off when the density has a kink in the window.
    NoiseFloor {
        factor: f64,
        max: f64,
    },
}

pub const NOISE_FLOOR_FACTOR: f64 = 0.5;

impl Default for XiCutoff {
    fn default() -> Self {
        XiCutoff::NoiseFloor {
            factor: NOISE_FLOOR_FACTOR,
            max: XI_MAX,
        }
    }
}

/// Localised Fourier-inversion density estimate around `y0`. Outside
/// `B_R(y0)` the result is `p φ_R`, not `p`. With no mass in `B_2R(y0)` the
/// estimate is identically zero.
pub fn fourier_local(
    samples: &[f64],
    y0: f64,
    radius: f64,
    grid: &[f64],
    cutoff: XiCutoff,
    step: f64,
) -> Result<DensityEstimate> {
    let loc = match localize(samples, y0, radius) {
        Ok(l) => l,
        Err(Error::ZeroMass) => {
            return Ok(DensityEstimate {
                grid: grid.to_vec(),
                values: vec![0.0; grid.len()],
                method: EstimateMethod::FourierLocal,
                bandwidth: None,
                n_samples: samples.len(),
                localization: Some((y0, radius)),
                fourier: None,
            })
        }
        Err(e) => return Err(e),
    };
    let xi_max = match cutoff {
        XiCutoff::Fixed(x) => x,
        XiCutoff::NoiseFloor { factor, max } => {
            let window = (1.0 / step).round().max(1.0) as usize;
            let level = factor * loc.noise_floor;
            let mut recent: Vec<f64> = Vec::new();
            let mut j = 1;
            let mut found = max;
            loop {
                let xi = j as f64 * step;
                if xi > max {
                    break;
                }
                let (r, i) = loc.centred_cf(xi);
                recent.push(r.hypot(i));
                if recent.len() > window {
                    recent.remove(0);
                }
                if recent.len() == window && pairwise_sum(&recent) / window as f64 <= level {
                    found = xi;
                    break;
                }
                j += 1;
            }
            found
        }
    };
    let xi = symmetric_xi_grid(xi_max, step);
    let cf = empirical_localized_cf(samples, y0, radius, &xi)?;
    let mut est = invert_cf(cf.m0, &cf.re, &cf.im, &xi, grid, 0)?;
    est.n_samples = samples.len();
    est.localization = Some((y0, radius));
    Ok(est)
}
