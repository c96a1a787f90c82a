//! Classification of the boundary at 0: the sufficient conditions (s1)',
//! (s1)+(s2), then Feller's scale-function test. Also the Lamperti map and
//! the estimate of `l* = liminf_{x→0} 2a(x)/γ(x)²`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{
    check_growth, zero_tail_grid, CoefficientSet, Condition, Family, NormTable, Status, TAIL_WINDOW,
};
use crate::quad::{integrate, Tolerance};

/// Knots per octave of the cached inner integral.
const KNOTS_PER_OCTAVE: usize = 16;

fn inner_tolerance() -> Tolerance {
    Tolerance::new(1e-10, 1e-8)
}

/// Feller scale function `p_c(x) = ∫_c^x exp(−2 ∫_c^y s(z) dz) dy` with
/// `s(z) = (a(z) − b(z) z) / (γ(z)² z^{2α})`.
///
/// The inner integral is tabulated once on log-spaced knots covering
/// `[lo, hi]` and interpolated by cubic Hermite in `log y` (its derivative
/// is known exactly). The outer integral is accumulated panel by panel in
/// log scale, so values that overflow come back as `±∞`.
pub struct ScaleFunction<'a> {
    c: &'a CoefficientSet,
    cpoint: f64,
    /// `log y` knots, increasing; `cpoint` is one of them.
    u: Vec<f64>,
    inner: Vec<f64>,
    slope: Vec<f64>,
    centre: usize,
    /// `ln |∫_cpoint^{y_j} exp(−2 I)|` at each knot.
    log_outer: Vec<f64>,
}

impl<'a> ScaleFunction<'a> {
    pub fn new(c: &'a CoefficientSet, cpoint: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(cpoint > 0.0) || !(lo > 0.0) || !(hi >= lo) {
            return Err(invalid("cpoint", "cpoint and range must be positive"));
        }
        let lo = lo.min(cpoint);
        let hi = hi.max(cpoint);
        let h = std::f64::consts::LN_2 / KNOTS_PER_OCTAVE as f64;
        let uc = cpoint.ln();
        let below = ((uc - lo.ln()) / h).ceil() as usize;
        let above = (((hi.ln() - uc) / h).ceil() as usize).max(1);
        let u: Vec<f64> = (0..=below + above)
            .map(|j| uc + (j as f64 - below as f64) * h)
            .collect();
        let alpha = c.alpha;
        let s = move |z: f64| {
            let g = c.gamma.value(z);
            (c.a.value(z) - c.b.value(z) * z) / (g * g * z.powf(2.0 * alpha))
        };
        let slope: Vec<f64> = u.iter().map(|&v| v.exp() * s(v.exp())).collect();
        let mut inner = vec![0.0; u.len()];
        for j in below + 1..u.len() {
            inner[j] =
                inner[j - 1] + integrate(s, u[j - 1].exp(), u[j].exp(), inner_tolerance())?.value;
        }
        for j in (0..below).rev() {
            inner[j] =
                inner[j + 1] - integrate(s, u[j].exp(), u[j + 1].exp(), inner_tolerance())?.value;
        }
        let mut me = Self {
            c,
            cpoint,
            u,
            inner,
            slope,
            centre: below,
            log_outer: Vec::new(),
        };
        me.log_outer = me.accumulate_outer()?;
        Ok(me)
    }

    pub fn cpoint(&self) -> f64 {
        self.cpoint
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        self.c
    }

    /// Interpolated inner integral `∫_c^y s` on knot panel `j` (between
    /// knots `j` and `j+1`).
    fn inner_on_panel(&self, j: usize, y: f64) -> f64 {
        let (u0, u1) = (self.u[j], self.u[j + 1]);
        let h = u1 - u0;
        let t = (y.ln() - u0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.inner[j]
            + (t3 - 2.0 * t2 + t) * h * self.slope[j]
            + (-2.0 * t3 + 3.0 * t2) * self.inner[j + 1]
            + (t3 - t2) * h * self.slope[j + 1]
    }

    /// `ln ∫_{y_a}^{y_b} exp(−2 I(y)) dy` on panel `j`, `y_a < y_b` inside it.
    fn log_panel(&self, j: usize, ya: f64, yb: f64) -> Result<f64> {
        if yb <= ya {
            return Ok(f64::NEG_INFINITY);
        }
        let shift = -2.0 * self.inner[j].min(self.inner[j + 1]);
        let r = integrate(
            |y| (-2.0 * self.inner_on_panel(j, y) - shift).exp(),
            ya,
            yb,
            Tolerance {
                abs: 0.0,
                rel: 1e-9,
                max_intervals: 20_000,
            },
        )?;
        Ok(shift + r.value.ln())
    }

    fn accumulate_outer(&self) -> Result<Vec<f64>> {
        let n = self.u.len();
        let mut out = vec![f64::NEG_INFINITY; n];
        for j in self.centre + 1..n {
            let piece = self.log_panel(j - 1, self.u[j - 1].exp(), self.u[j].exp())?;
            out[j] = log_add(out[j - 1], piece);
        }
        for j in (0..self.centre).rev() {
            let piece = self.log_panel(j, self.u[j].exp(), self.u[j + 1].exp())?;
            out[j] = log_add(out[j + 1], piece);
        }
        Ok(out)
    }

    /// `p_c(x)` for `x` inside the tabulated range.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x == self.cpoint {
            return Ok(0.0);
        }
        let ux = x.ln();
        let n = self.u.len();
        if !(ux >= self.u[0] - 1e-12) || !(ux <= self.u[n - 1] + 1e-12) {
            return Err(invalid("x", "outside the tabulated range"));
        }
        let j = (self.u.partition_point(|v| *v <= ux)).clamp(1, n - 1) - 1;
        let (log_mag, sign) = if j >= self.centre {
            // x ≥ cpoint: cumulative to knot j, plus [y_j, x].
            let extra = self.log_panel(j, self.u[j].exp(), x)?;
            (log_add(self.log_outer[j], extra), 1.0)
        } else {
            // x < cpoint: cumulative to knot j+1, plus [x, y_{j+1}].
            let extra = self.log_panel(j, x, self.u[j + 1].exp())?;
            (log_add(self.log_outer[j + 1], extra), -1.0)
        };
        Ok(sign
            * if log_mag > 709.0 {
                f64::INFINITY
            } else {
                log_mag.exp()
            })
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `p_c(x)` for a single point.
pub fn scale_function(c: &CoefficientSet, cpoint: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(invalid("x", "x must be > 0"));
    }
    ScaleFunction::new(c, cpoint, x, x)?.eval(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Unattainable,
    Attainable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// a(0) > 0 and 1/(γ² z^{2α−1}) integrable at 0 (α > 1/2).
    S1PrimeRoute,
    /// 1/γ² integrable at 0 and 2a/γ² ≥ 1 near 0 (α = 1/2).
    S1S2Route,
    /// Numerical limit of the scale function.
    ScaleLimit,
    /// Constant CIR: closed-form scale limit from the sign of 2a − γ².
    FellerConstant,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleLimit {
    Divergent,
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LStar {
    pub l_star: f64,
    /// `(x_j, 2a(x_j)/γ(x_j)²)` over the final window of the tail grid.
    pub tail: Vec<(f64, f64)>,
    /// The running infimum settled over the final window.
    pub stable: bool,
    /// The finiteness condition `l* > 1` for negative moments.
    pub exceeds_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub classification: Classification,
    pub rule: Rule,
    pub cpoint: f64,
    pub scale_limit: ScaleLimit,
    /// `(x_j, p_c(x_j))` on `x_j = 2^{-j}`, `j = 1..=40`.
    pub pc_samples: Vec<(f64, f64)>,
    pub l_star: Option<LStar>,
    pub notes: Vec<String>,
}

/// Divergence threshold on `|p_c(2^{-40})|`.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Decides `lim_{x→0} p_c(x)` from samples on `x_j = 2^{-j}` (decreasing x).
///
/// Divergent: `|p_c|` at the last point exceeds the threshold and grew by a
/// factor of at least 1.5 at each of the last 5 points. Convergent: the
/// per-octave increments shrink by a factor of at least 0.98 throughout the
/// last 10 octaves. Otherwise inconclusive.
pub fn decide_scale_limit(values: &[f64]) -> ScaleLimit {
    let n = values.len();
    if n < TAIL_WINDOW + 1 {
        return ScaleLimit::Inconclusive;
    }
    let mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let last = mags[n - 1];
    let growing = (n - 5..n).all(|j| mags[j] == f64::INFINITY || mags[j] >= 1.5 * mags[j - 1]);
    if last > DIVERGENCE_THRESHOLD && growing {
        return ScaleLimit::Divergent;
    }
    if values.iter().any(|v| !v.is_finite()) {
        return ScaleLimit::Inconclusive;
    }
    let inc: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let tail = &inc[inc.len() - TAIL_WINDOW..];
    let shrinking = tail.windows(2).all(|w| w[1] <= 0.98 * w[0]);
    if shrinking {
        ScaleLimit::Convergent
    } else {
        ScaleLimit::Inconclusive
    }
}

pub fn classify_zero_boundary(c: &CoefficientSet) -> Result<BoundaryReport> {
    classify_zero_boundary_at(c, 1.0)
}

/// Classification using the scale function centred at `cpoint`.
pub fn classify_zero_boundary_at(c: &CoefficientSet, cpoint: f64) -> Result<BoundaryReport> {
    c.check_s0()?;
    let mut notes = Vec::new();

    // Sufficient conditions.
    let grid = [0.5, 1.0];
    let report = check_growth(c, &NormTable::uniform(1.0, 1.0, 0), &grid)?;
    let route = if c.alpha > 0.5 {
        let r = report.get(Condition::S1Prime);
        notes.push(format!("(s1)': {:?}, {}", r.status, r.detail));
        (r.status == Status::Pass).then_some(Rule::S1PrimeRoute)
    } else {
        let s1 = report.get(Condition::S1);
        let s2 = report.get(Condition::S2);
        notes.push(format!("(s1): {:?}, {}", s1.status, s1.detail));
        notes.push(format!("(s2): {:?}, {}", s2.status, s2.detail));
        (s1.status == Status::Pass && s2.status == Status::Pass).then_some(Rule::S1S2Route)
    };

    // Scale function on x_j = 2^{-j}.
    let xs: Vec<f64> = (1..=40).map(|j| 2f64.powi(-j)).collect();
    let sf = ScaleFunction::new(c, cpoint, xs[39], xs[0])?;
    let mut pc_samples = Vec::with_capacity(xs.len());
    for &x in &xs {
        pc_samples.push((x, sf.eval(x)?));
    }
    let values: Vec<f64> = pc_samples.iter().map(|p| p.1).collect();
    let scale_limit = decide_scale_limit(&values);
    notes.push(format!(
        "scale limit: {scale_limit:?}, p_c(2^-40) = {:e}",
        values[39]
    ));

    let l_star = (c.alpha == 0.5).then(|| estimate_l_star(c));

    let (classification, rule) = match (route, scale_limit) {
        (Some(rule), _) => (Classification::Unattainable, rule),
        (None, ScaleLimit::Divergent) => (Classification::Unattainable, Rule::ScaleLimit),
        (None, ScaleLimit::Convergent) => (Classification::Attainable, Rule::ScaleLimit),
        (None, ScaleLimit::Inconclusive) => feller_constant(c, &mut notes),
    };
    Ok(BoundaryReport {
        classification,
        rule,
        cpoint,
        scale_limit,
        pc_samples,
        l_star,
        notes,
    })
}

/// For constant CIR the scale function is `∝ ∫ y^{-2a/γ²} e^{2by/γ²} dy`,
/// whose limit at 0 is finite exactly when `2a/γ² < 1`. Within 2% of the
/// threshold the answer is left open.
fn feller_constant(c: &CoefficientSet, notes: &mut Vec<String>) -> (Classification, Rule) {
    match (c.family(), c.constant_values()) {
        (Family::Constant, Some((a, _, g))) if c.alpha == 0.5 => {
            let nu = 2.0 * a / (g * g);
            if (nu - 1.0).abs() <= 0.02 {
                notes.push(format!(
                    "2a/gamma^2 = {nu} is within 2% of the Feller threshold"
                ));
                (Classification::Inconclusive, Rule::None)
            } else if nu > 1.0 {
                (Classification::Unattainable, Rule::FellerConstant)
            } else {
                (Classification::Attainable, Rule::FellerConstant)
            }
        }
        _ => (Classification::Inconclusive, Rule::None),
    }
}

/// Running infimum of `2a/γ²` on `x_j = 2^{-j}`, `j = 0..=40`.
pub fn estimate_l_star(c: &CoefficientSet) -> LStar {
    let grid = zero_tail_grid(1.0);
    let ratio = |x: f64| {
        let g = c.gamma.value(x);
        2.0 * c.a.value(x) / (g * g)
    };
    let values: Vec<f64> = grid.iter().map(|&x| ratio(x)).collect();
    let running_inf = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tail_x = &grid[grid.len() - TAIL_WINDOW..];
    let tail_v = &values[values.len() - TAIL_WINDOW..];
    let scale = running_inf.abs().max(1e-300);
    let spread = tail_v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - tail_v.iter().copied().fold(f64::INFINITY, f64::min);
    let settled = spread <= 1e-6 * scale.max(1.0);
    // Geometric decay toward zero: the limit is 0.
    let vanishing = tail_v.windows(2).all(|w| w[1] >= 0.0 && w[1] <= 0.9 * w[0]);
    let l_star = if vanishing { 0.0 } else { running_inf };
    LStar {
        l_star,
        tail: tail_x.iter().copied().zip(tail_v.iter().copied()).collect(),
        stable: settled || vanishing,
        exceeds_one: l_star > 1.0,
    }
}

/// Lamperti map `φ(x) = x^{1−α} / (|γ|_0 (1−α))`.
pub fn lamperti(x: f64, alpha: f64, gamma_sup: f64) -> Result<f64> {
    if !(gamma_sup > 0.0) {
        return Err(invalid("gamma_sup", "must be > 0"));
    }
    if !(0.5..1.0).contains(&alpha) {
        return Err(invalid("alpha", "alpha must lie in [0.5, 1)"));
    }
    if !(x >= 0.0) {
        return Err(invalid("x", "x must be >= 0"));
    }
    Ok(x.powf(1.0 - alpha) / (gamma_sup * (1.0 - alpha)))
}
