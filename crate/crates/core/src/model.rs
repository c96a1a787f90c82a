//! Coefficient model `dX = (a(X) − b(X) X) dt + γ(X) X^α dW` and the
//! derivative-norm tables the density bounds are built from.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, Tolerance};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One scalar coefficient function of the state.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `c[0] + c[1] x + c[2] x² + ...`
    Polynomial(Vec<f64>),
    Spline(CubicSpline),
    /// User closure; `derivatives[i]` is the derivative of order `i + 1`.
    Closure {
        f: ScalarFn,
        derivatives: Vec<ScalarFn>,
    },
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Polynomial(p) => write!(f, "Polynomial({p:?})"),
            Coefficient::Spline(s) => write!(f, "Spline({} knots)", s.knots.len()),
            Coefficient::Closure { derivatives, .. } => {
                write!(f, "Closure({} analytic derivatives)", derivatives.len())
            }
        }
    }
}

impl Coefficient {
    pub fn closure(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Closure {
            f: Arc::new(f),
            derivatives: Vec::new(),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Polynomial(p) => p.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Coefficient::Spline(s) => s.eval(x, 0),
            Coefficient::Closure { f, .. } => f(x),
        }
    }

    /// Analytic derivative of the given order (0 = value), if known.
    pub fn derivative(&self, order: usize, x: f64) -> Option<f64> {
        if order == 0 {
            return Some(self.value(x));
        }
        match self {
            Coefficient::Constant(_) => Some(0.0),
            Coefficient::Polynomial(p) => {
                let mut acc = 0.0;
                for (i, c) in p.iter().enumerate().skip(order).rev() {
                    let falling: f64 = (0..order).map(|j| (i - j) as f64).product();
                    acc = acc * x + c * falling;
                }
                Some(acc)
            }
            Coefficient::Spline(s) => Some(s.eval(x, order)),
            Coefficient::Closure { derivatives, .. } => derivatives.get(order - 1).map(|d| d(x)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

/// Natural cubic spline through `(knots, values)`, held constant outside the
/// knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(invalid("knots", "knots and values differ in length"));
        }
        if knots.len() < 2 {
            return Err(invalid("knots", "need at least two knots"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("knots", "knots must be strictly increasing"));
        }
        let n = knots.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Tridiagonal solve for interior second derivatives.
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] =
                    6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
                if i > 1 {
                    let w = h0 / diag[i - 1];
                    diag[i] -= w * upper[i - 1];
                    rhs[i] -= w * rhs[i - 1];
                }
            }
            for i in (1..n - 1).rev() {
                let next = if i + 1 < n - 1 {
                    upper[i] * second[i + 1]
                } else {
                    0.0
                };
                second[i] = (rhs[i] - next) / diag[i];
            }
        }
        Ok(Self {
            knots,
            values,
            second,
        })
    }

    fn eval(&self, x: f64, order: usize) -> f64 {
        let n = self.knots.len();
        if x <= self.knots[0] {
            return if order == 0 { self.values[0] } else { 0.0 };
        }
        if x >= self.knots[n - 1] {
            return if order == 0 { self.values[n - 1] } else { 0.0 };
        }
        let i = self.knots.partition_point(|k| *k <= x) - 1;
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - x) / h;
        let b = (x - self.knots[i]) / h;
        let (y0, y1, m0, m1) = (
            self.values[i],
            self.values[i + 1],
            self.second[i],
            self.second[i + 1],
        );
        match order {
            0 => a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0,
            1 => {
                (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0
                    + (3.0 * b * b - 1.0) / 6.0 * h * m1
            }
            2 => a * m0 + b * m1,
            3 => (m1 - m0) / h,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Constant,
    UserDefined,
}

/// The coefficient triple `(a, b, γ)` with exponent `α` and singular radius `η`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub a: Coefficient,
    pub b: Coefficient,
    pub gamma: Coefficient,
    pub alpha: f64,
    pub eta: f64,
}

impl CoefficientSet {
    pub fn new(
        a: Coefficient,
        b: Coefficient,
        gamma: Coefficient,
        alpha: f64,
        eta: f64,
    ) -> Result<Self> {
        if !(0.5..1.0).contains(&alpha) {
            return Err(invalid("alpha", "alpha must lie in [0.5, 1)"));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(invalid("eta", "eta must be finite and >= 0"));
        }
        Ok(Self {
            a,
            b,
            gamma,
            alpha,
            eta,
        })
    }

    pub fn constant(a: f64, b: f64, gamma: f64, alpha: f64) -> Result<Self> {
        Self::new(
            Coefficient::Constant(a),
            Coefficient::Constant(b),
            Coefficient::Constant(gamma),
            alpha,
            0.0,
        )
    }

    pub fn family(&self) -> Family {
        if self.a.is_constant() && self.b.is_constant() && self.gamma.is_constant() {
            Family::Constant
        } else {
            Family::UserDefined
        }
    }

    /// `(a, b, γ)` when every coefficient is constant.
    pub fn constant_values(&self) -> Option<(f64, f64, f64)> {
        Some((
            self.a.constant_value()?,
            self.b.constant_value()?,
            self.gamma.constant_value()?,
        ))
    }

    /// Checks `a(0) ≥ 0` and `γ(x)² > 0` on a geometric grid over `(0, ∞)`.
    pub fn check_s0(&self) -> Result<()> {
        if !(self.a.value(0.0) >= 0.0) {
            return Err(invalid("a", "a(0) must be >= 0"));
        }
        for j in -40..=40 {
            let x = 2f64.powi(j);
            let g = self.gamma.value(x);
            if !(g * g > 0.0) {
                return Err(invalid(
                    "gamma",
                    format!("gamma(x)^2 must be > 0 for x > 0; fails at x = {x:e}"),
                ));
            }
        }
        Ok(())
    }

    pub fn drift(&self, x: f64) -> f64 {
        self.a.value(x) - self.b.value(x) * x
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.gamma.value(x) * x.powf(self.alpha)
    }

    /// Analytic derivative of the drift `a(x) − b(x) x`.
    pub fn drift_derivative(&self, order: usize, x: f64) -> Option<f64> {
        if order == 0 {
            return Some(self.drift(x));
        }
        let da = self.a.derivative(order, x)?;
        let db = self.b.derivative(order, x)?;
        let db_lower = self.b.derivative(order - 1, x)?;
        Some(da - (db * x + order as f64 * db_lower))
    }

    /// Analytic derivative of the diffusion `γ(x) x^α` (Leibniz rule), `x > 0`.
    pub fn diffusion_derivative(&self, order: usize, x: f64) -> Option<f64> {
        if order == 0 {
            return Some(self.diffusion(x));
        }
        let mut total = 0.0;
        let mut binom = 1.0;
        for j in 0..=order {
            let g = self.gamma.derivative(j, x)?;
            let n = order - j;
            let falling: f64 = (0..n).map(|i| self.alpha - i as f64).product();
            total += binom * g * falling * x.powf(self.alpha - n as f64);
            binom = binom * (order - j) as f64 / (j + 1) as f64;
        }
        Some(total)
    }
}

/// Drift and diffusion at `x ≥ 0`.
pub fn eval_coefficients(c: &CoefficientSet, x: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0) {
        return Err(invalid("x", "state must be >= 0"));
    }
    let drift = c.drift(x);
    let diffusion = c.diffusion(x);
    if !drift.is_finite() || !diffusion.is_finite() {
        return Err(Error::NonFinite { x });
    }
    Ok((drift, diffusion))
}

// ---------------------------------------------------------------------------
// Norm tables

/// Polynomial growth and ellipticity profile (H4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub q: f64,
    pub q_bar: f64,
    /// Ellipticity constant, in (0, 1).
    pub c0: f64,
    /// Growth constants `C_k`, indexed by derivative order.
    pub ck: Vec<f64>,
}

impl Default for GrowthProfile {
    fn default() -> Self {
        Self {
            q: 1.0,
            q_bar: 0.0,
            c0: 0.5,
            ck: vec![1.0; 5],
        }
    }
}

impl GrowthProfile {
    pub fn constant_for(&self, k: usize) -> f64 {
        self.ck
            .get(k)
            .copied()
            .unwrap_or_else(|| *self.ck.last().unwrap_or(&1.0))
    }
}

/// Which of the three concentric balls a norm refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ball {
    R1,
    R3,
    R5,
}

impl Ball {
    pub fn index(self) -> usize {
        match self {
            Ball::R1 => 0,
            Ball::R3 => 1,
            Ball::R5 => 2,
        }
    }

    pub fn multiplier(self) -> f64 {
        match self {
            Ball::R1 => 1.0,
            Ball::R3 => 3.0,
            Ball::R5 => 5.0,
        }
    }
}

/// Cumulative norms `1 + Σ_{j≤k} sup |∂^j f|` on one ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallNorms {
    pub radius: f64,
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
    /// `inf σ(x)²` over the ball.
    pub min_diffusion_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalNorms {
    pub range: (f64, f64),
    /// `nB_k`
    pub drift: Vec<f64>,
    /// `nA_k`
    pub diffusion: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormSource {
    Analytic,
    FiniteDifference,
    Declared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTable {
    pub y0: f64,
    pub radius: f64,
    pub k_max: usize,
    /// Balls of radius R, 3R and 5R around `y0`.
    pub balls: [BallNorms; 3],
    pub global: Option<GlobalNorms>,
    /// Ellipticity on `B_3R(y0)`: `min(inf σ², 1)`.
    pub c_star: f64,
    pub growth: GrowthProfile,
    /// Sampled suprema are lower bounds of the true suprema.
    pub lower_bound: bool,
    pub source: NormSource,
}

impl NormTable {
    pub fn drift_norm(&self, ball: Ball, k: usize) -> Result<f64> {
        self.balls[ball.index()]
            .drift
            .get(k)
            .copied()
            .ok_or(Error::MissingNorm { order: k })
    }

    pub fn diffusion_norm(&self, ball: Ball, k: usize) -> Result<f64> {
        self.balls[ball.index()]
            .diffusion
            .get(k)
            .copied()
            .ok_or(Error::MissingNorm { order: k })
    }

    /// Every norm set to `value` (≥ 1), ellipticity `c_star`.
    pub fn uniform(value: f64, c_star: f64, k_max: usize) -> Self {
        let ball = |m: f64| BallNorms {
            radius: m,
            drift: vec![value; k_max + 1],
            diffusion: vec![value; k_max + 1],
            min_diffusion_sq: c_star,
        };
        Self {
            y0: 0.0,
            radius: 1.0,
            k_max,
            balls: [ball(1.0), ball(3.0), ball(5.0)],
            global: Some(GlobalNorms {
                range: (f64::NEG_INFINITY, f64::INFINITY),
                drift: vec![value; k_max + 1],
                diffusion: vec![value; k_max + 1],
            }),
            c_star,
            growth: GrowthProfile::default(),
            lower_bound: false,
            source: NormSource::Declared,
        }
    }

    /// Norms of coefficients that meet the growth bound with equality,
    /// `|∂^j b(y)| + |∂^j σ(y)| = C_j (1 + |y|^q)` split evenly between drift
    /// and diffusion, on balls of radius 1 around `y0`; ellipticity
    /// `C_0 |y|^{-q̄}` at the far edge of `B_3(y0)`.
    pub fn saturating_growth(profile: &GrowthProfile, y0: f64, k_max: usize) -> Self {
        let ball = |m: f64| {
            let edge = y0.abs() + m;
            let mut norms = Vec::with_capacity(k_max + 1);
            let mut acc = 1.0;
            for j in 0..=k_max {
                acc += 0.5 * profile.constant_for(j) * (1.0 + edge.powf(profile.q));
                norms.push(acc);
            }
            let ell = profile.c0 * (y0.abs() + 3.0).powf(-profile.q_bar);
            BallNorms {
                radius: m,
                drift: norms.clone(),
                diffusion: norms,
                min_diffusion_sq: ell,
            }
        };
        let balls = [ball(1.0), ball(3.0), ball(5.0)];
        let c_star = balls[1].min_diffusion_sq.min(1.0);
        Self {
            y0,
            radius: 1.0,
            k_max,
            balls,
            global: None,
            c_star,
            growth: profile.clone(),
            lower_bound: false,
            source: NormSource::Declared,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormOptions {
    /// Equispaced interior sample points per ball (endpoints added).
    pub samples: usize,
    pub allow_finite_differences: bool,
    /// Use finite differences even where analytic closures exist.
    pub force_finite_differences: bool,
    /// Override for the finite-difference step (all orders).
    pub fd_step: Option<f64>,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            samples: 2048,
            allow_finite_differences: true,
            force_finite_differences: false,
            fd_step: None,
        }
    }
}

/// Fourth-order central finite difference of order 1..=4.
pub fn central_difference(
    f: &dyn Fn(f64) -> f64,
    order: usize,
    x: f64,
    step: Option<f64>,
) -> Option<f64> {
    let h = step.unwrap_or_else(|| default_fd_step(order, x));
    let s = |k: f64| f(x + k * h);
    let v = match order {
        0 => f(x),
        1 => (s(-2.0) - 8.0 * s(-1.0) + 8.0 * s(1.0) - s(2.0)) / (12.0 * h),
        2 => (-s(-2.0) + 16.0 * s(-1.0) - 30.0 * s(0.0) + 16.0 * s(1.0) - s(2.0)) / (12.0 * h * h),
        3 => {
            (s(-3.0) / 8.0 - s(-2.0) + 13.0 / 8.0 * s(-1.0) - 13.0 / 8.0 * s(1.0) + s(2.0)
                - s(3.0) / 8.0)
                / (-h * h * h)
        }
        4 => {
            (-s(-3.0) / 6.0 + 2.0 * s(-2.0) - 13.0 / 2.0 * s(-1.0) + 28.0 / 3.0 * s(0.0)
                - 13.0 / 2.0 * s(1.0)
                + 2.0 * s(2.0)
                - s(3.0) / 6.0)
                / (h * h * h * h)
        }
        _ => return None,
    };
    Some(v)
}

fn default_fd_step(order: usize, x: f64) -> f64 {
    if order <= 1 {
        (1e-6f64).max(1e-6 * x.abs())
    } else {
        f64::EPSILON.powf(1.0 / (order as f64 + 4.0)) * x.abs().max(1.0)
    }
}

enum Target {
    Drift,
    Diffusion,
}

fn derivative_at(
    c: &CoefficientSet,
    target: &Target,
    order: usize,
    x: f64,
    opts: &NormOptions,
) -> Result<(f64, bool)> {
    if !opts.force_finite_differences {
        let v = match target {
            Target::Drift => c.drift_derivative(order, x),
            Target::Diffusion => c.diffusion_derivative(order, x),
        };
        if let Some(v) = v {
            return Ok((v, false));
        }
    }
    let what = match target {
        Target::Drift => "drift",
        Target::Diffusion => "diffusion",
    };
    if !opts.allow_finite_differences {
        return Err(Error::MissingDerivatives { order, what });
    }
    let f: Box<dyn Fn(f64) -> f64> = match target {
        Target::Drift => Box::new(|y| c.drift(y)),
        Target::Diffusion => Box::new(|y| c.diffusion(y)),
    };
    central_difference(&*f, order, x, opts.fd_step)
        .map(|v| (v, true))
        .ok_or(Error::MissingDerivatives { order, what })
}

fn sample_points(lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let n = samples + 2;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn sampled_norms(
    c: &CoefficientSet,
    lo: f64,
    hi: f64,
    k_max: usize,
    opts: &NormOptions,
) -> Result<(Vec<f64>, Vec<f64>, f64, bool)> {
    let xs = sample_points(lo, hi, opts.samples);
    let mut used_fd = false;
    let mut sup_drift = vec![0.0f64; k_max + 1];
    let mut sup_diff = vec![0.0f64; k_max + 1];
    let mut min_sq = f64::INFINITY;
    for &x in &xs {
        for k in 0..=k_max {
            let (d, fd1) = derivative_at(c, &Target::Drift, k, x, opts)?;
            let (s, fd2) = derivative_at(c, &Target::Diffusion, k, x, opts)?;
            if !d.is_finite() || !s.is_finite() {
                return Err(Error::NonFinite { x });
            }
            used_fd |= fd1 || fd2;
            sup_drift[k] = sup_drift[k].max(d.abs());
            sup_diff[k] = sup_diff[k].max(s.abs());
        }
        let s = c.diffusion(x);
        min_sq = min_sq.min(s * s);
    }
    let cumulative = |sups: &[f64]| {
        let mut acc = 1.0;
        sups.iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect::<Vec<_>>()
    };
    Ok((
        cumulative(&sup_drift),
        cumulative(&sup_diff),
        min_sq,
        used_fd,
    ))
}

/// Local derivative-sup norms of drift and diffusion on `B_R`, `B_3R`, `B_5R`
/// around `y0`, up to order `k_max`.
pub fn local_norms(
    c: &CoefficientSet,
    y0: f64,
    radius: f64,
    k_max: usize,
    opts: &NormOptions,
) -> Result<NormTable> {
    if !(radius > 0.0 && radius <= 1.0) {
        return Err(invalid("radius", "R must lie in (0, 1]"));
    }
    let (lo, hi) = (y0 - 5.0 * radius, y0 + 5.0 * radius);
    if lo <= c.eta || (c.eta == 0.0 && lo <= 0.0) {
        return Err(Error::BallTouchesSingularity { lo, hi, eta: c.eta });
    }
    let mut any_fd = false;
    let mut make = |mult: f64| -> Result<BallNorms> {
        let r = mult * radius;
        let (drift, diffusion, min_sq, fd) = sampled_norms(c, y0 - r, y0 + r, k_max, opts)?;
        any_fd |= fd;
        Ok(BallNorms {
            radius: r,
            drift,
            diffusion,
            min_diffusion_sq: min_sq,
        })
    };
    let balls = [make(1.0)?, make(3.0)?, make(5.0)?];
    let c_star = balls[1].min_diffusion_sq.min(1.0);
    Ok(NormTable {
        y0,
        radius,
        k_max,
        balls,
        global: None,
        c_star,
        growth: GrowthProfile::default(),
        lower_bound: true,
        source: if any_fd {
            NormSource::FiniteDifference
        } else {
            NormSource::Analytic
        },
    })
}

/// Sampled global norms `nB_k`, `nA_k` over `[lo, hi]` (geometric sampling).
pub fn global_norms(
    c: &CoefficientSet,
    lo: f64,
    hi: f64,
    k_max: usize,
    opts: &NormOptions,
) -> Result<GlobalNorms> {
    if !(lo > 0.0 && hi > lo) {
        return Err(invalid("range", "need 0 < lo < hi"));
    }
    let (drift, diffusion, _, _) = sampled_norms(c, lo, hi, k_max, opts)?;
    Ok(GlobalNorms {
        range: (lo, hi),
        drift,
        diffusion,
    })
}

// ---------------------------------------------------------------------------
// Growth and boundary conditions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// (H4) polynomial growth of derivatives.
    PolynomialGrowth,
    /// (H4) polynomial ellipticity.
    PolynomialEllipticity,
    /// (s1)': a(0) > 0 and 1/(γ² z^{2α−1}) integrable at 0.
    S1Prime,
    /// (s1): 1/γ² integrable at 0.
    S1,
    /// (s2): 2a/γ² ≥ 1 on (0, x̄).
    S2,
    /// liminf_{x→∞} b(x) x^{1−α} > −∞.
    DriftLowerGrowth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub status: Status,
    pub witnesses: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub conditions: Vec<ConditionResult>,
    pub grid: Vec<f64>,
    pub zero_tail_grid: Vec<f64>,
    pub infinity_tail_grid: Vec<f64>,
}

impl GrowthReport {
    pub fn get(&self, condition: Condition) -> &ConditionResult {
        self.conditions
            .iter()
            .find(|c| c.condition == condition)
            .expect("every condition is evaluated")
    }
}

/// Number of octaves in the geometric tail grids.
pub const TAIL_OCTAVES: i32 = 40;
/// Points at the end of a tail grid used for limit decisions.
pub const TAIL_WINDOW: usize = 10;

/// `x_j = top · 2^{-j}`, `j = 0..=40`.
pub fn zero_tail_grid(top: f64) -> Vec<f64> {
    (0..=TAIL_OCTAVES).map(|j| top * 2f64.powi(-j)).collect()
}

/// `x_j = bottom · 2^{j}`, `j = 0..=40`.
pub fn infinity_tail_grid(bottom: f64) -> Vec<f64> {
    (0..=TAIL_OCTAVES).map(|j| bottom * 2f64.powi(j)).collect()
}

/// Outcome of an integrability-at-zero probe.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrabilityProbe {
    pub status: Status,
    /// `∫_{x_{j+1}}^{x_j} f`, octave by octave from the top.
    pub increments: Vec<f64>,
    /// Largest ratio of successive increments over the final window.
    pub max_ratio: f64,
    pub min_ratio: f64,
}

/// Decides whether a positive `f` is integrable at `0⁺` from its octave
/// increments below `top`: shrinking by ≤ 0.98 per octave → integrable,
/// never shrinking (≥ 0.999) → divergent, anything else inconclusive.
pub fn probe_integrability_at_zero(f: &dyn Fn(f64) -> f64, top: f64) -> IntegrabilityProbe {
    let grid = zero_tail_grid(top);
    let tol = Tolerance::new(0.0, 1e-10);
    let mut increments = Vec::with_capacity(grid.len() - 1);
    for w in grid.windows(2) {
        match integrate(f, w[1], w[0], tol) {
            Ok(r) if r.value.is_finite() => increments.push(r.value.abs()),
            _ => {
                return IntegrabilityProbe {
                    status: Status::Fail,
                    increments,
                    max_ratio: f64::INFINITY,
                    min_ratio: f64::INFINITY,
                }
            }
        }
    }
    let tail = &increments[increments.len() - TAIL_WINDOW..];
    let ratios: Vec<f64> = tail
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                w[1] / w[0]
            } else if w[1] > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect();
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let status = if max_ratio <= 0.98 {
        Status::Pass
    } else if min_ratio >= 0.999 {
        Status::Fail
    } else {
        Status::Inconclusive
    };
    IntegrabilityProbe {
        status,
        increments,
        max_ratio,
        min_ratio,
    }
}

/// Evaluates (H4), (s1)', (s1), (s2) and the drift growth condition.
pub fn check_growth(c: &CoefficientSet, table: &NormTable, grid: &[f64]) -> Result<GrowthReport> {
    if grid.is_empty() {
        return Err(invalid("grid", "grid must be non-empty"));
    }
    if grid.iter().any(|x| !(*x > 0.0)) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(
            "grid",
            "grid must be strictly positive and increasing",
        ));
    }
    let x_max = *grid.last().expect("non-empty");
    let x_min = grid[0];
    let zero_grid = zero_tail_grid(x_max);
    let inf_grid = infinity_tail_grid(x_min);
    let opts = NormOptions::default();
    let profile = &table.growth;
    let mut conditions = Vec::new();

    // (H4) growth.
    {
        let mut witnesses = Vec::new();
        let mut detail = String::from("all orders within C_k (1 + |y|^q)");
        'outer: for &y in grid.iter().filter(|y| **y > c.eta) {
            for k in 0..profile.ck.len() {
                let d = derivative_at(c, &Target::Drift, k, y, &opts)?.0;
                let s = derivative_at(c, &Target::Diffusion, k, y, &opts)?.0;
                let bound = profile.constant_for(k) * (1.0 + y.abs().powf(profile.q));
                if d.abs() + s.abs() > bound {
                    witnesses.push(y);
                    detail = format!(
                        "order {k}: |b^({k})| + |sigma^({k})| = {:e} > {bound:e}",
                        d.abs() + s.abs()
                    );
                    break 'outer;
                }
            }
        }
        let status = if witnesses.is_empty() {
            Status::Pass
        } else {
            Status::Fail
        };
        conditions.push(ConditionResult {
            condition: Condition::PolynomialGrowth,
            status,
            witnesses,
            detail,
        });
    }

    // (H4) ellipticity.
    {
        let bad = grid
            .iter()
            .copied()
            .filter(|y| *y > c.eta)
            .find(|&y| c.diffusion(y).powi(2) < profile.c0 * y.powf(-profile.q_bar));
        conditions.push(match bad {
            None => ConditionResult {
                condition: Condition::PolynomialEllipticity,
                status: Status::Pass,
                witnesses: vec![],
                detail: "sigma^2 >= C_0 |y|^-q_bar on the grid".into(),
            },
            Some(y) => ConditionResult {
                condition: Condition::PolynomialEllipticity,
                status: Status::Fail,
                witnesses: vec![y],
                detail: format!(
                    "sigma^2 = {:e} below C_0 |y|^-q_bar",
                    c.diffusion(y).powi(2)
                ),
            },
        });
    }

    // (s1)' and (s1).
    let alpha = c.alpha;
    let g2 = |z: f64| {
        let g = c.gamma.value(z);
        g * g
    };
    let s1_prime_f = |z: f64| 1.0 / (g2(z) * z.powf(2.0 * alpha - 1.0));
    let probe = probe_integrability_at_zero(&s1_prime_f, x_max);
    let a0 = c.a.value(0.0);
    conditions.push(integrability_result(
        Condition::S1Prime,
        if a0 > 0.0 {
            probe
        } else {
            IntegrabilityProbe {
                status: Status::Fail,
                ..probe
            }
        },
        x_min,
        if a0 > 0.0 {
            String::new()
        } else {
            format!("a(0) = {a0} is not > 0; ")
        },
    ));
    let s1_f = |z: f64| 1.0 / g2(z);
    conditions.push(integrability_result(
        Condition::S1,
        probe_integrability_at_zero(&s1_f, x_max),
        x_min,
        String::new(),
    ));

    // (s2): 2a/γ² ≥ 1 on (0, x̄).
    {
        let ratio = |x: f64| 2.0 * c.a.value(x) / g2(x);
        // Walk up from the smallest point; x̄ is the last point before a violation.
        let mut x_bar = None;
        let mut violation = None;
        for &x in zero_grid.iter().rev() {
            if ratio(x) >= 1.0 - 1e-12 {
                x_bar = Some(x);
            } else {
                violation = Some(x);
                break;
            }
        }
        let tail_ok = zero_grid[zero_grid.len() - TAIL_WINDOW..]
            .iter()
            .all(|&x| ratio(x) >= 1.0 - 1e-12);
        conditions.push(if tail_ok {
            let xb = x_bar.expect("tail passes");
            ConditionResult {
                condition: Condition::S2,
                status: Status::Pass,
                witnesses: vec![],
                detail: format!("2a/gamma^2 >= 1 below x_bar = {xb:e}"),
            }
        } else {
            let w = violation.unwrap_or(zero_grid[zero_grid.len() - 1]);
            ConditionResult {
                condition: Condition::S2,
                status: Status::Fail,
                witnesses: vec![w],
                detail: format!("2a/gamma^2 = {:e} < 1", ratio(w)),
            }
        });
    }

    // liminf b(x) x^{1-α} > -∞.
    {
        let values: Vec<f64> = inf_grid
            .iter()
            .map(|&x| c.b.value(x) * x.powf(1.0 - alpha))
            .collect();
        let tail = &values[values.len() - TAIL_WINDOW..];
        let tail_x = &inf_grid[inf_grid.len() - TAIL_WINDOW..];
        let running_inf = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let geometric_fall = tail
            .windows(2)
            .all(|w| w[1] < w[0] && w[1] < 0.0 && w[1].abs() >= 1.1 * w[0].abs());
        let strictly_falling = tail.windows(2).all(|w| w[1] < w[0]);
        const THRESHOLD: f64 = -1e6;
        let (status, witnesses, detail) = if !(running_inf > THRESHOLD) || geometric_fall {
            (
                Status::Fail,
                vec![tail_x[TAIL_WINDOW - 1]],
                format!("running inf {running_inf:e} heads to -inf"),
            )
        } else if strictly_falling && running_inf < 0.0 {
            (
                Status::Inconclusive,
                vec![tail_x[TAIL_WINDOW - 1]],
                format!(
                    "still decreasing at x = {:e} (inf {running_inf:e})",
                    tail_x[TAIL_WINDOW - 1]
                ),
            )
        } else {
            (
                Status::Pass,
                vec![],
                format!("running inf over tail = {running_inf:e}"),
            )
        };
        conditions.push(ConditionResult {
            condition: Condition::DriftLowerGrowth,
            status,
            witnesses,
            detail,
        });
    }

    Ok(GrowthReport {
        conditions,
        grid: grid.to_vec(),
        zero_tail_grid: zero_grid,
        infinity_tail_grid: inf_grid,
    })
}

fn integrability_result(
    condition: Condition,
    probe: IntegrabilityProbe,
    witness: f64,
    prefix: String,
) -> ConditionResult {
    let detail = format!(
        "{prefix}octave increment ratios in [{:.4}, {:.4}] over the last {TAIL_WINDOW} octaves",
        probe.min_ratio, probe.max_ratio
    );
    let witnesses = if probe.status == Status::Pass {
        vec![]
    } else {
        vec![witness]
    };
    ConditionResult {
        condition,
        status: probe.status,
        witnesses,
        detail,
    }
}
