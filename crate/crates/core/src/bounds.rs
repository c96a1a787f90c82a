//! Explicit density-bound constants: exponential moment factors, the
//! Malliavin-matrix constant `K_m`, combinatorial exponents, the local
//! polynomial factors and the assembled `Θ_k`, `Λ_k`.
//!
//! Every existential constant is folded into the calibration multiplier
//! `kappa`, so only the functional form of these numbers is meaningful.
//! Products of exponential factors are carried as logarithms.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Ball, GrowthProfile, NormTable};

/// Log-domain cap; larger values are reported as saturated.
pub const LOG_CAP: f64 = 700.0;

/// A positive quantity held as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub ln: f64,
}

impl LogValue {
    pub const ONE: LogValue = LogValue { ln: 0.0 };

    pub fn from_value(v: f64) -> Self {
        Self { ln: v.ln() }
    }

    pub fn saturated(self) -> bool {
        !(self.ln <= LOG_CAP)
    }

    /// `exp(ln)`, or `exp(LOG_CAP)` when saturated.
    pub fn value(self) -> f64 {
        if self.saturated() {
            LOG_CAP.exp()
        } else {
            self.ln.exp()
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other.ln > self.ln {
            other
        } else {
            self
        }
    }
}

/// `ln(e^a + e^b)` without overflow.
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY || b == f64::INFINITY {
        return f64::INFINITY;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Inputs shared by the bound evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundContext {
    pub t: f64,
    pub horizon: f64,
    pub radius: f64,
    pub m: u32,
    pub d: u32,
    pub k: u32,
    /// Stands in for every unquantified constant of the theory.
    pub kappa: f64,
    /// Exponent on the exponential factors inside `Θ_k`.
    pub gamma_exponent: f64,
}

impl BoundContext {
    pub fn new(t: f64, m: u32, k: u32) -> Result<Self> {
        let ctx = Self {
            t,
            horizon: t,
            radius: 1.0,
            m,
            d: 1,
            k,
            kappa: 1.0,
            gamma_exponent: 1.0,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::DegenerateTime(self.t));
        }
        if !(self.horizon >= self.t) {
            return Err(invalid("horizon", "horizon must be >= t"));
        }
        if !(self.radius > 0.0 && self.radius <= 1.0) {
            return Err(invalid("radius", "R must lie in (0, 1]"));
        }
        if self.m == 0 || self.d == 0 {
            return Err(invalid("m", "dimensions must be >= 1"));
        }
        if !(self.kappa > 0.0) {
            return Err(invalid("kappa", "kappa must be > 0"));
        }
        if !(self.gamma_exponent >= 0.0) {
            return Err(invalid("gamma_exponent", "gamma_exponent must be >= 0"));
        }
        Ok(())
    }

    /// `mk`, the derivative order the Fourier optimisation selects.
    pub fn mk(&self) -> u32 {
        self.m * self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponentials {
    pub e_p: LogValue,
    pub e_p_z: LogValue,
}

/// `ln exp(t^{p/2} x^p) = t^{p/2} x^p`, computed through logs.
fn log_exp_factor(p: f64, t: f64, x: f64) -> LogValue {
    if t == 0.0 {
        return LogValue::ONE;
    }
    LogValue {
        ln: (0.5 * p * t.ln() + p * x.ln()).exp(),
    }
}

/// Global exponential moment factors `e_p(t)` and `e^Z_p(t)`.
pub fn eval_exponentials(p: f64, t: f64, nb1: f64, na1: f64) -> Result<Exponentials> {
    if !(t >= 0.0) {
        return Err(Error::DegenerateTime(t));
    }
    if !(p > 1.0) {
        return Err(invalid("p", "order must be > 1"));
    }
    let s = t.sqrt();
    Ok(Exponentials {
        e_p: log_exp_factor(p, t, s * nb1 + na1),
        e_p_z: log_exp_factor(p, t, s * (nb1 + na1 * na1) + na1),
    })
}

/// Malliavin-matrix constant
/// `K_m = 1 + (4/(t c) + 1)^m + c^{-2(m+1)} (t^{1/2} B0 A2³ + A1²)^{2(m+1)}`.
pub fn eval_k_m(t: f64, c_star: f64, m: u32, b0: f64, a1: f64, a2: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::DegenerateTime(t));
    }
    if !(c_star > 0.0 && c_star <= 1.0) {
        return Err(invalid("c_star", "ellipticity constant must lie in (0, 1]"));
    }
    let e = 2 * (m as i32 + 1);
    let inner = t.sqrt() * b0 * a2.powi(3) + a1 * a1;
    Ok(1.0 + (4.0 / (t * c_star) + 1.0).powi(m as i32) + c_star.powi(-e) * inner.powi(e))
}

/// `φ_k = 3 m (k + 4)²`
pub fn phi(k: u32, m: u32) -> u64 {
    let k = k as u64;
    3 * m as u64 * (k + 4) * (k + 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combinatorial {
    pub phi_k: u64,
    pub phi_prime_k: u64,
    pub q_prime_k: f64,
}

/// `φ_k`, `φ'_k = 2 (k+1)(m−1)` and
/// `q'_k(q) = mk (q̄+4)(m+1)(mk+3) + 2 q m (φ_{mk} + (mk+2)²)`.
pub fn eval_combinatorial(k: u32, m: u32, q: f64, q_bar: f64) -> Combinatorial {
    let mk = m * k;
    let (mf, mkf) = (m as f64, mk as f64);
    let q_prime_k = mkf * (q_bar + 4.0) * (mf + 1.0) * (mkf + 3.0)
        + 2.0 * q * mf * (phi(mk, m) as f64 + (mkf + 2.0) * (mkf + 2.0));
    Combinatorial {
        phi_k: phi(k, m),
        phi_prime_k: 2 * (k as u64 + 1) * (m as u64 - 1),
        q_prime_k,
    }
}

/// Local polynomial factors on `B_5R(y0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPolys {
    pub t: f64,
    /// `P_j` for `j = 0..=order`.
    pub p: Vec<f64>,
    /// `P^σ_j` for `j = 0..order`.
    pub p_sigma: Vec<f64>,
    pub p_z1: f64,
    pub p_c_m: f64,
    pub c_m: f64,
    pub c_star: f64,
}

impl LocalPolys {
    /// Local `e_p(t, y0) = exp(t^{p/2} P_1^p)`.
    pub fn e(&self, p: f64) -> LogValue {
        log_exp_factor(p, self.t, self.p[1])
    }

    /// Local `e^Z_p(t, y0) = exp(t^{p/2} (P^Z_1)^p)`.
    pub fn e_z(&self, p: f64) -> LogValue {
        log_exp_factor(p, self.t, self.p_z1)
    }
}

/// `P_k`, `P^σ_k`, `P^Z_1`, `P^C_m` and `C_m` from the norms on `B_5R`.
/// Orders up to `mk + 1` must be present in the table.
pub fn eval_local_polys(table: &NormTable, ctx: &BoundContext) -> Result<LocalPolys> {
    ctx.validate()?;
    let top = (ctx.mk() as usize + 1).max(2);
    let b = |k| table.drift_norm(Ball::R5, k);
    let s = |k| table.diffusion_norm(Ball::R5, k);
    let rt = ctx.t.sqrt();
    let mut p = Vec::with_capacity(top + 1);
    for k in 0..=top {
        p.push(rt * b(k)? + s(k)?);
    }
    let mut p_sigma = Vec::with_capacity(top);
    for k in 0..top {
        p_sigma.push(s(k)? * p[k + 1]);
    }
    let p_z1 = rt * (b(1)? + s(1)?.powi(2)) + s(1)?;
    let e = 2 * (ctx.m as i32 + 1);
    let p_c_m = (rt * b(0)? * s(2)?.powi(3) + s(1)?.powi(2)).powi(e);
    let c_star = table.c_star;
    if !(c_star > 0.0) {
        return Err(invalid("c_star", "ellipticity constant must be > 0"));
    }
    let c_m = ctx.t.powi(ctx.m as i32) + 4f64.powi(ctx.m as i32) / c_star.powi(e) * (1.0 + p_c_m);
    Ok(LocalPolys {
        t: ctx.t,
        p,
        p_sigma,
        p_z1,
        p_c_m,
        c_m,
        c_star,
    })
}

/// The four exponential factors entering `Θ_k`, keyed by their order.
pub fn theta_exponentials(polys: &LocalPolys, ctx: &BoundContext) -> [(f64, LogValue); 4] {
    let mk = ctx.mk() as i32;
    let m = ctx.m as f64;
    let p1 = 8.0;
    let p2 = 2f64.powi(mk + 2);
    let z1 = 32.0 * m + 4.0;
    let z2 = 2f64.powi(mk + 4) * m + 4.0;
    [
        (p1, polys.e(p1)),
        (p2, polys.e(p2)),
        (z1, polys.e_z(z1)),
        (z2, polys.e_z(z2)),
    ]
}

/// `Θ_k = C_m^{mk(mk+3)/2} (P^σ_{mk})^{φ_{mk} + (mk+2)²} (e_8 ∨ e_{2^{mk+2}})^γ
/// (e^Z_{32m+4} ∨ e^Z_{2^{mk+4}m+4})^γ`.
pub fn eval_theta(polys: &LocalPolys, ctx: &BoundContext) -> Result<LogValue> {
    let mk = ctx.mk();
    let p_sigma = *polys.p_sigma.get(mk as usize).ok_or(Error::MissingNorm {
        order: mk as usize + 1,
    })?;
    let e = theta_exponentials(polys, ctx);
    Ok(theta_from_factors(
        polys.c_m,
        p_sigma,
        [e[0].1, e[1].1, e[2].1, e[3].1],
        ctx,
    ))
}

/// `Θ_k` from its factors; exposed for direct recomputation in tests.
pub fn theta_from_factors(
    c_m: f64,
    p_sigma_mk: f64,
    e: [LogValue; 4],
    ctx: &BoundContext,
) -> LogValue {
    let mk = ctx.mk() as f64;
    let c_exp = mk * (mk + 3.0) / 2.0;
    let s_exp = phi(ctx.mk(), ctx.m) as f64 + (mk + 2.0) * (mk + 2.0);
    let g = ctx.gamma_exponent;
    let e_term = |a: LogValue, b: LogValue| if g == 0.0 { 0.0 } else { g * a.max(b).ln };
    LogValue {
        ln: c_exp * c_m.ln() + s_exp * p_sigma_mk.ln() + e_term(e[0], e[1]) + e_term(e[2], e[3]),
    }
}

/// `Λ_k = κ R^{-mk} (P_0^{mk} + Θ_k)`.
pub fn eval_lambda(theta: LogValue, p0: f64, ctx: &BoundContext) -> LogValue {
    let mk = ctx.mk() as f64;
    LogValue {
        ln: ctx.kappa.ln() - mk * ctx.radius.ln() + log_add(mk * p0.ln(), theta.ln),
    }
}

/// `P · (1 + t^{-m(2k+3)/2}) · λ`, the local density (k = 0) or derivative
/// bound.
pub fn density_upper_bound(lambda: f64, p_t_y0: f64, t: f64, m: u32, k_order: u32) -> f64 {
    let e = m as f64 * (2.0 * k_order as f64 + 3.0) / 2.0;
    p_t_y0 * (1.0 + t.powf(-e)) * lambda
}

/// All constants for one `(table, context)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValues {
    pub context: BoundContext,
    pub k_m: f64,
    pub polys: LocalPolys,
    /// `(p, e_p(t, y0))` and `(p, e^Z_p(t, y0))` as used in `Θ_k`.
    pub exponentials: Vec<(f64, LogValue)>,
    pub theta_k: LogValue,
    pub lambda_k: LogValue,
    pub combinatorial: Combinatorial,
    pub saturated: bool,
}

/// Evaluates every constant of the local density bound.
pub fn assemble(table: &NormTable, ctx: &BoundContext) -> Result<BoundValues> {
    let polys = eval_local_polys(table, ctx)?;
    let k_m = eval_k_m(
        ctx.t,
        table.c_star.min(1.0),
        ctx.m,
        table.drift_norm(Ball::R5, 0)?,
        table.diffusion_norm(Ball::R5, 1)?,
        table.diffusion_norm(Ball::R5, 2)?,
    )?;
    let theta_k = eval_theta(&polys, ctx)?;
    let lambda_k = eval_lambda(theta_k, polys.p[0], ctx);
    let exponentials = theta_exponentials(&polys, ctx).to_vec();
    let combinatorial = eval_combinatorial(ctx.k, ctx.m, table.growth.q, table.growth.q_bar);
    let saturated =
        theta_k.saturated() || lambda_k.saturated() || exponentials.iter().any(|e| e.1.saturated());
    Ok(BoundValues {
        context: *ctx,
        k_m,
        polys,
        exponentials,
        theta_k,
        lambda_k,
        combinatorial,
        saturated,
    })
}

/// `ln Λ_k(δ, y0)` for coefficients meeting the polynomial growth bound with
/// equality, at the pinned time `δ = T/2 ∧ 1 ∧ |y0|^{-4q}` that keeps the
/// exponential factors bounded (R = 1).
pub fn polynomial_regime_log_lambda(
    profile: &GrowthProfile,
    m: u32,
    k: u32,
    y0: f64,
    horizon: f64,
) -> Result<f64> {
    if !(y0.abs() > 5.0) {
        return Err(Error::OutOfRegime(format!(
            "|y0| = {} must exceed 5",
            y0.abs()
        )));
    }
    let delta = (0.5 * horizon)
        .min(1.0)
        .min(y0.abs().powf(-4.0 * profile.q));
    let ctx = BoundContext {
        t: delta,
        horizon,
        radius: 1.0,
        m,
        d: m,
        k,
        kappa: 1.0,
        gamma_exponent: 1.0,
    };
    let table = NormTable::saturating_growth(profile, y0, (m * k) as usize + 1);
    let polys = eval_local_polys(&table, &ctx)?;
    let theta = eval_theta(&polys, &ctx)?;
    Ok(eval_lambda(theta, polys.p[0], &ctx).ln)
}

// ---------------------------------------------------------------------------
// Tail envelope and Markov bound

/// Upper envelope `C3 (1 + t^{-(2k+3)/2}) exp(−γ0 (y−x)^{2(1−α)} / (2 C t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEnvelope {
    pub gamma0: f64,
    pub c: f64,
    pub c3: f64,
    pub alpha: f64,
    pub x: f64,
    pub t: f64,
}

/// `C = 2^{3−2α} + 2 |γ|_0² (1−α)²`
pub fn envelope_constant(alpha: f64, gamma_sup: f64) -> f64 {
    2f64.powf(3.0 - 2.0 * alpha) + 2.0 * gamma_sup * gamma_sup * (1.0 - alpha).powi(2)
}

impl TailEnvelope {
    pub fn new(alpha: f64, gamma_sup: f64, x: f64, t: f64, gamma0: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0 < 0.5) {
            return Err(invalid("gamma0", "gamma0 must lie in (0, 1/2)"));
        }
        if !(0.5..1.0).contains(&alpha) {
            return Err(invalid("alpha", "alpha must lie in [0.5, 1)"));
        }
        if !(t > 0.0) {
            return Err(Error::DegenerateTime(t));
        }
        Ok(Self {
            gamma0,
            c: envelope_constant(alpha, gamma_sup),
            c3: 1.0,
            alpha,
            x,
            t,
        })
    }

    /// Exponent of `(y − x)` in the envelope.
    pub fn power(&self) -> f64 {
        2.0 * (1.0 - self.alpha)
    }

    /// Coefficient of `(y−x)^{2(1−α)}` in `−log envelope`.
    pub fn slope(&self) -> f64 {
        self.gamma0 / (2.0 * self.c * self.t)
    }

    pub fn log_value(&self, y: f64, k_order: u32) -> Result<f64> {
        if !(y > self.x + 1.0) {
            return Err(Error::OutOfRegime(format!(
                "envelope needs y > x + 1, got y = {y}"
            )));
        }
        let pre = 1.0 + self.t.powf(-(2.0 * k_order as f64 + 3.0) / 2.0);
        Ok(self.c3.ln() + pre.ln() - self.slope() * (y - self.x).powf(self.power()))
    }
}

pub fn tail_envelope(env: &TailEnvelope, y: f64, k_order: u32) -> Result<f64> {
    env.log_value(y, k_order).map(f64::exp)
}

/// `min(1, E[sup|X|^r] / (|y| − 3)^r)`
pub fn markov_tail_bound(sup_moment_r: f64, r: f64, y: f64) -> Result<f64> {
    if !(y.abs() > 3.0) {
        return Err(Error::OutOfRegime(format!(
            "Markov bound needs |y| > 3, got {y}"
        )));
    }
    Ok((sup_moment_r / (y.abs() - 3.0).powf(r)).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn exponential_examples() {
        let e = eval_exponentials(2.0, 0.0, 3.0, 5.0).unwrap();
        assert_eq!((e.e_p.value(), e.e_p_z.value()), (1.0, 1.0));
        let e = eval_exponentials(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!(rel(e.e_p.value(), 4f64.exp()) < 1e-12);
        assert!(rel(e.e_p_z.value(), 9f64.exp()) < 1e-12);
    }

    #[test]
    fn exponential_saturates_instead_of_overflowing() {
        let e = eval_exponentials(64.0, 1.0, 10.0, 10.0).unwrap();
        assert!(e.e_p.saturated());
        assert!(e.e_p.value().is_finite());
    }

    #[test]
    fn k_m_examples() {
        assert_eq!(eval_k_m(1.0, 1.0, 1, 0.0, 1.0, 1.0).unwrap(), 7.0);
        assert_eq!(eval_k_m(4.0, 0.5, 2, 1.0, 1.0, 1.0).unwrap(), 46666.0);
        assert_eq!(
            eval_k_m(0.0, 0.5, 2, 1.0, 1.0, 1.0),
            Err(Error::DegenerateTime(0.0))
        );
        // Large-t limit: the middle term tends to 1.
        let big = eval_k_m(1e12, 1.0, 1, 0.0, 1.0, 1.0).unwrap();
        assert!((big - 3.0).abs() < 1e-9);
    }

    #[test]
    fn combinatorial_examples() {
        let c = eval_combinatorial(3, 1, 2.0, 0.0);
        assert_eq!(c.phi_k, 147);
        assert_eq!(c.phi_prime_k, 0);
        assert_eq!(c.q_prime_k, 832.0);
    }

    #[test]
    fn local_polys_on_unit_norms() {
        let table = NormTable::uniform(1.0, 1.0, 4);
        let ctx = BoundContext::new(1.0, 1, 1).unwrap();
        let p = eval_local_polys(&table, &ctx).unwrap();
        assert!(p.p.iter().all(|v| *v == 2.0));
        assert!(p.p_sigma.iter().all(|v| *v == 2.0));
        assert_eq!(p.p_c_m, 16.0);
        assert_eq!(p.c_m, 69.0);
    }

    #[test]
    fn local_polys_at_tiny_time_reduce_to_sigma_norm() {
        let mut table = NormTable::uniform(1.0, 1.0, 4);
        table.balls[2].diffusion = vec![1.5, 2.5, 3.5, 4.5, 5.5];
        table.balls[2].drift = vec![7.0; 5];
        let ctx = BoundContext::new(1e-300, 1, 1).unwrap();
        let p = eval_local_polys(&table, &ctx).unwrap();
        for k in 0..=2 {
            assert!(rel(p.p[k], table.balls[2].diffusion[k]) < 1e-12);
        }
    }

    #[test]
    fn doubling_sigma_two_rescales_p_c() {
        let mut table = NormTable::uniform(1.0, 1.0, 4);
        table.balls[2].drift[0] = 1.7;
        table.balls[2].diffusion[1] = 1.3;
        table.balls[2].diffusion[2] = 1.4;
        let ctx = BoundContext::new(2.0, 1, 1).unwrap();
        let before = eval_local_polys(&table, &ctx).unwrap().p_c_m;
        table.balls[2].diffusion[2] = 2.8;
        let after = eval_local_polys(&table, &ctx).unwrap().p_c_m;
        let r = 2f64.sqrt();
        let expect =
            ((r * 1.7 * 8.0 * 1.4f64.powi(3) + 1.69) / (r * 1.7 * 1.4f64.powi(3) + 1.69)).powi(4);
        assert!(rel(after / before, expect) < 1e-12);
    }

    #[test]
    fn missing_norm_is_reported() {
        let table = NormTable::uniform(1.0, 1.0, 2);
        let ctx = BoundContext::new(1.0, 1, 3).unwrap();
        assert!(matches!(
            eval_local_polys(&table, &ctx),
            Err(Error::MissingNorm { .. })
        ));
    }

    #[test]
    fn theta_exponents_and_unit_case() {
        let ctx = BoundContext::new(1.0, 1, 1).unwrap();
        let one = [LogValue::ONE; 4];
        assert_eq!(theta_from_factors(1.0, 1.0, one, &ctx).ln, 0.0);
        // ln Θ = 2 ln C + 84 ln P^σ.
        let th = theta_from_factors(3.0, 5.0, one, &ctx);
        assert!(rel(th.ln, 2.0 * 3f64.ln() + 84.0 * 5f64.ln()) < 1e-14);
    }

    #[test]
    fn lambda_examples() {
        let mut ctx = BoundContext::new(1.0, 1, 1).unwrap();
        assert!(rel(eval_lambda(LogValue::ONE, 1.0, &ctx).value(), 2.0) < 1e-15);
        ctx.k = 3;
        ctx.radius = 0.5;
        assert!(rel(eval_lambda(LogValue::ONE, 1.0, &ctx).value(), 16.0) < 1e-14);
        let base = eval_lambda(LogValue { ln: 3.0 }, 2.0, &ctx).value();
        ctx.kappa = 2.0;
        assert!(
            rel(
                eval_lambda(LogValue { ln: 3.0 }, 2.0, &ctx).value(),
                2.0 * base
            ) < 1e-14
        );
    }

    #[test]
    fn density_bound_examples() {
        assert_eq!(density_upper_bound(5.0, 0.0, 1.0, 1, 0), 0.0);
        assert_eq!(density_upper_bound(2.0, 1.0, 1.0, 1, 0), 4.0);
        assert_eq!(density_upper_bound(1.0, 1.0, 0.25, 1, 0), 9.0);
    }

    #[test]
    fn envelope_examples() {
        assert_eq!(envelope_constant(0.5, 1.0), 4.5);
        let env = TailEnvelope::new(0.5, 1.0, 1.0, 1.0, 0.25).unwrap();
        let eps = 1e-3;
        let v = tail_envelope(&env, 2.0 + eps, 0).unwrap();
        assert!(rel(v, 2.0 * (-0.25 * (1.0 + eps) / 9.0f64).exp()) < 1e-12);
        // Finite-difference slope of the log envelope.
        let h = 1e-4;
        let d =
            (env.log_value(10.0 + h, 0).unwrap() - env.log_value(10.0 - h, 0).unwrap()) / (2.0 * h);
        assert!((d + 0.25 / 9.0).abs() < 1e-9);
        assert!(matches!(
            tail_envelope(&env, 2.0, 0),
            Err(Error::OutOfRegime(_))
        ));
        assert!(TailEnvelope::new(0.5, 1.0, 1.0, 1.0, 0.6).is_err());
    }

    #[test]
    fn markov_examples() {
        assert_eq!(markov_tail_bound(16.0, 2.0, 7.0).unwrap(), 1.0);
        assert_eq!(markov_tail_bound(16.0, 2.0, 11.0).unwrap(), 0.25);
        assert!(markov_tail_bound(16.0, 2.0, 1e9).unwrap() < 1e-16);
        assert!(markov_tail_bound(16.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn polynomial_regime_m1_tracks_exponent() {
        let profile = GrowthProfile {
            q: 2.0,
            q_bar: 0.0,
            c0: 0.5,
            ck: vec![1.0; 16],
        };
        let a = polynomial_regime_log_lambda(&profile, 1, 3, 1e5, 1.0).unwrap();
        let b = polynomial_regime_log_lambda(&profile, 1, 3, 1e6, 1.0).unwrap();
        let slope = (b - a) / 10f64.ln();
        assert!(rel(slope, 832.0) < 0.02, "{slope}");
    }

    fn table_from(drift: &[f64], diff: &[f64], c_star: f64) -> NormTable {
        let mut t = NormTable::uniform(1.0, c_star, drift.len() - 1);
        for b in t.balls.iter_mut() {
            b.drift = drift.to_vec();
            b.diffusion = diff.to_vec();
        }
        t
    }

    fn cumulative(increments: &[f64]) -> Vec<f64> {
        let mut acc = 1.0;
        increments
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect()
    }

    proptest! {
        #[test]
        fn lambda_monotone_in_every_norm(
            drift in prop::collection::vec(0.0f64..3.0, 5),
            diff in prop::collection::vec(0.0f64..3.0, 5),
            idx in 0usize..10,
            bump in 0.0f64..2.0,
            t in 0.01f64..1.0,
            c_star in 0.05f64..1.0,
            kappa in 0.1f64..5.0,
        ) {
            let d = cumulative(&drift);
            let s = cumulative(&diff);
            let mut ctx = BoundContext::new(t, 1, 1).unwrap();
            ctx.kappa = kappa;
            let base = assemble(&table_from(&d, &s, c_star), &ctx).unwrap();
            let (mut d2, mut s2) = (drift.clone(), diff.clone());
            if idx < 5 { d2[idx] += bump } else { s2[idx - 5] += bump }
            let bumped = assemble(&table_from(&cumulative(&d2), &cumulative(&s2), c_star), &ctx).unwrap();
            prop_assert!(bumped.lambda_k.ln >= base.lambda_k.ln - 1e-12 * base.lambda_k.ln.abs());
            prop_assert!(bumped.theta_k.ln >= base.theta_k.ln - 1e-12 * base.theta_k.ln.abs());
            prop_assert!(bumped.k_m >= base.k_m);
            prop_assert!(bumped.polys.c_m >= base.polys.c_m);
            ctx.kappa = kappa * (1.0 + bump);
            let more = assemble(&table_from(&d, &s, c_star), &ctx).unwrap();
            prop_assert!(more.lambda_k.ln >= base.lambda_k.ln);
            prop_assert!(base.lambda_k.ln >= kappa.ln() - 1e-12);
        }

        #[test]
        fn log_domain_matches_direct_products(
            c_m in 1.0f64..5.0, ps in 1.0f64..3.0,
            e in prop::collection::vec(0.0f64..3.0, 4), p0 in 1.0f64..4.0,
        ) {
            let ctx = BoundContext::new(0.5, 1, 1).unwrap();
            let logs = [LogValue { ln: e[0] }, LogValue { ln: e[1] }, LogValue { ln: e[2] }, LogValue { ln: e[3] }];
            let theta = theta_from_factors(c_m, ps, logs, &ctx);
            let direct = c_m.powi(2) * ps.powi(84) * e[0].exp().max(e[1].exp()) * e[2].exp().max(e[3].exp());
            prop_assert!(rel(theta.value(), direct) < 1e-12);
            let lam = eval_lambda(theta, p0, &ctx).value();
            prop_assert!(rel(lam, p0 + direct) < 1e-12);
        }

        #[test]
        fn unit_density_bound_is_pure_time_factor(t in 0.01f64..10.0, m in 1u32..4, k in 0u32..4) {
            let e = m as f64 * (2.0 * k as f64 + 3.0) / 2.0;
            prop_assert_eq!(density_upper_bound(1.0, 1.0, t, m, k), 1.0 + t.powf(-e));
        }

        #[test]
        fn envelope_decreasing_beyond_start(y in 2.5f64..100.0, dy in 1e-3f64..10.0, alpha in 0.5f64..0.99) {
            let env = TailEnvelope::new(alpha, 1.3, 1.0, 0.7, 0.25).unwrap();
            prop_assert!(tail_envelope(&env, y + dy, 1).unwrap() < tail_envelope(&env, y, 1).unwrap());
        }
    }
}
