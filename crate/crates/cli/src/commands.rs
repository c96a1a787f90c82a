//! One function per subcommand. Each writes its artifacts and returns the
//! status that decides the exit code.

use serde::Serialize;
use serde_json::json;
use sqrtdiff::boundary::{classify_zero_boundary_at, estimate_l_star, Classification};
use sqrtdiff::bounds::{assemble, BoundContext, TailEnvelope};
use sqrtdiff::cir::{cir_density, cir_exact_samples, cir_mean_var, cir_params, CIRParams};
use sqrtdiff::density::{fourier_local, kde, DensityEstimate, KernelVariant, XiCutoff};
use sqrtdiff::mc::{
    simulate_paths_with, PathEnsemble, Recording, Scheme, POSITIVITY_FLOOR, SEED_RULE,
};
use sqrtdiff::model::{local_norms, NormOptions, Status};
use sqrtdiff::special::pairwise_sum;
use sqrtdiff::stats::{mean_and_se, quantile_sorted};
use sqrtdiff::verify::{
    cross_validate, verify_polydecay, verify_tail, verify_zero, DensitySource, VerificationReport,
    ZeroTest,
};
use sqrtdiff::{CoefficientSet, NormTable};

use crate::config::{Command, GridSpec, MethodName, RunConfig, SchemeName, SourceName};
use crate::error::CliError;
use crate::output::Artifacts;

/// Result of a run: the status behind the exit code and the main JSON
/// document (also printed to stdout).
#[derive(Debug)]
pub struct Outcome {
    pub status: Status,
    pub document: String,
}

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Pass => 0,
        Status::Fail => 1,
        Status::Inconclusive => 2,
    }
}

pub fn run(cfg: &RunConfig, command: Command, out: &mut Artifacts) -> Result<Outcome, CliError> {
    if let Some(c) = cfg.task.command {
        if c != command {
            return Err(CliError::validation(
                "task.command",
                format!(
                    "config is for `{}`, invoked as `{}`",
                    c.name(),
                    command.name()
                ),
            ));
        }
    }
    match command {
        Command::Bounds => bounds(cfg, out),
        Command::CirDensity => cir_density_cmd(cfg, out),
        Command::Classify => classify(cfg, out),
        Command::Simulate => simulate(cfg, out),
        Command::Estimate => estimate(cfg, out),
        Command::VerifyTail => verify_tail_cmd(cfg, out),
        Command::VerifyZero => verify_zero_cmd(cfg, out),
        Command::Report => report(cfg, out),
    }
}

fn cir_of(cfg: &RunConfig) -> Result<CIRParams, CliError> {
    let (a, b, g) = cfg.model.constant_cir().ok_or_else(|| {
        CliError::validation("model", "needs constant coefficients with alpha = 0.5")
    })?;
    Ok(cir_params(a, b, g, cfg.task.x0, cfg.task.t)?)
}

fn scheme_of(cfg: &RunConfig) -> Scheme {
    match cfg.task.scheme {
        SchemeName::Euler => Scheme::FullTruncationEuler,
        SchemeName::Exact => Scheme::ExactCir,
    }
}

/// Terminal states. The exact scheme draws them in one transition, which
/// has the same law as chaining `steps` transitions.
fn terminal_samples(cfg: &RunConfig, c: &CoefficientSet) -> Result<Vec<f64>, CliError> {
    match cfg.task.scheme {
        SchemeName::Exact => Ok(cir_exact_samples(
            &cir_of(cfg)?,
            cfg.numerics.paths,
            cfg.seed,
        )),
        SchemeName::Euler => Ok(simulate_paths_with(
            c,
            cfg.task.x0,
            cfg.task.t,
            cfg.numerics.steps,
            cfg.numerics.paths,
            Scheme::FullTruncationEuler,
            cfg.seed,
            Recording::Terminal,
        )?
        .terminal()),
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn finish<T: Serialize>(
    out: &mut Artifacts,
    name: &str,
    command: Command,
    status: Status,
    result: &T,
) -> Result<Outcome, CliError> {
    let document = out.json(name, command.name(), result)?;
    Ok(Outcome { status, document })
}

// ---------------------------------------------------------------------------

fn bounds(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let t = &cfg.task;
    let mut ctx = BoundContext::new(t.t, t.m, t.k)?;
    ctx.radius = t.radius;
    ctx.kappa = cfg.numerics.kappa;
    ctx.validate()?;
    let k_max = (t.m * t.k) as usize + 1;
    let table = match t.norm_value {
        Some(v) => NormTable::uniform(v, 1.0, k_max),
        None => local_norms(
            &cfg.model.build()?,
            t.y0.unwrap_or(t.x0),
            t.radius,
            k_max,
            &NormOptions::default(),
        )?,
    };
    let values = assemble(&table, &ctx)?;
    let result = json!({
        "bound_values": values,
        "saturation": {
            "theta_k": values.theta_k.saturated(),
            "lambda_k": values.lambda_k.saturated(),
            "any": values.saturated,
        },
        "norms": table,
    });
    finish(out, "bounds.json", Command::Bounds, Status::Pass, &result)
}

fn default_positive_grid(cfg: &RunConfig, hi: f64) -> Vec<f64> {
    let n = cfg.numerics.grid_points;
    GridSpec {
        lo: hi / n as f64,
        hi,
        n,
        log: false,
    }
    .points()
}

fn cir_density_cmd(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let p = cir_of(cfg)?;
    let (mean, var) = cir_mean_var(&p);
    let grid = match &cfg.task.grid {
        Some(g) => g.points(),
        None => default_positive_grid(cfg, mean + 8.0 * var.sqrt()),
    };
    if grid.iter().any(|y| !(*y > 0.0)) {
        return Err(CliError::validation(
            "task.grid",
            "density grid must be positive",
        ));
    }
    let points = grid
        .iter()
        .map(|&y| cir_density(&p, y))
        .collect::<Result<Vec<_>, _>>()?;
    let pdf: Vec<f64> = points.iter().map(|d| d.pdf).collect();
    let mass = grid
        .windows(2)
        .zip(pdf.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum::<f64>();
    let csv = out.csv("cir_density.csv", &grid, &[&pdf], &["y", "pdf"])?;
    let result = json!({
        "params": p,
        "mean": mean,
        "variance": var,
        "grid_points": grid.len(),
        "grid_mass": mass,
        "max_series_terms": points.iter().map(|d| d.series_terms_used).max().unwrap_or(0),
        "csv": csv.file_name().map(|n| n.to_string_lossy().into_owned()),
    });
    finish(
        out,
        "cir_density.json",
        Command::CirDensity,
        Status::Pass,
        &result,
    )
}

fn classify(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let c = cfg.model.build()?;
    let r = classify_zero_boundary_at(&c, cfg.task.cpoint)?;
    let status = match r.classification {
        Classification::Inconclusive => Status::Inconclusive,
        _ => Status::Pass,
    };
    let (xs, ps): (Vec<f64>, Vec<f64>) = r.pc_samples.iter().copied().unzip();
    out.csv("scale_function.csv", &xs, &[&ps], &["x", "p_c"])?;
    finish(out, "classify.json", Command::Classify, status, &r)
}

#[derive(Serialize)]
struct EnsembleSummary {
    scheme: Scheme,
    n_paths: usize,
    n_steps: usize,
    t: f64,
    x0: f64,
    master_seed: u64,
    seed_rule: String,
    terminal_mean: f64,
    terminal_standard_error: f64,
    terminal_quantiles: Vec<(f64, f64)>,
    path_min: f64,
    path_max: f64,
    floor_fraction: f64,
}

fn simulate(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let c = cfg.model.build()?;
    let e: PathEnsemble = simulate_paths_with(
        &c,
        cfg.task.x0,
        cfg.task.t,
        cfg.numerics.steps,
        cfg.numerics.paths,
        scheme_of(cfg),
        cfg.seed,
        Recording::Terminal,
    )?;
    let term = e.terminal();
    let (mean, se) = mean_and_se(&term);
    let s = sorted(&term);
    let floor = e
        .path_min
        .iter()
        .filter(|m| **m <= POSITIVITY_FLOOR)
        .count();
    let summary = EnsembleSummary {
        scheme: e.scheme,
        n_paths: e.n_paths,
        n_steps: e.n_steps,
        t: e.t,
        x0: e.x0,
        master_seed: e.master_seed,
        seed_rule: SEED_RULE.to_string(),
        terminal_mean: mean,
        terminal_standard_error: se,
        terminal_quantiles: [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99]
            .iter()
            .map(|&q| (q, quantile_sorted(&s, q)))
            .collect(),
        path_min: e.path_min.iter().copied().fold(f64::INFINITY, f64::min),
        path_max: e.path_max.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        floor_fraction: floor as f64 / e.n_paths as f64,
    };
    if cfg.task.write_paths {
        let idx: Vec<f64> = (0..e.n_paths).map(|i| i as f64).collect();
        out.csv(
            "paths.csv",
            &idx,
            &[&term, &e.path_min, &e.path_max],
            &["path", "terminal", "min", "max"],
        )?;
    }
    finish(
        out,
        "simulate.json",
        Command::Simulate,
        Status::Pass,
        &summary,
    )
}

fn estimate_on(
    cfg: &RunConfig,
    samples: &[f64],
    grid: Option<Vec<f64>>,
) -> Result<DensityEstimate, CliError> {
    let s = sorted(samples);
    let kde_grid = || {
        grid.clone()
            .unwrap_or_else(|| default_positive_grid(cfg, 1.5 * quantile_sorted(&s, 0.999)))
    };
    let est = match cfg.task.method {
        MethodName::Kde => kde(
            samples,
            &kde_grid(),
            cfg.numerics.bandwidth,
            KernelVariant::Gaussian,
        )?,
        MethodName::KdeLog => kde(
            samples,
            &kde_grid(),
            cfg.numerics.bandwidth,
            KernelVariant::LogGaussian,
        )?,
        MethodName::FourierLocal => {
            let y0 = cfg
                .task
                .y0
                .unwrap_or_else(|| pairwise_sum(samples) / samples.len() as f64);
            let r = cfg.task.radius;
            let grid = grid.unwrap_or_else(|| {
                let n = cfg.numerics.grid_points;
                GridSpec {
                    lo: y0 - r,
                    hi: y0 + r,
                    n,
                    log: false,
                }
                .points()
            });
            let cutoff = match cfg.numerics.xi_max {
                Some(x) => XiCutoff::Fixed(x),
                None => XiCutoff::default(),
            };
            fourier_local(samples, y0, r, &grid, cutoff, cfg.numerics.xi_step)?
        }
    };
    Ok(est)
}

fn estimate(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let c = cfg.model.build()?;
    let samples = terminal_samples(cfg, &c)?;
    let est = estimate_on(cfg, &samples, cfg.task.grid.map(|g| g.points()))?;
    out.csv("estimate.csv", &est.grid, &[&est.values], &["y", "density"])?;
    let result = json!({
        "method": est.method,
        "n_samples": est.n_samples,
        "bandwidth": est.bandwidth,
        "localization": est.localization,
        "fourier": est.fourier,
        "grid_points": est.grid.len(),
    });
    finish(
        out,
        "estimate.json",
        Command::Estimate,
        Status::Pass,
        &result,
    )
}

fn gamma_sup(cfg: &RunConfig, c: &CoefficientSet, hi: f64) -> f64 {
    if let Some((_, _, g)) = cfg.model.constant_cir() {
        return g.abs();
    }
    (0..=4096)
        .map(|i| c.gamma.value(hi * i as f64 / 4096.0).abs())
        .fold(0.0, f64::max)
}

fn write_curve(
    out: &mut Artifacts,
    name: &str,
    r: &mut VerificationReport,
) -> Result<(), CliError> {
    let x: Vec<f64> = r.curve.iter().map(|p| p.x).collect();
    let o: Vec<f64> = r.curve.iter().map(|p| p.observed).collect();
    let f: Vec<f64> = r.curve.iter().map(|p| p.fitted).collect();
    let path = out.csv(name, &x, &[&o, &f], &["x", "observed", "fitted"])?;
    r.artifacts.push(
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    );
    Ok(())
}

fn sample_estimate(
    cfg: &RunConfig,
    c: &CoefficientSet,
    grid: Vec<f64>,
) -> Result<DensityEstimate, CliError> {
    let samples = terminal_samples(cfg, c)?;
    Ok(kde(
        &samples,
        &grid,
        cfg.numerics.bandwidth,
        KernelVariant::LogGaussian,
    )?)
}

fn tail_report(cfg: &RunConfig, c: &CoefficientSet) -> Result<VerificationReport, CliError> {
    let t = &cfg.task;
    let n = cfg.numerics.grid_points;
    let (lo, hi) = match (t.y_range, t.source) {
        (Some([lo, hi]), _) => (lo, hi),
        (None, SourceName::Analytic) => (t.x0 + 4.0, t.x0 + 29.0),
        (None, SourceName::Samples) => (t.x0 + 1.5, t.x0 + 7.0),
    };
    let env = TailEnvelope::new(
        c.alpha,
        gamma_sup(cfg, c, 2.0 * hi),
        t.x0,
        t.t,
        cfg.numerics.gamma0,
    )?;
    let seed = cfg.seed;
    let r = match t.source {
        SourceName::Analytic => {
            let p = cir_of(cfg)?;
            verify_tail(
                DensitySource::Cir {
                    params: &p,
                    points: 64,
                    log_spaced: false,
                },
                &env,
                (lo, hi),
                seed,
            )?
        }
        SourceName::Samples => {
            let grid = GridSpec {
                lo,
                hi,
                n,
                log: false,
            }
            .points();
            let est = sample_estimate(cfg, c, grid)?;
            verify_tail(DensitySource::Estimate(&est), &env, (lo, hi), seed)?
        }
    };
    Ok(r)
}

fn verify_tail_cmd(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let c = cfg.model.build()?;
    let mut r = tail_report(cfg, &c)?;
    write_curve(out, "verify_tail.csv", &mut r)?;
    finish(out, "verify_tail.json", Command::VerifyTail, r.status, &r)
}

fn zero_report(cfg: &RunConfig, c: &CoefficientSet) -> Result<VerificationReport, CliError> {
    if c.alpha != 0.5 {
        return Err(CliError::validation(
            "model.alpha",
            "zero behaviour is checked for alpha = 0.5",
        ));
    }
    let t = &cfg.task;
    // For constant CIR δ = 4a/γ² = 2 l*; elsewhere l* stands in for 2a/γ².
    let l_star = estimate_l_star(c);
    let delta = 2.0 * l_star.l_star;
    let seed = cfg.seed;
    let mut r = match t.source {
        SourceName::Analytic => {
            let p = cir_of(cfg)?;
            let range = t.y_range.map_or((1e-6, 1e-3), |[a, b]| (a, b));
            let src = DensitySource::Cir {
                params: &p,
                points: 64,
                log_spaced: true,
            };
            verify_zero(src, p.delta, range, ZeroTest::Exponent, seed)?
        }
        SourceName::Samples => {
            let range = t.y_range.map_or((5e-3, 1e-1), |[a, b]| (a, b));
            let grid = GridSpec {
                lo: range.0,
                hi: range.1,
                n: 64,
                log: true,
            }
            .points();
            let est = sample_estimate(cfg, c, grid)?;
            verify_zero(
                DensitySource::Estimate(&est),
                delta,
                range,
                ZeroTest::Sign,
                seed,
            )?
        }
    };
    r.parameters.insert("l_star".into(), l_star.l_star);
    Ok(r)
}

fn verify_zero_cmd(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let c = cfg.model.build()?;
    let mut r = zero_report(cfg, &c)?;
    write_curve(out, "verify_zero.csv", &mut r)?;
    finish(out, "verify_zero.json", Command::VerifyZero, r.status, &r)
}

fn worst(statuses: impl IntoIterator<Item = Status>) -> Status {
    statuses
        .into_iter()
        .fold(Status::Pass, |acc, s| match (acc, s) {
            (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
            (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
            _ => Status::Pass,
        })
}

/// Every check that applies to the model. Constant CIR uses the analytic
/// oracle and adds the estimator cross-validation; other models use
/// simulated samples.
fn report(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let c = cfg.model.build()?;
    let boundary = classify_zero_boundary_at(&c, cfg.task.cpoint)?;
    let constant = cfg.model.constant_cir().is_some();
    let mut sub = cfg.clone();
    sub.task.y_range = None;
    sub.task.source = if constant {
        SourceName::Analytic
    } else {
        SourceName::Samples
    };

    let mut checks: Vec<(String, VerificationReport)> = Vec::new();
    checks.push(("tail".into(), tail_report(&sub, &c)?));
    if c.alpha == 0.5 {
        checks.push(("zero".into(), zero_report(&sub, &c)?));
    }
    let x0 = cfg.task.x0;
    let oracle = if constant { Some(cir_of(cfg)?) } else { None };
    let decay_est = match oracle {
        Some(_) => None,
        None => Some(sample_estimate(
            cfg,
            &c,
            GridSpec {
                lo: x0 + 1.5,
                hi: x0 + 7.0,
                n: 64,
                log: false,
            }
            .points(),
        )?),
    };
    let decay_src = match (&oracle, &decay_est) {
        (Some(p), _) => DensitySource::Cir {
            params: p,
            points: 64,
            log_spaced: false,
        },
        (None, Some(e)) => DensitySource::Estimate(e),
        (None, None) => unreachable!("one source is always built"),
    };
    let decay_range = if constant {
        (x0 + 9.0, x0 + 39.0)
    } else {
        (x0 + 1.5, x0 + 7.0)
    };
    for &p in &cfg.task.p_orders {
        checks.push((
            format!("polydecay_p{p}"),
            verify_polydecay(decay_src, p, decay_range, cfg.seed)?,
        ));
    }
    if let Some(p) = &oracle {
        checks.push((
            "oracle_xval".into(),
            cross_validate(p, cfg.numerics.paths, &[cfg.seed, cfg.seed.wrapping_add(1)])?,
        ));
    }
    for (name, r) in checks.iter_mut() {
        if !r.curve.is_empty() {
            write_curve(out, &format!("report_{name}.csv"), r)?;
        }
    }
    let boundary_status = match boundary.classification {
        Classification::Inconclusive => Status::Inconclusive,
        _ => Status::Pass,
    };
    let status =
        worst(std::iter::once(boundary_status).chain(checks.iter().map(|(_, r)| r.status)));
    let result = json!({
        "status": status,
        "boundary": boundary,
        "checks": checks.iter().map(|(n, r)| json!({"name": n, "report": r})).collect::<Vec<_>>(),
    });
    finish(out, "report.json", Command::Report, status, &result)
}
