use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use sqrtdiff_cli::commands::{exit_code, run};
use sqrtdiff_cli::config::{GridSpec, MethodName, ModelConfig, SchemeName, SourceName};
use sqrtdiff_cli::output::{write_atomic, Artifacts, VERSION};
use sqrtdiff_cli::{load_config, CliError, Command, RunConfig};

/// Density bounds, boundary classification, simulation and verification for
/// square-root diffusions dX = (a − bX)dt + γ X^α dW.
///
/// Exit codes: 0 ok or pass, 1 verification failed, 2 inconclusive, 3 error.
/// SQRTDIFF_THREADS caps the worker count.
#[derive(Parser, Debug)]
#[command(name = "sqrtdiff", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: the config's `output`, else ./sqrtdiff-out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,

    // Constant-coefficient model.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeName>,
    #[arg(long)]
    write_paths: bool,

    #[arg(long, value_enum)]
    method: Option<MethodName>,
    #[arg(long, value_enum)]
    source: Option<SourceName>,
    /// Grid as lo:hi:n or lo:hi:n:log.
    #[arg(long, value_parser = GridSpec::parse)]
    grid: Option<GridSpec>,
    /// Range as lo:hi.
    #[arg(long, value_parser = parse_range)]
    y_range: Option<[f64; 2]>,
    #[arg(long)]
    y0: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    xi_max: Option<f64>,
    #[arg(long)]
    bandwidth: Option<f64>,

    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    norm_value: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    cpoint: Option<f64>,
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s}"))?;
    Ok([
        a.parse().map_err(|e| format!("{a}: {e}"))?,
        b.parse().map_err(|e| format!("{b}: {e}"))?,
    ])
}

fn apply_overrides(cli: &Cli, cfg: &mut RunConfig) {
    if cli.a.is_some() || cli.b.is_some() || cli.gamma.is_some() || cli.alpha.is_some() {
        let (mut a, mut b, mut gamma, mut alpha) = match cfg.model {
            ModelConfig::Constant { a, b, gamma, alpha } => (a, b, gamma, alpha),
            _ => (1.0, 1.0, 1.0, 0.5),
        };
        macro_rules! take {
            ($dst:ident) => {
                if let Some(v) = cli.$dst {
                    $dst = v;
                }
            };
        }
        take!(a);
        take!(b);
        take!(gamma);
        take!(alpha);
        cfg.model = ModelConfig::Constant { a, b, gamma, alpha };
    }
    macro_rules! set {
        ($src:ident => $($dst:tt)+) => {
            if let Some(v) = cli.$src {
                $($dst)+ = v;
            }
        };
    }
    set!(seed => cfg.seed);
    set!(x0 => cfg.task.x0);
    set!(t => cfg.task.t);
    set!(steps => cfg.numerics.steps);
    set!(paths => cfg.numerics.paths);
    set!(scheme => cfg.task.scheme);
    set!(method => cfg.task.method);
    set!(source => cfg.task.source);
    set!(radius => cfg.task.radius);
    set!(m => cfg.task.m);
    set!(k => cfg.task.k);
    set!(kappa => cfg.numerics.kappa);
    set!(gamma0 => cfg.numerics.gamma0);
    set!(cpoint => cfg.task.cpoint);
    if cli.grid.is_some() {
        cfg.task.grid = cli.grid;
    }
    if cli.y_range.is_some() {
        cfg.task.y_range = cli.y_range;
    }
    if cli.y0.is_some() {
        cfg.task.y0 = cli.y0;
    }
    if cli.norm_value.is_some() {
        cfg.task.norm_value = cli.norm_value;
    }
    if cli.xi_max.is_some() {
        cfg.numerics.xi_max = cli.xi_max;
    }
    if cli.bandwidth.is_some() {
        cfg.numerics.bandwidth = cli.bandwidth;
    }
    if cli.write_paths {
        cfg.task.write_paths = true;
    }
    if cli.out.is_some() {
        cfg.output = cli.out.clone();
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SQRTDIFF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
        CliError::validation(
            "SQRTDIFF_THREADS",
            format!("expected a positive integer, got {raw:?}"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation("SQRTDIFF_THREADS", e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("sqrtdiff-out"));
    let mut hash = None;
    let result = (|| -> Result<i32, CliError> {
        configure_threads()?;
        let mut cfg = match &cli.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        apply_overrides(&cli, &mut cfg);
        cfg.validate()?;
        if let Some(o) = &cfg.output {
            out_dir = o.clone();
        }
        hash = Some(cfg.hash());
        let mut artifacts = Artifacts::new(out_dir.clone(), &cfg);
        let outcome = run(&cfg, cli.command, &mut artifacts)?;
        print!("{}", outcome.document);
        Ok(exit_code(outcome.status))
    })();
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("sqrtdiff: {e}");
            let doc = json!({
                "tool": "sqrtdiff",
                "version": VERSION,
                "config_hash": hash,
                "command": cli.command.name(),
                "error": { "kind": e.kind(), "message": e.to_string() },
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("error serialises");
            text.push('\n');
            if let Err(w) = write_atomic(&out_dir.join("error.json"), text.as_bytes()) {
                eprintln!("sqrtdiff: could not write error.json: {w}");
            }
            ExitCode::from(3)
        }
    }
}
