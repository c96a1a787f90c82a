//! Monte Carlo paths: full-truncation Euler for general coefficients and
//! exact noncentral chi-square chaining for constant CIR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cir::CirTransition;
use crate::error::{invalid, Error, Result};
use crate::model::CoefficientSet;
use crate::special::pairwise_sum;

/// Identifier of the per-path seed rule, stored with every ensemble.
pub const SEED_RULE: &str = "splitmix64-finalizer(finalizer(master) + index * golden)";

/// States at or below this level count as having reached zero.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for path `index` under `master_seed`. The map is a bijection in
/// `index` for fixed master, and in master for fixed index.
pub fn derive_path_seed(master_seed: u64, path_index: u64) -> u64 {
    finalize(finalize(master_seed).wrapping_add(path_index.wrapping_mul(GOLDEN)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    FullTruncationEuler,
    ExactCir,
}

/// Which grid points are kept per path. Running extremes are always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recording {
    /// Every grid point.
    Full,
    /// Only the final state.
    Terminal,
    /// Every grid point in `[(t−1) ∨ t/2, t]`, the window of the ball
    /// hitting probability.
    HittingWindow,
    /// Full grid for small ensembles, otherwise the hitting window.
    Auto,
}

/// Grid points kept per path by `Recording::Auto` before switching.
const AUTO_FULL_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub t: f64,
    pub x0: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub scheme: Scheme,
    pub master_seed: u64,
    pub seed_rule: String,
    /// Step indices kept per path (increasing).
    pub recorded_steps: Vec<usize>,
    /// Raw states, `n_paths × recorded_steps.len()`, row-major.
    pub states: Vec<f64>,
    /// `max_s X_s⁺` over the full grid.
    pub path_max: Vec<f64>,
    /// `min_s X_s` (raw) over the full grid.
    pub path_min: Vec<f64>,
}

impl PathEnsemble {
    pub fn time_of_step(&self, step: usize) -> f64 {
        self.t * step as f64 / self.n_steps as f64
    }

    pub fn recorded_times(&self) -> Vec<f64> {
        self.recorded_steps
            .iter()
            .map(|&s| self.time_of_step(s))
            .collect()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.recorded_steps.len();
        &self.states[i * w..(i + 1) * w]
    }

    /// Clamped terminal states `max(X_t, 0)`.
    pub fn terminal(&self) -> Vec<f64> {
        assert_eq!(self.recorded_steps.last(), Some(&self.n_steps));
        (0..self.n_paths)
            .map(|i| self.path(i).last().expect("non-empty").max(0.0))
            .collect()
    }
}

fn hitting_window_start(t: f64) -> f64 {
    (t - 1.0).max(0.5 * t)
}

fn recorded_steps(recording: Recording, t: f64, n_steps: usize, n_paths: usize) -> Vec<usize> {
    let window = || {
        let start = hitting_window_start(t);
        (0..=n_steps)
            .filter(|&k| t * k as f64 / n_steps as f64 >= start - 1e-12 * t)
            .collect()
    };
    match recording {
        Recording::Full => (0..=n_steps).collect(),
        Recording::Terminal => vec![n_steps],
        Recording::HittingWindow => window(),
        Recording::Auto => {
            if n_paths.saturating_mul(n_steps + 1) <= AUTO_FULL_LIMIT {
                (0..=n_steps).collect()
            } else {
                window()
            }
        }
    }
}

pub fn simulate_paths(
    c: &CoefficientSet,
    x: f64,
    t: f64,
    n_steps: usize,
    n_paths: usize,
    scheme: Scheme,
    master_seed: u64,
) -> Result<PathEnsemble> {
    simulate_paths_with(
        c,
        x,
        t,
        n_steps,
        n_paths,
        scheme,
        master_seed,
        Recording::Auto,
    )
}

enum Stepper {
    Euler,
    Exact(CirTransition),
    /// Exact flow of `dX = (a − bX) dt` when γ ≡ 0.
    Deterministic {
        decay: f64,
        gain: f64,
    },
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_paths_with(
    c: &CoefficientSet,
    x: f64,
    t: f64,
    n_steps: usize,
    n_paths: usize,
    scheme: Scheme,
    master_seed: u64,
    recording: Recording,
) -> Result<PathEnsemble> {
    if n_steps == 0 {
        return Err(invalid("n_steps", "need at least one step"));
    }
    if n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(invalid("x", "start must be finite and >= 0"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::DegenerateTime(t));
    }
    let dt = t / n_steps as f64;
    let stepper = match scheme {
        Scheme::FullTruncationEuler => Stepper::Euler,
        Scheme::ExactCir => {
            let (a, b, g) = c.constant_values().ok_or(Error::SchemeMismatch)?;
            if c.alpha != 0.5 {
                return Err(Error::SchemeMismatch);
            }
            if g == 0.0 {
                let decay = (-b * dt).exp();
                let gain = if b == 0.0 {
                    a * dt
                } else {
                    a / b * -(-b * dt).exp_m1()
                };
                Stepper::Deterministic { decay, gain }
            } else {
                Stepper::Exact(CirTransition::new(a, b, g, dt)?)
            }
        }
    };
    let steps = recorded_steps(recording, t, n_steps, n_paths);
    let width = steps.len();
    let mut states = vec![0.0; n_paths * width];
    let mut path_max = vec![0.0; n_paths];
    let mut path_min = vec![0.0; n_paths];
    let sqrt_dt = dt.sqrt();

    states
        .par_chunks_mut(width)
        .zip(path_max.par_iter_mut())
        .zip(path_min.par_iter_mut())
        .enumerate()
        .for_each(|(i, ((row, hi), lo))| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_path_seed(master_seed, i as u64));
            let mut state = x;
            let (mut max, mut min) = (x, x);
            let mut slot = 0;
            if steps[0] == 0 {
                row[0] = x;
                slot = 1;
            }
            for k in 1..=n_steps {
                state = match &stepper {
                    Stepper::Euler => {
                        let xp = state.max(0.0);
                        let drift = c.a.value(xp) - c.b.value(xp) * xp;
                        let diffusion = c.diffusion(xp);
                        if diffusion == 0.0 {
                            state + drift * dt
                        } else {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            state + drift * dt + diffusion * sqrt_dt * z
                        }
                    }
                    Stepper::Exact(tr) => tr.sample(&mut rng, state),
                    Stepper::Deterministic { decay, gain } => state * decay + gain,
                };
                max = max.max(state);
                min = min.min(state);
                if slot < width && steps[slot] == k {
                    row[slot] = state;
                    slot += 1;
                }
            }
            *hi = max.max(0.0);
            *lo = min;
        });

    Ok(PathEnsemble {
        t,
        x0: x,
        n_steps,
        n_paths,
        scheme,
        master_seed,
        seed_rule: SEED_RULE.to_string(),
        recorded_steps: steps,
        states,
        path_max,
        path_min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionalResult {
    pub estimate: f64,
    pub standard_error: f64,
    pub n_paths: usize,
    pub functional: String,
    /// Fraction of paths whose minimum is at or below the positivity floor.
    pub floor_fraction: Option<f64>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (pairwise_sum(&sq) / (n - 1.0) / n).sqrt())
}

/// Fraction of paths whose recorded distance to `y0` over
/// `[(t−1) ∨ t/2, t]` drops to `3R` or below.
pub fn estimate_ball_prob(e: &PathEnsemble, y0: f64, radius: f64) -> Result<PathFunctionalResult> {
    if !(radius > 0.0 && radius <= 1.0) {
        return Err(invalid("radius", "R must lie in (0, 1]"));
    }
    let start = hitting_window_start(e.t);
    let cols: Vec<usize> = e
        .recorded_steps
        .iter()
        .enumerate()
        .filter(|(_, &s)| e.time_of_step(s) >= start - 1e-12 * e.t)
        .map(|(j, _)| j)
        .collect();
    let hits: Vec<f64> = (0..e.n_paths)
        .into_par_iter()
        .map(|i| {
            let row = e.path(i);
            let near = cols
                .iter()
                .any(|&j| (row[j].max(0.0) - y0).abs() <= 3.0 * radius);
            if near {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let p = pairwise_sum(&hits) / e.n_paths as f64;
    Ok(PathFunctionalResult {
        estimate: p,
        standard_error: (p * (1.0 - p) / e.n_paths as f64).sqrt(),
        n_paths: e.n_paths,
        functional: format!(
            "P(min |X_s - {y0}| <= {} over {} grid points in [{start}, {}])",
            3.0 * radius,
            cols.len(),
            e.t
        ),
        floor_fraction: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSign {
    Positive,
    Negative,
}

/// `E[(sup_s X_s)^r]` or `E[(sup_s 1/X_s)^r]` over the simulation grid.
pub fn sup_moment(e: &PathEnsemble, r: f64, sign: MomentSign) -> Result<PathFunctionalResult> {
    if !(r > 0.0) {
        return Err(invalid("r", "order must be > 0"));
    }
    match sign {
        MomentSign::Positive => {
            let v: Vec<f64> = e.path_max.iter().map(|m| m.powf(r)).collect();
            let (estimate, standard_error) = mean_se(&v);
            Ok(PathFunctionalResult {
                estimate,
                standard_error,
                n_paths: e.n_paths,
                functional: format!("E[sup X_s^{r}]"),
                floor_fraction: None,
            })
        }
        MomentSign::Negative => {
            let touched = e
                .path_min
                .iter()
                .filter(|m| **m <= POSITIVITY_FLOOR)
                .count();
            let fraction = touched as f64 / e.n_paths as f64;
            if touched > 0 {
                return Err(Error::NonpositivePath {
                    paths: touched,
                    fraction,
                });
            }
            let v: Vec<f64> = e.path_min.iter().map(|m| m.powf(-r)).collect();
            let (estimate, standard_error) = mean_se(&v);
            Ok(PathFunctionalResult {
                estimate,
                standard_error,
                n_paths: e.n_paths,
                functional: format!("E[sup X_s^-{r}]"),
                floor_fraction: Some(fraction),
            })
        }
    }
}

/// Negative sup-moment at two grid resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementCheck {
    pub coarse_steps: usize,
    pub fine_steps: usize,
    pub coarse: PathFunctionalResult,
    pub fine: PathFunctionalResult,
    pub ratio: f64,
    /// `|ratio − 1| ≤ tolerance`.
    pub stable: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn negative_moment_refinement(
    c: &CoefficientSet,
    x: f64,
    t: f64,
    p: f64,
    coarse_steps: usize,
    fine_steps: usize,
    n_paths: usize,
    scheme: Scheme,
    master_seed: u64,
    tolerance: f64,
) -> Result<RefinementCheck> {
    let run = |steps| {
        let e = simulate_paths_with(
            c,
            x,
            t,
            steps,
            n_paths,
            scheme,
            master_seed,
            Recording::Terminal,
        )?;
        sup_moment(&e, p, MomentSign::Negative)
    };
    let coarse = run(coarse_steps)?;
    let fine = run(fine_steps)?;
    let ratio = fine.estimate / coarse.estimate;
    Ok(RefinementCheck {
        coarse_steps,
        fine_steps,
        coarse,
        fine,
        ratio,
        stable: (ratio - 1.0).abs() <= tolerance,
    })
}
