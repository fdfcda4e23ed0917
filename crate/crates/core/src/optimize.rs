//! External optimization of the activity exponent ω by particle swarm, and
//! validation-error profiles over ω and σ.
//!
//! Random draws come from one seeded stream in a fixed order; only the
//! objective evaluations fan out, and their results are collected in
//! particle order, so the outcome does not depend on the worker count.

use serde::{Deserialize, Serialize};

use crate::driver::{self, FitContext, FitReport, ModelConfig, OmegaSetting, SparseModel};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::timeseries::TimeSeriesTable;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    /// Evaluation rounds, the initial swarm included.
    pub max_iter: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub bounds: (f64, f64),
    pub seed: u64,
    /// Early stop when the best value improves by no more than `tol` over
    /// `stall_iterations` rounds; 0 runs the full budget.
    pub tol: f64,
    pub stall_iterations: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 30,
            max_iter: 200,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            bounds: (1e-3, 1.0),
            seed: 0,
            tol: 0.0,
            stall_iterations: 20,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Parameter(format!("PSO bounds must satisfy lo < hi, got ({lo}, {hi})")));
        }
        if self.swarm_size < 2 {
            return Err(Error::Parameter(format!("swarm_size must be >= 2, got {}", self.swarm_size)));
        }
        if self.max_iter < 1 {
            return Err(Error::Parameter("max_iter must be >= 1".into()));
        }
        for (name, value) in [("inertia", self.inertia), ("cognitive", self.cognitive), ("social", self.social)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::Parameter(format!("{name} must be >= 0, got {value}")));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Parameter(format!("tol must be >= 0, got {}", self.tol)));
        }
        if self.tol > 0.0 && self.stall_iterations == 0 {
            return Err(Error::Parameter("stall_iterations must be >= 1 when tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub omega_star: f64,
    pub best_value: f64,
    /// Best value after each round; nonincreasing.
    pub history: Vec<f64>,
    /// Best position after each round.
    pub best_positions: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
}

pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Global-best particle swarm minimizing `objective` over `bounds`.
/// Non-finite objective values count as +∞.
pub fn pso_optimize<F>(objective: F, cfg: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let (lo, hi) = cfg.bounds;
    let span = hi - lo;
    let mut rng = substream(cfg.seed, "pso");
    let eval = |xs: &[f64]| -> Vec<f64> {
        par_map(xs, |&x| {
            let v = objective(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        })
    };

    let mut x: Vec<f64> = (0..cfg.swarm_size).map(|_| rng.random_range(lo..=hi)).collect();
    let mut v: Vec<f64> = (0..cfg.swarm_size).map(|_| rng.random_range(-span / 2.0..=span / 2.0)).collect();
    let values = eval(&x);
    let mut evaluations = x.len();
    let mut pbest = x.clone();
    let mut pbest_value = values;
    let mut g = 0;
    for i in 1..cfg.swarm_size {
        if pbest_value[i] < pbest_value[g] {
            g = i;
        }
    }
    let mut gbest = (pbest[g], pbest_value[g]);
    let mut history = vec![gbest.1];
    let mut best_positions = vec![gbest.0];

    for _ in 1..cfg.max_iter {
        for i in 0..cfg.swarm_size {
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let mut vi = cfg.inertia * v[i]
                + cfg.cognitive * r1 * (pbest[i] - x[i])
                + cfg.social * r2 * (gbest.0 - x[i]);
            vi = vi.clamp(-span, span);
            let mut xi = x[i] + vi;
            if xi < lo {
                xi = lo;
                vi = 0.0;
            } else if xi > hi {
                xi = hi;
                vi = 0.0;
            }
            x[i] = xi;
            v[i] = vi;
        }
        let values = eval(&x);
        evaluations += x.len();
        for i in 0..cfg.swarm_size {
            if values[i] < pbest_value[i] {
                pbest[i] = x[i];
                pbest_value[i] = values[i];
            }
            if values[i] < gbest.1 {
                gbest = (x[i], values[i]);
            }
        }
        history.push(gbest.1);
        best_positions.push(gbest.0);
        if cfg.tol > 0.0 && history.len() > cfg.stall_iterations {
            let before = history[history.len() - 1 - cfg.stall_iterations];
            if before - gbest.1 <= cfg.tol {
                break;
            }
        }
    }

    Ok(PsoResult {
        omega_star: gbest.0,
        best_value: gbest.1,
        iterations: history.len(),
        history,
        best_positions,
        evaluations,
    })
}

fn require_omega(config: &ModelConfig) -> Result<()> {
    if config.uses_omega() {
        Ok(())
    } else {
        Err(Error::Parameter("the model has no exp(ω·T) term to optimize".into()))
    }
}

/// Training reconstruction residual `ε(ω) = ‖y − Θ(ω)Ξ(ω)‖₂` on `train`.
pub fn objective_epsilon(omega: f64, config: &ModelConfig, train: &TimeSeriesTable) -> Result<f64> {
    require_omega(config)?;
    FitContext::training_only(config, train)?.epsilon(omega)
}

#[derive(Debug, Clone)]
pub struct OmegaFit {
    pub pso: PsoResult,
    pub model: SparseModel,
    pub report: FitReport,
}

/// Minimizes ε(ω) over the training rows of `table`, then refits at ω*.
pub fn optimize_omega(config: &ModelConfig, table: &TimeSeriesTable, pso: &PsoConfig) -> Result<OmegaFit> {
    require_omega(config)?;
    pso.validate()?;
    let context = FitContext::new(config, table)?;
    let objective = |w: f64| context.epsilon(w).unwrap_or(f64::INFINITY);
    let result = pso_optimize(objective, pso)?;
    if !result.best_value.is_finite() {
        return Err(Error::Stability("ε(ω) was not finite anywhere the swarm looked".into()));
    }
    let (model, report) = context.fit(Some(result.omega_star))?;
    Ok(OmegaFit { pso: result, model, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `omega` or `sigma`.
    pub parameter: String,
    pub grid: Vec<f64>,
    /// Validation RMSE per grid point; NaN where the fit failed.
    pub rmse: Vec<f64>,
    pub errors: Vec<Option<String>>,
    pub argmin: usize,
    pub reference: f64,
}

/// `n` equispaced points from `a` to `b`, both included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

/// `0.25, 0.5, …, 3.0`.
pub fn default_sigma_grid() -> Vec<f64> {
    (1..=12).map(|k| k as f64 * 0.25).collect()
}

fn sweep(
    parameter: &str,
    grid: Vec<f64>,
    reference: f64,
    table: &TimeSeriesTable,
    configure: impl Fn(f64) -> ModelConfig + Sync + Send,
) -> Result<SweepResult> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter(format!("{parameter} grid must be nonempty and strictly increasing")));
    }
    let outcomes = par_map(&grid, |&value| driver::fit(&configure(value), table).map(|(_, r)| r.rmse_validation));
    let mut rmse = Vec::with_capacity(grid.len());
    let mut errors = Vec::with_capacity(grid.len());
    for outcome in outcomes {
        match outcome {
            Ok(e) => {
                rmse.push(e);
                errors.push(None);
            }
            Err(err) => {
                rmse.push(f64::NAN);
                errors.push(Some(err.to_string()));
            }
        }
    }
    let argmin = (0..rmse.len())
        .filter(|&i| rmse[i].is_finite())
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if rmse[b] <= rmse[i] => Some(b),
            _ => Some(i),
        })
        .ok_or_else(|| Error::InsufficientData(format!("every {parameter} sweep point failed")))?;
    Ok(SweepResult { parameter: parameter.into(), grid, rmse, errors, argmin, reference })
}

/// Validation RMSE over `n_grid` values of ω spanning `[0.1·ω_opt, 1]`,
/// each a full refit.
pub fn sweep_omega(
    config: &ModelConfig,
    train: &TimeSeriesTable,
    validation: &TimeSeriesTable,
    omega_opt: f64,
    n_grid: usize,
) -> Result<SweepResult> {
    require_omega(config)?;
    if !(omega_opt > 0.0 && omega_opt <= 1.0) {
        return Err(Error::Parameter(format!("ω_opt must lie in (0, 1], got {omega_opt}")));
    }
    if n_grid < 2 {
        return Err(Error::Parameter(format!("ω grid needs at least 2 points, got {n_grid}")));
    }
    let table = train.concat(validation)?;
    let grid = linspace(0.1 * omega_opt, 1.0, n_grid);
    sweep("omega", grid, omega_opt, &table, |w| ModelConfig {
        omega: OmegaSetting::Fixed(w),
        n_train: train.len(),
        ..config.clone()
    })
}

/// Validation RMSE over memory windows σ, with the node count held fixed.
pub fn sweep_sigma(
    config: &ModelConfig,
    train: &TimeSeriesTable,
    validation: &TimeSeriesTable,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Parameter("σ grid values must be positive".into()));
    }
    let table = train.concat(validation)?;
    sweep("sigma", grid.to_vec(), 1.0, &table, |sigma| ModelConfig { sigma, n_train: train.len(), ..config.clone() })
}
