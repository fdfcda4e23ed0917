//! Plain-Rust bodies of the browser operations. Each takes scalar inputs and
//! returns a JSON document, or a readable error string for the page to show.

use ddsindy::driver::{fit, ModelConfig, Preset};
use ddsindy::optimize::{default_sigma_grid, sweep_omega, sweep_sigma};
use ddsindy::synth::{generate_surrogate, SurrogateSpec};
use ddsindy::{QuadratureKind, QuadratureRule, TimeSeriesTable};
use serde::Serialize;

type Json = Result<String, String>;

fn to_json(value: &impl Serialize) -> Json {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RuleOut {
    kind: String,
    sigma: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Error of `∫₀^σ eˢ ds` for K = 2..=k_max under each rule.
    convergence: Vec<ConvergenceRow>,
}

#[derive(Serialize)]
struct ConvergenceRow {
    k: usize,
    rectangle: f64,
    trapezoid: f64,
    clenshaw_curtis: f64,
}

/// Nodes and weights of one rule, plus an error table for all three rules.
pub fn quadrature(kind: &str, k: usize, sigma: f64, k_max: usize) -> Json {
    let kind: QuadratureKind = kind.parse().map_err(|e: ddsindy::Error| e.to_string())?;
    let rule = QuadratureRule::new(kind, k, sigma).map_err(|e| e.to_string())?;
    let exact = sigma.exp() - 1.0;
    let error = |kind, k| QuadratureRule::new(kind, k, sigma).map(|r| (r.integrate(f64::exp) - exact).abs());
    let convergence = (2..=k_max.clamp(2, 400))
        .map(|k| {
            Ok(ConvergenceRow {
                k,
                rectangle: error(QuadratureKind::Rectangle, k)?,
                trapezoid: error(QuadratureKind::Trapezoid, k)?,
                clenshaw_curtis: error(QuadratureKind::ClenshawCurtis, k)?,
            })
        })
        .collect::<ddsindy::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    to_json(&RuleOut { kind: kind.to_string(), sigma, nodes: rule.nodes().to_vec(), weights: rule.weights().to_vec(), convergence })
}

fn surrogate(seed: u64, noise_sd: f64) -> Result<(SurrogateSpec, TimeSeriesTable), String> {
    let spec = SurrogateSpec { seed, noise_sd, ..SurrogateSpec::default() };
    let table = generate_surrogate(&spec).map_err(|e| e.to_string())?;
    Ok((spec, table))
}

#[derive(Serialize)]
struct FitOut {
    labels: Vec<String>,
    xi: Vec<f64>,
    alpha_n_true: f64,
    alpha_a_true: f64,
    rmse_train: f64,
    rmse_validation: f64,
    n_train_rows: usize,
    times: Vec<f64>,
    observed: Vec<f64>,
    predicted: Vec<f64>,
}

/// Simulate the tick-borne surrogate and fit the tick-augmented model at a
/// chosen ω and memory window σ.
pub fn surrogate_fit(seed: u64, noise_sd: f64, omega: f64, sigma: f64) -> Json {
    let (spec, table) = surrogate(seed, noise_sd)?;
    let config = ModelConfig { sigma, ..ModelConfig::preset(Preset::DdExpTina) }.with_omega(omega);
    let (model, report) = fit(&config, &table).map_err(|e| e.to_string())?;
    let y = table.column("C").map_err(|e| e.to_string())?;
    to_json(&FitOut {
        labels: model.labels(),
        xi: model.xi.xi.clone(),
        alpha_n_true: spec.alpha_n,
        alpha_a_true: spec.alpha_a,
        rmse_train: report.rmse_train,
        rmse_validation: report.rmse_validation,
        n_train_rows: report.n_train_rows,
        times: report.predictions.times.clone(),
        observed: report.predictions.rows.iter().map(|&r| y[r]).collect(),
        predicted: report.predictions.values,
    })
}

/// Validation RMSE across ω (15 points on `[0.1·ω_ref, 1]`) or across the
/// default σ grid, on a freshly simulated surrogate.
pub fn sweep(parameter: &str, seed: u64, noise_sd: f64, omega_ref: f64) -> Json {
    let (_, table) = surrogate(seed, noise_sd)?;
    let config = ModelConfig::preset(Preset::DdExpTina).with_omega(omega_ref);
    let (train, validation) = table.split(config.n_train).map_err(|e| e.to_string())?;
    let result = match parameter {
        "omega" => sweep_omega(&config, &train, &validation, omega_ref, 15),
        "sigma" => sweep_sigma(&config, &train, &validation, &default_sigma_grid()),
        other => return Err(format!("unknown sweep parameter `{other}`")),
    }
    .map_err(|e| e.to_string())?;
    to_json(&result)
}
