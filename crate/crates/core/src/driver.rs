//! End-to-end identification: quadrature → shifted data → library →
//! sparse regression → validation.
//!
//! The regression target is the raw target column `y(t_i)` on the valid
//! training rows; nothing is differentiated. Validation rows are predicted
//! from observed history, so they see the training data across the split.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{self, LibraryEvaluator, TermSpec};
use crate::quadrature::{QuadratureKind, QuadratureRule};
use crate::regression::{self, SparseCoefficients, SolverKind};
use crate::timeseries::TimeSeriesTable;

/// The three model forms: cases from cases and temperature, the same with
/// an outdoor-activity term, and the tick-augmented form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Dd,
    DdExp,
    DdExpTina,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dd" => Ok(Preset::Dd),
            "dd_exp" => Ok(Preset::DdExp),
            "dd_exp_tina" => Ok(Preset::DdExpTina),
            other => Err(Error::Parameter(format!("unknown preset `{other}`"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Dd => "dd",
            Preset::DdExp => "dd_exp",
            Preset::DdExpTina => "dd_exp_tina",
        })
    }
}

/// ω is either pinned or left to the external optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaSetting {
    Fixed(f64),
    Optimize,
}

impl OmegaSetting {
    pub fn value(self) -> Option<f64> {
        match self {
            OmegaSetting::Fixed(w) => Some(w),
            OmegaSetting::Optimize => None,
        }
    }
}

impl Serialize for OmegaSetting {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OmegaSetting::Fixed(w) => serializer.serialize_f64(*w),
            OmegaSetting::Optimize => serializer.serialize_str("optimize"),
        }
    }
}

impl<'de> Deserialize<'de> for OmegaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(w) => Ok(OmegaSetting::Fixed(w)),
            Raw::Text(s) if s == "optimize" => Ok(OmegaSetting::Optimize),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("omega must be a number or \"optimize\", got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverConfig {
    Plain,
    Stls {
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_iter: Option<usize>,
    },
    Lasso {
        lambda: f64,
        #[serde(default = "default_lasso_tol")]
        tol: f64,
        #[serde(default = "default_lasso_iter")]
        max_iter: usize,
    },
}

fn default_lasso_tol() -> f64 {
    1e-8
}

fn default_lasso_iter() -> usize {
    100_000
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::Stls { threshold: 1e-10, max_iter: None }
    }
}

impl SolverConfig {
    pub fn solve(&self, theta: &DMatrix<f64>, y: &DVector<f64>) -> Result<SparseCoefficients> {
        match *self {
            SolverConfig::Plain => regression::least_squares(theta, y),
            SolverConfig::Stls { threshold, max_iter } => regression::stls(theta, y, threshold, max_iter),
            SolverConfig::Lasso { lambda, tol, max_iter } => regression::lasso(theta, y, lambda, tol, max_iter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// State columns; the first is the regression target.
    pub columns: Vec<String>,
    pub degree: u32,
    pub include_delay_terms: bool,
    pub include_constant: bool,
    /// Whether the target's own lagged history enters the library.
    pub target_history: bool,
    pub include_exp_activity: bool,
    pub temperature_column: String,
    /// Columns `x` that get an `exp(ω·T)·x` term.
    pub exp_interactions: Vec<String>,
    pub omega: OmegaSetting,
    pub sigma: f64,
    pub quadrature: QuadratureKind,
    pub nodes: usize,
    pub solver: SolverConfig,
    pub n_train: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::preset(Preset::Dd)
    }
}

impl ModelConfig {
    pub fn preset(preset: Preset) -> Self {
        let strings = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let base = ModelConfig {
            columns: strings(&["C", "T"]),
            degree: 1,
            include_delay_terms: false,
            include_constant: true,
            target_history: true,
            include_exp_activity: false,
            temperature_column: "T".into(),
            exp_interactions: Vec::new(),
            omega: OmegaSetting::Optimize,
            sigma: 1.0,
            quadrature: QuadratureKind::Trapezoid,
            nodes: 100,
            solver: SolverConfig::default(),
            n_train: 96,
        };
        match preset {
            Preset::Dd => base,
            Preset::DdExp => ModelConfig { include_exp_activity: true, ..base },
            Preset::DdExpTina => ModelConfig {
                columns: strings(&["C", "T", "I_Nq", "I_Aq"]),
                include_exp_activity: true,
                exp_interactions: strings(&["I_Nq", "I_Aq"]),
                ..base
            },
        }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = OmegaSetting::Fixed(omega);
        self
    }

    pub fn target(&self) -> Result<&str> {
        self.columns
            .first()
            .map(String::as_str)
            .ok_or_else(|| Error::Parameter("model needs at least one column".into()))
    }

    pub fn uses_omega(&self) -> bool {
        self.include_exp_activity || !self.exp_interactions.is_empty()
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        QuadratureRule::new(self.quadrature, self.nodes, self.sigma)
    }

    /// Library terms in column order.
    pub fn terms(&self) -> Result<Vec<TermSpec>> {
        self.target()?;
        let library_columns = if self.target_history { &self.columns[..] } else { &self.columns[1..] };
        let mut terms = library::polynomial_terms(library_columns, self.degree, self.include_delay_terms);
        if !self.include_constant {
            terms.retain(|t| !t.is_constant());
        }
        if self.include_exp_activity {
            terms = library::add_exp_activity(terms, &self.temperature_column)?;
        }
        terms = library::add_exp_interactions(terms, &self.temperature_column, &self.exp_interactions)?;
        if terms.is_empty() {
            return Err(Error::Parameter("model library is empty".into()));
        }
        Ok(terms)
    }

    pub fn validate(&self) -> Result<()> {
        self.target()?;
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if let OmegaSetting::Fixed(w) = self.omega {
            if !w.is_finite() {
                return Err(Error::Parameter(format!("omega must be finite, got {w}")));
            }
        }
        self.rule()?;
        self.terms()?;
        Ok(())
    }
}

/// Identified model; predictions depend only on these fields and the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    pub terms: Vec<TermSpec>,
    pub xi: SparseCoefficients,
    pub omega: Option<f64>,
    pub sigma: f64,
    pub rule: QuadratureRule,
    pub target: String,
}

impl SparseModel {
    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(TermSpec::label).collect()
    }

    /// Coefficient of the term with `label`, if present.
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.terms.iter().position(|t| t.label() == label).map(|j| self.xi.xi[j])
    }
}

/// Values on the valid rows of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub rows: Vec<usize>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub rmse_train: f64,
    pub rmse_validation: f64,
    /// `‖y − Θξ‖₂` over the training rows.
    pub epsilon: f64,
    /// ŷ on every valid row, training rows first.
    pub predictions: Prediction,
    /// `y − ŷ` on the same rows.
    pub residuals: Vec<f64>,
    pub n_train_rows: usize,
    pub n_validation_rows: usize,
    pub solver: SolverKind,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// `Θξ` with a fixed summation order per row.
fn apply(theta: &DMatrix<f64>, xi: &[f64]) -> Vec<f64> {
    (0..theta.nrows())
        .map(|i| xi.iter().enumerate().fold(0.0, |acc, (j, x)| acc + theta[(i, j)] * x))
        .collect()
}

/// One configuration prepared on one table: the shifted data are computed
/// once, so refitting at many ω is cheap.
#[derive(Debug, Clone)]
pub struct FitContext {
    config: ModelConfig,
    terms: Vec<TermSpec>,
    evaluator: LibraryEvaluator,
    target: Vec<f64>,
    /// Number of leading evaluator rows that are training rows.
    n_train_rows: usize,
}

impl FitContext {
    /// Training on rows `< config.n_train`, validating on the rest.
    pub fn new(config: &ModelConfig, table: &TimeSeriesTable) -> Result<Self> {
        if config.n_train == 0 || config.n_train >= table.len() {
            return Err(Error::Parameter(format!(
                "n_train must lie in 1..{}, got {}",
                table.len(),
                config.n_train
            )));
        }
        Self::build(config, table, config.n_train)
    }

    /// Every row is a training row.
    pub fn training_only(config: &ModelConfig, train: &TimeSeriesTable) -> Result<Self> {
        Self::build(config, train, train.len())
    }

    fn build(config: &ModelConfig, table: &TimeSeriesTable, n_train: usize) -> Result<Self> {
        config.validate()?;
        let terms = config.terms()?;
        for name in &config.columns {
            table.column(name)?;
        }
        let target = table.column(config.target()?)?.to_vec();
        let evaluator = LibraryEvaluator::for_terms(table, &config.rule()?, &terms)?;
        let n_train_rows = evaluator.rows().iter().take_while(|&&r| r < n_train).count();
        if n_train_rows == 0 {
            return Err(Error::InsufficientData(format!(
                "no training row among the first {n_train} has a full window of {} months",
                config.sigma
            )));
        }
        Ok(FitContext { config: config.clone(), terms, evaluator, target, n_train_rows })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn terms(&self) -> &[TermSpec] {
        &self.terms
    }

    fn omega(&self, omega: Option<f64>) -> Result<Option<f64>> {
        if !self.config.uses_omega() {
            return Ok(None);
        }
        match omega.or(self.config.omega.value()) {
            Some(w) => Ok(Some(w)),
            None => Err(Error::Parameter(
                "the library has an exp(ω·T) term; give ω or use the optimizer".into(),
            )),
        }
    }

    fn train_target(&self) -> DVector<f64> {
        let rows = &self.evaluator.rows()[..self.n_train_rows];
        DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.target[r]))
    }

    fn regress(&self, theta: &DMatrix<f64>) -> Result<SparseCoefficients> {
        let train = theta.rows(0, self.n_train_rows).into_owned();
        self.config.solver.solve(&train, &self.train_target())
    }

    /// Training reconstruction residual `‖y − Θ(ω)Ξ(ω)‖₂`.
    pub fn epsilon(&self, omega: f64) -> Result<f64> {
        let omega = self.omega(Some(omega))?;
        let theta = self.evaluator.design_head(&self.terms, omega, self.n_train_rows)?;
        let xi = self.regress(&theta)?;
        let y = self.train_target();
        let yhat = apply(&theta, &xi.xi);
        Ok(y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    /// Fits at `omega` (or the configured value when `None`).
    pub fn fit(&self, omega: Option<f64>) -> Result<(SparseModel, FitReport)> {
        let omega = self.omega(omega)?;
        let theta = self.evaluator.design(&self.terms, omega)?;
        let xi = self.regress(&theta)?;
        let yhat = apply(&theta, &xi.xi);
        let rows = self.evaluator.rows().to_vec();
        let observed: Vec<f64> = rows.iter().map(|&r| self.target[r]).collect();
        let residuals: Vec<f64> = observed.iter().zip(&yhat).map(|(y, f)| y - f).collect();
        let split = self.n_train_rows;
        let rmse_train = rmse(&observed[..split], &yhat[..split])?;
        let rmse_validation =
            if split < rows.len() { rmse(&observed[split..], &yhat[split..])? } else { f64::NAN };
        let epsilon = residuals[..split].iter().map(|r| r * r).sum::<f64>().sqrt();

        let mut warnings = Vec::new();
        if xi.degenerate {
            warnings.push("every coefficient was thresholded to zero".to_string());
        }
        if !xi.converged {
            warnings.push(format!("{} solver did not converge in {} iterations", xi.solver, xi.iterations));
        }
        if split < self.terms.len() {
            warnings.push(format!("{} training rows for {} library terms", split, self.terms.len()));
        }
        if !rmse_train.is_finite() || (split < rows.len() && !rmse_validation.is_finite()) {
            return Err(Error::Stability("fit produced a non-finite error".into()));
        }

        let report = FitReport {
            rmse_train,
            rmse_validation,
            epsilon,
            predictions: Prediction { times: self.evaluator.row_times().to_vec(), rows, values: yhat },
            residuals,
            n_train_rows: split,
            n_validation_rows: self.evaluator.rows().len() - split,
            solver: xi.solver,
            iterations: xi.iterations,
            converged: xi.converged,
            degenerate: xi.degenerate,
            warnings,
        };
        let model = SparseModel {
            terms: self.terms.clone(),
            xi,
            omega,
            sigma: self.config.sigma,
            rule: self.evaluator.rule().clone(),
            target: self.config.target()?.to_string(),
        };
        Ok((model, report))
    }
}

/// Fits on rows `< n_train` of `table` and validates on the rest.
pub fn fit(config: &ModelConfig, table: &TimeSeriesTable) -> Result<(SparseModel, FitReport)> {
    FitContext::new(config, table)?.fit(None)
}

/// ŷ on every valid row of `table`, through the same design-matrix path
/// as [`fit`].
pub fn predict(model: &SparseModel, table: &TimeSeriesTable) -> Result<Prediction> {
    if model.xi.len() != model.terms.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} terms",
            model.xi.len(),
            model.terms.len()
        )));
    }
    let evaluator = LibraryEvaluator::for_terms(table, &model.rule, &model.terms)?;
    let theta = evaluator.design(&model.terms, model.omega)?;
    Ok(Prediction {
        rows: evaluator.rows().to_vec(),
        times: evaluator.row_times().to_vec(),
        values: apply(&theta, &model.xi.xi),
    })
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension(format!("{} observations vs {} predictions", y.len(), yhat.len())));
    }
    if y.is_empty() {
        return Err(Error::Parameter("RMSE of an empty vector".into()));
    }
    let sum: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / y.len() as f64).sqrt())
}
