//! `ddsindy` command line: fit, optimize, sweep, simulate and ingest.
//!
//! Exit codes: 0 success, 2 config, 3 data, 4 numeric.

pub mod config;
pub mod error;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ddsindy::driver::{self, FitReport, ModelConfig, OmegaSetting, SparseModel};
use ddsindy::ingest;
use ddsindy::library::TermSpec;
use ddsindy::optimize::{self, PsoResult, SweepResult};
use ddsindy::synth::{self, KernelSpec, SurrogateSpec};
use ddsindy::TimeSeriesTable;
use serde::Serialize;
use serde_json::json;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ddsindy", version, about = "Sparse identification of distributed-delay kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run config, or a manifest.json to replay.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Canonical input table (overrides `data` in the config).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for objective evaluations and sweeps.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Identify a sparse kernel at fixed ω and σ.
    Fit,
    /// Optimize ω by particle swarm, then fit at ω*.
    Optimize,
    /// Validation-error profiles over ω and/or σ.
    Sweep,
    /// Generate the seasonal surrogate and/or a renewal-equation trajectory.
    Simulate,
    /// Aggregate ISD-lite temperature and monthly cases into one table.
    Ingest {
        /// ISD-lite file (plain or gzip); repeatable.
        #[arg(long)]
        temperature: Vec<PathBuf>,
        /// Monthly case CSV with header `date,cases`.
        #[arg(long)]
        cases: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(written) => {
            for path in written {
                println!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("ddsindy: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns the files it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Some(data) = &cli.common.data {
        config.data = Some(data.clone());
    }
    let out = cli.common.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    config.out = None;

    let job = || -> Result<Vec<PathBuf>, CliError> {
        let mut run = Run { out: out.clone(), written: Vec::new() };
        fs::create_dir_all(&out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
        match &cli.command {
            Command::Fit => cmd_fit(&config, &mut run)?,
            Command::Optimize => cmd_optimize(&config, &mut run)?,
            Command::Sweep => cmd_sweep(&config, &mut run)?,
            Command::Simulate => cmd_simulate(&mut config.clone(), &mut run)?,
            Command::Ingest { temperature, cases } => {
                let mut config = config.clone();
                if !temperature.is_empty() {
                    config.ingest.temperature = temperature.clone();
                }
                if let Some(cases) = cases {
                    config.ingest.cases = Some(cases.clone());
                }
                cmd_ingest(&config, &mut run)?
            }
        }
        Ok(run.written)
    };
    match cli.common.workers {
        Some(0) => Err(CliError::Config("--workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Numeric(format!("cannot start {n} workers: {e}")))?
            .install(job),
        None => job(),
    }
}

struct Run {
    out: PathBuf,
    written: Vec<PathBuf>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn write_table(&mut self, name: &str, table: &TimeSeriesTable) -> Result<(), CliError> {
        let mut buffer = Vec::new();
        ingest::write_table(table, &mut buffer)?;
        self.write(name, &String::from_utf8(buffer).expect("tables are UTF-8"))
    }

    /// The resolved config echo plus seed and version; no paths of the
    /// output directory, no timestamps, no worker count.
    fn manifest(&mut self, command: &str, config: &RunConfig) -> Result<(), CliError> {
        let mut echo = config.clone();
        echo.out = None;
        echo.model = echo.model.explicit();
        echo.pso = echo.pso.explicit();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": config.seed,
            "config": echo,
        });
        self.write_json("manifest.json", &manifest)
    }
}

fn load_data(config: &RunConfig) -> Result<TimeSeriesTable, CliError> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("no input table: pass --data or set `data`".into()))?;
    ingest::read_table_file(path).map_err(|e| match e {
        ddsindy::Error::Io(io) => CliError::Data(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    })
}

fn time_label(table: &TimeSeriesTable, row: usize) -> String {
    match table.month_of(row) {
        Some(month) => month.to_string(),
        None => format!("{}", table.time(row)),
    }
}

fn f64_field(v: f64) -> String {
    format!("{v}")
}

fn write_fit(
    run: &mut Run,
    config: &ModelConfig,
    table: &TimeSeriesTable,
    model: &SparseModel,
    report: &FitReport,
) -> Result<(), CliError> {
    let terms: Vec<_> = model
        .terms
        .iter()
        .zip(&model.xi.xi)
        .map(|(t, c)| json!({ "label": t.label(), "coefficient": c }))
        .collect();
    run.write_json(
        "coefficients.json",
        &json!({
            "target": model.target,
            "omega": model.omega,
            "sigma": model.sigma,
            "quadrature": { "kind": config.quadrature, "nodes": config.nodes },
            "solver": config.solver,
            "terms": terms,
            "rmse": { "training": report.rmse_train, "validation": report.rmse_validation },
        }),
    )?;
    let mut predictions = String::from("t,yhat\n");
    for (row, value) in report.predictions.rows.iter().zip(&report.predictions.values) {
        let _ = writeln!(predictions, "{},{}", time_label(table, *row), f64_field(*value));
    }
    run.write("predictions.csv", &predictions)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    run.write_json(
        "metrics.json",
        &json!({
            "rmse_train": report.rmse_train,
            "rmse_validation": report.rmse_validation,
            "epsilon": report.epsilon,
            "n_train_rows": report.n_train_rows,
            "n_validation_rows": report.n_validation_rows,
            "solver": report.solver,
            "iterations": report.iterations,
            "converged": report.converged,
            "degenerate": report.degenerate,
            "warnings": report.warnings,
        }),
    )
}

fn cmd_fit(config: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let model_config = config.model.resolve();
    if model_config.uses_omega() && model_config.omega == OmegaSetting::Optimize {
        return Err(CliError::Config(
            "model.omega is \"optimize\"; set a number or run `ddsindy optimize`".into(),
        ));
    }
    let table = load_data(config)?;
    let (model, report) = driver::fit(&model_config, &table)?;
    write_fit(run, &model_config, &table, &model, &report)?;
    run.manifest("fit", config)
}

fn write_pso(run: &mut Run, pso: &PsoResult, bounds: (f64, f64)) -> Result<(), CliError> {
    run.write_json(
        "omega.json",
        &json!({
            "omega_star": pso.omega_star,
            "epsilon": pso.best_value,
            "bounds": [bounds.0, bounds.1],
            "iterations": pso.iterations,
            "evaluations": pso.evaluations,
        }),
    )?;
    let mut history = String::from("iteration,best_epsilon,best_omega\n");
    for (i, (value, omega)) in pso.history.iter().zip(&pso.best_positions).enumerate() {
        let _ = writeln!(history, "{i},{},{}", f64_field(*value), f64_field(*omega));
    }
    run.write("pso_history.csv", &history)
}

fn cmd_optimize(config: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let model_config = config.model.resolve();
    let pso = config.pso.resolve(config.seed);
    pso.validate()?;
    model_config.validate()?;
    let table = load_data(config)?;
    let result = optimize::optimize_omega(&model_config, &table, &pso)?;
    write_pso(run, &result.pso, pso.bounds)?;
    let fitted = ModelConfig { omega: OmegaSetting::Fixed(result.pso.omega_star), ..model_config };
    write_fit(run, &fitted, &table, &result.model, &result.report)?;
    run.manifest("optimize", config)
}

fn write_sweep(run: &mut Run, sweep: &SweepResult) -> Result<(), CliError> {
    let mut csv = format!("{},rmse_validation\n", sweep.parameter);
    for (x, e) in sweep.grid.iter().zip(&sweep.rmse) {
        let _ = writeln!(csv, "{},{}", f64_field(*x), f64_field(*e));
    }
    run.write(&format!("sweep_{}.csv", sweep.parameter), &csv)?;
    run.write_json(&format!("sweep_{}.json", sweep.parameter), sweep)
}

fn cmd_sweep(config: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let mut model_config = config.model.resolve();
    model_config.validate()?;
    let do_omega = config.sweep.omega.unwrap_or(model_config.uses_omega());
    let do_sigma = config.sweep.sigma.unwrap_or(true);
    if do_omega && !model_config.uses_omega() {
        return Err(CliError::Config("sweep.omega needs a model with an exp(ω·T) term".into()));
    }
    if !do_omega && !do_sigma {
        return Err(CliError::Config("both sweeps are disabled".into()));
    }
    let table = load_data(config)?;
    if model_config.n_train == 0 || model_config.n_train >= table.len() {
        return Err(CliError::Config(format!(
            "model.n_train must lie in 1..{}, got {}",
            table.len(),
            model_config.n_train
        )));
    }
    let (train, validation) = table.split(model_config.n_train)?;

    if model_config.uses_omega() {
        let omega_opt = match (config.sweep.omega_opt, model_config.omega) {
            (Some(w), _) | (None, OmegaSetting::Fixed(w)) => w,
            (None, OmegaSetting::Optimize) => {
                let pso = config.pso.resolve(config.seed);
                let result = optimize::optimize_omega(&model_config, &table, &pso)?;
                write_pso(run, &result.pso, pso.bounds)?;
                result.pso.omega_star
            }
        };
        model_config.omega = OmegaSetting::Fixed(omega_opt);
        if do_omega {
            let points = config.sweep.omega_points();
            let sweep = optimize::sweep_omega(&model_config, &train, &validation, omega_opt, points)?;
            write_sweep(run, &sweep)?;
        }
    }
    if do_sigma {
        let sweep = optimize::sweep_sigma(&model_config, &train, &validation, &config.sweep.sigma_grid())?;
        write_sweep(run, &sweep)?;
    }
    run.manifest("sweep", config)
}

fn cmd_simulate(config: &mut RunConfig, run: &mut Run) -> Result<(), CliError> {
    if config.surrogate.is_none() && config.renewal.is_none() {
        config.surrogate = Some(SurrogateSpec::default());
    }
    if let Some(spec) = &config.surrogate {
        let spec = SurrogateSpec { seed: config.seed, ..spec.clone() };
        let table = synth::generate_surrogate(&spec)?;
        run.write_table("surrogate.csv", &table)?;
    }
    if let Some(section) = &config.renewal {
        let terms = section
            .terms
            .iter()
            .map(|(label, c)| Ok((TermSpec::from_label(label)?, *c)))
            .collect::<ddsindy::Result<Vec<_>>>()
            .map_err(|e| CliError::Config(format!("renewal.terms: {e}")))?;
        if let Some(name) = terms.iter().flat_map(|(t, _)| t.columns()).find(|c| *c != "x") {
            return Err(CliError::Config(format!("renewal.terms: the only state is `x`, found `{name}`")));
        }
        let kernel = KernelSpec::new(terms, section.sigma, section.omega)?;
        let history = match &section.history {
            config::History::Samples(values) => values.clone(),
            config::History::Constant(value) => {
                let n = (section.sigma / section.dt - 1e-9).ceil().max(1.0) as usize + 1;
                vec![*value; n]
            }
        };
        let table = synth::simulate_re(&kernel, &history, section.horizon, section.dt)?;
        run.write_table("renewal.csv", &table)?;
    }
    run.manifest("simulate", config)
}

fn read_isd(path: &Path) -> Result<ingest::IsdParse, CliError> {
    ingest::read_isdlite_file(path).map_err(|e| match e {
        ddsindy::Error::Io(io) => CliError::Data(format!("cannot read {}: {io}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn cmd_ingest(config: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let section = &config.ingest;
    if section.temperature.is_empty() {
        return Err(CliError::Config("no temperature files: pass --temperature or set ingest.temperature".into()));
    }
    let cases_path = section
        .cases
        .as_ref()
        .ok_or_else(|| CliError::Config("no case file: pass --cases or set ingest.cases".into()))?;

    use rayon::prelude::*;
    let parsed = section.temperature.par_iter().map(|p| read_isd(p)).collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    for (path, parse) in section.temperature.iter().zip(parsed) {
        if !parse.malformed.is_empty() {
            eprintln!("warning: {}: skipped {} malformed lines", path.display(), parse.malformed.len());
        }
        records.extend(parse.records);
    }
    let temperature = ingest::monthly_mean(&records, section.min_coverage.unwrap_or(0.5))?;
    let cases = ingest::load_cases_file(cases_path).map_err(|e| match e {
        ddsindy::Error::Io(io) => CliError::Data(format!("cannot read {}: {io}", cases_path.display())),
        other => CliError::Data(format!("{}: {other}", cases_path.display())),
    })?;
    let table = ingest::align(&[("C".to_string(), cases), ("T".to_string(), temperature)])?;
    run.write_table("table.csv", &table)?;
    run.manifest("ingest", config)
}
