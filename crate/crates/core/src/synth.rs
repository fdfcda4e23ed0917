//! Ground truth: a brute-force integral oracle, a forward renewal-equation
//! solver, and a seasonal surrogate of cases, temperature and infected
//! tick abundance.
//!
//! Nothing here goes through [`crate::library`]; the oracle interpolates
//! and integrates on its own so that it can check the pipeline.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::TermSpec;
use crate::rng::substream;
use crate::timeseries::{TimeSeriesTable, YearMonth};

/// A concrete kernel `g(s, X) = Σ c_j · term_j(s, X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub terms: Vec<(TermSpec, f64)>,
    pub sigma: f64,
    pub omega: Option<f64>,
}

impl KernelSpec {
    pub fn new(terms: Vec<(TermSpec, f64)>, sigma: f64, omega: Option<f64>) -> Result<Self> {
        let kernel = KernelSpec { terms, sigma, omega };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!("kernel window must be positive, got {}", self.sigma)));
        }
        for (term, c) in &self.terms {
            if !c.is_finite() {
                return Err(Error::Parameter(format!("coefficient of `{}` is not finite", term.label())));
            }
            if term.activity.is_some() && self.omega.is_none() {
                return Err(Error::Parameter(format!("`{}` needs ω", term.label())));
            }
        }
        Ok(())
    }

    /// `g(s, X)` with `lookup(name)` giving the state value of a column.
    pub fn value(&self, s: f64, lookup: &mut impl FnMut(&str) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (term, c) in &self.terms {
            let mut v = s.powi(term.delay_power as i32);
            for (name, q) in &term.factors {
                v *= lookup(name)?.powi(*q as i32);
            }
            if let Some(name) = &term.activity {
                v *= (self.omega.unwrap_or(0.0) * lookup(name)?).exp();
            }
            total += c * v;
        }
        Ok(total)
    }
}

/// Linear interpolation of samples `values` on the grid `t0 + i·dt`.
fn sample_at(values: &[f64], t0: f64, dt: f64, t: f64) -> f64 {
    let x = (t - t0) / dt;
    let last = values.len() - 1;
    if x <= 0.0 {
        return values[0];
    }
    if x >= last as f64 {
        return values[last];
    }
    let i = x.floor() as usize;
    let f = x - i as f64;
    if f == 0.0 {
        values[i]
    } else {
        (1.0 - f) * values[i] + f * values[i + 1]
    }
}

/// `∫₀^σ g(a, X(t − a)) da` by a composite trapezoid with `resolution`
/// subintervals over piecewise-linear data.
pub fn oracle_integral(kernel: &KernelSpec, table: &TimeSeriesTable, t: f64, resolution: usize) -> Result<f64> {
    kernel.validate()?;
    if resolution < 1000 {
        return Err(Error::Parameter(format!("oracle resolution must be >= 1000, got {resolution}")));
    }
    let (t0, dt) = (table.t0(), table.dt());
    let slack = 1e-9 * dt;
    let t_end = table.time(table.len() - 1);
    if t - kernel.sigma < t0 - slack || t > t_end + slack {
        return Err(Error::Parameter(format!(
            "t = {t} with window {} leaves the sampled range [{t0}, {t_end}]",
            kernel.sigma
        )));
    }
    let mut columns: Vec<(&str, &[f64])> = Vec::new();
    for (term, _) in &kernel.terms {
        for name in term.columns() {
            if !columns.iter().any(|(n, _)| *n == name) {
                columns.push((name, table.column(name)?));
            }
        }
    }
    let h = kernel.sigma / resolution as f64;
    let mut sum = 0.0;
    for k in 0..=resolution {
        let a = if k == resolution { kernel.sigma } else { k as f64 * h };
        let time = (t - a).max(t0);
        let mut lookup = |name: &str| {
            let (_, values) = columns.iter().find(|(n, _)| *n == name).expect("collected above");
            Ok(sample_at(values, t0, dt, time))
        };
        let g = kernel.value(a, &mut lookup)?;
        sum += if k == 0 || k == resolution { 0.5 * g } else { g };
    }
    Ok(sum * h)
}

/// Parameters of the seasonal surrogate. Magnitudes are placeholders with
/// no claim of ecological realism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSpec {
    pub years: usize,
    /// Not read from config files; runs pass their top-level seed.
    #[serde(skip)]
    pub seed: u64,
    pub start_year: i32,
    /// °C
    pub temp_mean: f64,
    pub temp_amplitude: f64,
    /// Months the nymph pulse peaks before the temperature peak.
    pub tick_phase_lag: f64,
    /// Months the adult pulse peaks before the nymph pulse.
    pub adult_phase_offset: f64,
    pub nymph_amplitude: f64,
    pub adult_amplitude: f64,
    /// Von Mises concentration of the seasonal pulses.
    pub pulse_concentration: f64,
    /// Log-sd of the year-to-year pulse size.
    pub interannual_sd: f64,
    /// Log-sd and autocorrelation of month-to-month pulse variation.
    pub monthly_sd: f64,
    pub monthly_rho: f64,
    #[serde(rename = "alpha_N")]
    pub alpha_n: f64,
    #[serde(rename = "alpha_A")]
    pub alpha_a: f64,
    pub omega_true: f64,
    pub sigma_true: f64,
    /// Sd of the additive case noise, truncated at zero.
    pub noise_sd: f64,
    /// Draw cases as Poisson counts around the clean signal instead.
    pub poisson_counts: bool,
    /// Subintervals of the case-integral oracle.
    pub resolution: usize,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec {
            years: 12,
            seed: 0,
            start_year: 2011,
            temp_mean: 10.0,
            temp_amplitude: 15.0,
            tick_phase_lag: 4.0,
            adult_phase_offset: 3.0,
            nymph_amplitude: 100.0,
            adult_amplitude: 60.0,
            pulse_concentration: 0.6,
            interannual_sd: 0.5,
            monthly_sd: 0.3,
            monthly_rho: 0.7,
            alpha_n: 0.02,
            alpha_a: 0.05,
            omega_true: 0.05,
            sigma_true: 1.0,
            noise_sd: 0.0,
            poisson_counts: false,
            resolution: 1000,
        }
    }
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.years < 2 {
            return Err(Error::Parameter(format!("surrogate needs at least 2 years, got {}", self.years)));
        }
        let nonneg = [
            ("noise_sd", self.noise_sd),
            ("nymph_amplitude", self.nymph_amplitude),
            ("adult_amplitude", self.adult_amplitude),
            ("pulse_concentration", self.pulse_concentration),
            ("interannual_sd", self.interannual_sd),
            ("monthly_sd", self.monthly_sd),
        ];
        for (name, value) in nonneg {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::Parameter(format!("{name} must be >= 0, got {value}")));
            }
        }
        if !(self.monthly_rho.abs() < 1.0) {
            return Err(Error::Parameter(format!("monthly_rho must lie in (-1, 1), got {}", self.monthly_rho)));
        }
        if !(self.sigma_true > 0.0) || self.sigma_true > 24.0 {
            return Err(Error::Parameter(format!("sigma_true must lie in (0, 24], got {}", self.sigma_true)));
        }
        for (name, value) in [
            ("temp_mean", self.temp_mean),
            ("temp_amplitude", self.temp_amplitude),
            ("tick_phase_lag", self.tick_phase_lag),
            ("adult_phase_offset", self.adult_phase_offset),
            ("alpha_N", self.alpha_n),
            ("alpha_A", self.alpha_a),
            ("omega_true", self.omega_true),
        ] {
            if !value.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite")));
            }
        }
        if self.resolution < 1000 {
            return Err(Error::Parameter(format!("resolution must be >= 1000, got {}", self.resolution)));
        }
        Ok(())
    }

    /// `α_N·e^{ωT}·I_Nq + α_A·e^{ωT}·I_Aq` on `[0, σ_true]`.
    pub fn kernel(&self) -> KernelSpec {
        KernelSpec {
            terms: vec![
                (TermSpec::exp_activity_times("T", "I_Nq"), self.alpha_n),
                (TermSpec::exp_activity_times("T", "I_Aq"), self.alpha_a),
            ],
            sigma: self.sigma_true,
            omega: Some(self.omega_true),
        }
    }
}

fn standard_normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Piecewise-linear through `(xs, ys)`, held constant outside.
fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let f = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + f * (ys[i + 1] - ys[i])
}

/// Seasonal tick pulse: yearly and AR(1) monthly lognormal modulation of a
/// von Mises bump peaking at month `peak`.
fn tick_pulse(spec: &SurrogateSpec, stream: &str, amplitude: f64, peak: f64, times: &[f64]) -> Vec<f64> {
    let mut rng = substream(spec.seed, stream);
    let n_years = spec.years + 2;
    let yearly: Vec<f64> = standard_normals(&mut rng, n_years).iter().map(|z| (spec.interannual_sd * z).exp()).collect();
    let centres: Vec<f64> = (0..n_years).map(|k| 12.0 * k as f64 - 12.0 + 5.5).collect();
    let shocks = standard_normals(&mut rng, times.len());
    let innovation = (1.0 - spec.monthly_rho * spec.monthly_rho).sqrt();
    let mut z = 0.0;
    times
        .iter()
        .zip(&shocks)
        .enumerate()
        .map(|(i, (&t, e))| {
            if i > 0 {
                z = spec.monthly_rho * z + innovation * e;
            }
            let modulation = interp_clamped(&centres, &yearly, t) * (spec.monthly_sd * z).exp();
            let season = (spec.pulse_concentration * ((2.0 * PI * (t - peak) / 12.0).cos() - 1.0)).exp();
            amplitude * modulation * season
        })
        .collect()
}

/// Monthly calendar table with columns `C`, `T`, `I_Nq`, `I_Aq`.
///
/// A short burn-in before the first month supplies the case integral's
/// history and is dropped from the output.
pub fn generate_surrogate(spec: &SurrogateSpec) -> Result<TimeSeriesTable> {
    spec.validate()?;
    let burn_in = (spec.sigma_true.ceil() as usize + 1).max(4);
    let n = 12 * spec.years + burn_in;
    let times: Vec<f64> = (0..n).map(|i| i as f64 - burn_in as f64).collect();

    let temperature: Vec<f64> = times
        .iter()
        .map(|t| spec.temp_mean + spec.temp_amplitude * (2.0 * PI * (t - 4.0) / 12.0).sin())
        .collect();
    let nymph_peak = 7.0 - spec.tick_phase_lag;
    let adult_peak = nymph_peak - spec.adult_phase_offset;
    let nymphs = tick_pulse(spec, "ticks_nymph", spec.nymph_amplitude, nymph_peak, &times);
    let adults = tick_pulse(spec, "ticks_adult", spec.adult_amplitude, adult_peak, &times);

    let full = TimeSeriesTable::new(
        vec![("T", temperature), ("I_Nq", nymphs), ("I_Aq", adults)],
        times[0],
        1.0,
    )?;
    let kernel = spec.kernel();
    let mut cases = Vec::with_capacity(12 * spec.years);
    for &t in &times[burn_in..] {
        cases.push(oracle_integral(&kernel, &full, t, spec.resolution)?);
    }

    if spec.poisson_counts {
        let mut rng = substream(spec.seed, "case_counts");
        for c in cases.iter_mut() {
            *c = if *c > 0.0 {
                Poisson::new(*c).map_err(|e| Error::Parameter(e.to_string()))?.sample(&mut rng)
            } else {
                0.0
            };
        }
    } else if spec.noise_sd > 0.0 {
        let mut rng = substream(spec.seed, "case_noise");
        for c in cases.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c = (*c + spec.noise_sd * z).max(0.0);
        }
    }

    let keep = |name: &str| full.column(name).map(|v| v[burn_in..].to_vec());
    TimeSeriesTable::monthly(
        vec![("C", cases), ("T", keep("T")?), ("I_Nq", keep("I_Nq")?), ("I_Aq", keep("I_Aq")?)],
        YearMonth::new(spec.start_year, 1)?,
    )
}

/// Forward solution of `x(t) = ∫₀^σ g(a, x(t − a)) da` for one state
/// column `x`, by the trapezoid rule on `ceil(σ/dt) + 1` nodes.
///
/// `history` samples `x` on `[−σ, 0]` at spacing `dt` and ends at `t = 0`.
/// The `s = 0` node makes every step implicit; it is resolved by fixed
/// point iteration to 10⁻¹². The returned table starts at `t = 0`.
pub fn simulate_re(kernel: &KernelSpec, history: &[f64], horizon: f64, dt: f64) -> Result<TimeSeriesTable> {
    kernel.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Parameter(format!("horizon must be >= 0, got {horizon}")));
    }
    for (term, _) in &kernel.terms {
        if let Some(name) = term.columns().find(|c| *c != "x") {
            return Err(Error::Schema(format!("simulate_re has a single state `x`; term reads `{name}`")));
        }
    }
    let covered = (history.len().saturating_sub(1)) as f64 * dt;
    if history.len() < 2 || covered < kernel.sigma * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(format!(
            "history covers {covered} but the window is {}",
            kernel.sigma
        )));
    }
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("history has non-finite values".into()));
    }

    let ratio = kernel.sigma / dt;
    let k = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) { ratio.round() } else { ratio.ceil() };
    let rule = crate::quadrature::QuadratureRule::trapezoid(k as usize + 1, kernel.sigma)?;
    let steps = (horizon / dt + 1e-9).floor() as usize;

    let mut series = history.to_vec();
    let origin = series.len() - 1;
    for step in 1..=steps {
        let p = origin + step;
        let guess = series[p - 1];
        series.push(guess);
        let apply = |series: &[f64]| -> Result<f64> {
            let mut total = 0.0;
            for (s, w) in rule.iter() {
                let x = sample_at(series, 0.0, dt, p as f64 * dt - s);
                total += w * kernel.value(s, &mut |_| Ok(x))?;
            }
            Ok(total)
        };
        let mut first_change = None;
        let mut converged = false;
        for iteration in 0..1000 {
            let next = apply(&series)?;
            let change = (next - series[p]).abs();
            series[p] = next;
            if !next.is_finite() {
                return Err(Error::Stability(format!("fixed-point iteration diverged at step {step}")));
            }
            if change <= 1e-12 * next.abs().max(1.0) {
                converged = true;
                break;
            }
            let first = *first_change.get_or_insert(change);
            if iteration >= 100 && change > first {
                return Err(Error::Stability(format!(
                    "fixed-point iteration is not contracting at step {step}"
                )));
            }
        }
        if !converged {
            return Err(Error::Stability(format!("fixed-point iteration stalled at step {step}")));
        }
    }
    TimeSeriesTable::new(vec![("x", series[origin..].to_vec())], 0.0, dt)
}
