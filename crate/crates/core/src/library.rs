//! Candidate kernel terms and the quadrature-weighted design matrix
//!
//! ```text
//! Θ[i][j] = Σ_k w_k · term_j(s_k, X(t_i − s_k))
//! ```
//!
//! Terms are symbolic ([`TermSpec`]); the activity exponent ω of
//! `exp(ω·T)` stays a free symbol until [`evaluate`] is called with a value.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::timeseries::TimeSeriesTable;

/// Name of the delay variable in term labels.
pub const DELAY_SYMBOL: &str = "s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// `s^q0 · Π x_j^qj`
    Monomial,
    /// `exp(ω·T(t−s)) · s^q0 · Π x_j^qj`
    ExpActivity,
    /// Reserved for user-supplied basis functions; not evaluable.
    Custom,
}

/// One symbolic basis function of the kernel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermSpec {
    pub kind: TermKind,
    /// Exponent of the delay variable `s`.
    pub delay_power: u32,
    /// Nonzero exponents of state columns, in library column order.
    pub factors: Vec<(String, u32)>,
    /// Temperature column inside `exp(ω·T)`, for [`TermKind::ExpActivity`].
    pub activity: Option<String>,
}

impl TermSpec {
    pub fn constant() -> Self {
        TermSpec { kind: TermKind::Monomial, delay_power: 0, factors: Vec::new(), activity: None }
    }

    /// Monomial with the given delay exponent and column exponents; zero
    /// exponents are dropped.
    pub fn monomial<S: Into<String>>(delay_power: u32, factors: impl IntoIterator<Item = (S, u32)>) -> Self {
        TermSpec {
            kind: TermKind::Monomial,
            delay_power,
            factors: factors
                .into_iter()
                .map(|(name, q)| (name.into(), q))
                .filter(|(_, q)| *q > 0)
                .collect(),
            activity: None,
        }
    }

    /// Single state column to the first power.
    pub fn state(name: &str) -> Self {
        Self::monomial(0, [(name, 1)])
    }

    /// `exp(ω·temperature)`.
    pub fn exp_activity(temperature: &str) -> Self {
        TermSpec {
            kind: TermKind::ExpActivity,
            delay_power: 0,
            factors: Vec::new(),
            activity: Some(temperature.to_string()),
        }
    }

    /// `exp(ω·temperature) · column`.
    pub fn exp_activity_times(temperature: &str, column: &str) -> Self {
        TermSpec { factors: vec![(column.to_string(), 1)], ..Self::exp_activity(temperature) }
    }

    pub fn is_constant(&self) -> bool {
        self.kind == TermKind::Monomial && self.delay_power == 0 && self.factors.is_empty()
    }

    /// Total polynomial degree, delay variable included.
    pub fn degree(&self) -> u32 {
        self.delay_power + self.factors.iter().map(|(_, q)| q).sum::<u32>()
    }

    /// Every state column the term reads.
    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.activity.iter().map(String::as_str).chain(self.factors.iter().map(|(c, _)| c.as_str()))
    }

    /// Canonical label, e.g. `s^2·C·T` or `exp(ω·T)·I_Nq`.
    pub fn label(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(temperature) = &self.activity {
            parts.push(format!("exp(ω·{temperature})"));
        }
        let power = |name: &str, q: u32| if q == 1 { name.to_string() } else { format!("{name}^{q}") };
        if self.delay_power > 0 {
            parts.push(power(DELAY_SYMBOL, self.delay_power));
        }
        for (name, q) in &self.factors {
            parts.push(power(name, *q));
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("·")
        }
    }

    /// Inverse of [`TermSpec::label`].
    pub fn from_label(label: &str) -> Result<Self> {
        let bad = || Error::Schema(format!("cannot parse term label `{label}`"));
        let mut rest = label.trim();
        if rest == "1" {
            return Ok(Self::constant());
        }
        let mut term = Self::monomial::<String>(0, []);
        if let Some(inner) = rest.strip_prefix("exp(ω·") {
            let close = inner.find(')').ok_or_else(bad)?;
            let temperature = &inner[..close];
            if temperature.is_empty() {
                return Err(bad());
            }
            term = Self::exp_activity(temperature);
            rest = &inner[close + 1..];
            rest = match rest.strip_prefix('·') {
                Some(tail) => tail,
                None if rest.is_empty() => return Ok(term),
                None => return Err(bad()),
            };
        }
        for part in rest.split('·') {
            let (name, q) = match part.split_once('^') {
                Some((name, q)) => (name, q.parse::<u32>().map_err(|_| bad())?),
                None => (part, 1),
            };
            if name.is_empty() || q == 0 {
                return Err(bad());
            }
            if name == DELAY_SYMBOL {
                term.delay_power += q;
            } else {
                term.factors.push((name.to_string(), q));
            }
        }
        Ok(term)
    }
}

/// All monomials of total degree `≤ degree` in `(s, x_1..x_n)` (or in
/// `x_1..x_n` alone), graded by degree and lexicographically decreasing
/// within a degree, with `s` first.
pub fn polynomial_terms<S: AsRef<str>>(columns: &[S], degree: u32, include_delay: bool) -> Vec<TermSpec> {
    let n_vars = columns.len() + usize::from(include_delay);
    let mut terms = Vec::new();
    let mut exponents = vec![0u32; n_vars];
    for total in 0..=degree {
        enumerate_exponents(&mut exponents, 0, total, &mut |e| {
            let (delay, states) = if include_delay { (e[0], &e[1..]) } else { (0, e) };
            terms.push(TermSpec::monomial(
                delay,
                columns.iter().zip(states).map(|(c, q)| (c.as_ref().to_string(), *q)),
            ));
        });
    }
    terms
}

fn enumerate_exponents(exponents: &mut [u32], position: usize, remaining: u32, emit: &mut impl FnMut(&[u32])) {
    if position + 1 >= exponents.len() {
        if let Some(last) = exponents.last_mut() {
            *last = remaining;
            emit(exponents);
        } else if remaining == 0 {
            emit(exponents);
        }
        return;
    }
    for q in (0..=remaining).rev() {
        exponents[position] = q;
        enumerate_exponents(exponents, position + 1, remaining - q, emit);
    }
    exponents[position] = 0;
}

/// Appends `exp(ω·temperature)`.
pub fn add_exp_activity(mut terms: Vec<TermSpec>, temperature: &str) -> Result<Vec<TermSpec>> {
    let term = TermSpec::exp_activity(temperature);
    if terms.contains(&term) {
        return Err(Error::Schema(format!("duplicate term `{}`", term.label())));
    }
    terms.push(term);
    Ok(terms)
}

/// Appends `exp(ω·temperature)·x` for each listed column.
pub fn add_exp_interactions<S: AsRef<str>>(
    mut terms: Vec<TermSpec>,
    temperature: &str,
    columns: &[S],
) -> Result<Vec<TermSpec>> {
    for column in columns {
        let term = TermSpec::exp_activity_times(temperature, column.as_ref());
        if terms.contains(&term) {
            return Err(Error::Schema(format!("duplicate term `{}`", term.label())));
        }
        terms.push(term);
    }
    Ok(terms)
}

/// Term resolved against a column slot list.
#[derive(Debug, Clone)]
struct ResolvedTerm {
    delay_power: i32,
    factors: Vec<(usize, i32)>,
    activity: Option<usize>,
}

impl ResolvedTerm {
    #[inline]
    /// `exps[slot]` holds `exp(ω·state[slot])` for every activity slot.
    fn value(&self, s: f64, state: &[f64], exps: &[f64]) -> f64 {
        let mut v = if self.delay_power == 0 { 1.0 } else { s.powi(self.delay_power) };
        for &(slot, q) in &self.factors {
            v *= if q == 1 { state[slot] } else { state[slot].powi(q) };
        }
        if let Some(slot) = self.activity {
            v *= exps[slot];
        }
        v
    }
}

fn check_terms(terms: &[TermSpec], omega: Option<f64>) -> Result<Option<f64>> {
    let mut seen = HashSet::new();
    let mut needs_omega = false;
    for term in terms {
        match term.kind {
            TermKind::Custom => {
                return Err(Error::Schema(format!("custom term `{}` cannot be evaluated", term.label())))
            }
            TermKind::ExpActivity if term.activity.is_none() => {
                return Err(Error::Schema("activity term without a temperature column".into()))
            }
            TermKind::ExpActivity => needs_omega = true,
            TermKind::Monomial if term.activity.is_some() => {
                return Err(Error::Schema(format!("monomial `{}` carries an activity column", term.label())))
            }
            TermKind::Monomial => {}
        }
        if !seen.insert(term) {
            return Err(Error::Schema(format!("duplicate term `{}`", term.label())));
        }
    }
    match (needs_omega, omega) {
        (true, None) => Err(Error::Parameter("library has an exp(ω·T) term but no ω was given".into())),
        (true, Some(w)) if !w.is_finite() => Err(Error::Parameter(format!("ω must be finite, got {w}"))),
        (true, Some(w)) => Ok(Some(w)),
        (false, _) => Ok(None),
    }
}

/// Evaluated library: `theta` has one row per valid table row and one
/// column per term, in term order.
#[derive(Debug, Clone)]
pub struct CandidateLibrary {
    pub terms: Vec<TermSpec>,
    pub theta: DMatrix<f64>,
    /// Table row indices of the rows of `theta`.
    pub rows: Vec<usize>,
    pub row_times: Vec<f64>,
    pub rule: QuadratureRule,
    pub omega: Option<f64>,
}

impl CandidateLibrary {
    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(TermSpec::label).collect()
    }
}

/// Shifted data prepared once per (table, rule, column set) so that the
/// design matrix can be rebuilt cheaply for many values of ω.
#[derive(Debug, Clone)]
pub struct LibraryEvaluator {
    rule: QuadratureRule,
    columns: Vec<String>,
    rows: Vec<usize>,
    row_times: Vec<f64>,
    /// `shifted[k][row][slot]`: column `slot` at `t_row − s_k`.
    shifted: Vec<Vec<Vec<f64>>>,
}

impl LibraryEvaluator {
    pub fn new<S: AsRef<str>>(table: &TimeSeriesTable, rule: &QuadratureRule, columns: &[S]) -> Result<Self> {
        let columns: Vec<String> = columns.iter().map(|c| c.as_ref().to_string()).collect();
        for name in &columns {
            table.column(name)?;
        }
        let first = table.first_valid_row(rule.sigma());
        if first >= table.len() {
            return Err(Error::InsufficientData(format!(
                "no row of the {}-row table has a full memory window of {} months",
                table.len(),
                rule.sigma()
            )));
        }
        let rows: Vec<usize> = (first..table.len()).collect();
        let row_times = rows.iter().map(|&i| table.time(i)).collect();
        let mut shifted = Vec::with_capacity(rule.len());
        for &s in rule.nodes() {
            let views = columns.iter().map(|c| table.shift(c, s)).collect::<Result<Vec<_>>>()?;
            let block = rows
                .iter()
                .map(|&row| views.iter().map(|v| v.get(row).expect("row inside valid range")).collect())
                .collect();
            shifted.push(block);
        }
        Ok(LibraryEvaluator { rule: rule.clone(), columns, rows, row_times, shifted })
    }

    /// Evaluator over every column any of `terms` reads.
    pub fn for_terms(table: &TimeSeriesTable, rule: &QuadratureRule, terms: &[TermSpec]) -> Result<Self> {
        let mut columns: Vec<&str> = Vec::new();
        for name in terms.iter().flat_map(TermSpec::columns) {
            if !columns.contains(&name) {
                columns.push(name);
            }
        }
        Self::new(table, rule, &columns)
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn row_times(&self) -> &[f64] {
        &self.row_times
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    fn resolve(&self, terms: &[TermSpec]) -> Result<Vec<ResolvedTerm>> {
        let slot = |name: &str| {
            self.columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Schema(format!("column `{name}` was not prepared")))
        };
        terms
            .iter()
            .map(|term| {
                Ok(ResolvedTerm {
                    delay_power: term.delay_power as i32,
                    factors: term
                        .factors
                        .iter()
                        .map(|(name, q)| Ok((slot(name)?, *q as i32)))
                        .collect::<Result<_>>()?,
                    activity: term.activity.as_deref().map(slot).transpose()?,
                })
            })
            .collect()
    }

    /// Design matrix for `terms` at `omega`; nodes are summed in order.
    pub fn design(&self, terms: &[TermSpec], omega: Option<f64>) -> Result<DMatrix<f64>> {
        self.design_head(terms, omega, self.rows.len())
    }

    /// The first `n_rows` rows of [`LibraryEvaluator::design`].
    pub fn design_head(&self, terms: &[TermSpec], omega: Option<f64>, n_rows: usize) -> Result<DMatrix<f64>> {
        let omega = check_terms(terms, omega)?.unwrap_or(0.0);
        let resolved = self.resolve(terms)?;
        let n_rows = n_rows.min(self.rows.len());
        let mut activity_slots: Vec<usize> = resolved.iter().filter_map(|t| t.activity).collect();
        activity_slots.sort_unstable();
        activity_slots.dedup();
        let mut exps = vec![0.0; self.columns.len()];
        let mut theta = DMatrix::zeros(n_rows, terms.len());
        for (k, (s, w)) in self.rule.iter().enumerate() {
            let block = &self.shifted[k];
            for (i, state) in block[..n_rows].iter().enumerate() {
                for &slot in &activity_slots {
                    exps[slot] = (omega * state[slot]).exp();
                }
                for (j, term) in resolved.iter().enumerate() {
                    theta[(i, j)] += w * term.value(s, state, &exps);
                }
            }
        }
        Ok(theta)
    }

    pub fn evaluate(&self, terms: &[TermSpec], omega: Option<f64>) -> Result<CandidateLibrary> {
        let theta = self.design(terms, omega)?;
        Ok(CandidateLibrary {
            terms: terms.to_vec(),
            theta,
            rows: self.rows.clone(),
            row_times: self.row_times.clone(),
            rule: self.rule.clone(),
            omega: check_terms(terms, omega)?,
        })
    }
}

/// Evaluates `terms` on `table` with quadrature `rule`.
pub fn evaluate(
    terms: &[TermSpec],
    table: &TimeSeriesTable,
    rule: &QuadratureRule,
    omega: Option<f64>,
) -> Result<CandidateLibrary> {
    check_terms(terms, omega)?;
    LibraryEvaluator::for_terms(table, rule, terms)?.evaluate(terms, omega)
}

/// Unweighted terms at a single delay on the given table rows.
pub fn evaluate_at_delay(
    terms: &[TermSpec],
    table: &TimeSeriesTable,
    delay: f64,
    omega: Option<f64>,
    rows: &[usize],
) -> Result<DMatrix<f64>> {
    let omega = check_terms(terms, omega)?.unwrap_or(0.0);
    let mut theta = DMatrix::zeros(rows.len(), terms.len());
    for (j, term) in terms.iter().enumerate() {
        let factors = term
            .factors
            .iter()
            .map(|(name, q)| Ok((table.shift(name, delay)?, *q as i32)))
            .collect::<Result<Vec<_>>>()?;
        let activity = term.activity.as_deref().map(|name| table.shift(name, delay)).transpose()?;
        for (i, &row) in rows.iter().enumerate() {
            let missing = || Error::InsufficientData(format!("row {row} has no data at delay {delay}"));
            let mut v = delay.powi(term.delay_power as i32);
            for (view, q) in &factors {
                v *= view.get(row).ok_or_else(missing)?.powi(*q);
            }
            if let Some(view) = &activity {
                v *= (omega * view.get(row).ok_or_else(missing)?).exp();
            }
            theta[(i, j)] = v;
        }
    }
    Ok(theta)
}

/// Human-readable term list, one label per line.
pub fn describe(terms: &[TermSpec]) -> String {
    let mut out = String::new();
    for (j, term) in terms.iter().enumerate() {
        let _ = writeln!(out, "{j:>3}  {}", term.label());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn labels(terms: &[TermSpec]) -> Vec<String> {
        terms.iter().map(TermSpec::label).collect()
    }

    #[test]
    fn degree_one_with_delay() {
        let terms = polynomial_terms(&["x1", "x2"], 1, true);
        assert_eq!(labels(&terms), ["1", "s", "x1", "x2"]);
    }

    #[test]
    fn degree_two_with_delay_counts_ten() {
        let terms = polynomial_terms(&["x1", "x2"], 2, true);
        assert_eq!(terms.len(), 10);
        assert_eq!(
            labels(&terms)[4..],
            ["s^2", "s·x1", "s·x2", "x1^2", "x1·x2", "x2^2"].map(String::from)
        );
    }

    #[test]
    fn baseline_basis_without_delay() {
        let terms = polynomial_terms(&["C", "T"], 1, false);
        assert_eq!(labels(&terms), ["1", "C", "T"]);
        let quad = polynomial_terms(&["C", "T"], 2, false);
        assert_eq!(labels(&quad), ["1", "C", "T", "C^2", "C·T", "T^2"]);
    }

    #[test]
    fn exp_activity_terms() {
        let base = polynomial_terms(&["C", "T"], 1, false);
        let with_exp = add_exp_activity(base, "T").unwrap();
        assert_eq!(labels(&with_exp), ["1", "C", "T", "exp(ω·T)"]);
        assert!(matches!(add_exp_activity(with_exp, "T"), Err(Error::Schema(_))));

        let tina = polynomial_terms(&["C", "T", "I_Nq", "I_Aq"], 1, false);
        let tina = add_exp_activity(tina, "T").unwrap();
        assert_eq!(tina.len(), 6);
        let tina = add_exp_interactions(tina, "T", &["I_Nq", "I_Aq"]).unwrap();
        assert_eq!(labels(&tina)[6..], ["exp(ω·T)·I_Nq", "exp(ω·T)·I_Aq"].map(String::from));
    }

    #[test]
    fn labels_parse_back() {
        let mut terms = polynomial_terms(&["C", "T"], 3, true);
        terms = add_exp_activity(terms, "T").unwrap();
        terms = add_exp_interactions(terms, "T", &["C"]).unwrap();
        for term in &terms {
            assert_eq!(&TermSpec::from_label(&term.label()).unwrap(), term);
        }
        assert!(TermSpec::from_label("C^0").is_err());
        assert!(TermSpec::from_label("exp(ω·T").is_err());
    }

    fn table_ramp() -> TimeSeriesTable {
        let t: Vec<f64> = (0..41).map(|i| i as f64 * 0.1).collect();
        let c = vec![2.5; 41];
        TimeSeriesTable::new(vec![("x", t), ("c", c)], 0.0, 0.1).unwrap()
    }

    #[test]
    fn constant_term_is_sigma() {
        let table = table_ramp();
        let rule = QuadratureRule::trapezoid(100, 1.0).unwrap();
        let lib = evaluate(&[TermSpec::constant(), TermSpec::state("c")], &table, &rule, None).unwrap();
        assert_eq!(lib.rows.first(), Some(&10));
        for i in 0..lib.rows.len() {
            assert_abs_diff_eq!(lib.theta[(i, 0)], 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(lib.theta[(i, 1)], 2.5, epsilon = 1e-13);
        }
    }

    #[test]
    fn linear_state_integral() {
        // x(t) = t, so ∫₀¹ x(2 − s) ds = 1.5
        let table = table_ramp();
        let rule = QuadratureRule::trapezoid(100, 1.0).unwrap();
        let lib = evaluate(&[TermSpec::state("x")], &table, &rule, None).unwrap();
        let row = lib.rows.iter().position(|&r| r == 20).unwrap();
        assert_abs_diff_eq!(lib.theta[(row, 0)], 1.5, epsilon = 1e-10);
    }

    #[test]
    fn evaluation_errors() {
        let table = table_ramp();
        let rule = QuadratureRule::trapezoid(10, 1.0).unwrap();
        let exp = [TermSpec::exp_activity("x")];
        assert!(matches!(evaluate(&exp, &table, &rule, None), Err(Error::Parameter(_))));
        let long = QuadratureRule::trapezoid(10, 5.0).unwrap();
        assert!(matches!(
            evaluate(&[TermSpec::constant()], &table, &long, None),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            evaluate(&[TermSpec::state("nope")], &table, &rule, None),
            Err(Error::Schema(_))
        ));
        let custom = TermSpec { kind: TermKind::Custom, ..TermSpec::constant() };
        assert!(matches!(evaluate(&[custom], &table, &rule, None), Err(Error::Schema(_))));
    }
}
