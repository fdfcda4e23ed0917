//! Quadrature rules over the memory window `[0, σ]`.
//!
//! Delays are positive numbers measured into the past, so node `s_k = 0` is
//! the present and `s_k = σ` the far end of the window.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    /// Left-endpoint rectangle rule.
    Rectangle,
    /// Composite trapezoid rule on equispaced nodes.
    Trapezoid,
    /// Clenshaw–Curtis on Chebyshev–Lobatto nodes.
    ClenshawCurtis,
}

impl std::fmt::Display for QuadratureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QuadratureKind::Rectangle => "rectangle",
            QuadratureKind::Trapezoid => "trapezoid",
            QuadratureKind::ClenshawCurtis => "clenshaw_curtis",
        })
    }
}

impl std::str::FromStr for QuadratureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangle" => Ok(QuadratureKind::Rectangle),
            "trapezoid" => Ok(QuadratureKind::Trapezoid),
            "clenshaw_curtis" => Ok(QuadratureKind::ClenshawCurtis),
            other => Err(Error::Parameter(format!("unknown quadrature kind `{other}`"))),
        }
    }
}

/// Nodes `s_1..s_K` in `[0, σ]` (nondecreasing) and their weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    kind: QuadratureKind,
    sigma: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("memory window must be positive, got {sigma}")))
    }
}

impl QuadratureRule {
    pub fn new(kind: QuadratureKind, k: usize, sigma: f64) -> Result<Self> {
        match kind {
            QuadratureKind::Rectangle => Self::rectangle(k, sigma),
            QuadratureKind::Trapezoid => Self::trapezoid(k, sigma),
            QuadratureKind::ClenshawCurtis => Self::clenshaw_curtis(k, sigma),
        }
    }

    /// Composite trapezoid: `0 = s_1 < … < s_K = σ`, weights `(h/2, h, …, h, h/2)`.
    pub fn trapezoid(k: usize, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if k < 2 {
            return Err(Error::Parameter(format!("trapezoid rule needs K >= 2, got {k}")));
        }
        let intervals = (k - 1) as f64;
        let h = sigma / intervals;
        let mut nodes: Vec<f64> = (0..k).map(|i| sigma * i as f64 / intervals).collect();
        nodes[k - 1] = sigma;
        let mut weights = vec![h; k];
        weights[0] = h / 2.0;
        weights[k - 1] = h / 2.0;
        Ok(QuadratureRule { kind: QuadratureKind::Trapezoid, sigma, nodes, weights })
    }

    /// Left-endpoint rule: `s_k = (k−1)·σ/K`, weights `σ/K`.
    pub fn rectangle(k: usize, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if k < 1 {
            return Err(Error::Parameter("rectangle rule needs K >= 1".into()));
        }
        let h = sigma / k as f64;
        let nodes = (0..k).map(|i| sigma * i as f64 / k as f64).collect();
        Ok(QuadratureRule { kind: QuadratureKind::Rectangle, sigma, nodes, weights: vec![h; k] })
    }

    /// Clenshaw–Curtis with the explicit cosine-sum weights.
    ///
    /// With `N = K − 1` and Lobatto points `x_j = cos(jπ/N)` on `[−1, 1]`,
    ///
    /// ```text
    /// w_j = c_j/N · (1 − Σ_{k=1}^{⌊N/2⌋} b_k/(4k² − 1) · cos(2kjπ/N))
    /// ```
    ///
    /// where `c_j = 1` at the endpoints and 2 inside, and `b_k = 1` when
    /// `k = N/2` and 2 otherwise. Nodes and weights are mapped affinely to
    /// `[0, σ]`; the computed half is mirrored so the rule is exactly
    /// palindromic.
    pub fn clenshaw_curtis(k: usize, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if k < 2 {
            return Err(Error::Parameter(format!("Clenshaw-Curtis rule needs K >= 2, got {k}")));
        }
        let n = k - 1;
        let nf = n as f64;
        let half = sigma / 2.0;
        let mut nodes = vec![0.0; k];
        let mut weights = vec![0.0; k];
        for j in 0..=n / 2 {
            let mut sum = 0.0;
            for m in 1..=n / 2 {
                let b = if 2 * m == n { 1.0 } else { 2.0 };
                let mf = m as f64;
                sum += b / (4.0 * mf * mf - 1.0) * (2.0 * mf * j as f64 * PI / nf).cos();
            }
            let c = if j == 0 { 1.0 } else { 2.0 };
            let w = c / nf * (1.0 - sum) * half;
            let s = half * (1.0 - (j as f64 * PI / nf).cos());
            weights[j] = w;
            weights[n - j] = w;
            nodes[j] = s;
            nodes[n - j] = sigma - s;
        }
        nodes[0] = 0.0;
        nodes[n] = sigma;
        if n % 2 == 0 {
            nodes[n / 2] = half;
        }
        Ok(QuadratureRule { kind: QuadratureKind::ClenshawCurtis, sigma, nodes, weights })
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(s_k, w_k)` pairs in node order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// `Σ w_k f(s_k)`, summed in node order.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(s, w)| w * f(s)).sum()
    }

    /// Same kind and node count on a different window.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.kind, self.len(), sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trapezoid_three_nodes() {
        let rule = QuadratureRule::trapezoid(3, 1.0).unwrap();
        assert_eq!(rule.nodes(), &[0.0, 0.5, 1.0]);
        assert_eq!(rule.weights(), &[0.25, 0.5, 0.25]);
        assert_eq!(rule.integrate(|s| s), 0.5);
    }

    #[test]
    fn trapezoid_square_error_bound() {
        let rule = QuadratureRule::trapezoid(100, 1.0).unwrap();
        let err = (rule.integrate(|s| s * s) - 1.0 / 3.0).abs();
        // h²/12 · max|f''| with h = 1/99
        let bound = (1.0f64 / 99.0).powi(2) / 12.0 * 2.0;
        assert!(err <= bound * (1.0 + 1e-9) && err < 1.1e-4, "err {err}");
    }

    #[test]
    fn rectangle_rules() {
        let rule = QuadratureRule::rectangle(2, 1.0).unwrap();
        assert_eq!(rule.nodes(), &[0.0, 0.5]);
        assert_eq!(rule.weights(), &[0.5, 0.5]);
        for k in [1, 3, 17] {
            let rule = QuadratureRule::rectangle(k, 2.5).unwrap();
            assert_abs_diff_eq!(rule.integrate(|_| 3.0), 7.5, epsilon = 1e-13);
        }
        let rule = QuadratureRule::rectangle(100, 1.0).unwrap();
        // left rule on f(s) = s: 1/2 − h/2
        assert_abs_diff_eq!(rule.integrate(|s| s), 0.495, epsilon = 1e-14);
    }

    #[test]
    fn clenshaw_curtis_small_cases() {
        let rule = QuadratureRule::clenshaw_curtis(2, 1.0).unwrap();
        assert_eq!(rule.nodes(), &[0.0, 1.0]);
        assert_abs_diff_eq!(rule.weights()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.weights()[1], 0.5, epsilon = 1e-15);
        let rule = QuadratureRule::clenshaw_curtis(5, 1.0).unwrap();
        assert_abs_diff_eq!(rule.integrate(|s| s.powi(4)), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn parameter_errors() {
        assert!(QuadratureRule::trapezoid(1, 1.0).is_err());
        assert!(QuadratureRule::rectangle(0, 1.0).is_err());
        assert!(QuadratureRule::clenshaw_curtis(1, 1.0).is_err());
        assert!(QuadratureRule::trapezoid(10, 0.0).is_err());
        assert!(QuadratureRule::trapezoid(10, f64::NAN).is_err());
    }

    #[test]
    fn kind_names_roundtrip() {
        for kind in [QuadratureKind::Rectangle, QuadratureKind::Trapezoid, QuadratureKind::ClenshawCurtis] {
            assert_eq!(kind.to_string().parse::<QuadratureKind>().unwrap(), kind);
        }
    }
}
