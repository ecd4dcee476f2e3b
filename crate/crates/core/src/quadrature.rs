//! Expectations under a shifted standard normal, `E f(Z + m)` with
//! `Z ~ N(0, 1)`, by Gauss–Hermite or adaptive Simpson quadrature.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::hermite::GaussHermite;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature needs at least 64 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("truncation half-width must be at least 8 standard deviations, got {0}")]
    NarrowWindow(f64),
    #[error("quadrature rules disagree: {primary} vs {check} (|diff| = {diff:e})")]
    Disagreement { primary: f64, check: f64, diff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    GaussHermite,
    AdaptiveSimpson,
}

/// Rule and resolution for normal expectations. `truncation_halfwidth` is
/// only used by adaptive Simpson; Gauss–Hermite integrates over the whole line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    pub nodes: usize,
    pub truncation_halfwidth: f64,
}

/// Absolute error target for adaptive Simpson.
const SIMPSON_TOL: f64 = 1e-13;
const SIMPSON_MAX_DEPTH: u32 = 40;

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rule: QuadratureRule::GaussHermite, nodes: 400, truncation_halfwidth: 10.0 }
    }
}

impl QuadratureSpec {
    pub fn adaptive_simpson() -> Self {
        Self { rule: QuadratureRule::AdaptiveSimpson, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if self.nodes < 64 {
            return Err(QuadratureError::TooFewNodes(self.nodes));
        }
        if !(self.truncation_halfwidth >= 8.0) {
            return Err(QuadratureError::NarrowWindow(self.truncation_halfwidth));
        }
        Ok(())
    }

    /// The other rule with the same resolution, used for cross-checks.
    pub fn alternate(&self) -> Self {
        let rule = match self.rule {
            QuadratureRule::GaussHermite => QuadratureRule::AdaptiveSimpson,
            QuadratureRule::AdaptiveSimpson => QuadratureRule::GaussHermite,
        };
        Self { rule, ..*self }
    }

    /// `E f(Z + mean)` for `Z ~ N(0, 1)`.
    pub fn normal_expectation<F: Fn(f64) -> f64>(&self, mean: f64, f: F) -> f64 {
        match self.rule {
            QuadratureRule::GaussHermite => {
                let rule = hermite_rule(self.nodes);
                rule.iter().map(|&(x, w)| w * f(x + mean)).sum()
            }
            QuadratureRule::AdaptiveSimpson => {
                let h = self.truncation_halfwidth;
                let phi = |z: f64| (-0.5 * (z - mean) * (z - mean)).exp() / (2.0 * std::f64::consts::PI).sqrt();
                adaptive_simpson(|z| phi(z) * f(z), mean - h, mean + h, SIMPSON_TOL)
            }
        }
    }
}

/// Probabilists' Gauss–Hermite nodes and weights (weights sum to 1).
pub fn hermite_rule(nodes: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(nodes)
        .or_insert_with(|| {
            let n = NonZeroUsize::new(nodes.max(1)).expect("nonzero");
            let gh = GaussHermite::new(n);
            let scale = std::f64::consts::PI.sqrt();
            Arc::new(
                gh.as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / scale))
                    .collect(),
            )
        })
        .clone()
}

/// Adaptive Simpson with the Lyness acceptance test `|S₂ − S₁| ≤ 15·tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    // Start from a uniform split so narrow features are not missed by the
    // first five-point estimate.
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for i in 0..pieces {
        let x0 = a + h * i as f64;
        let x1 = if i == pieces - 1 { b } else { x0 + h };
        let (f0, f1) = (f(x0), f(x1));
        let fm = f(0.5 * (x0 + x1));
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += rec(&f, x0, x1, f0, fm, f1, whole, tol / pieces as f64, SIMPSON_MAX_DEPTH);
    }
    total
}

/// Composite Simpson on a fixed uniform grid of `panels` (even) panels.
pub fn composite_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_weights_integrate_moments() {
        let q = QuadratureSpec::default();
        assert!((q.normal_expectation(0.0, |_| 1.0) - 1.0).abs() < 1e-13);
        assert!((q.normal_expectation(0.0, |z| z * z) - 1.0).abs() < 1e-12);
        assert!((q.normal_expectation(1.5, |z| z) - 1.5).abs() < 1e-12);
        assert!((q.normal_expectation(0.0, |z| z.powi(4)) - 3.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_matches_closed_form() {
        let q = QuadratureSpec::adaptive_simpson();
        // E cos(Z) = e^{-1/2}
        assert!((q.normal_expectation(0.0, f64::cos) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((q.normal_expectation(2.0, |z| z * z) - 5.0).abs() < 1e-11);
    }

    #[test]
    fn rules_agree_on_logistic_integrand() {
        let f = |z: f64| (1.0 / (1.0 + (-4.0 * z).exp()) - 0.5).powi(2);
        let gh = QuadratureSpec::default().normal_expectation(2.0, f);
        let simp = QuadratureSpec::adaptive_simpson().normal_expectation(2.0, f);
        assert!((gh - simp).abs() < 1e-10, "{gh} {simp}");
    }

    #[test]
    fn validation_rejects_coarse_specs() {
        let mut q = QuadratureSpec::default();
        q.nodes = 10;
        assert_eq!(q.validate(), Err(QuadratureError::TooFewNodes(10)));
        let q = QuadratureSpec { truncation_halfwidth: 4.0, ..QuadratureSpec::default() };
        assert!(q.validate().is_err());
    }

    #[test]
    fn composite_simpson_is_exact_on_cubics() {
        let v = composite_simpson(|x| x * x * x - x, 0.0, 2.0, 4);
        assert!((v - 2.0).abs() < 1e-14);
    }
}
