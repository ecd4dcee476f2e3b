//! Strictly proper scoring rules through their Bregman generators.
//!
//! A generator `G` is a strictly convex function on `[0, 1]`. The loss of
//! reporting `a` when the correct posterior is `p` is the Bregman divergence
//! `B_G(p‖a) = G(p) − G(a) − (p − a)·G'(a)`. `G(p) = p²` gives squared error,
//! negative entropy gives the Kullback–Leibler divergence.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::xlogy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BregmanError {
    #[error("divergence of p = {p} from a = {a} is infinite")]
    InfiniteDivergence { p: f64, a: f64 },
    #[error("probability {value} outside [0, 1]")]
    Domain { value: f64 },
    #[error("task density vanishes on the whole grid")]
    DegenerateDensity,
    #[error("task density is negative or non-finite at p = {p}: {value}")]
    InvalidDensity { p: f64, value: f64 },
}

/// Which closed form, if any, backs a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Log,
    Custom,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Log => "log",
            LossKind::Custom => "custom",
        })
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A strictly convex generator with its first two derivatives.
#[derive(Clone)]
pub struct BregmanGenerator {
    kind: LossKind,
    g: ScalarFn,
    g_prime: ScalarFn,
    g_double_prime: ScalarFn,
}

impl fmt::Debug for BregmanGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BregmanGenerator").field("kind", &self.kind).finish_non_exhaustive()
    }
}

fn neg_entropy(p: f64) -> f64 {
    xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)
}

impl BregmanGenerator {
    /// `G(p) = p²`.
    pub fn mse() -> Self {
        Self {
            kind: LossKind::Mse,
            g: Arc::new(|p| p * p),
            g_prime: Arc::new(|p| 2.0 * p),
            g_double_prime: Arc::new(|_| 2.0),
        }
    }

    /// `G(p) = p ln p + (1 − p) ln(1 − p)`.
    pub fn log() -> Self {
        Self {
            kind: LossKind::Log,
            g: Arc::new(neg_entropy),
            g_prime: Arc::new(|p| (p / (1.0 - p)).ln()),
            g_double_prime: Arc::new(|p| 1.0 / (p * (1.0 - p))),
        }
    }

    pub fn from_kind(kind: LossKind) -> Option<Self> {
        match kind {
            LossKind::Mse => Some(Self::mse()),
            LossKind::Log => Some(Self::log()),
            LossKind::Custom => None,
        }
    }

    /// A user generator. All three functions must be supplied; nothing is
    /// differentiated numerically.
    pub fn custom(g: ScalarFn, g_prime: ScalarFn, g_double_prime: ScalarFn) -> Self {
        Self { kind: LossKind::Custom, g, g_prime, g_double_prime }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn g(&self, p: f64) -> f64 {
        (self.g)(p)
    }

    pub fn g_prime(&self, p: f64) -> f64 {
        (self.g_prime)(p)
    }

    pub fn g_double_prime(&self, p: f64) -> f64 {
        (self.g_double_prime)(p)
    }

    /// `B_G(p‖a)`. Returns `+inf` when the divergence is infinite (LOG with
    /// `a ∈ {0, 1}` and `p ≠ a`); see [`Self::try_divergence`].
    pub fn divergence(&self, p: f64, a: f64) -> f64 {
        if p == a {
            return 0.0;
        }
        match self.kind {
            LossKind::Mse => (p - a) * (p - a),
            LossKind::Log => {
                let hi = if p > 0.0 { if a > 0.0 { p * (p / a).ln() } else { f64::INFINITY } } else { 0.0 };
                let q = 1.0 - p;
                let b = 1.0 - a;
                let lo = if q > 0.0 { if b > 0.0 { q * (q / b).ln() } else { f64::INFINITY } } else { 0.0 };
                (hi + lo).max(0.0)
            }
            LossKind::Custom => (self.g(p) - self.g(a) - (p - a) * self.g_prime(a)).max(0.0),
        }
    }

    /// Divergence with the infinite case surfaced as an error.
    pub fn try_divergence(&self, p: f64, a: f64) -> Result<f64, BregmanError> {
        for v in [p, a] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BregmanError::Domain { value: v });
            }
        }
        let d = self.divergence(p, a);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(BregmanError::InfiniteDivergence { p, a })
        }
    }

    /// `∂B_G(p‖a)/∂p = G'(p) − G'(a)`.
    pub fn divergence_dp(&self, p: f64, a: f64) -> f64 {
        if p == a {
            return 0.0;
        }
        self.g_prime(p) - self.g_prime(a)
    }

    /// Savage form of the expected score of report `a` under belief `p`:
    /// `G(a) + (p − a)·G'(a)`. Returns `-inf` where the score is unbounded
    /// below.
    pub fn expected_score(&self, a: f64, p: f64) -> f64 {
        if self.kind == LossKind::Log && (a == 0.0 || a == 1.0) {
            return if p == a { 0.0 } else { f64::NEG_INFINITY };
        }
        self.g(a) + (p - a) * self.g_prime(a)
    }

    /// Same generator plus the affine term `αp + β`; divergences are unchanged.
    pub fn with_affine(&self, alpha: f64, beta: f64) -> Self {
        let g = self.g.clone();
        let gp = self.g_prime.clone();
        Self::custom(
            Arc::new(move |p| g(p) + alpha * p + beta),
            Arc::new(move |p| gp(p) + alpha),
            self.g_double_prime.clone(),
        )
    }
}

pub fn divergence(gen: &BregmanGenerator, p: f64, a: f64) -> f64 {
    gen.divergence(p, a)
}

pub fn expected_score(gen: &BregmanGenerator, a: f64, p: f64) -> f64 {
    gen.expected_score(a, p)
}

/// Minimizer of `Σ w_i B_G(p_i‖a)` over `a ∈ [0, 1]`, found by bisection on the
/// sign of the derivative `−G''(a)·Σ w_i (p_i − a)`.
///
/// This does not assume the answer is the mean; it is the independent route
/// used to check that it is.
pub fn minimize_expected_divergence(gen: &BregmanGenerator, points: &[f64], weights: &[f64]) -> f64 {
    let deriv = |a: f64| -> f64 {
        let s: f64 = points.iter().zip(weights).map(|(p, w)| w * (p - a)).sum();
        -gen.g_double_prime(a) * s
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        let d = deriv(m);
        if d == 0.0 {
            return m;
        }
        if d < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// Density of decision thresholds `λ(p)`, the curvature of the generator.
#[derive(Clone)]
pub struct TaskDensity {
    lambda: ScalarFn,
}

impl TaskDensity {
    pub fn new(lambda: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { lambda: Arc::new(lambda) }
    }

    pub fn eval(&self, p: f64) -> f64 {
        (self.lambda)(p)
    }
}

impl fmt::Debug for TaskDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TaskDensity")
    }
}

pub const TASK_DENSITY_EPS: f64 = 1e-6;
pub const TASK_DENSITY_PANELS: usize = 10_000;

/// Tabulated generator recovered from a task density by integrating twice.
struct Tabulated {
    lo: f64,
    h: f64,
    g: Vec<f64>,
    gp: Vec<f64>,
    lam: Vec<f64>,
    density: TaskDensity,
}

impl Tabulated {
    fn locate(&self, p: f64) -> (usize, f64) {
        let n = self.g.len() - 1;
        let x = ((p - self.lo) / self.h).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        (i, x - i as f64)
    }

    // Cubic Hermite interpolation of f on a panel with values f0, f1 and slopes d0, d1.
    fn hermite(t: f64, h: f64, f0: f64, f1: f64, d0: f64, d1: f64) -> f64 {
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * f0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * f1
            + (t3 - t2) * h * d1
    }

    fn edge(&self, p: f64) -> Option<(f64, f64, f64, f64)> {
        let n = self.g.len() - 1;
        let hi = self.lo + self.h * n as f64;
        if p < self.lo {
            Some((p - self.lo, self.g[0], self.gp[0], self.lam[0]))
        } else if p > hi {
            Some((p - hi, self.g[n], self.gp[n], self.lam[n]))
        } else {
            None
        }
    }

    fn g(&self, p: f64) -> f64 {
        if let Some((d, g, gp, l)) = self.edge(p) {
            return g + gp * d + 0.5 * l * d * d;
        }
        let (i, t) = self.locate(p);
        Self::hermite(t, self.h, self.g[i], self.g[i + 1], self.gp[i], self.gp[i + 1])
    }

    fn gp(&self, p: f64) -> f64 {
        if let Some((d, _, gp, l)) = self.edge(p) {
            return gp + l * d;
        }
        let (i, t) = self.locate(p);
        Self::hermite(t, self.h, self.gp[i], self.gp[i + 1], self.lam[i], self.lam[i + 1])
    }

    fn gpp(&self, p: f64) -> f64 {
        if let Some((_, _, _, l)) = self.edge(p) {
            return l;
        }
        self.density.eval(p)
    }
}

/// Builds the generator whose curvature is the given task density. `G'` and
/// `G` are cumulative composite-Simpson integrals on `[ε, 1 − ε]` with
/// `ε = 1e−6` and `10⁴` panels. Integration constants are set to zero; they are
/// affine in `p` and drop out of every divergence.
pub fn generator_from_task_density(lam: &TaskDensity) -> Result<BregmanGenerator, BregmanError> {
    let lo = TASK_DENSITY_EPS;
    let hi = 1.0 - TASK_DENSITY_EPS;
    let n = TASK_DENSITY_PANELS;
    let h = (hi - lo) / n as f64;
    let node = |i: usize| lo + h * i as f64;
    let eval = |p: f64| -> Result<f64, BregmanError> {
        let v = lam.eval(p);
        if !v.is_finite() || v < 0.0 {
            Err(BregmanError::InvalidDensity { p, value: v })
        } else {
            Ok(v)
        }
    };

    let mut lam_nodes = Vec::with_capacity(n + 1);
    for i in 0..=n {
        lam_nodes.push(eval(node(i))?);
    }
    if lam_nodes.iter().all(|&v| v == 0.0) {
        return Err(BregmanError::DegenerateDensity);
    }

    let mut gp = vec![0.0; n + 1];
    let mut g = vec![0.0; n + 1];
    for i in 0..n {
        let x0 = node(i);
        let xm = x0 + 0.5 * h;
        let lam_m = eval(xm)?;
        let lam_q1 = eval(x0 + 0.25 * h)?;
        let lam_q3 = eval(x0 + 0.75 * h)?;
        // G' at the midpoint and right node, Simpson on each half and on the whole.
        let gp_mid = gp[i] + (0.5 * h / 6.0) * (lam_nodes[i] + 4.0 * lam_q1 + lam_m);
        gp[i + 1] = gp_mid + (0.5 * h / 6.0) * (lam_m + 4.0 * lam_q3 + lam_nodes[i + 1]);
        g[i + 1] = g[i] + (h / 6.0) * (gp[i] + 4.0 * gp_mid + gp[i + 1]);
    }

    let table = Arc::new(Tabulated { lo, h, g, gp, lam: lam_nodes, density: lam.clone() });
    let (t1, t2, t3) = (table.clone(), table.clone(), table);
    Ok(BregmanGenerator::custom(
        Arc::new(move |p| t1.g(p)),
        Arc::new(move |p| t2.gp(p)),
        Arc::new(move |p| t3.gpp(p)),
    ))
}
