//! The finite game with `n` symmetric binary signals and a uniform prior.
//!
//! Nature picks a precision `π ∈ [½, 1]` (possibly at random); the
//! decision-maker sees the number `k` of high signals and reports `a_k`.
//! Regret is the expected Bregman divergence between the oracle posterior,
//! which knows `π`, and the report.

mod double_oracle;
mod n3;
mod structural;
mod verify;

pub use double_oracle::{solve_double_oracle, solve_double_oracle_traced, DoubleOracleOptions, DoubleOracleRun};
pub use n3::{n3_derivative_polynomial, n3_g1_as_printed, n3_system_residuals};
pub use structural::{foc_two_point_posterior, solve_structural};
pub use verify::{verify_global_optimality, OptimalityDiagnostics};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bregman::{BregmanError, BregmanGenerator, LossKind};
use crate::numeric::{golden_section_max, linspace, ln_choose, log_add_exp, log_sum_exp, neumaier_sum};

/// Above this `n` binomial terms are evaluated in the log domain.
pub const LOG_DOMAIN_THRESHOLD: usize = 60;

#[derive(Debug, Error, Clone)]
pub enum FiniteGameError {
    #[error("count {k} outside 0..={n}")]
    Range { k: usize, n: usize },
    #[error("precision {0} outside [1/2, 1]")]
    Precision(f64),
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("belief vector has {got} entries, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("count {0} has zero marginal mass under the mixture")]
    ZeroMassCount(usize),
    #[error(transparent)]
    Bregman(#[from] BregmanError),
    #[error("no bracket for the structural system: {0}")]
    NoBracket(String),
    #[error("the structural conditions are stated for squared error, got {0}")]
    UnsupportedLoss(LossKind),
    #[error("double oracle stopped after {iterations} outer iterations with gap {gap:e}")]
    IterationLimit { iterations: usize, gap: f64, best: Box<FiniteEquilibrium> },
}

pub type Result<T> = std::result::Result<T, FiniteGameError>;

/// A symmetric binary signal structure with precision `π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryExperiment {
    pub pi: f64,
}

impl BinaryExperiment {
    pub fn new(pi: f64) -> Result<Self> {
        check_precision(pi)?;
        Ok(Self { pi })
    }
}

fn check_precision(pi: f64) -> Result<()> {
    if (0.5..=1.0).contains(&pi) {
        Ok(())
    } else {
        Err(FiniteGameError::Precision(pi))
    }
}

/// Nature's mixed strategy: finitely many precisions with weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NatureMixtureFinite {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NatureMixtureFinite {
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(FiniteGameError::InvalidMixture(format!(
                "{} support points with {} weights",
                support.len(),
                weights.len()
            )));
        }
        for &pi in &support {
            check_precision(pi)?;
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(FiniteGameError::InvalidMixture("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FiniteGameError::InvalidMixture(format!("weights sum to {total}")));
        }
        for i in 0..support.len() {
            for j in 0..i {
                if support[i] == support[j] {
                    return Err(FiniteGameError::InvalidMixture(format!("repeated support point {}", support[i])));
                }
            }
        }
        Ok(Self { support, weights })
    }

    /// `{½ w.p. 1 − w, π w.p. w}`.
    pub fn two_point(pi: f64, w: f64) -> Result<Self> {
        if pi == 0.5 {
            return Self::new(vec![0.5], vec![1.0]);
        }
        Self::new(vec![0.5, pi], vec![1.0 - w, w])
    }

    pub fn point(pi: f64) -> Result<Self> {
        Self::new(vec![pi], vec![1.0])
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Reports `a_0, …, a_n` indexed by the number of high signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector {
    pub a: Vec<f64>,
}

impl BeliefVector {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(FiniteGameError::EmptySample);
        }
        if let Some(&bad) = a.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(BregmanError::Domain { value: bad }.into());
        }
        Ok(Self { a })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self { a: vec![value; n + 1] }
    }

    pub fn n(&self) -> usize {
        self.a.len() - 1
    }

    /// `max_k |a_k + a_{n−k} − 1|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n();
        (0..=n).map(|k| (self.a[k] + self.a[n - k] - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn is_monotone(&self) -> bool {
        self.a.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Structural,
    DoubleOracle,
}

/// Residuals of the equilibrium conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// `max_k |a_k − mixture-Bayes posterior|`.
    pub foc_max_abs: f64,
    /// Spread of `R(a, π_i)` across support points.
    pub indifference_abs: f64,
    /// Largest violation of the first-order condition in `π` at a support point
    /// (one-sided at `π ∈ {½, 1}`).
    pub local_opt_abs: f64,
    /// `max_π R(a, π) − R(a, σ)`.
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteEquilibrium {
    pub n: usize,
    pub loss: LossKind,
    pub method: SolverMethod,
    pub mixture: NatureMixtureFinite,
    pub beliefs: BeliefVector,
    /// Maximal regret of `beliefs`, i.e. the game value up to `duality_gap`.
    pub value: f64,
    pub residuals: Residuals,
    /// True when the informative atom sits at `π = 1` and the local condition
    /// was checked one-sidedly.
    pub boundary: bool,
    pub iterations: usize,
}

/// Precomputed binomial coefficients for a fixed sample size.
#[derive(Debug, Clone)]
pub struct BinaryGame {
    n: usize,
    ln_c: Vec<f64>,
    c: Vec<f64>,
}

/// Per-count quantities at a given precision.
#[derive(Debug, Clone, Copy)]
struct CountTerms {
    /// Oracle posterior, limiting value at `π = 1`.
    q: f64,
    /// `d Pr(k | π) / dπ`.
    dmass: f64,
    /// `Pr(k | π) · dq/dπ`.
    mass_dq: f64,
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `k ln π + (n − k) ln(1 − π)` with `0·ln 0 = 0`.
#[inline]
fn log_kernel(pi: f64, k: usize, n: usize) -> f64 {
    let a = if k == 0 { 0.0 } else { k as f64 * pi.ln() };
    let b = if k == n { 0.0 } else { (n - k) as f64 * (1.0 - pi).ln() };
    a + b
}

impl BinaryGame {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(FiniteGameError::EmptySample);
        }
        let ln_c = (0..=n).map(|k| ln_choose(n as u64, k as u64)).collect();
        let c = (0..=n).map(|k| crate::numeric::choose(n as u64, k as u64)).collect();
        Ok(Self { n, ln_c, c })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.n {
            Err(FiniteGameError::Range { k, n: self.n })
        } else {
            Ok(())
        }
    }

    fn check_beliefs(&self, beliefs: &BeliefVector) -> Result<()> {
        if beliefs.a.len() != self.n + 1 {
            return Err(FiniteGameError::DimensionMismatch { got: beliefs.a.len(), expected: self.n + 1 });
        }
        Ok(())
    }

    /// `Pr(k | π) = ½ C(n,k) [π^k (1−π)^{n−k} + (1−π)^k π^{n−k}]`.
    pub fn marginal(&self, pi: f64, k: usize) -> f64 {
        let n = self.n;
        if n <= LOG_DOMAIN_THRESHOLD {
            let (ki, ni) = (k as i32, (n - k) as i32);
            let a = pi.powi(ki) * (1.0 - pi).powi(ni);
            let b = (1.0 - pi).powi(ki) * pi.powi(ni);
            0.5 * self.c[k] * (a + b)
        } else {
            self.ln_marginal(pi, k).exp()
        }
    }

    /// `ln Pr(k | π)`.
    pub fn ln_marginal(&self, pi: f64, k: usize) -> f64 {
        let la = log_kernel(pi, k, self.n);
        let lb = log_kernel(pi, self.n - k, self.n);
        self.ln_c[k] - std::f64::consts::LN_2 + log_add_exp(la, lb)
    }

    /// Oracle posterior `σ((2k − n) ln(π / (1 − π)))`; at `π = 1` the limit
    /// (1, 0 or ½) is returned.
    fn q_limit(&self, pi: f64, k: usize) -> f64 {
        let d = 2 * k as i64 - self.n as i64;
        if d == 0 {
            return 0.5;
        }
        if pi == 1.0 {
            return if d > 0 { 1.0 } else { 0.0 };
        }
        logistic(d as f64 * (pi / (1.0 - pi)).ln())
    }

    /// Oracle posterior with the convention `½` on zero-probability counts.
    pub fn posterior(&self, pi: f64, k: usize) -> f64 {
        if pi == 1.0 && k > 0 && k < self.n {
            return 0.5;
        }
        self.q_limit(pi, k)
    }

    /// Oracle posteriors of every count.
    pub fn oracle_beliefs(&self, pi: f64) -> BeliefVector {
        BeliefVector { a: (0..=self.n).map(|k| self.posterior(pi, k)).collect() }
    }

    fn terms(&self, pi: f64, k: usize) -> CountTerms {
        let n = self.n;
        let mass = self.marginal(pi, k);
        let q = self.q_limit(pi, k);
        if pi <= 0.5 || pi >= 1.0 {
            return CountTerms { q, dmass: f64::NAN, mass_dq: f64::NAN };
        }
        let (kf, mf) = (k as f64, (n - k) as f64);
        let (ua, ub) = (kf / pi - mf / (1.0 - pi), mf / pi - kf / (1.0 - pi));
        // weights of the two kernels inside Pr(k|π)
        let (la, lb) = (log_kernel(pi, k, n), log_kernel(pi, n - k, n));
        let half_c = self.ln_c[k] - std::f64::consts::LN_2;
        let ea = (half_c + la).exp();
        let eb = (half_c + lb).exp();
        let dmass = ea * ua + eb * ub;
        let mass_dq = mass * q * (1.0 - q) * (2.0 * kf - n as f64) / (pi * (1.0 - pi));
        CountTerms { q, dmass, mass_dq }
    }

    /// `R(a, π) = Σ_k Pr(k|π) B_G(q(k;π) ‖ a_k)`.
    pub fn regret(&self, beliefs: &BeliefVector, pi: f64, gen: &BregmanGenerator) -> Result<f64> {
        self.check_beliefs(beliefs)?;
        check_precision(pi)?;
        let mut parts = Vec::with_capacity(self.n + 1);
        for k in 0..=self.n {
            let mass = self.marginal(pi, k);
            if mass == 0.0 {
                continue;
            }
            let d = gen.try_divergence(self.q_limit(pi, k), beliefs.a[k])?;
            parts.push(mass * d);
        }
        Ok(neumaier_sum(parts))
    }

    /// `∂R(a, π)/∂π` with `a` held fixed, for `π ∈ (½, 1)`.
    pub fn regret_dpi(&self, beliefs: &BeliefVector, pi: f64, gen: &BregmanGenerator) -> Result<f64> {
        self.check_beliefs(beliefs)?;
        if !(pi > 0.5 && pi < 1.0) {
            return self.regret_dpi_one_sided(beliefs, pi, gen);
        }
        let mut parts = Vec::with_capacity(2 * self.n + 2);
        for k in 0..=self.n {
            let t = self.terms(pi, k);
            let a = beliefs.a[k];
            let d = gen.try_divergence(t.q, a)?;
            parts.push(t.dmass * d);
            if t.mass_dq != 0.0 {
                parts.push(t.mass_dq * gen.divergence_dp(t.q, a));
            }
        }
        Ok(neumaier_sum(parts))
    }

    /// One-sided difference quotient pointing into `[½, 1]`.
    pub fn regret_dpi_one_sided(&self, beliefs: &BeliefVector, pi: f64, gen: &BregmanGenerator) -> Result<f64> {
        let h = 1e-6;
        if pi >= 1.0 - h {
            let r1 = self.regret(beliefs, pi, gen)?;
            let r0 = self.regret(beliefs, pi - h, gen)?;
            Ok((r1 - r0) / h)
        } else {
            let r1 = self.regret(beliefs, pi + h, gen)?;
            let r0 = self.regret(beliefs, pi, gen)?;
            Ok((r1 - r0) / h)
        }
    }

    /// `Σ_i w_i R(a, π_i)`.
    pub fn mixture_regret(&self, beliefs: &BeliefVector, mix: &NatureMixtureFinite, gen: &BregmanGenerator) -> Result<f64> {
        let mut s = Vec::with_capacity(mix.support.len());
        for (pi, w) in mix.iter() {
            if w > 0.0 {
                s.push(w * self.regret(beliefs, pi, gen)?);
            }
        }
        Ok(neumaier_sum(s))
    }

    /// Mixture-Bayes posterior `Σ w_i Pr_i q_i / Σ w_i Pr_i`, computed as a
    /// logistic of log-sum-exp log-odds so that `a_k + a_{n−k} = 1` holds to
    /// rounding. Counts with no mass get `½` and are listed in the second
    /// component.
    pub fn best_response(&self, mix: &NatureMixtureFinite) -> (BeliefVector, Vec<usize>) {
        let n = self.n;
        let mut a = Vec::with_capacity(n + 1);
        let mut zero = Vec::new();
        let mut up = Vec::with_capacity(mix.support.len());
        let mut down = Vec::with_capacity(mix.support.len());
        for k in 0..=n {
            up.clear();
            down.clear();
            for (pi, w) in mix.iter() {
                if w <= 0.0 {
                    continue;
                }
                let lw = w.ln();
                up.push(lw + log_kernel(pi, k, n));
                down.push(lw + log_kernel(pi, n - k, n));
            }
            let (lu, ld) = (log_sum_exp(&up), log_sum_exp(&down));
            if lu == f64::NEG_INFINITY && ld == f64::NEG_INFINITY {
                zero.push(k);
                a.push(0.5);
            } else {
                a.push(logistic(lu - ld));
            }
        }
        (BeliefVector { a }, zero)
    }

    /// Regret at every point of a grid, evaluated in parallel.
    pub fn regret_curve(&self, beliefs: &BeliefVector, grid: &[f64], gen: &BregmanGenerator) -> Result<Vec<f64>> {
        grid.par_iter().map(|&pi| self.regret(beliefs, pi, gen)).collect()
    }

    /// Nature's best reply to `beliefs`: grid scan on `[½, 1]`, golden-section
    /// refinement of every near-maximal grid peak to `1e−10`, ties to the
    /// smallest `π`.
    pub fn nature_best_response(&self, beliefs: &BeliefVector, gen: &BregmanGenerator, grid_size: usize) -> Result<(f64, f64)> {
        let grid_size = grid_size.max(64);
        let grid = linspace(0.5, 1.0, grid_size);
        let vals = self.regret_curve(beliefs, &grid, gen)?;
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = (top - spread).max(1e-300) * 0.05;
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        let last = grid_size - 1;
        for i in 0..grid_size {
            let left = if i == 0 { f64::NEG_INFINITY } else { vals[i - 1] };
            let right = if i == last { f64::NEG_INFINITY } else { vals[i + 1] };
            if !(vals[i] >= left && vals[i] >= right && vals[i] >= top - slack) {
                continue;
            }
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(last)];
            let mut failure = None;
            let (x, fx) = golden_section_max(
                |pi| match self.regret(beliefs, pi, gen) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        f64::NEG_INFINITY
                    }
                },
                lo,
                hi,
                1e-10,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let (x, fx) = if vals[i] >= fx { (grid[i], vals[i]) } else { (x, fx) };
            if fx > best.1 + 1e-13 {
                best = (x, fx);
            } else if (fx - best.1).abs() <= 1e-13 && x < best.0 {
                best = (x, best.1.max(fx));
            }
        }
        Ok(best)
    }

    /// Residuals of the equilibrium conditions for a candidate pair.
    pub fn residuals(&self, mix: &NatureMixtureFinite, beliefs: &BeliefVector, gen: &BregmanGenerator, grid_size: usize) -> Result<(Residuals, f64)> {
        let foc = self.foc_residual(mix, beliefs);
        let mut regrets = Vec::new();
        let mut local = 0.0f64;
        for (pi, w) in mix.iter() {
            if w <= 0.0 {
                continue;
            }
            regrets.push(self.regret(beliefs, pi, gen)?);
            let d = self.regret_dpi(beliefs, pi, gen)?;
            let v = if pi <= 0.5 {
                d.max(0.0)
            } else if pi >= 1.0 {
                (-d).max(0.0)
            } else {
                d.abs()
            };
            local = local.max(v);
        }
        let hi = regrets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = regrets.iter().copied().fold(f64::INFINITY, f64::min);
        let attained = self.mixture_regret(beliefs, mix, gen)?;
        let (_, top) = self.nature_best_response(beliefs, gen, grid_size)?;
        let value = top.max(hi);
        Ok((
            Residuals {
                foc_max_abs: foc,
                indifference_abs: hi - lo,
                local_opt_abs: local,
                duality_gap: (value - attained).max(0.0),
            },
            value,
        ))
    }

    /// FOC residual against the direct-arithmetic mixture posterior.
    fn foc_residual(&self, mix: &NatureMixtureFinite, beliefs: &BeliefVector) -> f64 {
        (0..=self.n)
            .map(|k| {
                let mut num = 0.0;
                let mut den = 0.0;
                for (pi, w) in mix.iter() {
                    let m = self.marginal(pi, k);
                    num += w * m * self.q_limit(pi, k);
                    den += w * m;
                }
                if den > 0.0 {
                    (beliefs.a[k] - num / den).abs()
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `Pr(k | π)`.
pub fn marginal_count_prob(n: usize, pi: f64, k: usize) -> Result<f64> {
    let g = BinaryGame::new(n)?;
    g.check_k(k)?;
    check_precision(pi)?;
    Ok(g.marginal(pi, k))
}

/// Oracle posterior `Pr(θ = 1 | π, k)`; `½` on counts impossible under `π`.
pub fn oracle_posterior_binary(n: usize, pi: f64, k: usize) -> Result<f64> {
    let g = BinaryGame::new(n)?;
    g.check_k(k)?;
    check_precision(pi)?;
    Ok(g.posterior(pi, k))
}

/// Ex-ante regret `R(a, π)` of a belief vector.
pub fn exante_regret(beliefs: &BeliefVector, pi: f64, gen: &BregmanGenerator) -> Result<f64> {
    BinaryGame::new(beliefs.n())?.regret(beliefs, pi, gen)
}

/// The decision-maker's best reply to a mixture: the mixture-Bayes posterior.
/// It minimizes expected divergence for every Bregman generator, so the same
/// vector is returned whatever `G` is. Fails with `ZeroMassCount` if a count
/// cannot occur under the mixture.
pub fn dm_best_response(mix: &NatureMixtureFinite, n: usize, _gen: &BregmanGenerator) -> Result<BeliefVector> {
    let (a, zero) = BinaryGame::new(n)?.best_response(mix);
    match zero.first() {
        Some(&k) => Err(FiniteGameError::ZeroMassCount(k)),
        None => Ok(a),
    }
}

/// Best reply computed from scratch for a given `G`: for each count, the
/// minimizer of the conditional expected divergence, found by
/// [`crate::bregman::minimize_expected_divergence`]. Used to confirm that
/// [`dm_best_response`] does not depend on the loss.
pub fn dm_best_response_under(mix: &NatureMixtureFinite, n: usize, gen: &BregmanGenerator) -> Result<BeliefVector> {
    let g = BinaryGame::new(n)?;
    let mut a = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut pts = Vec::new();
        let mut ws = Vec::new();
        for (pi, w) in mix.iter() {
            let m = w * g.marginal(pi, k);
            if m > 0.0 {
                pts.push(g.q_limit(pi, k));
                ws.push(m);
            }
        }
        if ws.is_empty() {
            return Err(FiniteGameError::ZeroMassCount(k));
        }
        let total: f64 = ws.iter().sum();
        ws.iter_mut().for_each(|w| *w /= total);
        a.push(crate::bregman::minimize_expected_divergence(gen, &pts, &ws));
    }
    Ok(BeliefVector { a })
}

/// Nature's best reply `(π, R(a, π))`.
pub fn nature_best_response(beliefs: &BeliefVector, n: usize, gen: &BregmanGenerator, grid_size: usize) -> Result<(f64, f64)> {
    let g = BinaryGame::new(n)?;
    g.check_beliefs(beliefs)?;
    g.nature_best_response(beliefs, gen, grid_size)
}
