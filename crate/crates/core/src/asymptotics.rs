//! Learning under a fixed true process. Nature's worst case shrinks toward the
//! uninformative experiment, so the robust rule keeps discounting the data
//! even when the truth is a fixed `π_true > ½`. Its loss decays like
//! `e^{−Ξ√n}` with `Ξ = 4c*(2π_true − 1)`, while the oracle's decays like
//! `e^{−n·KL(½‖π_true)}`.
//!
//! For `n` in the thousands the beliefs sit within `e^{−50}` of `0` or `1`,
//! so rules are carried as log-beliefs and every loss is summed in the log
//! domain.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::binary_finite_game::{solve_structural, BeliefVector, FiniteGameError};
use crate::bregman::BregmanGenerator;
use crate::limit_game::{limit_log_odds, solve_limit_equilibrium, LimitError, LimitParams, LimitSolution};
use crate::numeric::{ln_choose, log_add_exp, log_sum_exp, neumaier_sum};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Error, Clone)]
pub enum AsymptoticsError {
    #[error("invalid argument: {0}")]
    Range(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Finite(#[from] FiniteGameError),
    #[error(transparent)]
    Limit(#[from] LimitError),
}

pub type Result<T> = std::result::Result<T, AsymptoticsError>;

/// The process actually generating the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueDGP {
    pub pi_true: f64,
}

impl TrueDGP {
    pub fn new(pi_true: f64) -> Result<Self> {
        if !(pi_true > 0.5 && pi_true <= 1.0) {
            return Err(AsymptoticsError::Range(format!("pi_true must lie in (1/2, 1], got {pi_true}")));
        }
        Ok(Self { pi_true })
    }

    /// `Ξ = 4c(2π_true − 1)`.
    pub fn xi(&self, c_star: f64) -> f64 {
        4.0 * c_star * (2.0 * self.pi_true - 1.0)
    }
}

/// `−ln(1 + e^{−x})`, i.e. `ln σ(x)`.
#[inline]
fn ln_sigmoid(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// A belief rule over counts `0..=n`, readable in the log domain.
pub trait CountRule {
    fn n(&self) -> usize;
    /// `ln a_k`.
    fn ln_belief(&self, k: usize) -> f64;
    /// `ln(1 − a_k)`.
    fn ln_complement(&self, k: usize) -> f64;
    fn belief(&self, k: usize) -> f64 {
        self.ln_belief(k).exp()
    }
}

impl CountRule for BeliefVector {
    fn n(&self) -> usize {
        self.a.len() - 1
    }
    fn ln_belief(&self, k: usize) -> f64 {
        self.a[k].ln()
    }
    fn ln_complement(&self, k: usize) -> f64 {
        (-self.a[k]).ln_1p()
    }
    fn belief(&self, k: usize) -> f64 {
        self.a[k]
    }
}

/// A rule stored by its log-odds `ℓ_k`, so that `a_k = σ(ℓ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogOddsRule {
    pub log_odds: Vec<f64>,
}

impl LogOddsRule {
    pub fn to_beliefs(&self) -> BeliefVector {
        BeliefVector { a: (0..=CountRule::n(self)).map(|k| self.belief(k)).collect() }
    }
}

impl CountRule for LogOddsRule {
    fn n(&self) -> usize {
        self.log_odds.len() - 1
    }
    fn ln_belief(&self, k: usize) -> f64 {
        ln_sigmoid(self.log_odds[k])
    }
    fn ln_complement(&self, k: usize) -> f64 {
        ln_sigmoid(-self.log_odds[k])
    }
}

/// Limit-game beliefs evaluated at the standardized count `(2k − n)/√n`.
pub fn robust_rule_large_n(n: usize, params: &LimitParams) -> LogOddsRule {
    let s = (n as f64).sqrt();
    LogOddsRule {
        log_odds: (0..=n)
            .map(|k| limit_log_odds((2.0 * k as f64 - n as f64) / s, params.c_star, params.w_star))
            .collect(),
    }
}

/// Oracle posteriors for precision `π`: log-odds `(2k − n)·ln(π/(1 − π))`.
pub fn oracle_rule(n: usize, pi: f64) -> LogOddsRule {
    let lr = if pi == 1.0 { f64::INFINITY } else { pi.ln() - (1.0 - pi).ln() };
    LogOddsRule {
        log_odds: (0..=n)
            .map(|k| {
                let d = 2.0 * k as f64 - n as f64;
                if d == 0.0 {
                    0.0
                } else {
                    d * lr
                }
            })
            .collect(),
    }
}

fn check_n(n: usize, rule: &(impl CountRule + ?Sized)) -> Result<()> {
    if rule.n() != n {
        return Err(AsymptoticsError::Range(format!("rule has {} counts, expected {}", rule.n() + 1, n + 1)));
    }
    Ok(())
}

/// `ln Binom(n, π, k)`, the count distribution given `θ = 1`.
fn ln_binom_pmf(n: usize, pi: f64, k: usize) -> f64 {
    let a = if k == 0 { 0.0 } else { k as f64 * pi.ln() };
    let b = if k == n { 0.0 } else { (n - k) as f64 * (1.0 - pi).ln() };
    ln_choose(n as u64, k as u64) + a + b
}

/// `ln Pr(k | π)` with the state averaged out.
fn ln_symmetric_pmf(n: usize, pi: f64, k: usize) -> f64 {
    let base = ln_binom_pmf(n, pi, k) - ln_choose(n as u64, k as u64);
    let mirror = ln_binom_pmf(n, pi, n - k) - ln_choose(n as u64, (n - k) as u64);
    ln_choose(n as u64, k as u64) - std::f64::consts::LN_2 + log_add_exp(base, mirror)
}

/// `ln L_n`, where `L_n = Σ_k Binom(n, π_true, k)(1 − a_k)²`.
pub fn log_dm_loss(n: usize, dgp: &TrueDGP, rule: &(impl CountRule + ?Sized)) -> Result<f64> {
    check_n(n, rule)?;
    let pmf: Vec<f64> = (0..=n).map(|k| ln_binom_pmf(n, dgp.pi_true, k)).collect();
    let terms: Vec<f64> = pmf.iter().enumerate().map(|(k, lp)| lp + 2.0 * rule.ln_complement(k)).collect();
    // dividing by the computed pmf mass cancels the rounding in ln C(n, k)
    Ok(log_sum_exp(&terms) - log_sum_exp(&pmf))
}

/// Mean squared loss against the state, conditional on `θ = 1`.
pub fn dm_loss(n: usize, dgp: &TrueDGP, rule: &(impl CountRule + ?Sized)) -> Result<f64> {
    Ok(log_dm_loss(n, dgp, rule)?.exp())
}

pub fn log_oracle_loss(n: usize, dgp: &TrueDGP) -> f64 {
    log_dm_loss(n, dgp, &oracle_rule(n, dgp.pi_true)).expect("matching size")
}

/// The same loss for the oracle who knows `π_true`.
pub fn oracle_loss(n: usize, dgp: &TrueDGP) -> f64 {
    log_oracle_loss(n, dgp).exp()
}

/// `ln |e^x − e^y|`.
fn ln_abs_diff(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (-(-(hi - lo)).exp_m1()).ln()
}

/// `ln |q_k − a_k|`, taken on whichever side of ½ keeps precision.
fn ln_gap(q: &LogOddsRule, rule: &(impl CountRule + ?Sized), k: usize) -> f64 {
    if q.log_odds[k] >= 0.0 {
        ln_abs_diff(q.ln_complement(k), rule.ln_complement(k))
    } else {
        ln_abs_diff(q.ln_belief(k), rule.ln_belief(k))
    }
}

/// `ln R_n^mis`.
pub fn log_misspec_regret(n: usize, dgp: &TrueDGP, rule: &(impl CountRule + ?Sized)) -> Result<f64> {
    check_n(n, rule)?;
    let q = oracle_rule(n, dgp.pi_true);
    let pmf: Vec<f64> = (0..=n).map(|k| ln_symmetric_pmf(n, dgp.pi_true, k)).collect();
    let terms: Vec<f64> = pmf.iter().enumerate().map(|(k, lp)| lp + 2.0 * ln_gap(&q, rule, k)).collect();
    Ok(log_sum_exp(&terms) - log_sum_exp(&pmf))
}

/// Ex-ante regret against the oracle when the data come from `π_true`.
pub fn misspec_regret(n: usize, dgp: &TrueDGP, rule: &(impl CountRule + ?Sized)) -> Result<f64> {
    Ok(log_misspec_regret(n, dgp, rule)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    SqrtN,
    LinearN,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub x_mode: FitMode,
}

/// Least-squares fit of `log_losses` against `√n` or `n`.
pub fn fit_log_decay_rate(ns: &[usize], log_losses: &[f64], mode: FitMode) -> Result<RateFit> {
    if ns.len() != log_losses.len() || ns.len() < 4 {
        return Err(AsymptoticsError::DegenerateFit(format!("need at least 4 matching points, got {} and {}", ns.len(), log_losses.len())));
    }
    if let Some(v) = log_losses.iter().find(|v| !v.is_finite()) {
        return Err(AsymptoticsError::DegenerateFit(format!("non-finite log loss {v}; losses must be positive")));
    }
    let x: Vec<f64> = ns
        .iter()
        .map(|&n| match mode {
            FitMode::SqrtN => (n as f64).sqrt(),
            FitMode::LinearN => n as f64,
        })
        .collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = log_losses.iter().sum::<f64>() / m;
    let sxx = neumaier_sum(x.iter().map(|xi| (xi - mx) * (xi - mx)));
    let sxy = neumaier_sum(x.iter().zip(log_losses).map(|(xi, yi)| (xi - mx) * (yi - my)));
    let syy = neumaier_sum(log_losses.iter().map(|yi| (yi - my) * (yi - my)));
    if sxx == 0.0 {
        return Err(AsymptoticsError::DegenerateFit("all sample sizes equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit { slope, intercept, r_squared, x_mode: mode })
}

/// [`fit_log_decay_rate`] on raw losses. Fails when a loss has underflowed.
pub fn fit_decay_rate(ns: &[usize], losses: &[f64], mode: FitMode) -> Result<RateFit> {
    if let Some(v) = losses.iter().find(|&&v| !(v > 0.0)) {
        return Err(AsymptoticsError::DegenerateFit(format!("loss {v} is not positive; use log-domain losses")));
    }
    let logs: Vec<f64> = losses.iter().map(|v| v.ln()).collect();
    fit_log_decay_rate(ns, &logs, mode)
}

/// `((1 − w*)/w* · e^{2c*²})² · e^{32c*²π(1 − π)}`, the limit of
/// `e^{Ξ√n} L_n`.
pub fn limit_loss_constant(params: &LimitParams, dgp: &TrueDGP) -> f64 {
    let (c, w, p) = (params.c_star, params.w_star, dgp.pi_true);
    ((1.0 - w) / w * (2.0 * c * c).exp()).powi(2) * (32.0 * c * c * p * (1.0 - p)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InferenceClassification {
    /// `Pr(|a_K − ½| < |q_K − ½|)`: the rule stays closer to the prior.
    pub p_under: f64,
    pub p_over: f64,
    pub p_tie: f64,
}

/// Compares distances from ½ of the rule and the oracle posterior, with `K`
/// distributed as `Binom(n, π_true)`.
pub fn inference_classification(n: usize, dgp: &TrueDGP, rule: &(impl CountRule + ?Sized)) -> Result<InferenceClassification> {
    check_n(n, rule)?;
    let q = oracle_rule(n, dgp.pi_true);
    let (mut under, mut over, mut tie) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..=n {
        let p = ln_binom_pmf(n, dgp.pi_true, k).exp();
        let (qa, qc) = (q.ln_belief(k), q.ln_complement(k));
        let (ra, rc) = (rule.ln_belief(k), rule.ln_complement(k));
        // distance from ½ grows as the smaller of (x, 1 − x) shrinks
        let q_small = qa.min(qc);
        let r_small = ra.min(rc);
        let bucket = if r_small > q_small {
            &mut under
        } else if r_small < q_small {
            &mut over
        } else {
            &mut tie
        };
        bucket.push(p);
    }
    // normalize by the computed total so that rounding in the pmf cannot push
    // p_under past 1
    let (u, o, t) = (neumaier_sum(under), neumaier_sum(over), neumaier_sum(tie));
    let total = u + o + t;
    Ok(InferenceClassification { p_under: u / total, p_over: o / total, p_tie: t / total })
}

/// One row of a sweep over sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRow {
    pub n: usize,
    pub l_n: f64,
    pub log_l_n: f64,
    pub l_oracle: f64,
    pub log_l_oracle: f64,
    pub r_mis: f64,
    pub log_r_mis: f64,
    pub p_under: f64,
    pub p_over: f64,
    pub p_tie: f64,
}

/// Losses, regret and inference direction of the large-`n` robust rule,
/// computed independently per `n`.
pub fn asymptotic_sweep(ns: &[usize], dgp: &TrueDGP, params: &LimitParams) -> Result<Vec<AsymptoticRow>> {
    ns.par_iter()
        .map(|&n| {
            if n == 0 {
                return Err(AsymptoticsError::Range("n must be positive".into()));
            }
            let rule = robust_rule_large_n(n, params);
            let log_l_n = log_dm_loss(n, dgp, &rule)?;
            let log_l_oracle = log_oracle_loss(n, dgp);
            let log_r_mis = log_misspec_regret(n, dgp, &rule)?;
            let c = inference_classification(n, dgp, &rule)?;
            Ok(AsymptoticRow {
                n,
                l_n: log_l_n.exp(),
                log_l_n,
                l_oracle: log_l_oracle.exp(),
                log_l_oracle,
                r_mis: log_r_mis.exp(),
                log_r_mis,
                p_under: c.p_under,
                p_over: c.p_over,
                p_tie: c.p_tie,
            })
        })
        .collect()
}

/// Points of the standard normal quantile grid used to compare finite and
/// limit beliefs.
pub const EMBEDDING_POINTS: usize = 999;

/// `sup_z |â_n(z) − a*(z)|` where `â_n` linearly interpolates the points
/// `((2k − n)/√n, a_k)` (constant beyond the end points) and `z` runs over
/// normal quantiles at levels `j/(M + 1)`.
pub fn embedded_sup_distance(beliefs: &BeliefVector, params: &LimitParams) -> f64 {
    let n = beliefs.n();
    let s = (n as f64).sqrt();
    let zs: Vec<f64> = (0..=n).map(|k| (2.0 * k as f64 - n as f64) / s).collect();
    let normal = Normal::standard();
    let interp = |z: f64| {
        if z <= zs[0] {
            return beliefs.a[0];
        }
        if z >= zs[n] {
            return beliefs.a[n];
        }
        let j = zs.partition_point(|&x| x <= z).min(n) - 1;
        let t = (z - zs[j]) / (zs[j + 1] - zs[j]);
        beliefs.a[j] + t * (beliefs.a[j + 1] - beliefs.a[j])
    };
    (1..=EMBEDDING_POINTS)
        .map(|j| {
            let z = normal.inverse_cdf(j as f64 / (EMBEDDING_POINTS + 1) as f64);
            (interp(z) - params.belief(z)).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub pi_star: f64,
    /// `√n(π_n* − ½)`, the finite analogue of `c*`.
    pub local_precision: f64,
    pub w: f64,
    pub value: f64,
    pub sup_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub limit: LimitSolution,
    pub rows: Vec<ConvergenceRow>,
}

/// Finite equilibria (structural solver, squared error) set against the limit
/// equilibrium.
pub fn convergence_table(n_list: &[usize], tol: f64) -> Result<ConvergenceTable> {
    if n_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(AsymptoticsError::Range("n_list must be strictly increasing".into()));
    }
    let limit = solve_limit_equilibrium(&QuadratureSpec::default(), tol)?;
    let gen = BregmanGenerator::mse();
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let eq = solve_structural(n, &gen)?;
            let pi_star = *eq.mixture.support.last().expect("nonempty support");
            let w = *eq.mixture.weights.last().expect("nonempty support");
            Ok(ConvergenceRow {
                n,
                pi_star,
                local_precision: (n as f64).sqrt() * (pi_star - 0.5),
                w,
                value: eq.value,
                sup_distance: embedded_sup_distance(&eq.beliefs, &limit.params),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable { limit, rows })
}
