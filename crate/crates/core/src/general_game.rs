//! Finite signal alphabets and arbitrary Bregman losses. An experiment is a
//! pair of signal distributions `(π₁, π₀)`, one per state, and `n` draws are
//! summarized by the count vector `K`.
//!
//! The general equilibrium is not solved here. Nature's support must shrink
//! toward the uninformative experiment at rate `1/√n`, and that is tested with
//! the two-point construction `{(π⁰, π⁰), (π⁰ + δ_n, π⁰ − δ_n)}` with
//! `‖δ_n‖ ∝ n^{−α}`: regret vanishes for `α ≠ ½` and plateaus at `α = ½`.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::bregman::{BregmanError, BregmanGenerator, LossKind};
use crate::numeric::{log_sum_exp, neumaier_sum};

/// Exact enumeration is refused beyond these sizes.
pub const MAX_EXACT_SIGNALS: usize = 4;
pub const MAX_EXACT_N: usize = 200;
/// Number of MC chunks; each gets its own ChaCha stream.
const MC_CHUNKS: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneralError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("count vector {0:?} has zero likelihood under both states")]
    ImpossibleEvent(Vec<usize>),
    #[error("count vector {0:?} has zero marginal mass under the mixture")]
    ZeroMassCount(Vec<usize>),
    #[error("exact enumeration needs |S| <= {MAX_EXACT_SIGNALS} and n <= {MAX_EXACT_N}, got |S| = {signals}, n = {n}; use Monte Carlo")]
    SizeLimit { signals: usize, n: usize },
    #[error("perturbed distribution leaves the simplex at n = {n}: {dist:?}")]
    SimplexViolation { n: usize, dist: Vec<f64> },
    #[error("identification fails: {0}")]
    Identification(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Bregman(#[from] BregmanError),
}

pub type Result<T> = std::result::Result<T, GeneralError>;

fn check_distribution(d: &[f64]) -> Result<()> {
    if d.len() < 2 {
        return Err(GeneralError::InvalidDistribution(format!("need at least 2 signals, got {}", d.len())));
    }
    if let Some(x) = d.iter().find(|x| !(**x >= 0.0 && **x <= 1.0)) {
        return Err(GeneralError::InvalidDistribution(format!("entry {x} outside [0, 1]")));
    }
    let s = neumaier_sum(d.iter().copied());
    if (s - 1.0).abs() > 1e-12 {
        return Err(GeneralError::InvalidDistribution(format!("entries sum to {s}")));
    }
    Ok(())
}

/// `KL(p‖q)`, infinite when `q` misses mass of `p`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    neumaier_sum(p.iter().zip(q).map(|(&a, &b)| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    }))
}

/// Signal distributions under `θ = 1` and `θ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultinomialExperiment {
    pub pi1: Vec<f64>,
    pub pi0: Vec<f64>,
}

impl MultinomialExperiment {
    pub fn new(pi1: Vec<f64>, pi0: Vec<f64>) -> Result<Self> {
        check_distribution(&pi1)?;
        check_distribution(&pi0)?;
        if pi1.len() != pi0.len() {
            return Err(GeneralError::Dimension(format!("|S| = {} vs {}", pi1.len(), pi0.len())));
        }
        Ok(Self { pi1, pi0 })
    }

    pub fn uninformative(base: Vec<f64>) -> Result<Self> {
        Self::new(base.clone(), base)
    }

    /// Binary signals `(high, low)` matching the state with probability `π`.
    pub fn binary(pi: f64) -> Result<Self> {
        Self::new(vec![pi, 1.0 - pi], vec![1.0 - pi, pi])
    }

    pub fn signals(&self) -> usize {
        self.pi1.len()
    }

    pub fn is_uninformative(&self) -> bool {
        self.pi1 == self.pi0
    }

    /// `‖π₁ − π₀‖₁`.
    pub fn l1_gap(&self) -> f64 {
        self.pi1.iter().zip(&self.pi0).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Nature's mixed strategy over experiments, with the prior on `θ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralMixture {
    pub support: Vec<MultinomialExperiment>,
    pub weights: Vec<f64>,
    pub prior_mu: f64,
}

impl GeneralMixture {
    pub fn new(support: Vec<MultinomialExperiment>, weights: Vec<f64>, prior_mu: f64) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(GeneralError::InvalidMixture(format!("{} experiments, {} weights", support.len(), weights.len())));
        }
        if !(prior_mu > 0.0 && prior_mu < 1.0) {
            return Err(GeneralError::InvalidMixture(format!("prior {prior_mu} outside (0, 1)")));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (neumaier_sum(weights.iter().copied()) - 1.0).abs() > 1e-12 {
            return Err(GeneralError::InvalidMixture(format!("weights {weights:?} are not a distribution")));
        }
        let s = support[0].signals();
        if support.iter().any(|e| e.signals() != s) {
            return Err(GeneralError::Dimension("experiments use different alphabets".into()));
        }
        Ok(Self { support, weights, prior_mu })
    }

    pub fn single(exp: MultinomialExperiment, prior_mu: f64) -> Result<Self> {
        Self::new(vec![exp], vec![1.0], prior_mu)
    }

    pub fn signals(&self) -> usize {
        self.support[0].signals()
    }
}

/// Signal counts from `n` draws.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CountVector {
    pub counts: Vec<usize>,
    pub n: usize,
}

impl CountVector {
    pub fn new(counts: Vec<usize>) -> Self {
        let n = counts.iter().sum();
        Self { counts, n }
    }

    /// `ln(n! / ∏ K_s!)`.
    pub fn ln_multinomial_coefficient(&self) -> f64 {
        ln_factorial(self.n as u64) - self.counts.iter().map(|&k| ln_factorial(k as u64)).sum::<f64>()
    }

    /// Every count vector over `signals` symbols summing to `n`, in
    /// lexicographic order.
    pub fn enumerate(n: usize, signals: usize) -> Vec<CountVector> {
        fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<CountVector>) {
            if slots == 1 {
                cur.push(left);
                out.push(CountVector::new(cur.clone()));
                cur.pop();
                return;
            }
            for k in 0..=left {
                cur.push(k);
                rec(left - k, slots - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if signals > 0 {
            rec(n, signals, &mut Vec::with_capacity(signals), &mut out);
        }
        out
    }
}

/// `Σ_s K_s ln π(s)`, `−∞` when a drawn signal has probability zero.
pub fn log_multinomial_likelihood(dist: &[f64], counts: &CountVector) -> f64 {
    let mut acc = Vec::with_capacity(dist.len());
    for (&p, &k) in dist.iter().zip(&counts.counts) {
        if k == 0 {
            continue;
        }
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc.push(k as f64 * p.ln());
    }
    neumaier_sum(acc)
}

/// `μ l₁ / (μ l₁ + (1 − μ) l₀)` with the larger likelihood factored out.
pub fn oracle_posterior_general(counts: &CountVector, exp: &MultinomialExperiment, mu: f64) -> Result<f64> {
    let l1 = log_multinomial_likelihood(&exp.pi1, counts);
    let l0 = log_multinomial_likelihood(&exp.pi0, counts);
    posterior_from_logs(l1, l0, mu).ok_or_else(|| GeneralError::ImpossibleEvent(counts.counts.clone()))
}

fn posterior_from_logs(l1: f64, l0: f64, mu: f64) -> Option<f64> {
    let m = l1.max(l0);
    if m == f64::NEG_INFINITY {
        return None;
    }
    let x1 = mu * (l1 - m).exp();
    let x0 = (1.0 - mu) * (l0 - m).exp();
    Some(x1 / (x1 + x0))
}

/// Anything that maps count vectors to beliefs.
pub trait BeliefRule: Sync {
    fn belief(&self, counts: &CountVector) -> Result<f64>;

    /// `ln(a / (1 − a))`. Rules that can should override this, since beliefs
    /// within an ulp of 0 or 1 lose the information a log loss needs.
    fn log_odds(&self, counts: &CountVector) -> Result<f64> {
        let a = self.belief(counts)?;
        Ok(a.ln() - (1.0 - a).ln())
    }
}

fn softplus(x: f64) -> f64 {
    if x == f64::INFINITY {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// `KL(q‖a)` for Bernoulli beliefs given as log-odds.
pub fn log_odds_kl(lq: f64, la: f64) -> f64 {
    if lq == la {
        return 0.0;
    }
    // ln q = −softplus(−lq), ln(1 − q) = −softplus(lq)
    let q = 1.0 / (1.0 + (-lq).exp());
    let hi = if q > 0.0 { q * (softplus(-la) - softplus(-lq)) } else { 0.0 };
    let lo = if q < 1.0 { (1.0 - q) * (softplus(la) - softplus(lq)) } else { 0.0 };
    (hi + lo).max(0.0)
}

fn divergence_of(gen: &BregmanGenerator, lq: f64, q: f64, rule: &impl BeliefRule, k: &CountVector) -> Result<f64> {
    if gen.kind() == LossKind::Log {
        let d = log_odds_kl(lq, rule.log_odds(k)?);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(BregmanError::InfiniteDivergence { p: q, a: rule.belief(k)? }.into())
        }
    } else {
        Ok(gen.try_divergence(q, rule.belief(k)?)?)
    }
}

impl<F: Fn(&CountVector) -> f64 + Sync> BeliefRule for F {
    fn belief(&self, counts: &CountVector) -> Result<f64> {
        Ok(self(counts))
    }
}

/// The mixture-Bayes rule: the posterior of `θ = 1` with the experiment
/// integrated out under Nature's mixture. It does not depend on the loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralRule {
    pub mixture: GeneralMixture,
    pub n: usize,
}

impl GeneralRule {
    fn up_down(&self, counts: &CountVector) -> Result<(f64, f64)> {
        if counts.n != self.n || counts.counts.len() != self.mixture.signals() {
            return Err(GeneralError::Dimension(format!("count vector {:?} for n = {}", counts.counts, self.n)));
        }
        let mu = self.mixture.prior_mu;
        let mut up = Vec::with_capacity(self.mixture.support.len());
        let mut down = Vec::with_capacity(self.mixture.support.len());
        for (e, &w) in self.mixture.support.iter().zip(&self.mixture.weights) {
            if w <= 0.0 {
                continue;
            }
            up.push(w.ln() + mu.ln() + log_multinomial_likelihood(&e.pi1, counts));
            down.push(w.ln() + (1.0 - mu).ln() + log_multinomial_likelihood(&e.pi0, counts));
        }
        let (lu, ld) = (log_sum_exp(&up), log_sum_exp(&down));
        if lu.max(ld) == f64::NEG_INFINITY {
            return Err(GeneralError::ZeroMassCount(counts.counts.clone()));
        }
        Ok((lu, ld))
    }
}

impl BeliefRule for GeneralRule {
    fn belief(&self, counts: &CountVector) -> Result<f64> {
        let (lu, ld) = self.up_down(counts)?;
        let m = lu.max(ld);
        let (x1, x0) = ((lu - m).exp(), (ld - m).exp());
        Ok(x1 / (x1 + x0))
    }

    fn log_odds(&self, counts: &CountVector) -> Result<f64> {
        let (lu, ld) = self.up_down(counts)?;
        Ok(lu - ld)
    }
}

pub fn dm_rule_general(mix: &GeneralMixture, n: usize) -> GeneralRule {
    GeneralRule { mixture: mix.clone(), n }
}

/// The same posterior computed per count vector as the minimizer of expected
/// divergence under `gen`, for checking loss independence.
pub fn dm_rule_general_under(mix: &GeneralMixture, counts: &CountVector, gen: &BregmanGenerator) -> Result<f64> {
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for (e, &w) in mix.support.iter().zip(&mix.weights) {
        let l1 = log_multinomial_likelihood(&e.pi1, counts);
        let l0 = log_multinomial_likelihood(&e.pi0, counts);
        let Some(q) = posterior_from_logs(l1, l0, mix.prior_mu) else { continue };
        let lm = crate::numeric::log_add_exp(mix.prior_mu.ln() + l1, (1.0 - mix.prior_mu).ln() + l0);
        if w > 0.0 {
            pts.push(q);
            ws.push(w.ln() + lm);
        }
    }
    if pts.is_empty() {
        return Err(GeneralError::ZeroMassCount(counts.counts.clone()));
    }
    let top = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ws: Vec<f64> = ws.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= total);
    Ok(crate::bregman::minimize_expected_divergence(gen, &pts, &ws))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RegretMode {
    Exact,
    MonteCarlo { draws: usize, seed: u64 },
    /// Exact when within the enumeration limits, Monte Carlo otherwise.
    Auto { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretEstimate {
    pub value: f64,
    /// Zero for exact evaluation.
    pub stderr: f64,
    pub exact: bool,
}

fn exact_allowed(signals: usize, n: usize) -> bool {
    signals <= MAX_EXACT_SIGNALS && n <= MAX_EXACT_N
}

/// `E_{σ, θ, K} B_G(q_oracle(K; π) ‖ a(K))`.
pub fn general_regret(
    mix: &GeneralMixture,
    rule: &impl BeliefRule,
    n: usize,
    gen: &BregmanGenerator,
    mode: RegretMode,
) -> Result<RegretEstimate> {
    let s = mix.signals();
    match mode {
        RegretMode::Exact if !exact_allowed(s, n) => Err(GeneralError::SizeLimit { signals: s, n }),
        RegretMode::Exact => exact_regret(mix, rule, n, gen),
        RegretMode::Auto { .. } if exact_allowed(s, n) => exact_regret(mix, rule, n, gen),
        RegretMode::MonteCarlo { draws, seed } | RegretMode::Auto { draws, seed } => mc_regret(mix, rule, n, gen, draws, seed),
    }
}

fn exact_regret(mix: &GeneralMixture, rule: &impl BeliefRule, n: usize, gen: &BregmanGenerator) -> Result<RegretEstimate> {
    let mu = mix.prior_mu;
    let parts = CountVector::enumerate(n, mix.signals())
        .par_iter()
        .map(|k| -> Result<f64> {
            let coeff = k.ln_multinomial_coefficient();
            let mut terms = Vec::with_capacity(mix.support.len());
            for (e, &w) in mix.support.iter().zip(&mix.weights) {
                if w <= 0.0 {
                    continue;
                }
                let l1 = log_multinomial_likelihood(&e.pi1, k);
                let l0 = log_multinomial_likelihood(&e.pi0, k);
                let Some(q) = posterior_from_logs(l1, l0, mu) else { continue };
                let lm = crate::numeric::log_add_exp(mu.ln() + l1, (1.0 - mu).ln() + l0);
                let lq = mu.ln() + l1 - (1.0 - mu).ln() - l0;
                terms.push(w * (coeff + lm).exp() * divergence_of(gen, lq, q, rule, k)?);
            }
            Ok(neumaier_sum(terms))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RegretEstimate { value: neumaier_sum(parts), stderr: 0.0, exact: true })
}

/// Draws a multinomial count vector by sequential binomials.
fn sample_counts(rng: &mut ChaCha8Rng, n: usize, dist: &[f64]) -> CountVector {
    let mut left = n as u64;
    let mut mass = 1.0;
    let mut counts = Vec::with_capacity(dist.len());
    for (i, &p) in dist.iter().enumerate() {
        if i + 1 == dist.len() {
            counts.push(left as usize);
            break;
        }
        let k = if left == 0 || p <= 0.0 {
            0
        } else if p >= mass {
            left
        } else {
            rng.sample(Binomial::new(left, (p / mass).clamp(0.0, 1.0)).expect("valid binomial"))
        };
        counts.push(k as usize);
        left -= k;
        mass -= p;
    }
    CountVector::new(counts)
}

fn mc_regret(mix: &GeneralMixture, rule: &impl BeliefRule, n: usize, gen: &BregmanGenerator, draws: usize, seed: u64) -> Result<RegretEstimate> {
    if draws < 2 {
        return Err(GeneralError::InvalidMixture("Monte Carlo needs at least 2 draws".into()));
    }
    let mu = mix.prior_mu;
    let cum: Vec<f64> = mix
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let per = draws.div_ceil(MC_CHUNKS as usize);
    let chunks = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64, usize)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let todo = per.min(draws.saturating_sub(c as usize * per));
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..todo {
                let u: f64 = rng.random();
                let i = cum.iter().position(|&x| u < x).unwrap_or(cum.len() - 1);
                let e = &mix.support[i];
                let theta_one = rng.random::<f64>() < mu;
                let k = sample_counts(&mut rng, n, if theta_one { &e.pi1 } else { &e.pi0 });
                let q = oracle_posterior_general(&k, e, mu)?;
                let l1 = log_multinomial_likelihood(&e.pi1, &k);
                let l0 = log_multinomial_likelihood(&e.pi0, &k);
                let d = divergence_of(gen, mu.ln() + l1 - (1.0 - mu).ln() - l0, q, rule, &k)?;
                sum += d;
                sq += d * d;
            }
            Ok((sum, sq, todo))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: usize = chunks.iter().map(|c| c.2).sum();
    let m = total as f64;
    let mean = neumaier_sum(chunks.iter().map(|c| c.0)) / m;
    let var = (neumaier_sum(chunks.iter().map(|c| c.1)) / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok(RegretEstimate { value: mean, stderr: (var / m).sqrt(), exact: false })
}

/// `base ± (c/2)·n^{−α}·direction`.
fn perturb(base: &[f64], direction: &[f64], c: f64, alpha: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let scale = 0.5 * c * (n as f64).powf(-alpha);
    let up = base.iter().zip(direction).map(|(b, d)| b + scale * d).collect();
    let down = base.iter().zip(direction).map(|(b, d)| b - scale * d).collect();
    (up, down)
}

fn in_simplex(d: &[f64]) -> bool {
    d.iter().all(|&x| (0.0..=1.0).contains(&x))
}

/// Largest `c` keeping `base ± (c/2)n^{−α}·direction` in the simplex for
/// every `n ≥ n_min`.
pub fn max_feasible_c(base: &[f64], direction: &[f64], alpha: f64, n_min: usize) -> f64 {
    let scale = 0.5 * (n_min as f64).powf(-alpha);
    base.iter()
        .zip(direction)
        .filter(|(_, d)| **d != 0.0)
        .map(|(b, d)| b.min(1.0 - b) / (scale * d.abs()))
        .fold(f64::INFINITY, f64::min)
}

/// `c` clipped to 99% of [`max_feasible_c`].
pub fn clip_c(c: f64, base: &[f64], direction: &[f64], alpha: f64, n_min: usize) -> f64 {
    c.min(0.99 * max_feasible_c(base, direction, alpha, n_min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub alpha: f64,
    pub n: usize,
    pub regret: f64,
    pub stderr: f64,
    /// `‖π₁ − π₀‖₁` of the informative experiment.
    pub l1_gap: f64,
}

/// Regret of the mixture-Bayes rule against Nature's equal-weight mixture of
/// the uninformative experiment and `(π⁰ + δ_n, π⁰ − δ_n)`, for each `n`.
pub fn rate_experiment(
    base: &[f64],
    direction: &[f64],
    c: f64,
    alpha: f64,
    n_list: &[usize],
    gen: &BregmanGenerator,
    mu: f64,
    mode: RegretMode,
) -> Result<Vec<RatePoint>> {
    check_distribution(base)?;
    if direction.len() != base.len() {
        return Err(GeneralError::Dimension(format!("direction has {} entries for |S| = {}", direction.len(), base.len())));
    }
    if neumaier_sum(direction.iter().copied()).abs() > 1e-12 || direction.iter().all(|&d| d == 0.0) {
        return Err(GeneralError::InvalidDistribution("direction must be nonzero and sum to 0".into()));
    }
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (up, down) = perturb(base, direction, c, alpha, n);
        for d in [&up, &down] {
            if !in_simplex(d) {
                return Err(GeneralError::SimplexViolation { n, dist: d.clone() });
            }
        }
        // rounding in the perturbation can leave sums a few ulps off 1
        let fix = |mut d: Vec<f64>| {
            let s: f64 = d.iter().sum();
            d.iter_mut().for_each(|x| *x /= s);
            d
        };
        let informative = MultinomialExperiment::new(fix(up), fix(down))?;
        let l1_gap = informative.l1_gap();
        let mix = GeneralMixture::new(vec![MultinomialExperiment::uninformative(base.to_vec())?, informative], vec![0.5, 0.5], mu)?;
        let rule = dm_rule_general(&mix, n);
        let r = general_regret(&mix, &rule, n, gen, mode)?;
        out.push(RatePoint { alpha, n, regret: r.value, stderr: r.stderr, l1_gap });
    }
    Ok(out)
}

/// Requires exactly one uninformative experiment (up to equal distributions)
/// and, for every ordered pair of distinct experiments,
/// `KL(π₁‖π₁′) ≤ KL(π₁‖π₀′)` and `KL(π₀‖π₀′) ≤ KL(π₀‖π₁′)`.
pub fn validate_identification(experiments: &[MultinomialExperiment]) -> Result<()> {
    let flat: Vec<&MultinomialExperiment> = experiments.iter().filter(|e| e.is_uninformative()).collect();
    match flat.as_slice() {
        [] => return Err(GeneralError::Identification("no uninformative experiment".into())),
        [first, rest @ ..] if rest.iter().any(|e| e.pi1 != first.pi1) => {
            return Err(GeneralError::Identification("more than one uninformative distribution".into()))
        }
        _ => {}
    }
    for (i, e) in experiments.iter().enumerate() {
        for (j, f) in experiments.iter().enumerate() {
            if i == j || e == f {
                continue;
            }
            let ok1 = kl_divergence(&e.pi1, &f.pi1) <= kl_divergence(&e.pi1, &f.pi0) + 1e-15;
            let ok0 = kl_divergence(&e.pi0, &f.pi0) <= kl_divergence(&e.pi0, &f.pi1) + 1e-15;
            if !(ok1 && ok0) {
                return Err(GeneralError::Identification(format!("experiments {i} and {j} violate the KL ordering")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    /// Monte Carlo mean of `(1/n) ln(l(π₁; K)/l(π₀; K))`, `K ~ Mult(n, π_true)`.
    pub llr_mean: f64,
    pub llr_stderr: f64,
    /// `KL(π_true‖π₀) − KL(π_true‖π₁)`.
    pub kl_difference: f64,
    pub llr_within_3se: bool,
    /// `(ε, |KL(π̃‖π) − Q| / ‖π − π̃‖₁³)` with `π = π̃ + ε·d`.
    pub quadratic_remainder: Vec<(f64, f64)>,
}

/// `½ Σ_s (π(s) − π̃(s))² / π̃(s)`.
pub fn kl_quadratic_form(tilde: &[f64], pi: &[f64]) -> f64 {
    0.5 * tilde.iter().zip(pi).map(|(t, p)| (p - t) * (p - t) / t).sum::<f64>()
}

/// Remainder of the quadratic KL expansion around `tilde` along `direction`.
pub fn kl_quadratic_remainder(tilde: &[f64], direction: &[f64], eps: &[f64]) -> Vec<(f64, f64)> {
    eps.iter()
        .map(|&e| {
            let pi: Vec<f64> = tilde.iter().zip(direction).map(|(t, d)| t + e * d).collect();
            let norm: f64 = pi.iter().zip(tilde).map(|(p, t)| (p - t).abs()).sum();
            (e, (kl_divergence(tilde, &pi) - kl_quadratic_form(tilde, &pi)).abs() / norm.powi(3))
        })
        .collect()
}

/// Checks the two supporting lemmas: concentration of the normalized
/// log-likelihood ratio and the local quadratic form of multinomial KL.
/// The expansion is probed around `π_true` along `π₁ − π₀` (or along
/// `(1, −1, 0, …)` when the experiment is uninformative).
pub fn lemma_checks(exp: &MultinomialExperiment, pi_true: &[f64], n: usize, samples: usize, seed: u64) -> Result<LemmaReport> {
    check_distribution(pi_true)?;
    if pi_true.len() != exp.signals() {
        return Err(GeneralError::Dimension("pi_true and experiment differ in |S|".into()));
    }
    if pi_true.iter().any(|&p| p <= 0.0) {
        return Err(GeneralError::InvalidDistribution("pi_true must be strictly positive".into()));
    }
    if exp.pi1.iter().chain(&exp.pi0).any(|&p| p <= 0.0) {
        return Err(GeneralError::InvalidDistribution("experiment must be strictly positive for a finite LLR".into()));
    }
    if samples < 10_000 || n == 0 {
        return Err(GeneralError::InvalidMixture("need n >= 1 and at least 10^4 samples".into()));
    }
    let lr: Vec<f64> = exp.pi1.iter().zip(&exp.pi0).map(|(a, b)| a.ln() - b.ln()).collect();
    let per = samples.div_ceil(MC_CHUNKS as usize);
    let chunks: Vec<(f64, f64, usize)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let todo = per.min(samples.saturating_sub(c as usize * per));
            let (mut s, mut sq) = (0.0, 0.0);
            for _ in 0..todo {
                let k = sample_counts(&mut rng, n, pi_true);
                let v = k.counts.iter().zip(&lr).map(|(&k, l)| k as f64 * l).sum::<f64>() / n as f64;
                s += v;
                sq += v * v;
            }
            (s, sq, todo)
        })
        .collect();
    let m = samples as f64;
    let mean = chunks.iter().map(|c| c.0).sum::<f64>() / m;
    let var = (chunks.iter().map(|c| c.1).sum::<f64>() / m - mean * mean).max(0.0) * m / (m - 1.0);
    let stderr = (var / m).sqrt();
    let kl_difference = kl_divergence(pi_true, &exp.pi0) - kl_divergence(pi_true, &exp.pi1);
    let within = (mean - kl_difference).abs() <= 3.0 * stderr + 1e-15;

    let mut dir: Vec<f64> = exp.pi1.iter().zip(&exp.pi0).map(|(a, b)| a - b).collect();
    if dir.iter().all(|&d| d == 0.0) {
        dir = vec![0.0; pi_true.len()];
        dir[0] = 1.0;
        dir[1] = -1.0;
    }
    // keep every probe inside the simplex
    let reach = max_step(pi_true, &dir);
    let eps: Vec<f64> = [0.2, 0.1, 0.05, 0.025].iter().map(|f| f * reach).collect();
    Ok(LemmaReport {
        llr_mean: mean,
        llr_stderr: stderr,
        kl_difference,
        llr_within_3se: within,
        quadratic_remainder: kl_quadratic_remainder(pi_true, &dir, &eps),
    })
}

fn max_step(base: &[f64], dir: &[f64]) -> f64 {
    base.iter()
        .zip(dir)
        .filter(|(_, d)| **d != 0.0)
        .map(|(b, d)| if *d > 0.0 { (1.0 - b) / d } else { b / -d })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn likelihood_examples() {
        let c = CountVector::new(vec![3, 1]);
        assert!((log_multinomial_likelihood(&[0.5, 0.5], &c) - 4.0 * 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(log_multinomial_likelihood(&[1.0, 0.0], &CountVector::new(vec![0, 1])), f64::NEG_INFINITY);
        let v = log_multinomial_likelihood(&[0.7, 0.3], &CountVector::new(vec![2, 1]));
        assert!((v - (2.0 * 0.7f64.ln() + 0.3f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(CountVector::enumerate(4, 2).len(), 5);
        assert_eq!(CountVector::enumerate(10, 3).len(), 66);
        assert_eq!(CountVector::enumerate(6, 4).len(), 84);
        assert!(CountVector::enumerate(7, 3).iter().all(|k| k.n == 7));
    }

    #[test]
    fn oracle_examples() {
        let flat = MultinomialExperiment::uninformative(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(oracle_posterior_general(&CountVector::new(vec![4, 0, 2]), &flat, 0.37).unwrap(), 0.37);
        let e = MultinomialExperiment::new(vec![0.2, 0.8], vec![1.0, 0.0]).unwrap();
        assert_eq!(oracle_posterior_general(&CountVector::new(vec![1, 3]), &e, 0.5).unwrap(), 1.0);
        let e = MultinomialExperiment::new(vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(oracle_posterior_general(&CountVector::new(vec![0, 2]), &e, 0.5), Err(GeneralError::ImpossibleEvent(_))));
    }

    #[test]
    fn validation() {
        assert!(MultinomialExperiment::new(vec![0.5, 0.6], vec![0.5, 0.5]).is_err());
        assert!(MultinomialExperiment::new(vec![1.0], vec![1.0]).is_err());
        assert!(MultinomialExperiment::new(vec![0.5, 0.5], vec![0.2, 0.3, 0.5]).is_err());
        let e = MultinomialExperiment::binary(0.7).unwrap();
        assert!(GeneralMixture::new(vec![e.clone()], vec![1.0], 1.0).is_err());
        assert!(GeneralMixture::new(vec![e.clone(), e], vec![0.7, 0.4], 0.5).is_err());
    }

    #[test]
    fn size_limit() {
        let mix = GeneralMixture::single(MultinomialExperiment::uninformative(vec![0.2; 5]).unwrap(), 0.5).unwrap();
        let rule = dm_rule_general(&mix, 10);
        let r = general_regret(&mix, &rule, 10, &BregmanGenerator::mse(), RegretMode::Exact);
        assert!(matches!(r, Err(GeneralError::SizeLimit { signals: 5, n: 10 })));
        let r = general_regret(&mix, &rule, 10, &BregmanGenerator::mse(), RegretMode::Auto { draws: 1000, seed: 1 }).unwrap();
        assert!(!r.exact && r.value == 0.0);
    }

    #[test]
    fn quadratic_form_remainder() {
        let t = [1.0 / 3.0; 3];
        let r = kl_quadratic_remainder(&t, &[1.0, -0.5, -0.5], &[0.02, 0.01, 0.005]);
        assert!(r[2].1 <= r[0].1 * 1.1, "{r:?}");
    }
}
