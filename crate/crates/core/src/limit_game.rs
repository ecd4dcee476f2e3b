//! The Gaussian limit game. The local precision `c` shifts a unit-variance
//! normal signal to `N(±2c, 1)` depending on the state, the oracle posterior
//! is `σ(4cz)`, and Nature mixes between `c = 0` and a single informative
//! `c*`. Only squared error is treated here.
//!
//! The equilibrium is found by nested bisection: for each `c` the weight
//! `w₁(c)` solves Nature's indifference `F₁(c, w) = 0`, then `c*` solves
//! `J(c) = F₂(c, w₁(c)) = 0`, where `F₂` is the slope of the regret in Nature's
//! precision with the beliefs held fixed.

use rand::SeedableRng;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::numeric::{bisect, golden_section_max, log_add_exp};
use crate::quadrature::{QuadratureError, QuadratureSpec};

/// Cross-rule disagreement that is reported as an error.
pub const CROSS_CHECK_TOL: f64 = 1e-6;
/// Step for the central finite-difference slope of the regret profile.
pub const PROFILE_FD_STEP: f64 = 1e-4;

const BRACKET: (f64, f64) = (0.2, 1.0);
const WIDE_BRACKET: (f64, f64) = (0.05, 2.0);
const MAX_BISECT: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invalid argument: {0}")]
    Domain(String),
    #[error("J has no sign change on [{lo}, {hi}]: J(lo) = {j_lo}, J(hi) = {j_hi}")]
    NoBracket { lo: f64, hi: f64, j_lo: f64, j_hi: f64 },
    #[error("residuals (F1, F2) = ({f1:e}, {f2:e}) exceed tolerance {tol:e}")]
    NotConverged { f1: f64, f2: f64, tol: f64 },
    #[error("regret profile has {peaks} local maxima, expected 2")]
    ShapeViolation { peaks: usize },
}

pub type Result<T> = std::result::Result<T, LimitError>;

/// Nature's equilibrium in the limit game: `c = 0` with probability `1 − w*`
/// and `c = c*` with probability `w*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitParams {
    pub c_star: f64,
    pub w_star: f64,
}

impl LimitParams {
    pub fn new(c_star: f64, w_star: f64) -> Result<Self> {
        if !(c_star > 0.0 && c_star.is_finite()) {
            return Err(LimitError::Domain(format!("c_star must be positive, got {c_star}")));
        }
        if !(w_star > 0.0 && w_star < 1.0) {
            return Err(LimitError::Domain(format!("w_star must lie in (0, 1), got {w_star}")));
        }
        Ok(Self { c_star, w_star })
    }

    /// The DM's equilibrium belief at signal `z`.
    pub fn belief(&self, z: f64) -> f64 {
        limit_posterior(z, self.c_star, self.w_star)
    }
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

fn ln_odds(w: f64) -> f64 {
    w.ln() - (1.0 - w).ln()
}

/// Oracle posterior `σ(4cz)` when the precision is known to be `c`.
#[inline]
pub fn oracle_limit_posterior(z: f64, c: f64) -> f64 {
    logistic(4.0 * c * z)
}

/// Log-odds of [`limit_posterior`]. Antisymmetric in `z` by construction.
pub fn limit_log_odds(z: f64, c: f64, w: f64) -> f64 {
    let (lw, l1w) = (w.ln(), (1.0 - w).ln());
    let s = -2.0 * c * c;
    log_add_exp(l1w, lw + 2.0 * c * z + s) - log_add_exp(l1w, lw - 2.0 * c * z + s)
}

/// Bayes posterior of the state given `z` when the prior over precision puts
/// mass `1 − w` on `0` and `w` on `c`.
pub fn limit_posterior(z: f64, c: f64, w: f64) -> f64 {
    logistic(limit_log_odds(z, c, w))
}

/// `d/dz` of [`limit_posterior`].
pub fn limit_posterior_dz(z: f64, c: f64, w: f64) -> f64 {
    let a = limit_posterior(z, c, w);
    let lo = ln_odds(w);
    let s = -2.0 * c * c;
    let dl = 2.0 * c * (logistic(2.0 * c * z + s + lo) + logistic(-2.0 * c * z + s + lo));
    a * (1.0 - a) * dl
}

/// `R̃(a, c)`: expected squared distance between the oracle posterior and
/// `belief`, with `Z` drawn from the equal mixture of `N(2c, 1)` and `N(−2c, 1)`.
pub fn limit_regret<F: Fn(f64) -> f64>(belief: F, c: f64, quad: &QuadratureSpec) -> f64 {
    let integrand = |z: f64| {
        let d = oracle_limit_posterior(z, c) - belief(z);
        d * d
    };
    0.5 * quad.normal_expectation(2.0 * c, integrand) + 0.5 * quad.normal_expectation(-2.0 * c, integrand)
}

/// [`limit_regret`] recomputed under the other quadrature rule; errors if the
/// two disagree by more than [`CROSS_CHECK_TOL`].
pub fn limit_regret_checked<F: Fn(f64) -> f64>(belief: F, c: f64, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    let primary = limit_regret(&belief, c, quad);
    let check = limit_regret(&belief, c, &quad.alternate());
    let diff = (primary - check).abs();
    if diff > CROSS_CHECK_TOL {
        return Err(QuadratureError::Disagreement { primary, check, diff }.into());
    }
    Ok(primary)
}

/// `∂R̃(a, b)/∂b` for a fixed differentiable belief. Differentiates under the
/// integral after the change of variables `z = x ± 2b`.
pub fn limit_regret_db<F, D>(belief: F, belief_dz: D, b: f64, quad: &QuadratureSpec) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let parts = |z: f64| {
        let q = oracle_limit_posterior(z, b);
        let v = q * (1.0 - q);
        let d = q - belief(z);
        let f_z = 2.0 * d * (4.0 * b * v - belief_dz(z));
        let f_b = 2.0 * d * 4.0 * z * v;
        (f_z, f_b)
    };
    let up = quad.normal_expectation(2.0 * b, |z| {
        let (fz, fb) = parts(z);
        2.0 * fz + fb
    });
    let down = quad.normal_expectation(-2.0 * b, |z| {
        let (fz, fb) = parts(z);
        -2.0 * fz + fb
    });
    0.5 * (up + down)
}

/// `F₁(c, w) = R̃(a, c) − R̃(a, 0)` with `a` the mixture posterior for `(c, w)`.
pub fn f1(c: f64, w: f64, quad: &QuadratureSpec) -> f64 {
    let a = |z: f64| limit_posterior(z, c, w);
    limit_regret(a, c, quad) - limit_regret(a, 0.0, quad)
}

/// `F₂(c, w)`: slope of `b ↦ R̃(a, b)` at `b = c`, beliefs fixed at the
/// mixture posterior for `(c, w)`.
pub fn f2(c: f64, w: f64, quad: &QuadratureSpec) -> f64 {
    limit_regret_db(|z| limit_posterior(z, c, w), |z| limit_posterior_dz(z, c, w), c, quad)
}

/// Central finite-difference version of [`f2`], an independent path.
pub fn f2_finite_difference(c: f64, w: f64, h: f64, quad: &QuadratureSpec) -> f64 {
    let a = |z: f64| limit_posterior(z, c, w);
    (limit_regret(a, c + h, quad) - limit_regret(a, c - h, quad)) / (2.0 * h)
}

fn check_cw(c: f64, w: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(LimitError::Domain(format!("c must be positive, got {c}")));
    }
    if !(w > 0.0 && w < 1.0) {
        return Err(LimitError::Domain(format!("w must lie in (0, 1), got {w}")));
    }
    Ok(())
}

/// `(F₁(c, w), F₂(c, w))`.
pub fn stationarity_residuals(c: f64, w: f64, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    check_cw(c, w)?;
    quad.validate()?;
    Ok((f1(c, w, quad), f2(c, w, quad)))
}

/// The weight `w₁(c)` making Nature indifferent between `0` and `c`.
/// `F₁(c, ·)` is positive at `0`, negative at `1` and strictly decreasing.
pub fn indifference_weight(c: f64, quad: &QuadratureSpec) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(LimitError::Domain(format!("c must be positive, got {c}")));
    }
    bisect(|w| f1(c, w, quad), 0.0, 1.0, MAX_BISECT, 1e-16, 0.0)
        .map_err(|e| LimitError::Domain(format!("indifference weight at c = {c}: {e}")))
}

/// `J(c) = F₂(c, w₁(c))`.
pub fn j_function(c: f64, quad: &QuadratureSpec) -> Result<f64> {
    let w = indifference_weight(c, quad)?;
    Ok(f2(c, w, quad))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitSolution {
    pub params: LimitParams,
    pub value: f64,
    /// `(F₁, F₂)` at the solution.
    pub residuals: (f64, f64),
    pub bracket: (f64, f64),
    /// `J` at the two ends of the bracket actually used.
    pub j_bracket: (f64, f64),
    pub quadrature: QuadratureSpec,
}

/// Nested bisection for `(c*, w*)`. The outer bracket is `[0.2, 1]`, widened
/// to `[0.05, 2]` if `J` does not change sign there.
pub fn solve_limit_equilibrium(quad: &QuadratureSpec, tol: f64) -> Result<LimitSolution> {
    if !(tol > 0.0 && tol <= 1e-8) {
        return Err(LimitError::Domain(format!("tol must lie in (0, 1e-8], got {tol}")));
    }
    quad.validate()?;
    let mut bracket = BRACKET;
    let mut j = (j_function(bracket.0, quad)?, j_function(bracket.1, quad)?);
    if j.0 * j.1 >= 0.0 {
        bracket = WIDE_BRACKET;
        j = (j_function(bracket.0, quad)?, j_function(bracket.1, quad)?);
        if j.0 * j.1 >= 0.0 {
            return Err(LimitError::NoBracket { lo: bracket.0, hi: bracket.1, j_lo: j.0, j_hi: j.1 });
        }
    }

    let mut err = None;
    let c = bisect(
        |c| match j_function(c, quad) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        },
        bracket.0,
        bracket.1,
        MAX_BISECT,
        1e-15,
        0.0,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let c = c.map_err(|e| LimitError::Domain(e.to_string()))?;
    let w = indifference_weight(c, quad)?;
    let params = LimitParams::new(c, w)?;
    let residuals = stationarity_residuals(c, w, quad)?;
    if residuals.0.abs() >= tol || residuals.1.abs() >= tol {
        return Err(LimitError::NotConverged { f1: residuals.0, f2: residuals.1, tol });
    }
    Ok(LimitSolution { params, value: equilibrium_value(&params, quad), residuals, bracket, j_bracket: j, quadrature: *quad })
}

/// `w*·R̃(a*, c*) + (1 − w*)·R̃(a*, 0)`.
pub fn equilibrium_value(params: &LimitParams, quad: &QuadratureSpec) -> f64 {
    let a = |z: f64| params.belief(z);
    params.w_star * limit_regret(a, params.c_star, quad) + (1.0 - params.w_star) * limit_regret(a, 0.0, quad)
}

/// Regret of the equilibrium beliefs as a function of Nature's precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretProfile {
    pub b: Vec<f64>,
    pub regret: Vec<f64>,
    /// Central-difference slope at `b = 0.005`.
    pub slope_near_zero: f64,
    /// Grid indices of local maxima (the left end counts when it beats its neighbour).
    pub local_maxima: Vec<usize>,
    /// Locations and values of the maxima refined off the grid.
    pub refined_peaks: Vec<(f64, f64)>,
    pub regret_at_zero: f64,
    pub regret_at_c_star: f64,
    pub global_max: f64,
}

impl RegretProfile {
    /// `|R̃(0) − R̃(c*)|`.
    pub fn peak_gap(&self) -> f64 {
        (self.regret_at_zero - self.regret_at_c_star).abs()
    }
}

/// Tabulates `b ↦ R̃(a*, b)` for the equilibrium beliefs and checks the
/// two-peak shape.
pub fn regret_profile(params: &LimitParams, c_grid: &[f64], quad: &QuadratureSpec) -> Result<RegretProfile> {
    quad.validate()?;
    if c_grid.len() < 3 || c_grid[0] != 0.0 || *c_grid.last().unwrap() < 3.0 - 1e-12 {
        return Err(LimitError::Domain("profile grid must start at 0 and reach 3".into()));
    }
    if c_grid.windows(2).any(|p| !(p[1] > p[0] && p[1] - p[0] <= 0.01 + 1e-12)) {
        return Err(LimitError::Domain("profile grid must be increasing with spacing at most 0.01".into()));
    }
    let belief = |z: f64| params.belief(z);
    let r = |b: f64| limit_regret(belief, b, quad);
    let regret: Vec<f64> = c_grid.par_iter().map(|&b| r(b)).collect();

    let m = regret.len();
    let mut local_maxima = Vec::new();
    if regret[0] > regret[1] {
        local_maxima.push(0);
    }
    for j in 1..m - 1 {
        if regret[j] > regret[j - 1] && regret[j] >= regret[j + 1] {
            local_maxima.push(j);
        }
    }
    if regret[m - 1] > regret[m - 2] {
        local_maxima.push(m - 1);
    }
    let refined_peaks = local_maxima
        .iter()
        .map(|&j| {
            if j == 0 || j == m - 1 {
                (c_grid[j], regret[j])
            } else {
                golden_section_max(r, c_grid[j - 1], c_grid[j + 1], 1e-10)
            }
        })
        .collect();

    let h = PROFILE_FD_STEP;
    let slope_near_zero = (r(0.005 + h) - r(0.005 - h)) / (2.0 * h);
    let global_max = regret.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let profile = RegretProfile {
        b: c_grid.to_vec(),
        regret_at_zero: r(0.0),
        regret_at_c_star: r(params.c_star),
        regret,
        slope_near_zero,
        local_maxima,
        refined_peaks,
        global_max,
    };
    if profile.local_maxima.len() != 2 {
        return Err(LimitError::ShapeViolation { peaks: profile.local_maxima.len() });
    }
    Ok(profile)
}

/// The grid `0, step, 2·step, …, b_max`.
pub fn profile_grid(b_max: f64, step: f64) -> Vec<f64> {
    let m = (b_max / step).round() as usize;
    (0..=m).map(|j| j as f64 * step).collect()
}

/// Monte Carlo summary of the equilibrium belief `a*(Z)` under one of
/// Nature's two equilibrium experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeliefSpread {
    /// Precision of the experiment generating `Z`.
    pub c: f64,
    pub draws: usize,
    /// Half of the symmetric 1% tail: `min(q₀.₀₀₅, 1 − q₀.₉₉₅)`.
    pub delta: f64,
    /// Fraction of draws with `a*(Z) ∈ [δ, 1 − δ]`.
    pub mass_inside: f64,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

/// Samples `a*(Z)` for `Z` from the experiment with precision `c`, the state
/// drawn uniformly. Reproducible from `seed`.
pub fn belief_spread(params: &LimitParams, c: f64, draws: usize, seed: u64) -> BeliefSpread {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Vec<f64> = (0..draws)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            let up: bool = rng.random();
            let mean = if up { 2.0 * c } else { -2.0 * c };
            params.belief(x + mean)
        })
        .collect();
    let mean = a.iter().sum::<f64>() / draws as f64;
    let variance = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (draws as f64 - 1.0);
    a.sort_by(f64::total_cmp);
    let q = |p: f64| a[((p * draws as f64) as usize).min(draws - 1)];
    let delta = q(0.005).min(1.0 - q(0.995));
    let inside = a.iter().filter(|&&x| x >= delta && x <= 1.0 - delta).count();
    BeliefSpread {
        c,
        draws,
        delta,
        mass_inside: inside as f64 / draws as f64,
        mean,
        variance,
        min: a[0],
        max: a[draws - 1],
    }
}
