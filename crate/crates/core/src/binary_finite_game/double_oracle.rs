//! Support-enlargement solver that makes no assumption on Nature's support.
//!
//! Outer loop: solve the game restricted to a finite set of precisions, then
//! add Nature's best reply to the resulting beliefs while it improves on the
//! restricted value by more than `tol`. Inner loop: maximize the concave value
//! `V(σ) = min_a R(a, σ)` over weights, whose gradient is the vector of
//! regrets `R(a*(σ), π_i)`. Multiplicative weights give a warm start; Newton's
//! method on the equal-regret conditions of the active atoms finishes it.
//! Interior atoms are then moved jointly with the weights onto the roots of
//! `∂R/∂π`, so the support does not have to hit `π*` by grid luck.

use serde::{Deserialize, Serialize};

use crate::bregman::BregmanGenerator;
use crate::numeric::solve_linear;

use super::{BeliefVector, BinaryGame, FiniteEquilibrium, FiniteGameError, NatureMixtureFinite, Result, SolverMethod};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleOracleOptions {
    pub tol: f64,
    pub max_outer: usize,
    /// Cap on multiplicative-weights steps per inner solve.
    pub mw_iterations: usize,
    pub grid_size: usize,
}

impl DoubleOracleOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

impl Default for DoubleOracleOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_outer: 60, mw_iterations: 2_000, grid_size: 256 }
    }
}

/// A finished run with the restricted mixtures visited by the outer loop.
#[derive(Debug, Clone)]
pub struct DoubleOracleRun {
    pub equilibrium: FiniteEquilibrium,
    pub trace: Vec<NatureMixtureFinite>,
}

const PRUNE: f64 = 1e-12;
const NEWTON_ITERS: usize = 40;
const FD_STEP: f64 = 1e-7;

enum NewtonOutcome {
    Converged(Vec<f64>),
    Drop(usize),
    Failed,
}

struct Solver<'a> {
    game: BinaryGame,
    gen: &'a BregmanGenerator,
    opts: DoubleOracleOptions,
}

fn raw_mixture(support: &[f64], weights: &[f64]) -> NatureMixtureFinite {
    NatureMixtureFinite { support: support.to_vec(), weights: weights.to_vec() }
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
}

impl Solver<'_> {
    fn beliefs(&self, support: &[f64], weights: &[f64]) -> BeliefVector {
        self.game.best_response(&raw_mixture(support, weights)).0
    }

    fn gradient(&self, support: &[f64], weights: &[f64]) -> Result<(BeliefVector, Vec<f64>)> {
        let a = self.beliefs(support, weights);
        let g = support.iter().map(|&pi| self.game.regret(&a, pi, self.gen)).collect::<Result<Vec<_>>>()?;
        Ok((a, g))
    }

    fn multiplicative_weights(&self, support: &[f64], weights: &mut [f64]) -> Result<()> {
        for t in 1..=self.opts.mw_iterations {
            let (_, g) = self.gradient(support, weights)?;
            let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
            let avg: f64 = g.iter().zip(weights.iter()).map(|(g, w)| g * w).sum();
            if hi - avg <= 0.1 * self.opts.tol {
                break;
            }
            // step 1/√t on gradients rescaled to unit range
            let eta = 1.0 / ((t as f64).sqrt() * (hi - lo).max(1e-300));
            for (w, gi) in weights.iter_mut().zip(&g) {
                *w *= (eta * (gi - hi)).exp();
            }
            normalize(weights);
        }
        Ok(())
    }

    /// Active-set Newton on the KKT system of the restricted game: equal
    /// regrets on atoms with positive weight, no larger regret elsewhere.
    /// Keeps the incoming weights if no consistent active set is found.
    fn polish_weights(&self, support: &[f64], weights: &mut [f64]) -> Result<()> {
        let m = support.len();
        let wmax = weights.iter().copied().fold(0.0, f64::max);
        let mut active: Vec<usize> = (0..m).filter(|&i| weights[i] > 1e-6 * wmax).collect();
        let mut start: Vec<f64> = weights.to_vec();
        for _round in 0..2 * m + 2 {
            match self.newton_weights(support, &start, &active)? {
                NewtonOutcome::Converged(w) => {
                    let (_, g) = self.gradient(support, &w)?;
                    let common = active.iter().map(|&i| g[i]).fold(f64::NEG_INFINITY, f64::max);
                    let violator = (0..m)
                        .filter(|i| !active.contains(i) && g[*i] > common + 1e-14)
                        .max_by(|&i, &j| g[i].total_cmp(&g[j]));
                    match violator {
                        None => {
                            weights.copy_from_slice(&w);
                            return Ok(());
                        }
                        Some(j) => {
                            active.push(j);
                            active.sort_unstable();
                            start = w;
                            start[j] = 1e-3;
                            normalize(&mut start);
                        }
                    }
                }
                NewtonOutcome::Drop(i) => {
                    active.retain(|&j| j != i);
                    start[i] = 0.0;
                    normalize(&mut start);
                }
                NewtonOutcome::Failed => break,
            }
            if active.is_empty() {
                break;
            }
        }
        Ok(())
    }

    fn newton_weights(&self, support: &[f64], start: &[f64], active: &[usize]) -> Result<NewtonOutcome> {
        let full = |x: &[f64]| -> Vec<f64> {
            let mut w = vec![0.0; support.len()];
            for (k, &i) in active.iter().enumerate() {
                w[i] = x[k];
            }
            w
        };
        let m = active.len();
        if m == 1 {
            return Ok(NewtonOutcome::Converged(full(&[1.0])));
        }
        let sub: Vec<f64> = active.iter().map(|&i| support[i]).collect();
        let mut x: Vec<f64> = active.iter().map(|&i| start[i].max(1e-6)).collect();
        normalize(&mut x);
        let residual = |x: &[f64]| -> Result<Vec<f64>> {
            let (a, _) = self.gradient(&sub, x)?;
            let g = sub.iter().map(|&pi| self.game.regret(&a, pi, self.gen)).collect::<Result<Vec<_>>>()?;
            let mut f: Vec<f64> = (1..m).map(|i| g[i] - g[0]).collect();
            f.push(x.iter().sum::<f64>() - 1.0);
            Ok(f)
        };
        let sup = |f: &[f64]| f.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let mut f = residual(&x)?;
        for _ in 0..NEWTON_ITERS {
            let norm = sup(&f);
            if norm < 1e-15 {
                break;
            }
            let mut jac = vec![vec![0.0; m]; m];
            for j in 0..m {
                let mut xp = x.clone();
                let h = FD_STEP * x[j].max(1e-3);
                xp[j] += h;
                let fp = residual(&xp)?;
                for i in 0..m {
                    jac[i][j] = (fp[i] - f[i]) / h;
                }
            }
            let Some(step) = solve_linear(jac, f.iter().map(|v| -v).collect()) else {
                return Ok(NewtonOutcome::Failed);
            };
            // an atom whose full step goes negative leaves the active set
            let worst = (0..m)
                .filter(|&k| x[k] + step[k] <= 0.0)
                .min_by(|&i, &j| ((x[i] + step[i]) / x[i]).total_cmp(&((x[j] + step[j]) / x[j])));
            if let Some(k) = worst {
                return Ok(NewtonOutcome::Drop(active[k]));
            }
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, s)| xi + scale * s).collect();
                let ft = residual(&trial)?;
                if sup(&ft) < norm {
                    x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if sup(&f) > 1e-12 {
            return Ok(NewtonOutcome::Failed);
        }
        normalize(&mut x);
        Ok(NewtonOutcome::Converged(full(&x)))
    }

    /// Joint Newton on weights and interior locations.
    fn polish_locations(&self, support: &mut Vec<f64>, weights: &mut Vec<f64>) -> Result<bool> {
        let m = support.len();
        let free: Vec<usize> = (0..m).filter(|&i| support[i] > 0.5 && support[i] < 1.0).collect();
        if free.is_empty() || m < 2 {
            return Ok(false);
        }
        let dim = m + free.len();
        let unpack = |z: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut s = support.clone();
            for (j, &i) in free.iter().enumerate() {
                s[i] = z[m + j];
            }
            (s, z[..m].to_vec())
        };
        let residual = |z: &[f64]| -> Result<Vec<f64>> {
            let (s, w) = unpack(z);
            let (a, g) = self.gradient(&s, &w)?;
            let mut f: Vec<f64> = (1..m).map(|i| g[i] - g[0]).collect();
            f.push(w.iter().sum::<f64>() - 1.0);
            for &i in &free {
                f.push(self.game.regret_dpi(&a, s[i], self.gen)?);
            }
            Ok(f)
        };
        let mut z: Vec<f64> = weights.iter().copied().chain(free.iter().map(|&i| support[i])).collect();
        let mut f = residual(&z)?;
        let start = f.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for _ in 0..NEWTON_ITERS {
            let norm = f.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            if norm < 1e-15 {
                break;
            }
            let mut jac = vec![vec![0.0; dim]; dim];
            for j in 0..dim {
                let mut zp = z.clone();
                let h = if j < m { FD_STEP * z[j].max(1e-3) } else { FD_STEP };
                zp[j] += h;
                let fp = residual(&zp)?;
                for i in 0..dim {
                    jac[i][j] = (fp[i] - f[i]) / h;
                }
            }
            let Some(step) = solve_linear(jac, f.iter().map(|v| -v).collect()) else { break };
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = z.iter().zip(&step).map(|(zi, s)| zi + scale * s).collect();
                let ok = trial[..m].iter().all(|&v| v > 0.0) && trial[m..].iter().all(|&x| x > 0.5 && x < 1.0);
                if ok {
                    let ft = residual(&trial)?;
                    let nt = ft.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                    if nt < norm {
                        z = trial;
                        f = ft;
                        accepted = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let end = f.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let value = |s: &[f64], w: &[f64]| -> Result<f64> {
            let (_, g) = self.gradient(s, w)?;
            Ok(g.iter().zip(w).map(|(g, w)| g * w).sum::<f64>() / w.iter().sum::<f64>())
        };
        let (s_new, w_new) = unpack(&z);
        // a stationary point of the system need not be a maximum of V
        if end < start && value(&s_new, &w_new)? >= value(support, weights)? - 1e-15 {
            let (s, w) = (s_new, w_new);
            *support = s;
            *weights = w;
            normalize(weights);
            return Ok(true);
        }
        Ok(false)
    }

    /// Merges neighbouring interior atoms that sit on one regret peak (the
    /// midpoint is at least as high as both).
    fn consolidate(&self, support: &mut Vec<f64>, weights: &mut Vec<f64>) -> Result<()> {
        let mut order: Vec<usize> = (0..support.len()).filter(|&i| weights[i] > PRUNE).collect();
        order.sort_by(|&i, &j| support[i].total_cmp(&support[j]));
        let mut s: Vec<f64> = order.iter().map(|&i| support[i]).collect();
        let mut w: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
        let a = self.beliefs(&s, &w);
        let mut i = 0;
        while i + 1 < s.len() {
            let (x, y) = (s[i], s[i + 1]);
            let interior = x > 0.5 && y < 1.0;
            if interior {
                let rx = self.game.regret(&a, x, self.gen)?;
                let ry = self.game.regret(&a, y, self.gen)?;
                let rm = self.game.regret(&a, 0.5 * (x + y), self.gen)?;
                if rm >= rx.max(ry) {
                    let total = w[i] + w[i + 1];
                    s[i] = (w[i] * x + w[i + 1] * y) / total;
                    w[i] = total;
                    s.remove(i + 1);
                    w.remove(i + 1);
                    continue;
                }
            }
            i += 1;
        }
        normalize(&mut w);
        *support = s;
        *weights = w;
        Ok(())
    }

    fn certify(&self, support: &[f64], weights: &[f64]) -> Result<(BeliefVector, f64, f64, f64)> {
        let (a, g) = self.gradient(support, weights)?;
        let lower: f64 = g.iter().zip(weights).map(|(g, w)| g * w).sum();
        let (pi_br, upper) = self.game.nature_best_response(&a, self.gen, self.opts.grid_size)?;
        Ok((a, lower, upper, pi_br))
    }

    fn finish(&self, support: &[f64], weights: &[f64], iterations: usize) -> Result<FiniteEquilibrium> {
        let mut pairs: Vec<(f64, f64)> = support.iter().copied().zip(weights.iter().copied()).filter(|p| p.1 > PRUNE).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        normalize(&mut w);
        let mixture = NatureMixtureFinite { support: pairs.iter().map(|p| p.0).collect(), weights: w };
        let (beliefs, _) = self.game.best_response(&mixture);
        let (residuals, value) = self.game.residuals(&mixture, &beliefs, self.gen, self.opts.grid_size)?;
        let boundary = mixture.support.last().is_some_and(|&p| p == 1.0);
        Ok(FiniteEquilibrium {
            n: self.game.n(),
            loss: self.gen.kind(),
            method: SolverMethod::DoubleOracle,
            mixture,
            beliefs,
            value,
            residuals,
            boundary,
            iterations,
        })
    }
}

/// Double-oracle equilibrium of the finite game for any generator.
pub fn solve_double_oracle(n: usize, gen: &BregmanGenerator, tol: f64) -> Result<FiniteEquilibrium> {
    solve_double_oracle_traced(n, gen, DoubleOracleOptions::with_tol(tol)).map(|r| r.equilibrium)
}

/// As [`solve_double_oracle`], also returning the mixture after every outer
/// iteration.
pub fn solve_double_oracle_traced(n: usize, gen: &BregmanGenerator, opts: DoubleOracleOptions) -> Result<DoubleOracleRun> {
    if !(opts.tol > 0.0) {
        return Err(FiniteGameError::InvalidMixture(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let solver = Solver { game: BinaryGame::new(n)?, gen, opts };
    let mut support = vec![0.5, 1.0];
    let mut weights = vec![0.5, 0.5];
    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;
    let mut stalls = 0;
    for it in 1..=opts.max_outer {
        solver.multiplicative_weights(&support, &mut weights)?;
        solver.polish_weights(&support, &mut weights)?;
        solver.consolidate(&mut support, &mut weights)?;
        if solver.polish_locations(&mut support, &mut weights)? {
            solver.polish_weights(&support, &mut weights)?;
        }
        let (_, lower, upper, pi_br) = solver.certify(&support, &weights)?;
        trace.push(raw_mixture(&support, &weights));
        let new_gap = upper - lower;
        if new_gap <= opts.tol {
            let equilibrium = solver.finish(&support, &weights, it)?;
            return Ok(DoubleOracleRun { equilibrium, trace });
        }
        stalls = if new_gap >= gap { stalls + 1 } else { 0 };
        gap = new_gap;
        if stalls >= 5 {
            break;
        }
        if support.iter().all(|&p| (p - pi_br).abs() > 1e-12) {
            support.push(pi_br);
            weights.push(0.05);
            normalize(&mut weights);
        }
    }
    let best = solver.finish(&support, &weights, opts.max_outer)?;
    Err(FiniteGameError::IterationLimit { iterations: trace.len(), gap, best: Box::new(best) })
}
