//! Solver for the two-point structure `{½ w.p. 1 − w, π* w.p. w}`.
//!
//! Beliefs follow from the first-order condition (Bayes' rule at the mixture).
//! `w` is pinned by Nature's indifference `R(a, π*) = R(a, ½)` and `π*` by
//! local optimality `∂R(a, π)/∂π = 0` at `π*`. When no interior root exists
//! the informative atom sits at `π = 1` and the local condition becomes
//! `∂R/∂π ≥ 0` there.

use crate::bregman::{BregmanGenerator, LossKind};
use crate::numeric::bisect;

use super::{BeliefVector, BinaryGame, FiniteEquilibrium, FiniteGameError, NatureMixtureFinite, Result, SolverMethod};

const MAX_ITER: usize = 200;
const INNER_FTOL: f64 = 1e-12;
const OUTER_FTOL: f64 = 1e-10;
const SCAN_POINTS: usize = 256;
const VERIFY_GRID: usize = 512;

/// `a_k` from the displayed two-point first-order condition, in direct
/// arithmetic. Kept separate from the log-domain solver path as an oracle.
pub fn foc_two_point_posterior(n: usize, pi: f64, w: f64, k: usize) -> f64 {
    let two_n = 2f64.powi(n as i32);
    let a = pi.powi(k as i32) * (1.0 - pi).powi((n - k) as i32);
    let b = (1.0 - pi).powi(k as i32) * pi.powi((n - k) as i32);
    (two_n * w * a + 1.0 - w) / (two_n * w * (a + b) + 2.0 * (1.0 - w))
}

struct System<'a> {
    game: BinaryGame,
    gen: &'a BregmanGenerator,
}

impl System<'_> {
    fn beliefs(&self, pi: f64, w: f64) -> Result<BeliefVector> {
        Ok(self.game.best_response(&NatureMixtureFinite::two_point(pi, w)?).0)
    }

    fn indifference(&self, pi: f64, w: f64) -> Result<f64> {
        let a = self.beliefs(pi, w)?;
        Ok(self.game.regret(&a, pi, self.gen)? - self.game.regret(&a, 0.5, self.gen)?)
    }

    fn weight(&self, pi: f64) -> Result<f64> {
        let mut err = None;
        let r = bisect(
            |w| match self.indifference(pi, w) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            1.0,
            MAX_ITER,
            0.0,
            INNER_FTOL,
        );
        if let Some(e) = err {
            return Err(e);
        }
        r.map_err(|e| FiniteGameError::NoBracket(format!("indifference at pi = {pi}: {e}")))
    }

    fn local_opt(&self, pi: f64) -> Result<f64> {
        let w = self.weight(pi)?;
        let a = self.beliefs(pi, w)?;
        self.game.regret_dpi(&a, pi, self.gen)
    }

    fn finish(&self, pi: f64, w: f64, boundary: bool, iterations: usize) -> Result<FiniteEquilibrium> {
        let mixture = NatureMixtureFinite::two_point(pi, w)?;
        let beliefs = self.beliefs(pi, w)?;
        let (residuals, value) = self.game.residuals(&mixture, &beliefs, self.gen, VERIFY_GRID)?;
        Ok(FiniteEquilibrium {
            n: self.game.n(),
            loss: self.gen.kind(),
            method: SolverMethod::Structural,
            mixture,
            beliefs,
            value,
            residuals,
            boundary,
            iterations,
        })
    }
}

/// Solves (FOC), (Indif) and (Local Opt) for the two-point equilibrium under
/// squared error.
pub fn solve_structural(n: usize, gen: &BregmanGenerator) -> Result<FiniteEquilibrium> {
    if gen.kind() != LossKind::Mse {
        return Err(FiniteGameError::UnsupportedLoss(gen.kind()));
    }
    let sys = System { game: BinaryGame::new(n)?, gen };

    // Scan with points clustered toward ½, where π* lives for large n.
    let t_min = (0.1 / (n as f64).sqrt()).min(0.05);
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|j| {
            let u = j as f64 / (SCAN_POINTS - 1) as f64;
            let t = t_min + (1.0 - t_min) * u * u;
            (0.5 + 0.5 * t).min(1.0 - 1e-9)
        })
        .collect();
    let mut vals = Vec::with_capacity(grid.len());
    for &pi in &grid {
        vals.push(sys.local_opt(pi)?);
    }

    let mut candidates = Vec::new();
    let mut evals = grid.len();
    for j in 0..grid.len() - 1 {
        if vals[j] == 0.0 || vals[j].signum() != vals[j + 1].signum() {
            let mut err = None;
            let pi = bisect(
                |p| {
                    evals += 1;
                    match sys.local_opt(p) {
                        Ok(v) => v,
                        Err(e) => {
                            err.get_or_insert(e);
                            f64::NAN
                        }
                    }
                },
                grid[j],
                grid[j + 1],
                MAX_ITER,
                0.0,
                OUTER_FTOL,
            );
            if let Some(e) = err {
                return Err(e);
            }
            let pi = pi.map_err(|e| FiniteGameError::NoBracket(e.to_string()))?;
            candidates.push(pi);
        }
    }

    if candidates.is_empty() {
        let w = sys.weight(1.0)?;
        let a = sys.beliefs(1.0, w)?;
        let slope = sys.game.regret_dpi_one_sided(&a, 1.0, gen)?;
        if slope < 0.0 {
            return Err(FiniteGameError::NoBracket(format!(
                "no interior root of the local condition and dR/dpi = {slope} < 0 at pi = 1"
            )));
        }
        return sys.finish(1.0, w, true, evals);
    }

    let mut best: Option<FiniteEquilibrium> = None;
    for pi in candidates {
        let w = sys.weight(pi)?;
        let eq = sys.finish(pi, w, false, evals)?;
        if best.as_ref().is_none_or(|b| eq.residuals.duality_gap < b.residuals.duality_gap) {
            best = Some(eq);
        }
    }
    Ok(best.expect("nonempty candidates"))
}
