//! Grid certificate that a candidate equilibrium is a global saddle point.

use serde::{Deserialize, Serialize};

use crate::bregman::BregmanGenerator;
use crate::numeric::linspace;

use super::{BinaryGame, FiniteEquilibrium, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityDiagnostics {
    pub grid: Vec<f64>,
    pub regret: Vec<f64>,
    /// Grid points that are local maxima of `π ↦ R(a*, π)` (endpoints count
    /// when they beat their single neighbour).
    pub local_maxima: Vec<f64>,
    pub grid_max: f64,
    /// `grid_max − eq.value`; at most `1e−6` for a saddle.
    pub grid_max_minus_value: f64,
    /// Spread of `R(a*, π_i)` over support points.
    pub indifference_deviation: f64,
    /// `Σ_i w_i R(a*, π_i)`.
    pub attained: f64,
}

impl OptimalityDiagnostics {
    pub fn peak_count(&self) -> usize {
        self.local_maxima.len()
    }
}

/// Tabulates `R(a*, π)` on a uniform grid of `[½, 1]` and summarizes it.
pub fn verify_global_optimality(eq: &FiniteEquilibrium, n: usize, grid_size: usize, gen: &BregmanGenerator) -> Result<OptimalityDiagnostics> {
    let game = BinaryGame::new(n)?;
    let grid = linspace(0.5, 1.0, grid_size.max(3));
    let regret = game.regret_curve(&eq.beliefs, &grid, gen)?;
    let last = grid.len() - 1;
    let local_maxima = (0..=last)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { regret[i - 1] };
            let right = if i == last { f64::NEG_INFINITY } else { regret[i + 1] };
            regret[i] > left && regret[i] >= right
        })
        .map(|i| grid[i])
        .collect();
    let grid_max = regret.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut at_support = Vec::new();
    for (pi, w) in eq.mixture.iter() {
        at_support.push((w, game.regret(&eq.beliefs, pi, gen)?));
    }
    let hi = at_support.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = at_support.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let attained = at_support.iter().map(|(w, r)| w * r).sum();
    Ok(OptimalityDiagnostics {
        grid,
        regret,
        local_maxima,
        grid_max,
        grid_max_minus_value: grid_max - eq.value,
        indifference_deviation: hi - lo,
        attained,
    })
}
