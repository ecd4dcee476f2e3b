//! Minimax-regret belief formation when Nature picks the signal precision.
//!
//! A decision-maker commits to a belief rule mapping signal counts to
//! posteriors; Nature then chooses the data-generating process to maximize the
//! decision-maker's expected Bregman regret relative to an oracle who knows the
//! process. The crate solves and verifies this game in four settings:
//!
//! - [`binary_finite_game`]: `n` binary signals of precision `π ∈ [½, 1]`;
//! - [`limit_game`]: the Gaussian shift game the finite games converge to;
//! - [`asymptotics`]: learning rates of the robust rule under a fixed true
//!   process, and under/over-inference;
//! - [`general_game`]: multinomial signals and general Bregman losses.

pub mod asymptotics;
pub mod binary_finite_game;
pub mod bregman;
pub mod general_game;
pub mod limit_game;
pub mod numeric;
pub mod quadrature;
pub mod sturm;

pub use bregman::{BregmanError, BregmanGenerator, LossKind, TaskDensity};
