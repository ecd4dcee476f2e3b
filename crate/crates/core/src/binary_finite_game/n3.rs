//! Closed forms for the three-signal game.
//!
//! With `s = (2π − 1)²`, the equilibrium `(π, w)` solves `G₁ = G₂ = 0`, where
//! `G₁` is Nature's indifference and `G₂` its local optimality after
//! substituting the Bayes beliefs. Along the solution the derivative
//! `R'(π)` of Nature's objective, cleared of the factor `(3π² − 3π + 1)²`,
//! is a degree-7 polynomial whose coefficients depend on `(a₂, a₃)`.

fn g1_parts(pi: f64, w: f64) -> (f64, f64, f64) {
    let s = (2.0 * pi - 1.0).powi(2);
    let u = pi * pi - pi + 1.0;
    let v = 3.0 * pi * pi - 3.0 * pi + 1.0;
    let p1 = pi * (1.0 - pi);
    let first = (4.0 * w * w * v - (1.0 - w).powi(2)) / (v * (3.0 * w * s + 1.0).powi(2));
    let second = 3.0 * p1 * (4.0 * w * w * p1 - (1.0 - w).powi(2)) / (1.0 - w * s).powi(2);
    (u, first, second)
}

/// `G₁` with the leading factor `(π² − π + 1)` as typeset. It has the same
/// signs at `w ∈ {0, 1}` as the corrected form but does not vanish at the
/// equilibrium.
pub fn n3_g1_as_printed(pi: f64, w: f64) -> f64 {
    let (u, first, second) = g1_parts(pi, w);
    u * first + second
}

/// `(G₁(π, w), G₂(π, w))`. `G₁` uses the factor `(π² − π + 1)²`, which is
/// what the indifference condition reduces to; see [`n3_g1_as_printed`].
pub fn n3_system_residuals(pi: f64, w: f64) -> (f64, f64) {
    let (u, first, second) = g1_parts(pi, w);
    let g1 = u * u * first + second;

    let s = (2.0 * pi - 1.0).powi(2);
    let v = 3.0 * pi * pi - 3.0 * pi + 1.0;
    let p1 = pi * (1.0 - pi);
    let d1 = 3.0 * w * s + 1.0;
    let d2 = 1.0 - w * s;
    let g2 = u / (v * v * d1) * ((1.0 - w) * s * u / (2.0 * d1) + 2.0 * p1 * p1)
        - 1.0 / d2 * ((1.0 - w) * s / (2.0 * d2) - 2.0 * p1);
    (g1, g2)
}

/// Coefficients, ascending in powers of `π`, of `R'(π)·(3π² − 3π + 1)²` for
/// symmetric beliefs `(1 − a₃, 1 − a₂, a₂, a₃)`.
pub fn n3_derivative_polynomial(a2: f64, a3: f64) -> Vec<f64> {
    let (p, q) = (a2 * a2, a3 * a3);
    let desc = [
        -96.0,
        282.0 + 162.0 * a2 - 54.0 * a3,
        -336.0 - 432.0 * a2 + 108.0 * a3 - 54.0 * p + 54.0 * q,
        207.0 + 486.0 * a2 - 90.0 * a3 + 135.0 * p - 135.0 * q,
        -66.0 - 288.0 * a2 + 36.0 * a3 - 144.0 * p + 144.0 * q,
        9.0 + 90.0 * a2 - 6.0 * a3 + 81.0 * p - 81.0 * q,
        -12.0 * a2 - 24.0 * p + 24.0 * q,
        3.0 * p - 3.0 * q,
    ];
    desc.iter().rev().copied().collect()
}
