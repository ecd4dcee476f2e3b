//! CSV data behind the four figures. Each panel is computed independently; a
//! failed panel is recorded in the manifest and the others still run.

use std::path::Path;

use robust_beliefs::binary_finite_game::{exante_regret, BeliefVector, BinaryGame, FiniteEquilibrium};
use robust_beliefs::limit_game::{profile_grid, regret_profile, solve_limit_equilibrium};
use robust_beliefs::quadrature::QuadratureSpec;
use robust_beliefs::BregmanGenerator;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{compute, CliError};
use crate::report::{num, write_atomic, Table};
use crate::run::{informative_atom, structural_trend};

/// Points on the a₁ axis of figure 1 and on the π axis of figure 2.
const FIG1_POINTS: usize = 201;
const FIG2_POINTS: usize = 1001;

#[derive(Debug, Clone, Serialize)]
pub struct PanelReport {
    pub figure: u8,
    pub ok: bool,
    pub files: Vec<String>,
    pub checks: Value,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub figures: Vec<PanelReport>,
    #[serde(skip)]
    pub quadrature: Option<QuadratureSpec>,
}

impl Manifest {
    pub fn failed(&self) -> Option<u8> {
        self.figures.iter().find(|p| !p.ok).map(|p| p.figure)
    }
}

type Panel = (Vec<(String, Table)>, Value);

/// Ex-ante regret of `(1 − a₁, a₁)` at `π = ½` and `π = 1`.
pub fn fig1() -> Result<Panel, CliError> {
    let gen = BregmanGenerator::mse();
    let mut t = Table::new(&["a1", "regret_pi_half", "regret_pi_one", "upper_envelope"]);
    let mut best = (f64::INFINITY, f64::NAN);
    for i in 0..FIG1_POINTS {
        let a1 = i as f64 / (FIG1_POINTS - 1) as f64;
        let b = BeliefVector::new(vec![1.0 - a1, a1]).map_err(compute("figure 1 beliefs"))?;
        let half = exante_regret(&b, 0.5, &gen).map_err(compute("figure 1 regret"))?;
        let one = exante_regret(&b, 1.0, &gen).map_err(compute("figure 1 regret"))?;
        let env = half.max(one);
        if env < best.0 {
            best = (env, a1);
        }
        t.push(vec![num(a1), num(half), num(one), num(env)]);
    }
    let checks = json!({ "envelope_minimum": best.0, "argmin_a1": best.1 });
    Ok((vec![("fig1_envelope.csv".into(), t)], checks))
}

/// Regret against `π` at the equilibrium beliefs for `n = 3, 4, 5`.
pub fn fig2() -> Result<Panel, CliError> {
    let gen = BregmanGenerator::mse();
    let eqs = structural_trend(&[3, 4, 5])?;
    let grid: Vec<f64> = (0..FIG2_POINTS).map(|i| 0.5 + 0.5 * i as f64 / (FIG2_POINTS - 1) as f64).collect();
    let mut files = Vec::new();
    let mut checks = Vec::new();
    for eq in &eqs {
        let game = BinaryGame::new(eq.n).map_err(compute("figure 2 game"))?;
        let curve = game.regret_curve(&eq.beliefs, &grid, &gen).map_err(compute("figure 2 regret curve"))?;
        let mut t = Table::new(&["pi", "regret"]);
        for (p, r) in grid.iter().zip(&curve) {
            t.push(vec![num(*p), num(*r)]);
        }
        files.push((format!("fig2_n{}.csv", eq.n), t));
        checks.push(peak_check(eq, &gen)?);
    }
    Ok((files, Value::Array(checks)))
}

fn peak_check(eq: &FiniteEquilibrium, gen: &BregmanGenerator) -> Result<Value, CliError> {
    let (pi_star, _) = informative_atom(eq);
    let at_half = exante_regret(&eq.beliefs, 0.5, gen).map_err(compute("peak check"))?;
    let at_star = exante_regret(&eq.beliefs, pi_star, gen).map_err(compute("peak check"))?;
    Ok(json!({ "n": eq.n, "pi_star": pi_star, "regret_at_half": at_half, "regret_at_pi_star": at_star, "peak_gap": (at_half - at_star).abs() }))
}

/// Limit regret profile `b ↦ R̃(b)` on `[0, 3]`.
pub fn fig3(quad: &QuadratureSpec) -> Result<Panel, CliError> {
    let s = solve_limit_equilibrium(quad, 1e-9).map_err(compute("figure 3 limit equilibrium"))?;
    let p = regret_profile(&s.params, &profile_grid(3.0, 0.01), quad).map_err(compute("figure 3 profile"))?;
    let mut t = Table::new(&["b", "regret"]);
    for (b, r) in p.b.iter().zip(&p.regret) {
        t.push(vec![num(*b), num(*r)]);
    }
    let checks = json!({
        "c_star": s.params.c_star,
        "local_maxima_b": p.local_maxima.iter().map(|&i| p.b[i]).collect::<Vec<_>>(),
        "peak_gap": p.peak_gap(),
    });
    Ok((vec![("fig3_limit_profile.csv".into(), t)], checks))
}

/// Trend panels for `n = 3..18`.
pub fn fig4() -> Result<Panel, CliError> {
    let ns: Vec<usize> = (3..=18).collect();
    let eqs = structural_trend(&ns)?;
    let mut pi = Table::new(&["n", "pi_star"]);
    let mut val = Table::new(&["n", "value"]);
    let mut wt = Table::new(&["n", "w"]);
    let mut bel = Table::new(&["n", "k", "k_over_n", "a_k"]);
    let mut stars = Vec::new();
    let mut values = Vec::new();
    for eq in &eqs {
        let (p, w) = informative_atom(eq);
        stars.push(p);
        values.push(eq.value);
        pi.push(vec![eq.n.to_string(), num(p)]);
        val.push(vec![eq.n.to_string(), num(eq.value)]);
        wt.push(vec![eq.n.to_string(), num(w)]);
        for (k, a) in eq.beliefs.a.iter().enumerate() {
            bel.push(vec![eq.n.to_string(), k.to_string(), num(k as f64 / eq.n as f64), num(*a)]);
        }
    }
    let checks = json!({
        "pi_star_strictly_decreasing": stars.windows(2).all(|w| w[1] < w[0]),
        "value_strictly_decreasing": values.windows(2).all(|w| w[1] < w[0]),
    });
    let files = vec![
        ("fig4_pi_star.csv".into(), pi),
        ("fig4_value.csv".into(), val),
        ("fig4_weight.csv".into(), wt),
        ("fig4_beliefs.csv".into(), bel),
    ];
    Ok((files, checks))
}

/// Computes and writes each requested figure into `dir`.
pub fn reproduce(figures: &[u8], dir: &Path) -> Result<Manifest, CliError> {
    let quad = QuadratureSpec::default();
    let mut out = Vec::new();
    for &f in figures {
        let panel = match f {
            1 => fig1(),
            2 => fig2(),
            3 => fig3(&quad),
            4 => fig4(),
            _ => Err(CliError::Config(format!("unknown figure {f}"))),
        };
        let report = match panel {
            Ok((files, checks)) => {
                let mut names = Vec::new();
                for (name, t) in files {
                    write_atomic(&dir.join(&name), &t.to_csv())?;
                    names.push(name);
                }
                PanelReport { figure: f, ok: true, files: names, checks, error: None }
            }
            Err(e) => PanelReport { figure: f, ok: false, files: Vec::new(), checks: Value::Null, error: Some(e.to_string()) },
        };
        out.push(report);
    }
    let quadrature = figures.contains(&3).then_some(quad);
    Ok(Manifest { figures: out, quadrature })
}
