use std::time::Instant;

use rayon::prelude::*;
use robust_beliefs::asymptotics::{asymptotic_sweep, convergence_table, fit_log_decay_rate, FitMode, TrueDGP};
use robust_beliefs::binary_finite_game::{solve_double_oracle, solve_structural, verify_global_optimality, FiniteEquilibrium};
use robust_beliefs::general_game::{clip_c, rate_experiment, RegretMode};
use robust_beliefs::limit_game::{profile_grid, regret_profile, solve_limit_equilibrium, LimitSolution};
use robust_beliefs::quadrature::QuadratureSpec;
use robust_beliefs::BregmanGenerator;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{self, Command, Format, Loss, Method, RunConfig};
use crate::error::{compute, CliError};
use crate::figures;
use crate::report::{num, to_json_pretty, write_atomic, Provenance, ReportEnvelope, Table, SCHEMA_VERSION};

/// Grid used for the global-optimality certificate in `solve-finite`.
const CERTIFICATE_GRID: usize = 2001;

/// What a command produced, before formatting.
pub struct Outcome {
    pub results: Value,
    pub residuals: Value,
    pub quadrature: Option<QuadratureSpec>,
    pub table: Table,
}

fn generator(loss: Loss) -> BregmanGenerator {
    match loss {
        Loss::Mse => BregmanGenerator::mse(),
        Loss::Log => BregmanGenerator::log(),
    }
}

fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// `(π*, w)`: the informative atom and its weight.
pub fn informative_atom(eq: &FiniteEquilibrium) -> (f64, f64) {
    eq.mixture
        .iter()
        .filter(|(p, _)| *p > 0.5)
        .fold((0.5, 0.0), |best, (p, w)| if w > best.1 { (p, w) } else { best })
}

fn finite_row(label: &str, eq: &FiniteEquilibrium) -> Vec<String> {
    let (pi, w) = informative_atom(eq);
    let mut row = vec![label.to_string(), eq.n.to_string(), num(pi), num(w), num(eq.value)];
    row.extend(eq.beliefs.a.iter().map(|a| num(*a)));
    row
}

fn belief_header(lead: &[&str], n_max: usize) -> Table {
    let mut h: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    h.extend((0..=n_max).map(|k| format!("a_{k}")));
    Table { header: h, rows: Vec::new() }
}

fn solve_one(n: usize, method: Method, gen: &BregmanGenerator, tol: f64) -> Result<FiniteEquilibrium, CliError> {
    match method {
        Method::Structural => solve_structural(n, gen).map_err(compute(format!("structural solver, n = {n}"))),
        _ => solve_double_oracle(n, gen, tol).map_err(compute(format!("double oracle, n = {n}"))),
    }
}

fn finite_record(eq: &FiniteEquilibrium, gen: &BregmanGenerator) -> Result<Value, CliError> {
    let diag = verify_global_optimality(eq, eq.n, CERTIFICATE_GRID, gen).map_err(compute("optimality certificate"))?;
    let (pi_star, w) = informative_atom(eq);
    Ok(json!({
        "pi_star": pi_star,
        "w": w,
        "equilibrium": value(eq),
        "certificate": {
            "grid_size": CERTIFICATE_GRID,
            "grid_max": diag.grid_max,
            "grid_max_minus_value": diag.grid_max_minus_value,
            "local_maxima": diag.local_maxima,
            "indifference_deviation": diag.indifference_deviation,
        },
    }))
}

fn solve_finite(c: &args::SolveFinite, loss: Loss) -> Result<Outcome, CliError> {
    let gen = generator(loss);
    let method = c.method.unwrap_or(match loss {
        Loss::Mse => Method::Structural,
        Loss::Log => Method::DoubleOracle,
    });
    let mut table = belief_header(&["method", "n", "pi_star", "w", "value"], c.n);
    if method != Method::Both {
        let eq = solve_one(c.n, method, &gen, c.tol)?;
        table.push(finite_row(if method == Method::Structural { "structural" } else { "double-oracle" }, &eq));
        return Ok(Outcome { results: finite_record(&eq, &gen)?, residuals: value(&eq.residuals), quadrature: None, table });
    }
    let s = solve_one(c.n, Method::Structural, &gen, c.tol)?;
    let d = solve_one(c.n, Method::DoubleOracle, &gen, c.tol)?;
    table.push(finite_row("structural", &s));
    table.push(finite_row("double-oracle", &d));
    let max_belief_gap = s.beliefs.a.iter().zip(&d.beliefs.a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let results = json!({
        "structural": finite_record(&s, &gen)?,
        "double_oracle": finite_record(&d, &gen)?,
        "agreement": {
            "max_belief_gap": max_belief_gap,
            "value_gap": (s.value - d.value).abs(),
            "pi_star_gap": (informative_atom(&s).0 - informative_atom(&d).0).abs(),
        },
    });
    let residuals = json!({ "structural": value(&s.residuals), "double_oracle": value(&d.residuals) });
    Ok(Outcome { results, residuals, quadrature: None, table })
}

fn limit(tol: f64) -> Result<LimitSolution, CliError> {
    solve_limit_equilibrium(&QuadratureSpec::default(), tol).map_err(compute("limit equilibrium"))
}

fn limit_residuals(s: &LimitSolution) -> Value {
    json!({ "indifference": s.residuals.0, "stationarity": s.residuals.1 })
}

fn solve_limit(c: &args::SolveLimit) -> Result<Outcome, CliError> {
    let s = limit(c.tol)?;
    let mut table = Table::new(&["c_star", "w_star", "value", "indifference_residual", "stationarity_residual"]);
    table.push(vec![num(s.params.c_star), num(s.params.w_star), num(s.value), num(s.residuals.0), num(s.residuals.1)]);
    let results = json!({
        "c_star": s.params.c_star,
        "w_star": s.params.w_star,
        "value": s.value,
        "residuals": limit_residuals(&s),
        "bracket": s.bracket,
        "j_bracket": s.j_bracket,
    });
    Ok(Outcome { results, residuals: limit_residuals(&s), quadrature: Some(s.quadrature), table })
}

fn limit_profile(c: &args::LimitProfile) -> Result<Outcome, CliError> {
    let s = limit(c.tol)?;
    let p = regret_profile(&s.params, &profile_grid(c.b_max, c.step), &s.quadrature).map_err(compute("regret profile"))?;
    let mut table = Table::new(&["b", "regret"]);
    for (b, r) in p.b.iter().zip(&p.regret) {
        table.push(vec![num(*b), num(*r)]);
    }
    let results = json!({
        "c_star": s.params.c_star,
        "w_star": s.params.w_star,
        "slope_near_zero": p.slope_near_zero,
        "local_maxima_b": p.local_maxima.iter().map(|&i| p.b[i]).collect::<Vec<_>>(),
        "refined_peaks": p.refined_peaks,
        "regret_at_zero": p.regret_at_zero,
        "regret_at_c_star": p.regret_at_c_star,
        "peak_gap": p.peak_gap(),
        "global_max": p.global_max,
        "profile": { "b": p.b, "regret": p.regret },
    });
    Ok(Outcome { results, residuals: limit_residuals(&s), quadrature: Some(s.quadrature), table })
}

/// Structural equilibria for `ns`, in order.
pub fn structural_trend(ns: &[usize]) -> Result<Vec<FiniteEquilibrium>, CliError> {
    let gen = BregmanGenerator::mse();
    ns.par_iter().map(|&n| solve_one(n, Method::Structural, &gen, 1e-8)).collect()
}

fn trend(c: &args::Trend) -> Result<Outcome, CliError> {
    let ns: Vec<usize> = (c.n_min..=c.n_max).collect();
    let eqs = structural_trend(&ns)?;
    let mut table = belief_header(&["n", "pi_star", "w", "value"], c.n_max);
    let mut rows = Vec::new();
    for eq in &eqs {
        let (pi, w) = informative_atom(eq);
        let mut r = vec![eq.n.to_string(), num(pi), num(w), num(eq.value)];
        r.extend(eq.beliefs.a.iter().map(|a| num(*a)));
        table.push(r);
        rows.push(json!({ "n": eq.n, "pi_star": pi, "w": w, "value": eq.value, "beliefs": eq.beliefs.a }));
    }
    let residuals = Value::Array(eqs.iter().map(|e| json!({ "n": e.n, "residuals": value(&e.residuals) })).collect());
    Ok(Outcome { results: json!({ "rows": rows }), residuals, quadrature: None, table })
}

fn asymptotics(c: &args::Asymptotics) -> Result<Outcome, CliError> {
    let s = limit(c.tol)?;
    let dgp = TrueDGP::new(c.pi_true).map_err(compute("true DGP"))?;
    let ns = &c.n_list.0;
    let rows = asymptotic_sweep(ns, &dgp, &s.params).map_err(compute("asymptotic sweep"))?;
    let mut table = Table::new(&["n", "L_n", "log_L_n", "L_oracle", "R_mis", "p_under", "p_over"]);
    for r in &rows {
        table.push(vec![r.n.to_string(), num(r.l_n), num(r.log_l_n), num(r.l_oracle), num(r.r_mis), num(r.p_under), num(r.p_over)]);
    }
    let fits = if ns.len() >= 4 {
        let robust = fit_log_decay_rate(ns, &rows.iter().map(|r| r.log_l_n).collect::<Vec<_>>(), FitMode::SqrtN).map_err(compute("robust rate fit"))?;
        let oracle = fit_log_decay_rate(ns, &rows.iter().map(|r| r.log_l_oracle).collect::<Vec<_>>(), FitMode::LinearN).ok();
        json!({
            "robust_vs_sqrt_n": robust,
            "predicted_robust_slope": -dgp.xi(s.params.c_star),
            "oracle_vs_n": oracle,
            "predicted_oracle_slope": -BregmanGenerator::log().divergence(0.5, c.pi_true),
        })
    } else {
        Value::Null
    };
    let results = json!({ "c_star": s.params.c_star, "w_star": s.params.w_star, "pi_true": c.pi_true, "rows": value(&rows), "fits": fits });
    Ok(Outcome { results, residuals: limit_residuals(&s), quadrature: Some(s.quadrature), table })
}

fn convergence(c: &args::Convergence) -> Result<Outcome, CliError> {
    let t = convergence_table(&c.n_list.0, c.tol).map_err(compute("convergence table"))?;
    let mut table = Table::new(&["n", "pi_star", "local_precision", "w", "value", "sup_distance"]);
    for r in &t.rows {
        table.push(vec![r.n.to_string(), num(r.pi_star), num(r.local_precision), num(r.w), num(r.value), num(r.sup_distance)]);
    }
    let results = json!({ "c_star": t.limit.params.c_star, "limit_value": t.limit.value, "rows": value(&t.rows) });
    Ok(Outcome { results, residuals: limit_residuals(&t.limit), quadrature: Some(t.limit.quadrature), table })
}

/// `(1, 0, …, 0, −1)`: moves mass between the first and last signal.
pub fn default_direction(signals: usize) -> Vec<f64> {
    let mut d = vec![0.0; signals];
    d[0] = 1.0;
    d[signals - 1] = -1.0;
    d
}

fn general_rate(c: &args::GeneralRate, loss: Loss, seed: u64) -> Result<Outcome, CliError> {
    let gen = generator(loss);
    let base = vec![1.0 / c.signals as f64; c.signals];
    let dir = default_direction(c.signals);
    let n_min = c.n_list.0[0];
    let mut table = Table::new(&["alpha", "n", "regret", "stderr"]);
    let mut sequences = Vec::new();
    for &alpha in &c.alpha {
        let c_used = clip_c(c.c, &base, &dir, alpha, n_min);
        let mode = RegretMode::Auto { draws: c.draws, seed };
        let pts = rate_experiment(&base, &dir, c_used, alpha, &c.n_list.0, &gen, c.mu, mode).map_err(compute(format!("rate experiment, alpha = {alpha}")))?;
        for p in &pts {
            table.push(vec![num(alpha), p.n.to_string(), num(p.regret), num(p.stderr)]);
        }
        let first = pts.first().map(|p| p.regret).unwrap_or(f64::NAN);
        let last = pts.last().map(|p| p.regret).unwrap_or(f64::NAN);
        sequences.push(json!({
            "alpha": alpha,
            "c": c_used,
            "points": value(&pts),
            "final_over_initial": last / first,
        }));
    }
    let results = json!({ "signals": c.signals, "base": base, "direction": dir, "mu": c.mu, "sequences": sequences });
    Ok(Outcome { results, residuals: Value::Null, quadrature: None, table })
}

fn envelope(cfg: &RunConfig, results: Value, residuals: Value, quadrature: Option<QuadratureSpec>, started: Instant) -> ReportEnvelope {
    ReportEnvelope {
        schema_version: SCHEMA_VERSION,
        config_echo: cfg.clone(),
        results,
        provenance: Provenance {
            residuals,
            quadrature,
            wall_time_ms: cfg.timing.then(|| started.elapsed().as_millis() as u64),
            crate_version: env!("CARGO_PKG_VERSION"),
        },
    }
}

/// Runs one command. Returns the text that went (or would go) to the output.
pub fn dispatch(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    if let Command::Reproduce(r) = &cfg.command {
        let dir = cfg.output_path.clone().unwrap_or_else(|| ".".into());
        let manifest = figures::reproduce(&r.figure.0, &dir)?;
        let failed = manifest.failed();
        let report = to_json_pretty(&envelope(cfg, value(&manifest), Value::Null, manifest.quadrature, started));
        write_atomic(&dir.join("reproduce_report.json"), &report)?;
        if let Some(f) = failed {
            return Err(CliError::Compute { context: format!("figure {f}"), message: "panel failed; see reproduce_report.json".into() });
        }
        return Ok(report);
    }
    let out = match &cfg.command {
        Command::SolveFinite(c) => solve_finite(c, cfg.loss)?,
        Command::SolveLimit(c) => solve_limit(c)?,
        Command::LimitProfile(c) => limit_profile(c)?,
        Command::Trend(c) => trend(c)?,
        Command::Asymptotics(c) => asymptotics(c)?,
        Command::Convergence(c) => convergence(c)?,
        Command::GeneralRate(c) => general_rate(c, cfg.loss, cfg.seed)?,
        Command::Reproduce(_) => unreachable!("handled above"),
    };
    let text = match cfg.resolved_format() {
        Format::Csv => out.table.to_csv(),
        Format::Json => to_json_pretty(&envelope(cfg, out.results, out.residuals, out.quadrature, started)),
    };
    match &cfg.output_path {
        Some(p) => write_atomic(p, &text)?,
        None => print!("{text}"),
    }
    Ok(text)
}
