use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "robust-beliefs", version, about = "Minimax-regret belief equilibria: solvers, checks and figure data")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Seed for every Monte Carlo step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output file (a directory for `reproduce`). Defaults to stdout.
    #[arg(long = "out", global = true)]
    pub output_path: Option<PathBuf>,

    /// Defaults to csv for `.csv` outputs and json otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[arg(long, global = true, value_enum, default_value_t = Loss::Mse)]
    pub loss: Loss,

    /// No progress or summary lines on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Record wall-clock time in the provenance block. Off by default so
    /// reports are byte-identical across runs.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Structural,
    DoubleOracle,
    Both,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Solve the finite binary-signal game for one n.
    SolveFinite(SolveFinite),
    /// Solve the Gaussian limit game for (c*, w*).
    SolveLimit(SolveLimit),
    /// Regret of the limit equilibrium beliefs against each local precision b.
    LimitProfile(LimitProfile),
    /// Finite equilibria over a range of n.
    Trend(Trend),
    /// Loss rates of the large-n robust rule under a fixed true precision.
    Asymptotics(Asymptotics),
    /// Finite equilibria against the limit equilibrium.
    Convergence(Convergence),
    /// Regret of Nature's shrinking two-point mixture over multinomial signals.
    GeneralRate(GeneralRate),
    /// Write the CSV data behind a figure.
    Reproduce(Reproduce),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveFinite {
    #[arg(long)]
    pub n: usize,
    /// Defaults to structural under MSE and double-oracle under LOG.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Duality-gap tolerance for the double oracle.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveLimit {
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LimitProfile {
    #[arg(long, default_value_t = 3.0)]
    pub b_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Trend {
    #[arg(long, default_value_t = 3)]
    pub n_min: usize,
    #[arg(long, default_value_t = 18)]
    pub n_max: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Asymptotics {
    #[arg(long, default_value_t = 0.75)]
    pub pi_true: f64,
    /// Comma-separated values or ranges: `100,200`, `400..4000:400`.
    #[arg(long, default_value = "400..4000:400", value_parser = parse_n_list)]
    pub n_list: NList,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Convergence {
    #[arg(long, default_value = "3..18", value_parser = parse_n_list)]
    pub n_list: NList,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeneralRate {
    #[arg(long, default_value_t = 3)]
    pub signals: usize,
    #[arg(long, default_value = "0.25,0.5,1.0", value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Clipped so every perturbed distribution stays in the simplex.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value = "25,50,100,200", value_parser = parse_n_list)]
    pub n_list: NList,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Monte Carlo draws, used only past the exact-enumeration limits.
    #[arg(long, default_value_t = 200_000)]
    pub draws: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Reproduce {
    /// 1, 2, 3, 4 (or fig1..fig4), or all.
    #[arg(long, value_parser = parse_figures)]
    pub figure: FigureSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct NList(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct FigureSet(pub Vec<u8>);

/// Parses `a,b,c`, `lo..hi` and `lo..hi:step`, all inclusive.
pub fn parse_n_list(s: &str) -> Result<NList, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if let Some((lo, rest)) = item.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((h, st)) => (h, st.parse::<usize>().map_err(|e| format!("bad step in {item:?}: {e}"))?),
                None => (rest, 1),
            };
            let lo: usize = lo.parse().map_err(|e| format!("bad range start in {item:?}: {e}"))?;
            let hi: usize = hi.parse().map_err(|e| format!("bad range end in {item:?}: {e}"))?;
            if step == 0 || hi < lo {
                return Err(format!("empty range {item:?}"));
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(item.parse().map_err(|e| format!("bad integer {item:?}: {e}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(NList(out))
}

pub fn parse_figures(s: &str) -> Result<FigureSet, String> {
    let s = s.trim().to_ascii_lowercase();
    if s == "all" {
        return Ok(FigureSet(vec![1, 2, 3, 4]));
    }
    match s.strip_prefix("fig").unwrap_or(&s) {
        "1" => Ok(FigureSet(vec![1])),
        "2" => Ok(FigureSet(vec![2])),
        "3" => Ok(FigureSet(vec![3])),
        "4" => Ok(FigureSet(vec![4])),
        _ => Err(format!("unknown figure {s:?}; expected 1-4 or all")),
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_tol(tol: f64, max: f64) -> Result<(), CliError> {
    if tol > 0.0 && tol <= max {
        Ok(())
    } else {
        Err(config_err(format!("--tol must be in (0, {max:e}], got {tol}")))
    }
}

fn require_mse(loss: Loss, what: &str) -> Result<(), CliError> {
    match loss {
        Loss::Mse => Ok(()),
        Loss::Log => Err(config_err(format!("{what} is defined for squared-error loss only"))),
    }
}

fn strictly_increasing(ns: &[usize]) -> bool {
    ns.windows(2).all(|w| w[0] < w[1])
}

impl RunConfig {
    /// Range checks done before any work, so a bad config writes nothing.
    pub fn validate(&self) -> Result<(), CliError> {
        match &self.command {
            Command::SolveFinite(c) => {
                if c.n == 0 || c.n > 5000 {
                    return Err(config_err(format!("--n must be in 1..=5000, got {}", c.n)));
                }
                if self.loss == Loss::Log && matches!(c.method, Some(Method::Structural | Method::Both)) {
                    return Err(config_err("the structural solver is defined for squared-error loss only"));
                }
                check_tol(c.tol, 1e-2)
            }
            Command::SolveLimit(c) => {
                require_mse(self.loss, "the limit game")?;
                check_tol(c.tol, 1e-8)
            }
            Command::LimitProfile(c) => {
                require_mse(self.loss, "the limit game")?;
                if !(c.step > 0.0 && c.step <= 0.01) {
                    return Err(config_err(format!("--step must be in (0, 0.01], got {}", c.step)));
                }
                if !(c.b_max >= 3.0 && c.b_max <= 20.0) {
                    return Err(config_err(format!("--b-max must be in [3, 20], got {}", c.b_max)));
                }
                check_tol(c.tol, 1e-8)
            }
            Command::Trend(c) => {
                require_mse(self.loss, "trend (structural solver)")?;
                if c.n_min == 0 || c.n_max < c.n_min || c.n_max > 1000 {
                    return Err(config_err(format!("need 1 <= --n-min <= --n-max <= 1000, got {}..{}", c.n_min, c.n_max)));
                }
                Ok(())
            }
            Command::Asymptotics(c) => {
                require_mse(self.loss, "asymptotics")?;
                if !(c.pi_true > 0.5 && c.pi_true <= 1.0) {
                    return Err(config_err(format!("--pi-true must be in (0.5, 1], got {}", c.pi_true)));
                }
                if c.n_list.0.contains(&0) || !strictly_increasing(&c.n_list.0) {
                    return Err(config_err("--n-list must be positive and strictly increasing"));
                }
                check_tol(c.tol, 1e-8)
            }
            Command::Convergence(c) => {
                require_mse(self.loss, "convergence")?;
                if c.n_list.0.contains(&0) || !strictly_increasing(&c.n_list.0) {
                    return Err(config_err("--n-list must be positive and strictly increasing"));
                }
                check_tol(c.tol, 1e-8)
            }
            Command::GeneralRate(c) => {
                if c.signals < 2 || c.signals > 16 {
                    return Err(config_err(format!("--signals must be in 2..=16, got {}", c.signals)));
                }
                if c.alpha.is_empty() || c.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return Err(config_err("--alpha values must be positive"));
                }
                if !(c.c > 0.0 && c.c.is_finite()) {
                    return Err(config_err(format!("--c must be positive, got {}", c.c)));
                }
                if !(c.mu > 0.0 && c.mu < 1.0) {
                    return Err(config_err(format!("--mu must be in (0, 1), got {}", c.mu)));
                }
                if c.n_list.0.contains(&0) || !strictly_increasing(&c.n_list.0) {
                    return Err(config_err("--n-list must be positive and strictly increasing"));
                }
                if c.draws < 2 {
                    return Err(config_err("--draws must be at least 2"));
                }
                Ok(())
            }
            Command::Reproduce(_) => {
                require_mse(self.loss, "figure reproduction")?;
                if self.format == Some(Format::Json) {
                    return Err(config_err("reproduce writes CSV files; --format json is not supported"));
                }
                match &self.output_path {
                    Some(p) if p.exists() && !p.is_dir() => Err(config_err(format!("--out {} is not a directory", p.display()))),
                    _ => Ok(()),
                }
            }
        }
    }

    /// Requested or inferred output format.
    pub fn resolved_format(&self) -> Format {
        self.format.unwrap_or_else(|| match &self.output_path {
            Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => Format::Csv,
            _ => Format::Json,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_lists() {
        assert_eq!(parse_n_list("3..6").unwrap().0, vec![3, 4, 5, 6]);
        assert_eq!(parse_n_list("400..1600:400").unwrap().0, vec![400, 800, 1200, 1600]);
        assert_eq!(parse_n_list("25, 50,100").unwrap().0, vec![25, 50, 100]);
        assert!(parse_n_list("5..3").is_err());
        assert!(parse_n_list("a").is_err());
        assert!(parse_n_list("").is_err());
    }

    #[test]
    fn figures() {
        assert_eq!(parse_figures("fig2").unwrap().0, vec![2]);
        assert_eq!(parse_figures("4").unwrap().0, vec![4]);
        assert_eq!(parse_figures("all").unwrap().0.len(), 4);
        assert!(parse_figures("5").is_err());
    }
}
