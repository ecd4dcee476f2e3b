//! Command-line layer over `robust_beliefs`: argument parsing, report
//! envelopes, CSV tables and figure data.

pub mod args;
pub mod error;
pub mod figures;
pub mod report;
pub mod run;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::RunConfig;
pub use error::CliError;
pub use run::dispatch;

pub const THREADS_ENV: &str = "ROBUST_BELIEFS_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Full process behaviour minus the `exit`: returns the exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::Config(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let result = configure_threads().and_then(|()| dispatch(&cfg));
    match result {
        Ok(_) => {
            if let (false, Some(p)) = (cfg.quiet, &cfg.output_path) {
                eprintln!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
