//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,3` restricts the run; `ACCEPTANCE_OUT` keeps the CSV
//! evidence in a directory of your choosing, and `ACCEPTANCE_SEED` replaces
//! the default seed 42.

use std::path::PathBuf;
use std::process::ExitCode;

use fracdens::verify::{run_suite, VerifyConfig};

fn main() -> ExitCode {
    let only = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<u8>()
                    .expect("ACCEPTANCE_ONLY holds criterion ids")
            })
            .collect::<Vec<_>>()
    });
    let tmp = tempfile::tempdir().expect("temporary directory");
    let out = std::env::var("ACCEPTANCE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|_| tmp.path().to_path_buf());
    let mut cfg = VerifyConfig::new(&out);
    cfg.only = only;
    if let Ok(seed) = std::env::var("ACCEPTANCE_SEED") {
        cfg.seed = seed.parse().expect("ACCEPTANCE_SEED is an integer");
    }
    match run_suite(&cfg) {
        Ok(outcomes) => {
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!(
                "acceptance: {} passed, {failed} failed",
                outcomes.len() - failed
            );
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("acceptance: error: {e}");
            ExitCode::FAILURE
        }
    }
}
