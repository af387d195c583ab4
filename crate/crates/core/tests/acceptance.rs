//! Prints one line per acceptance criterion and fails if any criterion fails.
//!
//! `DECOPT_ONLY=3,5` restricts the run to the listed criteria.

use std::process::ExitCode;

use decopt::acceptance::{run_all, run_criterion};

fn main() -> ExitCode {
    let outcomes = match std::env::var("DECOPT_ONLY") {
        Ok(list) => list.split(',').filter_map(|s| s.trim().parse().ok()).map(run_criterion).collect(),
        Err(_) => run_all(),
    };
    for outcome in &outcomes {
        println!("{outcome}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
