//! Runs the ten acceptance criteria and prints one PASS/FAIL line per criterion.
//! Pass criterion numbers as arguments to run a subset.

use cpvquad::acceptance::{run_criterion, CRITERIA, DEFAULT_SEED};
use std::process::ExitCode;

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, _) in CRITERIA.iter() {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let result = run_criterion(id, DEFAULT_SEED);
        println!("{}", result.line());
        if !result.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
