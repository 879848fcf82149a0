//! One line per criterion; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use wqed_cli::presets::Overrides;
use wqed_cli::suite::run_all;

fn main() -> ExitCode {
    let start = Instant::now();
    let (outs, criteria) = match run_all(&Overrides::default()) {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    for (name, o) in &outs {
        println!("preset {name:<11} {:>8.2} s", o.runtime);
    }
    for c in &criteria {
        println!("{}", c.line());
    }
    let failed = criteria.iter().filter(|c| !c.passed).count();
    println!("acceptance: {} passed, {failed} failed, {:.1} s", criteria.len() - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
