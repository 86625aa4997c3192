//! Acceptance criteria 1 to 9, one PASS/FAIL line each.

use std::path::Path;
use std::process::ExitCode;

use fqw::acceptance::run_all;

fn main() -> ExitCode {
    let exe = Path::new(env!("CARGO_BIN_EXE_fqw"));
    let reports = run_all(exe);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", reports.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
