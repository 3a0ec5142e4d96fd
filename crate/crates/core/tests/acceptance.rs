//! One line per acceptance criterion. Runs as a plain binary so the lines
//! show up in `cargo test` output without `--nocapture`.

use std::process::ExitCode;

fn main() -> ExitCode {
    let (reports, elapsed) = match coopdrive::verify::run_selftest_timed() {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        reports.len() - failed,
        reports.len(),
        elapsed.as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
