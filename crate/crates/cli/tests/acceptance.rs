//! Full-profile acceptance suite: one line per criterion, nonzero exit on
//! any failure. `QTRAJ_ACCEPTANCE_PROFILE=quick` selects the quick profile.

use std::process::ExitCode;

use qtraj_cli::verify::{Profile, Verifier, VerifyOptions};

fn main() -> ExitCode {
    let profile = match std::env::var("QTRAJ_ACCEPTANCE_PROFILE").as_deref() {
        Ok("quick") => Profile::quick(),
        _ => Profile::full(),
    };
    println!("acceptance suite ({} profile, seed 42)", profile.name);
    let mut verifier = Verifier::new(VerifyOptions { profile, ..VerifyOptions::default() });
    let report = match verifier.run(|r| println!("{}", r.line())) {
        Ok(r) => r,
        Err(e) => {
            println!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let failed: Vec<String> = report.criteria.iter().filter(|c| !c.passed).map(|c| format!("C{}", c.id)).collect();
    if failed.is_empty() {
        println!("all {} criteria passed in {:.0}s", report.criteria.len(), report.wall_clock_seconds);
        ExitCode::SUCCESS
    } else {
        println!("failed: {} ({:.0}s)", failed.join(", "), report.wall_clock_seconds);
        ExitCode::FAILURE
    }
}
