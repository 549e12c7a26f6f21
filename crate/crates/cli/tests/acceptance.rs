//! The acceptance suite on the reference scenario: one `PASS`/`FAIL` line per
//! criterion, nonzero exit if any criterion fails.

use std::process::ExitCode;

use frag_avalanche_cli::config::RunConfig;
use frag_avalanche_cli::verify::{Verifier, CRITERIA};

fn main() -> ExitCode {
    let mut cfg = RunConfig::default();
    cfg.run.seed = Some(0);
    let verifier = Verifier::new(&cfg).expect("reference scenario is valid");

    let mut failed = Vec::new();
    for id in CRITERIA {
        let r = verifier.run(id);
        println!(
            "acceptance criterion {:>2} ({}): {}  measured {}  target {}",
            r.id,
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.measured,
            r.target
        );
        if !r.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", CRITERIA.count());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
