//! Acceptance gate: prints one line per criterion and exits nonzero when any
//! of them fails. `NOISEFIELD_ONLY=1,4` restricts the run to some criteria.

use std::process::ExitCode;
use std::time::Instant;

use noisefield_harness::acceptance::{run, Options};

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let mut opts = Options::new(scratch.path().to_path_buf());
    if let Ok(only) = std::env::var("NOISEFIELD_ONLY") {
        opts.only = only.split(',').filter_map(|s| s.trim().parse().ok()).collect();
    }
    let start = Instant::now();
    let outcomes = run(&opts);
    let mut failures = 0;
    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2} {}: {}", o.id, o.name, o.detail);
        failures += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed in {:.0}s", outcomes.len() - failures, outcomes.len(), start.elapsed().as_secs_f64());
    if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
