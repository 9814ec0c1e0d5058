//! One line per acceptance criterion; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use handover_verify::checks::{self, Check};

fn main() -> ExitCode {
    let started = Instant::now();
    let suite: Vec<(&str, fn() -> Check)> = vec![
        ("force_law_oracles", || checks::force_laws(checks::FORCE_LAW_SAMPLES, 1)),
        ("conservative_forces", || checks::conservative_forces(1000, 2)),
        ("jacobian_virtual_work", || checks::jacobian_and_virtual_work(1000, 3)),
        ("peak_repulsion", || checks::peak_repulsion(4)),
        ("passivity", checks::passivity),
        ("fsm_protocol", || checks::fsm_protocol(checks::FSM_CASES)),
        ("experiment1", || checks::experiment1(checks::EXP1_RUNS, 100)),
        ("experiment2", || checks::experiment2(checks::EXP2_RUNS, 7)),
        ("cooperative_profile", checks::cooperative_profile),
        ("determinism", || checks::determinism(20, 11)),
    ];
    let filter = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check) in suite {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let result = check();
        println!("{result}");
        if !result.passed {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} failed, {:.1} s",
        failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
