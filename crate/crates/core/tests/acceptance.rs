//! Runs every acceptance criterion at its pinned tolerance and prints one
//! PASS/FAIL line per criterion. Exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rdsw_core::verify::{self, CASE_COUNT};

fn main() -> ExitCode {
    let mut failed = 0;
    for case in 1..=CASE_COUNT {
        let title = verify::title(case).unwrap_or("?");
        let start = Instant::now();
        let outcome = verify::run_case(case);
        let elapsed = start.elapsed();
        let line = match outcome {
            Ok(o) => {
                let mut failures: Vec<String> = o.failures().iter().map(|s| s.to_string()).collect();
                if let Some(budget) = verify::runtime_budget(case) {
                    if elapsed > budget {
                        failures.push(format!("runtime_over_{}s", budget.as_secs()));
                    }
                }
                let summary: Vec<String> = o
                    .metrics
                    .iter()
                    .filter(|m| !m.name.starts_with("exact_") && !m.name.starts_with("sampled_") && !m.name.starts_with("qn_z_"))
                    .take(6)
                    .map(|m| format!("{}={:.6e}", m.name, m.value))
                    .collect();
                if failures.is_empty() {
                    format!("PASS criterion {case:>2} {title} [{:.2}s] {}", elapsed.as_secs_f64(), summary.join(" "))
                } else {
                    failed += 1;
                    format!(
                        "FAIL criterion {case:>2} {title} [{:.2}s] failed: {} | {}",
                        elapsed.as_secs_f64(),
                        failures.join(", "),
                        summary.join(" ")
                    )
                }
            }
            Err(e) => {
                failed += 1;
                format!("FAIL criterion {case:>2} {title} error: {e}")
            }
        };
        println!("{line}");
    }
    println!("acceptance: {} passed, {failed} failed", CASE_COUNT as usize - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
