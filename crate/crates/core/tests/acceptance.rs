//! Acceptance suite: one PASS/FAIL line per criterion.

use polaris_core::acceptance::run_all;

fn main() {
    let results = run_all(|r| println!("{r}"));
    let failed: Vec<u32> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
