use std::process::ExitCode;

use robust_insurance::acceptance::{render, CRITERIA};

fn main() -> ExitCode {
    // `cargo test -- --list` and filters probe custom harnesses too.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (name, _) in CRITERIA {
            println!("{name}: test");
        }
        return ExitCode::SUCCESS;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let verbose = std::env::var_os("ACCEPTANCE_VERBOSE").is_some();

    let mut outcomes = Vec::new();
    for (name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        println!("{}", o.line());
        if verbose || !o.passed {
            for d in &o.details {
                println!("       {d}");
            }
        }
        outcomes.push(o);
    }
    let summary = render(&outcomes, false);
    println!("{}", summary.lines().last().unwrap_or_default());
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
