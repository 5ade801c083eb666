use std::process::ExitCode;

use ndnqos_cli::{parse_plan, run_plan, ParseFailure};

fn main() -> ExitCode {
    let plan = match parse_plan(std::env::args_os()) {
        Ok(plan) => plan,
        Err(ParseFailure::Clap(e)) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
        Err(ParseFailure::Plan(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_plan(&plan) {
        Ok(report) => {
            println!(
                "{} runs written under {}",
                report.run_dirs.len(),
                plan.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
