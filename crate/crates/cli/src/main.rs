use std::process::ExitCode;

use bwbp_cli::{run_job, JobConfig};
use clap::Parser;

fn main() -> ExitCode {
    let cfg = JobConfig::parse();
    match run_job(&cfg) {
        Ok(out) => {
            println!("{}", out.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
