mod args;
mod commands;
mod io;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;
use io::{CliError, CliResult};

fn run(cli: &Cli) -> CliResult {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::input("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(CliError::internal)?;
    }
    let ctx = Ctx {
        seed: cli.seed,
        out: &cli.out,
        run_config: serde_json::json!({
            "tool_version": trr_core::VERSION,
            "invocation": serde_json::to_value(cli).map_err(CliError::internal)?,
        }),
    };
    match &cli.command {
        Command::Encode(a) => commands::encode(&ctx, a),
        Command::BuildKb(a) => commands::build_kb(&ctx, a),
        Command::Split(a) => commands::split(&ctx, a),
        Command::AuditSplit(a) => commands::audit(&ctx, a),
        Command::Query(a) => commands::query(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Ablate(a) => commands::ablate(&ctx, a),
        Command::DedupSweep(a) => commands::dedup_sweep(&ctx, a),
        Command::Degrade(a) => commands::degrade(&ctx, a),
        Command::Profile(a) => commands::profile(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
    }
}

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
        Err(_) => ExitCode::from(1),
    }
}
