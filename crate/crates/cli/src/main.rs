mod commands;
mod output;
mod spec;

use std::process::ExitCode;

use clap::Parser;

use spec::{Cli, CommandKind, RunSpec, UsageError, VerificationFailed};

fn run(cli: Cli) -> anyhow::Result<()> {
    let (kind, flags) = cli.command.split();
    let spec = RunSpec::resolve(kind, flags)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = spec.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build()?;
    pool.install(|| match spec.command {
        CommandKind::Plan => commands::cmd_plan(&spec),
        CommandKind::Integrate => commands::cmd_integrate(&spec),
        CommandKind::Verify => commands::cmd_verify(&spec),
        CommandKind::Sweep => commands::cmd_sweep(&spec),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if err.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Err(err) if err.downcast_ref::<VerificationFailed>().is_some() => {
            eprintln!("verification failed: {err}");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
