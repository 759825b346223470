use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use subwave::cli::{error_report, exit_code, run, Command};
use subwave::config::RunConfig;
use subwave::Error;

#[derive(Parser)]
#[command(name = "subwave", version, about = "Internal-wave scattering in subcritical channels")]
struct Args {
    #[arg(long, global = true, default_value = "subwave.toml")]
    config: PathBuf,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0: rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Subcriticality, fundamental intervals and bounce count.
    Check,
    /// Tabulate the billiard map and its circle map.
    Billiard,
    /// Scattering matrix, remainder and diagnostics.
    Scatter,
    /// Outgoing resolvent field and Neumann data.
    Solve,
    /// Limiting absorption sweep against the outgoing solution.
    Lap,
    /// Forced time evolution.
    Evolve,
    /// Standing-wave profile from an evolve run.
    Extract,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Check => Command::Check,
            Cmd::Billiard => Command::Billiard,
            Cmd::Scatter => Command::Scatter,
            Cmd::Solve => Command::Solve,
            Cmd::Lap => Command::Lap,
            Cmd::Evolve => Command::Evolve,
            Cmd::Extract => Command::Extract,
        }
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("{}", error_report(err));
    ExitCode::from(exit_code(err) as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            return fail(&Error::Config(e.to_string()));
        }
    }
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    match run(args.cmd.into(), &cfg, &args.out) {
        Ok(out) => {
            print!("{}", out.report);
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
