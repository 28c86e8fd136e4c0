use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use soficrank::job::{exit_code, run_job, verify_job, Command, JobSpec};

/// Rank and mean-dimension estimates from sofic approximations.
#[derive(Parser)]
#[command(name = "soficrank", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct JobArgs {
    /// Path to the TOML job file.
    #[arg(long)]
    job: PathBuf,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for the JSON report and CSV tables.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Command the job is meant for.
    #[arg(long, default_value = "vr")]
    command: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// von Neumann–Lück rank of a presented module.
    Vr(JobArgs),
    /// von Neumann dimension of the kernel of a matrix.
    Vnd(JobArgs),
    /// Counting functions and covering sandwiches per level.
    Spectrum(JobArgs),
    /// Empirical against exact trace moments.
    Moments(JobArgs),
    /// Interval estimate of metric mean dimension.
    Mdim(JobArgs),
    /// Greedy quasi-tiling and orbit covering numbers.
    Tile(JobArgs),
    /// Rank failure of additivity over a free group.
    DemoAdditivity(JobArgs),
    /// Dry-run validation with predicted matrix sizes.
    Verify(VerifyArgs),
}

fn load(args: &JobArgs) -> soficrank::Result<JobSpec> {
    if let Some(n) = args.threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    JobSpec::load(&args.job)
}

fn run(cli: Cli) -> soficrank::Result<()> {
    let (args, cmd) = match &cli.command {
        Cmd::Vr(a) => (a, Command::Vr),
        Cmd::Vnd(a) => (a, Command::Vnd),
        Cmd::Spectrum(a) => (a, Command::Spectrum),
        Cmd::Moments(a) => (a, Command::Moments),
        Cmd::Mdim(a) => (a, Command::Mdim),
        Cmd::Tile(a) => (a, Command::Tile),
        Cmd::DemoAdditivity(a) => (a, Command::DemoAdditivity),
        Cmd::Verify(v) => {
            let job = load(&v.job)?;
            let report = verify_job(&job, Command::from_name(&v.command)?)?;
            print!("{}", report.summary());
            return Ok(());
        }
    };
    let job = load(args)?;
    let output = run_job(&job, cmd)?;
    for path in output.write_to(&args.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
