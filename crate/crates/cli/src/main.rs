use clap::{Parser, Subcommand, ValueEnum};
use drift_lab::GroupKind;
use drift_lab_cli::{execute, Command, Format, GridArgs, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "drift-lab", version, about = "Heat kernels, Sobolev norms, embeddings and Cauchy problems on ax+b")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Heat-kernel invariants, Gaussian-bound certificates and kernel tables.
    Heat,
    /// Norm-equivalence triangle and Riesz ratio scans.
    Sobolev,
    /// Embedding ratios, Bessel integrability, Young and translation identities.
    Embed,
    /// The g_ν family: pairings against atoms and failure of the algebra property.
    Counterexample,
    /// Picard solvers for the semilinear heat and Schrödinger equations.
    Pde,
    /// Every battery above.
    All,
}

#[derive(ValueEnum, Clone, Copy)]
enum Group {
    Axb,
    Line,
}

#[derive(ValueEnum, Clone, Copy)]
enum Fmt {
    Json,
    Csv,
    Both,
}

#[derive(clap::Args)]
struct Flags {
    #[arg(long, value_enum, default_value = "axb", global = true)]
    group: Group,
    /// Drift exponents γ.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, global = true)]
    gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', global = true)]
    p: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', global = true)]
    alpha: Option<Vec<f64>>,
    /// Bessel shift `c` of the Riesz scans.
    #[arg(long, global = true)]
    c: Option<f64>,
    /// nx,ns,xmax,smax
    #[arg(long, value_parser = GridArgs::parse, global = true)]
    grid: Option<GridArgs>,
    /// Heat times.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, global = true)]
    t: Option<Vec<f64>>,
    /// PDE horizon.
    #[arg(long, allow_negative_numbers = true, global = true)]
    tau: Option<f64>,
    /// Restrict the run to these sub-batteries.
    #[arg(long, value_delimiter = ',', global = true)]
    battery: Vec<String>,
    #[arg(long, default_value_t = drift_lab_cli::config::DEFAULT_SEED, global = true)]
    seed: u64,
    #[arg(long, default_value = "drift-lab-out", global = true)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both", global = true)]
    format: Fmt,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let f = cli.flags;
    let config = RunConfig {
        command: match cli.command {
            Sub::Heat => Command::Heat,
            Sub::Sobolev => Command::Sobolev,
            Sub::Embed => Command::Embed,
            Sub::Counterexample => Command::Counterexample,
            Sub::Pde => Command::Pde,
            Sub::All => Command::All,
        },
        group: match f.group {
            Group::Axb => GroupKind::AxB,
            Group::Line => GroupKind::AbelianLine,
        },
        grid: f.grid,
        gammas: f.gamma,
        ps: f.p,
        alphas: f.alpha,
        c: f.c,
        ts: f.t,
        tau: f.tau,
        batteries: f.battery,
        seed: f.seed,
        format: match f.format {
            Fmt::Json => Format::Json,
            Fmt::Csv => Format::Csv,
            Fmt::Both => Format::Both,
        },
        out: f.out,
    };
    let envelope = execute(&config);
    for r in &envelope.reports {
        let state = if r.report.passed() { "ok" } else { "FAILED" };
        let note = if r.expected_divergence { " (expected divergence)" } else { "" };
        println!("{state:>6}  {}{note}", r.name);
    }
    for fc in &envelope.failed_checks {
        eprintln!("failed: {} / {}: {}", fc.report, fc.check.name, fc.check.detail);
    }
    if let Some(e) = &envelope.error {
        eprintln!("error: {e}");
    }
    println!("status: {:?}, reports in {}", envelope.status, config.out.display());
    ExitCode::from(envelope.exit_code as u8)
}
