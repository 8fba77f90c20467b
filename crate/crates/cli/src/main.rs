mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "facecloak", version, about = "Cancelable binary face-template protection")]
struct Cli {
    /// Master seed for every random choice (dataset, enrollment, attack, probe).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding inputs and outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic templates, population statistics and attribute labels.
    GenData(GenDataArgs),
    /// Train one cloak network per subject on its first sample.
    Enroll(EnrollArgs),
    /// Verify a probe template against one enrollment record.
    Verify(VerifyArgs),
    /// TMR at the target FMR before and after cloaking.
    EvalBiometric(CheckArgs),
    /// Cross-system linkability of two independent enrollments.
    EvalUnlink(UnlinkArgs),
    /// White-box inversion attack against stored enrollments.
    Attack(AttackArgs),
    /// Train an attribute classifier on cloaks and on raw templates.
    ProbeAttribute(CheckArgs),
    /// Orthogonal projection loss of a template file, classes = subjects.
    OplLoss(OplArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Args)]
pub struct EnrollArgs {
    /// Enroll only these subjects (default: all).
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Enrollment record to verify against.
    #[arg(long)]
    pub enrollment: PathBuf,
    /// Template file whose first line is the probe.
    #[arg(long, conflicts_with_all = ["subject", "sample"])]
    pub probe_file: Option<PathBuf>,
    /// Probe subject in the templates file.
    #[arg(long, requires = "sample")]
    pub subject: Option<String>,
    /// Probe sample in the templates file.
    #[arg(long, requires = "subject")]
    pub sample: Option<String>,
    /// Hamming-similarity threshold; defaults to the calibrated one from eval-biometric.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct CheckArgs {
    /// Exit with status 1 if the result violates its acceptance bound.
    #[arg(long)]
    pub check: bool,
}

#[derive(Args)]
pub struct UnlinkArgs {
    /// Number of subjects to enroll twice (default: all).
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Seed of the second system (default: master seed + 1).
    #[arg(long)]
    pub seed_b: Option<u64>,
    #[command(flatten)]
    pub check: CheckArgs,
}

#[derive(Args)]
pub struct AttackArgs {
    /// Number of enrollments to attack.
    #[arg(long, default_value_t = 50)]
    pub subjects: usize,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub check: CheckArgs,
}

#[derive(Args)]
pub struct OplArgs {
    /// Template file (defaults to the generated one).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// L2-normalize templates first instead of rejecting non-unit vectors.
    #[arg(long)]
    pub normalize: bool,
}

/// Result of a command that completed without error.
pub enum Outcome {
    Success,
    /// Verification reject or a failed `--check`.
    Negative,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.seed = cli.seed.unwrap_or(if cli.config.is_some() { config.seed } else { DEFAULT_SEED });
    config.dataset.seed = config.seed;
    config.attack.seed = config.seed;
    config.probe.seed = config.seed;
    let ctx = commands::Context::new(config, &cli.out);
    match cli.command {
        Command::GenData(a) => commands::gen_data(ctx, &a),
        Command::Enroll(a) => commands::enroll(&ctx, &a),
        Command::Verify(a) => commands::verify(&ctx, &a),
        Command::EvalBiometric(a) => commands::eval_biometric(&ctx, &a),
        Command::EvalUnlink(a) => commands::eval_unlink(&ctx, &a),
        Command::Attack(a) => commands::attack(ctx, &a),
        Command::ProbeAttribute(a) => commands::probe_attribute(&ctx, &a),
        Command::OplLoss(a) => commands::opl(&ctx, &a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
