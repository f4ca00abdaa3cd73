use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bergman_lab::{KappaConvention, MVariant, NormalTermConvention};
use bergman_lab_cli::config::parse_enum;
use bergman_lab_cli::{emit_report, run_experiment, ExperimentConfig, ExperimentKind, MetricRoute, MetricSource, OutputFormat, Verdict};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bergman-lab", version, about = "Bergman kernel and metric experiments on model domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Each flag overrides the config key of the same name.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "SEED_OVERRIDE")]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    kind: Option<ExperimentKind>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, value_parser = parse_enum::<KappaConvention>)]
    kappa: Option<KappaConvention>,
    #[arg(long = "normal_term", alias = "normal-term", value_parser = parse_enum::<NormalTermConvention>)]
    normal_term: Option<NormalTermConvention>,
    #[arg(long = "m_variant", alias = "m-variant", value_parser = parse_enum::<MVariant>)]
    m_variant: Option<MVariant>,
    #[arg(long, value_parser = parse_enum::<MetricRoute>)]
    method: Option<MetricRoute>,
    #[arg(long = "metric_source", alias = "metric-source", value_parser = parse_enum::<MetricSource>)]
    metric_source: Option<MetricSource>,
}

impl RunArgs {
    fn apply(&self, config: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    config.$field = v;
                }
            )*};
        }
        set!(seed, kind, format, samples, blocks, kappa, normal_term, m_variant, method, metric_source);
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        if let Some(degree) = self.degree {
            config.degree = Some(degree);
        }
    }
}

fn run(args: RunArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut config = match ExperimentConfig::from_toml(&text) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    args.apply(&mut config);
    let report = match run_experiment(&config) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let bytes = emit_report(&report, config.format);
    let written = match &config.out {
        Some(path) => std::fs::write(path, &bytes),
        None => std::io::stdout().write_all(&bytes),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(2);
    }
    eprintln!(
        "{}: {} records, verdict {} ({:.2} s)",
        report.domain,
        report.records.len(),
        report.verdict,
        report.timing.wall_clock_seconds
    );
    match report.verdict {
        Verdict::Pass | Verdict::ExpectedFail => ExitCode::SUCCESS,
        Verdict::Fail | Verdict::Invalid => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Validate { config } => match ExperimentConfig::load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
