use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use riskscreen::ingest::{table_to_csv, write_xport};
use riskscreen::pipeline::{load_config, run_stage, RunArtifacts, Stage};
use riskscreen::synth::{generate, SynthConfig};

/// Race-aware versus race-unaware diabetes screening analysis.
#[derive(Debug, Parser)]
#[command(name = "riskscreen", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Ignore survey weights and count every respondent once.
    #[arg(long, global = true)]
    unweighted: bool,
    /// Seed for synthetic data; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read source files, harmonize cycles and write the cohort snapshot.
    Ingest,
    /// Fit every configured model on the cohort snapshot.
    Fit,
    /// Calibration, risk distribution, utility curves, gain tables and subgroups.
    Report,
    /// Utility gain across the reward grid.
    Sweep,
    /// All stages in order.
    All,
    /// Write synthetic NHANES-shaped source files and a matching config.
    Synth {
        /// Respondents per survey cycle.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Survey cycles to generate.
        #[arg(long, value_delimiter = ',', default_value = "2011-2012")]
        cycles: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Xport)]
        format: Format,
        /// Skip the questionnaire tables used by the extended model.
        #[arg(long)]
        no_extended: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Xport,
    Csv,
}

fn run_configured(cli: &Cli, stage: Stage) -> Result<RunArtifacts> {
    let path = cli.config.as_deref().context("--config is required for this command")?;
    let mut config = load_config(path)?;
    if let Some(out) = &cli.output {
        config.output_dir = out.clone();
    }
    if cli.unweighted {
        config.weighted = false;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(run_stage(&config, stage)?)
}

fn synth(cli: &Cli, n: usize, cycles: &[String], format: Format, extended: bool) -> Result<()> {
    let Some(out) = cli.output.as_deref() else { bail!("--output is required for synth") };
    let config = SynthConfig { seed: cli.seed.unwrap_or(1), n_per_cycle: n, cycles: cycles.to_vec(), extended };
    let tables = generate(&config)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut sources = String::new();
    for t in &tables {
        let (file, kind, bytes) = match format {
            Format::Xport => (format!("{}.xpt", t.name), "xport", write_xport(std::slice::from_ref(t))?),
            Format::Csv => (format!("{}.csv", t.name), "csv", table_to_csv(t)?.into_bytes()),
        };
        std::fs::write(out.join(&file), bytes).with_context(|| format!("writing {file}"))?;
        sources.push_str(&format!("[[data_sources]]\npath = \"{file}\"\nkind = \"{kind}\"\n\n"));
    }
    let toml = format!("output_dir = \"out\"\nseed = {}\n\n{sources}", config.seed);
    write_config(&out.join("riskscreen.toml"), &toml)?;
    println!("wrote {} tables and riskscreen.toml to {}", tables.len(), out.display());
    Ok(())
}

fn write_config(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { n, cycles, format, no_extended } => synth(&cli, *n, cycles, *format, !no_extended),
        cmd => {
            let stage = match cmd {
                Command::Ingest => Stage::Ingest,
                Command::Fit => Stage::Fit,
                Command::Report => Stage::Report,
                Command::Sweep => Stage::Sweep,
                _ => Stage::All,
            };
            run_configured(&cli, stage).map(|run| {
                for f in &run.written {
                    println!("wrote {}", run.output_dir.join(f).display());
                }
                println!("manifest lists {} files", run.manifest.files.len());
                if !run.warnings.is_empty() {
                    println!("{} warning(s); see cohort.json and utility_report.json", run.warnings.len());
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
