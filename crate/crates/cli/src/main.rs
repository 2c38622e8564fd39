use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jpo_cli::config::{ExperimentConfig, Format};
use jpo_cli::{pipeline, report, CliError};

/// Injection-locked JPO simulation and phase-noise analysis.
#[derive(Parser)]
#[command(name = "jpo", version)]
struct Cli {
    /// Experiment configuration (JSON), or a run manifest to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Parallel workers (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact kinds to write.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Potential cross-sections and stationary points per sweep member.
    Potential,
    /// Simulate and analyse every sweep member.
    Run,
    /// Analyse existing trace files or run directories.
    Analyze {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Figure bundle (SVG + CSV) for a finished run.
    Report { run_dir: PathBuf },
    /// Check a configuration, or print the default template.
    ValidateConfig {
        #[arg(long)]
        template: bool,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(f) = &cli.format {
        cfg.formats = f.clone();
    }
    Ok(cfg)
}

fn output_dir(cli: &Cli, cfg: Option<&ExperimentConfig>, fallback: &str) -> PathBuf {
    cli.output
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::ValidateConfig { template } => {
            if *template {
                println!("{}", serde_json::to_string_pretty(&ExperimentConfig::template())?);
                return Ok(());
            }
            let cfg = load(cli)?;
            let r = cfg.resolve()?;
            for m in &r.members {
                println!(
                    "{}: N_p = {:.6e}, |E_s| = {:.6e}, theta_s = {:.6} rad, D = {:.6e}, seed {} stream {}",
                    m.dir_name(),
                    m.photon_number,
                    m.drive.ils_amplitude,
                    m.drive.ils_phase,
                    m.sim.noise_intensity,
                    m.sim.seed,
                    m.sim.stream
                );
            }
            println!("configuration OK ({} members)", r.members.len());
            Ok(())
        }
        Command::Potential => {
            let cfg = load(cli)?;
            let out = output_dir(cli, Some(&cfg), "jpo_potential");
            let entries = pipeline::cmd_potential(&cfg, &out)?;
            for e in &entries {
                match e.well_energy_splitting {
                    Some(s) => println!("member {}: splitting {s:.6e}", e.index),
                    None => println!("member {}: monostable", e.index),
                }
            }
            Ok(())
        }
        Command::Run => {
            let cfg = load(cli)?;
            let out = output_dir(cli, Some(&cfg), "jpo_run");
            let outcome = pipeline::cmd_run(&cfg, &out, cli.workers)?;
            for m in &outcome.manifest.members {
                match (&m.summary, &m.error) {
                    (Some(s), _) => println!(
                        "{}: N_p = {}, {} switches, occupation {:.3}/{:.3}, Lorentzian {}",
                        m.dir,
                        m.photon_number,
                        s.switch_count,
                        s.occupation[0],
                        s.occupation[1],
                        if s.lorentzian_accepted { "accepted" } else { "rejected" }
                    ),
                    (None, e) => println!("{}: FAILED {}", m.dir, e.as_deref().unwrap_or("")),
                }
            }
            println!("wrote {}", out.join(pipeline::MANIFEST).display());
            match outcome.failed() {
                0 => Ok(()),
                failed => Err(CliError::Partial {
                    failed,
                    total: outcome.manifest.members.len(),
                }),
            }
        }
        Command::Analyze { inputs } => {
            let cfg = cli.config.as_ref().map(|_| load(cli)).transpose()?;
            let out = output_dir(cli, cfg.as_ref(), "jpo_analysis");
            let records = pipeline::cmd_analyze(inputs, cfg.as_ref(), &out, cli.format.as_deref(), cli.workers)?;
            for r in &records {
                println!("{} -> {}", r.input, r.output);
            }
            Ok(())
        }
        Command::Report { run_dir } => {
            let formats = cli.format.clone().unwrap_or_else(jpo_cli::config::all_formats);
            let s = report::cmd_report(run_dir, cli.output.as_deref(), &formats)?;
            println!("report written to {}", s.output_dir);
            for g in &s.gaps {
                println!("gap: {g}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jpo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
