use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wf_core::densities::DensityModel;
use wf_harness::config::{ExperimentConfig, OUTPUT_ROOT_ENV};
use wf_harness::pipeline::{cmd_compare, cmd_density, cmd_simulate, report_status};
use wf_harness::{figures, HarnessError, Result};

#[derive(Parser)]
#[command(
    name = "wfdens",
    version,
    about = "Wright-Fisher transition density comparisons"
)]
struct Cli {
    /// JSON configuration file; defaults apply to every missing field.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a field, e.g. `--set protocol.n_traj=1000`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory (takes precedence over the config).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    /// Directory that relative output paths are resolved against.
    #[arg(long, env = OUTPUT_ROOT_ENV, global = true)]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory ensemble per starting frequency.
    Simulate,
    /// Evaluate and normalize one density on the quadrature grid.
    Density {
        /// AE, AECorrected, GaussA, GaussianMoment, BetaMoment, ExactMC,
        /// MutationAE or SelectionAE; or a JSON model object.
        #[arg(long)]
        model: String,
        #[arg(long)]
        x0: f64,
        #[arg(long)]
        t: f64,
        /// Output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the reference estimate per (x0, t) and tabulate distances.
    Compare,
    /// Draw heatmaps and density panels from existing outputs.
    Figures,
    /// simulate, compare and figures in sequence.
    All,
    /// Print the resolved configuration.
    Config,
}

fn parse_model(s: &str) -> Result<DensityModel> {
    if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| HarnessError::Config(format!("model: {e}")))
    } else {
        s.parse()
            .map_err(|e: wf_core::Error| HarnessError::Config(format!("model: {e}")))
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let base = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.with_overrides(&cli.overrides)?;
    if let Some(out) = &cli.output {
        cfg.output_dir = out.clone();
    }
    cfg.resolve_output(cli.output_root.as_deref());
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Config => {
            cfg.validate()?;
            println!("{}", cfg.to_json());
        }
        Command::Simulate => {
            let m = cmd_simulate(&cfg)?;
            println!(
                "wrote {} ensembles to {}",
                m.outputs.len(),
                cfg.output_dir.display()
            );
        }
        Command::Density { model, x0, t, out } => {
            let model = parse_model(model)?;
            let (path, d) = cmd_density(&cfg, &model, *x0, *t, out.as_deref())?;
            println!(
                "{} (normalization constant {:.6})",
                path.display(),
                d.norm_constant
            );
        }
        Command::Compare => {
            let report = cmd_compare(&cfg)?;
            println!(
                "{} distance records, {} failures",
                report.records.len(),
                report.failures.len()
            );
            for f in &report.failures {
                eprintln!(
                    "failed: x0 = {}, t = {}, {}: {}",
                    f.x0, f.t, f.model, f.error
                );
            }
            report_status(&report)?;
        }
        Command::Figures => {
            for p in figures::cmd_figures(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::All => {
            cmd_simulate(&cfg)?;
            let report = cmd_compare(&cfg)?;
            println!(
                "{} distance records, {} failures",
                report.records.len(),
                report.failures.len()
            );
            let figs = figures::cmd_figures(&cfg);
            report_status(&report)?;
            for p in figs? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
