use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use miniamp_harness::config::ExperimentKind;
use miniamp_harness::error::HarnessError;
use miniamp_harness::figures::figure_configs;
use miniamp_harness::record::{to_csv, to_json, write_bytes};
use miniamp_harness::{run_experiment, ExperimentConfig, ExperimentOutput, Result};

#[derive(Parser)]
#[command(name = "miniamp", version, about = "Streaming AMP experiments: run, sweep and reproduce the figures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// First seed; the config's seed list is shifted to start here.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file, or directory for `figures`. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Use the full grids for `figures` instead of the desk-scale ones.
    #[arg(long, global = true)]
    full: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run an AMP experiment (glm_stream, glm_offline or tmax_study).
    Amp {
        #[command(subcommand)]
        action: AmpAction,
    },
    /// State-evolution curves (se_sweep).
    Se {
        #[command(subcommand)]
        action: SeAction,
    },
    /// Replica free-entropy landscape (landscape).
    Landscape {
        #[command(subcommand)]
        action: LandscapeAction,
    },
    /// Optimal / suboptimal / zero-error grid (phase_diagram).
    Phasediag { config: PathBuf },
    /// Streaming clustering (cluster_stream).
    Cluster {
        #[command(subcommand)]
        action: ClusterAction,
    },
    /// Canned recipes for figure 1, 2, 3 or 4.
    Figures {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        figure: u8,
    },
}

#[derive(Subcommand)]
enum AmpAction {
    Run { config: PathBuf },
}

#[derive(Subcommand)]
enum SeAction {
    Sweep { config: PathBuf },
}

#[derive(Subcommand)]
enum LandscapeAction {
    Scan { config: PathBuf },
}

#[derive(Subcommand)]
enum ClusterAction {
    Run { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("miniamp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let pool = match g.threads {
        Some(t) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let work = || match cli.command {
        Command::Figures { figure } => run_figure(figure, &g),
        Command::Amp { action: AmpAction::Run { config } } => {
            single(&config, &[ExperimentKind::GlmStream, ExperimentKind::GlmOffline, ExperimentKind::TmaxStudy], &g)
        }
        Command::Se { action: SeAction::Sweep { config } } => single(&config, &[ExperimentKind::SeSweep], &g),
        Command::Landscape { action: LandscapeAction::Scan { config } } => {
            single(&config, &[ExperimentKind::Landscape], &g)
        }
        Command::Phasediag { config } => single(&config, &[ExperimentKind::PhaseDiagram], &g),
        Command::Cluster { action: ClusterAction::Run { config } } => {
            single(&config, &[ExperimentKind::ClusterStream], &g)
        }
    };
    match pool {
        Some(p) => p.install(work),
        None => work(),
    }
}

fn single(path: &Path, kinds: &[ExperimentKind], g: &Global) -> Result<()> {
    let mut cfg = ExperimentConfig::load(path)?;
    if !kinds.contains(&cfg.kind) {
        let allowed: Vec<_> = kinds.iter().map(|k| k.as_str()).collect();
        return Err(HarnessError::Config(format!(
            "{}: kind {} does not belong to this subcommand (expected {})",
            path.display(),
            cfg.kind.as_str(),
            allowed.join(" or ")
        )));
    }
    if let Some(s) = g.seed {
        cfg = cfg.with_first_seed(s);
    }
    let out = run_experiment(&cfg)?;
    let dest = g.out.clone().or_else(|| cfg.output.clone());
    emit(&out, dest.as_deref(), g.format)
}

fn run_figure(figure: u8, g: &Global) -> Result<()> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from(format!("fig{figure}")));
    let ext = match g.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    for mut cfg in figure_configs(figure, g.full)? {
        if let Some(s) = g.seed {
            cfg = cfg.with_first_seed(s);
        }
        eprintln!("miniamp: running {}", cfg.name);
        let out = run_experiment(&cfg)?;
        emit(&out, Some(&dir.join(format!("{}.{ext}", cfg.name))), g.format)?;
    }
    Ok(())
}

fn emit(out: &ExperimentOutput, dest: Option<&Path>, format: Format) -> Result<()> {
    for w in &out.warnings {
        eprintln!("miniamp: warning: {w}");
    }
    let bytes = match format {
        Format::Csv => to_csv(&out.rows)?,
        Format::Json => to_json(&out.config_hash, &out.experiment, &out.rows),
    };
    match dest {
        Some(p) => write_bytes(p, &bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes).map_err(|e| HarnessError::Io { path: "<stdout>".into(), source: e })
        }
    }
}
