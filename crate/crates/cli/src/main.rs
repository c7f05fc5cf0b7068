//! `sciatlas`: run atlas stages over a project directory.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 generation or embedding backend failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use sciatlas::pipeline::{
    configure_threads, GenBackendChoice, PipelineError, PlotKind, Project, ProjectConfig, RunOptions, Stage,
    StageOutcome, CONFIG_FILE,
};

#[derive(Debug, Parser)]
#[command(name = "sciatlas", version, about = "Build and evaluate a problem/method atlas over a publication corpus")]
struct Cli {
    /// Project directory holding all artifacts.
    #[arg(long, global = true, default_value = ".")]
    project: PathBuf,
    /// TOML config; defaults to `<project>/sciatlas.toml` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded, seeded execution.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Text-generation backend.
    #[arg(long, global = true, value_parser = parse_backend)]
    backend: Option<GenBackendChoice>,
    /// Rebuild even if artifacts are current or were built under another config.
    #[arg(long, global = true)]
    force: bool,
    /// Evaluation cut-offs, comma separated.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1)]
    k: Option<Vec<usize>>,
    /// Override any config value, e.g. `--set linkpred.katz.alpha=0.05`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the source corpus and copy it into the project.
    Ingest,
    /// Extract aspects and classify every publication.
    Extract,
    /// Embed problem, method and usage aspects.
    Embed,
    /// Lay out, cluster and label both aspect sides.
    Cluster,
    /// Build the bipartite graph, degree statistics and investigation partitions.
    Atlas,
    /// Run all link predictors in both directions.
    Predict,
    /// Score prediction runs.
    Eval,
    /// Render plots.
    Plot {
        /// Restrict to some kinds (map, degree_hist, cluster_scatter).
        #[arg(long, value_delimiter = ',', value_parser = parse_plot_kind)]
        kind: Vec<PlotKind>,
    },
    /// Run every stage in order.
    Pipeline,
}

fn parse_backend(s: &str) -> Result<GenBackendChoice, String> {
    s.parse()
}

fn parse_plot_kind(s: &str) -> Result<PlotKind, String> {
    s.parse()
}

fn overrides(cli: &Cli) -> Vec<String> {
    let mut o = cli.set.clone();
    if let Some(seed) = cli.seed {
        o.push(format!("seed={seed}"));
    }
    if let Some(b) = cli.backend {
        let name = match b {
            GenBackendChoice::Mock => "mock",
            GenBackendChoice::Remote => "remote",
            GenBackendChoice::Cache => "cache",
        };
        o.push(format!("backend.generation=\"{name}\""));
    }
    if let Some(ks) = &cli.k {
        let list: Vec<String> = ks.iter().map(usize::to_string).collect();
        o.push(format!("eval.ks=[{}]", list.join(",")));
    }
    o
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let config_path = cli.config.clone().or_else(|| {
        let p = cli.project.join(CONFIG_FILE);
        p.is_file().then_some(p)
    });
    let config = ProjectConfig::load(config_path.as_deref(), &overrides(cli))?;
    let base_dir = match &config_path {
        Some(p) => p.parent().map(Path::to_path_buf).unwrap_or_default(),
        None => cli.project.clone(),
    };
    configure_threads(cli.deterministic, config.runtime.threads);
    let project = Project::open(&cli.project, &base_dir, config, RunOptions { force: cli.force })?;

    let report = |stage: Stage, outcome: StageOutcome| match outcome {
        StageOutcome::Ran => println!("{stage}: done"),
        StageOutcome::Skipped => println!("{stage}: up to date"),
    };
    let single = |stage: Stage| project.run(stage).map(|o| report(stage, o));
    match &cli.command {
        Command::Ingest => single(Stage::Ingest)?,
        Command::Extract => single(Stage::Extract)?,
        Command::Embed => single(Stage::Embed)?,
        Command::Cluster => single(Stage::Cluster)?,
        Command::Atlas => single(Stage::Atlas)?,
        Command::Predict => single(Stage::Predict)?,
        Command::Eval => single(Stage::Eval)?,
        Command::Plot { kind } if kind.is_empty() => single(Stage::Plot)?,
        Command::Plot { kind } => {
            for f in project.render_plots(kind)? {
                println!("{}", f.display());
            }
        }
        Command::Pipeline => {
            for stage in Stage::ALL {
                single(stage)?;
            }
        }
    }
    println!("config hash {}", project.config_hash());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
