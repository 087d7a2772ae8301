use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ncg_core::config::PipelineConfig;
use ncg_core::llm::GatewayMode;
use ncg_core::pipeline::{kappa_report, ErrorKind, Overrides, PipelineError, RunOptions, Session, Stage};

#[derive(Parser)]
#[command(name = "ncg", version, about = "Build causal graphs from narrative text")]
struct Cli {
    /// Pipeline config file (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workspace directory holding corpus, models, graphs and reports.
    #[arg(long, global = true, default_value = "workspace")]
    workspace: PathBuf,
    /// Overrides `llm.mode` from the config.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Overrides the split seed and the judge presentation seed. `ablate`
    /// runs this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Live,
    Record,
    Replay,
}

#[derive(Subcommand)]
enum Command {
    /// Copy narrative files into the workspace corpus.
    Ingest { files: Vec<PathBuf> },
    /// Summarize a corpus narrative into validated vertices.
    Extract { id: String },
    /// Embed vertices and attach Expert Index and STAC labels.
    Label {
        id: String,
        /// Use annotated Expert Index values from the training dataset.
        #[arg(long)]
        gold_ei: bool,
    },
    /// Train the Expert Index and STAC heads on the configured dataset.
    Train,
    /// Compare STAC feature variants over the ablation seeds.
    Ablate,
    /// Run the iterative graph builder on labeled vertices.
    BuildGraph { id: String },
    /// Write the graph as Graphviz DOT.
    ExportDot {
        id: String,
        /// Also draw counterfactually pruned edges, dashed.
        #[arg(long)]
        include_pruned: bool,
    },
    /// Ask the LLM judge which of two graphs better fits the story.
    Judge { id: String, graph_a: PathBuf, graph_b: PathBuf },
    /// Pairwise Cohen's kappa for a CSV of item_id,annotator_id,label.
    Kappa { annotations: PathBuf },
    /// Summarize graphs and judge verdicts in the workspace.
    Report,
    /// Ingest, extract, label, build and export one narrative.
    Run {
        narrative: PathBuf,
        #[arg(long)]
        train_first: bool,
        #[arg(long)]
        gold_ei: bool,
        #[arg(long)]
        include_pruned: bool,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| PipelineError::new(Stage::Config, e.to_string()).at(p))?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = cli.mode {
        config.llm.mode = match m {
            Mode::Live => GatewayMode::Live,
            Mode::Record => GatewayMode::Record,
            Mode::Replay => GatewayMode::Replay,
        };
    }
    if let Some(s) = cli.seed {
        config.training.split_seed = s;
        config.judge_seed = s;
        config.training.ablation_seeds = vec![s];
    }
    Ok(config)
}

fn hit(cached: bool) -> &'static str {
    if cached {
        "cache hit"
    } else {
        "done"
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    if let Command::Kappa { annotations } = &cli.command {
        print!("{}", kappa_report(annotations)?);
        return Ok(());
    }
    let config = load_config(&cli)?;
    let s = Session::open(config, &cli.workspace, Overrides::default())?;
    match cli.command {
        Command::Ingest { files } => {
            if files.is_empty() {
                return Err(PipelineError::new(Stage::Ingest, "no files given"));
            }
            for f in files {
                let id = s.ingest(&f)?;
                println!("{id}\t{}", s.layout.corpus(&id).display());
            }
        }
        Command::Extract { id } => {
            let (ex, cached) = s.extract(&id)?;
            println!(
                "extract {id}: {} vertices, {} repaired, {} dropped, {} truncated ({})",
                ex.vertices.len(),
                ex.repaired,
                ex.dropped.len(),
                ex.truncated,
                hit(cached)
            );
        }
        Command::Label { id, gold_ei } => {
            let embedded = s.embed(&id)?;
            let (lv, cached) = s.label(&id, gold_ei || s.config.gold_ei)?;
            println!("embed {id}: {}", hit(embedded));
            for v in &lv.vertices {
                let l = v.stac.map_or('?', |l| l.letter());
                println!("{}\t{l}\t{}", v.id.as_str(), v.text);
            }
            println!("label {id}: {}", hit(cached));
        }
        Command::Train => {
            let out = s.train()?;
            print!("{}", out.report);
            println!("train: {}", hit(out.cache_hit));
        }
        Command::Ablate => {
            let (reports, path) = s.ablate(None)?;
            for r in &reports {
                let cells: Vec<String> = r
                    .rows
                    .iter()
                    .map(|row| format!("{} {}", row.variant.name(), row.macro_f1.map_or("\u{2014}".into(), |f| format!("{f:.3}"))))
                    .collect();
                println!("seed {}: {}", r.split_seed, cells.join("  "));
            }
            println!("wrote {}", path.display());
        }
        Command::BuildGraph { id } => {
            let (g, trace, cached) = s.build_graph(&id)?;
            println!(
                "build-graph {id}: {} vertices, {} edges, {} pruned, {} isolated ({})",
                g.vertices.len(),
                g.edges.len(),
                trace.pruned().count(),
                g.isolated().len(),
                hit(cached)
            );
        }
        Command::ExportDot { id, include_pruned } => {
            let (path, cached) = s.export_dot(&id, include_pruned)?;
            println!("{} ({})", path.display(), hit(cached));
        }
        Command::Judge { id, graph_a, graph_b } => {
            let out = s.judge(&id, &graph_a, &graph_b, s.config.judge_seed)?;
            for v in &out.verdicts {
                println!("{}\t{:?}", v.dimension, v.winner);
            }
        }
        Command::Report => {
            let (text, path) = s.report()?;
            print!("{text}");
            println!("wrote {}", path.display());
        }
        Command::Run { narrative, train_first, gold_ei, include_pruned } => {
            let options = RunOptions { train_first, gold_ei: gold_ei || s.config.gold_ei, include_pruned };
            let out = s.run(&narrative, options)?;
            for st in &out.stages {
                println!("{}: {}", st.stage, hit(st.cache_hit));
            }
            println!(
                "{}: {} vertices, {} edges, {} provider calls",
                out.narrative_id,
                out.graph.vertices.len(),
                out.graph.edges.len(),
                out.provider_calls
            );
            println!("manifest {}", out.manifest_path.display());
        }
        Command::Kappa { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("NCG_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(ErrorKind::Config.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
