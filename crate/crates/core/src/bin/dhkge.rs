use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dhkge::builder::{build_dataset, generate_synthetic, StatementDump, SynthParams, SPLIT_RATIOS};
use dhkge::checkpoint::{load_checkpoint, save_checkpoint};
use dhkge::config::{Ablation, TrainConfig};
use dhkge::dataset::{dataset_hash, load_dataset, write_dataset, Split, View};
use dhkge::error::{Error, Result};
use dhkge::eval::{evaluate_et, evaluate_lp, evaluate_restricted, parse_candidates, predict, Predictor};
use dhkge::hgnn::Activation;
use dhkge::manifest::RunManifest;
use dhkge::model::{Hypergraphs, ModelShape};
use dhkge::train::{EpochRecord, Trainer};

#[derive(Parser)]
#[command(
    name = "dhkge",
    version,
    about = "Dual-view hyper-relational knowledge graph embedding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset directory from a statement dump.
    BuildDataset(BuildArgs),
    /// Write a synthetic statement dump.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint, an epoch log and a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Rank completions of a one-hole fact.
    Predict(PredictArgs),
    /// Check a dataset directory and print every violation.
    Validate(ValidateArgs),
}

#[derive(Args, Serialize)]
struct BuildArgs {
    #[arg(long)]
    dump: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// File with one seed entity per line; defaults to every typed entity.
    #[arg(long)]
    seeds: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    entities: usize,
    #[arg(long)]
    concepts: usize,
    #[arg(long)]
    instance_facts: usize,
    #[arg(long)]
    ontology_facts: usize,
    #[arg(long, default_value_t = 4)]
    max_arity: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 8)]
    relations: usize,
    #[arg(long, default_value_t = 4)]
    attributes: usize,
    #[arg(long, default_value_t = 0.8)]
    homophily: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    label_smoothing: Option<f64>,
    #[arg(long)]
    encoder_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    hypergraph_layers: Option<usize>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    n_neg: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    strict_train: bool,
    #[arg(long)]
    clip: Option<f64>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// lp-instance, lp-ontology, et or restricted.
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "test")]
    split: String,
    /// One instance entity per line; required by `restricted`.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Rank without removing other known completions.
    #[arg(long)]
    raw: bool,
    /// Report file; defaults to `report-<task>-<split>.jsonl` beside the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Tab- or space-separated fact with one `?`, e.g. "e1 r0 ?".
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Drop completions already known in any split.
    #[arg(long)]
    filtered: bool,
    /// Manifest file; written to stderr when absent.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let start = Instant::now();
    let params = SynthParams {
        n_entities: args.entities,
        n_concepts: args.concepts,
        n_instance_facts: args.instance_facts,
        n_ontology_facts: args.ontology_facts,
        max_arity: args.max_arity,
        hierarchy_depth: args.depth,
        n_relations: args.relations,
        n_attributes: args.attributes,
        homophily: args.homophily,
    };
    let dump = generate_synthetic(&params, args.seed)?;
    dump.write(&args.out)?;
    log::info!("wrote {} statements to {}", dump.statements.len(), args.out.display());
    let mut manifest = RunManifest::new("synth", &(&params, args.seed));
    manifest.seed = Some(args.seed);
    manifest.artifacts = vec![display(&args.out)];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(format!("{}.manifest.json", args.out.display()))
}

fn cmd_build(args: BuildArgs) -> Result<()> {
    let start = Instant::now();
    let dump = StatementDump::read(&args.dump)?;
    let seeds: Option<BTreeSet<String>> = match &args.seeds {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(io(path))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        ),
        None => None,
    };
    let (data, report) = build_dataset(&dump, seeds.as_ref(), SPLIT_RATIOS, args.seed)?;
    write_dataset(&args.out, &data)?;
    println!("{report}");
    let report_path = args.out.join("build_report.txt");
    std::fs::write(&report_path, format!("{report}\n")).map_err(io(&report_path))?;
    let mut manifest = RunManifest::new("build-dataset", &args);
    manifest.dataset_hash = Some(dataset_hash(&args.out)?);
    manifest.seed = Some(args.seed);
    manifest.artifacts = vec![display(&args.out), display(&report_path)];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(args.out.join("manifest.json"))
}

fn effective_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_json_str(&std::fs::read_to_string(path).map_err(io(path))?)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { config.$field = v; } )* };
    }
    set!(
        dim,
        epochs,
        learning_rate,
        batch_size,
        omega,
        margin,
        label_smoothing,
        encoder_layers,
        n_heads,
        hypergraph_layers,
        n_neg,
        seed
    );
    if let Some(a) = &args.activation {
        config.activation = a.parse::<Activation>()?;
    }
    if let Some(a) = &args.ablation {
        config.ablation = a.parse::<Ablation>()?;
    }
    if args.strict_train {
        config.strict_train = true;
    }
    if args.clip.is_some() {
        config.clip = args.clip;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct LogLine<'a> {
    #[serde(flatten)]
    record: &'a EpochRecord,
    wall_time_s: f64,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let start = Instant::now();
    let config = effective_config(&args)?;
    let data = load_dataset(&args.data)?;
    std::fs::create_dir_all(&args.out).map_err(io(&args.out))?;
    log::info!("config {}", serde_json::to_string(&config)?);
    let mut trainer = Trainer::new(config.clone(), &data)?.with_replay_dir(&args.out);
    trainer.run()?;
    let seconds = trainer.epoch_seconds().to_vec();
    let state = trainer.into_state();

    let ckpt = args.out.join("checkpoint.dhkge");
    save_checkpoint(&state, &ckpt)?;
    let log_path = args.out.join("epochs.jsonl");
    let mut lines = String::new();
    for (record, &wall_time_s) in state.log.iter().zip(&seconds) {
        lines.push_str(&serde_json::to_string(&LogLine { record, wall_time_s })?);
        lines.push('\n');
    }
    std::fs::write(&log_path, lines).map_err(io(&log_path))?;
    let config_path = args.out.join("config.json");
    std::fs::write(&config_path, config.to_json() + "\n").map_err(io(&config_path))?;

    let mut manifest = RunManifest::new("train", &config);
    manifest.dataset_hash = Some(dataset_hash(&args.data)?);
    manifest.seed = Some(config.seed);
    manifest.artifacts = vec![display(&ckpt), display(&log_path), display(&config_path)];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(args.out.join("manifest.json"))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let start = Instant::now();
    let split: Split = args.split.parse().map_err(|e: String| Error::Config(vec![e]))?;
    let data = load_dataset(&args.data)?;
    let state = load_checkpoint(&args.checkpoint, Some(ModelShape::of(&data)))?;
    let graphs = Hypergraphs::from_train(&data);
    let predictor = Predictor::new(&state, &graphs);
    let reports = match args.task.as_str() {
        "lp-instance" | "lp-ontology" => {
            let view = if args.task == "lp-instance" {
                View::Instance
            } else {
                View::Ontology
            };
            let (e, r) = evaluate_lp(&predictor, &data, view, split, args.raw)?;
            vec![e, r]
        }
        "et" => vec![evaluate_et(&predictor, &data, split, args.raw)?],
        "restricted" => {
            let Some(path) = &args.candidates else {
                return Err(Error::Config(vec!["task `restricted` needs --candidates".to_string()]));
            };
            let text = std::fs::read_to_string(path).map_err(io(path))?;
            let candidates = parse_candidates(&text, &data.instance.vocab)?;
            vec![evaluate_restricted(&predictor, &data, split, &candidates, args.raw)?]
        }
        other => {
            return Err(Error::Config(vec![format!(
                "unknown task `{other}` (expected lp-instance, lp-ontology, et or restricted)"
            )]))
        }
    };
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.to_json());
        text.push('\n');
    }
    print!("{text}");
    let out = args.out.clone().unwrap_or_else(|| {
        let dir = args.checkpoint.parent().unwrap_or(Path::new("."));
        dir.join(format!("report-{}-{}.jsonl", args.task, split))
    });
    std::fs::write(&out, &text).map_err(io(&out))?;
    let mut manifest = RunManifest::new("eval", &(&args, state.config.hash()));
    manifest.dataset_hash = Some(dataset_hash(&args.data)?);
    manifest.seed = Some(state.config.seed);
    manifest.artifacts = vec![display(&out)];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(format!("{}.manifest.json", out.display()))
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let start = Instant::now();
    let data = load_dataset(&args.data)?;
    let state = load_checkpoint(&args.checkpoint, Some(ModelShape::of(&data)))?;
    let graphs = Hypergraphs::from_train(&data);
    let predictor = Predictor::new(&state, &graphs);
    let tokens: Vec<String> = args.query.split_whitespace().map(String::from).collect();
    let (view, predictions) = predict(&predictor, &data, &tokens, args.k, args.filtered)?;
    log::info!("query resolved in the {} view", view.name());
    for p in &predictions {
        println!("{}\t{}", p.token, p.score);
    }
    let mut manifest = RunManifest::new("predict", &(&args, state.config.hash()));
    manifest.dataset_hash = Some(dataset_hash(&args.data)?);
    manifest.seed = Some(state.config.seed);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    match &args.manifest {
        Some(path) => manifest.write(path),
        None => {
            eprintln!("{}", serde_json::to_string(&manifest)?);
            Ok(())
        }
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let start = Instant::now();
    load_dataset(&args.data)?;
    println!("status=valid\tviolations=0");
    let mut manifest = RunManifest::new("validate", &display(&args.data));
    manifest.dataset_hash = Some(dataset_hash(&args.data)?);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    eprintln!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("DHKGE_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildDataset(a) => cmd_build(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Validation(report)) => {
            println!("{report}");
            log::error!("dataset validation failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
