//! Experiment harness over the library: `ingest` caches the raw CSV triple
//! as a binary graph bundle, `train` runs one model family across seeds and
//! writes a result document, `report` renders saved documents as a
//! comparison table plus plot-ready per-step series.

use amlkit::bundle;
use amlkit::elliptic::DatasetSplit;
use amlkit::pipeline::{run_experiment, ExperimentConfig, ModelKind};
use amlkit::results::{format_table, step_series_text, ResultDocument};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

const DATA_DIR_ENV: &str = "AMLKIT_DATA_DIR";
const FEATURES_FILE: &str = "elliptic_txs_features.csv";
const EDGES_FILE: &str = "elliptic_txs_edgelist.csv";
const CLASSES_FILE: &str = "elliptic_txs_classes.csv";

#[derive(Parser)]
#[command(
    name = "amlkit",
    version,
    about = "Transaction-graph illicit-activity experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse the raw CSV triple into a cached binary graph bundle.
    Ingest(IngestArgs),
    /// Train one model kind across seeds and write a result document.
    Train(TrainArgs),
    /// Render saved result documents as a table and per-step series.
    Report(ReportArgs),
}

/// Where the three Elliptic-layout CSV files live. Individual path flags
/// override the directory; the directory flag overrides the environment.
#[derive(Args)]
struct DataArgs {
    /// Directory holding the standard file names
    /// (elliptic_txs_{features,edgelist,classes}.csv).
    /// Defaults to the AMLKIT_DATA_DIR environment variable.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Features CSV (txId, time step, 165 feature columns; no header).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Edge list CSV (txId1, txId2).
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Class CSV (txId, class in {1, 2, unknown}).
    #[arg(long)]
    classes: Option<PathBuf>,
}

impl DataArgs {
    fn resolve(&self) -> Result<(PathBuf, PathBuf, PathBuf)> {
        let dir = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
            if let Some(p) = explicit {
                return Ok(p.clone());
            }
            match &dir {
                Some(d) => Ok(d.join(name)),
                None => bail!(
                    "no path for {name}: pass --data-dir, set {DATA_DIR_ENV}, or give the file flag"
                ),
            }
        };
        Ok((
            pick(&self.features, FEATURES_FILE)?,
            pick(&self.edges, EDGES_FILE)?,
            pick(&self.classes, CLASSES_FILE)?,
        ))
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory for the bundle and its checksum sidecar.
    #[arg(long, default_value = "ingested")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Model kind: gcn, cp-gcn, rf, gbt, qboost, gcn+rf, cp-gcn+rf,
    /// cp-gcn+qboost.
    #[arg(long)]
    model: ModelKind,
    #[command(flatten)]
    data: DataArgs,
    /// Reuse an already-ingested bundle instead of raw CSV files.
    #[arg(long, conflicts_with_all = ["data_dir", "features", "edges", "classes"])]
    bundle: Option<PathBuf>,
    /// Directory for the result document (and the bundle cache when
    /// ingesting from raw files).
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Seeds to sweep; each seed reruns the full pipeline.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    /// Training epochs for the graph-network stages.
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// L2 weight decay folded into the gradient.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// QBoost sparsity-penalty grid (units of S/N²).
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Fraction of labeled training nodes hidden before fitting.
    #[arg(long, default_value_t = 0.0)]
    mask_fraction: f64,
    /// Temporal split as train,val,test inclusive step ranges,
    /// e.g. 1-29,30-34,35-49.
    #[arg(long, value_parser = parse_split)]
    split: Option<DatasetSplit>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result document JSON files, at least one.
    #[arg(required = true)]
    documents: Vec<PathBuf>,
    /// Directory for per-step F2 series files (one CSV per document).
    /// Omit to print the table only.
    #[arg(long)]
    series_dir: Option<PathBuf>,
}

fn parse_split(s: &str) -> Result<DatasetSplit, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated ranges like 1-29,30-34,35-49, got {s:?}"
        ));
    }
    let range = |part: &str| -> Result<std::ops::RangeInclusive<u32>, String> {
        let (a, b) = part
            .split_once('-')
            .ok_or_else(|| format!("range {part:?} is not of the form start-end"))?;
        let lo: u32 = a.trim().parse().map_err(|e| format!("bad start in {part:?}: {e}"))?;
        let hi: u32 = b.trim().parse().map_err(|e| format!("bad end in {part:?}: {e}"))?;
        Ok(lo..=hi)
    };
    Ok(DatasetSplit {
        train_steps: range(parts[0])?,
        val_steps: range(parts[1])?,
        test_steps: range(parts[2])?,
    })
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let (features, edges, classes) = args.data.resolve()?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let outcome = bundle::ingest(&features, &edges, &classes, &args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "bundle": outcome.bundle_path,
            "sha256": outcome.meta.bundle_sha256,
            "n_graphs": outcome.meta.n_graphs,
            "cache_hit": outcome.cache_hit,
        })
    );
    Ok(())
}

fn load_graphs(args: &TrainArgs) -> Result<Vec<amlkit::Graph>> {
    if let Some(bundle_path) = &args.bundle {
        return Ok(bundle::read_bundle(bundle_path)?);
    }
    let (features, edges, classes) = args.data.resolve()?;
    let cache_dir = args.out.join("cache");
    std::fs::create_dir_all(&cache_dir)
        .with_context(|| format!("creating {}", cache_dir.display()))?;
    let outcome = bundle::ingest(&features, &edges, &classes, &cache_dir)?;
    Ok(bundle::read_bundle(&outcome.bundle_path)?)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let graphs = load_graphs(args)?;
    let mut cfg = ExperimentConfig::new(args.model);
    cfg.train.seeds = args.seeds.clone();
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(wd) = args.weight_decay {
        cfg.train.weight_decay = wd;
    }
    if let Some(grid) = &args.lambda_grid {
        cfg.qboost.lambda_grid = grid.clone();
    }
    cfg.mask_fraction = args.mask_fraction;
    if let Some(split) = &args.split {
        cfg.split = split.clone();
    }

    let doc = run_experiment(&graphs, &cfg)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join(format!("{}.result.json", args.model));
    doc.save(&path)?;
    let (f2, f1, precision, recall) = doc.headline_row();
    println!(
        "{}",
        serde_json::json!({
            "model": doc.model_kind,
            "seeds": doc.per_seed.len(),
            "f2": f2,
            "f1": f1,
            "precision": precision,
            "recall": recall,
            "document": path,
        })
    );
    Ok(())
}

fn series_file_name(doc: &ResultDocument, taken: &mut Vec<String>) -> String {
    let base = doc.model_kind.replace('+', "_");
    let mut name = format!("{base}-series.csv");
    let mut n = 1;
    while taken.contains(&name) {
        n += 1;
        name = format!("{base}-{n}-series.csv");
    }
    taken.push(name.clone());
    name
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let docs = args
        .documents
        .iter()
        .map(|p| ResultDocument::load(p))
        .collect::<amlkit::Result<Vec<_>>>()?;
    print!("{}", format_table(&docs)?);
    if let Some(dir) = &args.series_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut taken = Vec::new();
        for doc in &docs {
            let path = dir.join(series_file_name(doc, &mut taken));
            std::fs::write(&path, step_series_text(doc))
                .with_context(|| format!("writing {}", path.display()))?;
            println!("series: {}", path.display());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Ingest(args) => cmd_ingest(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Report(args) => cmd_report(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("{}", serde_json::json!({ "error": err.to_string() }));
        std::process::exit(1);
    }
}
