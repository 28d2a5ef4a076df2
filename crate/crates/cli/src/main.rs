use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use clickseg::embedding::train::train;
use clickseg::embedding::PreparedShape;
use clickseg::forge::{generate_dataset, list_dataset};
use clickseg::geometry::io::{load_cloud, write_atomic};
use clickseg::geometry::normalize_cloud;
use clickseg::simulate::{run_benchmark, write_report, BenchShape};
use clickseg::{
    parse_backend, replay, BenchConfig, Click, ComposeConfig, HyperParams, Network, NetworkConfig, Shape, TrainOptions,
};

#[derive(Parser, Debug)]
#[command(name = "clickseg", version, about = "Click-driven part segmentation of point clouds")]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON hyper-parameter file; missing fields keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset of reshuffled primitive shapes.
    GenData(GenData),
    /// Train the learnable embedding network.
    Train(Train),
    /// Segment one shape from a click script.
    Segment(Segment),
    /// Run the simulated-annotator benchmark.
    Bench(Bench),
    /// Serve the annotation HTTP API.
    Serve(Serve),
}

#[derive(Args, Debug)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 4096)]
    points: usize,
    #[arg(long, default_value_t = 3)]
    k_min: usize,
    #[arg(long, default_value_t = 12)]
    k_max: usize,
    #[arg(long, default_value = "synthetic")]
    category: String,
}

#[derive(Args, Debug)]
struct Train {
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 64)]
    output: usize,
    #[arg(long, default_value_t = 16)]
    k_agg: usize,
    /// Use only the first N shapes.
    #[arg(long)]
    limit: Option<usize>,
    /// Continue from an existing checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Segment {
    /// Point cloud (.xyzn or ASCII .ply).
    shape: PathBuf,
    /// JSON array of {"kind": "positive"|"negative", "index": i}.
    #[arg(long)]
    clicks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "descriptor")]
    backend: String,
    #[arg(long)]
    no_or: bool,
    #[arg(long)]
    no_ss: bool,
}

#[derive(Args, Debug)]
struct Bench {
    #[arg(long)]
    dataset: PathBuf,
    /// `descriptor`, `random[:seed]`, `import:<file>` or a checkpoint path.
    #[arg(long)]
    backend: String,
    /// Click budget for the reported IoU.
    #[arg(long, default_value_t = 10)]
    clicks: usize,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    pool: Option<usize>,
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 2)]
    parts: usize,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    no_of: bool,
    #[arg(long)]
    no_or: bool,
    #[arg(long)]
    no_ss: bool,
    /// JSON-lines progress file; rerunning with the same file resumes.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Serve {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Checkpoint offered as backend "trained".
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 200_000)]
    max_points: usize,
}

/// Mask file written by `segment`.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct MaskFile {
    points: usize,
    indices: Vec<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type AnyResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

fn run(cli: Cli) -> AnyResult {
    let hp = match &cli.config {
        Some(p) => HyperParams::load(p)?,
        None => HyperParams::default(),
    };
    log::info!("seed {}; hyper-parameters {}", cli.seed, serde_json::to_string(&hp)?);
    match cli.command {
        Command::GenData(a) => gen_data(a, cli.seed),
        Command::Train(a) => train_cmd(a, &hp, cli.seed),
        Command::Segment(a) => segment(a, &hp),
        Command::Bench(a) => bench(a, &hp, cli.seed),
        Command::Serve(a) => serve(a, &hp),
    }
}

fn gen_data(a: GenData, seed: u64) -> AnyResult {
    let cfg = ComposeConfig { k_min: a.k_min, k_max: a.k_max, n_points: a.points, ..ComposeConfig::default() };
    log::info!("gen-data {a:?}");
    let s = generate_dataset(a.count, &cfg, &a.category, &a.out, seed)?;
    log::info!("wrote {} shapes, {} unchanged", s.written, s.skipped);
    Ok(())
}

fn load_shapes(dir: &Path, limit: Option<usize>) -> AnyResult<Vec<(clickseg::forge::DatasetItem, clickseg::Result<Shape>)>> {
    let mut items = list_dataset(dir)?;
    if let Some(n) = limit {
        items.truncate(n);
    }
    Ok(items.into_iter().map(|it| {
        let s = it.load();
        (it, s)
    }).collect())
}

fn train_cmd(a: Train, hp: &HyperParams, seed: u64) -> AnyResult {
    let opts = TrainOptions {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        seed,
        weights: hp.loss_weights(),
        checkpoint: Some(a.out.clone()),
        ..TrainOptions::default()
    };
    log::info!("train {a:?}; options {}", serde_json::to_string(&opts)?);
    let mut net = match &a.resume {
        Some(p) => Network::load(p)?,
        None => Network::init(NetworkConfig { hidden: a.hidden, output: a.output, k_agg: a.k_agg, ..NetworkConfig::default() }, seed),
    };
    let mut prepared = Vec::new();
    for (item, shape) in load_shapes(&a.dataset, a.limit)? {
        match shape {
            Ok(s) => prepared.push(PreparedShape::new(&s, &net)),
            Err(e) => log::warn!("skipping {}: {e}", item.id),
        }
    }
    let report = train(&mut net, &prepared, &opts)?;
    net.save(&a.out)?;
    log::info!("trained {} steps; final epoch loss {:?}", report.steps, report.epoch_loss.last());
    Ok(())
}

fn segment(a: Segment, hp: &HyperParams) -> AnyResult {
    log::info!("segment {a:?}");
    let cloud = normalize_cloud(&load_cloud::<f64>(&a.shape)?)?;
    let text = std::fs::read_to_string(&a.clicks).map_err(|e| format!("{}: {e}", a.clicks.display()))?;
    let script: Vec<Click> = serde_json::from_str(&text)?;
    let backend = parse_backend(&a.backend)?;
    let session = replay(cloud, &backend, &script, hp.alpha, hp.postprocess(!a.no_or, !a.no_ss))?;
    let out = MaskFile { points: session.len(), indices: session.mask().indices() };
    write_atomic(&a.out, serde_json::to_string(&out)?.as_bytes())?;
    Ok(())
}

fn bench(a: Bench, hp: &HyperParams, seed: u64) -> AnyResult {
    let mut sim = hp.sim(!a.no_of);
    if let Some(c) = a.cap {
        sim.cap = c;
    }
    if let Some(p) = a.pool {
        sim.pool_size = p;
    }
    sim.exhaustive = a.exhaustive;
    let cfg = BenchConfig {
        clicks: a.clicks,
        parts_per_shape: a.parts,
        alpha: hp.alpha,
        seed,
        sim,
        post: hp.postprocess(!a.no_or, !a.no_ss),
        partial: a.resume.clone(),
        ..BenchConfig::default()
    };
    log::info!("bench {a:?}; config {}", serde_json::to_string(&cfg)?);
    let backend = parse_backend::<f64>(&a.backend)?;
    let shapes = load_shapes(&a.dataset, a.limit)?
        .into_iter()
        .map(|(it, shape)| BenchShape { id: it.id, category: it.category, shape })
        .collect();
    let report = run_benchmark(shapes, &backend, &cfg)?;
    write_report(&report, &a.out)?;
    print!("{}", clickseg::simulate::report_table(&report));
    Ok(())
}

fn serve(a: Serve, hp: &HyperParams) -> AnyResult {
    log::info!("serve {a:?}");
    let cfg = clickseg_service::ServiceConfig {
        data_dir: a.data_dir,
        checkpoint: a.checkpoint,
        max_points: a.max_points,
        hyper: *hp,
    };
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port).parse()?;
    clickseg_service::serve_blocking(cfg, addr)?;
    Ok(())
}
