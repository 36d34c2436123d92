//! `afb`: synthetic corpora, normalization statistics, training, evaluation
//! and wall-force post-processing from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure. Every run prints its resolved configuration as one
//! JSON line on stderr; failures add one JSON error line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use afb_core::diff::FdOptions;
use afb_core::graph::{build_radius_graph, subsample};
use afb_core::mesh::{read_sample, PhysicsConfig};
use afb_core::models::{check_model_gradients, small_cloud_config, Model, ModelConfig, ModelKind};
use afb_core::physics::{drag_lift, FlowField};
use afb_core::pipeline::{
    evaluate_model, load_dir, predict, train, write_history, write_report, write_sample_errors,
    RunMetrics, ScoreReport, TrainConfig,
};
use afb_core::preprocess::{fit_norm_stats, NormStats};
use afb_core::synthetic::{write_corpus, CaseKind, CorpusSpec};
use afb_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Overrides every `--seed` when set.
pub const SEED_ENV: &str = "AFB_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "afb",
    version,
    about = "Graph surrogates for airfoil flow fields"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded, timing-free outputs: identical inputs give identical files.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded corpus of analytic flow samples.
    GenSynthetic(GenArgs),
    /// Radius graph of one sample as JSON.
    BuildGraph(GraphArgs),
    /// Fit normalization statistics on a training directory.
    FitStats(StatsArgs),
    /// Train a model and write its checkpoint.
    Train(TrainArgs),
    /// Score checkpoints on a test directory.
    Eval(EvalArgs),
    /// Wall shear stress and wall pressure of one sample.
    Forces(ForcesArgs),
    /// Finite-difference check of a model's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseArg {
    Couette,
    #[value(name = "cylinder_potential", alias = "cylinder")]
    CylinderPotential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArg {
    Graphsage,
    #[value(name = "graph_unet")]
    GraphUnet,
    Gno,
    Mgno,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Graphsage => ModelKind::Graphsage,
            ModelArg::GraphUnet => ModelKind::GraphUnet,
            ModelArg::Gno => ModelKind::Gno,
            ModelArg::Mgno => ModelKind::Mgno,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldArg {
    True,
    Ckpt,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub case: CaseArg,
    #[arg(long)]
    pub n_samples: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Wall segments per sample (default depends on the case).
    #[arg(long)]
    pub surface_segments: Option<usize>,
    /// Approximate fluid node count per sample (default depends on the case).
    #[arg(long)]
    pub volume_nodes: Option<usize>,
    #[arg(long, default_value_t = 1e-5)]
    pub nu: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GraphArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    #[arg(long, default_value_t = 64)]
    pub max_neighbors: usize,
    /// Draw this many nodes first (default: all).
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub train_dir: PathBuf,
    #[arg(long, default_value = "stats.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub train_dir: PathBuf,
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long, value_enum, default_value = "graphsage")]
    pub model: ModelArg,
    #[arg(long, default_value_t = 400)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub max_lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1600)]
    pub subsample: usize,
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    #[arg(long, default_value_t = 64)]
    pub max_neighbors: usize,
    /// Graphs per optimizer step.
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines training history (default: `<out>.history.jsonl`).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub test_dir: PathBuf,
    /// Repeat for repeated trainings; rows aggregate checkpoints per model.
    #[arg(long, required = true)]
    pub ckpt: Vec<PathBuf>,
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long, default_value = "report.csv")]
    pub report: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    #[arg(long, default_value_t = 512)]
    pub max_neighbors: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub nu: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ForcesArgs {
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long, value_enum, default_value = "true")]
    pub field: FieldArg,
    /// Required with `--field ckpt`.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Required with `--field ckpt`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    #[arg(long, default_value_t = 512)]
    pub max_neighbors: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub nu: f64,
    #[arg(long, default_value = "forces.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "graphsage")]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub nodes: usize,
    /// Entries checked per parameter array (0: all).
    #[arg(long, default_value_t = 12)]
    pub entries: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            },
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        kind: "UsageError".into(),
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenSynthetic(_) => "gen-synthetic",
            Command::BuildGraph(_) => "build-graph",
            Command::FitStats(_) => "fit-stats",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Forces(_) => "forces",
            Command::Gradcheck(_) => "gradcheck",
        }
    }

    fn seed_mut(&mut self) -> Option<&mut u64> {
        match self {
            Command::GenSynthetic(a) => Some(&mut a.seed),
            Command::BuildGraph(a) => Some(&mut a.seed),
            Command::Train(a) => Some(&mut a.seed),
            Command::Eval(a) => Some(&mut a.seed),
            Command::Gradcheck(a) => Some(&mut a.seed),
            Command::FitStats(_) | Command::Forces(_) => None,
        }
    }
}

fn physics(nu: f64) -> PhysicsConfig {
    PhysicsConfig {
        nu,
        ..PhysicsConfig::default()
    }
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        samples_per_batch: a.batch,
        subsample: a.subsample,
        radius: a.radius,
        train_max_neighbors: a.max_neighbors,
        max_lr: a.max_lr,
        lambda_surface: a.lambda,
        seed: a.seed,
        ..TrainConfig::default()
    }
}

fn eval_config(radius: f64, max_neighbors: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        radius,
        eval_max_neighbors: max_neighbors,
        seed,
        ..TrainConfig::default()
    }
}

/// The configuration a parsed command line resolves to, after defaults and
/// the seed override.
pub fn resolved_config(cli: &Cli) -> Value {
    let mut v = json!({
        "command": cli.command.name(),
        "threads": effective_threads(cli),
        "deterministic": cli.deterministic,
    });
    let args = match &cli.command {
        Command::GenSynthetic(a) => json!({ "args": a, "physics": physics(a.nu) }),
        Command::BuildGraph(a) => json!({ "args": a }),
        Command::FitStats(a) => json!({ "args": a }),
        Command::Train(a) => json!({
            "args": a,
            "model": ModelConfig::new(a.model.into()),
            "train": train_config(a),
        }),
        Command::Eval(a) => json!({
            "args": a,
            "eval": eval_config(a.radius, a.max_neighbors, a.seed),
            "physics": physics(a.nu),
        }),
        Command::Forces(a) => json!({ "args": a, "physics": physics(a.nu) }),
        Command::Gradcheck(a) => json!({
            "args": a,
            "model": small_cloud_config(&ModelConfig::new(a.model.into())),
        }),
    };
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, args) {
        dst.extend(src);
    }
    v
}

fn effective_threads(cli: &Cli) -> usize {
    if cli.deterministic {
        1
    } else {
        cli.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// Parses `argv` (program name first) and applies the environment seed.
pub fn parse<I, T>(argv: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut cli = match parse(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&mut cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!(
                "{}",
                json!({ "error": f.kind, "message": f.message, "exit_code": f.code })
            );
            f.code
        }
    }
}

fn execute(cli: &mut Cli) -> CliResult<()> {
    if let Some(seed) = env_seed()? {
        if let Some(s) = cli.command.seed_mut() {
            *s = seed;
        }
    }
    if cli.threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    eprintln!("{}", resolved_config(cli));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_threads(cli))
        .build()
        .map_err(|e| usage(format!("thread pool: {e}")))?;
    let deterministic = cli.deterministic;
    pool.install(|| dispatch(&cli.command, deterministic))
}

fn dispatch(cmd: &Command, deterministic: bool) -> CliResult<()> {
    match cmd {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::FitStats(a) => {
            let samples = load_dir(&a.train_dir)?;
            fit_norm_stats(&samples)?.save(&a.out)?;
            Ok(())
        }
        Command::Train(a) => train_cmd(a, deterministic),
        Command::Eval(a) => eval_cmd(a, deterministic),
        Command::Forces(a) => forces_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    }
}

fn gen_synthetic(a: &GenArgs) -> CliResult<()> {
    let kind = match a.case {
        CaseArg::Couette => CaseKind::Couette,
        CaseArg::CylinderPotential => CaseKind::CylinderPotential,
    };
    let mut spec = CorpusSpec::new(kind, a.n_samples, a.seed);
    if let Some(m) = a.surface_segments {
        spec.surface_segments = m;
    }
    if let Some(n) = a.volume_nodes {
        spec.volume_nodes = n;
    }
    if a.n_samples == 0 {
        return Err(usage("--n-samples must be at least 1"));
    }
    let paths = write_corpus(&spec, &physics(a.nu), &a.out_dir)?;
    println!("wrote {} samples to {}", paths.len(), a.out_dir.display());
    Ok(())
}

fn build_graph(a: &GraphArgs) -> CliResult<()> {
    let sample = read_sample(&a.input)?;
    let nodes: Vec<usize> = match a.subsample {
        Some(n) => subsample(&sample, n.min(sample.n_nodes()), a.seed)?,
        None => (0..sample.n_nodes()).collect(),
    };
    let points: Vec<[f64; 2]> = nodes.iter().map(|&i| sample.node_pos[i]).collect();
    let g = build_radius_graph(&points, a.radius, a.max_neighbors, a.seed)?;
    let doc = json!({
        "radius": g.radius,
        "max_neighbors": g.max_neighbors,
        "n_nodes": g.n_nodes(),
        "nodes": nodes,
        "edges": g.edges,
    });
    write_text(&a.out, &doc.to_string())?;
    println!("{} nodes, {} edges", g.n_nodes(), g.edges.len());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn timing_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".timing.json");
    PathBuf::from(s)
}

fn train_cmd(a: &TrainArgs, deterministic: bool) -> CliResult<()> {
    let samples = load_dir(&a.train_dir)?;
    let stats = NormStats::load(&a.stats)?;
    let cfg = train_config(a);
    let out = train(&samples, &stats, &ModelConfig::new(a.model.into()), &cfg)?;
    out.model.save(&a.out)?;
    let history = a.history.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".history.jsonl");
        PathBuf::from(s)
    });
    write_history(&out.history, &history)?;
    let timing = timing_path(&a.out);
    if deterministic {
        // A stale timing file would be attributed to this checkpoint.
        let _ = std::fs::remove_file(&timing);
    } else {
        write_text(
            &timing,
            &json!({ "train_time_s": out.train_time_s }).to_string(),
        )?;
    }
    if let Some(last) = out.history.last() {
        println!(
            "epoch {}: L = {:.6e}, L_V = {:.6e}, L_S = {:.6e}",
            last.epoch, last.loss, last.loss_volume, last.loss_surface
        );
    }
    Ok(())
}

fn read_train_time(ckpt: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(timing_path(ckpt)).ok()?;
    serde_json::from_str::<Value>(&text).ok()?["train_time_s"].as_f64()
}

fn eval_cmd(a: &EvalArgs, deterministic: bool) -> CliResult<()> {
    let test = load_dir(&a.test_dir)?;
    let stats = NormStats::load(&a.stats)?;
    let cfg = eval_config(a.radius, a.max_neighbors, a.seed);
    let phys = physics(a.nu);
    let mut groups: Vec<(ModelKind, Vec<RunMetrics>)> = Vec::new();
    for path in &a.ckpt {
        let model = Model::load(path)?;
        let mut m = evaluate_model(&model, &test, &stats, &cfg, &phys)?;
        if deterministic {
            m.inference_time_s = None;
            m.samples.iter_mut().for_each(|s| s.inference_s = 0.0);
        } else {
            m.train_time_s = read_train_time(path);
        }
        match groups.iter_mut().find(|(k, _)| *k == model.config.kind) {
            Some((_, runs)) => runs.push(m),
            None => groups.push((model.config.kind, vec![m])),
        }
    }
    let rows = groups
        .iter()
        .map(|(k, runs)| ScoreReport::aggregate(k.name(), runs))
        .collect::<afb_core::Result<Vec<_>>>()?;
    write_report(&rows, &a.report)?;
    let per_sample: Vec<(String, usize, &RunMetrics)> = groups
        .iter()
        .flat_map(|(k, runs)| {
            runs.iter()
                .enumerate()
                .map(move |(r, m)| (k.name().to_string(), r, m))
        })
        .collect();
    write_sample_errors(&per_sample, a.report.with_extension("samples.csv"))?;
    for r in &rows {
        println!(
            "{}: L_V = {:.4e} ± {:.1e}, L_S = {:.4e} ± {:.1e}",
            r.model, r.loss_volume.mean, r.loss_volume.std, r.loss_surface.mean, r.loss_surface.std
        );
    }
    Ok(())
}

fn forces_cmd(a: &ForcesArgs) -> CliResult<()> {
    let sample = read_sample(&a.sample)?;
    let field = match a.field {
        FieldArg::True => FlowField::from_sample(&sample),
        FieldArg::Ckpt => {
            let (Some(ckpt), Some(stats)) = (&a.ckpt, &a.stats) else {
                return Err(usage("--field ckpt needs --ckpt and --stats"));
            };
            let model = Model::load(ckpt)?;
            let stats = NormStats::load(stats)?;
            predict(
                &model,
                &sample,
                &stats,
                &eval_config(a.radius, a.max_neighbors, 0),
            )?
            .physical
        }
    };
    let f = drag_lift(&sample, &field, &physics(a.nu))?;
    f.write_csv(&sample, &a.out)?;
    println!(
        "{}",
        json!({
            "integral_tau": f.integral_tau,
            "integral_wp": f.integral_wp,
            "drag": f.drag,
            "lift": f.lift,
        })
    );
    Ok(())
}

fn gradcheck_cmd(a: &GradcheckArgs) -> CliResult<()> {
    if a.nodes == 0 {
        return Err(usage("--nodes must be at least 1"));
    }
    let opts = FdOptions {
        max_entries_per_param: (a.entries > 0).then_some(a.entries),
        seed: a.seed,
        ..FdOptions::default()
    };
    let config = small_cloud_config(&ModelConfig::new(a.model.into()));
    let report = check_model_gradients(&config, a.nodes, a.seed, &opts)?;
    println!(
        "{}",
        serde_json::to_string(&report).expect("report serializes")
    );
    if report.max_rel_err < a.tolerance {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NUMERICAL,
            kind: "GradientMismatch".into(),
            message: format!(
                "max relative error {:e} at {:?} exceeds {:e}",
                report.max_rel_err, report.worst, a.tolerance
            ),
        })
    }
}
