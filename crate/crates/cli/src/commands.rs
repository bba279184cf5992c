use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use jacobi_zero::bench::{self, BenchSummary, LabeledRun, StepStats};
use jacobi_zero::datagen::{self, Dataset, TrajectoryConfig};
use jacobi_zero::mcts::RootNoise;
use jacobi_zero::net::load_checkpoint;
use jacobi_zero::selfplay::{BudgetPolicy, RunFiles};
use jacobi_zero::solvers::{default_max_steps, reference_spectrum};
use jacobi_zero::{
    Error, ExperimentConfig, LearnedAgent, SearchConfig, StrategyKind, SymMatrix, Tolerance, solve, training_loop,
};

pub const DEFAULT_TOL: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        if e.is_data_error() {
            return CliError::Data(msg);
        }
        match e {
            Error::InvalidArgument(_) => CliError::Usage(msg),
            Error::Io { .. } | Error::DimensionMismatch { .. } | Error::Serialize(_) => CliError::Data(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "jacobi-zero", version, about = "Learned pivot orderings for Jacobi eigenvalue iterations")]
pub struct Cli {
    /// Seed for generation, splitting and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for self-play and benchmarks.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Absolute convergence threshold on the largest off-diagonal entry [default: 1e-5].
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Rotation budget per solve [default: 20 * n(n-1)/2]. For `train`, a
    /// fixed self-play episode budget.
    #[arg(long, global = true)]
    pub max_steps: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trajectory dataset.
    Gen(GenArgs),
    /// Train a policy-value network by self-play.
    Train(TrainArgs),
    /// Solve one matrix and print the pivot path.
    Solve(SolveArgs),
    /// Compare MaxElement, Cyclic and a trained agent on a dataset.
    Bench(BenchArgs),
    /// Cross-run savings grid from several benchmark outputs.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Experiment file; its `[data]` table and `data_seed` are the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub mixing_rotations: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Inference-time search settings shared by `solve` and `bench`.
#[derive(Debug, Args)]
pub struct InferenceArgs {
    /// Experiment file whose `[inference]` table is the default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub playouts: Option<usize>,
    #[arg(long)]
    pub cpuct: Option<f64>,
    /// Wall-clock cap per move search; makes results timing dependent.
    #[arg(long)]
    pub time_cap_secs: Option<f64>,
    /// Visit-count temperature for every move (0 = argmax).
    #[arg(long)]
    pub inference_temperature: Option<f64>,
    /// Dirichlet noise at every search root.
    #[arg(long)]
    pub root_noise: bool,
}

impl InferenceArgs {
    fn experiment(&self) -> CliResult<Option<ExperimentConfig>> {
        Ok(self.config.as_deref().map(ExperimentConfig::load).transpose()?)
    }

    fn search(&self, exp: Option<&ExperimentConfig>) -> CliResult<SearchConfig> {
        let mut s = exp.map(|e| e.inference).unwrap_or_else(SearchConfig::inference);
        if let Some(p) = self.playouts {
            s.n_playouts = p;
        }
        if let Some(c) = self.cpuct {
            s.c_puct = c;
        }
        if let Some(t) = self.time_cap_secs {
            s.time_cap_secs = Some(t);
        }
        if let Some(t) = self.inference_temperature {
            s.temperature = t;
        }
        if self.root_noise {
            s.root_noise = Some(RootNoise::default());
        }
        s.validate()?;
        Ok(s)
    }

    fn agent(&self, checkpoint: &Path, exp: Option<&ExperimentConfig>, seed: Option<u64>) -> CliResult<LearnedAgent> {
        let params = load_checkpoint(checkpoint)?;
        let mut agent = LearnedAgent::new(params, self.search(exp)?);
        agent.seed = seed.unwrap_or(0);
        Ok(agent)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV; without it the experiment file's dataset is generated.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Experiment file; defaults to the full-scale settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training share of the dataset.
    #[arg(long)]
    pub split: Option<f64>,
    /// Run directory for checkpoints, log and the held-out split.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue an interrupted run in `--out`.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub playouts: Option<usize>,
    #[arg(long)]
    pub cpuct: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Maxelem,
    Cyclic,
    Learned,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Dataset CSV holding the matrix.
    #[arg(long, conflicts_with = "values")]
    pub matrix: Option<PathBuf>,
    /// Record index inside `--matrix`.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Inline rows, e.g. "2,1;1,3".
    #[arg(long, allow_hyphen_values = true)]
    pub values: Option<String>,
    #[arg(long, value_enum, default_value_t = Strategy::Maxelem)]
    pub strategy: Strategy,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Cross-check eigenvalues against a tol=1e-12 Jacobi run.
    #[arg(long)]
    pub verify: bool,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Benchmark only the held-out part of a seeded split with this training share.
    #[arg(long)]
    pub split: Option<f64>,
    /// Agent checkpoint; without it only the baselines run.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory for records.csv, summary.json and histograms.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// `TRAIN_LABEL:TEST_LABEL:records.csv`, repeated.
    #[arg(long = "run", required = true)]
    pub runs: Vec<String>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(usage("--tol must be positive"));
        }
    }
    if cli.max_steps == Some(0) {
        return Err(usage("--max-steps must be >= 1"));
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(&cli, a),
        Command::Train(a) => cmd_train(&cli, a),
        Command::Solve(a) => cmd_solve(&cli, a),
        Command::Bench(a) => cmd_bench(&cli, a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> CliResult {
    let exp = a.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let mut cfg = exp.as_ref().map(|e| e.data.clone()).unwrap_or_else(TrajectoryConfig::default);
    let seed = cli.seed.or(exp.map(|e| e.data_seed)).unwrap_or(0);
    macro_rules! set {
        ($($f:ident),*) => {$( if let Some(v) = a.$f { cfg.$f = v; } )*};
    }
    set!(n, count, trajectories, eps, stride, spread);
    if a.mixing_rotations.is_some() {
        cfg.mixing_rotations = a.mixing_rotations;
    }
    let data = datagen::generate_dataset(&cfg, seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    datagen::write_csv(&data, &a.out)?;
    println!("wrote {} matrices to {}", data.matrices.len(), a.out.display());
    Ok(())
}

const EXPERIMENT_FILE: &str = "experiment.toml";
const TEST_FILE: &str = "test.csv";

fn cmd_train(cli: &Cli, a: &TrainArgs) -> CliResult {
    let files = RunFiles::new(&a.out);
    let saved = a.out.join(EXPERIMENT_FILE);
    let started = files.dir.join("state.json").exists();
    if started && !a.resume {
        return Err(usage(format!("{} already holds a run; pass --resume to continue it", a.out.display())));
    }
    let mut exp = match (&a.config, a.resume && saved.exists()) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, true) => ExperimentConfig::load(&saved)?,
        (None, false) => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        exp.train.seed = s;
        exp.split_seed = s;
    }
    if let Some(t) = cli.tol {
        exp.train.tol = Tolerance::Absolute(t);
    }
    if let Some(m) = cli.max_steps {
        exp.train.budget = BudgetPolicy::Fixed { steps: m };
    }
    if let Some(s) = a.split {
        exp.split = s;
    }
    let t = &mut exp.train;
    macro_rules! set {
        ($($src:ident => $($dst:ident).+),*) => {$( if let Some(v) = a.$src { t.$($dst).+ = v; } )*};
    }
    set!(iterations => iterations, episodes => episodes_per_iteration, epochs => epochs,
         playouts => search.n_playouts, cpuct => search.c_puct, batch_size => batch_size,
         learning_rate => learning_rate);
    exp.validate()?;

    let matrices = match &a.data {
        Some(p) => datagen::read_csv(p, false)?.matrices,
        None => datagen::generate_dataset(&exp.data, exp.data_seed)?.matrices,
    };
    let split = exp.split_matrices(&matrices)?;
    if split.train.is_empty() {
        return Err(usage("the split leaves no training matrices"));
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::Runtime(format!("{}: {e}", a.out.display())))?;
    let text = exp.to_toml()?;
    write_file(&saved, &text)?;
    if !split.test.is_empty() {
        datagen::write_csv(&Dataset { manifest: None, matrices: split.test.clone() }, &a.out.join(TEST_FILE))?;
    }
    let t = &exp.train;
    println!(
        "c_puct {} playouts {} epochs {} iterations {} episodes {} seed {}",
        t.search.c_puct, t.search.n_playouts, t.epochs, t.iterations, t.episodes_per_iteration, t.seed
    );
    info!("training on {} matrices, {} held out", split.train.len(), split.test.len());
    let out = training_loop(&exp.train, &split.train, Some(&a.out))?;
    println!(
        "trained {} iterations on {} matrices{}; checkpoint {}",
        out.log.len(),
        split.train.len(),
        if out.converged { " (parameters converged)" } else { "" },
        files.latest().display()
    );
    if let Some(last) = out.log.last() {
        println!("last iteration: mean length {:.2}, win rate {:.2}, loss {:.4}", last.mean_len, last.win_rate, last.mean_loss);
    }
    Ok(())
}

fn parse_inline(values: &str) -> CliResult<SymMatrix<f64>> {
    let rows = values
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| CliError::Data(format!("bad entry '{}': {e}", v.trim()))))
                .collect::<CliResult<Vec<f64>>>()
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(SymMatrix::from_rows(&rows)?)
}

fn load_matrix(a: &SolveArgs) -> CliResult<SymMatrix<f64>> {
    match (&a.matrix, &a.values) {
        (Some(p), None) => {
            let data = datagen::read_csv(p, false)?;
            let len = data.matrices.len();
            data.matrices
                .into_iter()
                .nth(a.index)
                .ok_or_else(|| usage(format!("index {} out of range for {len} matrices", a.index)))
        }
        (None, Some(v)) => parse_inline(v),
        _ => Err(usage("give exactly one of --matrix or --values")),
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.10e}")).collect::<Vec<_>>().join(" ")
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> CliResult {
    let m = load_matrix(a)?;
    let tol = cli.tol.unwrap_or(DEFAULT_TOL);
    let max_steps = cli.max_steps.unwrap_or_else(|| default_max_steps(m.order()));
    let exp = a.inference.experiment()?;
    let agent = match (a.strategy, &a.checkpoint) {
        (Strategy::Learned, Some(c)) => Some(a.inference.agent(c, exp.as_ref(), cli.seed)?),
        (Strategy::Learned, None) => return Err(usage("--strategy learned needs --checkpoint")),
        _ => None,
    };
    let kind = match (a.strategy, &agent) {
        (Strategy::Maxelem, _) => StrategyKind::MaxElement,
        (Strategy::Cyclic, _) => StrategyKind::Cyclic,
        (Strategy::Learned, Some(ag)) => StrategyKind::Learned(ag),
        (Strategy::Learned, None) => unreachable!(),
    };
    let path = solve(&m, kind, tol, max_steps)?;
    println!("strategy: {kind:?}");
    println!("steps: {}", path.steps);
    println!("status: {}", if path.converged { "converged" } else { "budget exhausted" });
    let pivots: Vec<String> = path.pivots.iter().map(|p| p.to_string()).collect();
    println!("pivots: {}", pivots.join(" "));
    println!("offdiag_max: {}", fmt_list(&path.offdiag_trace));
    let eig = path.result.sorted_eigenvalues();
    println!("eigenvalues: {}", fmt_list(&eig));
    if a.verify {
        let reference = reference_spectrum(&m)?;
        let dev = eig.iter().zip(&reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = reference.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        let ok = path.converged && dev <= 1e-6 * scale;
        println!("verify: max deviation {dev:.3e} ({})", if ok { "ok" } else { "MISMATCH" });
        if !ok {
            return Err(CliError::Runtime("eigenvalues disagree with the reference spectrum".into()));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryFile {
    dataset: String,
    dataset_sha256: String,
    checkpoint: Option<String>,
    tol: f64,
    max_steps: usize,
    inference: Option<SearchConfig>,
    summary: BenchSummary,
    steps: Vec<(&'static str, StepStats)>,
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> CliResult {
    let data = datagen::read_csv(&a.data, false)?;
    let matrices = match a.split {
        Some(f) => {
            let (_, test) = datagen::split_indices(data.matrices.len(), f, cli.seed.unwrap_or(0))?;
            datagen::select(&data.matrices, &test)
        }
        None => data.matrices,
    };
    let n = matrices.first().map(|m| m.order()).ok_or_else(|| CliError::Data("no matrices to benchmark".into()))?;
    let tol = cli.tol.unwrap_or(DEFAULT_TOL);
    let max_steps = cli.max_steps.unwrap_or_else(|| default_max_steps(n));
    let exp = a.inference.experiment()?;
    let agent = a.checkpoint.as_deref().map(|c| a.inference.agent(c, exp.as_ref(), cli.seed)).transpose()?;
    let records = bench::run_bench(&matrices, agent.as_ref(), tol, max_steps)?;
    let summary = bench::summarize(&records)?;
    let file = SummaryFile {
        dataset: a.data.display().to_string(),
        dataset_sha256: datagen::dataset_digest(&matrices),
        checkpoint: a.checkpoint.as_ref().map(|c| c.display().to_string()),
        tol,
        max_steps,
        inference: agent.as_ref().map(|ag| ag.search),
        summary: summary.clone(),
        steps: bench::strategy_stats(&records),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&a.out.join("records.csv"), &bench::records_to_csv(&records))?;
    write_file(&a.out.join("summary.json"), &(json + "\n"))?;
    write_file(&a.out.join("histograms.csv"), &bench::histograms_csv(&records))?;
    println!("matrices: {}", summary.count);
    println!("mean steps maxelem: {:.3}", summary.mean_steps_maxelem);
    println!("mean steps cyclic:  {:.3}", summary.mean_steps_cyclic);
    if let (Some(l), Some(s)) = (summary.mean_steps_learned, summary.mean_savings_pct) {
        println!("mean steps learned: {l:.3}");
        println!("mean savings: {s:.2}%");
    }
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> CliResult {
    if a.runs.len() < 2 {
        return Err(usage("stats needs at least two --run entries"));
    }
    let runs = a
        .runs
        .iter()
        .map(|entry| {
            let mut parts = entry.splitn(3, ':');
            let (Some(tr), Some(te), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(usage(format!("expected TRAIN:TEST:PATH, got '{entry}'")));
            };
            let path = Path::new(path);
            let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let records = bench::parse_records_csv(&text, path)?;
            Ok(LabeledRun { train_label: tr.to_string(), test_label: te.to_string(), records })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = bench::stats(&runs)?;
    print!("{}", report.render());
    if let Some(p) = &a.json {
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(p, &(json + "\n"))?;
    }
    Ok(())
}
