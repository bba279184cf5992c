//! Self-play episodes, the replay buffer, and the training loop.

use std::collections::VecDeque;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::PivotAction;
use crate::datagen::dataset_digest;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::game::{GameState, Outcome, RewardMode, default_game_budget};
use crate::matrix::{SymMatrix, Tolerance};
use crate::mcts::{Evaluator, SearchConfig, SearchTree, policy_from_visits};
use crate::net::{
    Arch, InitConfig, NetParams, Optimizer, OptimizerKind, TrainBatch, load_checkpoint, loss, loss_and_grad,
    save_checkpoint,
};
use crate::solvers::{MaxElement, SolvePath, Scripted, default_max_steps, solve_with};

/// One `(s, π, z)` training target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub state: Vec<f64>,
    pub legal_mask: Vec<bool>,
    pub pi: Vec<f64>,
    pub z: f64,
}

/// FIFO store of the most recent examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<TrainingExample>,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 10_000;

    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay buffer capacity must be >= 1"));
        }
        Ok(Self { capacity, items: VecDeque::new() })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entries beyond capacity.
    pub fn push(&mut self, ex: TrainingExample) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(ex);
    }

    pub fn extend(&mut self, examples: impl IntoIterator<Item = TrainingExample>) {
        for ex in examples {
            self.push(ex);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingExample> {
        self.items.iter()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).map_err(|e| Error::Serialize(e.to_string()))?;
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let buf: Self = serde_json::from_slice(&bytes).map_err(|e| Error::Serialize(e.to_string()))?;
        if buf.capacity == 0 || buf.items.len() > buf.capacity {
            return Err(Error::Serialize("replay buffer snapshot exceeds its capacity".into()));
        }
        Ok(buf)
    }
}

fn batch_of<'a>(examples: impl IntoIterator<Item = &'a TrainingExample>) -> TrainBatch {
    let mut b = TrainBatch::default();
    for ex in examples {
        b.push(ex.state.clone(), ex.legal_mask.clone(), ex.pi.clone(), ex.z);
    }
    b
}

/// Step budget for an episode starting at `a0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetPolicy {
    /// `3 · n(n-1)/2`.
    #[default]
    Standard,
    Fixed { steps: usize },
    /// `max(1, floor(ratio · m) + offset)` where `m` is the number of steps
    /// MaxElement needs on `a0`.
    MaxElementRelative { ratio: f64, offset: i64 },
}

impl BudgetPolicy {
    pub fn resolve(&self, a0: &SymMatrix<f64>, tol: f64) -> Result<usize> {
        match *self {
            BudgetPolicy::Standard => Ok(default_game_budget(a0.order())),
            BudgetPolicy::Fixed { steps } if steps > 0 => Ok(steps),
            BudgetPolicy::Fixed { .. } => Err(Error::invalid("fixed budget must be >= 1")),
            BudgetPolicy::MaxElementRelative { ratio, offset } => {
                if !(ratio > 0.0) {
                    return Err(Error::invalid("budget ratio must be positive"));
                }
                let m = solve_with(a0, &mut MaxElement, tol, default_max_steps(a0.order()))?.steps;
                Ok(((ratio * m as f64).floor() as i64 + offset).max(1) as usize)
            }
        }
    }
}

/// Adjusts a [`BudgetPolicy::MaxElementRelative`] ratio between
/// iterations from the self-play win rate, so the terminal reward keeps
/// separating short paths from long ones as the agent improves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSchedule {
    /// Tighten when the win rate reaches this.
    pub tighten_at: f64,
    /// Loosen when the win rate falls below this.
    pub loosen_below: f64,
    pub step: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl Default for BudgetSchedule {
    fn default() -> Self {
        Self { tighten_at: 0.9, loosen_below: 0.3, step: 0.1, min_ratio: 0.3, max_ratio: 2.0 }
    }
}

impl BudgetSchedule {
    /// Budget for the next iteration.
    pub fn next(&self, current: BudgetPolicy, win_rate: f64) -> BudgetPolicy {
        match current {
            BudgetPolicy::MaxElementRelative { ratio, offset } => {
                let ratio = if win_rate >= self.tighten_at {
                    ratio - self.step
                } else if win_rate < self.loosen_below {
                    ratio + self.step
                } else {
                    ratio
                };
                BudgetPolicy::MaxElementRelative { ratio: ratio.clamp(self.min_ratio, self.max_ratio), offset }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeMode {
    /// Records examples; the first `explore_moves` moves are sampled at the
    /// search temperature, later ones are greedy.
    Training { explore_moves: usize },
    /// No examples; every move is played at the search temperature, so
    /// `temperature = 0` is greedy.
    Eval,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub examples: Vec<TrainingExample>,
    pub pivots: Vec<PivotAction>,
    pub outcome: Outcome,
    /// Sum of shaped rewards; zero for terminal-only games.
    pub shaped_return: f64,
}

/// Plays one game from `start` with MCTS move selection.
pub fn run_episode<E: Evaluator + ?Sized, R: Rng>(
    start: GameState<f64>,
    evaluator: &E,
    search: &SearchConfig,
    mode: EpisodeMode,
    tree_reuse: bool,
    rng: &mut R,
) -> Result<Episode> {
    search.validate()?;
    let mut state = start;
    let mut examples = Vec::new();
    let mut pivots = Vec::new();
    let mut shaped_return = 0.0;
    let mut tree: Option<SearchTree> = None;
    let outcome = loop {
        if let Some(o) = state.terminal() {
            break o;
        }
        let mut t = match tree.take() {
            Some(t) => t,
            None => SearchTree::new(state.clone())?,
        };
        t.run(evaluator, search, rng)?;
        let counts = t.root_visits();
        let temperature = match mode {
            EpisodeMode::Training { explore_moves } if pivots.len() < explore_moves => search.temperature,
            EpisodeMode::Training { .. } => 0.0,
            EpisodeMode::Eval => search.temperature,
        };
        let play = policy_from_visits(&counts, temperature)?;
        let flat = if temperature == 0.0 { argmax(&play) } else { sample(&play, rng) };
        if let EpisodeMode::Training { .. } = mode {
            examples.push(TrainingExample {
                state: state.encode(),
                legal_mask: state.legal_mask(),
                pi: policy_from_visits(&counts, 1.0)?,
                z: 0.0,
            });
        }
        let action = t.root().edges.iter().find(|e| e.action.flat == flat).map(|e| e.action).ok_or_else(|| {
            Error::invalid("search selected an action outside the legal set")
        })?;
        let tr = state.step(action)?;
        shaped_return += tr.reward;
        state = tr.state;
        pivots.push(action);
        if tree_reuse && t.advance(action) {
            tree = Some(t);
        }
    };
    for ex in &mut examples {
        ex.z = outcome.value();
    }
    Ok(Episode { examples, pivots, outcome, shaped_return })
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |b, (k, &x)| if x > p[b] { k } else { b })
}

fn sample<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (k, &x) in p.iter().enumerate() {
        if u < x {
            return k;
        }
        u -= x;
    }
    // rounding left a sliver; take the last non-zero entry
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Network plus search settings used as a pivot strategy.
#[derive(Debug, Clone)]
pub struct LearnedAgent {
    pub params: NetParams,
    pub search: SearchConfig,
    pub tree_reuse: bool,
    pub seed: u64,
}

impl LearnedAgent {
    pub fn new(params: NetParams, search: SearchConfig) -> Self {
        Self { params, search, tree_reuse: true, seed: 0 }
    }

    /// MCTS episode under `self.search`, replayed to recover eigenvectors.
    pub fn solve(&self, a: &SymMatrix<f64>, tol: f64, max_steps: usize) -> Result<SolvePath<f64>> {
        if a.order() != self.params.arch.n {
            return Err(Error::DimensionMismatch { expected: self.params.arch.n, got: a.order() });
        }
        let start = GameState::new(a.clone(), tol, max_steps)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let ep = run_episode(start, &self.params, &self.search, EpisodeMode::Eval, self.tree_reuse, &mut rng)?;
        let steps = ep.pivots.len().max(1);
        solve_with(a, &mut Scripted::new(ep.pivots), tol, steps)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: Arch,
    pub tol: Tolerance,
    pub reward: RewardMode,
    pub budget: BudgetPolicy,
    pub budget_schedule: Option<BudgetSchedule>,
    pub search: SearchConfig,
    /// Moves per episode played at the search temperature.
    pub explore_moves: usize,
    pub tree_reuse: bool,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub c_reg: f64,
    pub optimizer: OptimizerKind,
    pub buffer_capacity: usize,
    /// Share of the buffer held out to stop epochs early.
    pub holdout_fraction: f64,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    /// Stop once `‖Δθ‖ / ‖θ‖` over an iteration falls below this.
    pub param_change_stop: f64,
    pub init: InitConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Arch::standard(5),
            tol: Tolerance::default(),
            reward: RewardMode::Terminal,
            budget: BudgetPolicy::Standard,
            budget_schedule: None,
            search: SearchConfig::default(),
            explore_moves: 2,
            tree_reuse: true,
            iterations: 50,
            episodes_per_iteration: 100,
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            c_reg: 1e-4,
            optimizer: OptimizerKind::adam(),
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            holdout_fraction: 0.1,
            patience: 3,
            param_change_stop: 1e-4,
            init: InitConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.search.validate()?;
        if self.episodes_per_iteration == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::invalid("episodes, batch size and buffer capacity must be >= 1"));
        }
        if !(self.learning_rate >= 0.0) || !(self.c_reg >= 0.0) {
            return Err(Error::invalid("learning rate and c_reg must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::invalid("holdout fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub mean_loss: f64,
    pub holdout_loss: Option<f64>,
    pub early_stopped: bool,
}

/// Fits `params` to the buffer for up to `cfg.epochs` epochs with a fresh
/// optimizer. Returns the parameters with the best held-out loss.
pub fn train_iteration(
    params: &NetParams,
    buffer: &ReplayBuffer,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(NetParams, TrainReport)> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..buffer.len()).collect();
    idx.shuffle(&mut rng);
    let all: Vec<&TrainingExample> = buffer.iter().collect();
    let n_hold = if buffer.len() >= 2 { (cfg.holdout_fraction * buffer.len() as f64).floor() as usize } else { 0 };
    let (hold_idx, train_idx) = idx.split_at(n_hold);
    let holdout = (!hold_idx.is_empty()).then(|| batch_of(hold_idx.iter().map(|&k| all[k])));
    let mut train_idx = train_idx.to_vec();

    let mut current = params.clone();
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut best = holdout.as_ref().map(|h| loss(&current, h, cfg.c_reg)).transpose()?.map(|l| (l, current.clone()));
    let mut since_best = 0;
    let mut report = TrainReport { epochs_run: 0, mean_loss: f64::NAN, holdout_loss: best.as_ref().map(|b| b.0), early_stopped: false };

    for _ in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let batch = batch_of(chunk.iter().map(|&k| all[k]));
            let (l, g) = loss_and_grad(&current, &batch, cfg.c_reg)?;
            opt.step(&mut current, &g, cfg.learning_rate)?;
            total += l * chunk.len() as f64;
            count += chunk.len();
        }
        report.epochs_run += 1;
        report.mean_loss = total / count as f64;
        if let (Some(h), Some((best_loss, best_params))) = (&holdout, &mut best) {
            let hl = loss(&current, h, cfg.c_reg)?;
            if hl < *best_loss {
                *best_loss = hl;
                *best_params = current.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience.max(1) {
                    report.early_stopped = true;
                    break;
                }
            }
        }
    }
    match best {
        Some((l, p)) => {
            report.holdout_loss = Some(l);
            Ok((p, report))
        }
        None => Ok((current, report)),
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub episodes: usize,
    pub mean_len: f64,
    pub mean_loss: f64,
    pub win_rate: f64,
    pub wall_seconds: f64,
    pub holdout_loss: Option<f64>,
    pub param_change: f64,
    /// Budget ratio in force, for MaxElement-relative budgets.
    pub budget_ratio: Option<f64>,
}

const LOG_HEADER: &str =
    "iteration,episodes,mean_len,mean_loss,win_rate,wall_seconds,holdout_loss,param_change,budget_ratio";

impl IterationLog {
    fn csv_row(&self) -> String {
        let hold = self.holdout_loss.map(|h| h.to_string()).unwrap_or_default();
        let ratio = self.budget_ratio.map(|r| r.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.3},{},{},{}",
            self.iteration,
            self.episodes,
            self.mean_len,
            self.mean_loss,
            self.win_rate,
            self.wall_seconds,
            hold,
            self.param_change,
            ratio
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    dataset_sha256: String,
    dataset_len: usize,
    config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LoopState {
    completed: usize,
    converged: bool,
    budget: BudgetPolicy,
    log: Vec<IterationLog>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub log: Vec<IterationLog>,
    /// True when the parameter-change criterion ended training.
    pub converged: bool,
}

/// Files written to a training run directory.
pub struct RunFiles {
    pub dir: PathBuf,
}

impl RunFiles {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.toml")
    }
    pub fn log(&self) -> PathBuf {
        self.dir.join("log.csv")
    }
    pub fn latest(&self) -> PathBuf {
        self.dir.join("latest.ckpt")
    }
    pub fn checkpoint(&self, iteration: usize) -> PathBuf {
        self.dir.join(format!("iter_{iteration:04}.ckpt"))
    }
    pub fn buffer(&self) -> PathBuf {
        self.dir.join("buffer.json")
    }
    fn state(&self) -> PathBuf {
        self.dir.join("state.json")
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Plays one iteration's worth of episodes in parallel. Each episode has
/// its own RNG stream, so results do not depend on the thread count.
pub fn self_play_round(
    params: &NetParams,
    starts: &[&SymMatrix<f64>],
    budget: BudgetPolicy,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<Vec<Episode>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(e, a)| {
            let tol = cfg.tol.resolve(*a)?;
            let budget = budget.resolve(a, tol)?;
            let mut start = GameState::new((*a).clone(), tol, budget)?;
            start.reward = cfg.reward;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, iteration as u64, e as u64]));
            run_episode(start, params, &cfg.search, EpisodeMode::Training { explore_moves: cfg.explore_moves }, cfg.tree_reuse, &mut rng)
        })
        .collect()
}

/// Full self-play training. With `run_dir`, every iteration is
/// checkpointed and an interrupted run picks up where it stopped.
pub fn training_loop(cfg: &TrainConfig, train_set: &[SymMatrix<f64>], run_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if let Some(a) = train_set.iter().find(|a| a.order() != cfg.arch.n) {
        return Err(Error::DimensionMismatch { expected: cfg.arch.n, got: a.order() });
    }
    let files = run_dir.map(RunFiles::new);
    let manifest = Manifest {
        format_version: 1,
        dataset_sha256: dataset_digest(train_set),
        dataset_len: train_set.len(),
        config: cfg.clone(),
    };

    let mut params = NetParams::init(cfg.arch.clone(), derive_seed(cfg.seed, &[0]), cfg.init)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut state = LoopState { completed: 0, converged: false, budget: cfg.budget, log: Vec::new() };

    if let Some(f) = &files {
        fs::create_dir_all(&f.dir).map_err(|e| Error::io(&f.dir, e))?;
        if f.state().exists() {
            let text = fs::read_to_string(f.manifest()).map_err(|e| Error::io(f.manifest(), e))?;
            let old: Manifest = toml::from_str(&text).map_err(|e| Error::Serialize(e.to_string()))?;
            // the iteration count may grow between sessions
            let same_config = TrainConfig { iterations: cfg.iterations, ..old.config.clone() } == manifest.config;
            if old.dataset_sha256 != manifest.dataset_sha256 || !same_config {
                return Err(Error::invalid(format!(
                    "{} holds a run with a different configuration or dataset",
                    f.dir.display()
                )));
            }
            let bytes = fs::read(f.state()).map_err(|e| Error::io(f.state(), e))?;
            state = serde_json::from_slice(&bytes).map_err(|e| Error::Serialize(e.to_string()))?;
            if state.completed > 0 {
                params = load_checkpoint(&f.latest())?;
                buffer = ReplayBuffer::load(&f.buffer())?;
            }
            info!("resuming after iteration {}", state.completed);
        }
        let text = toml::to_string(&manifest).map_err(|e| Error::Serialize(e.to_string()))?;
        write_atomic(&f.manifest(), text.as_bytes())?;
    }

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2])));

    while state.completed < cfg.iterations && !state.converged {
        let iteration = state.completed + 1;
        let clock = Instant::now();
        let first = state.completed * cfg.episodes_per_iteration;
        let starts: Vec<&SymMatrix<f64>> =
            (0..cfg.episodes_per_iteration).map(|e| &train_set[order[(first + e) % order.len()]]).collect();
        let episodes = self_play_round(&params, &starts, state.budget, cfg, iteration)?;
        let wins = episodes.iter().filter(|e| e.outcome.z > 0).count();
        let moves: usize = episodes.iter().map(|e| e.pivots.len()).sum();
        for ep in episodes {
            buffer.extend(ep.examples);
        }

        let (next, report) = if buffer.is_empty() {
            warn!("iteration {iteration}: every start was already diagonal, nothing to train on");
            (params.clone(), TrainReport { epochs_run: 0, mean_loss: f64::NAN, holdout_loss: None, early_stopped: false })
        } else {
            train_iteration(&params, &buffer, cfg, derive_seed(cfg.seed, &[3, iteration as u64]))?
        };
        let change = next.distance(&params)? / params.sq_norm().sqrt().max(f64::MIN_POSITIVE);
        params = next;
        let row = IterationLog {
            iteration,
            episodes: starts.len(),
            mean_len: moves as f64 / starts.len() as f64,
            mean_loss: report.mean_loss,
            win_rate: wins as f64 / starts.len() as f64,
            wall_seconds: clock.elapsed().as_secs_f64(),
            holdout_loss: report.holdout_loss,
            param_change: change,
            budget_ratio: match state.budget {
                BudgetPolicy::MaxElementRelative { ratio, .. } => Some(ratio),
                _ => None,
            },
        };
        info!(
            "iteration {iteration}: win rate {:.3}, mean length {:.2}, loss {:.4}, change {:.2e}",
            row.win_rate, row.mean_len, row.mean_loss, change
        );
        let row_win_rate = row.win_rate;
        state.log.push(row);
        state.completed = iteration;
        state.converged = change < cfg.param_change_stop;
        if let Some(sched) = cfg.budget_schedule {
            state.budget = sched.next(state.budget, row_win_rate);
        }

        if let Some(f) = &files {
            save_checkpoint(&params, &f.checkpoint(iteration))?;
            save_checkpoint(&params, &f.latest())?;
            buffer.save(&f.buffer())?;
            let mut csv = String::from(LOG_HEADER);
            csv.push('\n');
            for r in &state.log {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            write_atomic(&f.log(), csv.as_bytes())?;
            let bytes = serde_json::to_vec(&state).map_err(|e| Error::Serialize(e.to_string()))?;
            write_atomic(&f.state(), &bytes)?;
        }
    }
    Ok(TrainOutcome { params, log: state.log, converged: state.converged })
}
