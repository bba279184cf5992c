//! PUCT Monte-Carlo tree search over the diagonalization game.
//!
//! Selection maximizes `Q(s,a) + c_puct · P(s,a) / (1 + N(s,a))`, leaves are
//! expanded with network priors and valued by the network (or by the exact
//! outcome at terminal states), and values are averaged back along the
//! path without sign changes: there is a single player.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::action::{PivotAction, num_actions};
use crate::error::{Error, Result};
use crate::game::{GameState, Outcome};
use crate::net::{NetOutput, NetParams, forward};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootNoise {
    pub alpha: f64,
    pub fraction: f64,
}

impl Default for RootNoise {
    fn default() -> Self {
        Self { alpha: 0.3, fraction: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub c_puct: f64,
    pub n_playouts: usize,
    /// Move-selection temperature; `0` means argmax.
    pub temperature: f64,
    #[serde(default)]
    pub root_noise: Option<RootNoise>,
    /// Wall-clock cap per search. Makes results timing-dependent.
    #[serde(default)]
    pub time_cap_secs: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { c_puct: 4.0, n_playouts: 560, temperature: 1.0, root_noise: None, time_cap_secs: None }
    }
}

impl SearchConfig {
    pub fn inference() -> Self {
        Self { n_playouts: 13_000, temperature: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_puct >= 0.0) {
            return Err(Error::invalid("c_puct must be >= 0"));
        }
        if self.n_playouts == 0 {
            return Err(Error::invalid("n_playouts must be >= 1"));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::invalid("temperature must be >= 0"));
        }
        if let Some(noise) = self.root_noise {
            if !(noise.alpha > 0.0) || !(0.0..=1.0).contains(&noise.fraction) {
                return Err(Error::invalid("root noise needs alpha > 0 and fraction in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Source of `(p, v)` for leaf states.
pub trait Evaluator {
    fn evaluate(&self, state: &GameState<f64>) -> Result<NetOutput>;
}

impl Evaluator for NetParams {
    fn evaluate(&self, state: &GameState<f64>) -> Result<NetOutput> {
        forward(self, &state.encode(), &state.legal_mask())
    }
}

/// Uniform priors over legal actions and a constant value.
#[derive(Debug, Clone, Copy)]
pub struct UniformEvaluator {
    pub value: f64,
}

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, state: &GameState<f64>) -> Result<NetOutput> {
        let mask = state.legal_mask();
        let k = mask.iter().filter(|&&m| m).count();
        if k == 0 {
            return Err(Error::EmptyMask);
        }
        let p = mask.iter().map(|&m| if m { 1.0 / k as f64 } else { 0.0 }).collect();
        Ok(NetOutput { p, v: self.value })
    }
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub action: PivotAction,
    pub prior: f64,
    pub visits: u32,
    pub total_value: f64,
    child: Option<usize>,
}

impl Edge {
    fn new(action: PivotAction, prior: f64) -> Self {
        Self { action, prior, visits: 0, total_value: 0.0, child: None }
    }

    /// `W / N`, or 0 for an unvisited edge.
    pub fn mean_value(&self) -> f64 {
        if self.visits == 0 { 0.0 } else { self.total_value / f64::from(self.visits) }
    }
}

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: GameState<f64>,
    pub terminal: Option<Outcome>,
    /// One edge per legal action, in flat order. Empty until expanded.
    pub edges: Vec<Edge>,
    expanded: bool,
}

impl SearchNode {
    fn new(state: GameState<f64>) -> Self {
        let terminal = state.terminal();
        Self { state, terminal, edges: Vec::new(), expanded: false }
    }

    /// Builds an expanded node directly from priors; used by tests and
    /// tools that want to inspect selection in isolation.
    pub fn with_edges(state: GameState<f64>, edges: Vec<(PivotAction, f64, u32, f64)>) -> Self {
        let mut node = Self::new(state);
        node.edges = edges
            .into_iter()
            .map(|(action, prior, visits, total_value)| Edge { action, prior, visits, total_value, child: None })
            .collect();
        node.expanded = true;
        node
    }

    pub fn is_expanded(&self) -> bool {
        self.expanded
    }

    pub fn total_visits(&self) -> u64 {
        self.edges.iter().map(|e| u64::from(e.visits)).sum()
    }
}

fn select_edge(node: &SearchNode, c_puct: f64) -> Result<usize> {
    if !node.expanded {
        return Err(Error::invalid("cannot select from an unexpanded node"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, e) in node.edges.iter().enumerate() {
        let score = e.mean_value() + c_puct * e.prior / (1.0 + f64::from(e.visits));
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k).ok_or_else(|| Error::invalid("expanded node has no legal children"))
}

/// Child maximizing the PUCT score; ties go to the smallest flat index.
pub fn select_child(node: &SearchNode, c_puct: f64) -> Result<PivotAction> {
    select_edge(node, c_puct).map(|k| node.edges[k].action)
}

/// Converts root visit counts into a move distribution.
pub fn policy_from_visits(counts: &[u32], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature >= 0.0) {
        return Err(Error::invalid("temperature must be >= 0"));
    }
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return Err(Error::invalid("visit counts are all zero"));
    }
    let mut pi = vec![0.0; counts.len()];
    if temperature == 0.0 {
        let best = counts.iter().enumerate().fold(0, |b, (k, &c)| if c > counts[b] { k } else { b });
        pi[best] = 1.0;
        return Ok(pi);
    }
    // scale by the max count first so N^(1/τ) stays finite for small τ
    let max = f64::from(*counts.iter().max().unwrap());
    for (p, &c) in pi.iter_mut().zip(counts) {
        *p = if c == 0 { 0.0 } else { (f64::from(c) / max).powf(1.0 / temperature) };
    }
    let z: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= z;
    }
    Ok(pi)
}

/// Search tree rooted at the current game state. The tree can be re-rooted
/// at a child after a move so its statistics carry over.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    root: usize,
}

impl SearchTree {
    pub fn new(root_state: GameState<f64>) -> Result<Self> {
        let root = SearchNode::new(root_state);
        if root.terminal.is_some() {
            return Err(Error::AlreadyTerminal);
        }
        Ok(Self { nodes: vec![root], root: 0 })
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[self.root]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Root visit count per flat action.
    pub fn root_visits(&self) -> Vec<u32> {
        let root = self.root();
        let mut counts = vec![0; num_actions(root.state.order())];
        for e in &root.edges {
            counts[e.action.flat] = e.visits;
        }
        counts
    }

    fn expand<E: Evaluator + ?Sized>(&mut self, id: usize, evaluator: &E) -> Result<f64> {
        let out = evaluator.evaluate(&self.nodes[id].state)?;
        let node = &mut self.nodes[id];
        node.edges = node.state.legal_actions().into_iter().map(|a| Edge::new(a, out.p[a.flat])).collect();
        node.expanded = true;
        Ok(out.v)
    }

    fn add_root_noise<R: Rng>(&mut self, noise: RootNoise, rng: &mut R) -> Result<()> {
        let root = &mut self.nodes[self.root];
        if root.edges.len() < 2 {
            return Ok(());
        }
        let gamma = Gamma::new(noise.alpha, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
        let draws: Vec<f64> = root.edges.iter().map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 {
            for (e, d) in root.edges.iter_mut().zip(draws) {
                e.prior = (1.0 - noise.fraction) * e.prior + noise.fraction * d / sum;
            }
        }
        Ok(())
    }

    /// Runs playouts until the root's children hold `cfg.n_playouts` visits
    /// in total (or the time cap expires).
    pub fn run<E: Evaluator + ?Sized, R: Rng>(&mut self, evaluator: &E, cfg: &SearchConfig, rng: &mut R) -> Result<()> {
        cfg.validate()?;
        if !self.nodes[self.root].expanded {
            self.expand(self.root, evaluator)?;
        }
        if let Some(noise) = cfg.root_noise {
            self.add_root_noise(noise, rng)?;
        }
        let deadline = cfg.time_cap_secs.map(|s| Instant::now() + Duration::from_secs_f64(s));
        let have = self.root().total_visits();
        let target = cfg.n_playouts as u64;
        let mut path = Vec::new();
        for _ in have..target {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            self.playout(evaluator, cfg.c_puct, &mut path)?;
        }
        Ok(())
    }

    fn playout<E: Evaluator + ?Sized>(&mut self, evaluator: &E, c_puct: f64, path: &mut Vec<(usize, usize)>) -> Result<()> {
        path.clear();
        let mut id = self.root;
        let value = loop {
            if let Some(o) = self.nodes[id].terminal {
                break o.value();
            }
            if !self.nodes[id].expanded {
                break self.expand(id, evaluator)?;
            }
            let k = select_edge(&self.nodes[id], c_puct)?;
            path.push((id, k));
            id = match self.nodes[id].edges[k].child {
                Some(child) => child,
                None => {
                    let action = self.nodes[id].edges[k].action;
                    let next = self.nodes[id].state.step(action)?.state;
                    self.nodes.push(SearchNode::new(next));
                    let child = self.nodes.len() - 1;
                    self.nodes[id].edges[k].child = Some(child);
                    child
                }
            };
        };
        self.backup(path, value);
        Ok(())
    }

    /// `N += 1`, `W += leaf_value` on each traversed edge.
    pub fn backup(&mut self, path: &[(usize, usize)], leaf_value: f64) {
        for &(node, edge) in path {
            let e = &mut self.nodes[node].edges[edge];
            e.visits += 1;
            e.total_value += leaf_value;
        }
    }

    /// Re-roots the tree at the child reached by `action`, keeping its
    /// subtree. Returns false (and leaves the tree alone) when that child
    /// was never created or is terminal.
    pub fn advance(&mut self, action: PivotAction) -> bool {
        let root = &self.nodes[self.root];
        let Some(child) = root.edges.iter().find(|e| e.action == action).and_then(|e| e.child) else {
            return false;
        };
        if self.nodes[child].terminal.is_some() {
            return false;
        }
        self.root = child;
        self.compact();
        true
    }

    /// Drops nodes no longer reachable from the root.
    fn compact(&mut self) {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut order = vec![self.root];
        let mut at = 0;
        while at < order.len() {
            let id = order[at];
            remap[id] = at;
            order.extend(self.nodes[id].edges.iter().filter_map(|e| e.child));
            at += 1;
        }
        let mut old: Vec<Option<SearchNode>> = std::mem::take(&mut self.nodes).into_iter().map(Some).collect();
        self.nodes = order
            .iter()
            .map(|&id| {
                let mut node = old[id].take().expect("tree nodes have one parent");
                for e in &mut node.edges {
                    e.child = e.child.map(|c| remap[c]);
                }
                node
            })
            .collect();
        self.root = 0;
    }
}

/// Fresh search from `root_state`; returns visit counts per flat action.
pub fn search<E: Evaluator + ?Sized, R: Rng>(
    root_state: &GameState<f64>,
    evaluator: &E,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let mut tree = SearchTree::new(root_state.clone())?;
    tree.run(evaluator, cfg, rng)?;
    Ok(tree.root_visits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SymMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dummy_state() -> GameState<f64> {
        let m = SymMatrix::from_rows(&[vec![1.0, 0.3, 0.2], vec![0.3, 2.0, 0.1], vec![0.2, 0.1, 3.0]]).unwrap();
        GameState::new(m, 1e-5, 30).unwrap()
    }

    fn node(edges: &[(f64, u32, f64)]) -> SearchNode {
        SearchNode::with_edges(
            dummy_state(),
            edges
                .iter()
                .enumerate()
                .map(|(k, &(p, n, q))| (PivotAction::from_flat(k, 3).unwrap(), p, n, q * f64::from(n)))
                .collect(),
        )
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_child(&node(&[(0.5, 0, 0.0), (0.5, 0, 0.0)]), 4.0).unwrap().flat, 0);
        assert_eq!(select_child(&node(&[(0.5, 3, 0.2), (0.5, 5, 0.9)]), 0.0).unwrap().flat, 1);
        assert_eq!(select_child(&node(&[(0.5, 10, 1.0), (0.5, 0, 0.0)]), 4.0).unwrap().flat, 1);
        assert_eq!(select_child(&node(&[(0.2, 0, 0.0), (0.5, 0, 0.0), (0.3, 0, 0.0)]), 1.0).unwrap().flat, 1);
        assert!(select_child(&SearchNode::new(dummy_state()), 1.0).is_err());
    }

    #[test]
    fn backup_examples() {
        let mut tree = SearchTree::new(dummy_state()).unwrap();
        tree.expand(0, &UniformEvaluator { value: 0.0 }).unwrap();
        tree.backup(&[(0, 0)], 0.5);
        assert_eq!((tree.root().edges[0].visits, tree.root().edges[0].mean_value()), (1, 0.5));
        tree.backup(&[(0, 1)], 1.0);
        tree.backup(&[(0, 1)], -1.0);
        assert_eq!((tree.root().edges[1].visits, tree.root().edges[1].mean_value()), (2, 0.0));
        for _ in 0..10 {
            tree.backup(&[(0, 2)], 1.0);
        }
        assert_eq!(tree.root().edges[2].mean_value(), 1.0);
    }

    #[test]
    fn policy_examples() {
        assert_eq!(policy_from_visits(&[2, 8], 1.0).unwrap(), vec![0.2, 0.8]);
        assert_eq!(policy_from_visits(&[2, 8], 0.0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(policy_from_visits(&[4, 4], 1.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(policy_from_visits(&[4, 4], 0.0).unwrap(), vec![1.0, 0.0]);
        let sharp = policy_from_visits(&[3, 5], 1e-3).unwrap();
        assert!(sharp[1] > 0.999999 && sharp.iter().all(|p| p.is_finite()));
        assert!(policy_from_visits(&[0, 0], 1.0).is_err());
        assert!(policy_from_visits(&[1], -1.0).is_err());
    }

    #[test]
    fn single_legal_action_takes_all_visits() {
        let m = SymMatrix::from_rows(&[vec![1.0, 0.0, 0.4], vec![0.0, 2.0, 0.0], vec![0.4, 0.0, 3.0]]).unwrap();
        let s = GameState::new(m, 1e-5, 10).unwrap();
        let cfg = SearchConfig { n_playouts: 37, ..Default::default() };
        let counts = search(&s, &UniformEvaluator { value: 0.0 }, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(counts, vec![0, 37, 0]);
    }

    #[test]
    fn terminal_root_rejected() {
        let s = GameState::new(SymMatrix::diagonal(&[1.0, 2.0]), 1e-5, 10).unwrap();
        assert!(matches!(SearchTree::new(s), Err(Error::AlreadyTerminal)));
    }

    #[test]
    fn reuse_tops_up_to_budget() {
        let s = dummy_state();
        let mut tree = SearchTree::new(s).unwrap();
        let cfg = SearchConfig { n_playouts: 60, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eval = UniformEvaluator { value: 0.0 };
        tree.run(&eval, &cfg, &mut rng).unwrap();
        assert_eq!(tree.root().total_visits(), 60);
        let best = tree.root().edges.iter().max_by_key(|e| e.visits).unwrap().action;
        let carried = tree.root().edges.iter().find(|e| e.action == best).unwrap().visits;
        assert!(tree.advance(best));
        assert!(tree.root().total_visits() < u64::from(carried));
        tree.run(&eval, &cfg, &mut rng).unwrap();
        assert_eq!(tree.root().total_visits(), 60);
    }

    #[test]
    fn noise_keeps_priors_normalized() {
        let mut tree = SearchTree::new(dummy_state()).unwrap();
        let cfg = SearchConfig { n_playouts: 5, root_noise: Some(RootNoise::default()), ..Default::default() };
        tree.run(&UniformEvaluator { value: 0.0 }, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let sum: f64 = tree.root().edges.iter().map(|e| e.prior).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(tree.root().edges.iter().any(|e| (e.prior - 1.0 / 3.0).abs() > 1e-6));
    }
}
