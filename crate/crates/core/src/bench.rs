//! Strategy comparison over a dataset, plus the summary statistics used to
//! compare benchmark runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::selfplay::LearnedAgent;
use crate::solvers::{StrategyKind, reference_spectrum, solve};

pub const CSV_HEADER: &str =
    "id,kappa,steps_maxelem,steps_cyclic,steps_learned,savings_pct,converged_me,converged_cy,converged_le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub id: usize,
    /// `max|λ| / min|λ|`; infinite for singular matrices.
    pub kappa: f64,
    pub steps_maxelem: usize,
    pub steps_cyclic: usize,
    pub steps_learned: Option<usize>,
    /// `100 · (maxelem − learned) / maxelem`.
    pub savings_pct: Option<f64>,
    pub converged_me: bool,
    pub converged_cy: bool,
    pub converged_le: Option<bool>,
}

pub fn condition_number(a: &SymMatrix<f64>) -> Result<f64> {
    let ev = reference_spectrum(a)?;
    let max = ev.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

pub fn savings_pct(maxelem: usize, learned: usize) -> Option<f64> {
    (maxelem > 0).then(|| 100.0 * (maxelem as f64 - learned as f64) / maxelem as f64)
}

/// Solves every matrix with MaxElement, Cyclic and (optionally) the agent.
pub fn run_bench(
    matrices: &[SymMatrix<f64>],
    agent: Option<&LearnedAgent>,
    tol: f64,
    max_steps: usize,
) -> Result<Vec<BenchRecord>> {
    matrices
        .par_iter()
        .enumerate()
        .map(|(id, a)| {
            let me = solve(a, StrategyKind::MaxElement, tol, max_steps)?;
            let cy = solve(a, StrategyKind::Cyclic, tol, max_steps)?;
            let le = agent.map(|ag| solve(a, StrategyKind::Learned(ag), tol, max_steps)).transpose()?;
            Ok(BenchRecord {
                id,
                kappa: condition_number(a)?,
                steps_maxelem: me.steps,
                steps_cyclic: cy.steps,
                steps_learned: le.as_ref().map(|p| p.steps),
                savings_pct: le.as_ref().and_then(|p| savings_pct(me.steps, p.steps)),
                converged_me: me.converged,
                converged_cy: cy.converged,
                converged_le: le.as_ref().map(|p| p.converged),
            })
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{:?},{},{},{},{},{},{},{}",
            r.id,
            r.kappa,
            r.steps_maxelem,
            r.steps_cyclic,
            opt(r.steps_learned),
            r.savings_pct.map(|s| format!("{s:?}")).unwrap_or_default(),
            r.converged_me,
            r.converged_cy,
            opt(r.converged_le)
        )
        .unwrap();
    }
    out
}

pub fn parse_records_csv(text: &str, path: &Path) -> Result<Vec<BenchRecord>> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(err(1, "missing benchmark header".into())),
    }
    fn field<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        if s.is_empty() { Ok(None) } else { s.parse().map(Some).map_err(|e| format!("{s:?}: {e}")) }
    }
    fn need<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        field(s)?.ok_or_else(|| "missing required field".to_string())
    }
    let row = |f: &[&str]| -> std::result::Result<BenchRecord, String> {
        if f.len() != 9 {
            return Err(format!("expected 9 fields, found {}", f.len()));
        }
        Ok(BenchRecord {
            id: need(f[0])?,
            kappa: need(f[1])?,
            steps_maxelem: need(f[2])?,
            steps_cyclic: need(f[3])?,
            steps_learned: field(f[4])?,
            savings_pct: field(f[5])?,
            converged_me: need(f[6])?,
            converged_cy: need(f[7])?,
            converged_le: field(f[8])?,
        })
    };
    lines
        .map(|(k, l)| row(&l.split(',').map(str::trim).collect::<Vec<_>>()).map_err(|m| err(k + 1, m)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub count: usize,
    pub mean_steps_maxelem: f64,
    pub mean_steps_cyclic: f64,
    pub mean_steps_learned: Option<f64>,
    pub mean_savings_pct: Option<f64>,
    pub median_savings_pct: Option<f64>,
    /// Share of matrices MaxElement finishes within 20 steps.
    pub frac_maxelem_within_20: f64,
    pub learned_better: usize,
    pub learned_equal: usize,
    pub learned_worse: usize,
    pub converged_rate_me: f64,
    pub converged_rate_cy: f64,
    pub converged_rate_le: Option<f64>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, c) = v.into_iter().fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 { f64::NAN } else { s / c as f64 }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

pub fn summarize(records: &[BenchRecord]) -> Result<BenchSummary> {
    if records.is_empty() {
        return Err(Error::invalid("no benchmark records"));
    }
    let count = records.len();
    let has_learned = records.iter().all(|r| r.steps_learned.is_some());
    let savings: Vec<f64> = records.iter().filter_map(|r| r.savings_pct).collect();
    let cmp = |f: fn(usize, usize) -> bool| {
        records.iter().filter(|r| r.steps_learned.is_some_and(|l| f(l, r.steps_maxelem))).count()
    };
    let rate = |f: fn(&BenchRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / count as f64;
    Ok(BenchSummary {
        count,
        mean_steps_maxelem: mean(records.iter().map(|r| r.steps_maxelem as f64)),
        mean_steps_cyclic: mean(records.iter().map(|r| r.steps_cyclic as f64)),
        mean_steps_learned: has_learned.then(|| mean(records.iter().filter_map(|r| r.steps_learned).map(|s| s as f64))),
        mean_savings_pct: (has_learned && !savings.is_empty()).then(|| mean(savings.iter().copied())),
        median_savings_pct: (has_learned && !savings.is_empty()).then(|| median(savings.clone())),
        frac_maxelem_within_20: rate(|r| r.converged_me && r.steps_maxelem <= 20),
        learned_better: cmp(|l, m| l < m),
        learned_equal: cmp(|l, m| l == m),
        learned_worse: cmp(|l, m| l > m),
        converged_rate_me: rate(|r| r.converged_me),
        converged_rate_cy: rate(|r| r.converged_cy),
        converged_rate_le: has_learned.then(|| rate(|r| r.converged_le == Some(true))),
    })
}

/// `(steps, count)` pairs in ascending step order.
pub fn histogram(steps: impl IntoIterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut h = BTreeMap::new();
    for s in steps {
        *h.entry(s).or_insert(0) += 1;
    }
    h.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    pub histogram: Vec<(usize, usize)>,
}

impl StepStats {
    pub fn from_steps(steps: &[usize]) -> Option<Self> {
        Some(Self {
            mean: mean(steps.iter().map(|&s| s as f64)),
            min: *steps.iter().min()?,
            max: *steps.iter().max()?,
            histogram: histogram(steps.iter().copied()),
        })
    }
}

/// Per-strategy step statistics; `learned` is absent for baseline-only runs.
pub fn strategy_stats(records: &[BenchRecord]) -> Vec<(&'static str, StepStats)> {
    let me: Vec<usize> = records.iter().map(|r| r.steps_maxelem).collect();
    let cy: Vec<usize> = records.iter().map(|r| r.steps_cyclic).collect();
    let le: Vec<usize> = records.iter().filter_map(|r| r.steps_learned).collect();
    [("maxelem", me), ("cyclic", cy), ("learned", le)]
        .into_iter()
        .filter_map(|(name, v)| StepStats::from_steps(&v).map(|s| (name, s)))
        .collect()
}

/// Long-format CSV with one row per `(strategy, steps)` bucket.
pub fn histograms_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from("strategy,steps,count\n");
    let mut emit = |name: &str, h: Vec<(usize, usize)>| {
        for (s, c) in h {
            writeln!(out, "{name},{s},{c}").unwrap();
        }
    };
    emit("maxelem", histogram(records.iter().map(|r| r.steps_maxelem)));
    emit("cyclic", histogram(records.iter().map(|r| r.steps_cyclic)));
    emit("learned", histogram(records.iter().filter_map(|r| r.steps_learned)));
    out
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x.iter().copied()), mean(y.iter().copied()));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        while end + 1 < idx.len() && v[idx[end + 1]] == v[idx[k]] {
            end += 1;
        }
        let avg = 0.5 * (k + end) as f64 + 1.0;
        for &i in &idx[k..=end] {
            r[i] = avg;
        }
        k = end + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

/// One benchmark run tagged with the datasets it was trained and tested on.
#[derive(Debug, Clone)]
pub struct LabeledRun {
    pub train_label: String,
    pub test_label: String,
    pub records: Vec<BenchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub kappa_vs_savings_pearson: Option<f64>,
    pub kappa_vs_savings_spearman: Option<f64>,
    pub maxelem_vs_savings_pearson: Option<f64>,
    pub maxelem_vs_savings_spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub train_labels: Vec<String>,
    pub test_labels: Vec<String>,
    /// `grid[train][test]` mean savings, `None` where no run exists.
    pub grid: Vec<Vec<Option<f64>>>,
    /// Per test column, max minus min of the filled grid cells.
    pub spread: Vec<Option<f64>>,
    pub summaries: Vec<(String, String, BenchSummary)>,
    pub correlations: Correlations,
}

pub fn stats(runs: &[LabeledRun]) -> Result<StatsReport> {
    if runs.is_empty() {
        return Err(Error::invalid("no benchmark runs given"));
    }
    let mut train_labels: Vec<String> = runs.iter().map(|r| r.train_label.clone()).collect();
    let mut test_labels: Vec<String> = runs.iter().map(|r| r.test_label.clone()).collect();
    train_labels.sort();
    train_labels.dedup();
    test_labels.sort();
    test_labels.dedup();
    for (k, a) in runs.iter().enumerate() {
        for b in &runs[..k] {
            if a.test_label == b.test_label && !same_dataset(&a.records, &b.records) {
                return Err(Error::BadRecord {
                    record: k,
                    msg: format!("runs tested on '{}' disagree on matrix ids or MaxElement steps", a.test_label),
                });
            }
        }
    }
    let mut grid = vec![vec![None; test_labels.len()]; train_labels.len()];
    let mut summaries = Vec::new();
    let (mut kappa, mut me, mut sav) = (Vec::new(), Vec::new(), Vec::new());
    for run in runs {
        let s = summarize(&run.records)?;
        let r = train_labels.binary_search(&run.train_label).unwrap();
        let c = test_labels.binary_search(&run.test_label).unwrap();
        grid[r][c] = s.mean_savings_pct;
        summaries.push((run.train_label.clone(), run.test_label.clone(), s));
        for rec in &run.records {
            if let Some(x) = rec.savings_pct {
                if rec.kappa.is_finite() {
                    kappa.push(rec.kappa);
                    me.push(rec.steps_maxelem as f64);
                    sav.push(x);
                }
            }
        }
    }
    let correlations = Correlations {
        kappa_vs_savings_pearson: pearson(&kappa, &sav),
        kappa_vs_savings_spearman: spearman(&kappa, &sav),
        maxelem_vs_savings_pearson: pearson(&me, &sav),
        maxelem_vs_savings_spearman: spearman(&me, &sav),
    };
    let spread = (0..test_labels.len())
        .map(|c| {
            let col: Vec<f64> = grid.iter().filter_map(|row| row[c]).collect();
            let lo = col.iter().copied().reduce(f64::min)?;
            let hi = col.iter().copied().reduce(f64::max)?;
            Some(hi - lo)
        })
        .collect();
    Ok(StatsReport { train_labels, test_labels, grid, spread, summaries, correlations })
}

fn same_dataset(a: &[BenchRecord], b: &[BenchRecord]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.id == y.id && x.steps_maxelem == y.steps_maxelem)
}

impl StatsReport {
    /// Plain-text grid and comparison table.
    pub fn render(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:8.2}")).unwrap_or_else(|| format!("{:>8}", "-"));
        let mut out = String::from("mean savings % (rows: trained on, columns: tested on)\n");
        write!(out, "{:>12}", "").unwrap();
        for t in &self.test_labels {
            write!(out, " {t:>8}").unwrap();
        }
        out.push('\n');
        for (r, label) in self.train_labels.iter().enumerate() {
            write!(out, "{label:>12}").unwrap();
            for v in &self.grid[r] {
                write!(out, " {}", cell(*v)).unwrap();
            }
            out.push('\n');
        }
        write!(out, "{:>12}", "spread").unwrap();
        for v in &self.spread {
            write!(out, " {}", cell(*v)).unwrap();
        }
        out.push('\n');
        out.push_str("\ntrain        test         count  maxelem   cyclic  learned  savings%\n");
        for (tr, te, s) in &self.summaries {
            writeln!(
                out,
                "{tr:<12} {te:<12} {:>5} {:>8.2} {:>8.2} {} {}",
                s.count,
                s.mean_steps_maxelem,
                s.mean_steps_cyclic,
                cell(s.mean_steps_learned),
                cell(s.mean_savings_pct)
            )
            .unwrap();
        }
        let c = &self.correlations;
        writeln!(
            out,
            "\nkappa vs savings: pearson {} spearman {}\nmaxelem steps vs savings: pearson {} spearman {}",
            cell(c.kappa_vs_savings_pearson),
            cell(c.kappa_vs_savings_spearman),
            cell(c.maxelem_vs_savings_pearson),
            cell(c.maxelem_vs_savings_spearman)
        )
        .unwrap();
        out
    }
}
