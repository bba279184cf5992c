//! Correlated matrix datasets and their CSV representation.
//!
//! A trajectory starts from `A = Qᵀ diag(λ) Q`, with `Q` a product of a few
//! Givens rotations in random planes, and then drifts: each step moves the
//! generator parameters `(λ, θ)` along a random direction just far enough
//! that the matrix changes by `ε` in Frobenius norm. Consecutive matrices
//! are therefore close while every matrix keeps the sparse rotational
//! structure of the generator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, GivensCoeffs, SymMatrix, accumulate_in_place};

/// Largest `|a_ij − a_ji|` accepted on import.
pub const ASYMMETRY_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    pub n: usize,
    /// Matrices kept per trajectory.
    pub count: usize,
    pub trajectories: usize,
    /// Rotations in the generator; `None` means `n - 1`.
    pub mixing_rotations: Option<usize>,
    /// Step length relative to `‖A₀‖_F / √steps`.
    pub eps: f64,
    /// Walk steps between kept matrices.
    pub stride: usize,
    /// Eigenvalues start uniform in `[-spread, spread]`.
    pub spread: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { n: 5, count: 1000, trajectories: 1, mixing_rotations: None, eps: 1.0, stride: 1, spread: 10.0 }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("matrix order must be >= 2"));
        }
        if self.count == 0 || self.trajectories == 0 || self.stride == 0 {
            return Err(Error::invalid("count, trajectories and stride must be >= 1"));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) || !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::invalid("eps must be >= 0 and spread > 0"));
        }
        Ok(())
    }

    fn rotations(&self) -> usize {
        self.mixing_rotations.unwrap_or(self.n - 1)
    }
}

struct Generator {
    n: usize,
    planes: Vec<(usize, usize)>,
}

impl Generator {
    fn build(&self, params: &[f64]) -> SymMatrix<f64> {
        let (lambda, theta) = params.split_at(self.n);
        let mut q = DenseMatrix::identity(self.n);
        for (&(i, j), &th) in self.planes.iter().zip(theta) {
            let g = GivensCoeffs { i, j, c: th.cos(), s: th.sin() };
            accumulate_in_place(&mut q, &g).expect("planes are valid");
        }
        // Qᵀ diag(λ) Q, evaluated on the upper triangle so the result is
        // exactly symmetric
        SymMatrix::from_upper_fn(self.n, |r, c| {
            (0..self.n).map(|k| q.get(k, r) * lambda[k] * q.get(k, c)).sum()
        })
        .expect("generator output is finite")
    }
}

fn frob_distance(a: &SymMatrix<f64>, b: &SymMatrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One trajectory of `cfg.count` matrices.
pub fn generate_trajectory<R: Rng>(cfg: &TrajectoryConfig, rng: &mut R) -> Result<Vec<SymMatrix<f64>>> {
    cfg.validate()?;
    let n = cfg.n;
    let k = cfg.rotations();
    let planes: Vec<(usize, usize)> = (0..k)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            (i.min(j), i.max(j))
        })
        .collect();
    let gen = Generator { n, planes };
    let quarter = std::f64::consts::FRAC_PI_4;
    let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-cfg.spread..=cfg.spread)).collect();
    p.extend((0..k).map(|_| rng.random_range(-quarter..=quarter)));

    let mut a = gen.build(&p);
    let steps = (cfg.count - 1) * cfg.stride;
    let eps = cfg.eps * a.frobenius_norm() / (steps.max(1) as f64).sqrt();
    let mut out = Vec::with_capacity(cfg.count);
    out.push(a.clone());
    for t in 1..=steps {
        let dir: Vec<f64> = (0..p.len()).map(|_| rng.sample(StandardNormal)).collect();
        let moved = |h: f64| -> Vec<f64> { p.iter().zip(&dir).map(|(x, d)| x + h * d).collect() };
        let gap = |h: f64| frob_distance(&gen.build(&moved(h)), &a);
        if eps > 0.0 {
            let (mut lo, mut hi) = (0.0, 1e-3);
            while gap(hi) < eps && hi < 1e6 {
                hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if gap(mid) < eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            p = moved(hi);
            a = gen.build(&p);
        }
        if t % cfg.stride == 0 {
            out.push(a.clone());
        }
    }
    Ok(out)
}

/// Provenance recorded at the top of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    pub seed: u64,
    pub config: TrajectoryConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Option<DatasetManifest>,
    pub matrices: Vec<SymMatrix<f64>>,
}

/// Concatenated trajectories; trajectory `t` uses its own RNG stream.
pub fn generate_dataset(cfg: &TrajectoryConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut matrices = Vec::with_capacity(cfg.count * cfg.trajectories);
    for t in 0..cfg.trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
        matrices.extend(generate_trajectory(cfg, &mut rng)?);
    }
    Ok(Dataset {
        manifest: Some(DatasetManifest { generator: "givens-walk".into(), seed, config: cfg.clone() }),
        matrices,
    })
}

/// Seeded shuffle split; returns `(train, test)` index lists, each sorted.
pub fn split_indices(len: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid("train fraction must lie in [0, 1]"));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (train_fraction * len as f64).round() as usize;
    let (mut train, mut test) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn select(matrices: &[SymMatrix<f64>], idx: &[usize]) -> Vec<SymMatrix<f64>> {
    idx.iter().map(|&k| matrices[k].clone()).collect()
}

/// SHA-256 over orders and entry bits, hex encoded.
pub fn dataset_digest(matrices: &[SymMatrix<f64>]) -> String {
    let mut h = Sha256::new();
    for m in matrices {
        h.update((m.order() as u64).to_le_bytes());
        for v in m.as_slice() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// CSV text: `#`-prefixed TOML manifest lines, a header, then one row per
/// matrix in row-major order.
pub fn to_csv(data: &Dataset) -> Result<String> {
    let mut out = String::new();
    if let Some(m) = &data.manifest {
        let toml = toml::to_string(m).map_err(|e| Error::Serialize(e.to_string()))?;
        for line in toml.lines() {
            writeln!(out, "# {line}").unwrap();
        }
    }
    let n = data.matrices.first().map_or(0, |m| m.order());
    out.push_str("id,n");
    for i in 0..n {
        for j in 0..n {
            write!(out, ",v{i}{j}").unwrap();
        }
    }
    out.push('\n');
    for (id, m) in data.matrices.iter().enumerate() {
        write!(out, "{id},{}", m.order()).unwrap();
        for v in m.as_slice() {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_csv(data)?).map_err(|e| Error::io(path, e))
}

/// Parses dataset CSV. Entry pairs differing by more than
/// [`ASYMMETRY_LIMIT`] are rejected; smaller differences are averaged when
/// `symmetrize` is set and rejected otherwise.
pub fn parse_csv(text: &str, path: &Path, symmetrize: bool) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut manifest_text = String::new();
    let mut matrices = Vec::new();
    let mut seen_header = false;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            manifest_text.push_str(rest.strip_prefix(' ').unwrap_or(rest));
            manifest_text.push('\n');
            continue;
        }
        if !seen_header && line.starts_with("id") {
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(err(line_no, "expected id,n,values...".into()));
        }
        let n: usize = fields[1].parse().map_err(|e| err(line_no, format!("bad order {:?}: {e}", fields[1])))?;
        if fields.len() != 2 + n * n {
            return Err(err(line_no, format!("expected {} values for order {n}, found {}", n * n, fields.len() - 2)));
        }
        let mut values = Vec::with_capacity(n * n);
        for f in &fields[2..] {
            values.push(f.parse::<f64>().map_err(|e| err(line_no, format!("bad number {f:?}: {e}")))?);
        }
        let record = matrices.len();
        let bad = |msg: String| Error::BadRecord { record, msg };
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(bad(format!("entry ({}, {}) is not finite", pos / n, pos % n)));
        }
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                let dev = (a - b).abs();
                if dev > ASYMMETRY_LIMIT || (dev > 0.0 && !symmetrize) {
                    return Err(bad(format!("asymmetric at ({i}, {j}): deviation {dev:e}")));
                }
                let mean = 0.5 * (a + b);
                values[i * n + j] = mean;
                values[j * n + i] = mean;
            }
        }
        matrices.push(SymMatrix::from_row_major(n, values).map_err(|e| bad(e.to_string()))?);
    }
    let manifest = if manifest_text.trim().is_empty() {
        None
    } else {
        Some(toml::from_str(&manifest_text).map_err(|e| err(1, format!("manifest: {e}")))?)
    };
    Ok(Dataset { manifest, matrices })
}

pub fn read_csv(path: &Path, symmetrize: bool) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path, symmetrize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::reference_spectrum;

    fn small() -> TrajectoryConfig {
        TrajectoryConfig { n: 4, count: 20, ..Default::default() }
    }

    #[test]
    fn consecutive_steps_have_length_eps() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traj = generate_trajectory(&cfg, &mut rng).unwrap();
        assert_eq!(traj.len(), 20);
        let eps = cfg.eps * traj[0].frobenius_norm() / 19f64.sqrt();
        for w in traj.windows(2) {
            assert!((frob_distance(&w[0], &w[1]) - eps).abs() < 1e-9 * eps.max(1.0));
        }
    }

    #[test]
    fn spectrum_follows_parameters() {
        // the generator is an orthogonal similarity: trace equals Σλ
        let cfg = TrajectoryConfig { count: 1, ..small() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = &generate_trajectory(&cfg, &mut rng).unwrap()[0];
        let ev = reference_spectrum(a).unwrap();
        assert!((ev.iter().sum::<f64>() - a.trace()).abs() < 1e-9);
        assert!(ev.iter().all(|l| l.abs() <= cfg.spread + 1e-9));
    }

    #[test]
    fn stride_and_zero_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let still = generate_trajectory(&TrajectoryConfig { eps: 0.0, count: 3, ..small() }, &mut rng).unwrap();
        assert_eq!(still[0], still[2]);
        let strided = generate_trajectory(&TrajectoryConfig { stride: 3, count: 4, ..small() }, &mut rng).unwrap();
        assert_eq!(strided.len(), 4);
    }

    #[test]
    fn dataset_is_reproducible() {
        let a = generate_dataset(&small(), 42).unwrap();
        let b = generate_dataset(&small(), 42).unwrap();
        let c = generate_dataset(&small(), 43).unwrap();
        assert_eq!(dataset_digest(&a.matrices), dataset_digest(&b.matrices));
        assert_ne!(dataset_digest(&a.matrices), dataset_digest(&c.matrices));
    }

    #[test]
    fn csv_round_trip() {
        let data = generate_dataset(&small(), 3).unwrap();
        let text = to_csv(&data).unwrap();
        let back = parse_csv(&text, Path::new("mem.csv"), false).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let p = Path::new("x.csv");
        let ok = "id,n,v00,v01,v10,v11\n0,2,1.0,0.5,0.5,2.0\n";
        assert_eq!(parse_csv(ok, p, false).unwrap().matrices.len(), 1);
        let slightly = "0,2,1.0,0.5,0.5000001,2.0\n";
        assert!(matches!(parse_csv(slightly, p, false), Err(Error::BadRecord { .. })));
        let fixed = parse_csv(slightly, p, true).unwrap();
        assert_eq!(fixed.matrices[0].get(0, 1), fixed.matrices[0].get(1, 0));
        assert!(matches!(parse_csv("0,2,1.0,0.5,0.6,2.0\n", p, true), Err(Error::BadRecord { .. })));
        assert!(matches!(parse_csv("0,2,1.0,NaN,NaN,2.0\n", p, true), Err(Error::BadRecord { .. })));
        assert!(matches!(parse_csv("0,2,1.0,0.5\n", p, true), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_csv("0,2,1.0,x,0.5,2.0\n", p, true), Err(Error::Parse { .. })));
    }

    #[test]
    fn split_partitions() {
        let (tr, te) = split_indices(10, 0.7, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.7, 1).unwrap(), (tr, te));
        assert!(split_indices(10, 1.5, 1).is_err());
    }
}
