//! Ensemble driver: runs many independent walks, bins their exit parameters,
//! and persists the resulting counts.
//!
//! Reproducibility contract: every walk draws from its own stream seeded by
//! (master seed, walk index), and partial histograms merge by integer
//! addition, so results are bit-identical for any worker count and any
//! scheduling order.

use crate::geometry::Domain;
use crate::transition::TransitionTable;
use crate::walker::{run_walk_with, WalkError, WalkerScratch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("{count} walk(s) aborted; first: {first}")]
    WalkAborts { count: u64, first: String },
    #[error("accumulator mismatch: {0}")]
    Mismatch(String),
    #[error("accumulator holds no exits")]
    Empty,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("{path}: not a valid accumulator file: {reason}")]
    BadFile { path: String, reason: String },
}

/// Complete specification of one ensemble run. Everything except `n_workers`
/// determines the result; `n_workers` only chooses how it is computed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub domain: Domain,
    pub table: TransitionTable,
    pub delta: f64,
    pub n_samples: u64,
    pub n_bins: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub n_workers: usize,
}

#[derive(Serialize)]
struct ContentKey<'a> {
    domain: &'a Domain,
    table: &'a TransitionTable,
    delta: f64,
    n_samples: u64,
    n_bins: usize,
    master_seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.domain
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        self.table
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(EngineError::InvalidConfig(format!(
                "spacing must be positive and finite, got {}",
                self.delta
            )));
        }
        // The 3x3 block around the origin must stay inside the domain for
        // every rotation of the embedding.
        let depth = self
            .domain
            .interior_depth(crate::geometry::Point::new(0.0, 0.0));
        if depth <= std::f64::consts::SQRT_2 * self.delta {
            return Err(EngineError::InvalidConfig(format!(
                "spacing {} too coarse: origin sits {} from the boundary, need more than sqrt(2) spacings",
                self.delta, depth
            )));
        }
        if self.n_samples == 0 {
            return Err(EngineError::InvalidConfig("n_samples must be positive".into()));
        }
        if self.n_bins < 2 || self.n_bins > 1_000_000 {
            return Err(EngineError::InvalidConfig(format!(
                "n_bins must be in [2, 1000000], got {}",
                self.n_bins
            )));
        }
        Ok(())
    }

    /// Hash of everything that determines the result (not `n_workers`).
    /// Stable across processes; used to name and deduplicate run files.
    pub fn content_hash(&self) -> String {
        let key = ContentKey {
            domain: &self.domain,
            table: &self.table,
            delta: self.delta,
            n_samples: self.n_samples,
            n_bins: self.n_bins,
            master_seed: self.master_seed,
        };
        let bytes = serde_json::to_vec(&key).expect("content key serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// 32-byte stream seed for walk `index` under `master`. Distinct indices give
/// unrelated streams, so walks are independent and individually replayable.
pub fn derive_walk_seed(master: u64, index: u64) -> [u8; 32] {
    let mut state = master ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    let mut seed = [0u8; 32];
    for k in 0..4 {
        seed[k * 8..(k + 1) * 8].copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

pub fn walk_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_walk_seed(master, index))
}

/// Histogram of exit parameters over a uniform binning of [0, 2*pi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfAccumulator {
    pub n_bins: usize,
    pub bin_counts: Vec<u64>,
    pub total: u64,
    pub aborted: u64,
}

impl EcdfAccumulator {
    pub fn new(n_bins: usize) -> Self {
        EcdfAccumulator {
            n_bins,
            bin_counts: vec![0; n_bins],
            total: 0,
            aborted: 0,
        }
    }

    /// Record one exit at parameter `theta` in [0, 2*pi]. The closed upper
    /// endpoint lands in the last bin.
    pub fn record(&mut self, theta: f64) {
        assert!(
            theta.is_finite() && (0.0..=TAU).contains(&theta),
            "exit parameter {theta} out of range"
        );
        let bin = ((theta / TAU * self.n_bins as f64) as usize).min(self.n_bins - 1);
        self.bin_counts[bin] += 1;
        self.total += 1;
    }

    pub fn record_abort(&mut self) {
        self.total += 1;
        self.aborted += 1;
    }

    /// Successful exits, the ECDF denominator.
    pub fn exits(&self) -> u64 {
        self.total - self.aborted
    }

    pub fn merge(&mut self, other: &EcdfAccumulator) -> Result<(), EngineError> {
        if self.n_bins != other.n_bins {
            return Err(EngineError::Mismatch(format!(
                "cannot merge {} bins into {}",
                other.n_bins, self.n_bins
            )));
        }
        for (a, b) in self.bin_counts.iter_mut().zip(&other.bin_counts) {
            *a += b;
        }
        self.total += other.total;
        self.aborted += other.aborted;
        Ok(())
    }

    /// Bin edges including both endpoints: n_bins + 1 values from 0 to 2*pi.
    pub fn bin_edges(n_bins: usize) -> Vec<f64> {
        (0..=n_bins)
            .map(|k| {
                if k == n_bins {
                    TAU
                } else {
                    TAU * k as f64 / n_bins as f64
                }
            })
            .collect()
    }

    /// Empirical CDF evaluated at the given parameters. Exact at bin edges;
    /// between edges the value of the edge below is used (the ECDF is a step
    /// function known only at bin resolution).
    pub fn ecdf(&self, thetas: &[f64]) -> Result<Vec<f64>, EngineError> {
        let exits = self.exits();
        if exits == 0 {
            return Err(EngineError::Empty);
        }
        let mut cum = Vec::with_capacity(self.n_bins + 1);
        cum.push(0u64);
        let mut run = 0u64;
        for &c in &self.bin_counts {
            run += c;
            cum.push(run);
        }
        let w = TAU / self.n_bins as f64;
        Ok(thetas
            .iter()
            .map(|&t| {
                // The nudge keeps edge values exact against rounding in t/w.
                let j = ((t / w + 1e-9).floor().max(0.0) as usize).min(self.n_bins);
                cum[j] as f64 / exits as f64
            })
            .collect())
    }
}

fn with_pool<T: Send>(n_workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, EngineError> {
    if n_workers == 0 {
        Ok(f())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n_workers)
            .build()
            .map_err(|e| EngineError::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

const CHUNK: u64 = 1024;

/// Shared ensemble scaffolding: walk indices are chunked, each chunk runs on
/// scratch of its own and folds into a local histogram, and chunk histograms
/// merge by addition.
fn run_ensemble<F>(cfg: &RunConfig, walk: F) -> Result<EcdfAccumulator, EngineError>
where
    F: Fn(&mut ChaCha8Rng, &mut WalkerScratch) -> Result<f64, WalkError> + Sync,
{
    cfg.validate()?;
    let n_chunks = cfg.n_samples.div_ceil(CHUNK);
    let (acc, first_err) = with_pool(cfg.n_workers, || {
        (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut scratch = WalkerScratch::default();
                let mut acc = EcdfAccumulator::new(cfg.n_bins);
                let mut first_err: Option<(u64, String)> = None;
                let lo = chunk * CHUNK;
                let hi = (lo + CHUNK).min(cfg.n_samples);
                for index in lo..hi {
                    let mut rng = walk_rng(cfg.master_seed, index);
                    match walk(&mut rng, &mut scratch) {
                        Ok(theta) => acc.record(theta),
                        Err(e) => {
                            acc.record_abort();
                            if first_err.is_none() {
                                first_err = Some((index, format!("walk {index}: {e}")));
                            }
                        }
                    }
                }
                (acc, first_err)
            })
            .reduce(
                || (EcdfAccumulator::new(cfg.n_bins), None),
                |(mut a, ea), (b, eb)| {
                    a.merge(&b).expect("uniform bin counts within one run");
                    let e = match (ea, eb) {
                        (Some(x), Some(y)) => Some(if x.0 <= y.0 { x } else { y }),
                        (x, y) => x.or(y),
                    };
                    (a, e)
                },
            )
    })?;
    if acc.aborted > 0 {
        return Err(EngineError::WalkAborts {
            count: acc.aborted,
            first: first_err.map(|(_, m)| m).unwrap_or_default(),
        });
    }
    Ok(acc)
}

/// Run the full ensemble of smart kinetic walks described by `cfg`.
pub fn run_experiment(cfg: &RunConfig) -> Result<EcdfAccumulator, EngineError> {
    let domain = cfg.domain;
    let table = cfg.table;
    let delta = cfg.delta;
    run_ensemble(cfg, move |rng, scratch| {
        run_walk_with(scratch, &domain, &table, delta, rng, false)
            .map(|rec| rec.theta)
    })
}

/// Reference ensemble: plain random walks (no self-avoidance, no trap rule)
/// through the same rotation, embedding, and exit pipeline. Their exit law
/// converges to harmonic measure, which makes them an end-to-end oracle for
/// everything downstream of the walk rule.
pub fn run_oracle_experiment(cfg: &RunConfig) -> Result<EcdfAccumulator, EngineError> {
    let domain = cfg.domain;
    let delta = cfg.delta;
    run_ensemble(cfg, move |rng, _scratch| {
        let alpha = crate::geometry::sample_rotation(rng.gen::<f64>());
        let embedding = crate::geometry::LatticeEmbedding::new(delta, alpha)
            .map_err(WalkError::Projection)?;
        let frame = crate::walker::Frame::new(domain, embedding);
        let mut site = crate::geometry::Site::ORIGIN;
        loop {
            let k = ((rng.gen::<f64>() * 4.0) as usize).min(3);
            let (di, dj) = [(1, 0), (0, 1), (-1, 0), (0, -1)][k];
            site = site.offset(di, dj);
            if !frame.contains_site(site) {
                let p = frame.to_plane(site);
                let (_, theta) = crate::geometry::project(&domain, p)?;
                return Ok(theta);
            }
        }
    })
}

/// Which walk rule produced an accumulator file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Skw,
    PlainWalk,
}

impl RunKind {
    fn file_prefix(self) -> &'static str {
        match self {
            RunKind::Skw => "acc",
            RunKind::PlainWalk => "oracle",
        }
    }
}

pub const ACCUMULATOR_FORMAT: &str = "skw-accumulator-v1";

/// On-disk record of one completed run: the full configuration, provenance,
/// and the histogram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccumulatorFile {
    pub format: String,
    pub kind: RunKind,
    pub config: RunConfig,
    pub code_version: String,
    pub wall_time_s: f64,
    pub content_hash: String,
    pub total: u64,
    pub aborted: u64,
    pub bin_counts: Vec<u64>,
}

impl AccumulatorFile {
    pub fn new(kind: RunKind, config: RunConfig, acc: &EcdfAccumulator, wall_time_s: f64) -> Self {
        let content_hash = config.content_hash();
        AccumulatorFile {
            format: ACCUMULATOR_FORMAT.to_string(),
            kind,
            config,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s,
            content_hash,
            total: acc.total,
            aborted: acc.aborted,
            bin_counts: acc.bin_counts.clone(),
        }
    }

    pub fn accumulator(&self) -> EcdfAccumulator {
        EcdfAccumulator {
            n_bins: self.config.n_bins,
            bin_counts: self.bin_counts.clone(),
            total: self.total,
            aborted: self.aborted,
        }
    }

    /// File name this run is stored under: a kind prefix and the first 16 hex
    /// digits of the content hash.
    pub fn file_name(kind: RunKind, config: &RunConfig) -> String {
        format!("{}_{}.json", kind.file_prefix(), &config.content_hash()[..16])
    }

    /// Write atomically: a temporary file in the target directory, then a
    /// rename, so a crash never leaves a truncated file under the final name.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, EngineError> {
        std::fs::create_dir_all(dir)?;
        let final_path = dir.join(Self::file_name(self.kind, &self.config));
        let tmp_path = final_path.with_extension("json.tmp");
        let bytes = serde_json::to_vec_pretty(self)?;
        std::fs::write(&tmp_path, bytes)?;
        std::fs::rename(&tmp_path, &final_path)?;
        Ok(final_path)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let bad = |reason: String| EngineError::BadFile {
            path: path.display().to_string(),
            reason,
        };
        let bytes = std::fs::read(path)?;
        let file: AccumulatorFile =
            serde_json::from_slice(&bytes).map_err(|e| bad(e.to_string()))?;
        if file.format != ACCUMULATOR_FORMAT {
            return Err(bad(format!("format {:?}", file.format)));
        }
        file.config.validate().map_err(|e| bad(e.to_string()))?;
        if file.bin_counts.len() != file.config.n_bins {
            return Err(bad(format!(
                "{} bin counts for {} bins",
                file.bin_counts.len(),
                file.config.n_bins
            )));
        }
        if file.bin_counts.iter().sum::<u64>() != file.total - file.aborted {
            return Err(bad("bin counts do not sum to recorded exits".into()));
        }
        if file.content_hash != file.config.content_hash() {
            return Err(bad("content hash does not match configuration".into()));
        }
        Ok(file)
    }
}
