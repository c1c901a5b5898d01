//! Sample evaluation: QoR results, flow backends, and the evaluation cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::splitmix_finish;
use crate::space::{ParameterSpace, Sample, Violation};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid sample: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSample(Vec<Violation>),
    #[error("flow command exited with status {status}: {stderr}")]
    NonzeroExit { status: String, stderr: String },
    #[error("cannot run flow command: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("report {path}: {message}")]
    ReportParse { path: String, message: String },
    #[error("invalid QoR: {0}")]
    InvalidQor(String),
    #[error("encoded sample coordinate {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("similarity alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QorResult {
    pub power_mw: f64,
    pub area: f64,
    /// Total negative slack in ns, never positive.
    pub tns_ns: f64,
    pub drc_violations: u64,
    pub flow_seconds: f64,
}

impl QorResult {
    pub fn validate(&self) -> Result<(), EvalError> {
        let finite = [self.power_mw, self.area, self.tns_ns, self.flow_seconds]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(EvalError::InvalidQor("non-finite field".into()));
        }
        if self.power_mw < 0.0 || self.area < 0.0 || self.flow_seconds < 0.0 {
            return Err(EvalError::InvalidQor("negative power, area, or runtime".into()));
        }
        if self.tns_ns > 0.0 {
            return Err(EvalError::InvalidQor(format!("tns_ns {} > 0", self.tns_ns)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Power,
    Area,
    Tns,
    Drc,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Power => "power",
            Metric::Area => "area",
            Metric::Tns => "tns",
            Metric::Drc => "drc",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::Power => "mW",
            Metric::Area => "area units",
            Metric::Tns => "ns of negative slack",
            Metric::Drc => "violations",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power" => Ok(Metric::Power),
            "area" => Ok(Metric::Area),
            "tns" => Ok(Metric::Tns),
            "drc" => Ok(Metric::Drc),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Scalar to minimize; slack is negated so smaller is better.
pub fn objective(result: &QorResult, metric: Metric) -> f64 {
    match metric {
        Metric::Power => result.power_mw,
        Metric::Area => result.area,
        Metric::Tns => -result.tns_ns,
        Metric::Drc => result.drc_violations as f64,
    }
}

/// SplitMix64 stream; the fixed generator behind synthetic designs.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        splitmix_finish(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub coefficient: f64,
}

/// Seeded stand-in for a real design's power landscape.
///
/// `power(u) = base · (1 + Σ w_i (u_i − t_i)² / c + Σ γ u_i u_j / c)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub seed: u64,
    pub weights: Vec<f64>,
    pub targets: Vec<f64>,
    pub pair_terms: Vec<PairTerm>,
    pub base_power: f64,
}

const AREA_PER_MW: f64 = 0.8;
const AREA_JITTER: f64 = 0.005;
const DRC_PER_MW: f64 = 0.3;
const TNS_SPAN_NS: f64 = 5.0;

impl SyntheticDesign {
    pub fn generate(seed: u64, params: usize, pairs: usize) -> Self {
        let mut g = SplitMix64::new(seed);
        let base_power = 80.0 + 80.0 * g.next_f64();
        let weights = (0..params).map(|_| g.next_f64()).collect();
        let targets = (0..params).map(|_| g.next_f64()).collect();
        let mut pair_terms = Vec::with_capacity(pairs);
        if params >= 2 {
            for _ in 0..pairs {
                let i = (g.next_u64() % params as u64) as usize;
                let mut j = (g.next_u64() % params as u64) as usize;
                if j == i {
                    j = (i + 1) % params;
                }
                let coefficient = (2.0 * g.next_f64() - 1.0) * 0.5;
                pair_terms.push(PairTerm { i, j, coefficient });
            }
        }
        SyntheticDesign {
            seed,
            weights,
            targets,
            pair_terms,
            base_power,
        }
    }

    pub fn params(&self) -> usize {
        self.weights.len()
    }

    pub fn power(&self, u: &[f64]) -> Result<f64, EvalError> {
        if let Some(&bad) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(EvalError::OutOfRange(bad));
        }
        let c = self.params().max(1) as f64;
        let quad: f64 = self
            .weights
            .iter()
            .zip(&self.targets)
            .zip(u)
            .map(|((w, t), x)| w * (x - t) * (x - t))
            .sum();
        let pair: f64 = self
            .pair_terms
            .iter()
            .map(|p| p.coefficient * u[p.i] * u[p.j])
            .sum();
        Ok(self.base_power * (1.0 + quad / c + pair / c))
    }

    /// Blends weights and targets with a fresh design from `new_seed`.
    pub fn derive_similar(&self, alpha: f64, new_seed: u64) -> Result<Self, EvalError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(EvalError::AlphaOutOfRange(alpha));
        }
        let fresh = Self::generate(new_seed, self.params(), self.pair_terms.len());
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect()
        };
        let pair_terms = self
            .pair_terms
            .iter()
            .map(|p| PairTerm {
                coefficient: alpha * p.coefficient,
                ..*p
            })
            .chain(fresh.pair_terms.iter().map(|p| PairTerm {
                coefficient: (1.0 - alpha) * p.coefficient,
                ..*p
            }))
            .filter(|p| p.coefficient != 0.0)
            .collect();
        Ok(SyntheticDesign {
            seed: new_seed,
            weights: mix(&self.weights, &fresh.weights),
            targets: mix(&self.targets, &fresh.targets),
            pair_terms,
            base_power: fresh.base_power,
        })
    }

    /// Per-parameter grid point closest to the target.
    pub fn nearest_grid_sample(&self, option_counts: &[usize]) -> Sample {
        Sample::new(
            option_counts
                .iter()
                .zip(&self.targets)
                .map(|(&n, &t)| {
                    if n <= 1 {
                        0
                    } else {
                        let step = (n - 1) as f64;
                        ((t * step).round() as usize).min(n - 1)
                    }
                })
                .collect(),
        )
    }

    /// Power of the separable part at the nearest grid point; pair terms
    /// excluded. Used as the zero-violation floor.
    pub fn grid_floor_power(&self, option_counts: &[usize]) -> f64 {
        let s = self.nearest_grid_sample(option_counts);
        let c = self.params().max(1) as f64;
        let quad: f64 = option_counts
            .iter()
            .zip(s.indices())
            .zip(self.weights.iter().zip(&self.targets))
            .map(|((&n, &i), (w, t))| {
                let u = if n <= 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                w * (u - t) * (u - t)
            })
            .sum();
        self.base_power * (1.0 + quad / c)
    }

    fn sample_noise(&self, indices: &[usize], channel: u64) -> f64 {
        let mut h = splitmix_finish(self.seed ^ channel.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for &i in indices {
            h = splitmix_finish(h ^ (i as u64).wrapping_add(0x632b_e59b_d9b4_e019));
        }
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `(area, tns_ns, drc)` for a sample with the given power.
    pub fn secondary_metrics(&self, indices: &[usize], power: f64, floor_power: f64) -> (f64, f64, u64) {
        let jitter = 2.0 * self.sample_noise(indices, 1) - 1.0;
        let area = AREA_PER_MW * power + AREA_PER_MW * self.base_power * AREA_JITTER * jitter;
        let tns = -TNS_SPAN_NS * self.sample_noise(indices, 2);
        let drc = (DRC_PER_MW * (power - floor_power)).round().max(0.0) as u64;
        (area.max(0.0), tns, drc)
    }

    pub fn evaluate(&self, space: &ParameterSpace, sample: &Sample) -> Result<QorResult, EvalError> {
        space.validate(sample).map_err(EvalError::InvalidSample)?;
        let u = space.encode_ordinal(sample);
        let power = self.power(&u)?;
        let floor = self.grid_floor_power(&space.option_counts());
        let (area, tns_ns, drc_violations) = self.secondary_metrics(sample.indices(), power, floor);
        Ok(QorResult {
            power_mw: power,
            area,
            tns_ns,
            drc_violations,
            flow_seconds: 0.0,
        })
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.base_power.to_le_bytes());
        for v in self.weights.iter().chain(&self.targets) {
            h.update(v.to_le_bytes());
        }
        for p in &self.pair_terms {
            h.update((p.i as u64).to_le_bytes());
            h.update((p.j as u64).to_le_bytes());
            h.update(p.coefficient.to_le_bytes());
        }
        format!("synthetic:{}", hex::encode(&h.finalize()[..8]))
    }
}

pub trait FlowBackend: Send + Sync {
    fn fingerprint(&self) -> String;

    fn run(&self, space: &ParameterSpace, sample: &Sample) -> Result<QorResult, EvalError>;
}

impl FlowBackend for SyntheticDesign {
    fn fingerprint(&self) -> String {
        SyntheticDesign::fingerprint(self)
    }

    fn run(&self, space: &ParameterSpace, sample: &Sample) -> Result<QorResult, EvalError> {
        self.evaluate(space, sample)
    }
}

/// Runs an external flow through `sh -c`.
///
/// Placeholders in the template: `{config_path}` (rendered `name = value`
/// lines), `{report_path}` (where the flow must write its report), and
/// `{work_dir}`. The report holds `key = value` lines for `power_mw`, `area`,
/// `tns_ns`, `drc` and optionally `flow_seconds`.
#[derive(Debug, Clone)]
pub struct SubprocessBackend {
    pub command_template: String,
    pub work_dir: PathBuf,
    pub report_name: String,
}

impl SubprocessBackend {
    pub fn new(command_template: impl Into<String>, work_dir: impl Into<PathBuf>) -> Self {
        SubprocessBackend {
            command_template: command_template.into(),
            work_dir: work_dir.into(),
            report_name: "report.txt".into(),
        }
    }
}

pub fn parse_report(text: &str, path: &Path) -> Result<QorResult, EvalError> {
    let err = |message: String| EvalError::ReportParse {
        path: path.display().to_string(),
        message,
    };
    let mut fields: HashMap<String, f64> = HashMap::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = line
            .find(['=', ':'])
            .ok_or_else(|| err(format!("malformed line `{line}`")))?;
        let key = line[..at].trim().to_string();
        let value: f64 = line[at + 1..]
            .trim()
            .parse()
            .map_err(|_| err(format!("non-numeric value for `{key}`")))?;
        fields.insert(key, value);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(format!("missing key `{k}`")));
    let drc = get("drc")?;
    if drc < 0.0 || drc.fract() != 0.0 {
        return Err(err(format!("drc must be a non-negative integer, got {drc}")));
    }
    let q = QorResult {
        power_mw: get("power_mw")?,
        area: get("area")?,
        tns_ns: get("tns_ns")?,
        drc_violations: drc as u64,
        flow_seconds: fields.get("flow_seconds").copied().unwrap_or(0.0),
    };
    q.validate().map_err(|e| err(e.to_string()))?;
    Ok(q)
}

impl FlowBackend for SubprocessBackend {
    fn fingerprint(&self) -> String {
        let h = Sha256::digest(self.command_template.as_bytes());
        format!("subprocess:{}", hex::encode(&h[..8]))
    }

    fn run(&self, space: &ParameterSpace, sample: &Sample) -> Result<QorResult, EvalError> {
        let assignment = space
            .render_assignment(sample)
            .map_err(|_| EvalError::InvalidSample(space.validate(sample).err().unwrap_or_default()))?;
        let dir = self.work_dir.join(format!("eval-{}", sample.to_index_string().replace(';', "_")));
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let config_path = dir.join("config.txt");
        let report_path = dir.join(&self.report_name);
        std::fs::write(&config_path, assignment.to_string()).map_err(|e| io_err(&config_path, e))?;
        let _ = std::fs::remove_file(&report_path);
        let cmd = self
            .command_template
            .replace("{config_path}", &config_path.display().to_string())
            .replace("{report_path}", &report_path.display().to_string())
            .replace("{work_dir}", &dir.display().to_string());
        let started = Instant::now();
        let out = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .current_dir(&dir)
            .output()
            .map_err(EvalError::Spawn)?;
        let elapsed = started.elapsed().as_secs_f64();
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            let tail: String = stderr.chars().rev().take(2000).collect::<Vec<_>>().into_iter().rev().collect();
            return Err(EvalError::NonzeroExit {
                status: out.status.to_string(),
                stderr: tail,
            });
        }
        let text = std::fs::read_to_string(&report_path).map_err(|e| EvalError::ReportParse {
            path: report_path.display().to_string(),
            message: format!("cannot read report: {e}"),
        })?;
        let mut q = parse_report(&text, &report_path)?;
        if !text.contains("flow_seconds") {
            q.flow_seconds = elapsed;
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub qor: QorResult,
    pub cache_hit: bool,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    backend: String,
    indices: Vec<usize>,
    qor: QorResult,
}

/// Backend wrapper that never re-runs a sample it has already evaluated.
pub struct Evaluator {
    backend: Arc<dyn FlowBackend>,
    fingerprint: String,
    enabled: bool,
    cache: Mutex<HashMap<Vec<usize>, QorResult>>,
    invocations: AtomicUsize,
    persist: Option<Mutex<File>>,
}

impl std::fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Evaluator")
            .field("fingerprint", &self.fingerprint)
            .field("enabled", &self.enabled)
            .finish()
    }
}

impl Evaluator {
    pub fn new(backend: Arc<dyn FlowBackend>) -> Self {
        let fingerprint = backend.fingerprint();
        Evaluator {
            backend,
            fingerprint,
            enabled: true,
            cache: Mutex::new(HashMap::new()),
            invocations: AtomicUsize::new(0),
            persist: None,
        }
    }

    pub fn uncached(backend: Arc<dyn FlowBackend>) -> Self {
        Evaluator {
            enabled: false,
            ..Self::new(backend)
        }
    }

    /// Loads entries for this backend from `path` and appends new ones to it.
    pub fn with_cache_file(mut self, path: &Path) -> Result<Self, EvalError> {
        if path.exists() {
            let f = File::open(path).map_err(|e| io_err(path, e))?;
            let mut cache = self.cache.lock().expect("cache lock");
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| io_err(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from a crash is skipped.
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                    if entry.backend == self.fingerprint {
                        cache.insert(entry.indices, entry.qor);
                    }
                }
            }
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        self.persist = Some(Mutex::new(f));
        Ok(self)
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Number of times the backend itself ran.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn evaluate(&self, space: &ParameterSpace, sample: &Sample) -> Result<Evaluation, EvalError> {
        space.validate(sample).map_err(EvalError::InvalidSample)?;
        if self.enabled {
            if let Some(q) = self.cache.lock().expect("cache lock").get(sample.indices()) {
                return Ok(Evaluation {
                    qor: *q,
                    cache_hit: true,
                });
            }
        }
        self.invocations.fetch_add(1, Ordering::SeqCst);
        let qor = self.backend.run(space, sample)?;
        qor.validate()?;
        if self.enabled {
            self.cache
                .lock()
                .expect("cache lock")
                .insert(sample.indices().to_vec(), qor);
            if let Some(f) = &self.persist {
                let line = serde_json::to_string(&CacheLine {
                    backend: self.fingerprint.clone(),
                    indices: sample.indices().to_vec(),
                    qor,
                })
                .expect("cache line serializes");
                let mut f = f.lock().expect("cache file lock");
                writeln!(f, "{line}").map_err(|e| EvalError::Io {
                    path: "evaluation cache".into(),
                    message: e.to_string(),
                })?;
                let _ = f.flush();
            }
        }
        Ok(Evaluation {
            qor,
            cache_hit: false,
        })
    }

    /// Evaluates history-independent samples with up to `jobs` threads.
    /// Results keep input order.
    pub fn evaluate_batch(
        &self,
        space: &ParameterSpace,
        samples: &[Sample],
        jobs: usize,
    ) -> Vec<Result<Evaluation, EvalError>> {
        let jobs = jobs.max(1);
        if jobs == 1 {
            return samples.iter().map(|s| self.evaluate(space, s)).collect();
        }
        let mut out = Vec::with_capacity(samples.len());
        for batch in samples.chunks(jobs) {
            let results: Vec<_> = std::thread::scope(|sc| {
                let hs: Vec<_> = batch
                    .iter()
                    .map(|s| sc.spawn(move || self.evaluate(space, s)))
                    .collect();
                hs.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
            });
            out.extend(results);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn flat_space(counts: &[usize]) -> ParameterSpace {
        let mut text = String::new();
        for (i, n) in counts.iter().enumerate() {
            let opts: Vec<String> = (0..*n).map(|k| k.to_string()).collect();
            text.push_str(&format!("[[param]]\nname = \"p{i}\"\noptions = [{}]\n", opts.join(",")));
        }
        ParameterSpace::from_toml_str(&text).unwrap()
    }

    #[test]
    fn power_at_targets_is_base() {
        let mut d = SyntheticDesign::generate(3, 4, 0);
        d.targets = vec![0.0, 0.5, 1.0, 0.25];
        assert_eq!(d.power(&d.targets.clone()).unwrap(), d.base_power);
        let floor_space = flat_space(&[2, 3, 2, 5]);
        let s = d.nearest_grid_sample(&floor_space.option_counts());
        let q = d.evaluate(&floor_space, &s).unwrap();
        assert_eq!(q.power_mw, d.base_power);
        assert_eq!(q.drc_violations, 0);
    }

    #[test]
    fn flat_and_hand_evaluated_power() {
        let mut d = SyntheticDesign::generate(1, 3, 0);
        d.weights = vec![0.0; 3];
        for u in [[0.0, 0.0, 0.0], [1.0, 0.3, 0.7]] {
            assert_eq!(d.power(&u).unwrap(), d.base_power);
        }
        let one = SyntheticDesign {
            seed: 0,
            weights: vec![1.0],
            targets: vec![0.0],
            pair_terms: vec![],
            base_power: 100.0,
        };
        assert_eq!(one.power(&[1.0]).unwrap(), 200.0);
        assert!(matches!(one.power(&[1.5]), Err(EvalError::OutOfRange(_))));
    }

    #[test]
    fn generated_ranges() {
        for seed in 0..50 {
            let d = SyntheticDesign::generate(seed, 27, 5);
            assert!((80.0..=160.0).contains(&d.base_power));
            assert!(d.weights.iter().chain(&d.targets).all(|v| (0.0..1.0).contains(v)));
            assert!(d.pair_terms.iter().all(|p| p.i < 27 && p.j < 27 && p.i != p.j));
        }
        assert_eq!(SyntheticDesign::generate(9, 5, 2), SyntheticDesign::generate(9, 5, 2));
    }

    #[test]
    fn exhaustive_minimum_is_nearest_grid_point() {
        let space = flat_space(&[3, 5, 4, 7]);
        for seed in 0..5 {
            let d = SyntheticDesign::generate(seed, 4, 0);
            let best = space
                .enumerate()
                .min_by(|a, b| {
                    let pa = d.power(&space.encode_ordinal(a)).unwrap();
                    let pb = d.power(&space.encode_ordinal(b)).unwrap();
                    pa.partial_cmp(&pb).unwrap()
                })
                .unwrap();
            assert_eq!(best, d.nearest_grid_sample(&space.option_counts()));
        }
    }

    #[test]
    fn derive_extremes() {
        let src = SyntheticDesign::generate(11, 6, 3);
        let same = src.derive_similar(1.0, 99).unwrap();
        assert_eq!(same.weights, src.weights);
        assert_eq!(same.targets, src.targets);
        assert_eq!(same.pair_terms, src.pair_terms);
        let fresh = SyntheticDesign::generate(99, 6, 3);
        let indep = src.derive_similar(0.0, 99).unwrap();
        assert_eq!(indep.weights, fresh.weights);
        assert_eq!(indep.targets, fresh.targets);
        assert!(matches!(src.derive_similar(1.5, 1), Err(EvalError::AlphaOutOfRange(_))));

        let space = flat_space(&[3, 4, 2, 5, 3, 2]);
        let argmin = |d: &SyntheticDesign| {
            space
                .enumerate()
                .min_by(|a, b| {
                    d.power(&space.encode_ordinal(a))
                        .unwrap()
                        .partial_cmp(&d.power(&space.encode_ordinal(b)).unwrap())
                        .unwrap()
                })
                .unwrap()
        };
        assert_eq!(argmin(&src), argmin(&same));
    }

    #[test]
    fn objective_mapping() {
        let q = QorResult {
            power_mw: 134.63,
            area: 10.0,
            tns_ns: -3.88,
            drc_violations: 0,
            flow_seconds: 1.0,
        };
        assert_eq!(objective(&q, Metric::Power), 134.63);
        assert_eq!(objective(&q, Metric::Tns), 3.88);
        assert_eq!(objective(&q, Metric::Drc), 0.0);
        assert_eq!(objective(&q, Metric::Area), 10.0);
    }

    #[test]
    fn cache_hits_and_transparency() {
        let space = ParameterSpace::default_space();
        let d = Arc::new(SyntheticDesign::generate(5, space.len(), 4));
        let cached = Evaluator::new(d.clone());
        let plain = Evaluator::uncached(d);
        let mut rng = seeded_rng(1);
        let samples: Vec<_> = (0..20).map(|_| space.random_sample(&mut rng)).collect();
        let mut all = samples.clone();
        all.extend(samples.iter().take(5).cloned());
        for s in &all {
            let a = cached.evaluate(&space, s).unwrap();
            let b = plain.evaluate(&space, s).unwrap();
            assert_eq!(a.qor, b.qor);
        }
        assert_eq!(cached.invocations(), 20);
        assert_eq!(plain.invocations(), 25);
        let again = cached.evaluate(&space, &samples[0]).unwrap();
        assert!(again.cache_hit);
    }

    #[test]
    fn cache_file_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let space = ParameterSpace::default_space();
        let d = Arc::new(SyntheticDesign::generate(5, space.len(), 0));
        let s = space.random_sample(&mut seeded_rng(3));
        let first = Evaluator::new(d.clone()).with_cache_file(&path).unwrap();
        let q = first.evaluate(&space, &s).unwrap().qor;
        drop(first);
        let second = Evaluator::new(d).with_cache_file(&path).unwrap();
        let e = second.evaluate(&space, &s).unwrap();
        assert!(e.cache_hit);
        assert_eq!(e.qor, q);
        assert_eq!(second.invocations(), 0);
    }

    #[test]
    fn subprocess_backend_contract() {
        let dir = tempfile::tempdir().unwrap();
        let space = flat_space(&[2, 3]);
        let ok = SubprocessBackend::new(
            "grep -q 'p1 = 2' {config_path} && printf 'power_mw = 12.5\\narea: 3\\ntns_ns = -0.5\\ndrc = 2\\n' > {report_path}",
            dir.path(),
        );
        let q = ok.run(&space, &Sample::new(vec![0, 2])).unwrap();
        assert_eq!(q.power_mw, 12.5);
        assert_eq!(q.drc_violations, 2);
        assert_eq!(q.tns_ns, -0.5);

        let missing = SubprocessBackend::new("true", dir.path());
        match missing.run(&space, &Sample::new(vec![1, 1])) {
            Err(EvalError::ReportParse { path, .. }) => assert!(path.ends_with("report.txt")),
            other => panic!("{other:?}"),
        }
        let failing = SubprocessBackend::new("echo boom >&2; exit 3", dir.path());
        assert!(matches!(
            failing.run(&space, &Sample::new(vec![1, 0])),
            Err(EvalError::NonzeroExit { .. })
        ));
    }

    #[test]
    fn report_parsing_errors() {
        let p = Path::new("r.txt");
        assert!(parse_report("power_mw = 1\narea = 1\ntns_ns = 0\n", p).is_err());
        assert!(parse_report("power_mw = 1\narea = 1\ntns_ns = 0.5\ndrc = 0\n", p).is_err());
        assert!(parse_report("power_mw = x\n", p).is_err());
        let q = parse_report("# c\npower_mw = 1\narea = 1\ntns_ns = 0\ndrc = 0\nflow_seconds = 9\n", p).unwrap();
        assert_eq!(q.flow_seconds, 9.0);
    }
}
