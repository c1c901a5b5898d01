//! Budgeted minimization engines over the discrete space.

mod crop;
mod gp;
mod llm;
mod tpe;

pub use crop::{run_crop, CropInputs};
pub use gp::{expected_improvement, propose_gp_ei, GaussianProcess, GpError, GpOptions};
pub use llm::{
    build_llm_prompt, build_llm_prompt_within, parse_llm_response, render_llm_block, GuidanceContext, GuidanceLine,
    LlmOptions, ResponseError, PARAMS_TAG, TUNING_SYSTEM_PROMPT,
};
pub use tpe::{propose_tpe, smoothed_density, TpeOptions};

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::DbError;
use crate::embedding::EmbeddingError;
use crate::evaluator::{objective, EvalError, Evaluator, Metric, QorResult};
use crate::provider::{ChatProvider, ProviderError};
use crate::space::{ParameterSpace, Sample};
use crate::summarizer::SummaryError;
use crate::{seeded_rng, SeededRng};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("chat provider failed at iteration {iteration} after {attempts} attempts: {source}")]
    Provider {
        iteration: usize,
        attempts: usize,
        source: ProviderError,
    },
    #[error("prompt needs {needed} tokens but the provider allows {limit}")]
    PromptBudget { needed: usize, limit: usize },
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed run file {path}: {message}")]
    RunFile { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SearchError {
    SearchError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Random,
    Tpe,
    GpEi,
    Llm,
    Crop,
}

impl Engine {
    pub const ALL: [Engine; 5] = [Engine::Random, Engine::Tpe, Engine::GpEi, Engine::Llm, Engine::Crop];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Random => "random",
            Engine::Tpe => "tpe",
            Engine::GpEi => "gp_ei",
            Engine::Llm => "llm",
            Engine::Crop => "crop",
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str() == s || (s == "gp" && *e == Engine::GpEi))
            .ok_or_else(|| format!("unknown engine `{s}` (expected random, tpe, gp_ei, llm or crop)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub budget: usize,
    pub seed: u64,
    pub metric: Metric,
    pub engine: Engine,
    pub tpe: TpeOptions,
    pub gp: GpOptions,
    pub llm: LlmOptions,
    /// Concurrent evaluations for history-independent startup samples.
    pub jobs: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 50,
            seed: 0,
            metric: Metric::Power,
            engine: Engine::Random,
            tpe: TpeOptions::default(),
            gp: GpOptions::default(),
            llm: LlmOptions::default(),
            jobs: 1,
        }
    }
}

impl SearchConfig {
    pub fn new(engine: Engine, budget: usize, seed: u64) -> Self {
        SearchConfig {
            engine,
            budget,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if !(self.tpe.gamma > 0.0 && self.tpe.gamma < 1.0) {
            return bad("tpe gamma must be in (0, 1)");
        }
        if self.tpe.n_candidates == 0 {
            return bad("tpe n_candidates must be at least 1");
        }
        if !(self.gp.length_scale > 0.0 && self.gp.signal_variance > 0.0 && self.gp.noise_variance > 0.0) {
            return bad("gp kernel parameters must be positive");
        }
        if self.llm.retrieve_k == 0 {
            return bad("retrieve_k must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOrigin {
    Random,
    Startup,
    Tpe,
    Gp,
    Llm,
    /// Random sample after the model exhausted its re-prompts.
    Fallback,
}

impl TrialOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialOrigin::Random => "random",
            TrialOrigin::Startup => "startup",
            TrialOrigin::Tpe => "tpe",
            TrialOrigin::Gp => "gp",
            TrialOrigin::Llm => "llm",
            TrialOrigin::Fallback => "fallback",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            TrialOrigin::Random,
            TrialOrigin::Startup,
            TrialOrigin::Tpe,
            TrialOrigin::Gp,
            TrialOrigin::Llm,
            TrialOrigin::Fallback,
        ]
        .into_iter()
        .find(|o| o.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// 1-based.
    pub iteration: usize,
    pub sample: Sample,
    pub qor: Option<QorResult>,
    pub objective: Option<f64>,
    pub error: Option<String>,
    pub cache_hit: bool,
    pub origin: TrialOrigin,
    pub selection_seconds: f64,
    pub eval_seconds: f64,
}

impl Trial {
    pub fn success(
        iteration: usize,
        sample: Sample,
        qor: QorResult,
        objective: f64,
        cache_hit: bool,
        origin: TrialOrigin,
    ) -> Self {
        Trial {
            iteration,
            sample,
            qor: Some(qor),
            objective: Some(objective),
            error: None,
            cache_hit,
            origin,
            selection_seconds: 0.0,
            eval_seconds: 0.0,
        }
    }

    pub fn failure(iteration: usize, sample: Sample, error: String, origin: TrialOrigin) -> Self {
        Trial {
            iteration,
            sample,
            qor: None,
            objective: None,
            error: Some(error),
            cache_hit: false,
            origin,
            selection_seconds: 0.0,
            eval_seconds: 0.0,
        }
    }

    pub fn is_success(&self) -> bool {
        self.objective.is_some()
    }
}

pub const TRIAL_CSV_HEADER: &str = "iteration,origin,indices,assignment,power_mw,area,tns_ns,drc,flow_seconds,objective,cache_hit,error";

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHistory {
    pub engine: String,
    pub metric: Metric,
    pub space_fingerprint: String,
    pub backend_fingerprint: String,
    pub trials: Vec<Trial>,
    /// Running minimum of successful objectives; `None` until the first success.
    pub best_curve: Vec<Option<f64>>,
}

impl SearchHistory {
    pub fn new(engine: &str, metric: Metric, space: &ParameterSpace, backend_fingerprint: &str) -> Self {
        SearchHistory {
            engine: engine.to_string(),
            metric,
            space_fingerprint: space.fingerprint(),
            backend_fingerprint: backend_fingerprint.to_string(),
            trials: Vec::new(),
            best_curve: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn push(&mut self, trial: Trial) {
        let prev = self.best_curve.last().copied().flatten();
        let best = match (prev, trial.objective) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.trials.push(trial);
        self.best_curve.push(best);
    }

    pub fn successful(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.is_success())
    }

    /// Best objective after `c` trials (1-based).
    pub fn best_at(&self, c: usize) -> Option<f64> {
        c.checked_sub(1).and_then(|i| self.best_curve.get(i).copied().flatten())
    }

    pub fn best(&self) -> Option<f64> {
        self.best_curve.last().copied().flatten()
    }

    /// First trial reaching the best objective.
    pub fn incumbent(&self) -> Option<&Trial> {
        let mut best: Option<&Trial> = None;
        for t in self.successful() {
            if best.is_none_or(|b| t.objective < b.objective) {
                best = Some(t);
            }
        }
        best
    }

    /// Earlier trial with the same sample, if any.
    pub fn first_with_sample(&self, sample: &Sample) -> Option<&Trial> {
        self.trials.iter().find(|t| &t.sample == sample)
    }

    pub fn trial_csv_row(space: &ParameterSpace, t: &Trial, timings: bool) -> String {
        let assignment = space
            .render_assignment(&t.sample)
            .map(|a| a.to_inline())
            .unwrap_or_default();
        let q = |f: fn(&QorResult) -> String| t.qor.as_ref().map(f).unwrap_or_default();
        let mut row = vec![
            t.iteration.to_string(),
            t.origin.as_str().to_string(),
            t.sample.to_index_string(),
            csv_quote(&assignment),
            q(|q| q.power_mw.to_string()),
            q(|q| q.area.to_string()),
            q(|q| q.tns_ns.to_string()),
            q(|q| q.drc_violations.to_string()),
            q(|q| q.flow_seconds.to_string()),
            t.objective.map(|o| o.to_string()).unwrap_or_default(),
            t.cache_hit.to_string(),
            csv_quote(t.error.as_deref().unwrap_or("")),
        ];
        if timings {
            row.push(t.selection_seconds.to_string());
            row.push(t.eval_seconds.to_string());
        }
        row.join(",")
    }

    /// Trial table. Timing columns are optional so reruns can be compared byte for byte.
    pub fn trials_csv(&self, space: &ParameterSpace, timings: bool) -> String {
        let mut out = String::from(TRIAL_CSV_HEADER);
        if timings {
            out.push_str(",selection_seconds,eval_seconds");
        }
        out.push('\n');
        for t in &self.trials {
            out.push_str(&Self::trial_csv_row(space, t, timings));
            out.push('\n');
        }
        out
    }

    pub fn best_curve_csv(&self) -> String {
        let mut out = String::from("iteration,best\n");
        for (i, b) in self.best_curve.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, b.map(|v| v.to_string()).unwrap_or_default()));
        }
        out
    }

    /// Reads a trial table written by [`trials_csv`](Self::trials_csv).
    pub fn read_trials_csv(
        text: &str,
        path: &Path,
        engine: &str,
        metric: Metric,
        space_fingerprint: &str,
        backend_fingerprint: &str,
    ) -> Result<Self, SearchError> {
        let bad = |m: String| SearchError::RunFile {
            path: path.display().to_string(),
            message: m,
        };
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| bad(format!("missing column `{name}`")))
        };
        let c_iter = col("iteration")?;
        let c_origin = col("origin")?;
        let c_idx = col("indices")?;
        let c_power = col("power_mw")?;
        let c_area = col("area")?;
        let c_tns = col("tns_ns")?;
        let c_drc = col("drc")?;
        let c_flow = col("flow_seconds")?;
        let c_obj = col("objective")?;
        let c_hit = col("cache_hit")?;
        let c_err = col("error")?;
        let c_sel = headers.iter().position(|h| h == "selection_seconds");
        let c_eval = headers.iter().position(|h| h == "eval_seconds");
        let mut h = SearchHistory {
            engine: engine.to_string(),
            metric,
            space_fingerprint: space_fingerprint.to_string(),
            backend_fingerprint: backend_fingerprint.to_string(),
            trials: Vec::new(),
            best_curve: Vec::new(),
        };
        for (row_no, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let line = row_no + 2;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<Option<f64>, SearchError> {
                let s = field(i);
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|_| bad(format!("line {line}: bad number `{s}`")))
                }
            };
            let iteration = field(c_iter)
                .parse::<usize>()
                .map_err(|_| bad(format!("line {line}: bad iteration")))?;
            let origin = TrialOrigin::parse(field(c_origin)).ok_or_else(|| bad(format!("line {line}: bad origin")))?;
            let sample = Sample::parse_index_string(field(c_idx)).ok_or_else(|| bad(format!("line {line}: bad indices")))?;
            let objective = num(c_obj)?;
            let qor = match (num(c_power)?, num(c_area)?, num(c_tns)?, field(c_drc), num(c_flow)?) {
                (Some(power_mw), Some(area), Some(tns_ns), drc, flow) if !drc.is_empty() => Some(QorResult {
                    power_mw,
                    area,
                    tns_ns,
                    drc_violations: drc.parse().map_err(|_| bad(format!("line {line}: bad drc")))?,
                    flow_seconds: flow.unwrap_or(0.0),
                }),
                _ => None,
            };
            let error = Some(field(c_err).to_string()).filter(|s| !s.is_empty());
            h.push(Trial {
                iteration,
                sample,
                qor,
                objective,
                error,
                cache_hit: field(c_hit) == "true",
                origin,
                selection_seconds: c_sel.map(&num).transpose()?.flatten().unwrap_or(0.0),
                eval_seconds: c_eval.map(num).transpose()?.flatten().unwrap_or(0.0),
            });
        }
        Ok(h)
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub rag_overhead: f64,
    pub parameter_selection: f64,
    pub eda_flow: f64,
    pub wall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub engine: Engine,
    pub config: SearchConfig,
    pub seed: u64,
    pub metric: Metric,
    pub space_fingerprint: String,
    pub backend_fingerprint: String,
    pub chat_fingerprint: Option<String>,
    pub embed_fingerprint: Option<String>,
    pub retrieved_design: Option<String>,
    pub retrieval_score: Option<f64>,
    pub trials: usize,
    pub failed_trials: usize,
    pub best: Option<f64>,
    pub timings: PhaseTimings,
}

/// Run directory writer. Every file is updated after each trial.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    trials: File,
    transcripts: File,
}

pub const CONFIG_FILE: &str = "config.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const BEST_CURVE_FILE: &str = "best_curve.csv";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CACHE_FILE: &str = "eval_cache.jsonl";

#[derive(Debug, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub iteration: usize,
    pub attempt: usize,
    pub request_hash: String,
    pub system: String,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

impl RunDir {
    /// Creates (or truncates) the run files under `root`.
    pub fn create(root: &Path, config: &SearchConfig) -> Result<Self, SearchError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let cfg = root.join(CONFIG_FILE);
        let text = serde_json::to_string_pretty(config).expect("config serializes");
        std::fs::write(&cfg, text + "\n").map_err(|e| io_err(&cfg, e))?;
        let open = |name: &str| {
            let p = root.join(name);
            File::create(&p).map_err(|e| io_err(&p, e))
        };
        let mut trials = open(TRIALS_FILE)?;
        writeln!(trials, "{TRIAL_CSV_HEADER},selection_seconds,eval_seconds").map_err(|e| io_err(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            trials,
            transcripts: open(TRANSCRIPTS_FILE)?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cache_path(&self) -> PathBuf {
        self.root.join(CACHE_FILE)
    }

    fn record_trial(&mut self, space: &ParameterSpace, history: &SearchHistory) -> Result<(), SearchError> {
        let t = history.trials.last().expect("trial just pushed");
        writeln!(self.trials, "{}", SearchHistory::trial_csv_row(space, t, true)).map_err(|e| io_err(&self.root, e))?;
        self.trials.flush().map_err(|e| io_err(&self.root, e))?;
        let p = self.root.join(BEST_CURVE_FILE);
        std::fs::write(&p, history.best_curve_csv()).map_err(|e| io_err(&p, e))
    }

    fn record_transcript(&mut self, entry: &TranscriptEntry) -> Result<(), SearchError> {
        let line = serde_json::to_string(entry).expect("transcript serializes");
        writeln!(self.transcripts, "{line}").map_err(|e| io_err(&self.root, e))?;
        self.transcripts.flush().map_err(|e| io_err(&self.root, e))
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), SearchError> {
        let p = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        std::fs::write(&p, text + "\n").map_err(|e| io_err(&p, e))
    }
}

/// Loads a finished (or partial) run directory.
pub fn load_run(root: &Path) -> Result<(RunManifest, SearchHistory), SearchError> {
    let mp = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mp).map_err(|e| io_err(&mp, e))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| SearchError::RunFile {
        path: mp.display().to_string(),
        message: e.to_string(),
    })?;
    let tp = root.join(TRIALS_FILE);
    let text = std::fs::read_to_string(&tp).map_err(|e| io_err(&tp, e))?;
    let history = SearchHistory::read_trials_csv(
        &text,
        &tp,
        manifest.engine.as_str(),
        manifest.metric,
        &manifest.space_fingerprint,
        &manifest.backend_fingerprint,
    )?;
    Ok((manifest, history))
}

/// Shared state of a search run.
pub(crate) struct Session<'a> {
    pub config: &'a SearchConfig,
    pub space: &'a ParameterSpace,
    pub evaluator: &'a Evaluator,
    pub rng: SeededRng,
    pub history: SearchHistory,
    pub run_dir: Option<&'a mut RunDir>,
}

impl<'a> Session<'a> {
    pub fn new(
        config: &'a SearchConfig,
        space: &'a ParameterSpace,
        evaluator: &'a Evaluator,
        run_dir: Option<&'a mut RunDir>,
    ) -> Self {
        Session {
            config,
            space,
            evaluator,
            rng: seeded_rng(config.seed),
            history: SearchHistory::new(config.engine.as_str(), config.metric, space, evaluator.fingerprint()),
            run_dir,
        }
    }

    pub fn remaining(&self) -> usize {
        self.config.budget.saturating_sub(self.history.len())
    }

    fn push(&mut self, trial: Trial) -> Result<(), SearchError> {
        self.history.push(trial);
        if let Some(rd) = self.run_dir.as_deref_mut() {
            rd.record_trial(self.space, &self.history)?;
        }
        Ok(())
    }

    pub fn transcript(&mut self, entry: TranscriptEntry) -> Result<(), SearchError> {
        if let Some(rd) = self.run_dir.as_deref_mut() {
            rd.record_transcript(&entry)?;
        }
        Ok(())
    }

    fn make_trial(&self, sample: Sample, origin: TrialOrigin, result: Result<crate::evaluator::Evaluation, EvalError>) -> Trial {
        let iteration = self.history.len() + 1;
        match result {
            Ok(ev) => Trial::success(
                iteration,
                sample,
                ev.qor,
                objective(&ev.qor, self.config.metric),
                ev.cache_hit,
                origin,
            ),
            Err(e) => Trial::failure(iteration, sample, e.to_string(), origin),
        }
    }

    /// Evaluates one proposal and appends it.
    pub fn evaluate(&mut self, sample: Sample, origin: TrialOrigin, selection_seconds: f64) -> Result<(), SearchError> {
        let t0 = Instant::now();
        let result = self.evaluator.evaluate(self.space, &sample);
        let mut trial = self.make_trial(sample, origin, result);
        trial.selection_seconds = selection_seconds;
        trial.eval_seconds = t0.elapsed().as_secs_f64();
        self.push(trial)
    }

    /// Draws `n` history-independent random samples and evaluates them,
    /// concurrently when `jobs > 1`.
    pub fn random_batch(&mut self, n: usize, origin: TrialOrigin) -> Result<(), SearchError> {
        let n = n.min(self.remaining());
        if n == 0 {
            return Ok(());
        }
        let t0 = Instant::now();
        let samples: Vec<Sample> = (0..n).map(|_| propose_random(self.space, &mut self.rng)).collect();
        let selection = t0.elapsed().as_secs_f64() / n as f64;
        let t1 = Instant::now();
        let results = self.evaluator.evaluate_batch(self.space, &samples, self.config.jobs);
        let eval = t1.elapsed().as_secs_f64() / n as f64;
        for (s, r) in samples.into_iter().zip(results) {
            let mut trial = self.make_trial(s, origin, r);
            trial.selection_seconds = selection;
            trial.eval_seconds = eval;
            self.push(trial)?;
        }
        Ok(())
    }

    pub fn timings(&self, rag_overhead: f64, wall: f64) -> PhaseTimings {
        PhaseTimings {
            rag_overhead,
            parameter_selection: self.history.trials.iter().map(|t| t.selection_seconds).sum(),
            eda_flow: self.history.trials.iter().map(|t| t.eval_seconds).sum(),
            wall,
        }
    }
}

pub fn propose_random<R: Rng + ?Sized>(space: &ParameterSpace, rng: &mut R) -> Sample {
    space.random_sample(rng)
}

/// Outcome of a run: the history plus the manifest describing it.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: SearchHistory,
    pub manifest: RunManifest,
}

/// Runs a non-retrieval engine (`random`, `tpe`, `gp_ei`, `llm`).
///
/// Failed evaluations consume budget and are excluded from the best curve.
pub fn run_search(
    config: &SearchConfig,
    space: &ParameterSpace,
    evaluator: &Evaluator,
    chat: Option<&dyn ChatProvider>,
    run_dir: Option<&mut RunDir>,
) -> Result<RunOutcome, SearchError> {
    config.validate()?;
    let wall = Instant::now();
    let mut session = Session::new(config, space, evaluator, run_dir);
    let result = match config.engine {
        Engine::Random => session.random_batch(config.budget, TrialOrigin::Random),
        Engine::Tpe => run_tpe(&mut session),
        Engine::GpEi => run_gp(&mut session),
        Engine::Llm => {
            let chat = chat.ok_or_else(|| SearchError::InvalidConfig("llm engine needs a chat provider".into()))?;
            llm::run_llm_loop(&mut session, chat, None)
        }
        Engine::Crop => Err(SearchError::InvalidConfig(
            "crop needs a design database; use run_crop".into(),
        )),
    };
    let manifest = RunManifest {
        command: "tune".into(),
        engine: config.engine,
        config: config.clone(),
        seed: config.seed,
        metric: config.metric,
        space_fingerprint: session.history.space_fingerprint.clone(),
        backend_fingerprint: session.history.backend_fingerprint.clone(),
        chat_fingerprint: chat.filter(|_| config.engine == Engine::Llm).map(|c| c.fingerprint()),
        embed_fingerprint: None,
        retrieved_design: None,
        retrieval_score: None,
        trials: session.history.len(),
        failed_trials: session.history.trials.iter().filter(|t| !t.is_success()).count(),
        best: session.history.best(),
        timings: session.timings(0.0, wall.elapsed().as_secs_f64()),
    };
    if let Some(rd) = session.run_dir.as_deref() {
        rd.write_manifest(&manifest)?;
    }
    result?;
    Ok(RunOutcome {
        history: session.history,
        manifest,
    })
}

fn run_tpe(s: &mut Session<'_>) -> Result<(), SearchError> {
    s.random_batch(s.config.tpe.n_startup, TrialOrigin::Startup)?;
    while s.remaining() > 0 {
        let t0 = Instant::now();
        let sample = propose_tpe(&s.history, s.space, &mut s.rng, &s.config.tpe);
        s.evaluate(sample, TrialOrigin::Tpe, t0.elapsed().as_secs_f64())?;
    }
    Ok(())
}

fn run_gp(s: &mut Session<'_>) -> Result<(), SearchError> {
    s.random_batch(s.config.gp.n_init, TrialOrigin::Startup)?;
    while s.remaining() > 0 {
        let t0 = Instant::now();
        let sample = propose_gp_ei(&s.history, s.space, &mut s.rng, &s.config.gp)?;
        s.evaluate(sample, TrialOrigin::Gp, t0.elapsed().as_secs_f64())?;
    }
    Ok(())
}
