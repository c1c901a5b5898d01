//! Retrieval-augmented prompted search.

use std::time::Instant;

use super::llm::run_llm_loop;
use super::{Engine, GuidanceContext, RunDir, RunManifest, RunOutcome, SearchConfig, SearchError, Session};
use crate::db::DesignDatabase;
use crate::embedding::embed_text;
use crate::evaluator::Evaluator;
use crate::provider::{ChatProvider, EmbeddingProvider};
use crate::rtl::DesignSource;
use crate::space::ParameterSpace;
use crate::summarizer::{render_summary_text, summarize_design, SummarizerOptions};
use crate::Embedding;

pub struct CropInputs<'a> {
    pub db: &'a DesignDatabase,
    pub chat: &'a dyn ChatProvider,
    pub embed: &'a dyn EmbeddingProvider,
    pub design: &'a DesignSource,
    pub summarizer: SummarizerOptions,
}

/// Summarize, embed, retrieve guidance, then run the prompted loop with it.
/// The retrieval phase is timed once as `rag_overhead`.
pub fn run_crop(
    config: &SearchConfig,
    space: &ParameterSpace,
    evaluator: &Evaluator,
    inputs: CropInputs<'_>,
    run_dir: Option<&mut RunDir>,
) -> Result<RunOutcome, SearchError> {
    config.validate()?;
    if config.engine != Engine::Crop {
        return Err(SearchError::InvalidConfig(format!(
            "run_crop called with engine {}",
            config.engine
        )));
    }
    let wall = Instant::now();
    inputs.db.check_space(space)?;
    if inputs.db.is_empty() {
        return Err(crate::db::DbError::Empty.into());
    }

    let rag = Instant::now();
    let (_, summary) = summarize_design(inputs.chat, inputs.design, &inputs.summarizer)?;
    let query: Embedding = embed_text(inputs.embed, &render_summary_text(&summary), Some(inputs.db.header.dim))?;
    let hits = inputs
        .db
        .retrieve_mips(&query, config.llm.retrieve_k, None, config.llm.similarity.into())?;
    let guidance = GuidanceContext::merged(space, &hits)?;
    let rag_overhead = rag.elapsed().as_secs_f64();

    let mut session = Session::new(config, space, evaluator, run_dir);
    let result = run_llm_loop(&mut session, inputs.chat, Some(&guidance));
    let manifest = RunManifest {
        command: "tune".into(),
        engine: Engine::Crop,
        config: config.clone(),
        seed: config.seed,
        metric: config.metric,
        space_fingerprint: session.history.space_fingerprint.clone(),
        backend_fingerprint: session.history.backend_fingerprint.clone(),
        chat_fingerprint: Some(inputs.chat.fingerprint()),
        embed_fingerprint: Some(inputs.embed.fingerprint()),
        retrieved_design: Some(guidance.design_id.clone()),
        retrieval_score: Some(guidance.score),
        trials: session.history.len(),
        failed_trials: session.history.trials.iter().filter(|t| !t.is_success()).count(),
        best: session.history.best(),
        timings: session.timings(rag_overhead, wall.elapsed().as_secs_f64()),
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
