//! Prompted proposals: prompt rendering, response parsing and the LLM loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{propose_random, SearchError, SearchHistory, Session, TranscriptEntry, TrialOrigin};
use crate::db::{DesignRecord, Similarity};
use crate::evaluator::Metric;
use crate::provider::{ChatProvider, ChatRequest};
use crate::rtl::estimate_tokens;
use crate::space::{AssignmentError, ParameterSpace, Sample};

pub const PARAMS_TAG: &str = "params";

pub const TUNING_SYSTEM_PROMPT: &str = "You are an expert in physical implementation of digital designs. \
You choose EDA flow parameter settings one trial at a time and always answer in the requested format.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmOptions {
    /// Re-prompts after an invalid answer before falling back to a random sample.
    pub max_retries: usize,
    pub temperature: f64,
    /// Designs whose guidance is merged (crop only).
    pub retrieve_k: usize,
    pub similarity: SimilarityChoice,
}

impl Default for LlmOptions {
    fn default() -> Self {
        LlmOptions {
            max_retries: 2,
            temperature: 0.0,
            retrieve_k: 1,
            similarity: SimilarityChoice::InnerProduct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityChoice {
    #[default]
    InnerProduct,
    Cosine,
}

impl From<SimilarityChoice> for Similarity {
    fn from(s: SimilarityChoice) -> Self {
        match s {
            SimilarityChoice::InnerProduct => Similarity::InnerProduct,
            SimilarityChoice::Cosine => Similarity::Cosine,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceLine {
    pub sample: Sample,
    pub assignment: String,
    pub objective: f64,
}

/// Guidance retrieved for the current design.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceContext {
    pub design_id: String,
    pub score: f64,
    /// Ascending objective.
    pub entries: Vec<GuidanceLine>,
}

impl GuidanceContext {
    pub fn from_record(space: &ParameterSpace, record: &DesignRecord, score: f64) -> Result<Self, SearchError> {
        Self::merged(space, &[(record, score)])
    }

    /// Guidance of several retrieved records, merged by objective.
    pub fn merged(space: &ParameterSpace, hits: &[(&DesignRecord, f64)]) -> Result<Self, SearchError> {
        let mut entries = Vec::new();
        for (r, _) in hits {
            for e in &r.guidance.entries {
                let assignment = space
                    .render_assignment(&e.sample)
                    .map_err(|err| SearchError::InvalidConfig(format!("guidance of `{}`: {err}", r.design_id)))?
                    .to_inline();
                entries.push(GuidanceLine {
                    sample: e.sample.clone(),
                    assignment,
                    objective: e.objective,
                });
            }
        }
        entries.sort_by(|a, b| a.objective.partial_cmp(&b.objective).expect("finite objective"));
        Ok(GuidanceContext {
            design_id: hits.iter().map(|(r, _)| r.design_id.as_str()).collect::<Vec<_>>().join(","),
            score: hits.first().map(|h| h.1).unwrap_or(0.0),
            entries,
        })
    }
}

fn metric_phrase(metric: Metric) -> String {
    let what = match metric {
        Metric::Power => "total power",
        Metric::Area => "cell area",
        Metric::Tns => "total negative slack magnitude",
        Metric::Drc => "DRC violation count",
    };
    format!("{what} ({})", metric.unit())
}

fn fixed_sections(space: &ParameterSpace, guidance: Option<&GuidanceContext>, metric: Metric) -> String {
    let mut head = String::new();
    head.push_str("## Background\n");
    head.push_str(&format!(
        "We are tuning EDA flow parameters for PPA objectives. Each trial runs the implementation flow once \
on the design with one parameter sample. The objective is {}; lower is better.\n\n",
        metric_phrase(metric)
    ));
    head.push_str("## Instructions\n");
    head.push_str(
        "Propose the next sample to evaluate. Be aware of both exploration and exploitation: \
refine around the best results, but also try settings the history has not covered.\n",
    );
    if guidance.is_some() {
        head.push_str("The retrieved guidance lists the best samples of a similar design; treat them as strong starting points.\n");
    }
    head.push_str(&format!(
        "Answer with exactly one fenced block tagged `{PARAMS_TAG}` that contains one `name = value` line for \
every parameter, using only the listed values. Text outside the block is ignored.\n\n"
    ));
    head.push_str("## Parameters\n");
    for p in space.params() {
        let opts: Vec<String> = p.options.iter().map(|o| o.canonical()).collect();
        head.push_str(&format!("- {} ({}): {}\n", p.name, p.category.as_str(), opts.join(" | ")));
    }
    if let Some(g) = guidance {
        head.push_str("\n## Retrieved guidance\n");
        head.push_str(&format!("Source design: {} (similarity {:.4})\n", g.design_id, g.score));
        for (i, e) in g.entries.iter().enumerate() {
            head.push_str(&format!("G{}: {} -> {:.2}\n", i + 1, e.assignment, e.objective));
        }
    }
    head.push_str("\n## History\n");
    head
}

fn history_lines(space: &ParameterSpace, history: &SearchHistory) -> Vec<String> {
    history
        .trials
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let assignment = space
                .render_assignment(&t.sample)
                .map(|a| a.to_inline())
                .unwrap_or_else(|_| t.sample.to_index_string());
            let result = t
                .objective
                .map(|o| format!("{o:.2}"))
                .unwrap_or_else(|| "failed".to_string());
            let repeat = history.trials[..i]
                .iter()
                .find(|p| p.sample == t.sample)
                .map(|p| format!(" (repeat of T{})", p.iteration))
                .unwrap_or_default();
            format!("T{}: {} -> {}{}", t.iteration, assignment, result, repeat)
        })
        .collect()
}

fn assemble(head: &str, lines: &[String], omitted: usize, correction: Option<&str>) -> String {
    let mut out = head.to_string();
    if lines.is_empty() && omitted == 0 {
        out.push_str("(no trials yet)\n");
    }
    if omitted > 0 {
        out.push_str(&format!("({omitted} earlier trials omitted)\n"));
    }
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    if let Some(c) = correction {
        out.push_str("\n## Correction\n");
        out.push_str(&format!(
            "Your previous answer was rejected: {c}\nAnswer again with a complete `{PARAMS_TAG}` block.\n"
        ));
    }
    out
}

/// Full prompt with the whole history.
pub fn build_llm_prompt(
    space: &ParameterSpace,
    history: &SearchHistory,
    guidance: Option<&GuidanceContext>,
    metric: Metric,
) -> String {
    let head = fixed_sections(space, guidance, metric);
    assemble(&head, &history_lines(space, history), 0, None)
}

/// Prompt whose estimated size (with the system prompt) fits `max_tokens`,
/// dropping the oldest history lines first.
pub fn build_llm_prompt_within(
    space: &ParameterSpace,
    history: &SearchHistory,
    guidance: Option<&GuidanceContext>,
    metric: Metric,
    correction: Option<&str>,
    max_tokens: Option<usize>,
) -> Result<String, SearchError> {
    let head = fixed_sections(space, guidance, metric);
    let lines = history_lines(space, history);
    let full = assemble(&head, &lines, 0, correction);
    let Some(limit) = max_tokens else {
        return Ok(full);
    };
    let cost = |p: &str| estimate_tokens(TUNING_SYSTEM_PROMPT) + estimate_tokens(p);
    if cost(&full) <= limit {
        return Ok(full);
    }
    // Fewest dropped lines that fit; the size is monotone in the drop count.
    let (mut lo, mut hi) = (1, lines.len());
    let fits = |drop: usize| cost(&assemble(&head, &lines[drop..], drop, correction)) <= limit;
    if !fits(hi) {
        return Err(SearchError::PromptBudget {
            needed: cost(&assemble(&head, &[], lines.len(), correction)),
            limit,
        });
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(assemble(&head, &lines[lo..], lo, correction))
}

/// The answer block the parser expects for `sample`.
pub fn render_llm_block(space: &ParameterSpace, sample: &Sample) -> Result<String, crate::space::SpaceError> {
    let a = space.render_assignment(sample)?;
    Ok(format!("```{PARAMS_TAG}\n{a}```\n"))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResponseError {
    #[error("no fenced `{PARAMS_TAG}` block found")]
    MissingBlock,
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

fn find_block(text: &str) -> Option<&str> {
    let mut rest = text;
    let mut first: Option<&str> = None;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let nl = after.find('\n')?;
        let tag = after[..nl].trim();
        let body = &after[nl + 1..];
        let end = body.find("```")?;
        if tag == PARAMS_TAG {
            return Some(&body[..end]);
        }
        first.get_or_insert(&body[..end]);
        rest = &body[end + 3..];
    }
    first
}

/// Extracts the `params` block (or the first fenced block) and maps it to indices.
pub fn parse_llm_response(space: &ParameterSpace, text: &str) -> Result<Sample, ResponseError> {
    let block = find_block(text).ok_or(ResponseError::MissingBlock)?;
    Ok(space.parse_assignment(block)?)
}

/// Sequential prompted search. Transport failures are retried like invalid
/// answers; a provider still failing after the retries aborts the run.
pub(crate) fn run_llm_loop(
    s: &mut Session<'_>,
    chat: &dyn ChatProvider,
    guidance: Option<&GuidanceContext>,
) -> Result<(), SearchError> {
    let opts = s.config.llm.clone();
    while s.remaining() > 0 {
        let t0 = Instant::now();
        let iteration = s.history.len() + 1;
        let mut correction: Option<String> = None;
        let mut proposal: Option<Sample> = None;
        let mut last_transport = None;
        for attempt in 0..=opts.max_retries {
            let prompt = build_llm_prompt_within(
                s.space,
                &s.history,
                guidance,
                s.config.metric,
                correction.as_deref(),
                chat.max_prompt_tokens(),
            )?;
            let mut request = ChatRequest::new(TUNING_SYSTEM_PROMPT, prompt.clone());
            request.temperature = Some(opts.temperature);
            let reply = chat.complete(&request);
            s.transcript(TranscriptEntry {
                iteration,
                attempt,
                request_hash: request.hash(),
                system: TUNING_SYSTEM_PROMPT.to_string(),
                prompt,
                response: reply.as_ref().ok().cloned(),
                error: reply.as_ref().err().map(|e| e.to_string()),
            })?;
            match reply {
                Err(e) => {
                    correction = None;
                    last_transport = Some(e);
                }
                Ok(text) => {
                    last_transport = None;
                    match parse_llm_response(s.space, &text) {
                        Ok(sample) => {
                            proposal = Some(sample);
                            break;
                        }
                        Err(e) => correction = Some(e.to_string()),
                    }
                }
            }
        }
        if let Some(source) = last_transport {
            return Err(SearchError::Provider {
                iteration,
                attempts: opts.max_retries + 1,
                source,
            });
        }
        let (sample, origin) = match proposal {
            Some(p) => (p, TrialOrigin::Llm),
            None => (propose_random(s.space, &mut s.rng), TrialOrigin::Fallback),
        };
        s.evaluate(sample, origin, t0.elapsed().as_secs_f64())?;
    }
    Ok(())
}
