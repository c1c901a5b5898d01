//! Deterministic stand-in for a chat model, usable without network access.
//!
//! Summarization requests get lexical summaries built from the most frequent
//! identifiers in the prompt. Tuning requests are answered by replaying
//! unseen guidance samples, then one-step mutations of the incumbent.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

use crate::embedding::tokenize_terms;
use crate::provider::{ChatProvider, ChatRequest, ProviderError};
use crate::search::{render_llm_block, TUNING_SYSTEM_PROMPT};
use crate::space::{ParameterSpace, Sample};
use crate::summarizer::{
    design_prompt, module_prompt, render_kv_block, DESIGN_FIELDS, DESIGN_SYSTEM_PROMPT, DESIGN_TAG, MODULE_FIELDS,
    MODULE_SYSTEM_PROMPT, MODULE_TAG,
};
use crate::SeededRng;

const SUMMARY_TERMS: usize = 16;
const MUTATION_TRIES: usize = 256;

fn template_terms() -> &'static HashSet<String> {
    static TERMS: OnceLock<HashSet<String>> = OnceLock::new();
    TERMS.get_or_init(|| {
        let mut text = module_prompt("", "", None);
        text.push_str(&design_prompt("", &[]));
        text.push_str(&MODULE_FIELDS.join(" "));
        text.push_str(&DESIGN_FIELDS.join(" "));
        for w in ["module", "endmodule", "input", "output", "wire", "reg", "assign", "begin", "end", "logic"] {
            text.push(' ');
            text.push_str(w);
        }
        tokenize_terms(&text).collect()
    })
}

/// Most frequent non-template terms, ties alphabetical.
pub fn lexical_summary(text: &str) -> String {
    let stop = template_terms();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in tokenize_terms(text) {
        if t.len() > 1 && !t.chars().all(|c| c.is_ascii_digit()) && !stop.contains(&t) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut terms: Vec<(String, usize)> = counts.into_iter().collect();
    terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let words: Vec<String> = terms.into_iter().take(SUMMARY_TERMS).map(|(t, _)| t).collect();
    if words.is_empty() {
        "unspecified".to_string()
    } else {
        words.join(" ")
    }
}

/// Offline chat provider. See the module docs for its answering strategy.
#[derive(Debug, Clone)]
pub struct OfflineChatProvider {
    space: ParameterSpace,
    seed: u64,
}

impl OfflineChatProvider {
    pub fn new(space: ParameterSpace, seed: u64) -> Self {
        OfflineChatProvider { space, seed }
    }

    fn rng_for(&self, request: &ChatRequest) -> SeededRng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(request.hash().as_bytes());
        let d = h.finalize();
        SeededRng::seed_from_u64(u64::from_le_bytes(d[..8].try_into().expect("8 bytes")))
    }

    fn parse_lines(&self, prompt: &str, prefix: char) -> Vec<(Sample, Option<f64>)> {
        prompt
            .lines()
            .filter(|l| l.starts_with(prefix) && l[1..].starts_with(|c: char| c.is_ascii_digit()))
            .filter_map(|l| {
                let (_, rest) = l.split_once(": ")?;
                let (inline, result) = rest.rsplit_once(" -> ")?;
                let sample = self.space.parse_inline(inline).ok()?;
                let value = result.split_whitespace().next().and_then(|v| v.parse::<f64>().ok());
                Some((sample, value))
            })
            .collect()
    }

    fn propose(&self, request: &ChatRequest) -> Sample {
        let prompt = request.user_text();
        let guidance = self.parse_lines(prompt, 'G');
        let history = self.parse_lines(prompt, 'T');
        let seen: HashSet<&Sample> = history.iter().map(|(s, _)| s).collect();
        let mut rng = self.rng_for(request);

        if let Some((s, _)) = guidance.iter().find(|(s, _)| !seen.contains(s)) {
            return s.clone();
        }
        let incumbent = history
            .iter()
            .filter_map(|(s, v)| v.map(|v| (s, v)))
            .fold(None::<(&Sample, f64)>, |best, (s, v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((s, v)),
            });
        let counts = self.space.option_counts();
        let movable: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 1).collect();
        if let (Some((inc, _)), false) = (incumbent, movable.is_empty()) {
            for _ in 0..MUTATION_TRIES {
                let pos = movable[rng.random_range(0..movable.len())];
                let mut idx = inc.indices().to_vec();
                let cur = idx[pos];
                idx[pos] = if cur == 0 {
                    1
                } else if cur + 1 == counts[pos] || rng.random_bool(0.5) {
                    cur - 1
                } else {
                    cur + 1
                };
                let cand = Sample::new(idx);
                if !seen.contains(&cand) {
                    return cand;
                }
            }
        }
        for _ in 0..MUTATION_TRIES {
            let cand = self.space.random_sample(&mut rng);
            if !seen.contains(&cand) {
                return cand;
            }
        }
        self.space.random_sample(&mut rng)
    }
}

impl ChatProvider for OfflineChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let system = request.system_text();
        let user = request.user_text();
        if system == MODULE_SYSTEM_PROMPT || system == DESIGN_SYSTEM_PROMPT {
            let (tag, keys): (&str, &[&str]) = if system == MODULE_SYSTEM_PROMPT {
                (MODULE_TAG, &MODULE_FIELDS)
            } else {
                (DESIGN_TAG, &DESIGN_FIELDS)
            };
            let summary = lexical_summary(user);
            let fields: Vec<(&str, &str)> = keys.iter().map(|k| (*k, summary.as_str())).collect();
            return Ok(render_kv_block(tag, &fields));
        }
        if system == TUNING_SYSTEM_PROMPT {
            let sample = self.propose(request);
            return render_llm_block(&self.space, &sample).map_err(|e| ProviderError::Malformed(e.to_string()));
        }
        Err(ProviderError::Malformed("offline provider: unrecognized request".into()))
    }

    fn fingerprint(&self) -> String {
        format!("offline:{}:{}", self.space.fingerprint(), self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{parse_llm_response, GuidanceContext, GuidanceLine};
    use crate::summarizer::parse_kv_block;

    fn space() -> ParameterSpace {
        let mut text = String::new();
        for i in 0..3 {
            text.push_str(&format!("[[param]]\nname = \"p{i}\"\noptions = [0,1,2,3]\n"));
        }
        ParameterSpace::from_toml_str(&text).unwrap()
    }

    #[test]
    fn lexical_summary_prefers_frequent_identifiers() {
        let s = lexical_summary("module adder(a, b, sum); assign sum = a + b; carry carry carry endmodule");
        assert!(s.starts_with("carry"), "{s}");
        assert!(!s.contains("assign"));
    }

    #[test]
    fn summaries_parse() {
        let p = OfflineChatProvider::new(space(), 0);
        let req = ChatRequest::new(MODULE_SYSTEM_PROMPT, module_prompt("alu", "module alu(); endmodule", None));
        let out = p.complete(&req).unwrap();
        assert!(parse_kv_block(&out, &MODULE_FIELDS).is_ok());
    }

    #[test]
    fn replays_guidance_then_mutates() {
        let sp = space();
        let p = OfflineChatProvider::new(sp.clone(), 1);
        let g = |v: Vec<usize>, o: f64| {
            let sample = Sample::new(v);
            GuidanceLine {
                assignment: sp.render_assignment(&sample).unwrap().to_inline(),
                sample,
                objective: o,
            }
        };
        let ctx = GuidanceContext {
            design_id: "a".into(),
            score: 1.0,
            entries: vec![g(vec![1, 1, 1], 1.0), g(vec![2, 2, 2], 2.0)],
        };
        let mut h = crate::search::SearchHistory::new("crop", crate::evaluator::Metric::Power, &sp, "b");
        let ask = |h: &crate::search::SearchHistory| {
            let prompt = crate::search::build_llm_prompt(&sp, h, Some(&ctx), crate::evaluator::Metric::Power);
            let out = p.complete(&ChatRequest::new(TUNING_SYSTEM_PROMPT, prompt)).unwrap();
            parse_llm_response(&sp, &out).unwrap()
        };
        let q = |v: f64| crate::evaluator::QorResult {
            power_mw: v,
            area: 0.0,
            tns_ns: 0.0,
            drc_violations: 0,
            flow_seconds: 0.0,
        };
        use crate::search::{Trial, TrialOrigin};
        let first = ask(&h);
        assert_eq!(first.indices(), &[1, 1, 1]);
        h.push(Trial::success(1, first, q(5.0), 5.0, false, TrialOrigin::Llm));
        let second = ask(&h);
        assert_eq!(second.indices(), &[2, 2, 2]);
        h.push(Trial::success(2, second, q(3.0), 3.0, false, TrialOrigin::Llm));
        let third = ask(&h);
        let diff: usize = third
            .indices()
            .iter()
            .zip([2, 2, 2])
            .map(|(a, b)| a.abs_diff(b))
            .sum();
        assert_eq!(diff, 1);
        assert_eq!(third, ask(&h));
    }
}
