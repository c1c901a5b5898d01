//! Structured module and design summaries produced through a [`ChatProvider`].
//!
//! Responses are requested as one fenced `key: value` block whose keys match
//! the schema exactly. Malformed replies trigger a repair turn that quotes the
//! reply and restates the schema.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{ChatMessage, ChatProvider, ChatRequest, ProviderError};
use crate::rtl::{chunk_module, DesignSource, RtlModuleSource, DEFAULT_CHUNK_TOKENS};

pub const MODULE_FIELDS: [&str; 6] = [
    "inputs",
    "outputs",
    "overall_functionality",
    "critical_submodules",
    "design_choices",
    "timing_constraints",
];

pub const DESIGN_FIELDS: [&str; 10] = [
    "design_name",
    "design_functionality",
    "primary_inputs",
    "primary_outputs",
    "key_design_characteristics",
    "key_modules_and_functionalities",
    "module_interactions",
    "design_optimizations",
    "potential_applications",
    "timing_considerations",
];

const MODULE_FIELD_HELP: [&str; 6] = [
    "every input port with bit width and role, grouped by interface",
    "every output port with bit width and role, grouped by interface",
    "what the module computes and why it exists, in one or two sentences",
    "instantiated submodules and the logic they implement",
    "notable architectural or implementation techniques",
    "likely critical paths, pipelining, and clocking concerns",
];

const DESIGN_FIELD_HELP: [&str; 10] = [
    "a short descriptive name derived from what the circuit does",
    "what the complete circuit does",
    "all top-level inputs",
    "all top-level outputs",
    "two or three sentences on architecture and structure",
    "important modules mapped to what each one does",
    "how the modules exchange data and control",
    "optimizations that affect performance, power, or area",
    "where a circuit like this would be used",
    "critical timing paths or constraints for the whole design",
];

pub const MODULE_TAG: &str = "module_summary";
pub const DESIGN_TAG: &str = "design_summary";

pub const MODULE_SYSTEM_PROMPT: &str = "You are a senior RTL design engineer. You read Verilog/SystemVerilog \
modules and write precise structured analyses of them for a design knowledge base.";

pub const DESIGN_SYSTEM_PROMPT: &str = "You are a senior RTL design engineer. You combine per-module analyses \
of a hardware design into one structured description of the whole circuit, covering both concrete \
interface facts and higher-level architectural character.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("no fenced block found")]
    MissingBlock,
    #[error("missing fields: {}", .0.join(", "))]
    MissingFields(Vec<String>),
    #[error("field `{0}` appears more than once")]
    DuplicateField(String),
    #[error("text before the first field: `{0}`")]
    OrphanLine(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaryError {
    #[error("provider failed after {attempts} attempts: {source}")]
    Provider {
        attempts: usize,
        #[source]
        source: ProviderError,
    },
    #[error("response still unparseable after {attempts} attempts ({reason}); last response: {last_raw}")]
    Unparseable {
        attempts: usize,
        reason: SchemaError,
        last_raw: String,
    },
    #[error("design summary needs at least one module summary")]
    NoModuleSummaries,
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
}

/// Renders a fenced `key: value` block. Values are trimmed.
pub fn render_kv_block(tag: &str, fields: &[(&str, &str)]) -> String {
    let mut out = format!("```{tag}\n");
    for (k, v) in fields {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(v.trim());
        out.push('\n');
    }
    out.push_str("```");
    out
}

fn normalize_key(k: &str) -> String {
    k.trim()
        .trim_matches(|c| c == '*' || c == '`' || c == '-')
        .trim()
        .to_ascii_lowercase()
        .replace([' ', '-'], "_")
}

/// Extracts the contents of the first fenced block in `text`.
pub fn extract_fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Parses the first fenced block into values ordered like `keys`.
/// Lines that do not start with a schema key continue the previous value.
pub fn parse_kv_block(text: &str, keys: &[&str]) -> Result<Vec<String>, SchemaError> {
    let body = extract_fenced_block(text).ok_or(SchemaError::MissingBlock)?;
    let mut values: Vec<Option<String>> = vec![None; keys.len()];
    let mut current: Option<usize> = None;
    for line in body.lines() {
        let field = line.find(':').and_then(|at| {
            let k = normalize_key(&line[..at]);
            keys.iter().position(|x| *x == k).map(|i| (i, &line[at + 1..]))
        });
        match field {
            Some((i, rest)) => {
                if values[i].is_some() {
                    return Err(SchemaError::DuplicateField(keys[i].to_string()));
                }
                values[i] = Some(rest.trim().to_string());
                current = Some(i);
            }
            None => match current {
                Some(i) => {
                    let v = values[i].as_mut().expect("current field set");
                    if !line.trim().is_empty() {
                        if !v.is_empty() {
                            v.push('\n');
                        }
                        v.push_str(line.trim());
                    }
                }
                None if line.trim().is_empty() => {}
                None => return Err(SchemaError::OrphanLine(line.trim().to_string())),
            },
        }
    }
    let missing: Vec<String> = keys
        .iter()
        .zip(&values)
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(SchemaError::MissingFields(missing));
    }
    Ok(values.into_iter().map(|v| v.expect("checked")).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSummary {
    pub module_name: String,
    pub inputs: String,
    pub outputs: String,
    pub overall_functionality: String,
    pub critical_submodules: String,
    pub design_choices: String,
    pub timing_constraints: String,
}

impl ModuleSummary {
    pub fn fields(&self) -> [(&'static str, &str); 6] {
        [
            ("inputs", &self.inputs),
            ("outputs", &self.outputs),
            ("overall_functionality", &self.overall_functionality),
            ("critical_submodules", &self.critical_submodules),
            ("design_choices", &self.design_choices),
            ("timing_constraints", &self.timing_constraints),
        ]
    }

    pub fn from_values(module_name: &str, v: Vec<String>) -> Self {
        let mut it = v.into_iter();
        let mut next = || it.next().unwrap_or_default();
        ModuleSummary {
            module_name: module_name.to_string(),
            inputs: next(),
            outputs: next(),
            overall_functionality: next(),
            critical_submodules: next(),
            design_choices: next(),
            timing_constraints: next(),
        }
    }

    pub fn to_document(&self) -> String {
        render_kv_block(MODULE_TAG, &self.fields())
    }

    pub fn from_document(module_name: &str, text: &str) -> Result<Self, SchemaError> {
        parse_kv_block(text, &MODULE_FIELDS).map(|v| Self::from_values(module_name, v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design_name: String,
    pub design_functionality: String,
    pub primary_inputs: String,
    pub primary_outputs: String,
    pub key_design_characteristics: String,
    pub key_modules_and_functionalities: String,
    pub module_interactions: String,
    pub design_optimizations: String,
    pub potential_applications: String,
    pub timing_considerations: String,
}

impl DesignSummary {
    pub fn fields(&self) -> [(&'static str, &str); 10] {
        [
            ("design_name", &self.design_name),
            ("design_functionality", &self.design_functionality),
            ("primary_inputs", &self.primary_inputs),
            ("primary_outputs", &self.primary_outputs),
            ("key_design_characteristics", &self.key_design_characteristics),
            ("key_modules_and_functionalities", &self.key_modules_and_functionalities),
            ("module_interactions", &self.module_interactions),
            ("design_optimizations", &self.design_optimizations),
            ("potential_applications", &self.potential_applications),
            ("timing_considerations", &self.timing_considerations),
        ]
    }

    pub fn from_values(v: Vec<String>) -> Self {
        let mut it = v.into_iter();
        let mut next = || it.next().unwrap_or_default();
        DesignSummary {
            design_name: next(),
            design_functionality: next(),
            primary_inputs: next(),
            primary_outputs: next(),
            key_design_characteristics: next(),
            key_modules_and_functionalities: next(),
            module_interactions: next(),
            design_optimizations: next(),
            potential_applications: next(),
            timing_considerations: next(),
        }
    }

    /// Every field set to `value`.
    pub fn uniform(value: &str) -> Self {
        Self::from_values(vec![value.to_string(); DESIGN_FIELDS.len()])
    }

    pub fn to_document(&self) -> String {
        render_kv_block(DESIGN_TAG, &self.fields())
    }

    pub fn from_document(text: &str) -> Result<Self, SchemaError> {
        parse_kv_block(text, &DESIGN_FIELDS).map(Self::from_values)
    }
}

/// Canonical embedding input: one `key: value` line per field in schema order.
pub fn render_summary_text(summary: &DesignSummary) -> String {
    summary
        .fields()
        .iter()
        .map(|(k, v)| format!("{k}: {}", v.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn schema_instructions(tag: &str, keys: &[&str], help: &[&str]) -> String {
    let mut out = format!(
        "Respond with exactly one fenced block tagged `{tag}` and nothing else inside it. \
Use one line per field in the form `key: value`, with exactly these keys in this order \
(write `none` when a field does not apply):\n"
    );
    for (k, h) in keys.iter().zip(help) {
        out.push_str(&format!("- {k}: {h}\n"));
    }
    out.push_str(&format!("\nFormat:\n```{tag}\n"));
    for k in keys {
        out.push_str(&format!("{k}: ...\n"));
    }
    out.push_str("```\n");
    out
}

pub fn module_prompt(module_name: &str, source: &str, part: Option<(usize, usize)>) -> String {
    let scope = match part {
        Some((i, n)) => format!(
            "This is part {i} of {n} of module `{module_name}`; describe only what this part shows.\n\n"
        ),
        None => String::new(),
    };
    format!(
        "Analyze the RTL module `{module_name}`.\n\n{scope}```verilog\n{}\n```\n\n{}",
        source.trim_end(),
        schema_instructions(MODULE_TAG, &MODULE_FIELDS, &MODULE_FIELD_HELP)
    )
}

pub fn module_merge_prompt(module_name: &str, parts: &[ModuleSummary]) -> String {
    let mut out = format!(
        "Module `{module_name}` was analyzed in {} parts. Merge the partial analyses below into one \
analysis of the whole module.\n\n",
        parts.len()
    );
    for (i, p) in parts.iter().enumerate() {
        out.push_str(&format!("### Part {}\n{}\n\n", i + 1, p.to_document()));
    }
    out.push_str(&schema_instructions(MODULE_TAG, &MODULE_FIELDS, &MODULE_FIELD_HELP));
    out
}

/// Final-synthesis prompt. Module summaries appear in the given order.
pub fn design_prompt(design_id: &str, summaries: &[ModuleSummary]) -> String {
    let mut out = format!(
        "Design `{design_id}` consists of {} module(s). Their analyses follow in source order.\n\n",
        summaries.len()
    );
    for (i, s) in summaries.iter().enumerate() {
        out.push_str(&format!("### Module {}: {}\n", i + 1, s.module_name));
        for (k, v) in s.fields() {
            out.push_str(&format!("{k}: {}\n", v.trim()));
        }
        out.push('\n');
    }
    out.push_str("Write a structured summary of the complete design.\n\n");
    out.push_str(&schema_instructions(DESIGN_TAG, &DESIGN_FIELDS, &DESIGN_FIELD_HELP));
    out
}

fn repair_prompt(raw: &str, reason: &SchemaError, tag: &str, keys: &[&str]) -> String {
    format!(
        "Your previous response could not be parsed ({reason}). It was:\n\n<<<\n{}\n>>>\n\n\
Reply again with exactly one fenced block tagged `{tag}` containing these keys, one `key: value` \
line each: {}.",
        raw.trim(),
        keys.join(", ")
    )
}

#[derive(Debug, Clone)]
pub struct SummarizerOptions {
    /// Extra attempts after the first (transport failures and repairs).
    pub max_retries: usize,
    pub chunk_tokens: usize,
    /// Concurrent module requests. Sequence-scripted mocks need 1.
    pub max_in_flight: usize,
}

impl Default for SummarizerOptions {
    fn default() -> Self {
        SummarizerOptions {
            max_retries: 2,
            chunk_tokens: DEFAULT_CHUNK_TOKENS,
            max_in_flight: 1,
        }
    }
}

fn request_structured(
    provider: &dyn ChatProvider,
    system: &str,
    user: String,
    tag: &str,
    keys: &[&str],
    max_retries: usize,
) -> Result<Vec<String>, SummaryError> {
    let base = ChatRequest::new(system, user);
    let mut request = base.clone();
    let attempts = max_retries + 1;
    let mut last_failure: Option<SummaryError> = None;
    for _ in 0..attempts {
        match provider.complete(&request) {
            Err(source) => {
                last_failure = Some(SummaryError::Provider { attempts, source });
            }
            Ok(raw) => match parse_kv_block(&raw, keys) {
                Ok(v) => return Ok(v),
                Err(reason) => {
                    let mut messages = base.messages.clone();
                    messages.push(ChatMessage {
                        role: crate::provider::Role::Assistant,
                        content: raw.clone(),
                    });
                    messages.push(ChatMessage::user(repair_prompt(&raw, &reason, tag, keys)));
                    request = ChatRequest {
                        messages,
                        temperature: base.temperature,
                    };
                    last_failure = Some(SummaryError::Unparseable {
                        attempts,
                        reason,
                        last_raw: raw,
                    });
                }
            },
        }
    }
    Err(last_failure.expect("at least one attempt"))
}

/// Summarizes one module; oversized modules are summarized chunk-wise and
/// merged in a final pass.
pub fn summarize_module(
    provider: &dyn ChatProvider,
    module: &RtlModuleSource,
    opts: &SummarizerOptions,
) -> Result<ModuleSummary, SummaryError> {
    let chunks = chunk_module(module, opts.chunk_tokens);
    let ask = |prompt: String| {
        request_structured(
            provider,
            MODULE_SYSTEM_PROMPT,
            prompt,
            MODULE_TAG,
            &MODULE_FIELDS,
            opts.max_retries,
        )
        .map(|v| ModuleSummary::from_values(&module.module_name, v))
    };
    if chunks.len() == 1 {
        return ask(module_prompt(&module.module_name, &chunks[0], None));
    }
    let n = chunks.len();
    let parts = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| ask(module_prompt(&module.module_name, c, Some((i + 1, n)))))
        .collect::<Result<Vec<_>, _>>()?;
    ask(module_merge_prompt(&module.module_name, &parts))
}

pub fn synthesize_design_summary(
    provider: &dyn ChatProvider,
    summaries: &[ModuleSummary],
    design_id: &str,
    opts: &SummarizerOptions,
) -> Result<DesignSummary, SummaryError> {
    if summaries.is_empty() {
        return Err(SummaryError::NoModuleSummaries);
    }
    request_structured(
        provider,
        DESIGN_SYSTEM_PROMPT,
        design_prompt(design_id, summaries),
        DESIGN_TAG,
        &DESIGN_FIELDS,
        opts.max_retries,
    )
    .map(DesignSummary::from_values)
}

/// Module summaries (scan order) followed by the final synthesis.
pub fn summarize_design(
    provider: &dyn ChatProvider,
    design: &DesignSource,
    opts: &SummarizerOptions,
) -> Result<(Vec<ModuleSummary>, DesignSummary), SummaryError> {
    let limit = opts.max_in_flight.max(1);
    let mut modules = Vec::with_capacity(design.modules.len());
    for batch in design.modules.chunks(limit) {
        if limit == 1 {
            modules.push(summarize_module(provider, &batch[0], opts)?);
            continue;
        }
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = batch
                .iter()
                .map(|m| s.spawn(move || summarize_module(provider, m, opts)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("summarizer thread panicked"))
                .collect()
        });
        for r in results {
            modules.push(r?);
        }
    }
    let design_summary = synthesize_design_summary(provider, &modules, &design.design_id, opts)?;
    Ok((modules, design_summary))
}

/// Writes `design.txt` and `modules/<name>.txt` under `dir`.
pub fn write_summaries(
    dir: &Path,
    modules: &[ModuleSummary],
    design: &DesignSummary,
) -> Result<(), SummaryError> {
    let io = |p: &Path, e: std::io::Error| SummaryError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    let mdir = dir.join("modules");
    std::fs::create_dir_all(&mdir).map_err(|e| io(&mdir, e))?;
    for m in modules {
        let p = mdir.join(format!("{}.txt", m.module_name.trim_start_matches('\\')));
        std::fs::write(&p, m.to_document() + "\n").map_err(|e| io(&p, e))?;
    }
    let p = dir.join("design.txt");
    std::fs::write(&p, design.to_document() + "\n").map_err(|e| io(&p, e))
}

pub fn read_design_summary(path: &Path) -> Result<DesignSummary, SummaryError> {
    let text = std::fs::read_to_string(path).map_err(|e| SummaryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    DesignSummary::from_document(&text).map_err(|reason| SummaryError::Unparseable {
        attempts: 0,
        reason,
        last_raw: text,
    })
}
