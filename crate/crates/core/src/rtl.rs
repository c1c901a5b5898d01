//! Lexical RTL scanning: module boundary extraction and chunking.
//!
//! This is a comment- and string-aware keyword scan, not a Verilog parser.
//! It only needs to find `module … endmodule` spans and top-level statement
//! boundaries inside them.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

/// Default per-module token limit before chunked summarization kicks in.
pub const DEFAULT_CHUNK_TOKENS: usize = 24_000;

#[derive(Debug, Error)]
pub enum RtlError {
    #[error("no RTL files with extensions {extensions:?} under {root}")]
    NoRtlFiles { root: String, extensions: Vec<String> },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("module `{name}` defined in both {first} and {second}")]
    DuplicateModule {
        name: String,
        first: String,
        second: String,
    },
    #[error("unbalanced module/endmodule at line {line}: {message}")]
    Unbalanced { line: usize, message: String },
    #[error("no module declarations found")]
    NoModules,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtlModuleSource {
    pub module_name: String,
    /// Shared preamble (if any) followed by the verbatim module span.
    pub source_text: String,
    /// Byte offset in `source_text` where the module span begins.
    pub body_offset: usize,
    pub file_path: PathBuf,
    pub approx_tokens: usize,
}

impl RtlModuleSource {
    /// The verbatim `module … endmodule` region.
    pub fn span(&self) -> &str {
        &self.source_text[self.body_offset..]
    }

    pub fn preamble(&self) -> &str {
        self.source_text[..self.body_offset].trim_end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSource {
    pub design_id: String,
    pub modules: Vec<RtlModuleSource>,
    pub top_module: Option<String>,
}

impl DesignSource {
    pub fn from_modules(
        design_id: impl Into<String>,
        modules: Vec<RtlModuleSource>,
    ) -> Result<Self, RtlError> {
        if modules.is_empty() {
            return Err(RtlError::NoModules);
        }
        let mut seen: Vec<(&str, &Path)> = Vec::new();
        for m in &modules {
            if let Some((_, first)) = seen.iter().find(|(n, _)| *n == m.module_name) {
                return Err(RtlError::DuplicateModule {
                    name: m.module_name.clone(),
                    first: first.display().to_string(),
                    second: m.file_path.display().to_string(),
                });
            }
            seen.push((&m.module_name, &m.file_path));
        }
        let top_module = infer_top(&modules);
        Ok(DesignSource {
            design_id: design_id.into(),
            modules,
            top_module,
        })
    }
}

/// The unique module that no other module references, if there is exactly one.
fn infer_top(modules: &[RtlModuleSource]) -> Option<String> {
    let mut referenced = HashSet::new();
    for m in modules {
        let span = m.span();
        for tok in tokenize(span) {
            if let Token::Ident { start, end } = tok {
                let word = &span[start..end];
                if word != m.module_name {
                    referenced.insert(word.to_string());
                }
            }
        }
    }
    let mut roots = modules
        .iter()
        .filter(|m| !referenced.contains(&m.module_name));
    match (roots.next(), roots.next()) {
        (Some(m), None) => Some(m.module_name.clone()),
        _ => None,
    }
}

/// `ceil(bytes / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Token {
    Ident { start: usize, end: usize },
    Punct { at: usize, ch: u8 },
}

/// Produces identifiers and punctuation outside comments, strings, and
/// `` `define `` bodies.
fn tokenize(src: &str) -> Vec<Token> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let is_start = |c: u8| c.is_ascii_alphabetic() || c == b'_';
    let is_cont = |c: u8| c.is_ascii_alphanumeric() || c == b'_' || c == b'$';
    while i < b.len() {
        let c = b[i];
        match c {
            b'/' if b.get(i + 1) == Some(&b'/') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < b.len() && !(b[i] == b'*' && b.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                i = (i + 2).min(b.len());
            }
            b'"' => {
                i += 1;
                while i < b.len() && b[i] != b'"' {
                    if b[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                i = (i + 1).min(b.len());
            }
            b'\\' => {
                // escaped identifier runs to whitespace
                let start = i;
                while i < b.len() && !b[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push(Token::Ident { start, end: i });
            }
            b'`' => {
                let start = i + 1;
                i += 1;
                while i < b.len() && is_cont(b[i]) {
                    i += 1;
                }
                if &src[start..i] == "define" {
                    while i < b.len() && b[i] != b'\n' {
                        if b[i] == b'\\' && b.get(i + 1) == Some(&b'\n') {
                            i += 1;
                        }
                        i += 1;
                    }
                }
            }
            b'$' => {
                i += 1;
                while i < b.len() && is_cont(b[i]) {
                    i += 1;
                }
            }
            b'\'' => {
                // sized/based literal: skip base letter and digits
                i += 1;
                while i < b.len() && (is_cont(b[i]) || b[i] == b'?') {
                    i += 1;
                }
            }
            _ if c.is_ascii_digit() => {
                while i < b.len() && (is_cont(b[i]) || b[i] == b'.') {
                    i += 1;
                }
            }
            _ if is_start(c) => {
                let start = i;
                while i < b.len() && is_cont(b[i]) {
                    i += 1;
                }
                out.push(Token::Ident { start, end: i });
            }
            _ if c.is_ascii_whitespace() => i += 1,
            _ => {
                out.push(Token::Punct { at: i, ch: c });
                i += 1;
            }
        }
    }
    out
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&c| c == b'\n').count() + 1
}

/// Splits RTL text into per-module units. Text outside every module span
/// (includes, defines, package imports) is joined into a preamble that is
/// prefixed to each unit.
pub fn split_modules(text: &str, file_path: &Path) -> Result<Vec<RtlModuleSource>, RtlError> {
    let toks = tokenize(text);
    let word = |t: &Token| match *t {
        Token::Ident { start, end } => Some(&text[start..end]),
        Token::Punct { .. } => None,
    };
    let mut spans: Vec<(String, usize, usize)> = Vec::new();
    let mut depth = 0usize;
    let mut open: Option<(String, usize)> = None;
    let mut k = 0;
    while k < toks.len() {
        let t = toks[k];
        match word(&t) {
            Some("module") | Some("macromodule") => {
                if depth == 0 {
                    let Token::Ident { start, .. } = t else { unreachable!() };
                    let mut j = k + 1;
                    while matches!(toks.get(j).and_then(word), Some("automatic" | "static")) {
                        j += 1;
                    }
                    let name = toks.get(j).and_then(word).ok_or_else(|| RtlError::Unbalanced {
                        line: line_at(text, start),
                        message: "module keyword without a name".into(),
                    })?;
                    open = Some((name.to_string(), start));
                }
                depth += 1;
            }
            Some("endmodule") => {
                let Token::Ident { start, mut end } = t else { unreachable!() };
                if depth == 0 {
                    return Err(RtlError::Unbalanced {
                        line: line_at(text, start),
                        message: "endmodule without matching module".into(),
                    });
                }
                depth -= 1;
                if depth == 0 {
                    // optional `: label`
                    if let (Some(Token::Punct { ch: b':', .. }), Some(Token::Ident { end: e, .. })) =
                        (toks.get(k + 1), toks.get(k + 2))
                    {
                        end = *e;
                        k += 2;
                    }
                    let (name, begin) = open.take().expect("open span at depth 1");
                    spans.push((name, begin, end));
                }
            }
            _ => {}
        }
        k += 1;
    }
    if let Some((name, begin)) = open {
        return Err(RtlError::Unbalanced {
            line: line_at(text, begin),
            message: format!("module `{name}` has no endmodule"),
        });
    }
    if spans.is_empty() {
        return Err(RtlError::NoModules);
    }

    let mut preamble_parts = Vec::new();
    let mut cursor = 0;
    for (_, s, e) in &spans {
        let seg = text[cursor..*s].trim();
        if !seg.is_empty() {
            preamble_parts.push(seg);
        }
        cursor = *e;
    }
    let tail = text[cursor..].trim();
    if !tail.is_empty() {
        preamble_parts.push(tail);
    }
    let preamble = preamble_parts.join("\n");

    Ok(spans
        .into_iter()
        .map(|(name, s, e)| {
            let span = &text[s..e];
            let (source_text, body_offset) = if preamble.is_empty() {
                (span.to_string(), 0)
            } else {
                (format!("{preamble}\n{span}"), preamble.len() + 1)
            };
            RtlModuleSource {
                module_name: name,
                approx_tokens: estimate_tokens(&source_text),
                source_text,
                body_offset,
                file_path: file_path.to_path_buf(),
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub extensions: Vec<String>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            extensions: vec!["v".into(), "sv".into()],
        }
    }
}

/// Collects all modules under `root` in (path, in-file) order.
pub fn scan_design(root: &Path, design_id: &str, opts: &ScanOptions) -> Result<DesignSource, RtlError> {
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| RtlError::Io {
            path: e.path().unwrap_or(root).display().to_string(),
            source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk error")),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry.path().extension().and_then(|e| e.to_str()).unwrap_or("");
        if opts.extensions.iter().any(|x| x.eq_ignore_ascii_case(ext)) {
            files.push(entry.into_path());
        }
    }
    if files.is_empty() {
        return Err(RtlError::NoRtlFiles {
            root: root.display().to_string(),
            extensions: opts.extensions.clone(),
        });
    }
    let mut modules = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|source| RtlError::Io {
            path: f.display().to_string(),
            source,
        })?;
        match split_modules(&text, f) {
            Ok(ms) => modules.extend(ms),
            Err(RtlError::NoModules) => {}
            Err(e) => return Err(e),
        }
    }
    DesignSource::from_modules(design_id, modules)
}

/// Byte offsets where top-level statements of a module span end.
fn statement_boundaries(span: &str) -> Vec<usize> {
    const OPEN: &[&str] = &[
        "begin", "case", "casex", "casez", "randcase", "fork", "function", "task", "generate",
        "specify", "module", "macromodule", "class", "interface", "package", "covergroup",
    ];
    const CLOSE: &[&str] = &[
        "end", "endcase", "join", "join_any", "join_none", "endfunction", "endtask",
        "endgenerate", "endspecify", "endmodule", "endclass", "endinterface", "endpackage",
        "endgroup",
    ];
    let mut cuts = Vec::new();
    let mut block = 0i64;
    let mut paren = 0i64;
    for t in tokenize(span) {
        match t {
            Token::Ident { start, end } => {
                let w = &span[start..end];
                if OPEN.contains(&w) {
                    block += 1;
                } else if CLOSE.contains(&w) {
                    block -= 1;
                    // depth 1 is the module body itself
                    if block == 1 && paren == 0 {
                        cuts.push(end);
                    }
                }
            }
            Token::Punct { at, ch } => match ch {
                b'(' | b'[' | b'{' => paren += 1,
                b')' | b']' | b'}' => paren -= 1,
                b';' if block == 1 && paren == 0 => cuts.push(at + 1),
                _ => {}
            },
        }
    }
    cuts
}

/// Splits a module into chunks of at most `max_tokens` (estimated), cutting
/// only at top-level statement boundaries. A single statement larger than the
/// limit becomes its own chunk. Each chunk carries the module preamble.
pub fn chunk_module(module: &RtlModuleSource, max_tokens: usize) -> Vec<String> {
    if module.approx_tokens <= max_tokens {
        return vec![module.source_text.clone()];
    }
    let span = module.span();
    let preamble = module.preamble();
    let prefix_tokens = estimate_tokens(preamble);
    let budget = max_tokens.saturating_sub(prefix_tokens).max(1);
    let mut cuts = statement_boundaries(span);
    if cuts.last() != Some(&span.len()) {
        cuts.push(span.len());
    }
    let mut chunks = Vec::new();
    let mut begin = 0;
    let mut last_cut = 0;
    for &cut in &cuts {
        if estimate_tokens(&span[begin..cut]) > budget && last_cut > begin {
            chunks.push(&span[begin..last_cut]);
            begin = last_cut;
        }
        last_cut = cut;
    }
    if begin < span.len() {
        chunks.push(&span[begin..]);
    }
    chunks
        .into_iter()
        .map(|c| {
            if preamble.is_empty() {
                c.to_string()
            } else {
                format!("{preamble}\n{c}")
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("t.v")
    }

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens(&"a".repeat(400)), 100);
        assert_eq!(estimate_tokens(&"a".repeat(401)), 101);
    }

    #[test]
    fn single_module() {
        let ms = split_modules("module adder(input a, output b);\nassign b = a;\nendmodule\n", &p()).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].module_name, "adder");
        assert!(ms[0].span().starts_with("module adder"));
        assert!(ms[0].span().ends_with("endmodule"));
    }

    #[test]
    fn define_is_attached_as_preamble() {
        let ms = split_modules("`define W 8\nmodule m; endmodule\n", &p()).unwrap();
        assert_eq!(ms.len(), 1);
        assert!(ms[0].source_text.contains("`define W 8"));
        assert!(ms[0].source_text.contains("module m; endmodule"));
        assert_eq!(ms[0].span(), "module m; endmodule");
    }

    #[test]
    fn two_modules_partition() {
        let text = "// header\nmodule a; wire x; endmodule\n\nmodule b(input y);\nendmodule : b\n";
        let ms = split_modules(text, &p()).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].span(), "module a; wire x; endmodule");
        assert_eq!(ms[1].span(), "module b(input y);\nendmodule : b");
        assert!(ms[0].source_text.starts_with("// header\n"));
    }

    #[test]
    fn unbalanced() {
        assert!(matches!(
            split_modules("module m; wire x;\n", &p()),
            Err(RtlError::Unbalanced { .. })
        ));
        assert!(matches!(
            split_modules("endmodule\n", &p()),
            Err(RtlError::Unbalanced { .. })
        ));
        assert!(matches!(split_modules("wire x;", &p()), Err(RtlError::NoModules)));
    }

    #[test]
    fn keywords_in_comments_and_strings_are_ignored() {
        let text = "module m; // module fake\n/* endmodule */ initial $display(\"endmodule\");\nendmodule";
        let ms = split_modules(text, &p()).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].span(), text);
    }

    #[test]
    fn nested_module_stays_inside() {
        let text = "module outer; module inner; endmodule endmodule";
        let ms = split_modules(text, &p()).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].module_name, "outer");
    }

    #[test]
    fn chunking_respects_statement_boundaries() {
        let mut body = String::from("module big(input clk);\n");
        for i in 0..200 {
            body.push_str(&format!("  reg [7:0] r{i}; always @(posedge clk) begin r{i} <= r{i} + 1; end\n"));
        }
        body.push_str("endmodule");
        let m = split_modules(&body, &p()).unwrap().remove(0);
        let chunks = chunk_module(&m, 500);
        assert!(chunks.len() > 1);
        assert_eq!(chunks.concat(), m.span());
        for c in &chunks[..chunks.len() - 1] {
            let t = c.trim_end();
            assert!(t.ends_with(';') || t.ends_with("end"), "chunk ends mid-statement: {t:?}");
        }
        assert_eq!(chunk_module(&m, 1_000_000), vec![m.source_text.clone()]);
    }

    #[test]
    fn top_module_inference() {
        let text = "module leaf; endmodule\nmodule top; leaf u0(); endmodule";
        let ms = split_modules(text, &p()).unwrap();
        let d = DesignSource::from_modules("d", ms).unwrap();
        assert_eq!(d.top_module.as_deref(), Some("top"));
    }
}
