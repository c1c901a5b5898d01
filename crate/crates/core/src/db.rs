//! Design database: embeddings plus parameter guidance, with exact MIPS.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "FTDB" | version u32 | body_len u64 | sha256(body) [32] | body
//! body   = space_fp str | dim u32 | metric str | n u32 | record*
//! record = id str | label opt-str | 10 × summary str | source u8
//!          | dim u32 | dim × f32 | k u32 | m u32 | entry*
//! entry  = c u32 | c × u32 | power f64 | area f64 | tns f64 | drc u64
//!          | flow f64 | objective f64
//! str    = len u32 | utf-8 bytes
//! ```

use std::collections::{HashMap, HashSet};
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{cosine_similarity, inner_product_wide};
use crate::evaluator::{Metric, QorResult};
use crate::provider::EmbeddingSource;
use crate::search::SearchHistory;
use crate::space::{ParameterSpace, Sample};
use crate::summarizer::{DesignSummary, DESIGN_FIELDS};
use crate::Embedding;

pub const DB_MAGIC: &[u8; 4] = b"FTDB";
pub const DB_VERSION: u32 = 1;
pub const DEFAULT_GUIDANCE_K: usize = 5;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("corrupt database file: {0}")]
    Corrupt(String),
    #[error("database format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("design `{0}` already in database")]
    DuplicateId(String),
    #[error("embedding dimension {actual} does not match database dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("database is empty")]
    Empty,
    #[error("record `{0}` has no category label")]
    MissingLabel(String),
    #[error("label `{0}` has no other records in the database")]
    LabelAbsent(String),
    #[error("parameter space fingerprint {found} does not match database {expected}")]
    SpaceMismatch { expected: String, found: String },
    #[error("guidance sample invalid for the database space: {0}")]
    InvalidGuidance(String),
    #[error("history has no successful trials")]
    EmptyHistory,
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceEntry {
    pub sample: Sample,
    pub qor: QorResult,
    pub objective: f64,
}

/// Best known samples of one design, ascending by objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGuidance {
    pub k: usize,
    pub entries: Vec<GuidanceEntry>,
}

/// The `k` lowest-objective distinct samples of a history. Repeat
/// evaluations of a sample keep the first one.
pub fn compile_guidance(history: &SearchHistory, k: usize) -> Result<ParameterGuidance, DbError> {
    if k == 0 {
        return Err(DbError::InvalidK);
    }
    let mut seen = HashSet::new();
    let mut entries: Vec<GuidanceEntry> = history
        .successful()
        .filter(|t| seen.insert(t.sample.clone()))
        .map(|t| GuidanceEntry {
            sample: t.sample.clone(),
            qor: t.qor.expect("successful trial has QoR"),
            objective: t.objective.expect("successful trial has objective"),
        })
        .collect();
    if entries.is_empty() {
        return Err(DbError::EmptyHistory);
    }
    entries.sort_by(|a, b| a.objective.partial_cmp(&b.objective).expect("finite objective"));
    entries.truncate(k);
    Ok(ParameterGuidance { k, entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRecord {
    pub design_id: String,
    pub category_label: Option<String>,
    pub summary: DesignSummary,
    pub embedding: Embedding,
    pub guidance: ParameterGuidance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbHeader {
    pub version: u32,
    pub space_fingerprint: String,
    pub dim: usize,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignDatabase {
    pub header: DbHeader,
    records: Vec<DesignRecord>,
}

/// A labeled query for retrieval evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalQuery {
    pub embedding: Embedding,
    pub label: String,
    /// Record excluded from the candidate set (leave-one-out).
    pub exclude_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Similarity {
    #[default]
    InnerProduct,
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRow {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
}

pub fn retrieval_rows_csv(rows: &[RetrievalRow]) -> String {
    let mut out = String::from("k,precision,recall\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.k, r.precision, r.recall));
    }
    out
}

impl DesignDatabase {
    pub fn new(space: &ParameterSpace, dim: usize, metric: Metric) -> Self {
        DesignDatabase {
            header: DbHeader {
                version: DB_VERSION,
                space_fingerprint: space.fingerprint(),
                dim,
                metric,
            },
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[DesignRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DesignRecord> {
        self.records.iter().find(|r| r.design_id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn check_space(&self, space: &ParameterSpace) -> Result<(), DbError> {
        let found = space.fingerprint();
        if found != self.header.space_fingerprint {
            return Err(DbError::SpaceMismatch {
                expected: self.header.space_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn insert(&mut self, record: DesignRecord) -> Result<(), DbError> {
        if self.contains(&record.design_id) {
            return Err(DbError::DuplicateId(record.design_id));
        }
        if record.embedding.dim() != self.header.dim {
            return Err(DbError::DimensionMismatch {
                expected: self.header.dim,
                actual: record.embedding.dim(),
            });
        }
        self.records.push(record);
        Ok(())
    }

    /// Like [`insert`](Self::insert), also checking guidance samples against `space`.
    pub fn insert_checked(&mut self, space: &ParameterSpace, record: DesignRecord) -> Result<(), DbError> {
        self.check_space(space)?;
        for e in &record.guidance.entries {
            space
                .validate(&e.sample)
                .map_err(|v| DbError::InvalidGuidance(format!("{}: {:?}", record.design_id, v)))?;
        }
        self.insert(record)
    }

    /// Exact top-`k` by score, descending; ties by ascending design id.
    pub fn retrieve_mips(
        &self,
        query: &Embedding,
        k: usize,
        exclude: Option<&str>,
        similarity: Similarity,
    ) -> Result<Vec<(&DesignRecord, f64)>, DbError> {
        if self.records.is_empty() {
            return Err(DbError::Empty);
        }
        if query.dim() != self.header.dim {
            return Err(DbError::DimensionMismatch {
                expected: self.header.dim,
                actual: query.dim(),
            });
        }
        let mut scored: Vec<(&DesignRecord, f64)> = self
            .records
            .iter()
            .filter(|r| Some(r.design_id.as_str()) != exclude)
            .map(|r| {
                let s = match similarity {
                    Similarity::InnerProduct => inner_product_wide(query.values(), r.embedding.values()),
                    Similarity::Cosine => cosine_similarity(query.values(), r.embedding.values()),
                }
                .expect("dimensions checked");
                (r, s)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite scores")
                .then_with(|| a.0.design_id.cmp(&b.0.design_id))
        });
        scored.truncate(k);
        Ok(scored)
    }

    /// One query per record, excluding itself from the candidates.
    pub fn leave_one_out_queries(&self) -> Result<Vec<RetrievalQuery>, DbError> {
        self.records
            .iter()
            .map(|r| {
                Ok(RetrievalQuery {
                    embedding: r.embedding.clone(),
                    label: r
                        .category_label
                        .clone()
                        .ok_or_else(|| DbError::MissingLabel(r.design_id.clone()))?,
                    exclude_id: Some(r.design_id.clone()),
                })
            })
            .collect()
    }

    fn label_of(r: &DesignRecord) -> Result<&str, DbError> {
        r.category_label
            .as_deref()
            .ok_or_else(|| DbError::MissingLabel(r.design_id.clone()))
    }

    /// Mean over queries of `matches in top-k / k`.
    pub fn precision_at_k(&self, queries: &[RetrievalQuery], k: usize, similarity: Similarity) -> Result<f64, DbError> {
        if k == 0 {
            return Err(DbError::InvalidK);
        }
        if queries.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for q in queries {
            let hits = self.retrieve_mips(&q.embedding, k, q.exclude_id.as_deref(), similarity)?;
            let mut matching = 0usize;
            for (r, _) in hits {
                if Self::label_of(r)? == q.label {
                    matching += 1;
                }
            }
            total += matching as f64 / k as f64;
        }
        Ok(total / queries.len() as f64)
    }

    /// Mean over queries of `matches in top-k / records sharing the label`.
    pub fn recall_at_k(&self, queries: &[RetrievalQuery], k: usize, similarity: Similarity) -> Result<f64, DbError> {
        if k == 0 {
            return Err(DbError::InvalidK);
        }
        if queries.is_empty() {
            return Ok(0.0);
        }
        let mut per_label: HashMap<&str, Vec<&str>> = HashMap::new();
        for r in &self.records {
            per_label.entry(Self::label_of(r)?).or_default().push(&r.design_id);
        }
        let mut total = 0.0;
        for q in queries {
            let relevant = per_label
                .get(q.label.as_str())
                .map(|ids| {
                    ids.iter()
                        .filter(|id| Some(**id) != q.exclude_id.as_deref())
                        .count()
                })
                .unwrap_or(0);
            if relevant == 0 {
                return Err(DbError::LabelAbsent(q.label.clone()));
            }
            let hits = self.retrieve_mips(&q.embedding, k, q.exclude_id.as_deref(), similarity)?;
            let mut matching = 0usize;
            for (r, _) in hits {
                if Self::label_of(r)? == q.label {
                    matching += 1;
                }
            }
            total += matching as f64 / relevant as f64;
        }
        Ok(total / queries.len() as f64)
    }

    /// Leave-one-out precision and recall for each `k`.
    pub fn evaluate_retrieval(&self, ks: &[usize], similarity: Similarity) -> Result<Vec<RetrievalRow>, DbError> {
        let queries = self.leave_one_out_queries()?;
        ks.iter()
            .map(|&k| {
                Ok(RetrievalRow {
                    k,
                    precision: self.precision_at_k(&queries, k, similarity)?,
                    recall: self.recall_at_k(&queries, k, similarity)?,
                })
            })
            .collect()
    }

    /// `design_id,label,e0,…` rows for external plotting.
    pub fn embeddings_csv(&self) -> String {
        let mut out = String::from("design_id,label");
        for i in 0..self.header.dim {
            out.push_str(&format!(",e{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&csv_field(&r.design_id));
            out.push(',');
            out.push_str(&csv_field(r.category_label.as_deref().unwrap_or("")));
            for v in r.embedding.values() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        put_str(&mut body, &self.header.space_fingerprint);
        put_u32(&mut body, self.header.dim as u32);
        put_str(&mut body, self.header.metric.as_str());
        put_u32(&mut body, self.records.len() as u32);
        for r in &self.records {
            put_str(&mut body, &r.design_id);
            match &r.category_label {
                Some(l) => {
                    body.push(1);
                    put_str(&mut body, l);
                }
                None => body.push(0),
            }
            for (_, v) in r.summary.fields() {
                put_str(&mut body, v);
            }
            body.push(match r.embedding.source() {
                EmbeddingSource::Provider => 0,
                EmbeddingSource::LocalFallback => 1,
            });
            put_u32(&mut body, r.embedding.dim() as u32);
            for &v in r.embedding.values() {
                body.write_f32::<LittleEndian>(v).expect("vec write");
            }
            put_u32(&mut body, r.guidance.k as u32);
            put_u32(&mut body, r.guidance.entries.len() as u32);
            for e in &r.guidance.entries {
                put_u32(&mut body, e.sample.len() as u32);
                for &i in e.sample.indices() {
                    put_u32(&mut body, i as u32);
                }
                for v in [e.qor.power_mw, e.qor.area, e.qor.tns_ns] {
                    body.write_f64::<LittleEndian>(v).expect("vec write");
                }
                body.write_u64::<LittleEndian>(e.qor.drc_violations).expect("vec write");
                body.write_f64::<LittleEndian>(e.qor.flow_seconds).expect("vec write");
                body.write_f64::<LittleEndian>(e.objective).expect("vec write");
            }
        }
        let mut out = Vec::with_capacity(body.len() + 48);
        out.extend_from_slice(DB_MAGIC);
        put_u32(&mut out, DB_VERSION);
        out.write_u64::<LittleEndian>(body.len() as u64).expect("vec write");
        out.extend_from_slice(&Sha256::digest(&body));
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DbError> {
        if bytes.len() < 4 || &bytes[..4] != DB_MAGIC {
            return Err(DbError::Corrupt("bad magic".into()));
        }
        if bytes.len() < 8 {
            return Err(DbError::Corrupt("truncated header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != DB_VERSION {
            return Err(DbError::VersionMismatch {
                found: version,
                expected: DB_VERSION,
            });
        }
        if bytes.len() < 48 {
            return Err(DbError::Corrupt("truncated header".into()));
        }
        let body_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[48..];
        if body.len() != body_len {
            return Err(DbError::Corrupt(format!(
                "body is {} bytes, header says {body_len}",
                body.len()
            )));
        }
        if Sha256::digest(body).as_slice() != &bytes[16..48] {
            return Err(DbError::Corrupt("checksum mismatch".into()));
        }
        let mut c = Cursor::new(body);
        let space_fingerprint = get_str(&mut c)?;
        let dim = get_u32(&mut c)? as usize;
        let metric: Metric = get_str(&mut c)?.parse().map_err(DbError::Corrupt)?;
        let n = get_u32(&mut c)? as usize;
        let mut db = DesignDatabase {
            header: DbHeader {
                version,
                space_fingerprint,
                dim,
                metric,
            },
            records: Vec::with_capacity(n.min(1 << 16)),
        };
        for _ in 0..n {
            let design_id = get_str(&mut c)?;
            let category_label = match get_u8(&mut c)? {
                0 => None,
                1 => Some(get_str(&mut c)?),
                x => return Err(DbError::Corrupt(format!("bad label flag {x}"))),
            };
            let mut fields = Vec::with_capacity(DESIGN_FIELDS.len());
            for _ in 0..DESIGN_FIELDS.len() {
                fields.push(get_str(&mut c)?);
            }
            let source = match get_u8(&mut c)? {
                0 => EmbeddingSource::Provider,
                1 => EmbeddingSource::LocalFallback,
                x => return Err(DbError::Corrupt(format!("bad embedding source {x}"))),
            };
            let d = get_u32(&mut c)? as usize;
            let mut values = Vec::with_capacity(d.min(1 << 16));
            for _ in 0..d {
                values.push(c.read_f32::<LittleEndian>().map_err(truncated)?);
            }
            let embedding = Embedding::new(values, source).map_err(|e| DbError::Corrupt(e.to_string()))?;
            let k = get_u32(&mut c)? as usize;
            let m = get_u32(&mut c)? as usize;
            let mut entries = Vec::with_capacity(m.min(1 << 16));
            for _ in 0..m {
                let len = get_u32(&mut c)? as usize;
                let mut idx = Vec::with_capacity(len.min(1 << 16));
                for _ in 0..len {
                    idx.push(get_u32(&mut c)? as usize);
                }
                let power_mw = get_f64(&mut c)?;
                let area = get_f64(&mut c)?;
                let tns_ns = get_f64(&mut c)?;
                let drc_violations = c.read_u64::<LittleEndian>().map_err(truncated)?;
                let flow_seconds = get_f64(&mut c)?;
                let objective = get_f64(&mut c)?;
                entries.push(GuidanceEntry {
                    sample: Sample::new(idx),
                    qor: QorResult {
                        power_mw,
                        area,
                        tns_ns,
                        drc_violations,
                        flow_seconds,
                    },
                    objective,
                });
            }
            db.insert(DesignRecord {
                design_id,
                category_label,
                summary: DesignSummary::from_values(fields),
                embedding,
                guidance: ParameterGuidance { k, entries },
            })
            .map_err(|e| DbError::Corrupt(e.to_string()))?;
        }
        if (c.position() as usize) != body.len() {
            return Err(DbError::Corrupt("trailing bytes".into()));
        }
        Ok(db)
    }

    pub fn save(&self, path: &Path) -> Result<(), DbError> {
        let io = |e: std::io::Error| DbError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, DbError> {
        let bytes = std::fs::read(path).map_err(|e| DbError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn truncated(_: std::io::Error) -> DbError {
    DbError::Corrupt("unexpected end of data".into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.write_u32::<LittleEndian>(v).expect("vec write");
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn get_u8(c: &mut Cursor<&[u8]>) -> Result<u8, DbError> {
    c.read_u8().map_err(truncated)
}

fn get_u32(c: &mut Cursor<&[u8]>) -> Result<u32, DbError> {
    c.read_u32::<LittleEndian>().map_err(truncated)
}

fn get_f64(c: &mut Cursor<&[u8]>) -> Result<f64, DbError> {
    c.read_f64::<LittleEndian>().map_err(truncated)
}

fn get_str(c: &mut Cursor<&[u8]>) -> Result<String, DbError> {
    let len = get_u32(c)? as usize;
    let remaining = c.get_ref().len() - c.position() as usize;
    if len > remaining {
        return Err(DbError::Corrupt("string runs past end of data".into()));
    }
    let mut buf = vec![0; len];
    c.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| DbError::Corrupt("invalid utf-8".into()))
}
