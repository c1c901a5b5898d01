//! Subcommand implementations.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::json;

use flowtune::analysis::{compare_runs, importance_report, tradeoff_report, AnalysisError};
use flowtune::db::{compile_guidance, retrieval_rows_csv, DesignDatabase, DesignRecord, RetrievalRow, Similarity};
use flowtune::embedding::embed_text;
use flowtune::evaluator::{objective, Evaluator, Metric};
use flowtune::provider::{ChatProvider, EmbeddingProvider};
use flowtune::rtl::{chunk_module, scan_design, DesignSource, ScanOptions};
use flowtune::search::{
    load_run, run_crop, run_search, CropInputs, Engine, RunDir, RunOutcome, SearchConfig, SearchHistory,
};
use flowtune::space::{ParameterSpace, Sample};
use flowtune::summarizer::{render_summary_text, summarize_design, write_summaries, SummarizerOptions};
use flowtune::Embedding;

use crate::failure::Failure;
use crate::providers::{chat_provider, embedding_provider, flow_backend, load_space};
use crate::*;

pub fn dispatch(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest(a) => ingest(g, a),
        Command::Summarize(a) => summarize(g, a),
        Command::Db(DbCommand::Build(a)) => db_build(g, a),
        Command::Db(DbCommand::Insert(a)) => db_insert(g, a),
        Command::Db(DbCommand::Query(a)) => db_query(g, a),
        Command::Db(DbCommand::EvalRetrieval(a)) => db_eval(a),
        Command::Db(DbCommand::Export(a)) => db_export(a),
        Command::Tune(a) => tune(g, a),
        Command::Eval(a) => eval(g, a),
        Command::Analyze(a) => analyze(g, a),
        Command::Bench(a) => crate::bench::bench(g, a),
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn parse_metric(s: &str) -> CliResult<Metric> {
    s.parse().map_err(Failure::usage)
}

fn summarizer_options(g: &Global, chunk_tokens: Option<usize>) -> SummarizerOptions {
    let mut o = SummarizerOptions {
        max_in_flight: g.max_in_flight,
        ..Default::default()
    };
    if let Some(c) = chunk_tokens {
        o.chunk_tokens = c;
    }
    o
}

fn design_id(rtl: &Path, explicit: Option<&str>) -> String {
    explicit.map(str::to_string).unwrap_or_else(|| {
        rtl.canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "design".into())
    })
}

fn scan(rtl: &Path, explicit: Option<&str>) -> CliResult<DesignSource> {
    Ok(scan_design(rtl, &design_id(rtl, explicit), &ScanOptions::default())?)
}

fn ingest(_g: &Global, a: &IngestArgs) -> CliResult {
    let design = scan(&a.design.rtl, a.design.design.as_deref())?;
    println!("design {} ({} modules)", design.design_id, design.modules.len());
    for m in &design.modules {
        println!(
            "{}\t{}\t{} tokens\t{} chunks",
            m.module_name,
            m.file_path.display(),
            m.approx_tokens,
            chunk_module(m, a.chunk_tokens).len()
        );
    }
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&design).expect("design serializes");
        write_file(out, &(text + "\n"))?;
    }
    Ok(())
}

fn summarize(g: &Global, a: &SummarizeArgs) -> CliResult {
    let space = load_space(g)?;
    let design = scan(&a.design.rtl, a.design.design.as_deref())?;
    let chat = chat_provider(g, &space, 0)?;
    let (modules, summary) = summarize_design(chat.as_ref(), &design, &summarizer_options(g, Some(a.chunk_tokens)))?;
    write_summaries(&a.out, &modules, &summary)?;
    print!("{}", render_summary_text(&summary));
    Ok(())
}

// ---- database ------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct DesignManifest {
    #[serde(default)]
    design: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    rtl: PathBuf,
    history: PathBuf,
    label: Option<String>,
}

/// A run directory or a bare trials CSV, with objectives recomputed for `metric`.
pub(crate) fn load_history(path: &Path, space: &ParameterSpace, metric: Metric) -> CliResult<SearchHistory> {
    let h = if path.is_dir() {
        load_run(path)?.1
    } else {
        SearchHistory::read_trials_csv(&read_file(path)?, path, "import", metric, &space.fingerprint(), "unknown")?
    };
    if h.space_fingerprint != space.fingerprint() {
        return Err(Failure::new(
            "E_INCOMPATIBLE",
            format!("{}: history uses a different parameter space", path.display()),
        ));
    }
    Ok(rescore(h, space, metric))
}

pub(crate) fn rescore(h: SearchHistory, space: &ParameterSpace, metric: Metric) -> SearchHistory {
    let mut out = SearchHistory::new(&h.engine, metric, space, &h.backend_fingerprint);
    for mut t in h.trials {
        if let Some(q) = &t.qor {
            t.objective = Some(objective(q, metric));
        }
        out.push(t);
    }
    out
}

fn summaries_dir(db: &Path, id: &str) -> PathBuf {
    let mut name = db.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".summaries");
    db.with_file_name(name).join(id)
}

struct DbContext<'a> {
    space: &'a ParameterSpace,
    chat: &'a dyn ChatProvider,
    embed: &'a dyn EmbeddingProvider,
    summarizer: SummarizerOptions,
}

impl DbContext<'_> {
    fn record(
        &self,
        db_path: &Path,
        design: &DesignSource,
        history: &SearchHistory,
        label: Option<String>,
        k: usize,
        dim: Option<usize>,
    ) -> CliResult<DesignRecord> {
        let guidance = compile_guidance(history, k)?;
        let (modules, summary) = summarize_design(self.chat, design, &self.summarizer)?;
        write_summaries(&summaries_dir(db_path, &design.design_id), &modules, &summary)?;
        let embedding: Embedding = embed_text(self.embed, &render_summary_text(&summary), dim)?;
        Ok(DesignRecord {
            design_id: design.design_id.clone(),
            category_label: label,
            summary,
            embedding,
            guidance,
        })
    }
}

fn open_db(path: &Path, space: &ParameterSpace, metric: Metric) -> CliResult<Option<DesignDatabase>> {
    if !path.exists() {
        return Ok(None);
    }
    let db = DesignDatabase::load(path)?;
    db.check_space(space)?;
    if db.header.metric != metric {
        return Err(Failure::new(
            "E_DB",
            format!("database ranks guidance by {}, not {}", db.header.metric.as_str(), metric.as_str()),
        ));
    }
    Ok(Some(db))
}

fn insert_record(
    db: &mut Option<DesignDatabase>,
    space: &ParameterSpace,
    metric: Metric,
    record: DesignRecord,
) -> CliResult {
    let d = db.get_or_insert_with(|| DesignDatabase::new(space, record.embedding.dim(), metric));
    Ok(d.insert_checked(space, record)?)
}

fn db_build(g: &Global, a: &DbBuildArgs) -> CliResult {
    let space = load_space(g)?;
    let metric = parse_metric(&a.common.metric)?;
    let manifest: DesignManifest = toml::from_str(&read_file(&a.manifest)?)
        .map_err(|e| Failure::new("E_CONFIG", format!("{}: {e}", a.manifest.display())))?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let mut db = open_db(&a.common.db, &space, metric)?;

    let mut seen = HashSet::new();
    let mut todo = Vec::new();
    for e in &manifest.design {
        if !seen.insert(e.id.as_str()) {
            return Err(Failure::new("E_CONFIG", format!("design `{}` listed twice", e.id)));
        }
        if db.as_ref().is_some_and(|d| d.contains(&e.id)) {
            println!("skip {} (already stored)", e.id);
            continue;
        }
        let history = base.join(&e.history);
        if !history.exists() {
            return Err(Failure::new(
                "E_DB",
                format!("design `{}`: history {} not found", e.id, history.display()),
            ));
        }
        todo.push((e, history));
    }

    let chat = chat_provider(g, &space, 0)?;
    let embed = embedding_provider(g)?;
    let ctx = DbContext {
        space: &space,
        chat: chat.as_ref(),
        embed: embed.as_ref(),
        summarizer: summarizer_options(g, None),
    };
    let added = todo.len();
    for (e, history_path) in todo {
        let history = load_history(&history_path, &space, metric)
            .map_err(|f| Failure::new(f.code, format!("design `{}`: {}", e.id, f.message)))?;
        let design = scan_design(&base.join(&e.rtl), &e.id, &ScanOptions::default())?;
        let dim = db.as_ref().map(|d| d.header.dim);
        let record = ctx.record(&a.common.db, &design, &history, e.label.clone(), a.common.k, dim)?;
        insert_record(&mut db, ctx.space, metric, record)?;
        println!("added {}", e.id);
    }
    match &db {
        Some(d) => {
            if added > 0 {
                d.save(&a.common.db)?;
            }
            println!("{} designs stored, {added} added", d.len());
        }
        None => println!("0 designs stored, nothing to add"),
    }
    Ok(())
}

fn db_insert(g: &Global, a: &DbInsertArgs) -> CliResult {
    let space = load_space(g)?;
    let metric = parse_metric(&a.common.metric)?;
    let mut db = open_db(&a.common.db, &space, metric)?;
    let design = scan(&a.design.rtl, a.design.design.as_deref())?;
    if db.as_ref().is_some_and(|d| d.contains(&design.design_id)) {
        return Err(Failure::new(
            "E_DB",
            format!("design `{}` is already stored", design.design_id),
        ));
    }
    if !a.history.exists() {
        return Err(Failure::new(
            "E_DB",
            format!("design `{}`: history {} not found", design.design_id, a.history.display()),
        ));
    }
    let history = load_history(&a.history, &space, metric)?;
    let chat = chat_provider(g, &space, 0)?;
    let embed = embedding_provider(g)?;
    let ctx = DbContext {
        space: &space,
        chat: chat.as_ref(),
        embed: embed.as_ref(),
        summarizer: summarizer_options(g, None),
    };
    let dim = db.as_ref().map(|d| d.header.dim);
    let record = ctx.record(&a.common.db, &design, &history, a.label.clone(), a.common.k, dim)?;
    insert_record(&mut db, &space, metric, record)?;
    let db = db.expect("inserted");
    db.save(&a.common.db)?;
    println!("added {} ({} designs stored)", design.design_id, db.len());
    Ok(())
}

fn similarity(cosine: bool) -> Similarity {
    if cosine {
        Similarity::Cosine
    } else {
        Similarity::InnerProduct
    }
}

fn db_query(g: &Global, a: &DbQueryArgs) -> CliResult {
    let space = load_space(g)?;
    let db = DesignDatabase::load(&a.db)?;
    db.check_space(&space)?;
    let design = scan(&a.design.rtl, a.design.design.as_deref())?;
    let chat = chat_provider(g, &space, 0)?;
    let embed = embedding_provider(g)?;
    let (_, summary) = summarize_design(chat.as_ref(), &design, &summarizer_options(g, None))?;
    let query: Embedding = embed_text(embed.as_ref(), &render_summary_text(&summary), Some(db.header.dim))?;
    println!("rank,design,score,label,best_{}", db.header.metric.as_str());
    for (i, (rec, score)) in db.retrieve_mips(&query, a.top, None, similarity(a.cosine))?.iter().enumerate() {
        let best = rec.guidance.entries.first().map(|e| e.objective.to_string()).unwrap_or_default();
        println!(
            "{},{},{score},{},{best}",
            i + 1,
            rec.design_id,
            rec.category_label.as_deref().unwrap_or("")
        );
    }
    Ok(())
}

fn db_eval(a: &DbEvalArgs) -> CliResult {
    let db = DesignDatabase::load(&a.db)?;
    let sim = similarity(a.cosine);
    let rows = if a.include_self {
        let mut queries = db.leave_one_out_queries()?;
        for q in &mut queries {
            q.exclude_id = None;
        }
        a.k.iter()
            .map(|&k| {
                Ok(RetrievalRow {
                    k,
                    precision: db.precision_at_k(&queries, k, sim)?,
                    recall: db.recall_at_k(&queries, k, sim)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?
    } else {
        db.evaluate_retrieval(&a.k, sim)?
    };
    let csv = retrieval_rows_csv(&rows);
    print!("{csv}");
    if let Some(out) = &a.out {
        write_file(out, &csv)?;
    }
    Ok(())
}

fn db_export(a: &DbExportArgs) -> CliResult {
    let db = DesignDatabase::load(&a.db)?;
    write_file(&a.out, &db.embeddings_csv())?;
    println!("{} embeddings written to {}", db.len(), a.out.display());
    Ok(())
}

// ---- search --------------------------------------------------------------

fn search_config(a: &TuneArgs) -> CliResult<SearchConfig> {
    let mut cfg = match &a.config {
        Some(p) => toml::from_str::<SearchConfig>(&read_file(p)?)
            .map_err(|e| Failure::new("E_CONFIG", format!("{}: {e}", p.display())))?,
        None => SearchConfig::default(),
    };
    if let Some(e) = &a.engine {
        cfg.engine = e.parse().map_err(Failure::usage)?;
    }
    if let Some(b) = a.budget {
        cfg.budget = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = &a.metric {
        cfg.metric = parse_metric(m)?;
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn tune(g: &Global, a: &TuneArgs) -> CliResult {
    let cfg = search_config(a)?;
    if cfg.engine == Engine::Crop && (a.db.is_none() || a.rtl.is_none()) {
        return Err(Failure::usage("engine crop requires --db and --rtl"));
    }
    let space = load_space(g)?;
    let backend = flow_backend(&a.backend, &space)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", cfg.engine, cfg.seed)));
    let mut rd = RunDir::create(&out, &cfg)?;
    let evaluator = if a.no_cache {
        Evaluator::new(backend)
    } else {
        Evaluator::new(backend).with_cache_file(&rd.cache_path())?
    };

    let outcome: RunOutcome = match cfg.engine {
        Engine::Crop => {
            let db = DesignDatabase::load(a.db.as_deref().expect("checked"))?;
            let design = scan(a.rtl.as_deref().expect("checked"), a.design.as_deref())?;
            let chat = chat_provider(g, &space, cfg.seed)?;
            let embed = embedding_provider(g)?;
            let inputs = CropInputs {
                db: &db,
                chat: chat.as_ref(),
                embed: embed.as_ref(),
                design: &design,
                summarizer: summarizer_options(g, None),
            };
            run_crop(&cfg, &space, &evaluator, inputs, Some(&mut rd))?
        }
        Engine::Llm => {
            let chat = chat_provider(g, &space, cfg.seed)?;
            run_search(&cfg, &space, &evaluator, Some(chat.as_ref()), Some(&mut rd))?
        }
        _ => run_search(&cfg, &space, &evaluator, None, Some(&mut rd))?,
    };
    let mut manifest = outcome.manifest;
    manifest.command = std::env::args().collect::<Vec<_>>().join(" ");
    rd.write_manifest(&manifest)?;

    println!("engine {} budget {} seed {}", cfg.engine, cfg.budget, cfg.seed);
    println!("trials {} (failed {})", manifest.trials, manifest.failed_trials);
    if let Some(r) = &manifest.retrieved_design {
        println!("guidance from {r} (score {:.4})", manifest.retrieval_score.unwrap_or(f64::NAN));
    }
    match outcome.history.incumbent() {
        Some(t) => {
            println!("best {} {:.4} {}", cfg.metric.as_str(), t.objective.expect("success"), cfg.metric.unit());
            println!("best sample {}", space.render_assignment(&t.sample)?.to_inline());
        }
        None => println!("no successful trial"),
    }
    println!("run dir {}", out.display());
    Ok(())
}

fn eval(g: &Global, a: &EvalArgs) -> CliResult {
    let space = load_space(g)?;
    let sample = match (&a.sample, &a.indices) {
        (Some(s), _) => space.parse_inline(s)?,
        (None, Some(ix)) => {
            let s = Sample::parse_index_string(ix).ok_or_else(|| Failure::usage(format!("bad indices `{ix}`")))?;
            space.check(&s)?;
            s
        }
        (None, None) => return Err(Failure::usage("eval needs --sample or --indices")),
    };
    let evaluator = Evaluator::uncached(flow_backend(&a.backend, &space)?);
    let q = evaluator.evaluate(&space, &sample)?.qor;
    let out = json!({
        "indices": sample.to_index_string(),
        "assignment": space.render_assignment(&sample)?.to_inline(),
        "qor": q,
        "objective": {
            "power": objective(&q, Metric::Power),
            "area": objective(&q, Metric::Area),
            "tns": objective(&q, Metric::Tns),
            "drc": objective(&q, Metric::Drc),
        },
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

// ---- analysis ------------------------------------------------------------

fn run_label(path: &Path, taken: &mut HashSet<String>) -> String {
    let base = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let mut label = base.clone();
    let mut i = 2;
    while !taken.insert(label.clone()) {
        label = format!("{base}_{i}");
        i += 1;
    }
    label
}

fn analyze(g: &Global, a: &AnalyzeArgs) -> CliResult {
    let space = load_space(g)?;
    let mut taken = HashSet::new();
    let mut runs = Vec::new();
    for p in &a.runs {
        let (_, h) = load_run(p)?;
        runs.push((run_label(p, &mut taken), h));
    }
    let refs: Vec<(String, &SearchHistory)> = runs.iter().map(|(l, h)| (l.clone(), h)).collect();
    let table = compare_runs(&refs, &a.checkpoints)?;
    if let Some((label, _)) = runs.iter().find(|(_, h)| h.space_fingerprint != space.fingerprint()) {
        return Err(AnalysisError::Incompatible(format!(
            "run `{label}` was not produced with the selected parameter space"
        ))
        .into());
    }
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    write_file(&a.out.join("comparison.csv"), &table.to_csv())?;
    write_file(&a.out.join("comparison.txt"), &table.to_text())?;
    print!("{}", table.to_text());

    for (label, h) in &runs {
        match importance_report(h, &space, h.metric) {
            Ok(r) => {
                write_file(&a.out.join(format!("importance_{label}.csv")), &r.to_csv())?;
                let top: Vec<String> = r
                    .above(a.threshold)
                    .map(|e| format!("{} {:+.3}", e.param, e.rho))
                    .collect();
                println!("{label}: {} parameters above |rho| {}: {}", top.len(), a.threshold, top.join(", "));
                if !r.undefined.is_empty() {
                    println!("{label}: constant in every trial: {}", r.undefined.join(", "));
                }
            }
            Err(e) => eprintln!("note: {label}: importance skipped: {e}"),
        }
        match tradeoff_report(h) {
            Ok(m) => write_file(&a.out.join(format!("tradeoff_{label}.csv")), &m.to_csv())?,
            Err(e) => eprintln!("note: {label}: tradeoff skipped: {e}"),
        }
    }
    Ok(())
}
