use std::fs;
use std::sync::Arc;

use flowtune::db::{compile_guidance, DesignDatabase, DesignRecord};
use flowtune::embedding::{embed_text, LocalEmbeddingProvider};
use flowtune::evaluator::{Evaluator, Metric, SyntheticDesign};
use flowtune::provider::{ChatProvider, ChatScript, ContainsRule, ScriptedChatProvider};
use flowtune::rtl::{estimate_tokens, scan_design, ScanOptions};
use flowtune::search::{
    load_run, render_llm_block, run_crop, run_search, CropInputs, Engine, RunDir, SearchConfig, TUNING_SYSTEM_PROMPT,
};
use flowtune::space::ParameterSpace;
use flowtune::summarizer::{
    render_kv_block, render_summary_text, summarize_design, SummarizerOptions, DESIGN_FIELDS, DESIGN_TAG,
    MODULE_FIELDS, MODULE_TAG,
};
use flowtune::Embedding;
use tempfile::TempDir;

const CORE_V: &str = "`timescale 1ns/1ps
module core_top(input clk, input rst, output [7:0] q);
  counter u0(.clk(clk), .rst(rst), .q(q));
endmodule

module counter(input clk, input rst, output reg [7:0] q);
  always @(posedge clk) q <= rst ? 8'd0 : q + 8'd1;
endmodule
";

const PKG_SV: &str = "module parity(input [7:0] d, output p);
  assign p = ^d;
endmodule
";

fn summary_rules(tuning_reply: String) -> ScriptedChatProvider {
    let module_fields: Vec<(&str, &str)> = MODULE_FIELDS.iter().map(|k| (*k, "counter logic")).collect();
    let design_fields: Vec<(&str, &str)> = DESIGN_FIELDS.iter().map(|k| (*k, "small sequential counter")).collect();
    ScriptedChatProvider::new(ChatScript {
        rules: vec![
            ContainsRule {
                contains: format!("```{MODULE_TAG}"),
                response: render_kv_block(MODULE_TAG, &module_fields),
            },
            ContainsRule {
                contains: format!("```{DESIGN_TAG}"),
                response: render_kv_block(DESIGN_TAG, &design_fields),
            },
        ],
        default: Some(tuning_reply),
        ..Default::default()
    })
}

#[test]
fn scan_summarize_store_and_tune() {
    let tmp = TempDir::new().unwrap();
    let rtl = tmp.path().join("rtl");
    fs::create_dir_all(rtl.join("sub")).unwrap();
    fs::write(rtl.join("core.v"), CORE_V).unwrap();
    fs::write(rtl.join("sub/parity.sv"), PKG_SV).unwrap();
    fs::write(rtl.join("notes.txt"), "not rtl").unwrap();

    let design = scan_design(&rtl, "core", &ScanOptions::default()).unwrap();
    let names: Vec<&str> = design.modules.iter().map(|m| m.module_name.as_str()).collect();
    assert_eq!(names, ["core_top", "counter", "parity"]);

    let space = ParameterSpace::default_space();
    let stored = SyntheticDesign::generate(11, space.len(), 2);
    let history = run_search(
        &SearchConfig::new(Engine::Random, 60, 3),
        &space,
        &Evaluator::new(Arc::new(stored.clone())),
        None,
        None,
    )
    .unwrap()
    .history;
    let guidance = compile_guidance(&history, 5).unwrap();
    let best = guidance.entries[0].clone();
    assert_eq!(Some(best.objective), history.best());

    let chat = summary_rules(render_llm_block(&space, &best.sample).unwrap());
    let (modules, summary) = summarize_design(&chat, &design, &SummarizerOptions::default()).unwrap();
    assert_eq!(modules.len(), 3);
    assert_eq!(summary.fields()[0].1, "small sequential counter");

    let embed = LocalEmbeddingProvider { dim: 32 };
    let embedding: Embedding = embed_text(&embed, &render_summary_text(&summary), None).unwrap();
    let mut db = DesignDatabase::new(&space, 32, Metric::Power);
    db.insert_checked(
        &space,
        DesignRecord {
            design_id: "core".into(),
            category_label: Some("counter".into()),
            summary,
            embedding,
            guidance,
        },
    )
    .unwrap();
    let path = tmp.path().join("db.ftdb");
    db.save(&path).unwrap();
    let db = DesignDatabase::load(&path).unwrap();

    // tuning the stored design itself: the scripted reply is the stored best sample
    let out = tmp.path().join("run");
    let cfg = SearchConfig::new(Engine::Crop, 4, 0);
    let mut rd = RunDir::create(&out, &cfg).unwrap();
    let outcome = run_crop(
        &cfg,
        &space,
        &Evaluator::new(Arc::new(stored)),
        CropInputs {
            db: &db,
            chat: &chat,
            embed: &embed,
            design: &design,
            summarizer: SummarizerOptions::default(),
        },
        Some(&mut rd),
    )
    .unwrap();
    assert_eq!(outcome.history.len(), 4);
    assert_eq!(outcome.history.best_curve[0], Some(best.objective));
    assert_eq!(outcome.manifest.retrieved_design.as_deref(), Some("core"));

    let (manifest, reloaded) = load_run(&out).unwrap();
    assert_eq!(manifest.trials, 4);
    assert_eq!(reloaded.best_curve, outcome.history.best_curve);
    assert!(fs::read_to_string(out.join("transcripts.jsonl")).unwrap().contains("G1: "));
}

#[test]
fn prompts_respect_provider_token_limit() {
    let space = ParameterSpace::default_space();
    let d = SyntheticDesign::generate(5, space.len(), 0);
    let limit = 3000;

    // fixed reply; repeats are recorded as trials and keep the history growing
    let mut rng = flowtune::seeded_rng(9);
    let reply = render_llm_block(&space, &space.random_sample(&mut rng)).unwrap();
    let chat = ScriptedChatProvider::new(ChatScript {
        default: Some(reply),
        ..Default::default()
    })
    .with_max_prompt_tokens(limit);
    assert_eq!(chat.max_prompt_tokens(), Some(limit));

    let outcome = run_search(
        &SearchConfig::new(Engine::Llm, 40, 1),
        &space,
        &Evaluator::new(Arc::new(d)),
        Some(&chat),
        None,
    )
    .unwrap();
    assert_eq!(outcome.history.len(), 40);

    let requests = chat.requests();
    assert_eq!(requests.len(), 40);
    for r in &requests {
        assert_eq!(r.system_text(), TUNING_SYSTEM_PROMPT);
        let cost = estimate_tokens(r.system_text()) + estimate_tokens(r.user_text());
        assert!(cost <= limit, "prompt of {cost} tokens exceeds {limit}");
    }
    assert!(requests.last().unwrap().user_text().contains("earlier trials omitted"));
}
