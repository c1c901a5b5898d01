//! Synthetic comparison of the baselines against retrieval-guided search.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use flowtune::db::{compile_guidance, DesignDatabase, DesignRecord};
use flowtune::embedding::embed_text;
use flowtune::evaluator::{Evaluator, Metric, SyntheticDesign};
use flowtune::offline::OfflineChatProvider;
use flowtune::provider::EmbeddingProvider;
use flowtune::rtl::{split_modules, DesignSource};
use flowtune::search::{run_crop, run_search, CropInputs, Engine, SearchConfig, SearchHistory};
use flowtune::space::ParameterSpace;
use flowtune::summarizer::{render_summary_text, summarize_design, SummarizerOptions};
use flowtune::Embedding;

use crate::commands::write_file;
use crate::providers::{embedding_provider, load_space};
use crate::{BenchArgs, CliResult, Global};

const FAMILIES: [(&str, &str); 5] = [
    (
        "fifo",
        "module NAME #(parameter W = 32, parameter DEPTH = 64) (
  input clk, input rst_n, input push, input pop,
  input [W-1:0] din, output reg [W-1:0] dout, output full, output empty
);
  // circular buffer with gray-coded read and write pointers
  reg [W-1:0] mem [0:DEPTH-1];
  reg [6:0] wr_ptr, rd_ptr;
  assign full = (wr_ptr[5:0] == rd_ptr[5:0]) && (wr_ptr[6] != rd_ptr[6]);
  assign empty = wr_ptr == rd_ptr;
  always @(posedge clk) begin
    if (push && !full) mem[wr_ptr[5:0]] <= din;
    if (pop && !empty) dout <= mem[rd_ptr[5:0]];
  end
endmodule
",
    ),
    (
        "fir",
        "module NAME #(parameter TAPS = 16) (
  input clk, input signed [15:0] sample_in, output reg signed [35:0] filter_out
);
  // pipelined multiply accumulate over a coefficient rom
  reg signed [15:0] delay_line [0:TAPS-1];
  reg signed [15:0] coeff [0:TAPS-1];
  reg signed [35:0] acc;
  integer i;
  always @(posedge clk) begin
    delay_line[0] <= sample_in;
    for (i = 1; i < TAPS; i = i + 1) delay_line[i] <= delay_line[i-1];
    acc = 0;
    for (i = 0; i < TAPS; i = i + 1) acc = acc + delay_line[i] * coeff[i];
    filter_out <= acc;
  end
endmodule
",
    ),
    (
        "uart",
        "module NAME (
  input clk, input rst_n, input rx, output reg tx, input [7:0] tx_data, input tx_start,
  output reg [7:0] rx_data, output reg rx_valid
);
  // serial transmitter and receiver with baud rate divider and start stop bits
  reg [15:0] baud_counter;
  reg [3:0] bit_index;
  reg [9:0] shift_reg;
  always @(posedge clk or negedge rst_n) begin
    if (!rst_n) begin baud_counter <= 0; tx <= 1'b1; rx_valid <= 1'b0; end
    else if (baud_counter == 16'd434) begin
      baud_counter <= 0;
      if (tx_start) shift_reg <= {1'b1, tx_data, 1'b0};
      tx <= shift_reg[bit_index];
      rx_data <= {rx, rx_data[7:1]};
    end else baud_counter <= baud_counter + 1;
  end
endmodule
",
    ),
    (
        "alu",
        "module NAME (
  input [31:0] operand_a, input [31:0] operand_b, input [3:0] opcode,
  output reg [31:0] result, output zero_flag, output reg carry_flag
);
  // integer arithmetic logic unit with shifter and comparator
  always @(*) begin
    carry_flag = 1'b0;
    case (opcode)
      4'd0: {carry_flag, result} = operand_a + operand_b;
      4'd1: result = operand_a - operand_b;
      4'd2: result = operand_a & operand_b;
      4'd3: result = operand_a | operand_b;
      4'd4: result = operand_a ^ operand_b;
      4'd5: result = operand_a << operand_b[4:0];
      4'd6: result = operand_a >> operand_b[4:0];
      default: result = ($signed(operand_a) < $signed(operand_b)) ? 32'd1 : 32'd0;
    endcase
  end
  assign zero_flag = result == 0;
endmodule
",
    ),
    (
        "crc",
        "module NAME (
  input clk, input rst_n, input data_valid, input [7:0] data_byte, output reg [31:0] crc_state
);
  // checksum engine using a linear feedback polynomial over each byte
  localparam POLY = 32'h04C11DB7;
  integer b;
  reg [31:0] next_crc;
  always @(*) begin
    next_crc = crc_state;
    for (b = 0; b < 8; b = b + 1)
      next_crc = (next_crc[31] ^ data_byte[b]) ? (next_crc << 1) ^ POLY : next_crc << 1;
  end
  always @(posedge clk or negedge rst_n)
    if (!rst_n) crc_state <= 32'hFFFFFFFF;
    else if (data_valid) crc_state <= next_crc;
endmodule
",
    ),
];

fn family_source(d: u64, id: &str) -> CliResult<DesignSource> {
    let (_, text) = FAMILIES[d as usize % FAMILIES.len()];
    let text = text.replace("NAME", id);
    let modules = split_modules(&text, Path::new(&format!("{id}.v")))?;
    Ok(DesignSource::from_modules(id, modules)?)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn stored_record(
    space: &ParameterSpace,
    d: u64,
    history: &SearchHistory,
    embed: &dyn EmbeddingProvider,
    dim: Option<usize>,
) -> CliResult<DesignRecord> {
    let id = format!("bench_{d}");
    let chat = OfflineChatProvider::new(space.clone(), 0);
    let (_, summary) = summarize_design(&chat, &family_source(d, &id)?, &SummarizerOptions::default())?;
    let embedding: Embedding = embed_text(embed, &render_summary_text(&summary), dim)?;
    Ok(DesignRecord {
        design_id: id,
        category_label: Some(FAMILIES[d as usize % FAMILIES.len()].0.into()),
        summary,
        embedding,
        guidance: compile_guidance(history, flowtune::db::DEFAULT_GUIDANCE_K)?,
    })
}

pub fn bench(g: &Global, a: &BenchArgs) -> CliResult {
    let space = load_space(g)?;
    let embed = embedding_provider(g)?;
    let designs: Vec<SyntheticDesign> = (0..a.designs)
        .map(|d| SyntheticDesign::generate(1000 + d, space.len(), 0))
        .collect();

    let mut db: Option<DesignDatabase> = None;
    for (d, design) in designs.iter().enumerate() {
        let ev = Evaluator::new(Arc::new(design.clone()));
        let cfg = SearchConfig::new(Engine::Random, a.history, d as u64);
        let history = run_search(&cfg, &space, &ev, None, None)?.history;
        let rec = stored_record(&space, d as u64, &history, embed.as_ref(), db.as_ref().map(|x| x.header.dim))?;
        let store = db.get_or_insert_with(|| DesignDatabase::new(&space, rec.embedding.dim(), Metric::Power));
        store.insert_checked(&space, rec)?;
    }
    let Some(db) = db else {
        println!("no designs");
        return Ok(());
    };
    db.save(&a.out.join("bench.ftdb"))?;

    let engines = [Engine::Random, Engine::Tpe, Engine::GpEi, Engine::Crop];
    let early = a.budget.min(10);
    let mut csv = format!("design,seed,engine,best_at_{early},best_at_{}\n", a.budget);
    let mut cells: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); engines.len()];
    for (d, stored) in designs.iter().enumerate() {
        let target = stored.derive_similar(a.alpha, 2000 + d as u64)?;
        let source = family_source(d as u64, &format!("target_{d}"))?;
        for seed in 0..a.seeds {
            for (ei, &engine) in engines.iter().enumerate() {
                let ev = Evaluator::new(Arc::new(target.clone()));
                let cfg = SearchConfig::new(engine, a.budget, seed);
                let h = if engine == Engine::Crop {
                    let chat = OfflineChatProvider::new(space.clone(), seed);
                    let inputs = CropInputs {
                        db: &db,
                        chat: &chat,
                        embed: embed.as_ref(),
                        design: &source,
                        summarizer: SummarizerOptions::default(),
                    };
                    run_crop(&cfg, &space, &ev, inputs, None)?.history
                } else {
                    run_search(&cfg, &space, &ev, None, None)?.history
                };
                let (e, f) = (h.best_at(early), h.best_at(a.budget));
                let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let _ = writeln!(csv, "{d},{seed},{engine},{},{}", fmt(e), fmt(f));
                cells[ei].0.extend(e);
                cells[ei].1.extend(f);
            }
        }
    }
    write_file(&a.out.join("bench.csv"), &csv)?;

    let mut text = format!(
        "{} designs x {} seeds, alpha {}, median best power (mW)\n{:<8} {:>10} {:>10}\n",
        a.designs,
        a.seeds,
        a.alpha,
        "engine",
        format!("@{early}"),
        format!("@{}", a.budget)
    );
    for (engine, (e, f)) in engines.iter().zip(cells) {
        let _ = writeln!(text, "{:<8} {:>10.2} {:>10.2}", engine.as_str(), median(e), median(f));
    }
    write_file(&a.out.join("bench.txt"), &text)?;
    print!("{text}");
    Ok(())
}
