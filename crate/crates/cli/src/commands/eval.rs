use std::path::PathBuf;

use anyhow::Result;
use crosse::eval::{evaluate, write_metrics_json, write_metrics_tsv, write_rank_records, Setting};
use crosse::{ScoreMode, Split};
use log::info;

use super::{create_dir, inverse_graph, load_checkpoint, load_data, resolve_mode};

pub const METRICS_TSV: &str = "metrics.tsv";
pub const METRICS_JSON: &str = "metrics.json";
pub const RANKS: &str = "ranks.tsv";

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Comma-separated subset of `raw,filter`.
    #[arg(long, value_delimiter = ',', default_value = "raw,filter")]
    pub settings: Vec<Setting>,
    /// Scoring mode; defaults to the one the model was trained with.
    #[arg(long)]
    pub mode: Option<ScoreMode>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let data = load_data(&args.data)?;
    let ckpt = load_checkpoint(&args.checkpoint, &data)?;
    let mode = resolve_mode(args.mode, &ckpt)?;
    let graph = inverse_graph(&data)?;
    info!(
        "ranking {} {} triples with {mode}",
        data.split(args.split).len(),
        args.split
    );
    let ev = evaluate(&ckpt.params, &graph, args.split, mode, args.threads.max(1))?;

    create_dir(&args.out)?;
    write_metrics_tsv(&args.out.join(METRICS_TSV), &ev.table, &args.settings)?;
    write_metrics_json(&args.out.join(METRICS_JSON), &ev.table)?;
    write_rank_records(&args.out.join(RANKS), &ev.records)?;

    println!("setting\tcount\tMR\tMRR\tHit@1\tHit@3\tHit@10");
    for &setting in &args.settings {
        let m = ev.table.get(setting);
        println!(
            "{setting}\t{}\t{:.2}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            m.count, m.mr, m.mrr, m.hits1, m.hits3, m.hits10
        );
    }
    Ok(())
}
