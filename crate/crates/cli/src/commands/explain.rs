use std::path::PathBuf;

use anyhow::{bail, Result};
use crosse::explain::{
    evaluate_explanations, write_dump, write_metrics_tsv, DumpLabels, ExplainConfig, MetricsRow,
};
use crosse::{RelationId, ScoreMode, Split, Triple};
use log::info;

use super::{create_dir, inverse_graph, load_checkpoint, load_data, resolve_mode};

pub const METRICS_TSV: &str = "explain_metrics.tsv";

pub fn dump_name(k_r: usize, k_e: usize) -> String {
    format!("explanations_kr{k_r}_ke{k_e}.jsonl")
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Triples to explain.
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Similar relations considered, one metrics row per value.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub kr: Vec<usize>,
    /// Similar entities considered, one metrics row per value.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub ke: Vec<usize>,
    /// Embeddings used for similarity; defaults to the trained mode.
    #[arg(long)]
    pub mode: Option<ScoreMode>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    if args.kr.contains(&0) || args.ke.contains(&0) {
        bail!("--kr and --ke values must be at least 1");
    }
    let data = load_data(&args.data)?;
    let ckpt = load_checkpoint(&args.checkpoint, &data)?;
    let mode = resolve_mode(args.mode, &ckpt)?;
    let graph = inverse_graph(&data)?;
    let n_r = data.relations.len() as RelationId;
    let targets: Vec<Triple> = graph
        .triples(args.split)
        .iter()
        .filter(|t| t.relation < n_r)
        .copied()
        .collect();
    if targets.is_empty() {
        bail!("the {} split has no triples to explain", args.split);
    }

    create_dir(&args.out)?;
    let labels = DumpLabels {
        entities: &data.entities,
        relations: &data.relations,
    };
    let mut rows = Vec::new();
    println!("k_r\tk_e\trecall\tavg_support");
    for &k_e in &args.ke {
        for &k_r in &args.kr {
            let cfg = ExplainConfig::new(k_r, k_e, mode);
            info!(
                "explaining {} triples with k_r = {k_r}, k_e = {k_e}",
                targets.len()
            );
            let (metrics, explained) =
                evaluate_explanations(&ckpt.params, &graph, &targets, &cfg, args.threads.max(1))?;
            write_dump(
                &args.out.join(dump_name(k_r, k_e)),
                &explained,
                Some(labels),
            )?;
            let avg = metrics
                .avg_support
                .map_or_else(|| "NA".to_owned(), |a| format!("{a:.3}"));
            println!("{k_r}\t{k_e}\t{:.4}\t{avg}", metrics.recall);
            rows.push(MetricsRow {
                k_relations: k_r,
                k_entities: k_e,
                metrics,
            });
        }
    }
    write_metrics_tsv(&args.out.join(METRICS_TSV), &rows)?;
    Ok(())
}
