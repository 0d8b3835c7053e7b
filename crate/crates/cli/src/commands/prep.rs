use std::path::PathBuf;

use anyhow::{Context, Result};
use crosse::dataset::Dataset;

use super::create_dir;
use crate::manifest::{Sources, SOURCES_FILE};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Output directory for dictionaries and the triple cache.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let data = Dataset::load_tsv(&args.train, &args.valid, &args.test)?;
    let (_, report) = data.graph()?;
    create_dir(&args.out)?;
    data.write_cache(&args.out)?;
    let sources = Sources {
        train: args.train,
        valid: args.valid,
        test: args.test,
    };
    let path = args.out.join(SOURCES_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&sources)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{}", data.stats());
    if report.duplicates.iter().any(|&d| d > 0) {
        let [tr, va, te] = report.duplicates;
        println!("duplicates dropped at indexing: train {tr}, valid {va}, test {te}");
    }
    Ok(())
}
