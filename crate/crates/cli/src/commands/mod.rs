pub mod eval;
pub mod explain;
pub mod prep;
pub mod train;

use std::path::Path;

use anyhow::{bail, Context, Result};
use crosse::checkpoint::{self, Checkpoint};
use crosse::dataset::Dataset;
use crosse::{KnowledgeGraph, ScoreMode, Split};

/// Loads a prepared data directory written by `prep`.
pub fn load_data(dir: &Path) -> Result<Dataset> {
    Dataset::read_cache(dir)
        .with_context(|| format!("loading prepared data from {}", dir.display()))
}

/// Indexed graph with inverse relations, as used for training and ranking.
pub fn inverse_graph(data: &Dataset) -> Result<KnowledgeGraph> {
    let (graph, report) = data.graph()?;
    for split in Split::ALL {
        let dup = report.duplicates_in(split);
        if dup > 0 {
            log::warn!("{dup} duplicate {split} triples dropped");
        }
    }
    Ok(graph.add_inverse_relations()?)
}

/// Loads a checkpoint and checks it against the prepared data.
pub fn load_checkpoint(dir: &Path, data: &Dataset) -> Result<Checkpoint> {
    let (ckpt, entities, relations) =
        checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    ckpt.check_dictionaries(&data.entities, &data.relations)
        .context("checkpoint does not match the data")?;
    if entities != data.entities || relations != data.relations {
        bail!("checkpoint dictionaries assign different ids than the prepared data");
    }
    Ok(ckpt)
}

/// The scoring mode to use: explicit flag, else the one the model was
/// trained with. Modes needing `C` are refused for models without it.
pub fn resolve_mode(flag: Option<ScoreMode>, ckpt: &Checkpoint) -> Result<ScoreMode> {
    let mode = flag.unwrap_or(ckpt.config.mode);
    if mode.needs_interaction() && ckpt.params.interaction.is_none() {
        bail!("mode {mode} needs the interaction matrix C, which this checkpoint does not have");
    }
    Ok(mode)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
