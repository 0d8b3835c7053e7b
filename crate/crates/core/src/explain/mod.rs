//! Embedding-guided explanations for predicted triples.
//!
//! For a triple `(h, r, t)` the search keeps only paths that start with a
//! relation close to `r`, then looks for the same path shape around entities
//! close to `h`. A path with at least one such similar structure is an
//! explanation; each structure found is a support.

mod paths;
mod report;
mod similar;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use paths::{find_supports, search_paths, PathMatch, PathPattern, PathType, Support};
pub use report::{
    read_dump, read_metrics_tsv, write_dump, write_metrics_tsv, DumpLabels, MetricsRow,
    METRICS_HEADER,
};
pub use similar::{similar_entities, similar_relations};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, SplitMask, Triple};
use crate::model::{ModelParams, ScoreMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub pattern: PathPattern,
    pub supports: Vec<Support>,
}

/// All explanations found for one target triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplainedTriple {
    pub target: Triple,
    pub explanations: Vec<Explanation>,
}

impl ExplainedTriple {
    pub fn support_count(&self) -> usize {
        self.explanations.iter().map(|e| e.supports.len()).sum()
    }
}

/// Search knobs shared by every target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainConfig {
    pub k_relations: usize,
    pub k_entities: usize,
    pub mode: ScoreMode,
    /// Which splits count as the known graph. Train only by default so
    /// that held-out triples are never their own evidence.
    pub mask: SplitMask,
}

impl ExplainConfig {
    pub fn new(k_relations: usize, k_entities: usize, mode: ScoreMode) -> Self {
        ExplainConfig {
            k_relations,
            k_entities,
            mode,
            mask: SplitMask::TRAIN,
        }
    }
}

/// Explanations for `target`, each with at least one support. The target
/// need not be in the graph.
pub fn explain_triple(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    target: Triple,
    cfg: &ExplainConfig,
) -> Result<Vec<Explanation>> {
    if target.relation as usize >= graph.n_relations() {
        return Err(Error::IdOutOfRange {
            kind: "forward relation",
            id: target.relation as u64,
            size: graph.n_relations(),
        });
    }
    params.check_entity(target.tail)?;
    let relations = similar_relations(
        params,
        target.head,
        target.relation,
        cfg.k_relations,
        graph.n_relations(),
        cfg.mode,
    )?;
    let found = search_paths(graph, target, &relations, cfg.mask);
    if found.is_empty() {
        return Ok(Vec::new());
    }
    let heads = similar_entities(
        params,
        target.head,
        target.relation,
        cfg.k_entities,
        cfg.mode,
    )?;
    let out: Vec<Explanation> = found
        .into_iter()
        .filter_map(|m| {
            let supports = find_supports(graph, target, &m.pattern, &heads, cfg.mask);
            (!supports.is_empty()).then_some(Explanation {
                pattern: m.pattern,
                supports,
            })
        })
        .collect();
    debug!("{target}: {} explanations", out.len());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMetrics {
    pub triples: usize,
    pub explained: usize,
    pub recall: f64,
    pub total_supports: usize,
    /// Absent when nothing was explained.
    pub avg_support: Option<f64>,
    pub supports_by_type: [usize; 6],
    /// Share of all supports per path type, in [`PathType::ALL`] order.
    pub type_shares: [f64; 6],
}

impl ExplanationMetrics {
    /// Aggregates explanations over `triples` targets; entries without
    /// explanations may be present or omitted.
    pub fn from_explained(explained: &[ExplainedTriple], triples: usize) -> Self {
        let mut by_type = [0usize; 6];
        let mut n_explained = 0;
        for item in explained.iter().filter(|x| !x.explanations.is_empty()) {
            n_explained += 1;
            for e in &item.explanations {
                by_type[e.pattern.kind.index()] += e.supports.len();
            }
        }
        let total: usize = by_type.iter().sum();
        ExplanationMetrics {
            triples,
            explained: n_explained,
            recall: if triples == 0 {
                0.0
            } else {
                n_explained as f64 / triples as f64
            },
            total_supports: total,
            avg_support: (n_explained > 0).then(|| total as f64 / n_explained as f64),
            supports_by_type: by_type,
            type_shares: by_type.map(|c| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                }
            }),
        }
    }
}

/// Explains every target and aggregates Recall, AvgSupport and type shares.
/// The returned list holds explained targets only, in input order.
pub fn evaluate_explanations(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    targets: &[Triple],
    cfg: &ExplainConfig,
    threads: usize,
) -> Result<(ExplanationMetrics, Vec<ExplainedTriple>)> {
    if targets.is_empty() {
        return Err(Error::Empty("explanation targets"));
    }
    let one = |&target: &Triple| -> Result<ExplainedTriple> {
        Ok(ExplainedTriple {
            target,
            explanations: explain_triple(params, graph, target, cfg)?,
        })
    };
    let all: Vec<ExplainedTriple> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| targets.par_iter().map(one).collect::<Result<_>>())?
    } else {
        targets.iter().map(one).collect::<Result<_>>()?
    };
    let explained: Vec<ExplainedTriple> = all
        .into_iter()
        .filter(|x| !x.explanations.is_empty())
        .collect();
    Ok((
        ExplanationMetrics::from_explained(&explained, targets.len()),
        explained,
    ))
}
