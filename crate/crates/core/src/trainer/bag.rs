use std::collections::HashSet;

use log::warn;
use rand::seq::index;
use rand::Rng;

use crate::kg::{EntityId, KnowledgeGraph, SplitMask, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    pub entity: EntityId,
    pub positive: bool,
}

/// Positive and negative tails gathered for one anchor triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBag {
    pub anchor: Triple,
    pub examples: Vec<Example>,
}

impl TrainingBag {
    pub fn positives(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.examples
            .iter()
            .filter(|x| x.positive)
            .map(|x| x.entity)
    }

    pub fn negatives(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.examples
            .iter()
            .filter(|x| !x.positive)
            .map(|x| x.entity)
    }
}

/// Builds the bag for `anchor`: every known train tail of `(h, r)` as a
/// positive plus `n` distinct uniformly drawn non-tails as negatives.
///
/// When fewer than `n` non-tails exist, all of them are used.
pub fn build_bag<R: Rng + ?Sized>(
    graph: &KnowledgeGraph,
    anchor: Triple,
    n: usize,
    rng: &mut R,
) -> TrainingBag {
    let positives: Vec<EntityId> = graph
        .tails(anchor.head, anchor.relation, SplitMask::TRAIN)
        .collect();
    let n_entities = graph.n_entities();
    let available = n_entities - positives.len();
    let mut examples: Vec<Example> = positives
        .iter()
        .map(|&entity| Example {
            entity,
            positive: true,
        })
        .collect();
    if examples.is_empty() {
        // Anchor not in train; it is still the positive of its own bag.
        examples.push(Example {
            entity: anchor.tail,
            positive: true,
        });
    }
    let is_known = |e: EntityId| positives.binary_search(&e).is_ok();

    if available <= n {
        if available < n {
            warn!(
                "only {available} negatives available for ({}, {}); wanted {n}",
                anchor.head, anchor.relation
            );
        }
        examples.extend(
            (0..n_entities as EntityId)
                .filter(|&e| !is_known(e) && e != anchor.tail)
                .map(|entity| Example {
                    entity,
                    positive: false,
                }),
        );
    } else if available < 2 * n {
        // Dense row: sample positions among the free entities directly.
        let free: Vec<EntityId> = (0..n_entities as EntityId)
            .filter(|&e| !is_known(e) && e != anchor.tail)
            .collect();
        let take = n.min(free.len());
        examples.extend(
            index::sample(rng, free.len(), take)
                .into_iter()
                .map(|i| Example {
                    entity: free[i],
                    positive: false,
                }),
        );
    } else {
        let mut chosen = HashSet::with_capacity(n);
        while chosen.len() < n {
            let e = rng.gen_range(0..n_entities as EntityId);
            if is_known(e) || e == anchor.tail || !chosen.insert(e) {
                continue;
            }
            examples.push(Example {
                entity: e,
                positive: false,
            });
        }
    }
    TrainingBag { anchor, examples }
}
