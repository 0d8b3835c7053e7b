//! Independent reference implementations used by the integration suites.
//! Nothing here calls into the scoring, ranking or search code under test.

#![allow(dead_code)]

use std::collections::HashSet;

use crosse::explain::{PathMatch, PathType};
use crosse::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crosse::model::{ModelParams, ScoreMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random parameters with a non-zero bias. `relation_rows` counts inverse
/// rows too.
pub fn random_params(
    seed: u64,
    n_entities: usize,
    relation_rows: usize,
    dim: usize,
) -> ModelParams {
    let mut p = ModelParams::init(n_entities, relation_rows, dim, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    p.bias.iter_mut().for_each(|b| *b = r.gen_range(-0.5..0.5));
    p
}

pub fn random_triples(
    r: &mut impl Rng,
    n_entities: u32,
    n_relations: u32,
    count: usize,
) -> Vec<Triple> {
    (0..count)
        .map(|_| {
            Triple::new(
                r.gen_range(0..n_entities),
                r.gen_range(0..n_relations),
                r.gen_range(0..n_entities),
            )
        })
        .collect()
}

/// Pre-activation score written out one coordinate at a time.
pub fn scalar_logit(
    p: &ModelParams,
    h: EntityId,
    r: RelationId,
    t: EntityId,
    mode: ScoreMode,
) -> f64 {
    let d = p.dim();
    let head = p.entity.row(h as usize);
    let rel = p.relation.row(r as usize);
    let tail = p.entity.row(t as usize);
    match mode {
        ScoreMode::CrossE => {
            let c = p.interaction.as_ref().unwrap().row(r as usize);
            let mut z = 0.0;
            for k in 0..d {
                let hi = c[k] as f64 * head[k] as f64;
                let ri = hi * rel[k] as f64;
                let q = (hi + ri + p.bias[k] as f64).tanh();
                z += q * tail[k] as f64;
            }
            z
        }
        ScoreMode::CrossES => {
            let mut z = 0.0;
            for k in 0..d {
                let q = (head[k] as f64 + rel[k] as f64 + p.bias[k] as f64).tanh();
                z += q * tail[k] as f64;
            }
            z
        }
        ScoreMode::TransE => {
            let mut s = 0.0;
            for k in 0..d {
                let x = head[k] as f64 + rel[k] as f64 - tail[k] as f64;
                s += x * x;
            }
            -s.sqrt()
        }
    }
}

pub fn scalar_score(
    p: &ModelParams,
    h: EntityId,
    r: RelationId,
    t: EntityId,
    mode: ScoreMode,
) -> f64 {
    let z = scalar_logit(p, h, r, t, mode);
    match mode {
        ScoreMode::TransE => z,
        _ => 1.0 / (1.0 + (-z).exp()),
    }
}

/// Rank of `target` after a full descending sort in which equal scores place
/// the target last. Candidates in `skip` (other than the target) are removed
/// first.
pub fn sorted_rank(scores: &[f64], target: EntityId, skip: &HashSet<EntityId>) -> usize {
    let mut order: Vec<EntityId> = (0..scores.len() as EntityId)
        .filter(|e| *e == target || !skip.contains(e))
        .collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then_with(|| (a == target).cmp(&(b == target)))
    });
    order.iter().position(|&e| e == target).unwrap() + 1
}

/// (head raw, head filtered, tail raw, tail filtered) by brute force.
pub fn brute_force_ranks(
    p: &ModelParams,
    n_relations: usize,
    all_known: &[Triple],
    t: &Triple,
    mode: ScoreMode,
) -> [usize; 4] {
    let n_e = p.n_entities() as EntityId;
    let inverse = t.relation + n_relations as RelationId;
    let tail_scores: Vec<f64> = (0..n_e)
        .map(|e| scalar_logit(p, t.head, t.relation, e, mode))
        .collect();
    let head_scores: Vec<f64> = (0..n_e)
        .map(|e| scalar_logit(p, t.tail, inverse, e, mode))
        .collect();
    let known_tails: HashSet<EntityId> = all_known
        .iter()
        .filter(|k| k.head == t.head && k.relation == t.relation)
        .map(|k| k.tail)
        .collect();
    let known_heads: HashSet<EntityId> = all_known
        .iter()
        .filter(|k| k.tail == t.tail && k.relation == t.relation)
        .map(|k| k.head)
        .collect();
    let none = HashSet::new();
    [
        sorted_rank(&head_scores, t.head, &none),
        sorted_rank(&head_scores, t.head, &known_heads),
        sorted_rank(&tail_scores, t.tail, &none),
        sorted_rank(&tail_scores, t.tail, &known_tails),
    ]
}

/// One path occurrence: type, first relation, second relation, intermediate.
pub type PathOccurrence = (PathType, RelationId, Option<RelationId>, Option<EntityId>);

/// Every closed path from `target.head` to `target.tail` starting with a
/// relation in `firsts`, found by looping over all intermediates and second
/// relations. Occurrences using the target triple are dropped.
pub fn enumerate_paths(
    known: &HashSet<Triple>,
    n_entities: usize,
    n_relations: usize,
    target: Triple,
    firsts: &[RelationId],
) -> Vec<PathOccurrence> {
    let (h, t) = (target.head, target.tail);
    let has = |a, r, b| known.contains(&Triple::new(a, r, b));
    let mut firsts = firsts.to_vec();
    firsts.sort_unstable();
    firsts.dedup();
    let mut out = Vec::new();
    for &s in &firsts {
        if has(h, s, t) && Triple::new(h, s, t) != target {
            out.push((PathType::T1, s, None, None));
        }
        if has(t, s, h) && Triple::new(t, s, h) != target {
            out.push((PathType::T2, s, None, None));
        }
        for e in 0..n_entities as EntityId {
            for x in 0..n_relations as RelationId {
                let shapes = [
                    (PathType::T3, Triple::new(e, s, h), Triple::new(e, x, t)),
                    (PathType::T4, Triple::new(e, s, h), Triple::new(t, x, e)),
                    (PathType::T5, Triple::new(h, s, e), Triple::new(e, x, t)),
                    (PathType::T6, Triple::new(h, s, e), Triple::new(t, x, e)),
                ];
                for (kind, a, b) in shapes {
                    if known.contains(&a) && known.contains(&b) && a != target && b != target {
                        out.push((kind, s, Some(x), Some(e)));
                    }
                }
            }
        }
    }
    out.sort();
    out
}

pub fn flatten_paths(found: &[PathMatch]) -> Vec<PathOccurrence> {
    let mut out = Vec::new();
    for m in found {
        let p = m.pattern;
        if m.via.is_empty() {
            out.push((p.kind, p.first, p.second, None));
        }
        for &e in &m.via {
            out.push((p.kind, p.first, p.second, Some(e)));
        }
    }
    out.sort();
    out
}

/// Forward-relation train triples of a graph as a set.
pub fn train_set(g: &KnowledgeGraph) -> HashSet<Triple> {
    let n_r = g.n_relations() as RelationId;
    g.triples(crosse::Split::Train)
        .iter()
        .filter(|t| t.relation < n_r)
        .copied()
        .collect()
}
