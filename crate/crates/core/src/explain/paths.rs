use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, SplitMask, Triple};

/// Orientation of a closed path from `h` to `t`. `s` is the first relation,
/// `x` the second one and `e` the intermediate entity.
///
/// ```text
/// T1  h -s-> t
/// T2  h <-s- t
/// T3  h <-s- e -x-> t
/// T4  h <-s- e <-x- t
/// T5  h -s-> e -x-> t
/// T6  h -s-> e <-x- t
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathType {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
}

impl PathType {
    pub const ALL: [PathType; 6] = [
        PathType::T1,
        PathType::T2,
        PathType::T3,
        PathType::T4,
        PathType::T5,
        PathType::T6,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_direct(self) -> bool {
        matches!(self, PathType::T1 | PathType::T2)
    }

    /// First step leaves `h` forward (`h -s-> ·`) rather than arriving at it.
    fn starts_forward(self) -> bool {
        matches!(self, PathType::T1 | PathType::T5 | PathType::T6)
    }

    /// Second step arrives at `t` (`· -x-> t`) rather than leaving it.
    fn ends_forward(self) -> bool {
        matches!(self, PathType::T3 | PathType::T5)
    }
}

impl fmt::Display for PathType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.index() + 1)
    }
}

impl FromStr for PathType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        PathType::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown path type `{s}`")))
    }
}

/// A relation-level path shape, independent of the entities it connects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathPattern {
    pub kind: PathType,
    pub first: RelationId,
    pub second: Option<RelationId>,
}

impl PathPattern {
    /// The triples making up this pattern between `from` and `to`, through
    /// `via` for the two-step types.
    pub fn triples(&self, from: EntityId, to: EntityId, via: Option<EntityId>) -> Vec<Triple> {
        let s = self.first;
        match (self.kind, via, self.second) {
            (PathType::T1, _, _) => vec![Triple::new(from, s, to)],
            (PathType::T2, _, _) => vec![Triple::new(to, s, from)],
            (kind, Some(e), Some(x)) => {
                let first = if kind.starts_forward() {
                    Triple::new(from, s, e)
                } else {
                    Triple::new(e, s, from)
                };
                let second = if kind.ends_forward() {
                    Triple::new(e, x, to)
                } else {
                    Triple::new(to, x, e)
                };
                vec![first, second]
            }
            _ => panic!("two-step pattern {self:?} needs an intermediate entity"),
        }
    }
}

/// A pattern together with every intermediate entity realizing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathMatch {
    pub pattern: PathPattern,
    /// Empty for the direct types.
    pub via: Vec<EntityId>,
}

/// Index from an entity adjacent to `t` to the forward relations linking them.
fn neighbors_of(
    edges: impl Iterator<Item = (RelationId, EntityId)>,
    n_relations: usize,
) -> HashMap<EntityId, Vec<RelationId>> {
    let mut map: HashMap<EntityId, Vec<RelationId>> = HashMap::new();
    for (r, e) in edges.filter(|&(r, _)| (r as usize) < n_relations) {
        map.entry(e).or_default().push(r);
    }
    map
}

/// Every closed path of length one or two from `target.head` to
/// `target.tail` whose first relation is in `similar`.
///
/// Two-step paths are found by joining the neighbors of `h` along the first
/// relation with an index of the neighbors of `t`. The second relation is
/// unconstrained. Instantiations that use the target triple itself are
/// skipped.
pub fn search_paths(
    graph: &KnowledgeGraph,
    target: Triple,
    similar: &[RelationId],
    mask: SplitMask,
) -> Vec<PathMatch> {
    let (h, t) = (target.head, target.tail);
    let n_r = graph.n_relations();
    // (e, x, t) and (t, x, e), keyed by e
    let into_t = neighbors_of(graph.in_edges(t, mask), n_r);
    let out_of_t = neighbors_of(graph.out_edges(t, mask), n_r);

    let mut found: BTreeMap<PathPattern, Vec<EntityId>> = BTreeMap::new();
    let mut keep = |pattern: PathPattern, via: Option<EntityId>| {
        if pattern.triples(h, t, via).contains(&target) {
            return;
        }
        let entry = found.entry(pattern).or_default();
        if let Some(e) = via {
            entry.push(e);
        }
    };

    let mut firsts: Vec<RelationId> = similar
        .iter()
        .copied()
        .filter(|&s| (s as usize) < n_r)
        .collect();
    firsts.sort_unstable();
    firsts.dedup();
    for s in firsts {
        let direct = |kind| PathPattern {
            kind,
            first: s,
            second: None,
        };
        if graph.contains(&Triple::new(h, s, t), mask) {
            keep(direct(PathType::T1), None);
        }
        if graph.contains(&Triple::new(t, s, h), mask) {
            keep(direct(PathType::T2), None);
        }
        let arriving: Vec<EntityId> = graph.heads(s, h, mask).collect();
        let leaving: Vec<EntityId> = graph.tails(h, s, mask).collect();
        for (kind, starts, index) in [
            (PathType::T3, &arriving, &into_t),
            (PathType::T4, &arriving, &out_of_t),
            (PathType::T5, &leaving, &into_t),
            (PathType::T6, &leaving, &out_of_t),
        ] {
            for &e in starts {
                for &x in index.get(&e).map(Vec::as_slice).unwrap_or_default() {
                    keep(
                        PathPattern {
                            kind,
                            first: s,
                            second: Some(x),
                        },
                        Some(e),
                    );
                }
            }
        }
    }
    found
        .into_iter()
        .map(|(pattern, mut via)| {
            via.sort_unstable();
            PathMatch { pattern, via }
        })
        .collect()
}

/// A similar structure backing an explanation: a different head `h_s` with
/// `(h_s, r, t_s)` in the graph and the same path pattern from `h_s` to `t_s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub similar_head: EntityId,
    pub analog_tail: EntityId,
    pub via: Option<EntityId>,
    /// Path triples followed by `(h_s, r, t_s)`.
    pub witness: Vec<Triple>,
}

/// Intermediate entities through which `pattern` connects `from` to `to`
/// (a single `None` for a present direct path).
fn instantiations(
    graph: &KnowledgeGraph,
    pattern: &PathPattern,
    from: EntityId,
    to: EntityId,
    mask: SplitMask,
) -> Vec<Option<EntityId>> {
    if pattern.kind.is_direct() {
        let t = pattern.triples(from, to, None);
        return if graph.contains(&t[0], mask) {
            vec![None]
        } else {
            vec![]
        };
    }
    let starts: Vec<EntityId> = if pattern.kind.starts_forward() {
        graph.tails(from, pattern.first, mask).collect()
    } else {
        graph.heads(pattern.first, from, mask).collect()
    };
    starts
        .into_iter()
        .filter(|&e| {
            let t = pattern.triples(from, to, Some(e));
            graph.contains(&t[1], mask)
        })
        .map(Some)
        .collect()
}

/// One support per instantiation of `pattern` from each similar head to each
/// of its `relation`-tails.
pub fn find_supports(
    graph: &KnowledgeGraph,
    target: Triple,
    pattern: &PathPattern,
    similar_heads: &[EntityId],
    mask: SplitMask,
) -> Vec<Support> {
    let mut out = Vec::new();
    for &hs in similar_heads.iter().filter(|&&e| e != target.head) {
        for ts in graph.tails(hs, target.relation, mask) {
            let conclusion = Triple::new(hs, target.relation, ts);
            for via in instantiations(graph, pattern, hs, ts, mask) {
                let mut witness = pattern.triples(hs, ts, via);
                if witness.contains(&conclusion) {
                    continue;
                }
                witness.push(conclusion);
                out.push(Support {
                    similar_head: hs,
                    analog_tail: ts,
                    via,
                    witness,
                });
            }
        }
    }
    out
}
