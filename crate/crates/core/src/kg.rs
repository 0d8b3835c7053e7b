//! Triple ingestion, label dictionaries and the adjacency indexes that
//! training, evaluation and path search query.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::{BitOr, BitOrAssign};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// Bijective label <-> dense id mapping. Ids are handed out in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    ids: HashMap<String, u32>,
    labels: Vec<String>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `label`, inserting it if unseen.
    pub fn encode(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.ids.insert(label.to_owned(), id);
        self.labels.push(label.to_owned());
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Writes `label<TAB>id` lines in id order.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (id, label) in self.labels.iter().enumerate() {
            writeln!(out, "{label}\t{id}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut slots: Vec<Option<String>> = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.split('\n').enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.is_empty() {
                continue;
            }
            let (label, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `label<TAB>id`"))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad id `{id}`")))?;
            if !seen.insert(label.to_owned()) {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("duplicate label `{label}`"),
                ));
            }
            if slots.len() <= id {
                slots.resize(id + 1, None);
            }
            if slots[id].replace(label.to_owned()).is_some() {
                return Err(Error::parse(path, i + 1, format!("duplicate id {id}")));
            }
        }
        let mut dict = Dictionary::new();
        for (id, slot) in slots.into_iter().enumerate() {
            let label = slot.ok_or_else(|| {
                Error::parse(path, 0, format!("id {id} missing; ids must be dense"))
            })?;
            dict.encode(&label);
        }
        Ok(dict)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Set of splits, used both to tag index entries and to select them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SplitMask(u8);

impl SplitMask {
    pub const NONE: SplitMask = SplitMask(0);
    pub const TRAIN: SplitMask = SplitMask(1);
    pub const VALID: SplitMask = SplitMask(2);
    pub const TEST: SplitMask = SplitMask(4);
    pub const ALL: SplitMask = SplitMask(7);

    pub fn intersects(self, other: SplitMask) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl From<Split> for SplitMask {
    fn from(split: Split) -> Self {
        SplitMask(1 << split.index())
    }
}

impl BitOr for SplitMask {
    type Output = SplitMask;

    fn bitor(self, rhs: SplitMask) -> SplitMask {
        SplitMask(self.0 | rhs.0)
    }
}

impl BitOrAssign for SplitMask {
    fn bitor_assign(&mut self, rhs: SplitMask) {
        self.0 |= rhs.0;
    }
}

/// Parses a tab-separated triple file, extending both dictionaries in
/// first-seen order. Known labels keep their ids.
pub fn load_triples(
    path: &Path,
    entities: &mut Dictionary,
    relations: &mut Dictionary,
) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, path, entities, relations)
}

/// Same as [`load_triples`] over an in-memory buffer; `origin` only labels errors.
pub fn parse_triples(
    text: &str,
    origin: &Path,
    entities: &mut Dictionary,
    relations: &mut Dictionary,
) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(head), Some(relation), Some(tail), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::parse(
                origin,
                i + 1,
                "expected exactly three tab-separated fields",
            ));
        };
        if head.is_empty() || relation.is_empty() || tail.is_empty() {
            return Err(Error::parse(origin, i + 1, "empty field"));
        }
        let head = entities.encode(head);
        let relation = relations.encode(relation);
        let tail = entities.encode(tail);
        triples.push(Triple::new(head, relation, tail));
    }
    Ok(triples)
}

/// Writes triples back as labelled TSV.
pub fn write_triples(
    path: &Path,
    triples: &[Triple],
    entities: &Dictionary,
    relations: &Dictionary,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    fn label<'a>(dict: &'a Dictionary, kind: &'static str, id: u32) -> Result<&'a str> {
        dict.label(id).ok_or(Error::IdOutOfRange {
            kind,
            id: id as u64,
            size: dict.len(),
        })
    }
    for t in triples {
        writeln!(
            out,
            "{}\t{}\t{}",
            label(entities, "entity", t.head)?,
            label(relations, "relation", t.relation)?,
            label(entities, "entity", t.tail)?
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Neighbor {
    entity: EntityId,
    splits: SplitMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Edge {
    relation: RelationId,
    entity: EntityId,
    splits: SplitMask,
}

/// Number of duplicate triples dropped per split during construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub duplicates: [usize; 3],
}

impl BuildReport {
    pub fn duplicates_in(&self, split: Split) -> usize {
        self.duplicates[split.index()]
    }
}

/// Immutable triple store with four adjacency indexes.
///
/// Every index entry carries the set of splits the triple occurs in, so a
/// triple present in both train and test is stored once and can be selected
/// through either split.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    n_entities: usize,
    n_relations: usize,
    inverse: bool,
    splits: [Vec<Triple>; 3],
    by_head_relation: HashMap<(EntityId, RelationId), Vec<Neighbor>>,
    by_relation_tail: HashMap<(RelationId, EntityId), Vec<Neighbor>>,
    out_edges: Vec<Vec<Edge>>,
    in_edges: Vec<Vec<Edge>>,
}

impl KnowledgeGraph {
    /// Builds the indexes. `n_relations` counts forward relations only.
    pub fn build(
        n_entities: usize,
        n_relations: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<(Self, BuildReport)> {
        Self::build_inner(n_entities, n_relations, false, [train, valid, test])
    }

    fn build_inner(
        n_entities: usize,
        n_relations: usize,
        inverse: bool,
        splits: [Vec<Triple>; 3],
    ) -> Result<(Self, BuildReport)> {
        let relation_slots = if inverse {
            2 * n_relations
        } else {
            n_relations
        };
        let mut report = BuildReport::default();
        let mut membership: HashMap<Triple, SplitMask> = HashMap::new();
        let mut kept: [Vec<Triple>; 3] = Default::default();

        for (split, triples) in Split::ALL.into_iter().zip(splits) {
            let mut seen = HashSet::with_capacity(triples.len());
            for t in triples {
                check_id("entity", t.head, n_entities)?;
                check_id("entity", t.tail, n_entities)?;
                check_id("relation", t.relation, relation_slots)?;
                if !seen.insert(t) {
                    report.duplicates[split.index()] += 1;
                    continue;
                }
                *membership.entry(t).or_default() |= split.into();
                kept[split.index()].push(t);
            }
            if report.duplicates[split.index()] > 0 {
                warn!(
                    "dropped {} duplicate triples from {split}",
                    report.duplicates[split.index()]
                );
            }
        }

        let mut unique: Vec<(Triple, SplitMask)> = membership.into_iter().collect();
        unique.sort_unstable_by_key(|(t, _)| *t);

        let mut by_head_relation: HashMap<(EntityId, RelationId), Vec<Neighbor>> = HashMap::new();
        let mut by_relation_tail: HashMap<(RelationId, EntityId), Vec<Neighbor>> = HashMap::new();
        let mut out_edges = vec![Vec::new(); n_entities];
        let mut in_edges = vec![Vec::new(); n_entities];
        for &(t, splits) in &unique {
            by_head_relation
                .entry((t.head, t.relation))
                .or_default()
                .push(Neighbor {
                    entity: t.tail,
                    splits,
                });
            by_relation_tail
                .entry((t.relation, t.tail))
                .or_default()
                .push(Neighbor {
                    entity: t.head,
                    splits,
                });
            out_edges[t.head as usize].push(Edge {
                relation: t.relation,
                entity: t.tail,
                splits,
            });
            in_edges[t.tail as usize].push(Edge {
                relation: t.relation,
                entity: t.head,
                splits,
            });
        }
        // `unique` is sorted by (head, relation, tail) so only the head-side
        // lists come out sorted for free.
        for list in by_relation_tail.values_mut() {
            list.sort_unstable_by_key(|n| n.entity);
        }
        for list in &mut in_edges {
            list.sort_unstable_by_key(|e| (e.relation, e.entity));
        }

        Ok((
            KnowledgeGraph {
                n_entities,
                n_relations,
                inverse,
                splits: kept,
                by_head_relation,
                by_relation_tail,
                out_edges,
                in_edges,
            },
            report,
        ))
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    /// Number of forward relations.
    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    /// Number of relation ids in use: doubled once inverses are materialized.
    pub fn n_relations_effective(&self) -> usize {
        if self.inverse {
            2 * self.n_relations
        } else {
            self.n_relations
        }
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse
    }

    /// Maps a forward relation to its inverse id and back.
    pub fn inverse_relation(&self, r: RelationId) -> RelationId {
        let n = self.n_relations as RelationId;
        if r < n {
            r + n
        } else {
            r - n
        }
    }

    pub fn triples(&self, split: Split) -> &[Triple] {
        &self.splits[split.index()]
    }

    pub fn len(&self) -> usize {
        self.splits.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, t: &Triple, mask: SplitMask) -> bool {
        self.by_head_relation
            .get(&(t.head, t.relation))
            .and_then(|list| {
                list.binary_search_by_key(&t.tail, |n| n.entity)
                    .ok()
                    .map(|i| list[i].splits.intersects(mask))
            })
            .unwrap_or(false)
    }

    /// Tails `e` with `(head, relation, e)` in the selected splits, ascending.
    pub fn tails(
        &self,
        head: EntityId,
        relation: RelationId,
        mask: SplitMask,
    ) -> impl Iterator<Item = EntityId> + '_ {
        self.by_head_relation
            .get(&(head, relation))
            .into_iter()
            .flatten()
            .filter(move |n| n.splits.intersects(mask))
            .map(|n| n.entity)
    }

    /// Heads `e` with `(e, relation, tail)` in the selected splits, ascending.
    pub fn heads(
        &self,
        relation: RelationId,
        tail: EntityId,
        mask: SplitMask,
    ) -> impl Iterator<Item = EntityId> + '_ {
        self.by_relation_tail
            .get(&(relation, tail))
            .into_iter()
            .flatten()
            .filter(move |n| n.splits.intersects(mask))
            .map(|n| n.entity)
    }

    /// `(relation, tail)` pairs leaving `head`, sorted by relation then tail.
    pub fn out_edges(
        &self,
        head: EntityId,
        mask: SplitMask,
    ) -> impl Iterator<Item = (RelationId, EntityId)> + '_ {
        self.out_edges
            .get(head as usize)
            .into_iter()
            .flatten()
            .filter(move |e| e.splits.intersects(mask))
            .map(|e| (e.relation, e.entity))
    }

    /// `(relation, head)` pairs entering `tail`, sorted by relation then head.
    pub fn in_edges(
        &self,
        tail: EntityId,
        mask: SplitMask,
    ) -> impl Iterator<Item = (RelationId, EntityId)> + '_ {
        self.in_edges
            .get(tail as usize)
            .into_iter()
            .flatten()
            .filter(move |e| e.splits.intersects(mask))
            .map(|e| (e.relation, e.entity))
    }

    /// Returns a graph where every `(h, r, t)` is joined by `(t, r + n_r, h)`
    /// in the same split.
    pub fn add_inverse_relations(self) -> Result<Self> {
        if self.inverse {
            return Err(Error::InverseAlreadyApplied);
        }
        let n = self.n_relations as RelationId;
        let splits = self.splits.map(|triples| {
            let mut out = Vec::with_capacity(2 * triples.len());
            out.extend_from_slice(&triples);
            out.extend(
                triples
                    .iter()
                    .map(|t| Triple::new(t.tail, t.relation + n, t.head)),
            );
            out
        });
        let (graph, _) = Self::build_inner(self.n_entities, self.n_relations, true, splits)?;
        Ok(graph)
    }

    /// Distinct `(head, relation)` pairs present in the selected splits.
    pub fn head_relation_pairs(&self, mask: SplitMask) -> usize {
        self.by_head_relation
            .values()
            .filter(|list| list.iter().any(|n| n.splits.intersects(mask)))
            .count()
    }
}

fn check_id(kind: &'static str, id: u32, size: usize) -> Result<()> {
    if (id as usize) < size {
        Ok(())
    } else {
        Err(Error::IdOutOfRange {
            kind,
            id: id as u64,
            size,
        })
    }
}

/// Groups triples by relation, used by statistics that need per-relation scans.
pub(crate) fn group_by_relation<'a>(
    triples: impl IntoIterator<Item = &'a Triple>,
) -> HashMap<RelationId, Vec<Triple>> {
    let mut groups: HashMap<RelationId, Vec<Triple>> = HashMap::new();
    for t in triples {
        match groups.entry(t.relation) {
            Entry::Occupied(mut e) => e.get_mut().push(*t),
            Entry::Vacant(e) => {
                e.insert(vec![*t]);
            }
        }
    }
    groups
}
