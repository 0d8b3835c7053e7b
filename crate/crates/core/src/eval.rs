//! Link-prediction evaluation: per-triple head and tail ranks under the raw
//! and filter settings, aggregate MR / MRR / Hit@k, and the 1-1 / 1-N / N-1 /
//! N-N relation breakdown.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{
    group_by_relation, EntityId, KnowledgeGraph, RelationId, Split, SplitMask, Triple,
};
use crate::model::{ModelParams, ScoreMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Head,
    Tail,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Head => "head",
            Direction::Tail => "tail",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" => Ok(Direction::Head),
            "tail" => Ok(Direction::Tail),
            other => Err(Error::Config(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Raw,
    Filter,
}

impl Setting {
    /// Parses a comma-separated list such as `raw,filter`.
    pub fn parse_list(s: &str) -> Result<Vec<Setting>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let setting = part.parse()?;
            if !out.contains(&setting) {
                out.push(setting);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no evaluation setting given".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Raw => "raw",
            Setting::Filter => "filter",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Setting::Raw),
            "filter" | "filtered" => Ok(Setting::Filter),
            other => Err(Error::Config(format!("unknown setting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub triple: Triple,
    pub direction: Direction,
    pub raw_rank: usize,
    pub filtered_rank: usize,
}

impl RankRecord {
    pub fn rank(&self, setting: Setting) -> usize {
        match setting {
            Setting::Raw => self.raw_rank,
            Setting::Filter => self.filtered_rank,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mr: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl Metrics {
    pub fn from_ranks(ranks: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Metrics::default();
        let (mut sum, mut rr, mut h1, mut h3, mut h10) = (0.0, 0.0, 0usize, 0usize, 0usize);
        for rank in ranks {
            m.count += 1;
            sum += rank as f64;
            rr += 1.0 / rank as f64;
            h1 += (rank <= 1) as usize;
            h3 += (rank <= 3) as usize;
            h10 += (rank <= 10) as usize;
        }
        if m.count > 0 {
            let n = m.count as f64;
            m.mr = sum / n;
            m.mrr = rr / n;
            m.hits1 = h1 as f64 / n;
            m.hits3 = h3 as f64 / n;
            m.hits10 = h10 as f64 / n;
        }
        m
    }

    /// `(name, value)` pairs in report order.
    pub fn values(&self) -> [(&'static str, f64); 6] {
        [
            ("count", self.count as f64),
            ("MR", self.mr),
            ("MRR", self.mrr),
            ("Hit@1", self.hits1),
            ("Hit@3", self.hits3),
            ("Hit@10", self.hits10),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-N")]
    OneToMany,
    #[serde(rename = "N-1")]
    ManyToOne,
    #[serde(rename = "N-N")]
    ManyToMany,
}

impl RelationType {
    pub const ALL: [RelationType; 4] = [
        RelationType::OneToOne,
        RelationType::OneToMany,
        RelationType::ManyToOne,
        RelationType::ManyToMany,
    ];

    /// Average tails-per-head and heads-per-tail below this count as "1".
    pub const THRESHOLD: f64 = 1.5;

    pub fn classify(tails_per_head: f64, heads_per_tail: f64) -> Self {
        let many_tails = tails_per_head >= Self::THRESHOLD;
        let many_heads = heads_per_tail >= Self::THRESHOLD;
        match (many_heads, many_tails) {
            (false, false) => RelationType::OneToOne,
            (false, true) => RelationType::OneToMany,
            (true, false) => RelationType::ManyToOne,
            (true, true) => RelationType::ManyToMany,
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationType::OneToOne => "1-1",
            RelationType::OneToMany => "1-N",
            RelationType::ManyToOne => "N-1",
            RelationType::ManyToMany => "N-N",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub relation_type: RelationType,
    pub direction: Direction,
    pub raw: Metrics,
    pub filter: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub raw: Metrics,
    pub filter: Metrics,
    pub buckets: Vec<BucketMetrics>,
}

impl MetricsTable {
    pub fn from_records(
        records: &[RankRecord],
        types: &BTreeMap<RelationId, RelationType>,
    ) -> Self {
        let overall = |s: Setting| Metrics::from_ranks(records.iter().map(|r| r.rank(s)));
        let mut buckets = Vec::new();
        for relation_type in RelationType::ALL {
            for direction in [Direction::Head, Direction::Tail] {
                let chosen: Vec<&RankRecord> = records
                    .iter()
                    .filter(|r| {
                        r.direction == direction
                            && types.get(&r.triple.relation) == Some(&relation_type)
                    })
                    .collect();
                if chosen.is_empty() {
                    continue;
                }
                buckets.push(BucketMetrics {
                    relation_type,
                    direction,
                    raw: Metrics::from_ranks(chosen.iter().map(|r| r.raw_rank)),
                    filter: Metrics::from_ranks(chosen.iter().map(|r| r.filtered_rank)),
                });
            }
        }
        MetricsTable {
            raw: overall(Setting::Raw),
            filter: overall(Setting::Filter),
            buckets,
        }
    }

    pub fn get(&self, setting: Setting) -> &Metrics {
        match setting {
            Setting::Raw => &self.raw,
            Setting::Filter => &self.filter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub table: MetricsTable,
    pub records: Vec<RankRecord>,
}

/// Pessimistic rank: competitors with an equal score count as ranked above.
fn rank_among(scores: &[f64], target: EntityId, known: &[EntityId]) -> (usize, usize) {
    let target_score = scores[target as usize];
    let mut raw = 1;
    let mut filtered = 1;
    for (e, &s) in scores.iter().enumerate() {
        let e = e as EntityId;
        if e == target || s < target_score {
            continue;
        }
        raw += 1;
        if known.binary_search(&e).is_err() {
            filtered += 1;
        }
    }
    (raw, filtered)
}

fn check_forward(graph: &KnowledgeGraph, t: &Triple) -> Result<()> {
    if (t.relation as usize) < graph.n_relations() {
        Ok(())
    } else {
        Err(Error::IdOutOfRange {
            kind: "forward relation",
            id: t.relation as u64,
            size: graph.n_relations(),
        })
    }
}

/// Rank of the true tail among all entities for `(h, r, ?)`.
pub fn rank_tail(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    t: &Triple,
    mode: ScoreMode,
) -> Result<RankRecord> {
    check_forward(graph, t)?;
    params.check_entity(t.tail)?;
    let scores = params.plausibility_all_tails(t.head, t.relation, mode)?;
    let known: Vec<EntityId> = graph.tails(t.head, t.relation, SplitMask::ALL).collect();
    let (raw_rank, filtered_rank) = rank_among(&scores, t.tail, &known);
    Ok(RankRecord {
        triple: *t,
        direction: Direction::Tail,
        raw_rank,
        filtered_rank,
    })
}

/// Rank of the true head, scored as tail prediction for `(t, r⁻¹, ?)`.
pub fn rank_head(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    t: &Triple,
    mode: ScoreMode,
) -> Result<RankRecord> {
    check_forward(graph, t)?;
    params.check_entity(t.head)?;
    let n_r = graph.n_relations();
    if params.n_relations() < 2 * n_r {
        return Err(Error::MissingInverse(format!(
            "model has {} relation rows, head ranking needs {}",
            params.n_relations(),
            2 * n_r
        )));
    }
    let inverse = t.relation + n_r as RelationId;
    let scores = params.plausibility_all_tails(t.tail, inverse, mode)?;
    let known: Vec<EntityId> = graph.heads(t.relation, t.tail, SplitMask::ALL).collect();
    let (raw_rank, filtered_rank) = rank_among(&scores, t.head, &known);
    Ok(RankRecord {
        triple: *t,
        direction: Direction::Head,
        raw_rank,
        filtered_rank,
    })
}

/// Evaluates every forward triple of `split` in both directions.
pub fn evaluate(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    split: Split,
    mode: ScoreMode,
    threads: usize,
) -> Result<Evaluation> {
    let n_r = graph.n_relations() as RelationId;
    let triples: Vec<Triple> = graph
        .triples(split)
        .iter()
        .filter(|t| t.relation < n_r)
        .copied()
        .collect();
    evaluate_triples(params, graph, &triples, mode, threads)
}

pub fn evaluate_triples(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    triples: &[Triple],
    mode: ScoreMode,
    threads: usize,
) -> Result<Evaluation> {
    if triples.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let rank_both = |t: &Triple| -> Result<[RankRecord; 2]> {
        Ok([
            rank_head(params, graph, t, mode)?,
            rank_tail(params, graph, t, mode)?,
        ])
    };
    let pairs: Vec<[RankRecord; 2]> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| triples.par_iter().map(rank_both).collect::<Result<_>>())?
    } else {
        triples.iter().map(rank_both).collect::<Result<_>>()?
    };
    let records: Vec<RankRecord> = pairs.into_iter().flatten().collect();
    let types = classify_relations(graph);
    Ok(Evaluation {
        table: MetricsTable::from_records(&records, &types),
        records,
    })
}

fn relation_stats(triples: &[Triple]) -> (f64, f64) {
    let heads: HashSet<EntityId> = triples.iter().map(|t| t.head).collect();
    let tails: HashSet<EntityId> = triples.iter().map(|t| t.tail).collect();
    let n = triples.len() as f64;
    (n / heads.len() as f64, n / tails.len() as f64)
}

/// Classifies each forward relation from its train triples. A relation with
/// no train triples is classified from whichever splits mention it.
pub fn classify_relations(graph: &KnowledgeGraph) -> BTreeMap<RelationId, RelationType> {
    let n_r = graph.n_relations() as RelationId;
    let forward = |split: Split| {
        graph
            .triples(split)
            .iter()
            .filter(move |t| t.relation < n_r)
    };
    let train = group_by_relation(forward(Split::Train));
    let all = group_by_relation(
        forward(Split::Train)
            .chain(forward(Split::Valid))
            .chain(forward(Split::Test)),
    );
    let mut out = BTreeMap::new();
    for r in 0..n_r {
        let triples = match train.get(&r) {
            Some(t) => t,
            None => match all.get(&r) {
                Some(t) => {
                    warn!("relation {r} has no train triples; classifying from other splits");
                    t
                }
                None => continue,
            },
        };
        let (tph, hpt) = relation_stats(triples);
        out.insert(r, RelationType::classify(tph, hpt));
    }
    out
}

/// Fraction of classified relations in each bucket, in [`RelationType::ALL`] order.
pub fn relation_type_shares(types: &BTreeMap<RelationId, RelationType>) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for ty in types.values() {
        counts[RelationType::ALL
            .iter()
            .position(|x| x == ty)
            .expect("exhaustive")] += 1;
    }
    let total = types.len().max(1) as f64;
    counts.map(|c| c as f64 / total)
}

/// One line of the metrics TSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub setting: Setting,
    pub relation_type: String,
    pub direction: String,
    pub value: f64,
}

pub const METRICS_HEADER: &str = "metric\tsetting\trelation_type\tdirection\tvalue";
pub const RANKS_HEADER: &str = "h\tr\tt\tdirection\traw\tfiltered";

pub fn metric_rows(table: &MetricsTable, settings: &[Setting]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for &setting in settings {
        for (name, value) in table.get(setting).values() {
            rows.push(MetricRow {
                metric: name.to_owned(),
                setting,
                relation_type: "all".into(),
                direction: "both".into(),
                value,
            });
        }
        for b in &table.buckets {
            let m = match setting {
                Setting::Raw => &b.raw,
                Setting::Filter => &b.filter,
            };
            for (name, value) in m.values() {
                rows.push(MetricRow {
                    metric: name.to_owned(),
                    setting,
                    relation_type: b.relation_type.to_string(),
                    direction: b.direction.to_string(),
                    value,
                });
            }
        }
    }
    rows
}

pub fn write_metrics_tsv(path: &Path, table: &MetricsTable, settings: &[Setting]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in metric_rows(table, settings) {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            row.metric, row.setting, row.relation_type, row.direction, row.value
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_tsv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing metrics header")),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::parse(path, i + 1, "expected 5 fields"));
            }
            Ok(MetricRow {
                metric: f[0].to_owned(),
                setting: f[1].parse()?,
                relation_type: f[2].to_owned(),
                direction: f[3].to_owned(),
                value: f[4]
                    .parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad value `{}`", f[4])))?,
            })
        })
        .collect()
}

pub fn write_metrics_json(path: &Path, table: &MetricsTable) -> Result<()> {
    let text = serde_json::to_string_pretty(table)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_rank_records(path: &Path, records: &[RankRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{RANKS_HEADER}").map_err(io)?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.triple.head,
            r.triple.relation,
            r.triple.tail,
            r.direction,
            r.raw_rank,
            r.filtered_rank
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_rank_records(path: &Path) -> Result<Vec<RankRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RANKS_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing rank header")),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(Error::parse(path, i + 1, "expected 6 fields"));
            }
            let num = |s: &str| -> Result<u64> {
                s.parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad number `{s}`")))
            };
            Ok(RankRecord {
                triple: Triple::new(num(f[0])? as u32, num(f[1])? as u32, num(f[2])? as u32),
                direction: f[3].parse()?,
                raw_rank: num(f[4])? as usize,
                filtered_rank: num(f[5])? as usize,
            })
        })
        .collect()
}
