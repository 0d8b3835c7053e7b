use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExplainedTriple, Explanation, ExplanationMetrics, PathType};
use crate::error::{Error, Result};
use crate::kg::{Dictionary, Triple};

/// Dictionaries used to add readable names to the dump.
#[derive(Debug, Clone, Copy)]
pub struct DumpLabels<'a> {
    pub entities: &'a Dictionary,
    pub relations: &'a Dictionary,
}

#[derive(Serialize, Deserialize)]
struct LabelledExplanation {
    #[serde(flatten)]
    explanation: Explanation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct DumpLine {
    target: Triple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<[String; 3]>,
    support_count: usize,
    explanations: Vec<LabelledExplanation>,
}

fn label(dict: &Dictionary, id: u32) -> String {
    dict.label(id).map_or_else(|| id.to_string(), str::to_owned)
}

/// Writes one JSON object per explained triple.
pub fn write_dump(
    path: &Path,
    explained: &[ExplainedTriple],
    labels: Option<DumpLabels<'_>>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in explained {
        let t = item.target;
        let line = DumpLine {
            target: t,
            labels: labels.map(|l| {
                [
                    label(l.entities, t.head),
                    label(l.relations, t.relation),
                    label(l.entities, t.tail),
                ]
            }),
            support_count: item.support_count(),
            explanations: item
                .explanations
                .iter()
                .map(|e| LabelledExplanation {
                    explanation: e.clone(),
                    path: labels.map(|l| {
                        std::iter::once(e.pattern.first)
                            .chain(e.pattern.second)
                            .map(|r| label(l.relations, r))
                            .collect()
                    }),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: &Path) -> Result<Vec<ExplainedTriple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line: DumpLine =
                serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            Ok(ExplainedTriple {
                target: line.target,
                explanations: line
                    .explanations
                    .into_iter()
                    .map(|e| e.explanation)
                    .collect(),
            })
        })
        .collect()
}

/// One row of the metrics summary: a `(k_r, k_e)` operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub k_relations: usize,
    pub k_entities: usize,
    pub metrics: ExplanationMetrics,
}

pub const METRICS_HEADER: &str =
    "k_r\tk_e\ttriples\texplained\trecall\ttotal_supports\tavg_support\t\
supports_t1\tsupports_t2\tsupports_t3\tsupports_t4\tsupports_t5\tsupports_t6\t\
share_t1\tshare_t2\tshare_t3\tshare_t4\tshare_t5\tshare_t6";

pub fn write_metrics_tsv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        let m = &row.metrics;
        let mut fields = vec![
            row.k_relations.to_string(),
            row.k_entities.to_string(),
            m.triples.to_string(),
            m.explained.to_string(),
            m.recall.to_string(),
            m.total_supports.to_string(),
            m.avg_support
                .map_or_else(|| "NA".to_owned(), |x| x.to_string()),
        ];
        fields.extend(m.supports_by_type.iter().map(ToString::to_string));
        fields.extend(m.type_shares.iter().map(ToString::to_string));
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_tsv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing explanation metrics header")),
    }
    let columns = METRICS_HEADER.split('\t').count();
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != columns {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {columns} fields"),
                ));
            }
            let int = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad count `{s}`")))
            };
            let float = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad number `{s}`")))
            };
            let mut by_type = [0usize; 6];
            let mut shares = [0f64; 6];
            for k in 0..PathType::ALL.len() {
                by_type[k] = int(f[7 + k])?;
                shares[k] = float(f[13 + k])?;
            }
            Ok(MetricsRow {
                k_relations: int(f[0])?,
                k_entities: int(f[1])?,
                metrics: ExplanationMetrics {
                    triples: int(f[2])?,
                    explained: int(f[3])?,
                    recall: float(f[4])?,
                    total_supports: int(f[5])?,
                    avg_support: if f[6] == "NA" {
                        None
                    } else {
                        Some(float(f[6])?)
                    },
                    supports_by_type: by_type,
                    type_shares: shares,
                },
            })
        })
        .collect()
}
