//! Learnable parameters and the score functions.
//!
//! Parameters are stored as `f32`; every derived quantity (interaction sums,
//! `tanh`, dot products, distances) is evaluated in `f64`.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreMode {
    /// Interaction embeddings: `σ(tanh(c_r∘h + c_r∘h∘r + b)·t)`.
    #[serde(rename = "crosse")]
    CrossE,
    /// Ablation without interactions: `σ(tanh(h + r + b)·t)`.
    #[serde(rename = "crosse_s")]
    CrossES,
    /// Translation baseline: `-‖h + r - t‖₂`.
    #[serde(rename = "transe")]
    TransE,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 3] = [ScoreMode::CrossE, ScoreMode::CrossES, ScoreMode::TransE];

    pub fn needs_interaction(self) -> bool {
        matches!(self, ScoreMode::CrossE)
    }

    /// Modes whose output passes through `tanh` then the sigmoid.
    pub fn is_probabilistic(self) -> bool {
        !matches!(self, ScoreMode::TransE)
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::CrossE => "crosse",
            ScoreMode::CrossES => "crosse_s",
            ScoreMode::TransE => "transe",
        })
    }
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crosse" => Ok(ScoreMode::CrossE),
            "crosse_s" | "crosses" => Ok(ScoreMode::CrossES),
            "transe" => Ok(ScoreMode::TransE),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| x * y as f64).sum()
}

pub(crate) fn l2_distance(a: &[f64], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, &y)| {
            let d = x - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// General entity embeddings `E`, general relation embeddings `R`, the
/// interaction matrix `C` and the global bias `b`.
///
/// `C` is optional so that checkpoints of models that never use it (TransE)
/// can be loaded; asking for an interaction-dependent quantity then fails.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub entity: Matrix,
    pub relation: Matrix,
    pub interaction: Option<Matrix>,
    pub bias: Vec<f32>,
}

impl ModelParams {
    /// Uniform `[-6/√d, 6/√d]` initialization of `E`, `R`, `C`; zero bias.
    pub fn init(n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config(
                "embedding dimension must be at least 1".into(),
            ));
        }
        if n_entities == 0 || n_relations == 0 {
            return Err(Error::Empty("dictionary"));
        }
        let bound = 6.0 / (dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound as f32, bound as f32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = |rows: usize| {
            let data = (0..rows * dim).map(|_| dist.sample(&mut rng)).collect();
            Matrix {
                rows,
                cols: dim,
                data,
            }
        };
        let entity = sample(n_entities);
        let relation = sample(n_relations);
        let interaction = sample(n_relations);
        Ok(ModelParams {
            entity,
            relation,
            interaction: Some(interaction),
            bias: vec![0.0; dim],
        })
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(n_entities: usize, n_relations: usize, dim: usize) -> Self {
        ModelParams {
            entity: Matrix::zeros(n_entities, dim),
            relation: Matrix::zeros(n_relations, dim),
            interaction: Some(Matrix::zeros(n_relations, dim)),
            bias: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn n_entities(&self) -> usize {
        self.entity.rows()
    }

    pub fn n_relations(&self) -> usize {
        self.relation.rows()
    }

    /// Number of stored scalars: `(n_e + 2·n_r + 1)·d` when `C` is present.
    pub fn param_count(&self) -> usize {
        self.entity.len()
            + self.relation.len()
            + self.interaction.as_ref().map_or(0, Matrix::len)
            + self.bias.len()
    }

    pub fn interaction(&self) -> Result<&Matrix> {
        self.interaction
            .as_ref()
            .ok_or(Error::MissingTensor("interaction (C)"))
    }

    pub fn is_finite(&self) -> bool {
        self.entity.as_slice().iter().all(|x| x.is_finite())
            && self.relation.as_slice().iter().all(|x| x.is_finite())
            && self
                .interaction
                .as_ref()
                .is_none_or(|c| c.as_slice().iter().all(|x| x.is_finite()))
            && self.bias.iter().all(|x| x.is_finite())
    }

    /// Checks that every tensor agrees on `d` and that `C` matches `R`.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.entity.cols() != d || self.relation.cols() != d {
            return Err(Error::Shape(format!(
                "E has {} columns, R has {}, b has {d}",
                self.entity.cols(),
                self.relation.cols()
            )));
        }
        if let Some(c) = &self.interaction {
            if c.cols() != d || c.rows() != self.relation.rows() {
                return Err(Error::Shape(format!(
                    "C is {}x{}, expected {}x{d}",
                    c.rows(),
                    c.cols(),
                    self.relation.rows()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn check_entity(&self, e: EntityId) -> Result<()> {
        if (e as usize) < self.n_entities() {
            Ok(())
        } else {
            Err(Error::IdOutOfRange {
                kind: "entity",
                id: e as u64,
                size: self.n_entities(),
            })
        }
    }

    pub(crate) fn check_relation(&self, r: RelationId) -> Result<()> {
        if (r as usize) < self.n_relations() {
            Ok(())
        } else {
            Err(Error::IdOutOfRange {
                kind: "relation",
                id: r as u64,
                size: self.n_relations(),
            })
        }
    }

    /// Interaction embedding of the head: `h_I = c_r ∘ h`.
    pub fn entity_interaction(&self, h: EntityId, r: RelationId) -> Result<Vec<f64>> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        let c = self.interaction()?.row(r as usize);
        Ok(c.iter()
            .zip(self.entity.row(h as usize))
            .map(|(&c, &h)| c as f64 * h as f64)
            .collect())
    }

    /// Interaction embedding of the relation: `r_I = h_I ∘ r`.
    pub fn relation_interaction(&self, h: EntityId, r: RelationId) -> Result<Vec<f64>> {
        let hi = self.entity_interaction(h, r)?;
        Ok(hi
            .iter()
            .zip(self.relation.row(r as usize))
            .map(|(x, &r)| x * r as f64)
            .collect())
    }

    /// The query-side vector compared against tail embeddings: `q_hr` for the
    /// probabilistic modes, `h + r` for TransE.
    pub fn query(&self, h: EntityId, r: RelationId, mode: ScoreMode) -> Result<Vec<f64>> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        let head = self.entity.row(h as usize);
        let rel = self.relation.row(r as usize);
        let q = match mode {
            ScoreMode::CrossE => {
                let c = self.interaction()?.row(r as usize);
                (0..self.dim())
                    .map(|k| {
                        let hi = c[k] as f64 * head[k] as f64;
                        (hi + hi * rel[k] as f64 + self.bias[k] as f64).tanh()
                    })
                    .collect()
            }
            ScoreMode::CrossES => (0..self.dim())
                .map(|k| (head[k] as f64 + rel[k] as f64 + self.bias[k] as f64).tanh())
                .collect(),
            ScoreMode::TransE => (0..self.dim())
                .map(|k| head[k] as f64 + rel[k] as f64)
                .collect(),
        };
        Ok(q)
    }

    /// Order-preserving pre-activation score: the logit `q·t` for the
    /// probabilistic modes, `-‖h + r - t‖` for TransE.
    pub fn plausibility(&self, query: &[f64], t: EntityId, mode: ScoreMode) -> f64 {
        let tail = self.entity.row(t as usize);
        match mode {
            ScoreMode::TransE => -l2_distance(query, tail),
            _ => dot(query, tail),
        }
    }

    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId, mode: ScoreMode) -> Result<f64> {
        self.check_entity(t)?;
        let q = self.query(h, r, mode)?;
        Ok(self.activate(self.plausibility(&q, t, mode), mode))
    }

    fn activate(&self, raw: f64, mode: ScoreMode) -> f64 {
        if mode.is_probabilistic() {
            sigmoid(raw)
        } else {
            raw
        }
    }

    /// Scores of `(h, r, e)` for every entity `e`, from a single query build.
    pub fn score_all_tails(&self, h: EntityId, r: RelationId, mode: ScoreMode) -> Result<Vec<f64>> {
        let mut out = self.plausibility_all_tails(h, r, mode)?;
        if mode.is_probabilistic() {
            out.iter_mut().for_each(|x| *x = sigmoid(*x));
        }
        Ok(out)
    }

    /// Pre-activation scores for every tail. Used for ranking: the sigmoid is
    /// monotone but saturates to exactly 1.0 for large logits.
    pub fn plausibility_all_tails(
        &self,
        h: EntityId,
        r: RelationId,
        mode: ScoreMode,
    ) -> Result<Vec<f64>> {
        let q = self.query(h, r, mode)?;
        Ok((0..self.n_entities() as EntityId)
            .map(|e| self.plausibility(&q, e, mode))
            .collect())
    }
}
