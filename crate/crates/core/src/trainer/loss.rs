//! Negative-sampling log-likelihood loss, its analytic gradient, and the
//! margin-ranking objective used for the TransE baseline.

use std::collections::BTreeMap;

use rand::Rng;

use super::bag::TrainingBag;
use crate::error::{Error, Result};
use crate::model::{dot, sigmoid, ModelParams, ScoreMode};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const LOG_EPS: f64 = 1e-12;

/// Margin of the TransE hinge loss.
pub const TRANSE_MARGIN: f64 = 1.0;

/// Sparse per-row gradient of one parameter matrix. Rows are kept ordered so
/// that accumulation and application are deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrads {
    dim: usize,
    rows: BTreeMap<usize, Vec<f64>>,
}

impl RowGrads {
    pub fn new(dim: usize) -> Self {
        RowGrads {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let dim = self.dim;
        self.rows.entry(i).or_insert_with(|| vec![0.0; dim])
    }

    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.rows.get(&i).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&i, v)| (i, v.as_slice()))
    }

    pub fn touched(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn merge(&mut self, other: RowGrads) {
        for (i, row) in other.rows {
            let dst = self.row_mut(i);
            dst.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
    }

    fn all_finite(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|x| x.is_finite()))
    }
}

/// Gradient with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub entity: RowGrads,
    pub relation: RowGrads,
    pub interaction: RowGrads,
    pub bias: Vec<f64>,
    /// Whether the data term reached `b` (never for TransE).
    pub bias_touched: bool,
}

/// Which parameters receive the `2λθ` regularizer gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerScope {
    /// Every parameter: the exact derivative of `λ‖θ‖²`.
    Full,
    /// Only rows touched by the data term, scaled by the batch fraction.
    Touched { scale: f64 },
}

impl Gradient {
    pub fn zeros(dim: usize) -> Self {
        Gradient {
            entity: RowGrads::new(dim),
            relation: RowGrads::new(dim),
            interaction: RowGrads::new(dim),
            bias: vec![0.0; dim],
            bias_touched: false,
        }
    }

    pub fn merge(&mut self, other: Gradient) {
        self.entity.merge(other.entity);
        self.relation.merge(other.relation);
        self.interaction.merge(other.interaction);
        self.bias
            .iter_mut()
            .zip(other.bias)
            .for_each(|(a, b)| *a += b);
        self.bias_touched |= other.bias_touched;
    }

    pub fn check_finite(&self) -> Result<()> {
        if !self.entity.all_finite() {
            return Err(Error::NonFinite("entity gradient"));
        }
        if !self.relation.all_finite() {
            return Err(Error::NonFinite("relation gradient"));
        }
        if !self.interaction.all_finite() {
            return Err(Error::NonFinite("interaction gradient"));
        }
        if !self.bias.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("bias gradient"));
        }
        Ok(())
    }

    pub fn add_regularizer(&mut self, params: &ModelParams, lambda: f64, scope: RegularizerScope) {
        if lambda == 0.0 {
            return;
        }
        fn add_rows(
            grads: &mut RowGrads,
            rows: impl Iterator<Item = usize>,
            m: &crate::model::Matrix,
            coef: f64,
        ) {
            for i in rows {
                let theta = m.row(i);
                grads
                    .row_mut(i)
                    .iter_mut()
                    .zip(theta)
                    .for_each(|(g, &x)| *g += coef * x as f64);
            }
        }
        match scope {
            RegularizerScope::Full => {
                let coef = 2.0 * lambda;
                add_rows(
                    &mut self.entity,
                    0..params.entity.rows(),
                    &params.entity,
                    coef,
                );
                add_rows(
                    &mut self.relation,
                    0..params.relation.rows(),
                    &params.relation,
                    coef,
                );
                if let Some(c) = &params.interaction {
                    add_rows(&mut self.interaction, 0..c.rows(), c, coef);
                }
                self.bias
                    .iter_mut()
                    .zip(&params.bias)
                    .for_each(|(g, &b)| *g += coef * b as f64);
            }
            RegularizerScope::Touched { scale } => {
                let coef = 2.0 * lambda * scale;
                let rows: Vec<usize> = self.entity.touched().collect();
                add_rows(&mut self.entity, rows.into_iter(), &params.entity, coef);
                let rows: Vec<usize> = self.relation.touched().collect();
                add_rows(&mut self.relation, rows.into_iter(), &params.relation, coef);
                if let Some(c) = &params.interaction {
                    let rows: Vec<usize> = self.interaction.touched().collect();
                    add_rows(&mut self.interaction, rows.into_iter(), c, coef);
                }
                if self.bias_touched {
                    self.bias
                        .iter_mut()
                        .zip(&params.bias)
                        .for_each(|(g, &b)| *g += coef * b as f64);
                }
            }
        }
    }
}

/// Inverted-dropout masks, one per bag: each component is `0` with
/// probability `rate` and `1 / (1 - rate)` otherwise.
pub fn sample_masks<R: Rng + ?Sized>(
    n_bags: usize,
    dim: usize,
    rate: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let keep = 1.0 / (1.0 - rate);
    (0..n_bags)
        .map(|_| {
            (0..dim)
                .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                .collect()
        })
        .collect()
}

/// `Σθ²` over `E`, `R`, `C` and `b`.
pub fn squared_norm(params: &ModelParams) -> f64 {
    let sq = |xs: &[f32]| xs.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
    sq(params.entity.as_slice())
        + sq(params.relation.as_slice())
        + params
            .interaction
            .as_ref()
            .map_or(0.0, |c| sq(c.as_slice()))
        + sq(&params.bias)
}

/// Full objective: data term over all bags plus `λ‖θ‖²`. Passing `masks`
/// evaluates the training-mode (dropout) loss.
pub fn loss(
    params: &ModelParams,
    bags: &[TrainingBag],
    lambda: f64,
    mode: ScoreMode,
    masks: Option<&[Vec<f64>]>,
) -> Result<f64> {
    let data = data_loss(params, bags, mode, masks)?;
    Ok(data + lambda * squared_norm(params))
}

/// Exact gradient of [`loss`].
pub fn grad(
    params: &ModelParams,
    bags: &[TrainingBag],
    lambda: f64,
    mode: ScoreMode,
    masks: Option<&[Vec<f64>]>,
) -> Result<Gradient> {
    let (_, mut g) = data_gradient(params, bags, mode, masks)?;
    g.add_regularizer(params, lambda, RegularizerScope::Full);
    Ok(g)
}

fn check_masks(
    params: &ModelParams,
    bags: &[TrainingBag],
    masks: Option<&[Vec<f64>]>,
) -> Result<()> {
    if let Some(masks) = masks {
        if masks.len() != bags.len() || masks.iter().any(|m| m.len() != params.dim()) {
            return Err(Error::Shape(format!(
                "need {} dropout masks of length {}",
                bags.len(),
                params.dim()
            )));
        }
    }
    Ok(())
}

fn neg_log_likelihood(z: f64, positive: bool) -> f64 {
    let p = if positive { sigmoid(z) } else { sigmoid(-z) };
    -p.clamp(LOG_EPS, 1.0 - LOG_EPS).ln()
}

fn masked_query(
    params: &ModelParams,
    bag: &TrainingBag,
    mode: ScoreMode,
    mask: Option<&Vec<f64>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = params.query(bag.anchor.head, bag.anchor.relation, mode)?;
    let qm = match mask {
        Some(m) if mode.is_probabilistic() => q.iter().zip(m).map(|(a, b)| a * b).collect(),
        _ => q.clone(),
    };
    Ok((q, qm))
}

/// Data term of the loss without the regularizer.
pub fn data_loss(
    params: &ModelParams,
    bags: &[TrainingBag],
    mode: ScoreMode,
    masks: Option<&[Vec<f64>]>,
) -> Result<f64> {
    check_masks(params, bags, masks)?;
    let mut total = 0.0;
    for (i, bag) in bags.iter().enumerate() {
        for x in &bag.examples {
            params.check_entity(x.entity)?;
        }
        let (_, qm) = masked_query(params, bag, mode, masks.map(|m| &m[i]))?;
        if mode.is_probabilistic() {
            for x in &bag.examples {
                let z = dot(&qm, params.entity.row(x.entity as usize));
                total += neg_log_likelihood(z, x.positive);
            }
        } else {
            let pos = transe_distance(&qm, params.entity.row(bag.anchor.tail as usize));
            for e in bag.negatives() {
                let neg = transe_distance(&qm, params.entity.row(e as usize));
                total += (TRANSE_MARGIN + pos - neg).max(0.0);
            }
        }
    }
    Ok(total)
}

fn transe_distance(q: &[f64], t: &[f32]) -> f64 {
    crate::model::l2_distance(q, t)
}

/// Data loss and its gradient, touching only rows that appear in `bags`.
pub fn data_gradient(
    params: &ModelParams,
    bags: &[TrainingBag],
    mode: ScoreMode,
    masks: Option<&[Vec<f64>]>,
) -> Result<(f64, Gradient)> {
    check_masks(params, bags, masks)?;
    let dim = params.dim();
    let mut g = Gradient::zeros(dim);
    let mut total = 0.0;

    for (i, bag) in bags.iter().enumerate() {
        for x in &bag.examples {
            params.check_entity(x.entity)?;
        }
        let mask = masks.map(|m| &m[i]);
        let (q, qm) = masked_query(params, bag, mode, mask)?;
        let h = bag.anchor.head as usize;
        let r = bag.anchor.relation as usize;
        // dL/dq: gradient w.r.t. the pre-dropout query vector.
        let mut dq = vec![0.0; dim];

        if mode.is_probabilistic() {
            for x in &bag.examples {
                let tail = params.entity.row(x.entity as usize);
                let z = dot(&qm, tail);
                total += neg_log_likelihood(z, x.positive);
                let coef = sigmoid(z) - if x.positive { 1.0 } else { 0.0 };
                let gt = g.entity.row_mut(x.entity as usize);
                for k in 0..dim {
                    gt[k] += coef * qm[k];
                    dq[k] += coef * tail[k] as f64;
                }
            }
            if let Some(m) = mask {
                dq.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
            }
            // Through tanh.
            let delta: Vec<f64> = dq.iter().zip(&q).map(|(d, q)| d * (1.0 - q * q)).collect();
            let head = params.entity.row(h);
            let rel = params.relation.row(r);
            g.bias.iter_mut().zip(&delta).for_each(|(b, d)| *b += d);
            g.bias_touched = true;
            match mode {
                ScoreMode::CrossE => {
                    let c = params.interaction()?.row(r);
                    {
                        let gc = g.interaction.row_mut(r);
                        for k in 0..dim {
                            gc[k] += delta[k] * head[k] as f64 * (1.0 + rel[k] as f64);
                        }
                    }
                    {
                        let gh = g.entity.row_mut(h);
                        for k in 0..dim {
                            gh[k] += delta[k] * c[k] as f64 * (1.0 + rel[k] as f64);
                        }
                    }
                    let gr = g.relation.row_mut(r);
                    for k in 0..dim {
                        gr[k] += delta[k] * c[k] as f64 * head[k] as f64;
                    }
                }
                _ => {
                    g.entity
                        .row_mut(h)
                        .iter_mut()
                        .zip(&delta)
                        .for_each(|(a, d)| *a += d);
                    g.relation
                        .row_mut(r)
                        .iter_mut()
                        .zip(&delta)
                        .for_each(|(a, d)| *a += d);
                }
            }
        } else {
            let t = bag.anchor.tail as usize;
            let pos_row = params.entity.row(t);
            let pos = transe_distance(&q, pos_row);
            for e in bag.negatives() {
                let neg_row = params.entity.row(e as usize);
                let neg = transe_distance(&q, neg_row);
                let hinge = TRANSE_MARGIN + pos - neg;
                if hinge <= 0.0 {
                    continue;
                }
                total += hinge;
                // +∂‖q - t‖ - ∂‖q - e‖
                if pos > 0.0 {
                    let gt = g.entity.row_mut(t);
                    for k in 0..dim {
                        let u = (q[k] - pos_row[k] as f64) / pos;
                        dq[k] += u;
                        gt[k] -= u;
                    }
                }
                if neg > 0.0 {
                    let ge = g.entity.row_mut(e as usize);
                    for k in 0..dim {
                        let u = (q[k] - neg_row[k] as f64) / neg;
                        dq[k] -= u;
                        ge[k] += u;
                    }
                }
            }
            if dq.iter().any(|&x| x != 0.0) {
                g.entity
                    .row_mut(h)
                    .iter_mut()
                    .zip(&dq)
                    .for_each(|(a, d)| *a += d);
                g.relation
                    .row_mut(r)
                    .iter_mut()
                    .zip(&dq)
                    .for_each(|(a, d)| *a += d);
            }
        }
    }
    Ok((total, g))
}
