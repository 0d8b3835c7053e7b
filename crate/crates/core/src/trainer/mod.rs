//! Mini-batch training: bags of positives and sampled negatives, dropout on
//! the combined representation, sparse L2 regularization and Adam.

pub mod adam;
pub mod bag;
mod config;
pub mod loss;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adam::AdamState;
pub use bag::{build_bag, Example, TrainingBag};
pub use config::TrainConfig;
pub use loss::{data_gradient, grad, loss, Gradient, RegularizerScope};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Split};
use crate::model::ModelParams;

/// Stream reserved for the fixed negatives of the per-epoch loss report.
const EVAL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    /// Number of completed epochs.
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

pub struct Trainer<'g> {
    graph: &'g KnowledgeGraph,
    cfg: TrainConfig,
    threads: usize,
    pool: Option<rayon::ThreadPool>,
}

impl<'g> Trainer<'g> {
    /// `graph` must already carry inverse relations: head prediction is
    /// trained as tail prediction under `r⁻¹`.
    pub fn new(graph: &'g KnowledgeGraph, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if !graph.has_inverse() {
            return Err(Error::MissingInverse("training graph".into()));
        }
        Ok(Trainer {
            graph,
            cfg,
            threads: 1,
            pool: None,
        })
    }

    /// Splits each batch's gradient computation across `threads` workers.
    /// Bags and dropout masks are still drawn on one stream, so results do
    /// not depend on the thread count beyond summation order.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.threads = threads.max(1);
        self.pool = if self.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(self.threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn init_state(&self) -> Result<TrainState> {
        let params = ModelParams::init(
            self.graph.n_entities(),
            self.graph.n_relations_effective(),
            self.cfg.d,
            self.cfg.seed,
        )?;
        let adam = AdamState::new(&params);
        Ok(TrainState {
            params,
            adam,
            epoch: 0,
        })
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        rng
    }

    /// Runs the remaining epochs of `state`, calling `on_epoch` after each.
    pub fn run<F>(&self, state: &mut TrainState, mut on_epoch: F) -> Result<Vec<EpochLoss>>
    where
        F: FnMut(&TrainState, EpochLoss) -> Result<()>,
    {
        let mut log = Vec::new();
        while state.epoch < self.cfg.epochs {
            self.run_epoch(state)?;
            let entry = EpochLoss {
                epoch: state.epoch,
                loss: self.eval_loss(&state.params)?,
            };
            debug!("epoch {} loss {:.6}", entry.epoch, entry.loss);
            on_epoch(state, entry)?;
            log.push(entry);
        }
        Ok(log)
    }

    /// One shuffled pass over all train triples as bag anchors.
    pub fn run_epoch(&self, state: &mut TrainState) -> Result<()> {
        let anchors = self.graph.triples(Split::Train);
        if anchors.is_empty() {
            return Err(Error::Empty("training split"));
        }
        let mut rng = self.epoch_rng(state.epoch);
        let mut order: Vec<usize> = (0..anchors.len()).collect();
        order.shuffle(&mut rng);

        for chunk in order.chunks(self.cfg.batch) {
            let bags: Vec<TrainingBag> = chunk
                .iter()
                .map(|&i| build_bag(self.graph, anchors[i], self.cfg.n, &mut rng))
                .collect();
            let masks = (self.cfg.mode.is_probabilistic() && self.cfg.dropout > 0.0)
                .then(|| loss::sample_masks(bags.len(), self.cfg.d, self.cfg.dropout, &mut rng));
            let mut g = self.batch_gradient(&state.params, &bags, masks.as_deref())?;
            g.add_regularizer(
                &state.params,
                self.cfg.lambda,
                RegularizerScope::Touched {
                    scale: chunk.len() as f64 / anchors.len() as f64,
                },
            );
            state.adam.step(&mut state.params, &g, self.cfg.lr)?;
        }
        if !state.params.is_finite() {
            return Err(Error::NonFinite("parameters"));
        }
        state.epoch += 1;
        Ok(())
    }

    fn batch_gradient(
        &self,
        params: &ModelParams,
        bags: &[TrainingBag],
        masks: Option<&[Vec<f64>]>,
    ) -> Result<Gradient> {
        let Some(pool) = &self.pool else {
            return data_gradient(params, bags, self.cfg.mode, masks).map(|(_, g)| g);
        };
        let size = bags.len().div_ceil(self.threads).max(1);
        let parts: Vec<Result<Gradient>> = pool.install(|| {
            bags.par_chunks(size)
                .enumerate()
                .map(|(i, part)| {
                    let m = masks.map(|m| &m[i * size..i * size + part.len()]);
                    data_gradient(params, part, self.cfg.mode, m).map(|(_, g)| g)
                })
                .collect()
        });
        let mut total = Gradient::zeros(params.dim());
        for part in parts {
            total.merge(part?);
        }
        Ok(total)
    }

    /// Dropout-free loss over every train anchor, with negatives drawn from a
    /// fixed stream so that successive epochs are comparable.
    pub fn eval_loss(&self, params: &ModelParams) -> Result<f64> {
        let anchors = self.graph.triples(Split::Train);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(EVAL_STREAM);
        let mut total = 0.0;
        for chunk in anchors.chunks(self.cfg.batch) {
            let bags: Vec<TrainingBag> = chunk
                .iter()
                .map(|&t| build_bag(self.graph, t, self.cfg.n, &mut rng))
                .collect();
            total += match &self.pool {
                None => loss::data_loss(params, &bags, self.cfg.mode, None)?,
                Some(pool) => pool
                    .install(|| {
                        bags.par_chunks(bags.len().div_ceil(self.threads).max(1))
                            .map(|part| loss::data_loss(params, part, self.cfg.mode, None))
                            .collect::<Result<Vec<f64>>>()
                    })?
                    .into_iter()
                    .sum(),
            };
        }
        Ok(total + self.cfg.lambda * loss::squared_norm(params))
    }
}

/// Initializes and trains for `cfg.epochs` epochs.
pub fn train(graph: &KnowledgeGraph, cfg: &TrainConfig) -> Result<(ModelParams, Vec<EpochLoss>)> {
    let trainer = Trainer::new(graph, cfg.clone())?;
    let mut state = trainer.init_state()?;
    let log = trainer.run(&mut state, |_, _| Ok(()))?;
    Ok((state.params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;
    use crate::model::ScoreMode;
    use rand::Rng;

    fn toy_graph(seed: u64, n_e: u32, n_r: u32, n: usize) -> KnowledgeGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples = (0..n)
            .map(|_| {
                Triple::new(
                    rng.gen_range(0..n_e),
                    rng.gen_range(0..n_r),
                    rng.gen_range(0..n_e),
                )
            })
            .collect();
        KnowledgeGraph::build(n_e as usize, n_r as usize, triples, vec![], vec![])
            .unwrap()
            .0
            .add_inverse_relations()
            .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            d: 8,
            n: 5,
            lr: 0.01,
            lambda: 1e-4,
            batch: 16,
            epochs: 3,
            dropout: 0.5,
            seed: 9,
            mode: ScoreMode::CrossE,
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let g = toy_graph(0, 20, 3, 40);
        let cfg = TrainConfig {
            epochs: 0,
            ..small_cfg()
        };
        let (params, log) = train(&g, &cfg).unwrap();
        assert!(log.is_empty());
        assert_eq!(params, ModelParams::init(20, 6, 8, cfg.seed).unwrap());
    }

    #[test]
    fn forward_only_graph_is_rejected() {
        let (g, _) =
            KnowledgeGraph::build(2, 1, vec![Triple::new(0, 0, 1)], vec![], vec![]).unwrap();
        assert!(matches!(
            Trainer::new(&g, small_cfg()),
            Err(Error::MissingInverse(_))
        ));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let g = toy_graph(1, 20, 3, 40);
        let (a, la) = train(&g, &small_cfg()).unwrap();
        let (b, lb) = train(&g, &small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let g = toy_graph(2, 20, 3, 40);
        let cfg = TrainConfig {
            epochs: 4,
            ..small_cfg()
        };
        let trainer = Trainer::new(&g, cfg).unwrap();
        let mut full = trainer.init_state().unwrap();
        let full_log = trainer.run(&mut full, |_, _| Ok(())).unwrap();

        let mut partial = trainer.init_state().unwrap();
        trainer.run_epoch(&mut partial).unwrap();
        trainer.run_epoch(&mut partial).unwrap();
        let resumed = partial.clone();
        let mut resumed_state = resumed;
        let tail_log = trainer.run(&mut resumed_state, |_, _| Ok(())).unwrap();
        assert_eq!(resumed_state, full);
        assert_eq!(&full_log[2..], &tail_log[..]);
    }

    #[test]
    fn threaded_run_is_deterministic() {
        let g = toy_graph(3, 30, 3, 80);
        let t1 = Trainer::new(&g, small_cfg())
            .unwrap()
            .with_threads(3)
            .unwrap();
        let t2 = Trainer::new(&g, small_cfg())
            .unwrap()
            .with_threads(3)
            .unwrap();
        let mut a = t1.init_state().unwrap();
        let mut b = t2.init_state().unwrap();
        let la = t1.run(&mut a, |_, _| Ok(())).unwrap();
        let lb = t2.run(&mut b, |_, _| Ok(())).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn loss_decreases_on_small_graph() {
        let g = toy_graph(4, 25, 2, 50);
        for mode in ScoreMode::ALL {
            let cfg = TrainConfig {
                epochs: 200,
                mode,
                d: 16,
                n: 10,
                ..small_cfg()
            };
            let (params, log) = train(&g, &cfg).unwrap();
            assert!(params.is_finite());
            assert!(
                log.last().unwrap().loss < log[0].loss,
                "{mode}: {:?}",
                (log[0], log.last())
            );
        }
    }
}
