use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crosse::checkpoint::{self, Checkpoint};
use crosse::dataset::Dataset;
use crosse::trainer::{EpochLoss, TrainState, Trainer};
use crosse::{ScoreMode, TrainConfig};
use log::info;

use super::{create_dir, inverse_graph, load_data};
use crate::manifest::{now, RunManifest, Sources};

pub const LOSS_LOG: &str = "loss.tsv";
pub const MANIFEST: &str = "manifest.json";
const LOSS_HEADER: &str = "epoch\tloss";

#[derive(clap::Args)]
pub struct Args {
    /// Prepared data directory from `prep`.
    #[arg(long, required_unless_present = "manifest")]
    pub data: Option<PathBuf>,
    /// Run directory for the manifest and loss log.
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    /// Checkpoint directory; defaults to `<out>/checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Replay a previous run from its manifest. Other flags still override.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Starting recipe before the config file and overrides apply.
    #[arg(long, value_parser = ["default", "wn18", "fb15k", "fb15k-237"])]
    pub preset: Option<String>,
    /// `key = value` file with training hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<ScoreMode>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Save a checkpoint every this many epochs; 0 saves only at the end.
    #[arg(long)]
    pub save_every: Option<usize>,
    /// Continue from the checkpoint if one exists.
    #[arg(long)]
    pub resume: bool,
}

/// Applies every config source in order: manifest or preset, file, `--set`
/// pairs, then the dedicated flags.
pub fn resolve_config(args: &Args, base: Option<&TrainConfig>) -> Result<TrainConfig> {
    let mut cfg = match (base, args.preset.as_deref()) {
        (_, Some("wn18")) => TrainConfig::wn18(),
        (_, Some("fb15k")) => TrainConfig::fb15k(),
        (_, Some("fb15k-237")) => TrainConfig::fb15k_237(),
        (_, Some(_)) => TrainConfig::default(),
        (Some(b), None) => b.clone(),
        (None, None) => TrainConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_kv(&text, path)?;
    }
    for pair in &args.set {
        let Some((key, value)) = pair.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{pair}`");
        };
        cfg.set(key.trim(), value.trim())?;
    }
    macro_rules! flag {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    flag!(seed, mode, d, n, lr, lambda, batch, epochs, dropout);
    cfg.validate()?;
    Ok(cfg)
}

fn checkpoint_of(cfg: &TrainConfig, state: &TrainState, n_relations: usize) -> Checkpoint {
    let mut ckpt = Checkpoint::from_state(cfg, state, n_relations, true);
    if !cfg.mode.needs_interaction() {
        // C is never trained without interactions; keep it out of the model.
        ckpt.params.interaction = None;
        if let Some(adam) = ckpt.adam.as_mut() {
            adam.interaction = None;
        }
    }
    ckpt
}

fn save(dir: &Path, cfg: &TrainConfig, state: &TrainState, data: &Dataset) -> crosse::Result<()> {
    let ckpt = checkpoint_of(cfg, state, data.relations.len());
    checkpoint::save(dir, &ckpt, &data.entities, &data.relations)
}

/// Loss log entries up to and including `epoch`, for a resumed run.
fn truncate_loss_log(path: &Path, epoch: usize) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).unwrap_or_default();
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| {
            l.split('\t')
                .next()
                .and_then(|e| e.parse::<usize>().ok())
                .is_some_and(|e| e <= epoch)
        })
        .map(str::to_owned)
        .collect())
}

/// Resumable state from `dir`, refusing checkpoints trained differently.
fn resume_state(dir: &Path, cfg: &TrainConfig, data: &Dataset) -> Result<Option<TrainState>> {
    if !dir.join("meta").is_file() {
        return Ok(None);
    }
    let ckpt = super::load_checkpoint(dir, data)?;
    let same_recipe = TrainConfig {
        epochs: cfg.epochs,
        ..ckpt.config.clone()
    };
    if &same_recipe != cfg {
        bail!(
            "checkpoint {} was trained with a different configuration:\n{}",
            dir.display(),
            ckpt.config.to_kv()
        );
    }
    if ckpt.adam.is_none() {
        bail!(
            "checkpoint {} has no optimizer state to resume from",
            dir.display()
        );
    }
    let mut state = ckpt.into_state();
    if state.params.interaction.is_none() {
        // Restore the unused C so shapes match a fresh trainer.
        let fresh = crosse::ModelParams::init(
            state.params.n_entities(),
            state.params.n_relations(),
            state.params.dim(),
            cfg.seed,
        )?;
        state.params.interaction = fresh.interaction;
        state.adam.interaction = crosse::trainer::AdamState::new(&state.params).interaction;
    }
    Ok(Some(state))
}

pub fn run(args: Args) -> Result<()> {
    let replay = args
        .manifest
        .as_deref()
        .map(RunManifest::read)
        .transpose()?;
    let cfg = resolve_config(&args, replay.as_ref().map(|m| &m.config))?;
    let data_dir = args
        .data
        .clone()
        .or_else(|| replay.as_ref().map(|m| m.data.clone()))
        .expect("clap requires --data without --manifest");
    let out = match (&args.out, &replay) {
        (Some(o), _) => o.clone(),
        (None, Some(m)) => m
            .checkpoint
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
        (None, None) => unreachable!("clap requires --out without --manifest"),
    };
    let ckpt_dir = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| out.join("checkpoint"));
    let threads = args
        .threads
        .or(replay.as_ref().map(|m| m.threads))
        .unwrap_or(1)
        .max(1);
    let save_every = args
        .save_every
        .or(replay.as_ref().map(|m| m.save_every))
        .unwrap_or(0);

    let data = load_data(&data_dir)?;
    let graph = inverse_graph(&data)?;
    create_dir(&out)?;

    let trainer = Trainer::new(&graph, cfg.clone())?.with_threads(threads)?;
    let resumed = if args.resume {
        resume_state(&ckpt_dir, &cfg, &data)?
    } else {
        None
    };
    let loss_path = out.join(LOSS_LOG);
    let mut loss_lines = match &resumed {
        Some(state) => truncate_loss_log(&loss_path, state.epoch)?,
        None => Vec::new(),
    };
    let mut state = match resumed {
        Some(state) => {
            info!("resuming from epoch {}", state.epoch);
            state
        }
        None => trainer.init_state()?,
    };

    let mut manifest = RunManifest {
        version: crate::manifest::VERSION.to_owned(),
        data: data_dir.clone(),
        sources: Sources::read(&data_dir),
        config: cfg.clone(),
        seed: cfg.seed,
        threads,
        checkpoint: ckpt_dir.clone(),
        save_every,
        resumed_from_epoch: (state.epoch > 0).then_some(state.epoch),
        started: now(),
        finished: None,
    };
    manifest.write(&out.join(MANIFEST))?;

    let mut log = fs::File::create(&loss_path)
        .with_context(|| format!("creating {}", loss_path.display()))?;
    writeln!(log, "{LOSS_HEADER}")?;
    for line in &loss_lines {
        writeln!(log, "{line}")?;
    }
    log.flush()?;

    info!(
        "training {} on {} train triples: {} epochs, d = {}, {} thread(s)",
        cfg.mode,
        data.train.len(),
        cfg.epochs,
        cfg.d,
        threads
    );
    trainer.run(&mut state, |state, EpochLoss { epoch, loss }| {
        let line = format!("{epoch}\t{loss}");
        writeln!(log, "{line}")
            .and_then(|_| log.flush())
            .map_err(|source| crosse::Error::Io {
                path: loss_path.clone(),
                source,
            })?;
        loss_lines.push(line);
        info!("epoch {epoch} loss {loss:.6}");
        if save_every > 0 && epoch % save_every == 0 && epoch < cfg.epochs {
            save(&ckpt_dir, &cfg, state, &data)?;
        }
        Ok(())
    })?;
    save(&ckpt_dir, &cfg, &state, &data)
        .with_context(|| format!("saving checkpoint {}", ckpt_dir.display()))?;

    manifest.finished = Some(now());
    manifest.write(&out.join(MANIFEST))?;
    info!("checkpoint written to {}", ckpt_dir.display());
    Ok(())
}
