//! Checkpoint directories: raw little-endian `f32` tensors, a `key = value`
//! metadata file, both dictionaries and, optionally, the Adam moments.
//!
//! ```text
//! meta            training config, shapes, epoch, optimizer step
//! E.f32 R.f32     entity / relation rows
//! C.f32           interaction rows, absent for models without them
//! b.f32           bias
//! entities.dict relations.dict
//! adam/*.f32      first and second moments, when saved for resuming
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{ENTITY_DICT, RELATION_DICT};
use crate::error::{Error, Result};
use crate::kg::Dictionary;
use crate::model::{Matrix, ModelParams};
use crate::trainer::adam::{AdamState, Moments};
use crate::trainer::{TrainConfig, TrainState};

const META: &str = "meta";
const ADAM_DIR: &str = "adam";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ModelParams,
    /// Completed epochs.
    pub epoch: usize,
    /// Forward relation count; the model holds twice as many rows.
    pub n_relations: usize,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn from_state(
        config: &TrainConfig,
        state: &TrainState,
        n_relations: usize,
        with_optimizer: bool,
    ) -> Self {
        Checkpoint {
            config: config.clone(),
            params: state.params.clone(),
            epoch: state.epoch,
            n_relations,
            adam: with_optimizer.then(|| state.adam.clone()),
        }
    }

    /// Training state to resume from; fresh moments if none were saved.
    pub fn into_state(self) -> TrainState {
        let adam = self.adam.unwrap_or_else(|| AdamState::new(&self.params));
        TrainState {
            params: self.params,
            adam,
            epoch: self.epoch,
        }
    }

    /// Fails with a readable size report when the dictionaries do not fit the
    /// stored tensors.
    pub fn check_dictionaries(&self, entities: &Dictionary, relations: &Dictionary) -> Result<()> {
        let mut problems = Vec::new();
        if entities.len() != self.params.n_entities() {
            problems.push(format!(
                "entities: dictionary {} vs checkpoint {}",
                entities.len(),
                self.params.n_entities()
            ));
        }
        if relations.len() != self.n_relations {
            problems.push(format!(
                "relations: dictionary {} vs checkpoint {}",
                relations.len(),
                self.n_relations
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Shape(problems.join("; ")))
        }
    }
}

fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * expected {
        return Err(Error::Shape(format!(
            "{}: expected {expected} floats, found {} bytes",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect())
}

fn tensors(params: &ModelParams) -> Vec<(&'static str, &[f32])> {
    let mut out = vec![
        ("E", params.entity.as_slice()),
        ("R", params.relation.as_slice()),
    ];
    if let Some(c) = &params.interaction {
        out.push(("C", c.as_slice()));
    }
    out.push(("b", params.bias.as_slice()));
    out
}

fn moments(adam: &AdamState) -> Vec<(&'static str, &Moments)> {
    let mut out = vec![("E", &adam.entity), ("R", &adam.relation)];
    if let Some(c) = &adam.interaction {
        out.push(("C", c));
    }
    out.push(("b", &adam.bias));
    out
}

fn sibling(dir: &Path, suffix: &str) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    dir.with_file_name(format!(".{name}.{suffix}.{}", std::process::id()))
}

/// Writes the checkpoint into a scratch directory next to `dir`, then swaps
/// it into place so an interrupted save never leaves a torn checkpoint.
pub fn save(
    dir: &Path,
    ckpt: &Checkpoint,
    entities: &Dictionary,
    relations: &Dictionary,
) -> Result<()> {
    ckpt.params.validate()?;
    ckpt.check_dictionaries(entities, relations)?;
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = sibling(dir, "tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let mut meta = ckpt.config.to_kv();
    let _ = writeln!(meta, "n_entities = {}", ckpt.params.n_entities());
    let _ = writeln!(meta, "n_relations = {}", ckpt.n_relations);
    let _ = writeln!(meta, "relation_rows = {}", ckpt.params.n_relations());
    let _ = writeln!(meta, "dim = {}", ckpt.params.dim());
    let _ = writeln!(meta, "interaction = {}", ckpt.params.interaction.is_some());
    let _ = writeln!(meta, "epoch = {}", ckpt.epoch);
    if let Some(adam) = &ckpt.adam {
        let _ = writeln!(meta, "adam_step = {}", adam.step);
    }
    let meta_path = tmp.join(META);
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

    for (name, values) in tensors(&ckpt.params) {
        write_f32(&tmp.join(format!("{name}.f32")), values)?;
    }
    if let Some(adam) = &ckpt.adam {
        let adam_dir = tmp.join(ADAM_DIR);
        fs::create_dir_all(&adam_dir).map_err(|e| Error::io(&adam_dir, e))?;
        for (name, m) in moments(adam) {
            write_f32(&adam_dir.join(format!("{name}.m.f32")), &m.m)?;
            write_f32(&adam_dir.join(format!("{name}.v.f32")), &m.v)?;
        }
    }
    entities.write_dump(&tmp.join(ENTITY_DICT))?;
    relations.write_dump(&tmp.join(RELATION_DICT))?;

    let old = sibling(dir, "old");
    if dir.exists() {
        fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
    if old.exists() {
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    Ok(())
}

struct Meta {
    config: TrainConfig,
    n_entities: usize,
    n_relations: usize,
    relation_rows: usize,
    dim: usize,
    interaction: bool,
    epoch: usize,
    adam_step: Option<u64>,
}

fn read_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config_lines = String::new();
    let mut fields = std::collections::HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if TrainConfig::KEYS.contains(&key) {
            let _ = writeln!(config_lines, "{key} = {value}");
        } else {
            fields.insert(key.to_owned(), (i + 1, value.to_owned()));
        }
    }
    let mut config = TrainConfig::default();
    config.apply_kv(&config_lines, path)?;

    let get = |key: &str| -> Result<&(usize, String)> {
        fields
            .get(key)
            .ok_or_else(|| Error::parse(path, 0, format!("missing `{key}`")))
    };
    let num = |key: &str| -> Result<u64> {
        let (line, value) = get(key)?;
        value
            .parse()
            .map_err(|_| Error::parse(path, *line, format!("bad value for `{key}`")))
    };
    let interaction = match get("interaction")?.1.as_str() {
        "true" => true,
        "false" => false,
        _ => {
            return Err(Error::parse(
                path,
                get("interaction")?.0,
                "bad value for `interaction`",
            ))
        }
    };
    Ok(Meta {
        config,
        n_entities: num("n_entities")? as usize,
        n_relations: num("n_relations")? as usize,
        relation_rows: num("relation_rows")? as usize,
        dim: num("dim")? as usize,
        interaction,
        epoch: num("epoch")? as usize,
        adam_step: fields
            .contains_key("adam_step")
            .then(|| num("adam_step"))
            .transpose()?,
    })
}

pub fn load(dir: &Path) -> Result<(Checkpoint, Dictionary, Dictionary)> {
    let meta = read_meta(&dir.join(META))?;
    let (n_e, n_rows, d) = (meta.n_entities, meta.relation_rows, meta.dim);
    let matrix = |name: &str, rows: usize| -> Result<Matrix> {
        Matrix::from_vec(
            rows,
            d,
            read_f32(&dir.join(format!("{name}.f32")), rows * d)?,
        )
    };
    let interaction_path = dir.join("C.f32");
    if meta.interaction && !interaction_path.exists() {
        return Err(Error::MissingTensor("C"));
    }
    let params = ModelParams {
        entity: matrix("E", n_e)?,
        relation: matrix("R", n_rows)?,
        interaction: meta.interaction.then(|| matrix("C", n_rows)).transpose()?,
        bias: read_f32(&dir.join("b.f32"), d)?,
    };
    params.validate()?;

    let adam = match meta.adam_step {
        None => None,
        Some(step) => {
            let adam_dir = dir.join(ADAM_DIR);
            let load = |name: &str, len: usize| -> Result<Moments> {
                Ok(Moments {
                    m: read_f32(&adam_dir.join(format!("{name}.m.f32")), len)?,
                    v: read_f32(&adam_dir.join(format!("{name}.v.f32")), len)?,
                })
            };
            Some(AdamState {
                step,
                entity: load("E", n_e * d)?,
                relation: load("R", n_rows * d)?,
                interaction: meta
                    .interaction
                    .then(|| load("C", n_rows * d))
                    .transpose()?,
                bias: load("b", d)?,
            })
        }
    };

    let entities = Dictionary::read_dump(&dir.join(ENTITY_DICT))?;
    let relations = Dictionary::read_dump(&dir.join(RELATION_DICT))?;
    let ckpt = Checkpoint {
        config: meta.config,
        params,
        epoch: meta.epoch,
        n_relations: meta.n_relations,
        adam,
    };
    ckpt.check_dictionaries(&entities, &relations)?;
    Ok((ckpt, entities, relations))
}
