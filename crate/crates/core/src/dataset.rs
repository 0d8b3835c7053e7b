//! A labelled benchmark split triple plus its compact on-disk cache.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{load_triples, BuildReport, Dictionary, KnowledgeGraph, Split, Triple};

pub const ENTITY_DICT: &str = "entities.dict";
pub const RELATION_DICT: &str = "relations.dict";
pub const TRIPLE_CACHE: &str = "triples.bin";

const CACHE_MAGIC: &[u8; 8] = b"KGTRIP01";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub entities: Dictionary,
    pub relations: Dictionary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "|E|\t|R|\ttrain\tvalid\ttest")?;
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.entities, self.relations, self.train, self.valid, self.test
        )
    }
}

impl Dataset {
    /// Loads the three TSV splits. Ids are assigned first-seen across train,
    /// then valid, then test.
    pub fn load_tsv(train: &Path, valid: &Path, test: &Path) -> Result<Self> {
        let mut entities = Dictionary::new();
        let mut relations = Dictionary::new();
        let train = load_triples(train, &mut entities, &mut relations)?;
        let valid = load_triples(valid, &mut entities, &mut relations)?;
        let test = load_triples(test, &mut entities, &mut relations)?;
        Ok(Dataset {
            entities,
            relations,
            train,
            valid,
            test,
        })
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            entities: self.entities.len(),
            relations: self.relations.len(),
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
        }
    }

    pub fn graph(&self) -> Result<(KnowledgeGraph, BuildReport)> {
        KnowledgeGraph::build(
            self.entities.len(),
            self.relations.len(),
            self.train.clone(),
            self.valid.clone(),
            self.test.clone(),
        )
    }

    /// Writes both dictionary dumps and the binary triple cache into `dir`.
    pub fn write_cache(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.entities.write_dump(&dir.join(ENTITY_DICT))?;
        self.relations.write_dump(&dir.join(RELATION_DICT))?;

        let mut bytes = Vec::with_capacity(
            8 + 24 + 12 * (self.train.len() + self.valid.len() + self.test.len()),
        );
        bytes.extend_from_slice(CACHE_MAGIC);
        for split in Split::ALL {
            bytes.extend_from_slice(&(self.split(split).len() as u64).to_le_bytes());
        }
        for split in Split::ALL {
            for t in self.split(split) {
                for id in [t.head, t.relation, t.tail] {
                    bytes.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
        let path = dir.join(TRIPLE_CACHE);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn read_cache(dir: &Path) -> Result<Self> {
        let entities = Dictionary::read_dump(&dir.join(ENTITY_DICT))?;
        let relations = Dictionary::read_dump(&dir.join(RELATION_DICT))?;
        let path = dir.join(TRIPLE_CACHE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |msg: &str| Error::parse(&path, 0, msg.to_owned());
        if bytes.len() < 32 || &bytes[..8] != CACHE_MAGIC {
            return Err(bad("not a triple cache"));
        }
        let mut counts = [0usize; 3];
        for (i, count) in counts.iter_mut().enumerate() {
            let raw: [u8; 8] = bytes[8 + 8 * i..16 + 8 * i]
                .try_into()
                .expect("8-byte slice");
            *count = u64::from_le_bytes(raw) as usize;
        }
        let body = &bytes[32..];
        if body.len() != 12 * counts.iter().sum::<usize>() {
            return Err(bad("triple cache length does not match its header"));
        }
        let mut ids = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")));
        let mut take = |n: usize| -> Vec<Triple> {
            (0..n)
                .map(|_| {
                    let h = ids.next().expect("length checked");
                    let r = ids.next().expect("length checked");
                    let t = ids.next().expect("length checked");
                    Triple::new(h, r, t)
                })
                .collect()
        };
        let train = take(counts[0]);
        let valid = take(counts[1]);
        let test = take(counts[2]);
        let dataset = Dataset {
            entities,
            relations,
            train,
            valid,
            test,
        };
        for t in dataset
            .train
            .iter()
            .chain(&dataset.valid)
            .chain(&dataset.test)
        {
            if t.head as usize >= dataset.entities.len()
                || t.tail as usize >= dataset.entities.len()
            {
                return Err(bad("entity id beyond dictionary"));
            }
            if t.relation as usize >= dataset.relations.len() {
                return Err(bad("relation id beyond dictionary"));
            }
        }
        Ok(dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train"), "a\tr\tb\nb\ts\tc\n").unwrap();
        fs::write(dir.path().join("valid"), "c\tr\ta\n").unwrap();
        fs::write(dir.path().join("test"), "").unwrap();
        let ds = Dataset::load_tsv(
            &dir.path().join("train"),
            &dir.path().join("valid"),
            &dir.path().join("test"),
        )
        .unwrap();
        assert_eq!(
            ds.stats(),
            DatasetStats {
                entities: 3,
                relations: 2,
                train: 2,
                valid: 1,
                test: 0
            }
        );
        let out1 = dir.path().join("c1");
        let out2 = dir.path().join("c2");
        ds.write_cache(&out1).unwrap();
        ds.write_cache(&out2).unwrap();
        assert_eq!(
            fs::read(out1.join(TRIPLE_CACHE)).unwrap(),
            fs::read(out2.join(TRIPLE_CACHE)).unwrap()
        );
        assert_eq!(Dataset::read_cache(&out1).unwrap(), ds);
    }

    #[test]
    fn truncated_cache_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            entities: {
                let mut d = Dictionary::new();
                d.encode("a");
                d
            },
            relations: {
                let mut d = Dictionary::new();
                d.encode("r");
                d
            },
            train: vec![Triple::new(0, 0, 0)],
            valid: vec![],
            test: vec![],
        };
        ds.write_cache(dir.path()).unwrap();
        let path = dir.path().join(TRIPLE_CACHE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(Dataset::read_cache(dir.path()).is_err());
    }
}
