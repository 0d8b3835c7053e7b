//! A generated family knowledge graph for end-to-end checks.
//!
//! Every family has a father, a mother and a few children; the fathers of a
//! clan are themselves the children of one grandparent couple. The composed
//! relation `isFatherOf` always equals `hasWife` followed by `hasChild`; a
//! fraction of its triples is held out as the test split. Career and location
//! relations add unrelated structure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::kg::{Dictionary, Triple};

pub const HAS_WIFE: &str = "hasWife";
pub const HAS_CHILD: &str = "hasChild";
pub const IS_FATHER_OF: &str = "isFatherOf";
pub const WORKS_AT: &str = "worksAt";
pub const COLLEAGUE_OF: &str = "colleagueOf";
pub const LIVES_IN: &str = "livesIn";
pub const ATTENDS: &str = "attends";

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConfig {
    pub clans: usize,
    pub families_per_clan: usize,
    pub min_children: usize,
    pub max_children: usize,
    pub companies: usize,
    pub cities: usize,
    pub schools: usize,
    /// Fraction of `isFatherOf` triples moved to the test split.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            clans: 16,
            families_per_clan: 3,
            min_children: 2,
            max_children: 4,
            companies: 12,
            cities: 8,
            schools: 6,
            holdout: 0.1,
            seed: 0,
        }
    }
}

/// Builds the corpus. Relation ids follow the order of the constants above,
/// so `isFatherOf` is relation 2.
///
/// Families are grouped into clans whose fathers are brothers, so cousins
/// and uncles sit close to every child in the graph.
pub fn family_graph(cfg: &FamilyConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entities = Dictionary::new();
    let mut relations = Dictionary::new();
    let rel: Vec<u32> = [
        HAS_WIFE,
        HAS_CHILD,
        IS_FATHER_OF,
        WORKS_AT,
        COLLEAGUE_OF,
        LIVES_IN,
        ATTENDS,
    ]
    .iter()
    .map(|r| relations.encode(r))
    .collect();
    let [has_wife, has_child, father_of, works_at, colleague_of, lives_in, attends] =
        rel[..].try_into().expect("seven relations");

    let companies: Vec<u32> = (0..cfg.companies)
        .map(|i| entities.encode(&format!("company_{i}")))
        .collect();
    let cities: Vec<u32> = (0..cfg.cities)
        .map(|i| entities.encode(&format!("city_{i}")))
        .collect();
    let schools: Vec<u32> = (0..cfg.schools)
        .map(|i| entities.encode(&format!("school_{i}")))
        .collect();

    let mut other = Vec::new();
    let mut schooling = Vec::new();
    let mut composed = Vec::new();
    let mut workers: Vec<Vec<u32>> = vec![Vec::new(); cfg.companies];
    let mut couple = |father: u32, mother: u32, children: &[u32], rng: &mut ChaCha8Rng| {
        other.push(Triple::new(father, has_wife, mother));
        let city = cities[rng.gen_range(0..cities.len())];
        for adult in [father, mother] {
            other.push(Triple::new(adult, lives_in, city));
            let c = rng.gen_range(0..companies.len());
            other.push(Triple::new(adult, works_at, companies[c]));
            workers[c].push(adult);
        }
        for &child in children {
            other.push(Triple::new(mother, has_child, child));
            composed.push(Triple::new(father, father_of, child));
        }
    };

    for clan in 0..cfg.clans {
        let grandfather = entities.encode(&format!("grandfather_{clan}"));
        let grandmother = entities.encode(&format!("grandmother_{clan}"));
        let sons: Vec<u32> = (0..cfg.families_per_clan)
            .map(|f| entities.encode(&format!("father_{clan}_{f}")))
            .collect();
        couple(grandfather, grandmother, &sons, &mut rng);
        for (f, &father) in sons.iter().enumerate() {
            let mother = entities.encode(&format!("mother_{clan}_{f}"));
            let kids = rng.gen_range(cfg.min_children..=cfg.max_children);
            let children: Vec<u32> = (0..kids)
                .map(|k| entities.encode(&format!("child_{clan}_{f}_{k}")))
                .collect();
            for &child in &children {
                schooling.push(Triple::new(
                    child,
                    attends,
                    schools[rng.gen_range(0..schools.len())],
                ));
            }
            couple(father, mother, &children, &mut rng);
        }
    }
    // Colleague links chain through each company's staff.
    for staff in &workers {
        for pair in staff.windows(2) {
            other.push(Triple::new(pair[0], colleague_of, pair[1]));
        }
    }

    composed.shuffle(&mut rng);
    let n_test = ((composed.len() as f64) * cfg.holdout).round() as usize;
    let mut test = composed.split_off(composed.len() - n_test);
    let mut train = other;
    train.extend(schooling);
    train.extend(composed);
    train.sort_unstable();
    test.sort_unstable();

    Dataset {
        entities,
        relations,
        train,
        valid: Vec::new(),
        test,
    }
}
