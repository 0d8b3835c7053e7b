use std::cmp::Ordering;

use log::warn;

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::model::{ModelParams, ScoreMode};

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn widen(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&x| x as f64).collect()
}

fn nearest(mut scored: Vec<(f64, u32)>, k: usize) -> Vec<u32> {
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    scored.into_iter().take(k).map(|(_, id)| id).collect()
}

/// The `k` forward relations closest to `r` in the context of head `h`.
///
/// CrossE compares relation interaction embeddings `c_x ∘ h ∘ x` built on the
/// same head; the other modes compare general relation rows. `r` itself is
/// always first, the rest follow by ascending distance with ties by id.
pub fn similar_relations(
    params: &ModelParams,
    h: EntityId,
    r: RelationId,
    k: usize,
    n_relations: usize,
    mode: ScoreMode,
) -> Result<Vec<RelationId>> {
    if k == 0 {
        return Err(Error::Config("k_r must be at least 1".into()));
    }
    if r as usize >= n_relations {
        return Err(Error::IdOutOfRange {
            kind: "forward relation",
            id: r as u64,
            size: n_relations,
        });
    }
    params.check_entity(h)?;
    params.check_relation(r)?;
    if n_relations > params.n_relations() {
        return Err(Error::Shape(format!(
            "{n_relations} relations requested, model has {}",
            params.n_relations()
        )));
    }
    let k = if k > n_relations {
        warn!("k_r = {k} exceeds the {n_relations} relations; truncating");
        n_relations
    } else {
        k
    };
    let embed = |x: RelationId| -> Result<Vec<f64>> {
        match mode {
            ScoreMode::CrossE => params.relation_interaction(h, x),
            _ => Ok(widen(params.relation.row(x as usize))),
        }
    };
    let anchor = embed(r)?;
    let mut scored = Vec::with_capacity(n_relations - 1);
    for x in (0..n_relations as RelationId).filter(|&x| x != r) {
        scored.push((distance(&anchor, &embed(x)?), x));
    }
    let mut out = vec![r];
    out.extend(nearest(scored, k - 1));
    Ok(out)
}

/// The `k` entities other than `h` closest to it in the context of `r`.
///
/// CrossE compares entity interaction embeddings `c_r ∘ e`; the other modes
/// compare general entity rows.
pub fn similar_entities(
    params: &ModelParams,
    h: EntityId,
    r: RelationId,
    k: usize,
    mode: ScoreMode,
) -> Result<Vec<EntityId>> {
    if k == 0 {
        return Err(Error::Config("k_e must be at least 1".into()));
    }
    params.check_entity(h)?;
    params.check_relation(r)?;
    let others = params.n_entities() - 1;
    let k = if k > others {
        warn!("k_e = {k} exceeds the {others} candidate entities; truncating");
        others
    } else {
        k
    };
    let embed = |e: EntityId| -> Result<Vec<f64>> {
        match mode {
            ScoreMode::CrossE => params.entity_interaction(e, r),
            _ => Ok(widen(params.entity.row(e as usize))),
        }
    };
    let anchor = embed(h)?;
    let mut scored = Vec::with_capacity(others);
    for e in (0..params.n_entities() as EntityId).filter(|&e| e != h) {
        scored.push((distance(&anchor, &embed(e)?), e));
    }
    Ok(nearest(scored, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(anchor: &[f64], rows: &[(u32, Vec<f64>)]) -> Vec<u32> {
        let mut v: Vec<(f64, u32)> = rows
            .iter()
            .map(|(id, x)| (distance(anchor, x), *id))
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.into_iter().map(|(_, id)| id).collect()
    }

    #[test]
    fn k_one_is_the_relation_itself() {
        let p = ModelParams::init(5, 6, 4, 0).unwrap();
        for mode in ScoreMode::ALL {
            assert_eq!(similar_relations(&p, 2, 1, 1, 3, mode).unwrap(), vec![1]);
        }
    }

    #[test]
    fn duplicate_relation_rows_are_mutually_closest() {
        let mut p = ModelParams::init(5, 8, 4, 1).unwrap();
        let row = p.relation.row(3).to_vec();
        p.relation.row_mut(0).copy_from_slice(&row);
        let c = p.interaction.as_mut().unwrap();
        let row = c.row(3).to_vec();
        c.row_mut(0).copy_from_slice(&row);
        for mode in [ScoreMode::CrossE, ScoreMode::TransE] {
            assert_eq!(similar_relations(&p, 1, 3, 2, 4, mode).unwrap(), vec![3, 0]);
            assert_eq!(similar_relations(&p, 1, 0, 2, 4, mode).unwrap(), vec![0, 3]);
        }
    }

    #[test]
    fn relations_match_exhaustive_distance_sort() {
        for seed in 0..20 {
            let p = ModelParams::init(4, 12, 4, seed).unwrap();
            let (h, r) = (seed as u32 % 4, seed as u32 % 6);
            let anchor = p.relation_interaction(h, r).unwrap();
            let rows: Vec<_> = (0..6u32)
                .filter(|&x| x != r)
                .map(|x| (x, p.relation_interaction(h, x).unwrap()))
                .collect();
            let mut expected = vec![r];
            expected.extend(brute_force(&anchor, &rows));
            assert_eq!(
                similar_relations(&p, h, r, 6, 6, ScoreMode::CrossE).unwrap(),
                expected
            );
        }
    }

    #[test]
    fn oversized_k_truncates() {
        let p = ModelParams::init(4, 6, 3, 2).unwrap();
        assert_eq!(
            similar_relations(&p, 0, 0, 10, 3, ScoreMode::TransE)
                .unwrap()
                .len(),
            3
        );
        assert_eq!(
            similar_entities(&p, 0, 0, 10, ScoreMode::TransE)
                .unwrap()
                .len(),
            3
        );
        assert!(similar_entities(&p, 0, 0, 0, ScoreMode::TransE).is_err());
    }

    #[test]
    fn identical_entity_ranks_first_and_head_excluded() {
        let mut p = ModelParams::init(6, 2, 4, 3).unwrap();
        let row = p.entity.row(2).to_vec();
        p.entity.row_mut(5).copy_from_slice(&row);
        for mode in ScoreMode::ALL {
            let near = similar_entities(&p, 2, 0, 5, mode).unwrap();
            assert_eq!(near[0], 5);
            assert!(!near.contains(&2));
        }
    }

    #[test]
    fn zero_interaction_row_falls_back_to_id_order() {
        let mut p = ModelParams::init(6, 2, 4, 4).unwrap();
        p.interaction.as_mut().unwrap().row_mut(1).fill(0.0);
        assert_eq!(
            similar_entities(&p, 3, 1, 5, ScoreMode::CrossE).unwrap(),
            vec![0, 1, 2, 4, 5]
        );
    }

    #[test]
    fn entities_match_exhaustive_distance_sort() {
        for seed in 0..20 {
            let p = ModelParams::init(8, 4, 4, 100 + seed).unwrap();
            let (h, r) = (seed as u32 % 8, seed as u32 % 4);
            let anchor = p.entity_interaction(h, r).unwrap();
            let rows: Vec<_> = (0..8u32)
                .filter(|&e| e != h)
                .map(|e| (e, p.entity_interaction(e, r).unwrap()))
                .collect();
            assert_eq!(
                similar_entities(&p, h, r, 7, ScoreMode::CrossE).unwrap(),
                brute_force(&anchor, &rows)
            );
        }
    }

    #[test]
    fn transe_params_without_interaction_reject_crosse() {
        let mut p = ModelParams::init(4, 2, 3, 5).unwrap();
        p.interaction = None;
        assert!(similar_entities(&p, 0, 0, 2, ScoreMode::TransE).is_ok());
        assert!(matches!(
            similar_entities(&p, 0, 0, 2, ScoreMode::CrossE),
            Err(Error::MissingTensor(_))
        ));
    }
}
