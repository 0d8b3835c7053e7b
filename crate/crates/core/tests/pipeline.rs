use crosse::checkpoint::{self, Checkpoint};
use crosse::eval::evaluate;
use crosse::kg::Split;
use crosse::model::ScoreMode;
use crosse::synth::{family_graph, FamilyConfig};
use crosse::trainer::Trainer;
use crosse::TrainConfig;

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        d: 8,
        n: 5,
        lr: 0.01,
        lambda: 1e-4,
        batch: 64,
        epochs,
        dropout: 0.2,
        seed: 3,
        mode: ScoreMode::CrossE,
    }
}

#[test]
fn checkpoint_reproduces_evaluation() {
    let data = family_graph(&FamilyConfig::default());
    let graph = data.graph().unwrap().0.add_inverse_relations().unwrap();
    let cfg = small_config(3);
    let trainer = Trainer::new(&graph, cfg.clone()).unwrap();
    let mut state = trainer.init_state().unwrap();
    let log = trainer.run(&mut state, |_, _| Ok(())).unwrap();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|e| e.loss.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let ckpt = Checkpoint::from_state(&cfg, &state, graph.n_relations(), false);
    checkpoint::save(dir.path(), &ckpt, &data.entities, &data.relations).unwrap();
    let (back, ents, rels) = checkpoint::load(dir.path()).unwrap();
    back.check_dictionaries(&data.entities, &data.relations)
        .unwrap();
    assert_eq!(ents, data.entities);
    assert_eq!(rels, data.relations);
    assert_eq!(back.epoch, 3);

    let before = evaluate(&state.params, &graph, Split::Test, ScoreMode::CrossE, 1).unwrap();
    let after = evaluate(&back.params, &graph, Split::Test, ScoreMode::CrossE, 1).unwrap();
    assert_eq!(before.records, after.records);
    assert_eq!(before.table, after.table);
}

#[test]
fn resume_is_bit_identical() {
    let data = family_graph(&FamilyConfig {
        clans: 4,
        ..FamilyConfig::default()
    });
    let graph = data.graph().unwrap().0.add_inverse_relations().unwrap();

    let straight = Trainer::new(&graph, small_config(4)).unwrap();
    let mut full = straight.init_state().unwrap();
    straight.run(&mut full, |_, _| Ok(())).unwrap();

    let first = Trainer::new(&graph, small_config(2)).unwrap();
    let mut half = first.init_state().unwrap();
    first.run(&mut half, |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = Checkpoint::from_state(&small_config(2), &half, graph.n_relations(), true);
    checkpoint::save(dir.path(), &ckpt, &data.entities, &data.relations).unwrap();

    let (loaded, _, _) = checkpoint::load(dir.path()).unwrap();
    let mut resumed = loaded.into_state();
    let second = Trainer::new(&graph, small_config(4)).unwrap();
    let log = second.run(&mut resumed, |_, _| Ok(())).unwrap();
    assert_eq!(log.iter().map(|e| e.epoch).collect::<Vec<_>>(), [3, 4]);
    assert_eq!(resumed, full);
}

#[test]
fn resume_without_moments_diverges() {
    let data = family_graph(&FamilyConfig {
        clans: 4,
        ..FamilyConfig::default()
    });
    let graph = data.graph().unwrap().0.add_inverse_relations().unwrap();
    let trainer = Trainer::new(&graph, small_config(2)).unwrap();
    let mut full = trainer.init_state().unwrap();
    trainer.run(&mut full, |_, _| Ok(())).unwrap();

    let mut partial = trainer.init_state().unwrap();
    trainer.run_epoch(&mut partial).unwrap();
    let ckpt = Checkpoint::from_state(&small_config(2), &partial, graph.n_relations(), false);
    let mut fresh = ckpt.into_state();
    trainer.run(&mut fresh, |_, _| Ok(())).unwrap();
    assert_eq!(fresh.epoch, full.epoch);
    assert_ne!(fresh.params, full.params);
}
