use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crosse::checkpoint::{self, Checkpoint};
use crosse::eval::{read_metrics_json, read_metrics_tsv, read_rank_records, Metrics, Setting};
use crosse::explain::{read_dump, read_metrics_tsv as read_explain_tsv};
use crosse::kg::write_triples;
use crosse::model::{Matrix, ModelParams, ScoreMode};
use crosse::synth::{family_graph, FamilyConfig};
use crosse::TrainConfig;
use tempfile::TempDir;

fn crosse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crosse"))
        .args(args)
        .arg("--log=warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = crosse(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = crosse(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Family corpus written as TSV and prepared into `<tmp>/data`.
fn prepared() -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let ds = family_graph(&FamilyConfig {
        clans: 4,
        ..FamilyConfig::default()
    });
    let files = ["train.txt", "valid.txt", "test.txt"].map(|f| tmp.path().join(f));
    write_triples(&files[0], &ds.train, &ds.entities, &ds.relations).unwrap();
    write_triples(&files[1], &ds.valid, &ds.entities, &ds.relations).unwrap();
    write_triples(&files[2], &ds.test, &ds.entities, &ds.relations).unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "prep",
        "--train",
        s(&files[0]),
        "--valid",
        s(&files[1]),
        "--test",
        s(&files[2]),
        "--out",
        s(&data),
    ]);
    (tmp, data)
}

fn train(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "train",
        "--data",
        s(data),
        "--out",
        s(out),
        "--d",
        "8",
        "--n",
        "4",
        "--batch",
        "32",
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn prep_reports_statistics_and_is_deterministic() {
    let (tmp, data) = prepared();
    let train = tmp.path().join("train.txt");
    let empty = tmp.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let again = tmp.path().join("again");
    let stdout = ok(&[
        "prep",
        "--train",
        s(&train),
        "--valid",
        s(&empty),
        "--test",
        s(&empty),
        "--out",
        s(&again),
    ]);
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[3..], ["0", "0"]);

    let twice = tmp.path().join("twice");
    let files = ["train.txt", "valid.txt", "test.txt"].map(|f| tmp.path().join(f));
    ok(&[
        "prep",
        "--train",
        s(&files[0]),
        "--valid",
        s(&files[1]),
        "--test",
        s(&files[2]),
        "--out",
        s(&twice),
    ]);
    assert_eq!(dir_bytes(&data), dir_bytes(&twice));
}

#[test]
fn prep_missing_file_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.txt");
    let err = fails(&[
        "prep",
        "--train",
        s(&missing),
        "--valid",
        s(&missing),
        "--test",
        s(&missing),
        "--out",
        s(tmp.path()),
    ]);
    assert!(err.contains("nope.txt"), "{err}");
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let (tmp, data) = prepared();
    let run = tmp.path().join("run");
    train(&data, &run, &["--epochs", "0", "--seed", "11"]);
    let (ckpt, ents, rels) = checkpoint::load(&run.join("checkpoint")).unwrap();
    let init = ModelParams::init(ents.len(), 2 * rels.len(), 8, 11).unwrap();
    assert_eq!(ckpt.params, init);
    assert_eq!(ckpt.epoch, 0);
    let loss = fs::read_to_string(run.join("loss.tsv")).unwrap();
    assert_eq!(loss, "epoch\tloss\n");
}

#[test]
fn unknown_config_key_is_named() {
    let (tmp, data) = prepared();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "d = 8\nlearning_rate = 0.1\n").unwrap();
    let run = tmp.path().join("run");
    let err = fails(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--config",
        s(&cfg),
    ]);
    assert!(err.contains("learning_rate"), "{err}");
    let err = fails(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--set",
        "momentum=0.9",
    ]);
    assert!(err.contains("momentum"), "{err}");
}

#[test]
fn wn18_recipe_is_accepted() {
    let (tmp, data) = prepared();
    let cfg = tmp.path().join("wn18.cfg");
    fs::write(
        &cfg,
        "n = 50\nlr = 0.01\nd = 100\nlambda = 1e-4\nbatch = 2048\n",
    )
    .unwrap();
    let run = tmp.path().join("run");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--config",
        s(&cfg),
        "--epochs",
        "0",
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let c = &manifest["config"];
    assert_eq!(
        (c["n"].as_u64(), c["d"].as_u64(), c["batch"].as_u64()),
        (Some(50), Some(100), Some(2048))
    );
    assert_eq!(c["lambda"].as_f64(), Some(1e-4));
    assert!(manifest["finished"].is_string());
    assert!(manifest["version"]
        .as_str()
        .unwrap()
        .starts_with(env!("CARGO_PKG_VERSION")));
}

#[test]
fn resume_continues_with_identical_losses() {
    let (tmp, data) = prepared();
    let straight = tmp.path().join("straight");
    train(&data, &straight, &["--epochs", "4"]);
    let split = tmp.path().join("split");
    train(&data, &split, &["--epochs", "2"]);
    train(&data, &split, &["--epochs", "4", "--resume"]);
    assert_eq!(
        fs::read_to_string(straight.join("loss.tsv")).unwrap(),
        fs::read_to_string(split.join("loss.tsv")).unwrap()
    );
    assert_eq!(
        dir_bytes(&straight.join("checkpoint")),
        dir_bytes(&split.join("checkpoint"))
    );
}

#[test]
fn resume_refuses_a_different_recipe() {
    let (tmp, data) = prepared();
    let run = tmp.path().join("run");
    train(&data, &run, &["--epochs", "1"]);
    let err = fails(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--d",
        "16",
        "--epochs",
        "2",
        "--resume",
    ]);
    assert!(err.contains("different configuration"), "{err}");
}

#[test]
fn manifest_replay_is_bit_identical() {
    let (tmp, data) = prepared();
    let first = tmp.path().join("first");
    train(
        &data,
        &first,
        &[
            "--epochs",
            "2",
            "--seed",
            "5",
            "--mode",
            "crosse_s",
            "--save-every",
            "1",
        ],
    );
    let second = tmp.path().join("second");
    ok(&[
        "train",
        "--manifest",
        s(&first.join("manifest.json")),
        "--out",
        s(&second),
    ]);
    assert_eq!(
        dir_bytes(&first.join("checkpoint")),
        dir_bytes(&second.join("checkpoint"))
    );
    assert_eq!(
        fs::read_to_string(first.join("loss.tsv")).unwrap(),
        fs::read_to_string(second.join("loss.tsv")).unwrap()
    );
}

#[test]
fn eval_reports_agree_with_rank_dump() {
    let (tmp, data) = prepared();
    let run = tmp.path().join("run");
    train(&data, &run, &["--epochs", "2"]);
    let report = tmp.path().join("report");
    let stdout = ok(&[
        "eval",
        "--data",
        s(&data),
        "--checkpoint",
        s(&run.join("checkpoint")),
        "--settings",
        "raw,filter",
        "--out",
        s(&report),
    ]);
    assert!(
        stdout.contains("\nraw\t") && stdout.contains("\nfilter\t"),
        "{stdout}"
    );

    let records = read_rank_records(&report.join("ranks.tsv")).unwrap();
    let table = read_metrics_json(&report.join("metrics.json")).unwrap();
    for setting in [Setting::Raw, Setting::Filter] {
        let recount = Metrics::from_ranks(records.iter().map(|r| r.rank(setting)));
        assert_eq!(&recount, table.get(setting));
    }
    let rows = read_metrics_tsv(&report.join("metrics.tsv")).unwrap();
    let settings: std::collections::HashSet<String> =
        rows.iter().map(|r| r.setting.to_string()).collect();
    assert_eq!(settings.len(), 2);
}

/// Four entities on a line and one translation of +1: every test triple is
/// ranked first in both directions.
#[test]
fn perfect_toy_model_scores_hit1() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("train.txt"), "a\tr\tb\n").unwrap();
    fs::write(tmp.path().join("valid.txt"), "").unwrap();
    fs::write(tmp.path().join("test.txt"), "c\tr\td\n").unwrap();
    let data = tmp.path().join("data");
    let f = |n: &str| tmp.path().join(n);
    ok(&[
        "prep",
        "--train",
        s(&f("train.txt")),
        "--valid",
        s(&f("valid.txt")),
        "--test",
        s(&f("test.txt")),
        "--out",
        s(&data),
    ]);
    let ds = crosse::dataset::Dataset::read_cache(&data).unwrap();
    let params = ModelParams {
        entity: Matrix::from_vec(4, 1, vec![0.0, 1.0, 10.0, 11.0]).unwrap(),
        relation: Matrix::from_vec(2, 1, vec![1.0, -1.0]).unwrap(),
        interaction: None,
        bias: vec![0.0],
    };
    let ckpt = Checkpoint {
        config: TrainConfig {
            d: 1,
            mode: ScoreMode::TransE,
            ..TrainConfig::default()
        },
        params,
        epoch: 0,
        n_relations: 1,
        adam: None,
    };
    let ckpt_dir = tmp.path().join("toy");
    checkpoint::save(&ckpt_dir, &ckpt, &ds.entities, &ds.relations).unwrap();
    let report = tmp.path().join("report");
    ok(&[
        "eval",
        "--data",
        s(&data),
        "--checkpoint",
        s(&ckpt_dir),
        "--out",
        s(&report),
    ]);
    let table = read_metrics_json(&report.join("metrics.json")).unwrap();
    assert_eq!(table.get(Setting::Filter).hits1, 1.0);
    assert_eq!(table.get(Setting::Raw).hits1, 1.0);

    // No C in a TransE checkpoint, so interaction-based explanation is refused.
    let err = fails(&[
        "explain",
        "--data",
        s(&data),
        "--checkpoint",
        s(&ckpt_dir),
        "--mode",
        "crosse",
        "--out",
        s(&report),
    ]);
    assert!(err.contains("interaction"), "{err}");
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let (tmp, data) = prepared();
    let run = tmp.path().join("run");
    train(&data, &run, &["--epochs", "0"]);
    let other = tmp.path().join("other.txt");
    fs::write(&other, "x\tr\ty\n").unwrap();
    let small = tmp.path().join("small");
    ok(&[
        "prep",
        "--train",
        s(&other),
        "--valid",
        s(&other),
        "--test",
        s(&other),
        "--out",
        s(&small),
    ]);
    let err = fails(&[
        "eval",
        "--data",
        s(&small),
        "--checkpoint",
        s(&run.join("checkpoint")),
        "--out",
        s(tmp.path()),
    ]);
    assert!(
        err.contains("entities: dictionary 2 vs checkpoint"),
        "{err}"
    );
}

#[test]
fn explain_sweep_writes_one_row_per_kr() {
    let (tmp, data) = prepared();
    let run = tmp.path().join("run");
    train(&data, &run, &["--epochs", "2"]);
    let out = tmp.path().join("explain");
    ok(&[
        "explain",
        "--data",
        s(&data),
        "--checkpoint",
        s(&run.join("checkpoint")),
        "--split",
        "train",
        "--kr",
        "1,2,3,4,5",
        "--ke",
        "10",
        "--out",
        s(&out),
    ]);
    let rows = read_explain_tsv(&out.join("explain_metrics.tsv")).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.k_relations).collect::<Vec<_>>(),
        [1, 2, 3, 4, 5]
    );
    for row in &rows {
        let dump =
            read_dump(&out.join(format!("explanations_kr{}_ke10.jsonl", row.k_relations))).unwrap();
        assert_eq!(dump.len(), row.metrics.explained);
    }
}

#[test]
fn explain_empty_split_fails() {
    let (tmp, data) = prepared();
    let run = tmp.path().join("run");
    train(&data, &run, &["--epochs", "0"]);
    let err = fails(&[
        "explain",
        "--data",
        s(&data),
        "--checkpoint",
        s(&run.join("checkpoint")),
        "--split",
        "valid",
        "--out",
        s(tmp.path()),
    ]);
    assert!(err.contains("no triples"), "{err}");
    let err = fails(&[
        "eval",
        "--data",
        s(&data),
        "--checkpoint",
        s(&run.join("checkpoint")),
        "--split",
        "valid",
        "--out",
        s(tmp.path()),
    ]);
    assert!(err.contains("empty"), "{err}");
}

#[test]
fn translation_model_resumes_without_interaction_matrix() {
    let (tmp, data) = prepared();
    let straight = tmp.path().join("straight");
    train(&data, &straight, &["--epochs", "3", "--mode", "transe"]);
    let (ckpt, _, _) = checkpoint::load(&straight.join("checkpoint")).unwrap();
    assert!(ckpt.params.interaction.is_none());
    let split = tmp.path().join("split");
    train(&data, &split, &["--epochs", "1", "--mode", "transe"]);
    train(
        &data,
        &split,
        &["--epochs", "3", "--mode", "transe", "--resume"],
    );
    assert_eq!(
        fs::read_to_string(straight.join("loss.tsv")).unwrap(),
        fs::read_to_string(split.join("loss.tsv")).unwrap()
    );
    assert_eq!(
        dir_bytes(&straight.join("checkpoint")),
        dir_bytes(&split.join("checkpoint"))
    );
}
