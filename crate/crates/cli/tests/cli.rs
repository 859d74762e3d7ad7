use std::fs;
use std::path::{Path, PathBuf};

use jex_cli::{main_with, run, CliError};
use jex_core::checkpoint::load_checkpoint;
use jex_core::exemplar::sample_size;
use jex_core::{load_store, Variant};
use jex_owsplit::SplitManifest;
use serde_json::Value;
use tempfile::TempDir;

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn jex(args: &[&str]) -> Result<(), CliError> {
    run(std::iter::once("jex").chain(args.iter().copied()))
}

/// A small corpus, its split manifest, and a quick training config.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Self { dir };
        fs::write(
            f.path("toy.json"),
            r#"{"train_scenes": 60, "val_scenes": 40}"#,
        )
        .unwrap();
        fs::write(f.path("train.json"), r#"{"epochs": 2, "batch_size": 16}"#).unwrap();
        jex(&[
            "gen-toy",
            "--config",
            &s(&f.path("toy.json")),
            "--out",
            &s(&f.data()),
        ])
        .unwrap();
        f.split(&f.data().join("manifest.json")).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data(&self) -> PathBuf {
        self.path("data")
    }

    fn split(&self, out: &Path) -> Result<(), CliError> {
        let d = self.data();
        jex(&[
            "split",
            "--instances",
            &s(&d.join("instances_train.json")),
            &s(&d.join("instances_val.json")),
            "--questions",
            &s(&d.join("questions_train.json")),
            &s(&d.join("questions_val.json")),
            "--annotations",
            &s(&d.join("annotations_train.json")),
            &s(&d.join("annotations_val.json")),
            "--out",
            &s(out),
        ])
    }

    fn train(&self, out: &Path, extra: &[&str]) -> Result<(), CliError> {
        let data = s(&self.data());
        let cfg = s(&self.path("train.json"));
        let out = s(out);
        let mut args = vec![
            "train", "--preset", "toy", "--config", &cfg, "--data", &data, "--out", &out,
        ];
        args.extend_from_slice(extra);
        jex(&args)
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn split_matches_generator_and_is_byte_stable() {
    let f = Fixture::new();
    let first = f.data().join("manifest.json");
    let truth = SplitManifest::load(&f.data().join("truth_manifest.json")).unwrap();
    assert!(SplitManifest::load(&first).unwrap().same_split(&truth));
    let again = f.path("again.json");
    f.split(&again).unwrap();
    assert_eq!(fs::read(&first).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("instances_nowhere.json");
    let err = jex(&[
        "split",
        "--instances",
        &s(&missing),
        "--questions",
        &s(&missing),
        "--annotations",
        &s(&missing),
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("instances_nowhere.json"), "{err}");
}

#[test]
fn exit_codes() {
    assert_eq!(
        main_with(["jex", "param-count", "--n-q", "1", "--out", "/dev/null"]),
        0
    );
    assert_eq!(main_with(["jex", "frobnicate"]), 1);
    assert_eq!(main_with(["jex", "--help"]), 0);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("questions.json");
    fs::write(&bad, "{ not json").unwrap();
    let inst = dir.path().join("instances.json");
    fs::write(
        &inst,
        r#"{"images": [], "annotations": [], "categories": []}"#,
    )
    .unwrap();
    let code = main_with([
        "jex",
        "split",
        "--instances",
        &s(&inst),
        "--questions",
        &s(&bad),
        "--annotations",
        &s(&bad),
    ]);
    assert_eq!(code, 2);
    let cfg = dir.path().join("nan.json");
    fs::write(&cfg, r#"{"epochs": 3, "learning_rate": 1e6}"#).unwrap();
    let f = Fixture::new();
    let code = main_with([
        "jex",
        "train",
        "--stage",
        "1",
        "--preset",
        "toy",
        "--config",
        &s(&cfg),
        "--data",
        &s(&f.data()),
        "--out",
        &s(&f.path("nan")),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn param_count_reports_both_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pc.json");
    jex(&["param-count", "--out", &s(&out)]).unwrap();
    let v = read_json(&out);
    assert_eq!(v["naive"], 9_830_400_000u64);
    assert_eq!(v["tucker"], 51_409_880u64);
}

#[test]
fn two_stage_training_eval_and_answer() {
    let f = Fixture::new();
    let out = f.path("run");
    f.train(&out, &["--stage", "both"]).unwrap();

    let jex_params = load_checkpoint(&out.join("jex.jexm")).unwrap();
    assert_eq!(jex_params.variant, Variant::Jex);
    let manifest = SplitManifest::load(&f.data().join("manifest.json")).unwrap();
    let store = load_store(&out.join("store.jexs")).unwrap();
    assert_eq!(store.len(), sample_size(manifest.trainset.len(), 0.1));
    let report = read_json(&out.join("train_report.json"));
    assert_eq!(report["config"]["epochs"], 2);
    assert_eq!(report["stages"].as_array().unwrap().len(), 2);

    // build-store reproduces the store written by stage 1
    let rebuilt = f.path("rebuilt.jexs");
    jex(&[
        "build-store",
        "--model",
        &s(&out.join("grid.jexm")),
        "--data",
        &s(&f.data()),
        "--out",
        &s(&rebuilt),
    ])
    .unwrap();
    assert_eq!(
        fs::read(&rebuilt).unwrap(),
        fs::read(out.join("store.jexs")).unwrap()
    );

    for split in ["valset_known", "valset_unknown"] {
        let m = f.path(&format!("{split}.json"));
        jex(&[
            "eval",
            "--model",
            &s(&out.join("jex.jexm")),
            "--store",
            &s(&out.join("store.jexs")),
            "--data",
            &s(&f.data()),
            "--split",
            split,
            "--out",
            &s(&m),
        ])
        .unwrap();
        let v = read_json(&m);
        assert_eq!(v["split"], split);
        assert_eq!(v["variant"], "jex");
        let n = v["n"].as_f64().unwrap();
        let c = &v["counts"];
        let weighted = (v["yesno"].as_f64().unwrap() * c["yesno"].as_f64().unwrap()
            + v["number"].as_f64().unwrap() * c["number"].as_f64().unwrap()
            + v["other"].as_f64().unwrap() * c["other"].as_f64().unwrap())
            / n;
        assert!((v["all"].as_f64().unwrap() - weighted).abs() < 1e-12);
        assert_eq!(v["config"]["epochs"], 2);
    }

    let err = jex(&[
        "eval",
        "--model",
        &s(&out.join("jex.jexm")),
        "--data",
        &s(&f.data()),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("--store"), "{err}");

    let feat = f.data().join("features").join("1.jexf");
    let ans = f.path("answer.json");
    jex(&[
        "answer",
        "--model",
        &s(&out.join("grid.jexm")),
        "--features",
        &s(&feat),
        "--question",
        "how many circles are there?",
        "--out",
        &s(&ans),
    ])
    .unwrap();
    let v = read_json(&ans);
    assert!(v.get("alpha_e").is_none() && v.get("exemplar_id").is_none());
    assert!(v["answer"].is_string());

    jex(&[
        "answer",
        "--model",
        &s(&out.join("jex.jexm")),
        "--store",
        &s(&out.join("store.jexs")),
        "--features",
        &s(&feat),
        "--question",
        "is there a red square?",
        "--out",
        &s(&ans),
    ])
    .unwrap();
    let v = read_json(&ans);
    assert!(v["exemplar_id"].is_u64());
    for key in ["alpha_iq", "alpha_e"] {
        let maps = v[key].as_array().unwrap();
        assert_eq!(maps.len(), 2);
        for m in maps {
            let row: Vec<f64> = m
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .collect();
            assert_eq!(row.len(), 16);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&a| a >= 0.0));
        }
    }
}

#[test]
fn stage_two_needs_init_and_store() {
    let f = Fixture::new();
    let out = f.path("s1");
    f.train(&out, &["--stage", "1"]).unwrap();
    assert!(!out.join("jex.jexm").exists());
    let grid = s(&out.join("grid.jexm"));
    let err = f
        .train(&f.path("s2"), &["--stage", "2", "--init", &grid])
        .unwrap_err();
    assert!(err.to_string().contains("--store"), "{err}");
    let missing = s(&out.join("nope.jexs"));
    let err = f
        .train(
            &f.path("s2"),
            &["--stage", "2", "--init", &grid, "--store", &missing],
        )
        .unwrap_err();
    assert!(matches!(err, CliError::MissingPath(_)));
    let store = s(&out.join("store.jexs"));
    f.train(
        &f.path("s2"),
        &["--stage", "2", "--init", &grid, "--store", &store],
    )
    .unwrap();
    let both = f.path("both");
    f.train(&both, &["--stage", "both"]).unwrap();
    assert_eq!(
        fs::read(f.path("s2").join("jex.jexm")).unwrap(),
        fs::read(both.join("jex.jexm")).unwrap()
    );
}
