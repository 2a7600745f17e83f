use oodkit::format::{load_gaussian, load_head, save_scores};
use oodkit_core::maha::fit_gaussian;
use oodkit_core::EmbeddingSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

struct Fixture {
    dir: tempfile::TempDir,
    in_train: EmbeddingSet,
}

impl Fixture {
    fn new(seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = random_centers(&mut rng, 5, 8, 4.0);
        let out_centers = random_centers(&mut rng, 2, 8, 4.0);
        let in_train = clusters(&mut rng, &centers, 40, 0);
        let oe_train = clusters(&mut rng, &out_centers, 20, 100);
        let in_test = clusters(&mut rng, &centers, 30, 0);
        let out_test = clusters(&mut rng, &out_centers, 30, 100);
        write(dir.path(), "in_train.bin", &in_train);
        write(dir.path(), "oe_train.bin", &oe_train);
        write(dir.path(), "in_test.bin", &unlabeled(&in_test));
        write(dir.path(), "out_test.bin", &unlabeled(&out_test));
        Self { dir, in_train }
    }

    fn path(&self, name: &str) -> String {
        s(&self.dir.path().join(name)).to_owned()
    }
}

#[test]
fn fit_writes_reloadable_model() {
    let f = Fixture::new(1);
    let out = f.path("fit");
    run_ok(&["fit", "--train", &f.path("in_train.bin"), "--out-dir", &out]);
    let model = load_gaussian(&f.dir.path().join("fit/model.oodgau")).unwrap();
    let direct = fit_gaussian(&f.in_train, None).unwrap();
    assert_eq!(model.means(), direct.means());
    assert_eq!(model.chol(), direct.chol());
    let manifest = json(&f.dir.path().join("fit/manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["derived"]["ridge_escalations"], 0);
}

#[test]
fn unlabeled_training_file_exits_2() {
    let f = Fixture::new(2);
    let out = oodkit(&["fit", "--train", &f.path("in_test.bin"), "--out-dir", &f.path("o")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("in_test.bin"));
}

#[test]
fn zero_epsilon_on_singular_covariance_escalates() {
    let dir = tempfile::tempdir().unwrap();
    // every row lies in the plane z = 0
    let rows: Vec<[f32; 3]> = (0..12).map(|i| [i as f32, (i * i % 7) as f32, 0.0]).collect();
    let set = EmbeddingSet::from_rows(&rows).unwrap().with_labels((0..12).map(|i| i % 2).collect()).unwrap();
    let train = write(dir.path(), "flat.bin", &set);
    let out = dir.path().join("o");
    run_ok(&["fit", "--train", s(&train), "--epsilon", "0", "--out-dir", s(&out)]);
    let manifest = json(&out.join("manifest.json"));
    assert!(manifest["derived"]["ridge_escalations"].as_u64().unwrap() > 0);
    assert!(manifest["derived"]["epsilon"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["config"]["epsilon"], 0.0);
}

#[test]
fn csv_inputs_with_label_column() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("t.csv");
    std::fs::write(&train, "0,0,0\n2,0,0\n0,2,1\n0,4,1\n").unwrap();
    let out = dir.path().join("o");
    run_ok(&["fit", "--train", s(&train), "--csv-labels", "--out-dir", s(&out)]);
    let model = load_gaussian(&out.join("model.oodgau")).unwrap();
    assert_eq!(model.means(), &[1.0, 0.0, 0.0, 3.0]);
    // without the flag the label column is a feature and there are no labels
    let bad = oodkit(&["fit", "--train", s(&train), "--out-dir", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn eval_same_file_is_chance() {
    let f = Fixture::new(3);
    let out = f.path("eval");
    run_ok(&[
        "eval", "--method", "maha", "--train", &f.path("in_train.bin"), "--in", &f.path("in_test.bin"), "--out",
        &f.path("in_test.bin"), "--out-dir", &out,
    ]);
    let report = json(&f.dir.path().join("eval/report.json"));
    assert_eq!(report["auroc"], 0.5);
    assert_eq!(report["method"], "maha");
}

#[test]
fn eval_perfect_separation_from_score_files() {
    let dir = tempfile::tempdir().unwrap();
    save_scores(&[0.9, 0.8, 0.95], &dir.path().join("in.csv")).unwrap();
    save_scores(&[0.1, 0.2], &dir.path().join("out.csv")).unwrap();
    let out = dir.path().join("o");
    run_ok(&[
        "eval", "--method", "scores", "--in", s(&dir.path().join("in.csv")), "--out",
        s(&dir.path().join("out.csv")), "--curves", "--out-dir", s(&out),
    ]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["auroc"], 1.0);
    assert_eq!(report["fpr95"], 0.0);
    assert_eq!((report["m"].as_u64(), report["n"].as_u64()), (Some(2), Some(3)));
    assert!(out.join("roc.csv").exists() && out.join("pr.csv").exists());
}

#[test]
fn method_input_mismatch_exits_2() {
    let f = Fixture::new(4);
    for args in [
        vec!["eval", "--method", "oe", "--in", "a", "--out", "b"],
        vec!["eval", "--method", "maha", "--in", "a", "--out", "b"],
        vec!["eval", "--method", "msp", "--model", "m", "--in", "a", "--out", "b"],
        vec!["score", "--method", "zshot", "--input", "a"],
    ] {
        let mut args: Vec<String> = args.into_iter().map(str::to_owned).collect();
        args.extend(["--out-dir".to_owned(), f.path("o")]);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(oodkit(&refs).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn train_oe_one_shot_writes_head_and_report() {
    let f = Fixture::new(5);
    let out = f.path("oe");
    run_ok(&[
        "train-oe", "--in-train", &f.path("in_train.bin"), "--oe-train", &f.path("oe_train.bin"), "--shots", "1",
        "--steps", "300", "--l2", "0.001", "--lr", "0.01", "--seed", "3", "--test-in", &f.path("in_test.bin"),
        "--test-out", &f.path("out_test.bin"), "--out-dir", &out,
    ]);
    let head = load_head(&f.dir.path().join("oe/head.oodhed")).unwrap();
    assert_eq!(head.output_width(), 7);
    let report = json(&f.dir.path().join("oe/report.json"));
    assert!(report["auroc"].as_f64().unwrap() > 0.9, "{report}");
    let manifest = json(&f.dir.path().join("oe/manifest.json"));
    assert_eq!(manifest["derived"]["shot_rows"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["derived"]["oe_rows"], 2);
    assert_eq!(manifest["config"]["seed"], 3);
    assert!(manifest["derived"]["gamma"].as_f64().unwrap() > 1.0);
}

#[test]
fn collapse_and_shots_recorded() {
    let f = Fixture::new(6);
    let out = f.path("oe");
    run_ok(&[
        "train-oe", "--in-train", &f.path("in_train.bin"), "--oe-train", &f.path("oe_train.bin"), "--collapse",
        "--shots", "10", "--steps", "20", "--out-dir", &out,
    ]);
    let manifest = json(&f.dir.path().join("oe/manifest.json"));
    assert_eq!(manifest["derived"]["output_width"], 6);
    assert_eq!(manifest["derived"]["partition_mode"], "collapsed_single_class");
    assert_eq!(manifest["derived"]["shot_rows"].as_array().unwrap().len(), 20);
}

#[test]
fn diverging_training_exits_3() {
    let f = Fixture::new(7);
    let out = oodkit(&[
        "train-oe", "--in-train", &f.path("in_train.bin"), "--oe-train", &f.path("oe_train.bin"), "--lr", "1e300",
        "--l2", "1e300", "--steps", "50", "--out-dir", &f.path("o"),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zshot_raw_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let in_labels = write(dir.path(), "in.bin", &EmbeddingSet::from_rows(&[[1.0f32, 0.0]]).unwrap());
    let out_labels = write(dir.path(), "out.bin", &EmbeddingSet::from_rows(&[[0.0f32, 1.0]]).unwrap());
    let images = write(dir.path(), "img.bin", &EmbeddingSet::from_rows(&[[0.0f32, 5.0], [1.0, 0.0]]).unwrap());
    let out = dir.path().join("o");
    run_ok(&[
        "zshot", "--in-labels", s(&in_labels), "--out-labels", s(&out_labels), "--in", s(&images), "--raw",
        "--out-dir", s(&out),
    ]);
    let scores = oodkit::format::load_scores(&out.join("scores_in.csv")).unwrap();
    assert!((scores[0] - 1.0 / (1.0 + 5f64.exp())).abs() < 1e-12);
    assert!((scores[1] - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-12);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["derived"]["zshot_mode"], "in-mass");
    assert_eq!(manifest["derived"]["temperature"], 1.0);
}

#[test]
fn pca_projection_and_landscape() {
    let f = Fixture::new(8);
    run_ok(&["fit", "--train", &f.path("in_train.bin"), "--out-dir", &f.path("fit")]);
    let out = f.path("pca");
    run_ok(&[
        "pca", "--input", &f.path("in_test.bin"), "--input", &f.path("out_test.bin"), "--model",
        &f.path("fit/model.oodgau"), "--out-dir", &out,
    ]);
    let text = std::fs::read_to_string(f.dir.path().join("pca/projection.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("input,tag,row,pc1,pc2,maha"));
    assert_eq!(lines.count(), 150 + 60);
    let report = json(&f.dir.path().join("pca/pca.json"));
    assert_eq!(report["rows_per_input"], serde_json::json!([150, 60]));
    let too_many = oodkit(&["pca", "--input", &f.path("in_test.bin"), "--components", "9", "--out-dir", &out]);
    assert_eq!(too_many.status.code(), Some(2));
}

#[test]
fn logits_with_header_in_indices() {
    let dir = tempfile::tempdir().unwrap();
    let set = EmbeddingSet::new(vec![0.0, 0.0, 2f32.ln()], 3).unwrap();
    let bytes = oodkit::format::encode_embeddings(&set, Some(&[0, 1])).unwrap();
    let path = dir.path().join("logits.bin");
    std::fs::write(&path, bytes).unwrap();
    let out = dir.path().join("o");
    run_ok(&["score", "--method", "in-mass", "--input", s(&path), "--out-dir", s(&out)]);
    let scores = oodkit::format::load_scores(&out.join("scores.csv")).unwrap();
    assert!((scores[0] - 0.5).abs() < 1e-6);
    run_ok(&["score", "--method", "in-mass", "--in-indices", "0", "--input", s(&path), "--out-dir", s(&out)]);
    let scores = oodkit::format::load_scores(&out.join("scores.csv")).unwrap();
    assert!((scores[0] - 0.25).abs() < 1e-6);
}
