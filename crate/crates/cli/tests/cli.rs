use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn usmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_usmt-gec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = usmt(args);
    assert!(
        out.status.success(),
        "usmt-gec {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn toy(dir: &Path) {
    ok(&["make-toy-corpus", "--output", p(dir), "--sentences", "400", "--tuning", "40", "--dev", "40"]);
}

const TINY: &str = r#"
seed = 5

[data]
source = "source.txt"
target = "target.txt"
tuning = "tune.m2"
dev = "dev.m2"

[preprocess]
tokenize = false
bpe_operations = 0

[embeddings]
dim = 24
epochs = 6
window = 3

[mapping]
patience = 3
max_iterations = 30

[induction]
neighbor_limit = 10

[lm]
order = 3

[class_lm]
order = 4
classes = 12

[decoder]
beam = 10
options_per_phrase = 5

[tuning]
n_best = 10
outer_iterations = 2
random_restarts = 2

[refinement]
iterations = 1
synthetic_beam = 5
max_phrase_len = 3

[spellcheck]
min_frequency = 2
"#;

#[test]
fn preprocessing_models_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("raw.txt"), "The cat sat on the mat.\nI saw The cat .\nno\n").unwrap();
    ok(&["preprocess", "--input", p(&d.join("raw.txt")), "--output", p(&d.join("tok.txt")), "--tokenize"]);
    let tok = fs::read_to_string(d.join("tok.txt")).unwrap();
    assert_eq!(tok, "The cat sat on the mat .\nI saw The cat .\nno\n");

    ok(&["learn-truecase", "--input", p(&d.join("tok.txt")), "--output", p(&d.join("tc.model"))]);
    ok(&["learn-bpe", "--input", p(&d.join("tok.txt")), "--output", p(&d.join("bpe.model")), "--operations", "10"]);
    let out = ok(&[
        "preprocess",
        "--input",
        p(&d.join("tok.txt")),
        "--truecase-model",
        p(&d.join("tc.model")),
        "--min-len",
        "3",
    ]);
    // the one-token line is filtered and the sentence-initial "The" is lowercased
    assert_eq!(out.lines().count(), 2);
    assert!(out.starts_with("the cat"), "{out}");
    let segmented = ok(&["preprocess", "--input", p(&d.join("tok.txt")), "--bpe-model", p(&d.join("bpe.model"))]);
    assert_eq!(segmented.lines().count(), 3);
}

#[test]
fn evaluate_reports_m2_and_gleu() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("gold.m2"),
        "S He go home\nA 1 2|||R:VERB|||goes|||REQUIRED|||-NONE-|||0\n\nS a b\n\n",
    )
    .unwrap();
    fs::write(d.join("hyp.txt"), "He goes home\na b\n").unwrap();
    let out = ok(&["evaluate", "--metric", "m2", "--gold", p(&d.join("gold.m2")), "--hyp", p(&d.join("hyp.txt"))]);
    assert!(out.contains("F0.5 100.00"), "{out}");

    // perfect output scores 1 once every n-gram order is present
    fs::write(d.join("hyp.txt"), "He goes home every day\n").unwrap();
    fs::write(d.join("src.txt"), "He go home every day\n").unwrap();
    fs::write(d.join("ref.txt"), "He goes home every day\n").unwrap();
    let out = ok(&[
        "evaluate",
        "--metric",
        "gleu",
        "--hyp",
        p(&d.join("hyp.txt")),
        "--src",
        p(&d.join("src.txt")),
        "--refs",
        p(&d.join("ref.txt")),
    ]);
    assert_eq!(out.trim(), "GLEU 1.0000");
}

#[test]
fn supervised_tools_build_a_working_decoder() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let src: String = (0..60).map(|i| format!("he go to school {i}\nshe have a dog\n")).collect();
    let tgt: String = (0..60).map(|i| format!("he goes to school {i}\nshe has a dog\n")).collect();
    fs::write(d.join("s.txt"), src).unwrap();
    fs::write(d.join("t.txt"), &tgt).unwrap();
    ok(&["align", "--source", p(&d.join("s.txt")), "--target", p(&d.join("t.txt")), "--output", p(&d.join("a.txt"))]);
    let links = fs::read_to_string(d.join("a.txt")).unwrap();
    assert_eq!(links.lines().next().unwrap(), "0-0 1-1 2-2 3-3 4-4");
    ok(&[
        "extract",
        "--source",
        p(&d.join("s.txt")),
        "--target",
        p(&d.join("t.txt")),
        "--alignments",
        p(&d.join("a.txt")),
        "--output",
        p(&d.join("table.gz")),
        "--max-phrase-len",
        "3",
    ]);
    ok(&["train-lm", "--corpus", p(&d.join("t.txt")), "--arpa", p(&d.join("t.arpa")), "--order", "3"]);
    fs::write(d.join("in.txt"), "she have a dog\n").unwrap();
    let (table, lm, input) = (d.join("table.gz"), d.join("t.arpa"), d.join("in.txt"));
    let model = ["--table", p(&table), "--lm", p(&lm), "--input", p(&input)];
    let out = ok(&[&["decode"], &model[..]].concat());
    assert_eq!(out, "she has a dog\n");
    let nbest = ok(&[&["decode"], &model[..], &["--nbest", "3"]].concat());
    assert!(nbest.lines().count() >= 1 && nbest.lines().count() <= 3);
    assert!(nbest.lines().all(|l| l.starts_with("0 ||| ")), "{nbest}");

    fs::write(d.join("tune.m2"), "S she have a dog\nA 1 2|||R:VERB|||has|||REQUIRED|||-NONE-|||0\n\n").unwrap();
    let tuned = ok(&[
        &["tune", "--gold", p(&d.join("tune.m2")), "--output", p(&d.join("w.txt")), "--nbest", "5", "--iters", "2"],
        &model[..4],
    ]
    .concat());
    assert!(tuned.starts_with("m2_f05 "), "{tuned}");
    let weights = fs::read_to_string(d.join("w.txt")).unwrap();
    assert!(weights.lines().all(|l| l.split('\t').count() == 2));
}

#[test]
fn unsupervised_tools_induce_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d);
    for (side, file) in [("src", "source"), ("tgt", "target")] {
        ok(&[
            "train-embeddings",
            "--corpus",
            p(&d.join(format!("{file}.txt"))),
            "--output",
            p(&d.join(format!("{file}.vec"))),
            "--side",
            side,
            "--dim",
            "16",
            "--epochs",
            "2",
        ]);
    }
    ok(&[
        "map-embeddings",
        "--source",
        p(&d.join("source.vec")),
        "--target",
        p(&d.join("target.vec")),
        "--source-output",
        p(&d.join("source.mapped.vec")),
        "--target-output",
        p(&d.join("target.mapped.vec")),
        "--report",
        p(&d.join("report.json")),
    ]);
    assert!(fs::read_to_string(d.join("report.json")).unwrap().contains("\"iterations\""));
    ok(&[
        "induce-table",
        "--source",
        p(&d.join("source.mapped.vec")),
        "--target",
        p(&d.join("target.mapped.vec")),
        "--output",
        p(&d.join("s2t.phrases")),
        "--tau",
        "0.1",
        "--neighbors",
        "5",
    ]);
    let table = fs::read_to_string(d.join("s2t.phrases")).unwrap();
    let first = table.lines().next().unwrap();
    assert_eq!(first.split(" ||| ").count(), 3, "{first}");
    ok(&[
        "train-class-lm",
        "--corpus",
        p(&d.join("target.txt")),
        "--embeddings",
        p(&d.join("target.vec")),
        "--class-map",
        p(&d.join("classes.txt")),
        "--arpa",
        p(&d.join("class.arpa")),
        "--classes",
        "8",
        "--order",
        "4",
    ]);
    assert!(fs::read_to_string(d.join("class.arpa")).unwrap().contains("\\data\\"));
    assert!(fs::read_to_string(d.join("classes.txt")).unwrap().lines().count() > 8);

    let bad = usmt(&[
        "induce-table",
        "--source",
        p(&d.join("source.mapped.vec")),
        "--target",
        p(&d.join("target.mapped.vec")),
        "--output",
        p(&d.join("x")),
        "--tau",
        "warm",
    ]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("--tau"));
}

#[test]
fn spellcheck_uses_the_built_word_list() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("clean.txt"), "the house is big\n".repeat(6)).unwrap();
    ok(&["build-wordlist", "--corpus", p(&d.join("clean.txt")), "--output", p(&d.join("wl.txt"))]);
    fs::write(d.join("in.txt"), "the hous is big\n").unwrap();
    let out = ok(&["spellcheck", "--wordlist", p(&d.join("wl.txt")), "--input", p(&d.join("in.txt"))]);
    assert_eq!(out, "the house is big\n");
}

#[test]
fn run_refine_and_order_experiment_share_a_workspace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d);
    fs::write(d.join("pipeline.toml"), TINY).unwrap();
    let ws = d.join("ws");
    let cfg = d.join("pipeline.toml");
    let report = ok(&["run", "--config", p(&cfg), "--workspace", p(&ws), "--jobs", "2"]);
    assert!(report.contains("selected iteration"), "{report}");
    assert!(ws.join("evaluate/dev.hyp").exists());

    let refine = ok(&["refine", "--config", p(&cfg), "--workspace", p(&ws)]);
    assert!(refine.lines().all(|l| l.ends_with("up to date")), "{refine}");

    let order = ok(&["order-experiment", "--config", p(&cfg), "--workspace", p(&ws)]);
    for row in ["spell -> SMT", "SMT -> spell", "SMT only", "spell only"] {
        assert!(order.contains(row), "{order}");
    }
}

#[test]
fn configuration_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("pipeline.toml"), TINY.replace("[lm]\n", "[lm]\nsmoothing = 1\n")).unwrap();
    let out = usmt(&["run", "--config", p(&d.join("pipeline.toml")), "--workspace", p(&d.join("ws"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lm.smoothing"), "{err}");
    assert!(!d.join("ws").exists());
}
