use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use dish_core::{dataio, CodeMatrix, LabelVector};

fn dish(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dish"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) {
    let out = dish(&[
        "-q", "synth", "--classes", "4", "--per-class", "30", "--dim", "6",
        "--queries-per-class", "5", "--out-dir", p(dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn train(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "-q".to_string(),
        "train".into(),
        "--features".into(),
        p(&dir.join("db.features")).into(),
        "--labels".into(),
        p(&dir.join("db.labels")).into(),
        "--bits".into(),
        "8".into(),
        "--model-out".into(),
        p(&dir.join("model.bin")).into(),
        "--codes-out".into(),
        p(&dir.join("db.codes")).into(),
        "--report-out".into(),
        p(&dir.join("report.txt")).into(),
    ];
    if !extra.contains(&"--iters") {
        args.extend(["--iters".to_string(), "2".into()]);
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    dish(&refs)
}

#[test]
fn train_encode_query_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let out = train(d, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("iter=0 phase=init")), "{report}");

    let out = dish(&[
        "encode", "--model", p(&d.join("model.bin")), "--features", p(&d.join("query.features")),
        "--out", p(&d.join("query.codes")),
    ]);
    assert_eq!(code(&out), 0);
    let queries = dataio::load_codes(&d.join("query.codes")).unwrap();
    assert_eq!((queries.n(), queries.bits()), (20, 8));

    let out = dish(&["query", "--db", p(&d.join("db.codes")), "--queries", p(&d.join("query.codes")), "--top", "3"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 20);
    assert!(text.lines().all(|l| l.split('\t').nth(1).unwrap().split(' ').count() == 3));

    let out = dish(&[
        "eval", "--db-codes", p(&d.join("db.codes")), "--query-codes", p(&d.join("query.codes")),
        "--db-labels", p(&d.join("db.labels")), "--query-labels", p(&d.join("query.labels")),
        "--topk", "1,10", "--pr-csv", p(&d.join("pr.csv")),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let map: f64 = text.lines().find_map(|l| l.strip_prefix("map=")).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&map));
    assert!(text.contains("top_10_precision="));
    assert!(std::fs::read_to_string(d.join("pr.csv")).unwrap().starts_with("recall,precision"));

    // Encoding through the model gives the same metrics as the stored codes.
    let via_model = dish(&[
        "eval", "--model", p(&d.join("model.bin")), "--db-features", p(&d.join("db.features")),
        "--query-features", p(&d.join("query.features")), "--db-labels", p(&d.join("db.labels")),
        "--query-labels", p(&d.join("query.labels")), "--topk", "1,10",
    ]);
    assert_eq!(stdout(&via_model), text);
}

#[test]
fn zero_iterations_keeps_initialization() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = train(dir.path(), &["--iters", "0"]);
    assert_eq!(code(&out), 0);
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.lines().all(|l| !l.starts_with("iter=1")), "{report}");
}

#[test]
fn self_retrieval_gives_perfect_map() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let n = 40;
    let bits = 16;
    let values = (0..n)
        .flat_map(|i: usize| (0..bits).map(move |b| if (i * 37 + 5) >> b & 1 == 1 { 1 } else { -1 }))
        .collect();
    let codes = CodeMatrix::new(n, bits, values).unwrap().pack();
    dataio::save_codes(&d.join("c.bin"), &codes).unwrap();
    let ids: Vec<u32> = (0..n as u32).collect();
    dataio::save_labels(&d.join("l.txt"), &LabelVector::single(&ids).unwrap()).unwrap();
    let out = dish(&[
        "eval", "--db-codes", p(&d.join("c.bin")), "--query-codes", p(&d.join("c.bin")),
        "--db-labels", p(&d.join("l.txt")), "--query-labels", p(&d.join("l.txt")), "--topk", "1",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("map=1\n"), "{text}");
    assert!(text.contains("top_1_precision=1\n"), "{text}");
}

#[test]
fn invalid_parameters_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    assert_eq!(code(&train(dir.path(), &["--nu", "-1"])), 1);
    assert_eq!(code(&train(dir.path(), &["--bits", "0"])), 1);
    assert_eq!(code(&train(dir.path(), &["--lambda", "sideways"])), 1);
    assert_eq!(code(&dish(&["train"])), 1);
    assert_eq!(code(&dish(&["frobnicate"])), 1);
    assert_eq!(code(&dish(&["verify", "--max-n", "20"])), 1);
}

#[test]
fn help_exits_cleanly() {
    let out = dish(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("train"));
    assert_eq!(code(&dish(&["train", "--help"])), 0);
}

#[test]
fn missing_and_malformed_inputs_exit_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);

    std::fs::remove_file(d.join("db.labels")).unwrap();
    let out = train(d, &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("db.labels"));

    std::fs::write(d.join("db.labels"), "0\n1\nnot-a-number\n").unwrap();
    let out = train(d, &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    std::fs::write(d.join("bad.features"), "1.0,2.0\n3.0\n").unwrap();
    let out = dish(&[
        "-q", "train", "--features", p(&d.join("bad.features")), "--labels", p(&d.join("query.labels")),
        "--model-out", p(&d.join("m")), "--codes-out", p(&d.join("c")),
    ]);
    assert_eq!(code(&out), 2);

    std::fs::write(d.join("junk.bin"), b"not a model at all").unwrap();
    let out = dish(&["encode", "--model", p(&d.join("junk.bin")), "--features", p(&d.join("query.features")), "--out", p(&d.join("o"))]);
    assert_eq!(code(&out), 2);
    let out = dish(&["query", "--db", p(&d.join("junk.bin")), "--queries", p(&d.join("junk.bin")), "--top", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_passes_and_detects_injected_fault() {
    let start = Instant::now();
    let out = dish(&["verify", "--max-n", "8"]);
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("PASS")).count(), 5);
    assert!(secs < 5.0, "{secs}s");

    let out = dish(&["verify", "--max-n", "6", "--instances", "5", "--inject-fault"]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("FAIL low_rank_similarity"));
}
