use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mvec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvec"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mvec(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["gen-synthetic", "--out-dir", ".", "--pages", "10", "--grid", "6x8", "--dim", "12"],
    );
    dir
}

#[test]
fn exit_codes() {
    let dir = fixture();
    let d = dir.path();
    assert_eq!(mvec(d, &["--help"]).status.code(), Some(0));
    assert_eq!(mvec(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(mvec(d, &["merge", "--input", "corpus.mvec"]).status.code(), Some(1));
    assert_eq!(mvec(d, &["validate", "--input", "missing.mvec"]).status.code(), Some(2));

    std::fs::write(d.join("junk.mvec"), b"definitely not an mvec file").unwrap();
    let out = mvec(d, &["validate", "--input", "junk.mvec"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format"));

    let out = mvec(
        d,
        &["prune", "--input", "corpus.mvec", "--output", "x.mvec", "--strategy", "score", "--ratio", "0.5"],
    );
    assert_eq!(out.status.code(), Some(1), "score pruning without --aux");
    let out = mvec(
        d,
        &["merge", "--input", "corpus.mvec", "--output", "x.mvec", "--approach", "cluster", "--factor", "0.5"],
    );
    assert_eq!(out.status.code(), Some(1), "factor below 1");
}

#[test]
fn search_writes_ranked_tsv() {
    let dir = fixture();
    let tsv = ok(dir.path(), &["search", "--corpus", "corpus.mvec", "--queries", "queries.mvec", "--k", "3"]);
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 30);
    for chunk in lines.chunks(3) {
        let fields: Vec<Vec<&str>> = chunk.iter().map(|l| l.split('\t').collect()).collect();
        assert!(fields.iter().all(|f| f.len() == 4));
        assert_eq!(fields.iter().map(|f| f[1]).collect::<Vec<_>>(), ["1", "2", "3"]);
        let scores: Vec<f32> = fields.iter().map(|f| f[3].parse().unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn compression_is_stamped_and_compared() {
    let dir = fixture();
    let d = dir.path();
    ok(d, &["eval", "--corpus", "corpus.mvec", "--queries", "queries.mvec", "--qrels", "qrels.tsv", "--output", "base.json"]);
    ok(d, &["merge", "--input", "corpus.mvec", "--output", "m.mvec", "--approach", "pool2d", "--factor", "4"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m.mvec.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["provenance"]["strategy"], "pool2d");
    assert_eq!(manifest["provenance"]["parameter"], 4.0);

    let report = ok(
        d,
        &["eval", "--corpus", "m.mvec", "--queries", "queries.mvec", "--qrels", "qrels.tsv", "--baseline", "base.json"],
    );
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["memory_ratio"], 0.25);
    let rel = report["relative_performance"].as_f64().unwrap();
    assert!(rel > 0.0 && rel <= 1.5);

    let mem = ok(d, &["--json", "mem", "--input", "m.mvec", "--baseline", "corpus.mvec"]);
    let mem: serde_json::Value = serde_json::from_str(&mem).unwrap();
    assert_eq!(mem["bytes"], 10 * 12 * 12 * 4);
    assert_eq!(mem["relative_memory"], 0.25);
}

#[test]
fn sweep_csv_has_one_row_per_point() {
    let dir = fixture();
    let d = dir.path();
    ok(
        d,
        &[
            "sweep", "--corpus", "corpus.mvec", "--queries", "queries.mvec", "--qrels", "qrels.tsv",
            "--strategy", "attention", "--aux", "attention.mvec", "--point", "0.25", "--point", "0.5",
            "--point", "0.75", "--output", "s.json", "--csv", "s.csv",
        ],
    );
    let csv = std::fs::read_to_string(d.join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("strategy,parameter,mean_ndcg"));
    assert!(lines[1].starts_with("attention,0.25,"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = fixture();
    let d = dir.path();
    std::fs::write(d.join("run.conf"), "# defaults\nk = 2\nunknown_key = 3\n").unwrap();
    let two = ok(d, &["--config", "run.conf", "search", "--corpus", "corpus.mvec", "--queries", "queries.mvec"]);
    assert_eq!(two.lines().count(), 20);
    let four = ok(
        d,
        &["--config", "run.conf", "search", "--corpus", "corpus.mvec", "--queries", "queries.mvec", "--k", "4"],
    );
    assert_eq!(four.lines().count(), 40);
}

#[test]
fn ingest_and_index_round_trip() {
    let dir = fixture();
    let d = dir.path();
    let summary = ok(d, &["--json", "ingest", "--input", "corpus.mvec", "--output", "half.mvec", "--dtype", "f16"]);
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["pages"], 10);
    let half: serde_json::Value =
        serde_json::from_str(&ok(d, &["--json", "ingest", "--input", "half.mvec"])).unwrap();
    assert_eq!(half["dtype"], "f16");
    assert_eq!(half["memory_bytes"], 10 * 48 * 12 * 2);
    ok(d, &["index", "--input", "half.mvec", "--output", "idx.mvec"]);
    ok(d, &["validate", "--input", "idx.mvec"]);
}

#[test]
fn analysis_reports() {
    let dir = fixture();
    let d = dir.path();
    let overlap = ok(
        d,
        &["analyze", "overlap", "--corpus", "corpus.mvec", "--synth-queries", "synth_queries.mvec", "--ratios", "0.5,0.9"],
    );
    let overlap: serde_json::Value = serde_json::from_str(&overlap).unwrap();
    assert_eq!(overlap["points"].as_array().unwrap().len(), 2);
    assert_eq!(overlap["points"][0]["pairs"], 30);
    let red = ok(
        d,
        &["analyze", "redundancy", "--corpus", "corpus.mvec", "--synth-queries", "synth_queries.mvec"],
    );
    let red: serde_json::Value = serde_json::from_str(&red).unwrap();
    assert_eq!(red["pairs"], 30);
    let total: u64 = red["histogram"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 30 * 48);
}
