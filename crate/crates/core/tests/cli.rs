//! Command-line behaviour: exit codes, artifacts and reproducibility.

use std::fs;
use std::path::Path;

use erase::cli::run;

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("erase").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_dataset_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(cli(&["gen-dataset", "--mode", "single-hop", "--seed", "7", "--out", s(out)]), 0);
    }
    let read = |d: &Path| fs::read(d.join("conv-single-7.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(!read(&a).is_empty());
}

#[test]
fn gen_world_writes_snapshot_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["gen-world", "--seed", "3", "--out", s(dir.path())]), 0);
    let world = fs::read_to_string(dir.path().join("world.json")).unwrap();
    assert!(erase::world::WorldState::from_json(&world).is_ok());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn oracle_eval_scores_perfectly_and_report_regenerates() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let code = cli(&[
        "eval", "--system", "erase", "--provider", "oracle", "--seed", "7", "--m", "all", "--runs-dir", s(&runs),
        "--run-id", "r",
    ]);
    assert_eq!(code, 0);
    let run_dir = runs.join("r");
    for f in ["manifest.json", "kb.jsonl", "mutations.jsonl", "records.jsonl", "report.json", "report.csv", "plot.csv"] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    let buckets = report["buckets"].as_array().unwrap();
    assert!(!buckets.is_empty());
    assert!(buckets.iter().all(|b| b["mean"].as_f64() == Some(1.0)));

    let before = fs::read(run_dir.join("report.json")).unwrap();
    fs::remove_file(run_dir.join("report.json")).unwrap();
    assert_eq!(cli(&["report", "--run-dir", s(&run_dir)]), 0);
    assert_eq!(fs::read(run_dir.join("report.json")).unwrap(), before);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seeds"][0], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn query_answers_from_saved_kb() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let runs = dir.path().join("runs");
    assert_eq!(cli(&["gen-dataset", "--seed", "2", "--out", s(&data)]), 0);
    let ds_path = data.join("conv-single-2.jsonl");
    let code = cli(&["ingest", "--dataset", s(&ds_path), "--m", "all", "--runs-dir", s(&runs), "--run-id", "i"]);
    assert_eq!(code, 0);
    let ds = erase::data::Dataset::load(&ds_path).unwrap();
    let q = ds.questions.iter().find(|q| !q.is_list()).unwrap();
    let last = ds.documents.last().unwrap().ts.to_string();
    let choices = q.choice_pool.join(",");
    let code = cli(&[
        "query", "--run-dir", s(&runs.join("i")), "--question", &q.text, "--ts", &last, "--choices", &choices,
    ]);
    assert_eq!(code, 0);
}

#[test]
fn usage_and_validation_errors_exit_one() {
    assert_eq!(cli(&["eval", "--bogus"]), 1);
    assert_eq!(cli(&["no-such-command"]), 1);
    assert_eq!(cli(&["eval", "--seed", "1", "--theta", "1.5"]), 1);
    assert_eq!(cli(&["report", "--run-dir", "/nonexistent/run"]), 1);
    assert_eq!(cli(&["--version"]), 0);
}

#[test]
fn unscripted_provider_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("news.jsonl");
    fs::write(
        &ds,
        "{\"id\":\"n1\",\"text\":\"Acme named Jo as chief executive.\",\"ts\":\"2023-05-01\"}\n\
         {\"id\":\"q1\",\"text\":\"Who leads Acme?\",\"kind\":\"multiple_choice\",\"choices\":[\"Al\",\"Jo\"],\"answers\":[[\"Al\",\"2023-01-01\"],[\"Jo\",\"2023-05-01\"]]}\n",
    )
    .unwrap();
    let script = dir.path().join("script.jsonl");
    fs::write(&script, "{\"prompt\":\"unrelated\",\"response\":\"x\"}\n").unwrap();
    let runs = dir.path().join("runs");
    let base = ["eval", "--domain", "news", "--dataset", s(&ds), "--runs-dir", s(&runs)];
    // Without a script the oracle has nothing to answer from.
    assert_eq!(cli(&base), 1);
    let mut args = base.to_vec();
    args.extend(["--script", s(&script)]);
    assert_eq!(cli(&args), 2);
}
