// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const CLEAN: &str = "the food was good\nthe film was nice\nthe plan was fine\nthe day was great\n";
const TOXIC: &str = "the food was vile\nthe film was trash\nthe plan was stupid\nthe day was awful\n";

fn marco(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marco"))
        .current_dir(dir)
        .env_remove("MARCO_ENDPOINT")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = marco(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// A vocabulary plus base, expert and anti-expert models in a temp dir.
fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::write(p.join("clean.txt"), CLEAN).unwrap();
    fs::write(p.join("toxic.txt"), TOXIC).unwrap();
    fs::write(p.join("all.txt"), format!("{CLEAN}{TOXIC}")).unwrap();
    fs::write(p.join("lexicon.txt"), "vile\ntrash\nstupid\nawful\n").unwrap();
    ok(p, &["vocab", "all.txt", "-o", "vocab.txt"]);
    for (corpus, out) in [("all.txt", "base.json"), ("clean.txt", "expert.json"), ("toxic.txt", "anti.json")] {
        ok(p, &["train", "--corpus", corpus, "--vocab", "vocab.txt", "-o", out]);
    }
    dir
}

const MODELS: [&str; 6] = ["--base", "base.json", "--expert", "expert.json", "--antiexpert", "anti.json"];

fn with_models<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["rewrite"];
    v.extend(MODELS);
    v.extend(extra);
    v
}

#[test]
fn magr_preset_is_echoed_in_header() {
    let dir = setup();
    fs::write(dir.path().join("in.txt"), "the food was vile\n").unwrap();
    let out = marco(dir.path(), &with_models(&["--preset", "magr", "in.txt"]));
    assert!(out.status.success());
    let header = String::from_utf8(out.stderr).unwrap();
    assert!(header.contains("alpha2=4.25"), "{header}");
    assert!(header.contains("preset=magr"), "{header}");
}

#[test]
fn neutral_weights_with_identical_experts_copy_the_input() {
    let dir = setup();
    fs::write(dir.path().join("in.txt"), TOXIC).unwrap();
    let out = ok(
        dir.path(),
        &[
            "rewrite", "--base", "base.json", "--expert", "expert.json", "--antiexpert", "expert.json",
            "--alpha1", "0", "--alpha2", "0", "in.txt",
        ],
    );
    for row in out.lines() {
        let cols: Vec<&str> = row.split('\t').collect();
        assert_eq!(cols[0], cols[2], "{row}");
    }
}

#[test]
fn rewrite_replaces_toxic_word() {
    let dir = setup();
    fs::write(dir.path().join("in.txt"), "the food was vile\n").unwrap();
    let out = ok(dir.path(), &with_models(&["--alpha1", "1.5", "--alpha2", "1.5", "in.txt"]));
    assert_eq!(out, "the food was vile\tthe food was <mask>\tthe food was good\n");
}

#[test]
fn filtered_lines_keep_alignment() {
    let dir = setup();
    let long = vec!["good"; 45].join(" ");
    fs::write(dir.path().join("in.txt"), format!("the day was awful\n\n{long}\nthe plan was fine\n")).unwrap();
    let out = ok(dir.path(), &with_models(&["in.txt"]));
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1], "\tFILTERED\tFILTERED");
    assert!(rows[2].ends_with("\tFILTERED\tFILTERED"));
    assert!(rows[3].starts_with("the plan was fine\t"));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let dir = setup();
    fs::write(dir.path().join("in.txt"), format!("{TOXIC}{CLEAN}")).unwrap();
    let args = with_models(&["--alpha2", "2", "in.txt"]);
    assert_eq!(ok(dir.path(), &args), ok(dir.path(), &args));
}

#[test]
fn stdin_and_output_file() {
    let dir = setup();
    let mut child = Command::new(env!("CARGO_BIN_EXE_marco"))
        .current_dir(dir.path())
        .args(with_models(&["-o", "out.tsv"]))
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(b"the day was awful\n").unwrap();
    assert!(child.wait().unwrap().success());
    let out = fs::read_to_string(dir.path().join("out.tsv")).unwrap();
    assert!(out.starts_with("the day was awful\tthe day was <mask>\t"));
}

#[test]
fn mask_prints_one_json_object_per_line() {
    let dir = setup();
    fs::write(dir.path().join("in.txt"), "the food was vile\n\n").unwrap();
    let out = ok(dir.path(), &["mask", "--expert", "expert.json", "--antiexpert", "anti.json", "in.txt"]);
    let rows: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["masked"], serde_json::json!([3]));
    assert_eq!(rows[0]["rendering"], "the food was <mask>");
    assert_eq!(rows[0]["raw"].as_array().unwrap().len(), 4);
    assert_eq!(rows[1]["filtered"], true);
}

#[test]
fn eval_of_identical_files_has_full_similarity() {
    let dir = setup();
    let out = ok(
        dir.path(),
        &["eval", "--originals", "clean.txt", "--rewrites", "clean.txt", "--lexicon", "lexicon.txt", "--fluency-model", "base.json"],
    );
    let mean = out.lines().last().unwrap();
    let cols: Vec<&str> = mean.split('\t').collect();
    assert_eq!(cols[0], "mean");
    assert_eq!(cols[1], "0.000000");
    assert_eq!(cols[2], "1.000000");
}

#[test]
fn eval_reads_rewrite_output_and_precomputed_scores() {
    let dir = setup();
    fs::write(dir.path().join("in.txt"), "the food was vile\n\nthe film was trash\n").unwrap();
    ok(dir.path(), &with_models(&["--alpha2", "1.5", "in.txt", "-o", "pairs.tsv"]));
    fs::write(dir.path().join("tox.tsv"), "id\tscore\n0\t0.25\n1\t0.75\n").unwrap();
    let out = ok(
        dir.path(),
        &["eval", "--pairs", "pairs.tsv", "--toxicity-scores", "tox.tsv", "--fluency-model", "base.json", "--format", "json"],
    );
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["count"], 2);
    assert_eq!(report["mean_toxicity"], 0.5);
}

#[test]
fn sweep_ranks_a_small_grid() {
    let dir = setup();
    fs::write(
        dir.path().join("grid.toml"),
        "tau = [1.2]\nrepetition_penalty = [1.0]\nalpha1 = [1.5]\nalpha2 = [1.5, 4.25]\ntemperature = [2.5]\n",
    )
    .unwrap();
    let mut args = vec!["sweep"];
    args.extend(MODELS);
    args.extend([
        "--dev", "toxic.txt", "--grid", "grid.toml", "--lexicon", "lexicon.txt",
        "--fluency-model", "base.json", "--best-config", "best.toml",
    ]);
    let out = ok(dir.path(), &args);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("rank\tgrid_index"));
    let best = fs::read_to_string(dir.path().join("best.toml")).unwrap();
    assert!(best.contains("alpha2 = 1.5"), "{best}");
}

#[test]
fn user_errors_exit_with_one() {
    let dir = setup();
    fs::write(dir.path().join("in.txt"), "x\n").unwrap();
    assert_eq!(marco(dir.path(), &["rewrite", "--bogus-flag"]).status.code(), Some(1));
    assert_eq!(marco(dir.path(), &with_models(&["--preset", "nope", "in.txt"])).status.code(), Some(1));
    assert_eq!(marco(dir.path(), &with_models(&["--temperature", "0", "in.txt"])).status.code(), Some(1));
    let out = marco(
        dir.path(),
        &["rewrite", "--base", "missing.json", "--expert", "expert.json", "--antiexpert", "anti.json", "in.txt"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unreachable_endpoint_exits_with_two() {
    let dir = setup();
    fs::write(dir.path().join("in.txt"), "the day was awful\n").unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("tcp://127.0.0.1:{port}");
    let out = marco(
        dir.path(),
        &["rewrite", "--base", &endpoint, "--expert", "expert.json", "--antiexpert", "anti.json", "in.txt"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

struct Server(std::process::Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(dir: &Path, model: &str) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_marco"))
        .current_dir(dir)
        .args(["serve", "--model", model])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    Server(child, line.trim().to_string())
}

#[test]
fn served_models_match_local_files() {
    let dir = setup();
    let p: PathBuf = dir.path().into();
    fs::write(p.join("in.txt"), format!("{TOXIC}{CLEAN}")).unwrap();
    let local = ok(&p, &with_models(&["--alpha2", "1.5", "in.txt"]));

    let base = serve(&p, "base.json");
    let expert = serve(&p, "expert.json");
    let anti = serve(&p, "anti.json");
    assert!(base.1.starts_with("tcp://"));
    let remote = ok(
        &p,
        &[
            "rewrite", "--vocab", "vocab.txt", "--base", &base.1, "--expert", &expert.1, "--antiexpert", &anti.1,
            "--alpha2", "1.5", "in.txt",
        ],
    );
    assert_eq!(local, remote);

    let out = Command::new(env!("CARGO_BIN_EXE_marco"))
        .current_dir(&p)
        .env("MARCO_ENDPOINT", &expert.1)
        .args(["mask", "--vocab", "vocab.txt", "--antiexpert", "anti.json", "in.txt"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // scores cross the wire rounded to 9 significant digits, so compare the decisions
    let decisions = |text: &str| -> Vec<(serde_json::Value, serde_json::Value)> {
        text.lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .map(|v| (v["masked"].clone(), v["rendering"].clone()))
            .collect()
    };
    let via_env = String::from_utf8(out.stdout).unwrap();
    let local = ok(&p, &["mask", "--expert", "expert.json", "--antiexpert", "anti.json", "in.txt"]);
    assert_eq!(decisions(&via_env), decisions(&local));
}

#[test]
fn remote_models_need_a_vocabulary() {
    let dir = setup();
    let server = serve(dir.path(), "base.json");
    fs::write(dir.path().join("in.txt"), "x\n").unwrap();
    let out = marco(
        dir.path(),
        &["mask", "--expert", &server.1, "--antiexpert", &server.1, "in.txt"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_builds_its_own_vocabulary() {
    let dir = setup();
    ok(dir.path(), &["train", "--corpus", "clean.txt", "-o", "m.json", "--vocab-out", "v2.txt", "--order", "3"]);
    let vocab = fs::read_to_string(dir.path().join("v2.txt")).unwrap();
    assert_eq!(vocab.lines().take(5).collect::<Vec<_>>(), ["<mask>", "<s>", "</s>", "<unk>", "the"]);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(model["order"], 3);
}

#[test]
fn decode_step_on_the_detox_fixture() {
    let dir = TempDir::new().unwrap();
    let f = marco::fixtures::detox_fixture();
    f.base.save(dir.path().join("b.json")).unwrap();
    f.expert.save(dir.path().join("e.json")).unwrap();
    f.antiexpert.save(dir.path().join("a.json")).unwrap();
    let out = ok(
        dir.path(),
        &[
            "decode-step", "--base", "b.json", "--expert", "e.json", "--antiexpert", "a.json",
            "--condition", "x toxic y", "--masked", "x <mask> y", "--prefix", "x", "--preset", "magr",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["chosen_token"], "benign");
    let probs: Vec<f64> = v["ensembled"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn rewrite_of_the_detox_fixture() {
    let dir = TempDir::new().unwrap();
    let f = marco::fixtures::detox_fixture();
    f.base.save(dir.path().join("b.json")).unwrap();
    f.expert.save(dir.path().join("e.json")).unwrap();
    f.antiexpert.save(dir.path().join("a.json")).unwrap();
    fs::write(dir.path().join("in.txt"), "x toxic y\n").unwrap();
    let out = ok(
        dir.path(),
        &["rewrite", "--base", "b.json", "--expert", "e.json", "--antiexpert", "a.json", "--preset", "magr", "in.txt"],
    );
    assert_eq!(out, "x toxic y\tx <mask> y\tx benign y\n");
}
