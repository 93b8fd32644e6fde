//! End-to-end runs of the `rfa-doc` binary.

use std::path::Path;
use std::process::{Command, Output};

use rfa_doc::checkpoint;
use rfa_doc::transformer::Model;

fn rfa_doc(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfa-doc"))
        .args(args)
        .current_dir(cwd)
        .env("RFA_DOC_OUT", cwd.join("envout"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stdout: {}\nstderr: {}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    o
}

const SMALL_DATA: [&str; 6] = ["--docs", "12", "--dev-docs", "4", "--test-docs", "4"];
const TINY_MODEL: [&str; 12] = [
    "--d-model", "8", "--n-heads", "2", "--d-ff", "8", "--enc-layers", "1", "--dec-layers", "1", "--d-cross", "8",
];

fn gen(cwd: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["gen-data", "--out", out];
    args.extend(SMALL_DATA);
    args.extend(extra);
    rfa_doc(cwd, &args)
}

fn train(cwd: &Path, data: &str, ckpt: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", data, "--out", ckpt, "--d-causal", "8"];
    args.extend(TINY_MODEL);
    args.extend(extra);
    rfa_doc(cwd, &args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_data_is_deterministic_and_guards_existing_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(gen(cwd, "a", &["--task", "agree", "--items", "10"]));
    ok(gen(cwd, "b", &["--task", "agree", "--items", "10"]));
    let a = read_dir_sorted(&cwd.join("a"));
    assert_eq!(a, read_dir_sorted(&cwd.join("b")));
    assert!(a.iter().any(|(n, _)| n == "consistency.txt"));

    assert_eq!(code(&gen(cwd, "a", &[])), 2);
    ok(gen(cwd, "a", &["--force"]));
    ok(gen(cwd, "c", &["--seed", "2"]));
    assert_ne!(read_dir_sorted(&cwd.join("a")), read_dir_sorted(&cwd.join("c")));
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    assert_eq!(code(&gen(cwd, "d", &["--docs", "0"])), 1);
    assert_eq!(code(&rfa_doc(cwd, &["gen-data", "--no-such-flag"])), 1);
    assert_eq!(code(&rfa_doc(cwd, &["no-such-command"])), 1);
    assert_eq!(code(&gen(cwd, "d", &["--task", "nope"])), 1);
    let help = ok(rfa_doc(cwd, &["train", "--help"]));
    assert!(stdout(&help).contains("--steps"));
}

#[test]
fn default_output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let mut args = vec!["gen-data"];
    args.extend(SMALL_DATA);
    ok(rfa_doc(cwd, &args));
    assert!(cwd.join("envout/data/train.src").exists());
}

#[test]
fn zero_steps_saves_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(gen(cwd, "data", &[]));
    ok(train(cwd, "data", "m.ckpt", &["--steps", "0", "--variant", "rfa-sgate", "--seed", "5"]));
    let ck = checkpoint::load(&cwd.join("m.ckpt")).unwrap();
    assert_eq!(ck.model.config.d_model, 8);
    assert_eq!(ck.model.config.master_seed, 5);
    assert_eq!(ck.vocab.as_ref().map(|v| v.len()), Some(ck.model.config.vocab_size));
    let fresh = Model::new(ck.model.config.clone()).unwrap();
    assert_eq!(fresh.params, ck.model.params);
    assert_eq!(code(&train(cwd, "data", "m.ckpt", &["--steps", "0"])), 2);
}

#[test]
fn flags_override_config_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(gen(cwd, "data", &[]));
    std::fs::write(cwd.join("run.cfg"), "# tiny run\ntrain.steps = 0\nmodel.d_ff = 12\nmodel.d_model = 12\n").unwrap();
    ok(train(cwd, "data", "m.ckpt", &["--config", "run.cfg"]));
    let ck = checkpoint::load(&cwd.join("m.ckpt")).unwrap();
    assert_eq!(ck.model.config.d_model, 8);
    assert_eq!(ck.model.config.d_ff, 8);

    std::fs::write(cwd.join("bad.cfg"), "train.nope = 1\n").unwrap();
    assert_eq!(code(&train(cwd, "data", "n.ckpt", &["--config", "bad.cfg"])), 1);
}

#[test]
fn training_translation_and_consistency_run_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(gen(cwd, "data", &["--task", "agree", "--items", "20"]));
    let o = ok(train(
        cwd,
        "data",
        "m.ckpt",
        &["--steps", "20", "--eval-every", "10", "--variant", "rfa-sgate", "--L", "2"],
    ));
    assert!(!stdout(&o).is_empty());
    let curve = std::fs::read_to_string(cwd.join("m.loss.csv")).unwrap();
    assert!(curve.starts_with("step,lr,train_loss,dev_loss"));
    assert_eq!(curve.lines().count(), 21);

    let translate = |extra: &[&str], output: &str| {
        let mut args = vec!["translate", "--checkpoint", "m.ckpt", "--data", "data", "--L", "2", "--max-len", "12"];
        args.extend(["--output", output]);
        args.extend(extra);
        ok(rfa_doc(cwd, &args))
    };
    let greedy = translate(&["--greedy"], "greedy.txt");
    assert!(stdout(&greedy).contains("BLEU"));
    translate(&["--beam", "1"], "beam1.txt");
    assert_eq!(
        std::fs::read(cwd.join("greedy.txt")).unwrap(),
        std::fs::read(cwd.join("beam1.txt")).unwrap()
    );

    let eval = ok(rfa_doc(cwd, &["eval-consistency", "--checkpoint", "m.ckpt", "--data", "data", "--L", "1,2"]));
    assert_eq!(stdout(&eval).lines().filter(|l| l.contains("accuracy")).count(), 2);
}

#[test]
fn bench_writes_a_row_per_cell_and_asserts_laws() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(gen(cwd, "data", &[]));
    ok(train(cwd, "data", "m.ckpt", &["--steps", "0"]));
    let bench = |extra: &[&str]| {
        let mut args = vec![
            "bench",
            "--checkpoint",
            "m.ckpt",
            "--L",
            "1,2",
            "--backends",
            "exact,rfa",
            "--batch-divisor",
            "100000",
            "--tokens-per-sentence",
            "3",
            "--profile-prefixes",
            "4,8",
            "--force",
        ];
        args.extend(extra);
        rfa_doc(cwd, &args)
    };
    ok(bench(&["--output", "bench.csv"]));
    let csv = std::fs::read_to_string(cwd.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let failed = bench(&["--output", "inflated.csv", "--assert", "--inflate-latency", "rfa=200000"]);
    assert_eq!(code(&failed), 3, "{}", stdout(&failed));
    assert_eq!(code(&bench(&["--inflate-latency", "nonsense"])), 1);
}
