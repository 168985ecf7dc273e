//! End-to-end runs of the `jemlab` binary on small generated datasets.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn jemlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jemlab")).args(args).env_remove("JEMLAB_THREADS").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[track_caller]
fn ok(args: &[&str]) -> String {
    let out = jemlab(args);
    assert_eq!(code(&out), 0, "jemlab {args:?} failed: {}", stderr(&out));
    stdout(&out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_mixture(dir: &Path) -> PathBuf {
    let d = dir.join("mix");
    ok(&["gen", "mixture2d", "--out", s(&d), "--seed", "3", "--set", "gen.points=300"]);
    d
}

fn gen_cue(dir: &Path) -> PathBuf {
    let d = dir.join("cue");
    ok(&[
        "gen", "cueconflict", "--out", s(&d), "--seed", "4",
        "--set", "gen.size=16", "--set", "gen.congruent=30", "--set", "gen.conflict=15",
    ]);
    d
}

/// A briefly trained image model and its checkpoint path.
fn image_checkpoint(dir: &Path, cue: &Path) -> PathBuf {
    let run = dir.join("img_run");
    ok(&[
        "train", "--data", s(cue), "--out", s(&run), "--seed", "1",
        "--set", "train.alpha=0", "--set", "train.iterations=5", "--set", "train.warmup=0", "--set", "train.batch_size=8",
    ]);
    run.join("checkpoint.jemc")
}

/// `bytes sha256` columns of a manifest, without the paths.
fn digests(manifest: &str) -> Vec<String> {
    manifest.lines().map(|l| l.split('\t').skip(1).collect::<Vec<_>>().join(" ")).collect()
}

#[test]
fn gen_repeats_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    for kind in ["mixture2d", "cueconflict", "softlabels", "perceptual", "probeset"] {
        let small = ["--set", "gen.points=200", "--set", "gen.size=16", "--set", "gen.congruent=12", "--set", "gen.conflict=6"];
        let mut run = |sub: &str| {
            let d = tmp.path().join(kind).join(sub);
            let mut args = vec!["gen", kind, "--out", s(&d), "--seed", "9"];
            args.extend(small);
            ok(&args)
        };
        let (a, b) = (run("a"), run("b"));
        assert!(!a.is_empty(), "{kind} wrote no files");
        assert_eq!(digests(&a), digests(&b), "{kind} differs between runs");
    }
}

#[test]
fn gen_rejects_unknown_kind() {
    let tmp = TempDir::new().unwrap();
    let out = jemlab(&["gen", "spirals", "--out", s(tmp.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("mixture2d"), "should list valid kinds: {}", stderr(&out));
}

#[test]
fn gen_into_unwritable_location_is_io_error() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("plain_file");
    fs::write(&file, b"x").unwrap();
    let out = jemlab(&["gen", "mixture2d", "--out", s(&file.join("sub"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = jemlab(&["gen", "mixture2d", "--out", s(tmp.path()), "--set", "gen.bogus=1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_logs_every_iteration() {
    let tmp = TempDir::new().unwrap();
    let mix = gen_mixture(tmp.path());
    let run = tmp.path().join("run");
    ok(&[
        "train", "--data", s(&mix), "--out", s(&run), "--seed", "2",
        "--set", "train.alpha=0.5", "--set", "train.iterations=200", "--set", "train.warmup=10",
        "--set", "train.batch_size=16", "--set", "sgld.steps=5",
    ]);
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 201);
    assert!(log.starts_with("iter,"));
    assert!(run.join("checkpoint.jemc").is_file());
    assert!(run.join("config.txt").is_file());
}

#[test]
fn train_without_dataset_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = jemlab(&["train", "--data", s(&tmp.path().join("missing")), "--out", s(&tmp.path().join("run"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn train_with_absurd_noise_reports_divergence() {
    let tmp = TempDir::new().unwrap();
    let mix = gen_mixture(tmp.path());
    let run = tmp.path().join("run");
    let out = jemlab(&[
        "train", "--data", s(&mix), "--out", s(&run),
        "--set", "train.alpha=1", "--set", "train.iterations=20", "--set", "train.warmup=0",
        "--set", "sgld.coupling=decoupled", "--set", "sgld.noise=1e308", "--set", "sgld.clip=none",
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("non-finite") || stderr(&out).contains("diverge"), "{}", stderr(&out));
    // the last finite state is still written
    assert!(run.join("checkpoint.jemc").is_file());
}

#[test]
fn sweep_with_one_alpha_makes_one_run() {
    let tmp = TempDir::new().unwrap();
    let mix = gen_mixture(tmp.path());
    let root = tmp.path().join("sweep");
    ok(&[
        "sweep", "--alphas", "0.5", "--data", s(&mix), "--out", s(&root),
        "--set", "train.iterations=20", "--set", "train.warmup=0", "--set", "sgld.steps=3",
    ]);
    let runs: Vec<_> = fs::read_dir(&root)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir() && e.file_name().to_string_lossy().starts_with("alpha_"))
        .collect();
    assert_eq!(runs.len(), 1);
    assert!(root.join("sweep_metrics.csv").is_file());
    assert!(runs[0].path().join("config.txt").is_file());
}

#[test]
fn eval_shape_bias_is_a_fraction_and_repeats() {
    let tmp = TempDir::new().unwrap();
    let cue = gen_cue(tmp.path());
    let ck = image_checkpoint(tmp.path(), &cue);
    let run = |sub: &str| {
        let out = tmp.path().join(sub);
        ok(&[
            "eval", "--checkpoint", s(&ck), "--metrics", "shape_bias", "--out", s(&out),
            "--set", &format!("eval.cueconflict={}", s(&cue)),
        ]);
        fs::read_to_string(out.join("metrics.csv")).unwrap()
    };
    let (a, b) = (run("eval_a"), run("eval_b"));
    assert_eq!(a, b);
    // alpha,seed,dataset,metric,value,status,reference
    let row: Vec<&str> = a.lines().find(|l| l.contains(",shape_bias,")).expect("shape_bias row").split(',').collect();
    match row[5] {
        "ok" => {
            let v: f64 = row[4].parse().unwrap();
            assert!((0.0..=1.0).contains(&v), "shape bias {v}");
        }
        // a model that matches neither cue on every image has no shape bias
        status => assert!(status.trim_start_matches('"').starts_with("undefined"), "unexpected status {status}"),
    }
}

#[test]
fn eval_rejects_empty_metric_list() {
    let tmp = TempDir::new().unwrap();
    let cue = gen_cue(tmp.path());
    let ck = image_checkpoint(tmp.path(), &cue);
    let out = jemlab(&["eval", "--checkpoint", s(&ck), "--metrics", "", "--out", s(&tmp.path().join("e"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn sample_without_steps_writes_initial_images() {
    let tmp = TempDir::new().unwrap();
    let cue = gen_cue(tmp.path());
    let ck = image_checkpoint(tmp.path(), &cue);
    let run = |sub: &str| {
        let out = tmp.path().join(sub);
        let manifest = ok(&["sample", "--checkpoint", s(&ck), "--count", "4", "--steps", "0", "--out", s(&out), "--seed", "5"]);
        (out, manifest)
    };
    let (dir, a) = run("s_a");
    let (_, b) = run("s_b");
    assert_eq!(digests(&a), digests(&b));
    let mut names: Vec<String> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["sample_000_step_0000.pgm", "sample_001_step_0000.pgm", "sample_002_step_0000.pgm", "sample_003_step_0000.pgm"]);
    let pgm = fs::read(dir.join(&names[0])).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(pgm.len(), b"P5\n16 16\n255\n".len() + 256);
}

#[test]
fn refine_writes_one_row_per_step_count() {
    let tmp = TempDir::new().unwrap();
    let cue = gen_cue(tmp.path());
    let ck = image_checkpoint(tmp.path(), &cue);
    for (steps, rows) in [("0", 1), ("0,5,10,20", 4)] {
        let out = tmp.path().join(format!("refine_{rows}"));
        ok(&["refine", "--checkpoint", s(&ck), "--data", s(&cue), "--steps", steps, "--out", s(&out)]);
        let csv = fs::read_to_string(out.join("refine_shape_bias.csv")).unwrap();
        let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(body.len(), rows, "{csv}");
        assert!(body[0].starts_with("0,"));
    }
}

#[test]
fn oracle_check_on_toy_passes() {
    let tmp = TempDir::new().unwrap();
    let text = ok(&["oracle-check", "--out", s(tmp.path())]);
    assert!(text.contains("z_relative_error"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn oracle_check_catches_flipped_gradient() {
    let tmp = TempDir::new().unwrap();
    let mix = gen_mixture(tmp.path());
    let run = tmp.path().join("untrained");
    ok(&["train", "--data", s(&mix), "--out", s(&run), "--set", "train.iterations=0", "--set", "train.warmup=0", "--set", "data.holdout=0"]);
    let ck = run.join("checkpoint.jemc");
    let common = ["oracle-check", "--checkpoint", s(&ck), "--data", s(&mix), "--set", "oracle.chains=300"];
    ok(&common);
    let mut flipped = common.to_vec();
    flipped.extend(["--set", "oracle.fault=sign_flip"]);
    let out = jemlab(&flipped);
    assert_eq!(code(&out), 5, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("cd_cosine"));
}

#[test]
fn zero_thread_cap_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_jemlab"))
        .args(["gen", "mixture2d", "--out", s(tmp.path())])
        .env("JEMLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
