use std::path::Path;
use std::process::{Command, Output};

use pdanet_core::io::{hash_tree, read_manifest, MANIFEST_FILE};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_pdanet");

/// Settings small enough for a few seconds per command.
const TINY: &[&str] = &[
    "--preset",
    "desk",
    "--set",
    "physics.pixels=32",
    "--set",
    "data.count=3",
    "--set",
    "data.test_count=2",
    "--set",
    "train.epochs=1",
    "--set",
    "train.channels_base=8",
    "--set",
    "train.residual_blocks=1",
];

fn pdanet(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).env("RUST_LOG", "warn").args(&args[..1]).args(TINY).args(&args[1..]).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pdanet(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn manifest_len(dir: &Path) -> usize {
    read_manifest(&dir.join(MANIFEST_FILE)).unwrap().len()
}

fn has_echo(dir: &Path) -> bool {
    dir.join("config.toml").is_file() && dir.join("provenance.json").is_file()
}

#[test]
fn simulate_is_deterministic_and_seeded() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--out", "a"]);
    ok(d, &["simulate", "--out", "b"]);
    ok(d, &["simulate", "--out", "c", "--seed", "9"]);
    assert_eq!(manifest_len(&d.join("a")), 5);
    assert!(has_echo(&d.join("a")));
    assert!(d.join("a/scenes.jsonl").is_file());
    let h = |p: &str| hash_tree(&d.join(p), &[]).unwrap();
    assert_eq!(h("a"), h("b"));
    assert_ne!(h("a"), h("c"));
}

#[test]
fn count_flag_overrides_the_configuration() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--out", "s", "--count", "4"]);
    assert_eq!(manifest_len(&tmp.path().join("s")), 6);
    let echo = std::fs::read_to_string(tmp.path().join("s/config.toml")).unwrap();
    assert!(echo.contains("count = 4"));
}

#[test]
fn configuration_layers_preset_file_and_set() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("run.toml"), "[physics]\npixels = 16\n[data]\ncount = 2\ntest_count = 1\n").unwrap();
    let run = |extra: &[&str]| {
        let out = Command::new(BIN).current_dir(d).args(["simulate", "--preset", "desk", "--config", "run.toml"]).args(extra).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["--out", "f"]);
    assert_eq!(manifest_len(&d.join("f")), 3);
    run(&["--set", "data.count=1", "--out", "g"]);
    assert_eq!(manifest_len(&d.join("g")), 2);
    let echo = std::fs::read_to_string(d.join("g/config.toml")).unwrap();
    assert!(echo.contains("pixels = 16") && echo.contains("count = 1"), "{echo}");
    assert!(echo.contains("epochs = 5"), "desk preset underneath");
}

#[test]
fn invalid_input_exits_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = pdanet(d, &["simulate", "--set", "physics.mu=-1.0", "--set", "physics.omega=0.5", "--out", "x"]);
    assert_eq!(code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("physics.mu"), "{msg}");
    assert!(!d.join("x").exists());

    let out = pdanet(d, &["simulate", "--set", "physics.nonsense=1", "--out", "x"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("physics.nonsense"));

    let out = pdanet(d, &["simulate", "--set", "train.batch=0", "--out", "x"]);
    assert_eq!(code(&out), 2);

    assert_eq!(code(&pdanet(d, &["frobnicate"])), 2);
    assert_eq!(code(&pdanet(d, &["evaluate", "--input", "missing", "--out", "e"])), 2);
    std::fs::write(d.join("bad.toml"), "[physics\n").unwrap();
    assert_eq!(code(&pdanet(d, &["simulate", "--config", "bad.toml", "--out", "x"])), 2);
}

#[test]
fn pipeline_from_simulation_to_scores() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--out", "clean"]);
    ok(d, &["degrade", "--input", "clean", "--out", "blurry"]);
    ok(d, &["degrade", "--input", "clean", "--out", "exp", "--domain", "exp"]);
    for p in ["blurry", "exp"] {
        assert!(has_echo(&d.join(p)));
        assert_eq!(manifest_len(&d.join(p)), 5);
    }
    ok(d, &["augment", "--input", "blurry", "--out", "aug", "--set", "data.augment.per_image=4"]);
    assert_eq!(manifest_len(&d.join("aug")), 3 * 4 + 2);

    let out = pdanet(d, &["train", "--clean", "clean", "--blurry", "blurry", "--out", "t"]);
    assert_eq!(code(&out), 2, "the experimental branch needs --exp");
    ok(d, &["train", "--clean", "clean", "--blurry", "blurry", "--exp", "exp", "--out", "t"]);
    for f in ["config.toml", "provenance.json", "epochs.jsonl", "train_log.jsonl", "timing.json", "checkpoint"] {
        assert!(d.join("t").join(f).exists(), "{f}");
    }
    assert_eq!(code(&pdanet(d, &["train", "--clean", "clean", "--blurry", "blurry", "--exp", "exp", "--out", "t"])), 2);

    ok(d, &["denoise", "--checkpoint", "t/checkpoint", "--input", "blurry", "--out", "den", "--split", "test"]);
    assert_eq!(manifest_len(&d.join("den")), 2);
    ok(d, &["denoise", "--checkpoint", "t/checkpoint", "--input", "exp", "--out", "den_exp", "--which", "GDA"]);
    assert_eq!(manifest_len(&d.join("den_exp")), 5);
    assert_eq!(code(&pdanet(d, &["denoise", "--checkpoint", "clean", "--input", "exp", "--out", "x"])), 2);

    let full = ok(d, &["evaluate", "--input", "den", "--reference", "clean", "--out", "e1"]);
    assert!(full.contains("PSNR") && full.contains("SSIM") && !full.contains("PIQE"), "{full}");
    let none = ok(d, &["evaluate", "--input", "den_exp", "--out", "e2"]);
    assert!(none.contains("BRISQUE") && none.contains("PIQE") && !none.contains("PSNR"), "{none}");
    for e in ["e1", "e2"] {
        assert!(d.join(e).join("report.json").is_file());
        assert!(has_echo(&d.join(e)));
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("e1/report.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("clear_test_00001"));
}

#[test]
fn cycle_gan_only_training_needs_no_experimental_set() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["prepare", "--out", "d"]);
    ok(d, &["train", "--set", "train.weights.lambda_da=0", "--set", "train.weights.lambda_fa=0", "--clean", "d/clean", "--blurry", "d/blurry", "--out", "t"]);
    let out = pdanet(d, &["denoise", "--checkpoint", "t/checkpoint", "--input", "d/exp", "--out", "x", "--which", "GDA"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn measured_folder_feeds_the_experimental_domain() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--out", "s", "--count", "4", "--seed", "5"]);
    let measured = d.join("measured");
    std::fs::create_dir(&measured).unwrap();
    for e in std::fs::read_dir(d.join("s/previews")).unwrap() {
        let p = e.unwrap().path();
        std::fs::copy(&p, measured.join(p.file_name().unwrap())).unwrap();
    }
    ok(d, &["prepare", "--set", "data.exp_dir=\"measured\"", "--set", "data.exp_test=2", "--set", "data.augment.per_image=3", "--out", "p"]);
    let recs = read_manifest(&d.join("p/exp").join(MANIFEST_FILE)).unwrap();
    let tests = recs.iter().filter(|r| r.split.to_string() == "test").count();
    assert_eq!(tests, 2);
    assert_eq!(recs.len() - tests, 4 * 3);
    let out = pdanet(d, &["prepare", "--set", "data.exp_dir=\"measured\"", "--set", "data.exp_test=6", "--out", "q"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn resume_continues_to_the_requested_epochs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["prepare", "--out", "d"]);
    let train = ["train", "--clean", "d/clean", "--blurry", "d/blurry", "--exp", "d/exp"];
    ok(d, &[&train[..], &["--out", "straight", "--set", "train.epochs=2"]].concat());
    ok(d, &[&train[..], &["--out", "split"]].concat());
    ok(d, &[&train[..], &["--out", "split", "--set", "train.epochs=2", "--resume"]].concat());
    let read = |p: &str| std::fs::read_to_string(d.join(p)).unwrap();
    assert_eq!(read("straight/epochs.jsonl"), read("split/epochs.jsonl"));
    assert_eq!(read("straight/train_log.jsonl"), read("split/train_log.jsonl"));
    let out = pdanet(d, &[&train[..], &["--out", "split", "--set", "train.lr=0.001", "--resume"]].concat());
    assert_eq!(code(&out), 2);
}

#[test]
fn ablation_reports_four_variants() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let table = ok(d, &["ablate", "--out", "ab"]);
    for name in ["CycleGAN", "CycleGAN+DA", "CycleGAN+DA+WS", "PDA-Net", "(inputs)"] {
        assert!(table.lines().any(|l| l.starts_with(&format!("{name} "))), "{name} missing from\n{table}");
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("ab/ablation.json")).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        for k in ["mse", "psnr", "ssim"] {
            assert!(r["simulated"][k].as_f64().is_some_and(f64::is_finite), "{r}");
        }
        for k in ["brisque", "piqe"] {
            assert!(r["experimental"][k].as_f64().is_some_and(f64::is_finite), "{r}");
        }
    }
    assert_eq!(rows[0]["exp_generator"], "GD");
    assert_eq!(rows[3]["exp_generator"], "GDA");
    assert!(has_echo(&d.join("ab")));
}
