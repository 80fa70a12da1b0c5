use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use snn_temporal::data::{write_canonical_file, Manifest, SpikeFrames};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snn-temporal"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn help_and_bad_flags() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&run(tmp.path(), &["train", "--no-such-flag"])), 1);
    assert_eq!(code(&run(tmp.path(), &["train"])), 1);
    assert_eq!(code(&run(tmp.path(), &["train", "--synthetic", "--arch", "64,3,4", "--lr", "-1"])), 1);
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"epoch": 2}"#).unwrap();
    assert_eq!(code(&run(tmp.path(), &["--config", "c.json", "train", "--synthetic"])), 1);
}

#[test]
fn zero_epochs_only_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["train", "--synthetic", "--epochs", "0", "--out", "run"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("accuracy"));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn config_sets_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"synthetic": true, "epochs": 1, "out": "cfg"}"#).unwrap();
    assert_eq!(code(&run(tmp.path(), &["--config", "c.json", "train", "--epochs", "2"])), 0);
    let history = fs::read_to_string(tmp.path().join("cfg/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
}

#[test]
fn train_eval_sweep_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&run(dir, &["train", "--synthetic", "--epochs", "2", "--out", "t"])), 0);
    for f in ["checkpoint.snnc", "history.csv", "metrics.json"] {
        assert!(dir.join("t").join(f).exists(), "{f}");
    }
    let o = run(dir, &["eval", "--synthetic", "--checkpoint", "t/checkpoint.snnc", "--variant", "hard_reset"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("hard_reset"));

    let o = run(
        dir,
        &["sweep", "--synthetic", "--checkpoint", "t/checkpoint.snnc", "--bits", "4,5,8", "--dev", "0:0.2:0.1", "--trials", "2", "--out", "s"],
    );
    assert_eq!(code(&o), 0);
    let rows = fs::read_to_string(dir.join("s/sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 3 * 2);
    assert!(rows.starts_with("bits,deviation,trial,accuracy"));

    // resuming requires the checkpoint's architecture
    let o = run(dir, &["train", "--synthetic", "--arch", "64,32,4", "--checkpoint", "t/checkpoint.snnc", "--epochs", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("layer 0"));

    fs::write(dir.join("bad.snnc"), b"SNNC\x01\x00").unwrap();
    assert_eq!(code(&run(dir, &["eval", "--synthetic", "--checkpoint", "bad.snnc"])), 2);
}

#[test]
fn associate_writes_rasters() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["associate", "--synthetic", "--epochs", "1", "--out", "a"]);
    assert_eq!(code(&o), 0);
    let out = fs::read_to_string(tmp.path().join("a/rasters/pattern_000_output.csv")).unwrap();
    assert!(out.starts_with("time,train_index,value"));
    assert_eq!(out.lines().count(), 1 + 100 * 32);
    assert!(tmp.path().join("a/rasters/pattern_019_target.csv").exists());
}

#[test]
fn gradcheck_exit_status_follows_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(tmp.path(), &["gradcheck", "--samples", "40"])), 0);
    assert_eq!(code(&run(tmp.path(), &["gradcheck", "--samples", "40", "--tolerance", "1e-14"])), 3);
}

#[test]
fn circuit_demo_suppresses_second_spike() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["circuit", "--demo", "--stride", "10", "--out", "c"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("analog output steps: [[0]]"));
    let wave = fs::read_to_string(tmp.path().join("c/waveform.csv")).unwrap();
    assert!(wave.starts_with("time_s,k,g,h,threshold,cmp_out"));
    assert_eq!(code(&run(tmp.path(), &["circuit", "--sim-dt", "5e-9"])), 1);
}

#[test]
fn convert_keeps_good_files_and_reports_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    fs::create_dir_all(raw.join("3")).unwrap();
    fs::write(raw.join("3/good.bin"), [1u8, 2, 0x80, 0, 5]).unwrap();
    fs::write(raw.join("3/bad.bin"), [1u8, 2, 0x80]).unwrap();
    let o = run(tmp.path(), &["convert", "--source", "nmnist-dir", "--input", "raw", "--out", "conv"]);
    assert_eq!(code(&o), 2);
    let m = Manifest::load(tmp.path().join("conv/manifest.json")).unwrap();
    assert_eq!(m.num_channels, 2312);
    assert_eq!(m.samples.len(), 1);
    assert_eq!(m.samples[0].label, Some(3));
    assert!(tmp.path().join("conv/3/good.spke").exists());
}

#[test]
fn manifest_training_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    for (label, ch) in [(0usize, 0usize), (1, 3)] {
        fs::create_dir_all(raw.join(label.to_string())).unwrap();
        for i in 0..4 {
            let mut trains = vec![Vec::new(); 6];
            trains[ch] = vec![i, i + 5];
            let frames = SpikeFrames::from_spike_times(20, &trains).unwrap();
            write_canonical_file(raw.join(format!("{label}/s{i}.spke")), &frames.to_events(1).unwrap()).unwrap();
        }
    }
    let o = run(tmp.path(), &["convert", "--source", "canonical", "--input", "raw", "--out", "conv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(
        tmp.path(),
        &[
            "train", "--train-manifest", "conv/manifest.json", "--steps", "20", "--arch", "6,8,2", "--epochs", "3",
            "--batch-size", "4", "--out", "m",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(tmp.path().join("m/history.csv")).unwrap().lines().count(), 4);
    let o = run(tmp.path(), &["train", "--train-manifest", "conv/manifest.json", "--arch", "7,8,2", "--epochs", "1"]);
    assert_eq!(code(&o), 1);
}
