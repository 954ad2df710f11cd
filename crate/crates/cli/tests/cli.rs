use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use umo_core::dataset::{read_dataset, read_index};

const MICRO: [&str; 12] =
    ["--hidden", "8", "--layers", "1", "--heads", "2", "--ffn_mult", "2", "--text_layers", "1", "--text_dim", "8"];

fn umo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umo")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = umo(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    umo(dir, args).status.code().expect("exited normally")
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

const SMALL: [&str; 12] =
    ["--traj_l1", "2", "--traj_l2", "3", "--traj_l3", "3", "--obs_l1", "1", "--obs_l2", "2", "--obs_l3", "2"];

fn datagen(dir: &Path, out: &str) {
    let mut args = vec!["datagen", "--out", out];
    args.extend(SMALL);
    ok(dir, &args);
}

#[test]
fn datagen_replays_byte_identically_and_loads() {
    let tmp = tempfile::tempdir().unwrap();
    datagen(tmp.path(), "a");
    datagen(tmp.path(), "b");
    let (mut a, mut b) = (tree(&tmp.path().join("a")), tree(&tmp.path().join("b")));
    assert!(a.contains_key("stats.json"));
    // the echoed configs differ only in `out`
    assert!(a.remove("config.txt").is_some() && b.remove("config.txt").is_some());
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    assert!(a == b, "dataset trees differ");
    for set in ["trajectory", "obstacle", "edit", "reaction"] {
        let dir = tmp.path().join("a").join(set);
        let index = read_index(&dir).unwrap();
        assert_eq!(read_dataset(&dir).unwrap().len(), index.len());
        assert!(!index.is_empty(), "{set}");
    }
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    datagen(d, "data");
    let mut train = vec!["train", "--steps", "4", "--batch", "2", "--lr", "1e-3"];
    train.extend(MICRO);
    ok(d, &train);
    assert!(d.join("runs/pretrain/model.umoc").exists());
    assert_eq!(fs::read_to_string(d.join("runs/pretrain/loss.csv")).unwrap().lines().count(), 5);
    ok(d, &["finetune", "--steps", "3", "--batch", "2", "--tasks", "keyframe_infill,traj_follow,obstacle_avoid,edit"]);

    let sample = |out: &str| {
        ok(d, &["sample", "--task", "keyframe_infill", "--stride", "30", "--seed", "1", "--sample_steps", "4", "--out", out]);
        tree(&d.join(out))
    };
    let (mut s1, mut s2) = (sample("s1"), sample("s2"));
    s1.remove("config.txt");
    s2.remove("config.txt");
    assert_eq!(s1.len(), 1);
    assert!(s1 == s2, "sampled motions differ");

    let table = ok(d, &["eval", "--tasks", "keyframe_infill,obstacle_avoid", "--sample_steps", "3", "--count", "2"]);
    assert!(table.contains("keyframe_infill") && table.contains("obstacle_avoid"));
    assert!(d.join("eval/report.csv").exists());
}

#[test]
fn ground_truth_evaluation_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    datagen(d, "data");
    ok(d, &["eval", "--producer", "ground_truth", "--out", "gt"]);
    let csv = fs::read_to_string(d.join("gt/report.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        for col in [4, 5] {
            if !f[col].is_empty() {
                assert_eq!(f[col].parse::<f64>().unwrap(), 0.0, "{line}");
            }
        }
        // frames sit on the curve up to the generator's arc-length inversion
        if !f[6].is_empty() {
            assert!(f[6].parse::<f64>().unwrap() < 1e-4, "{line}");
        }
        if !f[7].is_empty() {
            assert_eq!(f[7].parse::<f64>().unwrap(), 1.0, "{line}");
        }
        rows += 1;
    }
    assert_eq!(rows, 8);
}

#[test]
fn ablate_reports_the_ordered_overhead_table() {
    let tmp = tempfile::tempdir().unwrap();
    let table = ok(tmp.path(), &["ablate", "--latency_runs", "0"]);
    let archs: Vec<&str> = table.lines().skip(1).filter_map(|l| l.split_whitespace().next()).collect();
    assert_eq!(archs, ["temporal_fusion", "seq_concat", "adaln", "controlnet"]);
    // one attention head per layer cannot carry the sequence-concatenation cost past ControlNet
    let mut bad = vec!["ablate", "--latency_runs", "0", "--frames", "2", "--text_rows", "1"];
    bad.extend(MICRO);
    assert_eq!(code(tmp.path(), &bad), 3);
}

#[test]
fn config_file_and_echo_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.cfg"), "# small run\nout = from_file\ntraj_l1 = 1\ntraj_l2 = 0\ntraj_l3 = 0\nobs_l1 = 1\nobs_l2 = 0\nobs_l3 = 0\n").unwrap();
    ok(d, &["--config", "run.cfg", "datagen", "--seed", "5"]);
    let echo = fs::read_to_string(d.join("from_file/config.txt")).unwrap();
    assert!(echo.contains("seed = 5") && echo.contains("traj_l1 = 1"));
    fs::write(d.join("echo.cfg"), &echo).unwrap();
    fs::rename(d.join("from_file"), d.join("first")).unwrap();
    ok(d, &["--config", "echo.cfg", "datagen"]);
    assert!(tree(&d.join("first")) == tree(&d.join("from_file")));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let version = ok(d, &["--version"]);
    assert!(version.contains("UMOM v1") && version.contains("UMOC v1"));
    assert_eq!(code(d, &[]), 2);
    assert_eq!(code(d, &["bogus"]), 2);
    assert_eq!(code(d, &["datagen", "--no_such_key", "1"]), 2);
    assert_eq!(code(d, &["datagen", "--seed"]), 2);
    assert_eq!(code(d, &["--threads", "0", "ablate"]), 2);
    assert_eq!(code(d, &["datagen", "--seed", "abc"]), 3);
    assert_eq!(code(d, &["datagen", "--template", "fancy"]), 3);
    assert_eq!(code(d, &["sample", "--ckpt", "missing.umoc"]), 1);

    datagen(d, "data");
    let mut blowup = vec!["--deterministic", "train", "--steps", "3", "--batch", "2", "--lr", "1e300"];
    blowup.extend(MICRO);
    assert_eq!(code(d, &blowup), 4);
    let mut train = vec!["train", "--steps", "1", "--batch", "2"];
    train.extend(MICRO);
    ok(d, &train);
    assert_eq!(code(d, &["finetune", "--steps", "1", "--arch", "transformer"]), 3);
    assert_eq!(code(d, &["sample", "--ckpt", "runs/pretrain/model.umoc", "--task", "dance"]), 3);
}
