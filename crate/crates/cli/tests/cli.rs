use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "clip_seconds=0.5",
    "--set",
    "image_size=16",
    "--set",
    "n_freq_bins=64",
    "--set",
    "hidden=8",
    "--set",
    "batch_size=4",
];

fn wvdnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wvdnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = wvdnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL.iter().copied()).collect()
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "synth",
            "--seed",
            "7",
            "--set",
            "synth_clips_per_class=50",
            "--out",
            d.to_str().unwrap(),
        ]);
    }
    let files = files_under(&a);
    assert_eq!(files.len(), 150);
    assert_eq!(files, files_under(&b));
    let dirs: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(dirs.len(), 3);
}

#[test]
fn preprocess_store_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");
    ok(&with_small(&[
        "synth",
        "--set",
        "synth_clips_per_class=3",
        "--out",
        data.to_str().unwrap(),
    ]));
    let root = format!("dataset_root={}", data.display());
    let args = with_small(&["preprocess", "--set", &root, "--out", out.to_str().unwrap()]);
    let first = ok(&args);
    assert!(first.contains("wrote 9 arrays"), "{first}");
    let store = out.join("store");
    let arrays = fs::read_dir(store.join("arrays")).unwrap().count();
    assert_eq!(arrays, 9);
    let index = fs::read_to_string(store.join("index.csv")).unwrap();
    let labels: std::collections::BTreeSet<&str> = index
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(labels.len(), 3);

    let before = files_under(&store);
    let second = ok(&args);
    assert!(second.contains("up to date"), "{second}");
    assert_eq!(files_under(&store), before);
}

#[test]
fn missing_dataset_root_fails_without_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = wvdnet(&[
        "preprocess",
        "--set",
        "dataset_root=/nonexistent/wvdnet-data",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.join("store/index.csv").exists());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(
        wvdnet(&["train", "--set", "epoch=3"]).status.code(),
        Some(1)
    );
    assert_eq!(wvdnet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        wvdnet(&["train", "--set", "batch_size=0"]).status.code(),
        Some(1)
    );
    assert_eq!(wvdnet(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_then_set_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    fs::write(&path, "# base\nepochs = 7\nseed = 1\nhidden = 32\n").unwrap();
    let text = ok(&[
        "show-config",
        "--config",
        path.to_str().unwrap(),
        "--set",
        "hidden=64",
        "--seed",
        "9",
    ]);
    assert!(text.contains("epochs = 7\n"));
    assert!(text.contains("hidden = 64\n"));
    assert!(text.contains("seed = 9\n"));
    fs::write(&path, "colour = blue\n").unwrap();
    assert_eq!(
        wvdnet(&["show-config", "--config", path.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn train_evaluate_stream_export() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");
    let root = format!("dataset_root={}", data.display());
    let out_s = out.to_str().unwrap();
    ok(&with_small(&[
        "synth",
        "--set",
        "synth_clips_per_class=1",
        "--set",
        "synth_classes=2",
        "--out",
        data.to_str().unwrap(),
    ]));
    let common = with_small(&[
        "--set",
        &root,
        "--out",
        out_s,
        "--set",
        "eval_set=train",
        "--seed",
        "3",
    ]);
    let run = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend(&common);
        args.extend(extra);
        ok(&args)
    };

    run("preprocess", &[]);
    run("train", &["--set", "epochs=0"]);
    assert!(out.join("model.wvdn").exists());
    assert_eq!(
        fs::read_to_string(out.join("history.csv")).unwrap(),
        "epoch,train_loss,train_accuracy,eval_accuracy\n"
    );

    run(
        "train",
        &[
            "--set",
            "epochs=60",
            "--set",
            "learning_rate=0.01",
            "--set",
            "dropout=0",
        ],
    );
    let report = run("evaluate", &[]);
    let accuracy = report
        .lines()
        .find(|l| l.trim_start().starts_with("accuracy"))
        .unwrap();
    assert!(accuracy.contains("1.00"), "{report}");
    let json = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(json.contains("\"accuracy\": 1.0"), "{json}");

    let wav = dir.path().join("long.wav");
    let samples: Vec<i16> = (0..80_000)
        .map(|i| ((i as f64 * 0.4).sin() * 8000.0) as i16)
        .collect();
    fs::write(&wav, pcm16_wav(&samples, 8000)).unwrap();
    let csv = dir.path().join("pred.csv");
    run(
        "stream",
        &[wav.to_str().unwrap(), "--csv", csv.to_str().unwrap()],
    );
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 7);
    assert!(text.starts_with("start_s,end_s,pred_class,pred_name,p0,p1\n"));

    let png = dir.path().join("clip.png");
    let clip = fs::read_dir(data.join("0_tone"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    run("export", &[clip.to_str().unwrap(), png.to_str().unwrap()]);
    assert!(fs::read(&png).unwrap().starts_with(b"\x89PNG\r\n\x1a\n"));
    let bad = wvdnet(&[
        "stream",
        dir.path().join("missing.wav").to_str().unwrap(),
        "--out",
        out_s,
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

fn pcm16_wav(samples: &[i16], rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&rate.to_le_bytes());
    b.extend_from_slice(&(rate * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        b.extend_from_slice(&s.to_le_bytes());
    }
    b
}
