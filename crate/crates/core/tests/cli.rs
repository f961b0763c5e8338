use std::path::Path;
use std::process::Command;

fn rjca(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_rjca")).args(args).output().expect("run rjca");
    assert!(
        out.status.success(),
        "rjca {args:?} failed:\n{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn key_values(text: &str) -> String {
    text.lines().filter(|l| l.contains(" = ")).collect::<Vec<_>>().join("\n")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_train_evaluate_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model.ckpt");
    let scores = dir.path().join("scores.txt");
    let epochs = dir.path().join("epochs");
    let log = dir.path().join("loss.txt");
    let cfg = dir.path().join("train.cfg");
    std::fs::write(&cfg, "hidden = 8\nasp_dim = 8\nembed_dim = 16\nepochs = 4\n# overridden below\nbatch_size = 4\n").unwrap();

    let out = rjca(&[
        "synth", "--out", s(&data), "--seed", "3",
        "--set", "speakers=10", "--set", "utterances_per_speaker=4", "--set", "test_speakers=4",
    ]);
    assert!(out.contains("seed 3"), "{out}");
    assert!(data.join("trials.txt").exists());

    let out = rjca(&[
        "train", "--data", s(&data), "--out", s(&ckpt), "--config", s(&cfg),
        "--set", "epochs=2", "--epoch-dir", s(&epochs), "--loss-log", s(&log),
    ]);
    assert!(out.contains("seed 0"), "{out}");
    assert_eq!(out.matches("epoch ").count(), 2, "{out}");
    assert!(epochs.join("epoch_001.ckpt").exists() && epochs.join("epoch_002.ckpt").exists());
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 2);
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(epochs.join("epoch_002.ckpt")).unwrap());

    let eval = rjca(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&data), "--scores", s(&scores)]);
    let uncached = rjca(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&data), "--no-cache"]);
    let metrics = rjca(&["metrics", "--scores", s(&scores)]);
    assert!(eval.contains("eer = "), "{eval}");
    assert_eq!(key_values(&eval), key_values(&metrics));
    assert_eq!(key_values(&eval), key_values(&uncached));

    let emb = dir.path().join("emb.txt");
    rjca(&["embed", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&emb)]);
    let text = std::fs::read_to_string(&emb).unwrap();
    assert_eq!(text.lines().count(), 40);
    assert_eq!(text.lines().next().unwrap().split_whitespace().count(), 17);
}

#[test]
fn gradcheck_passes() {
    let out = rjca(&["gradcheck"]);
    assert!(out.contains("full_model"), "{out}");
}

#[test]
fn bad_input_fails_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_rjca"))
        .args(["metrics", "--scores", "/nonexistent/scores.txt"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = Command::new(env!("CARGO_BIN_EXE_rjca"))
        .args(["synth", "--out", "/tmp/unused", "--set", "speakers"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
