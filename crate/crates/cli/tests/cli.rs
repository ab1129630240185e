use std::path::Path;
use std::process::{Command, Output};

fn dgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgnn")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .to_string()
}

#[test]
fn perf_prints_published_figures() {
    let out = stdout(&dgnn(&["perf"]));
    assert_eq!(value(&out, "ops_per_cycle"), "1408");
    assert_eq!(value(&out, "tops_per_s"), "140.8");
    assert_eq!(value(&out, "ops_per_joule"), "1.408e16");
    assert_eq!(value(&out, "dpu_tops_per_s_per_mm2"), "305");
    assert!(!dgnn(&["perf", "--rate", "0"]).status.success());
}

#[test]
fn seed_is_required_for_train_and_sweep() {
    for cmd in [&["train"][..], &["sweep", "--axis", "k", "--values", "1"]] {
        let o = dgnn(cmd);
        assert!(!o.status.success());
        assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
    }
}

fn small_run(out: &Path, data: &Path) -> Vec<String> {
    [
        "--seed",
        "3",
        "--preset",
        "benchmark",
        "--data",
        data.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--heads",
        "2",
        "--k",
        "3",
        "--epochs",
        "10",
        "--set",
        "data.pca_dim=3",
        "--set",
        "data.n_test=20",
        "--set",
        "baselines.enabled=false",
        "--set",
        "model.head_geometry={num_layers=2, atoms_per_line=24, atom_pitch=3e-7, layer_distance=3e-6, wavelength=1.55e-6, effective_index=2.85, n_in=3, n_out=2, group_size=3, oversample=4, pad_factor=4, mode_halfwidth=5e-7}",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn generate_train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    let gen = stdout(&dgnn(&["gen-sbm", "--seed", "1", "--nodes", "60", "--out", bundle.to_str().unwrap()]));
    assert_eq!(value(&gen, "test"), "45");

    let ingested = dir.path().join("ingested");
    let ing = stdout(&dgnn(&[
        "ingest",
        "--seed",
        "2",
        "--input",
        bundle.to_str().unwrap(),
        "--out",
        ingested.to_str().unwrap(),
        "--n-test",
        "20",
    ]));
    assert_eq!(value(&ing, "test"), "20");

    let run = dir.path().join("run");
    let args = small_run(&run, &bundle);
    let args: Vec<&str> = std::iter::once("train").chain(args.iter().map(String::as_str)).collect();
    let out = stdout(&dgnn(&args));
    let acc: f64 = value(&out, "test_acc").parse().unwrap();
    for f in ["metrics.txt", "history.tsv", "confusion.tsv", "model.ckpt", "config.toml"] {
        assert!(run.join(f).exists(), "{f} missing");
    }

    let ckpt = run.join("model.ckpt");
    let feats = dir.path().join("features.csv");
    let exp = stdout(&dgnn(&[
        "export-features",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--graph",
        bundle.to_str().unwrap(),
        "--out",
        feats.to_str().unwrap(),
    ]));
    assert_eq!(value(&exp, "columns"), "5");
    let first = std::fs::read(&feats).unwrap();
    stdout(&dgnn(&[
        "export-features",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--graph",
        bundle.to_str().unwrap(),
        "--out",
        feats.to_str().unwrap(),
    ]));
    assert_eq!(std::fs::read(&feats).unwrap(), first);
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn eval_scores_a_checkpoint_on_its_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    stdout(&dgnn(&["gen-sbm", "--seed", "4", "--nodes", "60", "--out", bundle.to_str().unwrap()]));
    let run = dir.path().join("run");
    let out = stdout(&dgnn(&[
        "train",
        "--seed",
        "4",
        "--data",
        bundle.to_str().unwrap(),
        "--output",
        run.to_str().unwrap(),
        "--epochs",
        "15",
        "--k",
        "3",
        "--set",
        "data.source=\"bundle\"",
        "--set",
        "data.labels_per_class=5",
        "--set",
        "baselines.enabled=false",
    ]));
    let train_acc = value(&out, "test_acc");
    let ev = stdout(&dgnn(&[
        "eval",
        "--checkpoint",
        run.join("model.ckpt").to_str().unwrap(),
        "--graph",
        bundle.to_str().unwrap(),
    ]));
    assert_eq!(value(&ev, "evaluated"), "45");
    // gen-sbm and the run draw the 5-per-class split with the same seed.
    assert_eq!(value(&ev, "accuracy"), train_acc);
}

#[test]
fn gradcheck_passes() {
    let out = stdout(&dgnn(&["gradcheck", "--seed", "2", "--readout", "--encoding", "phase"]));
    let err: f64 = value(&out, "max_relative_error").parse().unwrap();
    assert!(err < 1e-4);
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nk = 2\n[data.sbm]\nn_nodes = 60\n[train]\nepochs = 3\n[baselines]\nenabled = false\n").unwrap();
    let run = dir.path().join("run");
    stdout(&dgnn(&[
        "train",
        "--seed",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--k",
        "5",
        "--output",
        run.to_str().unwrap(),
    ]));
    let echoed = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(echoed.contains("k = 2"), "{echoed}");
}
