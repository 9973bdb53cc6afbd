use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const QUICK: &str = r#"
[tactile]
resolution = 32

[clm]
epochs = 8

[push_data]
n_tasks = 10

[forecast.state]
epochs = 3
hidden = 16
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stempush"));
    for (k, _) in std::env::vars() {
        if k.starts_with("STEMPUSH_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn quick_config(dir: &Path) -> PathBuf {
    let p = dir.join("quick.toml");
    std::fs::write(&p, QUICK).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn hash_line(o: &Output) -> String {
    let text = stdout(o);
    let line = text.lines().next().unwrap_or_default().to_string();
    assert!(line.starts_with("config hash "), "stdout: {text}\nstderr: {}", stderr(o));
    assert_eq!(line.len(), "config hash ".len() + 64, "{line}");
    line
}

fn repo_config() -> String {
    format!("{}/../../configs/default.toml", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn validate_config_accepts_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let plain = run(&["validate-config"], dir.path());
    assert_eq!(plain.status.code(), Some(0), "{}", stderr(&plain));
    let shipped = run(&["validate-config", "--config", &repo_config()], dir.path());
    assert_eq!(shipped.status.code(), Some(0), "{}", stderr(&shipped));
    assert_eq!(hash_line(&plain), hash_line(&shipped));
    // nothing is written
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn settings_resolve_flag_over_env_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("seed.toml");
    std::fs::write(&file, "seed = 9\n").unwrap();
    let f = file.to_str().unwrap();
    let hash = |args: &[&str], env: Option<&str>| {
        let mut c = bin();
        c.args(args).current_dir(dir.path());
        if let Some(v) = env {
            c.env("STEMPUSH_SEED", v);
        }
        hash_line(&c.output().unwrap())
    };
    let nine = hash(&["validate-config", "--seed", "9"], None);
    let eight = hash(&["validate-config", "--seed", "8"], None);
    assert_ne!(nine, eight);
    assert_eq!(hash(&["validate-config", "--config", f], None), nine);
    assert_eq!(hash(&["validate-config", "--config", f], Some("8")), eight);
    assert_eq!(hash(&["validate-config", "--config", f, "--seed", "9"], Some("8")), nine);
    // output location does not change the hash
    assert_eq!(hash(&["validate-config", "--seed", "9", "--out", "elsewhere", "--workers", "1"], None), nine);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = run(&["validate-config", "--frobnicate"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));

    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "seed = [\n").unwrap();
    let o = run(&["validate-config", "--config", broken.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"), "{}", stderr(&o));

    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, "[clm]\nepoch = 3\n").unwrap();
    let o = run(&["validate-config", "--config", typo.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));

    let o = run(&["validate-config", "--resolution", "48"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let o = run(&["bench", "--matrix", "table9"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bench.matrix"), "{}", stderr(&o));
}

#[test]
fn training_without_data_names_the_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train-clm", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    hash_line(&o);
    assert!(stderr(&o).contains("paths.clm_data"), "{}", stderr(&o));

    let o = run(&["train-clm", "--out", "o", "--data", "missing"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing"), "{}", stderr(&o));

    let o = run(&["train-tfm", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("paths.push_data"), "{}", stderr(&o));

    let o = run(&["plot", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("paths.report"), "{}", stderr(&o));
}

#[test]
fn bench_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let o = run(
        &["bench", "--config", cfg.to_str().unwrap(), "--matrix", "table1", "--seeds", "5", "--out", "b"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    hash_line(&o);
    let out = dir.path().join("b");
    for f in ["summary.csv", "trials.csv", "report.json", "config.toml", "tfm_eval.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 46);
    assert_eq!(std::fs::read_dir(out.join("plots")).unwrap().count(), 3);

    // the saved config reproduces the hash
    let again = run(&["validate-config", "--config", out.join("config.toml").to_str().unwrap()], dir.path());
    assert_eq!(hash_line(&again), hash_line(&o));

    let o = run(&["plot", "--report", "b/report.json", "--out", "p"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(dir.path().join("p/plots")).unwrap().count(), 3);
}

#[test]
fn empty_format_list_writes_no_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("none.toml");
    std::fs::write(&cfg, format!("{QUICK}\n[bench]\nformats = []\nn_seeds = 1\n")).unwrap();
    let o = run(
        &["bench", "--config", cfg.to_str().unwrap(), "--controller", "openloop", "--out", "b"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let names: Vec<String> = std::fs::read_dir(dir.path().join("b"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(!names.iter().any(|n| n.ends_with(".csv") || n == "report.json" || n == "plots"), "{names:?}");
}

#[test]
fn stages_chain_through_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let c = cfg.to_str().unwrap();
    let step = |args: &[&str]| {
        let mut all = vec!["--config", c, "--out", "o"];
        all.extend_from_slice(args);
        let o = run(&all, dir.path());
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        hash_line(&o);
        stdout(&o)
    };
    step(&["gen-clm-data"]);
    assert!(dir.path().join("o/clm_data/index.csv").is_file());
    step(&["train-clm", "--data", "o/clm_data"]);
    assert!(dir.path().join("o/clm.ckpt").is_file());
    step(&["gen-push-data"]);
    assert!(dir.path().join("o/push_data").is_dir());
    let msg = step(&["train-tfm", "--data", "o/push_data", "--clm", "o/clm.ckpt"]);
    assert!(msg.contains("persistence"), "{msg}");
    assert!(dir.path().join("o/tfm_state.ckpt").is_file());
    let msg = step(&["rollout", "--clm", "o/clm.ckpt", "--tfm", "o/tfm_state.ckpt", "--zone", "zone2"]);
    assert!(msg.contains("dfpc rollout, zone2"), "{msg}");
    assert!(dir.path().join("o/rollout/metrics.json").is_file());

    // a checkpoint at the wrong resolution is bad input
    let o = run(&["rollout", "--config", c, "--out", "o", "--clm", "o/clm.ckpt", "--resolution", "64"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}
