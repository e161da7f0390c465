use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fracdivcurl");

const HALFHARMONIC: &str = r#"
experiment = "halfharmonic"
seed = 3

[domain]
dim = 1
nodes_per_axis = 32
topology = { kind = "periodic_torus", side = 1.0 }

[params]
s = 0.5
p = 2.0
target_dim = 2
winding = 1
amplitude = 0.2
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_config(dir: &Path, text: &str) -> Output {
    let cfg = dir.join("cfg.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.join("out");
    cli(&["run", cfg.to_str().unwrap(), "--threads", "1", "--out", out.to_str().unwrap()])
}

#[test]
fn list_prints_every_experiment() {
    for args in [&["list"][..], &[][..]] {
        let out = cli(args);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.contains("wente"));
    }
}

#[test]
fn version_and_unknown_command() {
    let out = cli(&["--version"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn run_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config(tmp.path(), HALFHARMONIC);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert!(report.is_object());
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["threads"], 1);
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("iter,energy"), "{header}");
    assert!(trace.lines().count() > 2);
}

#[test]
fn malformed_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_config(tmp.path(), "experiment = \"halfharmonic\"\nseed = [").status.code(), Some(2));
    let unknown = HALFHARMONIC.replace("seed = 3", "seed = 3\ncolour = 1");
    assert_eq!(run_config(tmp.path(), &unknown).status.code(), Some(2));
    let missing = cli(&["run", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn invalid_parameter_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = HALFHARMONIC.replace("s = 0.5", "s = 1.5");
    assert_eq!(run_config(tmp.path(), &bad).status.code(), Some(3));
}

#[test]
fn unconverged_run_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{HALFHARMONIC}\n[solver]\nmax_iters = 1\n");
    assert_eq!(run_config(tmp.path(), &text).status.code(), Some(1));
    let relaxed = text.replace("seed = 3", "seed = 3\nrequire_convergence = false");
    assert_eq!(run_config(tmp.path(), &relaxed).status.code(), Some(0));
}
