//! End-to-end checks of the `ssp-po` binary.

use std::path::Path;
use std::process::{Command, Output};

use ssp_po::ssp::InstanceDocument;

const CONFIG: &str = r#"
setting = "stochastic-costs"
episodes = 40
seeds = [0, 1]

[env]
generator = { kind = "random-ssp", num_states = 3, num_actions = 2, p_goal = 0.2 }
costs = { kind = "stochastic", noise = "bernoulli" }
seed = 2

[overrides]
eta = 0.3
"#;

fn ssp_po(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssp-po")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &CONFIG.replace("episodes = 40", "episodes = 40\nbogus = 1"));
    let out = ssp_po(&["run", "--config", &bad, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let good = write_config(dir.path(), CONFIG);
    let out = ssp_po(&["run", "--config", &good, "--override", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ssp_po(&["verify", "no-such-suite", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = ssp_po(&["run", "--config", &config, "--out-dir", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let episodes = std::fs::read(out_dir.join("episodes.csv")).unwrap();
        let summary = std::fs::read(out_dir.join("summary.csv")).unwrap();
        assert!(out_dir.join("regret.svg").exists());
        outputs.push((episodes, summary));
    }
    assert_eq!(outputs[0], outputs[1]);

    let other = dir.path().join("c");
    let out = ssp_po(&["run", "--config", &config, "--seed", "5", "--out-dir", other.to_str().unwrap()]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(other.join("episodes.csv")).unwrap(), outputs[0].0);
}

#[test]
fn plot_redraws_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("run");
    assert!(ssp_po(&["run", "--config", &config, "--out-dir", out_dir.to_str().unwrap()]).status.success());
    let first = std::fs::read_to_string(out_dir.join("regret.svg")).unwrap();
    std::fs::remove_file(out_dir.join("regret.svg")).unwrap();
    let out = ssp_po(&["plot", "--out-dir", out_dir.to_str().unwrap(), "--title", "again"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let second = std::fs::read_to_string(out_dir.join("regret.svg")).unwrap();
    assert!(second.contains("again"));
    assert_eq!(first.matches("<polyline").count(), second.matches("<polyline").count());
}

#[test]
fn quick_verify_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssp_po(&["verify", "polytope", "--quick", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.starts_with("suite,check,passed,observed,limit,detail\n"));
    assert!(String::from_utf8_lossy(&out.stdout).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn generated_instance_parses() {
    let out = ssp_po(&["gen-instance", "--states", "4", "--actions", "3", "--p-goal", "0.1", "--seed", "3"]);
    assert!(out.status.success());
    let doc = InstanceDocument::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let (inst, _) = doc.into_parts().unwrap();
    assert_eq!((inst.num_states(), inst.num_actions()), (4, 3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Tmax"));
}
