use std::path::Path;
use std::process::Command;

use causal_mia_cli::bundle::{sha256_hex, Manifest, MetricsDoc};

const TINY: &str = r#"
scenario = "Custom"
repetitions = 1
master_seed = 11

[params]
dim = 20
teacher_norm = 4.0
n_members = 30
n_nonmembers = 30
multirun_base = 30
multirun_evals = 20

[params.trainer]
ridge_lambda = 10.0

[stability]
n_train = 20
n_perturb = 2
n_test = 50
algo_seeds = 1
"#;

const TINY_DP: &str = r#"
scenario = "DpSgdSynthetic"
regimes = ["ZeroRunRaw", "ZeroRunOracle"]
estimators = ["Classical", "IPW"]

[params]
dim = 10
teacher_norm = 3.0
n_members = 40
n_nonmembers = 40

[params.trainer]
epochs = 2
batch_size = 16
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causal-mia"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn evaluate(config: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    bin().arg("evaluate").arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn assert_manifest_complete(dir: &Path) {
    let m = Manifest::load(dir).unwrap();
    let mut on_disk: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(on_disk, m.files.keys().cloned().collect::<Vec<_>>());
    for (name, hash) in &m.files {
        assert_eq!(&sha256_hex(&std::fs::read(dir.join(name)).unwrap()), hash, "{name}");
    }
}

#[test]
fn ridge_bundle_has_the_expected_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("bundle");
    let run = evaluate(&cfg, &out, &["--svg"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let doc = MetricsDoc::load(&out).unwrap();
    assert!(doc.cells.len() >= 5);
    assert_eq!(doc.failures(), 0);
    let rocs = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("roc_")).count();
    assert!(rocs >= 4);
    for c in &doc.cells {
        assert!(out.join(&c.evidence).exists(), "{}", c.evidence);
    }
    assert!(out.join("roc.svg").exists());
    assert!(!out.join("dp_bound.csv").exists());
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), doc.cells.len() + 1);
    assert!(csv.starts_with("repetition,seed,regime,estimator,status,auc"));
    assert_manifest_complete(&out);
}

#[test]
fn identical_configs_give_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(evaluate(&cfg, &a, &["--repetitions", "2"]).status.success());
    assert!(evaluate(&cfg, &b, &["--repetitions", "2"]).status.success());
    for f in ["metrics.json", "metrics.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (Manifest::load(&a).unwrap(), Manifest::load(&b).unwrap());
    assert_eq!(ma.header.config_hash, mb.header.config_hash);
    assert_eq!(ma.header.seeds.len(), 2);
}

#[test]
fn dp_bundle_includes_the_bound_and_renders_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY_DP);
    let out = tmp.path().join("dp");
    let run = evaluate(&cfg, &out, &[]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let bound = std::fs::read_to_string(out.join("dp_bound.csv")).unwrap();
    assert!(bound.starts_with("fpr,tpr_bound"));
    assert_eq!(bound.lines().count(), 1002);

    assert!(bin().arg("roc").arg(&out).arg("--dp-bound").output().unwrap().status.success());
    let first = std::fs::read(out.join("roc.svg")).unwrap();
    assert!(bin().arg("roc").arg(&out).arg("--dp-bound").output().unwrap().status.success());
    assert_eq!(first, std::fs::read(out.join("roc.svg")).unwrap());
    assert!(String::from_utf8(first).unwrap().contains("DP bound (0.602, 0.01)"));
    assert_manifest_complete(&out);
}

#[test]
fn missing_curve_files_are_listed_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY_DP);
    let out = tmp.path().join("dp");
    assert!(evaluate(&cfg, &out, &[]).status.success());
    std::fs::remove_file(out.join("roc_zerorun_oracle_ipw.csv")).unwrap();
    let run = bin().arg("roc").arg(&out).output().unwrap();
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stdout).contains("missing: roc_zerorun_oracle_ipw.csv"));
}

#[test]
fn propensity_flag_and_feature_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("c");
    let run = evaluate(&cfg, &out, &["--propensity", "constant:0.5", "--dump-features"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let doc = MetricsDoc::load(&out).unwrap();
    assert!(doc.cells.iter().any(|c| c.regime == "zerorun_constant"));
    assert!(!doc.cells.iter().any(|c| c.regime == "zerorun_oracle" || c.regime == "zerorun_learned"));
    let json = std::fs::read_to_string(out.join("evidence_zerorun_rep0.json")).unwrap();
    assert!(json.contains("features"));

    let bad = evaluate(&cfg, &tmp.path().join("d"), &["--propensity", "knn"]);
    assert!(!bad.status.success());
}

#[test]
fn failed_cells_are_recorded_and_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("n_nonmembers = 30", "n_nonmembers = 30\nfolds = 500");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("f");
    let run = evaluate(&cfg, &out, &[]);
    assert!(!run.status.success());
    let doc = MetricsDoc::load(&out).unwrap();
    assert!(doc.failures() > 0);
    assert!(doc.cells.iter().filter(|c| c.error.is_some()).all(|c| c.regime == "zerorun_learned"));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.contains(",error,"));
}

#[test]
fn report_reaggregates_a_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("r");
    assert!(evaluate(&cfg, &out, &["--repetitions", "2"]).status.success());
    let before = std::fs::read(out.join("summary.csv")).unwrap();
    std::fs::remove_file(out.join("summary.csv")).unwrap();
    let run = bin().arg("report").arg(&out).output().unwrap();
    assert!(run.status.success());
    assert_eq!(before, std::fs::read(out.join("summary.csv")).unwrap());
    assert!(String::from_utf8_lossy(&run.stdout).contains("multirun"));
}

#[test]
fn simulate_and_stability_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let sim = tmp.path().join("sim");
    assert!(bin().arg("simulate").arg("-c").arg(&cfg).arg("-o").arg(&sim).output().unwrap().status.success());
    let members = std::fs::read_to_string(sim.join("members.csv")).unwrap();
    assert_eq!(members.lines().count(), 31);
    assert!(members.starts_with("x0,x1,"));
    assert!(sim.join("problem.json").exists());
    assert_manifest_complete(&sim);

    let st = tmp.path().join("st");
    let run = bin().arg("stability").arg("-c").arg(&cfg).arg("-o").arg(&st).args(["--n-perturb", "3", "--n-test", "40"]).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(st.join("stability.json")).unwrap()).unwrap();
    assert_eq!(v["n_perturbations"], 3);
    assert_eq!(v["n_test"], 40);
    assert!(v["alpha_hat"].as_f64().unwrap() >= 0.0);
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = causal_mia_cli::RunConfig::load(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3);
}
