use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde_json::Value;
use spectraudit::ingest::{self, ArtifactBundle, Family, LeafCounts, Payload};

const BIN: &str = env!("CARGO_BIN_EXE_spectraudit");

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Out {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout not JSON ({e}): {}", self.stdout))
    }

    fn error_kind(&self) -> String {
        let v: Value = serde_json::from_str(self.stderr.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {}", self.stderr));
        v["error"]["kind"].as_str().unwrap().to_string()
    }
}

fn run_with(args: &[&str], env: &[(&str, &str)], stdin: &str) -> Out {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SPECTRAUDIT_CONFIG").stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    for (k, v) in env {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    Out {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

fn run(args: &[&str]) -> Out {
    run_with(args, &[], "")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pareto_bundle(dir: &Path, seed: u64) -> PathBuf {
    let p = dir.join(format!("pareto{seed}.spd"));
    let o = run(&["synth", "--kind", "pareto-tail", "--n", "2000", "--alpha", "2.5", "--seed", &seed.to_string(), "--out", s(&p)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    p
}

fn ones_bundle(dir: &Path) -> PathBuf {
    let p = dir.join("ones.spd");
    let b = ArtifactBundle::new(Family::LeafHistogram, Payload::Leaves(LeafCounts::new(vec![1; 500]).unwrap())).unwrap();
    ingest::write_bundle(&b, &p).unwrap();
    p
}

const REPORT_FIELDS: [&str; 12] =
    ["family", "status", "alpha", "xmin", "ks_p", "lambda_plus", "sigma2", "q", "n_traps", "n_zero_eigs", "warnings", "meta"];

#[test]
fn analyze_pareto_is_powerlaw() {
    let dir = tempfile::tempdir().unwrap();
    let p = pareto_bundle(dir.path(), 1);
    let o = run(&["analyze", "--input", s(&p), "--bootstrap", "200", "--seed", "3"]);
    assert_eq!(o.code, 0, "{}", o.stdout);
    let r = o.json();
    assert_eq!(r["status"], "PowerLaw");
    for f in REPORT_FIELDS {
        assert!(r.get(f).is_some(), "missing field {f}");
    }
    assert!((r["alpha"].as_f64().unwrap() - 2.5).abs() < 0.15);
    assert_eq!(r["config"]["analysis"]["fit"]["n_bootstrap"], 200);
    assert_eq!(r["config"]["analysis"]["fit"]["seed"], 3);
}

#[test]
fn collapse_and_rejection_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ones = ones_bundle(dir.path());
    let o = run(&["analyze", "--input", s(&ones), "--family", "dt"]);
    assert_eq!(o.code, 2);
    assert_eq!(o.json()["collapse_rule"], "Dirac");
    assert_eq!(o.json()["traps_applicable"], false);

    // an unattainable acceptance level turns a clean Pareto fit into Rejected
    let p = pareto_bundle(dir.path(), 2);
    let o = run(&["analyze", "--input", s(&p), "--bootstrap", "100", "--set", "p_accept=0.9"]);
    assert_eq!(o.json()["status"], "Rejected");
    assert_eq!(o.code, 3);
}

#[test]
fn exit_code_depends_only_on_status() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = [pareto_bundle(dir.path(), 4), ones_bundle(dir.path()), pareto_bundle(dir.path(), 5)];
    for extra in [&[][..], &["--set", "p_accept=0.9"][..]] {
        for input in &inputs {
            let mut args = vec!["analyze", "--input", s(input), "--bootstrap", "100"];
            args.extend_from_slice(extra);
            let o = run(&args);
            let expected = match o.json()["status"].as_str().unwrap() {
                "PowerLaw" => 0,
                "Collapse" => 2,
                "Rejected" => 3,
                other => panic!("status {other}"),
            };
            assert_eq!(o.code, expected);
        }
    }
}

#[test]
fn several_inputs_write_a_report_directory() {
    let dir = tempfile::tempdir().unwrap();
    let a = pareto_bundle(dir.path(), 6);
    let b = ones_bundle(dir.path());
    let out = dir.path().join("reports");
    let o = run(&["analyze", "--input", s(&a), s(&b), "--report", s(&out), "--bootstrap", "100"]);
    assert_eq!(o.code, 2, "collapse dominates");
    assert!(out.join("pareto6.json").exists());
    assert!(out.join("ones.json").exists());
}

#[test]
fn family_mismatch_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let ones = ones_bundle(dir.path());
    let o = run(&["analyze", "--input", s(&ones), "--family", "knn"]);
    assert_eq!((o.code, o.error_kind().as_str()), (1, "Usage"));

    let o = run(&["analyze", "--input", "/nonexistent/model.spd"]);
    assert_eq!(o.code, 1);
    assert_eq!(o.error_kind(), "BadPath");
    assert!(o.stdout.is_empty());
}

#[test]
fn bad_flags_are_usage_errors() {
    let o = run(&["analyze", "--input", "x.spd", "--no-such-flag"]);
    assert_eq!((o.code, o.error_kind().as_str()), (1, "Usage"));
    assert_eq!(run(&["--help"]).code, 0);
}

#[test]
fn config_precedence_defaults_file_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = pareto_bundle(dir.path(), 7);
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# audit settings\nk_sigma = 4.5\ntau_trap = 6\nbootstrap: 50\n").unwrap();
    let o = run(&["analyze", "--input", s(&p), "--config", s(&cfg), "--k-sigma", "5"]);
    let c = &o.json()["config"];
    assert_eq!(c["analysis"]["traps"]["k_sigma"], 5.0, "flag beats file");
    assert_eq!(c["early_stop"]["tau_trap"], 6, "file beats default");
    assert_eq!(c["analysis"]["fit"]["n_bootstrap"], 50);
    assert_eq!(c["early_stop"]["alpha_low"], 2.0, "default kept");
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = pareto_bundle(dir.path(), 8);
    let env_cfg = dir.path().join("env.conf");
    let flag_cfg = dir.path().join("flag.conf");
    std::fs::write(&env_cfg, "bootstrap = 30\nalpha_low = 1.5\n").unwrap();
    std::fs::write(&flag_cfg, "bootstrap = 40\n").unwrap();
    let env = [("SPECTRAUDIT_CONFIG", s(&env_cfg))];
    let o = run_with(&["analyze", "--input", s(&p)], &env, "");
    assert_eq!(o.json()["config"]["analysis"]["fit"]["n_bootstrap"], 30);
    assert_eq!(o.json()["config"]["early_stop"]["alpha_low"], 1.5);
    let o = run_with(&["analyze", "--input", s(&p), "--config", s(&flag_cfg)], &env, "");
    assert_eq!(o.json()["config"]["analysis"]["fit"]["n_bootstrap"], 40, "--config replaces the env file");
    assert_eq!(o.json()["config"]["early_stop"]["alpha_low"], 2.0);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = pareto_bundle(dir.path(), 9);
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "k_sigma = 3\nksigma = 4\n").unwrap();
    let o = run(&["analyze", "--input", s(&p), "--config", s(&cfg)]);
    assert_eq!((o.code, o.error_kind().as_str()), (1, "UnknownKey"));
    assert!(o.stderr.contains("line 2"));
    let o = run(&["analyze", "--input", s(&p), "--set", "nope=1"]);
    assert_eq!(o.error_kind(), "UnknownKey");
    let o = run(&["analyze", "--input", s(&p), "--k-sigma=-1"]);
    assert_eq!(o.error_kind(), "BadConfig");
}

#[test]
fn fit_prints_the_tail_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("eigs.csv");
    let x = spectraudit::plfit::pareto_sample(2.2, 1.0, 3000, 4).unwrap();
    std::fs::write(&csv, x.iter().map(|v| format!("{v}\n")).collect::<String>()).unwrap();
    let o = run(&["fit", "--eigs", s(&csv), "--bootstrap", "100", "--seed", "7"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v = o.json();
    for k in ["alpha", "xmin", "ks_stat", "ks_p", "n_tail"] {
        assert!(v.get(k).is_some(), "missing {k}");
    }
    assert!((v["alpha"].as_f64().unwrap() - 2.2).abs() < 0.15);
    assert_eq!(run(&["fit", "--input", s(&csv), "--bootstrap", "100", "--seed", "7"]).stdout, o.stdout);
}

#[test]
fn monitor_streams_verdicts() {
    let calm = "{\"epoch\":1,\"alpha\":3.1,\"traps\":0}\n{\"epoch\":2,\"alpha\":2.9,\"traps\":1}\n";
    let o = run_with(&["monitor", "--stream"], &[], calm);
    assert_eq!(o.code, 0);
    assert_eq!(o.stdout.lines().count(), 2);

    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.ndjson");
    assert_eq!(run(&["synth", "--kind", "trajectory", "--out", s(&traj)]).code, 0);
    let text = std::fs::read_to_string(&traj).unwrap();
    let o = run_with(&["monitor", "--stream"], &[], &text);
    assert_ne!(o.code, 0);
    let first_halt = o
        .stdout
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .find(|v| v["halt"] == true)
        .unwrap();
    assert_eq!(first_halt["epoch"], 8);
    assert_eq!(first_halt["verdict"], "StopAlpha");

    let mixed = "garbage\n{\"epoch\":1,\"traps\":5}\n{\"epoch\":2,\"alpha\":3.0,\"traps\":0}\n";
    let o = run_with(&["monitor", "--stream"], &[], mixed);
    let lines: Vec<Value> = o.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["error"]["kind"], "MalformedRecord");
    assert_eq!(lines[1]["verdict"], "StopTraps");
    assert_ne!(o.code, 0);
}

#[test]
fn synth_writes_bundle_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (b, t) = (dir.path().join("bundle.spd"), dir.path().join("truth.json"));
    let o = run(&["synth", "--kind", "spiked-wishart", "--n", "300", "--q", "0.25", "--spikes", "3", "--seed", "7", "--out", s(&b), "--truth", s(&t)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let bundle = ingest::read_bundle(&b).unwrap();
    assert_eq!(bundle.family, Family::NeuralWeights);
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(&t).unwrap()).unwrap();
    assert_eq!(truth["spikes"], 3);
    assert_eq!(truth["spike_targets"].as_array().unwrap().len(), 3);
    assert_eq!(truth["dim"], 300);
}

fn report_dir(dir: &Path, n_layers: usize) -> Vec<PathBuf> {
    (0..n_layers)
        .map(|i| {
            let input = if i == 3 { ones_bundle(dir) } else { pareto_bundle(dir, 20 + i as u64) };
            let r = dir.join(format!("layer{:02}.json", i + 1));
            let o = run(&["analyze", "--input", s(&input), "--report", s(&r), "--bootstrap", "50"]);
            assert!(o.code != 1, "{}", o.stderr);
            r
        })
        .collect()
}

#[test]
fn plotdata_tables() {
    let dir = tempfile::tempdir().unwrap();
    let reports = report_dir(dir.path(), 12);
    let out = dir.path().join("csv");
    let mut args = vec!["plotdata", "--out-dir", s(&out), "--reports"];
    args.extend(reports.iter().map(|p| s(p)));
    assert_eq!(run(&args).code, 0);
    let csv = std::fs::read_to_string(out.join("layer_alpha.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "layer,alpha,status");
    assert_eq!(rows.len(), 13);
    assert!(rows[1].starts_with("1,"));
    assert!(rows[12].starts_with("12,"));
    assert_eq!(rows[4], "4,,Collapse");

    let one = dir.path().join("one");
    assert_eq!(run(&["plotdata", "--out-dir", s(&one), "--reports", s(&reports[0])]).code, 0);
    assert_eq!(std::fs::read_to_string(one.join("layer_alpha.csv")).unwrap().lines().count(), 2);

    let o = run(&["plotdata", "--out-dir", s(&one)]);
    assert_eq!((o.code, o.error_kind().as_str()), (1, "EmptySet"));
}

#[test]
fn score_ranks_models() {
    let dir = tempfile::tempdir().unwrap();
    let reports = report_dir(dir.path(), 5);
    let mut args = vec!["score", "--n-boot", "200", "--reports"];
    args.extend(reports.iter().map(|p| s(p)));
    let f1 = ["layer01=0.9", "layer02=0.8", "layer03=0.85", "layer04=0.95", "layer05=0.7"];
    let kappa = ["layer01=0.7", "layer02=0.5", "layer03=0.6", "layer04=0.3", "layer05=0.4"];
    args.push("--f1");
    args.extend(f1);
    args.push("--kappa");
    args.extend(kappa);
    args.push("--sensitivity");
    let o = run(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v = o.json();
    let ranking = v["ranking"].as_array().unwrap();
    assert_eq!(ranking.len(), 5);
    // collapsed layer04 is excluded and trails; layer05 is below the F1 gate
    assert_eq!(ranking[4]["name"], "layer04");
    assert_eq!(ranking[4]["outcome"], "Excluded");
    assert_eq!(ranking[3]["outcome"], "GatedOut");
    assert_eq!(v["comparisons"].as_array().unwrap().len(), 2);
    assert_eq!(v["weight_sensitivity"].as_array().unwrap().len(), 25);

    let o = run(&["score", "--reports", s(&reports[0]), s(&reports[1]), "--f1", "layer01=0.9"]);
    assert_eq!(o.code, 1);
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}; rerun with UPDATE_GOLDEN=1 after an intended change");
}

fn key_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(m) = v {
        for (k, child) in m {
            let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            out.push(p.clone());
            key_paths(child, &p, out);
        }
    }
}

#[test]
fn report_schema_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let p = pareto_bundle(dir.path(), 30);
    let o = run(&["analyze", "--input", s(&p), "--bootstrap", "50", "--seed", "1"]);
    let mut keys = Vec::new();
    key_paths(&o.json(), "", &mut keys);
    golden("report_keys.txt", &(keys.join("\n") + "\n"));

    let ones = ones_bundle(dir.path());
    golden("leaf_collapse_report.json", &run(&["analyze", "--input", s(&ones)]).stdout);
}
