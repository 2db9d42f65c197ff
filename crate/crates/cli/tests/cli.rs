use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ecsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecsim"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(csv: &Path) -> usize {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1
}

#[test]
fn spectrum_writes_k_rows_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecsim(&["spectrum", "--lattice", "ring", "--sites", "4", "--g", "1", "--lambda", "0.1", "--k", "6"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&dir.path().join("spectrum.csv")), 6);
    let j = json(&dir.path().join("spectrum.json"));
    assert_eq!(j["run_config"]["command"], "spectrum");
    assert_eq!(j["run_config"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(j["report"]["eigenvalues"].as_array().unwrap().len(), 6);
}

#[test]
fn large_dense_request_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecsim(&["spectrum", "--lattice", "square", "--rows", "2", "--cols", "2", "--dense"], dir.path());
    assert_eq!(code(&o), 4);
    let o = ecsim(&["spectrum", "--lattice", "square", "--rows", "2", "--cols", "2", "--k", "2"], dir.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn zero_coupling_ground_cluster_is_logical_space() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecsim(&["spectrum", "--lattice", "ring", "--sites", "4", "--lambda", "0", "--dense"], dir.path());
    assert_eq!(code(&o), 0);
    let j = json(&dir.path().join("spectrum.json"));
    assert_eq!(j["report"]["degeneracy_clusters"][0]["size"], 16);
}

#[test]
fn usage_and_convergence_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ecsim(&["spectrum", "--bogus"], dir.path())), 2);
    assert_eq!(code(&ecsim(&["spectrum", "--lattice", "ring", "--sites", "1"], dir.path())), 2);
    let o = ecsim(
        &["spectrum", "--lattice", "ring", "--sites", "5", "--k", "3", "--max-iter", "1", "--tol", "1e-15"],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn moments_examples() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecsim(&["moments", "--lattice", "ring", "--sites", "4", "--order", "1"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(json(&dir.path().join("moments.json"))["is_zero"], true);

    let o = ecsim(&["moments", "--lattice", "hex", "--order", "2"], dir.path());
    assert_eq!(code(&o), 0);
    let j = json(&dir.path().join("moments.json"));
    let bonds = j["lattice"]["n_bonds"].as_i64().unwrap();
    assert_eq!(j["identity_multiple"].as_i64(), Some(2 * bonds));
}

#[test]
fn square_fourth_moment_has_zero_remainder() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecsim(&["moments", "--lattice", "square", "--rows", "3", "--cols", "3", "--order", "4"], dir.path());
    assert_eq!(code(&o), 0);
    let j = json(&dir.path().join("moments.json"));
    let d = &j["fourth_order_identity"];
    assert_eq!(d["residual_is_zero"], true);
    assert!(d["k_coeffs"].as_array().unwrap().iter().all(|c| c == &serde_json::json!([24, 1])));
}

#[test]
fn scaling_ring_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecsim(&["scaling", "--lattice", "ring", "--sites", "4"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let j = json(&dir.path().join("fit.json"));
    let p = j["fit"]["exponent"].as_f64().unwrap();
    assert!((p - 2.0).abs() < 0.1, "{p}");
    assert_eq!(data_rows(&dir.path().join("scaling.csv")), 5);
}

#[test]
fn mbqc_runs_and_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecsim(&["mbqc", "--angles", "0,0,0"], dir.path());
    assert_eq!(code(&o), 0);
    assert!((json(&dir.path().join("mbqc.json"))["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let first = dir.path().join("first");
    assert_eq!(code(&ecsim(&["mbqc", "--seed", "42"], &first)), 0);
    assert_eq!(json(&first.join("mbqc.json"))["pass"], true);
    let second = dir.path().join("second");
    let transcript = first.join("transcript.jsonl");
    assert_eq!(code(&ecsim(&["mbqc", "--seed", "42", "--replay", transcript.to_str().unwrap()], &second)), 0);
    let records = |p: &Path| -> Vec<String> { fs::read_to_string(p).unwrap().lines().skip(1).map(String::from).collect() };
    assert_eq!(records(&transcript), records(&second.join("transcript.jsonl")));

    assert_eq!(code(&ecsim(&["mbqc", "--two-wire", "--seed", "3"], dir.path())), 0);
}

#[test]
fn noise_examples() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecsim(&["noise", "--p", "0", "--trials", "200"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("noise.csv")).unwrap();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "model,p_or_T,trials,failures,rate,ci_low,ci_high");
    assert!(lines.next().unwrap().starts_with("bond,0,200,0,0,"));

    // Δ/T = ln 3 on a two-site chain: the output-site flip is the Z part
    let o = ecsim(
        &["noise", "--model", "thermal", "--delta", "1.0986122886681098", "--temperatures", "1", "--trials", "4000", "--n-logical", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let j = json(&dir.path().join("noise.json"));
    let r = &j["reports"][0];
    let z = r["z_component"].as_f64().unwrap() / r["trials"].as_f64().unwrap();
    assert!((z - 0.25).abs() < 4.0 * (0.25 * 0.75 / 4000.0f64).sqrt(), "{z}");
    assert!((j["analysis"]["flip_probabilities"][0].as_f64().unwrap() - 0.25).abs() < 1e-12);

    let o = ecsim(&["noise", "--model", "thermal", "--trials", "400"], dir.path());
    assert_eq!(code(&o), 0);
    let j = json(&dir.path().join("noise.json"));
    assert!(j["analysis"]["t_crit"].as_f64().is_some());
}

#[test]
fn config_file_with_flag_override_reproduces_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# ring spectrum\nlattice = ring\nsites = 6\nk = 3\nlambda = 0.2\n").unwrap();
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_ecsim"))
            .args(["spectrum", "--config", cfg.to_str().unwrap(), "--sites", "4"])
            .arg("--out-dir")
            .arg(dir.path().join(out))
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("a")), 0);
    assert_eq!(code(&run("b")), 0);
    let j = json(&dir.path().join("a/spectrum.json"));
    assert_eq!(j["run_config"]["args"]["lattice"]["sites"], 4);
    assert_eq!(j["run_config"]["args"]["common"]["lambda"], 0.2);
    assert_eq!(data_rows(&dir.path().join("a/spectrum.csv")), 3);
    let body = |p: &str| {
        fs::read_to_string(dir.path().join(p))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body("a/spectrum.csv"), body("b/spectrum.csv"));
}
