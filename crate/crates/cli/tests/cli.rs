use std::path::Path;
use std::process::Command;

const CONFIG: &str =
    r#"{"A": [[1, -2, 0], [2, 1, 0], [0, 0, 0.5]], "B": [[0.5], [2], [1]], "h_min": 0.01, "h_max": 0.6}"#;

fn nustab(dir: &Path, args: &[&str]) -> (i32, String) {
    nustab_env(dir, args, &[])
}

fn nustab_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nustab"));
    cmd.args(args).current_dir(dir);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("run nustab");
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plant.json"), CONFIG).unwrap();
    let (code, out) = nustab(dir.path(), &["design", "--config", "plant.json", "--out-dir", "out"]);
    assert_eq!(code, 0, "{out}");
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn manifest_hash(dir: &Path, name: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(&read(dir, name)).unwrap();
    v["manifest_sha256"].as_str().unwrap().to_string()
}

const SIMULATE: &[&str] = &[
    "simulate",
    "--config",
    "plant.json",
    "--cert",
    "out/certificate.json",
    "--seed",
    "5",
    "--steps",
    "20",
    "--substeps",
    "3",
    "--out-dir",
];

#[test]
fn outputs_cite_the_manifest_and_reruns_are_identical() {
    let dir = setup();
    let p = dir.path();
    let design_hash = manifest_hash(p, "out/design.manifest.json");
    assert_eq!(manifest_hash(p, "out/certificate.json"), design_hash);

    for out_dir in ["a", "b"] {
        let mut args = SIMULATE.to_vec();
        args.push(out_dir);
        assert_eq!(nustab(p, &args).0, 0);
        let sweep = ["sweep", "--config", "plant.json", "--cert", "out/certificate.json", "--out-dir", out_dir];
        assert_eq!(nustab(p, &sweep).0, 0);
    }
    for file in ["trajectory.csv", "trajectory.gp", "sweep.csv", "sweep.gp"] {
        let a = read(p, &format!("a/{file}"));
        assert_eq!(a, read(p, &format!("b/{file}")), "{file} differs between reruns");
        let hash = manifest_hash(
            p,
            if file.starts_with("sweep") { "a/sweep.manifest.json" } else { "a/simulate.manifest.json" },
        );
        assert_eq!(a.lines().next().unwrap(), format!("# manifest_sha256={hash}"));
    }
    assert_eq!(read(p, "a/sweep.csv").lines().nth(1).unwrap(), "h,a_1,a_2,a_3,sigma_bar,s_1,s_2,s_3");
    assert_eq!(read(p, "a/trajectory.csv").lines().nth(1).unwrap(), "t,x_1,x_2,x_3,u_1,lyap,is_sample");

    // Rerunning design reproduces the certificate byte for byte.
    let before = read(p, "out/certificate.json");
    assert_eq!(nustab(p, &["design", "--config", "plant.json", "--out-dir", "out"]).0, 0);
    assert_eq!(read(p, "out/certificate.json"), before);

    // A different seed is a different manifest.
    let mut args = SIMULATE.to_vec();
    args[6] = "6";
    args.push("c");
    assert_eq!(nustab(p, &args).0, 0);
    assert_ne!(manifest_hash(p, "c/simulate.manifest.json"), manifest_hash(p, "a/simulate.manifest.json"));
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let dir = setup();
    let p = dir.path();
    let sweep = ["sweep", "--config", "plant.json", "--cert", "out/certificate.json", "--out-dir", "one"];
    assert_eq!(nustab_env(p, &sweep, &[("NUSTAB_THREADS", "1")]).0, 0);
    let sweep = ["sweep", "--config", "plant.json", "--cert", "out/certificate.json", "--out-dir", "many"];
    assert_eq!(nustab_env(p, &sweep, &[("NUSTAB_THREADS", "4")]).0, 0);
    assert_eq!(read(p, "one/sweep.csv"), read(p, "many/sweep.csv"));
    assert_eq!(nustab_env(p, &sweep, &[("NUSTAB_THREADS", "zero")]).0, 2);
}

#[test]
fn zero_initial_state_gives_zero_trajectory() {
    let dir = setup();
    let p = dir.path();
    let mut args = SIMULATE.to_vec();
    args.extend(["z", "--x0", "0,0,0"]);
    let (code, out) = nustab(p, &args);
    assert_eq!(code, 0, "{out}");
    for line in read(p, "z/trajectory.csv").lines().skip(2) {
        let cells: Vec<&str> = line.split(',').collect();
        for c in &cells[1..cells.len() - 1] {
            assert!(c.is_empty() || c.parse::<f64>().unwrap() == 0.0, "{line}");
        }
    }
}

#[test]
fn exit_codes() {
    let dir = setup();
    let p = dir.path();
    // Window past h_star.
    let mut args = SIMULATE.to_vec();
    args.extend(["w", "--window", "0.01,0.7"]);
    assert_eq!(nustab(p, &args).0, 2);
    // Unknown schedule and malformed x0.
    let mut args = SIMULATE.to_vec();
    args.extend(["w", "--schedule", "bursty"]);
    assert_eq!(nustab(p, &args).0, 2);
    let mut args = SIMULATE.to_vec();
    args.extend(["w", "--x0", "1,2"]);
    assert_eq!(nustab(p, &args).0, 2);
    // Unknown flag.
    assert_eq!(nustab(p, &["design", "--config", "plant.json", "--bogus"]).0, 2);
    // Config files that must be rejected before any design work.
    std::fs::write(p.join("extra.json"), r#"{"A": [[1]], "B": [[1]], "C": [[1]]}"#).unwrap();
    assert_eq!(nustab(p, &["design", "--config", "extra.json"]).0, 2);
    std::fs::write(p.join("unstab.json"), r#"{"A": [[1, 0], [0, 2]], "B": [[1], [0]]}"#).unwrap();
    let (code, out) = nustab(p, &["design", "--config", "unstab.json"]);
    assert_eq!(code, 2);
    assert!(out.contains("not stabilizable"), "{out}");
    assert_eq!(nustab(p, &["design", "--config", "missing.json"]).0, 2);
    // No period reaches gamma = 0.9: synthesis failure.
    assert_eq!(nustab(p, &["design", "--config", "plant.json", "--gamma", "0.9", "--out-dir", "g"]).0, 3);
    // Certificate for a different plant.
    std::fs::write(p.join("other.json"), r#"{"A": [[1, -2, 0], [2, 1, 0], [0, 0, 0.6]], "B": [[0.5], [2], [1]]}"#)
        .unwrap();
    assert_eq!(nustab(p, &["verify", "--config", "other.json", "--cert", "out/certificate.json"]).0, 2);
}

#[test]
fn scalar_integrator_certificate_is_right_censored() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("s.json"), r#"{"A": [[0]], "B": [[1]], "poles": [-1]}"#).unwrap();
    let (code, out) = nustab(p, &["design", "--config", "s.json", "--out-dir", "o"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("right-censored"));
    let v: serde_json::Value = serde_json::from_str(&read(p, "o/certificate.json")).unwrap();
    assert_eq!(v["right_censored"], true);
}
