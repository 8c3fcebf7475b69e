//! End-to-end runs of the `qpolar` binary, checked against direct library
//! calls on the same inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qpolar::channels::{extract_mueller, scan_weight_positivity, WeightFunctionSpec, EXTRACTION_TOL};
use qpolar::formats::{load_channel, load_mueller, parse_experiment, parse_mueller};
use qpolar::sim::{estimate_mueller, load, record_to_string, standard_probes};
use qpolar::stokes::{
    cloude_decompose, compose, is_physical, lu_chipman, retarder, EulerAngles, MuellerMatrix, DECOMPOSITION_TOL,
};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn qpolar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpolar")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str], code: i32) -> Value {
    let out = qpolar(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "args {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn rows(v: &Value) -> MuellerMatrix {
    serde_json::from_value(v.clone()).expect("4x4 rows")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("UTF-8 path")
}

#[test]
fn validate_reports_verdicts_and_exit_codes() {
    let id = fixture("identity.mueller.json");
    let r = run_ok(&["validate", "-i", path_str(&id)], 0);
    assert_eq!(r["verdict"], "physical");
    assert_eq!(r["tolerance"].as_f64(), Some(DECOMPOSITION_TOL));
    assert_eq!(r["eigenvalues"].as_array().map(Vec::len), Some(4));

    let bad = fixture("unphysical.mueller.json");
    let r = run_ok(&["validate", "-i", path_str(&bad)], 2);
    assert_eq!(r["verdict"], "unphysical");
    let lib = is_physical(&load_mueller(&bad).unwrap(), DECOMPOSITION_TOL);
    assert_eq!(r["min_eigenvalue"].as_f64(), Some(lib.min_eigenvalue));
    assert!(lib.min_eigenvalue < 0.0);
}

#[test]
fn channel_extract_matches_library_bit_for_bit() {
    let path = fixture("retarder.channel.json");
    let r = run_ok(&["channel-extract", "-i", path_str(&path), "--nmax", "4"], 0);
    assert_eq!(r["verdict"], "mueller");
    assert_eq!(r["n_max"], 4);
    let cli = rows(&r["mueller"]);
    let lib = extract_mueller(&load_channel(&path).unwrap().build(Some(4)).unwrap(), EXTRACTION_TOL).unwrap();
    assert_eq!(cli, lib.mueller);
    let e = EulerAngles::new(0.4, 1.1, 2.0).unwrap();
    assert!(cli.max_abs_diff(&retarder(&e)) < 1e-12);
    assert_eq!(r["residual"].as_f64(), Some(lib.residual));
}

#[test]
fn channel_extract_writes_mueller_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mix.mueller.json");
    let path = fixture("mixture.channel.json");
    let r = run_ok(&["channel-extract", "-i", path_str(&path), "-o", path_str(&out)], 0);
    assert_eq!(load_mueller(&out).unwrap(), rows(&r["mueller"]));
    assert_eq!(r["cptp"]["passed"], true);
}

#[test]
fn finite_polarizer_extracts_and_refuses_large_cutoffs() {
    let path = fixture("polarizer.channel.json");
    let r = run_ok(&["channel-extract", "-i", path_str(&path)], 0);
    let all_to_l = MuellerMatrix::from_rows([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
    ]);
    assert!(rows(&r["mueller"]).max_abs_diff(&all_to_l) < 1e-10);

    let out = qpolar(&["channel-extract", "-i", path_str(&path), "--nmax", "6"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncation"));
}

#[test]
fn negative_weight_function_is_a_verdict() {
    let spec_path = fixture("negative_weight.json");
    let r = run_ok(&["weightfn-check", "-i", path_str(&spec_path), "--grid", "64"], 2);
    assert_eq!(r["verdict"], "negative");
    assert_eq!(r["nodes_checked"], 64 * 64 * 64);
    assert!(!r["violations"].as_array().unwrap().is_empty());
    let spec: WeightFunctionSpec = serde_json::from_str(&fs::read_to_string(&spec_path).unwrap()).unwrap();
    let lib = scan_weight_positivity(&spec, 64).unwrap();
    assert_eq!(r["violations_total"], lib.violations_total);
    assert_eq!(r["min_value"].as_f64(), Some(lib.min_value));

    let doc = fixture("negative_weight.channel.json");
    let r = run_ok(&["weightfn-check", "-i", path_str(&doc)], 2);
    assert_eq!(r["violations_total"], lib.violations_total);
    let r = run_ok(&["channel-extract", "-i", path_str(&doc)], 2);
    assert_eq!(r["verdict"], "positivity_failure");

    let ok = fixture("positive_weight.json");
    let r = run_ok(&["weightfn-check", "-i", path_str(&ok), "--grid", "16"], 0);
    assert_eq!(r["verdict"], "positive");
    assert_eq!(rows(&r["mueller"]), MuellerMatrix::from_diagonal([1.0, 0.0, 0.0, 0.5]));
}

#[test]
fn decompositions_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let m_path = dir.path().join("mix.mueller.json");
    run_ok(&["channel-extract", "-i", path_str(&fixture("mixture.channel.json")), "-o", path_str(&m_path)], 0);
    let m = load_mueller(&m_path).unwrap();

    let r = run_ok(&["decompose", "-i", path_str(&m_path), "--method", "cloude"], 0);
    let terms = cloude_decompose(&m, DECOMPOSITION_TOL).unwrap();
    let weights: Vec<f64> = r["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).collect();
    assert_eq!(weights, terms.iter().map(|t| t.weight).collect::<Vec<_>>());
    assert!(r["recombination_residual"].as_f64().unwrap() < 1e-10);
    for (t, lib) in r["terms"].as_array().unwrap().iter().zip(&terms) {
        assert_eq!(rows(&t["mueller"]), lib.mueller);
    }

    let r = run_ok(&["decompose", "-i", path_str(&m_path), "--method", "lu-chipman"], 0);
    let lc = lu_chipman(&m).unwrap();
    assert_eq!(rows(&r["depolarizer"]), lc.depolarizer);
    assert_eq!(rows(&r["diattenuator"]), lc.diattenuator);
    assert_eq!(rows(&r["retarder"]), lc.retarder);
    assert!(r["residual"].as_f64().unwrap() < 1e-9);

    // the all-to-L map carries polarizance but no diattenuation
    let r = run_ok(&["decompose", "-i", path_str(&fixture("all_to_left.mueller.json")), "--method", "lu-chipman"], 0);
    assert!(r["residual"].as_f64().unwrap() < 1e-12);
    let singular = fixture("ideal_polarizer.mueller.json");
    let r = run_ok(&["decompose", "-i", path_str(&singular), "--method", "lu-chipman"], 2);
    assert_eq!(r["verdict"], "degenerate");
    assert!(r["reason"].as_str().is_some());
    let r = run_ok(&["decompose", "-i", path_str(&fixture("unphysical.mueller.json")), "--method", "cloude"], 2);
    assert_eq!(r["verdict"], "unphysical");
}

#[test]
fn compose_uses_optical_order() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mueller.json");
    let b = dir.path().join("b.mueller.json");
    run_ok(&["random", "--seed", "1", "-o", path_str(&a)], 0);
    run_ok(&["random", "--seed", "2", "-o", path_str(&b)], 0);
    let out = qpolar(&["compose", "-i", path_str(&a), "-i", path_str(&b)]);
    assert_eq!(out.status.code(), Some(0));
    let cli = parse_mueller(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let (ma, mb) = (load_mueller(&a).unwrap(), load_mueller(&b).unwrap());
    assert!(cli.max_abs_diff(&compose(&mb, &ma)) < 1e-15);
    assert!(cli.max_abs_diff(&compose(&ma, &mb)) > 1e-3);
}

#[test]
fn random_is_deterministic() {
    let first = qpolar(&["random", "--seed", "5"]);
    let second = qpolar(&["random", "--seed", "5"]);
    assert_eq!(first.stdout, second.stdout);
    assert_ne!(first.stdout, qpolar(&["random", "--seed", "6"]).stdout);

    let dir = tempfile::tempdir().unwrap();
    let ch = dir.path().join("su3.channel.json");
    run_ok(&["random", "--kind", "channel", "--seed", "5", "-o", path_str(&ch)], 0);
    let r = run_ok(&["classify", "-i", path_str(&ch)], 0);
    assert_eq!(r["verdict"], "nondepolarizing");
}

#[test]
fn classify_mueller_and_channel() {
    let r = run_ok(&["classify", "-i", path_str(&fixture("identity.mueller.json"))], 0);
    assert_eq!(r["verdict"], "nondepolarizing");
    let r = run_ok(&["classify", "-i", path_str(&fixture("mixture.channel.json"))], 0);
    assert_eq!(r["verdict"], "depolarizing");
    assert_eq!(r["eigenvalues"].as_array().map(Vec::len), Some(4));
}

#[test]
fn simulate_matches_library_record() {
    let dir = tempfile::tempdir().unwrap();
    let exp = fixture("retarder.exp.json");
    let rec_path = dir.path().join("run.record.json");
    let out = qpolar(&["simulate", "-i", path_str(&exp), "-o", path_str(&rec_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with(&format!("record: {}", rec_path.display())));

    let config = parse_experiment(&fs::read_to_string(&exp).unwrap()).unwrap();
    let doc = config.channel_doc(exp.parent().unwrap()).unwrap();
    let mut lib = estimate_mueller(&doc.build(config.n_max).unwrap(), &standard_probes(1), config.shots, config.seed)
        .unwrap();
    lib.config.channel_spec = Some(serde_json::to_value(&doc).unwrap());
    assert_eq!(fs::read_to_string(&rec_path).unwrap(), record_to_string(&lib).unwrap());
    assert_eq!(load(&rec_path).unwrap(), lib);

    let again = dir.path().join("again.record.json");
    qpolar(&["simulate", "-i", path_str(&exp), "-o", path_str(&again)]);
    assert_eq!(fs::read(&rec_path).unwrap(), fs::read(&again).unwrap());

    let reseeded = dir.path().join("reseeded.record.json");
    qpolar(&["simulate", "-i", path_str(&exp), "-o", path_str(&reseeded), "--seed", "12"]);
    assert_ne!(fs::read(&rec_path).unwrap(), fs::read(&reseeded).unwrap());
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<String>> = {
        let malformed = dir.path().join("bad.mueller.json");
        fs::write(&malformed, "{ not json").unwrap();
        let old = dir.path().join("old.mueller.json");
        fs::write(&old, r#"{"schema": "qpolar/mueller/0", "mueller": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}"#)
            .unwrap();
        let id = fixture("identity.mueller.json").display().to_string();
        let ch = fixture("retarder.channel.json").display().to_string();
        vec![
            vec!["validate".into(), "--bogus".into()],
            vec!["frobnicate".into()],
            vec!["validate".into(), "-i".into(), "".into()],
            vec!["validate".into(), "-i".into(), dir.path().join("missing.json").display().to_string()],
            vec!["validate".into(), "-i".into(), malformed.display().to_string()],
            vec!["validate".into(), "-i".into(), old.display().to_string()],
            vec!["decompose".into(), "-i".into(), id.clone(), "--method".into(), "svd".into()],
            vec!["channel-extract".into(), "-i".into(), ch.clone(), "--nmax".into(), "0".into()],
            vec!["channel-extract".into(), "-i".into(), id],
        ]
    };
    for args in &cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = qpolar(&args);
        assert_eq!(out.status.code(), Some(1), "args {args:?}");
        assert!(!out.stderr.is_empty(), "args {args:?}");
    }
    let out = qpolar(&["validate", "-i", path_str(&dir.path().join("old.mueller.json"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("qpolar/mueller/0"));
}

#[test]
fn help_exits_zero() {
    let out = qpolar(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["validate", "decompose", "compose", "channel-extract", "classify", "simulate", "random", "weightfn-check"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}
