use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rmtdiag::eigen::gram_spectrum;
use rmtdiag::rmt::gen_iid_gaussian;
use rmtdiag::weight_io::{read_bundle, write_bundle, LayerMatrix, WeightBundle};
use serde_json::Value;

fn rmtdiag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmtdiag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rmtdiag(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn bundle_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn layer(name: &str, rows: usize, cols: usize, seed: u64, depth: usize) -> LayerMatrix {
    let g = gen_iid_gaussian(rows, cols, 1.0, seed).unwrap();
    LayerMatrix::new(name, rows, cols, g.values().to_vec(), depth).unwrap()
}

#[test]
fn synth_gaussian_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        ok(&["synth", "gaussian", "--m", "512", "--n", "2048", "--sigma2", "1", "--seed", "7", "--out", s(out)]);
    }
    ok(&["synth", "gaussian", "--m", "512", "--n", "2048", "--sigma2", "1", "--seed", "8", "--out", s(&c)]);
    let fa = bundle_files(&a);
    assert_eq!(fa.len(), 3);
    assert_eq!(fa, bundle_files(&b));
    assert_ne!(fa["gaussian.bin"], bundle_files(&c)["gaussian.bin"]);
}

#[test]
fn gaussian_bundle_report_matches_null_model() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let json = dir.path().join("r.json");
    ok(&["synth", "gaussian", "--m", "1024", "--n", "512", "--seed", "3", "--out", s(&g)]);
    ok(&["--quiet", "analyze", s(&g), "--json", s(&json)]);
    let o = &report(&json)["layers"][0]["observables"];
    assert_eq!(o["sigma_source"], "init");
    assert!(o["mp_ks"].as_f64().unwrap() < 0.02, "{o}");
    assert!(o["outlier_fraction"].as_f64().unwrap() <= 0.02);
    // one 512-level spectrum: ⟨r⟩ has a standard deviation near 0.012
    assert!((o["spacing_ratio"].as_f64().unwrap() - 0.531).abs() < 0.05, "{o}");
}

#[test]
fn report_bytes_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&["synth", "spiked", "--m", "120", "--n", "200", "--seed", "1", "--out", s(&g)]);
    let (r1, r2) = (dir.path().join("1.json"), dir.path().join("2.json"));
    let t1 = ok(&["analyze", s(&g), "--json", s(&r1)]);
    let t2 = ok(&["analyze", s(&g), "--json", s(&r2)]);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    assert_eq!(t1, t2);
    let v = report(&r1);
    assert_eq!(v["tool_version"], env!("CARGO_PKG_VERSION"));
    let raw = fs::read_to_string(&r1).unwrap();
    let pos = |k: &str| raw.find(&format!("\"{k}\"")).unwrap();
    assert!(pos("tool_version") < pos("command") && pos("command") < pos("bundle_ids"));
    // the top-level warnings list closes the document
    assert!(pos("bottleneck") < raw.rfind("\"warnings\"").unwrap());
}

#[test]
fn supercritical_spike_is_one_outlier() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("s");
    let json = dir.path().join("r.json");
    ok(&["synth", "spiked", "--m", "512", "--n", "1024", "--theta-mult", "4", "--spikes", "1", "--seed", "21", "--out", s(&b)]);
    ok(&["--quiet", "--json", s(&json), "analyze", s(&b)]);
    let o = &report(&json)["layers"][0]["observables"];
    assert_eq!(o["outlier_count"], 1);
    let lambda_plus = o["lambda_plus"].as_f64().unwrap();
    let bundle = read_bundle(&b).unwrap();
    let spectrum = gram_spectrum(&bundle.layers()[0], false).unwrap();
    let above = spectrum
        .eigenvalues()
        .iter()
        .filter(|&&v| v > 1.05 * lambda_plus)
        .count();
    assert_eq!(above, 1);
}

#[test]
fn pareto_sample_recovers_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let mut total = 0.0;
    for seed in 0..10 {
        let p = dir.path().join(format!("p{seed}.json"));
        let r = dir.path().join(format!("r{seed}.json"));
        ok(&["synth", "pareto", "--alpha", "2.1", "--count", "5000", "--seed", &seed.to_string(), "--out", s(&p)]);
        ok(&["--quiet", "analyze", s(&p), "--json", s(&r)]);
        total += report(&r)["sample"]["tail"]["alpha"].as_f64().unwrap();
    }
    let mean = total / 10.0;
    assert!((mean - 2.1).abs() <= 0.1, "mean α = {mean}");
}

#[test]
fn missing_init_falls_back_to_fitted_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    let bundle = WeightBundle::new("noinit", vec![layer("fc", 200, 100, 5, 0)], BTreeMap::new()).unwrap();
    write_bundle(&bundle, &b).unwrap();
    let json = dir.path().join("r.json");
    let text = ok(&["analyze", s(&b), "--json", s(&json)]);
    let v = report(&json);
    assert_eq!(v["layers"][0]["observables"]["sigma_source"], "fitted");
    let warnings = v["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("no initialization snapshot")));
    assert!(text.contains("warning:"));
}

#[test]
fn layer_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    let bundle = WeightBundle::new(
        "two",
        vec![layer("big", 200, 100, 1, 0), layer("head", 10, 200, 2, 1)],
        BTreeMap::new(),
    )
    .unwrap();
    write_bundle(&bundle, &b).unwrap();
    let json = dir.path().join("r.json");
    ok(&["--quiet", "analyze", s(&b), "--layer", "head", "--json", s(&json)]);
    let v = report(&json);
    assert_eq!(v["bottleneck"]["layer_name"], "head");
    let reason = v["bottleneck"]["reason"].as_str().unwrap();
    assert!(reason.contains("override") && reason.contains("below the resolution floor"));
}

fn noise_gradient(dir: &Path) -> PathBuf {
    let mut csv = String::from("bundle_path,noise_fraction,test_accuracy,seed\n");
    for (i, eta) in [0.0, 0.5, 1.0].iter().enumerate() {
        for seed in 0..2u64 {
            let name = format!("eta{i}_s{seed}");
            let bundle = WeightBundle::new(
                name.clone(),
                vec![layer("hidden", 120, 60, 10 * i as u64 + seed, 0), layer("out", 5, 120, 99, 1)],
                BTreeMap::new(),
            )
            .unwrap();
            write_bundle(&bundle, dir.join(&name)).unwrap();
            csv.push_str(&format!("{name},{eta},{},{seed}\n", 0.95 - 0.8 * eta + 0.01 * seed as f64));
        }
    }
    let path = dir.join("runs.csv");
    fs::write(&path, csv).unwrap();
    path
}

#[test]
fn calibrate_detect_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let runs = noise_gradient(dir.path());
    let model = dir.path().join("model.json");
    ok(&["calibrate", s(&runs), "--out", s(&model)]);
    let m = report(&model);
    assert_eq!(m["target"], "noise_fraction");
    assert_eq!(m["nodes"].as_array().unwrap().len(), 3);
    for key in ["slope", "intercept", "loo_r2", "warnings"] {
        assert!(m.get(key).is_some(), "model lacks {key}");
    }

    let stdout = ok(&["detect", s(&model), s(&dir.path().join("eta1_s0"))]);
    let d: Value = serde_json::from_str(stdout.trim()).unwrap();
    let eta = d["estimated_noise"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&eta));

    let json = dir.path().join("cmp.json");
    let table = ok(&["compare", s(&runs), "--json", s(&json)]);
    assert!(table.contains("tail_alpha") && table.contains("product_spectral"));
    let rows = report(&json)["comparison"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.as_object().unwrap().len() == 2));
    let r2: Vec<f64> = rows.iter().map(|r| r["loo_r2"].as_f64().unwrap()).collect();
    assert!(r2.windows(2).all(|w| w[0] >= w[1]));
}

fn expect_failure(args: &[&str], code: i32, class: &str) {
    let out = rmtdiag(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    let v: Value = serde_json::from_str(&stderr).unwrap();
    assert_eq!(v["error"], class);
    assert!(!v["message"].as_str().unwrap().is_empty());
}

#[test]
fn errors_exit_nonzero_with_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    expect_failure(&["analyze", s(&missing)], 1, "io");
    expect_failure(&["synth", "gaussian", "--m", "4", "--n", "4", "--out", s(&missing)], 2, "validation");
    expect_failure(&["no-such-command"], 2, "validation");

    let g = dir.path().join("g");
    ok(&["synth", "gaussian", "--m", "60", "--n", "60", "--seed", "1", "--out", s(&g)]);
    expect_failure(&["analyze", s(&g), "--hill-q", "1.5"], 2, "validation");
    expect_failure(&["analyze", s(&g), "--layer", "nope"], 2, "validation");

    let bad_csv = dir.path().join("runs.csv");
    fs::write(&bad_csv, "path,eta\nx,0\n").unwrap();
    expect_failure(&["compare", s(&bad_csv)], 2, "validation");

    let bad_model = dir.path().join("model.json");
    fs::write(&bad_model, "{\"target\": 3}").unwrap();
    expect_failure(&["detect", s(&bad_model), s(&g)], 2, "validation");

    let tiny = dir.path().join("tiny.json");
    ok(&["synth", "poisson-gaps", "--count", "5", "--seed", "1", "--out", s(&tiny)]);
    expect_failure(&["fit-mp", s(&tiny)], 2, "validation");
}
