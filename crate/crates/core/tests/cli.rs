use std::process::Command;

use expdyn::certify::{classify_with, Certificate};
use expdyn::cli::run;
use expdyn::io::{CertificateJson, Config, Palette, RenderSpec};
use expdyn::orbit::ExpParameter;
use expdyn::rng::SplitMix64;
use serde_json::Value;

fn exec(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("expdyn").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn classify_contracting_parameter() {
    let (code, out, _) = exec(&["classify", "--lambda", "0.3,0", "--json", "-"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["verdict"], "Hyperbolic");
    assert_eq!(v["period"], 1);
    let cert: CertificateJson = serde_json::from_value(v["certificate"].clone()).unwrap();
    Certificate::try_from(cert).unwrap().verify().unwrap();
}

#[test]
fn classify_writes_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let (code, out, _) = exec(&["classify", "--lambda", "-1,0", "--json", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    assert_eq!(json(&std::fs::read_to_string(path).unwrap())["period"], 1);
}

#[test]
fn malformed_input_exits_one_with_usage() {
    for args in [
        vec!["classify", "--lambda", "bogus"],
        vec!["classify", "--lambda", "0,0"],
        vec!["classify"],
        vec!["frobnicate"],
        vec!["density", "--center", "0.25,0", "--radii", "0.01,0.05", "--samples", "10"],
        vec!["density", "--center", "0.25,0", "--radii", "0.05", "--samples", "0"],
        vec!["deep-left", "--lambda0", "0,6.28", "--x", "3", "--L1", "-1", "--L2", "-0.5"],
        vec!["render", "--rect", "1,0,0,1", "--px", "2,2", "--out", "/dev/null"],
        vec!["cascade", "--lambda0", "0,6.28", "--square", "0,0", "--x", "20"],
        vec!["misiurewicz", "--seed", "0,6", "--preperiod", "0", "--period", "1"],
    ] {
        let (code, _, err) = exec(&args);
        assert_eq!(code, 1, "{args:?}");
        assert!(!err.is_empty(), "{args:?}");
    }
    let (_, _, err) = exec(&["classify", "--lambda", "bogus"]);
    assert!(err.contains("Usage") || err.contains("--help"));
}

#[test]
fn numeric_failures_exit_two() {
    // Not certified.
    assert_eq!(exec(&["classify", "--lambda", "1,0"]).0, 2);
    // Escapes before n steps.
    assert_eq!(exec(&["transfer", "--lambda1", "0,6.283185307179586", "--lambda2", "0,6.28", "--start", "0.01,6.28", "--n", "20"]).0, 2);
    // Newton lands on a non-repelling or non-Misiurewicz point.
    assert_eq!(exec(&["misiurewicz", "--seed", "0.1,0", "--preperiod", "1", "--period", "1"]).0, 2);
}

#[test]
fn misiurewicz_example() {
    let (code, out, _) = exec(&["misiurewicz", "--seed", "0,6.0", "--preperiod", "1", "--period", "1"]);
    assert_eq!(code, 0);
    let v = json(&out);
    let (re, im) = (v["lambda"][0].as_f64().unwrap(), v["lambda"][1].as_f64().unwrap());
    assert!(re.abs() < 1e-10 && (im - std::f64::consts::TAU).abs() < 1e-10);
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["lambda", "preperiod", "period", "residual", "mult_log_mod", "ps_bound"]);
}

#[test]
fn density_is_deterministic_and_dumps_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let args = ["density", "--center", "0,6.283185307179586", "--radii", "0.1,0.01", "--samples", "200", "--rng-seed", "5"];
    let (c1, a, _) = exec(&args);
    let mut with_csv = args.to_vec();
    with_csv.extend(["--csv", csv.to_str().unwrap()]);
    let (c2, b, _) = exec(&with_csv);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, b);
    let v = json(&a);
    assert_eq!(v["seed"], 5);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "radius,lambda_re,lambda_im,verdict,period,iterations");
    assert_eq!(lines.count(), 400);

    let (code, out, _) = exec(&["density", "--center", "0,6.28", "--radii", "0.1", "--samples", "50", "--annulus", "--gamma", "0.25", "--sectors", "4"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["annulus"]["sectors"], 4);
}

#[test]
fn measure_commands_produce_reports() {
    let (code, out, _) = exec(&["entry-stats", "--lambda0", "0,6.283185307179586", "--x", "3", "--grid", "20", "--tmax", "1e5"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["total"], 316);

    let (code, out, _) = exec(&[
        "deep-left", "--lambda0", "0,6.283185307179586", "--x", "3", "--L1", "-20.085536923187668", "--L2", "-60", "--grid", "20",
    ]);
    assert_eq!(code, 0);
    assert!(json(&out)["fraction_S0"].is_number());

    let (code, out, _) = exec(&["cascade", "--lambda0", "0,6.283185307179586", "--square", "0,2", "--x", "40"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["witness_validated"], true);

    let (code, out, _) = exec(&["constants", "--lambda0", "0,6", "--samples", "50"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["samples"], 50);
}

#[test]
fn transfer_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let (code, out, _) = exec(&[
        "transfer", "--lambda1", "0,6.283185307179586", "--lambda2", "0,6.28318530718", "--start", "0,6.283185307179586", "--n", "15", "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert!(v["result"]["max_dev"].as_f64().unwrap() < 1e-6);
    assert!(v["conjugacy_residual"].as_f64().unwrap() < 1e-12);
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().next().unwrap(), "k,dev,z_mod");
}

#[test]
fn render_matches_standalone_classification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tile.ppm");
    let (w, h) = (48usize, 36usize);
    let (code, _, _) = exec(&["render", "--rect", "-3.5,-2,1,2", "--px", "48,36", "--out", out.to_str().unwrap(), "--budget", "20000"]);
    assert_eq!(code, 0);
    let img = std::fs::read(out).unwrap();
    let header = format!("P6\n{w} {h}\n255\n");
    assert!(img.starts_with(header.as_bytes()));
    let pixels = &img[header.len()..];
    assert_eq!(pixels.len(), 3 * w * h);

    let spec = RenderSpec::new((-3.5, -2.0, 1.0, 2.0), (w, h));
    let cfg = Config { n_max: 20_000, ..Config::default() }.classify_config();
    let palette = Palette::default();
    let mut g = SplitMix64::new(8);
    for _ in 0..100 {
        let (col, row) = ((g.next_u64() % w as u64) as usize, (g.next_u64() % h as u64) as usize);
        let expected = match ExpParameter::new(spec.pixel_center(col, row)) {
            Ok(p) => palette.color(&classify_with(p, &cfg).verdict),
            Err(_) => palette.escape,
        };
        let i = 3 * (row * w + col);
        assert_eq!(&pixels[i..i + 3], &expected, "pixel ({col}, {row})");
    }
}

#[test]
fn help_exits_zero() {
    let (code, out, _) = exec(&["--help"]);
    assert_eq!(code, 0);
    for cmd in ["classify", "misiurewicz", "density", "entry-stats", "deep-left", "transfer", "constants", "cascade", "render"] {
        assert!(out.contains(cmd), "{cmd}");
    }
}

#[test]
fn binary_reads_config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_expdyn");

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "n_max = 100\nbogus = 1\n").unwrap();
    let o = Command::new(bin).args(["classify", "--lambda", "0.3,0"]).env("EXPDYN_CONFIG", &bad).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    // A tiny budget from the file leaves λ = -2.5 (period 2) undecided; the
    // flag overrides it.
    let small = dir.path().join("small.cfg");
    std::fs::write(&small, "# tight budget\nn_max = 3\n").unwrap();
    let o = Command::new(bin).args(["classify", "--lambda", "-2.5,0"]).env("EXPDYN_CONFIG", &small).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(bin)
        .args(["classify", "--lambda", "-2.5,0", "--budget", "100000"])
        .env("EXPDYN_CONFIG", &small)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));

    // --config beats the environment.
    let o = Command::new(bin)
        .args(["--config", small.to_str().unwrap(), "classify", "--lambda", "-2.5,0"])
        .env("EXPDYN_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_expdyn");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let p = dir.path().join(format!("r{i}.json"));
        let st = Command::new(bin)
            .args(["density", "--center", "0.25,0", "--radii", "0.05", "--samples", "300", "--rng-seed", "11", "--out", p.to_str().unwrap()])
            .env_remove("EXPDYN_CONFIG")
            .status()
            .unwrap();
        assert!(st.success());
        outputs.push(std::fs::read(p).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
