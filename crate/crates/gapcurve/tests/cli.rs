use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gapcurve::geometry::{circle_r3, CurveSamples};
use gapcurve::potential::Potential;
use num_complex::Complex64 as C64;
use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gapcurve-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn gapcurve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapcurve")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_potential(path: &Path, q: &Potential) {
    fs::write(path, q.to_json()).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn circle_ingests_to_unit_curvature() {
    let dir = scratch("circle");
    let (csv, out) = (dir.join("circle.csv"), dir.join("q.json"));
    fs::write(&csv, circle_r3(128).to_csv()).unwrap();
    let o = gapcurve(&["ingest", "--input", s(&csv), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let q = Potential::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    // curvature 1, up to a constant phase
    let worst = q.samples.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    assert!(q.theta.abs() < 1e-6);
}

#[test]
fn open_curve_is_a_domain_error() {
    let dir = scratch("open");
    let (csv, out) = (dir.join("arc.csv"), dir.join("q.json"));
    let n = 64;
    let points = (0..n)
        .map(|j| {
            let t = PI * j as f64 / n as f64;
            vec![t.cos(), t.sin(), 0.0]
        })
        .collect();
    let arc = CurveSamples::new(gapcurve::geometry::Space::R3, PI, points).unwrap();
    fs::write(&csv, arc.to_csv()).unwrap();
    let o = gapcurve(&["ingest", "--input", s(&csv), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("curve not closed"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn malformed_csv_reports_the_line() {
    let dir = scratch("malformed");
    let (csv, out) = (dir.join("bad.csv"), dir.join("q.json"));
    let mut text = circle_r3(16).to_csv();
    text.push_str("0.5,abc,0\n");
    fs::write(&csv, text).unwrap();
    let o = gapcurve(&["ingest", "--input", s(&csv), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    let o = gapcurve(&["reconstruct", "--input", "a", "--output", "b", "--space", "h3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn vacuum_and_constant_spectra_are_finite_gap() {
    let dir = scratch("spectrum");
    for (name, value) in [("vacuum", 0.0), ("constant", 1.0)] {
        let (input, out) = (dir.join(format!("{name}.json")), dir.join(format!("{name}.spec.json")));
        write_potential(&input, &Potential::from_fn(128, 2.0 * PI, 0.0, |_| C64::new(value, 0.0)).unwrap());
        let o = gapcurve(&["spectrum", "--input", s(&input), "--output", s(&out), "--modes", "12"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let report = json(&dir.join(format!("{name}.spec.report.json")));
        assert_eq!(report["verdict"]["finite_gap"], Value::Bool(true), "{name}: {report}");
        assert!(report["max_abs_z"].as_f64().unwrap() < 1e-8);
        assert!(dir.join(format!("{name}.spec.diagnostics.csv")).exists());
    }
}

#[test]
fn reconstruct_vacuum_and_constant() {
    let dir = scratch("reconstruct");
    let (vac, line) = (dir.join("vac.json"), dir.join("line.csv"));
    write_potential(&vac, &Potential::zero(64, 2.0 * PI).unwrap());
    let o = gapcurve(&["reconstruct", "--input", s(&vac), "--output", s(&line), "--space", "r3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = CurveSamples::from_csv(&fs::read_to_string(&line).unwrap()).unwrap();
    // a straight unit-speed line: every point on the chord through γ(0) and γ(h)
    let d: Vec<f64> = (0..3).map(|i| c.points[1][i] - c.points[0][i]).collect();
    for (j, p) in c.points.iter().enumerate() {
        for i in 0..3 {
            assert!((p[i] - c.points[0][i] - j as f64 * d[i]).abs() < 1e-10);
        }
    }
    assert!((d.iter().map(|x| x * x).sum::<f64>().sqrt() - c.step()).abs() < 1e-12);

    let (one, circle) = (dir.join("one.json"), dir.join("circle.csv"));
    write_potential(&one, &Potential::from_fn(128, 2.0 * PI, 0.0, |_| C64::new(1.0, 0.0)).unwrap());
    let o = gapcurve(&["reconstruct", "--input", s(&one), "--output", s(&circle), "--space", "r3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.join("circle.report.json"));
    assert!(report["endpoint_gap"].as_f64().unwrap() < 1e-8, "{report}");
}

#[test]
fn compare_identical_and_shifted_curves() {
    let dir = scratch("compare");
    let (a, b, out) = (dir.join("a.csv"), dir.join("b.csv"), dir.join("d.json"));
    let c = circle_r3(64);
    fs::write(&a, c.to_csv()).unwrap();
    let moved = CurveSamples::new(c.space, c.period, c.points.iter().map(|p| vec![p[0] + 3.0, p[1], p[2]]).collect())
        .unwrap();
    fs::write(&b, moved.to_csv()).unwrap();
    let o = gapcurve(&["compare", "--input", s(&a), "--input", s(&b), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d = json(&out);
    let raw: Vec<f64> = d["raw"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let aligned: Vec<f64> = d["aligned"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    // translation by 3: the L² distance is 3·√T, derivatives agree
    assert!((raw[0] - 3.0 * (2.0 * PI).sqrt()).abs() < 1e-9, "{raw:?}");
    assert!(aligned.iter().all(|x| *x < 1e-9), "{aligned:?}");
}

#[test]
fn outputs_are_deterministic() {
    let dir = scratch("determinism");
    let input = dir.join("q.json");
    let q = Potential::from_fn(128, 2.0 * PI, 0.0, |t| C64::new(0.3 * t.cos(), 0.1 * (2.0 * t).sin())).unwrap();
    write_potential(&input, &q);
    let mut runs = Vec::new();
    for r in 0..2 {
        let (spec, approx) = (dir.join(format!("spec{r}.json")), dir.join(format!("approx{r}.json")));
        let o = gapcurve(&["spectrum", "--input", s(&input), "--output", s(&spec), "--modes", "10"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let o = gapcurve(&["approximate", "--input", s(&input), "--output", s(&approx), "--trunc", "3", "--seed", "7"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        runs.push([spec, approx].map(|p| fs::read(p).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn invalid_config_leaves_no_output() {
    let dir = scratch("config");
    let (input, cfg, out) = (dir.join("q.json"), dir.join("cfg.json"), dir.join("out.json"));
    write_potential(&input, &Potential::zero(64, 2.0 * PI).unwrap());
    fs::write(&cfg, r#"{"n_trunc": 4, "bogus": 1}"#).unwrap();
    let o = gapcurve(&["approximate", "--input", s(&input), "--output", s(&out), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}
