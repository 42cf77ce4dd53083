use std::path::Path;
use std::process::{Command, Output};

use pairsdf::field::{AnalyticField, Field};
use pairsdf::geometry::marching_cubes;
use pairsdf::io::write_obj;
use pairsdf::{BoundingBox, Point3};

fn pairsdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairsdf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = pairsdf(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_the_knobs() {
    let text = String::from_utf8(ok(&["refine", "--help"]).stdout).unwrap();
    for flag in [
        "--scenario",
        "--iterations",
        "--step",
        "--resample-every",
        "--mining-points",
        "--weight-intersecting",
        "--weight-contact",
        "--weight-ncontact",
        "--weight-data",
        "--optimizer",
        "--fit-iterations",
        "--p ",
        "--epsilon",
        "--d ",
        "--disable-loss",
        "--init",
        "--seed",
        "--threads",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    let top = String::from_utf8(ok(&["--help"]).stdout).unwrap();
    for sub in ["synth", "fit-space", "fit-latent", "refine", "mesh", "eval", "oracle-check"] {
        assert!(top.contains(sub), "missing {sub}");
    }
}

#[test]
fn invalid_scenarios_exit_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scene]\nbbox = [1, 2]\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(pairsdf(&["refine", "--scenario", s(&bad), "--out", s(&out)]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(pairsdf(&["fit-latent", "--scenario", s(&missing), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(pairsdf(&["refine", "--bogus"]).status.code(), Some(2));
}

#[test]
fn eval_of_identical_meshes_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let bbox = BoundingBox::new(Point3::splat(-1.0), Point3::splat(1.0)).unwrap();
    let sphere: Field = AnalyticField::sphere(Point3::ZERO, 0.6).into();
    let obj = dir.path().join("sphere.obj");
    write_obj(&obj, &marching_cubes(&sphere, &[], &bbox, 40).unwrap()).unwrap();
    let report = dir.path().join("report.jsonl");
    ok(&["eval", "--pred", s(&obj), "--gt", s(&obj), "--samples", "3000", "--out", s(&report)]);
    let line = std::fs::read_to_string(&report).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert!(v["chamfer"].as_f64().unwrap() < 1e-12);
    assert!(v["area_difference"].as_f64().unwrap().abs() < 1e-12);
    assert!(v["normal_consistency"].as_f64().unwrap() >= 0.999);
}

#[test]
fn oracle_check_passes() {
    let out = ok(&["oracle-check", "edt", "lens", "--masks", "10"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2, "{text}");
}

#[test]
fn split_stages_match_the_combined_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "sphere-pair", "--out", s(&data)]);
    let scenario = data.join("sphere-pair.toml");
    let knobs = ["--iterations", "8", "--fit-iterations", "6", "--mining-points", "4000"];

    let both = dir.path().join("both");
    let mut args = vec!["refine", "--scenario", s(&scenario), "--out", s(&both)];
    args.extend(knobs);
    ok(&args);

    let stage1 = dir.path().join("stage1.json");
    let mut args = vec!["fit-latent", "--scenario", s(&scenario), "--out", s(&stage1)];
    args.extend(knobs);
    ok(&args);
    let split = dir.path().join("split");
    let mut args = vec!["refine", "--scenario", s(&scenario), "--init", s(&stage1), "--out", s(&split)];
    args.extend(knobs);
    ok(&args);

    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(read(&stage1), read(&both.join("stage1.json")));
    assert_eq!(read(&split.join("latents.json")), read(&both.join("latents.json")));

    let meshes = dir.path().join("meshes");
    ok(&["mesh", "--scenario", s(&scenario), "--latents", s(&both.join("latents.json")), "--resolution", "32", "--out", s(&meshes)]);
    assert!(meshes.join("a.obj").exists() && meshes.join("b.obj").exists());
}
