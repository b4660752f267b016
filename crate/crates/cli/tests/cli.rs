use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn casimir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casimir"))
        .args(args)
        .output()
        .expect("run casimir")
}

fn run_config(dir: &Path, name: &str, config: &Value, extra: &[&str]) -> Output {
    let path = dir.join(name);
    std::fs::write(&path, config.to_string()).unwrap();
    let mut args = vec!["--config", path.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    casimir(&args)
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|s| s.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn corrugated_scene(h: f64, truncation: usize) -> Value {
    let curve = |r: f64| json!({"kind": "corrugated_circle", "radius": r, "amplitude": h, "frequency": 3});
    json!({
        "outer": {"curve": curve(2.0)},
        "inner": curve(1.0),
        "bc_outer": "dirichlet",
        "inner_kind": "perfect_conductor_dirichlet",
        "truncation": truncation,
        "points_per_curve": 2 * truncation + 1
    })
}

fn concentric_scene(truncation: usize) -> Value {
    json!({
        "outer": {"curve": {"kind": "circle", "radius": 2.0}},
        "inner": {"kind": "circle", "radius": 1.0},
        "bc_outer": "dirichlet",
        "inner_kind": "perfect_conductor_dirichlet",
        "truncation": truncation,
        "points_per_curve": 2 * truncation + 1
    })
}

fn phi0_sweep(points: usize) -> Value {
    json!({"parameter": "phi0", "start": 0.0, "stop": std::f64::consts::TAU, "count": points})
}

#[test]
fn eigen_task_finds_first_disk_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "eigen",
        "eigen": {"curve": {"kind": "circle", "radius": 1.0}, "range": [2.0, 4.0], "truncation": 8}
    });
    let out = run_config(dir.path(), "eigen.json", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_table(&dir.path().join("eigen.csv"));
    assert_eq!(header, ["lambda", "residual"]);
    assert!((rows[0][0] - 2.404826).abs() < 1e-4, "{}", rows[0][0]);
    let meta = read_json(&dir.path().join("eigen.json"));
    assert_eq!(meta["artifact"], "casimir");
    assert_eq!(meta["truncation"], 8);
    assert_eq!(meta["points"], 17);
}

#[test]
fn flat_phi0_sweep_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"task": "sweep", "scene": corrugated_scene(0.0, 6), "sweep": phi0_sweep(8)});
    let out = run_config(dir.path(), "flat.json", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_table(&dir.path().join("sweep.csv"));
    assert_eq!(header, ["phi0", "energy", "error"]);
    assert_eq!(rows.len(), 8);
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[1]), b.max(r[1])));
    let err: f64 = rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    assert!(hi - lo <= 2.0 * err, "range {} vs error {err}", hi - lo);
}

#[test]
fn fit_of_shallow_corrugation_sweep_is_cosine() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = json!({"task": "sweep", "scene": corrugated_scene(0.1, 10), "sweep": phi0_sweep(16)});
    let out = run_config(dir.path(), "sweep_cfg.json", &sweep, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = dir.path().join("sweep.csv");
    let fit = json!({"task": "fit", "fit": {"input": table}});
    let out = run_config(dir.path(), "fit_cfg.json", &fit, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = &read_json(&dir.path().join("fit.json"))["results"];
    let (a, r) = (res["amplitude"].as_f64().unwrap(), res["residual_rms"].as_f64().unwrap());
    assert!(a > 0.0);
    assert!(r / a.abs() <= 0.05, "{r} / {a}");
    // the sweep sidecar carries the same fit
    let inline = &read_json(&dir.path().join("sweep.json"))["results"]["fit"];
    assert_eq!(inline["amplitude"].as_f64().unwrap(), a);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let code = |o: &Output| o.status.code().unwrap();

    let unknown = json!({"task": "energy", "scene": concentric_scene(4), "seed": 7});
    let o = run_config(p, "unknown.json", &unknown, &[]);
    assert_eq!(code(&o), 2);
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("seed") && msg.trim().lines().count() == 1, "{msg}");

    let mut nested = concentric_scene(4);
    nested["inner"]["colour"] = json!("red");
    assert_eq!(code(&run_config(p, "nested.json", &json!({"task": "energy", "scene": nested}), &[])), 2);

    let mut crossing = concentric_scene(4);
    crossing["inner"]["radius"] = json!(2.5);
    assert_eq!(code(&run_config(p, "crossing.json", &json!({"task": "energy", "scene": crossing}), &[])), 2);

    let no_scene = json!({"task": "energy"});
    assert_eq!(code(&run_config(p, "none.json", &no_scene, &[])), 2);

    let bad_grid = json!({"task": "sweep", "scene": concentric_scene(4), "sweep": {"parameter": "eps_y", "values": [0.0, 0.2, 0.1]}});
    assert_eq!(code(&run_config(p, "grid.json", &bad_grid, &[])), 2);

    assert_eq!(code(&casimir(&["--config", p.join("missing.json").to_str().unwrap()])), 2);
    assert_eq!(code(&casimir(&["--bogus"])), 2);

    // a quadrature that cannot meet its tolerance
    let strict = json!({
        "task": "energy",
        "scene": concentric_scene(3),
        "quadrature": {"panels": 1, "nodes_per_panel": 2, "refinement_tolerance": 1e-15, "max_refinements": 1}
    });
    let o = run_config(p, "strict.json", &strict, &[]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("numerical failure"));

    let ok = json!({"task": "energy", "scene": concentric_scene(4)});
    let o = run_config(p, "ok.json", &ok, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_table(&p.join("energy.csv"));
    assert_eq!(header, ["energy", "error"]);
    assert!(rows[0][0] < 0.0);
}

#[test]
fn task_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "energy",
        "scene": corrugated_scene(0.1, 6),
        "torque": {"phi0": 0.0}
    });
    let o = run_config(dir.path(), "t.json", &cfg, &["--task", "torque"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_table(&dir.path().join("torque.csv"));
    assert_eq!(header, ["phi0", "torque", "error"]);
    assert!(rows[0][1].abs() <= rows[0][2] + 1e-12);
}

#[test]
fn output_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "sweep",
        "scene": corrugated_scene(0.1, 6),
        "sweep": {"parameter": "phi0", "values": [0.0, 0.7, 1.9]}
    });
    let mut tables = Vec::new();
    for threads in ["1", "3", "0"] {
        let sub = dir.path().join(format!("t{threads}"));
        std::fs::create_dir_all(&sub).unwrap();
        let o = run_config(&sub, "c.json", &cfg, &["--threads", threads]);
        assert!(o.status.success());
        tables.push(std::fs::read(sub.join("sweep.csv")).unwrap());
    }
    assert!(tables.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sidecar_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "sweep",
        "scene": concentric_scene(5),
        "sweep": {"parameter": "eps_x", "values": [-0.2, 0.0, 0.3]}
    });
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    std::fs::create_dir_all(&first).unwrap();
    assert!(run_config(&first, "c.json", &cfg, &[]).status.success());
    let sidecar = first.join("sweep.json");
    let meta = read_json(&sidecar);
    // the echo spells out defaults the input left implicit
    assert_eq!(meta["config"]["scene"]["eps_inner"], 1.0);
    assert_eq!(meta["config"]["sweep"], cfg["sweep"]);
    let o = casimir(&["--config", sidecar.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(first.join("sweep.csv")).unwrap(),
        std::fs::read(second.join("sweep.csv")).unwrap()
    );
    let text = std::fs::read_to_string(&sidecar).unwrap();
    let at = |k: &str| text.find(&format!("\n  \"{k}\":")).unwrap();
    assert!(at("artifact") < at("version") && at("version") < at("task") && at("results") < at("config"));
}

#[test]
fn fig4_preset_echoes_the_ellipse() {
    let dir = tempfile::tempdir().unwrap();
    let o = casimir(&["--preset", "fig4", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = read_json(&dir.path().join("fig4.json"));
    let p = &meta["preset"];
    assert_eq!(p["b1"], 4.0);
    assert_eq!(p["b2"], 4.33);
    assert!((p["f"].as_f64().unwrap() - 1.66).abs() < 5e-3);
    assert_eq!((meta["truncation"].as_u64(), meta["points"].as_u64()), (Some(15), Some(31)));
    let (header, rows) = read_table(&dir.path().join("fig4.csv"));
    assert_eq!(header, ["eps_y", "energy", "error"]);
    assert_eq!(rows.len(), 13);
    // centred position is the least negative
    let mid = rows[6][1];
    assert!(rows.iter().all(|r| r[1] <= mid));
}
