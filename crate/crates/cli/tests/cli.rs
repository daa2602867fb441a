use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn skewnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewnet")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = skewnet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    ok(&["generate", "random-bipartite", "--params", "n=30,b=2,stabilize=true,lambda=0.5", "--seed", "4", "-o", p(&g)]);
    let mut tables = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        ok(&["simulate", "-g", p(&g), "--horizon", "300", "--seed", "9", "--tail-k", "1,2", "-o", p(&out)]);
        tables.push(fs::read(&out).unwrap());
        assert!(dir.path().join(format!("{name}.json")).exists());
    }
    assert_eq!(tables[0], tables[1]);
    let header = String::from_utf8(tables[0].clone()).unwrap();
    assert!(header.starts_with("run_id,seed,policy,server_id,group,mean_queue,p_ge_1,p_ge_2,sim_time,events\n"));

    let other = dir.path().join("c.csv");
    ok(&["simulate", "-g", p(&g), "--horizon", "300", "--seed", "10", "--tail-k", "1,2", "-o", p(&other)]);
    assert_ne!(fs::read(&other).unwrap(), tables[0]);
}

#[test]
fn generated_graph_carries_provenance() {
    let out = ok(&["generate", "er", "--params", "n=50", "--seed", "3"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let text = v.to_string();
    assert!(text.contains("\"family\""), "{text}");
    assert!(text.contains("\"seed\":3"), "{text}");
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(skewnet(&["generate", "dandelion", "--params", "n=2,typo=1"]).status.code(), Some(2));
    assert_eq!(skewnet(&["generate", "dandelion", "--params", "b=2"]).status.code(), Some(2));
    assert_eq!(skewnet(&["simulate", "-g", "missing.json"]).status.code(), Some(1));
    assert_eq!(skewnet(&["preset", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(skewnet(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn resource_cap_exits_4_and_failed_solve_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("d.json");
    ok(&["generate", "dandelion", "--params", "n=2,b=1,c=1,lambda=0.9", "-o", p(&g)]);
    let capped = skewnet(&["exact", "-g", p(&g), "-K", "10", "--state-cap", "100"]);
    assert_eq!(capped.status.code(), Some(4));
    let strict = skewnet(&["exact", "-g", p(&g), "-K", "10", "--solver", "iterative", "--tolerance", "1e-300"]);
    assert_eq!(strict.status.code(), Some(3));
}

#[test]
fn exact_report_has_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("d.json");
    let r = dir.path().join("r.json");
    ok(&["generate", "dandelion", "--params", "n=2,b=1,c=1,lambda=0.9", "-o", p(&g)]);
    ok(&["exact", "-g", p(&g), "-K", "8", "--checks", "drift,minrate,central,center-count,thm2", "--thm2-ns", "1,2", "-o", p(&r)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    assert_eq!(v["holds"], true);
    assert!(v["boundary_mass"].as_f64().unwrap() < 1e-2);
    assert!(v["drift"]["max_residual"].as_f64().unwrap() < 1e-8);
    for row in v["minrate"].as_array().unwrap() {
        assert!(row["lhs"].as_f64().unwrap() <= row["mu"].as_f64().unwrap() + 1e-9);
    }
    assert_eq!(v["thm2"]["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn couple_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("d.json");
    let ops = dir.path().join("ops.json");
    ok(&["generate", "dandelion", "--params", "n=3,b=2,c=1,lambda=1.5", "-o", p(&g)]);
    fs::write(
        &ops,
        r#"[{"op":"decrease_arrival","d":0,"lambda":1.0},{"op":"increase_service","u":1,"mu":2.0},
            {"op":"edge_simplify","d":1,"u":0},{"op":"add_server","d":2,"mu":1.0}]"#,
    )
    .unwrap();
    let out = ok(&["couple", "-g", p(&g), "--ops", p(&ops), "--events", "3000", "--seeds", "4"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["violations"], 0);
    assert_eq!(v["events"], 12000);
    assert_eq!(v["seeds"].as_array().unwrap().len(), 4);

    fs::write(&ops, r#"[{"op":"decrease_arrival","d":0,"lambda":9.0}]"#).unwrap();
    assert_eq!(skewnet(&["couple", "-g", p(&g), "--ops", p(&ops)]).status.code(), Some(2));
}

#[test]
fn preset_config_round_trips_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["preset", "--preset", "random-bipartite-skew", "--print-config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let toml_path = dir.path().join("cfg.toml");
    let edited = text
        .replace("ns = [100, 1000, 10000]", "ns = [50, 100]")
        .replace("replicas = 20", "replicas = 2");
    fs::write(&toml_path, &edited).unwrap();
    let again = ok(&["preset", "--config", p(&toml_path), "--print-config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), edited);

    let run = |sub: &str, cfg: &Path| {
        let o = dir.path().join(sub);
        ok(&["preset", "--config", p(cfg), "--out", p(&o), "--seed", "5", "--jobs", "2"]);
        fs::read(o.join("skew_growth.csv")).unwrap()
    };
    let first = run("a", &toml_path);
    assert_eq!(first, run("b", &toml_path));
    let sidecar = fs::read_to_string(dir.path().join("a/skew_growth.csv.json")).unwrap();
    assert!(sidecar.contains("\"seed\": 5"), "{sidecar}");

    let json_path = dir.path().join("cfg.json");
    let value: toml::Value = toml::from_str(&edited).unwrap();
    fs::write(&json_path, serde_json::to_string(&value).unwrap()).unwrap();
    assert_eq!(first, run("c", &json_path));

    fs::write(&toml_path, edited.replace("a = 3", "a = 0")).unwrap();
    let bad = skewnet(&["preset", "--config", p(&toml_path), "--out", p(&dir.path().join("d"))]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("random_bipartite.a"));
}

#[test]
fn sweep_writes_one_run_per_point_and_replica() {
    let out = ok(&[
        "sweep", "dandelion", "--params", "b=1,c=1,lambda=0.9", "--vary", "n=2,3", "--replicas", "2", "--horizon", "50",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let runs: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(runs.len(), 4);
    assert!(text.starts_with("run_id,n,replica,seed,server_id"));
}

#[test]
fn detect_skew_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("d.json");
    let csv = dir.path().join("s.csv");
    ok(&["generate", "dandelion", "--params", "n=5,b=2,c=2,lambda=1.9", "-o", p(&g)]);
    let out = ok(&["detect-skew", "-g", p(&g), "--a", "4", "--lambda-min", "1", "--mu-max", "1", "--csv", p(&csv)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["max_size"], 5);
    assert_eq!(v["core"]["servers"].as_array().unwrap().len(), 2);
    let table = fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 + 10);
}
