use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entity-sampler"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 30 entities at two points each, one to three copies per entity.
fn people(dir: &Path) -> PathBuf {
    let path = dir.join("people.csv");
    let mut text = String::from("id,x,y,who,income\n");
    let mut i = 0;
    for e in 0..30 {
        let (x, y) = ((e * 7 % 31) as f64 * 3.0, (e * 13 % 29) as f64 * 3.0);
        for _ in 0..(e % 3 + 1) {
            text += &format!("r{i},{x},{y},e{e},{}\n", 10 + e);
            i += 1;
        }
    }
    std::fs::write(&path, text).unwrap();
    path
}

const COLUMNS: [&str; 8] = ["--features", "x,y", "--id", "id", "--entity", "who", "--value", "income"];

fn with_columns<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(COLUMNS);
    v
}

#[test]
fn ingest_reports_entities() {
    let dir = tempfile::tempdir().unwrap();
    let input = people(dir.path());
    let out = dir.path().join("clean.csv");
    let summary = ok(&with_columns(&["ingest", "-i", p(&input), "-o", p(&out)]));
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["records"], 60);
    assert_eq!(v["entities"], 30);
    let head = std::fs::read_to_string(&out).unwrap();
    assert!(head.starts_with("id,f0,f1,entity,value\n"));
}

#[test]
fn balanced_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let input = people(dir.path());
    let clean = dir.path().join("clean.csv");
    let dup = dir.path().join("dup.csv");
    let map = dir.path().join("map.csv");
    let sample = dir.path().join("sample.csv");
    let stats = dir.path().join("stats.json");
    ok(&with_columns(&["ingest", "-i", p(&input), "-o", p(&clean)]));
    let injected = ok(&["inject", "-i", p(&clean), "--rate", "0.2", "--seed", "4", "-o", p(&dup)]);
    let v: serde_json::Value = serde_json::from_str(&injected).unwrap();
    assert_eq!(v["entities"], 30);
    assert!(v["records"].as_u64().unwrap() > 60);

    ok(&["estimate", "-i", p(&dup), "--method", "balanced", "--m", "20000", "-o", p(&map)]);
    let map_text = std::fs::read_to_string(&map).unwrap();
    assert!(map_text.starts_with("record_id,phat\n"));

    ok(&[
        "sample", "-i", p(&dup), "--map", p(&map), "-p", "300", "--seed", "9", "-o", p(&sample), "--stats", p(&stats),
    ]);
    let rows = std::fs::read_to_string(&sample).unwrap();
    assert_eq!(rows.lines().count(), 301);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(s["requested"], 300);
    assert!(s["trials"].as_u64().unwrap() >= 300);
}

#[test]
fn balanced_planner_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = people(dir.path());
    let map = dir.path().join("map.csv");
    ok(&with_columns(&[
        "estimate", "-i", p(&input), "--method", "balanced", "--epsilon", "0.2", "--eta", "0.01", "--entities", "30",
        "-o", p(&map),
    ]));
    ok(&with_columns(&[
        "estimate", "-i", p(&input), "--method", "balanced", "--eta-sample", "40", "-o", p(&map),
    ]));
    let out = run(&with_columns(&["estimate", "-i", p(&input), "--method", "balanced", "-o", p(&map)]));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--eta"));
}

#[test]
fn lsh_with_per_block_ranges_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = people(dir.path());
    let map = dir.path().join("map.csv");
    let report = dir.path().join("lsh.json");
    ok(&with_columns(&[
        "estimate", "-i", p(&input), "--method", "lsh", "--k-max", "3", "--report", p(&report), "-o", p(&map),
    ]));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let q = r["blocking"]["q"].as_u64().unwrap();
    assert!(q >= 1);

    let kfile = dir.path().join("k.csv");
    let mut text = String::from("block,k_min,k_max\n");
    for b in 0..q {
        text += &format!("{b},1,2\n");
    }
    std::fs::write(&kfile, text).unwrap();
    ok(&with_columns(&[
        "estimate", "-i", p(&input), "--method", "lsh", "--k-file", p(&kfile), "--report", p(&report), "-o", p(&map),
    ]));
    std::fs::write(&kfile, "block,k_min,k_max\n5,1,2\n").unwrap();
    let out = run(&with_columns(&["estimate", "-i", p(&input), "--method", "lsh", "--k-file", p(&kfile), "-o", p(&map)]));
    assert!(!out.status.success());
}

#[test]
fn interactive_oracle_reads_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.csv");
    std::fs::write(&input, "name,v\njohn smith 42 main street,1\njon smith 42 main street,1\nmary jones 7 oak avenue,2\n").unwrap();
    let map = dir.path().join("map.csv");
    let mut child = bin()
        .args([
            "estimate", "-i", p(&input), "--text", "name", "--value", "v", "--method", "lsh", "--oracle", "interactive",
            "--k-max", "2", "--mu", "0.5", "--report", p(&dir.path().join("r.json")), "-o", p(&map),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"y\nn\nn\nn\nn\nn\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("same entity?"));
    // the confirmed pair shares its mass
    let rows: Vec<String> = std::fs::read_to_string(&map).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 3);
    let phat: Vec<f64> = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!((phat[0] - phat[1]).abs() < 1e-12 && phat[0] > phat[2]);
}

#[test]
fn gmm_model_artifact_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = people(dir.path());
    let map = dir.path().join("map.csv");
    let model = dir.path().join("model.json");
    ok(&with_columns(&[
        "estimate", "-i", p(&input), "--method", "gmm", "--k", "2", "--seed", "3", "--model-out", p(&model), "-o",
        p(&map),
    ]));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m["weights"].as_array().unwrap().len(), 2);
    let stats = ok(&with_columns(&["sample", "-i", p(&input), "--model", p(&model), "-p", "20", "-o", p(&dir.path().join("s.csv"))]));
    let s: serde_json::Value = serde_json::from_str(&stats).unwrap();
    assert_eq!(s["requested"], 20);
}

fn write_spec(dir: &Path, method: &str) -> PathBuf {
    let spec = dir.join(format!("{method}.json"));
    std::fs::write(
        &spec,
        format!(
            r#"{{"dataset": {{"kind": "tpch", "n": 5000}}, "method": "{method}", "sweep": [0.02, 0.1],
               "dup_rates": [0.1, 0.3], "profile": "uniform", "repeats": 4, "seed": 11}}"#
        ),
    )
    .unwrap();
    spec
}

#[test]
fn bench_is_deterministic_and_report_rerenders() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "balanced");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["bench", "--spec", p(&spec), "-o", p(&a)]);
    ok(&["bench", "--spec", p(&spec), "-o", p(&b)]);
    ok(&["report", p(&a.join("summary.json")), "-o", p(&c)]);
    for f in ["cells.csv", "grid.csv", "figure.csv"] {
        let first = std::fs::read(a.join(f)).unwrap();
        assert_eq!(first, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(first, std::fs::read(c.join(f)).unwrap(), "{f}");
    }
    let grid = std::fs::read_to_string(a.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("dup_rate,0.02,0.1"));
    assert_eq!(grid.lines().count(), 3);
}

#[test]
fn failed_cells_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    // the synthetic table has no labels, so the pair oracle is unavailable
    let spec = write_spec(dir.path(), "lsh");
    let out = run(&["bench", "--spec", p(&spec), "-o", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("runs failed"));
    assert!(dir.path().join("r/cells.csv").exists());
}

#[test]
fn acceptance_from_the_command_line() {
    let stdout = ok(&["bench", "--acceptance", "1", "10"]);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("criterion")).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.contains("PASS")));
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let input = people(dir.path());
    let out = run(&["ingest", "-i", p(&input), "--features", "nope"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
    let out = run(&["inject", "-i", p(&input), "--features", "x", "--rate", "1.5", "-o", p(&dir.path().join("o.csv"))]);
    assert!(!out.status.success());
    let out = run(&["bench", "--acceptance", "12"]);
    assert!(!out.status.success());
}
