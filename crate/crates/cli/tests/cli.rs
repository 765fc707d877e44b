use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockmodel-gof"))
        .args(args)
        .env("BLOCKMODEL_GOF_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn generate(dir: &Path, seed: &str, model: &str) {
    ok(&[
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
        "generate",
        "--model",
        model,
        "--n",
        "300",
        "--k",
        "3",
        "--B",
        "0.1(1+2*diag)",
    ]);
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    generate(&a, "11", "dcsbm");
    generate(&b, "11", "dcsbm");
    generate(&c, "12", "dcsbm");
    let names: Vec<String> = read_dir(&a).into_iter().map(|f| f.0).collect();
    assert_eq!(names, ["B.csv", "edges.txt", "membership.txt", "omega.txt"]);
    assert_eq!(read_dir(&a), read_dir(&b));
    assert_ne!(read_dir(&a), read_dir(&c));
}

#[test]
fn csv_and_json_lines_carry_the_same_report() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "5", "sbm");
    let graph = tmp.path().join("edges.txt");
    let sigma = tmp.path().join("membership.txt");
    let base = [
        "test",
        "--graph",
        graph.to_str().unwrap(),
        "--mode",
        "membership",
        "--sigma0",
        sigma.to_str().unwrap(),
    ];
    let json = ok(&[&["--format", "json-lines"], &base[..]].concat());
    let csv_text = ok(&[&["--format", "csv"], &base[..]].concat());
    let kv = ok(&base);
    let record: serde_json::Map<String, Value> = serde_json::from_str(json.trim()).unwrap();

    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let row = rdr.records().next().unwrap().unwrap();
    assert_eq!(header, record.keys().cloned().collect::<Vec<_>>());
    for ((key, raw), value) in header.iter().zip(row.iter()).zip(record.values()) {
        match value {
            Value::Number(x) => {
                assert_eq!(raw.parse::<f64>().unwrap(), x.as_f64().unwrap(), "{key}")
            }
            Value::Bool(b) => assert_eq!(raw, b.to_string(), "{key}"),
            Value::String(s) => assert_eq!(raw, s, "{key}"),
            Value::Null => assert_eq!(raw, "", "{key}"),
            other => panic!("unexpected {other}"),
        }
    }
    assert!(kv.contains(&format!("reject: {}", record["reject"])));
    assert_eq!(record["variant"], "T_n");
}

#[test]
fn test_command_reports_decision_with_zero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "9", "sbm");
    let graph = tmp.path().join("edges.txt");
    let truth = fs::read_to_string(tmp.path().join("membership.txt")).unwrap();
    // move the first node into the next community
    let mut labels: Vec<usize> = truth.lines().map(|l| l.parse().unwrap()).collect();
    labels[0] = labels[0] % 3 + 1;
    let sigma0 = tmp.path().join("sigma0.txt");
    fs::write(
        &sigma0,
        labels.iter().map(|l| format!("{l}\n")).collect::<String>(),
    )
    .unwrap();
    let out = ok(&[
        "--alpha",
        "0.05",
        "test",
        "--graph",
        graph.to_str().unwrap(),
        "--mode",
        "membership",
        "--sigma0",
        sigma0.to_str().unwrap(),
    ]);
    assert!(out.contains("reject: true"), "{out}");
    let out = ok(&["test", "--graph", graph.to_str().unwrap(), "--k0", "3"]);
    assert!(out.contains("reject: false"), "{out}");
}

#[test]
fn usage_and_config_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "1", "sbm");
    let graph = tmp.path().join("edges.txt");
    let g = graph.to_str().unwrap();

    let missing = cli(&["test", "--graph", g]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--k0"));

    let pct = cli(&["ingest", "--weighted", g, "--percentile", "1.5"]);
    assert!(!pct.status.success());
    assert!(String::from_utf8_lossy(&pct.stderr).contains("percentile"));

    let unknown = cli(&["simulate", "--experiment", "sim9"]);
    assert!(!unknown.status.success());
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("sim2-grid"));

    let bspec = cli(&["generate", "--n", "10", "--k", "2", "--B", "0.1(1+x*diag)"]);
    assert!(!bspec.status.success());
    assert!(String::from_utf8_lossy(&bspec.stderr).contains("B-spec"));
}

#[test]
fn ingest_lcc_and_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("e.txt");
    fs::write(&edges, "1 2\n2 3\n3 1\n4 5\n3 3\n").unwrap();
    let out = ok(&["ingest", "--edges", edges.to_str().unwrap(), "--lcc"]);
    assert_eq!(out, "# nodes: 3\n# index-base: 0\n0 1\n0 2\n1 2\n");

    let weighted = tmp.path().join("w.txt");
    fs::write(&weighted, "0 1 5\n1 0 1\n0 2 1\n1 2 3\n2 1 3\n").unwrap();
    let out = ok(&[
        "ingest",
        "--weighted",
        weighted.to_str().unwrap(),
        "--percentile",
        "0.5",
    ]);
    // pair sums 6, 1, 6; the lower median is 6
    assert_eq!(out, "# nodes: 3\n# index-base: 0\n0 1\n1 2\n");
}

#[test]
fn simulate_writes_files_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        ok(&[
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap(),
            "--format",
            "json-lines",
            "simulate",
            "--experiment",
            "sim3-power",
            "--replications",
            "5",
            "--set",
            "block_size=50",
            "--set",
            "r=0.1",
            "--set",
            "z=0.05",
        ]);
        read_dir(&out)
    };
    let a = run("a");
    assert_eq!(
        a.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(),
        ["sim3-power.csv", "sim3-power.samples.csv"]
    );
    assert_eq!(a, run("b"));
    let text = String::from_utf8(a[0].1.clone()).unwrap();
    assert!(text.starts_with("experiment_id,k,k0,n,r,z,variant,rejection_rate"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn detect_and_assess() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "2", "sbm");
    let graph = tmp.path().join("edges.txt");
    let truth = tmp.path().join("membership.txt");
    let labels = ok(&["detect", "--graph", graph.to_str().unwrap(), "--k", "3"]);
    assert_eq!(labels.lines().count(), 300);
    assert!(labels.lines().all(|l| ["1", "2", "3"].contains(&l)));

    let single = tmp.path().join("single.txt");
    fs::write(&single, "1\n".repeat(300)).unwrap();
    let out = ok(&[
        "--format",
        "json-lines",
        "assess",
        "--sigma",
        truth.to_str().unwrap(),
        "--sigma0",
        single.to_str().unwrap(),
        "--B",
        "0.1(1+2*diag)",
    ]);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert!(v["ell"].as_f64().unwrap() > 0.0);
    assert!(v["threshold"].as_f64().unwrap() > 0.0);
}
