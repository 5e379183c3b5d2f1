use std::fs;
use std::path::Path;
use std::process::Command;

use poismix::cli_io::{
    dataset_table, emit_counts_to, ingest_counts, ingest_counts_from, run_tests, CountTable,
    DistanceKind, GeneData, RunConfig, TableFormat,
};
use poismix::rng::child_seed;
use poismix::simulate::{generate_dataset, model_pair, DesignSpec};
use poismix::SolverConfig;

fn poismix(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_poismix"))
        .args(args)
        .env("RUST_LOG", "error")
        .env_remove("POISMIX_THREADS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_table() -> CountTable {
    let mut table = CountTable::new();
    for gene in ["alpha", "beta"] {
        let mut g = GeneData {
            subjects: Vec::new(),
            groups: Vec::new(),
            counts: Vec::new(),
            read_depths: Vec::new(),
        };
        for s in 0..4u64 {
            g.subjects.push(format!("s{s}"));
            g.groups.push(if s < 2 { "ctrl" } else { "case" }.to_string());
            g.counts.push((0..3).map(|c| s * 3 + c).collect());
            g.read_depths.push(vec![1.0, 0.5, 1.25]);
        }
        table.insert(gene.to_string(), g);
    }
    table
}

#[test]
fn emit_then_ingest_round_trips() {
    let table = small_table();
    for format in [TableFormat::Csv, TableFormat::Tsv] {
        let mut buf = Vec::new();
        emit_counts_to(&mut buf, &table, format).unwrap();
        let back = ingest_counts_from(buf.as_slice(), format).unwrap();
        assert_eq!(back, table);
        assert_eq!(back["alpha"].samples(10.0).unwrap().len(), 4);
        assert!(back.values().all(|g| g.counts.iter().all(|c| c.len() == 3)));
        let mut again = Vec::new();
        emit_counts_to(&mut again, &back, format).unwrap();
        assert_eq!(again, buf);
    }
}

#[test]
fn identical_groups_are_not_rejected() {
    let mut table = small_table();
    table.retain(|g, _| g == "alpha");
    let g = table.get_mut("alpha").unwrap();
    for c in &mut g.counts {
        *c = vec![3, 5, 4];
    }
    g.read_depths = vec![vec![1.0; 3]; 4];
    let cfg = RunConfig {
        n_perm: 99,
        ..RunConfig::default()
    };
    let report = run_tests(&table, &cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        assert_eq!(row.p_value, Some(1.0));
        assert!(row.q_value.unwrap() >= 0.05);
    }
}

#[test]
fn model_2a_gene_is_detected() {
    let design = DesignSpec::design_a(500);
    let (m0, m1) = model_pair("2a").unwrap();
    let mut table = CountTable::new();
    for k in 0..10u64 {
        let data = generate_dataset(&design, &m0, &m1, child_seed(99, k, 7)).unwrap();
        table.extend(dataset_table(&format!("gene{k}"), &data));
    }
    let cfg = RunConfig {
        b: Some(20.0),
        n_perm: 200,
        distances: DistanceKind::Mixing,
        seed: 5,
        ..RunConfig::default()
    };
    let report = run_tests(&table, &cfg).unwrap();
    let rejected = report.rows.iter().filter(|r| r.q_value.is_some_and(|q| q <= 0.05)).count();
    assert!(rejected >= 9, "{rejected}/10 genes rejected");
    // q-values are monotone in p-values within the batch
    let mut pq: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.p_value.unwrap(), r.q_value.unwrap())).collect();
    pq.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(pq.windows(2).all(|w| w[0].1 <= w[1].1));
    assert!(pq.iter().all(|&(p, _)| p > 0.0 && p <= 1.0));
}

#[test]
fn failing_gene_is_reported_not_fatal() {
    let mut table = small_table();
    // every subject of beta in one group: no between-group contrast
    table.get_mut("beta").unwrap().groups = vec!["ctrl".to_string(); 4];
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    poismix::cli_io::emit_counts(&counts, &table, TableFormat::Csv).unwrap();
    let out = dir.path().join("res");
    let run = poismix(&["test", path_str(&counts), "--n-perm", "50", "--out", path_str(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(out.with_extension("csv")).unwrap();
    let beta: Vec<&str> = csv.lines().filter(|l| l.starts_with("beta")).collect();
    assert_eq!(beta.len(), 2);
    assert!(beta.iter().all(|l| !l.ends_with(',')), "{csv}");
    assert!(csv.lines().next().unwrap().contains("B_used"));
    let alpha = csv.lines().filter(|l| l.starts_with("alpha")).count();
    assert_eq!(alpha, 2);
}

#[test]
fn config_and_io_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let run = poismix(&["simulate", "A", "1a", "--cells", "20", "--rounds", "0", "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!out.with_extension("json").exists());

    let run = poismix(&["simulate", "D", "1a", "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(1));
    let run = poismix(&["simulate", "A", "9z", "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(1));

    let missing = dir.path().join("nope.csv");
    let run = poismix(&["test", path_str(&missing), "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "gene,subject,group,count,read_depth\ng,a,x,1,1\ng,b,y,one,1\n").unwrap();
    let run = poismix(&["--threads", "2", "test", path_str(&bad), "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 3"));
}

#[test]
fn generate_and_test_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.tsv");
    let gen = poismix(&["generate", "A", "2a", "--cells", "30", "--genes", "3", "--seed", "4", "--out", path_str(&counts)]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let table = ingest_counts(&counts, TableFormat::Tsv).unwrap();
    assert_eq!(table.len(), 3);
    assert!(table.values().all(|g| g.subjects.len() == 20));

    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("res{threads}"));
        let run = poismix(&[
            "--threads", threads, "test", path_str(&counts), "--n-perm", "199", "--seed", "8", "--out", path_str(&out),
        ]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        outputs.push((
            fs::read(out.with_extension("csv")).unwrap(),
            fs::read(out.with_extension("json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
}

#[test]
fn covariate_adjusted_test_runs() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let run = poismix(&["generate", "A", "1a", "--cells", "30", "--genes", "2", "--out", path_str(&counts)]);
    assert!(run.status.success());
    let table = ingest_counts(&counts, TableFormat::Csv).unwrap();
    let g = table.values().next().unwrap();
    let mut cov = String::from("subject,intercept,dx,age\n");
    for (i, (s, grp)) in g.subjects.iter().zip(&g.groups).enumerate() {
        let dx = u8::from(grp == "g2");
        cov.push_str(&format!("{s},1,{dx},{}\n", 30 + (i * 7) % 40));
    }
    let cov_path = dir.path().join("cov.csv");
    fs::write(&cov_path, cov).unwrap();
    let out = dir.path().join("adj");
    let run = poismix(&[
        "test", path_str(&counts), "--n-perm", "99", "--covariates", path_str(&cov_path), "--diagnosis-col", "dx",
        "--smoothed", "mixing", "--out", path_str(&out),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert!(report["rows"][0]["error"].is_null());
}

#[test]
fn simulate_writes_stable_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("sim{k}"));
        let run = poismix(&[
            "simulate", "A", "1a", "--cells", "20", "--rounds", "4", "--n-perm", "49", "--seed", "3", "--out",
            path_str(&out),
        ]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        outputs.push((
            fs::read(out.with_extension("json")).unwrap(),
            fs::read(out.with_extension("csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let report: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(report["rounds"], 4);
    assert!(report.get("wall_time_secs").is_none());
}

#[test]
fn solver_defaults_are_exposed() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.solver, SolverConfig::default());
    assert_eq!(cfg.n_perm, 100_000);
}
