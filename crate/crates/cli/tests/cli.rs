use std::path::Path;
use std::process::{Command, Output};

fn tsdp(args: &[&str], dir: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_tsdp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn tsdp");
    out
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = tsdp(args, dir);
    assert!(
        out.status.success(),
        "tsdp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_series(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.parse().unwrap())
        .collect()
}

#[test]
fn synth_then_run_writes_output_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--f", "1/8", "--seed", "5", "--out", "clean.csv", "--out-noisy", "noisy.csv"], d);
    let clean = read_series(&d.join("clean.csv"));
    assert_eq!(clean.len(), 1250);
    assert_eq!(clean[0], 500.0);

    ok(
        &[
            "run", "--mechanism", "subsample", "--epsilon", "0.5", "--delta", "1e-4", "--I", "100", "--p", "0.175",
            "--seed", "9", "--input", "noisy.csv", "--output", "out.csv",
        ],
        d,
    );
    assert_eq!(read_series(&d.join("out.csv")).len(), 1250);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out.json")).unwrap()).unwrap();
    assert_eq!(sidecar["kind"], "subsample");
    assert_eq!(sidecar["config"]["seed"], 9);
    assert!(sidecar["I_prime"].as_u64().unwrap() < 100);
    assert!(sidecar["sigma"].as_f64().unwrap() > 0.0);
    assert!(sidecar["guarantee"]["delta_total"].as_f64().unwrap() <= 1e-4);

    // Same seed, same bytes.
    ok(
        &[
            "run", "--mechanism", "subsample", "--epsilon", "0.5", "--delta", "1e-4", "--I", "100", "--p", "0.175",
            "--seed", "9", "--input", "noisy.csv", "--output", "again.csv",
        ],
        d,
    );
    assert_eq!(
        std::fs::read(d.join("out.csv")).unwrap(),
        std::fs::read(d.join("again.csv")).unwrap()
    );
}

#[test]
fn run_filter_subsample_with_fixed_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--t-base", "500", "--d", "0", "--out", "x.csv"], d);
    ok(
        &[
            "run", "--mechanism", "filter-subsample", "--epsilon", "0.5", "--delta", "1e-4", "--I", "50", "--p", "0.1",
            "--sigma-g", "10", "--alpha", "0.8", "--input", "x.csv", "--output", "z.csv", "--sidecar", "meta.json",
        ],
        d,
    );
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["alpha"], 0.8);
    assert_eq!(meta["method"], "matrix-chernoff");
    assert!(meta["kernel_stats"]["srank"].as_f64().unwrap() > 1.0);
}

#[test]
fn run_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--t-base", "100", "--out", "x.csv"], d);
    let out = tsdp(
        &["run", "--mechanism", "gaussian", "--epsilon", "1.5", "--delta", "1e-4", "--I", "10", "--input", "x.csv", "--output", "z.csv"],
        d,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
    let out = tsdp(
        &["run", "--mechanism", "subsample", "--epsilon", "0.5", "--delta", "1e-4", "--I", "10", "--input", "x.csv", "--output", "z.csv"],
        d,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--p"));
}

#[test]
fn ingest_checkins_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("log.tsv"),
        "u1\t2009-02-01T10:00:00Z\tv\nu1\t2009-02-01T11:00:00Z\tv\nu2\t2009-02-03T00:00:00Z\tv\nu3\t2009-02-02T00:00:00Z\tw\n",
    )
    .unwrap();
    ok(
        &[
            "ingest", "--format", "checkins", "--input", "log.tsv", "--venue", "v", "--bin-hours", "24", "--from",
            "2009-02-01T00:00:00Z", "--to", "2009-02-04T00:00:00Z", "--out", "s.csv", "--report", "I.json",
        ],
        d,
    );
    assert_eq!(read_series(&d.join("s.csv")), vec![1.0, 0.0, 1.0]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("I.json")).unwrap()).unwrap();
    assert_eq!(report["T"], 3);
    assert_eq!(report["I"], 1);
    assert_eq!(report["I_raw"], 2);

    ok(&["ingest", "--format", "series", "--input", "s.csv", "--out", "copy.csv"], d);
    assert_eq!(std::fs::read(d.join("s.csv")).unwrap(), std::fs::read(d.join("copy.csv")).unwrap());

    std::fs::write(d.join("gap.csv"), "t,value\n0,1\n2,3\n").unwrap();
    let out = tsdp(&["ingest", "--format", "series", "--input", "gap.csv", "--out", "x.csv"], d);
    assert!(!out.status.success());
}

#[test]
fn sensitivity_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = ok(
        &["sensitivity", "--I", "100", "--p", "0.1", "--T", "10000", "--sigma-g", "10", "--delta-prime", "1e-4", "--format", "csv"],
        dir.path(),
    );
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,delta2,delta_prime");
    assert!(lines[1].starts_with("worst-case,10.0,0"));
    assert!(lines[2].starts_with("exact-binomial,4.79583"));
    assert!(lines.iter().any(|l| l.starts_with("hoeffding,")));
    assert!(lines.iter().any(|l| l.starts_with("matrix-chernoff,")));
}

#[test]
fn kernel_export() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["kernel", "--T", "10000", "--sigma-g", "10", "--out", "k.csv"], dir.path());
    let stats: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let srank = stats["srank"].as_f64().unwrap();
    assert!((srank - 280.0).abs() < 14.0, "{srank}");
    let text = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
    assert!(text.starts_with("k,h_k\n"));
    assert_eq!(text.lines().count(), 10_001);
}

#[test]
fn sweeps_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"synth": {"T_base": 400, "I": 20}, "f_list": [1.0, 0.5], "repeats": 2, "master_seed": 3}"#,
    )
    .unwrap();
    ok(
        &["sweep", "--kind", "frequency", "--config", "cfg.json", "--out", "res.csv", "--emit-plot-data", "plots", "--alpha-grid", "20"],
        d,
    );
    let res = std::fs::read_to_string(d.join("res.csv")).unwrap();
    assert!(res.starts_with(
        "mechanism,f,noisy,p,sigma_g,alpha,I,I_prime,delta_prime,epsilon_total,delta_total,mean_mae,std_mae,repeats,seed"
    ));
    assert_eq!(res.lines().count(), 1 + 4 * 2 * 2);
    for name in [
        "fig2_traces_noisy.csv",
        "fig2_traces_noiseless.csv",
        "fig3a_mae_noiseless.csv",
        "fig3b_mae_noisy.csv",
        "alpha_delta_prime.csv",
    ] {
        assert!(d.join("plots").join(name).exists(), "{name}");
    }
    let traces = std::fs::read_to_string(d.join("plots/fig2_traces_noisy.csv")).unwrap();
    assert!(traces.starts_with("t,clean,input,gaussian,dft,subsample,filter_subsample\n"));

    ok(&["sweep", "--kind", "alpha", "--alpha-grid", "10", "--out", "alpha.csv"], d);
    let alpha = std::fs::read_to_string(d.join("alpha.csv")).unwrap();
    assert_eq!(alpha.lines().count(), 1 + 3 * 10);
}
