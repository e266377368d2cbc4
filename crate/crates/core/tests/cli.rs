//! End-to-end contract tests for the `orbsplit` binary: exit codes, emitted
//! files, and report formats.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orbsplit"))
}

fn demo_scenario() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/demo.json")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.arg("--out").arg(out);
    cmd.args(args);
    cmd.output().expect("spawn orbsplit")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

#[test]
fn optimize_feasible_exits_zero_and_writes_plan() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["optimize", demo_scenario()]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("feasible: true"));

    let plan: serde_json::Value = serde_json::from_str(&read(dir.path(), "plan.json")).unwrap();
    assert_eq!(plan["feasible"], serde_json::Value::Bool(true));
    let counts: Vec<u64> = plan["layer_counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(counts.iter().sum::<u64>(), 12);
    assert!(plan["objective"].as_f64().unwrap() > 0.0);
}

#[test]
fn optimize_infeasible_exits_two() {
    let dir = TempDir::new().unwrap();
    let mut scn: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(demo_scenario()).unwrap()).unwrap();
    // No point on the accuracy curve reaches 0.9999.
    scn["optimizer"]["acc_min"] = serde_json::json!(0.9999);
    let path = dir.path().join("infeasible.json");
    std::fs::write(&path, scn.to_string()).unwrap();

    let out = run_in(dir.path(), &["optimize", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("feasible: false"));
    let plan: serde_json::Value = serde_json::from_str(&read(dir.path(), "plan.json")).unwrap();
    assert_eq!(plan["feasible"], serde_json::Value::Bool(false));
}

#[test]
fn missing_scenario_exits_one_with_message() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["optimize", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("error:"));
}

#[test]
fn malformed_scenario_exits_one() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"satellites\": []").unwrap();
    let out = run_in(dir.path(), &["optimize", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let out = bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("optimize"));

    let out = bin().arg("--version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn sweep_emits_csv_and_svg_with_expected_shape() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "sweep",
            demo_scenario(),
            "--parameter",
            "s2g-rate",
            "--values",
            "2e8,6e9",
            "--methods",
            "astar,uniform",
        ],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = read(dir.path(), "sweep_s2g_rate.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("sweep_value,method,total_delay_s,comm_overhead_bits")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4, "2 sweep points x 2 methods");
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4);
        assert!(fields[0].parse::<f64>().unwrap() > 0.0);
        assert!(["astar", "uniform"].contains(&fields[1]));
        assert!(fields[2].parse::<f64>().unwrap() > 0.0);
    }

    let svg = read(dir.path(), "sweep_s2g_rate.svg");
    assert!(svg.starts_with("<?xml") && svg.contains("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<!-- data:"));
}

#[test]
fn format_flag_limits_outputs() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "--format",
            "csv",
            "sweep",
            demo_scenario(),
            "--parameter",
            "batch-count",
            "--values",
            "1,8",
            "--methods",
            "uniform",
        ],
    );
    assert!(out.status.success());
    assert!(dir.path().join("sweep_batch_count.csv").exists());
    assert!(!dir.path().join("sweep_batch_count.svg").exists());
}

#[test]
fn simulate_emits_trace_and_gantt() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["simulate", demo_scenario()]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = read(dir.path(), "trace.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("batch,stage,start_compute_s,end_compute_s,start_tx_s,end_tx_s")
    );
    // 4 batches x 4 stages for the demo scenario.
    assert_eq!(lines.count(), 16);

    let svg = read(dir.path(), "gantt.svg");
    assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn compare_reports_analytic_and_simulated_totals() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["compare", demo_scenario()]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let report: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "compare.json")).unwrap();
    let analytic = report["analytic_total"].as_f64().unwrap();
    let sim = report["sim_total"].as_f64().unwrap();
    assert!(analytic > 0.0 && sim > 0.0);
    assert!(report["rel_diff"].as_f64().unwrap() >= 0.0);
    assert!(report.get("bottleneck_stage_analytic").is_some());
    assert!(report.get("bottleneck_stage_sim").is_some());
}

#[test]
fn simulate_accepts_explicit_plan_file() {
    let dir = TempDir::new().unwrap();
    let plan_path = dir.path().join("plan_in.json");
    std::fs::write(
        &plan_path,
        r#"{"layer_counts": [3, 3, 3, 3], "q": [0.5, 0.5, 0.5]}"#,
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate",
            demo_scenario(),
            "--plan",
            plan_path.to_str().unwrap(),
        ],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn codec_bench_reports_three_stages() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &["--seed", "3", "codec-bench", "--keep", "0.25"],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = read(dir.path(), "codec_bench.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("stage,compression_ratio_x"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "sparsify");
    assert_eq!(rows[1][0], "sparsify+quantize");
    assert_eq!(rows[2][0], "sparsify+quantize+entropy");
    let sparsify: f64 = rows[0][1].parse().unwrap();
    let plus_quant: f64 = rows[1][1].parse().unwrap();
    // keep=0.25 over a 32x64 grid keeps exactly 512 of 2048 positions.
    assert!((sparsify - 4.0).abs() < 1e-12);
    assert!((plus_quant - 16.0).abs() < 1e-12);
    assert!(rows[2][1].parse::<f64>().unwrap() > 1.0);
}

#[test]
fn train_mask_emits_history_and_mask() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "--seed",
            "5",
            "train-mask",
            "--epochs",
            "10",
            "--samples",
            "32",
        ],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = read(dir.path(), "history.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,task_loss,sparsity_loss,keep_fraction,toy_acc")
    );
    // Initial row plus one per epoch.
    assert_eq!(lines.count(), 11);
    assert!(dir.path().join("mask.gmsk").exists());
    assert!(dir.path().join("history.svg").exists());
}

#[test]
fn seeded_runs_are_reproducible() {
    let run = || {
        let dir = TempDir::new().unwrap();
        let out = run_in(dir.path(), &["--seed", "11", "codec-bench", "--batch", "8"]);
        assert!(out.status.success());
        (
            String::from_utf8(out.stdout).unwrap(),
            read(dir.path(), "codec_bench.csv"),
        )
    };
    assert_eq!(run(), run());
}
