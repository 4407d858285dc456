//! End-to-end checks of the installed binary: every subcommand is driven
//! against a small two-teacher experiment written to a temp directory, and
//! the documented exit codes are verified.

use std::path::{Path, PathBuf};
use std::process::Output;

use mtpd::costgraph::CostGraph;
use mtpd::curriculum::PerformanceTable;
use mtpd::io::read_dataset;
use mtpd::model::Split;

/// A fast two-teacher experiment; `{OUT}` is substituted per test.
const SMALL_CONFIG: &str = r#"
seed = 7

[task]
classes = 3
input_dim = 8
train_samples = 48
val_samples = 32
noise_sigma = 0.4
seed = 1

[student]
id = "S"
backbone = [6]
neck = [[4, 2]]
seed = 10

[teachers.A]
id = "A"
backbone = [8]
neck = [[4, 2]]
seed = 11

[teachers.A.train]
epochs = 6
batch_size = 16
learning_rate = 0.1
momentum = 0.9
lr_schedule = "step"
seed = 21

[teachers.B]
id = "B"
backbone = [12]
neck = [[6, 2]]
seed = 12

[teachers.B.train]
epochs = 6
batch_size = 16
learning_rate = 0.1
momentum = 0.9
lr_schedule = "step"
seed = 22

[train]
epochs = 2
batch_size = 16
learning_rate = 0.1
momentum = 0.9
lr_schedule = "step"
seed = 30

[distill]
mode = "progressive"
lambda = 0.5
normalization = "mean"
level_aggregation = "sum"

[distill.stage]
epochs = 3
batch_size = 16
learning_rate = 0.05
momentum = 0.9
lr_schedule = "step"
seed = 40

[plan]
algorithm = "bgs"
k = 2
ridge_eps = 1e-9

[output]
dir = "{OUT}"
"#;

/// Fresh scratch directory plus a config file pointing its output there.
fn setup(tag: &str) -> (PathBuf, PathBuf) {
    let dir = std::env::temp_dir().join(format!("mtpd-cli-{tag}-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("out");
    let config = dir.join("exp.toml");
    std::fs::write(&config, SMALL_CONFIG.replace("{OUT}", out.to_str().unwrap())).unwrap();
    (config, out)
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_mtpd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "expected success for {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_exit(args: &[&str], code: i32) {
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "args {args:?}: stderr {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn cleanup(config: &Path) {
    std::fs::remove_dir_all(config.parent().unwrap()).ok();
}

#[test]
fn gen_data_writes_parseable_deterministic_datasets() {
    let (config, out) = setup("gendata");
    let cfg = config.to_str().unwrap();
    run_ok(&["gen-data", "--config", cfg]);

    let train = read_dataset(&out.join("train.data")).unwrap();
    let val = read_dataset(&out.join("val.data")).unwrap();
    assert_eq!(train.len(), 48);
    assert_eq!(val.len(), 32);
    assert_eq!(train.split, Split::Train);
    assert_eq!(val.split, Split::Val);
    assert_eq!(train.input_dim(), 8);

    let first = std::fs::read(out.join("train.data")).unwrap();
    run_ok(&["gen-data", "--config", cfg]);
    let second = std::fs::read(out.join("train.data")).unwrap();
    assert_eq!(first, second, "regenerated dataset file must be byte-identical");
    cleanup(&config);
}

#[test]
fn pipeline_subcommands_compose_through_the_filesystem() {
    let (config, out) = setup("pipeline");
    let cfg = config.to_str().unwrap();

    // Teachers first: checkpoints appear and the summary names both.
    let stdout = run_ok(&["train-teachers", "--config", cfg]);
    assert!(stdout.contains('A') && stdout.contains('B'), "teacher summary: {stdout}");
    let ckpt_a = out.join("model-A.ckpt");
    assert!(ckpt_a.exists() && out.join("model-B.ckpt").exists() && out.join("model-S.ckpt").exists());
    let ckpt_bytes = std::fs::read(&ckpt_a).unwrap();

    // Cost graph: both CSV artifacts parse and are dense off the diagonal.
    run_ok(&["cost-graph", "--config", cfg]);
    let graph =
        CostGraph::from_csv(&std::fs::read_to_string(out.join("cost_matrix.csv")).unwrap()).unwrap();
    assert_eq!(graph.ids().len(), 3);
    assert_eq!(graph.entry_count(), 6);
    let q = PerformanceTable::from_csv(
        "q",
        &std::fs::read_to_string(out.join("q.csv")).unwrap(),
    )
    .unwrap();
    assert_eq!(q.len(), 2);

    // Plan from the config pipeline prints a non-empty order over the pool.
    let order = run_ok(&["plan", "--config", cfg]);
    let order = order.trim();
    assert!(!order.is_empty());
    for id in order.split(',') {
        assert!(["A", "B"].contains(&id), "unexpected id {id} in plan {order}");
    }

    // Distill re-uses the teacher checkpoints rather than retraining them.
    let stdout = run_ok(&["distill", "--config", cfg]);
    assert!(stdout.contains("Progressive"), "distill summary: {stdout}");
    assert_eq!(std::fs::read(&ckpt_a).unwrap(), ckpt_bytes, "checkpoint must be reused");
    for file in ["metrics.csv", "plan.json", "summary.json", "cost_matrix.csv", "q.csv"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    // Two planned stages at most, 3 epochs each, plus the header line.
    let rows = metrics.lines().count() - 1;
    assert!(rows % 3 == 0 && rows > 0, "unexpected metrics row count {rows}");
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["student"], "S");

    // Report re-emits everything and says where it wrote.
    let stdout = run_ok(&["report", "--config", cfg]);
    assert!(stdout.lines().filter(|l| l.starts_with("wrote ")).count() >= 5, "{stdout}");

    // Landscape writes its grid next to the other artifacts.
    let stdout = run_ok(&["landscape", "--config", cfg, "--points", "3", "--radius", "0.25"]);
    assert!(stdout.contains("landscape center"), "{stdout}");
    let grid = std::fs::read_to_string(out.join("landscape.csv")).unwrap();
    assert_eq!(grid.lines().count(), 4, "header plus 3 grid rows: {grid}");
    cleanup(&config);
}

#[test]
fn sweep_orders_reports_the_planned_rank() {
    let (config, out) = setup("sweep");
    let cfg = config.to_str().unwrap();
    let stdout = run_ok(&["sweep-orders", "--config", cfg]);
    assert!(stdout.contains("ranks"), "sweep summary: {stdout}");
    // Two teachers at depth ≤ 2 ⇒ 4 sequences plus the header.
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5, "{sweep}");
    cleanup(&config);
}

#[test]
fn seed_override_changes_results_and_is_itself_deterministic() {
    let (config, _out) = setup("seeds");
    let cfg = config.to_str().unwrap();
    let base = config.parent().unwrap().to_path_buf();
    let dirs = [base.join("s7a"), base.join("s7b"), base.join("s8")];
    for (dir, seed) in [(&dirs[0], "7"), (&dirs[1], "7"), (&dirs[2], "8")] {
        run_ok(&["distill", "--config", cfg, "--seed", seed, "--out", dir.to_str().unwrap()]);
    }
    let read = |d: &Path| std::fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]), "same seed must reproduce bytes");
    assert_ne!(read(&dirs[0]), read(&dirs[2]), "different seed must change the run");
    cleanup(&config);
}

#[test]
fn exit_codes_follow_the_contract() {
    // Usage / configuration problems exit 2.
    assert_exit(&["--help"], 0);
    assert_exit(&["no-such-command"], 2);
    assert_exit(&["plan", "--config", "/nonexistent/exp.toml"], 2);
    let costs = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference_costs.csv");
    let q = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference_q.csv");
    assert_exit(
        &[
            "plan",
            "--algo",
            "nope",
            "--k",
            "2",
            "--costs",
            costs.to_str().unwrap(),
            "--q",
            q.to_str().unwrap(),
        ],
        2,
    );

    // A diverging run (absurd learning rate) exits 3: numeric failure.
    let (config, _out) = setup("numeric");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("learning_rate = 0.1", "learning_rate = 1e9");
    std::fs::write(&config, text).unwrap();
    assert_exit(&["train-teachers", "--config", config.to_str().unwrap()], 3);
    cleanup(&config);

    // Landscape refuses a sweep-mode config: that mode has no single student.
    let (config, _out) = setup("landsweep");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("mode = \"progressive\"", "mode = \"sweep\"");
    std::fs::write(&config, text).unwrap();
    assert_exit(&["landscape", "--config", config.to_str().unwrap()], 2);
    cleanup(&config);
}
