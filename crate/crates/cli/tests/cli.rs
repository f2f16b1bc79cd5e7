use std::path::Path;
use std::process::Command;

use ldp_audit::data::{encode_idx_images, encode_idx_labels};
use ldp_audit_cli::output::{emit_figure_data, execute_plan, FIGURE_CSV, RESULTS_CSV, SUMMARY_JSON};
use ldp_audit_cli::{config::load_dataset, parse_config_str};

const SMALL: &str = r#"
trials = 200
measurements = 10
hidden = [4]
calibration_trials = 100

[dataset.synthetic]
num_classes = 3
input_dim = 4
examples_per_class = 10

[grid]
epsilons = [1.0]
crafters = ["gradient_flip", "dummy_gradient"]
modes = ["white_box"]
"#;

fn audit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_audit"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("plan.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, extra: &[&str]) -> std::process::Output {
    let out = audit().arg("run").arg(config).args(extra).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn csv_has_one_row_per_measurement() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    run(&config, &["--out", dir.path().join("out").to_str().unwrap()]);
    let csv = std::fs::read_to_string(dir.path().join("out").join(RESULTS_CSV)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "crafter,mode,epsilon_theoretical,num_clients,dummy_norm_fraction,measurement_index,trials_g1,trials_g2,\
         fp_count,fn_count,fp_rate,fn_rate,clamped,eps_empirical"
    );
    assert_eq!(lines.count(), 20);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out").join(SUMMARY_JSON)).unwrap()).unwrap();
    assert_eq!(summary["master_seed"], 0);
    assert_eq!(summary["audits"].as_array().unwrap().len(), 2);
    assert_eq!(summary["audits"][0]["config"]["trials"], 200);
    assert!(dir.path().join("out").join(FIGURE_CSV).exists());
}

#[test]
fn reruns_are_byte_identical_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let read = |name: &str| std::fs::read(dir.path().join(name).join(RESULTS_CSV)).unwrap();
    run(&config, &["--out", dir.path().join("a").to_str().unwrap()]);
    run(
        &config,
        &["--out", dir.path().join("b").to_str().unwrap(), "--threads", "1"],
    );
    run(
        &config,
        &["--out", dir.path().join("c").to_str().unwrap(), "--seed", "7"],
    );
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let summary = std::fs::read_to_string(dir.path().join("c").join(SUMMARY_JSON)).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["master_seed"], 7);
    assert_eq!(summary["audits"][1]["config"]["master_seed"], 7);
}

#[test]
fn output_dir_in_config_is_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!("{SMALL}\n[output]\ndir = \"nested\"\nformats = [\"json\"]\n"),
    );
    run(&config, &[]);
    assert!(dir.path().join("nested").join(SUMMARY_JSON).exists());
    assert!(!dir.path().join("nested").join(RESULTS_CSV).exists());
}

#[test]
fn bad_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "trials = 10\n");
    let out = audit().arg("run").arg(&config).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
    let missing = audit().arg("run").arg(dir.path().join("none.toml")).output().unwrap();
    assert!(!missing.status.success());
}

#[test]
fn mnist_idx_files_are_loaded() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<Vec<u8>> = (0..20u8).map(|i| vec![i.wrapping_mul(13); 28 * 28]).collect();
    let labels: Vec<u8> = (0..20u8).map(|i| i % 10).collect();
    std::fs::write(dir.path().join("img.idx"), encode_idx_images(&images, 28, 28)).unwrap();
    std::fs::write(dir.path().join("lbl.idx"), encode_idx_labels(&labels)).unwrap();
    let config = write_config(
        dir.path(),
        "trials = 100\nmeasurements = 1\nhidden = [2]\n[warmup]\nsteps = 2\n\
         [dataset]\nkind = \"mnist\"\nimages = \"img.idx\"\nlabels = \"lbl.idx\"\nlimit = 15\n\
         [grid]\nepsilons = [1.0]\ncrafters = [\"benign\"]\nmodes = [\"white_box\", \"black_box\"]\n",
    );
    let plan = ldp_audit_cli::parse_config(&config).unwrap();
    let ds = load_dataset(&plan.dataset).unwrap();
    assert_eq!((ds.len(), ds.input_dim()), (15, 784));
    assert_eq!(ds.examples()[1].features[0], 13.0 / 255.0);
    run(&config, &["--out", dir.path().join("out").to_str().unwrap()]);
}

#[test]
fn oracle_subcommand_reports_analytic_probability() {
    let out = audit()
        .args(["oracle", "--epsilon", "2", "--trials", "1000"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0.880797"), "{text}");
}

#[test]
fn figure_rows_include_reference_series() {
    let plan = parse_config_str(
        "trials = 100\nmeasurements = 1\nhidden = [3]\n[dataset.synthetic]\nnum_classes = 2\ninput_dim = 3\n\
         examples_per_class = 5\n[grid]\ncrafters = [\"dummy_gradient\"]\n",
    )
    .unwrap();
    let ds = load_dataset(&plan.dataset).unwrap();
    let results = execute_plan(&plan, &ds, |_, _, _| {}).unwrap();
    let rows = emit_figure_data(&results.audits);
    assert_eq!(rows.len(), 8 + 4);
    let reference: Vec<_> = rows.iter().filter(|r| r.mode == "theoretical").collect();
    assert_eq!(reference.len(), 4);
    assert!(reference
        .iter()
        .all(|r| r.eps_empirical_mean == r.eps_theoretical && r.num_clients.is_none()));
}

#[test]
fn sweeps_are_keyed_in_figure_data() {
    let plan = parse_config_str(
        "trials = 100\nmeasurements = 1\nhidden = [3]\n[dataset.synthetic]\nnum_classes = 2\ninput_dim = 3\n\
         examples_per_class = 5\n[grid]\nepsilons = [4.0]\ncrafters = [\"dummy_gradient\"]\nmodes = [\"white_box\"]\n\
         dummy_norm_fractions = [0.25, 0.5, 1.0]\n",
    )
    .unwrap();
    let ds = load_dataset(&plan.dataset).unwrap();
    let rows = emit_figure_data(&execute_plan(&plan, &ds, |_, _, _| {}).unwrap().audits);
    let fractions: Vec<_> = rows.iter().filter_map(|r| r.dummy_norm_fraction).collect();
    assert_eq!(fractions, [0.25, 0.5, 1.0]);

    let plan = parse_config_str(
        "trials = 100\nmeasurements = 1\nhidden = [3]\n[dataset.synthetic]\nnum_classes = 2\ninput_dim = 3\n\
         examples_per_class = 5\n[grid]\nepsilons = [4.0]\ncrafters = [\"benign\"]\nmodes = [\"black_box\"]\n\
         num_clients = [1, 2, 4, 10]\n",
    )
    .unwrap();
    let rows = emit_figure_data(&execute_plan(&plan, &ds, |_, _, _| {}).unwrap().audits);
    let clients: Vec<_> = rows.iter().filter_map(|r| r.num_clients).collect();
    assert_eq!(clients, [1, 2, 4, 10]);
}
