//! Plan execution and the CSV / JSON result files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ldp_audit::audit::{run_audit_with, AuditResult, ModelCache};
use ldp_audit::data::Dataset;
use serde::Serialize;

use crate::config::{load_dataset, ExperimentPlan, OutputFormat};
use crate::Result;

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const FIGURE_CSV: &str = "figure.csv";

/// One row per (audit, measurement).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub crafter: String,
    pub mode: String,
    pub epsilon_theoretical: f64,
    pub num_clients: usize,
    pub dummy_norm_fraction: f64,
    pub measurement_index: u64,
    pub trials_g1: u64,
    pub trials_g2: u64,
    pub fp_count: u64,
    pub fn_count: u64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub clamped: bool,
    pub eps_empirical: f64,
}

/// Tidy figure table; reference rows carry `mode = "theoretical"`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureRow {
    pub crafter: String,
    pub mode: String,
    pub distinguisher: String,
    pub num_clients: Option<usize>,
    pub dummy_norm_fraction: Option<f64>,
    pub eps_theoretical: f64,
    pub eps_empirical_mean: f64,
    pub eps_empirical_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSummary {
    pub id: String,
    pub crafter: String,
    pub mode: String,
    pub distinguisher: String,
    pub epsilon: f64,
    pub num_clients: usize,
    pub dummy_norm_fraction: f64,
    pub eps_mean: f64,
    pub eps_std: f64,
    pub sign_sum_inverted: Option<bool>,
    pub config: ldp_audit::audit::AuditConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResults {
    pub ids: Vec<String>,
    pub audits: Vec<AuditResult>,
}

impl PlanResults {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.audits
            .iter()
            .flat_map(|a| {
                let c = &a.config;
                a.measurements.iter().map(move |m| ResultRow {
                    crafter: c.crafter.to_string(),
                    mode: c.mode.to_string(),
                    epsilon_theoretical: c.epsilon,
                    num_clients: c.num_clients,
                    dummy_norm_fraction: c.crafter_params.dummy_norm_fraction,
                    measurement_index: m.measurement_index,
                    trials_g1: m.trials_g1,
                    trials_g2: m.trials_g2,
                    fp_count: m.fp_count,
                    fn_count: m.fn_count,
                    fp_rate: m.fp_rate,
                    fn_rate: m.fn_rate,
                    clamped: m.clamped,
                    eps_empirical: m.eps_empirical,
                })
            })
            .collect()
    }

    pub fn summaries(&self) -> Vec<AuditSummary> {
        self.ids
            .iter()
            .zip(&self.audits)
            .map(|(id, a)| {
                let c = &a.config;
                AuditSummary {
                    id: id.clone(),
                    crafter: c.crafter.to_string(),
                    mode: c.mode.to_string(),
                    distinguisher: c.distinguisher().as_str().to_string(),
                    epsilon: c.epsilon,
                    num_clients: c.num_clients,
                    dummy_norm_fraction: c.crafter_params.dummy_norm_fraction,
                    eps_mean: a.eps_mean,
                    eps_std: a.eps_std,
                    sign_sum_inverted: a.sign_sum_inverted,
                    config: c.clone(),
                }
            })
            .collect()
    }
}

/// Runs every audit of the plan in order on one dataset. Global models are
/// shared between audits; `progress` is called after each audit.
pub fn execute_plan(
    plan: &ExperimentPlan,
    dataset: &Dataset,
    mut progress: impl FnMut(usize, &str, &AuditResult),
) -> Result<PlanResults> {
    let cache = ModelCache::new();
    let mut ids = Vec::with_capacity(plan.entries.len());
    let mut audits = Vec::with_capacity(plan.entries.len());
    for (i, entry) in plan.entries.iter().enumerate() {
        let result = run_audit_with(&entry.config, dataset, &cache)?;
        progress(i, &entry.id, &result);
        ids.push(entry.id.clone());
        audits.push(result);
    }
    Ok(PlanResults { ids, audits })
}

/// Loads the dataset, runs the plan and writes the requested files into the
/// plan's output directory. Returns the paths written.
pub fn run_plan(
    plan: &ExperimentPlan,
    progress: impl FnMut(usize, &str, &AuditResult),
) -> Result<(PlanResults, Vec<PathBuf>)> {
    let dataset = load_dataset(&plan.dataset)?;
    let results = execute_plan(plan, &dataset, progress)?;
    let written = write_outputs(plan, &results, &plan.output_dir)?;
    Ok((results, written))
}

pub fn write_outputs(plan: &ExperimentPlan, results: &PlanResults, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if plan.wants(OutputFormat::Csv) {
        let path = dir.join(RESULTS_CSV);
        write_csv(&path, &results.rows())?;
        written.push(path);
        let path = dir.join(FIGURE_CSV);
        write_csv(&path, &emit_figure_data(&results.audits))?;
        written.push(path);
    }
    if plan.wants(OutputFormat::Json) {
        let path = dir.join(SUMMARY_JSON);
        let summary = serde_json::json!({
            "master_seed": plan.master_seed,
            "dataset": plan.dataset,
            "audits": results.summaries(),
        });
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, &summary)?;
        f.write_all(b"\n")?;
        f.flush()?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format figure table: one row per audit, plus a `theoretical`
/// reference row (`ε_empirical = ε`) per crafter and ε.
pub fn emit_figure_data(results: &[AuditResult]) -> Vec<FigureRow> {
    let mut rows: Vec<FigureRow> = results
        .iter()
        .map(|a| {
            let c = &a.config;
            FigureRow {
                crafter: c.crafter.to_string(),
                mode: c.mode.to_string(),
                distinguisher: c.distinguisher().as_str().to_string(),
                num_clients: Some(c.num_clients),
                dummy_norm_fraction: Some(c.crafter_params.dummy_norm_fraction),
                eps_theoretical: c.epsilon,
                eps_empirical_mean: a.eps_mean,
                eps_empirical_std: a.eps_std,
            }
        })
        .collect();
    // Keyed by (crafter, ε bits) to keep first-seen order stable.
    let mut reference: BTreeMap<(String, u64), usize> = BTreeMap::new();
    for a in results {
        let key = (a.config.crafter.to_string(), a.config.epsilon.to_bits());
        let next = reference.len();
        reference.entry(key).or_insert(next);
    }
    let mut refs: Vec<((String, u64), usize)> = reference.into_iter().collect();
    refs.sort_by_key(|(_, order)| *order);
    rows.extend(refs.into_iter().map(|((crafter, bits), _)| {
        let eps = f64::from_bits(bits);
        FigureRow {
            crafter,
            mode: "theoretical".into(),
            distinguisher: "theoretical".into(),
            num_clients: None,
            dummy_norm_fraction: None,
            eps_theoretical: eps,
            eps_empirical_mean: eps,
            eps_empirical_std: 0.0,
        }
    }));
    rows
}
