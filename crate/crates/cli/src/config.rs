//! Experiment configuration: a TOML file describing a grid of audits.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ldp_audit::adversary::{CrafterKind, CrafterParams};
use ldp_audit::audit::{AuditConfig, Mode, WarmupSpec, MIN_TRIALS};
use ldp_audit::data::{load_idx_images, load_idx_labels, Dataset, SyntheticSpec};
use ldp_audit::nn::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub const DEFAULT_EPSILONS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Synthetic,
    Mnist,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// IDX image and label files (MNIST only).
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Keep only the first `limit` examples (MNIST only).
    pub limit: Option<usize>,
    pub synthetic: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub epsilons: Vec<f64>,
    pub crafters: Vec<CrafterKind>,
    pub modes: Vec<Mode>,
    pub num_clients: Vec<usize>,
    /// Swept for the dummy-gradient crafter only.
    pub dummy_norm_fractions: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            epsilons: DEFAULT_EPSILONS.to_vec(),
            crafters: CrafterKind::ALL.to_vec(),
            modes: Mode::ALL.to_vec(),
            num_clients: vec![1],
            dummy_norm_fractions: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrafterSection {
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_collusion_steps")]
    collusion_steps: usize,
    #[serde(default = "default_collusion_lr")]
    collusion_lr: f64,
}

fn default_alpha() -> f64 {
    CrafterParams::default().alpha
}

fn default_collusion_steps() -> usize {
    CrafterParams::default().collusion_steps
}

fn default_collusion_lr() -> f64 {
    CrafterParams::default().collusion_lr
}

impl Default for CrafterSection {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            collusion_steps: default_collusion_steps(),
            collusion_lr: default_collusion_lr(),
        }
    }
}

/// The file as written. Every key is optional.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    master_seed: u64,
    trials: usize,
    measurements: usize,
    clip_norm: f64,
    hidden: Vec<usize>,
    projection_radius: Option<f64>,
    calibration_trials: usize,
    dataset: DatasetSection,
    grid: GridSection,
    crafter: CrafterSection,
    warmup: WarmupSpec,
    output: OutputSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            master_seed: 0,
            trials: 10_000,
            measurements: 10,
            clip_norm: 1.0,
            hidden: vec![32],
            projection_radius: None,
            calibration_trials: 1_000,
            dataset: DatasetSection::default(),
            grid: GridSection::default(),
            crafter: CrafterSection::default(),
            warmup: WarmupSpec::default(),
            output: OutputSection::default(),
        }
    }
}

/// One audit of the plan and its stable identifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEntry {
    pub id: String,
    pub config: AuditConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub master_seed: u64,
    pub dataset: DatasetSection,
    pub entries: Vec<PlanEntry>,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentPlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut plan = parse_config_str(&text)?;
    // Relative paths in the file are relative to the file.
    let base = path.parent().unwrap_or(Path::new(""));
    let rebase = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    rebase(&mut plan.output_dir);
    if let Some(p) = plan.dataset.images.as_mut() {
        rebase(p);
    }
    if let Some(p) = plan.dataset.labels.as_mut() {
        rebase(p);
    }
    Ok(plan)
}

fn model_dims(dataset: &DatasetSection) -> (usize, usize) {
    match dataset.kind {
        DatasetKind::Synthetic => (dataset.synthetic.input_dim, dataset.synthetic.num_classes),
        DatasetKind::Mnist => (28 * 28, 10),
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

pub fn parse_config_str(text: &str) -> Result<ExperimentPlan> {
    let file: ConfigFile = toml::from_str(text)?;
    let grid = &file.grid;
    if grid.epsilons.is_empty()
        || grid.crafters.is_empty()
        || grid.modes.is_empty()
        || grid.num_clients.is_empty()
        || grid.dummy_norm_fractions.is_empty()
    {
        return Err(invalid("grid lists must not be empty"));
    }
    if file.trials < MIN_TRIALS {
        return Err(invalid(format!(
            "trials must be at least {MIN_TRIALS}, got {}",
            file.trials
        )));
    }
    if file.output.formats.is_empty() {
        return Err(invalid("at least one output format is required"));
    }
    match file.dataset.kind {
        DatasetKind::Synthetic => file.dataset.synthetic.validate()?,
        DatasetKind::Mnist => {
            if file.dataset.images.is_none() || file.dataset.labels.is_none() {
                return Err(invalid("dataset kind 'mnist' needs both 'images' and 'labels' paths"));
            }
            if file.dataset.limit == Some(0) {
                return Err(invalid("dataset limit must be positive"));
            }
        }
    }
    let (input_dim, num_classes) = model_dims(&file.dataset);
    let model = ModelSpec::mlp(input_dim, &file.hidden, num_classes)?;

    let mut entries = Vec::new();
    let mut ids = BTreeSet::new();
    for &epsilon in &grid.epsilons {
        for &crafter in &grid.crafters {
            // The norm fraction only changes the dummy gradient.
            let fractions = if crafter == CrafterKind::DummyGradient {
                grid.dummy_norm_fractions.clone()
            } else {
                vec![CrafterParams::default().dummy_norm_fraction]
            };
            for &mode in &grid.modes {
                for &num_clients in &grid.num_clients {
                    for &fraction in &fractions {
                        let config = AuditConfig {
                            crafter,
                            mode,
                            epsilon,
                            clip_norm: file.clip_norm,
                            crafter_params: CrafterParams {
                                alpha: file.crafter.alpha,
                                dummy_norm_fraction: fraction,
                                collusion_steps: file.crafter.collusion_steps,
                                collusion_lr: file.crafter.collusion_lr,
                            },
                            trials: file.trials,
                            measurements: file.measurements,
                            num_clients,
                            master_seed: file.master_seed,
                            model: model.clone(),
                            projection_radius: file.projection_radius.unwrap_or(10.0 * file.clip_norm),
                            warmup: file.warmup,
                            calibration_trials: file.calibration_trials,
                        };
                        config.validate()?;
                        let id = format!(
                            "{crafter}-{mode}-eps{}-n{num_clients}-f{}",
                            fmt_num(epsilon),
                            fmt_num(fraction)
                        );
                        if !ids.insert(id.clone()) {
                            return Err(invalid(format!("duplicate audit '{id}' in grid")));
                        }
                        entries.push(PlanEntry { id, config });
                    }
                }
            }
        }
    }
    Ok(ExperimentPlan {
        master_seed: file.master_seed,
        dataset: file.dataset,
        entries,
        output_dir: file.output.dir,
        formats: file.output.formats,
    })
}

impl ExperimentPlan {
    /// Overrides the master seed of the plan and every entry.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        for e in &mut self.entries {
            e.config.master_seed = seed;
        }
        self
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}

pub fn load_dataset(section: &DatasetSection) -> Result<Dataset> {
    match section.kind {
        DatasetKind::Synthetic => Ok(ldp_audit::data::generate_blobs(&section.synthetic)?),
        DatasetKind::Mnist => {
            let images_path = section.images.as_ref().ok_or_else(|| invalid("missing images path"))?;
            let labels_path = section.labels.as_ref().ok_or_else(|| invalid("missing labels path"))?;
            let mut images = load_idx_images(images_path)?;
            let mut labels = load_idx_labels(labels_path)?;
            if images.len() != labels.len() {
                return Err(invalid(format!("{} images but {} labels", images.len(), labels.len())));
            }
            if let Some(limit) = section.limit {
                images.truncate(limit);
                labels.truncate(limit);
            }
            Ok(Dataset::from_idx(images, labels, 10)?)
        }
    }
}
