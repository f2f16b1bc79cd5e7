//! Black-box and white-box LDP tests.
//!
//! One *measurement* fixes a global model and a crafted gradient pair, then
//! plays `K` independent trials: a fair coin picks `g1` or `g2`, the client
//! randomizer reports it, and the distinguisher guesses. False positives
//! (guess `g2` under `g1`) and false negatives (guess `g1` under `g2`) give
//! the empirical ε. An audit averages `R` measurements.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    craft_benign, craft_collusion, craft_dummy, craft_gradient_flip, craft_input_perturbation,
    craft_parameter_retrogression, decide_delta, decide_loss_decrease, distinguish_black_sign_sum,
    distinguish_white_cosine, pretrain_malicious_model, CrafterKind, CrafterParams, DistinguisherKind, GradientPair,
    Hypothesis,
};
use crate::data::Dataset;
use crate::mechanism::{randomize_client, server_debias_and_update, PrivacySpec, ServerSpec};
use crate::nn::{gradient_descent, init_params, Example, ModelSpec, ModelState};
use crate::seeding::{measurement_rng, trial_rng, Purpose};
use crate::{Error, Result};

pub const MIN_TRIALS: usize = 100;

/// Measurement index reserved for the sign-sum orientation pilot.
const CALIBRATION_MEASUREMENT: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BlackBox,
    WhiteBox,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::BlackBox, Mode::WhiteBox];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::BlackBox => "black_box",
            Mode::WhiteBox => "white_box",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode '{s}'")))
    }
}

/// How the global model `θ_t` is produced for each measurement: a fresh
/// initialization followed by `steps` of full-batch gradient descent on the
/// whole dataset, i.e. a model part-way through federated training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarmupSpec {
    pub steps: usize,
    pub lr: f64,
}

impl Default for WarmupSpec {
    fn default() -> Self {
        Self { steps: 20, lr: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditConfig {
    pub crafter: CrafterKind,
    pub mode: Mode,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub crafter_params: CrafterParams,
    pub trials: usize,
    pub measurements: usize,
    pub num_clients: usize,
    pub master_seed: u64,
    pub model: ModelSpec,
    /// Radius of the server's ℓ2 parameter ball.
    pub projection_radius: f64,
    pub warmup: WarmupSpec,
    /// Trials in the pilot that orients the sign-sum rule.
    pub calibration_trials: usize,
}

impl AuditConfig {
    /// Defaults: K = 10,000, R = 10, L = 1, one client, `[input, 32, classes]`.
    pub fn new(crafter: CrafterKind, mode: Mode, epsilon: f64, input_dim: usize, num_classes: usize) -> Result<Self> {
        let clip_norm = 1.0;
        Ok(Self {
            crafter,
            mode,
            epsilon,
            clip_norm,
            crafter_params: CrafterParams::default(),
            trials: 10_000,
            measurements: 10,
            num_clients: 1,
            master_seed: 0,
            model: ModelSpec::mlp(input_dim, &[32], num_classes)?,
            projection_radius: 10.0 * clip_norm,
            warmup: WarmupSpec::default(),
            calibration_trials: 1_000,
        })
    }

    pub fn privacy(&self) -> Result<PrivacySpec> {
        PrivacySpec::new(self.epsilon, self.clip_norm, self.model.num_params())
    }

    pub fn server(&self) -> Result<ServerSpec> {
        ServerSpec::new(self.projection_radius, self.num_clients)
    }

    pub fn distinguisher(&self) -> DistinguisherKind {
        match self.mode {
            Mode::BlackBox => self.crafter.black_box_rule(),
            Mode::WhiteBox => DistinguisherKind::WhiteBoxCosine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.privacy()?;
        self.server()?;
        self.model.validate()?;
        self.crafter_params.validate()?;
        if self.trials < MIN_TRIALS {
            return Err(Error::InvalidParameter(format!(
                "need at least {MIN_TRIALS} trials, got {}",
                self.trials
            )));
        }
        if self.measurements == 0 {
            return Err(Error::InvalidParameter("need at least one measurement".into()));
        }
        if !(self.warmup.lr > 0.0) || !self.warmup.lr.is_finite() {
            return Err(Error::InvalidParameter("warm-up learning rate must be positive".into()));
        }
        if self.calibration_trials == 0 {
            return Err(Error::InvalidParameter("calibration needs at least one trial".into()));
        }
        Ok(())
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.input_dim() != self.model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.input_dim(),
                got: dataset.input_dim(),
            });
        }
        if dataset.num_classes() != self.model.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: self.model.num_classes(),
                got: dataset.num_classes(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub truth: Hypothesis,
    pub guess: Hypothesis,
}

impl TrialRecord {
    pub fn correct(&self) -> bool {
        self.truth == self.guess
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub measurement_index: u64,
    pub trials_g1: u64,
    pub trials_g2: u64,
    /// Guessed `g2` while `g1` was randomized.
    pub fp_count: u64,
    /// Guessed `g1` while `g2` was randomized.
    pub fn_count: u64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub eps_empirical: f64,
    /// A zero (or full) count was moved to the `1/n` resolution limit.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditResult {
    pub config: AuditConfig,
    pub measurements: Vec<MeasurementResult>,
    pub eps_mean: f64,
    /// Sample standard deviation across measurements (0 for one measurement).
    pub eps_std: f64,
    /// Orientation chosen for the sign-sum rule, when it is in use.
    pub sign_sum_inverted: Option<bool>,
}

/// `max(ln((1−FP)/FN), ln((1−FN)/FP))` for rates strictly inside `(0, 1)`.
pub fn empirical_epsilon(fp: f64, fn_: f64) -> Result<f64> {
    let inside = |r: f64| r > 0.0 && r < 1.0;
    if !inside(fp) || !inside(fn_) {
        return Err(Error::InvalidParameter(format!(
            "error rates must lie in (0, 1), got FP={fp} FN={fn_}"
        )));
    }
    Ok(((1.0 - fp) / fn_).ln().max(((1.0 - fn_) / fp).ln()))
}

/// Everything a trial needs that is fixed for the whole measurement.
#[derive(Debug, Clone)]
pub struct MeasurementContext {
    pub index: u64,
    /// Model distributed to the crafter and updated by the server.
    pub theta: ModelState,
    pub pair: GradientPair,
    pub privacy: PrivacySpec,
    pub server: ServerSpec,
    pub sign_sum_invert: bool,
    loss_x1: Option<f64>,
    loss_x2: Option<f64>,
}

/// `θ_t` for measurement `m`: seeded initialization plus warm-up.
pub fn global_model(config: &AuditConfig, dataset: &Dataset, m: u64) -> Result<ModelState> {
    let mut rng = measurement_rng(config.master_seed, m, Purpose::GlobalModel);
    let init = init_params(&config.model, &mut rng)?;
    gradient_descent(&init, dataset.examples(), config.warmup.steps, config.warmup.lr)
}

fn sample_distinct<'a, R: Rng + ?Sized>(dataset: &'a Dataset, avoid: &Example, rng: &mut R) -> Result<&'a Example> {
    for _ in 0..10_000 {
        let x = dataset.sample(rng);
        if x != avoid {
            return Ok(x);
        }
    }
    Err(Error::Precondition("dataset has no two distinct examples".into()))
}

fn sample_other_label<'a, R: Rng + ?Sized>(dataset: &'a Dataset, label: usize, rng: &mut R) -> Result<&'a Example> {
    let candidates: Vec<&Example> = dataset.examples().iter().filter(|x| x.label != label).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no examples with a label other than {label}"
        )));
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Builds the crafter context for measurement `m` from a given global model.
pub fn prepare_measurement_with(
    config: &AuditConfig,
    dataset: &Dataset,
    m: u64,
    global: &ModelState,
    sign_sum_invert: bool,
) -> Result<MeasurementContext> {
    config.check_dataset(dataset)?;
    let privacy = config.privacy()?;
    let server = config.server()?;
    let params = &config.crafter_params;
    let mut rng = measurement_rng(config.master_seed, m, Purpose::Context);
    let mut theta = global.clone();
    let pair = match config.crafter {
        CrafterKind::Benign => {
            let x1 = dataset.sample(&mut rng);
            let x2 = sample_distinct(dataset, x1, &mut rng)?;
            craft_benign(&theta, x1, x2)?
        }
        CrafterKind::InputPerturbation => craft_input_perturbation(&theta, dataset.sample(&mut rng), params.alpha)?,
        CrafterKind::ParameterRetrogression => {
            craft_parameter_retrogression(&theta, dataset.sample(&mut rng), params.alpha)?
        }
        CrafterKind::GradientFlip => craft_gradient_flip(&theta, dataset.sample(&mut rng))?,
        CrafterKind::Collusion => {
            let target = rng.random_range(0..dataset.num_classes());
            let mut model_rng = measurement_rng(config.master_seed, m, Purpose::MaliciousModel);
            let malicious = pretrain_malicious_model(
                &config.model,
                dataset,
                target,
                params.collusion_steps,
                params.collusion_lr,
                &mut model_rng,
            )?;
            let x1 = sample_other_label(dataset, target, &mut rng)?;
            let pair = craft_collusion(&malicious, x1)?;
            theta = malicious.model;
            pair
        }
        CrafterKind::DummyGradient => craft_dummy(&privacy, params.dummy_norm_fraction)?,
    };
    let loss_x1 = pair.x1.as_ref().map(|x| theta.loss(x)).transpose()?;
    let loss_x2 = pair.x2.as_ref().map(|x| theta.loss(x)).transpose()?;
    Ok(MeasurementContext {
        index: m,
        theta,
        pair,
        privacy,
        server,
        sign_sum_invert,
        loss_x1,
        loss_x2,
    })
}

pub fn prepare_measurement(
    config: &AuditConfig,
    dataset: &Dataset,
    m: u64,
    sign_sum_invert: bool,
) -> Result<MeasurementContext> {
    let global = global_model(config, dataset, m)?;
    prepare_measurement_with(config, dataset, m, &global, sign_sum_invert)
}

fn coin<R: Rng + ?Sized>(rng: &mut R) -> Hypothesis {
    if rng.random::<bool>() {
        Hypothesis::G1
    } else {
        Hypothesis::G2
    }
}

/// White-box test: the distinguisher sees `ẑ`, `g1`, `g2`.
pub fn run_trial_white<R: Rng + ?Sized>(ctx: &MeasurementContext, rng: &mut R) -> Result<TrialRecord> {
    let truth = coin(rng);
    let report = randomize_client(ctx.pair.get(truth), &ctx.privacy, rng)?;
    let guess = distinguish_white_cosine(&report, &ctx.pair.g1, &ctx.pair.g2)?;
    Ok(TrialRecord { truth, guess })
}

/// Black-box test: the distinguisher sees only `θ_t` and `θ_{t+1}`.
///
/// With more than one client the other `n − 1` reports come from honest
/// clients randomizing benign gradients of random examples.
pub fn run_trial_black<R: Rng + ?Sized>(
    ctx: &MeasurementContext,
    dataset: &Dataset,
    rng: &mut R,
) -> Result<TrialRecord> {
    let truth = coin(rng);
    let mut reports = Vec::with_capacity(ctx.server.num_clients);
    reports.push(randomize_client(ctx.pair.get(truth), &ctx.privacy, rng)?);
    for _ in 1..ctx.server.num_clients {
        let g = ctx.theta.grad_params(dataset.sample(rng))?;
        reports.push(randomize_client(&g, &ctx.privacy, rng)?);
    }
    let next = server_debias_and_update(&ctx.theta, &reports, &ctx.privacy, &ctx.server)?;
    let guess = match ctx.pair.crafter.black_box_rule() {
        DistinguisherKind::BlackBoxDelta => {
            let (x1, x2) = ctx
                .pair
                .x1
                .as_ref()
                .zip(ctx.pair.x2.as_ref())
                .ok_or_else(|| Error::Precondition("delta rule needs both crafter examples".into()))?;
            let d1 = (next.loss(x1)? - ctx.loss_x1.expect("set with x1")).abs();
            let d2 = (next.loss(x2)? - ctx.loss_x2.expect("set with x2")).abs();
            decide_delta(d1, d2)
        }
        DistinguisherKind::BlackBoxLossDecrease => {
            let x1 = ctx
                .pair
                .x1
                .as_ref()
                .ok_or_else(|| Error::Precondition("loss-decrease rule needs the crafter example".into()))?;
            decide_loss_decrease(ctx.loss_x1.expect("set with x1"), next.loss(x1)?)
        }
        DistinguisherKind::BlackBoxSignSum => distinguish_black_sign_sum(&ctx.theta, &next, ctx.sign_sum_invert)?,
        DistinguisherKind::WhiteBoxCosine => unreachable!("black-box rules never map to the cosine rule"),
    };
    Ok(TrialRecord { truth, guess })
}

fn run_trial(
    config: &AuditConfig,
    ctx: &MeasurementContext,
    dataset: &Dataset,
    purpose: Purpose,
    k: u64,
) -> Result<TrialRecord> {
    let mut rng = trial_rng(config.master_seed, ctx.index, purpose, k);
    match config.mode {
        Mode::WhiteBox => run_trial_white(ctx, &mut rng),
        Mode::BlackBox => run_trial_black(ctx, dataset, &mut rng),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    g1: u64,
    g2: u64,
    false_pos: u64,
    false_neg: u64,
}

impl Tally {
    fn of(record: TrialRecord) -> Self {
        match (record.truth, record.guess) {
            (Hypothesis::G1, Hypothesis::G1) => Tally {
                g1: 1,
                ..Tally::default()
            },
            (Hypothesis::G1, Hypothesis::G2) => Tally {
                g1: 1,
                false_pos: 1,
                ..Tally::default()
            },
            (Hypothesis::G2, Hypothesis::G2) => Tally {
                g2: 1,
                ..Tally::default()
            },
            (Hypothesis::G2, Hypothesis::G1) => Tally {
                g2: 1,
                false_neg: 1,
                ..Tally::default()
            },
        }
    }

    fn merge(self, other: Tally) -> Tally {
        Tally {
            g1: self.g1 + other.g1,
            g2: self.g2 + other.g2,
            false_pos: self.false_pos + other.false_pos,
            false_neg: self.false_neg + other.false_neg,
        }
    }
}

fn run_trials(
    config: &AuditConfig,
    ctx: &MeasurementContext,
    dataset: &Dataset,
    purpose: Purpose,
    trials: usize,
) -> Result<Tally> {
    (0..trials as u64)
        .into_par_iter()
        .map(|k| run_trial(config, ctx, dataset, purpose, k).map(Tally::of))
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
}

/// Moves a zero or full count to the `1/n` resolution limit.
fn clamped_rate(count: u64, total: u64) -> (f64, bool) {
    let n = total as f64;
    if count == 0 {
        (1.0 / n, true)
    } else if count == total {
        (1.0 - 1.0 / n, true)
    } else {
        (count as f64 / n, false)
    }
}

/// Rates, clamping and ε from raw counts.
pub fn summarize_counts(
    measurement_index: u64,
    trials_g1: u64,
    trials_g2: u64,
    fp_count: u64,
    fn_count: u64,
) -> Result<MeasurementResult> {
    if trials_g1 < 2 || trials_g2 < 2 {
        return Err(Error::Precondition(format!(
            "each hypothesis needs at least 2 trials, got {trials_g1} and {trials_g2}"
        )));
    }
    let (fp_rate, fp_clamped) = clamped_rate(fp_count, trials_g1);
    let (fn_rate, fn_clamped) = clamped_rate(fn_count, trials_g2);
    // A distinguisher worse than chance certifies nothing: floor at zero.
    let eps_empirical = empirical_epsilon(fp_rate, fn_rate)?.max(0.0);
    Ok(MeasurementResult {
        measurement_index,
        trials_g1,
        trials_g2,
        fp_count,
        fn_count,
        fp_rate,
        fn_rate,
        eps_empirical,
        clamped: fp_clamped || fn_clamped,
    })
}

fn uses_sign_sum(config: &AuditConfig) -> bool {
    config.distinguisher() == DistinguisherKind::BlackBoxSignSum
}

/// Orients the sign-sum rule on a held-out pilot: if the rule as written
/// guesses right less than half the time, it is inverted.
pub fn calibrate_sign_sum(config: &AuditConfig, dataset: &Dataset) -> Result<bool> {
    let ctx = prepare_measurement(config, dataset, CALIBRATION_MEASUREMENT, false)?;
    let tally = run_trials(config, &ctx, dataset, Purpose::Calibration, config.calibration_trials)?;
    let correct = tally.g1 + tally.g2 - tally.false_pos - tally.false_neg;
    Ok(2 * correct < config.calibration_trials as u64)
}

pub fn run_measurement_in(
    ctx: &MeasurementContext,
    config: &AuditConfig,
    dataset: &Dataset,
) -> Result<MeasurementResult> {
    let t = run_trials(config, ctx, dataset, Purpose::Trial, config.trials)?;
    summarize_counts(ctx.index, t.g1, t.g2, t.false_pos, t.false_neg)
}

/// One measurement of `K` trials (calibrating the sign-sum rule if needed).
pub fn run_measurement(config: &AuditConfig, dataset: &Dataset, m: u64) -> Result<MeasurementResult> {
    config.validate()?;
    let invert = uses_sign_sum(config) && calibrate_sign_sum(config, dataset)?;
    let ctx = prepare_measurement(config, dataset, m, invert)?;
    run_measurement_in(&ctx, config, dataset)
}

/// Source of per-measurement global models, so audits sharing a seed and
/// model can reuse the warm-up.
pub trait GlobalModels {
    fn global_model(&self, config: &AuditConfig, dataset: &Dataset, m: u64) -> Result<ModelState>;
}

/// Recomputes every global model.
pub struct Fresh;

impl GlobalModels for Fresh {
    fn global_model(&self, config: &AuditConfig, dataset: &Dataset, m: u64) -> Result<ModelState> {
        global_model(config, dataset, m)
    }
}

type ModelKey = (u64, u64, Vec<usize>, usize, u64);

/// Memoizes global models for one dataset. Audits of a grid differ only in
/// crafter, mode and ε, so they share every warm-up.
#[derive(Default)]
pub struct ModelCache {
    models: std::sync::Mutex<std::collections::HashMap<ModelKey, ModelState>>,
}

impl ModelCache {
    pub fn new() -> Self {
        Self::default()
    }
}

impl GlobalModels for ModelCache {
    fn global_model(&self, config: &AuditConfig, dataset: &Dataset, m: u64) -> Result<ModelState> {
        let key = (
            config.master_seed,
            m,
            config.model.layer_sizes.clone(),
            config.warmup.steps,
            config.warmup.lr.to_bits(),
        );
        if let Some(model) = self.models.lock().expect("cache lock").get(&key) {
            return Ok(model.clone());
        }
        let model = global_model(config, dataset, m)?;
        self.models.lock().expect("cache lock").insert(key, model.clone());
        Ok(model)
    }
}

pub fn run_audit(config: &AuditConfig, dataset: &Dataset) -> Result<AuditResult> {
    run_audit_with(config, dataset, &Fresh)
}

pub fn run_audit_with(config: &AuditConfig, dataset: &Dataset, models: &dyn GlobalModels) -> Result<AuditResult> {
    config.validate()?;
    config.check_dataset(dataset)?;
    let sign_sum_inverted = if uses_sign_sum(config) {
        Some(calibrate_sign_sum(config, dataset)?)
    } else {
        None
    };
    let invert = sign_sum_inverted.unwrap_or(false);
    let measurements = (0..config.measurements as u64)
        .map(|m| {
            let global = models.global_model(config, dataset, m)?;
            let ctx = prepare_measurement_with(config, dataset, m, &global, invert)?;
            run_measurement_in(&ctx, config, dataset)
        })
        .collect::<Result<Vec<_>>>()?;
    let (eps_mean, eps_std) = mean_and_std(measurements.iter().map(|r| r.eps_empirical));
    Ok(AuditResult {
        config: config.clone(),
        measurements,
        eps_mean,
        eps_std,
        sign_sum_inverted,
    })
}

/// Mean and sample (n − 1) standard deviation.
pub fn mean_and_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.into_iter().collect();
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
