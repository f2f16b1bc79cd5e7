//! Adversary instantiations: crafters that produce the candidate gradient
//! pair `(g1, g2)`, and distinguishers that guess which one was randomized.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{filter_by_label, Dataset};
use crate::mechanism::{l2_norm, sigmoid, PrivacySpec, RandomizedReport};
use crate::nn::{dot, gradient_descent, init_params, Example, ModelSpec, ModelState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrafterKind {
    Benign,
    InputPerturbation,
    ParameterRetrogression,
    GradientFlip,
    Collusion,
    DummyGradient,
}

impl CrafterKind {
    pub const ALL: [CrafterKind; 6] = [
        CrafterKind::Benign,
        CrafterKind::InputPerturbation,
        CrafterKind::ParameterRetrogression,
        CrafterKind::GradientFlip,
        CrafterKind::Collusion,
        CrafterKind::DummyGradient,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CrafterKind::Benign => "benign",
            CrafterKind::InputPerturbation => "input_perturbation",
            CrafterKind::ParameterRetrogression => "parameter_retrogression",
            CrafterKind::GradientFlip => "gradient_flip",
            CrafterKind::Collusion => "collusion",
            CrafterKind::DummyGradient => "dummy_gradient",
        }
    }

    /// Black-box decision rule paired with this crafter.
    pub fn black_box_rule(self) -> DistinguisherKind {
        match self {
            CrafterKind::Benign => DistinguisherKind::BlackBoxDelta,
            CrafterKind::DummyGradient => DistinguisherKind::BlackBoxSignSum,
            _ => DistinguisherKind::BlackBoxLossDecrease,
        }
    }

    /// Crafters whose second gradient is exactly `-g1`.
    pub fn is_antipodal(self) -> bool {
        matches!(
            self,
            CrafterKind::GradientFlip | CrafterKind::Collusion | CrafterKind::DummyGradient
        )
    }
}

impl fmt::Display for CrafterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CrafterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CrafterKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown crafter '{s}'")))
    }
}

/// Tunables shared by the crafters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrafterParams {
    /// FGSM step and parameter-retrogression step.
    pub alpha: f64,
    /// Dummy gradient norm as a fraction of the clipping norm.
    pub dummy_norm_fraction: f64,
    /// Gradient-descent steps used to build the colluding server's model.
    pub collusion_steps: usize,
    pub collusion_lr: f64,
}

impl Default for CrafterParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            dummy_norm_fraction: 1.0,
            collusion_steps: 200,
            collusion_lr: 0.1,
        }
    }
}

impl CrafterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.dummy_norm_fraction > 0.0 && self.dummy_norm_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "dummy norm fraction must lie in (0, 1], got {}",
                self.dummy_norm_fraction
            )));
        }
        if !(self.collusion_lr > 0.0) || !self.collusion_lr.is_finite() {
            return Err(Error::InvalidParameter(
                "collusion learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Which of the two candidate gradients was (or is guessed to be) randomized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    G1,
    G2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub crafter: CrafterKind,
    /// Example behind `g1`, if any.
    pub x1: Option<Example>,
    /// Example behind `g2`, if it differs from `x1`.
    pub x2: Option<Example>,
}

impl GradientPair {
    pub fn get(&self, which: Hypothesis) -> &[f64] {
        match which {
            Hypothesis::G1 => &self.g1,
            Hypothesis::G2 => &self.g2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistinguisherKind {
    BlackBoxDelta,
    BlackBoxLossDecrease,
    BlackBoxSignSum,
    WhiteBoxCosine,
}

impl DistinguisherKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistinguisherKind::BlackBoxDelta => "black_box_delta",
            DistinguisherKind::BlackBoxLossDecrease => "black_box_loss_decrease",
            DistinguisherKind::BlackBoxSignSum => "black_box_sign_sum",
            DistinguisherKind::WhiteBoxCosine => "white_box_cosine",
        }
    }
}

/// `sign` with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Both gradients computed honestly on distinct examples.
pub fn craft_benign(theta: &ModelState, x1: &Example, x2: &Example) -> Result<GradientPair> {
    if x1 == x2 {
        return Err(Error::Precondition("benign crafter needs two distinct examples".into()));
    }
    Ok(GradientPair {
        g1: theta.grad_params(x1)?,
        g2: theta.grad_params(x2)?,
        crafter: CrafterKind::Benign,
        x1: Some(x1.clone()),
        x2: Some(x2.clone()),
    })
}

/// FGSM: `x2 = x1 + α·sign(∇ₓ f(x1; θ))`, same label.
pub fn craft_input_perturbation(theta: &ModelState, x1: &Example, alpha: f64) -> Result<GradientPair> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let grads = theta.loss_and_grads(x1)?;
    let features = x1
        .features
        .iter()
        .zip(&grads.grad_input)
        .map(|(x, g)| x + alpha * sign(*g))
        .collect();
    let x2 = Example::new(features, x1.label);
    Ok(GradientPair {
        g1: grads.grad_params,
        g2: theta.grad_params(&x2)?,
        crafter: CrafterKind::InputPerturbation,
        x1: Some(x1.clone()),
        x2: Some(x2),
    })
}

/// Gradient at `θ` and at the loss-ascent point `θ' = θ + α∇f(x1; θ)`.
///
/// `alpha = 0` is accepted and yields `g1 = g2`.
pub fn craft_parameter_retrogression(theta: &ModelState, x1: &Example, alpha: f64) -> Result<GradientPair> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    let g1 = theta.grad_params(x1)?;
    let retrograded = theta.with_params(theta.params().iter().zip(&g1).map(|(p, g)| p + alpha * g).collect())?;
    Ok(GradientPair {
        g2: retrograded.grad_params(x1)?,
        g1,
        crafter: CrafterKind::ParameterRetrogression,
        x1: Some(x1.clone()),
        x2: None,
    })
}

pub fn craft_gradient_flip(theta: &ModelState, x1: &Example) -> Result<GradientPair> {
    let g1 = theta.grad_params(x1)?;
    Ok(GradientPair {
        g2: g1.iter().map(|v| -v).collect(),
        g1,
        crafter: CrafterKind::GradientFlip,
        x1: Some(x1.clone()),
        x2: None,
    })
}

/// A server model pre-trained on a single label.
#[derive(Debug, Clone, PartialEq)]
pub struct MaliciousModel {
    pub model: ModelState,
    pub target_label: usize,
}

/// Full-batch gradient descent from a fresh initialization on the examples
/// of `target_label` only.
pub fn pretrain_malicious_model<R: Rng + ?Sized>(
    spec: &ModelSpec,
    dataset: &Dataset,
    target_label: usize,
    steps: usize,
    lr: f64,
    rng: &mut R,
) -> Result<MaliciousModel> {
    let subset = filter_by_label(dataset, target_label)?;
    let init = init_params(spec, rng)?;
    Ok(MaliciousModel {
        model: gradient_descent(&init, subset.examples(), steps, lr)?,
        target_label,
    })
}

/// Gradient flip under the malicious model; `x1` must not carry its label.
pub fn craft_collusion(malicious: &MaliciousModel, x1: &Example) -> Result<GradientPair> {
    if x1.label == malicious.target_label {
        return Err(Error::Precondition(format!(
            "collusion example must not carry the malicious model's label {}",
            malicious.target_label
        )));
    }
    let mut pair = craft_gradient_flip(&malicious.model, x1)?;
    pair.crafter = CrafterKind::Collusion;
    Ok(pair)
}

/// Constant gradient `(λ, …, λ)` with `λ = fraction·L/√d`, and its flip.
pub fn craft_dummy(spec: &PrivacySpec, norm_fraction: f64) -> Result<GradientPair> {
    if !(norm_fraction > 0.0 && norm_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dummy norm fraction must lie in (0, 1], got {norm_fraction}"
        )));
    }
    let lambda = norm_fraction * spec.clip_norm / (spec.dim as f64).sqrt();
    Ok(GradientPair {
        g1: vec![lambda; spec.dim],
        g2: vec![-lambda; spec.dim],
        crafter: CrafterKind::DummyGradient,
        x1: None,
        x2: None,
    })
}

fn check_same_spec(a: &ModelState, b: &ModelState) -> Result<()> {
    if a.spec() != b.spec() {
        return Err(Error::InvalidModel(
            "distinguisher models have different architectures".into(),
        ));
    }
    Ok(())
}

/// Benign rule: `g1` iff `|Δf(x1)| ≥ |Δf(x2)|` across the update.
pub fn distinguish_black_delta(
    theta_t: &ModelState,
    theta_t1: &ModelState,
    x1: &Example,
    x2: &Example,
) -> Result<Hypothesis> {
    check_same_spec(theta_t, theta_t1)?;
    let delta = |x: &Example| -> Result<f64> { Ok((theta_t1.loss(x)? - theta_t.loss(x)?).abs()) };
    Ok(decide_delta(delta(x1)?, delta(x2)?))
}

pub(crate) fn decide_delta(delta1: f64, delta2: f64) -> Hypothesis {
    if delta1 >= delta2 {
        Hypothesis::G1
    } else {
        Hypothesis::G2
    }
}

/// Default rule: `g1` iff the loss of `x1` did not increase.
pub fn distinguish_black_loss_decrease(
    theta_t: &ModelState,
    theta_t1: &ModelState,
    x1: &Example,
) -> Result<Hypothesis> {
    check_same_spec(theta_t, theta_t1)?;
    Ok(decide_loss_decrease(theta_t.loss(x1)?, theta_t1.loss(x1)?))
}

pub(crate) fn decide_loss_decrease(before: f64, after: f64) -> Hypothesis {
    if after <= before {
        Hypothesis::G1
    } else {
        Hypothesis::G2
    }
}

/// Dummy-gradient rule: `g1` iff `Σ sign(θ_{t+1} − θ_t) ≥ 0`.
///
/// The server descends (`θ − η g`), so a positive dummy `g1` pushes the sum
/// negative; `invert` flips the final guess for that orientation.
pub fn distinguish_black_sign_sum(theta_t: &ModelState, theta_t1: &ModelState, invert: bool) -> Result<Hypothesis> {
    check_same_spec(theta_t, theta_t1)?;
    let sum: f64 = theta_t1
        .params()
        .iter()
        .zip(theta_t.params())
        .map(|(a, b)| sign(a - b))
        .sum();
    let literal = if sum >= 0.0 { Hypothesis::G1 } else { Hypothesis::G2 };
    Ok(match (invert, literal) {
        (false, h) => h,
        (true, Hypothesis::G1) => Hypothesis::G2,
        (true, Hypothesis::G2) => Hypothesis::G1,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (l2_norm(a) * l2_norm(b))
}

/// White-box rule: `g1` iff `cos(ẑ, g1) ≥ cos(ẑ, g2)`.
pub fn distinguish_white_cosine(z_hat: &RandomizedReport, g1: &[f64], g2: &[f64]) -> Result<Hypothesis> {
    let z = z_hat.z_hat();
    if g1.len() != z.len() || g2.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: if g1.len() != z.len() { g1.len() } else { g2.len() },
        });
    }
    if l2_norm(g1) == 0.0 || l2_norm(g2) == 0.0 {
        return Err(Error::Precondition(
            "cosine distinguisher needs non-zero gradients".into(),
        ));
    }
    if cosine(z, g1) >= cosine(z, g2) {
        Ok(Hypothesis::G1)
    } else {
        Ok(Hypothesis::G2)
    }
}

/// `e^ε / (1 + e^ε)`: success probability of the white-box distinguisher
/// against a full-norm gradient and its flip.
pub fn worst_case_success_prob(epsilon: f64) -> f64 {
    sigmoid(epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_blobs, SyntheticSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn setup() -> (ModelState, Dataset) {
        let ds = generate_blobs(&SyntheticSpec {
            examples_per_class: 20,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let spec = ModelSpec::mlp(20, &[16], 10).unwrap();
        (init_params(&spec, &mut rng(1)).unwrap(), ds)
    }

    fn report(v: Vec<f64>) -> RandomizedReport {
        RandomizedReport::new(v).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in CrafterKind::ALL {
            assert_eq!(k.as_str().parse::<CrafterKind>().unwrap(), k);
        }
        assert!("nope".parse::<CrafterKind>().is_err());
    }

    #[test]
    fn black_box_rule_mapping() {
        assert_eq!(CrafterKind::Benign.black_box_rule(), DistinguisherKind::BlackBoxDelta);
        assert_eq!(
            CrafterKind::DummyGradient.black_box_rule(),
            DistinguisherKind::BlackBoxSignSum
        );
        for k in [
            CrafterKind::InputPerturbation,
            CrafterKind::ParameterRetrogression,
            CrafterKind::GradientFlip,
            CrafterKind::Collusion,
        ] {
            assert_eq!(k.black_box_rule(), DistinguisherKind::BlackBoxLossDecrease);
        }
    }

    #[test]
    fn benign_matches_direct_gradients() {
        let (theta, ds) = setup();
        let (x1, x2) = (&ds.examples()[0], &ds.examples()[45]);
        let pair = craft_benign(&theta, x1, x2).unwrap();
        assert_eq!(pair.g1, theta.grad_params(x1).unwrap());
        assert_eq!(pair.g2, theta.grad_params(x2).unwrap());
        assert_ne!(pair.g1, pair.g2);
        assert!(matches!(craft_benign(&theta, x1, x1), Err(Error::Precondition(_))));
    }

    #[test]
    fn fgsm_is_an_l_infinity_step() {
        let (theta, ds) = setup();
        for alpha in [1.0, 0.25] {
            let x1 = &ds.examples()[3];
            let pair = craft_input_perturbation(&theta, x1, alpha).unwrap();
            let x2 = pair.x2.as_ref().unwrap();
            assert_eq!(x2.label, x1.label);
            for (a, b) in x2.features.iter().zip(&x1.features) {
                let step = a - b;
                assert!(
                    [alpha, -alpha, 0.0].iter().any(|s| (step - s).abs() < 1e-12),
                    "step {step}"
                );
            }
        }
        assert!(craft_input_perturbation(&theta, &ds.examples()[0], 0.0).is_err());
    }

    #[test]
    fn fgsm_with_zero_input_gradient_is_identity() {
        // A model whose first layer is zero has zero input gradient.
        let spec = ModelSpec::mlp(3, &[4], 2).unwrap();
        let theta = ModelState::zeros(&spec).unwrap();
        let x1 = Example::new(vec![0.5, -0.5, 1.0], 1);
        let pair = craft_input_perturbation(&theta, &x1, 1.0).unwrap();
        assert_eq!(pair.x2.as_ref().unwrap(), &x1);
        assert_eq!(pair.g1, pair.g2);
    }

    #[test]
    fn retrogression_ascends_the_loss() {
        let (theta, ds) = setup();
        let x1 = &ds.examples()[7];
        let same = craft_parameter_retrogression(&theta, x1, 0.0).unwrap();
        assert_eq!(same.g1, same.g2);

        let pair = craft_parameter_retrogression(&theta, x1, 1e-3).unwrap();
        let moved = theta
            .with_params(theta.params().iter().zip(&pair.g1).map(|(p, g)| p + 1e-3 * g).collect())
            .unwrap();
        assert!(moved.loss(x1).unwrap() >= theta.loss(x1).unwrap());
        // First-order Taylor: Δf ≈ α‖g‖².
        let predicted = 1e-3 * dot(&pair.g1, &pair.g1);
        let actual = moved.loss(x1).unwrap() - theta.loss(x1).unwrap();
        assert!((actual - predicted).abs() < 0.1 * predicted);
    }

    #[test]
    fn flip_is_antipodal() {
        let (theta, ds) = setup();
        let pair = craft_gradient_flip(&theta, &ds.examples()[11]).unwrap();
        assert!(pair.g1.iter().zip(&pair.g2).all(|(a, b)| a + b == 0.0));
        assert_eq!(l2_norm(&pair.g1), l2_norm(&pair.g2));
        assert!((cosine(&pair.g1, &pair.g2) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn malicious_model_overfits_one_label() {
        let (_, ds) = setup();
        let spec = ModelSpec::mlp(20, &[16], 10).unwrap();
        let untrained = pretrain_malicious_model(&spec, &ds, 2, 0, 0.1, &mut rng(3)).unwrap();
        assert_eq!(untrained.model, init_params(&spec, &mut rng(3)).unwrap());

        let mal = pretrain_malicious_model(&spec, &ds, 2, 200, 0.1, &mut rng(3)).unwrap();
        let own = filter_by_label(&ds, 2).unwrap();
        assert!(mal.model.mean_loss(own.examples()).unwrap() < untrained.model.mean_loss(own.examples()).unwrap());
        let others: Vec<&Example> = ds.examples().iter().filter(|x| x.label != 2).collect();
        assert!(mal.model.mean_loss(others.iter().copied()).unwrap() >= 10f64.ln());

        let x_other = others[0];
        let pair = craft_collusion(&mal, x_other).unwrap();
        assert!(pair.g1.iter().zip(&pair.g2).all(|(a, b)| a + b == 0.0));
        assert!(matches!(
            craft_collusion(&mal, &own.examples()[0]),
            Err(Error::Precondition(_))
        ));
        assert!(pretrain_malicious_model(
            &spec,
            &Dataset::new(vec![Example::new(vec![0.0; 20], 0)], 10).unwrap(),
            2,
            1,
            0.1,
            &mut rng(0)
        )
        .is_err());
    }

    #[test]
    fn collusion_gradients_are_larger_than_benign() {
        let (_, ds) = setup();
        let spec = ModelSpec::mlp(20, &[16], 10).unwrap();
        let mut benign_total = 0.0;
        let mut malicious_total = 0.0;
        let mut r = rng(10);
        for i in 0..100u64 {
            let theta = init_params(&spec, &mut rng(100 + i)).unwrap();
            let mal = pretrain_malicious_model(&spec, &ds, (i % 10) as usize, 50, 0.1, &mut r).unwrap();
            let x1 = loop {
                let x = ds.sample(&mut r);
                if x.label != mal.target_label {
                    break x;
                }
            };
            benign_total += l2_norm(&craft_gradient_flip(&theta, x1).unwrap().g1);
            malicious_total += l2_norm(&craft_collusion(&mal, x1).unwrap().g1);
        }
        assert!(malicious_total > benign_total, "{malicious_total} vs {benign_total}");
    }

    #[test]
    fn dummy_gradient_examples() {
        let spec = PrivacySpec::new(1.0, 1.0, 4).unwrap();
        let pair = craft_dummy(&spec, 1.0).unwrap();
        assert_eq!(pair.g1, vec![0.5; 4]);
        assert_eq!(pair.g2, vec![-0.5; 4]);
        assert!((l2_norm(&pair.g1) - 1.0).abs() < 1e-15);
        for d in [1, 3, 1002] {
            for frac in [0.25, 0.7, 1.0] {
                let spec = PrivacySpec::new(2.0, 1.5, d).unwrap();
                let pair = craft_dummy(&spec, frac).unwrap();
                assert!((l2_norm(&pair.g1) - frac * 1.5).abs() < 1e-12);
            }
        }
        assert!(craft_dummy(&spec, 0.0).is_err());
        assert!(craft_dummy(&spec, 1.5).is_err());
    }

    #[test]
    fn delta_rule() {
        assert_eq!(decide_delta(0.3, 0.1), Hypothesis::G1);
        assert_eq!(decide_delta(0.1, 0.3), Hypothesis::G2);
        let (theta, ds) = setup();
        let h = distinguish_black_delta(&theta, &theta, &ds.examples()[0], &ds.examples()[1]).unwrap();
        assert_eq!(h, Hypothesis::G1);
    }

    #[test]
    fn loss_decrease_rule() {
        assert_eq!(decide_loss_decrease(1.0, 0.5), Hypothesis::G1);
        assert_eq!(decide_loss_decrease(1.0, 1.5), Hypothesis::G2);
        assert_eq!(decide_loss_decrease(1.0, 1.0), Hypothesis::G1);
    }

    #[test]
    fn sign_sum_rule() {
        let spec = ModelSpec::new(vec![1, 2]).unwrap();
        let t = ModelState::new(spec.clone(), vec![0.0; 4]).unwrap();
        let up = ModelState::new(spec.clone(), vec![1.0; 4]).unwrap();
        let down = ModelState::new(spec.clone(), vec![-1.0; 4]).unwrap();
        let tie = ModelState::new(spec, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(distinguish_black_sign_sum(&t, &up, false).unwrap(), Hypothesis::G1);
        assert_eq!(distinguish_black_sign_sum(&t, &down, false).unwrap(), Hypothesis::G2);
        assert_eq!(distinguish_black_sign_sum(&t, &tie, false).unwrap(), Hypothesis::G1);
        assert_eq!(distinguish_black_sign_sum(&t, &up, true).unwrap(), Hypothesis::G2);
        assert_eq!(distinguish_black_sign_sum(&t, &down, true).unwrap(), Hypothesis::G1);
    }

    #[test]
    fn cosine_rule() {
        let z = report(vec![0.0, 1.0]);
        let zv = z.z_hat().to_vec();
        // ẑ aligned with g1.
        assert_eq!(distinguish_white_cosine(&z, &zv, &[1.0, 0.0]).unwrap(), Hypothesis::G1);
        // Antipodal pair reduces to the sign of ⟨ẑ, g1⟩.
        let g1 = [0.3, -0.8];
        let g2 = [-0.3, 0.8];
        let expected = if dot(&zv, &g1) >= 0.0 {
            Hypothesis::G1
        } else {
            Hypothesis::G2
        };
        assert_eq!(distinguish_white_cosine(&z, &g1, &g2).unwrap(), expected);
        // Orthogonal to both: tie goes to g1.
        let ortho = [-zv[1], zv[0]];
        let neg: Vec<f64> = ortho.iter().map(|v| -v).collect();
        assert_eq!(distinguish_white_cosine(&z, &ortho, &neg).unwrap(), Hypothesis::G1);
        assert!(distinguish_white_cosine(&z, &[0.0, 0.0], &g2).is_err());
        assert!(distinguish_white_cosine(&z, &[1.0], &g2).is_err());
    }

    #[test]
    fn worst_case_probabilities() {
        assert_eq!(worst_case_success_prob(0.0), 0.5);
        assert!((worst_case_success_prob(2.0) - 0.880_797_077_977_882_4).abs() < 1e-12);
        // 4.07 → about 98.3 %.
        assert!((worst_case_success_prob(4.07) - 0.983_21).abs() < 1e-5);
    }
}
