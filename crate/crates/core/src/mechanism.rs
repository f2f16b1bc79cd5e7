//! LDP-SGD: the client-side gradient randomizer and the debiased server step.
//!
//! Client side, for a raw gradient `g`:
//!
//! 1. clip to norm `L`;
//! 2. project to norm exactly `L`, keeping the direction with probability
//!    `1/2 + ‖x‖/(2L)` and flipping it otherwise (unbiased in expectation);
//! 3. draw `v` uniformly on the unit sphere and report `±v`, choosing the sign
//!    that agrees with step 2 with probability `e^ε / (1 + e^ε)`.
//!
//! Server side, the mean of the reports is rescaled so it is an unbiased
//! estimate of the mean clipped gradient, a step is taken with the LDP-SGD
//! learning rate, and the result is projected onto an ℓ2 ball.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{dot, ModelState};
use crate::special::gamma_ratio;
use crate::{Error, Result};

/// Smallest ε accepted by the server: `e^ε - 1` divides both the debiasing
/// scale and the learning rate.
pub const MIN_EPSILON: f64 = 1e-6;

/// Slack allowed on `‖x‖ ≤ L` before norm projection rejects its input.
const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    /// ℓ2 clipping norm `L`.
    pub clip_norm: f64,
    /// Gradient dimension `d`.
    pub dim: usize,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, clip_norm: f64, dim: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(clip_norm > 0.0) || !clip_norm.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "clip norm must be positive, got {clip_norm}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(Self {
            epsilon,
            clip_norm,
            dim,
        })
    }

    /// `e^ε / (1 + e^ε)`: probability that random gradient sampling keeps
    /// the sign of the projected gradient.
    pub fn sign_retention_prob(&self) -> f64 {
        sigmoid(self.epsilon)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedReport {
    z_hat: Vec<f64>,
}

impl RandomizedReport {
    /// Wraps a vector that must already have unit norm (within 1e-9).
    pub fn new(z_hat: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&z_hat);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "report must have unit norm, got {norm}"
            )));
        }
        Ok(Self { z_hat })
    }

    pub fn z_hat(&self) -> &[f64] {
        &self.z_hat
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.z_hat
    }

    pub fn dim(&self) -> usize {
        self.z_hat.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    /// Radius of the ℓ2 ball the parameters are projected onto.
    pub projection_radius: f64,
    pub num_clients: usize,
}

impl ServerSpec {
    pub fn new(projection_radius: f64, num_clients: usize) -> Result<Self> {
        if !(projection_radius > 0.0) || !projection_radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "projection radius must be positive, got {projection_radius}"
            )));
        }
        if num_clients == 0 {
            return Err(Error::InvalidParameter("need at least one client".into()));
        }
        Ok(Self {
            projection_radius,
            num_clients,
        })
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `g · min{1, L/‖g‖}`. The zero vector passes through unchanged.
pub fn clip_gradient(g: &[f64], clip_norm: f64) -> Vec<f64> {
    let norm = l2_norm(g);
    if norm <= clip_norm {
        return g.to_vec();
    }
    let scale = clip_norm / norm;
    g.iter().map(|v| v * scale).collect()
}

/// Gradient norm projection: `±L·x/‖x‖`, positive with probability
/// `1/2 + ‖x‖/(2L)`.
///
/// For `x = 0` the direction is undefined; a fresh uniform direction is used
/// with a fair sign, which is the limit of the construction.
pub fn norm_project<R: Rng + ?Sized>(x: &[f64], clip_norm: f64, rng: &mut R) -> Result<Vec<f64>> {
    let norm = l2_norm(x);
    if norm > clip_norm + NORM_SLACK {
        return Err(Error::Precondition(format!(
            "norm projection input has norm {norm} > clip norm {clip_norm}"
        )));
    }
    if norm == 0.0 {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let u = sample_unit_sphere(x.len(), rng);
        return Ok(u.into_iter().map(|v| sign * clip_norm * v).collect());
    }
    let keep = 0.5 + norm / (2.0 * clip_norm);
    let sign = if rng.random::<f64>() < keep { 1.0 } else { -1.0 };
    let scale = sign * clip_norm / norm;
    Ok(x.iter().map(|v| v * scale).collect())
}

/// Uniform draw from the unit sphere in `d` dimensions (normalized Gaussian).
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    assert!(d >= 1, "sphere dimension must be at least 1");
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = l2_norm(&v);
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Full client-side randomizer: clip, project, sample.
pub fn randomize_client<R: Rng + ?Sized>(g: &[f64], spec: &PrivacySpec, rng: &mut R) -> Result<RandomizedReport> {
    if g.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: g.len(),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("gradient must be finite".into()));
    }
    let clipped = clip_gradient(g, spec.clip_norm);
    let z = norm_project(&clipped, spec.clip_norm, rng)?;
    let (v, alignment) = loop {
        let v = sample_unit_sphere(spec.dim, rng);
        let alignment = dot(&z, &v);
        // sgn(0) would zero the report; the event has probability zero.
        if alignment != 0.0 {
            break (v, alignment.signum());
        }
    };
    let sign = if rng.random::<f64>() < spec.sign_retention_prob() {
        alignment
    } else {
        -alignment
    };
    Ok(RandomizedReport {
        z_hat: v.into_iter().map(|x| sign * x).collect(),
    })
}

fn check_server_epsilon(spec: &PrivacySpec) -> Result<()> {
    if spec.epsilon < MIN_EPSILON {
        return Err(Error::InvalidParameter(format!(
            "epsilon {} below server minimum {MIN_EPSILON}",
            spec.epsilon
        )));
    }
    Ok(())
}

/// Scale that turns the mean of reports into an unbiased estimate of the mean
/// clipped gradient:
///
/// `d · L√π/2 · Γ((d-1)/2 + 1) / Γ(d/2 + 1) · (e^ε + 1)/(e^ε - 1)`
///
/// The leading `d` compensates `E|⟨v, u⟩| = Γ(d/2) / (√π Γ((d+1)/2))` for a
/// uniform unit `v` and fixed unit `u`.
pub fn debias_scale(spec: &PrivacySpec) -> Result<f64> {
    check_server_epsilon(spec)?;
    let d = spec.dim as f64;
    let ratio = gamma_ratio((d - 1.0) / 2.0 + 1.0, d / 2.0 + 1.0)?;
    let e = spec.epsilon.exp_m1();
    Ok(d * spec.clip_norm * PI.sqrt() / 2.0 * ratio * (e + 2.0) / e)
}

/// `η = ‖C‖√n / (L√d) · (e^ε - 1)/(e^ε + 1)`.
pub fn learning_rate(spec: &PrivacySpec, server: &ServerSpec) -> Result<f64> {
    check_server_epsilon(spec)?;
    let e = spec.epsilon.exp_m1();
    Ok(
        server.projection_radius * (server.num_clients as f64).sqrt() / (spec.clip_norm * (spec.dim as f64).sqrt()) * e
            / (e + 2.0),
    )
}

/// Scales `v` onto the ball of the given radius iff it lies outside.
pub fn project_l2_ball(v: &mut [f64], radius: f64) {
    let norm = l2_norm(v);
    if norm > radius {
        let s = radius / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Debiased mean of reports, `g_t`.
pub fn debiased_mean(reports: &[RandomizedReport], spec: &PrivacySpec) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter("no reports to aggregate".into()));
    }
    let scale = debias_scale(spec)? / reports.len() as f64;
    let mut mean = vec![0.0; spec.dim];
    for r in reports {
        if r.dim() != spec.dim {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                got: r.dim(),
            });
        }
        for (m, z) in mean.iter_mut().zip(&r.z_hat) {
            *m += z;
        }
    }
    mean.iter_mut().for_each(|m| *m *= scale);
    Ok(mean)
}

/// One server round: `θ_{t+1} = Π_C(θ_t − η·g_t)`.
pub fn server_debias_and_update(
    theta: &ModelState,
    reports: &[RandomizedReport],
    spec: &PrivacySpec,
    server: &ServerSpec,
) -> Result<ModelState> {
    if theta.num_params() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: theta.num_params(),
        });
    }
    if reports.len() != server.num_clients {
        return Err(Error::Precondition(format!(
            "expected {} reports, got {}",
            server.num_clients,
            reports.len()
        )));
    }
    let g = debiased_mean(reports, spec)?;
    let eta = learning_rate(spec, server)?;
    let mut next: Vec<f64> = theta.params().iter().zip(&g).map(|(p, gi)| p - eta * gi).collect();
    project_l2_ball(&mut next, server.projection_radius);
    theta.with_params(next)
}
