//! Datasets: synthetic Gaussian blobs and IDX (MNIST) files.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{dot, Example};
use crate::seeding::{measurement_rng, Purpose};
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    num_classes: usize,
    input_dim: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, num_classes: usize) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::EmptyDataset("dataset has no examples".into()))?;
        let input_dim = first.features.len();
        if input_dim == 0 {
            return Err(Error::InvalidParameter("examples need at least one feature".into()));
        }
        for x in &examples {
            if x.features.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    got: x.features.len(),
                });
            }
            if x.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: x.label,
                    classes: num_classes,
                });
            }
            if x.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("features must be finite".into()));
            }
        }
        Ok(Self {
            examples,
            num_classes,
            input_dim,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Uniformly random example.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Example {
        &self.examples[rng.random_range(0..self.examples.len())]
    }

    /// Pairs IDX images with IDX labels.
    pub fn from_idx(images: Vec<Vec<f64>>, labels: Vec<u8>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: images.len(),
                got: labels.len(),
            });
        }
        let examples = images
            .into_iter()
            .zip(labels)
            .map(|(f, l)| Example::new(f, l as usize))
            .collect();
        Self::new(examples, num_classes)
    }
}

/// Subset containing only examples with the given label.
pub fn filter_by_label(ds: &Dataset, label: usize) -> Result<Dataset> {
    if label >= ds.num_classes {
        return Err(Error::LabelOutOfRange {
            label,
            classes: ds.num_classes,
        });
    }
    let examples: Vec<Example> = ds.examples.iter().filter(|x| x.label == label).cloned().collect();
    if examples.is_empty() {
        return Err(Error::EmptyDataset(format!("no examples with label {label}")));
    }
    Ok(Dataset {
        examples,
        num_classes: ds.num_classes,
        input_dim: ds.input_dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub examples_per_class: usize,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            input_dim: 20,
            examples_per_class: 100,
            class_separation: 3.0,
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.input_dim == 0 || self.examples_per_class == 0 {
            return Err(Error::InvalidParameter(
                "synthetic data needs ≥ 2 classes, ≥ 1 input dim and ≥ 1 example per class".into(),
            ));
        }
        if !(self.class_separation > 0.0) || !self.class_separation.is_finite() {
            return Err(Error::InvalidParameter("class separation must be positive".into()));
        }
        // Zero noise is allowed: every example then sits on its class center.
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidParameter("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// Unit class directions: Gram-Schmidt orthonormal when there are no more
    /// classes than dimensions, plain normalized Gaussians otherwise.
    fn directions<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(self.num_classes);
        let orthogonalize = self.num_classes <= self.input_dim;
        while dirs.len() < self.num_classes {
            let mut v: Vec<f64> = (0..self.input_dim).map(|_| rng.sample(StandardNormal)).collect();
            if orthogonalize {
                for u in &dirs {
                    let p = dot(&v, u);
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|a| *a /= norm);
                dirs.push(v);
            }
        }
        dirs
    }

    /// Class centers `class_separation · u_c`.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        let mut rng = measurement_rng(self.seed, 0, Purpose::Dataset);
        self.directions(&mut rng)
            .into_iter()
            .map(|u| u.into_iter().map(|x| x * self.class_separation).collect())
            .collect()
    }
}

/// Gaussian blobs around [`SyntheticSpec::centers`], class-major order.
pub fn generate_blobs(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let centers = spec.centers();
    let mut rng = measurement_rng(spec.seed, 1, Purpose::Dataset);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut examples = Vec::with_capacity(spec.num_classes * spec.examples_per_class);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..spec.examples_per_class {
            let features = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
            examples.push(Example::new(features, label));
        }
    }
    Dataset::new(examples, spec.num_classes)
}

struct IdxHeader<'a> {
    dims: Vec<usize>,
    body: &'a [u8],
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let chunk = bytes.get(at..at + 4).ok_or(Error::Truncated {
        needed: at + 4,
        available: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("slice of length 4")))
}

fn parse_idx(bytes: &[u8], magic: u32, ndims: usize) -> Result<IdxHeader<'_>> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    let dims = (0..ndims)
        .map(|i| read_u32(bytes, 4 + 4 * i).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header_len = 4 + 4 * ndims;
    let needed = header_len + dims.iter().product::<usize>();
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(IdxHeader {
        dims,
        body: &bytes[header_len..needed],
    })
}

/// Images from IDX bytes: flattened `rows·cols` vectors scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    let header = parse_idx(bytes, IDX_IMAGES_MAGIC, 3)?;
    let (rows, cols) = (header.dims[1], header.dims[2]);
    let images = if rows * cols == 0 {
        vec![Vec::new(); header.dims[0]]
    } else {
        header
            .body
            .chunks_exact(rows * cols)
            .map(|img| img.iter().map(|&p| p as f64 / 255.0).collect())
            .collect()
    };
    Ok((images, rows, cols))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    Ok(parse_idx(bytes, IDX_LABELS_MAGIC, 1)?.body.to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    Ok(parse_idx_images(&fs::read(path)?)?.0)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&fs::read(path)?)
}

/// Serializes raw pixel bytes as an IDX image file.
pub fn encode_idx_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [images.len(), rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size must be rows·cols");
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
