//! Seeded 2-D toy datasets: concentric circles, two moons, Gaussian blobs.
//!
//! Generation is a pure function of the spec (including its seed). The
//! constructions follow the conventional toy-dataset parameterizations:
//! circles of radius 1.0 and 0.5 with evenly spaced angles, interleaving
//! half-moons, and three isotropic Gaussians at pairwise unit-scale
//! separation. Isotropic Gaussian noise of the configured standard deviation
//! is added to every point (for blobs it *is* the cluster spread).
//!
//! Standardization maps a sample to zero mean and unit variance per
//! coordinate. A [`Standardizer`] fit on the training set can be applied to
//! held-out or out-of-distribution sets so likelihoods stay comparable.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fmt::{fmt_f64, parse_f64};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Circles,
    Moons,
    Blobs,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Circles => "circles",
            DatasetKind::Moons => "moons",
            DatasetKind::Blobs => "blobs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "circles" => Ok(DatasetKind::Circles),
            "moons" => Ok(DatasetKind::Moons),
            "blobs" => Ok(DatasetKind::Blobs),
            other => Err(Error::Config(format!(
                "unknown dataset kind {:?} (expected circles, moons or blobs)",
                other
            ))),
        }
    }
}

/// Default noise standard deviation for the toy generators.
pub const DEFAULT_NOISE_STD: f64 = 0.04;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_samples: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Standardize with the sample's own statistics inside [`generate`].
    pub standardize: bool,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, n_samples: usize, seed: u64) -> Self {
        DatasetSpec { kind, n_samples, noise_std: DEFAULT_NOISE_STD, seed, standardize: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("dataset needs at least one sample".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise std must be ≥ 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

/// Generates the dataset; honors `spec.standardize` (own statistics).
pub fn generate(spec: &DatasetSpec) -> Result<Tensor> {
    let raw = generate_raw(spec)?;
    if spec.standardize {
        Ok(Standardizer::fit(&raw).transform(&raw))
    } else {
        Ok(raw)
    }
}

/// Generates the dataset without any standardization.
pub fn generate_raw(spec: &DatasetSpec) -> Result<Tensor> {
    spec.validate()?;
    let n = spec.n_samples;
    let mut base = Vec::with_capacity(n * 2);
    match spec.kind {
        DatasetKind::Circles => {
            // Two concentric circles, radii 1.0 and 0.5, equal split.
            let n_out = n / 2;
            let n_in = n - n_out;
            for k in 0..n_out {
                let t = 2.0 * PI * k as f64 / n_out as f64;
                base.push(t.cos());
                base.push(t.sin());
            }
            for k in 0..n_in {
                let t = 2.0 * PI * k as f64 / n_in as f64;
                base.push(0.5 * t.cos());
                base.push(0.5 * t.sin());
            }
        }
        DatasetKind::Moons => {
            // Two interleaving half-circles in the standard parameterization.
            let n_out = n / 2;
            let n_in = n - n_out;
            for k in 0..n_out {
                let t = if n_out > 1 { PI * k as f64 / (n_out - 1) as f64 } else { 0.0 };
                base.push(t.cos());
                base.push(t.sin());
            }
            for k in 0..n_in {
                let t = if n_in > 1 { PI * k as f64 / (n_in - 1) as f64 } else { 0.0 };
                base.push(1.0 - t.cos());
                base.push(1.0 - t.sin() - 0.5);
            }
        }
        DatasetKind::Blobs => {
            // Equal mixture of three isotropic Gaussians; centers on a circle
            // of radius 0.75, pairwise distance 0.75·√3 ≈ 1.3.
            const R: f64 = 0.75;
            let s3 = 3.0f64.sqrt() / 2.0;
            let centers = [(0.0, R), (-R * s3, -R / 2.0), (R * s3, -R / 2.0)];
            for i in 0..n {
                let (cx, cy) = centers[i % 3];
                base.push(cx);
                base.push(cy);
            }
        }
    }

    // Noise is drawn after all base points, in row order, so the geometry and
    // the noise stream are independent of each other's code paths.
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    for v in base.iter_mut() {
        let eps: f64 = StandardNormal.sample(&mut rng);
        *v += spec.noise_std * eps;
    }
    Tensor::new(vec![n, 2], base)
}

/// Affine map to zero mean and unit per-coordinate variance, fit on one
/// sample and applicable to any other.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics (n-denominator) per coordinate.
    pub fn fit(x: &Tensor) -> Standardizer {
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for (j, v) in x.row(i).iter().enumerate() {
                let c = v - mean[j];
                var[j] += c * c;
            }
        }
        let std = var
            .iter()
            .map(|&v| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0 // degenerate coordinate left untouched
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, x: &Tensor) -> Tensor {
        let (n, d) = (x.shape()[0], x.shape()[1]);
        assert_eq!(d, self.mean.len(), "standardizer dimension mismatch");
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for (j, v) in x.row(i).iter().enumerate() {
                out.push((v - self.mean[j]) / self.std[j]);
            }
        }
        Tensor::new(vec![n, d], out).expect("shape preserved")
    }
}

/// Writes a 2-D sample set as CSV with header `x0,x1` and lossless decimals.
pub fn write_csv(x: &Tensor, path: &Path) -> Result<()> {
    if x.shape().len() != 2 {
        return Err(Error::shape("write_csv", "requires a 2-D tensor"));
    }
    let d = x.cols();
    let mut out = String::new();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format!("x{}", j));
    }
    out.push('\n');
    for i in 0..x.rows() {
        let row = x.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`] (header plus decimal rows).
pub fn read_csv(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let d = header.split(',').count();
    let mut data = Vec::new();
    let mut n = 0;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(Error::Parse(format!(
                "row has {} fields, header has {}",
                fields.len(),
                d
            )));
        }
        for f in fields {
            data.push(parse_f64(f)?);
        }
        n += 1;
    }
    Tensor::new(vec![n, d], data)
}
