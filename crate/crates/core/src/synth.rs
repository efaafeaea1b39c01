//! Synthetic two-manifold feature datasets with known geometry.
//!
//! Each class `c` lives near a `k`-dimensional affine manifold in `ℝ^D`:
//!
//! ```text
//! x = W_c · φ(z) + b_c + ε,    z ~ N(0, I_k),  ε ~ N(0, σ² I_D)
//! ```
//!
//! `W_c` has orthonormal columns, `φ` is `tanh` (nonlinear) or the identity,
//! `b_r = 0` and `b_g` has norm `separation`. By default `b_g` is orthogonal
//! to both embeddings, so the generated class is genuinely off the real
//! manifold rather than shifted along it. Because the geometry is known,
//! point-to-manifold distances can be computed exactly
//! ([`manifold_distance_oracle`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureDataset, FeatureRecord, Label};
use crate::numeric::{Matrix, SeededRng};

pub const REAL_TAG: &str = "synth-real";
pub const GENERATED_TAG: &str = "synth-gen";

const GEOMETRY_STREAM: u64 = 0x6e0;
const SAMPLE_STREAM: u64 = 0x5a4;

/// Missing JSON fields are taken from [`SynthSpec::reference`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    /// Ambient dimension `D`.
    pub dim: usize,
    /// Manifold dimension `k`; at most `D / 4`.
    pub latent_dim: usize,
    pub samples_per_class: usize,
    /// Norm of `b_g - b_r`, in units of the latent standard deviation.
    pub separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Warp latents through `tanh` before embedding.
    pub nonlinear: bool,
    /// Use one embedding `W` for both classes.
    pub shared_embedding: bool,
    /// Place the class offset orthogonal to both embeddings.
    pub orthogonal_offset: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::reference()
    }
}

impl SynthSpec {
    /// The reference instance used throughout the acceptance suite.
    pub fn reference() -> Self {
        SynthSpec {
            dim: 64,
            latent_dim: 8,
            samples_per_class: 2000,
            separation: 2.0,
            noise_sigma: 0.05,
            seed: 7,
            nonlinear: false,
            shared_embedding: false,
            orthogonal_offset: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim > self.dim / 4 {
            return Err(Error::argument(format!(
                "latent dim {} must satisfy 1 <= k <= D/4 = {}",
                self.latent_dim,
                self.dim / 4
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::argument(format!(
                "separation must be a finite value >= 0, got {}",
                self.separation
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::argument(format!(
                "noise sigma must be a finite value >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.samples_per_class < 2 {
            return Err(Error::argument("need at least 2 samples per class"));
        }
        Ok(())
    }

    /// The generating maps; a pure function of these parameters.
    pub fn manifolds(&self) -> Result<SynthManifolds> {
        self.validate()?;
        let (d, k) = (self.dim, self.latent_dim);
        let mut rng = SeededRng::stream(self.seed, GEOMETRY_STREAM);
        let embedding_r = orthonormal_columns(d, k, &[], &mut rng);
        let embedding_g = if self.shared_embedding {
            embedding_r.clone()
        } else {
            orthonormal_columns(d, k, &[], &mut rng)
        };
        let against: Vec<&Matrix> = if self.orthogonal_offset {
            vec![&embedding_r, &embedding_g]
        } else {
            vec![]
        };
        let direction = orthonormal_columns(d, 1, &against, &mut rng);
        let offset_g = direction.as_slice().iter().map(|u| u * self.separation).collect();
        Ok(SynthManifolds {
            embedding_r,
            embedding_g,
            offset_r: vec![0.0; d],
            offset_g,
            nonlinear: self.nonlinear,
        })
    }
}

/// Embeddings and offsets of both class manifolds.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthManifolds {
    /// `D x k`, orthonormal columns.
    pub embedding_r: Matrix,
    pub embedding_g: Matrix,
    pub offset_r: Vec<f64>,
    pub offset_g: Vec<f64>,
    pub nonlinear: bool,
}

impl SynthManifolds {
    pub fn embedding(&self, class: Label) -> &Matrix {
        match class {
            Label::Real => &self.embedding_r,
            Label::Generated => &self.embedding_g,
        }
    }

    pub fn offset(&self, class: Label) -> &[f64] {
        match class {
            Label::Real => &self.offset_r,
            Label::Generated => &self.offset_g,
        }
    }

    /// Noise-free point of `class` at latent `z`.
    pub fn embed(&self, class: Label, z: &[f64]) -> Vec<f64> {
        let w = self.embedding(class);
        let mut x = self.offset(class).to_vec();
        for (j, &zj) in z.iter().enumerate() {
            let t = if self.nonlinear { zj.tanh() } else { zj };
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += w.get(i, j) * t;
            }
        }
        x
    }
}

/// `cols` orthonormal Gaussian directions in `ℝ^rows`, each also orthogonal
/// to every column of the matrices in `against` (modified Gram–Schmidt).
fn orthonormal_columns(rows: usize, cols: usize, against: &[&Matrix], rng: &mut SeededRng) -> Matrix {
    // Reduce `v` against the basis and append it if it adds a new direction.
    fn extend(basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>) -> bool {
        // Two passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            for b in basis.iter() {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
            true
        } else {
            false
        }
    }

    let mut basis: Vec<Vec<f64>> = Vec::new();
    for m in against {
        for j in 0..m.cols() {
            extend(&mut basis, (0..m.rows()).map(|i| m.get(i, j)).collect());
        }
    }
    let fixed = basis.len();
    while basis.len() < fixed + cols {
        let v = (0..rows).map(|_| rng.standard_normal()).collect();
        extend(&mut basis, v);
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, col) in basis[fixed..].iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    m
}

/// Samples the two-class dataset: all real records, then all generated.
pub fn generate(spec: &SynthSpec) -> Result<FeatureDataset> {
    let manifolds = spec.manifolds()?;
    let mut rng = SeededRng::stream(spec.seed, SAMPLE_STREAM);
    let mut records = Vec::with_capacity(2 * spec.samples_per_class);
    for (class, tag) in [(Label::Real, REAL_TAG), (Label::Generated, GENERATED_TAG)] {
        for _ in 0..spec.samples_per_class {
            let z: Vec<f64> = (0..spec.latent_dim).map(|_| rng.standard_normal()).collect();
            let x = manifolds.embed(class, &z);
            let features = x
                .into_iter()
                .map(|v| (v + spec.noise_sigma * rng.standard_normal()) as f32)
                .collect();
            records.push(FeatureRecord::new(features, class, tag));
        }
    }
    FeatureDataset::new(spec.dim, records)
}

/// Exact distance from each row of `features` to the manifold of `class`.
///
/// Linear case: `‖(I − P)(x − b)‖` with `P` the projector onto the
/// embedding's span. Nonlinear case: the image of `tanh` is the open cube
/// `(−1, 1)^k`, and with orthonormal columns the nearest manifold point
/// clamps the projected coordinates to `[−1, 1]`; the value returned is the
/// infimum distance, which is exact rather than a numerical search.
pub fn manifold_distance_oracle(spec: &SynthSpec, features: &Matrix, class: Label) -> Result<Vec<f64>> {
    if features.cols() != spec.dim {
        return Err(Error::shape(format!(
            "spec has dimension {}, features have {}",
            spec.dim,
            features.cols()
        )));
    }
    let m = spec.manifolds()?;
    let w = m.embedding(class);
    let b = m.offset(class);
    Ok(features
        .row_iter()
        .map(|x| {
            let y: Vec<f64> = x.iter().zip(b).map(|(a, c)| a - c).collect();
            let mut residual = y.clone();
            for j in 0..w.cols() {
                let mut coord: f64 = (0..w.rows()).map(|i| w.get(i, j) * y[i]).sum();
                if m.nonlinear {
                    coord = coord.clamp(-1.0, 1.0);
                }
                for (i, r) in residual.iter_mut().enumerate() {
                    *r -= w.get(i, j) * coord;
                }
            }
            residual.iter().map(|r| r * r).sum::<f64>().sqrt()
        })
        .collect())
}

/// Parses `r`/`real` or `g`/`gen`/`generated`.
pub fn parse_class(s: &str) -> Result<Label> {
    match s {
        "r" | "real" => Ok(Label::Real),
        "g" | "gen" | "generated" => Ok(Label::Generated),
        other => Err(Error::argument(format!("unknown class tag {other:?}"))),
    }
}
