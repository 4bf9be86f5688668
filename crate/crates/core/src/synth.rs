//! Seeded synthetic data `X = L + N + O`: a Gaussian low-rank component,
//! dense Gaussian noise and sparse large-magnitude outliers.
//!
//! Random streams come from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so a given seed reproduces the same matrices on every run
//! of this implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, RpcaError};
use crate::linalg::DenseMatrix;

pub type SynthRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard normal entries (column-major draw order).
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub outlier_fraction: f64,
    pub outlier_magnitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(RpcaError::InvalidParameter("m and n must be positive".into()));
        }
        if self.rank > self.m.min(self.n) {
            return Err(RpcaError::InvalidParameter(format!(
                "rank {} exceeds min({}, {})",
                self.rank, self.m, self.n
            )));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(RpcaError::InvalidParameter(format!(
                "outlier fraction must lie in [0, 1), got {}",
                self.outlier_fraction
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.outlier_magnitude.is_finite() || !self.noise_sigma.is_finite() {
            return Err(RpcaError::InvalidParameter(
                "noise sigma and outlier magnitude must be finite, sigma >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Generated data with its ground truth.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub x: DenseMatrix,
    pub l: DenseMatrix,
    pub o: DenseMatrix,
}

/// Draws `L = A Bᵀ / √rank` with standard normal `A` (m×rank) and `B`
/// (n×rank), outliers that are non-zero with probability `outlier_fraction`
/// and uniform in `±[mag/2, mag]`, and noise `N(0, σ²)`.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let (m, n) = (spec.m, spec.n);
    let l = if spec.rank == 0 {
        DenseMatrix::zeros(m, n)
    } else {
        let a = gaussian_matrix(&mut rng, m, spec.rank).scale(1.0 / (spec.rank as f64).sqrt());
        let b = gaussian_matrix(&mut rng, n, spec.rank);
        a.matmul_t(&b)?
    };
    let mag = spec.outlier_magnitude;
    let o = DenseMatrix::from_fn(m, n, |_, _| {
        if rng.random::<f64>() < spec.outlier_fraction {
            let v = rng.random_range(0.5 * mag..=mag);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        } else {
            0.0
        }
    });
    let mut x = l.add(&o)?;
    if spec.noise_sigma > 0.0 {
        let noise = gaussian_matrix(&mut rng, m, n).scale(spec.noise_sigma);
        x.axpy_in_place(1.0, &noise)?;
    }
    Ok(Synthetic { x, l, o })
}

fn gaussian_blob(width: usize, height: usize, cx: f64, cy: f64, sx: f64, sy: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (u, v) = ((col as f64 - cx) / sx, (row as f64 - cy) / sy);
            out.push((-0.5 * (u * u + v * v)).exp());
        }
    }
    out
}

/// Smooth face-like frames on a `width`×`height` raster (row-major pixels,
/// one frame per column): a broad centred oval plus `components` random
/// Gaussian blobs with standard normal weights scaled by 0.3. The frames
/// span at most `components + 1` dimensions.
pub fn blob_frames(width: usize, height: usize, n: usize, components: usize, seed: u64) -> Result<DenseMatrix> {
    if width < 4 || height < 4 || n == 0 {
        return Err(RpcaError::InvalidParameter(
            "frames need at least 4x4 pixels and n >= 1".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let (w, h) = (width as f64, height as f64);
    let base = gaussian_blob(width, height, 0.5 * (w - 1.0), 0.5 * (h - 1.0), 0.3 * w, 0.35 * h);
    let basis: Vec<Vec<f64>> = (0..components)
        .map(|_| {
            let cx = rng.random_range(0.25 * w..0.75 * w);
            let cy = rng.random_range(0.25 * h..0.75 * h);
            let sx = rng.random_range(0.08 * w..0.16 * w).max(1.5);
            let sy = rng.random_range(0.08 * h..0.16 * h).max(1.5);
            gaussian_blob(width, height, cx, cy, sx, sy)
        })
        .collect();
    let mut x = DenseMatrix::zeros(width * height, n);
    for j in 0..n {
        let weights = gaussian_vector(&mut rng, components);
        let col = x.column_mut(j);
        col.copy_from_slice(&base);
        for (b, c) in basis.iter().zip(&weights) {
            for (v, bv) in col.iter_mut().zip(b) {
                *v += 0.3 * c * bv;
            }
        }
    }
    Ok(x)
}
