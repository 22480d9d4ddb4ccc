//! Monte Carlo realization of finite-dimensional projections of the thermal
//! processes.
//!
//! Draw `d` of a batch depends only on `(seed, d)`: its normals come from a
//! ChaCha8 stream with a key derived from the seed and stream number `d`, so
//! any split of the index range into chunks reproduces the same draws.
//! Mixture atoms are chosen from an independent key, which keeps the normals
//! of a single-atom mixture identical to those of the plain Gaussian sampler.
//! Every reduction sums fixed-size chunks and then combines the chunk sums
//! pairwise, so results do not depend on the thread count.

use std::io::{self, Write};
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cumulants::{univariate_cumulants, CumulantError};
use crate::greens::{Argument, GreensError, QuasiFreeSpec};
use crate::kernel::{KernelError, SpectralMeasure, ThermalCircle};
use crate::greens::MixtureSpec;
use crate::spectral::DispersionKind;

/// Negative eigenvalues down to `-EIGEN_CLIP * lambda_max` are set to zero.
pub const EIGEN_CLIP: f64 = 1e-12;

/// Largest imaginary part tolerated in the covariance, relative to its norm.
pub const IMAGINARY_LIMIT: f64 = 1e-12;

/// Draws per parallel work unit and per reduction leaf.
pub const CHUNK: usize = 4096;

// xor mask separating the atom-selection key from the normal key
const ATOM_KEY_MASK: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("covariance is indefinite: eigenvalue {min:e} against largest {max:e}")]
    Indefinite { min: f64, max: f64 },
    #[error("covariance or mean has a non-negligible imaginary part {0:e}")]
    NonReal(f64),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("k-statistic needs at least 4 draws")]
    TooFewDraws,
    #[error(transparent)]
    Greens(#[from] GreensError),
    #[error(transparent)]
    Cumulant(#[from] CumulantError),
}

impl From<KernelError> for SamplerError {
    fn from(e: KernelError) -> Self {
        Self::Greens(e.into())
    }
}

pub type Result<T> = std::result::Result<T, SamplerError>;

/// One Gaussian component of the sampled law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentDescriptor {
    pub weight: f64,
    /// Chemical potential of the atom; absent for a non-atomic spec.
    pub mu: Option<f64>,
    pub mean: Vec<f64>,
    /// Row-major covariance of the projected coordinates.
    pub covariance: Vec<f64>,
}

/// What a batch was drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub beta: f64,
    /// Sharp times of the arguments, `NaN` for smeared ones.
    pub taus: Vec<f64>,
    pub components: Vec<ComponentDescriptor>,
}

/// `N` draws of the `n` projected coordinates, row major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub dim: usize,
    pub draws: Vec<f64>,
    pub seed: u64,
    pub model: ModelDescriptor,
    /// Atom index per draw for mixtures.
    pub atoms: Option<Vec<u32>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.draws.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn draw(&self, d: usize) -> &[f64] {
        &self.draws[d * self.dim..(d + 1) * self.dim]
    }

    /// Writes a `#`-prefixed header (seed, draw count, model as JSON), a
    /// column line and one comma-separated row per draw.
    pub fn write_delimited<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# thermal-kms sample batch")?;
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# draws={}", self.len())?;
        let model = serde_json::to_string(&self.model).map_err(io::Error::other)?;
        writeln!(out, "# model={model}")?;
        let mut cols: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        if self.atoms.is_some() {
            cols.push("atom".into());
        }
        writeln!(out, "{}", cols.join(","))?;
        for d in 0..self.len() {
            let mut row: Vec<String> = self.draw(d).iter().map(|x| x.to_string()).collect();
            if let Some(atoms) = &self.atoms {
                row.push(atoms[d].to_string());
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn key(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn stream(base: &ChaCha8Rng, index: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(index);
    rng
}

/// A Gaussian vector `mean + L z` with `L L^T = Sigma`.
#[derive(Clone, Debug)]
pub struct GaussianFactor {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    descriptor: ComponentDescriptor,
}

impl GaussianFactor {
    /// Eigen factorization of a real symmetric covariance.
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        if mean.len() != n {
            return Err(SamplerError::DimensionMismatch {
                expected: n,
                got: mean.len(),
            });
        }
        let eig = SymmetricEigen::new(covariance.clone());
        let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if n > 0 && min < -EIGEN_CLIP * max {
            return Err(SamplerError::Indefinite { min, max });
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        let descriptor = ComponentDescriptor {
            weight: 1.0,
            mu: None,
            mean: mean.clone(),
            covariance: covariance.transpose().as_slice().to_vec(),
        };
        Ok(Self {
            mean: DVector::from_vec(mean),
            factor,
            descriptor,
        })
    }

    /// Projected mean and covariance of a quasi-free functional.
    pub fn from_spec(spec: &QuasiFreeSpec, points: &[Argument]) -> Result<Self> {
        let n = points.len();
        let mut cov = DMatrix::<f64>::zeros(n, n);
        let mut scale = 0.0_f64;
        let mut imag = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let v = spec.covariance_value(&points[i], &points[j])?;
                cov[(i, j)] = v.re;
                cov[(j, i)] = v.re;
                scale = scale.max(v.norm());
                imag = imag.max(v.im.abs());
            }
        }
        let mut mean = Vec::with_capacity(n);
        for p in points {
            let m = spec.mean_value(p)?;
            imag = imag.max(m.im.abs());
            scale = scale.max(m.norm());
            mean.push(m.re);
        }
        if imag > IMAGINARY_LIMIT * scale.max(1.0) {
            return Err(SamplerError::NonReal(imag));
        }
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn fill(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let n = self.dim();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.mean[i];
            for (j, zj) in z.iter().enumerate() {
                acc += self.factor[(i, j)] * zj;
            }
            *o = acc;
        }
    }
}

/// Weighted Gaussian components with a deterministic per-draw generator.
#[derive(Clone, Debug)]
pub struct Sampler {
    components: Vec<(f64, GaussianFactor)>,
    beta: f64,
    taus: Vec<f64>,
}

impl Sampler {
    pub fn gaussian(spec: &QuasiFreeSpec, points: &[Argument]) -> Result<Self> {
        Ok(Self {
            components: vec![(1.0, GaussianFactor::from_spec(spec, points)?)],
            beta: spec.circle.beta,
            taus: taus(points),
        })
    }

    pub fn mixture(
        measure: &SpectralMeasure,
        kind: DispersionKind,
        circle: &ThermalCircle,
        points: &[Argument],
    ) -> Result<Self> {
        let spec = MixtureSpec::new(measure.clone(), kind, *circle);
        let mut components = Vec::new();
        for ((w, qf), atom) in spec.components()?.into_iter().zip(measure.atoms()) {
            let mut factor = GaussianFactor::from_spec(&qf, points)?;
            factor.descriptor.weight = w;
            factor.descriptor.mu = Some(atom.mu);
            components.push((w, factor));
        }
        Ok(Self {
            components,
            beta: circle.beta,
            taus: taus(points),
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    pub fn is_mixture(&self) -> bool {
        self.components.len() > 1
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            beta: self.beta,
            taus: self.taus.clone(),
            components: self.components.iter().map(|(_, f)| f.descriptor.clone()).collect(),
        }
    }

    fn pick(&self, u: f64) -> usize {
        let total: f64 = self.components.iter().map(|(w, _)| w).sum();
        let mut acc = 0.0;
        for (i, (w, _)) in self.components.iter().enumerate() {
            acc += w / total;
            if u < acc {
                return i;
            }
        }
        self.components.len() - 1
    }

    /// Draws with indices in `range`, row major, plus their atom indices.
    pub fn draw_range(&self, seed: u64, range: Range<u64>) -> (Vec<f64>, Vec<u32>) {
        let normal_key = key(seed);
        let atom_key = key(seed ^ ATOM_KEY_MASK);
        let n = self.dim();
        let count = (range.end - range.start) as usize;
        let mut draws = vec![0.0; count * n];
        let mut atoms = vec![0u32; count];
        let work = |(c, (rows, ids)): (usize, (&mut [f64], &mut [u32]))| {
            for (r, (row, id)) in rows.chunks_mut(n.max(1)).zip(ids.iter_mut()).enumerate() {
                let d = range.start + (c * CHUNK + r) as u64;
                let atom = if self.is_mixture() {
                    self.pick(stream(&atom_key, d).random::<f64>())
                } else {
                    0
                };
                *id = atom as u32;
                self.components[atom].1.fill(&mut stream(&normal_key, d), row);
            }
        };
        if n == 0 {
            return (draws, atoms);
        }
        draws
            .par_chunks_mut(CHUNK * n)
            .zip(atoms.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(work);
        (draws, atoms)
    }

    pub fn sample(&self, n_draws: usize, seed: u64) -> SampleBatch {
        let (draws, atoms) = self.draw_range(seed, 0..n_draws as u64);
        SampleBatch {
            dim: self.dim(),
            draws,
            seed,
            model: self.descriptor(),
            atoms: self.is_mixture().then_some(atoms),
        }
    }
}

fn taus(points: &[Argument]) -> Vec<f64> {
    points.iter().map(|p| p.sharp_time().unwrap_or(f64::NAN)).collect()
}

/// `N` draws of `(<zeta, x_1>, ..., <zeta, x_n>)` under a quasi-free law.
pub fn sample_gaussian(spec: &QuasiFreeSpec, points: &[Argument], n_draws: usize, seed: u64) -> Result<SampleBatch> {
    Ok(Sampler::gaussian(spec, points)?.sample(n_draws, seed))
}

/// Hierarchical draws: an atom `mu ~ P`, then the Gaussian at `mu`.
pub fn sample_mixture(
    measure: &SpectralMeasure,
    kind: DispersionKind,
    circle: &ThermalCircle,
    points: &[Argument],
    n_draws: usize,
    seed: u64,
) -> Result<SampleBatch> {
    Ok(Sampler::mixture(measure, kind, circle, points)?.sample(n_draws, seed))
}

/// Sum with fixed leaves of [`CHUNK`] terms combined pairwise.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    fn combine(v: &[f64]) -> f64 {
        match v.len() {
            0 => 0.0,
            1 => v[0],
            n => combine(&v[..n / 2]) + combine(&v[n / 2..]),
        }
    }
    let leaves: Vec<f64> = values.par_chunks(CHUNK).map(|c| c.iter().sum()).collect();
    combine(&leaves)
}

fn mapped_sum<F>(batch: &SampleBatch, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let values: Vec<f64> = batch.draws.par_chunks(batch.dim).map(&f).collect();
    pairwise_sum(&values)
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `|mean - target| <= k * stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }

    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr > 0.0 {
            (self.mean - target) / self.stderr
        } else if self.mean == target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Complex estimate; standard errors of the real and imaginary parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
}

impl ComplexEstimate {
    pub fn within(&self, target: Complex64, k: f64) -> bool {
        (self.mean.re - target.re).abs() <= k * self.stderr_re
            && (self.mean.im - target.im).abs() <= k * self.stderr_im
    }
}

fn estimate<F>(batch: &SampleBatch, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = batch.len();
    if n == 0 {
        return Err(SamplerError::EmptyBatch);
    }
    let mean = mapped_sum(batch, &f) / n as f64;
    let ss = mapped_sum(batch, |x| (f(x) - mean).powi(2));
    let stderr = if n > 1 {
        (ss / (n as f64 - 1.0) / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(Estimate { mean, stderr })
}

fn check_dim(batch: &SampleBatch, len: usize) -> Result<()> {
    if len != batch.dim {
        return Err(SamplerError::DimensionMismatch {
            expected: batch.dim,
            got: len,
        });
    }
    Ok(())
}

/// Mean of `exp(i c . X)` over the draws.
pub fn empirical_green(batch: &SampleBatch, coefficients: &[f64]) -> Result<ComplexEstimate> {
    check_dim(batch, coefficients.len())?;
    let phase = |x: &[f64]| x.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>();
    let re = estimate(batch, |x| phase(x).cos())?;
    let im = estimate(batch, |x| phase(x).sin())?;
    Ok(ComplexEstimate {
        mean: Complex64::new(re.mean, im.mean),
        stderr_re: re.stderr,
        stderr_im: im.stderr,
    })
}

/// Mean of `prod_k X_{indices[k]}` (indices may repeat).
pub fn empirical_moment(batch: &SampleBatch, indices: &[usize]) -> Result<Estimate> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= batch.dim) {
        return Err(SamplerError::IndexOutOfRange(bad));
    }
    estimate(batch, |x| indices.iter().map(|&i| x[i]).product())
}

/// Frequency of each atom index.
pub fn atom_frequencies(batch: &SampleBatch) -> Vec<f64> {
    let k = batch.model.components.len();
    let mut counts = vec![0usize; k];
    if let Some(atoms) = &batch.atoms {
        for &a in atoms {
            counts[a as usize] += 1;
        }
    } else {
        counts[0] = batch.len();
    }
    let n = batch.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Unbiased fourth cumulant (k-statistic) of `c . X` with an asymptotic
/// standard error from plug-in cumulants up to order 8.
pub fn fourth_cumulant_kstat(batch: &SampleBatch, coefficients: &[f64]) -> Result<Estimate> {
    check_dim(batch, coefficients.len())?;
    let n = batch.len();
    if n < 4 {
        return Err(SamplerError::TooFewDraws);
    }
    let y = |x: &[f64]| x.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>();
    let nf = n as f64;
    let mean = mapped_sum(batch, y) / nf;
    let mut central = vec![1.0, 0.0];
    for p in 2..=8 {
        central.push(mapped_sum(batch, |x| (y(x) - mean).powi(p)) / nf);
    }
    let (m2, m4) = (central[2], central[4]);
    let k4 = nf * nf * ((nf + 1.0) * m4 - 3.0 * (nf - 1.0) * m2 * m2)
        / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0));
    let k = univariate_cumulants(&central)?;
    let (k2, k3, k4p, k5, k6, k8) = (k[1], k[2], k[3], k[4], k[5], k[7]);
    let var = k8
        + 16.0 * k2 * k6
        + 48.0 * k3 * k5
        + 34.0 * k4p * k4p
        + 72.0 * k2 * k2 * k4p
        + 144.0 * k2 * k3 * k3
        + 24.0 * k2.powi(4);
    Ok(Estimate {
        mean: k4,
        stderr: (var.max(0.0) / nf).sqrt(),
    })
}
