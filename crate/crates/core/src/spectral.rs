//! Momentum-space test functions and spectral pairings.
//!
//! A spatial test function `f` is stored by its Fourier transform sampled on a
//! quadrature grid. Every pairing of the form `<f, phi(h) g>` for a function of
//! the one-particle Hamiltonian `h` reduces to a weighted sum over the grid
//! nodes, with `h` acting as multiplication by the dispersion `lambda(k)`.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Default number of quadrature nodes per axis for packets in one dimension.
pub const DEFAULT_NODES_PER_AXIS: usize = 129;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("spatial dimension {0} unsupported (expected 1..={MAX_DIM})")]
    UnsupportedDimension(usize),
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("test functions live on incompatible momentum grids")]
    IncompatibleGrids,
    #[error("realness violated at node {0}: no mirrored node with conjugate value")]
    RealnessViolated(usize),
    #[error("spectral function is not finite at lambda = {0}")]
    NonFiniteSpectralFunction(f64),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionKind {
    /// `lambda(k) = |k|^2 + mu`
    Nonrelativistic,
    /// `lambda(k) = sqrt(|k|^2 + mu^2)`
    Relativistic,
}

/// One-particle energy as a function of momentum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub kind: DispersionKind,
    pub mu: f64,
}

impl Dispersion {
    pub fn new(kind: DispersionKind, mu: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(SpectralError::NonFinite("mu"));
        }
        if mu <= 0.0 {
            return Err(SpectralError::InvalidParameter {
                name: "mu",
                reason: format!("must be > 0, got {mu}"),
            });
        }
        Ok(Self { kind, mu })
    }

    pub fn nonrelativistic(mu: f64) -> Result<Self> {
        Self::new(DispersionKind::Nonrelativistic, mu)
    }

    pub fn relativistic(mu: f64) -> Result<Self> {
        Self::new(DispersionKind::Relativistic, mu)
    }

    /// Energy at squared momentum `k_sq`. Always `>= mu`.
    #[inline]
    pub fn energy(&self, k_sq: f64) -> f64 {
        match self.kind {
            DispersionKind::Nonrelativistic => k_sq + self.mu,
            DispersionKind::Relativistic => (k_sq + self.mu * self.mu).sqrt(),
        }
    }
}

/// Quadrature nodes and weights in momentum space.
#[derive(Clone, Debug)]
pub struct MomentumGrid {
    dim: usize,
    momenta: Vec<f64>,
    weights: Vec<f64>,
    mirror: Vec<Option<usize>>,
}

impl PartialEq for MomentumGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.momenta == other.momenta && self.weights == other.weights
    }
}

fn key_of(k: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 are the same node
    k.iter().map(|&x| if x == 0.0 { 0 } else { x.to_bits() }).collect()
}

impl MomentumGrid {
    /// Builds a grid from explicit nodes. `momenta[i]` has length `dim`.
    pub fn new(dim: usize, momenta: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SpectralError::UnsupportedDimension(dim));
        }
        if momenta.len() != weights.len() {
            return Err(SpectralError::InvalidParameter {
                name: "nodes",
                reason: format!("{} momenta but {} weights", momenta.len(), weights.len()),
            });
        }
        if momenta.is_empty() {
            return Err(SpectralError::InvalidParameter {
                name: "nodes",
                reason: "grid needs at least one node".into(),
            });
        }
        let mut flat = Vec::with_capacity(dim * momenta.len());
        for (i, k) in momenta.iter().enumerate() {
            if k.len() != dim {
                return Err(SpectralError::InvalidParameter {
                    name: "nodes",
                    reason: format!("node {i} has {} components, expected {dim}", k.len()),
                });
            }
            if k.iter().any(|x| !x.is_finite()) {
                return Err(SpectralError::NonFinite("momentum"));
            }
            flat.extend_from_slice(k);
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(SpectralError::NonFinite("weight"));
            }
            if w <= 0.0 {
                return Err(SpectralError::InvalidParameter {
                    name: "weight",
                    reason: format!("node {i} has non-positive weight {w}"),
                });
            }
        }
        Self::from_flat(dim, flat, weights)
    }

    fn from_flat(dim: usize, momenta: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        let mut index = HashMap::with_capacity(n);
        for i in 0..n {
            let key = key_of(&momenta[i * dim..(i + 1) * dim]);
            if index.insert(key, i).is_some() {
                return Err(SpectralError::InvalidParameter {
                    name: "nodes",
                    reason: format!("duplicate momentum at node {i}"),
                });
            }
        }
        let mirror = (0..n)
            .map(|i| {
                let neg: Vec<f64> = momenta[i * dim..(i + 1) * dim].iter().map(|x| -x).collect();
                index.get(&key_of(&neg)).copied()
            })
            .collect();
        Ok(Self {
            dim,
            momenta,
            weights,
            mirror,
        })
    }

    /// Tensor-product trapezoid grid on `[-cutoff, cutoff]^dim` with
    /// `nodes_per_axis` points per axis. The axis nodes are exactly
    /// symmetric about zero, so every node has its mirror `-k` on the grid.
    pub fn trapezoid(dim: usize, nodes_per_axis: usize, cutoff: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SpectralError::UnsupportedDimension(dim));
        }
        if !cutoff.is_finite() {
            return Err(SpectralError::NonFinite("cutoff"));
        }
        if nodes_per_axis == 0 {
            return Err(SpectralError::InvalidParameter {
                name: "n_nodes",
                reason: "must be >= 1".into(),
            });
        }
        let (axis, axis_w) = if nodes_per_axis == 1 {
            (vec![0.0], vec![1.0])
        } else {
            if cutoff <= 0.0 {
                return Err(SpectralError::InvalidParameter {
                    name: "cutoff",
                    reason: format!("must be > 0, got {cutoff}"),
                });
            }
            let n = nodes_per_axis;
            let step = 2.0 * cutoff / (n - 1) as f64;
            let mut axis = vec![0.0; n];
            for i in 0..n / 2 {
                let x = -cutoff + i as f64 * step;
                axis[i] = x;
                axis[n - 1 - i] = -x;
            }
            let mut w = vec![step; n];
            w[0] *= 0.5;
            w[n - 1] *= 0.5;
            (axis, w)
        };
        let per_axis = axis.len();
        let total = per_axis.pow(dim as u32);
        let mut momenta = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for _ in 0..dim {
                let j = rem % per_axis;
                rem /= per_axis;
                momenta.push(axis[j]);
                w *= axis_w[j];
            }
            weights.push(w);
        }
        Self::from_flat(dim, momenta, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn momentum(&self, i: usize) -> &[f64] {
        &self.momenta[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k_squared(&self, i: usize) -> f64 {
        self.momentum(i).iter().map(|x| x * x).sum()
    }

    /// Index of the node at `-k`, if the grid contains it.
    pub fn mirror(&self, i: usize) -> Option<usize> {
        self.mirror[i]
    }
}

/// A spatial test function represented by its Fourier transform on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    grid: Arc<MomentumGrid>,
    values: Vec<Complex64>,
    real: bool,
}

impl TestFunction {
    /// Wraps values on an existing grid. When `real` is set, the values must
    /// satisfy `v(-k) = conj(v(k))` at every node.
    pub fn new(grid: Arc<MomentumGrid>, values: Vec<Complex64>, real: bool) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SpectralError::InvalidParameter {
                name: "values",
                reason: format!("{} values for {} nodes", values.len(), grid.len()),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(SpectralError::NonFinite("value"));
        }
        if real {
            for (i, v) in values.iter().enumerate() {
                let j = grid.mirror(i).ok_or(SpectralError::RealnessViolated(i))?;
                let scale = v.norm().max(values[j].norm()).max(f64::MIN_POSITIVE);
                if (values[j] - v.conj()).norm() > 1e-13 * scale {
                    return Err(SpectralError::RealnessViolated(i));
                }
            }
        }
        Ok(Self { grid, values, real })
    }

    /// Samples `profile` at every node of `grid`.
    pub fn on_grid<F>(grid: Arc<MomentumGrid>, real: bool, profile: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let values = (0..grid.len()).map(|i| profile(grid.momentum(i))).collect();
        Self::new(grid, values, real)
    }

    /// One node at `k = 0` with unit weight and the given (real) value.
    pub fn single_node(dim: usize, value: f64) -> Result<Self> {
        let grid = MomentumGrid::new(dim, vec![vec![0.0; dim]], vec![1.0])?;
        Self::new(Arc::new(grid), vec![Complex64::new(value, 0.0)], true)
    }

    /// Normalized Gaussian packet `exp(-|k - center|^2 / (4 width^2))` on a
    /// fresh trapezoid grid over `[-cutoff, cutoff]^dim` with `n_nodes` per axis.
    ///
    /// Packets centered at the origin are real in position space.
    pub fn gaussian_packet(
        dim: usize,
        center: &[f64],
        width: f64,
        n_nodes: usize,
        cutoff: f64,
    ) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SpectralError::UnsupportedDimension(dim));
        }
        let grid = Arc::new(MomentumGrid::trapezoid(dim, n_nodes, cutoff)?);
        Self::gaussian_packet_on(grid, center, width)
    }

    /// Same as [`TestFunction::gaussian_packet`] on a caller-provided grid, so
    /// several packets can share one grid.
    pub fn gaussian_packet_on(grid: Arc<MomentumGrid>, center: &[f64], width: f64) -> Result<Self> {
        let dim = grid.dim();
        if center.len() != dim {
            return Err(SpectralError::InvalidParameter {
                name: "center",
                reason: format!("expected {dim} components, got {}", center.len()),
            });
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(SpectralError::NonFinite("center"));
        }
        if !width.is_finite() {
            return Err(SpectralError::NonFinite("width"));
        }
        if width <= 0.0 {
            return Err(SpectralError::InvalidParameter {
                name: "width",
                reason: format!("must be > 0, got {width}"),
            });
        }
        let real = center.iter().all(|&c| c == 0.0);
        let raw = Self::on_grid(grid, real, |k| {
            let d2: f64 = k.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            Complex64::new((-d2 / (4.0 * width * width)).exp(), 0.0)
        })?;
        let norm_sq = raw.norm_sq();
        if norm_sq <= 0.0 || !norm_sq.is_finite() {
            return Err(SpectralError::InvalidParameter {
                name: "width",
                reason: "packet vanishes on the grid".into(),
            });
        }
        Ok(raw.scaled(1.0 / norm_sq.sqrt()))
    }

    /// Default cutoff for a packet: `8 * width + |center|`.
    pub fn default_cutoff(center: &[f64], width: f64) -> f64 {
        8.0 * width + center.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn grid(&self) -> &Arc<MomentumGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.norm_sqr())
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    pub fn compatible(&self, other: &TestFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| v * s).collect(),
            real: self.real,
        }
    }

    /// `a * self + b * other` on the shared grid.
    pub fn combine(&self, a: f64, other: &TestFunction, b: f64) -> Result<Self> {
        if !self.compatible(other) {
            return Err(SpectralError::IncompatibleGrids);
        }
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x * a + y * b)
                .collect(),
            real: self.real && other.real,
        })
    }

    pub fn to_record(&self) -> TestFunctionRecord {
        TestFunctionRecord {
            dim: self.dim(),
            real: self.real,
            nodes: (0..self.grid.len())
                .map(|i| NodeRecord {
                    k: self.grid.momentum(i).to_vec(),
                    w: self.grid.weight(i),
                    re: self.values[i].re,
                    im: self.values[i].im,
                })
                .collect(),
        }
    }

    pub fn from_record(record: &TestFunctionRecord) -> Result<Self> {
        let grid = MomentumGrid::new(
            record.dim,
            record.nodes.iter().map(|n| n.k.clone()).collect(),
            record.nodes.iter().map(|n| n.w).collect(),
        )?;
        let values = record
            .nodes
            .iter()
            .map(|n| Complex64::new(n.re, n.im))
            .collect();
        Self::new(Arc::new(grid), values, record.real)
    }
}

/// Text-serializable form of a [`TestFunction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionRecord {
    pub dim: usize,
    #[serde(default)]
    pub real: bool,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub k: Vec<f64>,
    pub w: f64,
    pub re: f64,
    pub im: f64,
}

/// `sum_k w(k) conj(f(k)) g(k) phi(lambda(k))`.
pub fn spectral_pairing<F>(
    f: &TestFunction,
    g: &TestFunction,
    phi: F,
    disp: &Dispersion,
) -> Result<Complex64>
where
    F: Fn(f64) -> f64,
{
    if !f.compatible(g) {
        return Err(SpectralError::IncompatibleGrids);
    }
    let grid = &f.grid;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..grid.len() {
        let lambda = disp.energy(grid.k_squared(i));
        let p = phi(lambda);
        if !p.is_finite() {
            return Err(SpectralError::NonFiniteSpectralFunction(lambda));
        }
        acc += f.values[i].conj() * g.values[i] * (grid.weight(i) * p);
    }
    Ok(acc)
}

/// Like [`spectral_pairing`] but with a complex-valued spectral function.
pub(crate) fn spectral_pairing_complex<F>(
    f: &TestFunction,
    g: &TestFunction,
    phi: F,
    disp: &Dispersion,
) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    if !f.compatible(g) {
        return Err(SpectralError::IncompatibleGrids);
    }
    let grid = &f.grid;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..grid.len() {
        let lambda = disp.energy(grid.k_squared(i));
        let p = phi(lambda);
        if !p.re.is_finite() || !p.im.is_finite() {
            return Err(SpectralError::NonFiniteSpectralFunction(lambda));
        }
        acc += f.values[i].conj() * g.values[i] * p * grid.weight(i);
    }
    Ok(acc)
}

/// Plain `L^2` inner product `sum_k w(k) conj(f(k)) g(k)`.
pub fn inner_product(f: &TestFunction, g: &TestFunction) -> Result<Complex64> {
    if !f.compatible(g) {
        return Err(SpectralError::IncompatibleGrids);
    }
    Ok(f.grid
        .weights()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| a.conj() * b * *w)
        .sum())
}

/// Squared negative-index Sobolev norm `<f, h^{-1} f>`.
pub fn sobolev_minus_one_sq(f: &TestFunction, disp: &Dispersion) -> Result<f64> {
    Ok(spectral_pairing(f, f, |l| 1.0 / l, disp)?.re)
}
