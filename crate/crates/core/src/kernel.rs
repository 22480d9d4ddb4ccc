//! The free Bose thermal covariance on the circle `K_beta` and its mixtures.
//!
//! At a fixed spectral value `h` the covariance of two sharp times separated
//! by `t` is
//!
//! ```text
//! C_h(t) = (e^{-|t| h} + e^{-(beta - |t|) h}) / (1 - e^{-beta h})
//!        = cosh(h (beta/2 - |t|)) / sinh(beta h / 2)
//!        = (1/beta) sum_n 2h / (h^2 + w_n^2) e^{i w_n t},   w_n = 2 pi n / beta
//! ```
//!
//! The time-domain closed form is used for delta combs and the Matsubara
//! representation for series profiles. Both are cross-checked in the tests.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{
    spectral_pairing, spectral_pairing_complex, Dispersion, DispersionKind, SpectralError,
    TestFunction,
};

/// Above this value of `beta * h` the cosh/sinh form is replaced by the
/// pure-exponential form, which cannot overflow.
pub const ASYMPTOTIC_THRESHOLD: f64 = 700.0;

/// Sampling density used to check that a series profile vanishes on the
/// negative half of the circle.
pub const SUPPORT_SAMPLES: usize = 1024;

/// Largest `|psi|` tolerated outside the claimed support.
pub const SUPPORT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("spectral value must be > 0, got {0}")]
    NonPositiveSpectralValue(f64),
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("inverse temperature must be > 0, got {0}")]
    InvalidBeta(f64),
    #[error("invalid time profile: {0}")]
    InvalidProfile(String),
    #[error("spectral measure has no atoms")]
    EmptyMeasure,
    #[error("invalid spectral measure field `{field}`: {reason}")]
    InvalidMeasure { field: String, reason: String },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// Euclidean time circle `[-beta/2, beta/2)` with endpoints identified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalCircle {
    pub beta: f64,
}

impl ThermalCircle {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(KernelError::InvalidBeta(beta));
        }
        Ok(Self { beta })
    }

    /// Maps any real time onto `[-beta/2, beta/2)`.
    pub fn wrap(&self, tau: f64) -> f64 {
        let half = 0.5 * self.beta;
        let w = (tau + half).rem_euclid(self.beta) - half;
        if w >= half {
            -half
        } else {
            w
        }
    }

    pub fn reflect(&self, tau: f64) -> f64 {
        self.wrap(-tau)
    }

    /// Closed interval: `beta/2` and `-beta/2` name the same point.
    pub fn contains(&self, tau: f64) -> bool {
        let half = 0.5 * self.beta;
        (-half..=half).contains(&tau)
    }

    pub fn matsubara_frequency(&self, n: i64) -> f64 {
        2.0 * PI * n as f64 / self.beta
    }
}

/// Matsubara coefficient `2h / (h^2 + w^2)` of the covariance.
#[inline]
pub fn matsubara_weight(h: f64, omega: f64) -> f64 {
    2.0 * h / (h * h + omega * omega)
}

#[inline]
fn covariance_unchecked(h: f64, t: f64, beta: f64) -> f64 {
    let r = t.rem_euclid(beta);
    if beta * h > ASYMPTOTIC_THRESHOLD {
        (-h * r).exp() + (-h * (beta - r)).exp()
    } else {
        // exponential form: no cancellation for large beta*h, expm1 covers small
        ((-h * r).exp() + (-h * (beta - r)).exp()) / -(-beta * h).exp_m1()
    }
}

/// Sharp-time covariance `C_h(t)` at spectral value `h`.
pub fn covariance_scalar(h: f64, t: f64, circle: &ThermalCircle) -> Result<f64> {
    if !h.is_finite() {
        return Err(KernelError::NonFinite("h"));
    }
    if h <= 0.0 {
        return Err(KernelError::NonPositiveSpectralValue(h));
    }
    if !t.is_finite() {
        return Err(KernelError::NonFinite("t"));
    }
    Ok(covariance_unchecked(h, t, circle.beta))
}

/// `int_{K_beta} C_h(t)^2 dt`.
pub fn covariance_l2_sq(h: f64, circle: &ThermalCircle) -> f64 {
    let x = 0.5 * circle.beta * h;
    let coth = 1.0 / x.tanh();
    let inv_sinh_sq = if x > 0.5 * ASYMPTOTIC_THRESHOLD {
        0.0
    } else {
        1.0 / (x.sinh() * x.sinh())
    };
    0.5 * circle.beta * inv_sinh_sq + coth / h
}

/// Real trigonometric polynomial `psi(tau) = sum_{|n|<=N} c_n e^{i w_n tau}`
/// with `c_{-n} = conj(c_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct MatsubaraSeries {
    coeffs: Vec<Complex64>,
}

impl TryFrom<Vec<Complex64>> for MatsubaraSeries {
    type Error = KernelError;

    fn try_from(value: Vec<Complex64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<MatsubaraSeries> for Vec<Complex64> {
    fn from(s: MatsubaraSeries) -> Self {
        s.coeffs
    }
}

impl MatsubaraSeries {
    /// Coefficients for `n = -N..=N`, in that order.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) {
            return Err(KernelError::InvalidProfile(
                "series needs 2N+1 coefficients".into(),
            ));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(KernelError::NonFinite("series coefficient"));
        }
        let order = coeffs.len() / 2;
        for n in 0..=order {
            if coeffs[order - n] != coeffs[order + n].conj() {
                return Err(KernelError::InvalidProfile(format!(
                    "reality condition c_(-{n}) = conj(c_{n}) violated"
                )));
            }
        }
        Ok(Self { coeffs })
    }

    /// Builds the series from `c_0, c_1, ..., c_N`; negative modes are the
    /// conjugates. `c_0` must be real.
    pub fn from_nonnegative(coeffs: &[Complex64]) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(KernelError::InvalidProfile("empty series".into()));
        }
        if coeffs[0].im != 0.0 {
            return Err(KernelError::InvalidProfile("c_0 must be real".into()));
        }
        let order = coeffs.len() - 1;
        let mut full = Vec::with_capacity(2 * order + 1);
        full.extend(coeffs[1..].iter().rev().map(|c| c.conj()));
        full.extend_from_slice(coeffs);
        Self::new(full)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn coeff(&self, n: i64) -> Complex64 {
        let order = self.order() as i64;
        if n.abs() > order {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(n + order) as usize]
        }
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let order = self.order() as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (i as i64 - order, *c))
    }

    pub fn eval(&self, tau: f64, circle: &ThermalCircle) -> f64 {
        let mut acc = self.coeff(0).re;
        for n in 1..=self.order() as i64 {
            let phase = Complex64::from_polar(1.0, circle.matsubara_frequency(n) * tau);
            acc += 2.0 * (self.coeff(n) * phase).re;
        }
        acc
    }

    fn map_nonnegative<F: Fn(i64, Complex64) -> Complex64>(&self, f: F) -> Self {
        let order = self.order() as i64;
        let nonneg: Vec<Complex64> = (0..=order).map(|n| f(n, self.coeff(n))).collect();
        let mut full = Vec::with_capacity(self.coeffs.len());
        full.extend(nonneg[1..].iter().rev().map(|c| c.conj()));
        full.extend_from_slice(&nonneg);
        Self { coeffs: full }
    }
}

/// A real function on the thermal circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    /// `sum_a weight_a * delta(tau - tau_a)`, stored as `(tau_a, weight_a)`.
    DeltaComb(Vec<(f64, f64)>),
    MatsubaraSeries(MatsubaraSeries),
}

impl TimeProfile {
    pub fn delta(tau: f64) -> Self {
        Self::DeltaComb(vec![(tau, 1.0)])
    }

    /// Delta comb with every time checked to lie in `[-beta/2, beta/2]`.
    pub fn delta_comb(circle: &ThermalCircle, terms: Vec<(f64, f64)>) -> Result<Self> {
        let p = Self::DeltaComb(terms);
        p.validate(circle)?;
        Ok(p)
    }

    /// The constant function `psi = c`.
    pub fn constant(c: f64) -> Result<Self> {
        Ok(Self::MatsubaraSeries(MatsubaraSeries::from_nonnegative(&[
            Complex64::new(c, 0.0),
        ])?))
    }

    pub fn validate(&self, circle: &ThermalCircle) -> Result<()> {
        if let Self::DeltaComb(terms) = self {
            for &(tau, w) in terms {
                if !tau.is_finite() || !w.is_finite() {
                    return Err(KernelError::NonFinite("delta comb"));
                }
                if !circle.contains(tau) {
                    return Err(KernelError::InvalidProfile(format!(
                        "delta time {tau} outside [-beta/2, beta/2]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `int psi(tau) dtau` over the circle.
    pub fn integral(&self, circle: &ThermalCircle) -> f64 {
        match self {
            Self::DeltaComb(terms) => terms.iter().map(|(_, w)| w).sum(),
            Self::MatsubaraSeries(s) => circle.beta * s.coeff(0).re,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        match self {
            Self::DeltaComb(terms) => Self::DeltaComb(terms.iter().map(|&(t, w)| (t, a * w)).collect()),
            Self::MatsubaraSeries(s) => Self::MatsubaraSeries(s.map_nonnegative(|_, c| c * a)),
        }
    }

    /// `psi(tau - s)`.
    pub fn shifted(&self, s: f64, circle: &ThermalCircle) -> Self {
        match self {
            Self::DeltaComb(terms) => {
                Self::DeltaComb(terms.iter().map(|&(t, w)| (circle.wrap(t + s), w)).collect())
            }
            Self::MatsubaraSeries(series) => Self::MatsubaraSeries(series.map_nonnegative(|n, c| {
                c * Complex64::from_polar(1.0, -circle.matsubara_frequency(n) * s)
            })),
        }
    }

    /// `(R psi)(tau) = psi(-tau)`.
    pub fn reflected(&self, circle: &ThermalCircle) -> Self {
        match self {
            Self::DeltaComb(terms) => {
                Self::DeltaComb(terms.iter().map(|&(t, w)| (circle.reflect(t), w)).collect())
            }
            Self::MatsubaraSeries(series) => {
                Self::MatsubaraSeries(series.map_nonnegative(|_, c| c.conj()))
            }
        }
    }

    /// Whether the profile vanishes outside `[0, beta/2]`. Exact for delta
    /// combs; sampled at [`SUPPORT_SAMPLES`] points for series.
    pub fn supported_on_positive_half(&self, circle: &ThermalCircle) -> bool {
        match self {
            Self::DeltaComb(terms) => terms
                .iter()
                .all(|&(t, w)| w == 0.0 || (0.0..=0.5 * circle.beta).contains(&t)),
            Self::MatsubaraSeries(s) => (0..SUPPORT_SAMPLES).all(|i| {
                let tau = -0.5 * circle.beta * (i as f64 + 0.5) / SUPPORT_SAMPLES as f64;
                s.eval(tau, circle).abs() < SUPPORT_TOLERANCE
            }),
        }
    }

    /// Norm used by the boundedness probe: total variation for delta combs,
    /// `L^2(K_beta)` for series.
    pub fn probe_norm(&self, circle: &ThermalCircle) -> f64 {
        match self {
            Self::DeltaComb(terms) => terms.iter().map(|(_, w)| w.abs()).sum(),
            Self::MatsubaraSeries(s) => {
                (circle.beta * s.modes().map(|(_, c)| c.norm_sqr()).sum::<f64>()).sqrt()
            }
        }
    }
}

/// `sum_m c_m 2h/(h^2+w_m^2) e^{i w_m tau}`, the series smeared against the
/// covariance and evaluated at `tau`.
fn series_against_delta(series: &MatsubaraSeries, tau: f64, h: f64, circle: &ThermalCircle) -> f64 {
    let mut acc = series.coeff(0).re * matsubara_weight(h, 0.0);
    for n in 1..=series.order() as i64 {
        let omega = circle.matsubara_frequency(n);
        let phase = Complex64::from_polar(1.0, omega * tau);
        acc += 2.0 * matsubara_weight(h, omega) * (series.coeff(n) * phase).re;
    }
    acc
}

/// `int int psi_1(s) psi_2(s') C_h(s - s') ds ds'`.
pub fn time_form(p1: &TimeProfile, p2: &TimeProfile, h: f64, circle: &ThermalCircle) -> f64 {
    use TimeProfile::*;
    match (p1, p2) {
        (DeltaComb(a), DeltaComb(b)) => {
            let mut acc = 0.0;
            for &(ta, wa) in a {
                for &(tb, wb) in b {
                    acc += wa * wb * covariance_unchecked(h, ta - tb, circle.beta);
                }
            }
            acc
        }
        (MatsubaraSeries(a), MatsubaraSeries(b)) => {
            let order = a.order().min(b.order()) as i64;
            let mut acc = (a.coeff(0).conj() * b.coeff(0)).re * matsubara_weight(h, 0.0);
            for n in 1..=order {
                let k = matsubara_weight(h, circle.matsubara_frequency(n));
                // modes n and -n contribute complex conjugates
                acc += 2.0 * k * (a.coeff(n).conj() * b.coeff(n)).re;
            }
            circle.beta * acc
        }
        (DeltaComb(a), MatsubaraSeries(s)) | (MatsubaraSeries(s), DeltaComb(a)) => a
            .iter()
            .map(|&(tau, w)| w * series_against_delta(s, tau, h, circle))
            .sum(),
    }
}

/// `S_{0,mu}(delta_{t1} (x) f1, delta_{t2} (x) f2)`.
pub fn kernel_sharp(
    t1: f64,
    f1: &TestFunction,
    t2: f64,
    f2: &TestFunction,
    disp: &Dispersion,
    circle: &ThermalCircle,
) -> Result<Complex64> {
    if !t1.is_finite() || !t2.is_finite() {
        return Err(KernelError::NonFinite("t"));
    }
    let t = t1 - t2;
    let beta = circle.beta;
    Ok(spectral_pairing(
        f1,
        f2,
        |lambda| covariance_unchecked(lambda, t, beta),
        disp,
    )?)
}

/// `S_{0,mu}(psi_1 (x) f1, psi_2 (x) f2)` for arbitrary time profiles.
pub fn kernel_smeared(
    p1: &TimeProfile,
    f1: &TestFunction,
    p2: &TimeProfile,
    f2: &TestFunction,
    disp: &Dispersion,
    circle: &ThermalCircle,
) -> Result<Complex64> {
    p1.validate(circle)?;
    p2.validate(circle)?;
    if !f1.compatible(f2) {
        return Err(SpectralError::IncompatibleGrids.into());
    }
    Ok(spectral_pairing(
        f1,
        f2,
        |lambda| time_form(p1, p2, lambda, circle),
        disp,
    )?)
}

/// Series-by-series kernel evaluated with an explicit complex spectral
/// function; used to check that the imaginary part vanishes.
pub fn kernel_series_complex(
    a: &MatsubaraSeries,
    f1: &TestFunction,
    b: &MatsubaraSeries,
    f2: &TestFunction,
    disp: &Dispersion,
    circle: &ThermalCircle,
) -> Result<Complex64> {
    let order = a.order().max(b.order()) as i64;
    Ok(spectral_pairing_complex(
        f1,
        f2,
        |lambda| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in -order..=order {
                acc += a.coeff(n).conj()
                    * b.coeff(n)
                    * matsubara_weight(lambda, circle.matsubara_frequency(n));
            }
            acc * circle.beta
        },
        disp,
    )?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mu: f64,
    pub weight: f64,
}

/// Atomic measure on chemical potentials supported in `[floor, inf)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectralMeasureRecord", into = "SpectralMeasureRecord")]
pub struct SpectralMeasure {
    floor: f64,
    atoms: Vec<Atom>,
    normalized: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasureRecord {
    pub floor: f64,
    pub atoms: Vec<Atom>,
    #[serde(default = "default_true")]
    pub normalized: bool,
}

fn default_true() -> bool {
    true
}

impl TryFrom<SpectralMeasureRecord> for SpectralMeasure {
    type Error = KernelError;

    fn try_from(r: SpectralMeasureRecord) -> Result<Self> {
        Self::build(r.floor, r.atoms, r.normalized)
    }
}

impl From<SpectralMeasure> for SpectralMeasureRecord {
    fn from(m: SpectralMeasure) -> Self {
        Self {
            floor: m.floor,
            atoms: m.atoms,
            normalized: m.normalized,
        }
    }
}

impl SpectralMeasure {
    /// Probability measure: weights positive and summing to one.
    pub fn new(floor: f64, atoms: Vec<Atom>) -> Result<Self> {
        Self::build(floor, atoms, true)
    }

    /// Positive but not necessarily normalized weights.
    pub fn unnormalized(floor: f64, atoms: Vec<Atom>) -> Result<Self> {
        Self::build(floor, atoms, false)
    }

    pub fn dirac(mu: f64) -> Result<Self> {
        Self::new(mu, vec![Atom { mu, weight: 1.0 }])
    }

    /// Convenience for `(mu, weight)` pairs.
    pub fn from_pairs(floor: f64, pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            floor,
            pairs.iter().map(|&(mu, weight)| Atom { mu, weight }).collect(),
        )
    }

    fn build(floor: f64, atoms: Vec<Atom>, normalized: bool) -> Result<Self> {
        let bad = |field: String, reason: String| KernelError::InvalidMeasure { field, reason };
        if !floor.is_finite() || floor <= 0.0 {
            return Err(bad("floor".into(), format!("support floor e must be > 0, got {floor}")));
        }
        if atoms.is_empty() {
            return Err(KernelError::EmptyMeasure);
        }
        for (i, a) in atoms.iter().enumerate() {
            if !a.mu.is_finite() || a.mu < floor {
                return Err(bad(
                    format!("atoms[{i}].mu"),
                    format!("{} lies below the support floor e = {floor}", a.mu),
                ));
            }
            if !a.weight.is_finite() || a.weight <= 0.0 {
                return Err(bad(
                    format!("atoms[{i}].weight"),
                    format!("weights must be > 0, got {}", a.weight),
                ));
            }
        }
        if normalized {
            let total: f64 = atoms.iter().map(|a| a.weight).sum();
            if (total - 1.0).abs() > 1e-12 * atoms.len() as f64 {
                return Err(bad("atoms".into(), format!("weights sum to {total}, expected 1")));
            }
        }
        Ok(Self {
            floor,
            atoms,
            normalized,
        })
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Whether the measure charges at least two distinct chemical potentials.
    pub fn has_distinct_atoms(&self) -> bool {
        self.atoms.iter().any(|a| a.mu != self.atoms[0].mu)
    }

    pub fn dispersions(&self, kind: DispersionKind) -> Result<Vec<(f64, Dispersion)>> {
        self.atoms
            .iter()
            .map(|a| Ok((a.weight, Dispersion::new(kind, a.mu)?)))
            .collect()
    }
}

/// `S_P = sum_i w_i S_{0,mu_i}`.
pub fn kernel_mixed(
    p1: &TimeProfile,
    f1: &TestFunction,
    p2: &TimeProfile,
    f2: &TestFunction,
    measure: &SpectralMeasure,
    kind: DispersionKind,
    circle: &ThermalCircle,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (w, disp) in measure.dispersions(kind)? {
        acc += kernel_smeared(p1, f1, p2, f2, &disp, circle)? * w;
    }
    Ok(acc)
}

/// A covariance form usable as the `B` of a quasi-free functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKernel {
    Free(Dispersion),
    Mixed {
        measure: SpectralMeasure,
        kind: DispersionKind,
    },
}

impl CovarianceKernel {
    pub fn bilinear(
        &self,
        p1: &TimeProfile,
        f1: &TestFunction,
        p2: &TimeProfile,
        f2: &TestFunction,
        circle: &ThermalCircle,
    ) -> Result<Complex64> {
        match self {
            Self::Free(disp) => kernel_smeared(p1, f1, p2, f2, disp, circle),
            Self::Mixed { measure, kind } => kernel_mixed(p1, f1, p2, f2, measure, *kind, circle),
        }
    }

    /// `(weight, dispersion)` pairs whose weighted sum is this kernel.
    pub fn components(&self) -> Result<Vec<(f64, Dispersion)>> {
        match self {
            Self::Free(disp) => Ok(vec![(1.0, *disp)]),
            Self::Mixed { measure, kind } => measure.dispersions(*kind),
        }
    }
}
