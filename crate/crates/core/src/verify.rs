//! Numerical audits of the thermal axioms: S- and reflection positivity of
//! Green functionals and covariance kernels, time invariances, and an
//! empirical boundedness probe for the covariance form.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::greens::{Argument, GreenFunctional, GreensError};
use crate::kernel::{covariance_l2_sq, CovarianceKernel, KernelError, ThermalCircle, TimeProfile};
use crate::spectral::{sobolev_minus_one_sq, Dispersion, SpectralError};

/// Default relative PSD tolerance.
pub const DEFAULT_PSD_TOLERANCE: f64 = 1e-10;

/// Largest accepted `||A - A^*|| / ||A||` before symmetrization.
pub const ASYMMETRY_LIMIT: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("family is empty")]
    EmptyFamily,
    #[error("argument {0} lives on a grid incompatible with argument 0")]
    IncompatibleGrids(usize),
    #[error("argument {index} is not supported on [0, beta/2]")]
    SupportViolation { index: usize },
    #[error("matrix is not Hermitian: asymmetry {asymmetry:e} against norm {norm:e}")]
    NotHermitian { asymmetry: f64, norm: f64 },
    #[error("non-finite matrix entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Greens(#[from] GreensError),
}

impl From<KernelError> for VerifyError {
    fn from(e: KernelError) -> Self {
        Self::Greens(e.into())
    }
}

impl From<SpectralError> for VerifyError {
    fn from(e: SpectralError) -> Self {
        Self::Greens(e.into())
    }
}

pub type Result<T> = std::result::Result<T, VerifyError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Psd,
    Indefinite,
}

/// Eigenvalue report for a Hermitian Gram matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    /// Symmetrized matrix, row major.
    pub matrix: Vec<Vec<Complex64>>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub verdict: Verdict,
    pub tolerance: f64,
    /// Frobenius norm of `(A - A^*) / 2` before symmetrization.
    pub asymmetry: f64,
    /// Eigenvector of the most negative eigenvalue when indefinite.
    pub witness: Option<Vec<Complex64>>,
}

impl GramReport {
    pub fn from_matrix(a: DMatrix<Complex64>, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(VerifyError::InvalidTolerance(tol));
        }
        let n = a.nrows();
        for i in 0..n {
            for j in 0..n {
                if !(a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()) {
                    return Err(VerifyError::NonFinite(i, j));
                }
            }
        }
        let adj = a.adjoint();
        let asymmetry = ((&a - &adj) * Complex64::new(0.5, 0.0)).norm();
        let norm = a.norm();
        if asymmetry > ASYMMETRY_LIMIT * norm {
            return Err(VerifyError::NotHermitian { asymmetry, norm });
        }
        let sym = (&a + &adj) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(sym.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let (lo, hi) = (eigenvalues[0], eigenvalues[n - 1]);
        let verdict = if lo >= -tol * hi.max(1.0) {
            Verdict::Psd
        } else {
            Verdict::Indefinite
        };
        let witness = (verdict == Verdict::Indefinite)
            .then(|| eig.eigenvectors.column(order[0]).iter().copied().collect());
        let matrix = (0..n).map(|i| (0..n).map(|j| sym[(i, j)]).collect()).collect();
        Ok(Self {
            matrix,
            eigenvalues,
            verdict,
            tolerance: tol,
            asymmetry,
            witness,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn is_psd(&self) -> bool {
        self.verdict == Verdict::Psd
    }
}

/// Which Gram matrix a positivity audit assembles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityKind {
    /// Entries pair `x_a` with `x_c`.
    Shift,
    /// Entries pair `x_a` with the reflected `R x_c`.
    Reflection,
}

fn check_family(family: &[Argument]) -> Result<()> {
    let Some(first) = family.first() else {
        return Err(VerifyError::EmptyFamily);
    };
    for (i, a) in family.iter().enumerate().skip(1) {
        if !first.f.compatible(&a.f) {
            return Err(VerifyError::IncompatibleGrids(i));
        }
    }
    Ok(())
}

fn check_support(family: &[Argument], circle: &ThermalCircle) -> Result<()> {
    for (index, a) in family.iter().enumerate() {
        if !a.profile.supported_on_positive_half(circle) {
            return Err(VerifyError::SupportViolation { index });
        }
    }
    Ok(())
}

fn assemble<F>(n: usize, entry: F) -> Result<DMatrix<Complex64>>
where
    F: Fn(usize, usize) -> Result<Complex64> + Sync,
{
    let values: Vec<Complex64> = (0..n * n)
        .into_par_iter()
        .map(|idx| entry(idx / n, idx % n))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_row_slice(n, n, &values))
}

/// `M_ac = G(x_a - x_c)`.
pub fn s_positivity(functional: &dyn GreenFunctional, family: &[Argument], tol: f64) -> Result<GramReport> {
    check_family(family)?;
    let m = assemble(family.len(), |a, c| {
        Ok(functional.characteristic(&[family[a].clone(), family[c].negated()])?)
    })?;
    GramReport::from_matrix(m, tol)
}

/// `M_ac = G(x_a - R x_c)` on profiles supported in `[0, beta/2]`.
pub fn reflection_positivity(
    functional: &dyn GreenFunctional,
    family: &[Argument],
    tol: f64,
) -> Result<GramReport> {
    check_family(family)?;
    let circle = *functional.circle();
    check_support(family, &circle)?;
    let m = assemble(family.len(), |a, c| {
        let rc = family[c].reflected(&circle).negated();
        Ok(functional.characteristic(&[family[a].clone(), rc])?)
    })?;
    GramReport::from_matrix(m, tol)
}

fn kernel_matrix(
    kernel: &CovarianceKernel,
    circle: &ThermalCircle,
    family: &[Argument],
    kind: PositivityKind,
) -> Result<DMatrix<Complex64>> {
    check_family(family)?;
    if kind == PositivityKind::Reflection {
        check_support(family, circle)?;
    }
    assemble(family.len(), |a, c| {
        let right = match kind {
            PositivityKind::Shift => family[c].clone(),
            PositivityKind::Reflection => family[c].reflected(circle),
        };
        Ok(kernel.bilinear(&family[a].profile, &family[a].f, &right.profile, &right.f, circle)?)
    })
}

/// `M_ac = B(x_a, x_c)` or `B(x_a, R x_c)`.
pub fn kernel_positivity(
    kernel: &CovarianceKernel,
    circle: &ThermalCircle,
    family: &[Argument],
    kind: PositivityKind,
    tol: f64,
) -> Result<GramReport> {
    GramReport::from_matrix(kernel_matrix(kernel, circle, family, kind)?, tol)
}

/// Negative control: the kernel Gram matrix with every off-diagonal entry
/// negated. Indefinite whenever the family has three or more strongly
/// correlated members.
pub fn corrupted_kernel_positivity(
    kernel: &CovarianceKernel,
    circle: &ThermalCircle,
    family: &[Argument],
    tol: f64,
) -> Result<GramReport> {
    let mut m = kernel_matrix(kernel, circle, family, PositivityKind::Shift)?;
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
    GramReport::from_matrix(m, tol)
}

/// Deviations of `G` under time shifts, reflection and a full period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub value: Complex64,
    pub shifts: Vec<f64>,
    pub shift_deviation: f64,
    pub reflection_deviation: f64,
    pub periodicity_deviation: f64,
    pub tolerance: f64,
    pub passes: bool,
}

fn shift_all(points: &[Argument], s: f64, circle: &ThermalCircle) -> Vec<Argument> {
    points.iter().map(|p| p.shifted(s, circle)).collect()
}

/// Shift deviation is `max_s |G(T_s x) - G(x)|`; periodicity compares
/// `T_{s + beta}` with `T_s` for every `s` (and `s = 0`).
pub fn invariance_audit(
    functional: &dyn GreenFunctional,
    points: &[Argument],
    shifts: &[f64],
    tol: f64,
) -> Result<InvarianceReport> {
    if points.is_empty() {
        return Err(VerifyError::EmptyFamily);
    }
    let circle = *functional.circle();
    let g0 = functional.characteristic(points)?;
    let mut shift_deviation = 0.0_f64;
    let mut periodicity_deviation = 0.0_f64;
    for &s in std::iter::once(&0.0).chain(shifts) {
        let gs = functional.characteristic(&shift_all(points, s, &circle))?;
        let gp = functional.characteristic(&shift_all(points, s + circle.beta, &circle))?;
        shift_deviation = shift_deviation.max((gs - g0).norm());
        periodicity_deviation = periodicity_deviation.max((gp - gs).norm());
    }
    let reflected: Vec<Argument> = points.iter().map(|p| p.reflected(&circle)).collect();
    let reflection_deviation = (functional.characteristic(&reflected)? - g0).norm();
    let passes = shift_deviation < tol && reflection_deviation < tol && periodicity_deviation < tol;
    Ok(InvarianceReport {
        value: g0,
        shifts: shifts.to_vec(),
        shift_deviation,
        reflection_deviation,
        periodicity_deviation,
        tolerance: tol,
        passes,
    })
}

/// Empirical check of `|B(x, y)| <= C N(psi_1) N(psi_2) ||f||_{-1} ||g||_{-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub ratios: Vec<f64>,
    pub supremum: f64,
    /// The constant `C`; depends on `beta`, the kernel and the grid.
    pub bound: f64,
    pub passes: bool,
}

/// Time-side bound `|int int psi_1 psi_2 C_lambda| <= b(lambda) N(psi_1) N(psi_2)`.
fn time_bound(p1: &TimeProfile, p2: &TimeProfile, lambda: f64, circle: &ThermalCircle) -> f64 {
    use TimeProfile::*;
    match (p1, p2) {
        // C_lambda is maximal at t = 0
        (DeltaComb(_), DeltaComb(_)) => 1.0 / (0.5 * circle.beta * lambda).tanh(),
        // Matsubara weights are maximal at n = 0
        (MatsubaraSeries(_), MatsubaraSeries(_)) => 2.0 / lambda,
        _ => covariance_l2_sq(lambda, circle).sqrt(),
    }
}

/// The constant `C` for one pair: `max_k lambda_d(k) sum_i w_i b(lambda_i(k))`
/// over the grid nodes, with `lambda_d` the dispersion of the norm.
pub fn boundedness_constant(
    kernel: &CovarianceKernel,
    circle: &ThermalCircle,
    x: &Argument,
    y: &Argument,
    disp: &Dispersion,
) -> Result<f64> {
    let components = kernel.components()?;
    let grid = x.f.grid();
    let mut c = 0.0_f64;
    for i in 0..grid.len() {
        let k_sq = grid.k_squared(i);
        let sum: f64 = components
            .iter()
            .map(|(w, d)| w * time_bound(&x.profile, &y.profile, d.energy(k_sq), circle))
            .sum();
        c = c.max(disp.energy(k_sq) * sum);
    }
    Ok(c)
}

/// Ratios `|B(x, y)| / (N(psi_x) N(psi_y) ||f_x||_{-1} ||f_y||_{-1})`, with
/// `N` total variation for delta combs and `L^2` for series. A vanishing
/// denominator gives ratio 0.
pub fn boundedness_probe(
    kernel: &CovarianceKernel,
    circle: &ThermalCircle,
    pairs: &[(Argument, Argument)],
    disp: &Dispersion,
) -> Result<BoundednessReport> {
    if pairs.is_empty() {
        return Err(VerifyError::EmptyFamily);
    }
    let mut ratios = Vec::with_capacity(pairs.len());
    let mut bound = 0.0_f64;
    for (index, (x, y)) in pairs.iter().enumerate() {
        if !x.f.compatible(&y.f) {
            return Err(VerifyError::IncompatibleGrids(index));
        }
        let b = kernel.bilinear(&x.profile, &x.f, &y.profile, &y.f, circle)?.norm();
        let denom = x.profile.probe_norm(circle)
            * y.profile.probe_norm(circle)
            * (sobolev_minus_one_sq(&x.f, disp)? * sobolev_minus_one_sq(&y.f, disp)?).sqrt();
        ratios.push(if denom > 0.0 { b / denom } else { 0.0 });
        bound = bound.max(boundedness_constant(kernel, circle, x, y, disp)?);
    }
    let supremum = ratios.iter().cloned().fold(0.0_f64, f64::max);
    Ok(BoundednessReport {
        passes: supremum <= bound * (1.0 + 1e-12),
        ratios,
        supremum,
        bound,
    })
}
