//! Green functionals, multitime Green functions and Schwinger moments.
//!
//! Every functional here is evaluated on a *formal sum* of arguments
//! `x_1 + ... + x_n`, each `x_k = psi_k (x) f_k`. For a quasi-free functional
//!
//! ```text
//! G(x_1 + ... + x_n) = exp(i sum_k M(x_k)) exp(-1/2 sum_{k,l} B(x_k, x_l))
//! ```
//!
//! and a mixture over chemical potentials is the weighted sum of such
//! Gaussian factors, one per atom. Multitime Green functions are the special
//! case where every `psi_k` is a single delta.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{CovarianceKernel, KernelError, SpectralMeasure, ThermalCircle, TimeProfile};
use crate::spectral::{inner_product, Dispersion, DispersionKind, TestFunction};

/// Largest order handled by the perfect-matching enumeration.
pub const MAX_WICK_ORDER: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreensError {
    #[error("order {order} exceeds the supported maximum {max}")]
    OrderTooLarge { order: usize, max: usize },
    #[error("at least one argument is required")]
    NoArguments,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl From<crate::spectral::SpectralError> for GreensError {
    fn from(e: crate::spectral::SpectralError) -> Self {
        Self::Kernel(e.into())
    }
}

pub type Result<T> = std::result::Result<T, GreensError>;

/// An elementary tensor `psi (x) f`.
#[derive(Clone, Debug, PartialEq)]
pub struct Argument {
    pub profile: TimeProfile,
    pub f: TestFunction,
}

impl Argument {
    pub fn new(profile: TimeProfile, f: TestFunction) -> Self {
        Self { profile, f }
    }

    /// `delta_tau (x) f`.
    pub fn sharp(tau: f64, f: TestFunction) -> Self {
        Self::new(TimeProfile::delta(tau), f)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::new(self.profile.scaled(a), self.f.clone())
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn reflected(&self, circle: &ThermalCircle) -> Self {
        Self::new(self.profile.reflected(circle), self.f.clone())
    }

    pub fn shifted(&self, s: f64, circle: &ThermalCircle) -> Self {
        Self::new(self.profile.shifted(s, circle), self.f.clone())
    }

    /// The time of a single-delta argument.
    pub fn sharp_time(&self) -> Option<f64> {
        match &self.profile {
            TimeProfile::DeltaComb(terms) if terms.len() == 1 && terms[0].1 == 1.0 => {
                Some(terms[0].0)
            }
            _ => None,
        }
    }
}

/// Builds sharp arguments from `(tau, f)` pairs.
pub fn sharp_points(points: &[(f64, TestFunction)]) -> Vec<Argument> {
    points
        .iter()
        .map(|(tau, f)| Argument::sharp(*tau, f.clone()))
        .collect()
}

/// A thermal Green functional: its value on a formal sum of arguments and the
/// moments of the underlying path-space measure.
pub trait GreenFunctional: Send + Sync {
    fn circle(&self) -> &ThermalCircle;

    /// `G(x_1 + ... + x_n)`; the empty sum gives `G(0) = 1`.
    fn characteristic(&self, args: &[Argument]) -> Result<Complex64>;

    /// `S(x_1, ..., x_n) = E prod_k <phi, x_k>`.
    fn moment(&self, args: &[Argument]) -> Result<Complex64>;
}

/// Hermitian matrix `B(x_k, x_l)`.
fn covariance_matrix(
    kernel: &CovarianceKernel,
    args: &[Argument],
    circle: &ThermalCircle,
) -> Result<Vec<Vec<Complex64>>> {
    let n = args.len();
    let mut b = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for k in 0..n {
        for l in k..n {
            let v = kernel.bilinear(&args[k].profile, &args[k].f, &args[l].profile, &args[l].f, circle)?;
            b[k][l] = v;
            b[l][k] = v.conj();
        }
    }
    Ok(b)
}

fn quadratic_form(b: &[Vec<Complex64>]) -> f64 {
    let n = b.len();
    let mut q = 0.0;
    for k in 0..n {
        q += b[k][k].re;
        for l in k + 1..n {
            q += 2.0 * b[k][l].re;
        }
    }
    q
}

/// Sum over all partitions of `0..n` into pairs (and, when `single` is
/// given, singletons) of the product of the block values.
pub fn wick_sum(
    n: usize,
    pair: &dyn Fn(usize, usize) -> Complex64,
    single: Option<&dyn Fn(usize) -> Complex64>,
) -> Result<Complex64> {
    if n > MAX_WICK_ORDER {
        return Err(GreensError::OrderTooLarge {
            order: n,
            max: MAX_WICK_ORDER,
        });
    }
    fn rec(
        remaining: &mut Vec<usize>,
        pair: &dyn Fn(usize, usize) -> Complex64,
        single: Option<&dyn Fn(usize) -> Complex64>,
    ) -> Complex64 {
        let Some(&first) = remaining.first() else {
            return Complex64::new(1.0, 0.0);
        };
        let mut total = Complex64::new(0.0, 0.0);
        if let Some(s) = single {
            let saved = remaining.remove(0);
            total += s(first) * rec(remaining, pair, single);
            remaining.insert(0, saved);
        }
        for j in 1..remaining.len() {
            let partner = remaining[j];
            let mut rest: Vec<usize> = remaining
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != 0 && i != j)
                .map(|(_, &x)| x)
                .collect();
            total += pair(first, partner) * rec(&mut rest, pair, single);
        }
        total
    }
    if single.is_none() && n % 2 == 1 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut all: Vec<usize> = (0..n).collect();
    Ok(rec(&mut all, pair, single))
}

/// Quasi-free functional `exp(i M) exp(-B/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiFreeSpec {
    /// `M(psi (x) f) = (int psi) <m, f>`; absent means `M = 0`.
    pub mean: Option<TestFunction>,
    pub covariance: CovarianceKernel,
    pub circle: ThermalCircle,
}

impl QuasiFreeSpec {
    /// Free Bose functional at a single chemical potential.
    pub fn free(disp: Dispersion, circle: ThermalCircle) -> Self {
        Self {
            mean: None,
            covariance: CovarianceKernel::Free(disp),
            circle,
        }
    }

    /// Generalized free functional `exp(-S_P / 2)` with the mixed kernel.
    pub fn generalized_free(measure: SpectralMeasure, kind: DispersionKind, circle: ThermalCircle) -> Self {
        Self {
            mean: None,
            covariance: CovarianceKernel::Mixed { measure, kind },
            circle,
        }
    }

    pub fn with_mean(mut self, m: TestFunction) -> Self {
        self.mean = Some(m);
        self
    }

    pub fn mean_value(&self, arg: &Argument) -> Result<Complex64> {
        match &self.mean {
            None => Ok(Complex64::new(0.0, 0.0)),
            Some(m) => Ok(inner_product(m, &arg.f)? * arg.profile.integral(&self.circle)),
        }
    }

    pub fn covariance_value(&self, a: &Argument, b: &Argument) -> Result<Complex64> {
        Ok(self
            .covariance
            .bilinear(&a.profile, &a.f, &b.profile, &b.f, &self.circle)?)
    }
}

impl GreenFunctional for QuasiFreeSpec {
    fn circle(&self) -> &ThermalCircle {
        &self.circle
    }

    fn characteristic(&self, args: &[Argument]) -> Result<Complex64> {
        let mut m = Complex64::new(0.0, 0.0);
        for a in args {
            m += self.mean_value(a)?;
        }
        let q = quadratic_form(&covariance_matrix(&self.covariance, args, &self.circle)?);
        Ok((Complex64::i() * m).exp() * (-0.5 * q).exp())
    }

    fn moment(&self, args: &[Argument]) -> Result<Complex64> {
        if args.len() > MAX_WICK_ORDER {
            return Err(GreensError::OrderTooLarge {
                order: args.len(),
                max: MAX_WICK_ORDER,
            });
        }
        let b = covariance_matrix(&self.covariance, args, &self.circle)?;
        let pair = |i: usize, j: usize| b[i][j];
        match &self.mean {
            None => wick_sum(args.len(), &pair, None),
            Some(_) => {
                let means = args
                    .iter()
                    .map(|a| self.mean_value(a))
                    .collect::<Result<Vec<_>>>()?;
                let single = |i: usize| means[i];
                wick_sum(args.len(), &pair, Some(&single))
            }
        }
    }
}

/// Convex mixture `sum_i w_i G_{0, mu_i}` of mean-zero free functionals.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    pub measure: SpectralMeasure,
    pub kind: DispersionKind,
    pub circle: ThermalCircle,
}

impl MixtureSpec {
    pub fn new(measure: SpectralMeasure, kind: DispersionKind, circle: ThermalCircle) -> Self {
        Self {
            measure,
            kind,
            circle,
        }
    }

    /// One free functional per atom, with its weight.
    pub fn components(&self) -> Result<Vec<(f64, QuasiFreeSpec)>> {
        Ok(self
            .measure
            .dispersions(self.kind)?
            .into_iter()
            .map(|(w, d)| (w, QuasiFreeSpec::free(d, self.circle)))
            .collect())
    }
}

impl GreenFunctional for MixtureSpec {
    fn circle(&self) -> &ThermalCircle {
        &self.circle
    }

    fn characteristic(&self, args: &[Argument]) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, spec) in self.components()? {
            acc += spec.characteristic(args)? * w;
        }
        Ok(acc)
    }

    fn moment(&self, args: &[Argument]) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, spec) in self.components()? {
            acc += spec.moment(args)? * w;
        }
        Ok(acc)
    }
}

/// `G(psi (x) f)` for a quasi-free functional.
pub fn quasifree_green(spec: &QuasiFreeSpec, arg: &Argument) -> Result<Complex64> {
    spec.characteristic(std::slice::from_ref(arg))
}

/// `G((tau_1, f_1), ..., (tau_n, f_n))`.
pub fn multitime_green(spec: &QuasiFreeSpec, points: &[Argument]) -> Result<Complex64> {
    if points.is_empty() {
        return Err(GreensError::NoArguments);
    }
    spec.characteristic(points)
}

/// `int dP(mu) G_{0,mu}(psi (x) f)`.
pub fn mixture_green(
    measure: &SpectralMeasure,
    kind: DispersionKind,
    circle: &ThermalCircle,
    arg: &Argument,
) -> Result<Complex64> {
    MixtureSpec::new(measure.clone(), kind, *circle).characteristic(std::slice::from_ref(arg))
}

pub fn mixture_multitime(
    measure: &SpectralMeasure,
    kind: DispersionKind,
    circle: &ThermalCircle,
    points: &[Argument],
) -> Result<Complex64> {
    if points.is_empty() {
        return Err(GreensError::NoArguments);
    }
    MixtureSpec::new(measure.clone(), kind, *circle).characteristic(points)
}

/// `S(x_1, ..., x_n)` through the pairing (Wick) expansion.
pub fn schwinger_moment(functional: &dyn GreenFunctional, points: &[Argument]) -> Result<Complex64> {
    if points.is_empty() {
        return Err(GreensError::NoArguments);
    }
    functional.moment(points)
}

/// Settings for [`schwinger_by_differentiation`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DifferentiationSettings {
    /// Base step for the normalized arguments.
    pub step: f64,
    /// Number of step halvings in the Richardson table.
    pub levels: usize,
}

impl Default for DifferentiationSettings {
    fn default() -> Self {
        Self {
            step: 1e-3,
            levels: 2,
        }
    }
}

impl DifferentiationSettings {
    /// Settings tuned per order so that truncation and cancellation errors
    /// both stay below `1e-8` relative for well-scaled arguments.
    pub fn for_order(n: usize) -> Self {
        match n {
            0..=2 => Self { step: 1e-3, levels: 2 },
            3 => Self { step: 2e-2, levels: 3 },
            _ => Self { step: 0.1, levels: 4 },
        }
    }
}

/// `S(x_1..x_n) = i^{-n} d^n/dt_1..dt_n G(sum t_k x_k) |_{t=0}` by central
/// differences with Richardson extrapolation. Independent of the pairing
/// expansion; used to validate [`schwinger_moment`].
pub fn schwinger_by_differentiation(
    functional: &dyn GreenFunctional,
    points: &[Argument],
    settings: DifferentiationSettings,
) -> Result<Complex64> {
    let n = points.len();
    if n == 0 {
        return Err(GreensError::NoArguments);
    }
    if n > MAX_WICK_ORDER {
        return Err(GreensError::OrderTooLarge {
            order: n,
            max: MAX_WICK_ORDER,
        });
    }
    // Rescale each argument so that G varies on a unit scale along it.
    let mut scales = Vec::with_capacity(n);
    for p in points {
        let g = functional.characteristic(std::slice::from_ref(p))?;
        let s = (-2.0 * g.norm().ln()).sqrt();
        scales.push(if s.is_finite() && s > 1e-300 { s } else { 1.0 });
    }
    let normalized: Vec<Argument> = points
        .iter()
        .zip(&scales)
        .map(|(p, s)| p.scaled(1.0 / s))
        .collect();

    let central = |h: f64| -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for mask in 0u32..(1 << n) {
            let mut sign = 1.0;
            let args: Vec<Argument> = normalized
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    let s = if mask & (1 << k) != 0 {
                        sign = -sign;
                        -h
                    } else {
                        h
                    };
                    a.scaled(s)
                })
                .collect();
            acc += functional.characteristic(&args)? * sign;
        }
        Ok(acc / (2.0 * h).powi(n as i32))
    };

    let mut table = Vec::with_capacity(settings.levels + 1);
    let mut h = settings.step;
    for _ in 0..=settings.levels {
        table.push(central(h)?);
        h *= 0.5;
    }
    // Richardson: eliminate h^2, h^4, ... in turn
    let mut factor = 4.0;
    for _ in 0..settings.levels {
        let next: Vec<Complex64> = table
            .windows(2)
            .map(|w| (w[1] * factor - w[0]) / (factor - 1.0))
            .collect();
        table = next;
        factor *= 4.0;
    }
    let derivative = table[0];
    let i_pow = Complex64::i().powi(n as i32);
    let scale: f64 = scales.iter().product();
    Ok(derivative / i_pow * scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Green,
    Schwinger,
    Truncated,
}

/// One evaluated n-point value together with the sharp times it was taken at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchwingerTable {
    pub order: usize,
    pub taus: Vec<f64>,
    pub value: Complex64,
    pub flavor: Flavor,
}

impl SchwingerTable {
    pub fn new(points: &[Argument], value: Complex64, flavor: Flavor) -> Self {
        Self {
            order: points.len(),
            taus: points.iter().map(|p| p.sharp_time().unwrap_or(f64::NAN)).collect(),
            value,
            flavor,
        }
    }
}

/// Outcome of the moment growth probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub gamma: f64,
    pub orders: Vec<usize>,
    pub log_moments: Vec<f64>,
    /// Fitted `C` and `R` of `|S_n| <= C (n!)^gamma R^n`.
    pub constant: f64,
    pub rate: f64,
    /// Largest and root-mean-square residual of the log-linear fit.
    pub max_residual: f64,
    pub rms_residual: f64,
    /// Orders used for the fit; the bound is then checked on all orders.
    pub fit_orders: Vec<usize>,
    pub bound_holds: bool,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Fits `log|S_n| - gamma log n! = log C + n log R` on the lower half of the
/// even orders up to `max_order` and checks that the fitted bound still
/// holds for every order. `moments[n]` is `|S_n|` (odd entries ignored).
pub fn growth_probe(moments: &[f64], gamma: f64) -> GrowthReport {
    let orders: Vec<usize> = (2..moments.len()).step_by(2).filter(|&n| moments[n] > 0.0).collect();
    let log_moments: Vec<f64> = orders.iter().map(|&n| moments[n].ln()).collect();
    let reduced: Vec<f64> = orders
        .iter()
        .zip(&log_moments)
        .map(|(&n, &l)| l - gamma * ln_factorial(n))
        .collect();
    let fit_len = orders.len().div_ceil(2).max(2).min(orders.len());
    let xs: Vec<f64> = orders[..fit_len].iter().map(|&n| n as f64).collect();
    let ys = &reduced[..fit_len];
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let max_residual = residuals.iter().cloned().fold(0.0_f64, f64::max);
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / m).sqrt();
    let log_c = intercept + max_residual;
    let bound_holds = orders
        .iter()
        .zip(&reduced)
        .all(|(&n, &y)| y <= log_c + slope * n as f64 + 1e-12);
    GrowthReport {
        gamma,
        orders: orders.clone(),
        log_moments,
        constant: log_c.exp(),
        rate: slope.exp(),
        max_residual,
        rms_residual,
        fit_orders: orders[..fit_len].to_vec(),
        bound_holds,
    }
}

/// `(n-1)!! a^{n/2}` for even `n`, zero for odd `n`.
pub fn gaussian_equal_moment(n: usize, a: f64) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let double_fact: f64 = (1..n).step_by(2).map(|k| k as f64).product();
    double_fact * a.powi((n / 2) as i32)
}
