//! Set partitions and the moment/cumulant (truncation) transform.
//!
//! Moments and cumulants of `n` arguments are stored per subset of
//! `{0, .., n-1}`, indexed by bit mask. The truncated value of a subset is
//!
//! ```text
//! G^T(B) = sum_{pi in Par(B)} (|pi| - 1)! (-1)^{|pi| - 1} prod_{b in pi} G(b)
//! ```
//!
//! and the inverse transform sums the plain products over the same partitions.

use num_complex::Complex64;
use thiserror::Error;

use crate::greens::{Argument, GreenFunctional, GreensError};
use crate::kernel::{SpectralMeasure, ThermalCircle};
use crate::greens::MixtureSpec;
use crate::spectral::DispersionKind;

/// Largest set size for partition enumeration.
pub const MAX_PARTITION_SIZE: usize = 12;

/// Largest number of arguments for a cumulant computed from moments.
pub const MAX_CUMULANT_ORDER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CumulantError {
    #[error("set size {n} outside 1..={max}")]
    OrderOutOfRange { n: usize, max: usize },
    #[error("no value for subset {0:#b}")]
    MissingSubset(u32),
    #[error(transparent)]
    Greens(#[from] GreensError),
}

pub type Result<T> = std::result::Result<T, CumulantError>;

/// A partition of `{0, .., n-1}` with blocks ordered by least element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetPartition {
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    /// From a restricted growth string `a` (`a[0] = 0`, `a[i] <= 1 + max a[..i]`).
    pub fn from_rgs(rgs: &[usize]) -> Self {
        let k = rgs.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block bit masks after relabelling element `i` as `elements[i]`.
    pub fn masks_over(&self, elements: &[usize]) -> Vec<u32> {
        self.blocks
            .iter()
            .map(|b| b.iter().fold(0u32, |m, &i| m | (1 << elements[i])))
            .collect()
    }
}

/// Iterator over all set partitions in restricted-growth-string order.
#[derive(Clone, Debug)]
pub struct Partitions {
    rgs: Vec<usize>,
    // prefix maxima: max[i] = max(rgs[0..i])
    max: Vec<usize>,
    done: bool,
}

impl Partitions {
    fn new(n: usize) -> Self {
        Self {
            rgs: vec![0; n],
            max: vec![0; n],
            done: false,
        }
    }

    fn advance(&mut self) {
        let n = self.rgs.len();
        let mut i = n;
        while i > 1 {
            i -= 1;
            if self.rgs[i] <= self.max[i] {
                self.rgs[i] += 1;
                let m = self.max[i].max(self.rgs[i]);
                for j in i + 1..n {
                    self.rgs[j] = 0;
                    self.max[j] = m;
                }
                return;
            }
        }
        self.done = true;
    }
}

impl Iterator for Partitions {
    type Item = SetPartition;

    fn next(&mut self) -> Option<SetPartition> {
        if self.done {
            return None;
        }
        let item = SetPartition::from_rgs(&self.rgs);
        self.advance();
        Some(item)
    }
}

/// Streams every partition of `{0, .., n-1}` exactly once.
pub fn enumerate_partitions(n: usize) -> Result<Partitions> {
    if n == 0 || n > MAX_PARTITION_SIZE {
        return Err(CumulantError::OrderOutOfRange {
            n,
            max: MAX_PARTITION_SIZE,
        });
    }
    Ok(Partitions::new(n))
}

/// Values attached to subsets of `{0, .., n-1}`; the empty set carries 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentFamily {
    n: usize,
    values: Vec<Option<Complex64>>,
}

impl MomentFamily {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_PARTITION_SIZE {
            return Err(CumulantError::OrderOutOfRange {
                n,
                max: MAX_PARTITION_SIZE,
            });
        }
        let mut values = vec![None; 1 << n];
        values[0] = Some(Complex64::new(1.0, 0.0));
        Ok(Self { n, values })
    }

    /// Fills every nonempty subset from `value(mask)`.
    pub fn from_fn<F>(n: usize, mut value: F) -> Result<Self>
    where
        F: FnMut(u32) -> Complex64,
    {
        let mut fam = Self::new(n)?;
        for mask in 1..(1u32 << n) {
            fam.values[mask as usize] = Some(value(mask));
        }
        Ok(fam)
    }

    pub fn try_from_fn<F, E>(n: usize, mut value: F) -> std::result::Result<Self, E>
    where
        F: FnMut(u32) -> std::result::Result<Complex64, E>,
        E: From<CumulantError>,
    {
        let mut fam = Self::new(n)?;
        for mask in 1..(1u32 << n) {
            fam.values[mask as usize] = Some(value(mask)?);
        }
        Ok(fam)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, mask: u32, value: Complex64) {
        self.values[mask as usize] = Some(value);
    }

    pub fn get(&self, mask: u32) -> Result<Complex64> {
        self.values
            .get(mask as usize)
            .copied()
            .flatten()
            .ok_or(CumulantError::MissingSubset(mask))
    }

    pub fn full_mask(&self) -> u32 {
        (1u32 << self.n) - 1
    }
}

fn elements_of(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

fn partition_sum<F>(family: &MomentFamily, mask: u32, coefficient: F) -> Result<Complex64>
where
    F: Fn(usize) -> f64,
{
    if mask == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let elements = elements_of(mask);
    let mut total = Complex64::new(0.0, 0.0);
    for pi in enumerate_partitions(elements.len())? {
        let mut prod = Complex64::new(coefficient(pi.len()), 0.0);
        for b in pi.masks_over(&elements) {
            prod *= family.get(b)?;
        }
        total += prod;
    }
    Ok(total)
}

fn truncation_coefficient(k: usize) -> f64 {
    let fact: f64 = (1..k).map(|j| j as f64).product();
    if k % 2 == 1 {
        fact
    } else {
        -fact
    }
}

/// Truncated value of the subset `mask`.
pub fn truncate_subset(moments: &MomentFamily, mask: u32) -> Result<Complex64> {
    partition_sum(moments, mask, truncation_coefficient)
}

/// Truncated (connected) value of the full set `{0, .., n-1}`.
pub fn truncate(moments: &MomentFamily, n: usize) -> Result<Complex64> {
    check_order(moments, n)?;
    truncate_subset(moments, (1u32 << n) - 1)
}

/// Moment of the subset `mask` rebuilt from cumulants.
pub fn untruncate_subset(cumulants: &MomentFamily, mask: u32) -> Result<Complex64> {
    partition_sum(cumulants, mask, |_| 1.0)
}

pub fn untruncate(cumulants: &MomentFamily, n: usize) -> Result<Complex64> {
    check_order(cumulants, n)?;
    untruncate_subset(cumulants, (1u32 << n) - 1)
}

fn check_order(family: &MomentFamily, n: usize) -> Result<()> {
    if n == 0 || n > family.order() {
        return Err(CumulantError::OrderOutOfRange {
            n,
            max: family.order(),
        });
    }
    Ok(())
}

/// Applies the truncation transform to every subset.
pub fn truncate_family(moments: &MomentFamily) -> Result<MomentFamily> {
    let mut out = MomentFamily::new(moments.order())?;
    for mask in 1..=moments.full_mask() {
        out.set(mask, truncate_subset(moments, mask)?);
    }
    Ok(out)
}

pub fn untruncate_family(cumulants: &MomentFamily) -> Result<MomentFamily> {
    let mut out = MomentFamily::new(cumulants.order())?;
    for mask in 1..=cumulants.full_mask() {
        out.set(mask, untruncate_subset(cumulants, mask)?);
    }
    Ok(out)
}

/// Schwinger moments of every nonempty subset of `points`.
pub fn moment_family(functional: &dyn GreenFunctional, points: &[Argument]) -> Result<MomentFamily> {
    let n = points.len();
    if n == 0 || n > MAX_CUMULANT_ORDER {
        return Err(CumulantError::OrderOutOfRange {
            n,
            max: MAX_CUMULANT_ORDER,
        });
    }
    MomentFamily::try_from_fn(n, |mask| {
        let subset: Vec<Argument> = elements_of(mask).into_iter().map(|i| points[i].clone()).collect();
        Ok(functional.moment(&subset)?)
    })
}

/// n-point cumulant (truncated Schwinger function) of any functional.
pub fn cumulant(functional: &dyn GreenFunctional, points: &[Argument]) -> Result<Complex64> {
    let fam = moment_family(functional, points)?;
    truncate(&fam, points.len())
}

/// n-point cumulant of the mixture `int dP(mu) G_{0,mu}`.
pub fn mixture_cumulant(
    measure: &SpectralMeasure,
    kind: DispersionKind,
    circle: &ThermalCircle,
    points: &[Argument],
) -> Result<Complex64> {
    cumulant(&MixtureSpec::new(measure.clone(), kind, *circle), points)
}

/// Univariate cumulants `kappa_1..=kappa_n` from raw moments `m_1..=m_n`
/// (`moments[0]` is ignored and taken as 1).
pub fn univariate_cumulants(moments: &[f64]) -> Result<Vec<f64>> {
    let n = moments.len() - 1;
    let fam = MomentFamily::from_fn(n, |mask| Complex64::new(moments[mask.count_ones() as usize], 0.0))?;
    (1..=n)
        .map(|k| Ok(truncate_subset(&fam, (1u32 << k) - 1)?.re))
        .collect()
}
