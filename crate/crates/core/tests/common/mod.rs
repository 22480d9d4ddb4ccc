//! Shared oracles and fixtures for the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thermal_kms::greens::Argument;
use thermal_kms::kernel::{SpectralMeasure, ThermalCircle, TimeProfile};
use thermal_kms::spectral::TestFunction;

pub fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// Bell numbers `B_1..=B_n` from the Bell triangle.
pub fn bell_triangle(n: usize) -> Vec<u64> {
    let mut row = vec![1u64];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for &x in &row {
            let last = *next.last().unwrap();
            next.push(last + x);
        }
        out.push(next[0]);
        row = next;
    }
    out
}

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// Bernoulli-number correction terms removed from each Matsubara term.
const KUMMER_TERMS: usize = 6;

/// Modes summed in multiprecision; later modes are below f64 resolution of
/// the result and use plain floats.
const EXACT_MODES: u64 = 4000;

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, PREC)
}

fn ratio(p: i64, q: i64) -> BigFloat {
    BigFloat::from_i64(p, PREC).div(&BigFloat::from_i64(q, PREC), PREC, RM)
}

fn to_f64(x: &BigFloat, cc: &mut Consts) -> f64 {
    x.format(Radix::Dec, RM, cc).unwrap().parse().unwrap()
}

/// Bernoulli numbers `B_0..=B_12`.
fn bernoulli() -> Vec<BigFloat> {
    let table: [(i64, i64); 13] = [
        (1, 1),
        (-1, 2),
        (1, 6),
        (0, 1),
        (-1, 30),
        (0, 1),
        (1, 42),
        (0, 1),
        (-1, 30),
        (0, 1),
        (5, 66),
        (0, 1),
        (-691, 2730),
    ];
    table.iter().map(|&(p, q)| ratio(p, q)).collect()
}

fn binomial(n: u64, k: u64) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

/// `B_m(u) = sum_k C(m, k) B_k u^{m-k}`.
fn bernoulli_poly(m: usize, u: &BigFloat, b: &[BigFloat]) -> BigFloat {
    let mut acc = BigFloat::from_i64(0, PREC);
    for k in 0..=m {
        let term = b[k]
            .mul(&BigFloat::from_i64(binomial(m as u64, k as u64), PREC), PREC, RM)
            .mul(&u.powi(m - k, PREC, RM), PREC, RM);
        acc = acc.add(&term, PREC, RM);
    }
    acc
}

/// `(1/beta) sum_n 2h/(h^2 + w_n^2) e^{i w_n t}` over `|n| <= modes`.
///
/// Each term is split as `1/(h^2+w^2) = sum_{j<K} (-h^2)^j / w^{2j+2}
/// + (-h^2)^K / (w^{2K} (h^2+w^2))`; the first part is summed over all `n`
/// in closed form through Bernoulli polynomials, the remainder is summed
/// explicitly. Valid for `t` in `[0, beta]`.
pub fn matsubara_oracle(h: f64, t: f64, beta: f64, modes: u64) -> f64 {
    let mut cc = Consts::new().unwrap();
    let b = bernoulli();
    let hb = big(h);
    let betab = big(beta);
    let u = big(t).div(&betab, PREC, RM);
    let x = hb.mul(&betab, PREC, RM);
    // zero mode
    let mut total = BigFloat::from_i64(2, PREC).div(&x, PREC, RM);
    // closed-form part: 2 x^{2j+1} B_{2j+2}(u) / (2j+2)!
    let mut fact = BigFloat::from_i64(2, PREC);
    for j in 0..KUMMER_TERMS {
        let m = 2 * j + 2;
        if j > 0 {
            fact = fact.mul(&BigFloat::from_i64(((m - 1) * m) as i64, PREC), PREC, RM);
        }
        let term = BigFloat::from_i64(2, PREC)
            .mul(&x.powi(m - 1, PREC, RM), PREC, RM)
            .mul(&bernoulli_poly(m, &u, &b), PREC, RM)
            .div(&fact, PREC, RM);
        total = total.add(&term, PREC, RM);
    }
    // remainder: (2/beta) sum_n 2h (-h^2)^K cos(n theta) / (w_n^{2K} (h^2 + w_n^2))
    let pi = cc.pi(PREC, RM);
    let two_pi = pi.mul(&BigFloat::from_i64(2, PREC), PREC, RM);
    let theta = two_pi.mul(&u, PREC, RM);
    let cos1 = theta.cos(PREC, RM, &mut cc);
    let h2 = hb.mul(&hb, PREC, RM);
    let sign = if KUMMER_TERMS.is_multiple_of(2) { 1 } else { -1 };
    let numer = BigFloat::from_i64(2 * sign, PREC)
        .mul(&hb, PREC, RM)
        .mul(&h2.powi(KUMMER_TERMS, PREC, RM), PREC, RM);
    let w1 = two_pi.div(&betab, PREC, RM);
    let (mut c_prev, mut c_cur) = (BigFloat::from_i64(1, PREC), cos1.clone());
    let mut rem = BigFloat::from_i64(0, PREC);
    let exact = modes.min(EXACT_MODES);
    for n in 1..=exact {
        let w = w1.mul(&BigFloat::from_u64(n, PREC), PREC, RM);
        let w2 = w.mul(&w, PREC, RM);
        let denom = w2.powi(KUMMER_TERMS, PREC, RM).mul(&h2.add(&w2, PREC, RM), PREC, RM);
        rem = rem.add(&numer.mul(&c_cur, PREC, RM).div(&denom, PREC, RM), PREC, RM);
        let next = BigFloat::from_i64(2, PREC)
            .mul(&cos1, PREC, RM)
            .mul(&c_cur, PREC, RM)
            .sub(&c_prev, PREC, RM);
        c_prev = c_cur;
        c_cur = next;
    }
    total = total.add(&rem.mul(&BigFloat::from_i64(2, PREC).div(&betab, PREC, RM), PREC, RM), PREC, RM);
    let mut value = to_f64(&total, &mut cc);
    // f64 tail
    let theta = 2.0 * std::f64::consts::PI * t / beta;
    let numer = 2.0 * sign as f64 * h * (h * h).powi(KUMMER_TERMS as i32);
    let mut tail = 0.0;
    for n in (exact + 1..=modes).rev() {
        let w = 2.0 * std::f64::consts::PI * n as f64 / beta;
        let w2 = w * w;
        tail += numer * (n as f64 * theta).cos() / (w2.powi(KUMMER_TERMS as i32) * (h * h + w2));
    }
    value += 2.0 / beta * tail;
    value
}

/// Seeded generator for randomized fixtures.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The two-atom measure `(1, 1/2), (2, 1/2)` with floor 1/2.
pub fn two_atom() -> SpectralMeasure {
    SpectralMeasure::from_pairs(0.5, &[(1.0, 0.5), (2.0, 0.5)]).unwrap()
}

pub fn zero_mode() -> TestFunction {
    TestFunction::single_node(1, 1.0).unwrap()
}

/// Random real packets sharing one 1D grid.
pub fn random_packets(rng: &mut ChaCha8Rng, count: usize, nodes: usize) -> Vec<TestFunction> {
    let grid = std::sync::Arc::new(thermal_kms::spectral::MomentumGrid::trapezoid(1, nodes, 8.0).unwrap());
    (0..count)
        .map(|_| {
            let width = rng.random_range(0.5..2.0);
            let amp = rng.random_range(0.3..1.2);
            TestFunction::gaussian_packet_on(grid.clone(), &[0.0], width).unwrap().scaled(amp)
        })
        .collect()
}

/// Random profile: a one- or two-term delta comb in `[lo, hi]`, or a short
/// real Matsubara series.
pub fn random_profile(rng: &mut ChaCha8Rng, circle: &ThermalCircle, lo: f64, hi: f64, allow_series: bool) -> TimeProfile {
    if allow_series && rng.random_bool(0.25) {
        let order = rng.random_range(0..3);
        let coeffs: Vec<num_complex::Complex64> = (0..=order)
            .map(|n| {
                let im = if n == 0 { 0.0 } else { rng.random_range(-0.2..0.2) };
                num_complex::Complex64::new(rng.random_range(-0.3..0.3), im)
            })
            .collect();
        return TimeProfile::MatsubaraSeries(thermal_kms::kernel::MatsubaraSeries::from_nonnegative(&coeffs).unwrap());
    }
    let terms = (0..rng.random_range(1..=2))
        .map(|_| (rng.random_range(lo..=hi), rng.random_range(0.3..1.0)))
        .collect();
    TimeProfile::delta_comb(circle, terms).unwrap()
}

/// Random arguments on a shared grid.
pub fn random_family(rng: &mut ChaCha8Rng, circle: &ThermalCircle, size: usize, lo: f64, hi: f64, allow_series: bool) -> Vec<Argument> {
    let fs = random_packets(rng, size, 17);
    fs.into_iter()
        .map(|f| Argument::new(random_profile(rng, circle, lo, hi, allow_series), f))
        .collect()
}

/// Random sharp points on the full circle.
pub fn random_sharp(rng: &mut ChaCha8Rng, circle: &ThermalCircle, size: usize) -> Vec<Argument> {
    let half = 0.5 * circle.beta;
    random_packets(rng, size, 17)
        .into_iter()
        .map(|f| Argument::sharp(rng.random_range(-half..half), f))
        .collect()
}
