//! Kernel values against independent quadrature and sharp-time oracles.

mod common;

use approx::assert_relative_eq;
use num_complex::Complex64;

use thermal_kms::kernel::{
    covariance_scalar, kernel_mixed, kernel_series_complex, kernel_sharp, kernel_smeared, time_form, MatsubaraSeries,
    ThermalCircle, TimeProfile,
};
use thermal_kms::spectral::{inner_product, Dispersion, DispersionKind, TestFunction};

use common::{rng, two_atom, zero_mode};

fn circle(beta: f64) -> ThermalCircle {
    ThermalCircle::new(beta).unwrap()
}

fn series(coeffs: &[(f64, f64)]) -> MatsubaraSeries {
    let c: Vec<Complex64> = coeffs.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
    MatsubaraSeries::from_nonnegative(&c).unwrap()
}

/// Composite Simpson on `[a, b]` with `2m` panels.
fn simpson(a: f64, b: f64, m: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = 2 * m;
    let dx = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * dx);
    }
    acc * dx / 3.0
}

/// `int_0^beta psi(s) C_h(tau - s) ds`, split at the kink `s = tau`.
fn smear_against_delta(psi: &dyn Fn(f64) -> f64, tau: f64, h: f64, c: &ThermalCircle) -> f64 {
    let f = |s: f64| psi(s) * covariance_scalar(h, tau - s, c).unwrap();
    let t = tau.rem_euclid(c.beta);
    simpson(0.0, t, 400, f) + simpson(t, c.beta, 400, f)
}

#[test]
fn delta_comb_is_sum_of_sharp_values() {
    let c = circle(1.7);
    let mut r = rng(21);
    let fs = common::random_packets(&mut r, 2, 17);
    let disp = Dispersion::relativistic(0.9).unwrap();
    let a = vec![(0.1, 0.7), (-0.4, 0.2)];
    let b = vec![(0.3, 1.1), (0.8, -0.5)];
    let smeared = kernel_smeared(
        &TimeProfile::delta_comb(&c, a.clone()).unwrap(),
        &fs[0],
        &TimeProfile::delta_comb(&c, b.clone()).unwrap(),
        &fs[1],
        &disp,
        &c,
    )
    .unwrap();
    let mut sharp = Complex64::new(0.0, 0.0);
    for &(ta, wa) in &a {
        for &(tb, wb) in &b {
            sharp += kernel_sharp(ta, &fs[0], tb, &fs[1], &disp, &c).unwrap() * (wa * wb);
        }
    }
    assert_relative_eq!(smeared.re, sharp.re, max_relative = 1e-13);
    assert!(smeared.im.abs() < 1e-14);
}

#[test]
fn single_node_sharp_kernel_is_scalar_covariance() {
    let c = circle(2.0);
    for (mu, t) in [(0.5, 0.0), (1.0, 0.3), (3.0, -0.9)] {
        let disp = Dispersion::nonrelativistic(mu).unwrap();
        let v = kernel_sharp(t, &zero_mode(), 0.0, &zero_mode(), &disp, &c).unwrap();
        assert_relative_eq!(v.re, covariance_scalar(mu, t, &c).unwrap(), max_relative = 1e-14);
    }
}

#[test]
fn series_against_delta_matches_quadrature() {
    let c = circle(1.3);
    let s = series(&[(0.4, 0.0), (0.2, -0.1), (-0.15, 0.3)]);
    let psi = |t: f64| s.eval(t, &c);
    for (h, tau) in [(0.7, 0.0), (2.0, 0.35), (5.0, -0.6)] {
        let exact = smear_against_delta(&psi, tau, h, &c);
        let v = time_form(&TimeProfile::delta(tau), &TimeProfile::MatsubaraSeries(s.clone()), h, &c);
        assert_relative_eq!(v, exact, max_relative = 1e-9);
    }
}

#[test]
fn series_pair_matches_double_quadrature() {
    let c = circle(2.2);
    let a = series(&[(0.3, 0.0), (0.5, 0.2)]);
    let b = series(&[(-0.2, 0.0), (0.1, -0.4), (0.25, 0.05)]);
    let psi_a = |t: f64| a.eval(t, &c);
    for h in [0.6, 1.5, 4.0] {
        // the inner convolution is smooth and periodic in the outer variable,
        // so the outer trapezoid rule converges spectrally
        let outer = 64;
        let dx = c.beta / outer as f64;
        let exact: f64 = (0..outer)
            .map(|i| {
                let s = i as f64 * dx;
                b.eval(s, &c) * smear_against_delta(&psi_a, s, h, &c)
            })
            .sum::<f64>()
            * dx;
        let v = time_form(
            &TimeProfile::MatsubaraSeries(a.clone()),
            &TimeProfile::MatsubaraSeries(b.clone()),
            h,
            &c,
        );
        assert_relative_eq!(v, exact, max_relative = 1e-9);
    }
}

#[test]
fn series_kernel_has_no_imaginary_part() {
    let c = circle(1.0);
    let mut r = rng(22);
    let fs = common::random_packets(&mut r, 2, 17);
    let a = series(&[(0.3, 0.0), (0.5, 0.2), (0.1, -0.3)]);
    let b = series(&[(-0.2, 0.0), (0.1, -0.4)]);
    let disp = Dispersion::nonrelativistic(0.4).unwrap();
    let z = kernel_series_complex(&a, &fs[0], &b, &fs[1], &disp, &c).unwrap();
    let real = kernel_smeared(
        &TimeProfile::MatsubaraSeries(a),
        &fs[0],
        &TimeProfile::MatsubaraSeries(b),
        &fs[1],
        &disp,
        &c,
    )
    .unwrap();
    assert!(z.im.abs() < 1e-14 * z.re.abs().max(1.0));
    assert_relative_eq!(z.re, real.re, max_relative = 1e-13);
}

#[test]
fn constant_profile_gives_zero_frequency_weight() {
    // int int C_h = beta * 2/h for unit constant profiles normalized to 1/beta
    let c = circle(3.0);
    let one = TimeProfile::constant(1.0 / c.beta).unwrap();
    for h in [0.2, 1.0, 7.0] {
        assert_relative_eq!(time_form(&one, &one, h, &c), 2.0 / (h * c.beta), max_relative = 1e-13);
        let quad = smear_against_delta(&|_| 1.0 / c.beta, 0.0, h, &c);
        // Simpson error is about (h dx)^4 / 180 at the kink
        assert_relative_eq!(quad, 2.0 / (h * c.beta), max_relative = 1e-8);
    }
}

#[test]
fn mixed_kernel_is_weighted_sum() {
    let c = circle(2.0);
    let mut r = rng(23);
    let fs = common::random_packets(&mut r, 2, 17);
    let p = TimeProfile::delta(0.2);
    let q = TimeProfile::delta(-0.5);
    let kind = DispersionKind::Relativistic;
    let mixed = kernel_mixed(&p, &fs[0], &q, &fs[1], &two_atom(), kind, &c).unwrap();
    let parts: Complex64 = [1.0, 2.0]
        .iter()
        .map(|&mu| kernel_smeared(&p, &fs[0], &q, &fs[1], &Dispersion::relativistic(mu).unwrap(), &c).unwrap() * 0.5)
        .sum();
    assert_relative_eq!(mixed.re, parts.re, max_relative = 1e-14);
}

#[test]
fn large_beta_h_stays_finite_and_continuous() {
    let c = circle(50.0);
    let below = covariance_scalar(13.999_999, 0.0, &c).unwrap();
    let above = covariance_scalar(14.000_001, 0.0, &c).unwrap();
    assert!(below.is_finite() && above.is_finite());
    assert_relative_eq!(below, above, max_relative = 1e-6);
    // beyond the crossover the kernel is e^{-h|t|}
    assert_relative_eq!(covariance_scalar(20.0, 0.1, &c).unwrap(), (-2.0f64).exp(), max_relative = 1e-14);
}

#[test]
fn high_dimensional_packet_pairing_is_positive() {
    let f = TestFunction::gaussian_packet(2, &[0.3, -0.2], 0.8, 21, 4.0).unwrap();
    let norm = inner_product(&f, &f).unwrap().re;
    assert!(norm > 0.0);
    let c = circle(1.0);
    let v = kernel_sharp(0.0, &f, 0.0, &f, &Dispersion::relativistic(1.0).unwrap(), &c).unwrap();
    assert!(v.re > 0.0 && v.im.abs() < 1e-14 * v.re);
}
