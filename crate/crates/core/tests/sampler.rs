//! Reproducibility and small-sample statistics of the sampler.

mod common;

use thermal_kms::greens::{Argument, GreenFunctional, MixtureSpec, QuasiFreeSpec};
use thermal_kms::kernel::{SpectralMeasure, ThermalCircle};
use thermal_kms::sampler::{
    atom_frequencies, empirical_green, empirical_moment, pairwise_sum, sample_gaussian, sample_mixture, Sampler,
    CHUNK,
};
use thermal_kms::spectral::{Dispersion, DispersionKind};

use common::{rng, two_atom, zero_mode};

fn circle() -> ThermalCircle {
    ThermalCircle::new(2.0).unwrap()
}

fn points() -> Vec<Argument> {
    [0.0, 0.3, -0.55].iter().map(|&t| Argument::sharp(t, zero_mode())).collect()
}

#[test]
fn same_seed_same_draws() {
    let kind = DispersionKind::Nonrelativistic;
    let a = sample_mixture(&two_atom(), kind, &circle(), &points(), 5000, 3).unwrap();
    let b = sample_mixture(&two_atom(), kind, &circle(), &points(), 5000, 3).unwrap();
    let c = sample_mixture(&two_atom(), kind, &circle(), &points(), 5000, 4).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.atoms, b.atoms);
    assert_ne!(a.draws, c.draws);
}

#[test]
fn draws_do_not_depend_on_chunking() {
    let s = Sampler::mixture(&two_atom(), DispersionKind::Relativistic, &circle(), &points()).unwrap();
    let n = 3 * CHUNK as u64 + 17;
    let (all, all_atoms) = s.draw_range(9, 0..n);
    let split = CHUNK as u64 + 5;
    let (head, head_atoms) = s.draw_range(9, 0..split);
    let (tail, tail_atoms) = s.draw_range(9, split..n);
    assert_eq!(all, [head, tail].concat());
    assert_eq!(all_atoms, [head_atoms, tail_atoms].concat());
    // a prefix of a longer run is the shorter run
    assert_eq!(s.sample(100, 9).draws, all[..100 * 3]);
}

#[test]
fn dirac_mixture_is_the_gaussian_sampler() {
    let mu = 1.3;
    let kind = DispersionKind::Nonrelativistic;
    let mix = sample_mixture(&SpectralMeasure::dirac(mu).unwrap(), kind, &circle(), &points(), 2000, 17).unwrap();
    let spec = QuasiFreeSpec::free(Dispersion::nonrelativistic(mu).unwrap(), circle());
    let gauss = sample_gaussian(&spec, &points(), 2000, 17).unwrap();
    assert_eq!(mix.draws, gauss.draws);
    assert!(mix.atoms.is_none());
}

#[test]
fn moments_and_characteristic_within_five_sigma() {
    let c = circle();
    let mut r = rng(31);
    let fs = common::random_packets(&mut r, 2, 17);
    let pts = vec![Argument::sharp(0.1, fs[0].clone()), Argument::sharp(-0.6, fs[1].clone())];
    let spec = QuasiFreeSpec::free(Dispersion::relativistic(0.5).unwrap(), c);
    let batch = sample_gaussian(&spec, &pts, 100_000, 5).unwrap();
    for idx in [vec![0], vec![0, 0], vec![0, 1], vec![1, 1], vec![0, 0, 1], vec![0, 0, 1, 1]] {
        let args: Vec<Argument> = idx.iter().map(|&i| pts[i].clone()).collect();
        let est = empirical_moment(&batch, &idx).unwrap();
        assert!(est.within(spec.moment(&args).unwrap().re, 5.0), "{idx:?}: {est:?}");
    }
    let coeffs = [0.7, -0.4];
    let scaled: Vec<Argument> = pts.iter().zip(coeffs).map(|(p, a)| p.scaled(a)).collect();
    let g = empirical_green(&batch, &coeffs).unwrap();
    assert!(g.within(spec.characteristic(&scaled).unwrap(), 5.0), "{g:?}");
}

#[test]
fn mixture_atom_frequencies_follow_weights() {
    let measure = SpectralMeasure::from_pairs(0.5, &[(1.0, 0.2), (2.0, 0.3), (4.0, 0.5)]).unwrap();
    let n = 200_000;
    let batch = sample_mixture(&measure, DispersionKind::Nonrelativistic, &circle(), &points(), n, 8).unwrap();
    let freq = atom_frequencies(&batch);
    for (f, w) in freq.iter().zip([0.2, 0.3, 0.5]) {
        let sd = (w * (1.0 - w) / n as f64).sqrt();
        assert!((f - w).abs() < 5.0 * sd, "{f} vs {w}");
    }
    let g = MixtureSpec::new(measure, DispersionKind::Nonrelativistic, circle());
    let est = empirical_moment(&batch, &[0, 0]).unwrap();
    assert!(est.within(g.moment(&[points()[0].clone(), points()[0].clone()]).unwrap().re, 5.0));
}

#[test]
fn pairwise_sum_is_accurate() {
    let values = vec![0.1; 3 * CHUNK + 1];
    let exact = 0.1 * (3 * CHUNK + 1) as f64;
    assert!((pairwise_sum(&values) - exact).abs() < 1e-12 * exact);
    assert_eq!(pairwise_sum(&[]), 0.0);
}

#[test]
fn delimited_output_has_header_and_rows() {
    let batch = sample_mixture(&two_atom(), DispersionKind::Nonrelativistic, &circle(), &points(), 10, 1).unwrap();
    let mut out = Vec::new();
    batch.write_delimited(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.contains(&"# seed=1"));
    assert!(lines.iter().any(|l| l.starts_with("# model={")));
    assert!(lines.contains(&"x0,x1,x2,atom"));
    let rows: Vec<&&str> = lines.iter().filter(|l| !l.starts_with('#') && !l.starts_with('x')).collect();
    assert_eq!(rows.len(), 10);
    let first: Vec<f64> = rows[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(&first[..3], batch.draw(0));
}
