use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use weyllab_core::analysis::{divided_difference, fit_exponent, perturbation_difference, MollifierSpec, Mode};
use weyllab_core::analysis::trig::{trig_kernel, CosSqrt};
use weyllab_core::bump::BumpVariant;
use weyllab_core::diagnostics::{band_ratio, default_x_grid, GRID_ENTRY_CAP};
use weyllab_core::lattice::{count_ball, enumerate_ball, shell_multiplicity};
use weyllab_core::potential::{FourierTable, RadialSingularPotential};
use weyllab_core::spectral::{assemble, eigensolve, SpectralData, SpectralOptions};

fn solve(dim: usize, cutoff: f64, eta: f64, gamma: f64) -> SpectralData {
    let v = RadialSingularPotential::standard(dim, eta, BumpVariant::Rho).unwrap().with_gamma(gamma);
    let mut t = FourierTable::for_potential(&v);
    let basis = Arc::new(enumerate_ball(dim, cutoff).unwrap());
    let h = assemble(basis, &mut t, v.center()).unwrap();
    eigensolve(&h, &SpectralOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ball_count_is_the_sum_of_shells(dim in 2usize..=4, r in 0.0..9.0f64) {
        let m = (r * r).floor() as u64;
        let by_shell: u64 = (0..=m).map(|k| shell_multiplicity(dim, k).unwrap()).sum();
        prop_assert_eq!(count_ball(dim, r).unwrap(), by_shell);
        let basis = enumerate_ball(dim, r).unwrap();
        prop_assert_eq!(basis.len() as u64, by_shell);
        prop_assert!(basis.norms_sq().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mollifier_is_even_and_plateaus(lambda in 50.0..5000.0f64, eta in 0.3..0.95f64, s in 0.0..1.0f64) {
        // small η gives windows wider than λ/2, which the constructor rejects
        let spec = MollifierSpec::new(lambda, eta, None);
        prop_assume!(spec.is_ok());
        let spec = spec.unwrap();
        let tau = s * lambda;
        prop_assert!((spec.h(tau) - spec.h(-tau)).abs() <= 1e-12);
        prop_assert!(spec.h(tau).abs() < 1.1);
        // far outside the window the weight has decayed
        prop_assert!(spec.h(lambda + 200.0 * spec.width()).abs() < 1e-6);
    }

    #[test]
    fn cos_sqrt_divided_difference_is_the_trig_kernel(t in 0.05..4.0f64, tau in 0.0..6.0f64, mu in 0.0..6.0f64) {
        let dd = divided_difference(&CosSqrt { t }, &[tau * tau, mu * mu]).unwrap();
        let k = trig_kernel(t, tau, mu);
        prop_assert!((dd - k).abs() <= 1e-9 * k.abs().max(t * t));
    }

    #[test]
    fn fit_ignores_scale(p in -2.0..3.0f64, c in 1e-3..1e3f64) {
        let pts: Vec<(f64, f64)> = (1..=8).map(|i| {
            let l = 4.0 * i as f64;
            (l, l.powf(p) * (1.0 + 0.05 * (i as f64).cos()))
        }).collect();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(l, v)| (l, -c * v)).collect();
        let a = fit_exponent(&pts, None).unwrap();
        let b = fit_exponent(&scaled, None).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-10);
        prop_assert!((b.prefactor() / a.prefactor() - c).abs() < 1e-8 * c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn projector_diagonal_is_monotone_and_averages_to_the_count(
        gamma in -1.0..1.0f64,
        eta in 0.2..0.9f64,
        x in 0.0..(2.0 * PI),
        y in 0.0..(2.0 * PI),
    ) {
        let s = solve(2, 5.0, eta, gamma);
        let mut last = 0.0;
        for l in [0.5, 1.0, 1.5, 2.0, 2.5] {
            let p = s.projector_diag(l, &[x, y]).unwrap().value;
            prop_assert!(p >= last - 1e-12);
            last = p;
        }
        // all modes: the diagonal of the identity, (2π)^{-n} Σ|e_j|² · N
        let total = s.weighted_diag(&[x, y], |_| 1.0).unwrap();
        prop_assert!((total - s.len() as f64 / (4.0 * PI * PI)).abs() < 1e-10);
    }
}

#[test]
fn free_operator_has_no_perturbation_difference() {
    let s = solve(2, 12.0, 0.5, 0.0);
    for l in [2.0, 3.5, 5.0] {
        let spec = MollifierSpec::new(l, 0.5, None).unwrap();
        for x in [[0.0, 0.0], [1.0, 2.5]] {
            for mode in [Mode::Indicator, Mode::Mollified] {
                assert!(perturbation_difference(&s, &spec, &x, mode).unwrap().value.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn free_band_sum_is_independent_of_the_point() {
    let s = solve(2, 16.0, 0.5, 0.0);
    let grid = default_x_grid(&[0.0, 0.0], 8, s.len(), GRID_ENTRY_CAP);
    let r = band_ratio(&s, 5.0, &grid).unwrap();
    let first = r.grid[0].ratio;
    for g in &r.grid {
        assert!((g.ratio - first).abs() <= 1e-12 * first);
    }
}

#[test]
fn fourier_table_csv_round_trip() {
    let v = RadialSingularPotential::standard(3, 0.5, BumpVariant::Chi).unwrap();
    let mut t = FourierTable::for_potential(&v);
    t.ensure_covering(40).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let back = FourierTable::read_csv(3, 0.5, buf.as_slice()).unwrap();
    assert_eq!(back.entries(), t.entries());
}
