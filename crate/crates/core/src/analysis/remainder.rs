//! Pointwise Weyl remainders and the perturbation difference `D(λ, x)`.

use std::f64::consts::PI;

use super::mollifier::MollifierSpec;
use super::sums::free_mollified_diag;
use super::Mode;
use crate::error::Result;
use crate::lattice::unit_ball_volume;
use crate::spectral::{Flagged, Flags, SpectralData};

/// `1_λ(P_V)(x,x)` or `h(P_V)(x,x)`.
pub fn spectral_diag(s: &SpectralData, spec: &MollifierSpec, x: &[f64], mode: Mode) -> Result<Flagged<f64>> {
    let lambda = spec.lambda();
    match mode {
        Mode::Indicator => s.projector_diag(lambda, x),
        Mode::Mollified => {
            let value = s.weighted_diag(x, |tau| spec.h(tau))?;
            let mut flags = Flags::empty();
            if lambda > s.reliability_cutoff() * (1.0 + 1e-12) {
                flags |= Flags::BEYOND_RELIABILITY;
            }
            Ok(Flagged::new(value, flags))
        }
    }
}

/// `R(λ, x) = diag - (2π)^{-n} ω_n λ^n`.
pub fn pointwise_remainder(s: &SpectralData, spec: &MollifierSpec, x: &[f64], mode: Mode) -> Result<Flagged<f64>> {
    let n = s.dim();
    let d = spectral_diag(s, spec, x, mode)?;
    let weyl = (2.0 * PI).powi(-(n as i32)) * unit_ball_volume(n) * spec.lambda().powi(n as i32);
    Ok(Flagged::new(d.value - weyl, d.flags))
}

/// Same-basis free counterpart: `(2π)^{-n} N⁰(λ)` or `(2π)^{-n} Σ_j h(|j|)`.
pub fn free_diag(s: &SpectralData, spec: &MollifierSpec, mode: Mode) -> f64 {
    let basis = s.basis();
    match mode {
        Mode::Indicator => {
            let bound = spec.lambda().powi(2) * (1.0 + 1e-10);
            let count = basis.norms_sq().partition_point(|&m| (m as f64) <= bound);
            (2.0 * PI).powi(-(basis.dim() as i32)) * count as f64
        }
        Mode::Mollified => free_mollified_diag(basis, spec),
    }
}

/// `D(λ, x) = diag(H_V) - diag(H⁰)` on the same truncation; the lattice
/// remainder of the free operator cancels exactly.
pub fn perturbation_difference(s: &SpectralData, spec: &MollifierSpec, x: &[f64], mode: Mode) -> Result<Flagged<f64>> {
    let d = spectral_diag(s, spec, x, mode)?;
    Ok(Flagged::new(d.value - free_diag(s, spec, mode), d.flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{count_ball, enumerate_ball};
    use crate::potential::FourierTable;
    use crate::spectral::{assemble, eigensolve, SpectralOptions};
    use std::sync::Arc;

    fn free(cutoff: f64) -> SpectralData {
        let basis = Arc::new(enumerate_ball(2, cutoff).unwrap());
        let mut t = FourierTable::zero(2);
        let h = assemble(basis, &mut t, &[0.0, 0.0]).unwrap();
        eigensolve(&h, &SpectralOptions::default()).unwrap()
    }

    #[test]
    fn free_remainder_is_the_lattice_remainder() {
        let s = free(21.0);
        let spec = MollifierSpec::new(10.0, 0.5, None).unwrap();
        let expected = (317.0 - 100.0 * PI) / (4.0 * PI * PI);
        for x in [[0.0, 0.0], [1.3, -0.4], [3.0, 5.5]] {
            let r = pointwise_remainder(&s, &spec, &x, Mode::Indicator).unwrap();
            assert!((r.value - expected).abs() < 1e-11, "{} vs {expected}", r.value);
            assert!(r.flags.is_empty());
            assert_eq!(perturbation_difference(&s, &spec, &x, Mode::Indicator).unwrap().value.abs() < 1e-12, true);
            assert!(perturbation_difference(&s, &spec, &x, Mode::Mollified).unwrap().value.abs() < 1e-12);
        }
        assert_eq!(count_ball(2, 10.0).unwrap(), 317);
    }

    #[test]
    fn below_the_spectrum_and_additivity() {
        let s = free(8.0);
        // τ_min = 0, so take λ below the first nonzero and compare with j = 0 only
        let spec = MollifierSpec::new(0.5, 0.5, None).unwrap();
        let r = pointwise_remainder(&s, &spec, &[0.0, 0.0], Mode::Indicator).unwrap();
        let expected = (1.0 - PI * 0.25) / (4.0 * PI * PI);
        assert!((r.value - expected).abs() < 1e-12);

        let spec = MollifierSpec::new(3.0, 0.5, None).unwrap();
        let x = [0.2, 0.9];
        let moll = pointwise_remainder(&s, &spec, &x, Mode::Mollified).unwrap().value;
        let ind = pointwise_remainder(&s, &spec, &x, Mode::Indicator).unwrap().value;
        let diff = s.weighted_diag(&x, |t| spec.h(t) - if t <= 3.0 * (1.0 + 1e-10) { 1.0 } else { 0.0 }).unwrap();
        assert!((moll - ind - diff).abs() < 1e-12);

        let spec = MollifierSpec::new(7.9, 0.5, None).unwrap();
        assert!(pointwise_remainder(&s, &spec, &x, Mode::Indicator).unwrap().flags.contains(Flags::BEYOND_RELIABILITY));
    }
}
