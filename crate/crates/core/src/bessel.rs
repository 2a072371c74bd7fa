//! Bessel functions `J0`, `J1` and the radial Fourier kernels
//! `Ω_n(z) = ∫_{S^{n-1}} e^{-i z ω_1} dω = (2π)^{n/2} z^{1-n/2} J_{n/2-1}(z)`.
//!
//! Power series up to `z = 12`, Hankel asymptotic expansion beyond. At the
//! switch both agree to about `1e-11`; the series loses digits to
//! cancellation (`~eps e^z`), the asymptotic series is limited by its
//! smallest term.

use std::f64::consts::{FRAC_PI_4, PI};

const SWITCH: f64 = 12.0;

fn series(nu: u32, z: f64) -> f64 {
    let q = -0.25 * z * z;
    let mut term = (0.5 * z).powi(nu as i32) / (1..=nu).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..200 {
        term *= q / (k as f64 * (k + nu) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > 3 {
            break;
        }
    }
    sum
}

/// Hankel expansion `J_nu(z) = sqrt(2/(πz)) (P cos χ - Q sin χ)`,
/// `χ = z - (nu/2 + 1/4)π`, truncated at the smallest term.
fn asymptotic(nu: u32, z: f64) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        // a_k(nu) / z^k
        if k > 0 {
            let m = (2 * k - 1) as f64;
            term *= (mu - m * m) / (k as f64 * 8.0 * z);
        }
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
    }
    let chi = z - (0.5 * nu as f64) * PI - FRAC_PI_4;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

pub fn j0(z: f64) -> f64 {
    let z = z.abs();
    if z <= SWITCH {
        series(0, z)
    } else {
        asymptotic(0, z)
    }
}

pub fn j1(z: f64) -> f64 {
    let s = z.signum();
    let z = z.abs();
    s * if z <= SWITCH { series(1, z) } else { asymptotic(1, z) }
}

/// Surface area `|S^{n-1}|`.
pub fn sphere_area(dim: usize) -> f64 {
    dim as f64 * crate::lattice::unit_ball_volume(dim)
}

/// `Ω_n(z)` for `n ∈ {2,..,5}`, `z ≥ 0`; `Ω_n(0) = |S^{n-1}|`.
pub fn radial_kernel(dim: usize, z: f64) -> f64 {
    let z = z.abs();
    if z < 0.5 {
        return small_kernel(dim, z);
    }
    match dim {
        2 => 2.0 * PI * j0(z),
        3 => 4.0 * PI * z.sin() / z,
        4 => 4.0 * PI * PI * j1(z) / z,
        5 => 8.0 * PI * PI * (z.sin() - z * z.cos()) / (z * z * z),
        _ => panic!("radial kernel for dimension {dim}"),
    }
}

// |S^{n-1}| Σ_k (-z²/4)^k Γ(n/2) / (k! Γ(n/2+k))
fn small_kernel(dim: usize, z: f64) -> f64 {
    let half = 0.5 * dim as f64;
    let q = -0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        term *= q / (k as f64 * (half + k as f64 - 1.0));
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sphere_area(dim) * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive;

    // J_nu(z) = (1/π) ∫_0^π cos(nu θ - z sin θ) dθ
    fn bessel_integral(nu: f64, z: f64) -> f64 {
        adaptive(|t| (nu * t - z * t.sin()).cos(), 0.0, PI, 1e-14, 1e-14, 20_000).unwrap().0 / PI
    }

    #[test]
    fn against_integral_representation() {
        for &z in &[0.0, 0.3, 1.0, 2.404825557695773, 5.0, 11.9, 12.1, 20.0, 55.5, 300.0] {
            assert!((j0(z) - bessel_integral(0.0, z)).abs() < 2e-11, "j0({z})");
            assert!((j1(z) - bessel_integral(1.0, z)).abs() < 2e-11, "j1({z})");
        }
        assert!(j0(2.404825557695773).abs() < 1e-12);
    }

    #[test]
    fn branches_agree_at_switch() {
        for nu in [0, 1] {
            let d = (series(nu, SWITCH) - asymptotic(nu, SWITCH)).abs();
            assert!(d < 5e-11, "nu={nu}: {d}");
        }
    }

    #[test]
    fn kernels_match_spherical_average() {
        // n = 3: ∫_{S^2} e^{-i z ω_1} = 2π ∫_0^π cos(z cos θ) sin θ dθ
        for &z in &[0.0, 0.2, 0.49, 0.51, 3.0, 17.0] {
            let k3 = 2.0 * PI * adaptive(|t| (z * t.cos()).cos() * t.sin(), 0.0, PI, 1e-14, 1e-14, 10_000).unwrap().0;
            assert!((radial_kernel(3, z) - k3).abs() < 1e-11, "n=3 z={z}");
            let s3 = 2.0 * PI * PI;
            let k5 = s3 * adaptive(|t| (z * t.cos()).cos() * t.sin().powi(3), 0.0, PI, 1e-14, 1e-14, 10_000).unwrap().0;
            assert!((radial_kernel(5, z) - k5).abs() < 1e-10, "n=5 z={z}");
            let k4 = 4.0 * PI * adaptive(|t| (z * t.cos()).cos() * t.sin().powi(2), 0.0, PI, 1e-14, 1e-14, 10_000).unwrap().0;
            assert!((radial_kernel(4, z) - k4).abs() < 1e-10, "n=4 z={z}");
            let k2 = 2.0 * adaptive(|t| (z * t.cos()).cos(), 0.0, PI, 1e-14, 1e-14, 10_000).unwrap().0;
            assert!((radial_kernel(2, z) - k2).abs() < 1e-10, "n=2 z={z}");
        }
        for n in 2..=5 {
            assert!((radial_kernel(n, 0.0) - sphere_area(n)).abs() < 1e-13);
        }
    }
}
