//! Scalar identities behind the Duhamel expansion of `cos(tP)`.
//!
//! With `c(u) = cos(t√u)`:
//!
//! * `∫_0^t sin((t-s)μ)/μ · cos(sτ) ds = (cos tτ - cos tμ)/(μ² - τ²) = -c[τ², μ²]`
//! * the doubly nested integral with frequencies `a₁, a₂` acting on
//!   `cos(r a₃)` equals `c[a₁², a₂², a₃²]`.
//!
//! `m(τ, μ)` below is `c[τ², μ²]` itself, so it is the *negative* of the
//! single integral; this keeps the coincidence value `-t sin(tτ)/(2τ)`.

use std::cell::Cell;

use super::divided::{divided_difference, Differentiable};
use crate::error::{Error, Result};
use crate::quadrature::adaptive;

/// `sin z / z`.
pub fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// `(z cos z - sin z)/z³`, the derivative of `sinc` divided by `z`.
fn sinc_prime_over_z(z: f64) -> f64 {
    if z.abs() < 0.05 {
        let z2 = z * z;
        -1.0 / 3.0 + z2 / 30.0 - z2 * z2 / 840.0 + z2 * z2 * z2 / 45360.0
    } else {
        (z * z.cos() - z.sin()) / (z * z * z)
    }
}

/// `m(τ, μ) = (cos tτ - cos tμ)/(τ² - μ²) = -(t²/2) sinc(t(τ+μ)/2) sinc(t(τ-μ)/2)`,
/// continuous across `τ = μ` and at 0.
pub fn trig_kernel(t: f64, tau: f64, mu: f64) -> f64 {
    -0.5 * t * t * sinc(0.5 * t * (tau + mu)) * sinc(0.5 * t * (tau - mu))
}

/// `∫_0^t sin((t-s)μ)/μ · cos(sτ) ds` in closed form (`= -m(τ, μ)`).
pub fn duhamel_integral(t: f64, tau: f64, mu: f64) -> f64 {
    -trig_kernel(t, tau, mu)
}

/// `c(u) = cos(t√u)` on `u >= 0`.
#[derive(Debug, Clone, Copy)]
pub struct CosSqrt {
    pub t: f64,
}

impl Differentiable for CosSqrt {
    fn value(&self, u: f64) -> Result<f64> {
        Ok((self.t * u.max(0.0).sqrt()).cos())
    }

    fn derivative(&self, u: f64, order: usize) -> Result<f64> {
        let t = self.t;
        let z = t * u.max(0.0).sqrt();
        match order {
            0 => self.value(u),
            1 => Ok(-0.5 * t * t * sinc(z)),
            2 => Ok(-0.25 * t.powi(4) * sinc_prime_over_z(z)),
            _ => Err(Error::DerivativeUnavailable(order)),
        }
    }

    fn resolution(&self, u: f64) -> f64 {
        if self.t == 0.0 {
            return f64::INFINITY;
        }
        0.25 * (1.0 / (self.t * self.t)).max(u.max(0.0).sqrt() / self.t)
    }
}

/// Closed form of the nested integral
/// `∫_0^t sin((t-s)a₁)/a₁ ∫_0^s sin((s-r)a₂)/a₂ cos(r a₃) dr ds`.
pub fn double_duhamel_closed(t: f64, a1: f64, a2: f64, a3: f64) -> Result<f64> {
    divided_difference(&CosSqrt { t }, &[a1 * a1, a2 * a2, a3 * a3])
}

/// `sin(xa)/a`, continuous at `a = 0`.
fn sin_over(x: f64, a: f64) -> f64 {
    x * sinc(x * a)
}

const ABS_TOL: f64 = 1e-14;
const REL_TOL: f64 = 1e-13;
const MAX_INTERVALS: usize = 4000;

/// `|closed form - adaptive quadrature|` for the single integral.
pub fn trig_identity_check(t: f64, tau: f64, mu: f64) -> Result<f64> {
    let (q, _) = adaptive(|s| sin_over(t - s, mu) * (s * tau).cos(), 0.0, t, ABS_TOL, REL_TOL, MAX_INTERVALS)?;
    Ok((duhamel_integral(t, tau, mu) - q).abs())
}

/// Nested adaptive quadrature of the double integral.
pub fn double_duhamel_quadrature(t: f64, a1: f64, a2: f64, a3: f64) -> Result<f64> {
    let failure: Cell<Option<Error>> = Cell::new(None);
    let outer = adaptive(
        |s| {
            let inner = adaptive(|r| sin_over(s - r, a2) * (r * a3).cos(), 0.0, s, 0.1 * ABS_TOL, REL_TOL, MAX_INTERVALS);
            match inner {
                Ok((v, _)) => sin_over(t - s, a1) * v,
                Err(e) => {
                    failure.set(Some(e));
                    0.0
                }
            }
        },
        0.0,
        t,
        ABS_TOL,
        REL_TOL,
        MAX_INTERVALS,
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(outer.0),
    }
}

/// `|closed form - nested quadrature|`.
pub fn double_duhamel_identity_check(t: f64, a1: f64, a2: f64, a3: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let closed = double_duhamel_closed(t, a1, a2, a3)?;
    let quad = double_duhamel_quadrature(t, a1, a2, a3)?;
    Ok((closed - quad).abs())
}
