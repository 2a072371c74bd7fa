//! The smoothed indicator `h(τ) = (1/π) ∫ φ(t w) sin(λt)/t cos(tτ) dt` with
//! window `w = λ^{1-η-ε}`.
//!
//! Since `h = 1_{[-λ,λ]} * κ_w` with `κ_w(s) = κ₁(s/w)/w` and
//! `κ₁(s) = (1/π) ∫_0^1 φ(u) cos(us) du`, everything reduces to one
//! tabulation of `Φ₁(s) = 1/2 + A(s)`, `A(s) = (1/π) ∫_0^1 φ(u) sin(us)/u du`,
//! and of `κ₁` with its first three derivatives on `s ∈ [0, S_MAX]`, read back
//! by cubic Hermite interpolation. Beyond `S_MAX` the kernel is below `1e-12`
//! and `Φ₁` is taken as exactly 0 or 1.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::bump::plateau;
use crate::error::{Error, Result};
use crate::quadrature::{composite, gauss_legendre, Rule};

pub const S_MAX: f64 = 800.0;
const STEP: f64 = 0.02;

/// Default φ: the plateau bump of support 1, so `1_{[-1/2,1/2]} <= φ <= 1_{[-1,1]}`.
pub fn phi(u: f64) -> f64 {
    plateau(u, 1.0)
}

fn phi_rule(freq: f64) -> Rule {
    let breaks: Vec<f64> = std::iter::once(0.0).chain((4..=8).map(|i| i as f64 / 8.0)).collect();
    composite(&breaks, 16, freq, 12.0, 0)
}

/// Tabulated `A, κ₁, κ₁', κ₁'', κ₁'''` on a uniform grid.
struct KernelTable {
    // per node: [A, κ, κ', κ'', κ''']
    values: Vec<[f64; 5]>,
}

fn kernel_table() -> &'static KernelTable {
    static TABLE: OnceLock<KernelTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let rule = phi_rule(S_MAX);
        let weights: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&u, &w)| (u, w * phi(u) / PI))
            .collect();
        let count = (S_MAX / STEP).round() as usize + 1;
        let values = (0..count)
            .into_par_iter()
            .map(|i| {
                let s = i as f64 * STEP;
                let mut out = [0.0; 5];
                for &(u, w) in &weights {
                    let (sn, cs) = (u * s).sin_cos();
                    out[0] += w * sn / u;
                    out[1] += w * cs;
                    out[2] -= w * u * sn;
                    out[3] -= w * u * u * cs;
                    out[4] += w * u * u * u * sn;
                }
                out
            })
            .collect();
        KernelTable { values }
    })
}

impl KernelTable {
    /// Hermite interpolation of column `col` (using `col + 1` as derivative)
    /// at `s >= 0`, inside the table.
    fn hermite(&self, col: usize, s: f64) -> f64 {
        let x = s / STEP;
        let i = (x as usize).min(self.values.len() - 2);
        let t = x - i as f64;
        let (p0, p1) = (self.values[i][col], self.values[i + 1][col]);
        let (m0, m1) = (self.values[i][col + 1] * STEP, self.values[i + 1][col + 1] * STEP);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }
}

/// `Φ₁(s) = ∫_{-∞}^s κ₁`.
pub fn unit_cdf(s: f64) -> f64 {
    let a = s.abs();
    let half = if a >= S_MAX { 0.5 } else { kernel_table().hermite(0, a) };
    0.5 + half.copysign(s)
}

/// `κ₁^{(d)}(s)` for `d <= 2` (interpolated), `d = 3` by direct quadrature.
pub fn unit_kernel(s: f64, d: usize) -> Result<f64> {
    let a = s.abs();
    // κ₁ is even, so derivative d has parity (-1)^d
    let sign = if d % 2 == 1 && s < 0.0 { -1.0 } else { 1.0 };
    let v = match d {
        0..=2 if a >= S_MAX => 0.0,
        0..=2 => kernel_table().hermite(d + 1, a),
        3 => unit_kernel_direct(a, 3),
        _ => return Err(Error::DerivativeUnavailable(d)),
    };
    Ok(sign * v)
}

fn unit_kernel_direct(s: f64, d: usize) -> f64 {
    let rule = phi_rule(s.max(1.0));
    rule.integrate(|u| {
        let (sn, cs) = (u * s).sin_cos();
        let base = match d % 4 {
            0 => cs,
            1 => -sn,
            2 => -cs,
            _ => sn,
        };
        phi(u) * u.powi(d as i32) * base / PI
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    lambda: f64,
    eta: f64,
    epsilon: f64,
    w: f64,
    h2_zero: f64,
    h4_zero: f64,
}

/// `min(η, 1-η)/20`.
pub fn default_epsilon(eta: f64) -> f64 {
    eta.min(1.0 - eta) / 20.0
}

impl MollifierSpec {
    pub fn new(lambda: f64, eta: f64, epsilon: Option<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid("eta", format!("eta in (0,1) violated: {eta}")));
        }
        let epsilon = epsilon.unwrap_or_else(|| default_epsilon(eta));
        let emax = eta.min(1.0 - eta) / 10.0;
        if !(epsilon > 0.0 && epsilon < emax) {
            return Err(Error::invalid(
                "epsilon",
                format!("epsilon in (0, min(eta,1-eta)/10) = (0, {emax}) violated: {epsilon}"),
            ));
        }
        let w = lambda.powf(1.0 - eta - epsilon);
        if lambda >= 4.0 && !(w >= 1.0 && w <= 0.5 * lambda) {
            return Err(Error::invalid(
                "lambda",
                format!("window width w = {w} must satisfy 1 <= w <= lambda/2"),
            ));
        }
        let x = lambda / w;
        let h2_zero = 2.0 * unit_kernel(x, 1)? / (w * w);
        let h4_zero = 2.0 * unit_kernel(x, 3)? / w.powi(4);
        Ok(Self {
            lambda,
            eta,
            epsilon,
            w,
            h2_zero,
            h4_zero,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    /// Window width `w = λ^{1-η-ε}`.
    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn h(&self, tau: f64) -> f64 {
        unit_cdf((tau + self.lambda) / self.w) - unit_cdf((tau - self.lambda) / self.w)
    }

    /// `h^{(d)}(τ)` for `d <= 3`.
    pub fn derivative(&self, tau: f64, d: usize) -> Result<f64> {
        if d == 0 {
            return Ok(self.h(tau));
        }
        if d > 3 {
            return Err(Error::DerivativeUnavailable(d));
        }
        let a = unit_kernel((tau + self.lambda) / self.w, d - 1)?;
        let b = unit_kernel((tau - self.lambda) / self.w, d - 1)?;
        Ok((a - b) / self.w.powi(d as i32))
    }

    /// `h''(0) = 2κ_w'(λ)`.
    pub fn h2_at_zero(&self) -> f64 {
        self.h2_zero
    }
    /// `h''''(0) = 2κ_w'''(λ)`.
    pub fn h4_at_zero(&self) -> f64 {
        self.h4_zero
    }

    /// `g(u) = h(√u)` as a differentiable scalar function.
    pub fn sqrt_composite(&self) -> SqrtComposite<'_> {
        SqrtComposite { spec: self }
    }
}

/// `g(u) = h(√u)`, the function whose divided differences give the R₁ and R₂
/// coefficients.
pub struct SqrtComposite<'a> {
    spec: &'a MollifierSpec,
}

const GL_SMALL: usize = 16;

impl SqrtComposite<'_> {
    fn root(u: f64) -> Result<f64> {
        if u < -1e-9 {
            return Err(Error::Precondition(format!("g(u) = h(√u) needs u >= 0, got {u}")));
        }
        Ok(u.max(0.0).sqrt())
    }
}

impl super::divided::Differentiable for SqrtComposite<'_> {
    fn value(&self, u: f64) -> Result<f64> {
        Ok(self.spec.h(Self::root(u)?))
    }

    fn derivative(&self, u: f64, order: usize) -> Result<f64> {
        let s = Self::root(u)?;
        let w = self.spec.w;
        let (x, wt) = gauss_legendre(GL_SMALL);
        match order {
            0 => self.value(u),
            // g' = h'(s)/(2s) = (1/2) ∫_0^1 h''(sv) dv
            1 if s < w => {
                let mut acc = 0.0;
                for (xi, wi) in x.iter().zip(&wt) {
                    acc += 0.5 * wi * self.spec.derivative(0.5 * s * (xi + 1.0), 2)?;
                }
                Ok(0.5 * acc)
            }
            1 => Ok(self.spec.derivative(s, 1)? / (2.0 * s)),
            // g'' = (s h'' - h')/(4 s^3) = (1/(4s)) ∫_0^1 v h'''(sv) dv
            2 if s == 0.0 => Ok(self.spec.h4_zero / 12.0),
            2 if s < w => {
                let mut acc = 0.0;
                for (xi, wi) in x.iter().zip(&wt) {
                    let v = 0.5 * (xi + 1.0);
                    acc += 0.5 * wi * v * self.spec.derivative(s * v, 3)?;
                }
                Ok(acc / (4.0 * s))
            }
            2 => {
                let h1 = self.spec.derivative(s, 1)?;
                let h2 = self.spec.derivative(s, 2)?;
                Ok((s * h2 - h1) / (4.0 * s * s * s))
            }
            _ => Err(Error::DerivativeUnavailable(order)),
        }
    }

    fn resolution(&self, u: f64) -> f64 {
        let w = self.spec.w;
        0.25 * w * w.max(u.max(0.0).sqrt())
    }
}
