//! Confluent divided differences of order 1 and 2.
//!
//! Nodes closer than `1e-8·max(1, max|u|)` are merged and the derivative
//! limit is used. Between that and the function's own resolution scale (where
//! a difference quotient would lose digits to cancellation) the Hermite–Genocchi
//! integral of the derivative is used instead.

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// A scalar function with the derivatives a divided difference may need.
pub trait Differentiable {
    fn value(&self, u: f64) -> Result<f64>;
    fn derivative(&self, u: f64, order: usize) -> Result<f64>;
    /// Length scale below which difference quotients are replaced by
    /// integrals of the derivative. Zero means "always use quotients".
    fn resolution(&self, _u: f64) -> f64 {
        0.0
    }
}

pub const MERGE_TOL: f64 = 1e-8;

const GL_ORDER: usize = 12;

fn merge_scale(nodes: &[f64]) -> f64 {
    MERGE_TOL * nodes.iter().fold(1.0_f64, |m, u| m.max(u.abs()))
}

/// `g[u_0, ..., u_{m-1}]` for one to three nodes, in any order.
pub fn divided_difference<G: Differentiable + ?Sized>(g: &G, nodes: &[f64]) -> Result<f64> {
    if nodes.iter().any(|u| !u.is_finite()) {
        return Err(Error::invalid("nodes", "must be finite"));
    }
    let mut u = nodes.to_vec();
    u.sort_by(f64::total_cmp);
    let tol = merge_scale(&u);
    match u.len() {
        1 => g.value(u[0]),
        2 => first(g, u[0], u[1], tol),
        3 => second(g, u[0], u[1], u[2], tol),
        m => Err(Error::invalid("nodes", format!("need 1 to 3 nodes, got {m}"))),
    }
}

fn first<G: Differentiable + ?Sized>(g: &G, a: f64, b: f64, tol: f64) -> Result<f64> {
    let d = b - a;
    if d <= tol {
        return g.derivative(0.5 * (a + b), 1);
    }
    if d <= g.resolution(a).max(g.resolution(b)) {
        // ∫_0^1 g'(a + t d) dt
        let (x, w) = gauss_legendre(GL_ORDER);
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            acc += 0.5 * wi * g.derivative(a + 0.5 * (xi + 1.0) * d, 1)?;
        }
        return Ok(acc);
    }
    Ok((g.value(b)? - g.value(a)?) / d)
}

fn second<G: Differentiable + ?Sized>(g: &G, a: f64, b: f64, c: f64, tol: f64) -> Result<f64> {
    let spread = c - a;
    if spread <= tol {
        return Ok(0.5 * g.derivative((a + b + c) / 3.0, 2)?);
    }
    let res = g.resolution(a).max(g.resolution(b)).max(g.resolution(c));
    if spread <= res {
        // ∫∫_{x+y<=1} g''(a + x(b-a) + y(c-a)) dy dx with y = (1-x)s
        let (x, w) = gauss_legendre(GL_ORDER);
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let p = 0.5 * (xi + 1.0);
            for (yj, wj) in x.iter().zip(&w) {
                let q = (1.0 - p) * 0.5 * (yj + 1.0);
                acc += 0.25 * wi * wj * (1.0 - p) * g.derivative(a + p * (b - a) + q * (c - a), 2)?;
            }
        }
        return Ok(acc);
    }
    let left = first(g, a, b, tol)?;
    let right = first(g, b, c, tol)?;
    Ok((right - left) / spread)
}
