//! Smooth compactly supported radial profiles.
//!
//! The plateau bump equals 1 on `[0, a/2]` and falls to 0 at `a` through
//! `ψ(t) = f(1-t) / (f(1-t) + f(t))`, `f(t) = e^{-1/t}`, a piecewise-analytic
//! C^∞ step. The χ-variant is the normalised n-dimensional autocorrelation of a
//! plateau bump of radius `a/2`, so its Fourier transform is `|b̂|^2 ≥ 0`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::sphere_area;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

fn f_exp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step from 1 at `t <= 0` to 0 at `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = f_exp(1.0 - t);
        a / (a + f_exp(t))
    }
}

/// Plateau bump of support radius `a`, evaluated at `|r|`.
pub fn plateau(r: f64, a: f64) -> f64 {
    let r = r.abs();
    let half = 0.5 * a;
    if r <= half {
        1.0
    } else if r >= a {
        0.0
    } else {
        smooth_step((r - half) / half)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BumpVariant {
    /// General cut-off ρ: plateau bump.
    Rho,
    /// Autocorrelation with nonnegative Fourier transform.
    Chi,
}

#[derive(Clone)]
pub struct BumpProfile {
    support_radius: f64,
    variant: BumpVariant,
    table: Option<Arc<ChebyshevTable>>,
}

impl std::fmt::Debug for BumpProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BumpProfile")
            .field("support_radius", &self.support_radius)
            .field("variant", &self.variant)
            .finish()
    }
}

impl PartialEq for BumpProfile {
    fn eq(&self, other: &Self) -> bool {
        self.support_radius == other.support_radius && self.variant == other.variant
    }
}

fn check_radius(a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 && a < std::f64::consts::PI {
        Ok(())
    } else {
        Err(Error::invalid("support_radius", format!("{a} must lie in (0, π)")))
    }
}

impl BumpProfile {
    pub fn rho(support_radius: f64) -> Result<Self> {
        check_radius(support_radius)?;
        Ok(Self {
            support_radius,
            variant: BumpVariant::Rho,
            table: None,
        })
    }

    /// χ-variant for dimension `dim`; tables are shared between calls.
    pub fn chi(support_radius: f64, dim: usize) -> Result<Self> {
        check_radius(support_radius)?;
        crate::lattice::check_dim(dim)?;
        static TABLES: OnceLock<Mutex<HashMap<(usize, u64), Arc<ChebyshevTable>>>> = OnceLock::new();
        let tables = TABLES.get_or_init(Default::default);
        let key = (dim, support_radius.to_bits());
        let cached = tables.lock().unwrap().get(&key).cloned();
        let table = match cached {
            Some(t) => t,
            None => {
                let t = Arc::new(autocorrelation_table(dim, support_radius));
                tables.lock().unwrap().insert(key, t.clone());
                t
            }
        };
        Ok(Self {
            support_radius,
            variant: BumpVariant::Chi,
            table: Some(table),
        })
    }

    pub fn new(variant: BumpVariant, support_radius: f64, dim: usize) -> Result<Self> {
        match variant {
            BumpVariant::Rho => Self::rho(support_radius),
            BumpVariant::Chi => Self::chi(support_radius, dim),
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn variant(&self) -> BumpVariant {
        self.variant
    }

    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.support_radius {
            return 0.0;
        }
        match &self.table {
            None => plateau(r, self.support_radius),
            Some(t) => t.eval(r),
        }
    }

    /// Points in `(0, a]` where quadrature panels should break.
    pub fn breakpoints(&self) -> Vec<f64> {
        let a = self.support_radius;
        match self.variant {
            BumpVariant::Rho => (4..=8).map(|i| a * i as f64 / 8.0).collect(),
            BumpVariant::Chi => (1..=8).map(|i| a * i as f64 / 8.0).collect(),
        }
    }
}

/// Piecewise Chebyshev interpolant on `[0, a]` (second-kind points,
/// barycentric evaluation).
pub(crate) struct ChebyshevTable {
    a: f64,
    panels: usize,
    nodes: Vec<f64>,
    bary: Vec<f64>,
    values: Vec<f64>,
}

impl ChebyshevTable {
    fn build(a: f64, panels: usize, per_panel: usize, f: impl Fn(f64) -> f64 + Sync) -> Self {
        let m = per_panel - 1;
        let nodes: Vec<f64> = (0..=m)
            .map(|j| -(std::f64::consts::PI * j as f64 / m as f64).cos())
            .collect();
        let bary: Vec<f64> = (0..=m)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let h = a / panels as f64;
        let points: Vec<f64> = (0..panels)
            .flat_map(|p| nodes.iter().map(move |&t| h * (p as f64 + 0.5 * (t + 1.0))))
            .collect();
        let values = points.par_iter().map(|&r| f(r)).collect();
        Self {
            a,
            panels,
            nodes,
            bary,
            values,
        }
    }

    fn eval(&self, r: f64) -> f64 {
        let h = self.a / self.panels as f64;
        let p = ((r / h) as usize).min(self.panels - 1);
        let t = 2.0 * (r / h - p as f64) - 1.0;
        let vals = &self.values[p * self.nodes.len()..(p + 1) * self.nodes.len()];
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&x, &w), &v) in self.nodes.iter().zip(&self.bary).zip(vals) {
            let d = t - x;
            if d == 0.0 {
                return v;
            }
            let c = w / d;
            num += c * v;
            den += c;
        }
        num / den
    }
}

const GL_ORDER: usize = 20;
const SUBPANELS: usize = 3;

fn piecewise_gl(breaks: &mut Vec<f64>, mut f: impl FnMut(f64) -> f64) -> f64 {
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let (x, w) = gauss_legendre(GL_ORDER);
    let mut total = 0.0;
    for pair in breaks.windows(2) {
        let h = (pair[1] - pair[0]) / SUBPANELS as f64;
        for s in 0..SUBPANELS {
            let lo = pair[0] + s as f64 * h;
            let mid = lo + 0.5 * h;
            for (xi, wi) in x.iter().zip(&w) {
                total += 0.5 * h * wi * f(mid + 0.5 * h * xi);
            }
        }
    }
    total
}

/// Unnormalised autocorrelation `∫ β(y) β(x - y) dy` at `|x| = s` for the
/// plateau bump `β` of radius `b`.
pub(crate) fn autocorrelation(dim: usize, b: f64, s: f64) -> f64 {
    let beta = |r: f64| plateau(r, b);
    let ang = sphere_area(dim - 1);
    if s == 0.0 {
        let mut br = vec![0.0, 0.5 * b, b];
        return sphere_area(dim) * piecewise_gl(&mut br, |r| r.powi(dim as i32 - 1) * beta(r).powi(2));
    }
    let mut rho_breaks = vec![0.0, 0.5 * b, b];
    for d in [0.5 * b, b] {
        for c in [s - d, d - s, s + d] {
            if c > 0.0 && c < b {
                rho_breaks.push(c);
            }
        }
    }
    piecewise_gl(&mut rho_breaks, |rho| {
        if rho == 0.0 {
            return 0.0;
        }
        let mut th = vec![0.0, std::f64::consts::PI];
        for d in [0.5 * b, b] {
            let c = (rho * rho + s * s - d * d) / (2.0 * rho * s);
            if c > -1.0 && c < 1.0 {
                th.push(c.acos());
            }
        }
        let inner = piecewise_gl(&mut th, |t| {
            let d2 = (rho * rho + s * s - 2.0 * rho * s * t.cos()).max(0.0);
            t.sin().powi(dim as i32 - 2) * beta(d2.sqrt())
        });
        rho.powi(dim as i32 - 1) * beta(rho) * ang * inner
    })
}

fn autocorrelation_table(dim: usize, a: f64) -> ChebyshevTable {
    let b = 0.5 * a;
    let norm = autocorrelation(dim, b, 0.0);
    ChebyshevTable::build(a, 32, 16, |s| autocorrelation(dim, b, s) / norm)
}
