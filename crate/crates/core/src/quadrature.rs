//! Gauss–Legendre panels, geometrically graded rules for `r^e g(r)` on
//! `[0, R]`, and an adaptive Gauss–Kronrod integrator used by the oracles and
//! the nested kernel integrals.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

/// Nodes and weights of the `order`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&order) {
        return hit.clone();
    }
    let rule = compute_gauss_legendre(order);
    cache.lock().unwrap().insert(order, rule.clone());
    rule
}

fn compute_gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (z * p - p0) / (z * z - 1.0);
    (p, d)
}

/// A flat list of nodes and weights: `sum w_i f(x_i)`.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_panel(&mut self, a: f64, b: f64, order: usize) {
        let (x, w) = gauss_legendre(order);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in x.iter().zip(&w) {
            self.nodes.push(mid + half * xi);
            self.weights.push(half * wi);
        }
    }
}

/// Composite Gauss–Legendre rule over consecutive breakpoints. Each interval
/// is split into `2^refine` pieces and further so that a kernel oscillating
/// with angular frequency `freq` gets at least `nodes_per_period` nodes per
/// period.
pub fn composite(breaks: &[f64], order: usize, freq: f64, nodes_per_period: f64, refine: u32) -> Rule {
    let mut rule = Rule::default();
    for pair in breaks.windows(2) {
        add_interval(&mut rule, pair[0], pair[1], order, freq, nodes_per_period, refine);
    }
    rule
}

fn add_interval(rule: &mut Rule, a: f64, b: f64, order: usize, freq: f64, npp: f64, refine: u32) {
    if b <= a {
        return;
    }
    let periods = (b - a) * freq / (2.0 * std::f64::consts::PI);
    let osc = ((periods * npp) / order as f64).ceil().max(1.0) as usize;
    let pieces = osc << refine;
    let h = (b - a) / pieces as f64;
    for p in 0..pieces {
        rule.push_panel(a + p as f64 * h, a + (p + 1) as f64 * h, order);
    }
}

/// Settings for graded singular rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradedSettings {
    /// Gauss–Legendre order per panel.
    pub order: usize,
    /// Ratio between consecutive geometric breakpoints towards 0.
    pub grading: f64,
    /// Innermost breakpoint as a fraction of the first smooth breakpoint.
    pub inner_fraction: f64,
    pub nodes_per_period: f64,
}

impl Default for GradedSettings {
    fn default() -> Self {
        Self {
            order: 16,
            grading: 0.2,
            inner_fraction: 1e-12,
            nodes_per_period: 10.0,
        }
    }
}

/// Rule for `∫_{r_K}^{R} r^e g(r) dr` with weights already multiplied by
/// `r^e`. `breaks` must start with the first breakpoint `b_1 > 0` after which
/// the integrand is smooth; `[r_K, b_1]` is covered geometrically and
/// `[b_1, ..., R]` uniformly. The caller supplies the piece on `[0, r_K]`.
#[derive(Debug, Clone)]
pub struct GradedRule {
    pub rule: Rule,
    pub inner: f64,
}

pub fn graded(e: f64, breaks: &[f64], freq: f64, settings: &GradedSettings, refine: u32) -> GradedRule {
    assert!(!breaks.is_empty() && breaks[0] > 0.0);
    let b1 = breaks[0];
    let inner = b1 * settings.inner_fraction;
    let mut geo = vec![b1];
    let mut r = b1;
    while r * settings.grading > inner {
        r *= settings.grading;
        geo.push(r);
    }
    geo.push(inner);
    geo.reverse();
    let mut rule = Rule::default();
    for pair in geo.windows(2) {
        add_interval(&mut rule, pair[0], pair[1], settings.order, freq, settings.nodes_per_period, refine);
    }
    for pair in breaks.windows(2) {
        add_interval(&mut rule, pair[0], pair[1], settings.order, freq, settings.nodes_per_period, refine);
    }
    for (x, w) in rule.nodes.iter().zip(rule.weights.iter_mut()) {
        *w *= x.powf(e);
    }
    GradedRule { rule, inner }
}

/// `∫_0^R r^e g(r) dr` with the innermost piece approximated by
/// `g(r_K) r_K^{e+1}/(e+1)`; returns `(value, error estimate)` from a panel
/// doubling comparison.
pub fn singular_integral(
    e: f64,
    breaks: &[f64],
    freq: f64,
    settings: &GradedSettings,
    g: impl Fn(f64) -> f64,
) -> (f64, f64) {
    assert!(e > -1.0);
    let eval = |refine| {
        let gr = graded(e, breaks, freq, settings, refine);
        let inner = g(gr.inner) * gr.inner.powf(e + 1.0) / (e + 1.0);
        gr.rule.integrate(&g) + inner
    };
    let coarse = eval(0);
    let fine = eval(1);
    (fine, (fine - coarse).abs())
}

// Gauss–Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive G7K15 quadrature with bisection of the worst interval.
pub fn adaptive(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut intervals = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total: f64 = intervals.iter().map(|t| t.2).sum();
        let err: f64 = intervals.iter().map(|t| t.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        if intervals.len() >= max_intervals {
            return Err(Error::QuadratureAccuracy {
                estimate: err,
                tolerance: abs_tol.max(rel_tol * total.abs()),
            });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rules_integrate_polynomials() {
        for order in [1, 2, 5, 16, 40] {
            let (x, w) = gauss_legendre(order);
            let sum: f64 = w.iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "order {order}");
            let deg = 2 * order - 1;
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((m - exact).abs() < 1e-13, "order {order}");
        }
    }

    #[test]
    fn composite_resolves_oscillation() {
        let rule = composite(&[0.0, 10.0], 16, 50.0, 10.0, 0);
        let v = rule.integrate(|x| (50.0 * x).cos());
        assert!((v - (500.0f64).sin() / 50.0).abs() < 1e-12);
    }

    #[test]
    fn singular_power_law() {
        for e in [-0.9, -0.5, 0.5, 1.5] {
            let (v, err) = singular_integral(e, &[0.5, 2.0], 0.0, &GradedSettings::default(), |r| (-r).exp());
            // oracle: series for the lower incomplete gamma function
            let mut exact = 0.0;
            let mut term = 2f64.powf(e + 1.0) / (e + 1.0);
            for k in 0..80 {
                exact += term;
                term *= -2.0 * (e + 1.0 + k as f64) / ((k + 1) as f64 * (e + 2.0 + k as f64));
            }
            assert!((v - exact).abs() < 1e-11 * exact.abs().max(1.0), "e={e}: {v} vs {exact}");
            assert!(err < 1e-9);
        }
    }

    #[test]
    fn adaptive_handles_peaks() {
        let (v, err) = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-12, 10_000).unwrap();
        let exact = 2.0 * (1.0 / 1e-2f64) * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-9 * exact, "{v} {exact} {err}");
        assert!(adaptive(|x| 1.0 / (1e-8 + x * x), -1.0, 1.0, 1e-12, 0.0, 4).is_err());
    }
}
