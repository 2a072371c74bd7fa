//! The radial singular potential `V(x) = γ d(x,x₀)^{-2+η} ρ(d(x,x₀))`, its
//! Fourier transform by radial reduction, and Kato / `L^p` diagnostics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::{radial_kernel, sphere_area};
use crate::bump::{BumpProfile, BumpVariant};
use crate::error::{Error, Result};
use crate::lattice::{check_dim, LatticePoint};
use crate::quadrature::{graded, singular_integral, GradedSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    pub graded: GradedSettings,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            graded: GradedSettings::default(),
            abs_tol: 1e-10,
            rel_tol: 1e-7,
        }
    }
}

impl QuadratureSettings {
    pub fn fingerprint(&self) -> String {
        let g = &self.graded;
        format!(
            "gl{}:q{:e}:in{:e}:npp{:e}:abs{:e}:rel{:e}",
            g.order, g.grading, g.inner_fraction, g.nodes_per_period, self.abs_tol, self.rel_tol
        )
    }
}

/// A value with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

/// Geodesic distance on `R^n / 2πZ^n`.
pub fn torus_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = (a - b).rem_euclid(2.0 * PI);
            let d = d.min(2.0 * PI - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone)]
pub struct RadialSingularPotential {
    dim: usize,
    eta: f64,
    gamma: f64,
    bump: BumpProfile,
    center: Vec<f64>,
    quad: QuadratureSettings,
}

impl RadialSingularPotential {
    /// `gamma = 0` is accepted: it is the free operator used as a reference.
    pub fn new(dim: usize, eta: f64, gamma: f64, bump: BumpProfile, center: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid("eta", format!("eta in (0,1) violated: {eta}")));
        }
        if !gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be finite"));
        }
        if center.len() != dim || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("center", format!("need {dim} finite coordinates")));
        }
        let center = center.iter().map(|c| c.rem_euclid(2.0 * PI)).collect();
        Ok(Self {
            dim,
            eta,
            gamma,
            bump,
            center,
            quad: QuadratureSettings::default(),
        })
    }

    /// Default configuration: a = 1, γ = 1, x₀ = 0.
    pub fn standard(dim: usize, eta: f64, variant: BumpVariant) -> Result<Self> {
        let bump = BumpProfile::new(variant, 1.0, dim)?;
        Self::new(dim, eta, 1.0, bump, vec![0.0; dim])
    }

    pub fn with_quadrature(mut self, quad: QuadratureSettings) -> Self {
        self.quad = quad;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn bump(&self) -> &BumpProfile {
        &self.bump
    }
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    pub fn quadrature(&self) -> &QuadratureSettings {
        &self.quad
    }

    /// `V` as a function of the distance to the centre.
    pub fn radial(&self, r: f64) -> f64 {
        self.gamma * r.powf(self.eta - 2.0) * self.bump.value(r)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::invalid("x", format!("need {} coordinates", self.dim)));
        }
        let d = torus_distance(x, &self.center);
        if d == 0.0 {
            return Err(Error::Singularity);
        }
        Ok(self.radial(d))
    }

    /// `V̂(ξ) = ∫ V(x) e^{-iξ·x} dx` over `R^n` (the support lies in one
    /// fundamental domain), at `|ξ| = xi_norm`.
    pub fn fourier_value(&self, xi_norm: f64) -> Result<Estimate> {
        if self.gamma == 0.0 {
            return Ok(Estimate { value: 0.0, err: 0.0 });
        }
        let bump = &self.bump;
        radial_fourier(
            self.dim,
            self.eta - 2.0,
            self.gamma,
            &|r| bump.value(r),
            &bump.breakpoints(),
            xi_norm,
            &self.quad,
        )
    }

    /// `sup_x ∫_{d(x,y)<δ} |V(y)| W_n(d(x,y)) dy`. `|V|` and `W_n` are radially
    /// non-increasing, so the supremum is attained at `x = x₀` and equals a
    /// one-dimensional radial integral.
    pub fn kato_modulus(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta <= PI) {
            return Err(Error::invalid("delta", "must lie in (0, π]"));
        }
        if self.gamma == 0.0 {
            return Ok(0.0);
        }
        let mut breaks: Vec<f64> = self.bump.breakpoints().into_iter().filter(|&b| b < delta).collect();
        breaks.push(delta.min(self.bump.support_radius()));
        let e = self.eta - 1.0;
        let scale = sphere_area(self.dim) * self.gamma.abs();
        let bump = &self.bump;
        let value = if self.dim >= 3 {
            // r^{n-1} r^{-2+η} r^{2-n} = r^{η-1}
            let (v, err) = singular_integral(e, &breaks, 0.0, &self.quad.graded, |r| bump.value(r));
            self.check_accuracy(v, err)?;
            v
        } else {
            let g = |r: f64| (2.0 + 1.0 / r).ln() * bump.value(r);
            let eval = |refine| {
                let gr = graded(e, &breaks, 0.0, &self.quad.graded, refine);
                let rk = gr.inner;
                // ∫_0^{r_K} r^{η-1} (ln(1/r) + 2r) dr
                let inner = rk.powf(self.eta) * ((1.0 / rk).ln() / self.eta + 1.0 / (self.eta * self.eta))
                    + 2.0 * rk.powf(self.eta + 1.0) / (self.eta + 1.0);
                gr.rule.integrate(g) + inner
            };
            let (coarse, fine) = (eval(0), eval(1));
            self.check_accuracy(fine, (fine - coarse).abs())?;
            fine
        };
        Ok(scale * value)
    }

    /// `‖V‖_{L^p}`, or divergence when `p ≥ n/(2-η)` (exponent test).
    pub fn lp_norm(&self, p: f64) -> Result<LpNorm> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::invalid("p", "must be a finite value >= 1"));
        }
        let threshold = self.dim as f64 / (2.0 - self.eta);
        // |V|^p r^{n-1} ~ r^{n-1-p(2-η)}
        let e = self.dim as f64 - 1.0 - p * (2.0 - self.eta);
        if e <= -1.0 {
            return Ok(LpNorm::Divergent { threshold });
        }
        if self.gamma == 0.0 {
            return Ok(LpNorm::Finite { value: 0.0, threshold });
        }
        let bump = &self.bump;
        let (v, err) = singular_integral(e, &bump.breakpoints(), 0.0, &self.quad.graded, |r| bump.value(r).powf(p));
        self.check_accuracy(v, err)?;
        let value = (sphere_area(self.dim) * self.gamma.abs().powf(p) * v).powf(1.0 / p);
        Ok(LpNorm::Finite { value, threshold })
    }

    fn check_accuracy(&self, value: f64, err: f64) -> Result<()> {
        let tol = self.quad.abs_tol.max(self.quad.rel_tol * value.abs());
        if err > tol || !value.is_finite() {
            Err(Error::QuadratureAccuracy { estimate: err, tolerance: tol })
        } else {
            Ok(())
        }
    }

    /// Stable description of everything the Fourier coefficients depend on.
    pub fn fingerprint(&self) -> String {
        format!(
            "n={};eta={:e};gamma={:e};bump={:?}:{:e};center={:?};quad={}",
            self.dim,
            self.eta,
            self.gamma,
            self.bump.variant(),
            self.bump.support_radius(),
            self.center,
            self.quad.fingerprint()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LpNorm {
    Finite { value: f64, threshold: f64 },
    Divergent { threshold: f64 },
}

impl LpNorm {
    pub fn is_finite(&self) -> bool {
        matches!(self, LpNorm::Finite { .. })
    }
}

/// Fourier transform of `γ r^power profile(r)` in `R^dim` at `|ξ| = xi`:
/// `∫_0^∞ γ r^{power+n-1} profile(r) Ω_n(rξ) dr`. `breaks` are the profile's
/// panel breakpoints, the last one being the end of its support.
pub fn radial_fourier(
    dim: usize,
    power: f64,
    gamma: f64,
    profile: &(dyn Fn(f64) -> f64 + Sync),
    breaks: &[f64],
    xi: f64,
    quad: &QuadratureSettings,
) -> Result<Estimate> {
    check_dim(dim)?;
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::invalid("xi_norm", "must be finite and >= 0"));
    }
    let e = power + dim as f64 - 1.0;
    if e <= -1.0 {
        return Err(Error::invalid("power", "radial integrand not integrable at 0"));
    }
    let omega0 = sphere_area(dim);
    let eval = |refine| {
        let gr = graded(e, breaks, xi, &quad.graded, refine);
        let rk = gr.inner;
        let inner = omega0
            * profile(0.0)
            * (rk.powf(e + 1.0) / (e + 1.0) - xi * xi / (2.0 * dim as f64) * rk.powf(e + 3.0) / (e + 3.0));
        gr.rule.integrate(|r| profile(r) * radial_kernel(dim, r * xi)) + inner
    };
    let coarse = eval(0);
    let fine = eval(1);
    let value = gamma * fine;
    let err = (gamma * (fine - coarse)).abs();
    let tol = quad.abs_tol.max(quad.rel_tol * value.abs());
    if err > tol || !value.is_finite() {
        return Err(Error::QuadratureAccuracy { estimate: err, tolerance: tol });
    }
    Ok(Estimate { value, err })
}

/// Where the Fourier coefficients come from.
#[derive(Debug, Clone)]
pub enum FourierSource {
    Potential(Box<RadialSingularPotential>),
    /// Model coefficients `A (1 + |ξ|)^{-exponent}`.
    Model { exponent: f64, amplitude: f64 },
    /// `V ≡ c`: only the zero mode, `V̂(0) = c (2π)^n`.
    Constant(f64),
    Zero,
    /// Loaded from CSV; cannot be extended.
    Imported,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierEntry {
    pub value: f64,
    pub err: f64,
}

/// `V̂` on integer offsets, keyed by `|ξ|^2` (the potential is radial).
#[derive(Debug, Clone)]
pub struct FourierTable {
    dim: usize,
    eta: f64,
    source: FourierSource,
    entries: BTreeMap<u64, FourierEntry>,
    dense: Vec<f64>,
    covered: Option<u64>,
}

impl FourierTable {
    pub fn for_potential(v: &RadialSingularPotential) -> Self {
        Self::with_source(v.dim(), v.eta(), FourierSource::Potential(Box::new(v.clone())))
    }

    /// Model table `(1 + |ξ|)^{-(n-2+η)}`.
    pub fn model(dim: usize, eta: f64) -> Self {
        Self::with_source(
            dim,
            eta,
            FourierSource::Model {
                exponent: dim as f64 - 2.0 + eta,
                amplitude: 1.0,
            },
        )
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::with_source(dim, 0.5, FourierSource::Constant(c))
    }

    pub fn zero(dim: usize) -> Self {
        Self::with_source(dim, 0.5, FourierSource::Zero)
    }

    pub fn with_source(dim: usize, eta: f64, source: FourierSource) -> Self {
        Self {
            dim,
            eta,
            source,
            entries: BTreeMap::new(),
            dense: Vec::new(),
            covered: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn source(&self) -> &FourierSource {
        &self.source
    }
    pub fn entries(&self) -> &BTreeMap<u64, FourierEntry> {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        match &self.source {
            FourierSource::Zero => true,
            FourierSource::Constant(c) => *c == 0.0,
            FourierSource::Potential(v) => v.gamma() == 0.0,
            FourierSource::Model { amplitude, .. } => *amplitude == 0.0,
            FourierSource::Imported => self.entries.values().all(|e| e.value == 0.0),
        }
    }

    pub fn fingerprint(&self) -> String {
        match &self.source {
            FourierSource::Potential(v) => v.fingerprint(),
            FourierSource::Model { exponent, amplitude } => format!("model:n={};a={exponent:e};A={amplitude:e}", self.dim),
            FourierSource::Constant(c) => format!("constant:n={};c={c:e}", self.dim),
            FourierSource::Zero => format!("zero:n={}", self.dim),
            FourierSource::Imported => format!("imported:n={};entries={}", self.dim, self.entries.len()),
        }
    }

    fn compute(&self, m: u64) -> Result<FourierEntry> {
        let xi = (m as f64).sqrt();
        match &self.source {
            FourierSource::Potential(v) => {
                let e = v.fourier_value(xi)?;
                Ok(FourierEntry { value: e.value, err: e.err })
            }
            FourierSource::Model { exponent, amplitude } => Ok(FourierEntry {
                value: amplitude * (1.0 + xi).powf(-exponent),
                err: 0.0,
            }),
            FourierSource::Constant(c) => Ok(FourierEntry {
                value: if m == 0 { c * (2.0 * PI).powi(self.dim as i32) } else { 0.0 },
                err: 0.0,
            }),
            FourierSource::Zero => Ok(FourierEntry { value: 0.0, err: 0.0 }),
            FourierSource::Imported => Err(Error::Precondition(format!(
                "imported Fourier table has no entry for |xi|^2 = {m}"
            ))),
        }
    }

    /// Make every representable `|ξ|^2 <= max_norm_sq` available.
    pub fn ensure_covering(&mut self, max_norm_sq: u64) -> Result<()> {
        if self.covered.is_some_and(|c| c >= max_norm_sq) {
            return Ok(());
        }
        let missing: Vec<u64> = (0..=max_norm_sq)
            .filter(|m| !self.entries.contains_key(m))
            .filter(|&m| crate::lattice::shell_multiplicity(self.dim, m).map(|c| c > 0).unwrap_or(false))
            .collect();
        let computed: Vec<Result<(u64, FourierEntry)>> =
            missing.par_iter().map(|&m| self.compute(m).map(|e| (m, e))).collect();
        for r in computed {
            let (m, e) = r?;
            self.entries.insert(m, e);
        }
        self.covered = Some(max_norm_sq);
        self.rebuild_dense(max_norm_sq);
        Ok(())
    }

    fn rebuild_dense(&mut self, max_norm_sq: u64) {
        self.dense = vec![f64::NAN; max_norm_sq as usize + 1];
        for (&m, e) in self.entries.range(..=max_norm_sq) {
            self.dense[m as usize] = e.value;
        }
    }

    /// Dense `V̂` by `|ξ|^2` up to the covered bound; NaN where `|ξ|^2` is
    /// not a sum of `n` squares.
    pub fn dense(&self) -> &[f64] {
        &self.dense
    }

    pub fn get(&self, norm_sq: u64) -> Option<f64> {
        self.entries.get(&norm_sq).map(|e| e.value)
    }

    pub fn value(&mut self, norm_sq: u64) -> Result<f64> {
        if let Some(v) = self.get(norm_sq) {
            return Ok(v);
        }
        let e = self.compute(norm_sq)?;
        self.entries.insert(norm_sq, e);
        Ok(e.value)
    }

    /// `V_{jk} = (2π)^{-n} V̂(j - k)`; extends the table if needed.
    pub fn matrix_entry(&mut self, j: &LatticePoint, k: &LatticePoint) -> Result<f64> {
        if j.coords.len() != self.dim || k.coords.len() != self.dim {
            return Err(Error::invalid("j,k", "dimension does not match the table"));
        }
        let m: u64 = j.coords.iter().zip(&k.coords).map(|(a, b)| ((a - b) * (a - b)) as u64).sum();
        Ok(self.value(m)? * (2.0 * PI).powi(-(self.dim as i32)))
    }

    /// Extremes of `V̂(ξ)(1+|ξ|)^{n-2+η}` over tabulated `|ξ| <= xi_max`.
    pub fn envelope_report(&mut self, xi_max: f64) -> Result<EnvelopeReport> {
        let bound = crate::lattice::radius_to_norm_bound(xi_max)?;
        self.ensure_covering(bound)?;
        let alpha = self.dim as f64 - 2.0 + self.eta;
        let mut report = EnvelopeReport {
            c_min: f64::INFINITY,
            c_max: f64::NEG_INFINITY,
            worst_offsets: WorstOffsets { min_norm_sq: 0, max_norm_sq: 0 },
            nonpositive: Vec::new(),
            entries: 0,
        };
        for (&m, e) in self.entries.range(..=bound) {
            let c = e.value * (1.0 + (m as f64).sqrt()).powf(alpha);
            report.entries += 1;
            if e.value <= 0.0 {
                report.nonpositive.push(m);
            }
            if c < report.c_min {
                report.c_min = c;
                report.worst_offsets.min_norm_sq = m;
            }
            if c > report.c_max {
                report.c_max = c;
                report.worst_offsets.max_norm_sq = m;
            }
        }
        Ok(report)
    }

    /// CSV with columns `xi_norm_sq,value,err_estimate`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "xi_norm_sq,value,err_estimate")?;
        for (m, e) in &self.entries {
            writeln!(w, "{m},{:.16e},{:.16e}", e.value, e.err)?;
        }
        Ok(())
    }

    pub fn read_csv(dim: usize, eta: f64, r: impl BufRead) -> Result<Self> {
        let mut table = Self::with_source(dim, eta, FourierSource::Imported);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::invalid("csv", format!("line {}: expected xi_norm_sq,value,err_estimate", i + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let m: u64 = parts[0].trim().parse().map_err(|_| bad())?;
            let value: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            let err: f64 = parts[2].trim().parse().map_err(|_| bad())?;
            table.entries.insert(m, FourierEntry { value, err });
        }
        let max = table.entries.keys().next_back().copied().unwrap_or(0);
        table.covered = Some(max);
        table.rebuild_dense(max);
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstOffsets {
    pub min_norm_sq: u64,
    pub max_norm_sq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub c_min: f64,
    pub c_max: f64,
    pub worst_offsets: WorstOffsets,
    /// Offsets `|ξ|^2` with `V̂(ξ) <= 0`, reported rather than clipped.
    pub nonpositive: Vec<u64>,
    pub entries: usize,
}

/// Least-squares slope of `log V̂` against `log |ξ|` over tabulated entries
/// with `lo <= |ξ| <= hi`.
pub fn log_slope(table: &FourierTable, lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = table
        .entries()
        .iter()
        .filter_map(|(&m, e)| {
            let r = (m as f64).sqrt();
            (r >= lo && r <= hi && e.value > 0.0).then(|| (r.ln(), e.value.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive;

    fn rho_potential(dim: usize, eta: f64) -> RadialSingularPotential {
        RadialSingularPotential::standard(dim, eta, BumpVariant::Rho).unwrap()
    }

    #[test]
    fn evaluation() {
        let v = rho_potential(2, 0.5);
        assert_eq!(v.eval(&[1.2, 0.0]).unwrap(), 0.0);
        let x = v.eval(&[0.25, 0.0]).unwrap();
        assert!((x - 0.25f64.powf(-1.5)).abs() < 1e-12);
        let a = v.eval(&[2.0 * PI - 0.1, 0.0]).unwrap();
        let b = v.eval(&[0.1, 0.0]).unwrap();
        assert!((a - b).abs() < 1e-9 * b);
        assert!(matches!(v.eval(&[0.0, 0.0]), Err(Error::Singularity)));
        assert!(matches!(v.eval(&[2.0 * PI, 0.0]), Err(Error::Singularity)));
        assert!(RadialSingularPotential::standard(2, 1.2, BumpVariant::Rho).is_err());
    }

    #[test]
    fn fourier_at_zero_is_integral() {
        let v = rho_potential(3, 0.5);
        let f0 = v.fourier_value(0.0).unwrap();
        assert!(f0.value > 0.0);
        // ∫ V = 4π ∫ r^{0.5} ρ(r) dr; plateau part exact, transition by GK
        let plateau_part = 4.0 * PI * 0.5f64.powf(1.5) / 1.5;
        let tr = adaptive(|r| r.sqrt() * crate::bump::plateau(r, 1.0), 0.5, 1.0, 1e-14, 1e-14, 1000).unwrap().0;
        let d = (f0.value - plateau_part - 4.0 * PI * tr).abs();
        assert!(d < 1e-10, "{d} {}", f0.value);
    }

    #[test]
    fn coulomb_limit() {
        // n = 3, V = 1/r on a large plateau: V̂ → 4π/|ξ|^2
        let quad = QuadratureSettings::default();
        for &xi in &[1.0, 2.5, 4.0] {
            let mut errs = Vec::new();
            for &big in &[50.0, 200.0, 800.0] {
                let prof = move |r: f64| crate::bump::plateau(r, big);
                let v = radial_fourier(3, -1.0, 1.0, &prof, &[0.5 * big, big], xi, &quad).unwrap();
                errs.push((v.value - 4.0 * PI / (xi * xi)).abs());
            }
            assert!(errs[2] < errs[1] && errs[1] < errs[0], "xi={xi}: {errs:?}");
            assert!(errs[2] < 1e-4 * 4.0 * PI / (xi * xi), "xi={xi}: {errs:?}");
        }
    }

    #[test]
    fn two_dimensional_tensor_oracle() {
        // V̂(ξ) for ξ = (10, 0) by direct polar quadrature on the plane,
        // independent of the Bessel kernel: ∫∫ V(r) cos(10 r cos θ) r dr dθ
        let v = rho_potential(2, 0.5);
        let xi = 10.0;
        let inner = |r: f64| {
            adaptive(|t| (xi * r * t.cos()).cos(), 0.0, 2.0 * PI, 1e-13, 1e-13, 2000).unwrap().0
        };
        // substitute r = s^2 to remove the r^{-0.5} singularity
        let oracle = adaptive(
            |s| {
                let r = s * s;
                if r == 0.0 {
                    return 0.0;
                }
                v.radial(r) * r * inner(r) * 2.0 * s
            },
            0.0,
            1.0,
            1e-10,
            1e-10,
            5000,
        )
        .unwrap()
        .0;
        let f = v.fourier_value(xi).unwrap();
        assert!((f.value - oracle).abs() < 1e-3 * oracle.abs(), "{} vs {oracle}", f.value);
        assert!((f.value - oracle).abs() < 1e-7, "{} vs {oracle}", f.value);
    }

    #[test]
    fn matrix_entries() {
        let v = rho_potential(2, 0.5);
        let mut t = FourierTable::for_potential(&v);
        let j = LatticePoint::new(vec![3, 1]);
        let k = LatticePoint::new(vec![0, -3]);
        let a = t.matrix_entry(&j, &k).unwrap();
        let b = t.matrix_entry(&k, &j).unwrap();
        assert_eq!(a, b);
        let direct = v.fourier_value(5.0).unwrap().value / (4.0 * PI * PI);
        assert!((a - direct).abs() < 1e-15);
        let d = t.matrix_entry(&j, &j).unwrap();
        assert!((d - v.fourier_value(0.0).unwrap().value / (4.0 * PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn constant_and_model_tables() {
        let mut c = FourierTable::constant(2, 0.7);
        c.ensure_covering(8).unwrap();
        let j = LatticePoint::new(vec![1, 1]);
        assert!((c.matrix_entry(&j, &j).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(c.get(2), Some(0.0));
        assert!(c.dense()[3].is_nan());
        let mut m = FourierTable::model(2, 0.5);
        assert!((m.value(9).unwrap() - 4f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let mut m = FourierTable::model(3, 0.3);
        m.ensure_covering(20).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FourierTable::read_csv(3, 0.3, &buf[..]).unwrap();
        assert_eq!(back.entries(), m.entries());
        let mut back = back;
        assert!(back.value(1000).is_err());
    }

    #[test]
    fn envelope_of_chi_variant() {
        let v = RadialSingularPotential::standard(3, 0.5, BumpVariant::Chi).unwrap();
        let mut t = FourierTable::for_potential(&v);
        let single = {
            let mut t0 = FourierTable::for_potential(&v);
            t0.envelope_report(0.5).unwrap()
        };
        assert_eq!(single.c_min, single.c_max);
        let r = t.envelope_report(20.0).unwrap();
        assert!(r.c_min > 0.0 && r.nonpositive.is_empty());
        assert!(r.c_max >= r.c_min);
    }

    #[test]
    fn kato_and_lp() {
        let v = rho_potential(3, 0.5);
        let k: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|&d| v.kato_modulus(d).unwrap()).collect();
        assert!(k[0] > k[1] && k[1] > k[2] && k[2] > 0.0);
        // plateau region: 4π ∫_0^δ r^{-0.5} dr = 8π sqrt(δ)
        assert!((k[1] - 8.0 * PI * 0.1).abs() < 1e-9);
        let v2 = v.clone().with_gamma(2.0);
        assert!((v2.kato_modulus(0.1).unwrap() - 2.0 * k[0]).abs() < 1e-12);
        let w = rho_potential(2, 0.5);
        let d: f64 = 0.01;
        let oracle = 2.0 * PI
            * adaptive(|s: f64| {
                let r = s * s;
                if r == 0.0 { 0.0 } else { r.powf(-0.5) * (2.0 + 1.0 / r).ln() * 2.0 * s }
            }, 0.0, d.sqrt(), 1e-13, 1e-13, 5000).unwrap().0;
        assert!((w.kato_modulus(d).unwrap() - oracle).abs() < 1e-8 * oracle);

        assert!(v.lp_norm(1.0).unwrap().is_finite());
        assert!(!v.lp_norm(2.0).unwrap().is_finite());
        assert!(rho_potential(2, 0.5).lp_norm(1.3).unwrap().is_finite());
        assert!(!rho_potential(2, 0.5).lp_norm(4.0 / 3.0).unwrap().is_finite());
        // plateau-only check of the L^1 norm: ∫ r^{0.5} over [0, 0.5] plus transition
        let l1 = match v.lp_norm(1.0).unwrap() {
            LpNorm::Finite { value, .. } => value,
            _ => unreachable!(),
        };
        assert!((l1 - v.fourier_value(0.0).unwrap().value).abs() < 1e-9);
    }

    #[test]
    fn fourier_decay_slope() {
        let v = rho_potential(2, 0.5);
        let mut t = FourierTable::for_potential(&v);
        t.ensure_covering(100 * 100).unwrap();
        let s = log_slope(&t, 20.0, 100.0).unwrap();
        assert!((s + 0.5).abs() < 0.05, "{s}");
    }
}
