//! Galerkin truncation of `H_V = -Δ + V` to the Fourier modes `|j| <= Λmax`,
//! dense symmetric eigensolve and the spectral sums built from it.
//!
//! Basis functions are `e_j(x) = (2π)^{-n/2} e^{ij·(x - x₀)}`: working in the
//! frame centred at x₀ keeps `V_{jk} = (2π)^{-n} V̂(j - k)` real, and every
//! evaluation point is translated by `-x₀` first.

pub mod cache;

use std::f64::consts::PI;
use std::sync::Arc;

use bitflags::bitflags;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeBasis;
use crate::potential::FourierTable;

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
    pub struct Flags: u32 {
        /// λ above the trusted part of the truncated spectrum.
        const BEYOND_RELIABILITY = 1;
        /// Truncated lattice sum whose tail bound is large relative to the value.
        const TRUNCATION = 2;
        /// Heat time so small that the mode cutoff dominates.
        const HEAT_TRUNCATION = 4;
        const EMPTY_BAND = 8;
    }
}

impl Flags {
    pub fn names(&self) -> Vec<&'static str> {
        self.iter_names().map(|(n, _)| n).collect()
    }
}

impl Serialize for Flags {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.names().serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Flagged<T> {
    pub value: T,
    pub flags: Flags,
}

impl<T> Flagged<T> {
    pub fn new(value: T, flags: Flags) -> Self {
        Self { value, flags }
    }
    pub fn clean(value: T) -> Self {
        Self { value, flags: Flags::empty() }
    }
}

/// Truncated Hamiltonian, stored dense column-major.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    basis: Arc<LatticeBasis>,
    center: Vec<f64>,
    matrix: Vec<f64>,
    v00: f64,
    fingerprint: String,
}

impl Hamiltonian {
    pub fn basis(&self) -> &Arc<LatticeBasis> {
        &self.basis
    }
    pub fn size(&self) -> usize {
        self.basis.len()
    }
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    pub fn v00(&self) -> f64 {
        self.v00
    }
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.matrix[k * self.size() + i]
    }
    pub fn as_mat(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.matrix, self.size(), self.size())
    }
    pub fn trace(&self) -> f64 {
        (0..self.size()).map(|i| self.get(i, i)).sum()
    }

    /// `H - diag(|j|^2)` plus `shift` on the diagonal.
    pub fn potential_matrix(&self, shift: f64) -> Mat<f64> {
        let n = self.size();
        Mat::from_fn(n, n, |i, k| {
            let mut v = self.get(i, k);
            if i == k {
                v += shift - self.basis.norm_sq(i) as f64;
            }
            v
        })
    }
}

/// `H[j][k] = |j|^2 δ_{jk} + (2π)^{-n} V̂(j - k)`. The table is extended to
/// every offset occurring in the basis.
pub fn assemble(basis: Arc<LatticeBasis>, table: &mut FourierTable, center: &[f64]) -> Result<Hamiltonian> {
    let dim = basis.dim();
    if table.dim() != dim || center.len() != dim {
        return Err(Error::invalid("table", "dimension does not match the basis"));
    }
    let max_offset = basis.norms_sq().last().copied().unwrap_or(0) * 4;
    table.ensure_covering(max_offset)?;
    let dense = table.dense();
    let norm = (2.0 * PI).powi(-(dim as i32));
    let n = basis.len();
    let mut matrix = vec![0.0; n * n];
    let coords = basis.flat_coords();
    matrix.par_chunks_mut(n).enumerate().for_each(|(k, col)| {
        let ck = &coords[k * dim..(k + 1) * dim];
        for (i, out) in col.iter_mut().enumerate() {
            let ci = &coords[i * dim..(i + 1) * dim];
            let m: i64 = ci.iter().zip(ck).map(|(a, b)| (a - b) * (a - b)).sum();
            *out = norm * dense[m as usize];
        }
        col[k] += basis.norm_sq(k) as f64;
    });
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("Fourier table has gaps inside the basis offsets".into()));
    }
    let v00 = norm * dense[0];
    Ok(Hamiltonian {
        basis,
        center: center.to_vec(),
        matrix,
        v00,
        fingerprint: table.fingerprint(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftPolicy {
    /// Never shift.
    None,
    /// Shift only if the spectrum dips below 0, to a minimum of exactly 0.
    #[default]
    NonNegative,
    /// Shift so that `H >= 1` whenever the minimum is below 1.
    UnitFloor,
}

impl ShiftPolicy {
    pub fn shift_for(&self, min_eig: f64) -> f64 {
        match self {
            ShiftPolicy::None => 0.0,
            ShiftPolicy::NonNegative if min_eig < 0.0 => -min_eig,
            ShiftPolicy::UnitFloor if min_eig < 1.0 => 1.0 - min_eig,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    pub size_limit: usize,
    pub shift: ShiftPolicy,
    /// Reliability cutoff as a fraction of Λmax.
    pub reliability_fraction: f64,
    /// Run the orthonormality and trace checks.
    pub verify: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            size_limit: 12_000,
            shift: ShiftPolicy::default(),
            reliability_fraction: 0.5,
            verify: true,
        }
    }
}

/// Eigenpairs of a truncated Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectralData {
    basis: Arc<LatticeBasis>,
    center: Vec<f64>,
    raw: Vec<f64>,
    eig: Vec<f64>,
    coeffs: Vec<f64>,
    shift: f64,
    reliability: f64,
    fingerprint: String,
}

const ORTHO_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-9;

pub fn eigensolve(h: &Hamiltonian, opts: &SpectralOptions) -> Result<SpectralData> {
    let n = h.size();
    if n > opts.size_limit {
        return Err(Error::SizeLimit { size: n, limit: opts.size_limit });
    }
    if n == 0 {
        return Err(Error::Precondition("empty basis".into()));
    }
    let evd = h
        .as_mat()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?} (matrix size {n})")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let raw: Vec<f64> = order.iter().map(|&k| s[k]).collect();
    let mut coeffs = vec![0.0; n * n];
    for (dst, &k) in order.iter().enumerate() {
        for i in 0..n {
            coeffs[dst * n + i] = u[(i, k)];
        }
    }
    let data = SpectralData::from_parts(
        h.basis.clone(),
        h.center.clone(),
        raw,
        coeffs,
        opts,
        h.fingerprint.clone(),
    )?;
    if opts.verify {
        data.verify(Some(h.trace()))?;
    }
    Ok(data)
}

impl SpectralData {
    pub(crate) fn from_parts(
        basis: Arc<LatticeBasis>,
        center: Vec<f64>,
        raw: Vec<f64>,
        coeffs: Vec<f64>,
        opts: &SpectralOptions,
        fingerprint: String,
    ) -> Result<Self> {
        let n = basis.len();
        if raw.len() != n || coeffs.len() != n * n {
            return Err(Error::DecompositionCheck("shape mismatch".into()));
        }
        let shift = opts.shift.shift_for(raw[0]);
        let eig = raw.iter().map(|v| v + shift).collect();
        Ok(Self {
            reliability: opts.reliability_fraction * basis.cutoff(),
            basis,
            center,
            raw,
            eig,
            coeffs,
            shift,
            fingerprint,
        })
    }

    /// Column orthonormality and, if the trace is given, the trace identity.
    pub fn verify(&self, trace: Option<f64>) -> Result<()> {
        let c = self.coeff_mat();
        let gram = c.transpose() * c;
        let n = self.len();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                let target = if i == k { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, k)] - target).abs());
            }
        }
        if worst > ORTHO_TOL {
            return Err(Error::DecompositionCheck(format!(
                "columns not orthonormal: max |CᵀC - I| = {worst:e}"
            )));
        }
        if let Some(t) = trace {
            let sum: f64 = self.raw.iter().sum();
            let scale = self.raw.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            if (sum - t).abs() > TRACE_TOL * scale {
                return Err(Error::DecompositionCheck(format!(
                    "trace identity violated: Σ τ² = {sum:e}, trace = {t:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }
    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
    pub fn basis(&self) -> &Arc<LatticeBasis> {
        &self.basis
    }
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
    /// Shifted eigenvalues `τ_k^2`, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig
    }
    pub fn raw_eigenvalues(&self) -> &[f64] {
        &self.raw
    }
    pub fn shift(&self) -> f64 {
        self.shift
    }
    pub fn tau(&self, k: usize) -> f64 {
        self.eig[k].max(0.0).sqrt()
    }
    pub fn reliability_cutoff(&self) -> f64 {
        self.reliability
    }
    pub fn set_reliability_cutoff(&mut self, cutoff: f64) {
        self.reliability = cutoff;
    }
    /// Column `k` of the coefficient matrix.
    pub fn column(&self, k: usize) -> &[f64] {
        let n = self.len();
        &self.coeffs[k * n..(k + 1) * n]
    }
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn coeff_mat(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.coeffs, self.len(), self.len())
    }

    fn reliability_flags(&self, lambda: f64) -> Flags {
        if lambda > self.reliability * (1.0 + 1e-12) {
            Flags::BEYOND_RELIABILITY
        } else {
            Flags::empty()
        }
    }

    /// `#{k : τ_k <= λ}` with a relative tolerance of `1e-10` on `τ^2`.
    pub fn eig_count(&self, lambda: f64) -> usize {
        let bound = lambda * lambda * (1.0 + 1e-10);
        if lambda < 0.0 {
            return 0;
        }
        self.eig.partition_point(|&v| v <= bound)
    }

    /// `(2π)^{-n/2} e^{ij·(x - x₀)}` for every basis point, as (re, im).
    pub fn phases(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        plane_waves(&self.basis, &self.center, x)
    }

    pub fn eigenfunction_value(&self, k: usize, x: &[f64]) -> Result<Complex64> {
        if k >= self.len() {
            return Err(Error::IndexOutOfRange { index: k, size: self.len() });
        }
        self.check_point(x)?;
        let (re, im) = self.phases(x);
        let c = self.column(k);
        let mut v = Complex64::new(0.0, 0.0);
        for i in 0..c.len() {
            v += c[i] * Complex64::new(re[i], im[i]);
        }
        Ok(v)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x", format!("need {} finite coordinates", self.dim())));
        }
        Ok(())
    }

    /// Values of the first `kmax` eigenfunctions at every point:
    /// `(re, im)` matrices of shape `points × kmax`.
    pub fn eigenfunction_block(&self, points: &[Vec<f64>], kmax: usize) -> Result<(Mat<f64>, Mat<f64>)> {
        for p in points {
            self.check_point(p)?;
        }
        let n = self.len();
        let kmax = kmax.min(n);
        let phases: Vec<(Vec<f64>, Vec<f64>)> = points.par_iter().map(|p| self.phases(p)).collect();
        let pre = Mat::from_fn(points.len(), n, |r, i| phases[r].0[i]);
        let pim = Mat::from_fn(points.len(), n, |r, i| phases[r].1[i]);
        let c = self.coeff_mat().subcols(0, kmax);
        Ok((&pre * c, &pim * c))
    }

    /// `|e_k(x)|^2` for every point and `k < kmax`, row-major by point.
    pub fn densities(&self, points: &[Vec<f64>], kmax: usize) -> Result<Vec<Vec<f64>>> {
        let (re, im) = self.eigenfunction_block(points, kmax)?;
        Ok((0..points.len())
            .map(|r| (0..re.ncols()).map(|k| re[(r, k)].powi(2) + im[(r, k)].powi(2)).collect())
            .collect())
    }

    /// `Σ_k w(τ_k) |e_k(x)|^2` over every computed mode.
    pub fn weighted_diag(&self, x: &[f64], weight: impl Fn(f64) -> f64 + Sync) -> Result<f64> {
        self.check_point(x)?;
        let (re, im) = self.phases(x);
        let n = self.len();
        Ok((0..n)
            .into_par_iter()
            .map(|k| {
                let w = weight(self.tau(k));
                if w == 0.0 {
                    return 0.0;
                }
                let c = self.column(k);
                let (mut a, mut b) = (0.0, 0.0);
                for i in 0..n {
                    a += c[i] * re[i];
                    b += c[i] * im[i];
                }
                w * (a * a + b * b)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum())
    }

    /// `1_λ(P_V)(x,x) = Σ_{τ_k <= λ} |e_k(x)|^2`.
    pub fn projector_diag(&self, lambda: f64, x: &[f64]) -> Result<Flagged<f64>> {
        let count = self.eig_count(lambda);
        let flags = self.reliability_flags(lambda);
        self.check_point(x)?;
        let (re, im) = self.phases(x);
        let n = self.len();
        let value: f64 = (0..count)
            .map(|k| {
                let c = self.column(k);
                let (mut a, mut b) = (0.0, 0.0);
                for i in 0..n {
                    a += c[i] * re[i];
                    b += c[i] * im[i];
                }
                a * a + b * b
            })
            .sum();
        Ok(Flagged::new(value, flags))
    }

    /// Real part of `Σ_k e^{-tτ_k^2} e_k(x) conj(e_k(y))`.
    pub fn heat_diag(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Flagged<f64>> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", "must be positive"));
        }
        self.check_point(x)?;
        self.check_point(y)?;
        let mut flags = Flags::empty();
        if t < self.basis.cutoff().powi(-2) {
            flags |= Flags::HEAT_TRUNCATION;
        }
        let (xr, xi) = self.phases(x);
        let (yr, yi) = self.phases(y);
        let n = self.len();
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let w = (-t * self.eig[k]).exp();
            if w == 0.0 {
                continue;
            }
            let c = self.column(k);
            let mut ex = Complex64::new(0.0, 0.0);
            let mut ey = Complex64::new(0.0, 0.0);
            for i in 0..n {
                ex += c[i] * Complex64::new(xr[i], xi[i]);
                ey += c[i] * Complex64::new(yr[i], yi[i]);
            }
            total += w * ex * ey.conj();
        }
        if total.im.abs() > 1e-9 * total.re.abs().max(1.0) {
            return Err(Error::DecompositionCheck(format!(
                "heat kernel has imaginary part {:e}",
                total.im
            )));
        }
        Ok(Flagged::new(total.re, flags))
    }

    /// `Ṽ = V_eff C` with `V_eff = V + shift·I`, column-major; entry `(k, ℓ)`
    /// is `∫ conj(e_k^0) e_{τ_ℓ} V_eff`.
    pub fn overlap_matrix(&self, h: &Hamiltonian) -> Result<Mat<f64>> {
        if h.size() != self.len() {
            return Err(Error::Precondition("Hamiltonian and spectral data use different bases".into()));
        }
        Ok(h.potential_matrix(self.shift) * self.coeff_mat())
    }
}

/// `(2π)^{-n/2} e^{ij·(x - c)}` for every basis point, as (re, im). Built
/// from per-axis powers so the cost is one complex product per coordinate.
pub fn plane_waves(basis: &LatticeBasis, center: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = basis.dim();
    let cut = basis.cutoff().floor() as i64 + 1;
    let width = (2 * cut + 1) as usize;
    let mut axis = vec![Complex64::new(0.0, 0.0); dim * width];
    for d in 0..dim {
        let y = x[d] - center[d];
        for m in -cut..=cut {
            axis[d * width + (m + cut) as usize] = Complex64::from_polar(1.0, m as f64 * y);
        }
    }
    let norm = (2.0 * PI).powf(-0.5 * dim as f64);
    let n = basis.len();
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    let coords = basis.flat_coords();
    for i in 0..n {
        let mut z = Complex64::new(norm, 0.0);
        for d in 0..dim {
            z *= axis[d * width + (coords[i * dim + d] + cut) as usize];
        }
        re.push(z.re);
        im.push(z.im);
    }
    (re, im)
}

/// Lowest `count` raw eigenvalues for each truncation radius.
pub fn lowest_eigenvalues(
    dim: usize,
    cutoffs: &[f64],
    count: usize,
    table: &mut FourierTable,
    center: &[f64],
) -> Result<Vec<Vec<f64>>> {
    cutoffs
        .iter()
        .map(|&c| {
            let basis = Arc::new(crate::lattice::enumerate_ball(dim, c)?);
            let h = assemble(basis, table, center)?;
            let s = eigensolve(&h, &SpectralOptions { verify: false, ..Default::default() })?;
            Ok(s.raw_eigenvalues().iter().take(count).copied().collect())
        })
        .collect()
}
