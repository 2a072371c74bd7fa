//! Integer lattice points in balls, shells, annuli and spherical caps.
//!
//! Every radius is interpreted as a closed ball `|j| <= r`. Real radii are
//! converted once to the integer bound `floor(r^2)` (with a relative slack of
//! `1e-12` so that `sqrt(m)` squared back still includes the shell `m`);
//! everything below that conversion is exact integer arithmetic.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 5;

/// Default cap on the number of points `enumerate_ball` may materialise.
pub const DEFAULT_POINT_CAP: u64 = 100_000_000;

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

/// Integer bound `M` such that `|j| <= radius` iff `|j|^2 <= M`.
pub fn radius_to_norm_bound(radius: f64) -> Result<u64> {
    if !radius.is_finite() || radius < 0.0 {
        return Err(Error::invalid("radius", format!("{radius} is not a finite value >= 0")));
    }
    let r2 = radius * radius;
    Ok((r2 * (1.0 + 1e-12) + 1e-12).floor() as u64)
}

pub(crate) fn isqrt(m: u64) -> u64 {
    let mut r = (m as f64).sqrt() as u64;
    while r * r > m {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= m {
        r += 1;
    }
    r
}

/// `#{j in Z^dim : |j|^2 <= m}` by slicing along the first coordinate.
pub fn count_ball_sq(dim: usize, m: u64) -> u64 {
    match dim {
        0 => 1,
        1 => 2 * isqrt(m) + 1,
        _ => {
            let r = isqrt(m);
            // symmetric in the first coordinate
            let mut total = count_ball_sq(dim - 1, m);
            for x in 1..=r {
                total += 2 * count_ball_sq(dim - 1, m - x * x);
            }
            total
        }
    }
}

/// Number of lattice points in the closed ball of the given radius.
pub fn count_ball(dim: usize, radius: f64) -> Result<u64> {
    check_dim(dim)?;
    Ok(count_ball_sq(dim, radius_to_norm_bound(radius)?))
}

/// `#{j in Z^dim : |j|^2 = m}`.
pub fn shell_multiplicity(dim: usize, m: u64) -> Result<u64> {
    check_dim(dim)?;
    Ok(shell_count(dim, m))
}

fn shell_count(dim: usize, m: u64) -> u64 {
    match dim {
        0 => u64::from(m == 0),
        1 => {
            let r = isqrt(m);
            if r * r != m {
                0
            } else if m == 0 {
                1
            } else {
                2
            }
        }
        _ => {
            let r = isqrt(m);
            let mut total = shell_count(dim - 1, m);
            for x in 1..=r {
                total += 2 * shell_count(dim - 1, m - x * x);
            }
            total
        }
    }
}

/// Volume of the unit ball in `R^dim`, `pi^{n/2} / Gamma(n/2 + 1)`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / dim as f64 * unit_ball_volume(dim - 2),
    }
}

/// `count_ball(dim, r) - omega_dim * r^dim`.
pub fn weyl_remainder(dim: usize, radius: f64) -> Result<f64> {
    let count = count_ball(dim, radius)?;
    Ok(count as f64 - unit_ball_volume(dim) * radius.powi(dim as i32))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticePoint {
    pub coords: Vec<i64>,
    pub norm_sq: u64,
}

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Self {
        let norm_sq = coords.iter().map(|&c| (c * c) as u64).sum();
        Self { coords, norm_sq }
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq as f64).sqrt()
    }
}

/// All `j` with `|j| <= cutoff`, sorted by `(|j|^2, coords)`.
///
/// Coordinates are stored flat (`dim` consecutive entries per point) since the
/// Galerkin and lattice-sum loops walk them millions of times.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeBasis {
    dim: usize,
    cutoff: f64,
    coords: Vec<i64>,
    norms: Vec<u64>,
}

impl LatticeBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn coords(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm_sq(&self, i: usize) -> u64 {
        self.norms[i]
    }

    pub fn norms_sq(&self) -> &[u64] {
        &self.norms
    }

    pub fn flat_coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> LatticePoint {
        LatticePoint {
            coords: self.coords(i).to_vec(),
            norm_sq: self.norms[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Index of a point, by binary search on the canonical order.
    pub fn index_of(&self, coords: &[i64]) -> Option<usize> {
        if coords.len() != self.dim {
            return None;
        }
        let norm: u64 = coords.iter().map(|&c| (c * c) as u64).sum();
        let lo = self.norms.partition_point(|&m| m < norm);
        let hi = self.norms.partition_point(|&m| m <= norm);
        (lo..hi)
            .find(|&i| self.coords(i) == coords)
    }

    /// Sorted distinct `|j|^2` values and, per point, the index of its shell.
    pub fn shells(&self) -> (Vec<u64>, Vec<usize>) {
        let mut distinct: Vec<u64> = Vec::new();
        let mut index = Vec::with_capacity(self.len());
        for &m in &self.norms {
            if distinct.last() != Some(&m) {
                distinct.push(m);
            }
            index.push(distinct.len() - 1);
        }
        (distinct, index)
    }

    /// Largest `|j - k|^2` over pairs of basis points.
    pub fn max_offset_norm_sq(&self) -> u64 {
        let b = radius_to_norm_bound(self.cutoff).unwrap_or(0);
        // |j - k| <= 2 * cutoff
        4 * b
    }
}

/// Enumerate the closed ball with the default point cap.
pub fn enumerate_ball(dim: usize, radius: f64) -> Result<LatticeBasis> {
    enumerate_ball_with_cap(dim, radius, DEFAULT_POINT_CAP)
}

pub fn enumerate_ball_with_cap(dim: usize, radius: f64, cap: u64) -> Result<LatticeBasis> {
    check_dim(dim)?;
    let bound = radius_to_norm_bound(radius)?;
    let count = count_ball_sq(dim, bound);
    if count > cap {
        return Err(Error::MemoryCap { requested: count, cap });
    }
    let mut points: Vec<(u64, Vec<i64>)> = Vec::with_capacity(count as usize);
    let mut current = vec![0i64; dim];
    collect_ball(dim, 0, bound, &mut current, &mut points);
    points.sort_unstable();
    debug_assert_eq!(points.len() as u64, count);

    let mut coords = Vec::with_capacity(points.len() * dim);
    let mut norms = Vec::with_capacity(points.len());
    for (m, c) in points {
        norms.push(m);
        coords.extend_from_slice(&c);
    }
    Ok(LatticeBasis {
        dim,
        cutoff: radius,
        coords,
        norms,
    })
}

fn collect_ball(
    dim: usize,
    axis: usize,
    remaining: u64,
    current: &mut Vec<i64>,
    out: &mut Vec<(u64, Vec<i64>)>,
) {
    if axis == dim {
        let norm = current.iter().map(|&c| (c * c) as u64).sum();
        out.push((norm, current.clone()));
        return;
    }
    let r = isqrt(remaining) as i64;
    for x in -r..=r {
        current[axis] = x;
        collect_ball(dim, axis + 1, remaining - (x * x) as u64, current, out);
    }
    current[axis] = 0;
}

/// Lattice points with `|j|^2 == m` in canonical order.
pub fn sphere_points(dim: usize, m: u64) -> Result<Vec<LatticePoint>> {
    check_dim(dim)?;
    let mut out = Vec::new();
    let mut current = vec![0i64; dim];
    collect_sphere(dim, 0, m, &mut current, &mut out);
    out.sort_by(|a, b| a.coords.cmp(&b.coords));
    Ok(out)
}

fn collect_sphere(dim: usize, axis: usize, remaining: u64, current: &mut Vec<i64>, out: &mut Vec<LatticePoint>) {
    if axis + 1 == dim {
        let r = isqrt(remaining);
        if r * r == remaining {
            current[axis] = r as i64;
            out.push(LatticePoint::new(current.clone()));
            if r != 0 {
                current[axis] = -(r as i64);
                out.push(LatticePoint::new(current.clone()));
            }
        }
        current[axis] = 0;
        return;
    }
    let r = isqrt(remaining) as i64;
    for x in -r..=r {
        current[axis] = x;
        collect_sphere(dim, axis + 1, remaining - (x * x) as u64, current, out);
    }
    current[axis] = 0;
}

/// Half-open window `[2^{t-1}, 2^{t+1})` used for the dyadic relation
/// `v ≈ 2^t`; the bottom bucket `t = 0` is widened to `[0, 2)`.
pub fn dyadic_window(t: u32) -> (f64, f64) {
    if t == 0 {
        (0.0, 2.0)
    } else {
        (2f64.powi(t as i32 - 1), 2f64.powi(t as i32 + 1))
    }
}

pub const DYADIC_CONVENTION: &str = "v ≈ 2^t means v in [2^(t-1), 2^(t+1)); t = 0 uses [0, 2)";

fn in_window(v: f64, t: u32) -> bool {
    let (lo, hi) = dyadic_window(t);
    v >= lo && v < hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusRatios {
    pub j: f64,
    pub max_k: f64,
    pub s: f64,
}

/// Exact counts for the sets `S_{lm}`, `J_{lm}` and `K_{lm}(j)` with pairs
/// `lambda/2 < |j| < lambda <= |k| < 2 lambda`, `|k-j| ≈ 2^m`, `|k|-|j| ≈ 2^l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusCensus {
    pub dim: usize,
    pub lambda: f64,
    pub ell: u32,
    pub m: u32,
    pub j_count: u64,
    pub max_k_count: u64,
    pub s_count: u64,
    pub bound_ratios: CensusRatios,
    pub window: String,
}

impl AnnulusCensus {
    fn new(dim: usize, lambda: f64, ell: u32, m: u32, j_count: u64, max_k_count: u64, s_count: u64) -> Self {
        let n1 = (dim - 1) as f64;
        let two_l = 2f64.powi(ell as i32) + 1.0;
        let two_m = 2f64.powi(m as i32).powf(n1);
        let lam = lambda.powf(n1);
        Self {
            dim,
            lambda,
            ell,
            m,
            j_count,
            max_k_count,
            s_count,
            bound_ratios: CensusRatios {
                j: j_count as f64 / (lam * two_l),
                max_k: max_k_count as f64 / (two_m * two_l),
                s: s_count as f64 / (lam * two_m * two_l * two_l),
            },
            window: DYADIC_CONVENTION.to_string(),
        }
    }
}

/// Representatives of the hyperoctahedral orbits of `points` (coordinates
/// with non-increasing absolute values, all non-negative) with orbit sizes.
pub(crate) fn orbit_representatives(basis: &LatticeBasis, keep: impl Fn(u64) -> bool) -> Vec<(Vec<i64>, u64)> {
    let dim = basis.dim();
    let mut reps = Vec::new();
    for i in 0..basis.len() {
        if !keep(basis.norm_sq(i)) {
            continue;
        }
        let c = basis.coords(i);
        let canonical = c.iter().all(|&x| x >= 0) && c.windows(2).all(|w| w[0] >= w[1]);
        if canonical {
            reps.push((c.to_vec(), orbit_size(c)));
        }
    }
    let _ = dim;
    reps
}

fn orbit_size(c: &[i64]) -> u64 {
    let n = c.len() as u64;
    let factorial = |k: u64| (1..=k).product::<u64>().max(1);
    let nonzero = c.iter().filter(|&&x| x != 0).count() as u32;
    let mut size = factorial(n) * 2u64.pow(nonzero);
    let mut i = 0;
    while i < c.len() {
        let mut j = i;
        while j < c.len() && c[j] == c[i] {
            j += 1;
        }
        size /= factorial((j - i) as u64);
        i = j;
    }
    size
}

fn annulus_points(dim: usize, lambda: f64) -> Result<(LatticeBasis, LatticeBasis)> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be a positive finite number"));
    }
    let inner = enumerate_ball(dim, lambda)?;
    let outer = enumerate_ball(dim, 2.0 * lambda)?;
    Ok((inner, outer))
}

/// Census for a single `(ell, m)` bucket.
pub fn annulus_census(dim: usize, lambda: f64, ell: u32, m: u32) -> Result<AnnulusCensus> {
    let grid = census_pass(dim, lambda, Some((ell, m)))?;
    Ok(grid.into_iter().next().unwrap_or_else(|| AnnulusCensus::new(dim, lambda, ell, m, 0, 0, 0)))
}

/// Census for every bucket with a non-empty `S_{lm}`, in one pass over pairs.
pub fn annulus_census_grid(dim: usize, lambda: f64) -> Result<Vec<AnnulusCensus>> {
    census_pass(dim, lambda, None)
}

fn census_pass(dim: usize, lambda: f64, only: Option<(u32, u32)>) -> Result<Vec<AnnulusCensus>> {
    check_dim(dim)?;
    let (inner, outer) = annulus_points(dim, lambda)?;
    let lam2 = lambda * lambda;
    let j_reps = orbit_representatives(&inner, |m| {
        let m = m as f64;
        m > lam2 / 4.0 && m < lam2
    });
    let ks: Vec<usize> = (0..outer.len())
        .filter(|&i| {
            let m = outer.norm_sq(i) as f64;
            m >= lam2 && m < 4.0 * lam2
        })
        .collect();

    // bucket index bound: differences are < 3 lambda
    let tmax = ((3.0 * lambda).log2().ceil().max(1.0) as u32) + 1;
    let nb = (tmax + 1) as usize;
    let mut j_count = vec![0u64; nb * nb];
    let mut max_k = vec![0u64; nb * nb];
    let mut s_count = vec![0u64; nb * nb];
    let mut local = vec![0u64; nb * nb];

    for (j, weight) in &j_reps {
        local.iter_mut().for_each(|v| *v = 0);
        let jn = (j.iter().map(|&c| (c * c) as u64).sum::<u64>() as f64).sqrt();
        for &ki in &ks {
            let k = outer.coords(ki);
            let kn = (outer.norm_sq(ki) as f64).sqrt();
            let d2: i64 = k.iter().zip(j).map(|(a, b)| (a - b) * (a - b)).sum();
            let d = (d2 as f64).sqrt();
            let delta = kn - jn;
            for l in buckets(delta, tmax) {
                for mm in buckets(d, tmax) {
                    if let Some((ol, om)) = only {
                        if ol != l || om != mm {
                            continue;
                        }
                    }
                    local[l as usize * nb + mm as usize] += 1;
                }
            }
        }
        for (b, &c) in local.iter().enumerate() {
            if c > 0 {
                j_count[b] += weight;
                s_count[b] += weight * c;
                max_k[b] = max_k[b].max(c);
            }
        }
    }

    let mut out = Vec::new();
    for l in 0..nb {
        for mm in 0..nb {
            let b = l * nb + mm;
            let wanted = match only {
                Some((ol, om)) => ol as usize == l && om as usize == mm,
                None => s_count[b] > 0,
            };
            if wanted {
                out.push(AnnulusCensus::new(dim, lambda, l as u32, mm as u32, j_count[b], max_k[b], s_count[b]));
            }
        }
    }
    Ok(out)
}

fn buckets(v: f64, tmax: u32) -> impl Iterator<Item = u32> {
    (0..=tmax).filter(move |&t| in_window(v, t))
}

/// Maximal number of lattice points of the sphere `|j|^2 = lambda_sq` inside a
/// Euclidean ball of radius `cap_radius` centred at one of the sphere's own
/// lattice points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapCensus {
    pub lambda_sq: u64,
    pub cap_radius: f64,
    pub max_count: u64,
    pub argmax_center: Option<LatticePoint>,
    pub empty: bool,
}

pub fn cap_count(dim: usize, lambda_sq: u64, cap_radius: f64) -> Result<CapCensus> {
    check_dim(dim)?;
    if lambda_sq < 1 {
        return Err(Error::invalid("lambda_sq", "must be >= 1"));
    }
    if !(cap_radius.is_finite() && cap_radius > 0.0) {
        return Err(Error::invalid("cap_radius", "must be positive"));
    }
    let pts = sphere_points(dim, lambda_sq)?;
    if pts.is_empty() {
        return Ok(CapCensus {
            lambda_sq,
            cap_radius,
            max_count: 0,
            argmax_center: None,
            empty: true,
        });
    }
    let r2 = cap_radius * cap_radius * (1.0 + 1e-12);
    let mut best = (0u64, 0usize);
    for (ci, c) in pts.iter().enumerate() {
        let count = pts
            .iter()
            .filter(|p| {
                let d2: i64 = p.coords.iter().zip(&c.coords).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2 as f64) <= r2
            })
            .count() as u64;
        if count > best.0 {
            best = (count, ci);
        }
    }
    Ok(CapCensus {
        lambda_sq,
        cap_radius,
        max_count: best.0,
        argmax_center: Some(pts[best.1].clone()),
        empty: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_count(dim: usize, radius: f64) -> u64 {
        let r = radius.floor() as i64;
        let bound = radius_to_norm_bound(radius).unwrap();
        let side = (2 * r + 1) as usize;
        let total = side.pow(dim as u32);
        let mut count = 0;
        for idx in 0..total {
            let mut rest = idx;
            let mut norm = 0u64;
            for _ in 0..dim {
                let c = (rest % side) as i64 - r;
                rest /= side;
                norm += (c * c) as u64;
            }
            if norm <= bound {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn small_balls() {
        let b = enumerate_ball(2, 1.0).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b.coords(0), &[0, 0]);
        assert_eq!(enumerate_ball(3, 2.0).unwrap().len(), 33);
        assert_eq!(brute_count(3, 2.0), 33);
        assert_eq!(count_ball(2, 10.0).unwrap(), 317);
        assert_eq!(brute_count(2, 10.0), 317);
        assert_eq!(count_ball(2, 0.5).unwrap(), 1);
        assert_eq!(count_ball(4, 3.0).unwrap(), brute_count(4, 3.0));
    }

    #[test]
    fn shells() {
        assert_eq!(shell_multiplicity(2, 0).unwrap(), 1);
        assert_eq!(shell_multiplicity(2, 25).unwrap(), 12);
        assert_eq!(shell_multiplicity(2, 3).unwrap(), 0);
        let total: u64 = (0..=100).map(|m| shell_multiplicity(3, m).unwrap()).sum();
        assert_eq!(total, count_ball(3, 10.0).unwrap());
    }

    #[test]
    fn remainder_values() {
        assert_eq!(weyl_remainder(2, 0.0).unwrap(), 1.0);
        let r = weyl_remainder(2, 10.0).unwrap();
        assert!((r - (317.0 - 100.0 * PI)).abs() < 1e-12);
        let n = brute_count(3, 5.0) as f64;
        let r3 = weyl_remainder(3, 5.0).unwrap();
        assert!((r3 - (n - 4.0 * PI / 3.0 * 125.0)).abs() < 1e-9);
    }

    #[test]
    fn unit_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(5) - 8.0 * PI * PI / 15.0).abs() < 1e-14);
    }

    #[test]
    fn radius_at_shell_includes_shell() {
        assert_eq!(radius_to_norm_bound(3f64.sqrt()).unwrap(), 3);
        assert_eq!(radius_to_norm_bound(2f64.sqrt()).unwrap(), 2);
        assert!(radius_to_norm_bound(-1.0).is_err());
        assert!(count_ball(6, 1.0).is_err());
        assert!(count_ball(1, 1.0).is_err());
    }

    #[test]
    fn memory_cap_is_enforced() {
        let err = enumerate_ball_with_cap(2, 10.0, 100).unwrap_err();
        assert!(matches!(err, Error::MemoryCap { requested: 317, cap: 100 }));
    }

    #[test]
    fn basis_order_and_lookup() {
        let b = enumerate_ball(2, 3.0).unwrap();
        for i in 1..b.len() {
            let prev = (b.norm_sq(i - 1), b.coords(i - 1));
            let cur = (b.norm_sq(i), b.coords(i));
            assert!(prev < cur);
        }
        let i = b.index_of(&[1, -2]).unwrap();
        assert_eq!(b.coords(i), &[1, -2]);
        assert!(b.index_of(&[4, 0]).is_none());
        let (distinct, idx) = b.shells();
        assert_eq!(distinct, vec![0, 1, 2, 4, 5, 8, 9]);
        assert_eq!(distinct[idx[b.len() - 1]], 9);
    }

    #[test]
    fn orbit_sizes_cover_ball() {
        let b = enumerate_ball(3, 4.0).unwrap();
        let reps = orbit_representatives(&b, |_| true);
        let total: u64 = reps.iter().map(|r| r.1).sum();
        assert_eq!(total, b.len() as u64);
        let b2 = enumerate_ball(2, 7.5).unwrap();
        let total2: u64 = orbit_representatives(&b2, |_| true).iter().map(|r| r.1).sum();
        assert_eq!(total2, b2.len() as u64);
    }

    #[test]
    fn caps() {
        let c = cap_count(2, 25, 1.0).unwrap();
        assert_eq!(c.max_count, 1);
        let c = cap_count(2, 25, 4.0).unwrap();
        assert_eq!(c.max_count, 3);
        let c = cap_count(2, 3, 1.0).unwrap();
        assert_eq!(c.max_count, 0);
        assert!(c.empty);
        assert!(c.argmax_center.is_none());
    }

    #[test]
    fn dyadic_windows() {
        assert_eq!(dyadic_window(0), (0.0, 2.0));
        assert_eq!(dyadic_window(1), (1.0, 4.0));
        assert_eq!(dyadic_window(3), (4.0, 16.0));
        assert!(in_window(0.3, 0));
        assert!(!in_window(0.3, 1));
    }

    fn brute_census(dim: usize, lambda: f64, ell: u32, m: u32) -> (u64, u64, u64) {
        let outer = enumerate_ball(dim, 2.0 * lambda).unwrap();
        let lam2 = lambda * lambda;
        let mut js = 0;
        let mut maxk = 0;
        let mut s = 0;
        for a in 0..outer.len() {
            let ja = outer.norm_sq(a) as f64;
            if !(ja > lam2 / 4.0 && ja < lam2) {
                continue;
            }
            let mut kc = 0;
            for b in 0..outer.len() {
                let kb = outer.norm_sq(b) as f64;
                if !(kb >= lam2 && kb < 4.0 * lam2) {
                    continue;
                }
                let d2: i64 = outer.coords(a).iter().zip(outer.coords(b)).map(|(x, y)| (x - y) * (x - y)).sum();
                if in_window((d2 as f64).sqrt(), m) && in_window(kb.sqrt() - ja.sqrt(), ell) {
                    kc += 1;
                }
            }
            if kc > 0 {
                js += 1;
                s += kc;
                maxk = maxk.max(kc);
            }
        }
        (js, maxk, s)
    }

    #[test]
    fn census_matches_brute_force() {
        for &(dim, lambda, ell, m) in &[(2, 20.0, 0, 2), (3, 6.0, 1, 3), (2, 9.5, 2, 3)] {
            let c = annulus_census(dim, lambda, ell, m).unwrap();
            let (j, k, s) = brute_census(dim, lambda, ell, m);
            assert_eq!((c.j_count, c.max_k_count, c.s_count), (j, k, s), "{dim} {lambda} {ell} {m}");
            assert!(c.bound_ratios.s.is_finite());
        }
    }

    #[test]
    fn census_empty_is_zero() {
        let c = annulus_census(2, 1.2, 5, 5).unwrap();
        assert_eq!((c.j_count, c.max_k_count, c.s_count), (0, 0, 0));
        assert_eq!(c.bound_ratios.s, 0.0);
    }

    #[test]
    fn census_grid_agrees_with_single_bucket() {
        let grid = annulus_census_grid(2, 12.0).unwrap();
        assert!(!grid.is_empty());
        for g in grid.iter().take(6) {
            let single = annulus_census(2, 12.0, g.ell, g.m).unwrap();
            assert_eq!(single, *g);
        }
    }
}
