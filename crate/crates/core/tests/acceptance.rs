//! Acceptance criteria A1–A8. One PASS/FAIL line per criterion; pass names
//! (e.g. `A3 A6`) as arguments to run a subset. Exits non-zero if any
//! criterion fails or errors.

use std::cell::OnceCell;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weyllab_core::analysis::fit::log_space;
use weyllab_core::analysis::trig::{double_duhamel_identity_check, trig_identity_check};
use weyllab_core::analysis::{
    duhamel_identity_check, fit_exponent, perturbation_difference, r1_indicator_lower, MollifierSpec, Mode, R2Options,
};
use weyllab_core::bump::BumpVariant;
use weyllab_core::diagnostics::{
    band_ratio_from, default_x_grid, heat_bound_ratio_at, resolved_heat_grid, rough_bound_ratio_from, DensityTable, DEFAULT_HEAT_C,
    GRID_ENTRY_CAP,
};
use weyllab_core::lattice::{count_ball, enumerate_ball, shell_multiplicity, weyl_remainder};
use weyllab_core::potential::{log_slope, FourierTable, RadialSingularPotential};
use weyllab_core::spectral::cache::{solve_cached, CacheOutcome};
use weyllab_core::spectral::{assemble, eigensolve, lowest_eigenvalues, SpectralData, SpectralOptions};

type Outcome = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn a1() -> Outcome {
    let v = RadialSingularPotential::standard(2, 0.5, BumpVariant::Rho).map_err(err)?;
    let mut table = FourierTable::for_potential(&v);
    let basis = Arc::new(enumerate_ball(2, 6.0).map_err(err)?);
    let size = basis.len();
    let h = assemble(basis, &mut table, v.center()).map_err(err)?;
    let s = eigensolve(&h, &SpectralOptions::default()).map_err(err)?;
    let overlap = s.overlap_matrix(&h).map_err(err)?;
    let spec = MollifierSpec::new(3.0, 0.5, None).map_err(err)?;
    let rec = duhamel_identity_check(&s, &mut table, &overlap, &spec, v.center(), &R2Options::default()).map_err(err)?;
    Ok((
        size == 113 && rec.rel1 <= 1e-8 && rec.rel2 <= 1e-8,
        format!("basis {size}, h-diag {:.6e}, rel1 {:.2e}, rel2 {:.2e}", rec.h_v, rec.rel1, rec.rel2),
    ))
}

fn a2() -> Outcome {
    let mut ok = true;
    let mut worst_spread: f64 = 0.0;
    let mut worst_slope: f64 = 0.0;
    for n in [2usize, 3] {
        for eta in [0.3, 0.5, 0.8] {
            let v = RadialSingularPotential::standard(n, eta, BumpVariant::Chi).map_err(err)?;
            let mut t = FourierTable::for_potential(&v);
            let env = t.envelope_report(50.0).map_err(err)?;
            let slope = log_slope(&t, 20.0, 50.0).ok_or("too few entries for the slope")?;
            let spread = env.c_max / env.c_min;
            let dev = (slope + (n as f64 - 2.0 + eta)).abs();
            let good = env.c_min > 0.0 && spread <= 100.0 && dev <= 0.05;
            if !good {
                println!("  A2 n={n} eta={eta}: c_min {:.3e} c_max/c_min {spread:.3} slope {slope:.4}", env.c_min);
            }
            ok &= good;
            worst_spread = worst_spread.max(spread);
            worst_slope = worst_slope.max(dev);
        }
    }
    Ok((ok, format!("max c_max/c_min {worst_spread:.3}, max slope deviation {worst_slope:.4}")))
}

fn a3() -> Outcome {
    let lambdas = log_space(16.0, 128.0, 6);
    let mut points = Vec::new();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for &l in &lambdas {
        let basis = enumerate_ball(2, 4.0 * l).map_err(err)?;
        let mut t = FourierTable::model(2, 0.5);
        let r = r1_indicator_lower(&basis, &mut t, l).map_err(err)?;
        let frac = r.tail_bound / r.value.abs();
        worst = worst.max(frac);
        ok &= frac <= 0.05;
        println!("  A3 λ={l:.3} value {:.6e} tail bound {:.3e} ({:.2}%)", r.value, r.tail_bound, 100.0 * frac);
        points.push((l, r.value));
    }
    let fit = fit_exponent(&points, None).map_err(err)?;
    ok &= (fit.slope - 1.5).abs() <= 0.15;
    Ok((ok, format!("slope {:.4} (target 1.5 ± 0.15), worst tail fraction {:.2}%", fit.slope, 100.0 * worst)))
}

fn cache_dir() -> PathBuf {
    std::env::var_os("WEYLLAB_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("weyllab-cache"))
}

/// n = 2, η = 0.7, γ = 1, Λmax = 40.
fn desk_scale() -> Result<SpectralData, String> {
    let v = RadialSingularPotential::standard(2, 0.7, BumpVariant::Rho).map_err(err)?;
    let mut t = FourierTable::for_potential(&v);
    let basis = Arc::new(enumerate_ball(2, 40.0).map_err(err)?);
    let h = assemble(basis, &mut t, v.center()).map_err(err)?;
    let start = Instant::now();
    let (s, outcome) = solve_cached(&h, &SpectralOptions::default(), Some(&cache_dir())).map_err(err)?;
    match outcome {
        CacheOutcome::Hit(p) => println!("  eigensolve ({} modes) from cache {}", s.len(), p.display()),
        CacheOutcome::Miss(p, w) => {
            if let Some(w) = w {
                println!("  warning: {w}");
            }
            println!("  eigensolve ({} modes) took {:.1?}, stored at {}", s.len(), start.elapsed(), p.display());
        }
        CacheOutcome::Disabled => {}
    }
    Ok(s)
}

fn a4(s: &SpectralData) -> Outcome {
    let x0 = s.center().to_vec();
    let mut points = Vec::new();
    for l in log_space(6.0, 18.0, 8) {
        let spec = MollifierSpec::new(l, 0.7, None).map_err(err)?;
        let d = perturbation_difference(s, &spec, &x0, Mode::Mollified).map_err(err)?;
        println!("  A4 λ={l:.4} D={:.10e}", d.value);
        points.push((l, d.value));
    }
    let one_sign = points.iter().all(|p| p.1 > 0.0) || points.iter().all(|p| p.1 < 0.0);
    let fit = fit_exponent(&points, None).map_err(err)?;
    let ok = one_sign && fit.slope >= 0.9 && fit.slope <= 1.7 && fit.prefactor() > 0.0;
    Ok((
        ok,
        format!(
            "slope {:.4} (window [0.9, 1.7]), prefactor {:.4e}, one sign: {one_sign}, modes {}",
            fit.slope,
            fit.prefactor(),
            s.len()
        ),
    ))
}

fn brute_force(dim: usize, radius: f64) -> (u64, std::collections::BTreeMap<i64, u64>) {
    let r = radius.floor() as i64;
    let bound = radius * radius;
    let mut count = 0;
    let mut shells = std::collections::BTreeMap::new();
    let side = (2 * r + 1) as usize;
    for idx in 0..side.pow(dim as u32) {
        let mut i = idx;
        let mut m = 0i64;
        for _ in 0..dim {
            let c = (i % side) as i64 - r;
            i /= side;
            m += c * c;
        }
        if m as f64 <= bound {
            count += 1;
            *shells.entry(m).or_insert(0) += 1;
        }
    }
    (count, shells)
}

fn a5() -> Outcome {
    let mut ok = true;
    for dim in 2..=4 {
        for radius in [0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let (brute, shells) = brute_force(dim, radius);
            let counted = count_ball(dim, radius).map_err(err)?;
            let listed = enumerate_ball(dim, radius).map_err(err)?.len() as u64;
            let mut by_shell = 0;
            for (&m, &mult) in &shells {
                let s = shell_multiplicity(dim, m as u64).map_err(err)?;
                ok &= s == mult;
                by_shell += s;
            }
            if counted != brute || listed != brute || by_shell != brute {
                println!("  A5 dim={dim} r={radius}: brute {brute} count {counted} list {listed} shells {by_shell}");
                ok = false;
            }
        }
    }
    let r2 = weyl_remainder(2, 10.0).map_err(err)?;
    let dev = (r2 - (317.0 - 100.0 * PI)).abs();
    ok &= dev <= 1e-12;
    Ok((ok, format!("dims 2-4 × 6 radii exact, |r₂(10) - (317 - 100π)| = {dev:.1e}")))
}

fn a6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.gen_range(0.1..5.0);
        let a: [f64; 3] = [rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0)];
        worst = worst.max(trig_identity_check(t, a[0], a[1]).map_err(err)?);
        worst = worst.max(double_duhamel_identity_check(t, a[0], a[1], a[2]).map_err(err)?);
    }
    Ok((worst <= 1e-9, format!("max residual {worst:.2e} over 100 triples")))
}

fn a7() -> Outcome {
    let mut ok = true;
    // free spectrum
    let free_basis = Arc::new(enumerate_ball(2, 16.0).map_err(err)?);
    let h = assemble(free_basis.clone(), &mut FourierTable::zero(2), &[0.0, 0.0]).map_err(err)?;
    let s = eigensolve(&h, &SpectralOptions::default()).map_err(err)?;
    let dev = s
        .raw_eigenvalues()
        .iter()
        .zip(free_basis.norms_sq())
        .map(|(e, &m)| (e - m as f64).abs())
        .fold(0.0, f64::max);
    ok &= dev <= 1e-10 * 256.0;

    // trace and Parseval on the singular potential
    let v = RadialSingularPotential::standard(2, 0.5, BumpVariant::Rho).map_err(err)?;
    let mut t = FourierTable::for_potential(&v);
    let basis = Arc::new(enumerate_ball(2, 16.0).map_err(err)?);
    let h = assemble(basis, &mut t, v.center()).map_err(err)?;
    let s = eigensolve(&h, &SpectralOptions { verify: false, ..Default::default() }).map_err(err)?;
    let sum: f64 = s.raw_eigenvalues().iter().sum();
    let trace_rel = (sum - h.trace()).abs() / s.raw_eigenvalues().iter().map(|v| v.abs()).sum::<f64>();
    ok &= trace_rel <= 1e-9;

    // grid fine enough that every |e_j - e_k|² is integrated exactly
    let m = 2 * 16 + 2;
    let step = 2.0 * PI / m as f64;
    let lambda = 8.0;
    let mut avg = 0.0;
    for i in 0..m {
        for j in 0..m {
            avg += s.projector_diag(lambda, &[i as f64 * step, j as f64 * step]).map_err(err)?.value;
        }
    }
    avg /= (m * m) as f64;
    let expected = s.eig_count(lambda) as f64 / (4.0 * PI * PI);
    let parseval_rel = (avg - expected).abs() / expected;
    ok &= parseval_rel <= 1e-8;

    // Galerkin convergence
    let mut t = FourierTable::for_potential(&v);
    let lows = lowest_eigenvalues(2, &[16.0, 24.0, 32.0], 20, &mut t, v.center()).map_err(err)?;
    println!("  A7 lowest eigenvalues at Λmax = 16 / 24 / 32, relative change 24→32:");
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let rel = (lows[2][k] - lows[1][k]).abs() / lows[1][k].abs().max(1.0);
        worst = worst.max(rel);
        println!(
            "    {k:2} {:>14.8} {:>14.8} {:>14.8}  {:.3e}",
            lows[0][k], lows[1][k], lows[2][k], rel
        );
    }
    ok &= worst <= 5e-3;
    Ok((
        ok,
        format!(
            "free deviation {dev:.1e}, trace {trace_rel:.1e}, Parseval {parseval_rel:.1e}, Galerkin 24→32 {:.3}%",
            100.0 * worst
        ),
    ))
}

fn a8_reports(s: &SpectralData) -> Result<(Vec<u8>, f64, bool), String> {
    let x0 = s.center().to_vec();
    let grid = default_x_grid(&x0, 32, s.len(), GRID_ENTRY_CAP);
    let top = s.basis().cutoff() / 2.0;
    let table = DensityTable::new(s, &grid, top).map_err(err)?;
    let mut bytes = Vec::new();
    let mut finite = true;
    let mut rough = Vec::new();
    for l in log_space(4.0, top, 8) {
        let r = rough_bound_ratio_from(s, &table, l).map_err(err)?;
        finite &= r.all_finite();
        rough.push(r.max_ratio);
        bytes.extend(r.to_json().map_err(err)?.into_bytes());
        r.write_grid_csv(&mut bytes).map_err(err)?;
    }
    for l in [4.0, 8.0, 12.0, 16.0, top - 1.0] {
        let r = band_ratio_from(s, &table, l).map_err(err)?;
        finite &= r.all_finite();
        bytes.extend(r.to_json().map_err(err)?.into_bytes());
        r.write_grid_csv(&mut bytes).map_err(err)?;
    }
    let far: Vec<f64> = x0.iter().map(|c| c + PI).collect();
    let pairs = vec![
        (x0.clone(), x0.clone()),
        (x0.clone(), far.clone()),
        (far.clone(), far),
        (x0.clone(), x0.iter().map(|c| c + 0.5).collect()),
    ];
    let floor = 4.0 / s.basis().cutoff().powi(2);
    // the configured heat grid is the resolved part of t × pairs: elsewhere
    // the Gaussian lies below what the truncated kernel can represent
    let full = log_space(floor, 1.0, 6);
    let jobs = resolved_heat_grid(s, &full, &pairs, DEFAULT_HEAT_C).map_err(err)?;
    let heat = heat_bound_ratio_at(s, &jobs, &pairs, DEFAULT_HEAT_C).map_err(err)?;
    finite &= heat.all_finite() && !heat.grid.iter().any(|g| g.flagged);
    println!("  A8 heat grid: {} of {} (t, x, y) points resolved", jobs.len(), full.len() * pairs.len());
    bytes.extend(heat.to_json().map_err(err)?.into_bytes());
    heat.write_grid_csv(&mut bytes).map_err(err)?;
    let spread = rough.iter().copied().fold(0.0, f64::max) / rough.iter().copied().fold(f64::INFINITY, f64::min);
    println!("  A8 rough ratios {rough:.4?}, heat max {:.4e}", heat.max_ratio);
    Ok((bytes, spread, finite))
}

fn a8(s: &SpectralData) -> Outcome {
    let (first, spread, finite) = a8_reports(s)?;
    let (second, _, _) = a8_reports(s)?;
    let identical = first == second;
    Ok((
        finite && spread <= 3.0 && identical,
        format!("all finite: {finite}, rough spread {spread:.3} (≤ 3), byte-identical rerun: {identical}"),
    ))
}

fn main() {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| selected.is_empty() || selected.iter().any(|s| s.eq_ignore_ascii_case(name));
    let desk: OnceCell<Result<SpectralData, String>> = OnceCell::new();
    let desk_data = || desk.get_or_init(desk_scale).clone();

    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("A1", Duration::from_secs(10), Box::new(a1)),
        ("A2", Duration::from_secs(60), Box::new(a2)),
        ("A3", Duration::from_secs(300), Box::new(a3)),
        ("A4", Duration::from_secs(1800), Box::new(|| a4(&desk_data()?))),
        ("A5", Duration::from_secs(30), Box::new(a5)),
        ("A6", Duration::from_secs(10), Box::new(a6)),
        ("A7", Duration::from_secs(600), Box::new(a7)),
        ("A8", Duration::from_secs(300), Box::new(|| a8(&desk_data()?))),
    ];
    let mut failures = 0;
    for (name, budget, run) in criteria {
        if !wanted(name) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over = if elapsed > budget { format!(" [over {budget:?} budget]") } else { String::new() };
        match outcome {
            Ok((true, detail)) => println!("{name} PASS {detail} ({elapsed:.1?}){over}"),
            Ok((false, detail)) => {
                failures += 1;
                println!("{name} FAIL {detail} ({elapsed:.1?}){over}");
            }
            Err(e) => {
                failures += 1;
                println!("{name} FAIL error: {e} ({elapsed:.1?})");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
