use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};

use weyllab_core::analysis::fit::{fit_exponent, FitReport};
use weyllab_core::analysis::remainder::{perturbation_difference, pointwise_remainder};
use weyllab_core::analysis::sums::{duhamel_identity_check, r1_indicator_lower, r1_sum, r2_sum, R2Options};
use weyllab_core::analysis::{MollifierSpec, Mode};
use weyllab_core::diagnostics::{
    band_ratio_from, default_x_grid, heat_bound_ratio, p0, rough_bound_ratio_from, sogge_exponent, BoundReport,
    DensityTable, GRID_ENTRY_CAP,
};
use weyllab_core::lattice::{
    annulus_census, annulus_census_grid, cap_count, count_ball, enumerate_ball, shell_multiplicity, weyl_remainder,
    AnnulusCensus, DYADIC_CONVENTION,
};
use weyllab_core::potential::FourierTable;
use weyllab_core::spectral::cache::{cache_dir, solve_cached, CacheOutcome};
use weyllab_core::spectral::{assemble, Flags, Hamiltonian, SpectralData, SpectralOptions};

use crate::config::{ExperimentConfig, Format};
use crate::output::{num, Csv, Writer};
use crate::CliError;

/// Relative residual below which `duhamel-check` succeeds.
pub const DUHAMEL_TOL: f64 = 1e-8;

pub struct Ctx {
    pub out_dir: PathBuf,
    pub config: Option<ExperimentConfig>,
    pub config_path: Option<PathBuf>,
}

impl Ctx {
    fn config(&self) -> Result<&ExperimentConfig, CliError> {
        self.config
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs --config <file>".into()))
    }

    fn writer(&self, command: &str) -> Result<Writer, CliError> {
        let meta = match (&self.config, &self.config_path) {
            (Some(c), p) => json!({ "config": c, "config_path": p }),
            _ => json!({}),
        };
        Ok(Writer::new(&self.out_dir, command, meta)?)
    }

    fn format(&self) -> Format {
        self.config.as_ref().map(|c| c.output.format).unwrap_or_default()
    }
}

/// A table written as CSV or as a JSON array of records, per `output.format`.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Field>>,
}

enum Field {
    Num(f64),
    Int(i128),
    Text(String),
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn write(&self, w: &mut Writer, stem: &str, format: Format) -> Result<PathBuf, CliError> {
        match format {
            Format::Csv => {
                let mut csv = Csv::new(&self.columns);
                for r in &self.rows {
                    csv.row(
                        &r.iter()
                            .map(|f| match f {
                                Field::Num(v) => num(*v),
                                Field::Int(v) => v.to_string(),
                                Field::Text(s) => s.clone(),
                            })
                            .collect::<Vec<_>>(),
                    );
                }
                Ok(w.text(&format!("{stem}.csv"), &csv.into_string())?)
            }
            Format::Json => {
                let records: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let obj: serde_json::Map<String, Value> = self
                            .columns
                            .iter()
                            .zip(r)
                            .map(|(c, f)| {
                                let v = match f {
                                    Field::Num(v) => json!(v),
                                    Field::Int(v) => json!(*v as i64),
                                    Field::Text(s) => json!(s),
                                };
                                (c.to_string(), v)
                            })
                            .collect();
                        Value::Object(obj)
                    })
                    .collect();
                Ok(w.json(&format!("{stem}.json"), &Value::Array(records))?)
            }
        }
    }
}

fn flag_text(f: Flags) -> String {
    f.names().join("|")
}

pub fn count(ctx: &Ctx, dim: usize, radius: f64) -> Result<i32, CliError> {
    let n = count_ball(dim, radius)?;
    let r = weyl_remainder(dim, radius)?;
    let mut t = Table::new(&["dim", "radius", "count", "remainder"]);
    t.push(vec![Field::Int(dim as i128), Field::Num(radius), Field::Int(n as i128), Field::Num(r)]);
    let mut w = ctx.writer("count")?;
    t.write(&mut w, "count", ctx.format())?;
    w.finish()?;
    println!("{n}");
    Ok(0)
}

pub fn shells(ctx: &Ctx, dim: usize, max_norm_sq: u64) -> Result<i32, CliError> {
    let mut t = Table::new(&["m", "multiplicity"]);
    let mut total = 0u64;
    for m in 0..=max_norm_sq {
        let k = shell_multiplicity(dim, m)?;
        total += k;
        t.push(vec![Field::Int(m as i128), Field::Int(k as i128)]);
    }
    let mut w = ctx.writer("shells")?;
    t.write(&mut w, "shells", ctx.format())?;
    w.finish()?;
    println!("{total}");
    Ok(0)
}

pub fn annulus(ctx: &Ctx, dim: usize, lambda: f64, bucket: Option<(u32, u32)>) -> Result<i32, CliError> {
    let rows: Vec<AnnulusCensus> = match bucket {
        Some((l, m)) => vec![annulus_census(dim, lambda, l, m)?],
        None => annulus_census_grid(dim, lambda)?,
    };
    let mut t = Table::new(&[
        "dim", "lambda", "ell", "m", "j_count", "max_k_count", "s_count", "ratio_j", "ratio_max_k", "ratio_s",
    ]);
    for c in &rows {
        t.push(vec![
            Field::Int(c.dim as i128),
            Field::Num(c.lambda),
            Field::Int(c.ell as i128),
            Field::Int(c.m as i128),
            Field::Int(c.j_count as i128),
            Field::Int(c.max_k_count as i128),
            Field::Int(c.s_count as i128),
            Field::Num(c.bound_ratios.j),
            Field::Num(c.bound_ratios.max_k),
            Field::Num(c.bound_ratios.s),
        ]);
    }
    let mut w = ctx.writer("annulus")?;
    w.note("window", json!(DYADIC_CONVENTION));
    t.write(&mut w, "annulus", ctx.format())?;
    w.finish()?;
    println!("{} buckets", rows.len());
    Ok(0)
}

pub fn caps(ctx: &Ctx, dim: usize, lambda_sq: u64, radius: f64) -> Result<i32, CliError> {
    let c = cap_count(dim, lambda_sq, radius)?;
    let mut w = ctx.writer("caps")?;
    w.json("caps.json", &serde_json::to_value(&c)?)?;
    w.finish()?;
    println!("{}", c.max_count);
    Ok(0)
}

fn basis_for(c: &ExperimentConfig) -> Result<Arc<weyllab_core::lattice::LatticeBasis>, CliError> {
    Ok(Arc::new(enumerate_ball(c.dimension, c.truncation)?))
}

fn hamiltonian(c: &ExperimentConfig) -> Result<(Hamiltonian, FourierTable), CliError> {
    let v = c.potential()?;
    let mut table = FourierTable::for_potential(&v);
    let h = assemble(basis_for(c)?, &mut table, &c.center())?;
    Ok((h, table))
}

/// Eigensolve through the cache; cache status goes to the sidecar only.
fn solve(ctx: &Ctx, w: &mut Writer) -> Result<(SpectralData, Hamiltonian, FourierTable), CliError> {
    let c = ctx.config()?;
    let (h, table) = hamiltonian(c)?;
    let dir = cache_dir(c.cache_dir.as_deref());
    let (s, outcome) = solve_cached(&h, &SpectralOptions::default(), dir.as_deref())?;
    let status = match outcome {
        CacheOutcome::Disabled => json!("disabled"),
        CacheOutcome::Hit(p) => json!({ "hit": p }),
        CacheOutcome::Miss(p, warning) => {
            if let Some(msg) = &warning {
                eprintln!("warning: {msg}");
            }
            json!({ "miss": p, "warning": warning })
        }
    };
    w.note("cache", status);
    Ok((s, h, table))
}

pub fn fourier(ctx: &Ctx, xi_max: Option<f64>) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let v = c.potential()?;
    let mut table = FourierTable::for_potential(&v);
    let xi = xi_max.unwrap_or(2.0 * c.truncation);
    let env = table.envelope_report(xi)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let mut w = ctx.writer("fourier")?;
    w.text("fourier.csv", &String::from_utf8(csv).expect("CSV is UTF-8"))?;
    w.json("envelope.json", &serde_json::to_value(&env)?)?;
    w.finish()?;
    println!("c_min {} c_max {}", num(env.c_min), num(env.c_max));
    Ok(0)
}

pub fn assemble_cmd(ctx: &Ctx) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let (h, _) = hamiltonian(c)?;
    let summary = json!({
        "dimension": c.dimension,
        "truncation": c.truncation,
        "basis_size": h.size(),
        "trace": h.trace(),
        "v00": h.v00(),
        "fingerprint": h.fingerprint(),
    });
    let mut w = ctx.writer("assemble")?;
    w.json("assemble.json", &summary)?;
    w.finish()?;
    println!("{}", h.size());
    Ok(0)
}

pub fn eigs(ctx: &Ctx) -> Result<i32, CliError> {
    let mut w = ctx.writer("eigs")?;
    let (s, _, _) = solve(ctx, &mut w)?;
    let mut t = Table::new(&["index", "tau_sq", "tau"]);
    for k in 0..s.len() {
        t.push(vec![Field::Int(k as i128), Field::Num(s.eigenvalues()[k]), Field::Num(s.tau(k))]);
    }
    t.write(&mut w, "eigs", ctx.format())?;
    w.json(
        "eigs_summary.json",
        &json!({
            "basis_size": s.len(),
            "shift": s.shift(),
            "min_raw_eigenvalue": s.raw_eigenvalues()[0],
            "reliability_cutoff": s.reliability_cutoff(),
            "fingerprint": s.fingerprint(),
        }),
    )?;
    w.finish()?;
    println!("{} eigenvalues, shift {}", s.len(), num(s.shift()));
    Ok(0)
}

fn modes(which: &str) -> Result<Vec<Mode>, CliError> {
    match which {
        "indicator" => Ok(vec![Mode::Indicator]),
        "mollified" => Ok(vec![Mode::Mollified]),
        "both" => Ok(vec![Mode::Indicator, Mode::Mollified]),
        other => Err(CliError::Usage(format!("unknown mode `{other}`"))),
    }
}

fn spec(c: &ExperimentConfig, lambda: f64) -> Result<MollifierSpec, CliError> {
    Ok(MollifierSpec::new(lambda, c.eta, Some(c.epsilon()))?)
}

pub fn weyl(ctx: &Ctx, mode: &str, difference: bool) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let modes = modes(mode)?;
    let stem = if difference { "weyl_difference" } else { "weyl" };
    let mut w = ctx.writer(stem)?;
    let (s, _, _) = solve(ctx, &mut w)?;
    let mut t = Table::new(&["lambda", "x_index", "value", "mode", "warning_flags"]);
    for l in c.lambda_grid.values() {
        let sp = spec(c, l)?;
        for (i, x) in c.x_points().iter().enumerate() {
            for &m in &modes {
                let r = if difference {
                    perturbation_difference(&s, &sp, x, m)?
                } else {
                    pointwise_remainder(&s, &sp, x, m)?
                };
                t.push(vec![
                    Field::Num(l),
                    Field::Int(i as i128),
                    Field::Num(r.value),
                    Field::Text(m.as_str().to_string()),
                    Field::Text(flag_text(r.flags)),
                ]);
            }
        }
    }
    t.write(&mut w, stem, ctx.format())?;
    w.finish()?;
    Ok(0)
}

pub fn duhamel_check(ctx: &Ctx, lambda: Option<f64>) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let l = lambda.unwrap_or(c.lambda_grid.max);
    let sp = spec(c, l)?;
    let (h, mut table) = hamiltonian(c)?;
    let s = weyllab_core::spectral::eigensolve(&h, &SpectralOptions::default())?;
    let overlap = s.overlap_matrix(&h)?;
    let mut t = Table::new(&["lambda", "x_index", "h_v", "h_0", "r1", "r2", "res1", "res2", "rel1", "rel2"]);
    let mut ok = true;
    for (i, x) in c.x_points().iter().enumerate() {
        let r = duhamel_identity_check(&s, &mut table, &overlap, &sp, x, &R2Options::default())?;
        ok &= r.rel1 <= DUHAMEL_TOL && r.rel2 <= DUHAMEL_TOL;
        println!("x[{i}] res1 {} res2 {} rel1 {:.3e} rel2 {:.3e}", num(r.res1), num(r.res2), r.rel1, r.rel2);
        t.push(
            [l, i as f64, r.h_v, r.h_0, r.r1, r.r2, r.res1, r.res2, r.rel1, r.rel2]
                .iter()
                .enumerate()
                .map(|(k, &v)| if k == 1 { Field::Int(i as i128) } else { Field::Num(v) })
                .collect(),
        );
    }
    let mut w = ctx.writer("duhamel")?;
    w.note("tolerance", json!(DUHAMEL_TOL));
    t.write(&mut w, "duhamel", ctx.format())?;
    w.finish()?;
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { 0 } else { 2 })
}

pub fn r1(ctx: &Ctx) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let v = c.potential()?;
    let mut table = FourierTable::for_potential(&v);
    let basis = basis_for(c)?;
    let mut t = Table::new(&["lambda", "x_index", "value", "tail_bound", "outer_weight", "warning_flags"]);
    for l in c.lambda_grid.values() {
        let sp = spec(c, l)?;
        for (i, x) in c.x_points().iter().enumerate() {
            let r = r1_sum(&basis, &mut table, &sp, &c.center(), x)?;
            t.push(vec![
                Field::Num(l),
                Field::Int(i as i128),
                Field::Num(r.value),
                Field::Num(r.tail_bound),
                Field::Num(r.outer_weight),
                Field::Text(flag_text(r.flags)),
            ]);
        }
    }
    let mut w = ctx.writer("r1")?;
    t.write(&mut w, "r1", ctx.format())?;
    w.finish()?;
    Ok(0)
}

pub fn r1_lower(ctx: &Ctx, table_kind: &str) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let mut table = match table_kind {
        "model" => FourierTable::model(c.dimension, c.eta),
        "potential" => FourierTable::for_potential(&c.potential()?),
        other => return Err(CliError::Usage(format!("unknown table `{other}` (model|potential)"))),
    };
    let basis = basis_for(c)?;
    let mut t = Table::new(&[
        "lambda", "value", "truncated_sum", "tail_integral", "tail_bound", "raw_tail_bound", "warning_flags",
    ]);
    for l in c.lambda_grid.values() {
        let r = r1_indicator_lower(&basis, &mut table, l)?;
        t.push(vec![
            Field::Num(l),
            Field::Num(r.value),
            Field::Num(r.truncated_sum),
            Field::Num(r.tail_integral.unwrap_or(0.0)),
            Field::Num(r.tail_bound),
            Field::Num(r.raw_tail_bound),
            Field::Text(flag_text(r.flags)),
        ]);
    }
    let mut w = ctx.writer("r1_lower")?;
    w.note("table", json!(table_kind));
    t.write(&mut w, "r1_lower", ctx.format())?;
    w.finish()?;
    Ok(0)
}

pub fn r2(ctx: &Ctx) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let mut w = ctx.writer("r2")?;
    let (s, h, mut table) = solve(ctx, &mut w)?;
    let overlap = s.overlap_matrix(&h)?;
    let mut t = Table::new(&["lambda", "x_index", "value"]);
    for l in c.lambda_grid.values() {
        let sp = spec(c, l)?;
        for (i, x) in c.x_points().iter().enumerate() {
            let v = r2_sum(&s, &mut table, &overlap, &sp, x, &R2Options::default())?;
            t.push(vec![Field::Num(l), Field::Int(i as i128), Field::Num(v)]);
        }
    }
    t.write(&mut w, "r2", ctx.format())?;
    w.finish()?;
    Ok(0)
}

/// `(x, y)` pairs from two named columns of a CSV file.
fn read_points(path: &Path, x_col: &str, y_col: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines.next().ok_or_else(|| CliError::Usage(format!("{} is empty", path.display())))??;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::Usage(format!("column `{name}` not found in {}", path.display())))
    };
    let (xi, yi) = (find(x_col)?, find(y_col)?);
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64, CliError> {
            f.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Usage(format!("{}: line {}: bad number", path.display(), n + 2)))
        };
        out.push((parse(xi)?, parse(yi)?));
    }
    Ok(out)
}

pub struct FitArgs {
    pub input: PathBuf,
    pub x_column: String,
    pub y_column: String,
    pub window: Option<(f64, f64)>,
    pub dim: Option<usize>,
    pub eta: Option<f64>,
}

pub fn fit(ctx: &Ctx, a: &FitArgs) -> Result<i32, CliError> {
    let points = read_points(&a.input, &a.x_column, &a.y_column)?;
    let f = fit_exponent(&points, a.window)?;
    let dim = a.dim.or(ctx.config.as_ref().map(|c| c.dimension));
    let eta = a.eta.or(ctx.config.as_ref().map(|c| c.eta));
    let report = match (dim, eta) {
        (Some(n), Some(e)) => Some(FitReport::new(&f, n, e, n as f64 - e)),
        _ => None,
    };
    let out = json!({ "fit": f, "report": report });
    let mut w = ctx.writer("fit")?;
    w.note("input", json!(a.input));
    w.json("fit.json", &out)?;
    w.finish()?;
    println!("{}", serde_json::to_string(&out)?);
    Ok(0)
}

fn write_reports(w: &mut Writer, stem: &str, reports: &[BoundReport]) -> Result<(), CliError> {
    let values: Vec<Value> = reports.iter().map(serde_json::to_value).collect::<Result<_, _>>()?;
    w.json(&format!("{stem}.json"), &Value::Array(values))?;
    let mut csv = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let mut part = Vec::new();
        r.write_grid_csv(&mut part)?;
        let text = String::from_utf8(part).expect("CSV is UTF-8");
        // one header for the concatenated grids
        let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |p| p.1) };
        csv.extend_from_slice(body.as_bytes());
    }
    w.text(&format!("{stem}.csv"), &String::from_utf8(csv).expect("CSV is UTF-8"))?;
    Ok(())
}

pub fn diagnose(ctx: &Ctx) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let d = &c.diagnostics;
    let mut w = ctx.writer("diagnose")?;
    let (s, _, _) = solve(ctx, &mut w)?;
    let x0 = c.center();
    let grid = default_x_grid(&x0, d.grid_per_axis, s.len(), GRID_ENTRY_CAP);
    let lambdas = c.lambda_grid.values();
    let top = lambdas.iter().copied().fold(0.0, f64::max) + 1.0;
    let table = DensityTable::new(&s, &grid, top)?;
    let rough: Vec<BoundReport> = lambdas
        .iter()
        .map(|&l| Ok(rough_bound_ratio_from(&s, &table, l)?.with_threshold(d.rough_threshold)))
        .collect::<Result<_, CliError>>()?;
    let band: Vec<BoundReport> = lambdas
        .iter()
        .map(|&l| Ok(band_ratio_from(&s, &table, l)?.with_threshold(d.band_threshold)))
        .collect::<Result<_, CliError>>()?;
    let floor = 4.0 / c.truncation.powi(2);
    let times = weyllab_core::analysis::fit::log_space(floor.min(1.0), 1.0, d.heat_times);
    let mut pairs = vec![(x0.clone(), x0.clone()), (x0.clone(), x0.iter().map(|v| v + std::f64::consts::PI).collect())];
    for x in c.x_points() {
        pairs.push((x0.clone(), x));
    }
    let heat = heat_bound_ratio(&s, &times, &pairs, d.heat_c)?.with_threshold(d.heat_threshold);
    write_reports(&mut w, "rough_bound_ratio", &rough)?;
    write_reports(&mut w, "band_ratio", &band)?;
    write_reports(&mut w, "heat_bound_ratio", std::slice::from_ref(&heat))?;
    let n = c.dimension;
    let (p, sigma_p0) = p0(n, c.eta)?;
    w.json(
        "sogge.json",
        &json!({ "n": n, "eta": c.eta, "p0": p, "sigma_p0": sigma_p0, "sigma_inf": sogge_exponent(n, f64::INFINITY)? }),
    )?;
    w.note("heat_flags", json!(heat.flags.names()));
    w.finish()?;
    let pass = rough.iter().chain(&band).chain(std::iter::once(&heat)).all(|r| r.pass);
    for r in rough.iter().chain(&band).chain(std::iter::once(&heat)) {
        println!("{} {} max_ratio {}", r.name, if r.pass { "pass" } else { "FAIL" }, num(r.max_ratio));
    }
    Ok(if pass { 0 } else { 2 })
}

pub fn report(ctx: &Ctx) -> Result<i32, CliError> {
    let c = ctx.config()?;
    let mut w = ctx.writer("report")?;
    let (s, _, _) = solve(ctx, &mut w)?;
    let x0 = c.center();
    let mut t = Table::new(&["lambda", "value", "warning_flags"]);
    let mut points = Vec::new();
    for l in c.lambda_grid.values() {
        let d = perturbation_difference(&s, &spec(c, l)?, &x0, Mode::Mollified)?;
        points.push((l, d.value));
        t.push(vec![Field::Num(l), Field::Num(d.value), Field::Text(flag_text(d.flags))]);
    }
    t.write(&mut w, "report", Format::Csv)?;
    let f = fit_exponent(&points, None)?;
    let expected = c.dimension as f64 - c.eta;
    let fit_report = FitReport::new(&f, c.dimension, c.eta, expected);
    let one_sign = points.iter().all(|p| p.1 > 0.0) || points.iter().all(|p| p.1 < 0.0);
    w.json("report.json", &json!({ "report": fit_report, "fit": f, "one_sign": one_sign }))?;
    w.finish()?;
    println!("slope {} (expected {}) residual {}", num(f.slope), num(expected), num(f.residual));
    Ok(0)
}
