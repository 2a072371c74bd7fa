//! Experiment configuration: one flat key tree, read from TOML or JSON
//! (chosen by file extension), with `--set key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use weyllab_core::analysis::mollifier::default_epsilon;
use weyllab_core::bump::{BumpProfile, BumpVariant};
use weyllab_core::potential::{QuadratureSettings, RadialSingularPotential};
use weyllab_core::quadrature::GradedSettings;

#[derive(Debug)]
pub enum ConfigError {
    Io(PathBuf, std::io::Error),
    Parse(String),
    /// A validation rule, named as in the documentation.
    Constraint { rule: &'static str, detail: String },
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Constraint { rule, detail } => write!(f, "config violates `{rule}`: {detail}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: 4.0,
            max: 8.0,
            count: 5,
            spacing: Spacing::Log,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| match self.spacing {
                Spacing::Linear => self.min + (self.max - self.min) * i as f64 / last,
                Spacing::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * i as f64 / last).exp(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BumpConfig {
    pub variant: BumpVariant,
    pub support_radius: f64,
}

impl Default for BumpConfig {
    fn default() -> Self {
        Self {
            variant: BumpVariant::Rho,
            support_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Gauss–Legendre nodes per radial panel.
    pub radial_nodes: usize,
    /// Ratio between consecutive graded breakpoints towards the singularity.
    pub grading_power: f64,
    /// Relative tolerance of the radial transform.
    pub tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let q = QuadratureSettings::default();
        Self {
            radial_nodes: q.graded.order,
            grading_power: q.graded.grading,
            tolerance: q.rel_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: Format,
    /// Output directory.
    pub path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            format: Format::Csv,
            path: PathBuf::from("weyllab-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Points per axis of the default x grid.
    pub grid_per_axis: usize,
    /// `c` in the Gaussian comparison.
    pub heat_c: f64,
    pub heat_times: usize,
    pub rough_threshold: Option<f64>,
    pub band_threshold: Option<f64>,
    pub heat_threshold: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            grid_per_axis: 32,
            heat_c: weyllab_core::diagnostics::DEFAULT_HEAT_C,
            heat_times: 6,
            rough_threshold: None,
            band_threshold: None,
            heat_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub eta: f64,
    /// Defaults to `min(η, 1-η)/20`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub bump: BumpConfig,
    /// `Λmax`, the lattice-ball radius of the Galerkin basis.
    pub truncation: f64,
    #[serde(default)]
    pub lambda_grid: LambdaGrid,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    /// Centre `x₀` of the singularity; the origin by default.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Evaluation points; `[x₀]` by default.
    #[serde(default)]
    pub x_points: Vec<Vec<f64>>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub fixture: Option<String>,
}

fn one() -> f64 {
    1.0
}

fn constraint(rule: &'static str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        rule,
        detail: detail.into(),
    }
}

impl ExperimentConfig {
    pub fn center(&self) -> Vec<f64> {
        self.center.clone().unwrap_or_else(|| vec![0.0; self.dimension])
    }

    pub fn x_points(&self) -> Vec<Vec<f64>> {
        if self.x_points.is_empty() {
            vec![self.center()]
        } else {
            self.x_points.clone()
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| default_epsilon(self.eta))
    }

    pub fn quadrature_settings(&self) -> QuadratureSettings {
        let base = QuadratureSettings::default();
        QuadratureSettings {
            graded: GradedSettings {
                order: self.quadrature.radial_nodes,
                grading: self.quadrature.grading_power,
                ..base.graded
            },
            rel_tol: self.quadrature.tolerance,
            ..base
        }
    }

    pub fn potential(&self) -> weyllab_core::Result<RadialSingularPotential> {
        let bump = BumpProfile::new(self.bump.variant, self.bump.support_radius, self.dimension)?;
        Ok(RadialSingularPotential::new(self.dimension, self.eta, self.gamma, bump, self.center())?
            .with_quadrature(self.quadrature_settings()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(2..=5).contains(&self.dimension) {
            return Err(constraint("dimension in 2..=5", format!("dimension = {}", self.dimension)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(constraint("eta in (0,1)", format!("eta = {}", self.eta)));
        }
        if let Some(e) = self.epsilon {
            let cap = self.eta.min(1.0 - self.eta);
            if !(e > 0.0 && e < cap) {
                return Err(constraint("epsilon in (0, min(eta, 1-eta))", format!("epsilon = {e}")));
            }
        }
        if !self.gamma.is_finite() {
            return Err(constraint("gamma finite", format!("gamma = {}", self.gamma)));
        }
        if !(self.bump.support_radius > 0.0 && self.bump.support_radius <= 1.0) {
            return Err(constraint(
                "bump.support_radius in (0,1]",
                format!("support_radius = {}", self.bump.support_radius),
            ));
        }
        let g = &self.lambda_grid;
        if !(g.min > 0.0 && g.max >= g.min && g.count >= 1 && g.max.is_finite()) {
            return Err(constraint(
                "0 < lambda_grid.min <= lambda_grid.max, count >= 1",
                format!("min = {}, max = {}, count = {}", g.min, g.max, g.count),
            ));
        }
        if !(self.truncation >= 2.0 * g.max) {
            return Err(constraint(
                "truncation >= 2 * lambda_grid.max",
                format!("truncation = {}, lambda_grid.max = {}", self.truncation, g.max),
            ));
        }
        if self.quadrature.radial_nodes < 2 || !(self.quadrature.grading_power > 0.0 && self.quadrature.grading_power < 1.0) {
            return Err(constraint(
                "quadrature.radial_nodes >= 2, 0 < quadrature.grading_power < 1",
                format!("{:?}", self.quadrature),
            ));
        }
        if !(self.quadrature.tolerance > 0.0) {
            return Err(constraint("quadrature.tolerance > 0", format!("{}", self.quadrature.tolerance)));
        }
        let n = self.dimension;
        if let Some(c) = &self.center {
            if c.len() != n || c.iter().any(|v| !v.is_finite()) {
                return Err(constraint("center has `dimension` finite coordinates", format!("{c:?}")));
            }
        }
        for p in &self.x_points {
            if p.len() != n || p.iter().any(|v| !v.is_finite()) {
                return Err(constraint("x_points have `dimension` finite coordinates", format!("{p:?}")));
            }
        }
        let d = &self.diagnostics;
        if d.grid_per_axis < 2 || !(d.heat_c > 0.0) || d.heat_times < 1 {
            return Err(constraint(
                "diagnostics.grid_per_axis >= 2, heat_c > 0, heat_times >= 1",
                format!("{d:?}"),
            ));
        }
        Ok(())
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Parse one `--set` value: TOML literal syntax, or a bare string.
fn parse_override(raw: &str) -> Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: Value,
    }
    toml::from_str::<Wrap>(&format!("v = {raw}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("--set expects key=value, got `{assignment}`")))?;
    let mut node = root;
    let parts: Vec<&str> = key.trim().split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::Parse(format!("--set {key}: `{part}` is not inside a table")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parse_override(raw.trim()));
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

pub fn parse_config(text: &str, json: bool, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    // parse straight into the struct first so errors keep their line numbers
    let direct: Result<ExperimentConfig, String> = if json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    let config = if overrides.is_empty() {
        direct.map_err(ConfigError::Parse)?
    } else {
        let mut tree: Value = if json {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        serde_json::from_value(tree).map_err(|e| ConfigError::Parse(e.to_string()))?
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
    parse_config(&text, is_json(path), overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "dimension = 2\neta = 0.5\ntruncation = 16.0\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_config(MINIMAL, false, &[]).unwrap();
        assert_eq!(c.epsilon(), 0.025);
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.x_points(), vec![vec![0.0, 0.0]]);
        assert_eq!(c.lambda_grid.values().len(), 5);
    }

    #[test]
    fn constraint_errors_name_the_rule() {
        let e = parse_config("dimension = 2\neta = 1.2\ntruncation = 16.0\n", false, &[]).unwrap_err();
        assert!(e.to_string().contains("eta in (0,1)"), "{e}");
        let e = parse_config(MINIMAL, false, &["lambda_grid.max = 9.0".into(), "lambda_grid.min=1".into()]).unwrap_err();
        assert!(e.to_string().contains("truncation >= 2 * lambda_grid.max"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let e = parse_config("dimension = 2\neta = 0.5\ntruncation = 16.0\nbogus = 1\n", false, &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 4"), "{msg}");
        let e = parse_config(MINIMAL, false, &["bump.colour = 'red'".into()]).unwrap_err();
        assert!(e.to_string().contains("colour"));
    }

    #[test]
    fn json_and_overrides() {
        let c = parse_config(
            r#"{"dimension": 3, "eta": 0.3, "truncation": 20, "bump": {"variant": "chi", "support_radius": 0.5}}"#,
            true,
            &["gamma=-0.5".into(), "lambda_grid.spacing=linear".into()],
        )
        .unwrap();
        assert_eq!(c.gamma, -0.5);
        assert_eq!(c.bump.variant, BumpVariant::Chi);
        assert_eq!(c.lambda_grid.spacing, Spacing::Linear);
        assert_eq!(c.lambda_grid.values(), vec![4.0, 5.0, 6.0, 7.0, 8.0]);
    }
}
