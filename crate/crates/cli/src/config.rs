//! Run configuration: strict JSON schema, defaults, validation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use apfb_core::exponents::{derive_exponents, exponents_from_alpha, Exponents};
use apfb_core::grid::{build_axisym_grid, AxisymGrid};
use apfb_core::variation::default_ladder;
use apfb_core::vector_field::{poly_bump, BoxBumpField, RadialBumpField, SupportBox, VectorField};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub tau_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub h: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { tau_max: 2.5, z_min: -2.5, z_max: 2.5, h: 1.0 / 32.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// One-dimensional solution in `z`, free boundary at `z = z0`.
    OneD,
    /// Radial profile about `(0, zc)` vanishing on the sphere of radius `r0`.
    Radial,
    /// First non-flat homogeneous cone found by the scan, vertex at `(0, zc)`.
    Cone,
    /// Positive polynomial `poly`, used only by the analytic expansion check.
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyKind {
    Modified,
    AltPhillips,
}

/// Shape shared by deformation fields and scalar test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhiConfig {
    /// Tensor polynomial bump on a box; `direction` orients the vector field.
    BoxBump { support: SupportBox, direction: [f64; 2], power: i32 },
    /// Radial bump about `(0, zc)` on `[r_in, r_out]`.
    RadialBump { r_in: f64, r_out: f64, amplitude: f64, power: i32 },
}

impl Default for PhiConfig {
    fn default() -> Self {
        PhiConfig::RadialBump { r_in: 1.3, r_out: 2.0, amplitude: 1.0, power: 3 }
    }
}

impl PhiConfig {
    pub fn vector(&self, zc: f64) -> Arc<dyn VectorField> {
        match *self {
            PhiConfig::BoxBump { support, direction, power } => Arc::new(BoxBumpField { support, direction, power }),
            PhiConfig::RadialBump { r_in, r_out, amplitude, power } => Arc::new(RadialBumpField { zc, r_in, r_out, amplitude, power }),
        }
    }

    /// Scalar profile of the same shape with its gradient.
    pub fn scalar(&self, zc: f64, t: f64, z: f64) -> (f64, [f64; 2]) {
        match *self {
            PhiConfig::BoxBump { support, power, .. } => {
                let (a, da) = poly_bump(t, support.t0, support.t1, power);
                let (b, db) = poly_bump(z, support.z0, support.z1, power);
                (a * b, [da * b, a * db])
            }
            PhiConfig::RadialBump { r_in, r_out, amplitude, power } => {
                let zz = z - zc;
                let r = t.hypot(zz);
                let (p, dp) = poly_bump(r, r_in, r_out, power);
                if r == 0.0 {
                    (amplitude * p, [0.0; 2])
                } else {
                    (amplitude * p, [amplitude * dp * t / r, amplitude * dp * zz / r])
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Interior window points used when `thetas` is absent.
    pub count: usize,
    pub eps: f64,
    pub radius: f64,
    pub thetas: Option<Vec<f64>>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { count: 9, eps: 0.05, radius: 1.0, thetas: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub h0_min: f64,
    pub h0_max: f64,
    pub samples: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { h0_min: 1e-3, h0_max: 1.5, samples: 96 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: Option<String>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub n: usize,
    pub grid: GridConfig,
    /// ODE and shooting tolerance.
    pub tol: f64,
    pub eigen_tol: f64,
    pub ladder: Vec<f64>,
    pub fit_degree: usize,
    pub field: FieldKind,
    pub energy: EnergyKind,
    /// Free-boundary position of the one-dimensional field.
    pub z0: f64,
    /// Length of the one-dimensional profile table.
    pub length: f64,
    pub r0: f64,
    pub r_max: f64,
    pub zc: f64,
    pub phi: PhiConfig,
    /// Test function for `alpha-limit`; it should not vanish on the free boundary.
    pub limit_phi: PhiConfig,
    pub poly: [f64; 5],
    /// Box for `spectrum`; defaults to the grid minus a margin.
    pub region: Option<SupportBox>,
    pub probes: ProbeConfig,
    pub scan: ScanConfig,
    pub alphas: Vec<f64>,
    pub points: usize,
    /// Rows in sampled profile tables.
    pub samples: usize,
    pub trials: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            command: None,
            gamma: None,
            alpha: None,
            n: 3,
            grid: GridConfig::default(),
            tol: 1e-10,
            eigen_tol: 1e-8,
            ladder: default_ladder(),
            fit_degree: 5,
            field: FieldKind::Radial,
            energy: EnergyKind::Modified,
            z0: 0.0123,
            length: 1.0,
            r0: 1.0,
            r_max: 4.0,
            zc: 0.0,
            phi: PhiConfig::default(),
            limit_phi: PhiConfig::RadialBump { r_in: -1.8, r_out: 1.8, amplitude: 1.0, power: 3 },
            poly: [1.0, 0.3, 0.1, 0.2, 0.05],
            region: None,
            probes: ProbeConfig::default(),
            scan: ScanConfig::default(),
            alphas: vec![0.5, 0.25, 0.125, 0.0625],
            points: 401,
            samples: 201,
            trials: 200,
            out: PathBuf::from("out"),
        }
    }
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "schema_version", "command", "gamma", "alpha", "n", "grid", "tol", "eigen_tol", "ladder", "fit_degree", "field", "energy", "z0", "length", "r0", "r_max",
    "zc", "phi", "limit_phi", "poly", "region", "probes", "scan", "alphas", "points", "samples", "trials", "out",
];

/// Parse a config, rejecting unknown keys and a mismatched schema version.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config is not valid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| CliError::Validation("config must be a JSON object".into()))?;
    let known: BTreeSet<&str> = TOP_LEVEL_KEYS.iter().copied().collect();
    let unknown: Vec<&str> = obj.keys().map(String::as_str).filter(|k| !known.contains(k)).collect();
    if !unknown.is_empty() {
        return Err(CliError::Validation(format!("unknown config keys: {}", unknown.join(", "))));
    }
    if let Some(v) = obj.get("schema_version") {
        if v.as_u64() != Some(SCHEMA_VERSION as u64) {
            return Err(CliError::Validation(format!("schema_version {v} does not match {SCHEMA_VERSION}")));
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Validation(format!("invalid config: {e}")))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn config_json(cfg: &RunConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!("schema_version {} does not match {SCHEMA_VERSION}", self.schema_version)));
        }
        if self.gamma.is_some() && self.alpha.is_some() {
            return Err(CliError::Validation("gamma and alpha are mutually exclusive".into()));
        }
        positive("tol", self.tol)?;
        positive("eigen_tol", self.eigen_tol)?;
        positive("grid.h", self.grid.h)?;
        positive("probes.eps", self.probes.eps)?;
        positive("probes.radius", self.probes.radius)?;
        positive("length", self.length)?;
        positive("r0", self.r0)?;
        if self.n == 0 {
            return Err(CliError::Validation("n must be at least 1".into()));
        }
        if self.ladder.iter().any(|e| e.is_nan() || *e <= 0.0) {
            return Err(CliError::Validation("ladder entries must be positive".into()));
        }
        if self.r_max <= self.r0 {
            return Err(CliError::Validation(format!("r_max = {} must exceed r0 = {}", self.r_max, self.r0)));
        }
        Ok(())
    }

    /// Exponents from `gamma` or `alpha`; one of them is required.
    pub fn exponents(&self) -> Result<Exponents, CliError> {
        match (self.gamma, self.alpha) {
            (Some(g), None) => Ok(derive_exponents(g, self.n)?),
            (None, Some(a)) => Ok(exponents_from_alpha(a, self.n)?),
            (None, None) => Err(CliError::Validation("one of --gamma or --alpha is required".into())),
            (Some(_), Some(_)) => Err(CliError::Validation("gamma and alpha are mutually exclusive".into())),
        }
    }

    pub fn axisym_grid(&self) -> Result<AxisymGrid, CliError> {
        let g = self.grid;
        Ok(build_axisym_grid(g.tau_max, g.z_min, g.z_max, g.h, self.n)?)
    }
}
