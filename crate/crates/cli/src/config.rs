//! Run configuration: one TOML document with a section per stage. Every
//! key has a default, so an empty file is a valid configuration.

use std::fs;
use std::path::{Path, PathBuf};

use fracdirac::bloch::validate_sigma;
use fracdirac::dynamics::{DynamicsConfig, GaussianPacket, ModelConfig, SimConfig};
use fracdirac::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Bands,
    #[default]
    Dirac,
    Evolve,
    Validate,
    ShallowCheck,
    ProductRule,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bands => "bands",
            Experiment::Dirac => "dirac",
            Experiment::Evolve => "evolve",
            Experiment::Validate => "validate",
            Experiment::ShallowCheck => "shallow-check",
            Experiment::ProductRule => "product-rule",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandsMode {
    /// `k = K + λ k₂` for `λ ∈ [lambda_min, lambda_max]`.
    #[default]
    Path,
    /// Square patch `K + (a, b)`, `|a|, |b| ≤ half_width`.
    Grid,
    /// Uniform random points of the Brillouin cell (uses `seed`).
    Random,
}

fn default_band_truncation() -> usize {
    12
}
fn default_band_count() -> usize {
    4
}
fn default_lambda_min() -> f64 {
    -0.1
}
fn default_lambda_max() -> f64 {
    0.1
}
fn default_points() -> usize {
    201
}
fn default_half_width() -> f64 {
    0.5
}
fn default_grid_points() -> usize {
    41
}
fn default_samples() -> usize {
    20
}
fn default_gap_band() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsConfig {
    #[serde(default)]
    pub mode: BandsMode,
    /// One table per entry; empty means `model.sigma` only.
    #[serde(default)]
    pub sigmas: Vec<f64>,
    /// `ε` in `V + εW`.
    #[serde(default)]
    pub perturbation_scale: f64,
    #[serde(default = "default_band_truncation")]
    pub truncation: usize,
    #[serde(default = "default_band_count")]
    pub bands: usize,
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    /// Points per side of the patch (odd, so that `K` is on the grid).
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// 1-based band `b`; the reported gap is `E_{b+1} − E_b`.
    #[serde(default = "default_gap_band")]
    pub gap_band: usize,
}

fn default_cone_truncation() -> usize {
    12
}
fn default_cone_r_min() -> f64 {
    1e-3
}
fn default_cone_r_max() -> f64 {
    2e-2
}
fn default_cone_radii() -> usize {
    6
}
fn default_directions() -> usize {
    8
}
fn default_isotropy_radius() -> f64 {
    1e-2
}
fn default_gap_epsilons() -> Vec<f64> {
    vec![0.01, 0.02, 0.03, 0.04, 0.05]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracConfig {
    #[serde(default = "default_cone_truncation")]
    pub cone_truncation: usize,
    #[serde(default = "default_cone_r_min")]
    pub cone_r_min: f64,
    #[serde(default = "default_cone_r_max")]
    pub cone_r_max: f64,
    #[serde(default = "default_cone_radii")]
    pub cone_radii: usize,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_isotropy_radius")]
    pub isotropy_radius: f64,
    #[serde(default = "default_gap_epsilons")]
    pub gap_epsilons: Vec<f64>,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Also run the corrected ansatz at this `ε` and compare.
    #[serde(default)]
    pub corrected_at: Option<f64>,
}

fn default_eps_pot() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShallowCheckConfig {
    /// Potential strength `ε_pot` in `ε_pot V`.
    #[serde(default = "default_eps_pot")]
    pub eps_pot: f64,
}

fn default_product_epsilons() -> Vec<f64> {
    vec![0.1, 0.05]
}
fn default_product_sigmas() -> Vec<f64> {
    vec![2.0, 1.6]
}
fn default_product_box() -> f64 {
    5.4
}
fn default_product_points() -> usize {
    6
}
fn default_gamma() -> GaussianPacket {
    GaussianPacket {
        amplitude: [1.0, 0.0],
        center: [0.0, 0.0],
        width: 0.45,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductRuleConfig {
    #[serde(default = "default_product_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_product_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_product_box")]
    pub box_length: f64,
    #[serde(default = "default_product_points")]
    pub points_per_cell: usize,
    #[serde(default)]
    pub norm_order: u32,
    #[serde(default = "default_gamma")]
    pub gamma: GaussianPacket,
}

macro_rules! default_from_empty {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("defaults deserialize")
            }
        }
    )*};
}
default_from_empty!(BandsConfig, DiracConfig, ValidateConfig, ShallowCheckConfig, ProductRuleConfig, RunConfig);

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Experiment,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed for randomized sampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub bands: BandsConfig,
    #[serde(default)]
    pub dirac: DiracConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub shallow_check: ShallowCheckConfig,
    #[serde(default)]
    pub product_rule: ProductRuleConfig,
}

/// Presets shipped with the binary.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1a", include_str!("../../../presets/fig1a.toml")),
    ("fig1b", include_str!("../../../presets/fig1b.toml")),
    ("fig2", include_str!("../../../presets/fig2.toml")),
    ("dirac", include_str!("../../../presets/dirac.toml")),
    ("evolve", include_str!("../../../presets/evolve.toml")),
    ("validate", include_str!("../../../presets/validate.toml")),
    ("smoke", include_str!("../../../presets/smoke.toml")),
    ("corrected", include_str!("../../../presets/corrected.toml")),
    ("shallow", include_str!("../../../presets/shallow.toml")),
    ("product-rule", include_str!("../../../presets/product-rule.toml")),
];

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be at least {min}, got {v}")))
    }
}

fn sigma_list(field: &str, sigmas: &[f64]) -> Result<()> {
    for &s in sigmas {
        validate_sigma(s).map_err(|e| Error::config(field, e.to_string()))?;
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(origin, e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                Error::config("preset", format!("unknown preset `{name}` (known: {})", known.join(", ")))
            })?;
        Self::parse(text, &format!("preset {name}"))
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            model: self.model.clone(),
            dynamics: self.dynamics.clone(),
        }
    }

    /// Sigmas of the band tables.
    pub fn band_sigmas(&self) -> Vec<f64> {
        if self.bands.sigmas.is_empty() {
            vec![self.model.sigma]
        } else {
            self.bands.sigmas.clone()
        }
    }

    /// Checks the sections the selected experiment reads.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        match self.experiment {
            Experiment::Bands => self.validate_bands(),
            Experiment::Dirac => self.validate_dirac(),
            Experiment::Evolve => self.sim().validate(),
            Experiment::Validate => self.validate_study(),
            Experiment::ShallowCheck => {
                let e = self.shallow_check.eps_pot;
                if !(e > 0.0 && e <= 0.05) {
                    return Err(Error::config("eps_pot", format!("must lie in (0, 0.05], got {e}")));
                }
                Ok(())
            }
            Experiment::ProductRule => self.validate_product_rule(),
        }
    }

    fn validate_bands(&self) -> Result<()> {
        let b = &self.bands;
        sigma_list("sigmas", &b.sigmas)?;
        at_least("truncation", b.truncation, 1)?;
        at_least("bands", b.bands, 1)?;
        if !b.perturbation_scale.is_finite() {
            return Err(Error::config("perturbation_scale", "must be finite"));
        }
        if b.gap_band == 0 || b.gap_band >= b.bands {
            return Err(Error::config(
                "gap_band",
                format!("must lie in 1..{} so that band gap_band+1 is computed", b.bands),
            ));
        }
        match b.mode {
            BandsMode::Path => {
                if !(b.lambda_min.is_finite() && b.lambda_max.is_finite() && b.lambda_min < b.lambda_max) {
                    return Err(Error::config("lambda_max", "need finite lambda_min < lambda_max"));
                }
                at_least("points", b.points, 2)
            }
            BandsMode::Grid => {
                positive("half_width", b.half_width)?;
                at_least("grid_points", b.grid_points, 3)?;
                if b.grid_points.is_multiple_of(2) {
                    return Err(Error::config("grid_points", "must be odd so that K lies on the grid"));
                }
                Ok(())
            }
            BandsMode::Random => at_least("samples", b.samples, 1),
        }
    }

    fn validate_dirac(&self) -> Result<()> {
        let d = &self.dirac;
        at_least("cone_truncation", d.cone_truncation, 1)?;
        positive("cone_r_min", d.cone_r_min)?;
        positive("cone_r_max", d.cone_r_max)?;
        if d.cone_r_max <= d.cone_r_min {
            return Err(Error::config("cone_r_max", "must exceed cone_r_min"));
        }
        at_least("cone_radii", d.cone_radii, 2)?;
        at_least("directions", d.directions, 1)?;
        positive("isotropy_radius", d.isotropy_radius)?;
        if d.gap_epsilons.len() < 2
            || d.gap_epsilons[0] < 0.0
            || d.gap_epsilons.windows(2).any(|p| !(p[1] > p[0]))
        {
            return Err(Error::config(
                "gap_epsilons",
                "need at least two non-negative, strictly increasing values",
            ));
        }
        Ok(())
    }

    fn validate_study(&self) -> Result<()> {
        let v = &self.validate;
        if v.epsilons.is_empty() {
            return Err(Error::config("epsilons", "need at least one value"));
        }
        let sim = self.sim();
        for &e in v.epsilons.iter().chain(&v.corrected_at) {
            positive("epsilons", e)?;
            sim.with_epsilon(e).validate()?;
        }
        Ok(())
    }

    fn validate_product_rule(&self) -> Result<()> {
        let p = &self.product_rule;
        if p.sigmas.is_empty() {
            return Err(Error::config("sigmas", "need at least one value"));
        }
        sigma_list("sigmas", &p.sigmas)?;
        if p.epsilons.is_empty() {
            return Err(Error::config("epsilons", "need at least one value"));
        }
        positive("box_length", p.box_length)?;
        at_least("points_per_cell", p.points_per_cell, 2)?;
        if p.norm_order > 3 {
            return Err(Error::config("norm_order", "must be 0, 1, 2 or 3"));
        }
        p.gamma.validate("gamma")?;
        for &e in &p.epsilons {
            positive("epsilons", e)?;
            let cells = p.box_length / e;
            if (cells - cells.round()).abs() > 1e-9 * cells || cells.round() as i64 % 3 != 0 {
                return Err(Error::config(
                    "box_length",
                    format!("box_length/epsilon = {cells} must be an integer multiple of 3"),
                ));
            }
        }
        Ok(())
    }

    /// Fully resolved TOML (every default filled in).
    pub fn resolved(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}
