//! Two-scale time evolution: the fNLS on a periodic box, the effective
//! Dirac envelope system, wave-packet synthesis and error measurement.

mod ansatz;
mod envelope;
mod field;
mod fnls;
mod micro;
mod snapshot;
mod study;

pub use ansatz::{product_rule_check, Ansatz, ApproximationOrder, ProductRuleReport, NYQUIST_TOL};
pub use envelope::{evolve_dirac, DiracParams, DiracSolver, EnvelopeState, GaussianPacket};
pub use field::{sobolev_weight, weighted_hs_norm, Field2D, Spectral};
pub use fnls::{admissible_dt, cfl_limit, evolve_fnls, FnlsProblem, FnlsSolver, Integrator};
pub use micro::{synthesize_profile, MicroFields, MicroProfiles};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotMeta, SNAPSHOT_SCHEMA};
pub use study::{convergence_study, fitted_rate, simulate, CaseReport, ConvergenceReport, CorrectedComparison, Simulation};

use serde::{Deserialize, Serialize};

use crate::bloch::validate_sigma;
use crate::dirac::DiracSetup;
use crate::error::{Error, Result};
use crate::grid::ObliqueGrid;
use crate::lattice::LatticeBasis;
use crate::potential::{Modulation, PotentialSpec};

/// Uniform steps grouped into equally spaced output frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps_per_frame: usize,
    pub frames: usize,
    pub final_time: f64,
}

impl TimeGrid {
    /// Largest uniform step `≤ dt_max` that lands exactly on every frame.
    pub fn new(final_time: f64, frames: usize, dt_max: f64) -> Result<Self> {
        if !(final_time >= 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidInput(format!("final time must be ≥ 0, got {final_time}")));
        }
        if !(dt_max > 0.0 && dt_max.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be > 0, got {dt_max}")));
        }
        let frames = frames.max(1);
        let span = final_time / frames as f64;
        if span == 0.0 {
            return Ok(TimeGrid {
                dt: dt_max,
                steps_per_frame: 0,
                frames,
                final_time,
            });
        }
        let steps = (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(TimeGrid {
            dt: span / steps as f64,
            steps_per_frame: steps,
            frames,
            final_time,
        })
    }

    pub fn time(&self, frame: usize) -> f64 {
        self.final_time * frame as f64 / self.frames as f64
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_frame * self.frames
    }
}

fn default_sigma() -> f64 {
    2.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_mu() -> f64 {
    1.0
}
fn default_potential() -> PotentialSpec {
    PotentialSpec::Builtin("numpoten".into())
}
fn default_perturbation() -> PotentialSpec {
    PotentialSpec::Builtin("nummodu".into())
}
fn default_kappa() -> Modulation {
    Modulation::Gaussian {
        amplitude: 1.0,
        center: [0.0, 0.0],
        width: 1.0,
    }
}
fn default_truncation() -> usize {
    16
}
fn default_box_length() -> f64 {
    9.6
}
fn default_points_per_cell() -> usize {
    6
}
fn default_dt_per_epsilon() -> f64 {
    0.02
}
fn default_final_time() -> f64 {
    0.5
}
fn default_frames() -> usize {
    1
}
fn default_norm_order() -> u32 {
    1
}
fn default_alpha1() -> GaussianPacket {
    GaussianPacket {
        amplitude: [1.0, 0.0],
        center: [0.0, 0.0],
        width: 0.8,
    }
}
fn default_alpha2() -> GaussianPacket {
    GaussianPacket::zero()
}
fn default_nyquist_tol() -> f64 {
    NYQUIST_TOL
}

/// Physical model shared by every experiment: operator order, potentials
/// and the plane-wave truncation of the cell problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default = "default_perturbation")]
    pub perturbation: PotentialSpec,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        validate_sigma(self.sigma).map_err(|e| Error::config("sigma", e.to_string()))?;
        if self.truncation == 0 {
            return Err(Error::config("truncation", "must be at least 1"));
        }
        self.potential.build("potential")?;
        self.perturbation.build("perturbation")?;
        Ok(())
    }

    pub fn dirac_setup(&self, lattice: &LatticeBasis) -> Result<DiracSetup> {
        Ok(DiracSetup {
            lattice: lattice.clone(),
            potential: self.potential.build("potential")?,
            perturbation: self.perturbation.build("perturbation")?,
            sigma: self.sigma,
            truncation: self.truncation,
        })
    }
}

/// Time evolution and measurement settings. Positions (envelope and κ
/// centres) are measured from the centre of the periodic box, whose edge is
/// `box_length` in macroscopic units, i.e. `box_length/ε` lattice cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_kappa")]
    pub kappa: Modulation,
    #[serde(default = "default_box_length")]
    pub box_length: f64,
    #[serde(default = "default_points_per_cell")]
    pub points_per_cell: usize,
    /// Absolute time step; overrides `dt_per_epsilon`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_dt_per_epsilon")]
    pub dt_per_epsilon: f64,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    /// Sobolev order `s` of the error norm.
    #[serde(default = "default_norm_order")]
    pub norm_order: u32,
    #[serde(default = "default_alpha1")]
    pub alpha1: GaussianPacket,
    #[serde(default = "default_alpha2")]
    pub alpha2: GaussianPacket,
    #[serde(default)]
    pub order: ApproximationOrder,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_nyquist_tol")]
    pub nyquist_tol: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

/// One simulation: the model plus its dynamics settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
}

impl SimConfig {
    /// Checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let d = &self.dynamics;
        if !(d.epsilon > 0.0 && d.epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if !d.mu.is_finite() {
            return Err(Error::config("mu", "must be finite"));
        }
        if d.points_per_cell < 2 {
            return Err(Error::config("points_per_cell", "must be at least 2"));
        }
        if let Some(dt) = d.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config("dt", "must be positive"));
            }
        }
        if !(d.dt_per_epsilon > 0.0 && d.dt_per_epsilon.is_finite()) {
            return Err(Error::config("dt_per_epsilon", "must be positive"));
        }
        if !(d.final_time >= 0.0 && d.final_time.is_finite()) {
            return Err(Error::config("final_time", "must be ≥ 0"));
        }
        if d.frames == 0 {
            return Err(Error::config("frames", "must be at least 1"));
        }
        if d.norm_order > 3 {
            return Err(Error::config("norm_order", "must be 0, 1, 2 or 3"));
        }
        if !(d.nyquist_tol > 0.0) {
            return Err(Error::config("nyquist_tol", "must be positive"));
        }
        d.kappa.validate("kappa")?;
        d.alpha1.validate("alpha1")?;
        d.alpha2.validate("alpha2")?;
        let grid = self
            .grid(&LatticeBasis::honeycomb())
            .map_err(|e| Error::config("box_length", e.to_string()))?;
        if grid.cells % 3 != 0 {
            return Err(Error::config(
                "box_length",
                format!("box_length/epsilon = {} cells must be a multiple of 3", grid.cells),
            ));
        }
        Ok(())
    }

    pub fn grid(&self, lattice: &LatticeBasis) -> Result<ObliqueGrid> {
        let d = &self.dynamics;
        ObliqueGrid::from_box(lattice, d.box_length, d.points_per_cell, d.epsilon)
    }

    /// Requested step before any stability reduction.
    pub fn time_step(&self) -> f64 {
        let d = &self.dynamics;
        d.dt.unwrap_or(d.dt_per_epsilon * d.epsilon)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut cfg = self.clone();
        cfg.dynamics.epsilon = epsilon;
        cfg
    }

    pub fn with_order(&self, order: ApproximationOrder) -> Self {
        let mut cfg = self.clone();
        cfg.dynamics.order = order;
        cfg
    }

    pub fn problem(&self) -> Result<FnlsProblem> {
        Ok(FnlsProblem {
            sigma: self.model.sigma,
            mu: self.dynamics.mu,
            potential: self.model.potential.build("potential")?,
            perturbation: self.model.perturbation.build("perturbation")?,
            kappa: self.dynamics.kappa.clone(),
        })
    }
}
