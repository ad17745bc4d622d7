//! Periodic potentials as finite Fourier series on the dual lattice, the
//! honeycomb axiom checker, and macroscopic modulations `κ(x)`.
//!
//! A potential is `V(y) = Σ_m V̂(m) e^{i (m1 k1 + m2 k2)·y}`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ObliqueGrid;
use crate::lattice::Vec2;

/// Index image of `m` under the rotation acting on periodic functions:
/// `R*(m1 k1 + m2 k2) = (m2 − m1) k1 − m1 k2`.
pub fn rotate_periodic_index(m: [i64; 2]) -> [i64; 2] {
    [m[1] - m[0], -m[0]]
}

/// Symmetries a potential claims to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Symmetries {
    pub real: bool,
    pub even: bool,
    pub rotation_invariant: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FourierPotential {
    coeffs: BTreeMap<[i64; 2], Complex64>,
    pub declared: Symmetries,
}

impl FourierPotential {
    pub fn zero() -> Self {
        FourierPotential {
            coeffs: BTreeMap::new(),
            declared: Symmetries {
                real: true,
                even: true,
                rotation_invariant: true,
            },
        }
    }

    /// Builds a potential from `(m, V̂(m))` pairs; repeated indices add up.
    /// Declared symmetries are whatever the coefficients satisfy.
    pub fn from_coefficients<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = ([i64; 2], Complex64)>,
    {
        let mut coeffs = BTreeMap::new();
        for (m, c) in entries {
            *coeffs.entry(m).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        let mut pot = FourierPotential {
            coeffs,
            declared: Symmetries::default(),
        };
        let report = pot.check_honeycomb();
        pot.declared = Symmetries {
            real: report.real.holds,
            even: report.even.holds,
            rotation_invariant: report.rotation_invariant.holds,
        };
        pot
    }

    /// `V(y) = 2 Σ cos(k·y)` over `k ∈ {k1, k2, k1 + k2}`.
    pub fn builtin_v() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let support = [[1, 0], [0, 1], [1, 1]];
        Self::from_coefficients(support.iter().flat_map(|&[a, b]| [([a, b], one), ([-a, -b], one)]))
    }

    /// `W(y) = sin(k1·y) + sin(k2·y) − sin((k1 + k2)·y)`: real, odd and
    /// rotation invariant.
    pub fn builtin_w() -> Self {
        let c = Complex64::new(0.0, -0.5);
        let support = [[1, 0], [0, 1], [-1, -1]];
        Self::from_coefficients(support.iter().flat_map(|&[a, b]| [([a, b], c), ([-a, -b], c.conj())]))
    }

    pub fn coefficient(&self, m: [i64; 2]) -> Complex64 {
        self.coeffs.get(&m).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn coefficients(&self) -> impl Iterator<Item = ([i64; 2], Complex64)> + '_ {
        self.coeffs.iter().map(|(m, c)| (*m, *c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|c| *c == Complex64::new(0.0, 0.0))
    }

    /// Largest `|m_i|` among stored coefficients.
    pub fn support_radius(&self) -> i64 {
        self.coeffs
            .keys()
            .map(|m| m[0].abs().max(m[1].abs()))
            .max()
            .unwrap_or(0)
    }

    /// Upper bound `Σ|V̂(m)| ≥ sup|V|`.
    pub fn sup_bound(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FourierPotential {
            coeffs: self.coeffs.iter().map(|(m, c)| (*m, c * factor)).collect(),
            declared: self.declared,
        }
    }

    /// `self + factor · other`.
    pub fn add_scaled(&self, other: &FourierPotential, factor: f64) -> Self {
        let entries = self
            .coefficients()
            .chain(other.coefficients().map(|(m, c)| (m, c * factor)));
        Self::from_coefficients(entries)
    }

    /// Point evaluation at a micro position `y`.
    pub fn evaluate(&self, lattice_k1: Vec2, lattice_k2: Vec2, y: Vec2) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(m, c)| {
                let q = m[0] as f64 * lattice_k1 + m[1] as f64 * lattice_k2;
                c * Complex64::from_polar(1.0, q.dot(y))
            })
            .sum()
    }

    /// Evaluation at reduced coordinates `y = s1 v1 + s2 v2`.
    pub fn evaluate_reduced(&self, s: [f64; 2]) -> Complex64 {
        use std::f64::consts::TAU;
        self.coeffs
            .iter()
            .map(|(m, c)| c * Complex64::from_polar(1.0, TAU * (m[0] as f64 * s[0] + m[1] as f64 * s[1])))
            .sum()
    }

    /// Tests the honeycomb axioms on the coefficients. Periodicity holds by
    /// construction.
    pub fn check_honeycomb(&self) -> HoneycombReport {
        let mut real: f64 = 0.0;
        let mut even: f64 = 0.0;
        let mut odd: f64 = 0.0;
        let mut rot: f64 = 0.0;
        // A missing partner reads as zero and shows up as a mismatch.
        for (&m, &c) in &self.coeffs {
            let neg = self.coefficient([-m[0], -m[1]]);
            real = real.max((neg - c.conj()).norm());
            even = even.max((neg - c).norm());
            odd = odd.max((neg + c).norm());
            let r = rotate_periodic_index(m);
            rot = rot.max((self.coefficient(r) - c).norm());
            let rinv = rotate_periodic_index(rotate_periodic_index(m));
            rot = rot.max((self.coefficient(rinv) - c).norm());
        }
        let tol = 1e-12 * self.sup_bound().max(1.0);
        HoneycombReport {
            real: AxiomCheck::new(real, tol),
            even: AxiomCheck::new(even, tol),
            odd: AxiomCheck::new(odd, tol),
            periodic: AxiomCheck::new(0.0, tol),
            rotation_invariant: AxiomCheck::new(rot, tol),
        }
    }

    /// Samples `V(x/ε)` at every node of `grid`. The grid has an integer
    /// number of nodes per lattice cell, so the samples are exactly periodic.
    pub fn evaluate_on_grid(&self, grid: &ObliqueGrid) -> Vec<Complex64> {
        let n = grid.points_per_cell;
        let cell = self.sample_cell(n);
        let side = grid.side();
        let mut out = Vec::with_capacity(grid.len());
        for a in 0..side {
            let row = &cell[(a % n) * n..(a % n + 1) * n];
            for b in 0..side {
                out.push(row[b % n]);
            }
        }
        out
    }

    /// Samples on an `n × n` grid of one cell, row-major in `(s1, s2)`.
    pub fn sample_cell(&self, n: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                out.push(self.evaluate_reduced([a as f64 / n as f64, b as f64 / n as f64]));
            }
        }
        out
    }

    /// Requires real coefficients (`V̂(−m) = conj V̂(m)`).
    pub fn require_real(&self, what: &str) -> Result<()> {
        let report = self.check_honeycomb();
        if report.real.holds {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what} must be real-valued (coefficient mismatch {:.3e})",
                report.real.residual
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub holds: bool,
    pub residual: f64,
}

impl AxiomCheck {
    fn new(residual: f64, tol: f64) -> Self {
        AxiomCheck {
            holds: residual <= tol,
            residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoneycombReport {
    pub real: AxiomCheck,
    pub even: AxiomCheck,
    pub odd: AxiomCheck,
    pub periodic: AxiomCheck,
    pub rotation_invariant: AxiomCheck,
}

impl HoneycombReport {
    /// Real, even, periodic and rotation invariant.
    pub fn is_honeycomb(&self) -> bool {
        self.real.holds && self.even.holds && self.periodic.holds && self.rotation_invariant.holds
    }
}

/// Declarative description of a potential, as accepted in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    /// `"numpoten"` (honeycomb `V`), `"nummodu"` (odd `W`) or `"zero"`.
    Builtin(String),
    /// `[m1, m2, re, im]` quadruples.
    Coefficients(Vec<[f64; 4]>),
}

impl PotentialSpec {
    pub fn build(&self, field: &str) -> Result<FourierPotential> {
        match self {
            PotentialSpec::Builtin(name) => match name.as_str() {
                "numpoten" => Ok(FourierPotential::builtin_v()),
                "nummodu" => Ok(FourierPotential::builtin_w()),
                "zero" => Ok(FourierPotential::zero()),
                other => Err(Error::config(
                    field,
                    format!("unknown builtin potential `{other}` (expected numpoten, nummodu or zero)"),
                )),
            },
            PotentialSpec::Coefficients(list) => {
                let mut entries = Vec::with_capacity(list.len());
                for (i, q) in list.iter().enumerate() {
                    let idx = [q[0], q[1]];
                    if idx.iter().any(|v| v.fract() != 0.0 || !v.is_finite()) {
                        return Err(Error::config(
                            field,
                            format!("entry {i}: indices must be integers, got ({}, {})", q[0], q[1]),
                        ));
                    }
                    if !q[2].is_finite() || !q[3].is_finite() {
                        return Err(Error::config(field, format!("entry {i}: non-finite coefficient")));
                    }
                    entries.push(([q[0] as i64, q[1] as i64], Complex64::new(q[2], q[3])));
                }
                Ok(FourierPotential::from_coefficients(entries))
            }
        }
    }
}

/// Smooth bounded macroscopic modulation `κ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Modulation {
    Constant {
        value: f64,
    },
    /// `amplitude · exp(−|x − center|² / width²)`.
    Gaussian {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    /// `amplitude · tanh(n·(x − center) / width)` with `n = (cos θ, sin θ)`.
    TanhWall {
        amplitude: f64,
        center: [f64; 2],
        angle: f64,
        width: f64,
    },
}

impl Default for Modulation {
    fn default() -> Self {
        Modulation::Constant { value: 0.0 }
    }
}

impl Modulation {
    pub fn validate(&self, field: &str) -> Result<()> {
        let ok = match self {
            Modulation::Constant { value } => value.is_finite(),
            Modulation::Gaussian { amplitude, center, width } => {
                amplitude.is_finite() && center.iter().all(|c| c.is_finite()) && *width > 0.0
            }
            Modulation::TanhWall {
                amplitude,
                center,
                angle,
                width,
            } => amplitude.is_finite() && center.iter().all(|c| c.is_finite()) && angle.is_finite() && *width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(field, "modulation parameters must be finite with positive width"))
        }
    }

    /// Value at displacement `x − center`.
    pub fn evaluate_offset(&self, offset_from_center: Vec2) -> f64 {
        match *self {
            Modulation::Constant { value } => value,
            Modulation::Gaussian { amplitude, width, .. } => {
                amplitude * (-offset_from_center.dot(offset_from_center) / (width * width)).exp()
            }
            Modulation::TanhWall {
                amplitude, angle, width, ..
            } => amplitude * (Vec2::unit(angle).dot(offset_from_center) / width).tanh(),
        }
    }

    pub fn center(&self) -> Vec2 {
        match *self {
            Modulation::Constant { .. } => Vec2::ZERO,
            Modulation::Gaussian { center, .. } | Modulation::TanhWall { center, .. } => {
                Vec2::new(center[0], center[1])
            }
        }
    }

    pub fn evaluate(&self, x: Vec2) -> f64 {
        self.evaluate_offset(x - self.center())
    }

    /// Samples on the grid. Centres are offsets from the box centre and
    /// distances respect the box periodicity.
    pub fn evaluate_on_grid(&self, grid: &ObliqueGrid) -> Vec<f64> {
        let center = grid.center() + self.center();
        grid.sample(|x| Complex64::new(self.evaluate_offset(grid.periodic_offset(x, center)), 0.0))
            .into_iter()
            .map(|z| z.re)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Modulation::Constant { value } => value == 0.0,
            Modulation::Gaussian { amplitude, .. } | Modulation::TanhWall { amplitude, .. } => amplitude == 0.0,
        }
    }
}
