//! Envelopes `(α1, α2)` and the nonlinear Dirac system with varying mass
//!
//! ```text
//! ∂t α1 = −vF(∂1 + i∂2)α2 − iϑκ α1 − iμ(b1|α1|² + b2|α2|²)α1
//! ∂t α2 = −vF(∂1 − i∂2)α1 + iϑκ α2 − iμ(b2|α1|² + b1|α2|²)α2
//! ```
//!
//! integrated by Strang splitting with both sub-flows solved exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dirac::DiracPointData;
use crate::error::{Error, Result};
use crate::grid::ObliqueGrid;
use crate::lattice::Vec2;

use super::field::{Spectral, ZERO};
use super::TimeGrid;

/// `amplitude · exp(−|x − c|²/width²)` with `c` measured from the box
/// centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPacket {
    /// `[re, im]`.
    pub amplitude: [f64; 2],
    #[serde(default)]
    pub center: [f64; 2],
    pub width: f64,
}

impl GaussianPacket {
    pub fn zero() -> Self {
        GaussianPacket {
            amplitude: [0.0, 0.0],
            center: [0.0, 0.0],
            width: 1.0,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let finite = self.amplitude.iter().chain(&self.center).all(|v| v.is_finite());
        if finite && self.width > 0.0 && self.width.is_finite() {
            Ok(())
        } else {
            Err(Error::config(field, "envelope amplitude and centre must be finite, width positive"))
        }
    }

    pub fn sample(&self, grid: &ObliqueGrid) -> Vec<Complex64> {
        let a = Complex64::new(self.amplitude[0], self.amplitude[1]);
        let center = grid.center() + Vec2::new(self.center[0], self.center[1]);
        let w2 = self.width * self.width;
        grid.sample(|x| {
            let d = grid.periodic_offset(x, center);
            a * (-d.dot(d) / w2).exp()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeState {
    pub grid: ObliqueGrid,
    pub alpha: [Vec<Complex64>; 2],
    pub time: f64,
}

impl EnvelopeState {
    pub fn zeros(grid: &ObliqueGrid) -> Self {
        EnvelopeState {
            grid: grid.clone(),
            alpha: [vec![ZERO; grid.len()], vec![ZERO; grid.len()]],
            time: 0.0,
        }
    }

    pub fn gaussian(grid: &ObliqueGrid, packets: [&GaussianPacket; 2]) -> Self {
        EnvelopeState {
            grid: grid.clone(),
            alpha: [packets[0].sample(grid), packets[1].sample(grid)],
            time: 0.0,
        }
    }

    /// `∫ |α1|² + |α2|² dx`.
    pub fn charge(&self) -> f64 {
        let s: f64 = self.alpha.iter().flatten().map(|z| z.norm_sqr()).sum();
        s * self.grid.node_area()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Fraction of spectral energy at frequencies beyond a quarter of the
    /// micro band, i.e. `|f_i| > cells/4` in either direction.
    pub fn nyquist_fraction(&self, spectral: &mut Spectral) -> f64 {
        let side = self.grid.side();
        let limit = self.grid.cells as f64 / 4.0;
        let mut outside = 0.0;
        let mut total = 0.0;
        for a in &self.alpha {
            let mut spec = a.clone();
            spectral.fft.forward(&mut spec);
            for j1 in 0..side {
                let f1 = self.grid.frequency(j1).abs() as f64;
                for j2 in 0..side {
                    let f2 = self.grid.frequency(j2).abs() as f64;
                    let e = spec[j1 * side + j2].norm_sqr();
                    total += e;
                    if f1 > limit || f2 > limit {
                        outside += e;
                    }
                }
            }
        }
        if total > 0.0 {
            outside / total
        } else {
            0.0
        }
    }
}

/// Coefficients of the envelope system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiracParams {
    pub v_f: f64,
    pub theta: f64,
    pub b1: f64,
    pub b2: f64,
    pub mu: f64,
}

impl DiracParams {
    pub fn new(data: &DiracPointData, mu: f64) -> Self {
        DiracParams {
            v_f: data.v_f,
            theta: data.theta,
            b1: data.b1,
            b2: data.b2,
            mu,
        }
    }
}

/// Fixed-step Strang integrator for the envelope system.
pub struct DiracSolver {
    params: DiracParams,
    kappa: Vec<f64>,
    spectral: Spectral,
    /// Per mode `[cos, −sin/ω · A12, −sin/ω · A21]` for one full step.
    transport: Vec<[Complex64; 3]>,
    dt: f64,
}

impl DiracSolver {
    pub fn new(grid: &ObliqueGrid, params: DiracParams, kappa: Vec<f64>, dt: f64) -> Result<Self> {
        if kappa.len() != grid.len() {
            return Err(Error::GridMismatch("κ samples do not match the envelope grid".into()));
        }
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidInput(format!("time step must be finite and nonzero, got {dt}")));
        }
        let spectral = Spectral::new(grid);
        let transport = spectral
            .xi
            .iter()
            .map(|xi| {
                let a12 = params.v_f * Complex64::new(-xi.y, xi.x);
                let a21 = params.v_f * Complex64::new(xi.y, xi.x);
                let omega = params.v_f * xi.norm();
                let (c, s_over) = if omega > 0.0 {
                    ((omega * dt).cos(), (omega * dt).sin() / omega)
                } else {
                    (1.0, dt)
                };
                [Complex64::new(c, 0.0), -s_over * a12, -s_over * a21]
            })
            .collect();
        Ok(DiracSolver {
            params,
            kappa,
            spectral,
            transport,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn pointwise(&self, state: &mut EnvelopeState, h: f64) {
        let p = &self.params;
        let [a1, a2] = &mut state.alpha;
        for ((x, y), k) in a1.iter_mut().zip(a2.iter_mut()).zip(&self.kappa) {
            let (n1, n2) = (x.norm_sqr(), y.norm_sqr());
            let ph1 = -p.theta * k - p.mu * (p.b1 * n1 + p.b2 * n2);
            let ph2 = p.theta * k - p.mu * (p.b2 * n1 + p.b1 * n2);
            *x *= Complex64::from_polar(1.0, ph1 * h);
            *y *= Complex64::from_polar(1.0, ph2 * h);
        }
    }

    fn linear(&mut self, state: &mut EnvelopeState) {
        let [a1, a2] = &mut state.alpha;
        self.spectral.fft.forward(a1);
        self.spectral.fft.forward(a2);
        for ((x, y), m) in a1.iter_mut().zip(a2.iter_mut()).zip(&self.transport) {
            let (u, v) = (*x, *y);
            *x = m[0] * u + m[1] * v;
            *y = m[2] * u + m[0] * v;
        }
        self.spectral.fft.inverse(a1);
        self.spectral.fft.inverse(a2);
    }

    pub fn step(&mut self, state: &mut EnvelopeState) {
        self.pointwise(state, 0.5 * self.dt);
        self.linear(state);
        self.pointwise(state, 0.5 * self.dt);
        state.time += self.dt;
    }
}

/// Evolves `env0` and returns the state at every frame of `times`
/// (including `t = 0`).
pub fn evolve_dirac(env0: &EnvelopeState, params: DiracParams, kappa: Vec<f64>, times: &TimeGrid) -> Result<Vec<EnvelopeState>> {
    let mut solver = DiracSolver::new(&env0.grid, params, kappa, times.dt)?;
    let mut state = env0.clone();
    let mut frames = vec![state.clone()];
    for frame in 1..=times.frames {
        for _ in 0..times.steps_per_frame {
            solver.step(&mut state);
        }
        if !state.is_finite() {
            return Err(Error::NonFinite {
                frame,
                time: state.time,
            });
        }
        frames.push(state.clone());
    }
    Ok(frames)
}
