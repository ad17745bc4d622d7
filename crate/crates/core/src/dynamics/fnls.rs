//! Split-step solvers for the semiclassical fractional NLS
//!
//! ```text
//! i∂t ψ = ε⁻¹(−ε²Δ)^{σ/2}ψ + ε⁻¹V(x/ε)ψ + κ(x)W(x/ε)ψ + μ|ψ|²ψ
//! ```
//!
//! on a periodic oblique box. Two Strang schemes are provided:
//!
//! * [`Integrator::SplitStep`] splits off every potential term and
//!   propagates `ε⁻¹(−ε²Δ)^{σ/2}` by a Fourier multiplier. Its step must
//!   resolve the fast phase `ε⁻¹(|εξ|^σ + |V|)`, which is enforced.
//! * [`Integrator::BlochSplitStep`] propagates the whole periodic operator
//!   `ε⁻¹[(−ε²Δ)^{σ/2} + V(x/ε)]` exactly: it decouples into blocks of box
//!   modes sharing a quasimomentum, each exponentiated once. Only the
//!   `O(1)` terms `κW + μ|ψ|²` are split, so the step can scale with `ε`.

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::validate_sigma;
use crate::error::{Error, Result};
use crate::grid::{Fft2, ObliqueGrid};
use crate::potential::{FourierPotential, Modulation};

use super::field::{Field2D, ZERO};
use super::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Strang splitting with a Fourier-multiplier linear step.
    SplitStep,
    /// Strang splitting with the periodic operator propagated exactly.
    #[default]
    BlochSplitStep,
}

/// Coefficients of the fNLS (the grid fixes `ε`).
#[derive(Debug, Clone, PartialEq)]
pub struct FnlsProblem {
    pub sigma: f64,
    pub mu: f64,
    pub potential: FourierPotential,
    pub perturbation: FourierPotential,
    pub kappa: Modulation,
}

impl FnlsProblem {
    pub fn validate(&self) -> Result<()> {
        validate_sigma(self.sigma)?;
        if !self.mu.is_finite() {
            return Err(Error::InvalidInput("μ must be finite".into()));
        }
        self.potential.require_real("V")?;
        self.perturbation.require_real("W")?;
        Ok(())
    }
}

/// Largest step allowed for [`Integrator::SplitStep`]:
/// `0.1 ε / max(|εξ|^σ + |V|∞)`.
pub fn cfl_limit(grid: &ObliqueGrid, sigma: f64, potential: &FourierPotential) -> f64 {
    let eps = grid.epsilon;
    let max_symbol = grid
        .wavevectors()
        .iter()
        .map(|xi| (eps * xi.norm()).powf(sigma))
        .fold(0.0, f64::max);
    0.1 * eps / (max_symbol + potential.sup_bound())
}

/// Largest stable step not exceeding `requested`, reduced (and logged)
/// when the integrator needs it.
pub fn admissible_dt(grid: &ObliqueGrid, problem: &FnlsProblem, integrator: Integrator, requested: f64) -> f64 {
    match integrator {
        Integrator::BlochSplitStep => requested,
        Integrator::SplitStep => {
            let limit = cfl_limit(grid, problem.sigma, &problem.potential);
            if requested > limit {
                log::warn!("time step {requested:.3e} exceeds the CFL limit {limit:.3e}; reducing");
                limit
            } else {
                requested
            }
        }
    }
}

/// Exact propagators of the periodic operator, one per quasimomentum
/// block.
struct BlochPropagator {
    block: usize,
    /// FFT slot of every block mode, block-major.
    slots: Vec<usize>,
    /// Row-major `block × block` unitaries, block-major.
    unitaries: Vec<Complex64>,
    gathered: Vec<Complex64>,
    mapped: Vec<Complex64>,
}

impl BlochPropagator {
    fn new(grid: &ObliqueGrid, sigma: f64, potential: &FourierPotential, dt: f64) -> Result<Self> {
        let cells = grid.cells as i64;
        let side = grid.side() as i64;
        let eps = grid.epsilon;
        // Box frequencies `f ≡ r (mod cells)` inside the FFT window, with
        // their lattice offset `m = (f − r)/cells`.
        let window = |r: i64| -> Vec<(i64, i64)> {
            (-(side / cells) - 1..=side / cells + 1)
                .map(|m| (r + cells * m, m))
                .filter(|(f, _)| 2 * f >= -side && 2 * f < side)
                .collect()
        };
        let n = window(0).len();
        let block = n * n;
        let blocks: Vec<[i64; 2]> = (0..cells).flat_map(|a| (0..cells).map(move |b| [a, b])).collect();
        let per_block: Vec<Result<(Vec<usize>, Vec<Complex64>)>> = blocks
            .par_iter()
            .map(|r| {
                let w1 = window(r[0]);
                let w2 = window(r[1]);
                let modes: Vec<([i64; 2], [i64; 2])> = w1
                    .iter()
                    .flat_map(|&(f1, m1)| w2.iter().map(move |&(f2, m2)| ([f1, f2], [m1, m2])))
                    .collect();
                let mut h = Mat::<Complex64>::zeros(block, block);
                for (i, (fi, mi)) in modes.iter().enumerate() {
                    let xi = (1.0 / grid.box_len()) * grid.lattice.dual_vector(*fi);
                    h[(i, i)] += Complex64::new((eps * xi.norm()).powf(sigma) / eps, 0.0);
                    for (j, (_, mj)) in modes.iter().enumerate() {
                        let v = potential.coefficient([mi[0] - mj[0], mi[1] - mj[1]]);
                        h[(i, j)] += v / eps;
                    }
                }
                let eig = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver {
                    size: block,
                    message: format!("{e:?}"),
                })?;
                let vals = eig.S().column_vector();
                let vecs = eig.U();
                let phases: Vec<Complex64> = (0..block).map(|k| Complex64::from_polar(1.0, -dt * vals[k].re)).collect();
                let mut u = vec![ZERO; block * block];
                for i in 0..block {
                    for j in 0..block {
                        let mut acc = ZERO;
                        for (k, ph) in phases.iter().enumerate() {
                            acc += vecs[(i, k)] * ph * vecs[(j, k)].conj();
                        }
                        u[i * block + j] = acc;
                    }
                }
                let slots = modes
                    .iter()
                    .map(|(f, _)| (f[0].rem_euclid(side) * side + f[1].rem_euclid(side)) as usize)
                    .collect();
                Ok((slots, u))
            })
            .collect();
        let mut slots = Vec::with_capacity(grid.len());
        let mut unitaries = Vec::with_capacity(blocks.len() * block * block);
        for item in per_block {
            let (s, u) = item?;
            slots.extend(s);
            unitaries.extend(u);
        }
        Ok(BlochPropagator {
            block,
            slots,
            unitaries,
            gathered: vec![ZERO; grid.len()],
            mapped: vec![ZERO; grid.len()],
        })
    }

    fn apply(&mut self, spec: &mut [Complex64]) {
        let b = self.block;
        for (dst, &s) in self.gathered.iter_mut().zip(&self.slots) {
            *dst = spec[s];
        }
        let unitaries = &self.unitaries;
        self.mapped
            .par_chunks_mut(b)
            .zip(self.gathered.par_chunks(b))
            .enumerate()
            .for_each(|(k, (y, x))| {
                let u = &unitaries[k * b * b..(k + 1) * b * b];
                for (yi, row) in y.iter_mut().zip(u.chunks_exact(b)) {
                    *yi = row.iter().zip(x).map(|(a, c)| a * c).sum();
                }
            });
        for (v, &s) in self.mapped.iter().zip(&self.slots) {
            spec[s] = *v;
        }
    }
}

enum LinearStep {
    Multiplier(Vec<Complex64>),
    Bloch(BlochPropagator),
}

/// Fixed-step Strang integrator on one grid.
pub struct FnlsSolver {
    grid: ObliqueGrid,
    dt: f64,
    mu: f64,
    /// Real potential handled in the pointwise step.
    pointwise_potential: Vec<f64>,
    linear: LinearStep,
    fft: Fft2,
}

impl FnlsSolver {
    /// `dt` is used as given (see [`admissible_dt`]); negative steps run
    /// backwards in time.
    pub fn new(grid: &ObliqueGrid, problem: &FnlsProblem, integrator: Integrator, dt: f64) -> Result<Self> {
        problem.validate()?;
        problem.kappa.validate("kappa")?;
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidInput(format!("time step must be finite and nonzero, got {dt}")));
        }
        let eps = grid.epsilon;
        let kappa = problem.kappa.evaluate_on_grid(grid);
        let w = problem.perturbation.evaluate_on_grid(grid);
        let mut pointwise_potential: Vec<f64> = kappa.iter().zip(&w).map(|(k, w)| k * w.re).collect();
        let linear = match integrator {
            Integrator::SplitStep => {
                let v = problem.potential.evaluate_on_grid(grid);
                for (p, v) in pointwise_potential.iter_mut().zip(&v) {
                    *p += v.re / eps;
                }
                let mult = grid
                    .wavevectors()
                    .iter()
                    .map(|xi| Complex64::from_polar(1.0, -dt * (eps * xi.norm()).powf(problem.sigma) / eps))
                    .collect();
                LinearStep::Multiplier(mult)
            }
            Integrator::BlochSplitStep => {
                LinearStep::Bloch(BlochPropagator::new(grid, problem.sigma, &problem.potential, dt)?)
            }
        };
        Ok(FnlsSolver {
            grid: grid.clone(),
            dt,
            mu: problem.mu,
            pointwise_potential,
            linear,
            fft: Fft2::new(grid.side()),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn pointwise(&self, values: &mut [Complex64], h: f64) {
        let mu = self.mu;
        for (z, p) in values.iter_mut().zip(&self.pointwise_potential) {
            let phase = -(p + mu * z.norm_sqr()) * h;
            *z *= Complex64::from_polar(1.0, phase);
        }
    }

    pub fn step(&mut self, psi: &mut Field2D) {
        let h = 0.5 * self.dt;
        self.pointwise(&mut psi.values, h);
        self.fft.forward(&mut psi.values);
        match &mut self.linear {
            LinearStep::Multiplier(m) => psi.values.iter_mut().zip(m.iter()).for_each(|(z, m)| *z *= m),
            LinearStep::Bloch(p) => p.apply(&mut psi.values),
        }
        self.fft.inverse(&mut psi.values);
        self.pointwise(&mut psi.values, h);
    }

    /// Runs `steps` steps; fails on the first non-finite sample.
    pub fn advance(&mut self, psi: &mut Field2D, steps: usize, frame: usize, t0: f64) -> Result<()> {
        psi.check_grid(&self.grid)?;
        for s in 0..steps {
            self.step(psi);
            if ((s + 1) % 64 == 0 || s + 1 == steps) && !psi.is_finite() {
                return Err(Error::NonFinite {
                    frame,
                    time: t0 + (s + 1) as f64 * self.dt,
                });
            }
        }
        Ok(())
    }
}

/// Evolves `psi0`, returning the field at every frame of `times`
/// (including `t = 0`).
pub fn evolve_fnls(psi0: &Field2D, problem: &FnlsProblem, integrator: Integrator, times: &TimeGrid) -> Result<Vec<Field2D>> {
    let mut solver = FnlsSolver::new(&psi0.grid, problem, integrator, times.dt)?;
    let mut psi = psi0.clone();
    let mut frames = vec![psi.clone()];
    for frame in 1..=times.frames {
        let t0 = times.time(frame - 1);
        solver.advance(&mut psi, times.steps_per_frame, frame, t0)?;
        frames.push(psi.clone());
    }
    Ok(frames)
}
