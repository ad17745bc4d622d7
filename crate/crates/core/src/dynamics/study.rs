//! Full simulations (fNLS against the envelope ansatz) and ε-convergence
//! studies.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dirac::{analyze, linear_fit, DiracPointData};
use crate::error::{Error, Result};
use crate::grid::ObliqueGrid;
use crate::lattice::LatticeBasis;

use super::ansatz::{Ansatz, ApproximationOrder};
use super::envelope::{evolve_dirac, DiracParams, EnvelopeState};
use super::field::Field2D;
use super::fnls::{admissible_dt, evolve_fnls};
use super::micro::MicroProfiles;
use super::{SimConfig, TimeGrid};

/// Trajectories of one run, one entry per output frame (frame 0 is the
/// initial state).
pub struct Simulation {
    pub config: SimConfig,
    pub grid: ObliqueGrid,
    pub times: TimeGrid,
    pub psi: Vec<Field2D>,
    pub envelopes: Vec<EnvelopeState>,
    /// `‖ψ − ansatz‖_{H^s_ε}` per frame.
    pub errors: Vec<f64>,
    pub mass: Vec<f64>,
    pub charge: Vec<f64>,
    pub dropped_fraction: f64,
    pub runtime_sec: f64,
}

impl Simulation {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("at least one frame")
    }

    fn relative_drift(series: &[f64]) -> f64 {
        let first = series[0];
        let worst = series.iter().map(|m| (m - first).abs()).fold(0.0, f64::max);
        if first > 0.0 {
            worst / first
        } else {
            worst
        }
    }

    pub fn mass_drift(&self) -> f64 {
        Self::relative_drift(&self.mass)
    }

    pub fn charge_drift(&self) -> f64 {
        Self::relative_drift(&self.charge)
    }

    pub fn report(&self) -> CaseReport {
        CaseReport {
            epsilon: self.grid.epsilon,
            error: self.final_error(),
            runtime_sec: self.runtime_sec,
            order: self.config.dynamics.order,
            cells: self.grid.cells,
            points_per_cell: self.grid.points_per_cell,
            dt: self.times.dt,
            steps: self.times.total_steps(),
            mass_drift: self.mass_drift(),
            charge_drift: self.charge_drift(),
            dropped_fraction: self.dropped_fraction,
        }
    }
}

/// Synthesises the initial wave packet from the configured envelopes,
/// evolves the fNLS and the envelope system side by side and measures the
/// approximation error at every frame.
pub fn simulate(cfg: &SimConfig, profiles: &MicroProfiles, data: &DiracPointData) -> Result<Simulation> {
    let start = Instant::now();
    cfg.validate()?;
    if (cfg.model.sigma - data.sigma).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "Dirac data computed for σ = {}, simulation uses σ = {}",
            data.sigma, cfg.model.sigma
        )));
    }
    let lattice = LatticeBasis::honeycomb();
    let grid = cfg.grid(&lattice)?;
    let problem = cfg.problem()?;
    let d = &cfg.dynamics;
    let corrected = d.order == ApproximationOrder::Corrected;
    let mut ansatz = Ansatz::new(profiles, &grid, data.e_d, &d.kappa, d.mu, corrected)?;
    ansatz.nyquist_tol = d.nyquist_tol;

    let env0 = EnvelopeState::gaussian(&grid, [&d.alpha1, &d.alpha2]);
    let psi0 = ansatz.synthesize_wavepacket(&env0, d.order)?;
    let dt = admissible_dt(&grid, &problem, d.integrator, cfg.time_step());
    let times = TimeGrid::new(d.final_time, d.frames, dt)?;
    log::info!(
        "ε = {}: {}x{} nodes, dt = {:.3e}, {} steps",
        grid.epsilon,
        grid.side(),
        grid.side(),
        times.dt,
        times.total_steps()
    );
    let psi = evolve_fnls(&psi0, &problem, d.integrator, &times)?;
    let envelopes = evolve_dirac(&env0, DiracParams::new(data, d.mu), ansatz.kappa.clone(), &times)?;
    let mut errors = Vec::with_capacity(psi.len());
    for (p, e) in psi.iter().zip(&envelopes) {
        errors.push(ansatz.approximation_error(p, e, d.order, d.norm_order)?);
    }
    let mass = psi.iter().map(Field2D::mass).collect();
    let charge = envelopes.iter().map(EnvelopeState::charge).collect();
    Ok(Simulation {
        config: cfg.clone(),
        grid,
        times,
        psi,
        envelopes,
        errors,
        mass,
        charge,
        dropped_fraction: ansatz.micro.dropped_fraction,
        runtime_sec: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CaseReport {
    pub epsilon: f64,
    pub error: f64,
    pub runtime_sec: f64,
    pub order: ApproximationOrder,
    pub cells: usize,
    pub points_per_cell: usize,
    pub dt: f64,
    pub steps: usize,
    pub mass_drift: f64,
    pub charge_drift: f64,
    pub dropped_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CorrectedComparison {
    pub epsilon: f64,
    pub leading_error: f64,
    pub corrected_error: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceReport {
    pub sigma: f64,
    pub final_time: f64,
    pub norm_order: u32,
    pub cases: Vec<CaseReport>,
    /// Slope of `log error` against `log ε`; absent for a single case.
    pub fitted_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_comparison: Option<CorrectedComparison>,
}

/// Least-squares slope of `log error` against `log ε`.
pub fn fitted_rate(cases: &[CaseReport]) -> Result<f64> {
    let x: Vec<f64> = cases.iter().map(|c| c.epsilon.ln()).collect();
    let y: Vec<f64> = cases.iter().map(|c| c.error.ln()).collect();
    Ok(linear_fit(&x, &y)?.1)
}

/// Leading-order error at final time for every `ε`, the fitted rate, and
/// optionally the leading/corrected comparison at one `ε`. Cases run in
/// parallel; `on_case` sees each finished case (in completion order).
pub fn convergence_study(
    cfg: &SimConfig,
    epsilons: &[f64],
    corrected_at: Option<f64>,
    on_case: &(dyn Fn(&CaseReport) + Sync),
) -> Result<ConvergenceReport> {
    if epsilons.is_empty() {
        return Err(Error::InvalidInput("a convergence study needs at least one value of ε".into()));
    }
    let lattice = LatticeBasis::honeycomb();
    let analysis = analyze(&cfg.model.dirac_setup(&lattice)?)?;
    let perturbation = cfg.model.perturbation.build("perturbation")?;
    let profiles = MicroProfiles::compute(&analysis, &perturbation, lattice.cell_area)?;
    let data = &analysis.data;

    let leading = cfg.with_order(ApproximationOrder::Leading);
    let mut jobs: Vec<SimConfig> = epsilons.iter().map(|&e| leading.with_epsilon(e)).collect();
    if let Some(e) = corrected_at {
        jobs.push(leading.with_epsilon(e).with_order(ApproximationOrder::Corrected));
        if !epsilons.contains(&e) {
            jobs.push(leading.with_epsilon(e));
        }
    }
    let reports: Vec<CaseReport> = jobs
        .par_iter()
        .map(|job| {
            let report = simulate(job, &profiles, data)?.report();
            on_case(&report);
            Ok(report)
        })
        .collect::<Result<_>>()?;

    let cases: Vec<CaseReport> = reports[..epsilons.len()].to_vec();
    let fitted_rate = if cases.len() >= 2 { Some(fitted_rate(&cases)?) } else { None };
    let corrected_comparison = corrected_at.map(|e| {
        let find = |order| {
            reports
                .iter()
                .find(|r| r.epsilon == e && r.order == order)
                .map(|r| r.error)
                .unwrap_or(f64::NAN)
        };
        CorrectedComparison {
            epsilon: e,
            leading_error: find(ApproximationOrder::Leading),
            corrected_error: find(ApproximationOrder::Corrected),
        }
    });
    Ok(ConvergenceReport {
        sigma: cfg.model.sigma,
        final_time: cfg.dynamics.final_time,
        norm_order: cfg.dynamics.norm_order,
        cases,
        fitted_rate,
        corrected_comparison,
    })
}
