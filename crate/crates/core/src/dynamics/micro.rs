//! Micro profiles at the Dirac point and their synthesis `F(x/ε)` on a
//! macroscopic grid.
//!
//! Profiles are `K`-pseudo-periodic, `F(y) = Σ_m f_m e^{i(K + m·k⃗)·y}`, and
//! are stored by their coefficients `f_m` on the plane-wave basis used for
//! the Dirac analysis (normalised so that `‖Φ_j‖_{L²(Ω)} = 1`).

use num_complex::Complex64;

use crate::bloch::{apply_p_sigma, coeff_inner, ReducedResolvent};
use crate::dirac::{apply_potential, periodic_samples, DiracAnalysis};
use crate::error::{Error, Result};
use crate::grid::{Fft2, ObliqueGrid};
use crate::lattice::PlaneWaveBasis;
use crate::potential::FourierPotential;

use super::field::ZERO;

/// `L⊥⁻¹ p^σ Φ_j`, `L⊥⁻¹[W Φ_j]` and `L⊥⁻¹[conj(Φ_j) Φ_k Φ_l]`, together
/// with `Φ_j` itself.
#[derive(Debug, Clone)]
pub struct MicroProfiles {
    pub basis: PlaneWaveBasis,
    pub phi: [Vec<Complex64>; 2],
    /// `p[j][c]`: component `c` of the vector profile for `Φ_j`.
    pub p: [[Vec<Complex64>; 2]; 2],
    pub q: [Vec<Complex64>; 2],
    /// `r[j][k][l]`.
    pub r: [[[Vec<Complex64>; 2]; 2]; 2],
    /// Right-hand sides the profiles were solved for, in the order
    /// `p`, `q`, `r` (flattened).
    sources: Vec<Vec<Complex64>>,
}

impl MicroProfiles {
    /// Only the Dirac modes; no corrector profiles.
    pub fn leading(analysis: &DiracAnalysis, cell_area: f64) -> Self {
        let scale = 1.0 / cell_area.sqrt();
        let phi = [
            analysis.data.phi1.iter().map(|c| c * scale).collect::<Vec<_>>(),
            analysis.data.phi2.iter().map(|c| c * scale).collect::<Vec<_>>(),
        ];
        let empty = Vec::new;
        MicroProfiles {
            basis: analysis.basis.clone(),
            phi,
            p: [[empty(), empty()], [empty(), empty()]],
            q: [empty(), empty()],
            r: Default::default(),
            sources: Vec::new(),
        }
    }

    /// Solves for all corrector profiles with the reduced resolvent at `K`.
    pub fn compute(analysis: &DiracAnalysis, perturbation: &FourierPotential, cell_area: f64) -> Result<Self> {
        perturbation.require_real("W")?;
        let mut out = Self::leading(analysis, cell_area);
        let pw = &analysis.basis;
        let res = &analysis.resolvent;
        let sigma = analysis.data.sigma;
        let mut sources = Vec::new();
        let mut solve = |f: Vec<Complex64>, res: &ReducedResolvent| {
            let u = res.apply(&f);
            sources.push(f);
            u
        };
        for j in 0..2 {
            let [px, py] = apply_p_sigma(&out.phi[j], pw, sigma);
            out.p[j] = [solve(px, res), solve(py, res)];
        }
        for j in 0..2 {
            out.q[j] = solve(apply_potential(perturbation, &out.phi[j], pw), res);
        }
        let p = 4 * pw.truncation() + 1;
        let mut fft = Fft2::new(p);
        let samples = [
            periodic_samples(&out.phi[0], pw, p, &mut fft),
            periodic_samples(&out.phi[1], pw, p, &mut fft),
        ];
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let mut prod: Vec<Complex64> = (0..p * p)
                        .map(|n| samples[j][n].conj() * samples[k][n] * samples[l][n])
                        .collect();
                    fft.forward(&mut prod);
                    let pi = p as i64;
                    let norm = 1.0 / (p * p) as f64;
                    let coeffs: Vec<Complex64> = pw
                        .indices()
                        .iter()
                        .map(|m| prod[(m[0].rem_euclid(pi) as usize) * p + m[1].rem_euclid(pi) as usize] * norm)
                        .collect();
                    out.r[j][k][l] = solve(coeffs, res);
                }
            }
        }
        out.sources = sources;
        Ok(out)
    }

    pub fn has_corrector(&self) -> bool {
        !self.sources.is_empty()
    }

    /// `(source, profile)` pairs in the order `p`, `q`, `r`.
    pub fn solved_pairs(&self) -> Vec<(&[Complex64], &[Complex64])> {
        let mut profiles: Vec<&[Complex64]> = Vec::new();
        for j in 0..2 {
            profiles.push(&self.p[j][0]);
            profiles.push(&self.p[j][1]);
        }
        for j in 0..2 {
            profiles.push(&self.q[j]);
        }
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    profiles.push(&self.r[j][k][l]);
                }
            }
        }
        self.sources.iter().map(|s| s.as_slice()).zip(profiles).collect()
    }

    /// Largest `|⟨Φ_j, profile⟩|` over all corrector profiles.
    pub fn max_dirac_overlap(&self) -> f64 {
        self.solved_pairs()
            .iter()
            .flat_map(|(_, u)| self.phi.iter().map(move |phi| coeff_inner(phi, u).norm()))
            .fold(0.0, f64::max)
    }
}

/// FFT index of profile mode `m` on `grid`, or `None` if the mode falls
/// outside the grid's frequency window.
fn mode_slot(grid: &ObliqueGrid, m: [i64; 2]) -> Result<Option<usize>> {
    let cells = grid.cells as i64;
    if cells % 3 != 0 {
        return Err(Error::NonCommensurateGrid(format!(
            "synthesising K-pseudo-periodic profiles needs a multiple of 3 cells per side, got {cells}"
        )));
    }
    let side = grid.side() as i64;
    let f = [cells * m[0] + cells / 3, cells * m[1] - cells / 3];
    if f.iter().any(|&x| 2 * x >= side || 2 * x < -side) {
        return Ok(None);
    }
    let s = grid.side();
    Ok(Some(f[0].rem_euclid(side) as usize * s + f[1].rem_euclid(side) as usize))
}

/// `F(x/ε)` sampled on `grid`, with the fraction of `Σ|f_m|²` that had
/// to be dropped because the grid cannot represent it.
pub fn synthesize_profile(coeffs: &[Complex64], basis: &PlaneWaveBasis, grid: &ObliqueGrid, fft: &mut Fft2) -> Result<(Vec<Complex64>, f64)> {
    let mut spec = vec![ZERO; grid.len()];
    let total = grid.len() as f64;
    let mut dropped = 0.0;
    let mut all = 0.0;
    for (c, m) in coeffs.iter().zip(basis.indices()) {
        all += c.norm_sqr();
        match mode_slot(grid, *m)? {
            Some(slot) => spec[slot] += c * total,
            None => dropped += c.norm_sqr(),
        }
    }
    fft.inverse(&mut spec);
    Ok((spec, if all > 0.0 { dropped / all } else { 0.0 }))
}

/// All profiles evaluated at `x/ε` on one grid.
pub struct MicroFields {
    pub grid: ObliqueGrid,
    pub phi: [Vec<Complex64>; 2],
    pub p: Option<[[Vec<Complex64>; 2]; 2]>,
    pub q: Option<[Vec<Complex64>; 2]>,
    pub r: Option<[[[Vec<Complex64>; 2]; 2]; 2]>,
    /// Largest dropped-coefficient fraction over all synthesised profiles.
    pub dropped_fraction: f64,
}

impl MicroFields {
    pub fn new(profiles: &MicroProfiles, grid: &ObliqueGrid, with_corrector: bool, fft: &mut Fft2) -> Result<Self> {
        let mut dropped: f64 = 0.0;
        let mut synth = |c: &[Complex64]| -> Result<Vec<Complex64>> {
            let (f, d) = synthesize_profile(c, &profiles.basis, grid, fft)?;
            dropped = dropped.max(d);
            Ok(f)
        };
        let phi = [synth(&profiles.phi[0])?, synth(&profiles.phi[1])?];
        let (p, q, r) = if with_corrector {
            if !profiles.has_corrector() {
                return Err(Error::MissingProfiles);
            }
            let p = [
                [synth(&profiles.p[0][0])?, synth(&profiles.p[0][1])?],
                [synth(&profiles.p[1][0])?, synth(&profiles.p[1][1])?],
            ];
            let q = [synth(&profiles.q[0])?, synth(&profiles.q[1])?];
            let mut r: [[[Vec<Complex64>; 2]; 2]; 2] = Default::default();
            for (j, rj) in r.iter_mut().enumerate() {
                for (k, rjk) in rj.iter_mut().enumerate() {
                    for (l, rjkl) in rjk.iter_mut().enumerate() {
                        *rjkl = synth(&profiles.r[j][k][l])?;
                    }
                }
            }
            (Some(p), Some(q), Some(r))
        } else {
            (None, None, None)
        };
        Ok(MicroFields {
            grid: grid.clone(),
            phi,
            p,
            q,
            r,
            dropped_fraction: dropped,
        })
    }

    pub fn has_corrector(&self) -> bool {
        self.p.is_some()
    }
}
