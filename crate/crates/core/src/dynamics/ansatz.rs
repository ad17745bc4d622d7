//! Wave-packet ansatz `α_j(x) Φ_j(x/ε) (+ ε u1⊥)`, its corrector, the
//! approximation error, and the product-rule remainder.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::validate_sigma;
use crate::error::{Error, Result};
use crate::grid::ObliqueGrid;
use crate::potential::Modulation;

use super::envelope::{EnvelopeState, GaussianPacket};
use super::field::{weighted_hs_norm, Field2D, Spectral, ZERO};
use super::micro::{synthesize_profile, MicroFields, MicroProfiles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproximationOrder {
    #[default]
    Leading,
    /// Adds `ε u1⊥` (second envelope `β` set to zero).
    Corrected,
}

/// Default bound on the envelope spectral energy beyond a quarter of the
/// micro band.
pub const NYQUIST_TOL: f64 = 1e-8;

/// Everything needed to turn envelopes into micro-macro fields on one
/// grid.
pub struct Ansatz {
    pub micro: MicroFields,
    pub e_d: f64,
    pub mu: f64,
    pub kappa: Vec<f64>,
    pub nyquist_tol: f64,
    spectral: Spectral,
}

impl Ansatz {
    pub fn new(
        profiles: &MicroProfiles,
        grid: &ObliqueGrid,
        e_d: f64,
        kappa: &Modulation,
        mu: f64,
        with_corrector: bool,
    ) -> Result<Self> {
        kappa.validate("kappa")?;
        let mut spectral = Spectral::new(grid);
        let micro = MicroFields::new(profiles, grid, with_corrector, &mut spectral.fft)?;
        Ok(Ansatz {
            micro,
            e_d,
            mu,
            kappa: kappa.evaluate_on_grid(grid),
            nyquist_tol: NYQUIST_TOL,
            spectral,
        })
    }

    pub fn grid(&self) -> &ObliqueGrid {
        &self.micro.grid
    }

    fn check_env(&mut self, env: &EnvelopeState) -> Result<()> {
        if !env.grid.same_shape(self.grid()) {
            return Err(Error::GridMismatch("envelopes and ansatz live on different grids".into()));
        }
        let fraction = env.nyquist_fraction(&mut self.spectral);
        if fraction > self.nyquist_tol {
            return Err(Error::Nyquist { fraction });
        }
        Ok(())
    }

    /// `α1 Φ1(x/ε) + α2 Φ2(x/ε)`.
    pub fn leading(&self, env: &EnvelopeState) -> Field2D {
        let [p1, p2] = &self.micro.phi;
        let [a1, a2] = &env.alpha;
        let values = (0..p1.len()).map(|i| a1[i] * p1[i] + a2[i] * p2[i]).collect();
        Field2D {
            grid: self.grid().clone(),
            values,
        }
    }

    /// `u1⊥ = ∇α_j·P_j − κ α_j Q_j − μ conj(α_j) α_k α_l R_jkl`, all
    /// profiles evaluated at `x/ε`.
    pub fn corrector_u1(&mut self, env: &EnvelopeState) -> Result<Field2D> {
        let (p, q, r) = match (&self.micro.p, &self.micro.q, &self.micro.r) {
            (Some(p), Some(q), Some(r)) => (p, q, r),
            _ => return Err(Error::MissingProfiles),
        };
        if !env.grid.same_shape(&self.micro.grid) {
            return Err(Error::GridMismatch("envelopes and ansatz live on different grids".into()));
        }
        let len = self.micro.grid.len();
        let mut u = vec![ZERO; len];
        for j in 0..2 {
            let grad = self.spectral.gradient(&env.alpha[j]);
            for c in 0..2 {
                for ((ui, g), pr) in u.iter_mut().zip(&grad[c]).zip(&p[j][c]) {
                    *ui += g * pr;
                }
            }
            for i in 0..len {
                u[i] -= self.kappa[i] * env.alpha[j][i] * q[j][i];
            }
        }
        if self.mu != 0.0 {
            let a = &env.alpha;
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let rjkl = &r[j][k][l];
                        for i in 0..len {
                            u[i] -= self.mu * a[j][i].conj() * a[k][i] * a[l][i] * rjkl[i];
                        }
                    }
                }
            }
        }
        Ok(Field2D {
            grid: self.micro.grid.clone(),
            values: u,
        })
    }

    /// The ansatz at `t = env.time` without the fast phase.
    pub fn synthesize_wavepacket(&mut self, env: &EnvelopeState, order: ApproximationOrder) -> Result<Field2D> {
        self.check_env(env)?;
        let mut psi = self.leading(env);
        if order == ApproximationOrder::Corrected {
            let u = self.corrector_u1(env)?;
            let eps = self.grid().epsilon;
            for (z, v) in psi.values.iter_mut().zip(&u.values) {
                *z += eps * v;
            }
        }
        Ok(psi)
    }

    /// `e^{−i E_D t/ε}` times [`Self::synthesize_wavepacket`]. Evolved
    /// envelopes may broaden beyond the Nyquist bound; that is logged
    /// rather than rejected.
    pub fn at_time(&mut self, env: &EnvelopeState, order: ApproximationOrder) -> Result<Field2D> {
        let tol = self.nyquist_tol;
        self.nyquist_tol = f64::INFINITY;
        let result = self.synthesize_wavepacket(env, order);
        self.nyquist_tol = tol;
        let fraction = env.nyquist_fraction(&mut self.spectral);
        if fraction > tol {
            log::warn!("envelopes at t = {} carry {fraction:.2e} of their energy beyond the Nyquist bound", env.time);
        }
        let mut psi = result?;
        let phase = Complex64::from_polar(1.0, -self.e_d * env.time / self.grid().epsilon);
        psi.scale(phase);
        Ok(psi)
    }

    /// `‖ψ − ansatz(t)‖_{H^s_ε}`.
    pub fn approximation_error(
        &mut self,
        psi: &Field2D,
        env: &EnvelopeState,
        order: ApproximationOrder,
        s: u32,
    ) -> Result<f64> {
        psi.check_grid(self.grid())?;
        let ansatz = self.at_time(env, order)?;
        let diff = psi.difference(&ansatz)?;
        weighted_hs_norm(&diff, s, &mut self.spectral)
    }

    pub fn hs_norm(&mut self, f: &Field2D, s: u32) -> Result<f64> {
        f.check_grid(self.grid())?;
        weighted_hs_norm(f, s, &mut self.spectral)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProductRuleReport {
    pub sigma: f64,
    pub epsilon: f64,
    pub norm_order: u32,
    /// `‖q^σ‖_{H^s_ε}`.
    pub remainder_norm: f64,
    /// `‖ΓΨ‖_{H^s_ε}`, for scale.
    pub product_norm: f64,
    /// For `σ = 2`: `‖q^σ − (−ε²ΔΓ)Ψ‖_{H^s_ε}`.
    pub leibniz_deviation: Option<f64>,
    pub dropped_fraction: f64,
}

/// Remainder `q^σ = (−ε²Δ)^{σ/2}(ΓΨ) − Γ[(−Δ)^{σ/2}Ψ] + ε∇Γ·[p^σΨ]` of the
/// product rule for `Ψ = Φ1` and a Gaussian `Γ`, with micro functions
/// evaluated at `x/ε`.
pub fn product_rule_check(
    profiles: &MicroProfiles,
    sigma: f64,
    gamma: &GaussianPacket,
    grid: &ObliqueGrid,
    s: u32,
) -> Result<ProductRuleReport> {
    validate_sigma(sigma)?;
    gamma.validate("gamma")?;
    let eps = grid.epsilon;
    let pw = &profiles.basis;
    let phi = &profiles.phi[0];
    let mut spectral = Spectral::new(grid);
    let (psi, d0) = synthesize_profile(phi, pw, grid, &mut spectral.fft)?;
    let frac: Vec<Complex64> = phi
        .iter()
        .zip(pw.momenta())
        .map(|(c, q)| c * q.norm().powf(sigma))
        .collect();
    let (frac_psi, d1) = synthesize_profile(&frac, pw, grid, &mut spectral.fft)?;
    let [px, py] = crate::bloch::apply_p_sigma(phi, pw, sigma);
    let (p_psi_x, d2) = synthesize_profile(&px, pw, grid, &mut spectral.fft)?;
    let (p_psi_y, d3) = synthesize_profile(&py, pw, grid, &mut spectral.fft)?;

    let g = gamma.sample(grid);
    let [gx, gy] = spectral.gradient(&g);

    let mut lhs: Vec<Complex64> = g.iter().zip(&psi).map(|(a, b)| a * b).collect();
    spectral.fft.forward(&mut lhs);
    for (z, xi) in lhs.iter_mut().zip(&spectral.xi) {
        *z *= (eps * xi.norm()).powf(sigma);
    }
    spectral.fft.inverse(&mut lhs);

    let q: Vec<Complex64> = (0..grid.len())
        .map(|i| lhs[i] - g[i] * frac_psi[i] + eps * (gx[i] * p_psi_x[i] + gy[i] * p_psi_y[i]))
        .collect();
    let q = Field2D::new(grid, q)?;
    let remainder_norm = weighted_hs_norm(&q, s, &mut spectral)?;
    let product = Field2D::new(grid, g.iter().zip(&psi).map(|(a, b)| a * b).collect())?;
    let product_norm = weighted_hs_norm(&product, s, &mut spectral)?;

    let leibniz_deviation = if sigma == 2.0 {
        let mut lap = g.clone();
        spectral.fft.forward(&mut lap);
        for (z, xi) in lap.iter_mut().zip(&spectral.xi) {
            *z *= eps * eps * xi.dot(*xi);
        }
        spectral.fft.inverse(&mut lap);
        let diff: Vec<Complex64> = (0..grid.len()).map(|i| q.values[i] - lap[i] * psi[i]).collect();
        Some(weighted_hs_norm(&Field2D::new(grid, diff)?, s, &mut spectral)?)
    } else {
        None
    };
    Ok(ProductRuleReport {
        sigma,
        epsilon: eps,
        norm_order: s,
        remainder_norm,
        product_norm,
        leibniz_deviation,
        dropped_fraction: d0.max(d1).max(d2).max(d3),
    })
}
