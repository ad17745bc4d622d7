//! Dirac-point analysis at `K`: degeneracy detection, rotation-symmetry
//! classification, gauge fixing, and the effective coefficients `v_F`, `ϑ`,
//! `b1`, `b2`.
//!
//! Eigenfunctions are stored by their coefficient vectors `c` with
//! `Σ|c_m|² = 1`; the corresponding function is
//! `Φ(y) = |Ω|^{-1/2} Σ c_m e^{i(K + m·k⃗)·y}`, so `⟨Φ, Φ⟩_Ω = 1` and every
//! `L²(Ω)` pairing that is linear in each argument equals the Euclidean
//! coefficient pairing.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::bloch::{
    apply_p_sigma, band_sweep, coeff_inner, coeff_norm, solve_bands, BlochMatrix, BlochSolution, ReducedResolvent,
};
use crate::error::{Error, Result};
use crate::grid::Fft2;
use crate::lattice::{rotation_index_map, LatticeBasis, PlaneWaveBasis, RotationMap, Vec2};
use crate::potential::FourierPotential;

/// Relative degeneracy tolerance: `|E_{b+1} − E_b| < tol · max(1, |E|)`.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// A degenerate pair must be separated from its neighbours by this many
/// tolerances.
pub const ISOLATION_FACTOR: f64 = 10.0;
/// Symmetry-forbidden quantities must vanish below this.
pub const STRUCTURE_TOL: f64 = 1e-8;

/// Bound on `‖HΦ₂ − E_D Φ₂‖ / ‖H‖` for the conjugate partner.
pub const PARTNER_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `τ = e^{2πi/3}`.
pub fn tau() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI / 3.0)
}

/// Lowest adjacent pair `(b, b + 1)` (0-based) with a gap below
/// `tol · max(1, |E|)`. Returns the lower index and the mean energy.
pub fn find_degenerate_pair(eigenvalues: &[f64], tol: f64) -> Result<(usize, f64)> {
    let mut closest_gap = f64::INFINITY;
    for b in 0..eigenvalues.len().saturating_sub(1) {
        let (lo, hi) = (eigenvalues[b], eigenvalues[b + 1]);
        let abs_tol = tol * lo.abs().max(1.0);
        let gap = hi - lo;
        closest_gap = closest_gap.min(gap);
        if gap >= abs_tol {
            continue;
        }
        let below = (b > 0).then(|| lo - eigenvalues[b - 1]);
        let above = eigenvalues.get(b + 2).map(|e| e - hi);
        let Some(above) = above else {
            return Err(Error::InvalidInput(format!(
                "degenerate pair at bands {}–{} is the last pair computed; request more bands to check isolation",
                b + 1,
                b + 2
            )));
        };
        let neighbour_gap = below.map_or(above, |g| g.min(above));
        if neighbour_gap <= ISOLATION_FACTOR * abs_tol {
            return Err(Error::NotIsolated {
                lower: b + 1,
                neighbour_gap,
            });
        }
        return Ok((b, 0.5 * (lo + hi)));
    }
    Err(Error::NoDegeneracy { tol, closest_gap })
}

/// Eigen-decomposition of a general complex 2×2 matrix.
fn eig2(m: [[Complex64; 2]; 2]) -> [(Complex64, [Complex64; 2]); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    let lambdas = [(tr + disc) * 0.5, (tr - disc) * 0.5];
    lambdas.map(|l| {
        // Use whichever row of (M − λ) is better conditioned.
        let r0 = [m[0][0] - l, m[0][1]];
        let r1 = [m[1][0], m[1][1] - l];
        let v = if r0[0].norm() + r0[1].norm() >= r1[0].norm() + r1[1].norm() {
            [r0[1], -r0[0]]
        } else {
            [r1[1], -r1[0]]
        };
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        let v = if n > 0.0 {
            [v[0] / n, v[1] / n]
        } else {
            [Complex64::new(1.0, 0.0), ZERO]
        };
        (l, v)
    })
}

/// The degenerate eigenspace split by rotation eigenvalue.
#[derive(Debug, Clone)]
pub struct Classified {
    /// Unit eigenvector with `𝓡Φ = τΦ`.
    pub phi_tau: Vec<Complex64>,
    /// Unit eigenvector with `𝓡Φ = τ̄Φ`.
    pub phi_tau_bar: Vec<Complex64>,
    /// Eigenvalues of `𝓡` restricted to the subspace, `[τ-like, τ̄-like]`.
    pub eigenvalues: [Complex64; 2],
}

/// Diagonalises the rotation restricted to a two-dimensional eigenspace.
pub fn symmetry_classify(subspace: &[Vec<Complex64>], map: &RotationMap) -> Result<Classified> {
    if subspace.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "rotation classification needs a two-dimensional subspace, got dimension {}",
            subspace.len()
        )));
    }
    let rotated: Vec<Vec<Complex64>> = subspace.iter().map(|v| map.apply(v)).collect();
    let mut m = [[ZERO; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            m[a][b] = coeff_inner(&subspace[a], &rotated[b]);
        }
    }
    let pairs = eig2(m);
    let t = tau();
    let targets = [t, t.conj()];
    let (first, second) = if (pairs[0].0 - t).norm() + (pairs[1].0 - t.conj()).norm()
        <= (pairs[1].0 - t).norm() + (pairs[0].0 - t.conj()).norm()
    {
        (pairs[0], pairs[1])
    } else {
        (pairs[1], pairs[0])
    };
    let found = [first.0, second.0];
    if found.iter().zip(&targets).any(|(f, t)| (f - t).norm() > 1e-6) {
        return Err(Error::RotationEigenvalueMismatch {
            found: found.map(|z| (z.re, z.im)),
        });
    }
    let combine = |x: [Complex64; 2]| -> Vec<Complex64> {
        let v: Vec<Complex64> = subspace[0]
            .iter()
            .zip(&subspace[1])
            .map(|(a, b)| x[0] * a + x[1] * b)
            .collect();
        let n = coeff_norm(&v);
        v.into_iter().map(|z| z / n).collect()
    };
    Ok(Classified {
        phi_tau: combine(first.1),
        phi_tau_bar: combine(second.1),
        eigenvalues: found,
    })
}

/// Coefficients of `Φ₂(y) = conj(Φ₁(−y))`: entrywise conjugation.
pub fn conjugate_partner(phi1: &[Complex64]) -> Vec<Complex64> {
    phi1.iter().map(|z| z.conj()).collect()
}

/// `⟨Φ_a, i p^σ Φ_b⟩_Ω` as a Cartesian 2-vector.
pub fn velocity_pairing(phi_a: &[Complex64], phi_b: &[Complex64], pw: &PlaneWaveBasis, sigma: f64) -> [Complex64; 2] {
    let i = Complex64::new(0.0, 1.0);
    apply_p_sigma(phi_b, pw, sigma).map(|p| i * coeff_inner(phi_a, &p))
}

/// `conj(P)·(1, i)` for a pairing vector `P`.
pub fn contract_pairing(p: [Complex64; 2]) -> Complex64 {
    p[0].conj() + Complex64::new(0.0, 1.0) * p[1].conj()
}

#[derive(Debug, Clone)]
pub struct GaugeFixed {
    pub phi1: Vec<Complex64>,
    pub phi2: Vec<Complex64>,
    pub v_f: f64,
    /// `c = conj⟨Φ₁, i p^σ Φ₂⟩·(1, i)` before fixing.
    pub raw_pairing: Complex64,
    /// Phase `θ` applied as `Φ₁ → e^{iθ}Φ₁`.
    pub phase: f64,
    /// `⟨Φ₁, i p^σ Φ₂⟩` after fixing; equals `−v_F (1, i)`.
    pub pairing: [Complex64; 2],
}

/// Rotates the phase of `Φ₁` (and oppositely of `Φ₂ = conj partner`) so that
/// `⟨Φ₁, i p^σ Φ₂⟩ = −v_F (1, i)` with `v_F = |c|/2 > 0`.
pub fn gauge_fix(phi1: &[Complex64], pw: &PlaneWaveBasis, sigma: f64) -> Result<GaugeFixed> {
    let phi2 = conjugate_partner(phi1);
    let raw = velocity_pairing(phi1, &phi2, pw, sigma);
    let c = contract_pairing(raw);
    if c.norm() < 1e-10 {
        return Err(Error::DegenerateVelocity { magnitude: c.norm() });
    }
    // Under Φ₁ → e^{iθ}Φ₁ the contraction becomes e^{2iθ}c; make it −|c|.
    let phase = 0.5 * (PI - c.arg());
    let rot = Complex64::from_polar(1.0, phase);
    let phi1: Vec<Complex64> = phi1.iter().map(|z| z * rot).collect();
    let phi2 = conjugate_partner(&phi1);
    let pairing = velocity_pairing(&phi1, &phi2, pw, sigma);
    Ok(GaugeFixed {
        phi1,
        phi2,
        v_f: 0.5 * c.norm(),
        raw_pairing: c,
        phase,
        pairing,
    })
}

/// `(W φ)^(m) = Σ_d Ŵ(d) φ̂(m − d)`, truncated to the basis.
pub fn apply_potential(pot: &FourierPotential, coeffs: &[Complex64], pw: &PlaneWaveBasis) -> Vec<Complex64> {
    let mut out = vec![ZERO; coeffs.len()];
    for (d, c) in pot.coefficients() {
        for (i, m) in pw.indices().iter().enumerate() {
            if let Some(j) = pw.position([m[0] - d[0], m[1] - d[1]]) {
                out[i] += c * coeffs[j];
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MassReport {
    pub theta: f64,
    /// `⟨Φ_i, W Φ_j⟩_Ω`.
    pub matrix: [[Complex64; 2]; 2],
    /// Largest deviation from `diag(ϑ, −ϑ)` including `Im ϑ`.
    pub residual: f64,
}

/// `ϑ = ⟨Φ₁, WΦ₁⟩_Ω` and the full 2×2 structure check.
pub fn mass_coefficient(
    phi1: &[Complex64],
    phi2: &[Complex64],
    pw: &PlaneWaveBasis,
    w: &FourierPotential,
) -> Result<MassReport> {
    let report = w.check_honeycomb();
    if !(report.real.holds && report.odd.holds && report.rotation_invariant.holds) {
        return Err(Error::InvalidInput(
            "the perturbing potential must be real, odd and rotation invariant".into(),
        ));
    }
    let phis = [phi1, phi2];
    let wphi = phis.map(|p| apply_potential(w, p, pw));
    let mut matrix = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            matrix[i][j] = coeff_inner(phis[i], &wphi[j]);
        }
    }
    let theta = matrix[0][0].re;
    let residual = [
        matrix[0][0].im.abs(),
        (matrix[1][1] + theta).norm(),
        matrix[0][1].norm(),
        matrix[1][0].norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if residual > STRUCTURE_TOL {
        return Err(Error::StructureViolation {
            what: "mass matrix",
            residual,
            tol: STRUCTURE_TOL,
        });
    }
    Ok(MassReport {
        theta,
        matrix,
        residual,
    })
}

/// Samples of the periodic part `Σ c_m e^{i m·k⃗·y}` on a `p × p` grid of one
/// cell (`y = (a/p) v1 + (b/p) v2`, row-major). Exact as long as
/// `p > 2N`.
pub fn periodic_samples(coeffs: &[Complex64], pw: &PlaneWaveBasis, p: usize, fft: &mut Fft2) -> Vec<Complex64> {
    assert_eq!(fft.side(), p, "FFT size does not match the sampling grid");
    let mut grid = vec![ZERO; p * p];
    let pi = p as i64;
    for (c, m) in coeffs.iter().zip(pw.indices()) {
        let a = m[0].rem_euclid(pi) as usize;
        let b = m[1].rem_euclid(pi) as usize;
        grid[a * p + b] += c;
    }
    fft.inverse(&mut grid);
    let scale = (p * p) as f64;
    grid.iter_mut().for_each(|z| *z *= scale);
    grid
}

#[derive(Debug, Clone, Serialize)]
pub struct CubicReport {
    pub b1: f64,
    pub b2: f64,
    /// `⟨Φ_i, conj(Φ_j) Φ_k Φ_l⟩_Ω`, indexed `[i][j][k][l]` (0-based).
    pub tensor: [[[[Complex64; 2]; 2]; 2]; 2],
    /// Largest deviation of the tensor from its symmetric structure,
    /// including the imaginary parts of `b1`, `b2`.
    pub residual: f64,
}

/// Structured value `½(b1 δ_ij + b2(1 − δ_ij))(δ_ik δ_jl + δ_il δ_jk)`.
pub fn cubic_model(b1: f64, b2: f64, i: usize, j: usize, k: usize, l: usize) -> f64 {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    0.5 * (b1 * d(i, j) + b2 * (1.0 - d(i, j))) * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
}

/// All sixteen quartic pairings, evaluated exactly by sampling on a grid
/// fine enough that the quartic products do not alias.
pub fn cubic_coefficients(
    phi1: &[Complex64],
    phi2: &[Complex64],
    pw: &PlaneWaveBasis,
    cell_area: f64,
) -> Result<CubicReport> {
    let p = 4 * pw.truncation() + 1;
    let mut fft = Fft2::new(p);
    let f = [
        periodic_samples(phi1, pw, p, &mut fft),
        periodic_samples(phi2, pw, p, &mut fft),
    ];
    // ∫_Ω conj(Φi Φj) Φk Φl = |Ω|·mean(...)·|Ω|^{-2}.
    let scale = 1.0 / (cell_area * (p * p) as f64);
    let mut tensor = [[[[ZERO; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let s: Complex64 = (0..p * p)
                        .map(|n| (f[i][n] * f[j][n]).conj() * f[k][n] * f[l][n])
                        .sum();
                    tensor[i][j][k][l] = s * scale;
                }
            }
        }
    }
    let b1c = 0.5 * (tensor[0][0][0][0] + tensor[1][1][1][1]);
    let b2c = 0.5 * (tensor[0][1][0][1] + tensor[0][1][1][0] + tensor[1][0][1][0] + tensor[1][0][0][1]);
    let (b1, b2) = (b1c.re, b2c.re);
    let mut residual = b1c.im.abs().max(b2c.im.abs());
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let model = cubic_model(b1, b2, i, j, k, l);
                    residual = residual.max((tensor[i][j][k][l] - model).norm());
                }
            }
        }
    }
    if residual > STRUCTURE_TOL {
        return Err(Error::StructureViolation {
            what: "cubic coefficients",
            residual,
            tol: STRUCTURE_TOL,
        });
    }
    Ok(CubicReport {
        b1,
        b2,
        tensor,
        residual,
    })
}

/// Everything the effective dynamics needs from the Dirac point.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DiracPointData {
    pub sigma: f64,
    pub truncation: usize,
    pub e_d: f64,
    /// 1-based band numbers `(b*, b* + 1)`.
    pub band_pair: (usize, usize),
    #[serde(skip)]
    pub phi1: Vec<Complex64>,
    #[serde(skip)]
    pub phi2: Vec<Complex64>,
    pub v_f: f64,
    /// Pairing `conj⟨Φ₁, i p^σ Φ₂⟩·(1, i)` of the eigenvector returned by the
    /// eigensolver, before gauge fixing.
    pub raw_pairing: Complex64,
    pub gauge_phase: f64,
    pub theta: f64,
    pub mass_matrix: [[Complex64; 2]; 2],
    pub b1: f64,
    pub b2: f64,
    pub cubic_tensor: [[[[Complex64; 2]; 2]; 2]; 2],
    pub rotation_eigenvalues: [Complex64; 2],
    pub structure_residuals: BTreeMap<String, f64>,
}

impl DiracPointData {
    /// `⟨Φ_i, conj(Φ_j)Φ_kΦ_l⟩_Ω` (1-based indices as in the literature are
    /// shifted to 0-based here).
    pub fn cubic(&self, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        self.cubic_tensor[i][j][k][l]
    }

    pub fn phi(&self, j: usize) -> &[Complex64] {
        match j {
            0 => &self.phi1,
            1 => &self.phi2,
            _ => panic!("Dirac eigenfunction index must be 0 or 1"),
        }
    }
}

/// Inputs of a Dirac-point analysis.
#[derive(Debug, Clone)]
pub struct DiracSetup {
    pub lattice: LatticeBasis,
    pub potential: FourierPotential,
    pub perturbation: FourierPotential,
    pub sigma: f64,
    pub truncation: usize,
}

/// Result of [`analyze`]: the Dirac data together with the full spectral
/// decomposition at `K` (needed for resolvent applications).
#[derive(Debug, Clone)]
pub struct DiracAnalysis {
    pub data: DiracPointData,
    pub basis: PlaneWaveBasis,
    pub resolvent: ReducedResolvent,
}

/// Runs the full analysis at `K`.
pub fn analyze(setup: &DiracSetup) -> Result<DiracAnalysis> {
    let lattice = &setup.lattice;
    let pw = PlaneWaveBasis::new(lattice, setup.truncation, lattice.k_point);
    let h = BlochMatrix::assemble(&pw, &setup.potential, setup.sigma)?;
    let full = solve_bands(&h, h.size())?;
    let (b, e_d) = find_degenerate_pair(&full.eigenvalues, DEGENERACY_TOL)?;
    let map = rotation_index_map(lattice, &pw)?;
    let classified = symmetry_classify(&full.eigenvectors[b..b + 2], &map)?;
    let fixed = gauge_fix(&classified.phi_tau, &pw, setup.sigma)?;

    let mut residuals = BTreeMap::new();
    let eig_residual = |v: &[Complex64]| -> f64 {
        let hv = h.apply(v);
        hv.iter()
            .zip(v)
            .map(|(a, c)| (a - c * e_d).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    // Backward error: computed eigenvectors are only accurate to ε‖H‖.
    let partner_residual = eig_residual(&fixed.phi2) / h.norm_bound();
    if partner_residual > PARTNER_TOL {
        return Err(Error::StructureViolation {
            what: "conjugate partner eigen-residual",
            residual: partner_residual,
            tol: PARTNER_TOL,
        });
    }
    residuals.insert("conjugatePartnerEigenResidual".into(), partner_residual);
    residuals.insert(
        "orthogonality".into(),
        coeff_inner(&fixed.phi1, &fixed.phi2).norm(),
    );
    residuals.insert(
        "rotationEigenvalues".into(),
        (classified.eigenvalues[0] - tau()).norm().max((classified.eigenvalues[1] - tau().conj()).norm()),
    );
    let rphi2 = map.apply(&fixed.phi2);
    residuals.insert(
        "partnerRotationEigenvalue".into(),
        (coeff_inner(&fixed.phi2, &rphi2) - tau().conj()).norm(),
    );
    let target = [Complex64::new(-fixed.v_f, 0.0), Complex64::new(0.0, -fixed.v_f)];
    residuals.insert(
        "velocityPairing".into(),
        (fixed.pairing[0] - target[0]).norm().max((fixed.pairing[1] - target[1]).norm()),
    );
    let reverse = velocity_pairing(&fixed.phi2, &fixed.phi1, &pw, setup.sigma);
    residuals.insert(
        "reverseVelocityPairing".into(),
        (reverse[0] + fixed.v_f)
            .norm()
            .max((reverse[1] - Complex64::new(0.0, fixed.v_f)).norm()),
    );
    let same_pairing = [
        velocity_pairing(&fixed.phi1, &fixed.phi1, &pw, setup.sigma),
        velocity_pairing(&fixed.phi2, &fixed.phi2, &pw, setup.sigma),
    ];
    residuals.insert(
        "diagonalVelocityPairing".into(),
        same_pairing
            .iter()
            .flat_map(|p| p.iter().map(|z| z.norm()))
            .fold(0.0, f64::max),
    );

    let mass = mass_coefficient(&fixed.phi1, &fixed.phi2, &pw, &setup.perturbation)?;
    residuals.insert("massStructure".into(), mass.residual);
    let cubic = cubic_coefficients(&fixed.phi1, &fixed.phi2, &pw, lattice.cell_area)?;
    residuals.insert("cubicStructure".into(), cubic.residual);

    let data = DiracPointData {
        sigma: setup.sigma,
        truncation: setup.truncation,
        e_d,
        band_pair: (b + 1, b + 2),
        phi1: fixed.phi1,
        phi2: fixed.phi2,
        v_f: fixed.v_f,
        raw_pairing: fixed.raw_pairing,
        gauge_phase: fixed.phase,
        theta: mass.theta,
        mass_matrix: mass.matrix,
        b1: cubic.b1,
        b2: cubic.b2,
        cubic_tensor: cubic.tensor,
        rotation_eigenvalues: classified.eigenvalues,
        structure_residuals: residuals,
    };
    let resolvent = ReducedResolvent::new(full, e_d)?;
    Ok(DiracAnalysis {
        data,
        basis: pw,
        resolvent,
    })
}

/// Band energies sampled on circles around `K`.
#[derive(Debug, Clone, Serialize)]
pub struct ConeSamples {
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
    /// `[radius][angle] → (E_{b*}, E_{b*+1})`.
    pub energies: Vec<Vec<(f64, f64)>>,
}

/// Log-spaced radii in `[r_min, r_max]`.
pub fn log_radii(r_min: f64, r_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![r_min];
    }
    let (a, b) = (r_min.ln(), r_max.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Samples the pair of bands `(b*, b*+1)` (0-based `lower`) at
/// `K + r(cos φ, sin φ)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_cone(
    lattice: &LatticeBasis,
    pot: &FourierPotential,
    sigma: f64,
    truncation: usize,
    lower: usize,
    radii: &[f64],
    directions: usize,
) -> Result<ConeSamples> {
    let angles: Vec<f64> = (0..directions)
        .map(|j| 2.0 * PI * j as f64 / directions as f64)
        .collect();
    let ks: Vec<Vec2> = radii
        .iter()
        .flat_map(|&r| angles.iter().map(move |&a| (r, a)))
        .map(|(r, a)| lattice.k_point + r * Vec2::unit(a))
        .collect();
    let table = band_sweep(lattice, pot, sigma, truncation, &ks, lower + 2)?;
    let energies = table
        .chunks(directions)
        .map(|chunk| chunk.iter().map(|row| (row[lower], row[lower + 1])).collect())
        .collect();
    Ok(ConeSamples {
        radii: radii.to_vec(),
        angles,
        energies,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConeFit {
    pub slope_plus: f64,
    pub slope_minus: f64,
    /// Fitted `|e(κ)|/|κ|` bound: `max |e(κ)| / |κ|` over the samples.
    pub quadratic_residual: f64,
    /// Per-direction slopes `(E₊ − E₋)/(2|κ|)` at the radius closest to
    /// `isotropy_radius`: largest relative deviation from their mean.
    pub isotropy_spread: f64,
    pub isotropy_radius: f64,
}

impl ConeFit {
    pub fn mean_slope(&self) -> f64 {
        0.5 * (self.slope_plus + self.slope_minus)
    }
}

/// Least-squares line `y ≈ a + b x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::FitFailure(format!(
            "linear fit needs at least two matched points (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitFailure("linear fit abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

/// Fits `E± − E_D = ±v|κ|(1 + c|κ|)` per branch.
pub fn cone_fit(samples: &ConeSamples, e_d: f64, isotropy_radius: f64) -> Result<ConeFit> {
    let mut r_all = Vec::new();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (r, row) in samples.radii.iter().zip(&samples.energies) {
        for &(lo, hi) in row {
            r_all.push(*r);
            plus.push((hi - e_d) / r);
            minus.push((e_d - lo) / r);
        }
    }
    let (a_plus, _) = linear_fit(&r_all, &plus)?;
    let (a_minus, _) = linear_fit(&r_all, &minus)?;
    if !(a_plus > 0.0 && a_minus > 0.0 && a_plus.is_finite() && a_minus.is_finite()) {
        return Err(Error::FitFailure(format!(
            "band data are not conical (fitted slopes {a_plus:.3e}, {a_minus:.3e})"
        )));
    }
    let mut quadratic_residual: f64 = 0.0;
    for ((r, p), m) in r_all.iter().zip(&plus).zip(&minus) {
        quadratic_residual = quadratic_residual.max((p / a_plus - 1.0).abs() / r);
        quadratic_residual = quadratic_residual.max((m / a_minus - 1.0).abs() / r);
    }
    let iso_idx = samples
        .radii
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - isotropy_radius).abs().total_cmp(&(b.1 - isotropy_radius).abs()))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::FitFailure("no cone samples".into()))?;
    let r = samples.radii[iso_idx];
    let slopes: Vec<f64> = samples.energies[iso_idx]
        .iter()
        .map(|(lo, hi)| (hi - lo) / (2.0 * r))
        .collect();
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let spread = slopes.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max) / mean;
    Ok(ConeFit {
        slope_plus: a_plus,
        slope_minus: a_minus,
        quadratic_residual,
        isotropy_spread: spread,
        isotropy_radius: r,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GapTable {
    pub epsilons: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Least-squares `d(gap)/dε`.
    pub slope: f64,
}

/// Gap `E_{b*+1}(K) − E_{b*}(K)` of `V + εW` for each `ε` (`lower` is the
/// 0-based index of `b*`).
pub fn gap_opening(
    lattice: &LatticeBasis,
    pot: &FourierPotential,
    w: &FourierPotential,
    sigma: f64,
    truncation: usize,
    lower: usize,
    epsilons: &[f64],
) -> Result<GapTable> {
    if epsilons.is_empty() || epsilons.windows(2).any(|p| p[1] <= p[0]) || epsilons[0] < 0.0 {
        return Err(Error::InvalidInput(
            "gap epsilons must be non-negative and strictly increasing".into(),
        ));
    }
    let pw = PlaneWaveBasis::new(lattice, truncation, lattice.k_point);
    let mut gaps = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let h = BlochMatrix::assemble(&pw, &pot.add_scaled(w, eps), sigma)?;
        let vals = h.eigenvalues(lower + 2)?;
        gaps.push(vals[lower + 1] - vals[lower]);
    }
    let slope = if epsilons.len() >= 2 {
        linear_fit(epsilons, &gaps)?.1
    } else {
        f64::NAN
    };
    Ok(GapTable {
        epsilons: epsilons.to_vec(),
        gaps,
        slope,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpansionCheck {
    pub radii: Vec<f64>,
    pub deviations: Vec<f64>,
    /// Least-squares `C` in `deviation ≈ C|κ|`.
    pub fitted_constant: f64,
}

/// Distance between unit 2-vectors modulo a global phase.
fn phase_distance(a: [Complex64; 2], t: [Complex64; 2]) -> f64 {
    let na = a[0].norm_sqr() + a[1].norm_sqr();
    let nt = t[0].norm_sqr() + t[1].norm_sqr();
    let overlap = (a[0].conj() * t[0] + a[1].conj() * t[1]).norm();
    (na + nt - 2.0 * overlap).max(0.0).sqrt()
}

/// Projects the band-`b*`, `b*+1` eigenvectors at `K + κ` onto
/// `e^{iκ·y}Φ_{1,2}` and compares with `((κ₁ + iκ₂)/|κ|, ±1)/√2`.
pub fn verify_eigenvector_expansion(
    lattice: &LatticeBasis,
    pot: &FourierPotential,
    data: &DiracPointData,
    direction: f64,
    radii: &[f64],
) -> Result<ExpansionCheck> {
    let lower = data.band_pair.0 - 1;
    let mut deviations = Vec::with_capacity(radii.len());
    for &r in radii {
        let kappa = r * Vec2::unit(direction);
        let pw = PlaneWaveBasis::new(lattice, data.truncation, lattice.k_point + kappa);
        let h = BlochMatrix::assemble(&pw, pot, data.sigma)?;
        let sol = solve_bands(&h, lower + 2)?;
        let z = Complex64::new(kappa.x, kappa.y) / r;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut worst: f64 = 0.0;
        for (band, sign) in [(lower, -1.0), (lower + 1, 1.0)] {
            let v = &sol.eigenvectors[band];
            let a = [coeff_inner(&data.phi1, v), coeff_inner(&data.phi2, v)];
            let t = [z * s, Complex64::new(sign * s, 0.0)];
            worst = worst.max(phase_distance(a, t));
        }
        deviations.push(worst);
    }
    let num: f64 = radii.iter().zip(&deviations).map(|(r, d)| r * d).sum();
    let den: f64 = radii.iter().map(|r| r * r).sum();
    Ok(ExpansionCheck {
        radii: radii.to_vec(),
        deviations,
        fitted_constant: num / den,
    })
}

/// Comparison of the Dirac data of `ε_pot V` with the small-potential
/// asymptotics.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ShallowReport {
    pub sigma: f64,
    pub eps_pot: f64,
    pub e_d: f64,
    pub e_d_predicted: f64,
    pub e_singlet: f64,
    pub e_singlet_predicted: f64,
    pub splitting: f64,
    pub splitting_predicted: f64,
    pub v_f: f64,
    pub v_f_predicted: f64,
    /// `|⟨Φ^(0)_τ, Φ₁⟩|` against the three-plane-wave limit.
    pub overlap_free_limit: f64,
    /// Rotation eigenvalue of the singlet band.
    pub singlet_rotation_eigenvalue: Complex64,
    pub theta: f64,
    pub theta_free_limit: f64,
}

impl ShallowReport {
    pub fn e_d_relative_deviation(&self) -> f64 {
        ((self.e_d - self.e_d_predicted) / self.e_d_predicted).abs()
    }

    pub fn v_f_relative_deviation(&self) -> f64 {
        ((self.v_f - self.v_f_predicted) / self.v_f_predicted).abs()
    }

    pub fn splitting_relative_deviation(&self) -> f64 {
        ((self.splitting - self.splitting_predicted) / self.splitting_predicted).abs()
    }
}

/// Coefficients of the free `τ`-eigenfunction at `K`: equal weights on the
/// three momenta `K`, `K + k2`, `K − k1` of modulus `|K|`.
pub fn free_tau_mode(pw: &PlaneWaveBasis) -> Vec<Complex64> {
    let t = tau();
    let w = 1.0 / 3f64.sqrt();
    let mut c = vec![ZERO; pw.len()];
    for (m, z) in [([0, 0], Complex64::new(1.0, 0.0)), ([0, 1], t.conj()), ([-1, 0], t)] {
        if let Some(i) = pw.position(m) {
            c[i] = z * w;
        }
    }
    c
}

/// Dirac data of `ε_pot V` (with perturbation `W` for `ϑ`) compared against
/// the first-order formulas.
pub fn shallow_check(
    lattice: &LatticeBasis,
    pot: &FourierPotential,
    w: &FourierPotential,
    eps_pot: f64,
    sigma: f64,
    truncation: usize,
) -> Result<ShallowReport> {
    if !(eps_pot > 0.0 && eps_pot <= 0.05) {
        return Err(Error::InvalidInput(format!(
            "shallow-potential checks need 0 < eps_pot <= 0.05, got {eps_pot}"
        )));
    }
    let setup = DiracSetup {
        lattice: lattice.clone(),
        potential: pot.scaled(eps_pot),
        perturbation: w.clone(),
        sigma,
        truncation,
    };
    let analysis = analyze(&setup)?;
    let data = &analysis.data;
    let pw = &analysis.basis;
    let e0 = lattice.k_point.norm().powf(sigma);
    let v00 = pot.coefficient([0, 0]).re;
    let v01 = pot.coefficient([0, 1]).re;
    // The singlet sits directly below or above the pair (0-based indices).
    let (singlet_band, _) = [data.band_pair.0.checked_sub(2), Some(data.band_pair.1)]
        .into_iter()
        .flatten()
        .map(|b| {
            let (e, _) = analysis.resolvent.eigenpair(b);
            (b, (e - (e0 + eps_pot * (v00 + 2.0 * v01))).abs())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidInput("no singlet band next to the Dirac pair".into()))?;
    let (e_singlet, singlet_vec) = analysis.resolvent.eigenpair(singlet_band);
    let map = rotation_index_map(lattice, pw)?;
    let singlet_rot = coeff_inner(singlet_vec, &map.apply(singlet_vec));
    let free = free_tau_mode(pw);
    let w_free = apply_potential(w, &free, pw);
    let e_d_predicted = e0 + eps_pot * (v00 - v01);
    let e_singlet_predicted = e0 + eps_pot * (v00 + 2.0 * v01);
    Ok(ShallowReport {
        sigma,
        eps_pot,
        e_d: data.e_d,
        e_d_predicted,
        e_singlet,
        e_singlet_predicted,
        splitting: e_singlet - data.e_d,
        splitting_predicted: e_singlet_predicted - e_d_predicted,
        v_f: data.v_f,
        v_f_predicted: 0.5 * sigma * lattice.k_point.norm().powf(sigma - 1.0),
        overlap_free_limit: coeff_inner(&free, &data.phi1).norm(),
        singlet_rotation_eigenvalue: singlet_rot,
        theta: data.theta,
        theta_free_limit: coeff_inner(&free, &w_free).re,
    })
}

/// Convenience for a single band solve at `K`.
pub fn solve_at_k(lattice: &LatticeBasis, pot: &FourierPotential, sigma: f64, truncation: usize, bands: usize) -> Result<BlochSolution> {
    let pw = PlaneWaveBasis::new(lattice, truncation, lattice.k_point);
    let h = BlochMatrix::assemble(&pw, pot, sigma)?;
    solve_bands(&h, bands)
}
