//! Plane-wave discretisation of `H^σ(k) = (−Δ)^{σ/2} + V` on `L²_k`, dense
//! Hermitian eigensolves, band sweeps, the `p^σ` multiplier and the reduced
//! resolvent at a degenerate energy.

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{LatticeBasis, PlaneWaveBasis, RotationMap, Vec2};
use crate::potential::FourierPotential;

/// Eigenvalues closer than this are treated as one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

pub fn validate_sigma(sigma: f64) -> Result<()> {
    if sigma > 1.0 && sigma <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("sigma must lie in (1, 2], got {sigma}")))
    }
}

/// Fractional symbol `|q|^σ`.
pub fn symbol(q: Vec2, sigma: f64) -> f64 {
    q.norm().powf(sigma)
}

/// `Σ conj(a_i) b_i`.
pub fn coeff_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn coeff_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense `H^σ(k)` in a plane-wave basis centred at `k`.
#[derive(Debug, Clone)]
pub struct BlochMatrix {
    sigma: f64,
    basis: PlaneWaveBasis,
    matrix: Mat<Complex64>,
}

impl BlochMatrix {
    /// `H[m, n] = |k + m·k⃗|^σ δ_mn + V̂(m − n)` with `k = basis.center()`.
    pub fn assemble(basis: &PlaneWaveBasis, pot: &FourierPotential, sigma: f64) -> Result<Self> {
        validate_sigma(sigma)?;
        pot.require_real("the periodic potential")?;
        let n = basis.len();
        let mut matrix = Mat::<Complex64>::zeros(n, n);
        for (i, q) in basis.momenta().iter().enumerate() {
            matrix[(i, i)] = Complex64::new(symbol(*q, sigma), 0.0);
        }
        for (d, c) in pot.coefficients() {
            for (i, m) in basis.indices().iter().enumerate() {
                if let Some(j) = basis.position([m[0] - d[0], m[1] - d[1]]) {
                    matrix[(i, j)] += c;
                }
            }
        }
        Ok(BlochMatrix {
            sigma,
            basis: basis.clone(),
            matrix,
        })
    }

    pub fn k(&self) -> Vec2 {
        self.basis.center()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)]
    }

    /// Largest absolute row sum; bounds the spectral norm and sets the scale
    /// of attainable eigen-residuals.
    pub fn norm_bound(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |H − H†| / max |H|`.
    pub fn hermitian_residual(&self) -> f64 {
        let n = self.size();
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                diff = diff.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
                scale = scale.max(self.matrix[(i, j)].norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.size();
        assert_eq!(v.len(), n, "vector length does not match the basis");
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)] * v[j]).sum())
            .collect()
    }

    fn solver_error(&self, message: impl Into<String>) -> Error {
        Error::Solver {
            size: self.size(),
            message: message.into(),
        }
    }

    /// Lowest `count` eigenvalues, ascending.
    pub fn eigenvalues(&self, count: usize) -> Result<Vec<f64>> {
        self.check_count(count)?;
        let mut vals = self
            .matrix
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| self.solver_error(format!("eigenvalue iteration failed: {e:?}")))?;
        vals.sort_by(f64::total_cmp);
        vals.truncate(count);
        check_finite(&vals, self)?;
        Ok(vals)
    }

    fn check_count(&self, count: usize) -> Result<()> {
        if count == 0 || count > self.size() {
            return Err(Error::InvalidInput(format!(
                "requested {count} bands from a matrix of size {}",
                self.size()
            )));
        }
        Ok(())
    }
}

fn check_finite(vals: &[f64], h: &BlochMatrix) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(h.solver_error(format!(
            "non-finite eigenvalues (matrix hermitian residual {:.3e})",
            h.hermitian_residual()
        )))
    }
}

/// Sorted eigenpairs at one quasimomentum; eigenvectors are unit vectors in
/// the Euclidean coefficient norm.
#[derive(Debug, Clone)]
pub struct BlochSolution {
    pub k: Vec2,
    pub sigma: f64,
    pub truncation: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<Complex64>>,
}

impl BlochSolution {
    pub fn bands(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `max |⟨v_a, v_b⟩ − δ_ab|`.
    pub fn gram_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, va) in self.eigenvectors.iter().enumerate() {
            for (b, vb) in self.eigenvectors.iter().enumerate().skip(a) {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((coeff_inner(va, vb) - target).norm());
            }
        }
        worst
    }
}

/// Lowest `count` eigenpairs of `h`.
pub fn solve_bands(h: &BlochMatrix, count: usize) -> Result<BlochSolution> {
    h.check_count(count)?;
    let evd = h
        .matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| h.solver_error(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..h.size()).collect();
    order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
    order.truncate(count);
    let eigenvalues: Vec<f64> = order.iter().map(|&b| s[b].re).collect();
    check_finite(&eigenvalues, h)?;
    let eigenvectors = order
        .iter()
        .map(|&b| (0..h.size()).map(|i| u[(i, b)]).collect())
        .collect();
    Ok(BlochSolution {
        k: h.k(),
        sigma: h.sigma,
        truncation: h.basis.truncation(),
        eigenvalues,
        eigenvectors,
    })
}

/// Lowest `bands` eigenvalues at every `k`, rows in input order. Rows are
/// solved in parallel.
pub fn band_sweep(
    lattice: &LatticeBasis,
    pot: &FourierPotential,
    sigma: f64,
    truncation: usize,
    ks: &[Vec2],
    bands: usize,
) -> Result<Vec<Vec<f64>>> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("band sweep needs at least one quasimomentum".into()));
    }
    validate_sigma(sigma)?;
    ks.par_iter()
        .enumerate()
        .map(|(row, &k)| {
            let pw = PlaneWaveBasis::new(lattice, truncation, k);
            BlochMatrix::assemble(&pw, pot, sigma)
                .and_then(|h| h.eigenvalues(bands))
                .map_err(|e| Error::Sweep {
                    row,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// CSV band table: header `kx,ky,E1,…,EB`, 17 significant digits.
pub fn band_table_csv(ks: &[Vec2], table: &[Vec<f64>]) -> String {
    let bands = table.first().map_or(0, Vec::len);
    let mut out = String::from("kx,ky");
    for b in 1..=bands {
        out.push_str(&format!(",E{b}"));
    }
    out.push('\n');
    for (k, row) in ks.iter().zip(table) {
        out.push_str(&format!("{:.16e},{:.16e}", k.x, k.y));
        for e in row {
            out.push_str(&format!(",{e:.16e}"));
        }
        out.push('\n');
    }
    out
}

/// `p^σ` in coefficient space: `iσ |q_m|^{σ−2} q_m ĉ(m)` for both Cartesian
/// components of `q_m = k + m·k⃗`.
pub fn apply_p_sigma(coeffs: &[Complex64], pw: &PlaneWaveBasis, sigma: f64) -> [Vec<Complex64>; 2] {
    let mut px = Vec::with_capacity(coeffs.len());
    let mut py = Vec::with_capacity(coeffs.len());
    for (c, q) in coeffs.iter().zip(pw.momenta()) {
        let r = q.norm();
        let w = if r > 0.0 { sigma * r.powf(sigma - 2.0) } else { 0.0 };
        let f = Complex64::new(0.0, w) * c;
        px.push(f * q.x);
        py.push(f * q.y);
    }
    [px, py]
}

/// `(H(K) − E_D)⁻¹` on the orthogonal complement of a two-dimensional
/// eigenspace, built from a full eigendecomposition at `K`.
#[derive(Debug, Clone)]
pub struct ReducedResolvent {
    energy: f64,
    pair: (usize, usize),
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<Complex64>>,
}

impl ReducedResolvent {
    /// `full` must hold every eigenpair of the matrix. Exactly two
    /// eigenvalues may lie within [`CLUSTER_TOL`] of `energy`.
    pub fn new(full: BlochSolution, energy: f64) -> Result<Self> {
        let cluster: Vec<usize> = full
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, e)| (*e - energy).abs() < CLUSTER_TOL * energy.abs().max(1.0))
            .map(|(b, _)| b)
            .collect();
        if cluster.len() != 2 || cluster[1] != cluster[0] + 1 {
            let closest_gap = full
                .eigenvalues
                .iter()
                .map(|e| (e - energy).abs())
                .fold(f64::INFINITY, f64::min);
            return Err(Error::NoDegeneracy {
                tol: CLUSTER_TOL,
                closest_gap,
            });
        }
        Ok(ReducedResolvent {
            energy,
            pair: (cluster[0], cluster[1]),
            eigenvalues: full.eigenvalues,
            eigenvectors: full.eigenvectors,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    /// Smallest `|E_b − E_D|` outside the pair.
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != self.pair.0 && *b != self.pair.1)
            .map(|(_, e)| (e - self.energy).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// `u = Σ_{b ∉ pair} ⟨v_b, f⟩/(E_b − E_D) v_b`.
    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut u = vec![Complex64::new(0.0, 0.0); f.len()];
        for (b, (e, v)) in self.eigenvalues.iter().zip(&self.eigenvectors).enumerate() {
            if b == self.pair.0 || b == self.pair.1 {
                continue;
            }
            let c = coeff_inner(v, f) / (e - self.energy);
            for (ui, vi) in u.iter_mut().zip(v) {
                *ui += c * vi;
            }
        }
        u
    }

    /// Eigenvalue and eigenvector of band `b`.
    pub fn eigenpair(&self, b: usize) -> (f64, &[Complex64]) {
        (self.eigenvalues[b], &self.eigenvectors[b])
    }
}

/// `‖𝓡(H t) − H(𝓡 t)‖` over indices where both sides are computed without
/// truncation artefacts.
pub fn commutator_check(
    pw: &PlaneWaveBasis,
    map: &RotationMap,
    pot: &FourierPotential,
    sigma: f64,
    trial: &[Complex64],
) -> Result<f64> {
    let h = BlochMatrix::assemble(pw, pot, sigma)?;
    let lhs = map.apply(&h.apply(trial));
    let rhs = h.apply(&map.apply(trial));
    let support: Vec<[i64; 2]> = pot.coefficients().map(|(d, _)| d).collect();
    let mut acc = 0.0;
    for (i, m) in pw.indices().iter().enumerate() {
        let interior = map.image()[i].is_some()
            && support
                .iter()
                .all(|d| pw.position([m[0] - d[0], m[1] - d[1]]).is_some());
        if interior {
            acc += (lhs[i] - rhs[i]).norm_sqr();
        }
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::rotation_index_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn free_matrix_is_diagonal() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 3, l.k_point);
        let h = BlochMatrix::assemble(&pw, &FourierPotential::zero(), 2.0).unwrap();
        let min_diag = (0..h.size()).map(|i| h.entry(i, i).re).fold(f64::INFINITY, f64::min);
        assert!((min_diag - (4.0 * std::f64::consts::PI / 3.0).powi(2)).abs() < 1e-12);
        for i in 0..h.size() {
            for j in 0..h.size() {
                if i != j {
                    assert_eq!(h.entry(i, j), Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn potential_entries_and_hermiticity() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 4, l.k_point);
        let h = BlochMatrix::assemble(&pw, &FourierPotential::builtin_v(), 1.6).unwrap();
        let i = pw.position([0, 0]).unwrap();
        let j = pw.position([0, -1]).unwrap();
        assert_eq!(h.entry(i, j), Complex64::new(1.0, 0.0));
        assert_eq!(h.hermitian_residual(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 2, l.k_point);
        assert!(BlochMatrix::assemble(&pw, &FourierPotential::zero(), 1.0).is_err());
        assert!(BlochMatrix::assemble(&pw, &FourierPotential::zero(), 2.1).is_err());
        let complex = FourierPotential::from_coefficients([([1, 0], Complex64::new(1.0, 0.0))]);
        assert!(BlochMatrix::assemble(&pw, &complex, 2.0).is_err());
        let h = BlochMatrix::assemble(&pw, &FourierPotential::zero(), 2.0).unwrap();
        assert!(solve_bands(&h, 0).is_err());
        assert!(solve_bands(&h, h.size() + 1).is_err());
    }

    #[test]
    fn eigenvectors_are_orthonormal_and_sorted() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 5, l.brillouin_point([0.13, -0.27]));
        let h = BlochMatrix::assemble(&pw, &FourierPotential::builtin_v(), 1.6).unwrap();
        let sol = solve_bands(&h, 10).unwrap();
        assert!(sol.gram_residual() < 1e-10);
        assert!(sol.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for (e, v) in sol.eigenvalues.iter().zip(&sol.eigenvectors) {
            let hv = h.apply(v);
            let r: f64 = hv.iter().zip(v).map(|(a, b)| (a - b * e).norm_sqr()).sum();
            assert!(r.sqrt() < 1e-9);
        }
        let vals = h.eigenvalues(10).unwrap();
        for (a, b) in vals.iter().zip(&sol.eigenvalues) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn p_sigma_single_mode() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 2, l.k_point);
        let mut c = vec![Complex64::new(0.0, 0.0); pw.len()];
        let i0 = pw.position([0, 0]).unwrap();
        c[i0] = Complex64::new(1.0, 0.0);
        let sigma = 1.4;
        let [px, py] = apply_p_sigma(&c, &pw, sigma);
        let k = l.k_point;
        let w = sigma * k.norm().powf(sigma - 2.0);
        assert!((px[i0] - Complex64::new(0.0, w * k.x)).norm() < 1e-14);
        assert!((py[i0] - Complex64::new(0.0, w * k.y)).norm() < 1e-14);
        let c = random_vector(pw.len(), 3);
        let [px, py] = apply_p_sigma(&c, &pw, 2.0);
        for ((a, b), (ci, q)) in px.iter().zip(&py).zip(c.iter().zip(pw.momenta())) {
            assert!((a - Complex64::new(0.0, 2.0 * q.x) * ci).norm() < 1e-12);
            assert!((b - Complex64::new(0.0, 2.0 * q.y) * ci).norm() < 1e-12);
        }
    }

    #[test]
    fn commutator_vanishes_for_invariant_potentials() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 12, l.k_point);
        let map = rotation_index_map(&l, &pw).unwrap();
        let t = random_vector(pw.len(), 5);
        let r = commutator_check(&pw, &map, &FourierPotential::builtin_v(), 1.6, &t).unwrap();
        assert!(r < 1e-10, "{r}");
        let r0 = commutator_check(&pw, &map, &FourierPotential::zero(), 1.2, &t).unwrap();
        assert!(r0 < 1e-12, "{r0}");
        let cosine = FourierPotential::from_coefficients([
            ([1, 0], Complex64::new(1.0, 0.0)),
            ([-1, 0], Complex64::new(1.0, 0.0)),
        ]);
        let bad = commutator_check(&pw, &map, &cosine, 2.0, &t).unwrap();
        assert!(bad > 1.0, "{bad}");
    }

    #[test]
    fn csv_layout() {
        let ks = [Vec2::new(0.5, -1.0)];
        let csv = band_table_csv(&ks, &[vec![1.0, 2.5]]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("kx,ky,E1,E2"));
        assert_eq!(
            lines.next(),
            Some("5.0000000000000000e-1,-1.0000000000000000e0,1.0000000000000000e0,2.5000000000000000e0")
        );
    }
}
