//! Honeycomb lattice geometry.
//!
//! The direct lattice is generated by `v1 = (√3/2, 1/2)` and
//! `v2 = (√3/2, -1/2)`; everything else (dual vectors, the `K` point, the
//! cell area) is derived from these two vectors at construction time.
//!
//! Plane-wave coefficients are indexed by `m = (m1, m2) ∈ ℤ²` and carry the
//! momentum `center + m1·k1 + m2·k2`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A plane vector (positions and quasimomenta share the type).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Polar direction `(cos θ, sin θ)`.
    pub fn unit(angle: f64) -> Self {
        Vec2::new(angle.cos(), angle.sin())
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self * rhs.x, self * rhs.y)
    }
}

/// Row-major 2×2 real matrix.
pub type Mat2 = [[f64; 2]; 2];

fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    Vec2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
}

fn transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Direct and dual bases of the honeycomb lattice together with the
/// high-symmetry quasimomenta and the 2π/3 rotation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeBasis {
    pub v1: Vec2,
    pub v2: Vec2,
    pub k1: Vec2,
    pub k2: Vec2,
    pub k_point: Vec2,
    pub k_prime: Vec2,
    /// Clockwise rotation by 2π/3.
    pub rotation: Mat2,
    pub cell_area: f64,
}

impl LatticeBasis {
    pub fn honeycomb() -> Self {
        let s3 = 3f64.sqrt();
        let v1 = Vec2::new(s3 / 2.0, 0.5);
        let v2 = Vec2::new(s3 / 2.0, -0.5);
        let (k1, k2) = dual_pair(v1, v2);
        let k_point = (1.0 / 3.0) * (k1 - k2);
        let rotation = [[-0.5, s3 / 2.0], [-s3 / 2.0, -0.5]];
        LatticeBasis {
            v1,
            v2,
            k1,
            k2,
            k_point,
            k_prime: -k_point,
            rotation,
            cell_area: (v1.x * v2.y - v1.y * v2.x).abs(),
        }
    }

    /// `m1·k1 + m2·k2`.
    pub fn dual_vector(&self, m: [i64; 2]) -> Vec2 {
        m[0] as f64 * self.k1 + m[1] as f64 * self.k2
    }

    /// `s1·v1 + s2·v2`.
    pub fn direct_vector(&self, s: [f64; 2]) -> Vec2 {
        s[0] * self.v1 + s[1] * self.v2
    }

    /// Coordinates of `q` in the dual basis, i.e. `(q·v1, q·v2) / 2π`.
    pub fn dual_coords(&self, q: Vec2) -> [f64; 2] {
        [q.dot(self.v1) / (2.0 * PI), q.dot(self.v2) / (2.0 * PI)]
    }

    /// Coordinates of `y` in the direct basis, i.e. `(y·k1, y·k2) / 2π`.
    pub fn direct_coords(&self, y: Vec2) -> [f64; 2] {
        [y.dot(self.k1) / (2.0 * PI), y.dot(self.k2) / (2.0 * PI)]
    }

    /// Area of the dual cell `Ω*`.
    pub fn dual_cell_area(&self) -> f64 {
        (self.k1.x * self.k2.y - self.k1.y * self.k2.x).abs()
    }

    pub fn rotate(&self, v: Vec2) -> Vec2 {
        mat_vec(&self.rotation, v)
    }

    /// `R* v` (the inverse rotation).
    pub fn rotate_adjoint(&self, v: Vec2) -> Vec2 {
        mat_vec(&transpose(&self.rotation), v)
    }

    /// `max |v_i·k_j − 2π δ_ij|`.
    pub fn duality_residual(&self) -> f64 {
        let v = [self.v1, self.v2];
        let k = [self.k1, self.k2];
        let mut worst = 0.0f64;
        for (i, vi) in v.iter().enumerate() {
            for (j, kj) in k.iter().enumerate() {
                let target = if i == j { 2.0 * PI } else { 0.0 };
                worst = worst.max((vi.dot(*kj) - target).abs());
            }
        }
        worst
    }

    /// Residuals of `R³ = I` and `RᵀR = I`.
    pub fn rotation_residuals(&self) -> (f64, f64) {
        let r = &self.rotation;
        let r3 = mat_mul(r, &mat_mul(r, r));
        let rtr = mat_mul(&transpose(r), r);
        let dev = |m: Mat2| {
            let mut worst = 0.0f64;
            for i in 0..2 {
                for j in 0..2 {
                    let id = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((m[i][j] - id).abs());
                }
            }
            worst
        };
        (dev(r3), dev(rtr))
    }

    /// Rounds dual coordinates of `q` to integers, failing if `q` is not on
    /// the dual lattice within `tol`.
    pub fn dual_lattice_index(&self, q: Vec2, tol: f64) -> Option<[i64; 2]> {
        let c = self.dual_coords(q);
        let r = [c[0].round(), c[1].round()];
        if (c[0] - r[0]).abs() <= tol && (c[1] - r[1]).abs() <= tol {
            Some([r[0] as i64, r[1] as i64])
        } else {
            None
        }
    }

    /// A point of the Brillouin zone `Ω*` from its fractional coordinates
    /// `θ ∈ [−1/2, 1/2]²`.
    pub fn brillouin_point(&self, theta: [f64; 2]) -> Vec2 {
        theta[0] * self.k1 + theta[1] * self.k2
    }
}

/// Solves `v_i·k_j = 2π δ_ij` for the dual pair.
fn dual_pair(v1: Vec2, v2: Vec2) -> (Vec2, Vec2) {
    let det = v1.x * v2.y - v1.y * v2.x;
    // Rows of (2π) V⁻ᵀ where V has v1, v2 as rows.
    let k1 = Vec2::new(v2.y, -v2.x);
    let k2 = Vec2::new(-v1.y, v1.x);
    ((2.0 * PI / det) * k1, (2.0 * PI / det) * k2)
}

/// Square truncation `|m1|, |m2| ≤ N` of the plane-wave basis around a
/// quasimomentum, enumerated row-major in `(m1, m2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveBasis {
    truncation: usize,
    center: Vec2,
    indices: Vec<[i64; 2]>,
    momenta: Vec<Vec2>,
}

impl PlaneWaveBasis {
    pub fn new(lattice: &LatticeBasis, truncation: usize, center: Vec2) -> Self {
        let n = truncation as i64;
        let mut indices = Vec::with_capacity((2 * truncation + 1).pow(2));
        for m1 in -n..=n {
            for m2 in -n..=n {
                indices.push([m1, m2]);
            }
        }
        let momenta = indices
            .iter()
            .map(|&m| center + lattice.dual_vector(m))
            .collect();
        PlaneWaveBasis {
            truncation,
            center,
            indices,
            momenta,
        }
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[[i64; 2]] {
        &self.indices
    }

    pub fn momenta(&self) -> &[Vec2] {
        &self.momenta
    }

    /// Position of `m` in the enumeration, if inside the truncation.
    pub fn position(&self, m: [i64; 2]) -> Option<usize> {
        let n = self.truncation as i64;
        if m[0].abs() > n || m[1].abs() > n {
            return None;
        }
        let side = 2 * n + 1;
        Some(((m[0] + n) * side + (m[1] + n)) as usize)
    }

    pub fn momentum(&self, idx: usize) -> Vec2 {
        self.momenta[idx]
    }

    pub fn min_momentum_norm(&self) -> f64 {
        self.momenta
            .iter()
            .map(|q| q.norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Action of `R*` on the indices of a `K`-centred basis:
/// `R*(K + m·k) = K + m'·k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationMap {
    image: Vec<Option<usize>>,
}

impl RotationMap {
    /// `image[i]` is the position of `m'` for the `i`-th index, or `None`
    /// when `m'` leaves the truncation.
    pub fn image(&self) -> &[Option<usize>] {
        &self.image
    }

    /// Positions whose image left the truncation.
    pub fn drop_set(&self) -> Vec<usize> {
        self.image
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.is_none().then_some(i))
            .collect()
    }

    /// Coefficients of `𝓡Φ` given those of `Φ`: `(𝓡Φ)^(m) = Φ̂(m')`.
    /// Dropped indices get zero.
    pub fn apply(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        self.image
            .iter()
            .map(|m| m.map_or(Complex64::new(0.0, 0.0), |j| coeffs[j]))
            .collect()
    }

    /// Positions `i` such that the orbit `i, ρ(i), ρ²(i)` stays inside the
    /// truncation.
    pub fn closed_positions(&self) -> Vec<usize> {
        (0..self.image.len())
            .filter(|&i| {
                self.image[i]
                    .and_then(|j| self.image[j])
                    .and_then(|k| self.image[k])
                    .is_some()
            })
            .collect()
    }
}

/// Builds the index permutation induced by `R*` on a `K`-centred basis.
pub fn rotation_index_map(lattice: &LatticeBasis, pw: &PlaneWaveBasis) -> Result<RotationMap> {
    let k = pw.center();
    let shift = lattice.rotate_adjoint(k) - k;
    let base = lattice.dual_lattice_index(shift, 1e-10).ok_or_else(|| {
        Error::Geometry(format!(
            "R*k - k = ({:.6}, {:.6}) is not on the dual lattice; the basis must be centred at K",
            shift.x, shift.y
        ))
    })?;
    // R* k1 = −k1 − k2 and R* k2 = k1, checked numerically.
    let rk1 = lattice
        .dual_lattice_index(lattice.rotate_adjoint(lattice.k1), 1e-10)
        .ok_or_else(|| Error::Geometry("R*k1 is not a dual-lattice vector".into()))?;
    let rk2 = lattice
        .dual_lattice_index(lattice.rotate_adjoint(lattice.k2), 1e-10)
        .ok_or_else(|| Error::Geometry("R*k2 is not a dual-lattice vector".into()))?;
    let image = pw
        .indices()
        .iter()
        .map(|&[m1, m2]| {
            let target = [
                base[0] + m1 * rk1[0] + m2 * rk2[0],
                base[1] + m1 * rk1[1] + m2 * rk2[1],
            ];
            pw.position(target)
        })
        .collect();
    Ok(RotationMap { image })
}

/// `n` points linearly interpolating `a → b`, endpoints included.
pub fn k_path(a: Vec2, b: Vec2, n: usize) -> Result<Vec<Vec2>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "k_path needs at least 2 points, got {n}"
        )));
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / last;
            (1.0 - t) * a + t * b
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dual_vectors_match_hand_solution() {
        let l = LatticeBasis::honeycomb();
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(l.k1.x, 2.0 * PI / s3, epsilon = 1e-14);
        assert_abs_diff_eq!(l.k1.y, 2.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(l.k2.x, 2.0 * PI / s3, epsilon = 1e-14);
        assert_abs_diff_eq!(l.k2.y, -2.0 * PI, epsilon = 1e-14);
        assert!(l.duality_residual() < 1e-12);
    }

    #[test]
    fn k_point_and_rotation() {
        let l = LatticeBasis::honeycomb();
        assert_abs_diff_eq!(l.k_point.norm(), 4.0 * PI / 3.0, epsilon = 1e-14);
        assert_eq!(l.k_prime, -l.k_point);
        let (r3, rtr) = l.rotation_residuals();
        assert!(r3 < 1e-14 && rtr < 1e-14);
        // R K = K + k2 and R* K = K − k1.
        let rk = l.rotate(l.k_point) - l.k_point - l.k2;
        let rsk = l.rotate_adjoint(l.k_point) - l.k_point + l.k1;
        assert!(rk.norm() < 1e-12 && rsk.norm() < 1e-12);
        assert_abs_diff_eq!(l.cell_area, 3f64.sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rotation_map_closed_form() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 4, l.k_point);
        let map = rotation_index_map(&l, &pw).unwrap();
        let origin = pw.position([0, 0]).unwrap();
        assert_eq!(map.image()[origin], pw.position([-1, 0]));
        for (i, &[m1, m2]) in pw.indices().iter().enumerate() {
            assert_eq!(map.image()[i], pw.position([m2 - m1 - 1, -m1]));
        }
    }

    #[test]
    fn rotation_map_cubes_to_identity() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 5, l.k_point);
        let map = rotation_index_map(&l, &pw).unwrap();
        let closed = map.closed_positions();
        assert!(!closed.is_empty());
        for i in closed {
            let j = map.image()[i].unwrap();
            let k = map.image()[j].unwrap();
            assert_eq!(map.image()[k], Some(i));
        }
        // Non-dropped images are distinct.
        let mut seen = std::collections::HashSet::new();
        for j in map.image().iter().flatten() {
            assert!(seen.insert(*j));
        }
    }

    #[test]
    fn rotation_map_rejects_generic_center() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 2, Vec2::new(0.3, 0.1));
        assert!(matches!(
            rotation_index_map(&l, &pw),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn plane_wave_layout() {
        let l = LatticeBasis::honeycomb();
        let pw = PlaneWaveBasis::new(&l, 3, l.k_point);
        assert_eq!(pw.len(), 49);
        assert_eq!(pw.indices()[0], [-3, -3]);
        assert_eq!(pw.indices()[1], [-3, -2]);
        for (i, &m) in pw.indices().iter().enumerate() {
            assert_eq!(pw.position(m), Some(i));
        }
        assert!(pw.min_momentum_norm() >= l.k_point.norm() - 1e-12);
    }

    #[test]
    fn paths() {
        let l = LatticeBasis::honeycomb();
        let k = l.k_point;
        assert_eq!(k_path(k, k, 3).unwrap(), vec![k, k, k]);
        let p = k_path(k - 0.1 * l.k2, k + 0.1 * l.k2, 3).unwrap();
        assert!((p[1] - k).norm() < 1e-15);
        let p = k_path(Vec2::ZERO, l.k1, 2).unwrap();
        assert_eq!(p, vec![Vec2::ZERO, l.k1]);
        assert!(k_path(k, k, 1).is_err());
    }
}
