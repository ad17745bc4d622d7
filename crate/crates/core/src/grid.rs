//! Oblique periodic grids aligned with the lattice vectors, and a square 2D
//! FFT helper.
//!
//! A grid covers `cells × cells` lattice cells of the micro variable
//! `y = x/ε` with `points_per_cell` samples per cell edge. Node `(a, b)`
//! sits at `x = ε (a/n · v1 + b/n · v2)` and is stored row-major
//! (`a` slow, `b` fast).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{LatticeBasis, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueGrid {
    pub cells: usize,
    pub points_per_cell: usize,
    pub epsilon: f64,
    pub lattice: LatticeBasis,
}

impl ObliqueGrid {
    pub fn new(lattice: &LatticeBasis, cells: usize, points_per_cell: usize, epsilon: f64) -> Result<Self> {
        if cells == 0 || points_per_cell == 0 {
            return Err(Error::NonCommensurateGrid(format!(
                "need at least one cell and one point per cell (got {cells} cells, {points_per_cell} points)"
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(ObliqueGrid {
            cells,
            points_per_cell,
            epsilon,
            lattice: lattice.clone(),
        })
    }

    /// Grid whose box has macroscopic edge length `box_len`; the number of
    /// cells `box_len / ε` must be an integer.
    pub fn from_box(lattice: &LatticeBasis, box_len: f64, points_per_cell: usize, epsilon: f64) -> Result<Self> {
        let cells = box_len / epsilon;
        let rounded = cells.round();
        if rounded < 1.0 || (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::NonCommensurateGrid(format!(
                "box length {box_len} is not an integer number of cells at epsilon {epsilon} ({cells} cells)"
            )));
        }
        Self::new(lattice, rounded as usize, points_per_cell, epsilon)
    }

    /// Points per box edge.
    pub fn side(&self) -> usize {
        self.cells * self.points_per_cell
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Macroscopic box edge `ε · cells`.
    pub fn box_len(&self) -> f64 {
        self.epsilon * self.cells as f64
    }

    pub fn box_area(&self) -> f64 {
        self.box_len().powi(2) * self.lattice.cell_area
    }

    /// Area element of one grid node.
    pub fn node_area(&self) -> f64 {
        self.box_area() / self.len() as f64
    }

    /// Macroscopic position of node `(a, b)`.
    pub fn node(&self, a: usize, b: usize) -> Vec2 {
        let n = self.points_per_cell as f64;
        self.epsilon * self.lattice.direct_vector([a as f64 / n, b as f64 / n])
    }

    /// Box centre.
    pub fn center(&self) -> Vec2 {
        self.lattice.direct_vector([0.5 * self.box_len(), 0.5 * self.box_len()])
    }

    /// Signed FFT frequency of index `j`.
    pub fn frequency(&self, j: usize) -> i64 {
        let side = self.side() as i64;
        let j = j as i64;
        if 2 * j < side {
            j
        } else {
            j - side
        }
    }

    /// Cartesian wavevector `ξ` of FFT mode `(j1, j2)`.
    pub fn wavevector(&self, j1: usize, j2: usize) -> Vec2 {
        let scale = 1.0 / self.box_len();
        scale * self.lattice.dual_vector([self.frequency(j1), self.frequency(j2)])
    }

    /// All wavevectors in storage order.
    pub fn wavevectors(&self) -> Vec<Vec2> {
        let side = self.side();
        let mut out = Vec::with_capacity(self.len());
        for j1 in 0..side {
            for j2 in 0..side {
                out.push(self.wavevector(j1, j2));
            }
        }
        out
    }

    /// Applies `f` to every node position.
    pub fn sample<F: Fn(Vec2) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        let side = self.side();
        let mut out = Vec::with_capacity(self.len());
        for a in 0..side {
            for b in 0..side {
                out.push(f(self.node(a, b)));
            }
        }
        out
    }

    /// Wrapped box-periodic displacement `x − center` reduced to the
    /// parallelogram centred at the origin.
    pub fn periodic_offset(&self, x: Vec2, center: Vec2) -> Vec2 {
        let d = x - center;
        let c = self.lattice.direct_coords(d);
        let l = self.box_len();
        let wrap = |t: f64| t - l * (t / l).round();
        self.lattice.direct_vector([wrap(c[0]), wrap(c[1])])
    }

    pub fn same_shape(&self, other: &ObliqueGrid) -> bool {
        self.cells == other.cells
            && self.points_per_cell == other.points_per_cell
            && (self.epsilon - other.epsilon).abs() <= 1e-15 * self.epsilon
    }
}

/// Unnormalized forward / normalized inverse 2D FFT on a square row-major
/// array.
pub struct Fft2 {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(side);
        let inverse = planner.plan_fft_inverse(side);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Fft2 {
            side,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            transposed: vec![Complex64::new(0.0, 0.0); side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn run(&mut self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.side * self.side, "FFT buffer size mismatch");
        let plan = if inverse { &self.inverse } else { &self.forward };
        plan.process_with_scratch(data, &mut self.scratch);
        transpose_square(data, &mut self.transposed, self.side);
        plan.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose_square(&self.transposed, data, self.side);
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// Inverse transform including the `1/side²` factor.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.run(data, true);
        let scale = 1.0 / (self.side * self.side) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

fn transpose_square(src: &[Complex64], dst: &mut [Complex64], side: usize) {
    const BLOCK: usize = 32;
    for ib in (0..side).step_by(BLOCK) {
        for jb in (0..side).step_by(BLOCK) {
            for i in ib..(ib + BLOCK).min(side) {
                for j in jb..(jb + BLOCK).min(side) {
                    dst[j * side + i] = src[i * side + j];
                }
            }
        }
    }
}
