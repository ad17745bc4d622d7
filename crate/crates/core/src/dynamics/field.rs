//! Complex fields on an oblique grid and the ε-weighted Sobolev norm.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Fft2, ObliqueGrid};
use crate::lattice::Vec2;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: ObliqueGrid,
    pub values: Vec<Complex64>,
}

impl Field2D {
    pub fn zeros(grid: &ObliqueGrid) -> Self {
        Field2D {
            grid: grid.clone(),
            values: vec![ZERO; grid.len()],
        }
    }

    pub fn new(grid: &ObliqueGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field2D {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn<F: Fn(Vec2) -> Complex64>(grid: &ObliqueGrid, f: F) -> Self {
        Field2D {
            grid: grid.clone(),
            values: grid.sample(f),
        }
    }

    /// `∫ |f|² dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.node_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.mass().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn check_grid(&self, other: &ObliqueGrid) -> Result<()> {
        if self.grid.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "field on {}x{} nodes (ε = {}), expected {}x{} (ε = {})",
                self.grid.side(),
                self.grid.side(),
                self.grid.epsilon,
                other.side(),
                other.side(),
                other.epsilon
            )))
        }
    }

    /// `self − other`.
    pub fn difference(&self, other: &Field2D) -> Result<Field2D> {
        other.check_grid(&self.grid)?;
        Ok(Field2D {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.values.iter_mut().for_each(|z| *z *= factor);
    }
}

/// FFT plan together with the wavevector of every mode.
pub struct Spectral {
    pub fft: Fft2,
    pub xi: Vec<Vec2>,
}

impl Spectral {
    pub fn new(grid: &ObliqueGrid) -> Self {
        Spectral {
            fft: Fft2::new(grid.side()),
            xi: grid.wavevectors(),
        }
    }

    /// Spectral partial derivatives `(∂1 f, ∂2 f)`.
    pub fn gradient(&mut self, values: &[Complex64]) -> [Vec<Complex64>; 2] {
        let mut spec = values.to_vec();
        self.fft.forward(&mut spec);
        let mut out = [spec.clone(), spec];
        for (c, out_c) in out.iter_mut().enumerate() {
            for (z, xi) in out_c.iter_mut().zip(&self.xi) {
                let k = if c == 0 { xi.x } else { xi.y };
                *z *= Complex64::new(0.0, k);
            }
            self.fft.inverse(out_c);
        }
        out
    }
}

/// `Σ_{|ν|≤s} ε^{2|ν|} ξ^{2ν}`, the Fourier weight of the squared
/// `H^s_ε` norm.
pub fn sobolev_weight(xi: Vec2, epsilon: f64, s: u32) -> f64 {
    let a = (epsilon * xi.x).powi(2);
    let b = (epsilon * xi.y).powi(2);
    let mut w = 0.0;
    for n1 in 0..=s {
        for n2 in 0..=(s - n1) {
            w += a.powi(n1 as i32) * b.powi(n2 as i32);
        }
    }
    w
}

/// `‖f‖_{H^s_ε} = (Σ_{|ν|≤s} ‖(ε∂)^ν f‖²_{L²})^{1/2}`, evaluated
/// spectrally. The grid's `ε` sets the weight.
pub fn weighted_hs_norm(f: &Field2D, s: u32, spectral: &mut Spectral) -> Result<f64> {
    if spectral.xi.len() != f.values.len() {
        return Err(Error::GridMismatch("spectral helper built for another grid".into()));
    }
    let mut spec = f.values.clone();
    spectral.fft.forward(&mut spec);
    let eps = f.grid.epsilon;
    let sum: f64 = spec
        .iter()
        .zip(&spectral.xi)
        .map(|(z, xi)| z.norm_sqr() * sobolev_weight(*xi, eps, s))
        .sum();
    // Parseval: Σ|f|² dA = dA / side² · Σ|F|².
    Ok((sum * f.grid.node_area() / f.grid.len() as f64).sqrt())
}
