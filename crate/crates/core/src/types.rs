//! Matrix aliases shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Imaginary unit.
pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Relative singular-value threshold used for every rank decision.
pub const RANK_TOL: f64 = 1e-9;
