//! Leading eigenvector of a non-negative symmetric matrix by power iteration.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::InvalidInput;
use crate::matching::AffinityMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenpair {
    /// Unit norm, entrywise non-negative.
    pub vector: DVector<f64>,
    /// Rayleigh quotient `xᵀ A x`.
    pub eigenvalue: f64,
    pub iterations: usize,
    /// Successive iterates came within the tolerance before the budget ran out.
    pub converged: bool,
    /// The matrix annihilated the iterate (zero matrix); the vector is uniform.
    pub degenerate: bool,
}

impl Eigenpair {
    pub fn low_confidence(&self) -> bool {
        !self.converged
    }
}

pub fn max_eigenvector(
    a: &AffinityMatrix,
    power_iters: usize,
    power_tol: f64,
) -> Result<Eigenpair, InvalidInput> {
    dominant_eigenpair(a.matrix(), power_iters, power_tol)
}

/// Power iteration from the uniform vector `1/√n`.
///
/// Stops when successive unit iterates differ by less than `power_tol` in
/// Euclidean norm, or after `power_iters` products. Not converging is
/// reported through [`Eigenpair::converged`] rather than as an error.
pub fn dominant_eigenpair(
    a: &DMatrix<f64>,
    power_iters: usize,
    power_tol: f64,
) -> Result<Eigenpair, InvalidInput> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(InvalidInput::param("matrix", "must be square with dimension >= 1"));
    }
    if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(InvalidInput::param("matrix", "entries must be finite and non-negative"));
    }
    if power_iters == 0 {
        return Err(InvalidInput::param("power_iters", "must be >= 1"));
    }

    let uniform = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut x = uniform.clone();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..power_iters {
        iterations += 1;
        let mut y = a * &x;
        y.apply(|v| *v = v.max(0.0));
        let norm = y.norm();
        if norm == 0.0 {
            return Ok(Eigenpair {
                vector: uniform,
                eigenvalue: 0.0,
                iterations,
                converged: true,
                degenerate: true,
            });
        }
        y /= norm;
        let step = (&y - &x).norm();
        x = y;
        if step < power_tol {
            converged = true;
            break;
        }
    }
    let eigenvalue = x.dot(&(a * &x));
    Ok(Eigenpair {
        vector: x,
        eigenvalue,
        iterations,
        converged,
        degenerate: false,
    })
}
