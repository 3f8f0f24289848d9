//! Dense complex matrices on the spin Hilbert space.
//!
//! Everything here is small (at most 6x6), so dense storage and a full
//! Hermitian eigendecomposition are used throughout.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix acting on the spin Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
}

impl Operator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare(matrix.nrows(), matrix.ncols()));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(*d, 0.0);
        }
        Self { matrix: m }
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        Ok(Self {
            matrix: CMatrix::from_row_slice(dim, dim, entries),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix.map(|z| z * factor),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            matrix: &self.matrix + &other.matrix,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            matrix: &self.matrix - &other.matrix,
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        (self.adjoint().mul(self)).sub(&Self::identity(n)).max_abs()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() < tol
    }

    pub fn ensure_hermitian(&self, tol: f64) -> Result<()> {
        let err = self.hermiticity_error();
        if err > tol {
            return Err(Error::NotHermitian(err));
        }
        Ok(())
    }

    pub fn ensure_unitary(&self, tol: f64) -> Result<()> {
        let err = self.unitarity_error();
        if err >= tol {
            return Err(Error::NotUnitary(err));
        }
        Ok(())
    }

    /// Symmetrized copy `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self {
            matrix: (&self.matrix + self.matrix.adjoint()).map(|z| z * 0.5),
        }
    }

    /// Hermitian eigendecomposition with ascending eigenvalues.
    ///
    /// Only the lower triangle is read, so callers should check Hermiticity first.
    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = CMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(k));
        }
        (values, vectors)
    }

    /// `V diag(f(λ)) V†` for a Hermitian operator.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> C64) -> Self {
        let (values, vectors) = self.eigh();
        let diag = DVector::from_iterator(values.len(), values.iter().map(|&v| f(v)));
        let scaled = &vectors * CMatrix::from_diagonal(&diag);
        Self {
            matrix: scaled * vectors.adjoint(),
        }
    }

    /// Propagator `exp(-2πi H t)` for a Hermitian generator in MHz and `t` in µs.
    pub fn propagator(&self, t: f64) -> Self {
        self.hermitian_function(|e| C64::from_polar(1.0, -2.0 * PI * e * t))
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, unitary: &Self) -> Self {
        Self {
            matrix: &unitary.matrix * &self.matrix * unitary.matrix.adjoint(),
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Operator {
    pub fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_x() -> Operator {
        Operator::from_rows(2, &[ZERO, ONE, ONE, ZERO]).unwrap()
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(
            Operator::new(CMatrix::zeros(2, 3)),
            Err(Error::NotSquare(2, 3))
        ));
    }

    #[test]
    fn propagator_of_pauli_x_half_period() {
        // exp(-2πi (σx/4) t) at t=1 is exp(-iπ/2 σx) = -iσx
        let h = pauli_x().scale(0.25);
        let u = h.propagator(1.0);
        assert!((u.get(0, 1) - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!(u.get(0, 0).norm() < 1e-12);
        assert!(u.is_unitary(1e-12));
    }

    #[test]
    fn eigh_sorts_ascending() {
        let h = Operator::from_real_diagonal(&[3.0, -1.0, 2.0]);
        let (vals, vecs) = h.eigh();
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
        assert!((vecs[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_time_propagator_is_identity() {
        let h = pauli_x().scale(3.7);
        assert!(h.propagator(0.0).sub(&Operator::identity(2)).max_abs() < 1e-14);
    }
}
