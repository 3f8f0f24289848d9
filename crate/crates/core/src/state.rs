use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Operator, C64};
use crate::spin_model::{EnergyLevels, Level};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    /// Levels 1–4 in the rotating frame.
    Working,
    /// All six eigenstates of the spin Hamiltonian.
    Full,
}

impl Basis {
    pub fn dim(self) -> usize {
        match self {
            Basis::Working => 4,
            Basis::Full => 6,
        }
    }

    fn from_dim(dim: usize) -> Result<Self> {
        match dim {
            4 => Ok(Basis::Working),
            6 => Ok(Basis::Full),
            n => Err(Error::DimensionMismatch {
                expected: 4,
                actual: n,
            }),
        }
    }
}

/// Hermitian, unit-trace, positive-semidefinite state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    rho: Operator,
    basis: Basis,
}

impl DensityMatrix {
    /// Validates all invariants.
    pub fn new(rho: Operator) -> Result<Self> {
        let basis = Basis::from_dim(rho.dim())?;
        let dm = Self { rho, basis };
        dm.check()?;
        Ok(dm)
    }

    /// Wraps without checking. Used inside propagation loops where the map is
    /// known to preserve the invariants.
    pub(crate) fn from_operator_unchecked(rho: Operator) -> Self {
        let basis = Basis::from_dim(rho.dim()).expect("4 or 6 levels");
        Self { rho, basis }
    }

    pub fn basis_state(level: Level) -> Self {
        let mut d = [0.0; 4];
        d[level.index()] = 1.0;
        Self::from_operator_unchecked(Operator::from_real_diagonal(&d))
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) working-subspace amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        let n = amplitudes.len();
        let mut m = CMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = amplitudes[r] * amplitudes[c].conj() / norm;
            }
        }
        Self::new(Operator::new(m)?)
    }

    /// Diagonal state from populations; must sum to one.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        Self::new(Operator::from_real_diagonal(populations))
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0 / dim as f64; dim])
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn operator(&self) -> &Operator {
        &self.rho
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.rho.get(r, c)
    }

    pub fn population(&self, level: Level) -> f64 {
        self.rho.get(level.index(), level.index()).re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.rho.get(k, k).re).collect()
    }

    /// Total population of `m_S = 0` (levels 3 and 4).
    pub fn bright_population(&self) -> f64 {
        self.population(Level::L3) + self.population(Level::L4)
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.rho.hermitian_part().eigh().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn purity(&self) -> f64 {
        self.rho.mul(&self.rho).trace().re
    }

    pub fn max_imaginary(&self) -> f64 {
        self.rho.matrix().iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// Checks Hermiticity, unit trace and positivity at the module tolerances.
    pub fn check(&self) -> Result<()> {
        let herm = self.rho.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let diff = self.rho.sub(&other.rho).hermitian_part();
        0.5 * diff.eigh().0.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Lifts a working-subspace state onto the six eigenstates of the Hamiltonian.
    pub fn embed_full(&self, levels: &EnergyLevels) -> Result<Self> {
        if self.basis != Basis::Working {
            return Err(Error::DimensionMismatch {
                expected: 4,
                actual: self.dim(),
            });
        }
        let mut m = CMatrix::zeros(6, 6);
        for r in Level::ALL {
            for c in Level::ALL {
                m[(levels.labels[r.index()], levels.labels[c.index()])] =
                    self.rho.get(r.index(), c.index());
            }
        }
        Self::new(Operator::new(m)?)
    }

    /// Same state in the product basis `|m_S, m_I⟩`.
    pub fn to_product_basis(&self, levels: &EnergyLevels) -> Result<Operator> {
        let full = match self.basis {
            Basis::Working => self.embed_full(levels)?,
            Basis::Full => self.clone(),
        };
        let v = &levels.spectrum.states;
        Operator::new(v * full.rho.matrix() * v.adjoint())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_state_is_valid() {
        let s = DensityMatrix::basis_state(Level::L2);
        s.check().unwrap();
        assert_eq!(s.population(Level::L2), 1.0);
        assert!((s.purity() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_trace() {
        assert!(DensityMatrix::diagonal(&[0.5, 0.2, 0.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_negative() {
        assert!(DensityMatrix::diagonal(&[1.2, -0.2, 0.0, 0.0]).is_err());
    }

    #[test]
    fn trace_distance_of_orthogonal_states() {
        let a = DensityMatrix::basis_state(Level::L1);
        let b = DensityMatrix::basis_state(Level::L3);
        assert!((a.trace_distance(&b) - 1.0).abs() < 1e-12);
    }
}
