//! Decoherence and inhomogeneous broadening.
//!
//! Relaxation is a diagonal dissipator on the working subspace: every coherence
//! `ρ_ij` is multiplied by an electron factor `exp(-t/T2e)` when `i`, `j` differ
//! in `m_S` and a nuclear factor `exp(-t/T2n)` when they differ in `m_I`, and the
//! whole state relaxes toward a fixed diagonal point at rate `1/T1`. The map is a
//! composition of two dephasing channels and a replacement channel, so it is
//! completely positive and forms a semigroup in `t`.
//!
//! Quasi-static broadening shifts level 1 by `δ_A` and level 2 by `δ_A + δ_C`,
//! which detunes transition A by `δ_A`, C by `δ_C`, B by `δ_A + δ_C` and leaves D
//! untouched. Ensembles over `(δ_A, δ_C)` come from tensor Gauss–Hermite nodes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{Operator, C64};
use crate::spin_model::{EnergyLevels, Level};
use crate::state::DensityMatrix;

/// FWHM → standard deviation of a Gaussian.
pub const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Electron population relaxation time, µs.
    pub t1_electron: f64,
    /// Electron coherence time, µs.
    pub t2_electron: f64,
    /// Nuclear coherence time, µs.
    pub t2_nuclear: f64,
    /// Gaussian FWHM of transition A, MHz.
    pub linewidth_a: f64,
    /// Gaussian FWHM of transition C, MHz.
    pub linewidth_c: f64,
    /// Quadrature nodes per broadened transition.
    pub ensemble_size: usize,
    /// Populations of levels 1–4 that `T1` relaxes toward.
    pub thermal_populations: [f64; 4],
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        Self {
            t1_electron: f64::INFINITY,
            t2_electron: f64::INFINITY,
            t2_nuclear: f64::INFINITY,
            linewidth_a: 0.0,
            linewidth_c: 0.0,
            ensemble_size: 21,
            thermal_populations: [0.25; 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("t1_electron", self.t1_electron),
            ("t2_electron", self.t2_electron),
            ("t2_nuclear", self.t2_nuclear),
        ] {
            if t.is_nan() || t <= 0.0 {
                return Err(invalid(name, format!("must be > 0, got {t}")));
            }
        }
        if self.t2_electron > 2.0 * self.t1_electron {
            return Err(invalid("t2_electron", "must not exceed 2·T1"));
        }
        for (name, w) in [
            ("linewidth_a", self.linewidth_a),
            ("linewidth_c", self.linewidth_c),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {w}")));
            }
        }
        if self.ensemble_size == 0 {
            return Err(invalid("ensemble_size", "must be >= 1"));
        }
        let total: f64 = self.thermal_populations.iter().sum();
        if self.thermal_populations.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(invalid("thermal_populations", "must be non-negative and sum to 1"));
        }
        Ok(())
    }

    pub fn has_damping(&self) -> bool {
        self.t1_electron.is_finite() || self.t2_electron.is_finite() || self.t2_nuclear.is_finite()
    }

    pub fn has_broadening(&self) -> bool {
        self.linewidth_a > 0.0 || self.linewidth_c > 0.0
    }

    pub fn min_t2(&self) -> f64 {
        self.t2_electron.min(self.t2_nuclear)
    }

    /// Coherence damping factor between two levels after `t` µs, including `T1`.
    pub fn coherence_factor(&self, a: Level, b: Level, t: f64) -> f64 {
        let mut rate = 0.0;
        if a.electron_excited() != b.electron_excited() {
            rate += 1.0 / self.t2_electron;
        }
        if a.nuclear_down() != b.nuclear_down() {
            rate += 1.0 / self.t2_nuclear;
        }
        if a != b {
            rate += 1.0 / self.t1_electron;
        }
        (-rate * t).exp()
    }
}

/// Relaxation map over `t` µs.
pub fn damp(rho: &Operator, t: f64, noise: &NoiseParams) -> Operator {
    if t == 0.0 || !noise.has_damping() {
        return rho.clone();
    }
    let e = (-t / noise.t2_electron).exp();
    let n = (-t / noise.t2_nuclear).exp();
    let keep = (-t / noise.t1_electron).exp();
    let mut m = rho.matrix().clone();
    for r in Level::ALL {
        for c in Level::ALL {
            let mut f = keep;
            if r.electron_excited() != c.electron_excited() {
                f *= e;
            }
            if r.nuclear_down() != c.nuclear_down() {
                f *= n;
            }
            m[(r.index(), c.index())] *= f;
        }
    }
    if keep < 1.0 {
        for l in Level::ALL {
            m[(l.index(), l.index())] += C64::new((1.0 - keep) * noise.thermal_populations[l.index()], 0.0);
        }
    }
    Operator::new(m).expect("square")
}

/// Per-level energy offsets (MHz) defining the frame of free evolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub offsets: [f64; 4],
}

impl Frame {
    /// Interaction frame: no free precession.
    pub fn rotating() -> Self {
        Self { offsets: [0.0; 4] }
    }

    /// Lab frame at the eigenenergies of levels 1–4.
    pub fn lab(levels: &EnergyLevels) -> Self {
        Self {
            offsets: levels.working_energies(),
        }
    }

    pub fn with_offsets(offsets: [f64; 4]) -> Self {
        Self { offsets }
    }
}

/// Free evolution for `duration` µs: phase `exp(-2πi(E_i - E_j)t)` on each
/// coherence followed by relaxation.
pub fn free_evolution(
    rho: &DensityMatrix,
    duration: f64,
    noise: &NoiseParams,
    frame: &Frame,
) -> Result<DensityMatrix> {
    if duration.is_nan() || duration < 0.0 {
        return Err(crate::error::Error::NegativeDuration(duration));
    }
    if rho.dim() != 4 {
        return Err(crate::error::Error::DimensionMismatch {
            expected: 4,
            actual: rho.dim(),
        });
    }
    Ok(DensityMatrix::from_operator_unchecked(free_evolve_operator(
        rho.operator(),
        duration,
        noise,
        &frame.offsets,
    )))
}

pub(crate) fn free_evolve_operator(
    rho: &Operator,
    duration: f64,
    noise: &NoiseParams,
    offsets: &[f64; 4],
) -> Operator {
    if duration == 0.0 {
        return rho.clone();
    }
    let mut m = rho.matrix().clone();
    if offsets.iter().any(|o| *o != 0.0) {
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    let phase = -2.0 * PI * (offsets[r] - offsets[c]) * duration;
                    m[(r, c)] *= C64::from_polar(1.0, phase);
                }
            }
        }
    }
    damp(&Operator::new(m).expect("square"), duration, noise)
}

/// One quasi-static detuning sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Member {
    pub weight: f64,
    pub delta_a: f64,
    pub delta_c: f64,
}

impl Member {
    pub const RESONANT: Member = Member {
        weight: 1.0,
        delta_a: 0.0,
        delta_c: 0.0,
    };

    /// Level energy offsets in working order.
    pub fn offsets(&self) -> [f64; 4] {
        [self.delta_a, self.delta_a + self.delta_c, 0.0, 0.0]
    }
}

/// Weighted detuning samples; weights sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub members: Vec<Member>,
}

impl Ensemble {
    pub fn resonant() -> Self {
        Self {
            members: vec![Member::RESONANT],
        }
    }

    /// Tensor Gauss–Hermite quadrature over the A and C linewidths.
    pub fn quadrature(noise: &NoiseParams) -> Self {
        let axis = |fwhm: f64| -> Vec<(f64, f64)> {
            if fwhm > 0.0 && noise.ensemble_size > 1 {
                let sigma = fwhm * FWHM_TO_SIGMA;
                gauss_hermite(noise.ensemble_size)
                    .into_iter()
                    .map(|(x, w)| (x * sigma, w))
                    .collect()
            } else {
                vec![(0.0, 1.0)]
            }
        };
        let a = axis(noise.linewidth_a);
        let c = axis(noise.linewidth_c);
        let mut members = Vec::with_capacity(a.len() * c.len());
        for &(da, wa) in &a {
            for &(dc, wc) in &c {
                members.push(Member {
                    weight: wa * wc,
                    delta_a: da,
                    delta_c: dc,
                });
            }
        }
        Self { members }
    }

    /// Seeded Monte Carlo samples of the same Gaussian distribution.
    pub fn monte_carlo(noise: &NoiseParams, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let na = Normal::new(0.0, noise.linewidth_a * FWHM_TO_SIGMA).expect("finite sigma");
        let nc = Normal::new(0.0, noise.linewidth_c * FWHM_TO_SIGMA).expect("finite sigma");
        let w = 1.0 / samples as f64;
        let members = (0..samples)
            .map(|_| Member {
                weight: w,
                delta_a: na.sample(&mut rng),
                delta_c: nc.sample(&mut rng),
            })
            .collect();
        Self { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Probabilists' Gauss–Hermite rule for a standard normal: nodes and weights
/// summing to one (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    if n <= 1 {
        return vec![(0.0, 1.0)];
    }
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut nodes: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], v0 * v0)
        })
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Exact antisymmetry keeps ensemble averages free of spurious odd moments.
    for k in 0..n / 2 {
        let x = 0.5 * (nodes[n - 1 - k].0 - nodes[k].0);
        let w = 0.5 * (nodes[n - 1 - k].1 + nodes[k].1);
        nodes[k] = (-x, w);
        nodes[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        nodes[n / 2].0 = 0.0;
    }
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    nodes.iter().map(|&(x, w)| (x, w / total)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    #[test]
    fn gauss_hermite_moments() {
        let nodes = gauss_hermite(21);
        let m = |p: i32| nodes.iter().map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-10);
        assert!((m(4) - 3.0).abs() < 1e-9);
        assert!((m(6) - 15.0).abs() < 1e-8);
    }

    #[test]
    fn ensemble_collapses_without_linewidth() {
        let e = Ensemble::quadrature(&NoiseParams::noiseless());
        assert_eq!(e.members, vec![Member::RESONANT]);
    }

    #[test]
    fn nuclear_coherence_decay_after_30us() {
        let noise = NoiseParams {
            t2_nuclear: 100.0,
            ..NoiseParams::noiseless()
        };
        let mut m = nalgebra::DMatrix::from_element(4, 4, C64::new(0.0, 0.0));
        m[(0, 0)] = ONE * 0.5;
        m[(1, 1)] = ONE * 0.5;
        m[(0, 1)] = ONE * 0.5;
        m[(1, 0)] = ONE * 0.5;
        let rho = DensityMatrix::new(Operator::new(m).unwrap()).unwrap();
        let out = free_evolution(&rho, 30.0, &noise, &Frame::rotating()).unwrap();
        let ratio = out.get(0, 1).norm() / 0.5;
        assert!((ratio - (-0.3f64).exp()).abs() < 1e-14);
        assert!((ratio - 0.741).abs() < 1e-3);
    }

    #[test]
    fn zero_duration_is_identity() {
        let rho = DensityMatrix::pure(&[ONE, ONE, ONE, ONE]).unwrap();
        let noise = NoiseParams {
            t1_electron: 10.0,
            t2_electron: 1.0,
            ..NoiseParams::noiseless()
        };
        let out = free_evolution(&rho, 0.0, &noise, &Frame::with_offsets([1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn infinite_t1_keeps_populations() {
        let rho = DensityMatrix::diagonal(&[0.7, 0.1, 0.15, 0.05]).unwrap();
        let noise = NoiseParams {
            t2_electron: 2.0,
            t2_nuclear: 3.0,
            ..NoiseParams::noiseless()
        };
        let out = free_evolution(&rho, 1e4, &noise, &Frame::rotating()).unwrap();
        assert_eq!(out.populations(), rho.populations());
    }

    #[test]
    fn negative_duration_rejected() {
        let rho = DensityMatrix::basis_state(Level::L3);
        assert!(free_evolution(&rho, -1.0, &NoiseParams::noiseless(), &Frame::rotating()).is_err());
    }

    #[test]
    fn t2_above_twice_t1_rejected() {
        let noise = NoiseParams {
            t1_electron: 1.0,
            t2_electron: 3.0,
            ..NoiseParams::noiseless()
        };
        assert!(noise.validate().is_err());
    }
}
