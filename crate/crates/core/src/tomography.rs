//! Density-matrix tomography of the four working levels.
//!
//! Populations come from the optical signal change produced by π pulses on each
//! transition. The signal is `S = b·(p₃ + p₄) + d·(p₁ + p₂)` with `b`, `d` the
//! expected bright and dark counts, so with `c = b − d`
//!
//! ```text
//! I_A = S(π_A ρ) − S(ρ)               = c (p₁ − p₃)
//! I_B = S(π_B ρ) − S(ρ)               = c (p₂ − p₄)
//! I_C = S(π_A π_C ρ) − S(π_A ρ)       = c (p₂ − p₁)
//! I_D = S(π_A π_D ρ) − S(π_A ρ)       = c (p₃ − p₄)
//! ```
//!
//! Intensities are divided by `|I_A|` of the reference state (level 3) and
//! solved for the populations together with `Σp = 1` by least squares.
//!
//! A coherence on a directly driven pair is read out by a π/2 pulse at phase 0
//! and at phase π/2 followed by a population measurement; the two population
//! differences determine its real and imaginary parts. The pairs (1,4) and (2,3)
//! are first moved onto (3,4) and (2,1) by a π pulse on A; the relaxation factor
//! accrued over that pulse is divided out.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::experiments::{crot, prepare_input_state, InputState, Setup};
use crate::linalg::{CMatrix, Operator, C64};
use crate::noise::{damp, NoiseParams};
use crate::pulse::{apply_pulse_with_noise, evolve, pulse_propagator, PulseSpec};
use crate::readout::{averaged_signal, ElectronState, ReadoutParams};
use crate::spin_model::{Level, Transition, TransitionTable};
use crate::state::DensityMatrix;

/// Conversions whose relaxation factor falls below this are rejected.
pub const MIN_CORRECTION: f64 = 0.1;
/// Eigenvalues below this trigger the positive-semidefinite projection.
pub const PSD_THRESHOLD: f64 = -1e-6;

/// Measurement apparatus: drive strengths, relaxation, readout and shot budget.
#[derive(Clone, Debug)]
pub struct Instrument {
    pub table: TransitionTable,
    pub mw_rabi: f64,
    pub rf_rabi: f64,
    /// Relaxation applied during conversion pulses, and during every pulse when
    /// `noisy_pulses` is set.
    pub noise: NoiseParams,
    pub noisy_pulses: bool,
    pub readout: ReadoutParams,
    /// Averaged cycles per signal; `None` uses exact expectation values.
    pub shots: Option<u64>,
    pub seed: u64,
}

impl Instrument {
    /// Ideal pulses and exact signals, with the setup's relaxation on conversions.
    pub fn from_setup(setup: &Setup) -> Self {
        Self {
            table: setup.table.clone(),
            mw_rabi: setup.pulses.mw_rabi,
            rf_rabi: setup.pulses.rf_rabi,
            noise: setup.noise.clone(),
            noisy_pulses: false,
            readout: setup.readout.clone(),
            shots: None,
            seed: 0,
        }
    }

    pub fn noiseless(setup: &Setup) -> Self {
        Self {
            noise: NoiseParams::noiseless(),
            ..Self::from_setup(setup)
        }
    }

    fn rotation(&self, t: Transition, angle: f64, phase: f64) -> Result<PulseSpec> {
        let rabi = match t.channel() {
            crate::spin_model::Channel::Mw => self.mw_rabi,
            crate::spin_model::Channel::Rf => self.rf_rabi,
        };
        Ok(PulseSpec::rotation(t, angle, rabi)?.with_phase(phase))
    }

    fn ideal(&self, pulse: &PulseSpec) -> Result<Operator> {
        pulse_propagator(&self.table, pulse)
    }

    fn apply(&self, rho: &DensityMatrix, pulse: &PulseSpec) -> Result<DensityMatrix> {
        if self.noisy_pulses {
            apply_pulse_with_noise(rho, pulse, &self.noise, &self.table)
        } else {
            evolve(rho, &self.ideal(pulse)?)
        }
    }

    /// Optical signal; exact or averaged over `shots` cycles.
    fn signal(&self, rho: &DensityMatrix, counter: &mut u64) -> f64 {
        *counter += 1;
        match self.shots {
            Some(n) => averaged_signal(rho, &self.readout, n, self.seed.wrapping_add(*counter)).mean_count,
            None => {
                let b = self.readout.expected_count(ElectronState::Bright);
                let d = self.readout.expected_count(ElectronState::Dark);
                let p = rho.bright_population();
                b * p + d * (1.0 - p)
            }
        }
    }

    fn intensities(&self, rho: &DensityMatrix, counter: &mut u64) -> Result<[f64; 4]> {
        let pi_a = self.rotation(Transition::A, PI, 0.0)?;
        let pi_b = self.rotation(Transition::B, PI, 0.0)?;
        let pi_c = self.rotation(Transition::C, PI, 0.0)?;
        let pi_d = self.rotation(Transition::D, PI, 0.0)?;
        let s0 = self.signal(rho, counter);
        let after_a = self.apply(rho, &pi_a)?;
        let sa = self.signal(&after_a, counter);
        let sb = self.signal(&self.apply(rho, &pi_b)?, counter);
        let sc = self.signal(&self.apply(&self.apply(rho, &pi_c)?, &pi_a)?, counter);
        let sd = self.signal(&self.apply(&self.apply(rho, &pi_d)?, &pi_a)?, counter);
        Ok([sa - s0, sb - s0, sc - sa, sd - sa])
    }
}

/// Populations from the four normalized intensities plus the trace condition.
pub fn populations_from_intensities(normalized: &[f64; 4]) -> [f64; 4] {
    let rows: [[f64; 4]; 5] = [
        [1.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, -1.0],
        [-1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, -1.0],
        [1.0, 1.0, 1.0, 1.0],
    ];
    let a = DMatrix::from_fn(5, 4, |r, c| rows[r][c]);
    let y = DVector::from_vec(vec![
        normalized[0],
        normalized[1],
        normalized[2],
        normalized[3],
        1.0,
    ]);
    let x = (a.transpose() * &a)
        .cholesky()
        .expect("full column rank")
        .solve(&(a.transpose() * y));
    [x[0], x[1], x[2], x[3]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalRecord {
    /// Raw intensities of A–D.
    pub intensities: [f64; 4],
    /// `|I_A|` of the reference state.
    pub reference: f64,
    pub normalized: [f64; 4],
    pub populations: [f64; 4],
}

/// Reference intensity `|I_A|` measured on level 3.
pub fn reference_intensity(instrument: &Instrument) -> Result<f64> {
    let mut counter = u64::MAX / 2;
    let i = instrument.intensities(&DensityMatrix::basis_state(Level::L3), &mut counter)?;
    Ok(i[0].abs())
}

fn diagonals_with(
    rho: &DensityMatrix,
    instrument: &Instrument,
    reference: f64,
    counter: &mut u64,
) -> Result<DiagonalRecord> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: rho.dim(),
        });
    }
    if !(reference > 1e-12) {
        return Err(Error::SingularNormalization(reference));
    }
    let intensities = instrument.intensities(rho, counter)?;
    let normalized = intensities.map(|i| i / reference);
    Ok(DiagonalRecord {
        intensities,
        reference,
        normalized,
        populations: populations_from_intensities(&normalized),
    })
}

/// Populations of `rho` from transition intensities.
pub fn measure_diagonals(rho: &DensityMatrix, instrument: &Instrument) -> Result<DiagonalRecord> {
    let reference = reference_intensity(instrument)?;
    diagonals_with(rho, instrument, reference, &mut 0)
}

/// Driven transition whose π/2 pulse reads out the coherence of `a` and `b`.
fn direct_transition(a: Level, b: Level) -> Option<Transition> {
    Transition::between(a, b)
}

/// Conversion applied before measuring a pair that no transition connects.
#[derive(Clone, Debug, PartialEq)]
pub struct Conversion {
    pub pulses: Vec<Transition>,
    /// Pair that carries the coherence after the conversion.
    pub measured_pair: (Level, Level),
    /// Relaxation factor divided out of the estimate.
    pub correction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceMeasurement {
    /// `(a, b)` with `a` before `b`; the estimate is `ρ_ab`.
    pub pair: (Level, Level),
    pub transition: Transition,
    /// Population difference `p_a − p_b` after π/2 at phase 0 and π/2.
    pub signals: [f64; 2],
    pub estimate: C64,
    pub conversion: Option<Conversion>,
}

fn ordered(a: Level, b: Level) -> (Level, Level) {
    if a.index() <= b.index() {
        (a, b)
    } else {
        (b, a)
    }
}

/// `ρ_ab` of an allowed pair from two π/2 projections.
fn direct_coherence(
    rho: &DensityMatrix,
    a: Level,
    b: Level,
    instrument: &Instrument,
    reference: f64,
    counter: &mut u64,
) -> Result<CoherenceMeasurement> {
    let t = direct_transition(a, b).ok_or(Error::NoConversionPath(a.number(), b.number()))?;
    let populations = diagonals_with(rho, instrument, reference, counter)?.populations;
    let (ia, ib) = (a.index(), b.index());
    let mut lhs = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    let mut signals = [0.0; 2];
    for (k, phase) in [0.0, PI / 2.0].into_iter().enumerate() {
        let pulse = instrument.rotation(t, PI / 2.0, phase)?;
        let rotated = instrument.apply(rho, &pulse)?;
        let p = diagonals_with(&rotated, instrument, reference, counter)?.populations;
        signals[k] = p[ia] - p[ib];
        // O = U† (P_a − P_b) U restricted to the driven pair
        let u = instrument.ideal(&pulse)?;
        let ud = u.adjoint();
        let o = |r: usize, c: usize| ud.get(r, ia) * u.get(ia, c) - ud.get(r, ib) * u.get(ib, c);
        let known: f64 = (0..4).map(|j| o(j, j).re * populations[j]).sum();
        let oba = o(ib, ia);
        // Tr[Oρ] off-diagonal part: 2·Re(O_ba ρ_ab) = 2(Re O_ba·x − Im O_ba·y)
        lhs[k] = [2.0 * oba.re, -2.0 * oba.im];
        rhs[k] = signals[k] - known;
    }
    let det = lhs[0][0] * lhs[1][1] - lhs[0][1] * lhs[1][0];
    if det.abs() < 1e-12 {
        return Err(Error::SingularNormalization(det));
    }
    let x = (rhs[0] * lhs[1][1] - rhs[1] * lhs[0][1]) / det;
    let y = (lhs[0][0] * rhs[1] - lhs[1][0] * rhs[0]) / det;
    Ok(CoherenceMeasurement {
        pair: (a, b),
        transition: t,
        signals,
        estimate: C64::new(x, y),
        conversion: None,
    })
}

/// Moves the coherence of a pair without a driven transition onto one that has
/// one, measures it there and undoes the conversion phase and relaxation.
fn converted_coherence(
    rho: &DensityMatrix,
    a: Level,
    b: Level,
    instrument: &Instrument,
    reference: f64,
    counter: &mut u64,
) -> Result<CoherenceMeasurement> {
    let pulse = instrument.rotation(Transition::A, PI, 0.0)?;
    let u = instrument.ideal(&pulse)?;
    let image = |l: Level| {
        let c = l.index();
        (0..4)
            .max_by(|x, y| u.get(*x, c).norm().total_cmp(&u.get(*y, c).norm()))
            .map(|r| Level::ALL[r])
            .expect("four levels")
    };
    let (a2, b2) = (image(a), image(b));
    if direct_transition(a2, b2).is_none() {
        return Err(Error::NoConversionPath(a.number(), b.number()));
    }
    let correction = instrument.noise.coherence_factor(a2, b2, pulse.duration);
    if correction < MIN_CORRECTION {
        return Err(Error::UnreliableCorrection(correction));
    }
    let converted = if instrument.noisy_pulses {
        apply_pulse_with_noise(rho, &pulse, &instrument.noise, &instrument.table)?
    } else {
        let moved = rho.operator().conjugate_by(&u);
        DensityMatrix::new(damp(&moved, pulse.duration, &instrument.noise))?
    };
    let mut m = direct_coherence(&converted, a2, b2, instrument, reference, counter)?;
    // ρ'_{a2 b2} = U_{a2 a} ρ_ab conj(U_{b2 b})
    let phase = u.get(a2.index(), a.index()) * u.get(b2.index(), b.index()).conj();
    m.estimate = m.estimate / phase / correction;
    m.pair = (a, b);
    m.conversion = Some(Conversion {
        pulses: vec![Transition::A],
        measured_pair: (a2, b2),
        correction,
    });
    Ok(m)
}

/// Estimate of `ρ_ab` for one level pair.
pub fn measure_offdiagonal(
    rho: &DensityMatrix,
    pair: (Level, Level),
    instrument: &Instrument,
) -> Result<CoherenceMeasurement> {
    let (a, b) = ordered(pair.0, pair.1);
    if a == b {
        return Err(Error::NoConversionPath(a.number(), b.number()));
    }
    let reference = reference_intensity(instrument)?;
    let mut counter = 0;
    if direct_transition(a, b).is_some() {
        direct_coherence(rho, a, b, instrument, reference, &mut counter)
    } else {
        converted_coherence(rho, a, b, instrument, reference, &mut counter)
    }
}

/// Estimate of `ρ_ab` for a pair without a driven transition.
pub fn convert_multi_quantum(
    rho: &DensityMatrix,
    pair: (Level, Level),
    instrument: &Instrument,
) -> Result<CoherenceMeasurement> {
    let (a, b) = ordered(pair.0, pair.1);
    let reference = reference_intensity(instrument)?;
    converted_coherence(rho, a, b, instrument, reference, &mut 0)
}

/// The six level pairs in row-major upper-triangle order.
pub fn level_pairs() -> [(Level, Level); 6] {
    use Level::*;
    [(L1, L2), (L1, L3), (L1, L4), (L2, L3), (L2, L4), (L3, L4)]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyRecord {
    pub diagonals: DiagonalRecord,
    /// One entry per pair of [`level_pairs`]; `None` marks a pair not measured.
    pub coherences: Vec<Option<CoherenceMeasurement>>,
}

/// Full measurement record of `rho`.
pub fn measure(rho: &DensityMatrix, instrument: &Instrument) -> Result<TomographyRecord> {
    let reference = reference_intensity(instrument)?;
    let mut counter = 0;
    let diagonals = diagonals_with(rho, instrument, reference, &mut counter)?;
    let mut coherences = Vec::with_capacity(6);
    for (a, b) in level_pairs() {
        let m = if direct_transition(a, b).is_some() {
            direct_coherence(rho, a, b, instrument, reference, &mut counter)?
        } else {
            converted_coherence(rho, a, b, instrument, reference, &mut counter)?
        };
        coherences.push(Some(m));
    }
    Ok(TomographyRecord {
        diagonals,
        coherences,
    })
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub state: DensityMatrix,
    /// Trace of the assembled matrix before renormalization.
    pub raw_trace: f64,
    /// Frobenius distance moved by the positivity projection (0 if not applied).
    pub projection_distance: f64,
}

/// Eigenvalues projected onto the probability simplex.
fn simplex_projection(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cumulative += v;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    values.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Hermitian matrix assembled from the record, renormalized to unit trace and
/// projected onto the density matrices if an eigenvalue is below −1e-6.
pub fn reconstruct(record: &TomographyRecord) -> Result<Reconstruction> {
    if record.coherences.len() != 6 {
        return Err(Error::IncompleteRecord(format!(
            "expected 6 coherence entries, got {}",
            record.coherences.len()
        )));
    }
    let mut m = CMatrix::zeros(4, 4);
    for (k, p) in record.diagonals.populations.iter().enumerate() {
        m[(k, k)] = C64::new(*p, 0.0);
    }
    for ((a, b), entry) in level_pairs().into_iter().zip(&record.coherences) {
        let c = entry.as_ref().ok_or_else(|| {
            Error::IncompleteRecord(format!("pair ({}, {}) not measured", a.number(), b.number()))
        })?;
        m[(a.index(), b.index())] = c.estimate;
        m[(b.index(), a.index())] = c.estimate.conj();
    }
    let raw_trace = m.trace().re;
    if !(raw_trace.abs() > 1e-12) {
        return Err(Error::SingularNormalization(raw_trace));
    }
    let op = Operator::new(m.map(|z| z / raw_trace))?.hermitian_part();
    let (values, vectors) = op.eigh();
    let mut projection_distance = 0.0;
    let op = if values[0] < PSD_THRESHOLD {
        let clipped = simplex_projection(&values);
        let diag = Operator::from_real_diagonal(&clipped);
        let projected = diag.conjugate_by(&Operator::new(vectors)?);
        projection_distance = projected.sub(&op).frobenius();
        projected.hermitian_part()
    } else {
        op
    };
    Ok(Reconstruction {
        state: DensityMatrix::from_operator_unchecked(op),
        raw_trace,
        projection_distance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fidelity {
    /// `Re Tr[ρ_P ρ_I]` clamped to `[0, 1]`.
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// `Tr[ρ_P ρ_I]`, real part, clamped to `[0, 1]`.
pub fn fidelity(rho_p: &DensityMatrix, rho_i: &DensityMatrix) -> Result<Fidelity> {
    if rho_p.dim() != rho_i.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho_i.dim(),
            actual: rho_p.dim(),
        });
    }
    if (rho_i.purity() - 1.0).abs() > 1e-9 {
        warn!("ideal state is mixed (purity {:.6}); fidelity cannot reach 1", rho_i.purity());
    }
    let raw = rho_p.operator().mul(rho_i.operator()).trace().re;
    let value = raw.clamp(0.0, 1.0);
    Ok(Fidelity {
        value,
        raw,
        clamped: value != raw,
    })
}

#[derive(Clone, Debug)]
pub struct FidelityRow {
    pub input: InputState,
    pub reconstructed: DensityMatrix,
    pub ideal: DensityMatrix,
    pub fidelity: Fidelity,
    pub projection_distance: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FidelityReport {
    pub rows: Vec<FidelityRow>,
}

impl FidelityReport {
    pub fn fidelities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fidelity.value).collect()
    }
}

/// Prepare → CROT → tomography → fidelity for one input state.
pub fn crot_tomography(setup: &Setup, input: InputState, instrument: &Instrument) -> Result<FidelityRow> {
    let rho = crot(setup, &prepare_input_state(setup, input)?)?;
    let rec = reconstruct(&measure(&rho, instrument)?)?;
    let ideal = DensityMatrix::basis_state(input.crot_target());
    let fidelity = fidelity(&rec.state, &ideal)?;
    Ok(FidelityRow {
        input,
        reconstructed: rec.state,
        ideal,
        fidelity,
        projection_distance: rec.projection_distance,
    })
}

/// Fidelity table over the given inputs.
pub fn fidelity_table(
    setup: &Setup,
    inputs: &[InputState],
    instrument: &Instrument,
) -> Result<FidelityReport> {
    let rows = inputs
        .iter()
        .map(|i| crot_tomography(setup, *i, instrument))
        .collect::<Result<Vec<_>>>()?;
    Ok(FidelityReport { rows })
}
