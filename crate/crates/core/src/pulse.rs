//! Selective pulses in the rotating frame and ensemble propagation.
//!
//! All propagators act on the working subspace (levels 1–4, see
//! [`crate::spin_model`]) in the interaction frame of the unperturbed levels. A
//! pulse on transition `from → to` with Rabi frequency `Ω`, phase `φ` and carrier
//! detuning `Δ` is generated by
//!
//! ```text
//! H = diag(offsets) − Δ |to⟩⟨to| + (Ω/2)(e^{iφ} |to⟩⟨from| + h.c.)
//! ```
//!
//! and `U = exp(−2πi Δ t |to⟩⟨to|) · exp(−2πi H t)`, so a resonant pulse of length
//! `t` rotates the pair by `2πΩt` about `cos φ x + sin φ y`. Spectator levels only
//! pick up their quasi-static offsets.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Operator, C64};
use crate::noise::{damp, free_evolve_operator, Ensemble, Member, NoiseParams};
use crate::spin_model::{Channel, Level, Transition, TransitionTable};
use crate::state::DensityMatrix;

pub const UNITARY_TOL: f64 = 1e-10;
/// Largest carrier offset (MHz) at which an explicit frequency still binds to a transition.
pub const CARRIER_TOLERANCE: f64 = 5.0;
/// Trotter step as a fraction of the shortest relaxation time.
pub const TROTTER_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PulseTarget {
    Transition(Transition),
    /// Explicit carrier frequency, MHz.
    Frequency(f64),
}

/// One square drive pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub channel: Channel,
    pub target: PulseTarget,
    /// MHz.
    pub rabi_frequency: f64,
    /// µs.
    pub duration: f64,
    /// Radians.
    pub phase: f64,
    /// Carrier offset from resonance, MHz.
    pub detuning: f64,
}

impl PulseSpec {
    /// Resonant pulse on `transition` with the given rotation angle.
    pub fn rotation(transition: Transition, angle: f64, rabi_frequency: f64) -> Result<Self> {
        if !(rabi_frequency > 0.0 && rabi_frequency.is_finite()) {
            return Err(Error::UnrealizablePulse(format!(
                "angle {angle} needs a positive Rabi frequency, got {rabi_frequency}"
            )));
        }
        Ok(Self {
            channel: transition.channel(),
            target: PulseTarget::Transition(transition),
            rabi_frequency,
            duration: angle / (2.0 * PI * rabi_frequency),
            phase: 0.0,
            detuning: 0.0,
        })
    }

    pub fn pi(transition: Transition, rabi_frequency: f64) -> Result<Self> {
        Self::rotation(transition, PI, rabi_frequency)
    }

    pub fn half_pi(transition: Transition, rabi_frequency: f64) -> Result<Self> {
        Self::rotation(transition, PI / 2.0, rabi_frequency)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    /// Nominal rotation angle `2π·Ω·t`.
    pub fn rotation_angle(&self) -> f64 {
        2.0 * PI * self.rabi_frequency * self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration.is_nan() || self.duration < 0.0 {
            return Err(Error::NegativeDuration(self.duration));
        }
        if self.rabi_frequency.is_nan() || self.rabi_frequency < 0.0 {
            return Err(Error::InvalidParameter {
                name: "rabi_frequency",
                reason: format!("must be >= 0, got {}", self.rabi_frequency),
            });
        }
        if !self.phase.is_finite() || !self.detuning.is_finite() {
            return Err(Error::InvalidParameter {
                name: "phase/detuning",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

static RWA_WARNED: [AtomicBool; 4] = [const { AtomicBool::new(false) }; 4];

/// Binds a pulse to a transition and its total carrier detuning.
pub fn resolve(table: &TransitionTable, pulse: &PulseSpec) -> Result<(Transition, f64)> {
    let (transition, offset) = match pulse.target {
        PulseTarget::Transition(t) => (t, 0.0),
        PulseTarget::Frequency(f) => {
            let (t, d) = table.nearest(f);
            if d.abs() > CARRIER_TOLERANCE {
                return Err(Error::UnresolvedCarrier {
                    frequency: f,
                    tolerance: CARRIER_TOLERANCE,
                });
            }
            (t, d)
        }
    };
    if transition.channel() != pulse.channel {
        return Err(Error::ChannelMismatch {
            channel: pulse.channel.name(),
            transition: transition.name(),
        });
    }
    let carrier = table.frequency(transition);
    if pulse.rabi_frequency > 0.1 * carrier && !RWA_WARNED[transition as usize].swap(true, Ordering::Relaxed) {
        warn!(
            "rotating-wave approximation questionable: Rabi {} MHz vs carrier {} MHz on {}",
            pulse.rabi_frequency, carrier, transition
        );
    }
    Ok((transition, offset + pulse.detuning))
}

fn drive_generator(
    transition: Transition,
    pulse: &PulseSpec,
    detuning: f64,
    offsets: &[f64; 4],
) -> Operator {
    let (from, to) = transition.levels();
    let mut h = CMatrix::zeros(4, 4);
    for (k, o) in offsets.iter().enumerate() {
        h[(k, k)] = C64::new(*o, 0.0);
    }
    h[(to.index(), to.index())] -= C64::new(detuning, 0.0);
    let coupling = C64::from_polar(0.5 * pulse.rabi_frequency, pulse.phase);
    h[(to.index(), from.index())] = coupling;
    h[(from.index(), to.index())] = coupling.conj();
    Operator::new(h).expect("square")
}

fn propagator_for(
    transition: Transition,
    pulse: &PulseSpec,
    detuning: f64,
    offsets: &[f64; 4],
    duration: f64,
) -> Operator {
    if duration == 0.0 {
        return Operator::identity(4);
    }
    let u = drive_generator(transition, pulse, detuning, offsets).propagator(duration);
    if detuning == 0.0 {
        return u;
    }
    let to = transition.levels().1.index();
    let mut frame = Operator::identity(4).into_matrix();
    frame[(to, to)] = C64::from_polar(1.0, -2.0 * PI * detuning * duration);
    Operator::new(frame).expect("square").mul(&u)
}

/// Unitary of a noiseless pulse on the working subspace.
pub fn pulse_propagator(table: &TransitionTable, pulse: &PulseSpec) -> Result<Operator> {
    pulse_propagator_with_offsets(table, pulse, &[0.0; 4])
}

/// Unitary of a pulse with quasi-static level offsets (MHz).
pub fn pulse_propagator_with_offsets(
    table: &TransitionTable,
    pulse: &PulseSpec,
    offsets: &[f64; 4],
) -> Result<Operator> {
    pulse.validate()?;
    let (transition, detuning) = resolve(table, pulse)?;
    let u = propagator_for(transition, pulse, detuning, offsets, pulse.duration);
    u.ensure_unitary(UNITARY_TOL)?;
    Ok(u)
}

/// `U ρ U†`.
pub fn evolve(rho: &DensityMatrix, u: &Operator) -> Result<DensityMatrix> {
    if u.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            actual: u.dim(),
        });
    }
    u.ensure_unitary(UNITARY_TOL)?;
    Ok(DensityMatrix::from_operator_unchecked(
        rho.operator().conjugate_by(u),
    ))
}

/// Number of interleaved unitary/relaxation steps for a pulse of `duration`.
fn trotter_steps(duration: f64, noise: &NoiseParams) -> usize {
    if duration <= 0.0 || !noise.has_damping() {
        return 1;
    }
    let limit = TROTTER_FRACTION * noise.min_t2().min(noise.t1_electron);
    (duration / limit).ceil().max(1.0) as usize
}

fn pulse_member(
    rho: &Operator,
    transition: Transition,
    pulse: &PulseSpec,
    detuning: f64,
    member: &Member,
    noise: &NoiseParams,
) -> Operator {
    let offsets = member.offsets();
    let steps = trotter_steps(pulse.duration, noise);
    if steps == 1 {
        let u = propagator_for(transition, pulse, detuning, &offsets, pulse.duration);
        return damp(&rho.conjugate_by(&u), pulse.duration, noise);
    }
    let dt = pulse.duration / steps as f64;
    // The carrier frame phase is time-dependent, so steps are taken in the drive
    // frame and mapped back once at the end.
    let u_drive = drive_generator(transition, pulse, detuning, &offsets).propagator(dt);
    let mut state = rho.clone();
    for _ in 0..steps {
        state = damp(&state.conjugate_by(&u_drive), dt, noise);
    }
    if detuning != 0.0 {
        let to = transition.levels().1.index();
        let mut frame = Operator::identity(4).into_matrix();
        frame[(to, to)] = C64::from_polar(1.0, -2.0 * PI * detuning * pulse.duration);
        state = state.conjugate_by(&Operator::new(frame).expect("square"));
    }
    state
}

/// Weighted collection of states, one per quasi-static detuning sample.
///
/// Members are propagated independently (in parallel) and averaged in a fixed
/// order, so results do not depend on thread scheduling.
#[derive(Clone, Debug)]
pub struct EnsembleState {
    members: Vec<(Member, Operator)>,
}

impl EnsembleState {
    pub fn new(rho: &DensityMatrix, ensemble: &Ensemble) -> Result<Self> {
        if rho.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                actual: rho.dim(),
            });
        }
        Ok(Self {
            members: ensemble
                .members
                .iter()
                .map(|m| (*m, rho.operator().clone()))
                .collect(),
        })
    }

    pub fn from_noise(rho: &DensityMatrix, noise: &NoiseParams) -> Result<Self> {
        Self::new(rho, &Ensemble::quadrature(noise))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Applies a pulse to every member, interleaving relaxation during the pulse.
    pub fn apply_pulse(
        &mut self,
        table: &TransitionTable,
        pulse: &PulseSpec,
        noise: &NoiseParams,
    ) -> Result<()> {
        pulse.validate()?;
        let (transition, detuning) = resolve(table, pulse)?;
        self.members.par_iter_mut().for_each(|(m, rho)| {
            *rho = pulse_member(rho, transition, pulse, detuning, m, noise);
        });
        Ok(())
    }

    /// Free precession at each member's offsets plus relaxation.
    pub fn free(&mut self, duration: f64, noise: &NoiseParams) -> Result<()> {
        if duration.is_nan() || duration < 0.0 {
            return Err(Error::NegativeDuration(duration));
        }
        self.members.par_iter_mut().for_each(|(m, rho)| {
            *rho = free_evolve_operator(rho, duration, noise, &m.offsets());
        });
        Ok(())
    }

    /// Same unitary on every member.
    pub fn apply_unitary(&mut self, u: &Operator) -> Result<()> {
        u.ensure_unitary(UNITARY_TOL)?;
        for (_, rho) in &mut self.members {
            *rho = rho.conjugate_by(u);
        }
        Ok(())
    }

    /// Weighted average in member order.
    pub fn average(&self) -> DensityMatrix {
        let mut acc = CMatrix::zeros(4, 4);
        let mut total = 0.0;
        for (m, rho) in &self.members {
            acc += rho.matrix().map(|z| z * m.weight);
            total += m.weight;
        }
        let acc = acc.map(|z| z / total);
        DensityMatrix::from_operator_unchecked(Operator::new(acc).expect("square").hermitian_part())
    }
}

/// Pulse averaged over the quasi-static ensemble with relaxation during the pulse.
pub fn apply_pulse_with_noise(
    rho: &DensityMatrix,
    pulse: &PulseSpec,
    noise: &NoiseParams,
    table: &TransitionTable,
) -> Result<DensityMatrix> {
    apply_pulse_with_ensemble(rho, pulse, noise, table, &Ensemble::quadrature(noise))
}

/// As [`apply_pulse_with_noise`] with an explicit ensemble (e.g. Monte Carlo).
pub fn apply_pulse_with_ensemble(
    rho: &DensityMatrix,
    pulse: &PulseSpec,
    noise: &NoiseParams,
    table: &TransitionTable,
    ensemble: &Ensemble,
) -> Result<DensityMatrix> {
    let mut state = EnsembleState::new(rho, ensemble)?;
    state.apply_pulse(table, pulse, noise)?;
    Ok(state.average())
}

/// Population trace of a driven transition.
#[derive(Clone, Debug, PartialEq)]
pub struct RabiTrace {
    pub transition: Transition,
    /// Level whose population is recorded.
    pub observed: Level,
    pub rabi_frequency: f64,
    /// µs.
    pub durations: Vec<f64>,
    pub populations: Vec<f64>,
    pub fit: crate::fit::DampedCosineFit,
}

impl RabiTrace {
    pub fn fitted_frequency(&self) -> f64 {
        self.fit.frequency
    }

    pub fn fitted_decay_time(&self) -> f64 {
        self.fit.decay_time()
    }
}

/// Population of the `to` level of `transition` after driving `rho0` for each duration.
pub fn rabi_trace(
    rho0: &DensityMatrix,
    transition: Transition,
    rabi_frequency: f64,
    durations: &[f64],
    noise: &NoiseParams,
    table: &TransitionTable,
) -> Result<RabiTrace> {
    if durations.len() < crate::fit::MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {} samples, got {}",
            crate::fit::MIN_SAMPLES,
            durations.len()
        )));
    }
    if durations.iter().any(|d| d.is_nan() || *d < 0.0) {
        return Err(Error::NegativeDuration(
            durations.iter().copied().fold(f64::INFINITY, f64::min),
        ));
    }
    if durations.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Fit("durations must be ascending".into()));
    }
    let observed = transition.levels().1;
    let base = PulseSpec {
        channel: transition.channel(),
        target: PulseTarget::Transition(transition),
        rabi_frequency,
        duration: 0.0,
        phase: 0.0,
        detuning: 0.0,
    };
    let populations = durations
        .iter()
        .map(|&d| {
            let rho = apply_pulse_with_noise(rho0, &base.with_duration(d), noise, table)?;
            Ok(rho.population(observed).clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let fit = crate::fit::fit_damped_cosine(durations, &populations)?;
    Ok(RabiTrace {
        transition,
        observed,
        rabi_frequency,
        durations: durations.to_vec(),
        populations,
        fit,
    })
}
