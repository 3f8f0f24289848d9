//! Canned protocols: initialization, input-state preparation, Rabi nutation,
//! nuclear Hahn echo, the CROT gate, gate endurance and `.seq` program execution.
//!
//! All protocols run in the rotating frame of the working levels. Pulses use
//! phase 0 (rotation about x) unless stated, so a π pulse acts as `−iσx` on its
//! two levels.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::DampedCosineFit;
use crate::linalg::{Operator, C64};
use crate::noise::NoiseParams;
use crate::pulse::{pulse_propagator, rabi_trace, EnsembleState, PulseSpec};
use crate::readout::{
    averaged_signal_with_probability, predicted_fidelity, shot_with_probability, AveragedSignal,
    ElectronState, ReadoutParams, ShotResult,
};
use crate::sequence::{CheckedProgram, CheckedStep, RabiDefaults};
use crate::spin_model::{
    build_hamiltonian, eigenlevels, transition_table, Channel, EnergyLevels, Level, MsBranch,
    SpinSystemParams, Transition, TransitionTable,
};
use crate::state::DensityMatrix;

/// Default drive strengths, MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSettings {
    pub mw_rabi: f64,
    pub rf_rabi: f64,
}

impl Default for PulseSettings {
    fn default() -> Self {
        Self {
            mw_rabi: 10.0,
            rf_rabi: 5.0,
        }
    }
}

impl PulseSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mw_rabi", self.mw_rabi), ("rf_rabi", self.rf_rabi)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn rabi(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Mw => self.mw_rabi,
            Channel::Rf => self.rf_rabi,
        }
    }

    pub fn defaults(&self) -> RabiDefaults {
        RabiDefaults {
            mw: self.mw_rabi,
            rf: self.rf_rabi,
        }
    }
}

/// How input state 4 is prepared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input4Path {
    /// Post-selected directly in level 4 by the initialization readout; no pulses.
    #[default]
    Herald,
    /// π on A, π on C, π on B from the initialized state.
    Pulses,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitParams {
    /// Population left outside level 3, spread evenly over levels 1, 2 and 4.
    pub residual: f64,
    /// Laser pulse length, µs.
    pub duration: f64,
    /// Probability that one laser pulse leaves the nucleus in level 3 rather than 4.
    pub nuclear_polarization: f64,
    pub max_attempts: u32,
    pub input4: Input4Path,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            residual: 0.01,
            duration: 3.0,
            nuclear_polarization: 0.5,
            max_attempts: 20,
            input4: Input4Path::Herald,
        }
    }
}

impl InitParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.residual) {
            return Err(invalid("residual", format!("must lie in [0, 1], got {}", self.residual)));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(invalid("duration", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.nuclear_polarization) {
            return Err(invalid("nuclear_polarization", "must lie in [0, 1]"));
        }
        if self.max_attempts == 0 {
            return Err(invalid("max_attempts", "must be >= 1"));
        }
        Ok(())
    }
}

/// Everything a protocol needs: level scheme, noise, readout and drive settings.
#[derive(Clone, Debug)]
pub struct Setup {
    pub params: SpinSystemParams,
    pub levels: EnergyLevels,
    pub table: TransitionTable,
    pub noise: NoiseParams,
    pub readout: ReadoutParams,
    pub pulses: PulseSettings,
    pub init: InitParams,
}

impl Setup {
    pub fn new(
        params: SpinSystemParams,
        branch: MsBranch,
        noise: NoiseParams,
        readout: ReadoutParams,
        pulses: PulseSettings,
        init: InitParams,
    ) -> Result<Self> {
        noise.validate()?;
        readout.validate()?;
        pulses.validate()?;
        init.validate()?;
        let levels = eigenlevels(&build_hamiltonian(&params)?, branch)?;
        let table = transition_table(&levels)?;
        Ok(Self {
            params,
            levels,
            table,
            noise,
            readout,
            pulses,
            init,
        })
    }

    pub fn with_noise(&self, noise: NoiseParams) -> Result<Self> {
        noise.validate()?;
        Ok(Self {
            noise,
            ..self.clone()
        })
    }

    pub fn noiseless(&self) -> Self {
        Self {
            noise: NoiseParams::noiseless(),
            ..self.clone()
        }
    }

    /// Rotation by `angle` on `transition` at the configured drive strength.
    pub fn rotation(&self, transition: Transition, angle: f64) -> Result<PulseSpec> {
        PulseSpec::rotation(transition, angle, self.pulses.rabi(transition.channel()))
    }

    pub fn pi(&self, transition: Transition) -> Result<PulseSpec> {
        self.rotation(transition, PI)
    }

    pub fn half_pi(&self, transition: Transition) -> Result<PulseSpec> {
        self.rotation(transition, PI / 2.0)
    }

    /// Applies pulses in order over one quasi-static ensemble, so the same
    /// detuning sample persists through the whole sequence.
    pub fn apply(&self, rho: &DensityMatrix, pulses: &[PulseSpec]) -> Result<DensityMatrix> {
        let mut state = EnsembleState::from_noise(rho, &self.noise)?;
        for p in pulses {
            state.apply_pulse(&self.table, p, &self.noise)?;
        }
        Ok(state.average())
    }

    /// Noiseless product of the pulse propagators (first pulse rightmost).
    pub fn ideal_unitary(&self, pulses: &[PulseSpec]) -> Result<Operator> {
        let mut u = Operator::identity(4);
        for p in pulses {
            u = pulse_propagator(&self.table, p)?.mul(&u);
        }
        Ok(u)
    }
}

/// Level-3 state with the residual spread evenly over levels 1, 2 and 4.
pub fn initialize(init: &InitParams) -> Result<DensityMatrix> {
    init.validate()?;
    let e = init.residual / 3.0;
    DensityMatrix::diagonal(&[e, e, 1.0 - init.residual, e])
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitOutcome {
    pub attempts: u32,
    pub success: bool,
    /// Nuclear level actually reached by the last laser pulse.
    pub true_level: Level,
    pub herald: ShotResult,
}

/// Probability that one attempt is accepted: the herald maps level 4 to a dark
/// electron state and accepts a bright decision.
pub fn herald_acceptance_probability(init: &InitParams, readout: &ReadoutParams) -> f64 {
    let cal = predicted_fidelity(readout, readout.threshold);
    let q = init.nuclear_polarization;
    q * cal.bright_accuracy + (1.0 - q) * (1.0 - cal.dark_accuracy)
}

/// Repeats initialization until the herald readout reports level 3, at most
/// `init.max_attempts` times.
pub fn heralded_initialize(
    init: &InitParams,
    readout: &ReadoutParams,
    seed: u64,
) -> Result<InitOutcome> {
    init.validate()?;
    readout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for attempt in 1..=init.max_attempts {
        let in_three = rng.random::<f64>() < init.nuclear_polarization;
        let shot = shot_with_probability(
            if in_three { 1.0 } else { 0.0 },
            readout,
            rng.random::<u64>(),
            0,
        );
        let level = if in_three { Level::L3 } else { Level::L4 };
        if shot.decision == ElectronState::Bright {
            return Ok(InitOutcome {
                attempts: attempt,
                success: true,
                true_level: level,
                herald: shot,
            });
        }
        last = Some((level, shot));
    }
    let (true_level, herald) = last.expect("at least one attempt");
    Ok(InitOutcome {
        attempts: init.max_attempts,
        success: false,
        true_level,
        herald,
    })
}

/// One of the four CROT input states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InputState {
    One,
    Two,
    Three,
    Four,
}

impl InputState {
    pub const ALL: [InputState; 4] = [
        InputState::One,
        InputState::Two,
        InputState::Three,
        InputState::Four,
    ];

    pub fn from_number(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            4 => Ok(Self::Four),
            _ => Err(invalid("input", format!("must be 1..4, got {n}"))),
        }
    }

    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn level(self) -> Level {
        Level::ALL[self as usize]
    }

    /// Level reached by an ideal CROT.
    pub fn crot_target(self) -> Level {
        match self {
            Self::One => Level::L2,
            Self::Two => Level::L1,
            Self::Three => Level::L3,
            Self::Four => Level::L4,
        }
    }
}

/// Pulses taking the initialized state to `input`.
pub fn preparation_path(input: InputState, path4: Input4Path) -> Vec<Transition> {
    match input {
        InputState::One => vec![Transition::A],
        InputState::Two => vec![Transition::A, Transition::C],
        InputState::Three => vec![],
        InputState::Four => match path4 {
            Input4Path::Herald => vec![],
            Input4Path::Pulses => vec![Transition::A, Transition::C, Transition::B],
        },
    }
}

/// Initialized state taken to input level `input` with noisy π pulses.
pub fn prepare_input_state(setup: &Setup, input: InputState) -> Result<DensityMatrix> {
    if input == InputState::Four && setup.init.input4 == Input4Path::Herald {
        return Ok(DensityMatrix::basis_state(Level::L4));
    }
    let rho = initialize(&setup.init)?;
    let pulses = preparation_path(input, setup.init.input4)
        .into_iter()
        .map(|t| setup.pi(t))
        .collect::<Result<Vec<_>>>()?;
    setup.apply(&rho, &pulses)
}

/// The CROT pulse: π on C at phase 0.
pub fn crot_pulse(setup: &Setup) -> Result<PulseSpec> {
    setup.pi(Transition::C)
}

pub fn crot(setup: &Setup, rho: &DensityMatrix) -> Result<DensityMatrix> {
    setup.apply(rho, &[crot_pulse(setup)?])
}

/// Noiseless CROT on the working levels.
pub fn crot_unitary(setup: &Setup) -> Result<Operator> {
    pulse_propagator(&setup.table, &crot_pulse(setup)?)
}

/// Tabular trace with named columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    ElectronRabi,
    NuclearRabi,
    HahnEcho,
    Crot,
    Endurance,
    Sequence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::ElectronRabi => "electron_rabi",
            Self::NuclearRabi => "nuclear_rabi",
            Self::HahnEcho => "hahn_echo",
            Self::Crot => "crot",
            Self::Endurance => "endurance",
            Self::Sequence => "sequence",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    /// Scalar inputs and derived quantities.
    pub values: BTreeMap<String, f64>,
    pub trace: Trace,
    pub state: Option<DensityMatrix>,
    pub fit: Option<DampedCosineFit>,
    pub seed: Option<u64>,
}

impl ExperimentResult {
    fn new(kind: ExperimentKind, trace: Trace) -> Self {
        Self {
            kind,
            values: BTreeMap::new(),
            trace,
            state: None,
            fit: None,
            seed: None,
        }
    }

    fn set(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

/// Envelope decay time (µs) of resonant nutation on `transition` predicted by
/// the relaxation generator.
pub fn nutation_decay_time(noise: &NoiseParams, transition: Transition) -> f64 {
    let (a, b) = transition.levels();
    let coherence_rate = -noise.coherence_factor(a, b, 1.0).ln();
    let population_rate = 1.0 / noise.t1_electron;
    let rate = 0.5 * (coherence_rate + population_rate);
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

fn rabi_experiment(
    setup: &Setup,
    kind: ExperimentKind,
    transition: Transition,
    start: Level,
    durations: &[f64],
) -> Result<ExperimentResult> {
    let rabi = setup.pulses.rabi(transition.channel());
    let rho0 = DensityMatrix::basis_state(start);
    let tr = rabi_trace(&rho0, transition, rabi, durations, &setup.noise, &setup.table)?;
    let mut trace = Trace::new(&["duration_us", "population", "fit"]);
    for (t, p) in tr.durations.iter().zip(&tr.populations) {
        trace.rows.push(vec![*t, *p, tr.fit.eval(*t)]);
    }
    let mut out = ExperimentResult::new(kind, trace);
    let tau = tr.fit.decay_time();
    out.set("rabi_frequency", rabi);
    out.set("fitted_frequency", tr.fit.frequency);
    out.set("fitted_decay_time", tau);
    out.set("generator_decay_time", nutation_decay_time(&setup.noise, transition));
    // resonant nutation decays at half the coherence rate when T1 is long
    out.set("inferred_t2", 0.5 * tau);
    out.fit = Some(tr.fit);
    Ok(out)
}

/// Nutation on A starting from level 3.
pub fn electron_rabi(setup: &Setup, durations: &[f64]) -> Result<ExperimentResult> {
    rabi_experiment(setup, ExperimentKind::ElectronRabi, Transition::A, Level::L3, durations)
}

/// Nutation on C starting from level 1.
pub fn nuclear_rabi(setup: &Setup, durations: &[f64]) -> Result<ExperimentResult> {
    rabi_experiment(setup, ExperimentKind::NuclearRabi, Transition::C, Level::L1, durations)
}

/// Optical signal of a population trace averaged over `shots` cycles per point.
/// `bright` holds the `m_S = 0` probability at each point.
pub fn emulate_averaging(
    bright: &[f64],
    readout: &ReadoutParams,
    shots: u64,
    seed: u64,
) -> Vec<AveragedSignal> {
    bright
        .iter()
        .enumerate()
        .map(|(k, p)| {
            averaged_signal_with_probability(
                p.clamp(0.0, 1.0),
                readout,
                shots,
                seed.wrapping_add(k as u64),
            )
        })
        .collect()
}

/// Echo amplitude `(p₁ − p₂)/(p₁ + p₂)` of the nuclear coherence after
/// `π/2 − τ₁ − π − τ₂ − π/2` on C from level 1, read through a π on A that maps
/// level 1 onto the bright level 3.
pub fn echo_amplitude(setup: &Setup, tau1: f64, tau2: f64) -> Result<f64> {
    if tau1.is_nan() || tau1 < 0.0 || tau2.is_nan() || tau2 < 0.0 {
        return Err(Error::NegativeDuration(tau1.min(tau2)));
    }
    let noise = &setup.noise;
    let mut st = EnsembleState::from_noise(&DensityMatrix::basis_state(Level::L1), noise)?;
    st.apply_pulse(&setup.table, &setup.half_pi(Transition::C)?, noise)?;
    st.free(tau1, noise)?;
    st.apply_pulse(&setup.table, &setup.pi(Transition::C)?, noise)?;
    st.free(tau2, noise)?;
    st.apply_pulse(&setup.table, &setup.half_pi(Transition::C)?, noise)?;
    st.apply_pulse(&setup.table, &setup.pi(Transition::A)?, noise)?;
    let rho = st.average();
    let mapped_one = rho.population(Level::L3);
    let two = rho.population(Level::L2);
    let total = mapped_one + two;
    if total <= 0.0 {
        return Err(Error::InvalidState("no population left in the nuclear pair".into()));
    }
    Ok((mapped_one - two) / total)
}

/// Echo amplitude over paired delay grids.
pub fn hahn_echo(setup: &Setup, tau1: &[f64], tau2: &[f64]) -> Result<ExperimentResult> {
    if tau1.len() != tau2.len() {
        return Err(invalid("tau2", "grid length must match tau1"));
    }
    let mut trace = Trace::new(&["tau1_us", "tau2_us", "amplitude"]);
    for (a, b) in tau1.iter().zip(tau2) {
        trace.rows.push(vec![*a, *b, echo_amplitude(setup, *a, *b)?]);
    }
    let mut out = ExperimentResult::new(ExperimentKind::HahnEcho, trace);
    out.set("t2_nuclear", setup.noise.t2_nuclear);
    out.set("linewidth_c", setup.noise.linewidth_c);
    Ok(out)
}

/// Noiseless-vs-noisy CROT on one input state.
pub fn crot_experiment(setup: &Setup, input: InputState) -> Result<ExperimentResult> {
    let rho_in = prepare_input_state(setup, input)?;
    let rho_out = crot(setup, &rho_in)?;
    let ideal = DensityMatrix::basis_state(input.crot_target());
    let f = ideal.operator().mul(rho_out.operator()).trace().re;
    let mut trace = Trace::new(&["level", "population_in", "population_out"]);
    for l in Level::ALL {
        trace.rows.push(vec![
            l.number() as f64,
            rho_in.population(l),
            rho_out.population(l),
        ]);
    }
    let mut out = ExperimentResult::new(ExperimentKind::Crot, trace);
    out.set("input", input.number() as f64);
    out.set("gate_time", crot_pulse(setup)?.duration);
    out.set("fidelity", f.clamp(0.0, 1.0));
    out.state = Some(rho_out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnduranceResult {
    pub gate_time: f64,
    pub counts: Vec<usize>,
    /// `Tr[ρ_N ρ_ideal]`.
    pub fidelity: Vec<f64>,
    /// Coherence fidelity rescaled from `[1/2, 1]` to `[0, 1]`.
    pub normalized: Vec<f64>,
    /// First gate count at which the normalized fidelity reaches 1/e,
    /// log-interpolated between counts.
    pub n_star: Option<f64>,
}

/// Repeated CROT gates on the nuclear superposition `(|1⟩ + |2⟩)/√2`, which the
/// ideal gate leaves invariant up to a global phase.
pub fn gate_endurance(setup: &Setup, n_max: usize) -> Result<EnduranceResult> {
    if n_max == 0 {
        return Err(invalid("n_max", "must be >= 1"));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let amps = [C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
    let ideal = DensityMatrix::pure(&amps)?;
    let pulse = crot_pulse(setup)?;
    let mut st = EnsembleState::from_noise(&ideal, &setup.noise)?;
    let floor = 0.5;
    let mut counts = vec![0];
    let mut fidelity = vec![1.0];
    let mut normalized: Vec<f64> = vec![1.0];
    let mut n_star = None;
    let threshold = (-1.0f64).exp();
    for n in 1..=n_max {
        st.apply_pulse(&setup.table, &pulse, &setup.noise)?;
        let rho = st.average();
        let f = ideal.operator().mul(rho.operator()).trace().re;
        let g = (f - floor) / (1.0 - floor);
        if n_star.is_none() && g <= threshold {
            let g_prev = normalized[n - 1];
            let frac = if g_prev > g && g > 0.0 {
                (g_prev.ln() - threshold.ln()) / (g_prev.ln() - g.ln())
            } else {
                1.0
            };
            n_star = Some((n - 1) as f64 + frac);
        }
        counts.push(n);
        fidelity.push(f);
        normalized.push(g);
    }
    Ok(EnduranceResult {
        gate_time: pulse.duration,
        counts,
        fidelity,
        normalized,
        n_star,
    })
}

impl EnduranceResult {
    pub fn to_result(&self) -> ExperimentResult {
        let mut trace = Trace::new(&["gates", "fidelity", "normalized"]);
        for k in 0..self.counts.len() {
            trace
                .rows
                .push(vec![self.counts[k] as f64, self.fidelity[k], self.normalized[k]]);
        }
        let mut out = ExperimentResult::new(ExperimentKind::Endurance, trace);
        out.set("gate_time", self.gate_time);
        out.set("n_star", self.n_star.unwrap_or(f64::INFINITY));
        out
    }
}

#[derive(Clone, Debug)]
pub struct SequenceOutcome {
    /// State at the readout (or at the end when there is none).
    pub state: DensityMatrix,
    pub readout: Option<ShotResult>,
    pub init_attempts: u32,
}

/// Executes a checked program. Execution starts from the initialized state;
/// every `init` resets it and `repeat_init` runs the heralded loop.
pub fn run_program(setup: &Setup, program: &CheckedProgram, seed: u64) -> Result<SequenceOutcome> {
    let noise = &setup.noise;
    let mut st = EnsembleState::from_noise(&initialize(&setup.init)?, noise)?;
    let mut readout = None;
    let mut init_attempts = 0;
    for (k, step) in program.steps.iter().enumerate() {
        match *step {
            CheckedStep::Init { .. } => {
                st = EnsembleState::from_noise(&initialize(&setup.init)?, noise)?;
            }
            CheckedStep::RepeatInit { max_attempts } => {
                let init = InitParams {
                    max_attempts,
                    ..setup.init
                };
                let outcome = heralded_initialize(&init, &setup.readout, seed.wrapping_add(k as u64))?;
                init_attempts += outcome.attempts;
                if !outcome.success {
                    return Err(Error::Sequence(format!(
                        "step {}: initialization not heralded within {max_attempts} attempts",
                        k + 1
                    )));
                }
                st = EnsembleState::from_noise(&initialize(&setup.init)?, noise)?;
            }
            CheckedStep::Pulse(b) => st.apply_pulse(&setup.table, &b.spec, noise)?,
            CheckedStep::Wait { duration } => st.free(duration, noise)?,
            CheckedStep::Readout { window } => {
                let params = ReadoutParams {
                    window,
                    ..setup.readout.clone()
                };
                params.validate()?;
                readout = Some(crate::readout::single_shot(&st.average(), &params, seed));
            }
        }
    }
    let state = st.average();
    state.check()?;
    Ok(SequenceOutcome {
        state,
        readout,
        init_attempts,
    })
}
