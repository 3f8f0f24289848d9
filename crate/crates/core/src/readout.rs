//! Stochastic optical readout of the electron spin.
//!
//! `m_S = 0` fluoresces at `bright_rate`, `m_S = ±1` at `dark_state_rate`, and the
//! detector adds `detector_dark_rate`. During the window the spin may flip once,
//! after an exponentially distributed time with constant `t1_readout`, switching
//! the emission rate. A count at or above `threshold` is decided as `m_S = 0`.
//!
//! Every shot draws from its own ChaCha8 stream (`seed`, stream = shot index), so
//! shots can be generated in parallel and still match sequential results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::state::DensityMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutParams {
    /// Photons/µs for `m_S = 0`.
    pub bright_rate: f64,
    /// Photons/µs for `m_S = ±1`.
    pub dark_state_rate: f64,
    /// Counts/µs.
    pub detector_dark_rate: f64,
    /// µs.
    pub window: f64,
    /// µs.
    pub t1_readout: f64,
    pub threshold: u64,
}

impl Default for ReadoutParams {
    /// Calibrated so the analytic single-shot fidelity is 0.80 at threshold 1.
    fn default() -> Self {
        Self {
            bright_rate: 0.461_132,
            dark_state_rate: 0.05,
            detector_dark_rate: 0.005,
            window: 3.0,
            t1_readout: 2000.0,
            threshold: 1,
        }
    }
}

impl ReadoutParams {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("bright_rate", self.bright_rate),
            ("dark_state_rate", self.dark_state_rate),
            ("detector_dark_rate", self.detector_dark_rate),
        ] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {r}")));
            }
        }
        if self.bright_rate <= self.dark_state_rate {
            return Err(invalid("bright_rate", "must exceed dark_state_rate"));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(invalid("window", "must be > 0"));
        }
        if self.t1_readout.is_nan() || self.t1_readout <= 0.0 {
            return Err(invalid("t1_readout", "must be > 0"));
        }
        Ok(())
    }

    fn flip_rate(&self) -> f64 {
        if self.t1_readout.is_finite() {
            1.0 / self.t1_readout
        } else {
            0.0
        }
    }

    /// Mean count when the spin starts in `state` and flips at `t_flip` (µs).
    fn mean_count(&self, state: ElectronState, t_flip: f64) -> f64 {
        let before = t_flip.min(self.window);
        let after = self.window - before;
        let (first, second) = match state {
            ElectronState::Bright => (self.bright_rate, self.dark_state_rate),
            ElectronState::Dark => (self.dark_state_rate, self.bright_rate),
        };
        first * before + second * after + self.detector_dark_rate * self.window
    }

    /// Expected count averaged over flip times.
    pub fn expected_count(&self, state: ElectronState) -> f64 {
        let k = self.flip_rate();
        let before = if k == 0.0 {
            self.window
        } else {
            (1.0 - (-k * self.window).exp()) / k
        };
        let after = self.window - before;
        let (first, second) = match state {
            ElectronState::Bright => (self.bright_rate, self.dark_state_rate),
            ElectronState::Dark => (self.dark_state_rate, self.bright_rate),
        };
        first * before + second * after + self.detector_dark_rate * self.window
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElectronState {
    /// `m_S = 0`.
    Bright,
    /// `m_S = ±1`.
    Dark,
}

impl ElectronState {
    pub fn label(self) -> &'static str {
        match self {
            ElectronState::Bright => "ms0",
            ElectronState::Dark => "ms1",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShotResult {
    pub count: u64,
    pub decision: ElectronState,
    pub truth: ElectronState,
}

impl ShotResult {
    pub fn correct(&self) -> bool {
        self.decision == self.truth
    }
}

fn shot_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Shot number `index` when the electron is in `m_S = 0` with probability `p_bright`.
pub fn shot_with_probability(p_bright: f64, params: &ReadoutParams, seed: u64, index: u64) -> ShotResult {
    let mut rng = shot_rng(seed, index);
    let truth = if rng.random::<f64>() < p_bright {
        ElectronState::Bright
    } else {
        ElectronState::Dark
    };
    let k = params.flip_rate();
    let t_flip = if k > 0.0 {
        Exp::new(k).expect("positive rate").sample(&mut rng)
    } else {
        f64::INFINITY
    };
    let mean = params.mean_count(truth, t_flip);
    let count = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64
    } else {
        0
    };
    let decision = if count >= params.threshold {
        ElectronState::Bright
    } else {
        ElectronState::Dark
    };
    ShotResult {
        count,
        decision,
        truth,
    }
}

/// One readout shot; the true electron state is drawn from the `m_S = 0`
/// population of `rho`.
pub fn single_shot(rho: &DensityMatrix, params: &ReadoutParams, seed: u64) -> ShotResult {
    shot_at(rho, params, seed, 0)
}

/// Shot number `index` of a seeded run.
pub fn shot_at(rho: &DensityMatrix, params: &ReadoutParams, seed: u64, index: u64) -> ShotResult {
    let p = rho.bright_population().clamp(0.0, 1.0);
    shot_with_probability(p, params, seed, index)
}

/// `n` shots in index order.
pub fn shots(rho: &DensityMatrix, params: &ReadoutParams, n: u64, seed: u64) -> Vec<ShotResult> {
    let p = rho.bright_population().clamp(0.0, 1.0);
    (0..n)
        .into_par_iter()
        .map(|i| shot_with_probability(p, params, seed, i))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AveragedSignal {
    pub shots: u64,
    pub mean_count: f64,
    pub std_error: f64,
    /// `(mean − dark) / (bright − dark)` against the analytic references.
    pub contrast: f64,
    pub contrast_error: f64,
}

/// Mean photon count over `n` seeded shots.
pub fn averaged_signal(rho: &DensityMatrix, params: &ReadoutParams, n: u64, seed: u64) -> AveragedSignal {
    averaged_signal_with_probability(rho.bright_population().clamp(0.0, 1.0), params, n, seed)
}

/// As [`averaged_signal`] for a bare `m_S = 0` probability.
pub fn averaged_signal_with_probability(
    p_bright: f64,
    params: &ReadoutParams,
    n: u64,
    seed: u64,
) -> AveragedSignal {
    let n = n.max(1);
    let counts: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| shot_with_probability(p_bright, params, seed, i).count as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let bright = params.expected_count(ElectronState::Bright);
    let dark = params.expected_count(ElectronState::Dark);
    let span = bright - dark;
    AveragedSignal {
        shots: n,
        mean_count: mean,
        std_error,
        contrast: (mean - dark) / span,
        contrast_error: std_error / span.abs(),
    }
}

fn poisson_pmf_table(mean: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    if mean == 0.0 {
        out.push(1.0);
        out.resize(n_max + 1, 0.0);
        return out;
    }
    let mut p = (-mean).exp();
    out.push(p);
    for n in 1..=n_max {
        p *= mean / n as f64;
        out.push(p);
    }
    out
}

/// Analytic count distribution `P(n)` for `n ≤ n_max`, with the spin-flip time
/// integrated by composite Simpson quadrature.
pub fn count_distribution(params: &ReadoutParams, state: ElectronState, n_max: usize) -> Vec<f64> {
    let k = params.flip_rate();
    let survive = (-k * params.window).exp();
    let mut dist: Vec<f64> = poisson_pmf_table(params.mean_count(state, f64::INFINITY), n_max)
        .into_iter()
        .map(|p| p * survive)
        .collect();
    if k > 0.0 {
        let intervals = 512;
        let h = params.window / intervals as f64;
        for j in 0..=intervals {
            let t = j as f64 * h;
            let simpson = if j == 0 || j == intervals {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let density = k * (-k * t).exp();
            let pmf = poisson_pmf_table(params.mean_count(state, t), n_max);
            let w = simpson * h / 3.0 * density;
            for (d, p) in dist.iter_mut().zip(pmf) {
                *d += w * p;
            }
        }
    }
    dist
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdCalibration {
    pub threshold: u64,
    /// Balanced accuracy `½(P(bright|bright) + P(dark|dark))`.
    pub fidelity: f64,
    pub bright_accuracy: f64,
    pub dark_accuracy: f64,
}

/// Accuracy of a given threshold from the analytic count distributions.
pub fn predicted_fidelity(params: &ReadoutParams, threshold: u64) -> ThresholdCalibration {
    let n_max = tail_cutoff(params);
    let bright = count_distribution(params, ElectronState::Bright, n_max);
    let dark = count_distribution(params, ElectronState::Dark, n_max);
    let th = threshold as usize;
    let below_bright: f64 = bright.iter().take(th).sum();
    let below_dark: f64 = dark.iter().take(th).sum();
    let bright_accuracy = 1.0 - below_bright;
    let dark_accuracy = below_dark;
    ThresholdCalibration {
        threshold,
        fidelity: 0.5 * (bright_accuracy + dark_accuracy),
        bright_accuracy,
        dark_accuracy,
    }
}

fn tail_cutoff(params: &ReadoutParams) -> usize {
    let top = params.bright_rate.max(params.dark_state_rate) + params.detector_dark_rate;
    let mean = top * params.window;
    (mean + 12.0 * mean.sqrt() + 30.0).ceil() as usize
}

/// Scans integer thresholds in `[0, ⌈3·bright_rate·window⌉]` for the best
/// balanced accuracy. Ties keep the lowest threshold.
pub fn calibrate_threshold(params: &ReadoutParams) -> ThresholdCalibration {
    let top = (3.0 * params.bright_rate * params.window).ceil().max(1.0) as u64;
    let mut best = predicted_fidelity(params, 0);
    for th in 1..=top {
        let c = predicted_fidelity(params, th);
        if c.fidelity > best.fidelity + 1e-15 {
            best = c;
        }
    }
    best
}
