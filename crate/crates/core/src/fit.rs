//! Least-squares fit of `a·exp(−γt)·cos(2πft + φ) + c`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DampedCosineFit {
    pub amplitude: f64,
    /// 1/µs; zero means no decay.
    pub decay_rate: f64,
    /// MHz.
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

impl DampedCosineFit {
    pub fn eval(&self, t: f64) -> f64 {
        model(&[self.amplitude, self.decay_rate, self.frequency, self.phase, self.offset], t)
    }

    /// µs; infinite when no decay was resolved.
    pub fn decay_time(&self) -> f64 {
        if self.decay_rate <= 1e-12 {
            f64::INFINITY
        } else {
            1.0 / self.decay_rate
        }
    }
}

fn model(p: &[f64; 5], t: f64) -> f64 {
    p[0] * (-p[1] * t).exp() * (2.0 * PI * p[2] * t + p[3]).cos() + p[4]
}

fn gradient(p: &[f64; 5], t: f64) -> [f64; 5] {
    let env = (-p[1] * t).exp();
    let arg = 2.0 * PI * p[2] * t + p[3];
    let (s, c) = arg.sin_cos();
    [
        env * c,
        -t * p[0] * env * c,
        -2.0 * PI * t * p[0] * env * s,
        -p[0] * env * s,
        1.0,
    ]
}

fn sse(p: &[f64; 5], t: &[f64], y: &[f64]) -> f64 {
    t.iter().zip(y).map(|(t, y)| (model(p, *t) - y).powi(2)).sum()
}

/// Frequency of the largest peak of a zero-padded discrete spectrum.
pub fn spectral_peak(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len();
    let span = t[n - 1] - t[0];
    if span <= 0.0 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let nyquist = 0.5 * (n - 1) as f64 / span;
    let df = 1.0 / (span * 16.0);
    let mut best = (0.0, f64::NEG_INFINITY);
    let mut f = df;
    while f <= nyquist {
        let (mut re, mut im) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let (s, c) = (2.0 * PI * f * ti).sin_cos();
            re += (yi - mean) * c;
            im += (yi - mean) * s;
        }
        let power = re * re + im * im;
        if power > best.1 {
            best = (f, power);
        }
        f += df;
    }
    best.0
}

fn levenberg_marquardt(mut p: [f64; 5], t: &[f64], y: &[f64]) -> [f64; 5] {
    let mut lambda = 1e-3;
    let mut cost = sse(&p, t, y);
    for _ in 0..500 {
        let mut jtj = DMatrix::<f64>::zeros(5, 5);
        let mut jtr = DVector::<f64>::zeros(5);
        for (ti, yi) in t.iter().zip(y) {
            let g = gradient(&p, *ti);
            let r = yi - model(&p, *ti);
            for a in 0..5 {
                jtr[a] += g[a] * r;
                for b in 0..5 {
                    jtj[(a, b)] += g[a] * g[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj.clone();
            for k in 0..5 {
                m[(k, k)] += lambda * (jtj[(k, k)] + 1e-12);
            }
            let Some(step) = m.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for k in 0..5 {
                trial[k] += step[k];
            }
            trial[1] = trial[1].max(0.0);
            let c = sse(&trial, t, y);
            if c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = trial;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-15 {
                    return p;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || cost < 1e-28 {
            break;
        }
    }
    p
}

/// Fits a damped cosine; frequency is seeded from the spectral peak and the
/// decay time from the trace span.
pub fn fit_damped_cosine(t: &[f64], y: &[f64]) -> Result<DampedCosineFit> {
    if t.len() != y.len() {
        return Err(Error::Fit("time and value lengths differ".into()));
    }
    if t.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            t.len()
        )));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite samples".into()));
    }
    let n = t.len() as f64;
    let span = t[t.len() - 1] - t[0];
    if span <= 0.0 {
        return Err(Error::Fit("zero time span".into()));
    }
    let mean = y.iter().sum::<f64>() / n;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let amp = 0.5 * (hi - lo);
    let f0 = spectral_peak(t, y);

    let mut best: Option<([f64; 5], f64)> = None;
    for k in 0..4 {
        let seed = [amp, 1.0 / span, f0, k as f64 * PI / 2.0, mean];
        let p = levenberg_marquardt(seed, t, y);
        let c = sse(&p, t, y);
        if best.map_or(true, |(_, bc)| c < bc) {
            best = Some((p, c));
        }
    }
    let (mut p, cost) = best.expect("four seeds");
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += PI;
    }
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    p[3] = p[3].rem_euclid(2.0 * PI);
    Ok(DampedCosineFit {
        amplitude: p[0],
        decay_rate: p[1],
        frequency: p[2],
        phase: p[3],
        offset: p[4],
        residual: (cost / n).sqrt(),
    })
}
