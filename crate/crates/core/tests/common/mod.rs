#![allow(dead_code)]

use std::path::PathBuf;

use nvsim::experiments::Setup;
use nvsim::linalg::{CMatrix, C64};
use nvsim::{DensityMatrix, RunConfig};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

pub fn shipped_config() -> RunConfig {
    RunConfig::load(&config_dir().join("default.toml")).expect("shipped config loads")
}

/// Setup from the shipped calibration.
pub fn calibrated() -> Setup {
    shipped_config().setup().expect("calibrated setup")
}

pub fn noiseless() -> Setup {
    calibrated().noiseless()
}

pub fn random_amplitudes(rng: &mut impl Rng, dim: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..dim)
        .map(|_| C64::new(gauss(rng), gauss(rng)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

pub fn random_pure(rng: &mut impl Rng, dim: usize) -> DensityMatrix {
    DensityMatrix::pure(&random_amplitudes(rng, dim)).unwrap()
}

/// Random mixed state as a convex mix of `k` random pure states.
pub fn random_mixed(rng: &mut impl Rng, dim: usize, k: usize) -> DensityMatrix {
    let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let mut m = CMatrix::zeros(dim, dim);
    for w in weights {
        let a = random_amplitudes(rng, dim);
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] += a[r] * a[c].conj() * (w / total);
            }
        }
    }
    DensityMatrix::new(nvsim::Operator::new(m).unwrap()).unwrap()
}

pub fn gauss(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}
