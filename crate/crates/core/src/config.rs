//! TOML run configuration.
//!
//! ```toml
//! [spin]       # Hamiltonian parameters and field calibration
//! [noise]      # relaxation times and quasi-static linewidths
//! [readout]    # photon statistics
//! [pulses]     # default Rabi frequencies
//! [init]       # initialization residual and state-4 preparation
//! [run]        # seed, output directory and sweep grids
//! ```
//!
//! Every key is optional; missing keys take the built-in defaults and unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::experiments::{InitParams, PulseSettings, Setup};
use crate::noise::NoiseParams;
use crate::readout::ReadoutParams;
use crate::spin_model::{
    axial_tensor, calibrate_field, hyperfine_tensor, MsBranch, SpinSystemParams,
    C13_FIRST_SHELL_HYPERFINE, NV_ZERO_FIELD_SPLITTING,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinSection {
    pub g_e: f64,
    pub g_n: f64,
    /// MHz/mT.
    pub beta_e: f64,
    /// MHz/mT.
    pub beta_n: f64,
    /// MHz.
    pub zero_field_splitting: f64,
    /// Transverse zero-field parameter E, MHz.
    pub strain: f64,
    /// Isotropic hyperfine coupling, MHz.
    pub hyperfine: f64,
    /// Axial hyperfine anisotropy, MHz.
    pub hyperfine_anisotropy: f64,
    /// Target 3–4 splitting (MHz) used to calibrate a field along z when
    /// `field` is absent.
    pub nuclear_splitting: f64,
    /// Explicit field in mT.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<[f64; 3]>,
    pub branch: MsBranch,
}

impl Default for SpinSection {
    fn default() -> Self {
        let p = SpinSystemParams::nv_c13();
        Self {
            g_e: p.g_e,
            g_n: p.g_n,
            beta_e: p.beta_e,
            beta_n: p.beta_n,
            zero_field_splitting: NV_ZERO_FIELD_SPLITTING,
            strain: 0.0,
            hyperfine: C13_FIRST_SHELL_HYPERFINE,
            hyperfine_anisotropy: 0.0,
            nuclear_splitting: 3.0,
            field: None,
            branch: MsBranch::Minus,
        }
    }
}

impl SpinSection {
    /// Hamiltonian parameters, calibrating the field if none is given.
    pub fn params(&self) -> Result<SpinSystemParams> {
        let base = SpinSystemParams {
            g_e: self.g_e,
            g_n: self.g_n,
            beta_e: self.beta_e,
            beta_n: self.beta_n,
            d_tensor: axial_tensor(self.zero_field_splitting, self.strain),
            a_tensor: hyperfine_tensor(self.hyperfine, self.hyperfine_anisotropy),
            field: [0.0; 3],
        };
        match self.field {
            Some(f) => {
                let p = base.with_field(f);
                p.validate()?;
                Ok(p)
            }
            None => calibrate_field(&base, self.nuclear_splitting, self.branch),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    /// Longest electron nutation pulse, µs.
    pub rabi_electron_max: f64,
    /// Longest nuclear nutation pulse, µs.
    pub rabi_nuclear_max: f64,
    pub rabi_points: usize,
    /// Largest echo delay τ (µs); delays run from 0 in `echo_tau_step`.
    pub echo_tau_max: f64,
    pub echo_tau_step: f64,
    pub endurance_gates: usize,
    /// Averaged cycles per tomography signal; 0 uses exact expectation values.
    pub tomography_shots: u64,
    pub readout_shots: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            rabi_electron_max: 12.0,
            rabi_nuclear_max: 4.0,
            rabi_points: 601,
            echo_tau_max: 14.5,
            echo_tau_step: 0.5,
            endurance_gates: 2000,
            tomography_shots: 0,
            readout_shots: 100_000,
        }
    }
}

impl RunSection {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rabi_electron_max", self.rabi_electron_max),
            ("rabi_nuclear_max", self.rabi_nuclear_max),
            ("echo_tau_step", self.echo_tau_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.echo_tau_max.is_finite() && self.echo_tau_max >= 0.0) {
            return Err(invalid("echo_tau_max", "must be finite and >= 0"));
        }
        if self.rabi_points < crate::fit::MIN_SAMPLES {
            return Err(invalid(
                "rabi_points",
                format!("must be >= {}", crate::fit::MIN_SAMPLES),
            ));
        }
        if self.endurance_gates == 0 {
            return Err(invalid("endurance_gates", "must be >= 1"));
        }
        if self.readout_shots == 0 {
            return Err(invalid("readout_shots", "must be >= 1"));
        }
        Ok(())
    }

    pub fn grid(max: f64, points: usize) -> Vec<f64> {
        (0..points)
            .map(|k| max * k as f64 / (points - 1) as f64)
            .collect()
    }

    pub fn echo_grid(&self) -> Vec<f64> {
        let n = (self.echo_tau_max / self.echo_tau_step + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.echo_tau_step).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub spin: SpinSection,
    pub noise: NoiseParams,
    pub readout: ReadoutParams,
    pub pulses: PulseSettings,
    pub init: InitParams,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.readout.validate()?;
        self.pulses.validate()?;
        self.init.validate()?;
        self.run.validate()
    }

    /// Canonical TOML of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of [`to_toml`](Self::to_toml), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn setup(&self) -> Result<Setup> {
        Setup::new(
            self.spin.params()?,
            self.spin.branch,
            self.noise.clone(),
            self.readout.clone(),
            self.pulses,
            self.init,
        )
    }
}
