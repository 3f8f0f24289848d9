//! Python bindings: `import nvsim_py`.
//!
//! Density matrices cross the boundary as nested lists of Python `complex`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nvsim::experiments::{self, ExperimentResult};
use nvsim::linalg::CMatrix;
use nvsim::readout::{calibrate_threshold, predicted_fidelity, shot_with_probability};
use nvsim::sequence;
use nvsim::tomography::{self, Instrument};
use nvsim::{C64, DensityMatrix, InputState, Operator, RunConfig, Setup, Transition};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(nvsim_py, NvsimError, PyException);

type Matrix = Vec<Vec<C64>>;

fn err(e: nvsim::Error) -> PyErr {
    NvsimError::new_err(e.to_string())
}

fn to_rows(rho: &DensityMatrix) -> Matrix {
    (0..rho.dim())
        .map(|r| (0..rho.dim()).map(|c| rho.get(r, c)).collect())
        .collect()
}

fn from_rows(rows: &Matrix) -> PyResult<DensityMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("density matrix must be square and non-empty"));
    }
    let m = CMatrix::from_fn(n, n, |r, c| rows[r][c]);
    DensityMatrix::new(Operator::new(m).map_err(err)?).map_err(err)
}

fn transition(name: &str) -> PyResult<Transition> {
    Transition::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown transition `{name}`")))
}

fn input(n: usize) -> PyResult<InputState> {
    InputState::from_number(n).map_err(err)
}

fn result_dict(r: &ExperimentResult) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = r.values.iter().map(|(k, v)| (k.clone(), vec![*v])).collect();
    for name in &r.trace.columns {
        out.insert(name.clone(), r.trace.column(name).unwrap_or_default());
    }
    out
}

/// Run configuration (TOML).
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Built-in defaults, or the TOML file at `path`.
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => RunConfig::load(&p).map_err(err)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::from_toml_str(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn sha256(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.run.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.run.seed = seed;
    }

    fn __repr__(&self) -> String {
        format!("Config(sha256={})", &self.inner.hash()[..12])
    }
}

/// Calibrated spin system with its noise, readout and pulse settings.
#[pyclass(name = "Simulator")]
pub struct PySimulator {
    config: RunConfig,
    setup: Setup,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<PyConfig>) -> PyResult<Self> {
        let config = config.map(|c| c.inner).unwrap_or_default();
        let setup = config.setup().map_err(err)?;
        Ok(Self { config, setup })
    }

    /// Same system with every noise channel disabled.
    fn noiseless(&self) -> Self {
        Self {
            config: self.config.clone(),
            setup: self.setup.noiseless(),
        }
    }

    /// Energies (MHz) of levels 1–4.
    fn levels(&self) -> BTreeMap<usize, f64> {
        nvsim::Level::ALL
            .iter()
            .map(|l| (l.number(), self.setup.levels.energy(*l)))
            .collect()
    }

    /// Frequencies (MHz) of transitions A–D.
    fn transitions(&self) -> BTreeMap<String, f64> {
        Transition::ALL
            .iter()
            .map(|t| (t.name().to_string(), self.setup.table.frequency(*t)))
            .collect()
    }

    #[getter]
    fn field(&self) -> [f64; 3] {
        self.setup.params.field
    }

    /// Nutation on "A" (from level 3) or "C" (from level 1).
    fn rabi(&self, transition_name: &str, durations: Vec<f64>) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let r = match transition(transition_name)? {
            Transition::A => experiments::electron_rabi(&self.setup, &durations),
            Transition::C => experiments::nuclear_rabi(&self.setup, &durations),
            t => return Err(PyValueError::new_err(format!("nutation is defined on A or C, not {t}"))),
        }
        .map_err(err)?;
        Ok(result_dict(&r))
    }

    /// Echo amplitude for each `(tau1, tau2)`.
    fn echo(&self, tau1: Vec<f64>, tau2: Vec<f64>) -> PyResult<Vec<f64>> {
        let r = experiments::hahn_echo(&self.setup, &tau1, &tau2).map_err(err)?;
        Ok(r.trace.column("amplitude").unwrap_or_default())
    }

    /// Prepares input 1–4 and applies the CROT gate; returns `(fidelity, rho)`.
    fn crot(&self, input_state: usize) -> PyResult<(f64, Matrix)> {
        let r = experiments::crot_experiment(&self.setup, input(input_state)?).map_err(err)?;
        let rho = r.state.as_ref().expect("crot returns a state");
        Ok((r.value("fidelity").unwrap_or(f64::NAN), to_rows(rho)))
    }

    /// Prepare → CROT → tomography for each input; `(input, fidelity, rho)` rows.
    #[pyo3(signature = (inputs=None))]
    fn tomography(&self, inputs: Option<Vec<usize>>) -> PyResult<Vec<(usize, f64, Matrix)>> {
        let inputs = match inputs {
            Some(v) => v.into_iter().map(input).collect::<PyResult<Vec<_>>>()?,
            None => InputState::ALL.to_vec(),
        };
        let mut instrument = Instrument::from_setup(&self.setup);
        if self.config.run.tomography_shots > 0 {
            instrument.shots = Some(self.config.run.tomography_shots);
            instrument.seed = self.config.run.seed;
        }
        let report = tomography::fidelity_table(&self.setup, &inputs, &instrument).map_err(err)?;
        Ok(report
            .rows
            .iter()
            .map(|r| (r.input.number(), r.fidelity.value, to_rows(&r.reconstructed)))
            .collect())
    }

    /// Reconstructs an arbitrary 4×4 state with noiseless measurement pulses.
    fn reconstruct(&self, rho: Matrix) -> PyResult<Matrix> {
        let rho = from_rows(&rho)?;
        let instrument = Instrument::noiseless(&self.setup);
        let rec = tomography::reconstruct(&tomography::measure(&rho, &instrument).map_err(err)?).map_err(err)?;
        Ok(to_rows(&rec.state))
    }

    /// Repeated CROT gates on `(|1⟩ + |2⟩)/√2`.
    fn endurance(&self, gates: usize) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let r = experiments::gate_endurance(&self.setup, gates).map_err(err)?;
        Ok(result_dict(&r.to_result()))
    }

    /// Runs `.seq` source; returns `(rho, readout)` where readout is
    /// `(count, decision, truth)` or `None`.
    #[pyo3(signature = (source, seed=None))]
    fn run_sequence(
        &self,
        source: &str,
        seed: Option<u64>,
    ) -> PyResult<(Matrix, Option<(u64, String, String)>)> {
        let program = sequence::parse(source).map_err(diagnostics)?;
        let checked = sequence::validate(&program, &self.setup.table, self.setup.pulses.defaults()).map_err(err)?;
        let out = experiments::run_program(&self.setup, &checked, seed.unwrap_or(self.config.run.seed))
            .map_err(err)?;
        let shot = out
            .readout
            .map(|s| (s.count, s.decision.label().to_string(), s.truth.label().to_string()));
        Ok((to_rows(&out.state), shot))
    }

    /// Best threshold with analytic and Monte Carlo single-shot fidelity.
    #[pyo3(signature = (shots=None))]
    fn readout_calibrate(&self, shots: Option<u64>) -> BTreeMap<String, f64> {
        let params = &self.setup.readout;
        let best = calibrate_threshold(params);
        let at_default = predicted_fidelity(params, params.threshold);
        let n = shots.unwrap_or(self.config.run.readout_shots);
        let seed = self.config.run.seed;
        let correct = (0..n)
            .filter(|&i| shot_with_probability(if i % 2 == 0 { 1.0 } else { 0.0 }, params, seed, i).correct())
            .count();
        BTreeMap::from([
            ("threshold".to_string(), best.threshold as f64),
            ("fidelity".to_string(), best.fidelity),
            ("configured_threshold_fidelity".to_string(), at_default.fidelity),
            ("monte_carlo".to_string(), correct as f64 / n.max(1) as f64),
        ])
    }
}

fn diagnostics(diags: Vec<sequence::ParseDiagnostic>) -> PyErr {
    let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
    NvsimError::new_err(lines.join("\n"))
}

/// Canonical form of `.seq` source.
#[pyfunction]
fn format_sequence(source: &str) -> PyResult<String> {
    Ok(sequence::format(&sequence::parse(source).map_err(diagnostics)?))
}

/// `Re Tr[ρ_p ρ_i]` clamped to `[0, 1]`.
#[pyfunction]
fn fidelity(rho_p: Matrix, rho_i: Matrix) -> PyResult<f64> {
    Ok(tomography::fidelity(&from_rows(&rho_p)?, &from_rows(&rho_i)?)
        .map_err(err)?
        .value)
}

#[pymodule]
fn nvsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NvsimError", m.py().get_type::<NvsimError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(format_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
