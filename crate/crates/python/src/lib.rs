//! Python bindings: scenario synthesis, cube I/O, the three pipelines and
//! the evaluation helpers.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use vitalwave_core::channel_fusion::band_snr as core_band_snr;
use vitalwave_core::eval::{self, snr_spatial_map};
use vitalwave_core::pipeline::{run_pipeline, ProcessOptions};
use vitalwave_core::preprocess::{parse_cube, read_cube_file, write_cube, write_cube_file};
use vitalwave_core::range_select::BandSpec;
use vitalwave_core::sim::{synthesize_cube, Coverage};
use vitalwave_core::template::default_banks;
use vitalwave_core::{Error, ErrorKind, PhysioSignal, PipelineId, Unit};

fn py_err(e: Error) -> PyErr {
    match e.kind() {
        ErrorKind::Config => PyValueError::new_err(e.to_string()),
        ErrorKind::Io => PyOSError::new_err(e.to_string()),
        ErrorKind::Signal => PyRuntimeError::new_err(match e.stage() {
            Some(stage) => format!("{e} (stage {stage})"),
            None => e.to_string(),
        }),
    }
}

fn json_to_py<'py>(py: Python<'py>, s: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (s,))
}

#[pyclass(module = "vitalwave")]
struct Scenario {
    inner: vitalwave_core::sim::Scenario,
}

#[pymethods]
impl Scenario {
    /// Default torso layout; coverage is "all", "left" or "right".
    #[staticmethod]
    #[pyo3(signature = (coverage = "all", seed = 0))]
    fn default(coverage: &str, seed: u64) -> PyResult<Self> {
        let cov: Coverage = coverage.parse().map_err(py_err)?;
        Ok(Self {
            inner: vitalwave_core::sim::Scenario::default_with(cov, seed),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: vitalwave_core::sim::Scenario::from_json_str(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn rr_bpm_truth(&self) -> f64 {
        self.inner.rr_bpm_truth
    }

    #[setter]
    fn set_rr_bpm_truth(&mut self, v: f64) {
        self.inner.rr_bpm_truth = v;
    }

    #[getter]
    fn hr_bpm_truth(&self) -> f64 {
        self.inner.hr_bpm_truth
    }

    #[setter]
    fn set_hr_bpm_truth(&mut self, v: f64) {
        self.inner.hr_bpm_truth = v;
    }

    #[getter]
    fn noise_snr_db(&self) -> Option<f64> {
        self.inner.noise_snr_db
    }

    #[setter]
    fn set_noise_snr_db(&mut self, v: Option<f64>) {
        self.inner.noise_snr_db = v;
    }

    #[getter]
    fn rng_seed(&self) -> u64 {
        self.inner.rng_seed
    }

    #[setter]
    fn set_rng_seed(&mut self, v: u64) {
        self.inner.rng_seed = v;
    }

    #[getter]
    fn num_scatterers(&self) -> usize {
        self.inner.scatterers.len()
    }

    fn simulate(&self) -> PyResult<RadarCube> {
        simulate(self)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(rr={}, hr={}, seed={}, scatterers={})",
            self.inner.rr_bpm_truth,
            self.inner.hr_bpm_truth,
            self.inner.rng_seed,
            self.inner.scatterers.len()
        )
    }
}

#[pyclass(module = "vitalwave")]
struct RadarCube {
    inner: vitalwave_core::RadarCube,
}

#[pymethods]
impl RadarCube {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_cube_file(&path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: parse_cube(data).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_cube_file(&path, &self.inner).map_err(py_err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        write_cube(&self.inner)
    }

    #[getter]
    fn num_channels(&self) -> usize {
        self.inner.num_channels()
    }

    #[getter]
    fn num_chirps(&self) -> usize {
        self.inner.num_chirps
    }

    #[getter]
    fn samples_per_chirp(&self) -> usize {
        self.inner.samples_per_chirp
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    /// Run one pipeline; method is "ref1", "ref2" or "proposed".
    #[pyo3(signature = (method = "proposed"))]
    fn process(&self, method: &str) -> PyResult<VitalEstimate> {
        process(self, method)
    }

    fn __repr__(&self) -> String {
        format!(
            "RadarCube({} ch x {} chirps x {} samples)",
            self.inner.num_channels(),
            self.inner.num_chirps,
            self.inner.samples_per_chirp
        )
    }
}

#[pyclass(module = "vitalwave", frozen)]
struct VitalEstimate {
    inner: vitalwave_core::VitalEstimate,
}

#[pymethods]
impl VitalEstimate {
    #[getter]
    fn rr_bpm(&self) -> f64 {
        self.inner.rr_bpm
    }

    #[getter]
    fn hr_bpm(&self) -> f64 {
        self.inner.hr_bpm
    }

    #[getter]
    fn resp_match_score(&self) -> f64 {
        self.inner.resp_match_score
    }

    #[getter]
    fn heart_match_score(&self) -> f64 {
        self.inner.heart_match_score
    }

    /// Full estimate, template parameters included, as a dict.
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s =
            serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &s)
    }

    fn __repr__(&self) -> String {
        format!(
            "VitalEstimate(rr_bpm={:.3}, hr_bpm={:.3})",
            self.inner.rr_bpm, self.inner.hr_bpm
        )
    }
}

#[pyfunction]
fn simulate(scenario: &Scenario) -> PyResult<RadarCube> {
    Ok(RadarCube {
        inner: synthesize_cube(&scenario.inner).map_err(py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (cube, method = "proposed"))]
fn process(cube: &RadarCube, method: &str) -> PyResult<VitalEstimate> {
    let id: PipelineId = method.parse().map_err(py_err)?;
    let out = run_pipeline(&cube.inner, id, &ProcessOptions::default(), default_banks())
        .map_err(py_err)?;
    Ok(VitalEstimate {
        inner: out.estimate,
    })
}

/// (SNR_B, SNR_H) in dB for every channel.
#[pyfunction]
fn snr_map(cube: &RadarCube) -> PyResult<Vec<(f64, f64)>> {
    Ok(snr_spatial_map(&cube.inner, &ProcessOptions::default())
        .map_err(py_err)?
        .into_iter()
        .map(|p| (p.snr_b_db, p.snr_h_db))
        .collect())
}

/// Respiration/heart band SNR of one phase signal, dB.
#[pyfunction]
fn band_snr(samples: Vec<f64>, rate_hz: f64) -> PyResult<(f64, f64)> {
    let sig = PhysioSignal::new(samples, rate_hz, Unit::Radians).map_err(py_err)?;
    let p = core_band_snr(&sig, &BandSpec::default()).map_err(py_err)?;
    Ok((p.snr_b_db, p.snr_h_db))
}

#[pyfunction]
fn error_rate(estimate_bpm: f64, truth_bpm: f64) -> PyResult<f64> {
    eval::error_rate(estimate_bpm, truth_bpm).map_err(py_err)
}

#[pyfunction]
fn verify_fixture<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let report = eval::verify_appendix_file(&path).map_err(py_err)?;
    let s = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &s)
}

#[pymodule]
fn vitalwave(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<RadarCube>()?;
    m.add_class::<VitalEstimate>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(process, m)?)?;
    m.add_function(wrap_pyfunction!(snr_map, m)?)?;
    m.add_function(wrap_pyfunction!(band_snr, m)?)?;
    m.add_function(wrap_pyfunction!(error_rate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_fixture, m)?)?;
    Ok(())
}
