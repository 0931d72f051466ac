//! Python bindings. Complex vectors cross the boundary as lists of Python
//! `complex`; results come back as dictionaries.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spectral_demix::admm::{admm_solve, AdmmConfig, SolveReport};
use spectral_demix::baselines::{self, PeriodogramConfig, Window};
use spectral_demix::certificate::{certify_instance, VerifyConfig};
use spectral_demix::decode::{self, DecodeConfig};
use spectral_demix::experiment::{self, ExperimentGrid};
use spectral_demix::greedy::{greedy_demix as run_greedy, GreedyConfig};
use spectral_demix::kernels::build_kernel;
use spectral_demix::model::{self, AmplitudeLaw, InstanceParams, LineSpectrum, Samples, SpikeSupport, SpikeVector};
use spectral_demix::DemixError;

fn to_py(e: DemixError) -> PyErr {
    match e {
        DemixError::InvalidParameter(_)
        | DemixError::DimensionMismatch { .. }
        | DemixError::InfeasibleSeparation { .. }
        | DemixError::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn samples(y: Vec<Complex64>) -> PyResult<Samples> {
    Samples::new(y).map_err(to_py)
}

fn lambda_or_default(lam: Option<f64>, n: usize) -> f64 {
    lam.unwrap_or_else(|| AdmmConfig::default_lambda(n))
}

fn estimate_dict<'py>(
    py: Python<'py>,
    spectrum: &LineSpectrum,
    spikes: &SpikeVector,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("freqs", spectrum.freqs())?;
    d.set_item("amps", spectrum.amps())?;
    d.set_item("spike_support", spikes.support())?;
    d.set_item("spike_values", spikes.iter().map(|(_, v)| v).collect::<Vec<_>>())?;
    Ok(d)
}

fn add_report(d: &Bound<'_, PyDict>, r: &SolveReport) -> PyResult<()> {
    d.set_item("converged", r.converged)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("duality_gap", r.duality_gap)?;
    d.set_item("objective", r.objective)?;
    d.set_item("dual_feasibility", r.dual_feasibility)?;
    d.set_item("eta", r.eta.clone())?;
    Ok(())
}

/// Ground truth and samples of a synthetic problem.
#[pyclass(name = "Instance", module = "spectral_demix_py", frozen)]
struct PyInstance {
    inner: model::Instance,
}

#[pymethods]
impl PyInstance {
    /// Random instance; `delta` is the minimum separation in units of 1/(n-1).
    #[staticmethod]
    #[pyo3(signature = (n, k, s, delta, seed=0, gaussian=false, bernoulli=false, noise=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        n: usize,
        k: usize,
        s: usize,
        delta: f64,
        seed: u64,
        gaussian: bool,
        bernoulli: bool,
        noise: f64,
    ) -> PyResult<Self> {
        if n < 2 {
            return Err(PyValueError::new_err("n must be at least 2"));
        }
        let mut p = InstanceParams::new(n, k, s, delta / (n - 1) as f64, seed);
        if gaussian {
            p.amp_law = AmplitudeLaw::ComplexGaussian;
        }
        if bernoulli {
            p.spike_support = SpikeSupport::Bernoulli;
        }
        p.noise_level = noise;
        let inner = model::generate_instance(&p).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn picket_fence(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: model::picket_fence(n).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn y(&self) -> Vec<Complex64> {
        self.inner.y.as_slice().to_vec()
    }

    #[getter]
    fn freqs(&self) -> Vec<f64> {
        self.inner.spectrum.freqs()
    }

    #[getter]
    fn amps(&self) -> Vec<Complex64> {
        self.inner.spectrum.amps()
    }

    #[getter]
    fn spike_support(&self) -> Vec<usize> {
        self.inner.spikes.support()
    }

    #[getter]
    fn spike_values(&self) -> Vec<Complex64> {
        self.inner.spikes.iter().map(|(_, v)| v).collect()
    }

    /// Score an estimate against this instance's ground truth.
    #[pyo3(signature = (freqs, amps, spike_support, spike_values))]
    fn score<'py>(
        &self,
        py: Python<'py>,
        freqs: Vec<f64>,
        amps: Vec<Complex64>,
        spike_support: Vec<usize>,
        spike_values: Vec<Complex64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        if spike_support.len() != spike_values.len() {
            return Err(PyValueError::new_err("spike_support and spike_values differ in length"));
        }
        let spectrum = LineSpectrum::from_parts(&freqs, &amps).map_err(to_py)?;
        let spikes = SpikeVector::new(self.inner.n(), spike_support.into_iter().zip(spike_values)).map_err(to_py)?;
        let s = model::recovery_score(&self.inner, &spectrum, &spikes).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("relative_mse", s.relative_mse)?;
        d.set_item("hausdorff", s.hausdorff)?;
        d.set_item("lines_match", s.lines_match)?;
        d.set_item("spikes_match", s.spikes_match)?;
        d.set_item("exact_demix", s.exact_demix)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(n={}, lines={}, spikes={})",
            self.inner.n(),
            self.inner.spectrum.len(),
            self.inner.spikes.len()
        )
    }
}

/// Exact demixing: ADMM, support decoding, amplitude least squares.
#[pyfunction]
#[pyo3(signature = (y, lam=None, rho=None))]
fn demix<'py>(py: Python<'py>, y: Vec<Complex64>, lam: Option<f64>, rho: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let y = samples(y)?;
    let mut cfg = AdmmConfig::equality(lambda_or_default(lam, y.n()));
    if let Some(r) = rho {
        cfg.rho = r;
    }
    let out = py
        .detach(|| decode::demix(&y, &cfg, &DecodeConfig::default()))
        .map_err(to_py)?;
    let d = estimate_dict(py, &out.spectrum, &out.spikes)?;
    d.set_item("t_hat", out.t_hat)?;
    d.set_item("omega_hat", out.omega_hat)?;
    add_report(&d, &out.report)?;
    Ok(d)
}

/// Atomic-norm denoising with outliers at penalty `gamma`.
#[pyfunction]
#[pyo3(signature = (y, gamma, lam=None))]
fn denoise<'py>(py: Python<'py>, y: Vec<Complex64>, gamma: f64, lam: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let y = samples(y)?;
    let cfg = AdmmConfig::denoise(lambda_or_default(lam, y.n()), gamma);
    let r = py.detach(|| admm_solve(&y, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("g_hat", r.g_hat.clone())?;
    d.set_item("z_hat", r.z_hat.clone())?;
    add_report(&d, &r)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (y, tau=None, local_opt=true))]
fn greedy_demix<'py>(
    py: Python<'py>,
    y: Vec<Complex64>,
    tau: Option<f64>,
    local_opt: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let y = samples(y)?;
    let cfg = GreedyConfig {
        tau,
        local_opt,
        ..GreedyConfig::default()
    };
    let out = py.detach(|| run_greedy(&y, &cfg)).map_err(to_py)?;
    let d = estimate_dict(py, &out.spectrum, &out.spikes)?;
    d.set_item("converged", out.converged)?;
    d.set_item("residual_norm", out.residual_norm)?;
    d.set_item("iterations", out.trace.len())?;
    Ok(d)
}

/// Construct the dual certificate of an instance and verify it.
#[pyfunction]
#[pyo3(signature = (instance, lam=None))]
fn certify<'py>(py: Python<'py>, instance: &PyInstance, lam: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let n = instance.inner.n();
    let lambda = lambda_or_default(lam, n);
    let (poly, r) = py
        .detach(|| certify_instance(&instance.inner, lambda, &VerifyConfig::for_n(n)))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("q", poly.q)?;
    d.set_item("interpolation_err", r.interpolation_err)?;
    d.set_item("derivative_err", r.derivative_err)?;
    d.set_item("offsupport_max", r.offsupport_max)?;
    d.set_item("q_on_omega_err", r.q_on_omega_err)?;
    d.set_item("q_off_omega_max", r.q_off_omega_max)?;
    d.set_item("concave_at_support", r.concave_at_support)?;
    d.set_item("valid", r.valid)?;
    Ok(d)
}

/// `(kappa, max |c_l|)` of the interpolation kernel with half-length `m`.
#[pyfunction]
fn kernel_constants(m: usize) -> PyResult<(f64, f64)> {
    let spec = build_kernel(m).map_err(to_py)?;
    Ok((spec.kappa, spec.max_coef()))
}

/// Magnitude spectrum and `(frequency, magnitude)` peaks.
/// Magnitudes and `(frequency, magnitude)` peaks.
type Spectrum = (Vec<f64>, Vec<(f64, f64)>);

#[pyfunction]
#[pyo3(signature = (y, window="none", grid_size=None))]
fn periodogram(y: Vec<Complex64>, window: &str, grid_size: Option<usize>) -> PyResult<Spectrum> {
    let y = samples(y)?;
    let mut cfg = PeriodogramConfig::for_n(y.n());
    cfg.window = match window {
        "none" => Window::None,
        "hann" => Window::Hann,
        "hamming" => Window::Hamming,
        other => return Err(PyValueError::new_err(format!("unknown window {other:?}"))),
    };
    if let Some(g) = grid_size {
        cfg.grid_size = g;
    }
    let p = baselines::periodogram(&y, &cfg).map_err(to_py)?;
    Ok((p.magnitude, p.peaks))
}

#[pyfunction]
fn music(y: Vec<Complex64>, k: usize) -> PyResult<Vec<f64>> {
    baselines::music(&samples(y)?, k).map_err(to_py)
}

/// Run a success-rate grid given as JSON; returns the result as JSON.
#[pyfunction]
fn run_grid(py: Python<'_>, config: &str) -> PyResult<String> {
    let grid: ExperimentGrid = serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = py.detach(|| experiment::run_grid(&grid)).map_err(to_py)?;
    serde_json::to_string(&result).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
pub fn spectral_demix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(demix, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_demix, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_constants, m)?)?;
    m.add_function(wrap_pyfunction!(periodogram, m)?)?;
    m.add_function(wrap_pyfunction!(music, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    Ok(())
}
