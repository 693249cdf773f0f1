//! Python bindings for the `noma_offload` crate.

use noma_offload::baselines::{self, Scheme};
use noma_offload::channel::{self, ChannelRealization};
use noma_offload::sca::{self, ScaOptions, SlackPoint};
use noma_offload::{harness, metrics, model};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: noma_offload::Error) -> PyErr {
    match e {
        noma_offload::Error::Io(_) | noma_offload::Error::Subproblem(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: noma_offload::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Reference setup with `n_devices` devices; keyword arguments override
    /// single fields.
    #[new]
    #[pyo3(signature = (n_devices=4, *, k_common_bits=None, e_max_j=None, bandwidth_hz=None, noise_psd_dbm_hz=None, pathloss_exp=None, t_max_s=None, cell_radius_m=None, min_dist_m=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_devices: usize,
        k_common_bits: Option<f64>,
        e_max_j: Option<Vec<f64>>,
        bandwidth_hz: Option<f64>,
        noise_psd_dbm_hz: Option<f64>,
        pathloss_exp: Option<f64>,
        t_max_s: Option<f64>,
        cell_radius_m: Option<f64>,
        min_dist_m: Option<f64>,
    ) -> PyResult<Self> {
        let mut s = noma_offload::Scenario::reference(n_devices);
        if let Some(v) = k_common_bits {
            s.k_common_bits = v;
        }
        if let Some(v) = e_max_j {
            s.e_max_j = if v.len() == 1 { vec![v[0]; n_devices] } else { v };
        }
        if let Some(v) = bandwidth_hz {
            s.bandwidth_hz = v;
        }
        if let Some(v) = noise_psd_dbm_hz {
            s.noise_psd_dbm_hz = v;
        }
        if let Some(v) = pathloss_exp {
            s.pathloss_exp = v;
        }
        if let Some(v) = t_max_s {
            s.t_max_s = v;
        }
        if let Some(v) = cell_radius_m {
            s.cell_radius_m = v;
        }
        if let Some(v) = min_dist_m {
            s.min_dist_m = v;
        }
        s.validate().map_err(to_py)?;
        Ok(PyScenario { inner: s })
    }

    #[getter]
    fn n_devices(&self) -> usize {
        self.inner.n_devices
    }

    #[getter]
    fn k_common_bits(&self) -> f64 {
        self.inner.k_common_bits
    }

    #[getter]
    fn e_max_j(&self) -> Vec<f64> {
        self.inner.e_max_j.clone()
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.inner.bandwidth_hz
    }

    #[getter]
    fn t_max_s(&self) -> f64 {
        self.inner.t_max_s
    }

    fn noise_power(&self) -> f64 {
        channel::noise_power(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "Channel", from_py_object)]
#[derive(Clone)]
struct PyChannel {
    inner: ChannelRealization,
}

#[pymethods]
impl PyChannel {
    /// Channel from normalized gains `gamma` (any order) and noise 1.
    #[staticmethod]
    fn from_gamma(gamma: Vec<f64>) -> PyResult<Self> {
        Ok(PyChannel { inner: ChannelRealization::from_gamma(gamma).map_err(to_py)? })
    }

    /// Normalized gains in decode order (strongest first).
    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma.clone()
    }

    /// Original device id at each decode position.
    #[getter]
    fn order(&self) -> Vec<usize> {
        self.inner.order.clone()
    }

    #[getter]
    fn gains(&self) -> Vec<f64> {
        self.inner.gains.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.n_devices()
    }
}

#[pyclass(name = "SchemeResult", skip_from_py_object)]
struct PySchemeResult {
    #[pyo3(get)]
    scheme: String,
    #[pyo3(get)]
    status: String,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    tau_c: f64,
    #[pyo3(get)]
    tau_i: f64,
    #[pyo3(get)]
    e_c: Vec<f64>,
    #[pyo3(get)]
    e_i: Vec<f64>,
    #[pyo3(get)]
    common_bits: Vec<f64>,
    #[pyo3(get)]
    individual_bits: Vec<f64>,
    /// Objective after each SCA iteration (empty for one-shot schemes).
    #[pyo3(get)]
    phi_trace: Vec<f64>,
    #[pyo3(get)]
    selected_device: Option<usize>,
    #[pyo3(get)]
    oma_slots: Option<Vec<f64>>,
}

#[pymethods]
impl PySchemeResult {
    fn __repr__(&self) -> String {
        format!("SchemeResult(scheme={:?}, status={:?}, objective={})", self.scheme, self.status, self.objective)
    }
}

#[pyfunction]
fn noise_power(scenario: &PyScenario) -> f64 {
    channel::noise_power(&scenario.inner)
}

#[pyfunction]
fn sample_channel(scenario: &PyScenario, seed: u64) -> PyResult<PyChannel> {
    Ok(PyChannel { inner: channel::sample_channel(&scenario.inner, seed).map_err(to_py)? })
}

/// Solves one scheme: "proposed", "s-noma", "s-oma" or "benchmark".
#[pyfunction]
#[pyo3(signature = (scenario, channel, scheme="proposed", eps=1e-4, n_max=50))]
fn solve(
    py: Python<'_>,
    scenario: &PyScenario,
    channel: &PyChannel,
    scheme: &str,
    eps: f64,
    n_max: usize,
) -> PyResult<PySchemeResult> {
    let scheme: Scheme = scheme.parse().map_err(to_py)?;
    let opts = ScaOptions { eps, n_max, ..ScaOptions::default() };
    let (s, ch) = (scenario.inner.clone(), channel.inner.clone());
    let r = py
        .detach(move || baselines::solve_scheme(scheme, &s, &ch, &opts))
        .map_err(to_py)?;
    Ok(PySchemeResult {
        scheme: r.scheme.name().to_string(),
        status: format!("{:?}", r.status).to_lowercase(),
        objective: r.objective,
        tau_c: r.allocation.tau_c,
        tau_i: r.allocation.tau_i,
        e_c: r.allocation.e_c,
        e_i: r.allocation.e_i,
        common_bits: r.common_bits,
        individual_bits: r.individual_bits,
        phi_trace: r.trace.map(|t| t.phi()).unwrap_or_default(),
        selected_device: r.selected_device,
        oma_slots: r.oma_slots,
    })
}

#[pyfunction]
fn jain_index(x: Vec<f64>) -> PyResult<f64> {
    Ok(metrics::jain_index(&x).map_err(to_py)?.index)
}

/// Exhaustive-search objective for N <= 2, or None if nothing is feasible.
#[pyfunction]
#[pyo3(signature = (scenario, channel, resolution=64))]
fn grid_oracle(py: Python<'_>, scenario: &PyScenario, channel: &PyChannel, resolution: usize) -> PyResult<Option<f64>> {
    let (s, ch) = (scenario.inner.clone(), channel.inner.clone());
    let r = py.detach(move || harness::grid_oracle(&s, &ch, resolution)).map_err(to_py)?;
    Ok(r.map(|o| o.objective))
}

/// First-order coefficients `(B, D, Q)` of the subtracted rate term.
#[pyfunction]
fn taylor_terms(tau_i: f64, s3: Vec<f64>, bandwidth_hz: f64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let t = sca::taylor_terms(&SlackPoint { tau_i, s3 }, bandwidth_hz).map_err(to_py)?;
    Ok((t.b, t.d, t.q))
}

/// Common-stage sum throughput in bits.
#[pyfunction]
fn common_sum_rate(tau_c: f64, e_c: Vec<f64>, gamma: Vec<f64>, bandwidth_hz: f64) -> PyResult<f64> {
    model::common_sum_rate(tau_c, &e_c, &gamma, bandwidth_hz).map_err(to_py)
}

/// Per-device individual-stage throughputs in bits.
#[pyfunction]
fn individual_rates(tau_i: f64, e_i: Vec<f64>, gamma: Vec<f64>, bandwidth_hz: f64) -> PyResult<Vec<f64>> {
    model::individual_rates(tau_i, &e_i, &gamma, bandwidth_hz).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "noma_offload")]
fn py_init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PySchemeResult>()?;
    m.add_function(wrap_pyfunction!(noise_power, m)?)?;
    m.add_function(wrap_pyfunction!(sample_channel, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(jain_index, m)?)?;
    m.add_function(wrap_pyfunction!(grid_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(taylor_terms, m)?)?;
    m.add_function(wrap_pyfunction!(common_sum_rate, m)?)?;
    m.add_function(wrap_pyfunction!(individual_rates, m)?)?;
    Ok(())
}
