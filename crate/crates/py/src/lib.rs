//! Python module `nustab` wrapping the design pipeline. Matrices cross the
//! boundary as lists of rows.

use nustab::certify::{self, SearchOptions};
use nustab::gain_init::PoleSpec;
use nustab::linalg::{self, Matrix, Vector};
use nustab::model::{self, ContinuousPlant, DesignCertificate, SamplingSchedule, SamplingWindow, TargetRule};
use nustab::sim::{self, ScheduleKind};
use nustab::GainChoice;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(nustab, ValidationError, PyValueError, "Invalid input: shapes, values, or stabilizability.");
create_exception!(nustab, SynthesisError, PyRuntimeError, "The design or assignment could not be carried out.");

fn to_py(e: nustab::Error) -> PyErr {
    if e.is_validation() {
        ValidationError::new_err(e.to_string())
    } else {
        SynthesisError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Matrix> {
    linalg::from_rows(&rows, what).map_err(to_py)
}

/// Continuous plant `x' = A x + B u`.
#[pyclass(name = "Plant", module = "nustab", frozen)]
pub struct PyPlant {
    inner: ContinuousPlant,
}

#[pymethods]
impl PyPlant {
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = ContinuousPlant::new(matrix(a, "A")?, matrix(b, "B")?).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Parse a JSON plant configuration.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        Ok(Self { inner: model::load_plant(text).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter(A)]
    fn a(&self) -> Vec<Vec<f64>> {
        linalg::to_rows(self.inner.a())
    }

    #[getter(B)]
    fn b(&self) -> Vec<Vec<f64>> {
        linalg::to_rows(self.inner.b())
    }

    fn __repr__(&self) -> String {
        format!("Plant(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// Design certificate holding the modal transform and `h_star`.
#[pyclass(name = "Certificate", module = "nustab", frozen)]
pub struct PyCertificate {
    inner: DesignCertificate,
}

#[pymethods]
impl PyCertificate {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: DesignCertificate::from_json(text).map_err(to_py)?.0 })
    }

    #[pyo3(signature = (manifest_sha256 = None))]
    fn to_json(&self, manifest_sha256: Option<String>) -> String {
        self.inner.to_json(manifest_sha256)
    }

    /// Check the certificate against a plant.
    fn validate(&self, plant: &PyPlant) -> PyResult<()> {
        self.inner.validate(&plant.inner).map_err(to_py)
    }

    #[getter]
    fn h_star(&self) -> f64 {
        self.inner.h_star
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn right_censored(&self) -> bool {
        self.inner.right_censored
    }

    #[getter]
    fn cond_t(&self) -> f64 {
        self.inner.transform.cond_t
    }

    #[getter(T)]
    fn t(&self) -> Vec<Vec<f64>> {
        linalg::to_rows(&self.inner.transform.t)
    }

    #[getter(T_inv)]
    fn t_inv(&self) -> Vec<Vec<f64>> {
        linalg::to_rows(&self.inner.transform.t_inv)
    }

    #[getter(K_c)]
    fn k_c(&self) -> Vec<Vec<f64>> {
        linalg::to_rows(&self.inner.transform.k_c)
    }

    #[getter(D)]
    fn d(&self) -> Vec<f64> {
        self.inner.transform.d.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(h_star={}, gamma={}, right_censored={})",
            self.inner.h_star, self.inner.gamma, self.inner.right_censored
        )
    }
}

/// Design `K_c` and certify `h_star`. The gain comes from `k_c` when given,
/// else from `poles`, else from the default poles.
#[pyfunction]
#[pyo3(signature = (plant, gamma = 1.0, theta = 0.5, mu = 0.02, poles = None, k_c = None, grid_points = 256, tol_h = 1e-4, h_hi = None))]
#[allow(clippy::too_many_arguments)]
fn design(
    py: Python<'_>,
    plant: &PyPlant,
    gamma: f64,
    theta: f64,
    mu: f64,
    poles: Option<Vec<f64>>,
    k_c: Option<Vec<Vec<f64>>>,
    grid_points: usize,
    tol_h: f64,
    h_hi: Option<f64>,
) -> PyResult<PyCertificate> {
    let choice = match (k_c, poles) {
        (Some(_), Some(_)) => return Err(ValidationError::new_err("give either poles or k_c, not both")),
        (Some(k), None) => GainChoice::Gain(matrix(k, "K_c")?),
        (None, Some(p)) => GainChoice::Poles(PoleSpec::new(p).map_err(to_py)?),
        (None, None) => GainChoice::Default,
    };
    let rule = TargetRule { theta, mu };
    let search = SearchOptions { h_hi, grid_points, tol_h };
    let inner = py.detach(|| nustab::design(&plant.inner, choice, gamma, rule, search)).map_err(to_py)?;
    Ok(PyCertificate { inner })
}

/// Scheduled gain at period `h`, returned as a dict keyed like
/// `ScheduledGain`.
#[pyfunction]
fn gain_at<'py>(py: Python<'py>, plant: &PyPlant, cert: &PyCertificate, h: f64) -> PyResult<Bound<'py, PyDict>> {
    let g = certify::gain_at(&plant.inner, &cert.inner, h).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("h", g.h)?;
    out.set_item("K", linalg::to_rows(&g.k))?;
    out.set_item("K_hat", linalg::to_rows(&g.k_hat))?;
    out.set_item("targets", g.targets)?;
    out.set_item("sigma_achieved", g.sigma_achieved)?;
    Ok(out)
}

/// Residual singular values `a_1 <= ... <= a_n` at period `h`.
#[pyfunction]
fn residual_spectrum(plant: &PyPlant, cert: &PyCertificate, h: f64) -> PyResult<Vec<f64>> {
    Ok(certify::residual_at(&plant.inner, &cert.inner.transform, h).map_err(to_py)?.a)
}

/// Sweep table as CSV text.
#[pyfunction]
#[pyo3(signature = (plant, cert, h_lo = 0.01, h_hi = 1.0, steps = 100))]
fn sweep_csv(
    py: Python<'_>,
    plant: &PyPlant,
    cert: &PyCertificate,
    h_lo: f64,
    h_hi: f64,
    steps: usize,
) -> PyResult<String> {
    let table = py.detach(|| certify::sweep(&plant.inner, &cert.inner, h_lo, h_hi, steps)).map_err(to_py)?;
    Ok(table.to_csv())
}

/// Sampling periods from a named schedule over `[h_min, h_max]`.
#[pyfunction]
#[pyo3(signature = (kind, h_min, h_max, n, seed = 0, plant = None, cert = None))]
fn gen_schedule(
    kind: &str,
    h_min: f64,
    h_max: f64,
    n: usize,
    seed: u64,
    plant: Option<&PyPlant>,
    cert: Option<&PyCertificate>,
) -> PyResult<Vec<f64>> {
    let kind: ScheduleKind = kind.parse().map_err(to_py)?;
    let window = SamplingWindow::new(h_min, h_max).map_err(to_py)?;
    let design = plant.zip(cert).map(|(p, c)| (&p.inner, &c.inner));
    Ok(sim::gen_schedule(kind, &window, n, seed, design).map_err(to_py)?.periods().to_vec())
}

/// Simulate the closed loop. The returned dict holds the sampled trajectory
/// and the Lyapunov check verdict.
#[pyfunction]
#[pyo3(signature = (plant, cert, periods, x0, substeps = 1))]
fn simulate<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    cert: &PyCertificate,
    periods: Vec<f64>,
    x0: Vec<f64>,
    substeps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let schedule = SamplingSchedule::new(periods).map_err(to_py)?;
    let x0 = Vector::from_vec(x0);
    let traj = sim::simulate(&plant.inner, &cert.inner, &schedule, &x0, substeps).map_err(to_py)?;
    let report = sim::lyapunov_check(&traj);
    let out = PyDict::new(py);
    out.set_item("t", traj.samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
    out.set_item("x", traj.samples.iter().map(|s| s.x.as_slice().to_vec()).collect::<Vec<_>>())?;
    out.set_item(
        "u",
        traj.samples.iter().filter_map(|s| s.u.as_ref().map(|u| u.as_slice().to_vec())).collect::<Vec<_>>(),
    )?;
    out.set_item("lyap", traj.lyap.clone())?;
    out.set_item("csv", traj.to_csv())?;
    out.set_item("lyapunov_ok", report.passed())?;
    out.set_item("max_ratio", report.max_ratio)?;
    Ok(out)
}

/// Re-probe the certificate `refinement` times finer; returns
/// `(probes, violations, max_sigma_bar)`.
#[pyfunction]
#[pyo3(signature = (plant, cert, refinement = 8))]
fn verify(py: Python<'_>, plant: &PyPlant, cert: &PyCertificate, refinement: usize) -> (usize, Vec<(f64, f64)>, f64) {
    let r = py.detach(|| certify::verify_certificate(&plant.inner, &cert.inner, refinement));
    (r.probes, r.violations, r.max_sigma_bar)
}

/// Matrix exponential.
#[pyfunction]
fn expm(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(linalg::to_rows(&nustab::matfun::expm(&matrix(a, "A")?).map_err(to_py)?))
}

#[pymodule]
#[pyo3(name = "nustab")]
fn nustab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlant>()?;
    m.add_class::<PyCertificate>()?;
    m.add("ValidationError", m.py().get_type::<ValidationError>())?;
    m.add("SynthesisError", m.py().get_type::<SynthesisError>())?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(gain_at, m)?)?;
    m.add_function(wrap_pyfunction!(residual_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    m.add_function(wrap_pyfunction!(gen_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(expm, m)?)?;
    Ok(())
}
