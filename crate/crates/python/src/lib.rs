//! Python bindings: potentials, scaling parameters, chain simulation,
//! correlations, kernels, fields and the SPDE simulators.

use ofl_core::chain::{self, ChainState, SimOptions};
use ofl_core::correlation;
use ofl_core::fields;
use ofl_core::gibbs::{GibbsMeasure, GibbsParams, GibbsSampler};
use ofl_core::nlfh;
use ofl_core::potential::{self as pot, PotentialSpec};
use ofl_core::rng::stream;
use ofl_core::spde;
use ofl_core::spectral::{self, LevyForm};
use ofl_core::test_function::TestFunction;
use ofl_core::OflError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: OflError) -> PyErr {
    match e {
        OflError::Config(_) | OflError::Parameter { .. } | OflError::Shape { .. } | OflError::WindowOverflow { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn test_fn(s: &str) -> PyResult<TestFunction> {
    TestFunction::parse(s).map_err(err)
}

#[pyclass(name = "Potential", module = "ofl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPotential {
    spec: PotentialSpec,
}

#[pymethods]
impl PyPotential {
    #[staticmethod]
    fn harmonic() -> Self {
        PyPotential { spec: PotentialSpec::harmonic() }
    }

    #[staticmethod]
    fn fpu_alpha(alpha: f64) -> Self {
        PyPotential { spec: PotentialSpec::fpu_alpha(alpha) }
    }

    #[staticmethod]
    fn toda() -> Self {
        PyPotential { spec: PotentialSpec::toda() }
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name()
    }

    /// `d^order/dx^order` of `β⁻²V(βx)`.
    fn scaled(&self, beta: f64, order: usize, x: f64) -> PyResult<f64> {
        pot::eval_scaled(&self.spec, beta, order, x).map_err(err)
    }

    /// `(c3, c4, c5)`.
    fn taylor(&self) -> (f64, f64, f64) {
        let t = pot::taylor_data(&self.spec);
        (t.c3, t.c4, t.c5)
    }

    fn __repr__(&self) -> String {
        format!("Potential({})", self.spec.name())
    }
}

#[pyclass(name = "ScalingParams", module = "ofl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    p: chain::ScalingParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (a, kappa, gamma, beta_exp, lam=0.0))]
    fn new(a: f64, kappa: f64, gamma: f64, beta_exp: f64, lam: f64) -> Self {
        PyParams { p: chain::ScalingParams::new(a, kappa, gamma, beta_exp, lam) }
    }

    #[staticmethod]
    #[pyo3(signature = (kappa, gamma, beta_exp, lam=0.0))]
    fn levy_regime(kappa: f64, gamma: f64, beta_exp: f64, lam: f64) -> Self {
        PyParams { p: chain::ScalingParams::levy_regime(kappa, gamma, beta_exp, lam) }
    }

    fn theta(&self, n: usize) -> f64 {
        self.p.theta(n)
    }

    fn alpha(&self, n: usize) -> f64 {
        self.p.alpha(n)
    }

    fn beta(&self, n: usize) -> f64 {
        self.p.beta(n)
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.p.lambda
    }

    fn __repr__(&self) -> String {
        let p = &self.p;
        format!("ScalingParams(a={}, kappa={}, gamma={}, beta_exp={}, lam={})", p.a, p.kappa, p.gamma, p.beta_exp, p.lambda)
    }
}

/// Moments `E[η^k]`, `k = 1..=4`, of the single-site invariant measure.
#[pyfunction]
#[pyo3(signature = (potential, beta, lam=0.0, b=1.0))]
fn gibbs_moments(potential: &PyPotential, beta: f64, lam: f64, b: f64) -> PyResult<Vec<f64>> {
    let m = GibbsMeasure::new(GibbsParams::new(beta, b, lam), &potential.spec).map_err(err)?;
    Ok((1..=4).map(|k| m.moment(k)).collect())
}

#[pyfunction]
#[pyo3(signature = (potential, beta, count, seed, lam=0.0, b=1.0))]
fn gibbs_sample(potential: &PyPotential, beta: f64, count: usize, seed: u64, lam: f64, b: f64) -> PyResult<Vec<f64>> {
    let s = GibbsSampler::new(GibbsParams::new(beta, b, lam), &potential.spec).map_err(err)?;
    Ok(s.sample_vec(&mut stream(seed, 0), count))
}

#[pyfunction]
fn sample_stationary(n: usize, potential: &PyPotential, params: &PyParams, seed: u64) -> PyResult<Vec<f64>> {
    Ok(chain::sample_stationary(n, &potential.spec, &params.p, &mut stream(seed, 0)).map_err(err)?.eta)
}

/// Runs the chain from `eta`; returns `(times, states, exchanges)`.
#[pyfunction]
#[pyo3(signature = (eta, potential, params, t_end, seed, record=None, ode_tol=1e-9))]
fn simulate(
    py: Python<'_>,
    eta: Vec<f64>,
    potential: &PyPotential,
    params: &PyParams,
    t_end: f64,
    seed: u64,
    record: Option<Vec<f64>>,
    ode_tol: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, u64)> {
    let mut s = ChainState::new(eta).map_err(err)?;
    let mut o = SimOptions::new(ode_tol);
    o.record_times = record.unwrap_or_else(|| vec![t_end]);
    let (spec, p) = (potential.spec.clone(), params.p);
    let tr = py
        .detach(move || chain::simulate(&mut s, &spec, &p, t_end, &o, &mut stream(seed, 0)))
        .map_err(err)?;
    Ok((tr.times, tr.states, tr.exchanges))
}

/// Exact harmonic `S_j(t)`, one row per time, offsets `0..n`.
#[pyfunction]
fn harmonic_correlation(py: Python<'_>, n: usize, params: &PyParams, times: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let p = params.p;
    py.detach(move || correlation::harmonic_correlation(n, &p, &times)).map_err(err)
}

/// `(L1, Linf, mass, skew_data, skew_kernel)` of a lattice-order row.
#[pyfunction]
#[pyo3(signature = (row, t, gamma, kappa, form="lattice", mirror=true))]
fn compare_kernel(row: Vec<f64>, t: f64, gamma: f64, kappa: f64, form: &str, mirror: bool) -> PyResult<(f64, f64, f64, f64, f64)> {
    let f = LevyForm::parse(form).map_err(err)?;
    let c = correlation::compare_kernel(&row, t, gamma, kappa, f, mirror).map_err(err)?;
    Ok((c.l1, c.linf, c.mass, c.skew_data, c.skew_kernel))
}

/// Kernel on the unit torus at `m` sites, grid order `x = -1/2 + j/m`.
#[pyfunction]
#[pyo3(signature = (gamma, kappa, t, m, form="lattice"))]
fn kernel_torus(gamma: f64, kappa: f64, t: f64, m: usize, form: &str) -> PyResult<Vec<f64>> {
    spectral::kernel_torus_form(gamma, kappa, t, m, LevyForm::parse(form).map_err(err)?).map_err(err)
}

#[pyfunction]
fn discrete_derivatives(phi: &str, n: usize, j: i64) -> PyResult<(f64, f64, f64)> {
    Ok(fields::discrete_derivatives(&test_fn(phi)?, n, j))
}

#[pyfunction]
fn regime_parameters(case: &str, n: usize, params: &PyParams, c3: f64) -> PyResult<(f64, f64)> {
    let c = match case {
        "I" => fields::Regime::I,
        "II" => fields::Regime::II,
        _ => return Err(PyValueError::new_err("case must be 'I' or 'II'")),
    };
    fields::regime_parameters(c, n, &params.p, c3).map_err(err)
}

#[pyfunction]
fn local_average(series: Vec<f64>, j: i64, ell: usize, right: bool) -> PyResult<f64> {
    let side = if right { fields::Side::Right } else { fields::Side::Left };
    fields::local_average(&series, j, ell, side).map_err(err)
}

/// Volume, energy or combined (`u` given) fluctuation field.
#[pyfunction]
#[pyo3(signature = (eta, potential, params, phi, u=None, t=0.0, velocity=0.0))]
fn fluctuation_field(eta: Vec<f64>, potential: &PyPotential, params: &PyParams, phi: &str, u: Option<f64>, t: f64, velocity: f64) -> PyResult<f64> {
    let kind = match u {
        Some(u) => fields::FieldKind::Combined(u),
        None => fields::FieldKind::Volume,
    };
    Ok(fields::fluctuation_field(&eta, &potential.spec, &params.p, &test_fn(phi)?, kind, t, velocity).map_err(err)?.value)
}

/// `(mode1, mode2, table)` for the zero pattern of `(G¹₁₁, G¹₂₂, G²₁₁, G²₂₂)`.
#[pyfunction]
fn classify_pattern(g1_11: bool, g1_22: bool, g2_11: bool, g2_22: bool) -> (String, String, String) {
    let c = nlfh::classify_pattern(g1_11, g1_22, g2_11, g2_22);
    (c.mode1.name().into(), c.mode2.name().into(), format!("{:?}", c.table))
}

/// Stationary stochastic Burgers spectrum `[(k, variance, stderr)]`.
#[pyfunction]
#[pyo3(signature = (m, nu, lam, d, dt, t_end, members, seed, record_every=64))]
#[allow(clippy::too_many_arguments)]
fn sbe_spectrum(py: Python<'_>, m: usize, nu: f64, lam: f64, d: f64, dt: f64, t_end: f64, members: usize, seed: u64, record_every: usize) -> PyResult<Vec<(usize, f64, f64)>> {
    let cfg = spde::SpdeConfig::new(m, nu, lam, d, dt);
    let paths = py
        .detach(move || chain::run_ensemble(members, seed, |_, rng| spde::simulate_sbe(&cfg, t_end, record_every, rng)))
        .map_err(err)?;
    Ok(spde::spectrum(&paths, 0.0).iter().map(|r| (r.k, r.variance, r.stderr)).collect())
}

#[pymodule]
fn ofl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(gibbs_moments, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_sample, m)?)?;
    m.add_function(wrap_pyfunction!(sample_stationary, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(compare_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_torus, m)?)?;
    m.add_function(wrap_pyfunction!(discrete_derivatives, m)?)?;
    m.add_function(wrap_pyfunction!(regime_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(local_average, m)?)?;
    m.add_function(wrap_pyfunction!(fluctuation_field, m)?)?;
    m.add_function(wrap_pyfunction!(classify_pattern, m)?)?;
    m.add_function(wrap_pyfunction!(sbe_spectrum, m)?)?;
    Ok(())
}
