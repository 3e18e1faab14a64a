//! Python bindings. Graphs cross the boundary as JSON documents.

use denfg::bethe;
use denfg::exact::{self, DEFAULT_BUDGET};
use denfg::experiment::{self, ExperimentSpec, Family};
use denfg::gen::{self, QuantumChainSpec};
use denfg::graph::{load_graph, save_graph, validate_psd, validate_structure};
use denfg::spa::{self, InitMode, SpaConfig};
use denfg::tensor::PSD_TOL;
use denfg::{ComplexTensor, DeNfg, Error};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn graph(json: &str) -> PyResult<DeNfg> {
    load_graph(json).map_err(py_err)
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<ComplexTensor> {
    ComplexTensor::from_rows(&rows).map_err(py_err)
}

/// Structural and PSD violations of a graph document, as messages.
#[pyfunction]
fn validate(json: &str) -> PyResult<Vec<String>> {
    let g = denfg::graph::parse_graph(json).map_err(py_err)?;
    let structural = validate_structure(&g);
    let found = if structural.is_empty() { validate_psd(&g, PSD_TOL) } else { structural };
    Ok(found.iter().map(ToString::to_string).collect())
}

/// Runs SPA and returns `{"converged", "iterations", "z_bethe", "residuals"}`.
#[pyfunction]
#[pyo3(signature = (json, max_iters = 1000, tol = 1e-10, damping = 0.0, seed = None))]
fn run_spa<'py>(
    py: Python<'py>,
    json: &str,
    max_iters: usize,
    tol: f64,
    damping: f64,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let g = graph(json)?;
    let cfg = SpaConfig { max_iters, conv_tol: tol, damping, ..SpaConfig::default() };
    let init = seed.map_or(InitMode::Uniform, InitMode::Seeded);
    let mut res = spa::run_spa(&g, &cfg, init).map_err(py_err)?;
    let breakdown = bethe::annotate(&g, &mut res).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("converged", res.converged)?;
    d.set_item("iterations", res.iterations)?;
    d.set_item("z_bethe", breakdown.z_bethe)?;
    d.set_item("residuals", res.residuals)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (json, budget = DEFAULT_BUDGET))]
fn exact_partition_sum(json: &str, budget: u64) -> PyResult<Complex64> {
    exact::exact_partition_sum(&graph(json)?, budget).map_err(py_err)
}

#[pyfunction]
fn ryser_permanent(theta: Vec<Vec<Complex64>>) -> PyResult<Complex64> {
    exact::ryser_permanent(&matrix(theta)?).map_err(py_err)
}

/// `(z_exact, lambda0, z_bethe_predicted)` for the `n`-cycle built from a
/// `q² × q²` grouped factor matrix.
#[pyfunction]
fn cycle_spectral_z(f: Vec<Vec<Complex64>>, n: usize) -> PyResult<(Complex64, f64, f64)> {
    let m = matrix(f)?;
    let q = (m.shape()[0] as f64).sqrt().round() as usize;
    let t = m.reshape(vec![q, q, q, q]).map_err(py_err)?;
    let s = exact::cycle_spectral_z(&t, n).map_err(py_err)?;
    Ok((s.z_exact, s.lambda0, s.z_bethe_predicted))
}

#[pyfunction]
#[pyo3(signature = (n = 4, q = 2, seed = 0))]
fn gen_cycle(n: usize, q: usize, seed: u64) -> PyResult<String> {
    let f = gen::random_psd_chi2(&mut gen::rng(seed), q * q);
    Ok(save_graph(&gen::cycle_denfg(&f, n).map_err(py_err)?))
}

#[pyfunction]
#[pyo3(signature = (n = 3, seed = 0))]
fn gen_permanent(n: usize, seed: u64) -> PyResult<String> {
    let grid = gen::random_theta_tilde_grid(&mut gen::rng(seed), n);
    Ok(save_graph(&gen::permanent_denfg(&grid).map_err(py_err)?))
}

#[pyfunction]
fn gen_quantum_demo() -> PyResult<String> {
    Ok(save_graph(&gen::quantum_chain_denfg(&QuantumChainSpec::demo()).map_err(py_err)?))
}

/// Runs an experiment and returns its CSV text.
#[pyfunction]
#[pyo3(signature = (family, samples = 100, n = None, q = 2, seed = 0))]
fn run_experiment(family: &str, samples: usize, n: Option<usize>, q: usize, seed: u64) -> PyResult<String> {
    let family: Family = family.parse().map_err(py_err)?;
    let mut spec = ExperimentSpec::new(family);
    spec.samples = samples;
    if let Some(n) = n {
        spec.n = n;
    }
    spec.q = q;
    spec.base_seed = seed;
    let records = experiment::run_experiment(&spec).map_err(py_err)?;
    experiment::csv_string(&records).map_err(py_err)
}

#[pymodule]
fn denfg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_spa, m)?)?;
    m.add_function(wrap_pyfunction!(exact_partition_sum, m)?)?;
    m.add_function(wrap_pyfunction!(ryser_permanent, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_spectral_z, m)?)?;
    m.add_function(wrap_pyfunction!(gen_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(gen_permanent, m)?)?;
    m.add_function(wrap_pyfunction!(gen_quantum_demo, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
