//! Python bindings. Vectors are plain lists of floats, matrices are lists of
//! rows, index sets are lists of 0-based ints.

use msdetect::bounds::{self, Lemma, SandwichVariant};
use msdetect::coherence::{subspace_coherence, vector_coherence as core_vector_coherence};
use msdetect::detect::{self as core_detect, DofPolicy, TestConfig};
use msdetect::estimator;
use nalgebra::DMatrix;
use msdetect::sampling::{self, SeedSpec};
use msdetect::simlab;
use msdetect::vecspace::{self, DenseVector, SampleIndexSet, SamplingMode};
use msdetect::Error;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: Error) -> PyErr {
    match &err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let r = rows.first().map_or(0, Vec::len);
    if n == 0 || r == 0 {
        return Err(PyValueError::new_err("matrix must be non-empty"));
    }
    if rows.iter().any(|row| row.len() != r) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(n, r, |i, j| rows[i][j]))
}

fn parse_mode(mode: &str) -> PyResult<SamplingMode> {
    mode.parse().map_err(to_py)
}

fn index_set(indices: Vec<usize>, n: usize) -> PyResult<SampleIndexSet> {
    let mut seen = vec![false; n];
    let repeated = indices.iter().any(|&i| i < n && std::mem::replace(&mut seen[i], true));
    let mode = if repeated { SamplingMode::WithReplacement } else { SamplingMode::WithoutReplacement };
    SampleIndexSet::new(indices, mode, n).map_err(to_py)
}

fn vector(values: Vec<f64>) -> PyResult<DenseVector> {
    DenseVector::new(values).map_err(to_py)
}

/// Orthonormal basis of an r-dimensional subspace of R^n.
#[pyclass(name = "SubspaceBasis", module = "msdetect", frozen)]
struct PySubspaceBasis {
    inner: vecspace::SubspaceBasis,
}

#[pymethods]
impl PySubspaceBasis {
    /// Orthonormalizes the columns of `rows` (n lists of r floats).
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = vecspace::orthonormalize(&matrix_from_rows(&rows)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Wraps columns that are already orthonormal (checked to 1e-10).
    #[staticmethod]
    fn from_orthonormal(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = vecspace::SubspaceBasis::from_orthonormal(matrix_from_rows(&rows)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, r, seed, stream = simlab::BASIS_STREAM))]
    fn gaussian(n: usize, r: usize, seed: u64, stream: u64) -> PyResult<Self> {
        let inner = simlab::gen_gaussian_basis(n, r, SeedSpec::new(seed, stream)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, r, frequencies = None))]
    fn fourier(n: usize, r: usize, frequencies: Option<Vec<usize>>) -> PyResult<Self> {
        let freqs = match frequencies {
            Some(f) => f,
            None => simlab::default_fourier_frequencies(n, r).map_err(to_py)?,
        };
        let inner = simlab::gen_fourier_basis(n, r, &freqs).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, r, spike, seed, stream = simlab::BASIS_STREAM))]
    fn coherent(n: usize, r: usize, spike: f64, seed: u64, stream: u64) -> PyResult<Self> {
        let inner = simlab::gen_coherent_basis(n, r, spike, SeedSpec::new(seed, stream)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        let m = self.inner.matrix();
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }

    /// `(mu, argmax_row)`.
    fn coherence(&self) -> (f64, usize) {
        let rep = subspace_coherence(&self.inner);
        (rep.mu, rep.argmax_index)
    }

    fn project(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(vecspace::project_full(&self.inner, &vector(v)?).map_err(to_py)?.into_vec())
    }

    fn random_perp_vector(&self, seed: u64) -> PyResult<Vec<f64>> {
        let v = simlab::gen_perp_vector(&self.inner, SeedSpec::new(seed, simlab::VECTOR_STREAM)).map_err(to_py)?;
        Ok(v.into_vec())
    }

    fn random_subspace_vector(&self, seed: u64) -> PyResult<Vec<f64>> {
        let v = simlab::gen_subspace_vector(&self.inner, SeedSpec::new(seed, simlab::VECTOR_STREAM)).map_err(to_py)?;
        Ok(v.into_vec())
    }

    fn __repr__(&self) -> String {
        format!("SubspaceBasis(n={}, r={})", self.inner.n(), self.inner.r())
    }
}

/// `(mu, argmax_index)` of the line spanned by `z`.
#[pyfunction]
fn vector_coherence(z: Vec<f64>) -> PyResult<(f64, usize)> {
    let rep = core_vector_coherence(&vector(z)?).map_err(to_py)?;
    Ok((rep.mu, rep.argmax_index))
}

#[pyfunction]
#[pyo3(signature = (mode, n, m, seed, stream = 0))]
fn sample_indices(mode: &str, n: usize, m: usize, seed: u64, stream: u64) -> PyResult<Vec<usize>> {
    let set = sampling::sample(parse_mode(mode)?, n, m, SeedSpec::new(seed, stream)).map_err(to_py)?;
    Ok(set.indices().to_vec())
}

/// Residual energy of `v` observed on `indices`, as a dict with keys
/// `t`, `rescaled`, `m`, `n`, `rank`.
#[pyfunction]
fn residual_energy<'py>(
    py: Python<'py>,
    basis: &PySubspaceBasis,
    v: Vec<f64>,
    indices: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let omega = index_set(indices, basis.inner.n())?;
    let rep = estimator::residual_energy(&basis.inner, &vector(v)?, &omega).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", rep.t)?;
    d.set_item("rescaled", rep.rescaled)?;
    d.set_item("m", rep.m)?;
    d.set_item("n", rep.n)?;
    d.set_item("rank", rep.rank)?;
    Ok(d)
}

#[pyfunction]
fn full_residual_energy(basis: &PySubspaceBasis, v: Vec<f64>) -> PyResult<f64> {
    estimator::full_residual_energy(&basis.inner, &vector(v)?).map_err(to_py)
}

#[pyfunction]
fn zero_fill_residual(basis: &PySubspaceBasis, v: Vec<f64>, indices: Vec<usize>) -> PyResult<f64> {
    let omega = index_set(indices, basis.inner.n())?;
    estimator::zero_fill_residual(&basis.inner, &vector(v)?, &omega).map_err(to_py)
}

#[pyfunction]
fn min_samples(r: usize, mu_s: f64, delta: f64) -> PyResult<usize> {
    bounds::min_samples(r, mu_s, delta).map_err(to_py)
}

/// `alpha`, `beta`, `gamma` and the two-sided bound for a given full
/// residual. `lower` is None when gamma >= 1.
#[pyfunction]
#[pyo3(signature = (n, r, m, delta, mu_s, mu_y, full_residual = 1.0, squared = false))]
#[allow(clippy::too_many_arguments)]
fn theorem_bounds<'py>(
    py: Python<'py>,
    n: usize,
    r: usize,
    m: usize,
    delta: f64,
    mu_s: f64,
    mu_y: f64,
    full_residual: f64,
    squared: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let variant = if squared { SandwichVariant::ProofSquared } else { SandwichVariant::Statement };
    let p = bounds::theorem_params(n, r, m, delta, mu_s, mu_y).map_err(to_py)?;
    let lower = match bounds::sandwich(&p, full_residual, variant) {
        Ok(b) => Some(b.lower),
        Err(Error::GammaTooLarge { .. }) => None,
        Err(e) => return Err(to_py(e)),
    };
    let d = PyDict::new(py);
    d.set_item("alpha", p.alpha)?;
    d.set_item("beta", p.beta)?;
    d.set_item("gamma", p.gamma)?;
    d.set_item("lower", lower)?;
    d.set_item("upper", bounds::upper_bound(&p, full_residual, variant))?;
    d.set_item("confidence", 1.0 - 4.0 * delta)?;
    Ok(d)
}

/// Monte Carlo failure count for lemma 1, 2 or 3. Lemmas 1 and 2 need `y`
/// in the orthogonal complement of the basis.
#[pyfunction]
#[pyo3(signature = (lemma, basis, m, delta, trials, seed, y = None))]
#[allow(clippy::too_many_arguments)]
fn validate_lemma<'py>(
    py: Python<'py>,
    lemma: u8,
    basis: &PySubspaceBasis,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
    y: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let lemma = Lemma::from_id(lemma).map_err(to_py)?;
    let need_y = || -> PyResult<DenseVector> {
        vector(y.clone().ok_or_else(|| PyValueError::new_err("lemmas 1 and 2 need y"))?)
    };
    let b = &basis.inner;
    let rep = match lemma {
        Lemma::ObservedEnergy => {
            let y = need_y()?;
            py.detach(|| bounds::validate_lemma1(b, &y, m, delta, trials, seed))
        }
        Lemma::CrossTerm => {
            let y = need_y()?;
            py.detach(|| bounds::validate_lemma2(b, &y, m, delta, trials, seed))
        }
        Lemma::GramConditioning => py.detach(|| bounds::validate_lemma3(b, m, delta, trials, seed)),
    }
    .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("lemma", rep.lemma.id())?;
    d.set_item("trials", rep.trials)?;
    d.set_item("failures", rep.failures)?;
    d.set_item("empirical_rate", rep.empirical_rate)?;
    d.set_item("certified_rate", rep.certified_rate)?;
    d.set_item("within_certified", rep.within_certified())?;
    Ok(d)
}

/// Runs the matched subspace test on `v` observed at `indices`. With
/// `sigma == 0` the noiseless test is used and `v` is the clean vector;
/// otherwise `v` holds the (noisy) observations, one per index.
#[pyfunction]
#[pyo3(signature = (basis, v, indices, sigma, lambda_fa, dof_policy = "residual"))]
fn detect<'py>(
    py: Python<'py>,
    basis: &PySubspaceBasis,
    v: Vec<f64>,
    indices: Vec<usize>,
    sigma: f64,
    lambda_fa: f64,
    dof_policy: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let policy: DofPolicy = dof_policy.parse().map_err(to_py)?;
    let cfg = TestConfig::new(lambda_fa, sigma, policy).map_err(to_py)?;
    let omega = index_set(indices, basis.inner.n())?;
    let out = if sigma == 0.0 {
        core_detect::noiseless_test(&basis.inner, &vector(v)?, &omega)
    } else {
        core_detect::noisy_test_observed(&basis.inner, &omega, &vector(v)?, &cfg)
    }
    .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("statistic", out.statistic)?;
    d.set_item("threshold", out.threshold)?;
    d.set_item("decision", format!("{:?}", out.decision))?;
    d.set_item("dof", out.dof)?;
    Ok(d)
}

#[pyfunction]
fn chi2_quantile(p: f64, dof: usize) -> PyResult<f64> {
    core_detect::chi2_quantile(p, dof).map_err(to_py)
}

#[pyfunction]
fn chi2_sf(x: f64, dof: usize) -> PyResult<f64> {
    core_detect::chi2_sf(x, dof).map_err(to_py)
}

#[pyfunction]
fn noncentral_chi2_sf(x: f64, dof: usize, noncentrality: f64) -> PyResult<f64> {
    core_detect::noncentral_chi2_sf(x, dof, noncentrality).map_err(to_py)
}

#[pyfunction]
fn detection_probability(noncentrality: f64, dof: usize, eta: f64) -> PyResult<f64> {
    core_detect::detection_probability(noncentrality, dof, eta).map_err(to_py)
}

/// Runs `simulate` for `experiment` ("fig1", "fig2", "roc") from TOML text
/// and returns the CSV.
#[pyfunction]
fn simulate(py: Python<'_>, experiment: &str, config_toml: &str) -> PyResult<String> {
    let which = match experiment {
        "fig1" => msdetect::cli::Experiment::Fig1,
        "fig2" => msdetect::cli::Experiment::Fig2,
        "roc" => msdetect::cli::Experiment::Roc,
        other => return Err(PyValueError::new_err(format!("unknown experiment `{other}`"))),
    };
    let loaded = msdetect::cli::config::parse_config(config_toml, "<python>", which).map_err(to_py)?;
    py.detach(|| msdetect::cli::render_experiment(which, &loaded)).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "msdetect")]
fn msdetect_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySubspaceBasis>()?;
    m.add_function(wrap_pyfunction!(vector_coherence, m)?)?;
    m.add_function(wrap_pyfunction!(sample_indices, m)?)?;
    m.add_function(wrap_pyfunction!(residual_energy, m)?)?;
    m.add_function(wrap_pyfunction!(full_residual_energy, m)?)?;
    m.add_function(wrap_pyfunction!(zero_fill_residual, m)?)?;
    m.add_function(wrap_pyfunction!(min_samples, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(validate_lemma, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_sf, m)?)?;
    m.add_function(wrap_pyfunction!(noncentral_chi2_sf, m)?)?;
    m.add_function(wrap_pyfunction!(detection_probability, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
