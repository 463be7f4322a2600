//! Python bindings for the `ymlab` crate.
//!
//! Complex results come back as Python `complex`, vectors as lists. Errors
//! from invalid inputs raise `ValueError`; everything else `RuntimeError`.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ymlab::fermion_engine as fe;
use ymlab::gauge_form::{self, FormAssembler, PropagatorSet, C64};
use ymlab::harness::{self, RunConfig};
use ymlab::lie_core::{self, PhiVector};
use ymlab::mode_space::{self, BoxSpec};
use ymlab::perturbation_boson::{self, DiscreteVertexModel};
use ymlab::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_)
        | Error::Config(_)
        | Error::ResonantCutoff { .. }
        | Error::DimensionMismatch { .. }
        | Error::ComplexityGuard(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for ymlab::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn phi_from_rows(dim_g: usize, rows: Option<Vec<Vec<f64>>>) -> PyResult<PhiVector> {
    match rows {
        None => Ok(PhiVector::canonical(dim_g)),
        Some(r) => {
            if r.len() != 3 {
                return Err(PyValueError::new_err("phi needs three rows"));
            }
            let phi = PhiVector::from_rows([&r[0], &r[1], &r[2]]).py()?;
            if phi.dim_g != dim_g {
                return Err(PyValueError::new_err(format!("phi rows have length {}, algebra has dim {dim_g}", phi.dim_g)));
            }
            Ok(phi)
        }
    }
}

/// su(n) in the generalized Gell-Mann basis.
#[pyclass(name = "LieBasis", frozen)]
struct PyLieBasis {
    inner: Arc<lie_core::LieBasis>,
}

#[pymethods]
impl PyLieBasis {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        Ok(PyLieBasis { inner: Arc::new(lie_core::build_su_basis(n).py()?) })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn dim_g(&self) -> usize {
        self.inner.dim_g
    }

    fn f(&self, a: usize, b: usize, c: usize) -> PyResult<f64> {
        let d = self.inner.dim_g;
        if a >= d || b >= d || c >= d {
            return Err(PyValueError::new_err("structure constant index out of range"));
        }
        Ok(self.inner.f(a, b, c))
    }

    fn antisymmetry_residual(&self) -> f64 {
        self.inner.antisymmetry_residual()
    }

    fn jacobi_residual(&self) -> f64 {
        self.inner.jacobi_residual()
    }

    /// Generic centralizer dimension of the algebra.
    fn d_g(&self) -> PyResult<usize> {
        lie_core::d_g(&self.inner).py()
    }

    /// Eigenvalues of M(Φ) and η = λ_min / max(1, ‖Φ‖²); `phi` defaults to
    /// the canonical configuration.
    #[pyo3(signature = (phi=None))]
    fn mass_spectrum(&self, phi: Option<Vec<Vec<f64>>>) -> PyResult<(Vec<f64>, f64)> {
        let phi = phi_from_rows(self.inner.dim_g, phi)?;
        let s = lie_core::mass_spectrum(&lie_core::mass_matrix(&self.inner, &phi));
        Ok((s.eigenvalues, s.eta))
    }

    fn __repr__(&self) -> String {
        format!("LieBasis(n={}, dim_g={})", self.inner.n, self.inner.dim_g)
    }
}

/// Truncated Fourier-mode lattice on the box Π[-Λ_i, Λ_i].
#[pyclass(name = "ModeLattice", frozen)]
struct PyModeLattice {
    inner: Arc<mode_space::ModeLattice>,
}

#[pymethods]
impl PyModeLattice {
    #[new]
    fn new(lam: [f64; 4], kappa: f64) -> PyResult<Self> {
        let bx = BoxSpec::new(lam).py()?;
        Ok(PyModeLattice { inner: Arc::new(mode_space::build_lattice(bx, kappa).py()?) })
    }

    #[getter]
    fn lam(&self) -> [f64; 4] {
        self.inner.bx.lambda
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn a_modes(&self) -> usize {
        self.inner.a_modes.len()
    }

    #[getter]
    fn f_modes(&self) -> usize {
        self.inner.f_modes.len()
    }

    fn volume(&self) -> f64 {
        self.inner.bx.volume()
    }

    /// Rank of the gauge-constrained A basis and the F block size.
    fn constrained_dims(&self, lie: &PyLieBasis) -> (usize, usize) {
        mode_space::constrained_basis(&self.inner, lie.inner.dim_g).dims()
    }

    fn __repr__(&self) -> String {
        format!("ModeLattice(lam={:?}, kappa={}, a_modes={})", self.inner.bx.lambda, self.inner.kappa, self.inner.a_modes.len())
    }
}

/// Inverse of the quadratic form at fixed Φ and μ.
#[pyclass(name = "Propagator", frozen)]
struct PyPropagator {
    inner: Arc<PropagatorSet>,
    sigma_min: f64,
    inverse_norm: f64,
}

#[pymethods]
impl PyPropagator {
    #[new]
    #[pyo3(signature = (lattice, lie, mu, phi=None))]
    fn new(lattice: &PyModeLattice, lie: &PyLieBasis, mu: f64, phi: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let phi = phi_from_rows(lie.inner.dim_g, phi)?;
        let basis = mode_space::constrained_basis(&lattice.inner, lie.inner.dim_g);
        let form = FormAssembler::new(&lattice.inner, &basis, &lie.inner).py()?.assemble(&phi, mu).py()?;
        let nd = form.nondegeneracy();
        let props = form.invert().py()?;
        Ok(PyPropagator { inner: Arc::new(props), sigma_min: nd.sigma_min, inverse_norm: nd.inverse_norm })
    }

    #[getter]
    fn a_dim(&self) -> usize {
        self.inner.a_dim
    }

    #[getter]
    fn f_dim(&self) -> usize {
        self.inner.f_dim
    }

    #[getter]
    fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    #[getter]
    fn inverse_norm(&self) -> f64 {
        self.inverse_norm
    }

    /// ‖Q C − 1‖ for the stored inverse.
    fn residual(&self) -> f64 {
        self.inner.residual()
    }

    /// Largest relative error against the closed-form free transverse
    /// propagator (needs Φ = 0).
    fn free_check(&self) -> PyResult<(usize, f64)> {
        let c = gauge_form::free_transverse_check(&self.inner).py()?;
        Ok((c.modes_checked, c.max_rel_error))
    }

    /// Position-space kernel blocks (aa, af, fa, ff) between x and y, each a
    /// nested list of complex numbers.
    fn kernel_at(&self, x: [f64; 4], y: [f64; 4]) -> Vec<Vec<Vec<C64>>> {
        let k = self.inner.kernel_at(&x, &y);
        [&k.aa, &k.af, &k.fa, &k.ff]
            .iter()
            .map(|m| (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect())
            .collect()
    }

    fn dump(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.dump_to_file(&path).py()
    }
}

/// Φ-averaged E_{x,0}^{μ} on `xs`; returns a dict with the estimate and,
/// when `window` is given, the decay fit.
#[pyfunction]
#[pyo3(signature = (lattice, lie, mu, xs, samples, seed, window=None))]
#[allow(clippy::too_many_arguments)]
fn correlation<'py>(
    py: Python<'py>,
    lattice: &PyModeLattice,
    lie: &PyLieBasis,
    mu: f64,
    xs: Vec<f64>,
    samples: usize,
    seed: u64,
    window: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let est = ymlab::correlator::correlation_e(&lattice.inner, &lie.inner, mu, &xs, samples, seed, &Default::default()).py()?;
    let d = PyDict::new(py);
    d.set_item("x", &est.x_values)?;
    d.set_item("mean", &est.mean)?;
    d.set_item("stderr", &est.stderr)?;
    d.set_item("rejected", est.rejected)?;
    if let Some(w) = window {
        let fit = ymlab::correlator::fit_decay(&est, w).py()?;
        d.set_item("slope", fit.slope)?;
        d.set_item("slope_err", fit.slope_err)?;
        d.set_item("d_hat", fit.d_hat)?;
    }
    Ok(d)
}

/// Discrete vertex model: kernel tables at a set of points.
#[pyclass(name = "VertexModel", frozen)]
struct PyVertexModel {
    inner: Arc<DiscreteVertexModel>,
}

#[pymethods]
impl PyVertexModel {
    /// Every kernel block equal to the identity on the leg index.
    #[staticmethod]
    fn identity(lie: &PyLieBasis, n_points: usize, weight: f64) -> Self {
        PyVertexModel { inner: Arc::new(DiscreteVertexModel::identity(&lie.inner, n_points, weight)) }
    }

    /// Kernel tables sampled from a propagator at `points`.
    #[staticmethod]
    fn from_propagator(prop: &PyPropagator, lie: &PyLieBasis, points: Vec<[f64; 4]>, weight: f64) -> Self {
        PyVertexModel { inner: Arc::new(perturbation_boson::tabulate_kernels(&prop.inner, &lie.inner, points, weight)) }
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    fn scaled(&self, s: f64) -> Self {
        PyVertexModel { inner: Arc::new(self.inner.scaled(s)) }
    }

    fn symmetry_residual(&self) -> f64 {
        self.inner.symmetry_residual()
    }

    /// Order-n boson coefficient Θ_n by Wick contraction.
    fn theta(&self, n: usize) -> PyResult<C64> {
        Ok(perturbation_boson::theta_n(&self.inner, n).py()?.value)
    }

    /// Θ_n from the explicit pairing enumeration.
    fn theta_brute(&self, n: usize) -> PyResult<C64> {
        perturbation_boson::theta_n_brute(&self.inner, n).py()
    }
}

/// Mollifier pair at scale ε = 4h·cells on a periodic grid of `n` points
/// covering [-half_period, half_period).
#[pyclass(name = "Mollifier", frozen)]
struct PyMollifier {
    inner: Arc<fe::MollifierPair>,
}

#[pymethods]
impl PyMollifier {
    #[new]
    fn new(half_period: f64, n: usize, cells: usize) -> PyResult<Self> {
        let grid = fe::Grid1d::periodic(half_period, n).py()?;
        let eps = fe::epsilon_ladder(&grid, &[cells])[0];
        Ok(PyMollifier { inner: Arc::new(fe::build_mollifiers(eps, grid).py()?) })
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    fn norms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let n = self.inner.norms();
        let d = PyDict::new(py);
        d.set_item("epsilon", n.epsilon)?;
        d.set_item("h", n.h)?;
        d.set_item("delta_tilde_l1", n.delta_tilde_l1)?;
        d.set_item("d_tilde_sup", n.d_tilde_sup)?;
        d.set_item("containment_exact", n.containment_exact)?;
        d.set_item("g_l1", n.g_l1)?;
        d.set_item("g_l1_over_eps4", n.g_l1_over_eps4)?;
        d.set_item("delta_l2", n.delta_l2)?;
        d.set_item("d_l2", n.d_l2)?;
        d.set_item("nonnegative", n.nonnegative)?;
        Ok(d)
    }

    /// Fermionic coefficient Ξ_n; `placement` is "torus" or "coincident".
    /// Returns (xi, xi1, xi2) with the split parts None when not computed.
    #[pyo3(signature = (model, n, placement="torus"))]
    fn xi(&self, model: &PyVertexModel, n: usize, placement: &str) -> PyResult<(C64, Option<C64>, Option<C64>)> {
        let p = match placement {
            "torus" => fe::Placement::Torus,
            "coincident" => fe::Placement::Coincident,
            other => return Err(PyValueError::new_err(format!("unknown placement `{other}`"))),
        };
        let r = fe::xi_n(&model.inner, &self.inner, n, p).py()?;
        Ok((r.xi, r.xi1, r.xi2))
    }

    /// Pairing sum against Wick determinant on sampled placements:
    /// (max relative difference, max Gram-bound ratio).
    fn placement_check(&self, model: &PyVertexModel, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let c = fe::placement_check(&model.inner, &self.inner, samples, seed).py()?;
        Ok((c.max_rel_diff, c.max_bound_ratio))
    }
}

/// Grassmann polynomial over a field generator set.
#[pyclass(name = "Grassmann", frozen)]
struct PyGrassmann {
    inner: fe::GrassmannPolynomial,
    gens: Arc<fe::GeneratorSet>,
}

impl PyGrassmann {
    fn same_algebra(&self, other: &PyGrassmann) -> PyResult<()> {
        if Arc::ptr_eq(&self.gens, &other.gens) {
            Ok(())
        } else {
            Err(PyValueError::new_err("polynomials belong to different generator sets"))
        }
    }

    fn wrap(&self, p: fe::GrassmannPolynomial) -> Self {
        PyGrassmann { inner: p, gens: self.gens.clone() }
    }
}

#[pymethods]
impl PyGrassmann {
    fn __mul__(&self, other: &PyGrassmann) -> PyResult<Self> {
        self.same_algebra(other)?;
        Ok(self.wrap(self.inner.mul(&other.inner)))
    }

    fn __add__(&self, other: &PyGrassmann) -> PyResult<Self> {
        self.same_algebra(other)?;
        Ok(self.wrap(self.inner.add(&other.inner)))
    }

    fn scale(&self, c: C64) -> Self {
        self.wrap(self.inner.scale(c))
    }

    fn pow(&self, k: usize) -> Self {
        self.wrap(self.inner.pow(k))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Berezin integral by direct expansion (small generator sets only).
    fn berezin(&self) -> PyResult<C64> {
        fe::berezin_brute(&self.inner, &self.gens).py()
    }

    /// Berezin integral through Gaussian Wick determinants.
    fn berezin_wick(&self) -> C64 {
        fe::berezin_wick(&self.inner, &self.gens)
    }
}

/// Field generators (H, η, Ψ, ψ and their bars) at `n_points` points.
#[pyclass(name = "FieldAlgebra", frozen)]
struct PyFieldAlgebra {
    gens: Arc<fe::GeneratorSet>,
}

#[pymethods]
impl PyFieldAlgebra {
    #[new]
    fn new(dim_g: usize, n_points: usize) -> PyResult<Self> {
        Ok(PyFieldAlgebra { gens: Arc::new(fe::GeneratorSet::fields(dim_g, n_points).py()?) })
    }

    fn __len__(&self) -> usize {
        self.gens.len()
    }

    fn generator(&self, id: usize) -> PyResult<PyGrassmann> {
        if id >= self.gens.len() {
            return Err(PyValueError::new_err("generator index out of range"));
        }
        Ok(PyGrassmann { inner: fe::GrassmannPolynomial::generator(self.gens.len(), id), gens: self.gens.clone() })
    }

    fn constant(&self, c: C64) -> PyGrassmann {
        PyGrassmann { inner: fe::GrassmannPolynomial::constant(self.gens.len(), c), gens: self.gens.clone() }
    }

    /// exp(−Σ X X̄) over all generator pairs.
    fn free_weight(&self) -> PyGrassmann {
        PyGrassmann { inner: self.gens.free_weight(), gens: self.gens.clone() }
    }

    fn partner(&self, id: usize) -> PyResult<usize> {
        if id >= self.gens.len() {
            return Err(PyValueError::new_err("generator index out of range"));
        }
        Ok(self.gens.partner(id))
    }
}

/// Strong-coupling toy expectation for the observable
/// (i, α, x, j, γ, y); returns a dict of β-coefficients.
#[pyfunction]
fn toy_strong<'py>(py: Python<'py>, model: &PyVertexModel, lam: f64, obs: (usize, usize, usize, usize, usize, usize)) -> PyResult<Bound<'py, PyDict>> {
    let (i, alpha, x, j, gamma, y) = obs;
    let r = fe::toy_strong_coupling(&model.inner, lam, fe::ToyObservable { i, alpha, x, j, gamma, y }).py()?;
    let d = PyDict::new(py);
    d.set_item("generators", r.generators)?;
    d.set_item("numerator", r.numerator)?;
    d.set_item("partition", r.partition)?;
    d.set_item("lowest_order", r.lowest_order)?;
    Ok(d)
}

/// Runs a harness experiment from TOML text and returns the record as JSON.
/// Nothing is written to disk.
#[pyfunction]
fn run_experiment(py: Python<'_>, toml: &str) -> PyResult<String> {
    let cfg = RunConfig::from_toml(toml).py()?;
    cfg.validate().py()?;
    let rec = py.detach(|| harness::run(&cfg)).py()?;
    rec.to_json().py()
}

#[pymodule]
fn ymlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLieBasis>()?;
    m.add_class::<PyModeLattice>()?;
    m.add_class::<PyPropagator>()?;
    m.add_class::<PyVertexModel>()?;
    m.add_class::<PyMollifier>()?;
    m.add_class::<PyFieldAlgebra>()?;
    m.add_class::<PyGrassmann>()?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(toy_strong, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_mapping() {
        pyo3::Python::initialize();
        Python::attach(|py| {
            assert!(py_err(Error::InvalidParameter("x".into())).is_instance_of::<PyValueError>(py));
            assert!(py_err(Error::SingularForm { sigma_min: 0.0 }).is_instance_of::<PyRuntimeError>(py));
        });
    }

    #[test]
    fn phi_rows_checked() {
        assert!(phi_from_rows(3, Some(vec![vec![0.0; 3]; 2])).is_err());
        assert_eq!(phi_from_rows(3, None).unwrap().dim_g, 3);
    }
}
