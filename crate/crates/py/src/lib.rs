//! Python bindings for the solver crate.
//!
//! Buffer belief indices cross the boundary as `int | None`, with `None`
//! standing for the saturated "known full" index.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use macsched::belief::{BufferBeliefIndex, ChannelBeliefIndex};
use macsched::centralized::{self, CentralizedInfoState};
use macsched::coordinated::{self, CoordinatedState};
use macsched::mdp::Mdp;
use macsched::model::ModelParams;
use macsched::pbp;
use macsched::sim;
use macsched::RecursionMode;

fn params_from(
    p1: f64,
    p2: f64,
    alpha0: f64,
    alpha1: f64,
    c: f64,
    r: f64,
    beta: f64,
) -> ModelParams {
    ModelParams { p1, p2, alpha0, alpha1, c, r, beta }
}

fn mode_from(mode: &str) -> PyResult<RecursionMode> {
    mode.parse().map_err(PyValueError::new_err)
}

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn buffer_index(k: Option<u32>) -> PyResult<BufferBeliefIndex> {
    match k {
        Some(0) => Err(PyValueError::new_err("buffer index starts at 1")),
        Some(k) => Ok(BufferBeliefIndex::Finite(k)),
        None => Ok(BufferBeliefIndex::Inf),
    }
}

fn report_dict<'py>(py: Python<'py>, report: &sim::EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("mean", report.mean)?;
    d.set_item("stderr", report.stderr)?;
    d.set_item("episodes", report.episodes)?;
    d.set_item("horizon", report.horizon)?;
    d.set_item("seed", report.seed)?;
    d.set_item("tail_bound", report.tail_bound)?;
    d.set_item("dp_reference", report.dp_reference)?;
    d.set_item("abs_gap", report.abs_gap)?;
    d.set_item("within_bound", report.within_bound)?;
    Ok(d)
}

/// Solved single-device problem.
#[pyclass(name = "CentralizedSolution")]
struct PyCentralizedSolution {
    inner: centralized::CentralizedSolution,
    params: ModelParams,
}

#[pymethods]
impl PyCentralizedSolution {
    /// `(k0, k1)` as strings; `">=M"` when no transmit state exists below the
    /// cap.
    fn thresholds(&self) -> (String, String) {
        let t = self.inner.thresholds;
        (t[0].to_string(), t[1].to_string())
    }

    fn action(&self, n: u8, s: u8, m: u32) -> usize {
        self.inner.action(CentralizedInfoState { n, channel: ChannelBeliefIndex::new(s, m) })
    }

    fn value(&self, n: u8, s: u8, m: u32) -> f64 {
        self.inner.value(CentralizedInfoState { n, channel: ChannelBeliefIndex::new(s, m) })
    }

    fn reference_value(&self) -> f64 {
        self.inner.reference_value()
    }

    /// Monte Carlo evaluation of the solved controller; returns a report
    /// dict with the DP reference attached.
    #[pyo3(signature = (episodes=20000, horizon=88, seed=0))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        episodes: usize,
        horizon: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let report = sim::evaluate_one(
            &self.params,
            || Box::new(centralized::CentralizedController::new(&self.inner)) as _,
            episodes,
            horizon,
            seed,
        )
        .map_err(err)?
        .with_reference(self.inner.reference_value());
        report_dict(py, &report)
    }
}

/// Solved two-device coordinated problem.
#[pyclass(name = "CoordinatedSolution")]
struct PyCoordinatedSolution {
    inner: coordinated::CoordinatedSolution,
    params: ModelParams,
}

impl PyCoordinatedSolution {
    fn state(&self, k1: Option<u32>, k2: Option<u32>, s: u8, m: u32) -> PyResult<CoordinatedState> {
        Ok(CoordinatedState {
            k1: buffer_index(k1)?,
            k2: buffer_index(k2)?,
            channel: ChannelBeliefIndex::new(s, m),
        })
    }
}

#[pymethods]
impl PyCoordinatedSolution {
    /// Prescription `(d1, d2)` at a common-information state. Buffer indices
    /// are `int` or `None` for the saturated index.
    #[pyo3(signature = (k1, k2, s, m))]
    fn prescription(&self, k1: Option<u32>, k2: Option<u32>, s: u8, m: u32) -> PyResult<(u8, u8)> {
        let p = self.inner.prescription(self.state(k1, k2, s, m)?);
        Ok((p.d1, p.d2))
    }

    #[pyo3(signature = (k1, k2, s, m))]
    fn value(&self, k1: Option<u32>, k2: Option<u32>, s: u8, m: u32) -> PyResult<f64> {
        Ok(self.inner.value(self.state(k1, k2, s, m)?))
    }

    fn reference_value(&self) -> f64 {
        self.inner.reference_value(&self.params)
    }

    fn num_states(&self) -> usize {
        self.inner.mdp.num_states()
    }

    /// Compare against one of the embedded reference strategies (selected by
    /// cost) on the sub-grid `k, l <= k_limit`, `m <= m_limit`. Returns
    /// `(matched, mismatch_descriptions)`.
    #[pyo3(signature = (cost, k_limit=12, m_limit=12))]
    fn match_published(
        &self,
        cost: f64,
        k_limit: u32,
        m_limit: u32,
    ) -> PyResult<(bool, Vec<String>)> {
        let (_, spec) = macsched::embedded::published_strategies()
            .into_iter()
            .find(|(c, _)| *c == cost)
            .ok_or_else(|| PyValueError::new_err(format!("no reference strategy for c={cost}")))?;
        let mismatches = coordinated::match_pattern(&self.inner, &spec, k_limit, m_limit);
        let descriptions = mismatches.iter().take(20).map(|m| m.to_string()).collect();
        Ok((mismatches.is_empty(), descriptions))
    }

    #[pyo3(signature = (episodes=20000, horizon=88, seed=0))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        episodes: usize,
        horizon: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let report = sim::evaluate_two(
            &self.params,
            || {
                let (a, b) = coordinated::decentralize(&self.inner);
                (Box::new(a) as _, Box::new(b) as _)
            },
            episodes,
            horizon,
            seed,
        )
        .map_err(err)?
        .with_reference(self.inner.reference_value(&self.params));
        report_dict(py, &report)
    }
}

/// Solve the single-device problem on the truncated belief grid.
#[pyfunction]
#[pyo3(signature = (p, c, *, alpha0=0.75, alpha1=0.75, r=1.0, beta=0.9, cap_m=60, mode="bayes", tol=1e-10))]
#[allow(clippy::too_many_arguments)]
fn solve_centralized(
    p: f64,
    c: f64,
    alpha0: f64,
    alpha1: f64,
    r: f64,
    beta: f64,
    cap_m: u32,
    mode: &str,
    tol: f64,
) -> PyResult<PyCentralizedSolution> {
    let params = params_from(p, p, alpha0, alpha1, c, r, beta);
    let inner =
        centralized::solve_centralized(&params, cap_m, mode_from(mode)?, tol).map_err(err)?;
    Ok(PyCentralizedSolution { inner, params })
}

/// Solve the two-device coordinated problem on the truncated belief grid.
#[pyfunction]
#[pyo3(signature = (p1, p2, c, *, alpha0=0.75, alpha1=0.75, r=1.0, beta=0.9, cap_k=60, cap_m=60, mode="printed", tol=1e-10))]
#[allow(clippy::too_many_arguments)]
fn solve_coordinated(
    p1: f64,
    p2: f64,
    c: f64,
    alpha0: f64,
    alpha1: f64,
    r: f64,
    beta: f64,
    cap_k: u32,
    cap_m: u32,
    mode: &str,
    tol: f64,
) -> PyResult<PyCoordinatedSolution> {
    let params = ModelParams { p1, p2, alpha0, alpha1, c, r, beta };
    let inner =
        coordinated::solve_coordinated(&params, cap_k, cap_m, mode_from(mode)?, tol)
            .map_err(err)?;
    Ok(PyCoordinatedSolution { inner, params })
}

/// The embedded reference threshold table as a list of dicts.
#[pyfunction]
fn table1(py: Python<'_>) -> PyResult<Vec<Bound<'_, PyDict>>> {
    macsched::embedded::table1()
        .into_iter()
        .map(|cell| {
            let d = PyDict::new_bound(py);
            d.set_item("p", cell.p)?;
            d.set_item("c", cell.c)?;
            d.set_item("k0", cell.k0)?;
            d.set_item("k1", cell.k1)?;
            Ok(d)
        })
        .collect()
}

/// Compare index-arithmetic beliefs with the brute-force Bayes oracle over
/// every feedback history up to `depth`; returns the maximum deviation.
#[pyfunction]
#[pyo3(signature = (p1, p2, c, depth=4))]
fn oracle_deviation(p1: f64, p2: f64, c: f64, depth: usize) -> PyResult<f64> {
    use macsched::belief::{bayes_oracle, enumerate_belief_nodes, ArrivalModel};
    if depth > 6 {
        return Err(PyValueError::new_err("depth above 6 is impractically slow"));
    }
    let params = params_from(p1, p2, 0.75, 0.75, c, 1.0, 0.9);
    params.validate().map_err(err)?;
    let mut max_dev = 0.0f64;
    for node in enumerate_belief_nodes(&params, ArrivalModel::Independent, depth) {
        let oracle = bayes_oracle(&params, ArrivalModel::Independent, &node.history)
            .map_err(|e| PyValueError::new_err(format!("{e:?}")))?;
        max_dev = max_dev
            .max((oracle.buffer_marginal(1) - node.index.claimed_buffer(&params, 1)).abs())
            .max((oracle.buffer_marginal(2) - node.index.claimed_buffer(&params, 2)).abs())
            .max((oracle.busy_marginal() - node.index.claimed_busy(&params)).abs());
    }
    Ok(max_dev)
}

/// Run best-response iteration from silence; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (p1, p2, c, *, cap_k=20, cap_m=20, mode="printed", max_rounds=50, tol=1e-10))]
#[allow(clippy::too_many_arguments)]
fn pbp_iteration<'py>(
    py: Python<'py>,
    p1: f64,
    p2: f64,
    c: f64,
    cap_k: u32,
    cap_m: u32,
    mode: &str,
    max_rounds: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = params_from(p1, p2, 0.75, 0.75, c, 1.0, 0.9);
    let outcome =
        pbp::pbp_iteration(&params, cap_k, cap_m, mode_from(mode)?, None, max_rounds, tol)
            .map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("converged", outcome.summary.converged)?;
    d.set_item("cycle_detected", outcome.summary.cycle_detected)?;
    d.set_item("rounds", outcome.summary.rounds.len())?;
    let trace: Vec<(usize, usize, usize, f64)> = outcome
        .summary
        .rounds
        .iter()
        .map(|r| (r.round, r.device, r.strategy_changes, r.value_change))
        .collect();
    d.set_item("trace", trace)?;
    Ok(d)
}

#[pymodule]
fn macsched_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCentralizedSolution>()?;
    m.add_class::<PyCoordinatedSolution>()?;
    m.add_function(wrap_pyfunction!(solve_centralized, m)?)?;
    m.add_function(wrap_pyfunction!(solve_coordinated, m)?)?;
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_deviation, m)?)?;
    m.add_function(wrap_pyfunction!(pbp_iteration, m)?)?;
    Ok(())
}
