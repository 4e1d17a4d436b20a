//! Python bindings: configuration, model construction, synthesis and
//! closed-loop simulation.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sirs_etc::abstraction::{build_symbolic_model, load_model, save_model, SymbolicModel, SymbolicState};
use sirs_etc::config::RunConfig;
use sirs_etc::dynamics::{eval_d, eval_f, ModelParams, State};
use sirs_etc::games::{synthesize, verify_synthesis, Synthesis};
use sirs_etc::reach::{over_approx_reach, IntervalBox};
use sirs_etc::refine::{check_initial_coverage, Controller};
use sirs_etc::runtime::{monitor, simulate_closed_loop, Selector};
use sirs_etc::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidParams(_) | Error::Integrator(_) | Error::Domain { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Run configuration; defaults reproduce the Tokyo setup.
#[pyclass(name = "Config", module = "sirs_etc", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: RunConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::from_toml_str(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(&path).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(py_err)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi
    }

    #[getter]
    fn u_levels(&self) -> Vec<f64> {
        self.inner.u_levels.clone()
    }

    #[getter]
    fn thresholds(&self) -> Vec<f64> {
        self.inner.thresholds.clone()
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.t_end
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(gamma={}, xi={}, u_levels={:?}, thresholds={:?})",
            self.inner.gamma, self.inner.xi, self.inner.u_levels, self.inner.thresholds
        )
    }
}

/// Finite symbolic model.
#[pyclass(name = "Model", module = "sirs_etc", frozen)]
struct PyModel {
    inner: Arc<SymbolicModel>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (config, workers=None))]
    fn build(py: Python<'_>, config: &PyConfig, workers: Option<usize>) -> PyResult<Self> {
        let acfg = config.inner.abstraction().map_err(py_err)?;
        let m = py.detach(|| build_symbolic_model(&acfg, workers)).map_err(py_err)?;
        Ok(Self { inner: Arc::new(m) })
    }

    #[staticmethod]
    #[pyo3(signature = (path, config=None))]
    fn load(path: PathBuf, config: Option<&PyConfig>) -> PyResult<Self> {
        let expected = config.map(|c| c.inner.abstraction()).transpose().map_err(py_err)?;
        let m = load_model(&path, expected.as_ref()).map_err(py_err)?;
        Ok(Self { inner: Arc::new(m) })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.states.len()
    }

    #[getter]
    fn num_pairs(&self) -> usize {
        self.inner.num_pairs()
    }

    /// `(initial, safe, terminal)` state counts.
    fn set_sizes(&self) -> (usize, usize, usize) {
        let m = &self.inner;
        (m.count(&m.init), m.count(&m.safe), m.count(&m.target))
    }

    /// `(u, ε)` of a pair index.
    fn pair_values(&self, pair: usize) -> PyResult<(f64, f64)> {
        if pair >= self.inner.num_pairs() {
            return Err(PyValueError::new_err(format!("pair index {pair} out of range")));
        }
        Ok(self.inner.pair_values(pair))
    }

    /// Successor grid indices `(n, m)` of `(n, m)` under a pair.
    #[pyo3(signature = (n, m, pair, initial=false))]
    fn successors(&self, n: i32, m: i32, pair: usize, initial: bool) -> PyResult<Vec<(i32, i32)>> {
        let model = &self.inner;
        let idx = model
            .index_of(SymbolicState::new(n, m))
            .ok_or_else(|| PyValueError::new_err(format!("({n}, {m}) is not a grid state")))?;
        if pair >= model.num_pairs() {
            return Err(PyValueError::new_err(format!("pair index {pair} out of range")));
        }
        let v: Vec<SymbolicState> = if initial {
            model.successors0(idx, pair).collect()
        } else {
            model.successors(idx, pair).collect()
        };
        Ok(v.into_iter().map(|s| (s.n, s.m)).collect())
    }
}

/// Solved safety and reachability games.
#[pyclass(name = "Synthesis", module = "sirs_etc", frozen)]
struct PySynthesis {
    model: Arc<SymbolicModel>,
    inner: Arc<Synthesis>,
}

fn grid_list(model: &SymbolicModel, set: &[bool]) -> Vec<(i32, i32)> {
    Synthesis::states_in(model, set).into_iter().map(|s| (s.n, s.m)).collect()
}

#[pymethods]
impl PySynthesis {
    #[getter]
    fn feasible(&self) -> bool {
        self.inner.is_feasible()
    }

    #[getter]
    fn initial_rank(&self) -> u32 {
        self.inner.ranks.initial_rank
    }

    fn terminal_states(&self) -> Vec<(i32, i32)> {
        grid_list(&self.model, &self.inner.terminal_set)
    }

    fn winning_states(&self) -> Vec<(i32, i32)> {
        grid_list(&self.model, &self.inner.winning_set)
    }

    fn initial_states(&self) -> Vec<(i32, i32)> {
        grid_list(&self.model, &self.inner.initial_set)
    }

    /// Raises if a policy leaves its domain or fails to descend in rank.
    fn verify(&self) -> PyResult<()> {
        verify_synthesis(&self.model, &self.inner).map_err(PyRuntimeError::new_err)
    }

    fn covers_initial_set(&self) -> bool {
        let init = Synthesis::states_in(&self.model, &self.inner.initial_set);
        check_initial_coverage(&self.model.config.bounds, &init, self.model.grid()).covered
    }
}

#[pyfunction]
fn synthesize_model(py: Python<'_>, model: &PyModel) -> PySynthesis {
    let m = model.inner.clone();
    let syn = py.detach(|| synthesize(&m));
    PySynthesis {
        model: m,
        inner: Arc::new(syn),
    }
}

/// Closed-loop run; returns a dict with `samples`, `events` and `report`.
#[pyfunction]
#[pyo3(signature = (config, synthesis, s, i, t_end=None))]
fn simulate<'py>(
    py: Python<'py>,
    config: &PyConfig,
    synthesis: &PySynthesis,
    s: f64,
    i: f64,
    t_end: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let model = synthesis.model.clone();
    let syn = synthesis.inner.clone();
    let sel = config.inner.selection();
    let t_end = t_end.unwrap_or(config.inner.t_end);
    let (trace, report) = py
        .detach(|| {
            let acfg = &model.config;
            let selector = Selector::new(Controller::new(&model, &syn), sel, &acfg.params, &acfg.integrator);
            let trace = simulate_closed_loop(State::new(s, i), &selector, t_end)?;
            let report = monitor(&trace, &acfg.bounds, &acfg.grid);
            Ok::<_, Error>((trace, report))
        })
        .map_err(py_err)?;

    let samples = PyDict::new(py);
    samples.set_item("t", trace.samples.iter().map(|x| x.t).collect::<Vec<_>>())?;
    samples.set_item("S", trace.samples.iter().map(|x| x.s).collect::<Vec<_>>())?;
    samples.set_item("I", trace.samples.iter().map(|x| x.i).collect::<Vec<_>>())?;
    samples.set_item("u", trace.samples.iter().map(|x| x.u).collect::<Vec<_>>())?;
    samples.set_item("epsilon", trace.samples.iter().map(|x| x.eps).collect::<Vec<_>>())?;
    samples.set_item(
        "phase",
        trace.samples.iter().map(|x| x.phase.to_string()).collect::<Vec<_>>(),
    )?;

    let events = trace
        .events
        .iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("t", e.t)?;
            d.set_item("S", e.s)?;
            d.set_item("I", e.i)?;
            d.set_item("phase", e.phase.to_string())?;
            d.set_item("grid", (e.grid_n, e.grid_m))?;
            d.set_item("rank", e.rank)?;
            d.set_item("u", e.u)?;
            d.set_item("epsilon", e.eps)?;
            d.set_item("cost", e.cost)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;

    let rep = PyDict::new(py);
    rep.set_item("passed", report.passed())?;
    rep.set_item("min_S", report.min_s)?;
    rep.set_item("max_I", report.max_i)?;
    rep.set_item("settle_time", report.settle_time)?;
    rep.set_item("terminal_switch", report.terminal_switch)?;
    rep.set_item("event_count", report.event_count)?;
    rep.set_item("rank_sequence", report.rank_sequence.clone())?;
    rep.set_item("truncated", report.truncated)?;
    rep.set_item("failure", report.failure.clone())?;

    let out = PyDict::new(py);
    out.set_item("samples", samples)?;
    out.set_item("events", events)?;
    out.set_item("report", rep)?;
    Ok(out)
}

fn params(gamma: f64, xi: f64, u: f64) -> PyResult<ModelParams> {
    ModelParams::new(gamma, xi, vec![u]).map_err(py_err)
}

/// SIRS vector field `(dS/dt, dI/dt)`.
#[pyfunction]
#[pyo3(signature = (s, i, u, gamma=0.15, xi=0.02))]
fn vector_field(s: f64, i: f64, u: f64, gamma: f64, xi: f64) -> PyResult<(f64, f64)> {
    Ok(eval_f(State::new(s, i), u, &params(gamma, xi, u)?))
}

/// Decomposition function `d(x, u, x̂, û)`.
#[pyfunction]
#[pyo3(signature = (x, u, x_hat, u_hat, gamma=0.15, xi=0.02))]
fn decomposition(x: (f64, f64), u: f64, x_hat: (f64, f64), u_hat: f64, gamma: f64, xi: f64) -> PyResult<(f64, f64)> {
    let p = params(gamma, xi, u)?;
    Ok(eval_d(State::new(x.0, x.1), u, State::new(x_hat.0, x_hat.1), u_hat, &p))
}

/// Box over-approximation of the reachable set at time `t`.
#[pyfunction]
#[pyo3(signature = (lo, hi, u, t, config=None))]
fn reach_box(
    lo: (f64, f64),
    hi: (f64, f64),
    u: f64,
    t: f64,
    config: Option<&PyConfig>,
) -> PyResult<((f64, f64), (f64, f64))> {
    let cfg = config.map_or_else(RunConfig::default, |c| c.inner.clone());
    let p = params(cfg.gamma, cfg.xi, u)?;
    let bx = IntervalBox::new(State::new(lo.0, lo.1), State::new(hi.0, hi.1)).map_err(py_err)?;
    let r = over_approx_reach(&bx, u, t, &p, &cfg.integrator()).map_err(py_err)?;
    Ok(((r.lo.s, r.lo.i), (r.hi.s, r.hi.i)))
}

#[pymodule(name = "sirs_etc")]
fn sirs_etc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySynthesis>()?;
    m.add_function(wrap_pyfunction!(synthesize_model, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(vector_field, m)?)?;
    m.add_function(wrap_pyfunction!(decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(reach_box, m)?)?;
    Ok(())
}
