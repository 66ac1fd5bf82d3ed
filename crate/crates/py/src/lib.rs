//! Python bindings: scenario validation, the coalescence map, the exact
//! small-segment solver, and the seeded ensemble driver.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use multishock::burgers;
use multishock::dynamics;
use multishock::profiles::{self, CylinderFunction, MeetingScenario, StepProfile};
use multishock::stats::{self, EnsembleParams, EnsembleResult, LimitLaw};

fn to_py_err(e: multishock::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// `(time, low_label, high_label, position)` of one coalescence.
type CoalescenceTuple = (f64, usize, usize, f64);

/// A step profile whose shocks all meet at one space-time point.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: MeetingScenario,
}

#[pymethods]
impl Scenario {
    /// Validate a profile. `t_star_hint` is required for a single shock and
    /// must agree with the computed meeting time otherwise.
    #[new]
    #[pyo3(signature = (breakpoints, densities, t_star_hint=None))]
    fn new(breakpoints: Vec<f64>, densities: Vec<f64>, t_star_hint: Option<f64>) -> PyResult<Self> {
        let profile = StepProfile::new(breakpoints, densities).map_err(to_py_err)?;
        let inner = profiles::validate_meeting(profile, t_star_hint).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn t_star(&self) -> f64 {
        self.inner.t_star()
    }

    #[getter]
    fn r_star(&self) -> f64 {
        self.inner.r_star()
    }

    #[getter]
    fn shock_count(&self) -> usize {
        self.inner.profile().shock_count()
    }

    #[getter]
    fn densities(&self) -> Vec<f64> {
        self.inner.profile().densities().to_vec()
    }

    /// Variances of the limiting Gaussian shock fluctuations, one per label.
    fn limit_variances(&self) -> Vec<f64> {
        let n = self.inner.profile().shock_count();
        (1..=n).map(|k| self.inner.limit_variance(k)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(breakpoints={:?}, densities={:?}, t_star={}, r_star={})",
            self.inner.profile().breakpoints(),
            self.inner.profile().densities(),
            self.inner.t_star(),
            self.inner.r_star(),
        )
    }
}

/// A cylinder function given by its truth table on `{-M..M}`.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Cylinder {
    inner: CylinderFunction,
}

#[pymethods]
impl Cylinder {
    /// Occupancy of the origin.
    #[staticmethod]
    fn occupancy() -> Self {
        Self { inner: CylinderFunction::occupancy() }
    }

    /// Indicator of an exact 0/1 pattern on an odd window centered at 0.
    #[staticmethod]
    fn indicator(pattern: Vec<u8>) -> PyResult<Self> {
        let bools: Vec<bool> = pattern.iter().map(|&b| b != 0).collect();
        Ok(Self { inner: CylinderFunction::indicator(&bools).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn from_table(window_radius: usize, table: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: CylinderFunction::new(window_radius, table).map_err(to_py_err)? })
    }

    /// Exact expectation under the product Bernoulli measure with density rho.
    fn nu_expectation(&self, rho: f64) -> PyResult<f64> {
        profiles::nu_expectation(&self.inner, rho).map_err(to_py_err)
    }
}

/// Replica records of a seeded ensemble run.
#[pyclass]
struct Ensemble {
    inner: EnsembleResult,
}

#[pymethods]
impl Ensemble {
    #[getter]
    fn replicas(&self) -> usize {
        self.inner.records.len()
    }

    #[getter]
    fn invalid_count(&self) -> usize {
        self.inner.invalid_count()
    }

    /// Scaled tagged-particle fluctuations of label `k` over valid replicas.
    fn x_scaled(&self, k: usize) -> Vec<f64> {
        self.inner.x_scaled(k)
    }

    /// Scaled coalescing-shock fluctuations of label `k`.
    fn y_scaled(&self, k: usize) -> Vec<f64> {
        self.inner.y_scaled(k)
    }

    /// Joint scaled shock positions, one row per valid replica.
    fn y_joint(&self) -> Vec<Vec<f64>> {
        self.inner.y_scaled_joint()
    }

    fn records_csv(&self) -> String {
        self.inner.records_csv()
    }

    fn summary_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner.summary())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Local-measure estimate at offset `a` against the mixture target from
    /// `oracle_samples` pushforward draws; returns a report as JSON.
    #[pyo3(signature = (a, cylinder, oracle_samples=100_000, oracle_seed=1))]
    fn local_measure(
        &self,
        a: f64,
        cylinder: &Cylinder,
        oracle_samples: usize,
        oracle_seed: u64,
    ) -> PyResult<String> {
        let law = LimitLaw::from_scenario(&self.inner.scenario);
        let oracle =
            stats::pushforward_oracle(&law, oracle_samples, oracle_seed).map_err(to_py_err)?;
        let report = stats::local_measure_estimate(&self.inner, a, &cylinder.inner, &oracle)
            .map_err(to_py_err)?;
        serde_json::to_string_pretty(&report).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Ensemble(replicas={}, invalid={}, epsilon={})",
            self.inner.records.len(),
            self.inner.invalid_count(),
            self.inner.params.epsilon,
        )
    }
}

/// The shock-coalescence map.
#[pyfunction]
#[pyo3(signature = (x, densities, t_choice=None))]
fn psi(x: Vec<f64>, densities: Vec<f64>, t_choice: Option<f64>) -> PyResult<Vec<f64>> {
    burgers::psi(&x, &densities, t_choice).map_err(to_py_err)
}

/// The time-shifted coalescence map.
#[pyfunction]
fn psi_s(x: Vec<f64>, s: f64, densities: Vec<f64>) -> PyResult<Vec<f64>> {
    burgers::psi_s(&x, s, &densities).map_err(to_py_err)
}

/// Front positions after time `t`, plus the coalescence events as
/// `(time, low_label, high_label, position)` tuples.
#[pyfunction]
fn solve_fronts(
    b: Vec<f64>,
    densities: Vec<f64>,
    t: f64,
) -> PyResult<(Vec<f64>, Vec<CoalescenceTuple>)> {
    let state = burgers::solve_fronts(&b, &densities, t).map_err(to_py_err)?;
    let events = state
        .events()
        .iter()
        .map(|e| (e.time, e.low, e.high, e.position))
        .collect();
    Ok((state.label_positions(), events))
}

/// Entropy-solution density at position `r` after evolving the fronts to `t`.
#[pyfunction]
fn front_density(b: Vec<f64>, densities: Vec<f64>, t: f64, r: f64) -> PyResult<f64> {
    let state = burgers::solve_fronts(&b, &densities, t).map_err(to_py_err)?;
    Ok(burgers::evaluate_density(&state, r))
}

/// Exact time-`t` law of the closed `l`-site segment started from the bit
/// mask `initial` (bit i = site i occupied).
#[pyfunction]
fn exact_distribution(l: usize, initial: usize, t: f64) -> PyResult<Vec<f64>> {
    dynamics::exact_distribution(l, initial, t).map_err(to_py_err)
}

/// One stochastic run of the closed segment; returns the final bit mask.
#[pyfunction]
fn simulate_segment(l: usize, initial: usize, t: f64, seed: u64) -> PyResult<usize> {
    dynamics::simulate_segment(l, initial, t, seed).map_err(to_py_err)
}

/// Samples of the joint limit law `(Y_1..Y_n)` via the coalescence map.
#[pyfunction]
fn pushforward_oracle(scenario: &Scenario, m: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let law = LimitLaw::from_scenario(&scenario.inner);
    stats::pushforward_oracle(&law, m, seed).map_err(to_py_err)
}

/// Empirical band weights `P(Y_k <= a < Y_{k+1})`; sums to one exactly.
#[pyfunction]
fn mixture_weights(y_samples: Vec<Vec<f64>>, a: f64) -> Vec<f64> {
    stats::mixture_weights(&y_samples, a)
}

/// Zero-mean / variance / normality diagnostics as JSON.
#[pyfunction]
fn gaussian_check(samples: Vec<f64>, variance_target: f64) -> PyResult<String> {
    let check = stats::gaussian_check(&samples, variance_target).map_err(to_py_err)?;
    serde_json::to_string_pretty(&check).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs a seeded replica ensemble to the meeting time.
#[pyfunction]
#[pyo3(signature = (scenario, epsilon, replicas, base_seed, capture_radius=0, kappa=3.0))]
fn run_ensemble(
    py: Python<'_>,
    scenario: &Scenario,
    epsilon: f64,
    replicas: usize,
    base_seed: u64,
    capture_radius: i64,
    kappa: f64,
) -> PyResult<Ensemble> {
    let params = EnsembleParams { epsilon, replicas, base_seed, capture_radius, kappa };
    let scenario = scenario.inner.clone();
    let inner = py
        .detach(|| stats::run_ensemble(&scenario, &params))
        .map_err(to_py_err)?;
    Ok(Ensemble { inner })
}

#[pymodule]
fn multishock_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Scenario>()?;
    m.add_class::<Cylinder>()?;
    m.add_class::<Ensemble>()?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(psi_s, m)?)?;
    m.add_function(wrap_pyfunction!(solve_fronts, m)?)?;
    m.add_function(wrap_pyfunction!(front_density, m)?)?;
    m.add_function(wrap_pyfunction!(exact_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_segment, m)?)?;
    m.add_function(wrap_pyfunction!(pushforward_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_weights, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    Ok(())
}
