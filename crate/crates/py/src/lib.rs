//! Python bindings: scenario loading, planning, closed-loop simulation,
//! directional weights, and the flatness map, exposed as `flatform_py`.

// `!(x > 0.0)` deliberately rejects NaN inputs together with
// non-positive ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use flatform_core::collision;
use flatform_core::flat::{layout, CostMatrices};
use flatform_core::flatness::{thrust_and_attitude, QuadrotorParams};
use flatform_core::scenario::{self, law_variant_from_str, law_variant_to_str, ScenarioConfig};
use flatform_core::sim::{self, Metrics, SimTrace};
use flatform_core::{Error, PlannerSolution, ReferenceTrajectory};
use nalgebra::Vector3;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidGraph(_) | Error::InvalidWeight(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn vec3(t: (f64, f64, f64)) -> Vector3<f64> {
    Vector3::new(t.0, t.1, t.2)
}

/// A validated scenario, created from TOML text or a bundled fixture.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    /// Parse a scenario from TOML text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            cfg: ScenarioConfig::from_toml_str(text).map_err(py_err)?,
        })
    }

    /// Load a bundled fixture by name.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        Ok(Self {
            cfg: scenario::load_fixture(name).map_err(py_err)?,
        })
    }

    #[getter]
    fn n_uavs(&self) -> usize {
        self.cfg.n_uavs()
    }

    #[getter]
    fn t_f(&self) -> f64 {
        self.cfg.t_f
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.cfg.dt
    }

    #[getter]
    fn strategy(&self) -> String {
        self.cfg.safety.strategy.as_str().to_string()
    }

    #[getter]
    fn law_variant(&self) -> String {
        law_variant_to_str(self.cfg.law_variant).to_string()
    }

    fn set_strategy(&mut self, strategy: &str) -> PyResult<()> {
        self.cfg.safety.strategy = strategy.parse().map_err(py_err)?;
        Ok(())
    }

    fn set_dt(&mut self, dt: f64) -> PyResult<()> {
        if !(dt > 0.0) {
            return Err(PyValueError::new_err("dt must be positive"));
        }
        self.cfg.dt = dt;
        Ok(())
    }

    fn set_riccati_step(&mut self, h: f64) -> PyResult<()> {
        if !(h > 0.0) {
            return Err(PyValueError::new_err("riccati step must be positive"));
        }
        self.cfg.riccati_step = h;
        Ok(())
    }

    fn set_horizon(&mut self, t_f: f64) -> PyResult<()> {
        if !(t_f > 0.0) {
            return Err(PyValueError::new_err("t_f must be positive"));
        }
        self.cfg.t_f = t_f;
        Ok(())
    }

    fn set_law_variant(&mut self, variant: &str) -> PyResult<()> {
        self.cfg.law_variant = law_variant_from_str(variant).map_err(py_err)?;
        Ok(())
    }

    fn to_toml(&self) -> String {
        self.cfg.to_toml_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(n_uavs={}, t_f={}, strategy='{}')",
            self.cfg.n_uavs(),
            self.cfg.t_f,
            self.cfg.safety.strategy.as_str()
        )
    }
}

fn positions_of(state: &nalgebra::DVector<f64>, n: usize, i: usize) -> (f64, f64, f64) {
    let base = layout::pos(n, i);
    (state[base], state[base + 1], state[base + 2])
}

/// Sampled optimal plan.
#[pyclass]
struct Plan {
    reference: ReferenceTrajectory,
    cfg: ScenarioConfig,
}

#[pymethods]
impl Plan {
    fn times(&self) -> Vec<f64> {
        (0..self.reference.len()).map(|j| self.reference.time(j)).collect()
    }

    /// Position samples of one vehicle (0-based index) as (x, y, z) tuples.
    fn position(&self, uav: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let n = self.reference.n_uavs();
        if uav >= n {
            return Err(PyValueError::new_err(format!("uav index {uav} out of range")));
        }
        Ok((0..self.reference.len())
            .map(|j| positions_of(self.reference.state(j), n, uav))
            .collect())
    }

    /// Jerk command samples of one vehicle as (x, y, z) tuples.
    fn jerk(&self, uav: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let n = self.reference.n_uavs();
        if uav >= n {
            return Err(PyValueError::new_err(format!("uav index {uav} out of range")));
        }
        Ok((0..self.reference.len())
            .map(|j| {
                let u = self.reference.control(j);
                (u[3 * uav], u[3 * uav + 1], u[3 * uav + 2])
            })
            .collect())
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = sim::plan_metrics(&self.reference, &self.cfg);
        let d = PyDict::new(py);
        d.set_item("terminal_formation_error", m.terminal_formation_error)?;
        d.set_item("initial_formation_error", m.initial_formation_error)?;
        d.set_item("velocity_consensus_error", m.velocity_consensus_error)?;
        d.set_item("min_pair_distance", m.min_pair_distance)?;
        d.set_item("peak_acceleration", m.peak_acceleration)?;
        d.set_item("peak_jerk", m.peak_jerk)?;
        Ok(d)
    }
}

/// Time history of a closed-loop run.
#[pyclass]
struct Trace {
    trace: SimTrace,
    metrics: Metrics,
}

#[pymethods]
impl Trace {
    fn times(&self) -> Vec<f64> {
        self.trace.records.iter().map(|r| r.t).collect()
    }

    fn __len__(&self) -> usize {
        self.trace.records.len()
    }

    fn position(&self, uav: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let n = self.trace.n_uavs;
        if uav >= n {
            return Err(PyValueError::new_err(format!("uav index {uav} out of range")));
        }
        Ok(self
            .trace
            .records
            .iter()
            .map(|r| positions_of(&r.state, n, uav))
            .collect())
    }

    fn reference_position(&self, uav: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let n = self.trace.n_uavs;
        if uav >= n {
            return Err(PyValueError::new_err(format!("uav index {uav} out of range")));
        }
        Ok(self
            .trace
            .records
            .iter()
            .map(|r| positions_of(&r.reference, n, uav))
            .collect())
    }

    /// Distance history of an unordered pair (0-based indices).
    fn distance(&self, i: usize, j: usize) -> PyResult<Vec<f64>> {
        let n = self.trace.n_uavs;
        if i >= n || j >= n || i == j {
            return Err(PyValueError::new_err("invalid pair"));
        }
        Ok(self
            .trace
            .records
            .iter()
            .map(|r| {
                r.pairs
                    .iter()
                    .find(|p| p.i == i && p.j == j)
                    .map(|p| p.dist)
                    .unwrap_or(f64::NAN)
            })
            .collect())
    }

    fn vhat(&self) -> Vec<f64> {
        self.trace.records.iter().map(|r| r.vhat).collect()
    }

    /// Tracking value function history.
    fn value_function(&self) -> Vec<f64> {
        self.trace.records.iter().map(|r| r.value_function).collect()
    }

    fn thrust(&self, uav: usize) -> PyResult<Vec<f64>> {
        if uav >= self.trace.n_uavs {
            return Err(PyValueError::new_err(format!("uav index {uav} out of range")));
        }
        Ok(self
            .trace
            .records
            .iter()
            .map(|r| r.physical[uav].thrust)
            .collect())
    }

    /// Roll, pitch, yaw history of one vehicle.
    fn attitude(&self, uav: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        if uav >= self.trace.n_uavs {
            return Err(PyValueError::new_err(format!("uav index {uav} out of range")));
        }
        Ok(self
            .trace
            .records
            .iter()
            .map(|r| {
                let q = &r.physical[uav];
                (q.roll, q.pitch, q.yaw)
            })
            .collect())
    }

    fn min_pair_distance(&self) -> f64 {
        self.metrics.min_pair_distance
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.metrics;
        let d = PyDict::new(py);
        d.set_item("terminal_formation_error", m.terminal_formation_error)?;
        d.set_item("initial_formation_error", m.initial_formation_error)?;
        d.set_item("velocity_consensus_error", m.velocity_consensus_error)?;
        d.set_item("min_pair_distance", m.min_pair_distance)?;
        d.set_item("position_deviation_l2", m.position_deviation_l2)?;
        d.set_item("control_effort", m.control_effort)?;
        d.set_item("max_control_step", m.max_control_step)?;
        d.set_item("peak_acceleration", m.peak_acceleration)?;
        d.set_item("peak_jerk", m.peak_jerk)?;
        d.set_item("tracking_cost", m.tracking_cost)?;
        let pairs = PyList::empty(py);
        for p in &m.min_distance_per_pair {
            pairs.append((p.i, p.j, p.dist))?;
        }
        d.set_item("min_distance_per_pair", pairs)?;
        Ok(d)
    }
}

/// Names of the bundled scenarios.
#[pyfunction]
fn fixture_names() -> Vec<&'static str> {
    scenario::fixture_names().to_vec()
}

/// Solve the planning problem and sample it at the scenario step.
#[pyfunction]
fn plan(scenario: &Scenario) -> PyResult<Plan> {
    let cfg = &scenario.cfg;
    let cost =
        CostMatrices::new(&cfg.formation, &cfg.zeta, &cfg.delta, &cfg.eta).map_err(py_err)?;
    let planner = PlannerSolution::solve(&cost, &cfg.initial_state, cfg.t_f).map_err(py_err)?;
    let steps = (cfg.t_f / cfg.dt + 1e-9).floor() as usize;
    let reference = planner.sample_grid(cfg.dt, steps).map_err(py_err)?;
    Ok(Plan {
        reference,
        cfg: cfg.clone(),
    })
}

/// Run the full pipeline in closed loop.
#[pyfunction]
fn simulate(scenario: &Scenario) -> PyResult<Trace> {
    let trace = sim::run(&scenario.cfg).map_err(py_err)?;
    let metrics = sim::metrics(&trace, &scenario.cfg);
    Ok(Trace { trace, metrics })
}

/// Forward-path weight of the pair (positions and velocity as 3-tuples).
#[pyfunction]
fn forward_weight(p_i: (f64, f64, f64), p_j: (f64, f64, f64), v_i: (f64, f64, f64)) -> f64 {
    collision::forward_weight(&vec3(p_i), &vec3(p_j), &vec3(v_i))
}

#[pyfunction]
fn approach_weight(
    p_i: (f64, f64, f64),
    p_j: (f64, f64, f64),
    v_i: (f64, f64, f64),
    v_j: (f64, f64, f64),
) -> f64 {
    collision::approach_weight(&vec3(p_i), &vec3(p_j), &vec3(v_i), &vec3(v_j))
}

#[pyfunction]
fn unified_weight(
    p_i: (f64, f64, f64),
    p_j: (f64, f64, f64),
    v_i: (f64, f64, f64),
    v_j: (f64, f64, f64),
) -> f64 {
    collision::unified_weight(&vec3(p_i), &vec3(p_j), &vec3(v_i), &vec3(v_j))
}

/// Thrust (N), roll, pitch (rad) for a commanded acceleration and yaw.
#[pyfunction]
#[pyo3(signature = (accel, yaw, mass=1.0, gravity=9.81))]
fn thrust_attitude(
    accel: (f64, f64, f64),
    yaw: f64,
    mass: f64,
    gravity: f64,
) -> PyResult<(f64, f64, f64)> {
    let params = QuadrotorParams {
        mass,
        arm_length: 0.2,
        gravity,
        inertia: [0.016, 0.016, 0.016],
    };
    let (thrust, roll, pitch, _) =
        thrust_and_attitude(&vec3(accel), yaw, &params).map_err(py_err)?;
    Ok((thrust, roll, pitch))
}

#[pymodule]
fn flatform_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Plan>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(fixture_names, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(forward_weight, m)?)?;
    m.add_function(wrap_pyfunction!(approach_weight, m)?)?;
    m.add_function(wrap_pyfunction!(unified_weight, m)?)?;
    m.add_function(wrap_pyfunction!(thrust_attitude, m)?)?;
    Ok(())
}
