//! Python bindings for `slipscm-core`.
//!
//! Angles cross the boundary in degrees, everything else in SI units.
//! Core failures raise `slipscm.SlipError` with the failure kind in brackets.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use slipscm_core as core;
use slipscm_core::analytic::LiftoffMethod;
use slipscm_core::control::{self, DeadbeatConfig};
use slipscm_core::harness::{self, GridSpec};
use slipscm_core::simulator::{self, IntegratorConfig};
use slipscm_core::stability::{self, FixedPointConfig};
use slipscm_core::{AnalyticMap, ApexState, ControlInput, CrankDrive, NumericMap, ReturnMap};

create_exception!(slipscm, SlipError, PyValueError);

fn err(e: core::SlipError) -> PyErr {
    SlipError::new_err(format!("[{}] {e}", e.kind()))
}

fn liftoff(name: &str) -> PyResult<LiftoffMethod> {
    match name {
        "newton" => Ok(LiftoffMethod::Newton),
        "exact" => Ok(LiftoffMethod::Exact),
        _ => Err(PyValueError::new_err(format!(
            "liftoff must be 'newton' or 'exact', got {name:?}"
        ))),
    }
}

fn integrator(dt: Option<f64>) -> PyResult<IntegratorConfig> {
    let mut c = IntegratorConfig::harness();
    if let Some(dt) = dt {
        c.dt = dt;
    }
    c.validate().map_err(err)?;
    Ok(c)
}

/// Hopper constants. `crank` is `"instant"` or `"omega=VALUE"` (rad/s).
#[pyclass(name = "ModelParams", frozen, eq, skip_from_py_object)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyModelParams {
    inner: core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (m=3.0, k=2500.0, d_bar=10.0, l0=0.2, l1=0.1, l2=0.1, g=9.81, crank="omega=20", theta1_deg=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        m: f64,
        k: f64,
        d_bar: f64,
        l0: f64,
        l1: f64,
        l2: f64,
        g: f64,
        crank: &str,
        theta1_deg: f64,
    ) -> PyResult<Self> {
        let crank: CrankDrive = crank.parse().map_err(err)?;
        let p = core::ModelParams {
            m,
            k,
            d_bar,
            l0,
            l1,
            l2,
            g,
            crank,
            theta1: theta1_deg.to_radians(),
        };
        Ok(PyModelParams {
            inner: core::validate(p).map_err(err)?,
        })
    }

    /// The reference parameter set.
    #[staticmethod]
    fn table2() -> Self {
        PyModelParams {
            inner: core::ModelParams::table2(),
        }
    }

    /// Copy with a different crank drive.
    fn with_crank(&self, crank: &str) -> PyResult<Self> {
        let crank: CrankDrive = crank.parse().map_err(err)?;
        Ok(PyModelParams {
            inner: self.inner.with_crank(crank),
        })
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }
    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }
    #[getter]
    fn d_bar(&self) -> f64 {
        self.inner.d_bar
    }
    #[getter]
    fn l0(&self) -> f64 {
        self.inner.l0
    }
    #[getter]
    fn l1(&self) -> f64 {
        self.inner.l1
    }
    #[getter]
    fn l2(&self) -> f64 {
        self.inner.l2
    }
    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }
    #[getter]
    fn crank(&self) -> String {
        self.inner.crank.to_string()
    }
    #[getter]
    fn theta1_deg(&self) -> f64 {
        self.inner.theta1.to_degrees()
    }

    fn touchdown_height(&self) -> f64 {
        self.inner.touchdown_height()
    }

    fn damping_ratio(&self) -> f64 {
        self.inner.damping_ratio()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(m={}, k={}, d_bar={}, l0={}, l1={}, l2={}, g={}, crank='{}', theta1_deg={})",
            p.m,
            p.k,
            p.d_bar,
            p.l0,
            p.l1,
            p.l2,
            p.g,
            p.crank,
            p.theta1.to_degrees()
        )
    }
}

/// Next apex height of the simulated plant.
#[pyfunction]
#[pyo3(signature = (params, y_a, theta2_deg, dt=None))]
fn apex_return(
    params: &PyModelParams,
    y_a: f64,
    theta2_deg: f64,
    dt: Option<f64>,
) -> PyResult<f64> {
    let (next, _) = simulator::apex_return(
        ApexState::new(y_a),
        ControlInput::from_degrees(theta2_deg),
        &params.inner,
        &integrator(dt)?,
    )
    .map_err(err)?;
    Ok(next.y_a)
}

/// Simulates `strides` strides at a fixed crank target. Returns the trace
/// columns and the apex sequence (starting apex first).
#[pyfunction]
#[pyo3(signature = (params, y_a, theta2_deg, strides=1, dt=None))]
fn simulate<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    y_a: f64,
    theta2_deg: f64,
    strides: usize,
    dt: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let controls = vec![ControlInput::from_degrees(theta2_deg); strides];
    let (records, trace) = simulator::simulate_strides(
        ApexState::new(y_a),
        &controls,
        &params.inner,
        &integrator(dt)?,
    )
    .map_err(err)?;
    let s = &trace.samples;
    let d = PyDict::new(py);
    d.set_item("t", s.iter().map(|x| x.t).collect::<Vec<_>>())?;
    d.set_item("y", s.iter().map(|x| x.y).collect::<Vec<_>>())?;
    d.set_item("ydot", s.iter().map(|x| x.ydot).collect::<Vec<_>>())?;
    d.set_item(
        "theta_deg",
        s.iter().map(|x| x.theta.to_degrees()).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "phase",
        s.iter().map(|x| x.phase.as_str()).collect::<Vec<_>>(),
    )?;
    let mut apexes = vec![y_a];
    apexes.extend(records.iter().map(|r| r.y_a_next));
    d.set_item("apexes", apexes)?;
    d.set_item(
        "saturated",
        records.iter().map(|r| r.saturated).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Closed-form prediction of one stride.
#[pyfunction]
#[pyo3(signature = (params, y_a, theta2_deg, liftoff="newton"))]
fn predict<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    y_a: f64,
    theta2_deg: f64,
    liftoff: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let s = core::analytic::predict_stride(
        y_a,
        ControlInput::from_degrees(theta2_deg),
        &params.inner,
        self::liftoff(liftoff)?,
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t_td", s.t_td)?;
    d.set_item("t_b", s.t_b)?;
    d.set_item("t_lo", s.t_lo)?;
    d.set_item("y_lo", s.y_lo)?;
    d.set_item("ydot_lo", s.ydot_lo)?;
    d.set_item("y_a_next", s.y_a_next)?;
    Ok(d)
}

/// Prediction-error grid. The plant uses the crank drive of `params`.
#[pyfunction]
#[pyo3(signature = (params, ya_count=100, theta2_count=100, ya_min=0.4, ya_max=0.8, theta2_min_deg=15.0, theta2_max_deg=45.0, liftoff="newton"))]
#[allow(clippy::too_many_arguments)]
fn grid<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    ya_count: usize,
    theta2_count: usize,
    ya_min: f64,
    ya_max: f64,
    theta2_min_deg: f64,
    theta2_max_deg: f64,
    liftoff: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = GridSpec {
        ya_min,
        ya_max,
        ya_count,
        theta_min: theta2_min_deg.to_radians(),
        theta_max: theta2_max_deg.to_radians(),
        theta_count: theta2_count,
        plant: params.inner.crank,
        integrator: IntegratorConfig::harness(),
        liftoff: self::liftoff(liftoff)?,
    };
    let inner = params.inner;
    let g = py
        .detach(|| harness::run_grid(&spec, &inner))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("e_ap_mean", g.e_ap.mean)?;
    d.set_item("e_ap_std", g.e_ap.std)?;
    d.set_item("e_lv_mean", g.e_lv.mean)?;
    d.set_item("e_lv_std", g.e_lv.std)?;
    d.set_item("failed", g.failed)?;
    d.set_item(
        "saturation_boundary_deg",
        g.saturation_boundary.map(f64::to_degrees),
    )?;
    d.set_item("error_jump_deg", g.error_jump.map(f64::to_degrees))?;
    let p = &g.projection;
    d.set_item(
        "theta2_deg",
        p.iter().map(|c| c.theta2.to_degrees()).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "column_e_ap_mean",
        p.iter().map(|c| c.e_ap.mean).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "column_e_lv_mean",
        p.iter().map(|c| c.e_lv.mean).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Crank target [deg] whose predicted next apex is `target`, plus the
/// prediction and whether the target was out of reach.
#[pyfunction]
#[pyo3(signature = (params, y_a, target, liftoff="newton"))]
fn deadbeat(
    params: &PyModelParams,
    y_a: f64,
    target: f64,
    liftoff: &str,
) -> PyResult<(f64, f64, bool)> {
    let map = AnalyticMap {
        params: params.inner,
        liftoff: self::liftoff(liftoff)?,
    };
    let s = control::deadbeat_theta(y_a, target, &map, &DeadbeatConfig::default()).map_err(err)?;
    Ok((s.control.theta2.to_degrees(), s.predicted, s.saturated))
}

/// Closed-loop tracking: the closed-form model picks each crank target and
/// the simulated plant executes it.
#[pyfunction]
#[pyo3(signature = (params, reference, y_a0, liftoff="newton"))]
fn track<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    reference: Vec<f64>,
    y_a0: f64,
    liftoff: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let plant = NumericMap::new(params.inner, IntegratorConfig::harness());
    let model = AnalyticMap {
        params: params.inner,
        liftoff: self::liftoff(liftoff)?,
    };
    let r = py
        .detach(|| control::track(&reference, y_a0, &plant, &model, &DeadbeatConfig::default()))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("achieved", r.achieved)?;
    d.set_item(
        "theta2_deg",
        r.controls
            .iter()
            .map(|c| c.to_degrees())
            .collect::<Vec<_>>(),
    )?;
    d.set_item("pct_errors", r.pct_errors)?;
    d.set_item("mean_pct_error", r.mean_pct_error)?;
    Ok(d)
}

/// `map` is `"newton"` or `"exact"` (closed form) or `"numeric"`.
fn return_map(params: &PyModelParams, map: &str) -> PyResult<Box<dyn ReturnMap>> {
    Ok(match map {
        "numeric" => Box::new(NumericMap::new(params.inner, IntegratorConfig::harness())),
        other => Box::new(AnalyticMap {
            params: params.inner,
            liftoff: liftoff(other)?,
        }),
    })
}

/// Apex height mapped to itself at `theta2_deg`, or None.
#[pyfunction]
#[pyo3(signature = (params, theta2_deg, map="exact"))]
fn fixed_point(params: &PyModelParams, theta2_deg: f64, map: &str) -> PyResult<Option<f64>> {
    let m = return_map(params, map)?;
    let fp = stability::find_fixed_point(
        theta2_deg.to_radians(),
        m.as_ref(),
        &FixedPointConfig::default(),
    )
    .map_err(err)?;
    Ok(fp.height())
}

/// Derivative of the return map with respect to apex height at `y`.
#[pyfunction]
#[pyo3(signature = (params, theta2_deg, y, map="exact", delta_y=1e-4))]
fn eigen_apex(
    params: &PyModelParams,
    theta2_deg: f64,
    y: f64,
    map: &str,
    delta_y: f64,
) -> PyResult<f64> {
    let m = return_map(params, map)?;
    stability::eigen_apex(theta2_deg.to_radians(), y, m.as_ref(), delta_y).map_err(err)
}

#[pymodule]
fn slipscm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SlipError", m.py().get_type::<SlipError>())?;
    m.add_class::<PyModelParams>()?;
    m.add_function(wrap_pyfunction!(apex_return, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    m.add_function(wrap_pyfunction!(deadbeat, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(eigen_apex, m)?)?;
    m.add("OMEGA_SAT32", harness::OMEGA_SAT32)?;
    Ok(())
}
