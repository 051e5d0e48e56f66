//! Deadbeat apex-height control.
//!
//! Each stride the controller inverts a model return map (normally the
//! analytic one) for the crank target that lands the next apex on the
//! reference, then applies that target to the plant.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipError};
use crate::harness::pct_error;
use crate::maps::ReturnMap;
use crate::model::ControlInput;
use crate::roots::{bisect, golden_section, linspace};

/// Points sampled across the control range before refining.
const SCAN_POINTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadbeatConfig {
    /// Lower end of the control range [rad].
    pub theta_min: f64,
    /// Upper end of the control range [rad].
    pub theta_max: f64,
    /// Acceptable `|prediction - target|` [m].
    pub tol_height: f64,
    pub max_evals: usize,
}

impl Default for DeadbeatConfig {
    fn default() -> Self {
        DeadbeatConfig {
            theta_min: 15f64.to_radians(),
            theta_max: 45f64.to_radians(),
            tol_height: 1e-6,
            max_evals: 200,
        }
    }
}

impl DeadbeatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min < self.theta_max
            && self.theta_min >= 0.0
            && self.theta_max < std::f64::consts::FRAC_PI_2)
        {
            return Err(SlipError::ConfigInvalid(format!(
                "control range [{}, {}] rad is empty or outside [0, pi/2)",
                self.theta_min, self.theta_max
            )));
        }
        if !(self.tol_height > 0.0) {
            return Err(SlipError::ConfigInvalid(
                "tol_height must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Bisection,
    GoldenSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadbeatSolution {
    pub control: ControlInput,
    /// Model prediction of the next apex under `control`.
    pub predicted: f64,
    /// The target could not be met within `tol_height` anywhere in range.
    pub saturated: bool,
    pub method: SearchMethod,
}

/// Crank target minimizing `|map(y_now, theta2) - y_desired|` over the
/// configured range.
///
/// If a coarse scan shows the map non-decreasing in `theta2` the target is
/// bracketed and bisected; otherwise the best scan point is refined by
/// bisection on a local sign change, or golden-section on the error.
pub fn deadbeat_theta(
    y_now: f64,
    y_desired: f64,
    map: &dyn ReturnMap,
    config: &DeadbeatConfig,
) -> Result<DeadbeatSolution> {
    config.validate()?;
    let thetas = linspace(config.theta_min, config.theta_max, SCAN_POINTS);
    let values: Vec<Option<f64>> = thetas
        .iter()
        .map(|&th| map.next_apex(y_now, th).ok())
        .collect();
    if values.iter().all(Option::is_none) {
        return Err(SlipError::MapUnevaluable {
            lo: config.theta_min,
            hi: config.theta_max,
        });
    }
    let err = |th: f64| match map.next_apex(y_now, th) {
        Ok(y) => y - y_desired,
        Err(_) => f64::NAN,
    };
    let finish = |theta: f64, method: SearchMethod| -> Result<DeadbeatSolution> {
        let predicted = map.next_apex(y_now, theta)?;
        Ok(DeadbeatSolution {
            control: ControlInput::new(theta),
            predicted,
            saturated: (predicted - y_desired).abs() > config.tol_height,
            method,
        })
    };
    let xtol = 1e-12;
    let ftol = 0.1 * config.tol_height;
    let budget = config.max_evals.saturating_sub(SCAN_POINTS).max(8);

    let monotone = values.iter().all(Option::is_some)
        && values.windows(2).all(|w| w[1].unwrap() >= w[0].unwrap());
    if monotone {
        let first = values[0].unwrap();
        let last = values[SCAN_POINTS - 1].unwrap();
        if y_desired <= first {
            return finish(config.theta_min, SearchMethod::Bisection);
        }
        if y_desired >= last {
            return finish(config.theta_max, SearchMethod::Bisection);
        }
        let i = values
            .windows(2)
            .position(|w| w[0].unwrap() <= y_desired && y_desired <= w[1].unwrap())
            .expect("target lies between the endpoint values");
        let theta = bisect(err, thetas[i], thetas[i + 1], xtol, ftol).unwrap_or(thetas[i]);
        return finish(theta, SearchMethod::Bisection);
    }

    // non-monotone or partially unevaluable
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            if (v - y_desired).abs() < best_err {
                best_err = (v - y_desired).abs();
                best = i;
            }
        }
    }
    for j in best.checked_sub(1).into_iter().chain([best]) {
        if j + 1 >= SCAN_POINTS {
            continue;
        }
        if let (Some(a), Some(b)) = (values[j], values[j + 1]) {
            if (a - y_desired).signum() != (b - y_desired).signum() {
                if let Some(theta) = bisect(err, thetas[j], thetas[j + 1], xtol, ftol) {
                    if err(theta).is_finite() {
                        return finish(theta, SearchMethod::Bisection);
                    }
                }
            }
        }
    }
    let lo = thetas[best.saturating_sub(1)];
    let hi = thetas[(best + 1).min(SCAN_POINTS - 1)];
    let (theta, e) = golden_section(
        |th| {
            let e = err(th).abs();
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        },
        lo,
        hi,
        xtol,
        budget,
    );
    let theta = if e <= best_err { theta } else { thetas[best] };
    finish(theta, SearchMethod::GoldenSection)
}

/// Closed-loop apex tracking result.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingResult {
    pub reference: Vec<f64>,
    /// Plant apex reached after each stride.
    pub achieved: Vec<f64>,
    /// Crank target applied each stride [rad].
    pub controls: Vec<f64>,
    /// Model prediction of each achieved apex.
    pub predicted: Vec<f64>,
    pub saturated: Vec<bool>,
    pub pct_errors: Vec<f64>,
    pub mean_pct_error: f64,
}

impl TrackingResult {
    /// CSV with columns `stride, y_ref, y_a, theta2_deg, pct_error`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["stride", "y_ref", "y_a", "theta2_deg", "pct_error"])?;
        for i in 0..self.reference.len() {
            wtr.serialize((
                i,
                self.reference[i],
                self.achieved[i],
                self.controls[i].to_degrees(),
                self.pct_errors[i],
            ))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `0.6 + 0.15 sin(2 pi n / 20)`-style reference of `len` strides.
pub fn sine_reference(len: usize, mean: f64, amplitude: f64, period: f64) -> Vec<f64> {
    (0..len)
        .map(|n| mean + amplitude * (2.0 * std::f64::consts::PI * n as f64 / period).sin())
        .collect()
}

/// Runs the deadbeat loop: the controller queries `model`, the chosen target
/// drives `plant`. Stride `n` aims the apex after it at `reference[n]`.
pub fn track(
    reference: &[f64],
    y_a0: f64,
    plant: &dyn ReturnMap,
    model: &dyn ReturnMap,
    config: &DeadbeatConfig,
) -> Result<TrackingResult> {
    if let Some(bad) = reference.iter().find(|r| !(0.4..=0.8).contains(*r)) {
        return Err(SlipError::ConfigInvalid(format!(
            "reference apex {bad} m outside [0.4, 0.8]"
        )));
    }
    let mut out = TrackingResult {
        reference: reference.to_vec(),
        ..Default::default()
    };
    let mut y = y_a0;
    for (n, &target) in reference.iter().enumerate() {
        let at = |e: SlipError| SlipError::AtStride {
            stride: n,
            y_a: y,
            source: Box::new(e),
        };
        let sol = deadbeat_theta(y, target, model, config).map_err(at)?;
        let next = plant.next_apex(y, sol.control.theta2).map_err(at)?;
        out.achieved.push(next);
        out.controls.push(sol.control.theta2);
        out.predicted.push(sol.predicted);
        out.saturated.push(sol.saturated);
        out.pct_errors.push(pct_error(target, next));
        y = next;
    }
    out.mean_pct_error = if out.pct_errors.is_empty() {
        0.0
    } else {
        out.pct_errors.iter().sum::<f64>() / out.pct_errors.len() as f64
    };
    Ok(out)
}
