//! Apex return maps behind a common interface.

use crate::analytic::{apex_return_hat, predict_stride, LiftoffMethod};
use crate::error::Result;
use crate::model::{ApexState, ControlInput, ModelParams};
use crate::simulator::{apex_return, IntegratorConfig};

/// Next apex height and liftoff velocity from one stride.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrideSummary {
    pub y_a_next: f64,
    pub ydot_lo: f64,
    /// Whether the crank reached its target before bottom. The analytic
    /// map always assumes it did.
    pub saturated: bool,
}

/// A map from (apex height, crank target) to the next apex height.
pub trait ReturnMap: Sync {
    fn stride(&self, y_a: f64, theta2: f64) -> Result<StrideSummary>;

    fn next_apex(&self, y_a: f64, theta2: f64) -> Result<f64> {
        self.stride(y_a, theta2).map(|s| s.y_a_next)
    }

    fn params(&self) -> &ModelParams;
}

/// The closed-form approximate map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticMap {
    pub params: ModelParams,
    pub liftoff: LiftoffMethod,
}

impl AnalyticMap {
    pub fn new(params: ModelParams) -> Self {
        AnalyticMap {
            params,
            liftoff: LiftoffMethod::Newton,
        }
    }

    pub fn exact(params: ModelParams) -> Self {
        AnalyticMap {
            params,
            liftoff: LiftoffMethod::Exact,
        }
    }
}

impl ReturnMap for AnalyticMap {
    fn stride(&self, y_a: f64, theta2: f64) -> Result<StrideSummary> {
        let s = predict_stride(y_a, ControlInput::new(theta2), &self.params, self.liftoff)?;
        Ok(StrideSummary {
            y_a_next: s.y_a_next,
            ydot_lo: s.ydot_lo,
            saturated: true,
        })
    }

    fn next_apex(&self, y_a: f64, theta2: f64) -> Result<f64> {
        apex_return_hat(y_a, ControlInput::new(theta2), &self.params, self.liftoff)
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }
}

/// The integrated hybrid dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericMap {
    pub params: ModelParams,
    pub config: IntegratorConfig,
}

impl NumericMap {
    pub fn new(params: ModelParams, config: IntegratorConfig) -> Self {
        NumericMap { params, config }
    }
}

impl ReturnMap for NumericMap {
    fn stride(&self, y_a: f64, theta2: f64) -> Result<StrideSummary> {
        let (next, rec) = apex_return(
            ApexState::new(y_a),
            ControlInput::new(theta2),
            &self.params,
            &self.config,
        )?;
        Ok(StrideSummary {
            y_a_next: next.y_a,
            ydot_lo: rec.state_lo.ydot,
            saturated: rec.saturated,
        })
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }
}
