//! Shared domain types for the vertical SLIP hopper with a slider-crank leg.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipError};
use crate::kinematics;

/// Residual tolerance used for event detection (m, m/s or s as appropriate).
pub const EVENT_TOL: f64 = 1e-9;

/// How the crank moves from `theta1` to `theta2` during compression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrankDrive {
    /// Constant angular speed in rad/s.
    Finite { omega: f64 },
    /// The crank snaps to `theta2` at touchdown.
    Instantaneous,
}

impl CrankDrive {
    pub fn omega(&self) -> Option<f64> {
        match *self {
            CrankDrive::Finite { omega } => Some(omega),
            CrankDrive::Instantaneous => None,
        }
    }
}

impl fmt::Display for CrankDrive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrankDrive::Finite { omega } => write!(f, "omega={omega}"),
            CrankDrive::Instantaneous => write!(f, "instant"),
        }
    }
}

impl FromStr for CrankDrive {
    type Err = SlipError;

    /// Accepts `instant`, `instantaneous`, or `omega=<rad/s>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("instant") || s.eq_ignore_ascii_case("instantaneous") {
            return Ok(CrankDrive::Instantaneous);
        }
        if let Some(v) = s.strip_prefix("omega=") {
            let omega: f64 = v
                .trim()
                .parse()
                .map_err(|_| SlipError::ConfigInvalid(format!("bad omega value `{v}`")))?;
            return Ok(CrankDrive::Finite { omega });
        }
        Err(SlipError::ConfigInvalid(format!(
            "crank mode must be `instant` or `omega=VALUE`, got `{s}`"
        )))
    }
}

/// Physical constants of the hopper. SI units throughout, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Body mass [kg].
    pub m: f64,
    /// Leg spring stiffness [N/m].
    pub k: f64,
    /// Effective viscous damping between body and toe [N s/m].
    pub d_bar: f64,
    /// Spring rest length [m].
    pub l0: f64,
    /// Crank arm length [m].
    pub l1: f64,
    /// Connecting rod length [m].
    pub l2: f64,
    /// Gravitational acceleration [m/s^2].
    pub g: f64,
    pub crank: CrankDrive,
    /// Crank angle at touchdown [rad].
    pub theta1: f64,
}

impl ModelParams {
    /// Hopper constants from the reference parameter table: m = 3 kg,
    /// k = 2500 N/m, d = 10 N s/m, l0 = 0.2 m, l1 = l2 = 0.1 m, with
    /// g = 9.81, theta1 = 0 and a 20 rad/s crank.
    pub fn table2() -> Self {
        ModelParams {
            m: 3.0,
            k: 2500.0,
            d_bar: 10.0,
            l0: 0.2,
            l1: 0.1,
            l2: 0.1,
            g: 9.81,
            crank: CrankDrive::Finite { omega: 20.0 },
            theta1: 0.0,
        }
    }

    pub fn with_crank(mut self, crank: CrankDrive) -> Self {
        self.crank = crank;
        self
    }

    pub fn with_damping(mut self, d_bar: f64) -> Self {
        self.d_bar = d_bar;
        self
    }

    /// Leg offset at the touchdown crank angle.
    pub fn r1(&self) -> f64 {
        kinematics::leg_offset(self.theta1, self)
    }

    /// Body height at which the toe meets the ground.
    pub fn touchdown_height(&self) -> f64 {
        self.l0 + self.r1()
    }

    pub fn damping_ratio(&self) -> f64 {
        self.d_bar / (2.0 * (self.m * self.k).sqrt())
    }

    pub fn natural_frequency(&self) -> f64 {
        (self.k / self.m).sqrt()
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::table2()
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(SlipError::NonPositive { name, value })
    }
}

/// Checks every model invariant and hands the parameters back unchanged.
pub fn validate(params: ModelParams) -> Result<ModelParams> {
    positive("m", params.m)?;
    positive("k", params.k)?;
    positive("g", params.g)?;
    if !(params.d_bar.is_finite() && params.d_bar >= 0.0) {
        return Err(SlipError::NonPositive {
            name: "d_bar",
            value: params.d_bar,
        });
    }
    for (name, v) in [("l0", params.l0), ("l1", params.l1), ("l2", params.l2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(SlipError::GeometryInvalid(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    if params.l1 > params.l2 {
        return Err(SlipError::GeometryInvalid(format!(
            "crank arm l1 = {} exceeds connecting rod l2 = {}",
            params.l1, params.l2
        )));
    }
    let d_sq = params.d_bar * params.d_bar;
    let four_mk = 4.0 * params.m * params.k;
    if d_sq >= four_mk {
        return Err(SlipError::OverDamped { d_sq, four_mk });
    }
    if !(params.theta1.is_finite() && params.theta1 >= 0.0 && params.theta1 < FRAC_PI_2) {
        return Err(SlipError::InvalidAngle(format!(
            "theta1 = {} outside [0, pi/2)",
            params.theta1
        )));
    }
    if let CrankDrive::Finite { omega } = params.crank {
        positive("omega", omega)?;
    }
    Ok(params)
}

/// Commanded crank angle for one stance phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Desired crank angle [rad].
    pub theta2: f64,
}

impl ControlInput {
    pub fn new(theta2: f64) -> Self {
        ControlInput { theta2 }
    }

    pub fn from_degrees(deg: f64) -> Self {
        ControlInput {
            theta2: deg.to_radians(),
        }
    }

    /// Requires `theta1 <= theta2 < pi/2`.
    pub fn checked(self, params: &ModelParams) -> Result<Self> {
        if self.theta2.is_finite() && self.theta2 >= params.theta1 && self.theta2 < FRAC_PI_2 {
            Ok(self)
        } else {
            Err(SlipError::InvalidAngle(format!(
                "theta2 = {} outside [theta1 = {}, pi/2)",
                self.theta2, params.theta1
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Descent,
    Compression,
    Decompression,
    Ascent,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Descent => "descent",
            Phase::Compression => "compression",
            Phase::Decompression => "decompression",
            Phase::Ascent => "ascent",
        }
    }

    pub fn in_stance(&self) -> bool {
        matches!(self, Phase::Compression | Phase::Decompression)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = SlipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descent" => Ok(Phase::Descent),
            "compression" => Ok(Phase::Compression),
            "decompression" => Ok(Phase::Decompression),
            "ascent" => Ok(Phase::Ascent),
            other => Err(SlipError::Csv(format!("unknown phase `{other}`"))),
        }
    }
}

/// Instantaneous hopper state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub t: f64,
    pub y: f64,
    pub ydot: f64,
    pub theta: f64,
    pub phase: Phase,
}

/// Apex of a flight phase; the vertical velocity there is zero by definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApexState {
    pub y_a: f64,
    pub stride_index: usize,
}

impl ApexState {
    pub fn new(y_a: f64) -> Self {
        ApexState {
            y_a,
            stride_index: 0,
        }
    }
}

/// Event log of one apex-to-apex stride of the numeric plant.
///
/// `t_td` and `t_apex` are measured from the starting apex; `t_b` and
/// `t_lo` from touchdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrideRecord {
    pub control: ControlInput,
    pub t_td: f64,
    pub t_b: f64,
    pub t_lo: f64,
    pub t_apex: f64,
    pub state_td: HybridState,
    pub state_b: HybridState,
    pub state_lo: HybridState,
    pub y_a_next: f64,
    /// The crank reached `theta2` no later than the bottom event.
    pub saturated: bool,
}
