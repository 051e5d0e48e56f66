//! Slider-crank geometry and the stance-phase crank schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipError};
use crate::model::{ControlInput, CrankDrive, ModelParams};

/// Angle between crank arm and connecting rod.
pub fn rod_angle(theta: f64, params: &ModelParams) -> f64 {
    // l1 <= l2 keeps the argument in [-1, 1]; clamp guards rounding.
    ((params.l1 / params.l2) * theta.sin())
        .clamp(-1.0, 1.0)
        .asin()
}

/// Distance between the body and the top of the leg spring.
pub fn leg_offset(theta: f64, params: &ModelParams) -> f64 {
    params.l1 * theta.cos() + params.l2 * rod_angle(theta, params).cos()
}

/// Which plateau ends the crank ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Plateau {
    /// Neither the target angle nor the bottom event has been reached yet.
    Pending,
    /// The crank reached `theta2` at `t_star`.
    Saturated,
    /// The bottom event at the given time stopped the crank short of `theta2`.
    Frozen(f64),
}

/// Crank angle as a function of stance time.
///
/// The crank ramps at constant speed from `theta1` and either holds
/// `theta2` once it gets there or freezes where it stands at the bottom
/// event, whichever comes first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrankSchedule {
    pub theta1: f64,
    pub theta2: f64,
    /// `None` for an instantaneous crank.
    pub omega: Option<f64>,
    pub plateau: Plateau,
}

impl CrankSchedule {
    pub fn new(params: &ModelParams, control: ControlInput) -> Self {
        let omega = match params.crank {
            CrankDrive::Finite { omega } => Some(omega),
            CrankDrive::Instantaneous => None,
        };
        let mut s = CrankSchedule {
            theta1: params.theta1,
            theta2: control.theta2,
            omega,
            plateau: Plateau::Pending,
        };
        if s.t_star() == Some(0.0) || omega.is_none() {
            s.plateau = Plateau::Saturated;
        }
        s
    }

    /// Time at which the ramp reaches `theta2`; zero for an instantaneous crank.
    pub fn t_star(&self) -> Option<f64> {
        match self.omega {
            Some(w) => Some(((self.theta2 - self.theta1) / w).max(0.0)),
            None => Some(0.0),
        }
    }

    /// Time at which a bottom event froze the crank, if it did.
    pub fn t_freeze(&self) -> Option<f64> {
        match self.plateau {
            Plateau::Frozen(t) => Some(t),
            _ => None,
        }
    }

    pub fn saturate(&mut self) {
        self.plateau = Plateau::Saturated;
    }

    /// Records a bottom event at `t_b`. Saturation wins ties, so this only
    /// freezes the crank when the ramp is still short of `theta2`.
    pub fn bottom_at(&mut self, t_b: f64) {
        if self.plateau != Plateau::Pending {
            return;
        }
        match self.t_star() {
            Some(ts) if t_b < ts => self.plateau = Plateau::Frozen(t_b),
            _ => self.plateau = Plateau::Saturated,
        }
    }

    pub fn is_saturated(&self) -> bool {
        self.plateau == Plateau::Saturated
    }

    /// Angle the crank settles at once its plateau is established.
    pub fn final_angle(&self) -> Option<f64> {
        match self.plateau {
            Plateau::Pending => None,
            Plateau::Saturated => Some(self.theta2),
            Plateau::Frozen(t_b) => Some(self.ramp(t_b)),
        }
    }

    fn ramp(&self, t: f64) -> f64 {
        match self.omega {
            Some(w) => self.theta1 + w * t,
            None => self.theta2,
        }
    }

    /// Angle without checks. Pending schedules are treated as still ramping.
    pub(crate) fn angle_unchecked(&self, t: f64) -> f64 {
        if self.omega.is_none() {
            return self.theta2;
        }
        match self.plateau {
            Plateau::Pending => self.ramp(t).min(self.theta2),
            Plateau::Saturated => self.ramp(t).min(self.theta2),
            Plateau::Frozen(t_b) => self.ramp(t.min(t_b)),
        }
    }
}

/// Crank angle at stance time `t`.
pub fn crank_angle_at(t: f64, schedule: &CrankSchedule) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(SlipError::ScheduleUndefined(t));
    }
    if schedule.omega.is_none() {
        return Ok(schedule.theta2);
    }
    if schedule.plateau == Plateau::Pending {
        if let Some(ts) = schedule.t_star() {
            if t >= ts {
                return Err(SlipError::ScheduleUndefined(t));
            }
        }
    }
    Ok(schedule.angle_unchecked(t))
}
