//! Approximate analytical return map.
//!
//! The crank is assumed to jump from `theta1` to `theta2` at touchdown, so
//! the leg offset is a constant `r2` for the whole stance and the stance
//! dynamics reduce to a forced, under-damped linear oscillator with a
//! closed-form solution. Bottom time follows from the velocity solution;
//! liftoff is estimated with a single Newton step on the leg load starting
//! from twice the bottom time.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipError};
use crate::kinematics::leg_offset;
use crate::model::{validate, ApexState, ControlInput, ModelParams};

/// Threshold on `|dh/dt|` below which the Newton step is refused.
pub const NEWTON_DERIVATIVE_FLOOR: f64 = 1e-9;

/// Coefficients of the closed-form stance trajectory
/// `y(t) = exp(-xi w0 t) (a1 cos wd t + a2 sin wd t) + f / w0^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceCoefficients {
    pub xi: f64,
    pub w0: f64,
    pub wd: f64,
    /// Constant forcing term [m/s^2].
    pub f: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub r1: f64,
    pub r2: f64,
    pub y_td: f64,
    pub ydot_td: f64,
    // copied so the leg load can be evaluated from the coefficients alone
    k: f64,
    d_bar: f64,
    l0: f64,
}

/// Builds the stance coefficients for a touchdown state and control.
pub fn build_coefficients(
    y_td: f64,
    ydot_td: f64,
    control: ControlInput,
    params: &ModelParams,
) -> Result<StanceCoefficients> {
    let p = validate(*params)?;
    let xi = p.damping_ratio();
    let w0 = p.natural_frequency();
    let wd = w0 * (1.0 - xi * xi).sqrt();
    let r1 = leg_offset(p.theta1, &p);
    let r2 = leg_offset(control.theta2, &p);
    let f = -p.g + p.k * p.l0 / p.m + p.k * r2 / p.m;
    let sigma = xi * w0;
    let a1 = y_td - f / (w0 * w0);
    let a2 = (ydot_td + sigma * a1) / wd;
    // differentiate the position solution
    let b1 = a2 * wd - sigma * a1;
    let b2 = -a1 * wd - sigma * a2;
    Ok(StanceCoefficients {
        xi,
        w0,
        wd,
        f,
        a1,
        a2,
        b1,
        b2,
        r1,
        r2,
        y_td,
        ydot_td,
        k: p.k,
        d_bar: p.d_bar,
        l0: p.l0,
    })
}

impl StanceCoefficients {
    fn sigma(&self) -> f64 {
        self.xi * self.w0
    }

    /// Static stance equilibrium height `F / w0^2`.
    pub fn equilibrium(&self) -> f64 {
        self.f / (self.w0 * self.w0)
    }

    pub fn position(&self, t: f64) -> f64 {
        let (s, c) = (self.wd * t).sin_cos();
        (-self.sigma() * t).exp() * (self.a1 * c + self.a2 * s) + self.equilibrium()
    }

    pub fn velocity(&self, t: f64) -> f64 {
        let (s, c) = (self.wd * t).sin_cos();
        (-self.sigma() * t).exp() * (self.b1 * c + self.b2 * s)
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        let sigma = self.sigma();
        let c1 = self.b2 * self.wd - sigma * self.b1;
        let c2 = -self.b1 * self.wd - sigma * self.b2;
        let (s, c) = (self.wd * t).sin_cos();
        (-sigma * t).exp() * (c1 * c + c2 * s)
    }

    /// Leg load `k (y - l0 - r2) + d ydot`.
    pub fn leg_load(&self, t: f64) -> f64 {
        self.k * (self.position(t) - self.l0 - self.r2) + self.d_bar * self.velocity(t)
    }

    pub fn leg_load_rate(&self, t: f64) -> f64 {
        self.k * self.velocity(t) + self.d_bar * self.acceleration(t)
    }
}

pub fn stance_position(t: f64, c: &StanceCoefficients) -> f64 {
    c.position(t)
}

pub fn stance_velocity(t: f64, c: &StanceCoefficients) -> f64 {
    c.velocity(t)
}

/// Fall time from the apex to touchdown.
pub fn touchdown_time(apex: ApexState, params: &ModelParams) -> Result<f64> {
    let y_td = params.touchdown_height();
    let drop = apex.y_a - y_td;
    if !(drop >= 0.0) {
        return Err(SlipError::NoTouchdown {
            y_a: apex.y_a,
            y_td,
        });
    }
    Ok((2.0 * drop / params.g).sqrt())
}

/// Smallest positive time at which the stance velocity crosses zero upward.
///
/// The arctangent gives one root; the others are spaced `pi / wd` apart, so
/// the principal value is shifted until it is positive and the crossing has
/// the right direction. A touchdown at zero speed is accepted as long as the
/// body starts above the stance equilibrium, since it then moves down first.
pub fn bottom_time(c: &StanceCoefficients) -> Result<f64> {
    let starts_down = c.ydot_td < 0.0 || (c.ydot_td == 0.0 && c.a1 > 0.0);
    if !starts_down {
        return Err(SlipError::NoBottom { ydot_td: c.ydot_td });
    }
    let sigma = c.sigma();
    let num = c.a2 * c.wd - c.a1 * sigma;
    let den = c.a1 * c.wd + c.a2 * sigma;
    let period = PI / c.wd;
    let mut t = (num / den).atan() / c.wd;
    while t <= 0.0 || c.acceleration(t) <= 0.0 {
        t += period;
    }
    Ok(t)
}

/// One Newton step on the leg load from `2 t_b`.
pub fn liftoff_time(c: &StanceCoefficients) -> Result<f64> {
    let t_b = bottom_time(c)?;
    let t0 = 2.0 * t_b;
    let hdot = c.leg_load_rate(t0);
    if hdot.abs() < NEWTON_DERIVATIVE_FLOOR {
        return Err(SlipError::DegenerateNewton { t: t0, hdot });
    }
    Ok(t0 - c.leg_load(t0) / hdot)
}

/// First upward zero of the leg load after bottom, to machine precision.
pub fn liftoff_time_exact(c: &StanceCoefficients) -> Result<f64> {
    let t_b = bottom_time(c)?;
    let span = PI / c.wd;
    let n = 400;
    let mut lo = t_b;
    let mut hi = None;
    for i in 1..=n {
        let t = t_b + span * i as f64 / n as f64;
        if c.leg_load(t) >= 0.0 {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let mut hi = hi.ok_or_else(|| {
        SlipError::NoLiftoff("leg load stays negative through the decompression half-cycle".into())
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if c.leg_load(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftoffMethod {
    /// Single Newton step from twice the bottom time.
    #[default]
    Newton,
    /// Bracketed root of the closed-form leg load.
    Exact,
}

/// Full prediction for one stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticStride {
    pub coefficients: StanceCoefficients,
    pub t_td: f64,
    /// From touchdown.
    pub t_b: f64,
    /// From touchdown.
    pub t_lo: f64,
    pub y_lo: f64,
    pub ydot_lo: f64,
    pub y_a_next: f64,
}

impl AnalyticStride {
    /// Height at stride time `t` (measured from the starting apex), using
    /// ballistic flight outside the predicted stance interval.
    pub fn height_at(&self, y_a: f64, g: f64, t: f64) -> (f64, f64) {
        if t <= self.t_td {
            (y_a - 0.5 * g * t * t, -g * t)
        } else if t <= self.t_td + self.t_lo {
            let s = t - self.t_td;
            (self.coefficients.position(s), self.coefficients.velocity(s))
        } else {
            let s = t - self.t_td - self.t_lo;
            (
                self.y_lo + self.ydot_lo * s - 0.5 * g * s * s,
                self.ydot_lo - g * s,
            )
        }
    }

    pub fn t_apex(&self, g: f64) -> f64 {
        self.t_td + self.t_lo + self.ydot_lo / g
    }
}

/// The approximate return map with full event detail.
pub fn predict_stride(
    y_a: f64,
    control: ControlInput,
    params: &ModelParams,
    method: LiftoffMethod,
) -> Result<AnalyticStride> {
    let p = validate(*params)?;
    let control = control.checked(&p)?;
    let t_td = touchdown_time(ApexState::new(y_a), &p)?;
    let y_td = p.touchdown_height();
    let ydot_td = -p.g * t_td;
    let c = build_coefficients(y_td, ydot_td, control, &p)?;
    let t_b = bottom_time(&c)?;
    let t_lo = match method {
        LiftoffMethod::Newton => liftoff_time(&c)?,
        LiftoffMethod::Exact => liftoff_time_exact(&c)?,
    };
    if !(t_lo > t_b) {
        return Err(SlipError::NoLiftoff(format!(
            "predicted liftoff {t_lo} s does not follow bottom {t_b} s"
        )));
    }
    let y_lo = c.position(t_lo);
    let ydot_lo = c.velocity(t_lo);
    if !(ydot_lo > 0.0) {
        return Err(SlipError::NoLiftoff(format!(
            "predicted liftoff velocity {ydot_lo} m/s is not upward"
        )));
    }
    Ok(AnalyticStride {
        coefficients: c,
        t_td,
        t_b,
        t_lo,
        y_lo,
        ydot_lo,
        y_a_next: y_lo + ydot_lo * ydot_lo / (2.0 * p.g),
    })
}

/// Next apex height predicted by the approximate map.
pub fn apex_return_hat(
    y_a: f64,
    control: ControlInput,
    params: &ModelParams,
    method: LiftoffMethod,
) -> Result<f64> {
    predict_stride(y_a, control, params, method).map(|s| s.y_a_next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table2() -> ModelParams {
        ModelParams::table2()
    }

    fn coeffs(y_a: f64, deg: f64, p: &ModelParams) -> StanceCoefficients {
        let v = -(2.0 * p.g * (y_a - p.touchdown_height())).sqrt();
        build_coefficients(p.touchdown_height(), v, ControlInput::from_degrees(deg), p).unwrap()
    }

    #[test]
    fn frequencies() {
        let c = coeffs(0.6, 30.0, &table2());
        assert_abs_diff_eq!(c.xi, 0.057735, epsilon = 1e-6);
        assert_abs_diff_eq!(c.w0, 28.8675, epsilon = 1e-4);
        assert_abs_diff_eq!(c.wd, 28.8194, epsilon = 1e-4);
    }

    #[test]
    fn initial_conditions_hold() {
        for (ya, deg) in [(0.4, 15.0), (0.6, 30.0), (0.8, 45.0)] {
            let c = coeffs(ya, deg, &table2());
            assert_abs_diff_eq!(c.position(0.0), c.y_td, epsilon = 1e-15);
            assert_abs_diff_eq!(c.b1, c.ydot_td, epsilon = 1e-12);
            assert_abs_diff_eq!(c.velocity(0.0), c.ydot_td, epsilon = 1e-12);
        }
    }

    #[test]
    fn undamped_reduction() {
        let p = table2().with_damping(0.0);
        let c = coeffs(0.6, 20.0, &p);
        assert_eq!(c.xi, 0.0);
        assert_eq!(c.wd, c.w0);
        assert_abs_diff_eq!(c.a2, c.ydot_td / c.w0, epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_height() {
        let c = coeffs(0.6, 0.0, &table2());
        // l0 + r2 - g m / k
        assert_abs_diff_eq!(c.equilibrium(), 0.388228, epsilon = 1e-6);
        let p = table2();
        let residual = -p.g - (p.k / p.m) * (c.equilibrium() - p.l0 - c.r2);
        assert_abs_diff_eq!(residual, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c.position(50.0), c.equilibrium(), epsilon = 1e-12);
    }

    #[test]
    fn touchdown_times() {
        let p = table2();
        assert_abs_diff_eq!(
            touchdown_time(ApexState::new(0.8), &p).unwrap(),
            0.285569,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            touchdown_time(ApexState::new(0.6), &p).unwrap(),
            0.201928,
            epsilon = 1e-6
        );
        assert_eq!(touchdown_time(ApexState::new(0.4), &p).unwrap(), 0.0);
        assert!(matches!(
            touchdown_time(ApexState::new(0.3), &p),
            Err(SlipError::NoTouchdown { .. })
        ));
    }

    #[test]
    fn bottom_time_is_velocity_root() {
        let p = table2();
        for ya in [0.4, 0.45, 0.6, 0.8] {
            for deg in [15.0, 30.0, 45.0] {
                let c = coeffs(ya, deg, &p);
                let tb = bottom_time(&c).unwrap();
                assert!(tb > 0.0);
                assert!(c.velocity(tb).abs() < 1e-9);
                assert!(c.velocity(tb - 1e-6) < 0.0 && c.velocity(tb + 1e-6) > 0.0);
            }
        }
    }

    #[test]
    fn bottom_requires_compression() {
        let p = table2();
        let c = build_coefficients(0.4, 0.5, ControlInput::new(0.2), &p).unwrap();
        assert!(matches!(bottom_time(&c), Err(SlipError::NoBottom { .. })));
    }

    #[test]
    fn undamped_bottom_is_lowest_point() {
        let p = table2().with_damping(0.0);
        let c = coeffs(0.6, 0.0, &p);
        let tb = bottom_time(&c).unwrap();
        let yb = c.position(tb);
        for i in 0..=1000 {
            let t = 2.0 * tb * i as f64 / 1000.0;
            assert!(c.position(t) >= yb - 1e-15);
        }
    }

    #[test]
    fn symmetric_lossless_liftoff_is_twice_bottom() {
        let p = table2().with_damping(0.0);
        let c = coeffs(0.6, 0.0, &p);
        let tb = bottom_time(&c).unwrap();
        assert_abs_diff_eq!(liftoff_time(&c).unwrap(), 2.0 * tb, epsilon = 1e-12);
        assert_abs_diff_eq!(
            apex_return_hat(0.6, ControlInput::new(0.0), &p, LiftoffMethod::Newton).unwrap(),
            0.6,
            epsilon = 1e-6
        );
    }

    #[test]
    fn liftoff_after_bottom() {
        let p = table2();
        let c = coeffs(0.8, 45.0, &p);
        assert!(liftoff_time(&c).unwrap() > bottom_time(&c).unwrap());
        let te = liftoff_time_exact(&c).unwrap();
        assert!(c.leg_load(te).abs() < 1e-6);
    }

    #[test]
    fn derivative_consistency() {
        let c = coeffs(0.7, 35.0, &table2());
        let eps = 1e-6;
        for i in 0..100 {
            let t = 0.002 + 0.0015 * i as f64;
            let fd = (c.position(t + eps) - c.position(t - eps)) / (2.0 * eps);
            assert_abs_diff_eq!(fd, c.velocity(t), epsilon = 1e-7);
            let fa = (c.velocity(t + eps) - c.velocity(t - eps)) / (2.0 * eps);
            assert_abs_diff_eq!(fa, c.acceleration(t), epsilon = 1e-5);
        }
    }

    #[test]
    fn lossless_injection_is_monotone() {
        let p = table2().with_damping(0.0);
        for ya in [0.45, 0.6, 0.8] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=30 {
                let deg = i as f64 * 1.5;
                let y = apex_return_hat(
                    ya,
                    ControlInput::from_degrees(deg),
                    &p,
                    LiftoffMethod::Exact,
                )
                .unwrap();
                assert!(y >= prev - 1e-12, "ya={ya} deg={deg}");
                prev = y;
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn coefficients_self_consistent(ya in 0.4..0.8f64, deg in 15.0..45.0f64, d in 0.0..50.0f64) {
                let p = table2().with_damping(d);
                let c = coeffs(ya, deg, &p);
                prop_assert!(c.xi >= 0.0 && c.xi < 1.0);
                prop_assert!((c.position(0.0) - c.y_td).abs() < 1e-14);
                prop_assert!((c.velocity(0.0) - c.ydot_td).abs() < 1e-12);
                let tb = bottom_time(&c).unwrap();
                prop_assert!(c.velocity(tb).abs() < 1e-9);
            }
        }
    }
}
