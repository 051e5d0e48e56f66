//! Numeric apex-to-apex return map of the full hybrid dynamics.
//!
//! Flight is ballistic and solved in closed form. Stance is integrated with
//! fixed-step classical RK4; the saturation time is hit exactly by clipping
//! the step, and bottom and liftoff are located by bisecting the length of
//! a single RK4 sub-step from the last accepted state.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipError};
use crate::kinematics::{leg_offset, CrankSchedule, Plateau};
use crate::model::{
    validate, ApexState, ControlInput, HybridState, ModelParams, Phase, StrideRecord, EVENT_TOL,
};

/// Bracket width at which event bisection stops [s].
const EVENT_TIME_RESOLUTION: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// RK4 step [s].
    pub dt: f64,
    /// Residual tolerance for event states.
    pub event_tol: f64,
    /// Stance longer than this is reported as stuck [s].
    pub max_stance_time: f64,
    /// Keep every n-th integration step in traces (0 keeps events only).
    pub sample_stride: usize,
}

impl IntegratorConfig {
    /// Fine grade used as ground truth in tests.
    pub fn oracle() -> Self {
        IntegratorConfig {
            dt: 1e-5,
            event_tol: EVENT_TOL,
            max_stance_time: 1.0,
            sample_stride: 10,
        }
    }

    /// Coarser grade for large parameter sweeps.
    pub fn harness() -> Self {
        IntegratorConfig {
            dt: 1e-4,
            sample_stride: 1,
            ..Self::oracle()
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("event_tol", self.event_tol),
            ("max_stance_time", self.max_stance_time),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SlipError::NonPositive { name, value: v });
            }
        }
        Ok(())
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::oracle()
    }
}

/// Time-ordered states of one or more strides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub samples: Vec<HybridState>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    y: f64,
    ydot: f64,
    theta: f64,
    phase: String,
}

impl Trace {
    fn push(&mut self, s: HybridState) {
        if let Some(last) = self.samples.last() {
            if s.t <= last.t {
                // events can coincide with a grid sample; keep the event
                if s.t == last.t {
                    self.samples.pop();
                } else {
                    return;
                }
            }
        }
        self.samples.push(s);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV with columns `t, y, ydot, theta, phase`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for s in &self.samples {
            wtr.serialize(TraceRow {
                t: s.t,
                y: s.y,
                ydot: s.ydot,
                theta: s.theta,
                phase: s.phase.to_string(),
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut samples = Vec::new();
        for row in rdr.deserialize() {
            let row: TraceRow = row?;
            samples.push(HybridState {
                t: row.t,
                y: row.y,
                ydot: row.ydot,
                theta: row.theta,
                phase: row.phase.parse()?,
            });
        }
        Ok(Trace { samples })
    }
}

/// Total mechanical energy during stance with leg offset `r`.
pub fn stance_energy(y: f64, ydot: f64, r: f64, params: &ModelParams) -> f64 {
    let stretch = y - params.l0 - r;
    0.5 * params.m * ydot * ydot + params.m * params.g * y + 0.5 * params.k * stretch * stretch
}

/// Ballistic fall from the apex to touchdown. The crank sits at `theta1`.
pub fn flight_descend(apex: ApexState, params: &ModelParams) -> Result<HybridState> {
    let y_td = params.touchdown_height();
    let drop = apex.y_a - y_td;
    if !(drop >= 0.0) {
        return Err(SlipError::NoTouchdown {
            y_a: apex.y_a,
            y_td,
        });
    }
    Ok(HybridState {
        t: (2.0 * drop / params.g).sqrt(),
        y: y_td,
        ydot: -(2.0 * params.g * drop).sqrt(),
        theta: params.theta1,
        phase: Phase::Compression,
    })
}

/// Ballistic rise from liftoff to the next apex. Expects `ydot >= 0`.
pub fn flight_ascend(liftoff: &HybridState, params: &ModelParams) -> ApexState {
    ApexState {
        y_a: liftoff.y + liftoff.ydot * liftoff.ydot / (2.0 * params.g),
        stride_index: 0,
    }
}

/// Events of one integrated stance phase. State times are absolute, i.e.
/// they continue from the touchdown state's `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceOutcome {
    pub touchdown: HybridState,
    pub bottom: HybridState,
    pub liftoff: HybridState,
    /// State at which the crank reached `theta2`, if it did before bottom.
    pub saturation: Option<HybridState>,
    pub schedule: CrankSchedule,
    pub trace: Trace,
}

impl StanceOutcome {
    pub fn saturated(&self) -> bool {
        self.schedule.is_saturated()
    }
}

struct StanceDynamics<'a> {
    p: &'a ModelParams,
    sched: CrankSchedule,
}

impl StanceDynamics<'_> {
    fn theta(&self, tau: f64) -> f64 {
        self.sched.angle_unchecked(tau)
    }

    fn accel(&self, tau: f64, y: f64, v: f64) -> f64 {
        let p = self.p;
        let r = leg_offset(self.theta(tau), p);
        -p.g - (p.k / p.m) * (y - p.l0 - r) - (p.d_bar / p.m) * v
    }

    /// Axial leg load; the toe leaves the ground when it rises through zero.
    fn leg_load(&self, tau: f64, y: f64, v: f64) -> f64 {
        let p = self.p;
        p.k * (y - p.l0 - leg_offset(self.theta(tau), p)) + p.d_bar * v
    }

    fn rk4(&self, tau: f64, y: f64, v: f64, h: f64) -> (f64, f64) {
        let k1y = v;
        let k1v = self.accel(tau, y, v);
        let k2y = v + 0.5 * h * k1v;
        let k2v = self.accel(tau + 0.5 * h, y + 0.5 * h * k1y, k2y);
        let k3y = v + 0.5 * h * k2v;
        let k3v = self.accel(tau + 0.5 * h, y + 0.5 * h * k2y, k3y);
        let k4y = v + h * k3v;
        let k4v = self.accel(tau + h, y + h * k3y, k4y);
        (
            y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        )
    }

    /// Finds the sub-step length `s` in `(0, h]` where `f` of the state
    /// stepped by `s` crosses zero upward, given it is negative at 0 and
    /// non-negative at `h`.
    fn bisect<F>(&self, tau: f64, y: f64, v: f64, h: f64, f: F) -> (f64, f64, f64)
    where
        F: Fn(&Self, f64, f64, f64) -> f64,
    {
        let (mut lo, mut hi) = (0.0, h);
        let mut best = (hi, self.rk4(tau, y, v, hi));
        for _ in 0..200 {
            if hi - lo <= EVENT_TIME_RESOLUTION {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (ym, vm) = self.rk4(tau, y, v, mid);
            if f(self, tau + mid, ym, vm) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
                best = (mid, (ym, vm));
            }
        }
        let (s, (ys, vs)) = best;
        (s, ys, vs)
    }
}

/// Integrates one stance phase from a touchdown state until liftoff.
pub fn stance_step(
    touchdown: HybridState,
    control: ControlInput,
    params: &ModelParams,
    config: &IntegratorConfig,
) -> Result<StanceOutcome> {
    stance_impl(touchdown, control, params, config, true)
}

fn stance_impl(
    touchdown: HybridState,
    control: ControlInput,
    params: &ModelParams,
    config: &IntegratorConfig,
    record: bool,
) -> Result<StanceOutcome> {
    config.validate()?;
    let mut dynamics = StanceDynamics {
        p: params,
        sched: CrankSchedule::new(params, control),
    };
    let t0 = touchdown.t;
    let state = |dyn_: &StanceDynamics, tau: f64, y: f64, v: f64, phase: Phase| HybridState {
        t: t0 + tau,
        y,
        ydot: v,
        theta: dyn_.theta(tau),
        phase,
    };

    let mut trace = Trace::default();
    let (mut tau, mut y, mut v) = (0.0_f64, touchdown.y, touchdown.ydot);
    let mut phase = Phase::Compression;
    let mut saturation = dynamics
        .sched
        .is_saturated()
        .then(|| state(&dynamics, 0.0, y, v, phase));
    let mut bottom: Option<HybridState> = None;
    let mut steps: usize = 0;
    if record {
        trace.push(state(&dynamics, 0.0, y, v, phase));
    }

    loop {
        if tau > config.max_stance_time {
            return Err(SlipError::StanceStuck {
                max_time: config.max_stance_time,
            });
        }
        let mut h = config.dt;
        let mut hits_star = false;
        if dynamics.sched.plateau == Plateau::Pending {
            if let Some(ts) = dynamics.sched.t_star() {
                if tau + h >= ts {
                    h = ts - tau;
                    hits_star = true;
                }
            }
        }
        let (y1, v1) = dynamics.rk4(tau, y, v, h);
        if !(y1.is_finite() && v1.is_finite()) {
            return Err(SlipError::StepUnstable { t: t0 + tau + h });
        }

        match phase {
            Phase::Compression if v < 0.0 && v1 >= 0.0 => {
                let (s, yb, vb) = dynamics.bisect(tau, y, v, h, |_, _, _, v| v);
                tau += s;
                y = yb;
                v = vb;
                dynamics.sched.bottom_at(tau);
                if dynamics.sched.is_saturated() && saturation.is_none() {
                    saturation = Some(state(&dynamics, tau, y, v, phase));
                }
                phase = Phase::Decompression;
                let b = state(&dynamics, tau, y, v, phase);
                bottom = Some(b);
                if record {
                    trace.push(b);
                }
                continue;
            }
            Phase::Decompression => {
                let load0 = dynamics.leg_load(tau, y, v);
                let load1 = dynamics.leg_load(tau + h, y1, v1);
                if load0 < 0.0 && load1 >= 0.0 && v1 > 0.0 {
                    let (s, yl, vl) =
                        dynamics.bisect(tau, y, v, h, |d, t, y, v| d.leg_load(t, y, v));
                    tau += s;
                    let lo = state(&dynamics, tau, yl, vl, Phase::Ascent);
                    if record {
                        trace.push(lo);
                    }
                    return Ok(StanceOutcome {
                        touchdown,
                        bottom: bottom.expect("decompression follows bottom"),
                        liftoff: lo,
                        saturation,
                        schedule: dynamics.sched,
                        trace,
                    });
                }
            }
            _ => {}
        }

        tau += h;
        y = y1;
        v = v1;
        steps += 1;
        if hits_star {
            dynamics.sched.saturate();
            let s = state(&dynamics, tau, y, v, phase);
            saturation = Some(s);
            if record {
                trace.push(s);
            }
        } else if record && config.sample_stride > 0 && steps.is_multiple_of(config.sample_stride) {
            trace.push(state(&dynamics, tau, y, v, phase));
        }
    }
}

fn stride_impl(
    apex: ApexState,
    control: ControlInput,
    params: &ModelParams,
    config: &IntegratorConfig,
    record: bool,
) -> Result<(ApexState, StrideRecord, Trace)> {
    let params = validate(*params)?;
    let control = control.checked(&params)?;
    let td = flight_descend(apex, &params)?;
    let stance = stance_impl(td, control, &params, config, record)?;
    let lo = stance.liftoff;
    let mut next = flight_ascend(&lo, &params);
    next.stride_index = apex.stride_index + 1;
    let t_flight = lo.ydot.max(0.0) / params.g;
    let record_ = StrideRecord {
        control,
        t_td: td.t,
        t_b: stance.bottom.t - td.t,
        t_lo: lo.t - td.t,
        t_apex: lo.t + t_flight,
        state_td: td,
        state_b: stance.bottom,
        state_lo: lo,
        y_a_next: next.y_a,
        saturated: stance.saturated(),
    };

    let mut trace = Trace::default();
    if record {
        let dt = config.dt * config.sample_stride.max(1) as f64;
        let theta_flight = stance.schedule.final_angle().unwrap_or(control.theta2);
        let g = params.g;
        let mut t = 0.0;
        while t < td.t {
            trace.push(HybridState {
                t,
                y: apex.y_a - 0.5 * g * t * t,
                ydot: -g * t,
                theta: params.theta1,
                phase: Phase::Descent,
            });
            t += dt;
        }
        for s in stance.trace.samples {
            trace.push(s);
        }
        let mut s = dt;
        while s < t_flight {
            trace.push(HybridState {
                t: lo.t + s,
                y: lo.y + lo.ydot * s - 0.5 * g * s * s,
                ydot: lo.ydot - g * s,
                theta: theta_flight,
                phase: Phase::Ascent,
            });
            s += dt;
        }
        trace.push(HybridState {
            t: lo.t + t_flight,
            y: next.y_a,
            ydot: 0.0,
            theta: theta_flight,
            phase: Phase::Ascent,
        });
    }
    Ok((next, record_, trace))
}

/// The numeric return map: descent, compression, decompression, ascent.
pub fn apex_return(
    apex: ApexState,
    control: ControlInput,
    params: &ModelParams,
    config: &IntegratorConfig,
) -> Result<(ApexState, StrideRecord)> {
    stride_impl(apex, control, params, config, false).map(|(a, r, _)| (a, r))
}

/// Same as [`apex_return`] but also samples the full stride, apex to apex.
pub fn simulate_stride(
    apex: ApexState,
    control: ControlInput,
    params: &ModelParams,
    config: &IntegratorConfig,
) -> Result<(ApexState, StrideRecord, Trace)> {
    stride_impl(apex, control, params, config, true)
}

/// Runs consecutive strides, one control per stride. Trace times are
/// continuous across strides. The crank resets to `theta1` at each apex.
pub fn simulate_strides(
    apex: ApexState,
    controls: &[ControlInput],
    params: &ModelParams,
    config: &IntegratorConfig,
) -> Result<(Vec<StrideRecord>, Trace)> {
    let mut records = Vec::with_capacity(controls.len());
    let mut trace = Trace::default();
    let mut current = apex;
    let mut t_offset = 0.0;
    for &c in controls {
        let (next, rec, tr) = simulate_stride(current, c, params, config)?;
        for mut s in tr.samples {
            s.t += t_offset;
            trace.push(s);
        }
        t_offset += rec.t_apex;
        records.push(rec);
        current = next;
    }
    Ok((records, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CrankDrive;
    use approx::assert_abs_diff_eq;

    fn instant() -> ModelParams {
        ModelParams::table2().with_crank(CrankDrive::Instantaneous)
    }

    #[test]
    fn descent_closed_form() {
        let p = ModelParams::table2();
        let td = flight_descend(ApexState::new(0.8), &p).unwrap();
        assert_abs_diff_eq!(td.ydot, -2.801428, epsilon = 1e-6);
        assert_abs_diff_eq!(td.y, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(td.t, 0.285569, epsilon = 1e-6);

        let td = flight_descend(ApexState::new(0.4), &p).unwrap();
        assert_eq!((td.t, td.ydot), (0.0, 0.0));

        assert!(matches!(
            flight_descend(ApexState::new(0.39), &p),
            Err(SlipError::NoTouchdown { .. })
        ));
    }

    #[test]
    fn ascent_closed_form() {
        let p = ModelParams::table2();
        let lo = |y, ydot| HybridState {
            t: 0.0,
            y,
            ydot,
            theta: 0.0,
            phase: Phase::Ascent,
        };
        assert_abs_diff_eq!(
            flight_ascend(&lo(0.38, 2.0), &p).y_a,
            0.583873,
            epsilon = 1e-6
        );
        assert_eq!(flight_ascend(&lo(0.38, 0.0), &p).y_a, 0.38);
        let v = (2.0f64 * 9.81 * 0.4).sqrt();
        assert_abs_diff_eq!(flight_ascend(&lo(0.4, v), &p).y_a, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn flight_energy_is_exact() {
        let p = ModelParams::table2();
        let (_, _, tr) = simulate_stride(
            ApexState::new(0.7),
            ControlInput::from_degrees(30.0),
            &p,
            &IntegratorConfig::harness(),
        )
        .unwrap();
        let e0 = p.m * p.g * 0.7;
        for s in tr.samples.iter().filter(|s| s.phase == Phase::Descent) {
            let e = p.m * p.g * s.y + 0.5 * p.m * s.ydot * s.ydot;
            assert_abs_diff_eq!(e, e0, epsilon = 1e-12);
        }
    }

    #[test]
    fn event_residuals() {
        let p = ModelParams::table2();
        let cfg = IntegratorConfig::oracle();
        for (ya, deg) in [(0.8, 15.0), (0.6, 30.0), (0.45, 45.0)] {
            let (_, rec) = apex_return(
                ApexState::new(ya),
                ControlInput::from_degrees(deg),
                &p,
                &cfg,
            )
            .unwrap();
            assert!((rec.state_td.y - p.touchdown_height()).abs() < cfg.event_tol);
            assert!(
                rec.state_b.ydot.abs() < cfg.event_tol,
                "{}",
                rec.state_b.ydot
            );
            assert!(0.0 < rec.t_b && rec.t_b < rec.t_lo);
            let lo = rec.state_lo;
            let load = p.k * (lo.y - p.l0 - leg_offset(lo.theta, &p)) + p.d_bar * lo.ydot;
            assert!(load.abs() < p.k * cfg.event_tol, "{load}");
            assert!(lo.ydot > 0.0);
        }
    }

    #[test]
    fn lossless_symmetric_stance() {
        let p = instant().with_damping(0.0);
        let (next, rec) = apex_return(
            ApexState::new(0.6),
            ControlInput::new(0.0),
            &p,
            &IntegratorConfig::oracle(),
        )
        .unwrap();
        let speed_td = rec.state_td.ydot.abs();
        assert!((rec.state_lo.ydot - speed_td).abs() / speed_td < 1e-6);
        assert!((next.y_a - 0.6).abs() / 0.6 < 1e-5);
    }

    #[test]
    fn damping_only_removes_energy() {
        let p = ModelParams::table2();
        let (next, _) = apex_return(
            ApexState::new(0.6),
            ControlInput::new(0.0),
            &p,
            &IntegratorConfig::oracle(),
        )
        .unwrap();
        assert!(next.y_a < 0.6);
    }

    #[test]
    fn lossless_stance_energy_drift() {
        let p = instant().with_damping(0.0);
        let control = ControlInput::from_degrees(30.0);
        let td = flight_descend(ApexState::new(0.7), &p).unwrap();
        let cfg = IntegratorConfig {
            sample_stride: 1,
            ..IntegratorConfig::oracle()
        };
        let out = stance_step(td, control, &p, &cfg).unwrap();
        let r2 = leg_offset(control.theta2, &p);
        let e0 = stance_energy(td.y, td.ydot, r2, &p);
        for s in &out.trace.samples {
            let e = stance_energy(s.y, s.ydot, r2, &p);
            assert!(((e - e0) / e0).abs() < 1e-6);
        }
    }

    #[test]
    fn finite_crank_saturation_branches() {
        let p = ModelParams::table2().with_crank(CrankDrive::Finite { omega: 20.0 });
        let cfg = IntegratorConfig::harness();
        // t* = 15deg / 20 rad/s is about 13 ms, well before bottom
        let (_, rec) = apex_return(
            ApexState::new(0.6),
            ControlInput::from_degrees(15.0),
            &p,
            &cfg,
        )
        .unwrap();
        assert!(rec.saturated);
        assert_abs_diff_eq!(rec.state_lo.theta, 15f64.to_radians(), epsilon = 1e-15);

        let slow = ModelParams::table2().with_crank(CrankDrive::Finite { omega: 2.0 });
        let (_, rec) = apex_return(
            ApexState::new(0.6),
            ControlInput::from_degrees(45.0),
            &slow,
            &cfg,
        )
        .unwrap();
        assert!(!rec.saturated);
        assert_abs_diff_eq!(rec.state_lo.theta, 2.0 * rec.t_b, epsilon = 1e-12);
        assert_abs_diff_eq!(rec.state_b.theta, rec.state_lo.theta, epsilon = 1e-15);
    }

    #[test]
    fn stuck_stance_is_reported() {
        let p = ModelParams::table2();
        let cfg = IntegratorConfig {
            max_stance_time: 0.01,
            ..IntegratorConfig::harness()
        };
        let err = apex_return(ApexState::new(0.6), ControlInput::new(0.3), &p, &cfg).unwrap_err();
        assert!(matches!(err, SlipError::StanceStuck { .. }));
    }

    #[test]
    fn deterministic_and_trace_ordered() {
        let p = ModelParams::table2();
        let cfg = IntegratorConfig::harness();
        let run = || {
            simulate_stride(
                ApexState::new(0.65),
                ControlInput::from_degrees(25.0),
                &p,
                &cfg,
            )
            .unwrap()
        };
        let (a, ra, ta) = run();
        let (b, rb, tb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ta, tb);
        assert!(ta.samples.windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(ta.samples.first().unwrap().ydot, 0.0);
        assert_eq!(ta.samples.last().unwrap().ydot, 0.0);
    }

    #[test]
    fn trace_csv_round_trip() {
        let p = ModelParams::table2();
        let (_, _, tr) = simulate_stride(
            ApexState::new(0.6),
            ControlInput::from_degrees(30.0),
            &p,
            &IntegratorConfig::harness(),
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = Trace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn multi_stride_times_are_continuous() {
        let p = ModelParams::table2();
        let controls = vec![ControlInput::from_degrees(40.0); 3];
        let (recs, tr) = simulate_strides(
            ApexState::new(0.5),
            &controls,
            &p,
            &IntegratorConfig::harness(),
        )
        .unwrap();
        assert_eq!(recs.len(), 3);
        assert!(tr.samples.windows(2).all(|w| w[0].t < w[1].t));
    }
}
