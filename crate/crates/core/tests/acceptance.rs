//! Exit criteria for the hopper model. Each check prints one PASS/FAIL line;
//! the binary exits nonzero if any check fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slipscm_core::analytic::{
    bottom_time, build_coefficients, liftoff_time, touchdown_time, StanceCoefficients,
};
use slipscm_core::control::{sine_reference, track, DeadbeatConfig};
use slipscm_core::harness::{run_grid, GridSpec, OMEGA_SAT32};
use slipscm_core::kinematics::leg_offset;
use slipscm_core::roots::linspace;
use slipscm_core::simulator::{
    apex_return, flight_ascend, flight_descend, stance_energy, stance_step, IntegratorConfig,
};
use slipscm_core::stability::{
    existence_boundary, find_fixed_point, stability_sweep, FixedPoint, FixedPointConfig, PrimaryMap,
};
use slipscm_core::{
    AnalyticMap, ApexState, ControlInput, CrankDrive, ModelParams, NumericMap, ReturnMap,
};

const MINUTE: Duration = Duration::from_secs(60);

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { name, pass, detail }
}

fn chain(e: &dyn std::error::Error) -> String {
    let mut s = e.to_string();
    let mut cur = e.source();
    while let Some(c) = cur {
        s += &format!(": {c}");
        cur = c.source();
    }
    s
}

fn table2() -> ModelParams {
    ModelParams::table2()
}

fn instant() -> ModelParams {
    table2().with_crank(CrankDrive::Instantaneous)
}

fn grid_apexes() -> Vec<f64> {
    linspace(0.4, 0.8, 100)
}

fn grid_thetas() -> Vec<f64> {
    linspace(15f64.to_radians(), 45f64.to_radians(), 100)
}

/// First upward zero crossing of `f` after `t0`, scanned at `step` and then
/// bisected to `tol`.
fn first_upcrossing(
    f: impl Fn(f64) -> f64,
    t0: f64,
    step: f64,
    t_max: f64,
    tol: f64,
) -> Option<f64> {
    let mut a = t0;
    let mut fa = f(a);
    while a < t_max {
        let b = a + step;
        let fb = f(b);
        if fa < 0.0 && fb >= 0.0 {
            let (mut lo, mut hi) = (a, b);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    None
}

fn coefficients(y_a: f64, theta2: f64, p: &ModelParams) -> StanceCoefficients {
    let td = flight_descend(ApexState::new(y_a), p).unwrap();
    build_coefficients(td.y, td.ydot, ControlInput::new(theta2), p).unwrap()
}

/// Bottom by a velocity scan independent of the closed-form angle formula.
fn bottom_oracle(c: &StanceCoefficients) -> f64 {
    first_upcrossing(|t| c.velocity(t), 1e-9, 1e-4, 1.0, 1e-15).expect("velocity root")
}

/// Liftoff as the first upward crossing of the leg load after bottom.
fn liftoff_oracle(c: &StanceCoefficients, t_b: f64) -> Option<f64> {
    first_upcrossing(|t| c.leg_load(t), t_b, 1e-4, t_b + 1.0, 1e-15)
}

fn linear_regime() -> Verdict {
    let p = instant();
    let cfg = IntegratorConfig {
        sample_stride: 1,
        ..IntegratorConfig::oracle().with_dt(1e-6)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut dy, mut dv) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let y_a = rng.random_range(0.4..=0.8);
        let theta2 = rng.random_range(15f64.to_radians()..=45f64.to_radians());
        let mut td = flight_descend(ApexState::new(y_a), &p).unwrap();
        td.t = 0.0;
        let out = stance_step(td, ControlInput::new(theta2), &p, &cfg).unwrap();
        let c = build_coefficients(td.y, td.ydot, ControlInput::new(theta2), &p).unwrap();
        let n = out.trace.samples.len();
        for k in 1..=50 {
            let s = &out.trace.samples[k * (n - 1) / 51];
            dy = dy.max((s.y - c.position(s.t)).abs());
            dv = dv.max((s.ydot - c.velocity(s.t)).abs());
        }
    }
    verdict(
        "1 linear-regime oracle equivalence",
        dy <= 1e-6 && dv <= 1e-5,
        format!("max |dy| = {dy:.3e} m (<= 1e-6), max |dv| = {dv:.3e} m/s (<= 1e-5)"),
    )
}

fn critical_times() -> Vec<Verdict> {
    let p = instant();
    let mut td_err = 0.0f64;
    let mut tb_err = 0.0f64;
    let mut worst = (0.0f64, 0.0, 0.0);
    for &y_a in &grid_apexes() {
        let t_td = touchdown_time(ApexState::new(y_a), &p).unwrap();
        let fall = y_a - 0.5 * p.g * t_td * t_td - p.touchdown_height();
        td_err = td_err.max(fall.abs());
        for &theta2 in &grid_thetas() {
            let c = coefficients(y_a, theta2, &p);
            let tb_true = bottom_oracle(&c);
            let tb = bottom_time(&c).map_or(f64::INFINITY, |t| (t - tb_true).abs());
            tb_err = tb_err.max(tb);
            let rel = match (liftoff_oracle(&c, tb_true), liftoff_time(&c)) {
                (Some(truth), Ok(newton)) => (newton - truth).abs() / truth,
                _ => f64::INFINITY,
            };
            if !(rel <= worst.0) {
                worst = (rel, y_a, theta2);
            }
        }
    }
    vec![
        verdict(
            "2a touchdown time",
            td_err <= 1e-12,
            format!("max ballistic residual {td_err:.3e} m (<= 1e-12)"),
        ),
        verdict(
            "2b bottom time",
            tb_err <= 1e-8,
            format!("max |t_b - velocity root| = {tb_err:.3e} s (<= 1e-8)"),
        ),
        verdict(
            "2c one-step Newton liftoff",
            worst.0 <= 0.02,
            format!(
                "worst relative error {:.3}% at y_a = {:.4} m, theta2 = {:.2} deg (<= 2%)",
                100.0 * worst.0,
                worst.1,
                worst.2.to_degrees()
            ),
        ),
    ]
}

fn grid_errors() -> Vec<Verdict> {
    let p = table2();
    let start = Instant::now();
    let inst = run_grid(&GridSpec::table2(CrankDrive::Instantaneous), &p).unwrap();
    let t_inst = start.elapsed();
    let a = verdict(
        "3a instantaneous grid errors",
        inst.e_ap.mean <= 2.0 && inst.e_lv.mean <= 2.0 && t_inst < MINUTE,
        format!(
            "E_ap = {:.3} +- {:.3} %, E_lv = {:.3} +- {:.3} % (means <= 2%), {} failed cells, {:.1?}",
            inst.e_ap.mean, inst.e_ap.std, inst.e_lv.mean, inst.e_lv.std, inst.failed, t_inst
        ),
    );

    let start = Instant::now();
    let fin = run_grid(
        &GridSpec::table2(CrankDrive::Finite { omega: OMEGA_SAT32 }),
        &p,
    )
    .unwrap();
    let t_fin = start.elapsed();
    let near = |x: Option<f64>| x.is_some_and(|t| (t.to_degrees() - 32.0).abs() <= 3.0);
    let band = |m: f64| (0.5..=5.0).contains(&m);
    let deg = |x: Option<f64>| x.map_or(f64::NAN, f64::to_degrees);
    let b = verdict(
        "3b finite-speed saturation boundary",
        near(fin.saturation_boundary)
            && near(fin.error_jump)
            && band(fin.e_ap.mean)
            && band(fin.e_lv.mean)
            && t_fin < MINUTE,
        format!(
            "omega = {OMEGA_SAT32} rad/s: boundary {:.2} deg, error jump {:.2} deg (32 +- 3), \
             E_ap = {:.3} %, E_lv = {:.3} % (0.5..5%), {:.1?}",
            deg(fin.saturation_boundary),
            deg(fin.error_jump),
            fin.e_ap.mean,
            fin.e_lv.mean,
            t_fin
        ),
    );
    vec![a, b]
}

fn conservative_limit() -> Verdict {
    let p = table2().with_damping(0.0);
    let analytic = AnalyticMap::new(p);
    let numeric = NumericMap::new(p, IntegratorConfig::oracle());
    let mut worst = 0.0f64;
    for y_a in linspace(0.42, 0.8, 20) {
        for map in [&analytic as &dyn ReturnMap, &numeric] {
            let rel = map
                .next_apex(y_a, p.theta1)
                .map_or(f64::INFINITY, |y| (y - y_a).abs() / y_a);
            worst = worst.max(rel);
        }
    }
    verdict(
        "4 conservative limit",
        worst <= 1e-5,
        format!("max relative apex change {worst:.3e} over 20 heights, both maps (<= 1e-5)"),
    )
}

fn tracking() -> Vec<Verdict> {
    let plant = NumericMap::new(instant(), IntegratorConfig::harness());
    let model = AnalyticMap::new(table2());
    let cfg = DeadbeatConfig::default();
    let fp_cfg = FixedPointConfig::default();

    // plant fixed points are reachable references by construction
    let mut refs = Vec::new();
    for deg in [20.0, 30.0, 40.0, 45.0] {
        if let Ok(FixedPoint::Found { y, .. }) =
            find_fixed_point(f64::to_radians(deg), &plant, &fp_cfg)
        {
            refs.push(y);
        }
    }
    let mut worst = if refs.is_empty() {
        f64::INFINITY
    } else {
        0.0f64
    };
    let mut notes = Vec::new();
    for &r in &refs {
        match track(&[r; 20], 0.6, &plant, &model, &cfg) {
            Ok(t) => {
                let steady = t.pct_errors[10..].iter().cloned().fold(0.0, f64::max);
                notes.push(format!("{r:.4} m -> {steady:.4} %"));
                worst = worst.max(steady);
            }
            Err(e) => {
                notes.push(format!("{r:.4} m -> {}", chain(&e)));
                worst = f64::INFINITY;
            }
        }
    }
    let constant = verdict(
        "5a constant-reference tracking",
        worst <= 0.05,
        format!(
            "steady-state error over strides 10..20 (<= 0.05%): {}",
            notes.join("; ")
        ),
    );

    let reference = sine_reference(100, 0.6, 0.15, 20.0);
    let (mean, detail) = match track(&reference, 0.6, &plant, &model, &cfg) {
        Ok(t) => (
            t.mean_pct_error,
            format!(
                "mean error {:.4} % over 100 strides (<= 0.1%), {} strides out of reach",
                t.mean_pct_error,
                t.saturated.iter().filter(|s| **s).count()
            ),
        ),
        Err(e) => (f64::INFINITY, format!("tracking failed: {}", chain(&e))),
    };
    vec![
        constant,
        verdict("5b sine-reference tracking", mean <= 0.1, detail),
    ]
}

fn stability() -> Vec<Verdict> {
    let start = Instant::now();
    let analytic = AnalyticMap::new(table2());
    let numeric = NumericMap::new(table2(), IntegratorConfig::harness());
    let cfg = FixedPointConfig::default();
    let grid = linspace(15f64.to_radians(), 45f64.to_radians(), 61);
    let recs = stability_sweep(&grid, &analytic, &numeric, PrimaryMap::Analytic, &cfg).unwrap();

    let mut max_lambda = 0.0f64;
    let mut max_gap = 0.0f64;
    let (mut n_aas, mut n_num, mut n_both) = (0, 0, 0);
    for r in &recs {
        for l in [r.lambda_apex_aas, r.lambda_apex_numeric] {
            if l.is_finite() {
                max_lambda = max_lambda.max(l);
            }
        }
        n_aas += r.lambda_apex_aas.is_finite() as usize;
        n_num += r.lambda_apex_numeric.is_finite() as usize;
        if r.lambda_apex_aas.is_finite() && r.lambda_apex_numeric.is_finite() {
            n_both += 1;
            max_gap = max_gap.max((r.lambda_apex_aas - r.lambda_apex_numeric).abs());
        }
    }
    let stable = verdict(
        "6a fixed points stable on both maps",
        n_aas > 0 && n_num > 0 && max_lambda < 1.0,
        format!("{n_aas} analytic / {n_num} numeric fixed points of 61, max lambda_apex {max_lambda:.4} (< 1)"),
    );
    let agree = verdict(
        "6b eigenvalue agreement",
        n_both > 0 && max_gap <= 0.05,
        format!(
            "max |lambda_aas - lambda_num| = {max_gap:.4} over {n_both} shared targets (<= 0.05)"
        ),
    );

    let resolution = 0.01f64.to_radians();
    let step = 0.5f64.to_radians();
    let lo = 15f64.to_radians();
    let hi = 45f64.to_radians();
    let b_aas = existence_boundary(&analytic, lo, hi, step, resolution, &cfg).unwrap();
    let b_num = existence_boundary(&numeric, lo, hi, step, resolution, &cfg).unwrap();
    // the two sides of the reported boundary must disagree on existence
    let half = 0.05f64.to_radians();
    let brackets = |b: Option<f64>, map: &dyn ReturnMap| {
        b.is_some_and(|b| {
            let below = find_fixed_point(b - half, map, &cfg)
                .unwrap()
                .height()
                .is_some();
            let above = find_fixed_point(b + half, map, &cfg)
                .unwrap()
                .height()
                .is_some();
            below != above
        })
    };
    let elapsed = start.elapsed();
    let deg = |x: Option<f64>| x.map_or(f64::NAN, f64::to_degrees);
    let boundary = verdict(
        "6c fixed-point existence boundary",
        brackets(b_aas, &analytic) && brackets(b_num, &numeric) && elapsed < MINUTE,
        format!(
            "analytic {:.3} deg, numeric {:.3} deg, each bracketed within 0.1 deg, {elapsed:.1?}",
            deg(b_aas),
            deg(b_num)
        ),
    );
    vec![stable, agree, boundary]
}

fn numerics() -> Vec<Verdict> {
    // RK4 order against the exact linear-regime apex
    let p = instant();
    let mut ratios = Vec::new();
    for (y_a, deg) in [(0.5, 20.0), (0.6, 30.0), (0.8, 45.0)] {
        let theta2 = f64::to_radians(deg);
        let c = coefficients(y_a, theta2, &p);
        let t_lo = liftoff_oracle(&c, bottom_oracle(&c)).unwrap();
        let v = c.velocity(t_lo);
        let exact = c.position(t_lo) + v * v / (2.0 * p.g);
        let err = |dt: f64| {
            let cfg = IntegratorConfig::harness().with_dt(dt);
            let (next, _) =
                apex_return(ApexState::new(y_a), ControlInput::new(theta2), &p, &cfg).unwrap();
            (next.y_a - exact).abs()
        };
        ratios.push(err(2e-3) / err(1e-3));
    }
    let order = verdict(
        "7a RK4 convergence order",
        ratios.iter().all(|r| (8.0..=32.0).contains(r)),
        format!("apex error ratios on halving dt: {ratios:.2?} (8..32)"),
    );

    let mut flight = 0.0f64;
    for y_a in linspace(0.4, 0.8, 20) {
        let td = flight_descend(ApexState::new(y_a), &p).unwrap();
        let e_td = 0.5 * td.ydot * td.ydot + p.g * td.y;
        flight = flight.max((e_td - p.g * y_a).abs() / (p.g * y_a));
        let mut up = td;
        up.ydot = -td.ydot;
        let apex = flight_ascend(&up, &p);
        flight = flight.max((apex.y_a - y_a).abs() / y_a);
    }
    let flight_v = verdict(
        "7b flight energy conservation",
        flight <= 1e-14,
        format!("max relative energy change {flight:.3e} (<= 1e-14, closed form)"),
    );

    let lossless = p.with_damping(0.0);
    let cfg = IntegratorConfig {
        sample_stride: 1,
        ..IntegratorConfig::oracle()
    };
    let mut drift = 0.0f64;
    for (y_a, deg) in [(0.8, 0.0), (0.6, 30.0), (0.45, 45.0)] {
        let td = flight_descend(ApexState::new(y_a), &lossless).unwrap();
        let out =
            stance_step(td, ControlInput::new(f64::to_radians(deg)), &lossless, &cfg).unwrap();
        let energy = |s: &slipscm_core::HybridState| {
            stance_energy(s.y, s.ydot, leg_offset(s.theta, &lossless), &lossless)
        };
        let e0 = energy(&out.trace.samples[0]);
        for s in &out.trace.samples {
            drift = drift.max((energy(s) - e0).abs() / e0.abs());
        }
    }
    let drift_v = verdict(
        "7c lossless stance energy drift",
        drift < 1e-6,
        format!("max relative drift {drift:.3e} at dt = 1e-5 (< 1e-6)"),
    );
    vec![order, flight_v, drift_v]
}

fn main() {
    let mut all = Vec::new();
    all.push(linear_regime());
    all.extend(critical_times());
    all.extend(grid_errors());
    all.push(conservative_limit());
    all.extend(tracking());
    all.extend(stability());
    all.extend(numerics());

    println!();
    for v in &all {
        println!(
            "{} criterion {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    let failed = all.iter().filter(|v| !v.pass).count();
    println!(
        "\nacceptance: {} passed, {failed} failed",
        all.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
