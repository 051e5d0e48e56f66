//! Prediction-error experiments comparing the analytic map with the
//! integrated dynamics.
//!
//! Errors are percentages with the numeric map as truth:
//! `E_ap = 100 |y_a' - y_a'_hat| / y_a'` on the next apex height and
//! `E_lv = 100 |ydot_lo - ydot_lo_hat| / ydot_lo` on liftoff velocity.
//! Aggregates use the population standard deviation and skip failed cells.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{predict_stride, AnalyticStride, LiftoffMethod};
use crate::error::{Result, SlipError};
use crate::model::{
    validate, ApexState, ControlInput, CrankDrive, ModelParams, Phase, StrideRecord,
};
use crate::roots::{bisect, linspace};
use crate::simulator::{apex_return, simulate_stride, IntegratorConfig, Trace};

/// Crank speed placing the saturation boundary of the reference grid at
/// 32 degrees (see [`calibrate_omega`]).
pub const OMEGA_SAT32: f64 = 8.913_215_826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ya_min: f64,
    pub ya_max: f64,
    pub ya_count: usize,
    /// [rad]
    pub theta_min: f64,
    /// [rad]
    pub theta_max: f64,
    pub theta_count: usize,
    /// Crank drive of the numeric plant.
    pub plant: CrankDrive,
    pub integrator: IntegratorConfig,
    pub liftoff: LiftoffMethod,
}

impl GridSpec {
    /// 100 x 100 grid over apex [0.4, 0.8] m and crank target [15, 45] deg.
    pub fn table2(plant: CrankDrive) -> Self {
        GridSpec {
            ya_min: 0.4,
            ya_max: 0.8,
            ya_count: 100,
            theta_min: 15f64.to_radians(),
            theta_max: 45f64.to_radians(),
            theta_count: 100,
            plant,
            integrator: IntegratorConfig::harness(),
            liftoff: LiftoffMethod::Newton,
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.ya_count < 2 || self.theta_count < 2 {
            return Err(SlipError::ConfigInvalid(
                "grid counts must be at least 2".into(),
            ));
        }
        if !(self.ya_min < self.ya_max && self.ya_min >= params.touchdown_height()) {
            return Err(SlipError::ConfigInvalid(format!(
                "apex range [{}, {}] must be increasing and start at or above touchdown height {}",
                self.ya_min,
                self.ya_max,
                params.touchdown_height()
            )));
        }
        if !(self.theta_min < self.theta_max
            && self.theta_min >= params.theta1
            && self.theta_max < std::f64::consts::FRAC_PI_2)
        {
            return Err(SlipError::ConfigInvalid(format!(
                "crank range [{}, {}] rad must be increasing within [theta1, pi/2)",
                self.theta_min, self.theta_max
            )));
        }
        self.integrator.validate()
    }

    pub fn apex_values(&self) -> Vec<f64> {
        linspace(self.ya_min, self.ya_max, self.ya_count)
    }

    pub fn theta_values(&self) -> Vec<f64> {
        linspace(self.theta_min, self.theta_max, self.theta_count)
    }
}

/// `100 |truth - predicted| / truth`.
pub fn pct_error(truth: f64, predicted: f64) -> f64 {
    100.0 * (truth - predicted).abs() / truth
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionErrors {
    pub e_ap: f64,
    pub e_lv: f64,
    pub saturated: bool,
    pub y_next: f64,
    pub y_next_hat: f64,
    pub ydot_lo: f64,
    pub ydot_lo_hat: f64,
}

/// Percentage errors of the analytic prediction against the numeric
/// stride from the same apex and crank target.
pub fn prediction_errors(
    y_a: f64,
    theta2: f64,
    params: &ModelParams,
    spec: &GridSpec,
) -> Result<PredictionErrors> {
    let plant = params.with_crank(spec.plant);
    let control = ControlInput::new(theta2);
    let (next, rec) = apex_return(ApexState::new(y_a), control, &plant, &spec.integrator)?;
    let hat = predict_stride(y_a, control, params, spec.liftoff)?;
    let ydot_lo = rec.state_lo.ydot;
    Ok(PredictionErrors {
        e_ap: pct_error(next.y_a, hat.y_a_next),
        e_lv: pct_error(ydot_lo, hat.ydot_lo),
        saturated: rec.saturated,
        y_next: next.y_a,
        y_next_hat: hat.y_a_next,
        ydot_lo,
        ydot_lo_hat: hat.ydot_lo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub y_a: f64,
    pub theta2: f64,
    /// `None` when either map failed; the message is in `failure`.
    pub errors: Option<PredictionErrors>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    /// Population statistics; NaN for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        MeanStd {
            mean,
            std: var.sqrt(),
            count: n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub theta2: f64,
    pub e_ap: MeanStd,
    pub e_lv: MeanStd,
    /// Number of evaluated cells in this column where the crank did not
    /// reach its target before bottom.
    pub unsaturated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub spec: GridSpec,
    /// Apex-major: all crank targets for the first apex height, then the next.
    pub cells: Vec<CellResult>,
    pub e_ap: MeanStd,
    pub e_lv: MeanStd,
    pub projection: Vec<ColumnStats>,
    /// Smallest crank target whose column contains an unsaturated stance.
    pub saturation_boundary: Option<f64>,
    /// Midpoint between the adjacent columns with the largest change in mean `E_ap`.
    pub error_jump: Option<f64>,
    pub failed: usize,
}

/// Evaluates every grid cell (in parallel) and aggregates the errors.
pub fn run_grid(spec: &GridSpec, params: &ModelParams) -> Result<GridResult> {
    let params = validate(*params)?;
    spec.validate(&params)?;
    let yas = spec.apex_values();
    let thetas = spec.theta_values();
    let pairs: Vec<(f64, f64)> = yas
        .iter()
        .flat_map(|&y| thetas.iter().map(move |&t| (y, t)))
        .collect();
    let cells: Vec<CellResult> = pairs
        .par_iter()
        .map(
            |&(y_a, theta2)| match prediction_errors(y_a, theta2, &params, spec) {
                Ok(e) => CellResult {
                    y_a,
                    theta2,
                    errors: Some(e),
                    failure: None,
                },
                Err(err) => CellResult {
                    y_a,
                    theta2,
                    errors: None,
                    failure: Some(err.to_string()),
                },
            },
        )
        .collect();
    Ok(aggregate(spec, cells))
}

fn aggregate(spec: &GridSpec, cells: Vec<CellResult>) -> GridResult {
    let ok: Vec<&PredictionErrors> = cells.iter().filter_map(|c| c.errors.as_ref()).collect();
    let e_ap = MeanStd::of(&ok.iter().map(|e| e.e_ap).collect::<Vec<_>>());
    let e_lv = MeanStd::of(&ok.iter().map(|e| e.e_lv).collect::<Vec<_>>());
    let nt = spec.theta_count;
    let projection: Vec<ColumnStats> = spec
        .theta_values()
        .iter()
        .enumerate()
        .map(|(j, &theta2)| {
            let col: Vec<&PredictionErrors> = cells
                .iter()
                .skip(j)
                .step_by(nt)
                .filter_map(|c| c.errors.as_ref())
                .collect();
            ColumnStats {
                theta2,
                e_ap: MeanStd::of(&col.iter().map(|e| e.e_ap).collect::<Vec<_>>()),
                e_lv: MeanStd::of(&col.iter().map(|e| e.e_lv).collect::<Vec<_>>()),
                unsaturated: col.iter().filter(|e| !e.saturated).count(),
            }
        })
        .collect();
    let saturation_boundary = projection
        .iter()
        .find(|c| c.unsaturated > 0)
        .map(|c| c.theta2);
    let error_jump = projection
        .windows(2)
        .filter(|w| w[0].e_ap.mean.is_finite() && w[1].e_ap.mean.is_finite())
        .max_by(|a, b| {
            let da = (a[1].e_ap.mean - a[0].e_ap.mean).abs();
            let db = (b[1].e_ap.mean - b[0].e_ap.mean).abs();
            da.total_cmp(&db)
        })
        .map(|w| 0.5 * (w[0].theta2 + w[1].theta2));
    let failed = cells.iter().filter(|c| c.errors.is_none()).count();
    GridResult {
        spec: *spec,
        cells,
        e_ap,
        e_lv,
        projection,
        saturation_boundary,
        error_jump,
        failed,
    }
}

impl GridResult {
    /// Cell with the largest `E_ap`.
    pub fn worst_cell(&self) -> Option<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.errors.is_some())
            .max_by(|a, b| {
                let ea = a.errors.unwrap().e_ap;
                let eb = b.errors.unwrap().e_ap;
                ea.total_cmp(&eb)
            })
    }

    /// CSV with columns `y_a, theta2_deg, E_ap_pct, E_lv_pct, saturated, failed`.
    pub fn write_grid_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "y_a",
            "theta2_deg",
            "E_ap_pct",
            "E_lv_pct",
            "saturated",
            "failed",
        ])?;
        for c in &self.cells {
            let (ap, lv, sat) = match c.errors {
                Some(e) => (e.e_ap, e.e_lv, e.saturated),
                None => (f64::NAN, f64::NAN, false),
            };
            wtr.serialize((
                c.y_a,
                c.theta2.to_degrees(),
                ap,
                lv,
                sat,
                c.errors.is_none(),
            ))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// CSV with columns `theta2_deg, mean_E_ap, std_E_ap, mean_E_lv, std_E_lv`.
    pub fn write_projection_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "theta2_deg",
            "mean_E_ap",
            "std_E_ap",
            "mean_E_lv",
            "std_E_lv",
        ])?;
        for c in &self.projection {
            wtr.serialize((
                c.theta2.to_degrees(),
                c.e_ap.mean,
                c.e_ap.std,
                c.e_lv.mean,
                c.e_lv.std,
            ))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Crank angle at the bottom event of a stride aimed at `theta_cap`.
///
/// Under a finite crank speed every target above this angle gives an
/// unsaturated stance from `y_a`. `None` when the crank already reaches
/// `theta_cap` before bottom, so no target up to the cap is unsaturated.
pub fn saturation_angle(
    y_a: f64,
    theta_cap: f64,
    params: &ModelParams,
    integrator: &IntegratorConfig,
) -> Result<Option<f64>> {
    let (_, rec) = apex_return(
        ApexState::new(y_a),
        ControlInput::new(theta_cap),
        params,
        integrator,
    )?;
    Ok((!rec.saturated).then_some(rec.state_b.theta))
}

/// Saturation boundary of a crank speed over a set of apex heights: the
/// smallest [`saturation_angle`] among them. Heights whose stride fails or
/// saturates are skipped; `None` if every height does.
pub fn saturation_boundary_for(
    omega: f64,
    apex_heights: &[f64],
    theta_cap: f64,
    params: &ModelParams,
    integrator: &IntegratorConfig,
) -> Option<f64> {
    let p = params.with_crank(CrankDrive::Finite { omega });
    apex_heights
        .par_iter()
        .filter_map(|&y| {
            saturation_angle(y, theta_cap, &p, integrator)
                .ok()
                .flatten()
        })
        .reduce_with(f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaCalibration {
    pub omega: f64,
    /// Boundary achieved by `omega` [rad].
    pub boundary: f64,
}

/// Finds the crank speed whose saturation boundary over `apex_heights`
/// equals `target` (rad), searching `omega` in `[omega_lo, omega_hi]`.
/// The boundary grows with `omega`, so the search is a bisection.
pub fn calibrate_omega(
    target: f64,
    apex_heights: &[f64],
    theta_cap: f64,
    params: &ModelParams,
    integrator: &IntegratorConfig,
    omega_lo: f64,
    omega_hi: f64,
) -> Result<OmegaCalibration> {
    let boundary = |w: f64| saturation_boundary_for(w, apex_heights, theta_cap, params, integrator);
    // no unsaturated stance at all means the boundary sits above the cap
    let f = |w: f64| boundary(w).unwrap_or(theta_cap) - target;
    let omega = bisect(f, omega_lo, omega_hi, 1e-7, 1e-9).ok_or_else(|| {
        SlipError::ConfigInvalid(format!(
            "saturation boundary {target} rad not bracketed by omega in [{omega_lo}, {omega_hi}]"
        ))
    })?;
    Ok(OmegaCalibration {
        omega,
        boundary: boundary(omega).unwrap_or(theta_cap),
    })
}

/// Time-aligned numeric and analytic samples of one stride.
#[derive(Debug, Clone, PartialEq)]
pub struct StrideComparison {
    pub record: StrideRecord,
    pub analytic: AnalyticStride,
    pub numeric: Trace,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// From the starting apex [s].
    pub t: f64,
    pub y_num: f64,
    pub ydot_num: f64,
    pub y_aas: f64,
    pub ydot_aas: f64,
    pub phase: Phase,
    /// Event name at this time, empty otherwise. Analytic events carry an
    /// `aas_` prefix.
    pub event: String,
}

impl StrideComparison {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_comparison_rows(&self.rows, w)
    }
}

pub fn write_comparison_rows<W: Write>(rows: &[ComparisonRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_comparison_rows<R: Read>(r: R) -> Result<Vec<ComparisonRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|row| row.map_err(SlipError::from))
        .collect()
}

/// Simulates one stride and evaluates the analytic prediction at the same
/// times, plus one row per event of either model.
pub fn single_stride_trace(
    y_a: f64,
    theta2: f64,
    params: &ModelParams,
    integrator: &IntegratorConfig,
    liftoff: LiftoffMethod,
) -> Result<StrideComparison> {
    let control = ControlInput::new(theta2);
    let (_, record, numeric) = simulate_stride(ApexState::new(y_a), control, params, integrator)?;
    let analytic = predict_stride(y_a, control, params, liftoff)?;
    let g = params.g;

    let num_events = [
        (record.t_td, "touchdown"),
        (record.t_td + record.t_b, "bottom"),
        (record.t_td + record.t_lo, "liftoff"),
        (record.t_apex, "apex"),
    ];
    let aas_events = [
        (analytic.t_td, "aas_touchdown"),
        (analytic.t_td + analytic.t_b, "aas_bottom"),
        (analytic.t_td + analytic.t_lo, "aas_liftoff"),
        (analytic.t_apex(g), "aas_apex"),
    ];

    let mut rows: Vec<ComparisonRow> = numeric
        .samples
        .iter()
        .map(|s| {
            let (ya, va) = analytic.height_at(y_a, g, s.t);
            let event = num_events
                .iter()
                .find(|(t, _)| *t == s.t)
                .map(|(_, n)| n.to_string())
                .unwrap_or_default();
            ComparisonRow {
                t: s.t,
                y_num: s.y,
                ydot_num: s.ydot,
                y_aas: ya,
                ydot_aas: va,
                phase: s.phase,
                event,
            }
        })
        .collect();
    for (t, name) in aas_events {
        if t > numeric.samples.last().map_or(0.0, |s| s.t) {
            continue;
        }
        let (ya, va) = analytic.height_at(y_a, g, t);
        // numeric state by linear interpolation between neighbouring samples
        let idx = numeric.samples.partition_point(|s| s.t < t);
        let (yn, vn, phase) = match (idx.checked_sub(1), numeric.samples.get(idx)) {
            (_, Some(b)) if b.t == t => (b.y, b.ydot, b.phase),
            (Some(i), Some(b)) => {
                let a = &numeric.samples[i];
                let w = (t - a.t) / (b.t - a.t);
                (
                    a.y + w * (b.y - a.y),
                    a.ydot + w * (b.ydot - a.ydot),
                    a.phase,
                )
            }
            _ => continue,
        };
        rows.push(ComparisonRow {
            t,
            y_num: yn,
            ydot_num: vn,
            y_aas: ya,
            ydot_aas: va,
            phase,
            event: name.to_string(),
        });
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(StrideComparison {
        record,
        analytic,
        numeric,
        rows,
    })
}
