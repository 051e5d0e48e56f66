//! Fixed points of the apex return map and their finite-difference
//! eigenvalues with respect to apex height and crank target.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipError};
use crate::maps::ReturnMap;
use crate::roots::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub y_min: f64,
    pub y_max: f64,
    /// Spacing of the sign-change scan [m].
    pub scan_step: f64,
    /// Residual bound certifying a fixed point [m].
    pub fp_tol: f64,
    /// A scan whose residuals all stay below this is a continuum of fixed points.
    pub continuum_tol: f64,
    /// Apex perturbation for the height eigenvalue [m].
    pub delta_y: f64,
    /// Control perturbation for the control sensitivity [rad].
    pub delta_theta: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            y_min: 0.4,
            y_max: 0.8,
            scan_step: 1e-3,
            fp_tol: 1e-8,
            continuum_tol: 1e-8,
            delta_y: 1e-4,
            delta_theta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedPoint {
    /// `y` is the selected root; `all` lists every root found in the scan.
    Found {
        y: f64,
        all: Vec<f64>,
    },
    NotFound,
    /// Every scanned height maps to itself (conservative map).
    Continuum,
}

impl FixedPoint {
    pub fn height(&self) -> Option<f64> {
        match self {
            FixedPoint::Found { y, .. } => Some(*y),
            _ => None,
        }
    }
}

/// Solves `map(y, theta2) = y` on `[y_min, y_max]`.
///
/// Heights where the map fails are skipped. When several roots exist the
/// first one where the residual falls through zero (a stable crossing) is
/// selected, else the first root.
pub fn find_fixed_point(
    theta2: f64,
    map: &dyn ReturnMap,
    config: &FixedPointConfig,
) -> Result<FixedPoint> {
    let n = ((config.y_max - config.y_min) / config.scan_step).round() as usize + 1;
    let ys: Vec<f64> = (0..n)
        .map(|i| (config.y_min + config.scan_step * i as f64).min(config.y_max))
        .collect();
    let residual = |y: f64| map.next_apex(y, theta2).map(|v| v - y);
    let gs: Vec<Option<f64>> = ys.iter().map(|&y| residual(y).ok()).collect();
    if gs.iter().all(Option::is_none) {
        return Err(SlipError::MapUnevaluable {
            lo: config.y_min,
            hi: config.y_max,
        });
    }
    if gs
        .iter()
        .all(|g| matches!(g, Some(v) if v.abs() < config.continuum_tol))
    {
        return Ok(FixedPoint::Continuum);
    }

    let mut roots = Vec::new();
    let mut stable = None;
    for i in 0..n.saturating_sub(1) {
        let (Some(a), Some(b)) = (gs[i], gs[i + 1]) else {
            continue;
        };
        if a == 0.0 || a.signum() != b.signum() {
            let f = |y: f64| residual(y).unwrap_or(f64::NAN);
            let Some(y) = bisect(f, ys[i], ys[i + 1], 1e-13, 0.1 * config.fp_tol) else {
                continue;
            };
            match residual(y) {
                Ok(g) if g.abs() < config.fp_tol => {}
                _ => continue,
            }
            if roots
                .last()
                .is_some_and(|&last: &f64| (y - last).abs() < 1e-12)
            {
                continue;
            }
            if stable.is_none() && a > 0.0 && b < 0.0 {
                stable = Some(y);
            }
            roots.push(y);
        }
    }
    Ok(match (stable, roots.first()) {
        (Some(y), _) => FixedPoint::Found { y, all: roots },
        (None, Some(&y)) => FixedPoint::Found { y, all: roots },
        (None, None) => FixedPoint::NotFound,
    })
}

/// `|map(y + d) - map(y - d)| / 2d`; one-sided when `y - d` cannot touch down.
pub fn eigen_apex(theta2: f64, y_fixed: f64, map: &dyn ReturnMap, delta_y: f64) -> Result<f64> {
    let up = map.next_apex(y_fixed + delta_y, theta2)?;
    if y_fixed - delta_y >= map.params().touchdown_height() {
        if let Ok(down) = map.next_apex(y_fixed - delta_y, theta2) {
            return Ok((up - down).abs() / (2.0 * delta_y));
        }
    }
    let here = map.next_apex(y_fixed, theta2)?;
    Ok((up - here).abs() / delta_y)
}

/// `|map(y, theta2 + d) - y| / d` per radian of crank target.
pub fn eigen_control(
    theta2: f64,
    y_fixed: f64,
    map: &dyn ReturnMap,
    delta_theta: f64,
) -> Result<f64> {
    let perturbed = map.next_apex(y_fixed, theta2 + delta_theta)?;
    Ok((perturbed - y_fixed).abs() / delta_theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    /// Crank target [rad].
    pub theta2: f64,
    /// Fixed point of the primary map, NaN when none exists.
    pub y_fixed: f64,
    pub exists: bool,
    /// Height eigenvalue of the analytic map at its own fixed point.
    pub lambda_apex_aas: f64,
    /// Height eigenvalue of the numeric map at its own fixed point.
    pub lambda_apex_numeric: f64,
    /// Control sensitivity of the primary map [m/rad].
    pub lambda_control: f64,
}

impl StabilityRecord {
    pub fn lambda_control_per_deg(&self) -> f64 {
        self.lambda_control * std::f64::consts::PI / 180.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StabilityRow {
    theta2_deg: f64,
    y_fixed: f64,
    exists: bool,
    lambda_apex_aas: f64,
    lambda_apex_numeric: f64,
    lambda_control_per_rad: f64,
    lambda_control_per_deg: f64,
    // exact angle, so a re-import does not go through a degree conversion
    theta2_rad: f64,
}

/// CSV with columns `theta2_deg, y_fixed, exists, lambda_apex_aas,
/// lambda_apex_numeric, lambda_control_per_rad, lambda_control_per_deg`,
/// followed by `theta2_rad`.
pub fn write_stability_csv<W: Write>(records: &[StabilityRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(StabilityRow {
            theta2_deg: r.theta2.to_degrees(),
            y_fixed: r.y_fixed,
            exists: r.exists,
            lambda_apex_aas: r.lambda_apex_aas,
            lambda_apex_numeric: r.lambda_apex_numeric,
            lambda_control_per_rad: r.lambda_control,
            lambda_control_per_deg: r.lambda_control_per_deg(),
            theta2_rad: r.theta2,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_stability_csv<R: Read>(r: R) -> Result<Vec<StabilityRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: StabilityRow = row?;
        out.push(StabilityRecord {
            theta2: row.theta2_rad,
            y_fixed: row.y_fixed,
            exists: row.exists,
            lambda_apex_aas: row.lambda_apex_aas,
            lambda_apex_numeric: row.lambda_apex_numeric,
            lambda_control: row.lambda_control_per_rad,
        });
    }
    Ok(out)
}

/// Which of the two maps defines `y_fixed`, `exists` and the control
/// sensitivity in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryMap {
    Analytic,
    Numeric,
}

fn lambda_at_own_fixed_point(
    theta2: f64,
    map: &dyn ReturnMap,
    config: &FixedPointConfig,
) -> Result<(Option<f64>, f64)> {
    match find_fixed_point(theta2, map, config)? {
        FixedPoint::Found { y, .. } => Ok((Some(y), eigen_apex(theta2, y, map, config.delta_y)?)),
        _ => Ok((None, f64::NAN)),
    }
}

/// Stability record for every crank target in `grid`, in grid order.
pub fn stability_sweep(
    grid: &[f64],
    analytic: &dyn ReturnMap,
    numeric: &dyn ReturnMap,
    primary: PrimaryMap,
    config: &FixedPointConfig,
) -> Result<Vec<StabilityRecord>> {
    grid.par_iter()
        .map(|&theta2| {
            let (ya, lambda_aas) = lambda_at_own_fixed_point(theta2, analytic, config)?;
            let (yn, lambda_num) = lambda_at_own_fixed_point(theta2, numeric, config)?;
            let (y_fixed, map): (Option<f64>, &dyn ReturnMap) = match primary {
                PrimaryMap::Analytic => (ya, analytic),
                PrimaryMap::Numeric => (yn, numeric),
            };
            let lambda_control = match y_fixed {
                Some(y) => eigen_control(theta2, y, map, config.delta_theta)?,
                None => f64::NAN,
            };
            Ok(StabilityRecord {
                theta2,
                y_fixed: y_fixed.unwrap_or(f64::NAN),
                exists: y_fixed.is_some(),
                lambda_apex_aas: lambda_aas,
                lambda_apex_numeric: lambda_num,
                lambda_control,
            })
        })
        .collect()
}

/// Locates the crank target where fixed points stop existing, scanning
/// `[theta_lo, theta_hi]` at `scan_step` and bisecting the first
/// not-found/found transition down to `resolution` (all in radians).
/// Returns the midpoint of the final bracket.
pub fn existence_boundary(
    map: &dyn ReturnMap,
    theta_lo: f64,
    theta_hi: f64,
    scan_step: f64,
    resolution: f64,
    config: &FixedPointConfig,
) -> Result<Option<f64>> {
    let exists = |th: f64| -> Result<bool> {
        Ok(matches!(
            find_fixed_point(th, map, config)?,
            FixedPoint::Found { .. }
        ))
    };
    let n = ((theta_hi - theta_lo) / scan_step).round() as usize + 1;
    let grid: Vec<f64> = (0..n)
        .map(|i| (theta_lo + scan_step * i as f64).min(theta_hi))
        .collect();
    let flags: Vec<bool> = grid
        .par_iter()
        .map(|&th| exists(th))
        .collect::<Result<_>>()?;
    let Some(i) = flags.windows(2).position(|w| w[0] != w[1]) else {
        return Ok(None);
    };
    let (mut a, mut b) = (grid[i], grid[i + 1]);
    let fa = flags[i];
    while b - a > resolution {
        let mid = 0.5 * (a + b);
        if exists(mid)? == fa {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}
