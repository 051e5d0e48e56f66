mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use slipscm_core::analytic::{predict_stride, LiftoffMethod};
use slipscm_core::control::{sine_reference, track, DeadbeatConfig};
use slipscm_core::harness::{calibrate_omega, pct_error, run_grid, single_stride_trace, GridSpec};
use slipscm_core::roots::linspace;
use slipscm_core::simulator::simulate_strides;
use slipscm_core::stability::{
    existence_boundary, stability_sweep, write_stability_csv, FixedPointConfig, PrimaryMap,
};
use slipscm_core::svg::{line_chart, Series};
use slipscm_core::{AnalyticMap, ApexState, ControlInput, CrankDrive, NumericMap, SlipError};

use config::{preset, ExperimentKind, ReferenceKind, RunConfig};

/// Vertical SLIP hopper with slider-crank energy injection.
///
/// Every run writes CSV results and a `metadata.toml` into the output
/// directory. The metadata file holds the fully resolved configuration and can
/// be passed back with `--config` to repeat the run.
#[derive(Debug, Parser)]
#[command(name = "slipscm", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the hybrid dynamics for one or more strides at a fixed crank target.
    Simulate(RunArgs),
    /// Closed-form prediction of one stride.
    Predict(RunArgs),
    /// Numeric and closed-form stride side by side, with prediction errors.
    Compare(RunArgs),
    /// Prediction-error grid over apex height and crank target.
    Grid(RunArgs),
    /// Deadbeat apex-height tracking of a reference sequence.
    Track(RunArgs),
    /// Fixed points and eigenvalues over a sweep of crank targets.
    Stability(RunArgs),
    /// Crank speed that places the grid's saturation boundary at a target angle.
    CalibrateOmega(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Simulate(a) => (ExperimentKind::Simulate, a),
            Command::Predict(a) => (ExperimentKind::Predict, a),
            Command::Compare(a) => (ExperimentKind::Compare, a),
            Command::Grid(a) => (ExperimentKind::Grid, a),
            Command::Track(a) => (ExperimentKind::Track, a),
            Command::Stability(a) => (ExperimentKind::Stability, a),
            Command::CalibrateOmega(a) => (ExperimentKind::CalibrateOmega, a),
        }
    }
}

/// Settings are layered: the `--config` file first, then `--preset` (which
/// replaces the model block), then the remaining flags.
#[derive(Debug, Args)]
struct RunArgs {
    /// TOML configuration; a `metadata.toml` from an earlier run works as-is.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named model parameters: `table2` or `table2-sat32`.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Starting apex height [m].
    #[arg(long, value_name = "M", allow_negative_numbers = true)]
    ya: Option<f64>,
    /// Crank target [deg].
    #[arg(long = "theta2-deg", value_name = "DEG", allow_negative_numbers = true)]
    theta2_deg: Option<f64>,
    /// Crank drive of the simulated plant: `instant` or `omega=VALUE` (rad/s).
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    /// Output directory (default `slipscm-out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
    /// Number of strides (simulate, track).
    #[arg(long, value_name = "N")]
    strides: Option<usize>,
    /// Closed-form liftoff time: `newton` or `exact`.
    #[arg(long, value_name = "METHOD", value_parser = parse_liftoff)]
    liftoff: Option<LiftoffMethod>,
}

fn parse_liftoff(s: &str) -> Result<LiftoffMethod, String> {
    match s {
        "newton" => Ok(LiftoffMethod::Newton),
        "exact" => Ok(LiftoffMethod::Exact),
        _ => Err(format!("expected `newton` or `exact`, got `{s}`")),
    }
}

fn build_config(kind: ExperimentKind, args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &args.preset {
        cfg.model = preset(name)?;
    }
    if let Some(mode) = &args.mode {
        let crank: CrankDrive = mode.parse()?;
        cfg.model.crank = crank.to_string();
    }
    let e = &mut cfg.experiment;
    if args.ya.is_some() {
        e.y_a = args.ya;
    }
    if args.theta2_deg.is_some() {
        e.theta2_deg = args.theta2_deg;
    }
    if args.strides.is_some() {
        e.strides = args.strides;
    }
    if args.liftoff.is_some() {
        e.liftoff = args.liftoff;
    }
    if args.out.is_some() {
        cfg.out.clone_from(&args.out);
    }
    if args.svg {
        cfg.svg = Some(true);
    }
    let cfg = cfg.resolve(kind)?;

    let e = &cfg.experiment;
    for (flag, given, used) in [
        ("--ya", args.ya.is_some(), e.y_a.is_some()),
        (
            "--theta2-deg",
            args.theta2_deg.is_some(),
            e.theta2_deg.is_some(),
        ),
        ("--strides", args.strides.is_some(), e.strides.is_some()),
        ("--liftoff", args.liftoff.is_some(), e.liftoff.is_some()),
    ] {
        if given && !used {
            bail!("{flag} has no effect on `{}`", kind.name());
        }
    }
    Ok(cfg)
}

/// Collects what a run produced.
struct Report {
    dir: PathBuf,
    svg: bool,
    files: Vec<String>,
    summary: toml::Table,
    notes: toml::Table,
}

impl Report {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("slipscm-out"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Report {
            dir,
            svg: cfg.svg.unwrap_or(false),
            files: Vec::new(),
            summary: toml::Table::new(),
            notes: toml::Table::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn create(&mut self, name: &str) -> Result<fs::File> {
        let path = self.path(name);
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))
    }

    fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn chart(
        &mut self,
        name: &str,
        title: &str,
        x: &str,
        y: &str,
        series: &[Series],
    ) -> Result<()> {
        if self.svg {
            let path = self.path(name);
            fs::write(&path, line_chart(title, x, y, series))
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }

    fn put(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    fn put_opt(&mut self, key: &str, value: Option<f64>) {
        if let Some(v) = value {
            self.put(key, v);
        }
    }

    fn note(&mut self, key: &str, text: &str) {
        self.notes.insert(key.to_string(), text.into());
    }

    fn finish(mut self, mut cfg: RunConfig) -> Result<()> {
        let files = self
            .files
            .iter()
            .cloned()
            .map(toml::Value::from)
            .collect::<Vec<_>>();
        self.notes.insert("files".into(), toml::Value::Array(files));
        cfg.summary = Some(self.summary);
        cfg.notes = Some(self.notes);
        let path = self.dir.join("metadata.toml");
        fs::write(&path, cfg.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", self.dir.display());
        Ok(())
    }
}

fn deg(x: f64) -> f64 {
    x.to_degrees()
}

#[derive(Serialize)]
struct StrideRow {
    stride: usize,
    y_a: f64,
    theta2_deg: f64,
    t_td: f64,
    t_b: f64,
    t_lo: f64,
    t_apex: f64,
    y_lo: f64,
    ydot_lo: f64,
    y_a_next: f64,
    saturated: bool,
}

fn run_simulate(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let params = cfg.model.params()?;
    let (y_a, th) = (e.y_a.unwrap(), e.theta2_deg.unwrap());
    let controls = vec![ControlInput::from_degrees(th); e.strides.unwrap()];
    let (records, trace) =
        simulate_strides(ApexState::new(y_a), &controls, &params, &cfg.integrator())?;

    let mut start = y_a;
    let rows: Vec<StrideRow> = records
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let row = StrideRow {
                stride: n,
                y_a: start,
                theta2_deg: deg(r.control.theta2),
                t_td: r.t_td,
                t_b: r.t_b,
                t_lo: r.t_lo,
                t_apex: r.t_apex,
                y_lo: r.state_lo.y,
                ydot_lo: r.state_lo.ydot,
                y_a_next: r.y_a_next,
                saturated: r.saturated,
            };
            start = r.y_a_next;
            row
        })
        .collect();
    trace.write_csv(rep.create("trace.csv")?)?;
    rep.rows("strides.csv", &rows)?;

    let ts: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
    let ys: Vec<f64> = trace.samples.iter().map(|s| s.y).collect();
    rep.chart(
        "trace.svg",
        "Body height",
        "t [s]",
        "y [m]",
        &[Series::new("y", ts, ys)],
    )?;

    let last = records.last().map_or(y_a, |r| r.y_a_next);
    rep.put("final_apex", last);
    rep.put(
        "saturated_strides",
        records.iter().filter(|r| r.saturated).count() as i64,
    );
    println!("{} stride(s): apex {y_a:.6} -> {last:.6} m", records.len());
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    y_a: f64,
    theta2_deg: f64,
    t_td: f64,
    t_b: f64,
    t_lo: f64,
    t_apex: f64,
    y_lo: f64,
    ydot_lo: f64,
    y_a_next: f64,
}

fn run_predict(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let params = cfg.model.params()?;
    let (y_a, th) = (e.y_a.unwrap(), e.theta2_deg.unwrap());
    let s = predict_stride(
        y_a,
        ControlInput::from_degrees(th),
        &params,
        e.liftoff.unwrap(),
    )?;
    let t_apex = s.t_apex(params.g);
    rep.rows(
        "prediction.csv",
        &[PredictionRow {
            y_a,
            theta2_deg: th,
            t_td: s.t_td,
            t_b: s.t_b,
            t_lo: s.t_lo,
            t_apex,
            y_lo: s.y_lo,
            ydot_lo: s.ydot_lo,
            y_a_next: s.y_a_next,
        }],
    )?;
    if rep.svg {
        let ts = linspace(0.0, t_apex, 400);
        let ys = ts
            .iter()
            .map(|&t| s.height_at(y_a, params.g, t).0)
            .collect();
        rep.chart(
            "prediction.svg",
            "Predicted body height",
            "t [s]",
            "y [m]",
            &[Series::new("closed form", ts, ys)],
        )?;
    }
    rep.put("y_a_next", s.y_a_next);
    rep.put("ydot_lo", s.ydot_lo);
    println!(
        "predicted apex {y_a:.6} -> {:.6} m, liftoff velocity {:.6} m/s",
        s.y_a_next, s.ydot_lo
    );
    Ok(())
}

fn run_compare(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let params = cfg.model.params()?;
    let (y_a, th) = (e.y_a.unwrap(), e.theta2_deg.unwrap());
    let cmp = single_stride_trace(
        y_a,
        th.to_radians(),
        &params,
        &cfg.integrator(),
        e.liftoff.unwrap(),
    )?;
    cmp.write_csv(rep.create("comparison.csv")?)?;

    let ts: Vec<f64> = cmp.rows.iter().map(|r| r.t).collect();
    let yn = cmp.rows.iter().map(|r| r.y_num).collect();
    let ya = cmp.rows.iter().map(|r| r.y_aas).collect();
    rep.chart(
        "comparison.svg",
        "Numeric and closed-form stride",
        "t [s]",
        "y [m]",
        &[
            Series::new("numeric", ts.clone(), yn),
            Series::new("closed form", ts, ya).dashed(),
        ],
    )?;

    let e_ap = pct_error(cmp.record.y_a_next, cmp.analytic.y_a_next);
    let e_lv = pct_error(cmp.record.state_lo.ydot, cmp.analytic.ydot_lo);
    rep.put("y_a_next", cmp.record.y_a_next);
    rep.put("y_a_next_hat", cmp.analytic.y_a_next);
    rep.put("E_ap_pct", e_ap);
    rep.put("E_lv_pct", e_lv);
    rep.put("saturated", cmp.record.saturated);
    println!(
        "E_ap {e_ap:.4}%  E_lv {e_lv:.4}%  (apex {:.6} vs {:.6} m)",
        cmp.record.y_a_next, cmp.analytic.y_a_next
    );
    Ok(())
}

fn run_grid_cmd(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let params = cfg.model.params()?;
    let spec = GridSpec {
        ya_min: e.ya_min.unwrap(),
        ya_max: e.ya_max.unwrap(),
        ya_count: e.ya_count.unwrap(),
        theta_min: e.theta2_min_deg.unwrap().to_radians(),
        theta_max: e.theta2_max_deg.unwrap().to_radians(),
        theta_count: e.theta2_count.unwrap(),
        plant: params.crank,
        integrator: cfg.integrator(),
        liftoff: e.liftoff.unwrap(),
    };
    let g = run_grid(&spec, &params)?;
    g.write_grid_csv(rep.create("grid.csv")?)?;
    g.write_projection_csv(rep.create("projection.csv")?)?;

    if rep.svg {
        let xs: Vec<f64> = g.projection.iter().map(|c| deg(c.theta2)).collect();
        let col = |f: fn(&slipscm_core::harness::ColumnStats) -> f64| {
            g.projection.iter().map(f).collect::<Vec<_>>()
        };
        let ap =
            Series::new("E_ap", xs.clone(), col(|c| c.e_ap.mean)).with_err(col(|c| c.e_ap.std));
        let lv = Series::new("E_lv", xs, col(|c| c.e_lv.mean))
            .with_err(col(|c| c.e_lv.std))
            .dashed();
        rep.chart(
            "projection.svg",
            "Prediction error by crank target",
            "theta2 [deg]",
            "error [%]",
            &[ap, lv],
        )?;
    }

    rep.put("E_ap_mean_pct", g.e_ap.mean);
    rep.put("E_ap_std_pct", g.e_ap.std);
    rep.put("E_lv_mean_pct", g.e_lv.mean);
    rep.put("E_lv_std_pct", g.e_lv.std);
    rep.put("evaluated_cells", g.e_ap.count as i64);
    rep.put("failed_cells", g.failed as i64);
    rep.put_opt("saturation_boundary_deg", g.saturation_boundary.map(deg));
    rep.put_opt("error_jump_deg", g.error_jump.map(deg));
    rep.note(
        "saturation_boundary_deg",
        "smallest crank target whose column has a stance where the crank is still moving at bottom",
    );
    rep.note(
        "error_jump_deg",
        "midpoint of the adjacent column pair with the largest change in mean E_ap",
    );
    rep.note(
        "statistics",
        "population mean and standard deviation over evaluated cells",
    );
    if let Some(w) = g.worst_cell() {
        if let Some(err) = w.errors {
            rep.put("worst_cell_y_a", w.y_a);
            rep.put("worst_cell_theta2_deg", deg(w.theta2));
            rep.put("worst_cell_E_lv_pct", err.e_lv);
        }
    }
    println!(
        "E_ap {:.3} +/- {:.3} %  E_lv {:.3} +/- {:.3} %  ({} cells, {} failed)",
        g.e_ap.mean, g.e_ap.std, g.e_lv.mean, g.e_lv.std, g.e_ap.count, g.failed
    );
    Ok(())
}

fn run_track(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let params = cfg.model.params()?;
    let n = e.strides.unwrap();
    let reference = match e.reference.unwrap() {
        ReferenceKind::Sine => sine_reference(
            n,
            e.reference_mean.unwrap(),
            e.reference_amplitude.unwrap(),
            e.reference_period.unwrap(),
        ),
        ReferenceKind::Constant => vec![e.reference_value.unwrap(); n],
    };
    let dcfg = DeadbeatConfig {
        theta_min: e.theta2_min_deg.unwrap().to_radians(),
        theta_max: e.theta2_max_deg.unwrap().to_radians(),
        tol_height: e.tol_height.unwrap(),
        ..DeadbeatConfig::default()
    };
    let plant = NumericMap::new(params, cfg.integrator());
    let model = AnalyticMap {
        params,
        liftoff: e.liftoff.unwrap(),
    };
    let res = track(&reference, e.y_a.unwrap(), &plant, &model, &dcfg)?;
    res.write_csv(rep.create("tracking.csv")?)?;

    let xs: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    rep.chart(
        "tracking.svg",
        "Apex tracking",
        "stride",
        "apex [m]",
        &[
            Series::new("reference", xs.clone(), res.reference.clone()).dashed(),
            Series::new("achieved", xs, res.achieved.clone()),
        ],
    )?;
    let max = res.pct_errors.iter().copied().fold(0.0, f64::max);
    rep.put("mean_pct_error", res.mean_pct_error);
    rep.put("max_pct_error", max);
    rep.put(
        "saturated_strides",
        res.saturated.iter().filter(|s| **s).count() as i64,
    );
    println!(
        "mean error {:.4}%  max {max:.4}%  over {n} strides",
        res.mean_pct_error
    );
    Ok(())
}

fn run_stability(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let params = cfg.model.params()?;
    let (lo, hi, step) = (
        e.theta2_min_deg.unwrap(),
        e.theta2_max_deg.unwrap(),
        e.theta2_step_deg.unwrap(),
    );
    if !(step > 0.0 && hi > lo) {
        bail!("stability sweep needs theta2_max_deg > theta2_min_deg and a positive step");
    }
    let n = ((hi - lo) / step).round() as usize + 1;
    let grid: Vec<f64> = linspace(lo, hi, n)
        .into_iter()
        .map(f64::to_radians)
        .collect();
    let fp = FixedPointConfig {
        y_min: e.ya_min.unwrap(),
        y_max: e.ya_max.unwrap(),
        fp_tol: e.fp_tol.unwrap(),
        delta_y: e.delta_y.unwrap(),
        delta_theta: e.delta_theta.unwrap(),
        ..FixedPointConfig::default()
    };
    let analytic = AnalyticMap {
        params,
        liftoff: e.liftoff.unwrap(),
    };
    let numeric = NumericMap::new(params, cfg.integrator());
    let primary = e.primary.unwrap();
    let recs = stability_sweep(&grid, &analytic, &numeric, primary, &fp)?;
    write_stability_csv(&recs, rep.create("stability.csv")?)?;

    let xs: Vec<f64> = recs.iter().map(|r| deg(r.theta2)).collect();
    rep.chart(
        "stability.svg",
        "Apex eigenvalue at the fixed point",
        "theta2 [deg]",
        "lambda",
        &[
            Series::new(
                "closed form",
                xs.clone(),
                recs.iter().map(|r| r.lambda_apex_aas).collect(),
            ),
            Series::new(
                "numeric",
                xs,
                recs.iter().map(|r| r.lambda_apex_numeric).collect(),
            )
            .dashed(),
        ],
    )?;

    let map: &dyn slipscm_core::ReturnMap = match primary {
        PrimaryMap::Analytic => &analytic,
        PrimaryMap::Numeric => &numeric,
    };
    let boundary = existence_boundary(
        map,
        grid[0],
        grid[n - 1],
        step.to_radians(),
        0.01f64.to_radians(),
        &fp,
    )?;
    let exists = recs.iter().filter(|r| r.exists).count();
    let max_lambda = recs
        .iter()
        .filter(|r| r.exists)
        .map(|r| r.lambda_apex_aas.max(r.lambda_apex_numeric))
        .filter(|l| l.is_finite())
        .fold(f64::NAN, f64::max);
    rep.put("fixed_points_found", exists as i64);
    rep.put("sweep_points", n as i64);
    rep.put_opt("existence_boundary_deg", boundary.map(deg));
    rep.put_opt(
        "max_lambda_apex",
        Some(max_lambda).filter(|l| l.is_finite()),
    );
    rep.note(
        "lambda",
        "each map's eigenvalue is taken at that map's own fixed point",
    );
    rep.note("lambda_control", "reported per radian and per degree");
    match boundary {
        Some(b) => println!(
            "{exists}/{n} crank targets have a fixed point; existence boundary {:.3} deg",
            deg(b)
        ),
        None => println!(
            "{exists}/{n} crank targets have a fixed point; no existence boundary in range"
        ),
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrationRow {
    target_deg: f64,
    omega: f64,
    boundary_deg: f64,
}

fn run_calibrate(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let params = cfg.model.params()?;
    let heights = linspace(e.ya_min.unwrap(), e.ya_max.unwrap(), e.ya_count.unwrap());
    let target = e.target_deg.unwrap();
    let cal = calibrate_omega(
        target.to_radians(),
        &heights,
        e.theta2_max_deg.unwrap().to_radians(),
        &params,
        &cfg.integrator(),
        e.omega_min.unwrap(),
        e.omega_max.unwrap(),
    )?;
    rep.rows(
        "calibration.csv",
        &[CalibrationRow {
            target_deg: target,
            omega: cal.omega,
            boundary_deg: deg(cal.boundary),
        }],
    )?;
    if rep.svg {
        rep.note("svg", "calibrate-omega has no chart");
    }
    rep.put("omega", cal.omega);
    rep.put("boundary_deg", deg(cal.boundary));
    println!(
        "omega = {:.9} rad/s puts the saturation boundary at {:.4} deg",
        cal.omega,
        deg(cal.boundary)
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (kind, args) = cli.command.split();
    let cfg = build_config(kind, &args)?;
    let mut rep = Report::new(&cfg)?;
    match kind {
        ExperimentKind::Simulate => run_simulate(&cfg, &mut rep)?,
        ExperimentKind::Predict => run_predict(&cfg, &mut rep)?,
        ExperimentKind::Compare => run_compare(&cfg, &mut rep)?,
        ExperimentKind::Grid => run_grid_cmd(&cfg, &mut rep)?,
        ExperimentKind::Track => run_track(&cfg, &mut rep)?,
        ExperimentKind::Stability => run_stability(&cfg, &mut rep)?,
        ExperimentKind::CalibrateOmega => run_calibrate(&cfg, &mut rep)?,
    }
    rep.finish(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.chain().find_map(|c| c.downcast_ref::<SlipError>()) {
                Some(s) => eprintln!("error [{}]: {e:#}", s.kind()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
