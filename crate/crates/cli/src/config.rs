//! File configuration. Every run resolves to a complete `RunConfig` that is
//! written next to its outputs and can be fed back with `--config`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use slipscm_core::analytic::LiftoffMethod;
use slipscm_core::harness::OMEGA_SAT32;
use slipscm_core::simulator::IntegratorConfig;
use slipscm_core::stability::PrimaryMap;
use slipscm_core::{CrankDrive, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub m: f64,
    pub k: f64,
    pub d_bar: f64,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub g: f64,
    /// `instant` or `omega=VALUE` (rad/s).
    pub crank: String,
    pub theta1_deg: f64,
}

impl ModelBlock {
    pub fn from_params(p: &ModelParams) -> Self {
        ModelBlock {
            m: p.m,
            k: p.k,
            d_bar: p.d_bar,
            l0: p.l0,
            l1: p.l1,
            l2: p.l2,
            g: p.g,
            crank: p.crank.to_string(),
            theta1_deg: p.theta1.to_degrees(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let crank: CrankDrive = self.crank.parse()?;
        let p = ModelParams {
            m: self.m,
            k: self.k,
            d_bar: self.d_bar,
            l0: self.l0,
            l1: self.l1,
            l2: self.l2,
            g: self.g,
            crank,
            theta1: self.theta1_deg.to_radians(),
        };
        Ok(slipscm_core::validate(p)?)
    }
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock::from_params(&ModelParams::table2())
    }
}

/// Named parameter bundles.
pub fn preset(name: &str) -> Result<ModelBlock> {
    match name {
        "table2" => Ok(ModelBlock::default()),
        // crank speed that puts the grid's saturation boundary at 32 degrees
        "table2-sat32" => Ok(ModelBlock::from_params(
            &ModelParams::table2().with_crank(CrankDrive::Finite { omega: OMEGA_SAT32 }),
        )),
        _ => bail!("unknown preset `{name}` (known: table2, table2-sat32)"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Predict,
    Compare,
    Grid,
    Track,
    Stability,
    CalibrateOmega,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Predict => "predict",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Grid => "grid",
            ExperimentKind::Track => "track",
            ExperimentKind::Stability => "stability",
            ExperimentKind::CalibrateOmega => "calibrate-omega",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Sine,
    Constant,
}

/// Experiment settings. Fields irrelevant to `kind` are left unset in a
/// resolved config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub kind: Option<ExperimentKind>,
    pub y_a: Option<f64>,
    pub theta2_deg: Option<f64>,
    pub strides: Option<usize>,
    pub liftoff: Option<LiftoffMethod>,

    pub ya_min: Option<f64>,
    pub ya_max: Option<f64>,
    pub ya_count: Option<usize>,
    pub theta2_min_deg: Option<f64>,
    pub theta2_max_deg: Option<f64>,
    pub theta2_count: Option<usize>,

    pub reference: Option<ReferenceKind>,
    pub reference_mean: Option<f64>,
    pub reference_amplitude: Option<f64>,
    pub reference_period: Option<f64>,
    pub reference_value: Option<f64>,
    pub tol_height: Option<f64>,

    pub theta2_step_deg: Option<f64>,
    pub primary: Option<PrimaryMap>,
    pub fp_tol: Option<f64>,
    pub delta_y: Option<f64>,
    pub delta_theta: Option<f64>,

    pub target_deg: Option<f64>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorBlock {
    pub dt: Option<f64>,
    pub event_tol: Option<f64>,
    pub max_stance_time: Option<f64>,
    pub sample_stride: Option<usize>,
}

impl IntegratorBlock {
    fn fill(&self, base: IntegratorConfig) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt.unwrap_or(base.dt),
            event_tol: self.event_tol.unwrap_or(base.event_tol),
            max_stance_time: self.max_stance_time.unwrap_or(base.max_stance_time),
            sample_stride: self.sample_stride.unwrap_or(base.sample_stride),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub svg: Option<bool>,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub integrator: IntegratorBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    /// Written with results; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<toml::Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<toml::Table>,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Fills every setting `kind` uses with its default and clears the rest.
    pub fn resolve(mut self, kind: ExperimentKind) -> Result<Self> {
        if let Some(k) = self.experiment.kind {
            if k != kind {
                bail!(
                    "config describes a `{}` experiment but `{}` was requested",
                    k.name(),
                    kind.name()
                );
            }
        }
        self.model.params()?;
        let e = std::mem::take(&mut self.experiment);
        let mut r = ExperimentBlock {
            kind: Some(kind),
            ..Default::default()
        };
        let base = match kind {
            ExperimentKind::Simulate | ExperimentKind::Compare => IntegratorConfig::oracle(),
            _ => IntegratorConfig::harness(),
        };
        let ic = self.integrator.fill(base);
        ic.validate()?;
        self.integrator = IntegratorBlock {
            dt: Some(ic.dt),
            event_tol: Some(ic.event_tol),
            max_stance_time: Some(ic.max_stance_time),
            sample_stride: Some(ic.sample_stride),
        };
        let ya = e.y_a.unwrap_or(0.6);
        let th = e.theta2_deg.unwrap_or(30.0);
        let liftoff = e.liftoff.unwrap_or_default();
        match kind {
            ExperimentKind::Simulate => {
                r.y_a = Some(ya);
                r.theta2_deg = Some(th);
                r.strides = Some(e.strides.unwrap_or(1));
            }
            ExperimentKind::Predict | ExperimentKind::Compare => {
                r.y_a = Some(ya);
                r.theta2_deg = Some(th);
                r.liftoff = Some(liftoff);
            }
            ExperimentKind::Grid => {
                r.ya_min = Some(e.ya_min.unwrap_or(0.4));
                r.ya_max = Some(e.ya_max.unwrap_or(0.8));
                r.ya_count = Some(e.ya_count.unwrap_or(100));
                r.theta2_min_deg = Some(e.theta2_min_deg.unwrap_or(15.0));
                r.theta2_max_deg = Some(e.theta2_max_deg.unwrap_or(45.0));
                r.theta2_count = Some(e.theta2_count.unwrap_or(100));
                r.liftoff = Some(liftoff);
            }
            ExperimentKind::Track => {
                let reference = e.reference.unwrap_or(ReferenceKind::Sine);
                r.y_a = Some(ya);
                r.strides = Some(e.strides.unwrap_or(100));
                r.reference = Some(reference);
                match reference {
                    ReferenceKind::Sine => {
                        r.reference_mean = Some(e.reference_mean.unwrap_or(0.6));
                        r.reference_amplitude = Some(e.reference_amplitude.unwrap_or(0.15));
                        r.reference_period = Some(e.reference_period.unwrap_or(20.0));
                    }
                    ReferenceKind::Constant => {
                        r.reference_value = Some(e.reference_value.unwrap_or(0.6));
                    }
                }
                r.theta2_min_deg = Some(e.theta2_min_deg.unwrap_or(15.0));
                r.theta2_max_deg = Some(e.theta2_max_deg.unwrap_or(45.0));
                r.tol_height = Some(e.tol_height.unwrap_or(1e-6));
                r.liftoff = Some(liftoff);
            }
            ExperimentKind::Stability => {
                r.theta2_min_deg = Some(e.theta2_min_deg.unwrap_or(15.0));
                r.theta2_max_deg = Some(e.theta2_max_deg.unwrap_or(45.0));
                r.theta2_step_deg = Some(e.theta2_step_deg.unwrap_or(0.5));
                r.ya_min = Some(e.ya_min.unwrap_or(0.4));
                r.ya_max = Some(e.ya_max.unwrap_or(0.8));
                r.primary = Some(e.primary.unwrap_or(PrimaryMap::Analytic));
                r.fp_tol = Some(e.fp_tol.unwrap_or(1e-8));
                r.delta_y = Some(e.delta_y.unwrap_or(1e-4));
                r.delta_theta = Some(e.delta_theta.unwrap_or(1e-4));
                r.liftoff = Some(liftoff);
            }
            ExperimentKind::CalibrateOmega => {
                r.target_deg = Some(e.target_deg.unwrap_or(32.0));
                r.ya_min = Some(e.ya_min.unwrap_or(0.4));
                r.ya_max = Some(e.ya_max.unwrap_or(0.8));
                r.ya_count = Some(e.ya_count.unwrap_or(100));
                r.theta2_max_deg = Some(e.theta2_max_deg.unwrap_or(45.0));
                r.omega_min = Some(e.omega_min.unwrap_or(1.0));
                r.omega_max = Some(e.omega_max.unwrap_or(40.0));
            }
        }
        self.experiment = r;
        self.out = Some(self.out.unwrap_or_else(|| PathBuf::from("slipscm-out")));
        self.svg = Some(self.svg.unwrap_or(false));
        self.summary = None;
        self.notes = None;
        Ok(self)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        self.integrator.fill(IntegratorConfig::harness())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
