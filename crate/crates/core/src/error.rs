use thiserror::Error;

pub type Result<T> = std::result::Result<T, SlipError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlipError {
    #[error("over-damped leg: d_bar^2 = {d_sq} >= 4mk = {four_mk}")]
    OverDamped { d_sq: f64, four_mk: f64 },
    #[error("invalid slider-crank geometry: {0}")]
    GeometryInvalid(String),
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("invalid crank angle: {0}")]
    InvalidAngle(String),
    #[error("no touchdown: apex height {y_a} m is not above touchdown height {y_td} m")]
    NoTouchdown { y_a: f64, y_td: f64 },
    #[error("no bottom event: touchdown velocity {ydot_td} m/s is not compressing")]
    NoBottom { ydot_td: f64 },
    #[error("no liftoff: {0}")]
    NoLiftoff(String),
    #[error("stance stuck: no liftoff within {max_time} s")]
    StanceStuck { max_time: f64 },
    #[error("integration became non-finite at t = {t} s")]
    StepUnstable { t: f64 },
    #[error("degenerate Newton step: |dh/dt| = {hdot:e} at t = {t} s")]
    DegenerateNewton { t: f64, hdot: f64 },
    #[error("crank schedule undefined at t = {0} s")]
    ScheduleUndefined(f64),
    #[error("return map could not be evaluated anywhere in [{lo}, {hi}]")]
    MapUnevaluable { lo: f64, hi: f64 },
    #[error("stride {stride} from apex {y_a} m")]
    AtStride {
        stride: usize,
        y_a: f64,
        source: Box<SlipError>,
    },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

impl SlipError {
    /// Variant name, for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            SlipError::OverDamped { .. } => "OverDamped",
            SlipError::GeometryInvalid(_) => "GeometryInvalid",
            SlipError::NonPositive { .. } => "NonPositive",
            SlipError::InvalidAngle(_) => "InvalidAngle",
            SlipError::NoTouchdown { .. } => "NoTouchdown",
            SlipError::NoBottom { .. } => "NoBottom",
            SlipError::NoLiftoff(_) => "NoLiftoff",
            SlipError::StanceStuck { .. } => "StanceStuck",
            SlipError::StepUnstable { .. } => "StepUnstable",
            SlipError::DegenerateNewton { .. } => "DegenerateNewton",
            SlipError::ScheduleUndefined(_) => "ScheduleUndefined",
            SlipError::MapUnevaluable { .. } => "MapUnevaluable",
            SlipError::AtStride { source, .. } => source.kind(),
            SlipError::ConfigInvalid(_) => "ConfigInvalid",
            SlipError::Csv(_) => "Csv",
            SlipError::Io(_) => "Io",
        }
    }
}

impl From<csv::Error> for SlipError {
    fn from(e: csv::Error) -> Self {
        SlipError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for SlipError {
    fn from(e: std::io::Error) -> Self {
        SlipError::Io(e.to_string())
    }
}
