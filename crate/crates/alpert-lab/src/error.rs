use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("depth must be positive, got {0}")]
    Depth(u32),
    #[error("shift component {value} outside [0, {limit})")]
    Shift { value: i64, limit: i64 },
    #[error("power exponent {0} is not integrable (needs a > -1)")]
    NonIntegrable(f64),
    #[error("table entry {index} is negative ({value})")]
    NegativeDensity { index: usize, value: f64 },
    #[error("table has {got} entries, expected {expected}")]
    TableLength { got: usize, expected: usize },
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("cube at depth {depth} {coords:?} has zero mass")]
    DegenerateCube { depth: u32, coords: [i64; 2] },
    #[error("cascade factor range [{lo}, {hi}] must lie inside (0, 1)")]
    CascadeRange { lo: f64, hi: f64 },
    #[error("grids or measures do not match: {0}")]
    Mismatch(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("truncation radius {delta} is below resolution (needs at least {min})")]
    Resolution { delta: f64, min: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("resolution cap exceeded: depth {depth} > cap {cap}")]
    DepthCap { depth: u32, cap: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
