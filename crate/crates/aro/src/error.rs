use thiserror::Error;

#[derive(Debug, Error)]
pub enum AroError {
    #[error("degenerate point cloud: all points identical")]
    DegenerateCloud,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("ray origin outside box")]
    OriginOutsideBox,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),
    #[error("anchor classification failed: ray grazed the surface after {0} retries")]
    GrazingRay(usize),
    #[error("coverage violated: component {0} is adjacent to both inside and outside labels without a surface crossing")]
    CoverageViolated(usize),
    #[error("no observations: every anchor abstained")]
    NoObservations,
    #[error("occupancy value {value} out of [0,1] at grid point ({i}, {j}, {k})")]
    OccupancyOutOfRange { value: f64, i: usize, j: usize, k: usize },
    #[error("training diverged: loss is not finite at epoch {0}")]
    Diverged(usize),
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AroError>;
