/// Errors shared by all calibration modules.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("point at infinity: {0}")]
    PointAtInfinity(&'static str),
    #[error("degenerate scale: {0}")]
    DegenerateScale(&'static str),
    #[error("matrix not invertible: {0}")]
    NotInvertible(&'static str),
    #[error("insufficient data: need at least {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("no consensus: {0}")]
    NoConsensus(&'static str),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("invalid projective frame: {0}")]
    InvalidFrame(&'static str),
    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),
    #[error("ray parallel to plane")]
    RayParallelToPlane,
    #[error("plane behind camera")]
    PlaneBehindCamera,
    #[error("point behind camera: {0}")]
    BehindCamera(&'static str),
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("invalid initialization: {0}")]
    InvalidInitialization(&'static str),
    #[error("missing fitted plane for board {board} in rig {rig}")]
    MissingPlane { rig: usize, board: usize },
    #[error("empty report")]
    EmptyReport,
    #[error("disconnected network: no path between rigs {0} and {1}")]
    DisconnectedNetwork(usize, usize),
    #[error("empty scene: {0}")]
    EmptyScene(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
