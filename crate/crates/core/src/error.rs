use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 3 nodes per axis, got {0}")]
    GridTooSmall(usize),
    #[error("band width {band_width} leaves no interior nodes on a {n}-node axis")]
    BandTooWide { n: usize, band_width: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("node {0} is not an interior node")]
    NotInterior(usize),
    #[error("stencil at node {node} in direction {direction:?} leaves the lattice")]
    StencilOutside { node: usize, direction: [i32; 3] },
    #[error("negative discriminant {value:e} at node {node}")]
    NegativeDiscriminant { node: usize, value: f64 },
    #[error("stencil width must be in 1..=6, got {0}")]
    StencilWidth(usize),
    #[error("linear system is singular or too ill-conditioned (residual {residual:e}, target {target:e})")]
    SingularSystem { residual: f64, target: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("{method} solver did not converge: {reason}")]
    NotConverged { method: &'static str, reason: String },
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("problem `{name}`: |S2[u] - f| = {residual:e} at {point:?}")]
    ProblemMismatch { name: String, point: [f64; 3], residual: f64 },
    #[error("observed order needs positive errors and increasing grid sizes")]
    InvalidOrderInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
}
