use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(
        "off-map: SDV is {distance:.2} m from the nearest lane centerline (limit {limit:.2} m)"
    )]
    OffMap { distance: f64, limit: f64 },

    #[error("frenet-singular: lateral offset {d:.4} m reaches the path's center of curvature (kappa {kappa:.5})")]
    FrenetSingular { d: f64, kappa: f64 },

    #[error("ambiguous projection: foot points at s={s1:.3} and s={s2:.3} are equally close")]
    AmbiguousProjection { s1: f64, s2: f64 },

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("singular polynomial fit: {0}")]
    SingularFit(String),

    #[error("no-feasible-candidate: every sampled trajectory was pruned")]
    NoFeasibleCandidate,

    #[error("numerical-failure: {0}")]
    NumericalFailure(String),

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown lane id '{0}'")]
    UnknownLane(String),

    #[error("weight registry mismatch: {0}")]
    Registry(String),

    #[error("parse error in {origin} at line {line}, column {column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = PlanError> = std::result::Result<T, E>;
