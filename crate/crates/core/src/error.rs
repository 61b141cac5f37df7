use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: need 1 <= k <= n, got n={n}, k={k}")]
    InvalidProblem { n: usize, k: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("evaluation time {t} is not after the pole time {tau}")]
    PoleNotInPast { t: f64, tau: f64 },

    #[error("time {0} is not positive (minimum admissible time is 1e-12)")]
    NonpositiveTime(f64),

    #[error("time {t} outside the solution domain ({t_min}, {t_max})")]
    OutOfDomain { t: f64, t_min: f64, t_max: f64 },

    #[error("mixture has no kernel components and zero epsilon")]
    EmptySolution,

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("matrix contains non-finite entries")]
    NonFiniteMatrix,

    #[error("bad times: need t1 < t2 inside the domain, got t1={t1}, t2={t2}")]
    BadTimes { t1: f64, t2: f64 },

    #[error("KKT system is singular")]
    SingularKkt,

    #[error("eigenvector degenerate: theta0 and 2*theta0 - eta0 both vanish")]
    DegenerateEigenvector,

    #[error("F is not positive at the smallest sampled sigma {0}")]
    NoPositiveWindow(f64),

    #[error("bad dimension profile: {0}")]
    BadProfile(String),

    #[error("A0 is not symmetric positive definite")]
    NotSpd,

    #[error("block B_{index} is rank deficient (rank {rank}, need {needed})")]
    RankDeficient { index: usize, rank: usize, needed: usize },

    #[error("integrated covariance is singular (condition number {0:e})")]
    SingularCovariance(f64),

    #[error("time step {dt} violates the stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("field lost positivity at time {time} (value {value})")]
    NonpositiveField { time: f64, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
