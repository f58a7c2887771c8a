use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("balls {i} and {j} overlap: center distance {dist} below {min}")]
    Overlap { i: usize, j: usize, dist: f64, min: f64 },

    /// Two distinct pairs are due to collide within the simultaneity guard;
    /// the run is aborted rather than resolved in an arbitrary order.
    #[error(
        "near-simultaneous collisions: pair ({i1},{j1}) at t={t1} and pair ({i2},{j2}) at t={t2}"
    )]
    Simultaneity { i1: usize, j1: usize, t1: f64, i2: usize, j2: usize, t2: f64 },

    #[error("zero kinetic energy after momentum removal; frame cannot be normalized")]
    ZeroEnergy,

    #[error("balls {i} and {j} are not in contact: center distance {dist}")]
    NonContact { i: usize, j: usize, dist: f64 },

    #[error("balls {i} and {j} are not approaching: radial closing speed {radial}")]
    NonApproaching { i: usize, j: usize, radial: f64 },

    #[error("time {t} outside the covered span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },

    #[error("log tail is not certified free-flight ({side})")]
    UncertifiedTail { side: &'static str },

    #[error("subfamily ball {inside} collides with outside ball {outside} at t={t}")]
    ExternalCollision { inside: usize, outside: usize, t: f64 },

    #[error("event budget {budget} exhausted before free flight")]
    BudgetExceeded { budget: usize },

    #[error("proximity graph connected at t={t} with gap threshold {beta}; contradicts the chain bound")]
    ConnectedProximityGraph { t: f64, beta: f64 },

    #[error("could not place {n} balls (box side {side}) after {attempts} attempts")]
    InfeasiblePacking { n: usize, side: f64, attempts: usize },

    #[error("branching depth {depth} exceeds limit {limit}")]
    DepthExceeded { depth: usize, limit: usize },

    #[error("{0} collision(s) not covered by any leaf interval or endpoint bucket")]
    CoverageViolation(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid log: {0}")]
    InvalidLog(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
