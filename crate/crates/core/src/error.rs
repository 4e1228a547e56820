//! Error taxonomy shared by every module in the crate.

/// Errors produced anywhere in the planning/tracking pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// A graph edge, weight list, or vertex id failed validation.
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    /// An edge weight that must be strictly positive was not.
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    /// A scenario or formation configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// Matrix input contained NaN or infinite entries.
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    /// The boundary matrix of the trajectory solver is numerically singular.
    #[error("planner singular: H(t_f) has reciprocal condition {rcond:.3e} (minimum {min_rcond:.3e})")]
    PlannerSingular { rcond: f64, min_rcond: f64 },
    /// The Riccati backward sweep blew up.
    #[error("riccati divergence: |P| = {norm:.3e} at t = {t:.6} s")]
    RiccatiDivergence { t: f64, norm: f64 },
    /// A query time fell outside the planning horizon.
    #[error("time {t} s outside horizon [0, {t_f}] s")]
    OutsideHorizon { t: f64, t_f: f64 },
    /// A pair of vehicles sits exactly on the inner avoidance boundary,
    /// where the penalty function is undefined. Ids are 1-based labels.
    #[error("singularity: pair ({i}, {j}) at distance {dist:.9} m equals the avoidance boundary")]
    Singularity { i: usize, j: usize, dist: f64 },
    /// A pair of vehicles entered the collision region during simulation.
    /// Ids are 1-based labels.
    #[error("collision violation: pair ({i}, {j}) at distance {dist:.6} m < {bound:.6} m at t = {t:.6} s")]
    CollisionViolation {
        t: f64,
        i: usize,
        j: usize,
        dist: f64,
        bound: f64,
    },
    /// Commanded acceleration cancels gravity; thrust direction is undefined.
    #[error("flatness singular: commanded acceleration is in free fall (|a + g e_z| = {norm:.3e})")]
    FlatnessSingular { norm: f64 },
    /// Thrust axis is parallel to the heading reference; attitude is undefined.
    #[error("attitude singular: thrust axis parallel to heading vector (pitch near +/-90 deg)")]
    AttitudeSingular,
    /// Generic numerical failure with context.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
