//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Points or vectors with incompatible dimensions reached an operation.
    #[error("chart mismatch: expected dimension {expected}, got {got}")]
    ChartMismatch { expected: usize, got: usize },

    #[error("point has a non-finite coordinate at index {index}")]
    NonFinitePoint { index: usize },

    #[error("invalid chart: {reason}")]
    InvalidChart { reason: String },

    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },

    /// Tube axis with sigma(p0, p1) = 0 cannot define a tube.
    #[error("lightlike or coincident axis")]
    DegenerateAxis,

    /// Determining set fails the rank precondition for a plane.
    #[error("determining points linearly dependent")]
    DependentDeterminingSet,

    #[error("segment undefined for spacelike legs")]
    SpacelikeSegmentLeg,

    /// Fewer members inside the window than the estimator needs.
    #[error("window underpopulated: {found} members, need at least {needed}")]
    WindowUnderpopulated { found: usize, needed: usize },

    #[error("tube sample too sparse")]
    TubeSampleTooSparse,

    #[error("point not on tube")]
    PointNotOnTube,

    #[error("parallelism undefined")]
    ParallelismUndefined,

    /// Deformed model queried inside its undetermined band. The model leaves
    /// the value there unspecified; refusing beats inventing one.
    #[error("world function undefined in gap")]
    GapUndefined,

    #[error("point not in L2o")]
    PointNotInCutRegion,

    /// Tabulated world function queried at a point that is not in its list.
    #[error("point not tabulated")]
    PointNotTabulated,

    #[error("tabulated sigma invalid: {reason}")]
    TabulatedInvalid { reason: String },

    #[error("geodesic solver failed to converge: residual {residual:e}")]
    SolverDiverged { residual: f64 },

    #[error("conjugate points / degenerate mixed Hessian")]
    DegenerateMixedHessian,

    #[error("root search failed: {reason}")]
    RootSearchFailed { reason: String },

    #[error("seed required for randomized search")]
    SeedRequired,

    #[error("geometry spec invalid: {reason}")]
    GeometrySpec { reason: String },
}
