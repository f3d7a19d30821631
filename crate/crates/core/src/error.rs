use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The call itself is malformed (empty input, wrong arity, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("total internal reflection (critical angle {critical_angle:.6} rad)")]
    TotalInternalReflection { critical_angle: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    /// alpha'(h) vanished: the exit family has no finite meridional caustic.
    #[error("degenerate caustic at h = {h}: alpha' = {alpha_prime:e}")]
    DegenerateCaustic { h: f64, alpha_prime: f64 },

    #[error("exit rays are parallel; no intersection")]
    NoIntersection,

    #[error("mesh error: {0}")]
    Mesh(String),

    /// Curvature integration blew up before the end of the span.
    #[error("focal crossing: curvature blew up near z = {z_blowup}")]
    FocalCrossing { z_blowup: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("wavefront carries no aberration energy")]
    NoAberration,

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("topology change: expected {expected} cusps, found {found}")]
    TopologyChange { expected: usize, found: usize },

    #[error("objective error: {0}")]
    Objective(String),

    /// Descent produced a non-finite objective; carries the last finite iterate.
    #[error("divergence after {iterations} iterations")]
    Divergence { iterations: usize, last_good: Vec<f64> },

    #[error("coefficient vector lies on barrier {index}")]
    OnBarrier { index: usize },

    #[error("Strehl ratio {strehl:e} below saturation floor")]
    Saturation { strehl: f64 },

    /// A correction stage ran out of iterations; carries the trace so far.
    #[error("stalled in stage {stage} after {iterations} iterations")]
    Stalled { stage: String, iterations: usize, trace: Box<crate::corrector::CorrectionTrace> },

    #[error("ill-conditioned Gram matrix (condition number {condition:e})")]
    Conditioning { condition: f64 },

    #[error("config error: {0}")]
    Config(String),
}
