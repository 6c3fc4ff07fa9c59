use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the perception stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent configuration or mismatched inputs (e.g. a depth frame
    /// whose grid does not match the camera model).
    #[error("configuration error: {0}")]
    Config(String),

    /// Not enough data to run an estimator (RANSAC with < 3 points, HMM
    /// estimation with no labeled pairs, ...).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// RANSAC could not find a plane supported by enough inliers.
    #[error("no plane found: best inlier ratio {best_ratio:.3} below {min_ratio:.3}")]
    NoPlaneFound { best_ratio: f64, min_ratio: f64 },

    /// A metric box cannot be projected because the center is too close to
    /// (or behind) the camera.
    #[error("degenerate projection: z = {z:.3} m is below the minimum depth {min_depth:.3} m")]
    DegenerateProjection { z: f64, min_depth: f64 },

    /// A projected box lies entirely outside the image.
    #[error("projected box lies outside the image")]
    NothingVisible,

    /// A matrix that must be invertible was (numerically) singular.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An HMM update produced an all-zero unnormalized belief.
    #[error("degenerate model: belief update produced all-zero mass")]
    ModelDegenerate,

    /// A scorer could not produce scores for a frame.
    #[error("scorer error: {0}")]
    Scorer(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
