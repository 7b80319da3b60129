//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the reconstruction pipeline and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument fell outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two gridded inputs that must share a resolution do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An instance cannot be processed (too few points, zero-extent box).
    /// Callers skip the instance rather than aborting the scene.
    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    /// The scale/shift normal equations are rank deficient.
    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    /// A manifest or one of its referenced files failed validation.
    /// The message carries the offending field path.
    #[error("ingest error at {path}: {message}")]
    Ingest { path: String, message: String },

    /// A completion hook failed; carries the subprocess diagnostics.
    #[error("completion hook failed: {0}")]
    Completion(String),

    /// A reconstruction hook produced no mesh or an invalid one.
    #[error("reconstruction hook failed: {0}")]
    Reconstruction(String),

    /// Too few depth correspondences for RANSAC; the caller should fall
    /// back to the bounding-box extent ratio and flag the instance.
    #[error("sparse correspondences: {found} pairs found, {needed} required")]
    SparseCorrespondences { found: usize, needed: usize },

    /// Background training produced a non-finite loss.
    #[error("background fit diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    /// The scene contains no stuff pixels; background fitting is skipped.
    #[error("no background: stuff mask is empty")]
    NoBackground,

    /// Synthetic scene generation could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),

    /// Amodal pair composition could not reach the requested occlusion.
    #[error("composition error: {0}")]
    Composition(String),

    /// A mesh has no sampleable area or violates basic mesh invariants.
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    /// File parsing failed (PFM, OBJ, PLY, field blob).
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
