//! Core of a modular single-view 3D scene reconstruction pipeline.
//!
//! The crate covers everything around the neural stages: depth
//! unprojection into a view-space layout guide, per-instance reprojection
//! into a normalized crop camera, RANSAC scale alignment of externally
//! reconstructed meshes, background SDF/color fitting with a small MLP,
//! frustum-grid sampling and marching-cubes extraction, scene assembly,
//! Chamfer/F-Score evaluation, and a synthetic primitive world that
//! provides exact ground truth for end-to-end tests. Neural stages plug in
//! through file-based hooks (completion views, reconstruction meshes)
//! referenced from a JSON scene manifest.

pub mod bounds;
pub mod camera;
pub mod cloud;
pub mod error;
pub mod field;
pub mod img;
pub mod mesh;
pub mod metrics;
pub mod pfm;
pub mod pipeline;
pub mod recon;
pub mod scene;
pub mod synth;

pub use bounds::Aabb;
pub use camera::{CameraIntrinsics, RigidPose, SimilarityTransform, VirtualCamera};
pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use mesh::{MergedScene, ScalarGrid, TriangleMesh};
pub use scene::{DepthMap, EntityCategory, EntityMask, InstanceRecord, SceneManifest};
