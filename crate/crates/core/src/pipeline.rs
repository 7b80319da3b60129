//! Per-instance processing: reproject instance pixels into the normalized
//! crop, run completion and reconstruction hooks, estimate the alignment
//! scale by RANSAC against the crop depth, and place the reconstructed
//! mesh in view space.
//!
//! Reconstruction hooks return meshes in the virtual camera frame, matching
//! the crop's projection up to one unknown uniform scale about the camera
//! center (the only degree of freedom projection cannot fix).

use std::path::{Path, PathBuf};
use std::process::Command;

use image::RgbImage;
use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{
    fit_virtual_camera, object_to_view, unproject, CameraIntrinsics, RigidPose, VirtualCamera,
};
use crate::error::{Error, Result};
use crate::img::{self, NEUTRAL};
use crate::mesh::{read_mesh, TriangleMesh};
use crate::scene::{DepthMap, EntityMask, InstanceRecord};

/// Splat footprint widens to 3x3 above this source-to-crop magnification.
const WIDE_SPLAT_MAGNIFICATION: f64 = 1.5;

/// An instance rendered into the normalized crop camera.
#[derive(Debug, Clone)]
pub struct NormalizedCrop {
    pub rgb: RgbImage,
    /// Object mask: splatted pixels, or the amodal mask after completion.
    pub mask: EntityMask,
    /// Depth in normalized-space units, valid where points were splatted.
    pub depth: DepthMap,
    pub camera: VirtualCamera,
}

/// How the virtual camera is chosen during reprojection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprojectionMode {
    /// Camera fitted toward the original viewpoint (the full method).
    Fitted,
    /// Naive centered camera looking down +z of the normalized frame,
    /// ignoring the actual view direction (the no-reprojection ablation).
    NaiveFrontal,
}

/// Splats the instance's unprojected pixels into the normalized crop with
/// z-buffering. Untouched pixels hold the neutral gray, no depth, and stay
/// outside the crop mask.
pub fn reproject_instance(
    inst: &InstanceRecord,
    image: &RgbImage,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    crop_res: u32,
    mode: ReprojectionMode,
) -> Result<NormalizedCrop> {
    let cloud = unproject(depth, intr, Some(&inst.mask))?;
    if cloud.len() < 4 {
        return Err(Error::DegenerateInstance(format!(
            "instance '{}' has {} valid depth pixels, need at least 4",
            inst.id,
            cloud.len()
        )));
    }
    let mut camera = fit_virtual_camera(&cloud, crop_res)?;
    if mode == ReprojectionMode::NaiveFrontal {
        camera.pose = RigidPose::look_at(
            Point3::new(0.0, 0.0, -crate::camera::VIRTUAL_CAMERA_DISTANCE),
            Point3::origin(),
        )?;
    }

    let mut rgb = img::neutral_image(crop_res, crop_res);
    let mut crop_depth = DepthMap::invalid(crop_res, crop_res);
    let mut mask = EntityMask::empty(crop_res, crop_res);
    let mut zbuf = vec![f64::INFINITY; (crop_res * crop_res) as usize];

    let pixel_indices = cloud.pixel_indices.as_ref().expect("unproject sets indices");
    for (p, &(su, sv)) in cloud.points.iter().zip(pixel_indices.iter()) {
        let q = camera.view_to_camera(p);
        if q.z <= 0.0 {
            continue;
        }
        let u = camera.intrinsics.fx * q.x / q.z + camera.intrinsics.cx;
        let v = camera.intrinsics.fy * q.y / q.z + camera.intrinsics.cy;
        let color = *image.get_pixel(su, sv);
        // Projected size of a unit length at the point, crop vs source.
        let src_scale = intr.fx / p.z;
        let crop_scale = camera.normalization.scale * camera.intrinsics.fx / q.z;
        let footprint = if crop_scale / src_scale > WIDE_SPLAT_MAGNIFICATION {
            1i64
        } else {
            0
        };
        let (cu, cv) = (u.floor() as i64, v.floor() as i64);
        for dv in -footprint..=footprint {
            for du in -footprint..=footprint {
                let (x, y) = (cu + du, cv + dv);
                if x < 0 || y < 0 || x >= crop_res as i64 || y >= crop_res as i64 {
                    continue;
                }
                let (x, y) = (x as u32, y as u32);
                let zi = (y * crop_res + x) as usize;
                if q.z < zbuf[zi] {
                    zbuf[zi] = q.z;
                    rgb.put_pixel(x, y, color);
                    crop_depth.set(x, y, q.z);
                    mask.set(x, y, true);
                }
            }
        }
    }

    Ok(NormalizedCrop {
        rgb,
        mask,
        depth: crop_depth,
        camera,
    })
}

/// Completion hook, resolved per instance.
#[derive(Debug, Clone)]
pub enum CompletionHook {
    /// Pass the crop through unchanged.
    Identity,
    /// Substitute a stored complete view of the object.
    OracleFile { path: PathBuf },
    /// Pipe the crop to an external process (see `run_external`).
    ExternalCommand { command: Vec<String>, output: String },
}

/// Reconstruction hook, resolved per instance.
#[derive(Debug, Clone)]
pub enum ReconstructionHook {
    /// Read the instance's reconstruction mesh from disk, optionally
    /// culling faces invisible in the crop mask (emulating a reconstructor
    /// that only recovers what the crop shows).
    OracleMesh { path: PathBuf, cull_to_mask: bool },
    ExternalCommand { command: Vec<String>, output: String },
}

/// Camera block of the JSON sidecar passed to external hooks.
#[derive(Serialize, Deserialize)]
struct HookSidecar {
    label: String,
    crop_res: u32,
    neutral: u8,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    normalization_scale: f64,
    normalization_translation: [f64; 3],
    camera_rotation: [[f64; 3]; 3],
    camera_translation: [f64; 3],
}

fn write_hook_inputs(dir: &Path, crop: &NormalizedCrop, label: &str) -> Result<()> {
    img::save_rgb(&dir.join("crop.png"), &crop.rgb)?;
    crate::pfm::write_pfm(&dir.join("crop_depth.pfm"), &crop.depth)?;
    let pose = crate::scene::ManifestPose::from_pose(&crop.camera.pose);
    let sidecar = HookSidecar {
        label: label.to_string(),
        crop_res: crop.rgb.width(),
        neutral: NEUTRAL,
        fx: crop.camera.intrinsics.fx,
        fy: crop.camera.intrinsics.fy,
        cx: crop.camera.intrinsics.cx,
        cy: crop.camera.intrinsics.cy,
        normalization_scale: crop.camera.normalization.scale,
        normalization_translation: [
            crop.camera.normalization.translation.x,
            crop.camera.normalization.translation.y,
            crop.camera.normalization.translation.z,
        ],
        camera_rotation: pose.rotation,
        camera_translation: pose.translation,
    };
    std::fs::write(
        dir.join("crop.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Runs an external hook: inputs are written to a fresh temp dir, the
/// command is invoked with the dir as its last argument, and the declared
/// output file is read back. A nonzero exit is an error carrying the
/// process diagnostics.
fn run_external(
    crop: &NormalizedCrop,
    label: &str,
    command: &[String],
    output: &str,
) -> Result<PathBuf> {
    if command.is_empty() {
        return Err(Error::Completion("empty hook command".to_string()));
    }
    let dir = std::env::temp_dir().join(format!(
        "scenekit-hook-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    ));
    std::fs::create_dir_all(&dir)?;
    write_hook_inputs(&dir, crop, label)?;
    let result = Command::new(&command[0])
        .args(&command[1..])
        .arg(&dir)
        .output()
        .map_err(|e| Error::Completion(format!("failed to spawn '{}': {e}", command[0])))?;
    if !result.status.success() {
        return Err(Error::Completion(format!(
            "'{}' exited with {}: {}",
            command[0],
            result.status,
            String::from_utf8_lossy(&result.stderr)
        )));
    }
    Ok(dir.join(output))
}

/// Recomputes the amodal mask of a completed crop: every pixel that
/// differs from the neutral value beyond the tolerance on any channel.
fn content_mask(rgb: &RgbImage) -> EntityMask {
    let mut mask = EntityMask::empty(rgb.width(), rgb.height());
    for (u, v, px) in rgb.enumerate_pixels() {
        if img::is_content(px) {
            mask.set(u, v, true);
        }
    }
    mask
}

/// Applies the completion hook. Identity returns the crop unchanged;
/// otherwise the RGB is substituted and the amodal mask recomputed, while
/// the splatted depth is kept (completion does not invent depth).
pub fn complete_crop(
    crop: &NormalizedCrop,
    label: &str,
    hook: &CompletionHook,
) -> Result<NormalizedCrop> {
    let rgb = match hook {
        CompletionHook::Identity => return Ok(crop.clone()),
        CompletionHook::OracleFile { path } => img::load_rgb(path)
            .map_err(|e| Error::Completion(format!("oracle file: {e}")))?,
        CompletionHook::ExternalCommand { command, output } => {
            let path = run_external(crop, label, command, output)?;
            img::load_rgb(&path)
                .map_err(|e| Error::Completion(format!("hook output: {e}")))?
        }
    };
    if rgb.dimensions() != crop.rgb.dimensions() {
        return Err(Error::Completion(format!(
            "completed view is {}x{}, expected {}x{}",
            rgb.width(),
            rgb.height(),
            crop.rgb.width(),
            crop.rgb.height()
        )));
    }
    let mask = content_mask(&rgb);
    Ok(NormalizedCrop {
        rgb,
        mask,
        depth: crop.depth.clone(),
        camera: crop.camera,
    })
}

fn validate_recon_mesh(mesh: TriangleMesh) -> Result<TriangleMesh> {
    if mesh.faces.is_empty() {
        return Err(Error::Reconstruction(
            "hook produced a mesh with no faces".to_string(),
        ));
    }
    mesh.validate()
        .map_err(|e| Error::Reconstruction(e.to_string()))?;
    Ok(mesh)
}

/// Mask dilated by `radius` pixels (Chebyshev metric).
fn dilate(mask: &EntityMask, radius: u32) -> EntityMask {
    let mut out = EntityMask::empty(mask.width, mask.height);
    let r = radius as i64;
    for v in 0..mask.height {
        for u in 0..mask.width {
            if !mask.get(u, v) {
                continue;
            }
            for dv in -r..=r {
                for du in -r..=r {
                    let (x, y) = (u as i64 + du, v as i64 + dv);
                    if x >= 0 && y >= 0 && (x as u32) < mask.width && (y as u32) < mask.height {
                        out.set(x as u32, y as u32, true);
                    }
                }
            }
        }
    }
    out
}

/// Runs the reconstruction hook and validates its mesh. The mesh lives in
/// the virtual camera frame at an arbitrary scale.
pub fn reconstruct_object(
    crop: &NormalizedCrop,
    label: &str,
    hook: &ReconstructionHook,
) -> Result<TriangleMesh> {
    match hook {
        ReconstructionHook::OracleMesh { path, cull_to_mask } => {
            let mesh = read_mesh(path).map_err(|e| Error::Reconstruction(e.to_string()))?;
            let mesh = validate_recon_mesh(mesh)?;
            if !cull_to_mask {
                return Ok(mesh);
            }
            let visible = dilate(&crop.mask, 2);
            let intr = &crop.camera.intrinsics;
            let faces: Vec<[u32; 3]> = mesh
                .faces
                .iter()
                .filter(|f| {
                    let c = (mesh.vertices[f[0] as usize].coords
                        + mesh.vertices[f[1] as usize].coords
                        + mesh.vertices[f[2] as usize].coords)
                        / 3.0;
                    if c.z <= 0.0 {
                        return false;
                    }
                    let u = intr.fx * c.x / c.z + intr.cx;
                    let v = intr.fy * c.y / c.z + intr.cy;
                    u >= 0.0
                        && v >= 0.0
                        && (u as u32) < visible.width
                        && (v as u32) < visible.height
                        && visible.get(u as u32, v as u32)
                })
                .copied()
                .collect();
            if faces.is_empty() {
                return Err(Error::Reconstruction(
                    "no reconstructed face projects inside the crop mask".to_string(),
                ));
            }
            Ok(TriangleMesh {
                vertices: mesh.vertices,
                faces,
                vertex_colors: mesh.vertex_colors,
            })
        }
        ReconstructionHook::ExternalCommand { command, output } => {
            let path = run_external(crop, label, command, output)
                .map_err(|e| Error::Reconstruction(e.to_string()))?;
            validate_recon_mesh(read_mesh(&path).map_err(|e| Error::Reconstruction(e.to_string()))?)
        }
    }
}

/// RANSAC parameters for the 1-DOF scale alignment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RansacParams {
    pub iters: usize,
    /// Inlier tolerance in normalized units, along each pair's own ray.
    pub tol: f64,
    pub min_pairs: usize,
    /// The depth renderer casts rays through every `render_stride`-th crop
    /// pixel center, so correspondences share exact rays with the crop.
    pub render_stride: u32,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iters: 256,
            tol: 0.05,
            min_pairs: 20,
            render_stride: 3,
        }
    }
}

/// Result of the scale alignment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub scale: f64,
    pub inlier_fraction: f64,
    pub pairs: usize,
}

/// 1-point RANSAC over (reconstruction distance, crop distance) pairs:
/// each candidate is the ratio of one pair; the winner's inliers are
/// refit by least squares `s = sum(r c) / sum(r^2)`.
pub fn ransac_scale(
    pairs: &[(f64, f64)],
    seed: u64,
    params: &RansacParams,
) -> Result<ScaleEstimate> {
    if pairs.len() < params.min_pairs {
        return Err(Error::SparseCorrespondences {
            found: pairs.len(),
            needed: params.min_pairs,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_count = 0usize;
    let mut best_candidate = f64::NAN;
    for _ in 0..params.iters {
        let (r, c) = pairs[rng.random_range(0..pairs.len())];
        if r.abs() < 1e-12 {
            continue;
        }
        let s = c / r;
        let count = pairs
            .iter()
            .filter(|(rj, cj)| (s * rj - cj).abs() <= params.tol)
            .count();
        if count > best_count {
            best_count = count;
            best_candidate = s;
        }
    }
    if best_count == 0 {
        return Err(Error::SparseCorrespondences {
            found: 0,
            needed: params.min_pairs,
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, c) in pairs {
        if (best_candidate * r - c).abs() <= params.tol {
            num += r * c;
            den += r * r;
        }
    }
    if den == 0.0 {
        return Err(Error::SparseCorrespondences {
            found: 0,
            needed: params.min_pairs,
        });
    }
    Ok(ScaleEstimate {
        scale: num / den,
        inlier_fraction: best_count as f64 / pairs.len() as f64,
        pairs: pairs.len(),
    })
}

/// Ray-casts the mesh's depth in the virtual camera through every
/// `stride`-th crop pixel center. Returns (u, v, depth) per hit pixel in
/// row-major order; rows are traced in parallel.
pub fn render_mesh_depth(
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    stride: u32,
) -> Vec<(u32, u32, f64)> {
    let stride = stride.max(1);
    let Some(bbox) = mesh.aabb() else {
        return Vec::new();
    };
    let tris: Vec<[Point3<f64>; 3]> = mesh
        .faces
        .iter()
        .map(|f| {
            [
                mesh.vertices[f[0] as usize],
                mesh.vertices[f[1] as usize],
                mesh.vertices[f[2] as usize],
            ]
        })
        .collect();

    let rows: Vec<Vec<(u32, u32, f64)>> = (0..intr.height)
        .step_by(stride as usize)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|v| {
            let mut row = Vec::new();
            for u in (0..intr.width).step_by(stride as usize) {
                let dir = intr.pixel_ray(u, v);
                if !ray_hits_aabb(&bbox, &dir) {
                    continue;
                }
                let mut nearest = f64::INFINITY;
                for tri in &tris {
                    if let Some(t) = ray_triangle(&dir, tri) {
                        if t < nearest {
                            nearest = t;
                        }
                    }
                }
                if nearest.is_finite() {
                    row.push((u, v, nearest));
                }
            }
            row
        })
        .collect();
    rows.into_iter().flatten().collect()
}

/// Slab test for a ray from the origin.
fn ray_hits_aabb(bbox: &crate::bounds::Aabb, dir: &Vector3<f64>) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if 0.0 < bbox.min[a] || 0.0 > bbox.max[a] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (lo, hi) = if inv >= 0.0 {
            (bbox.min[a] * inv, bbox.max[a] * inv)
        } else {
            (bbox.max[a] * inv, bbox.min[a] * inv)
        };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Moller-Trumbore for a ray from the origin; returns the ray parameter.
fn ray_triangle(dir: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> Option<f64> {
    const EPS: f64 = 1e-14;
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = -tri[0].coords;
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}

/// Builds ray-exact correspondences between the crop depth and the
/// rendered reconstruction depth, then estimates the scale by RANSAC.
/// Distances are measured from the camera center along each pair's ray.
pub fn align_scale_ransac(
    recon: &TriangleMesh,
    crop: &NormalizedCrop,
    seed: u64,
    params: &RansacParams,
) -> Result<ScaleEstimate> {
    let rendered = render_mesh_depth(recon, &crop.camera.intrinsics, params.render_stride);
    let mut pairs = Vec::with_capacity(rendered.len());
    for (u, v, t) in rendered {
        if let Some(d) = crop.depth.get(u, v) {
            let ray_len = crop.camera.intrinsics.pixel_ray(u, v).norm();
            pairs.push((t * ray_len, d * ray_len));
        }
    }
    ransac_scale(&pairs, seed, params)
}

/// Places the reconstruction into view space with the recovered scale.
pub fn place_instance(
    recon: &TriangleMesh,
    scale: f64,
    camera: &VirtualCamera,
) -> Result<TriangleMesh> {
    object_to_view(recon, &camera.normalization, &camera.pose, scale)
}

// ---------------------------------------------------------------------------
// Per-instance driver
// ---------------------------------------------------------------------------

/// Hook configuration templates, resolved per instance by the driver.
#[derive(Debug, Clone)]
pub enum CompletionConfig {
    Identity,
    /// `<dir>/<instance_id>.png`.
    OracleDir(PathBuf),
    External { command: Vec<String>, output: String },
}

#[derive(Debug, Clone)]
pub enum ReconstructionConfig {
    /// Use the instance's `recon_mesh` path from the manifest.
    OracleManifest { cull_to_mask: bool },
    External { command: Vec<String>, output: String },
}

/// Parameters of the per-instance pipeline.
#[derive(Debug, Clone)]
pub struct InstanceParams {
    pub crop_res: u32,
    pub mode: ReprojectionMode,
    pub ransac: RansacParams,
    pub seed: u64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            crop_res: crate::camera::DEFAULT_CROP_RES,
            mode: ReprojectionMode::Fitted,
            ransac: RansacParams::default(),
            seed: 0,
        }
    }
}

/// Outcome of one instance: either a placed mesh with its alignment
/// diagnostics, or the reason the instance was skipped.
#[derive(Debug)]
pub struct InstanceOutcome {
    pub id: String,
    pub label: String,
    pub mesh: Option<TriangleMesh>,
    pub scale: Option<f64>,
    pub inlier_fraction: Option<f64>,
    pub correspondence_pairs: usize,
    /// Set when the bounding-box extent ratio replaced the RANSAC scale.
    pub fallback: bool,
    pub skipped: Option<String>,
}

/// Runs reproject -> complete -> reconstruct -> align -> place for one
/// instance. Degenerate instances and hook failures produce a skipped
/// outcome instead of an error; sparse correspondences fall back to the
/// bounding-box extent ratio and are flagged.
pub fn process_instance(
    inst: &InstanceRecord,
    image: &RgbImage,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    completion: &CompletionConfig,
    reconstruction: &ReconstructionConfig,
    params: &InstanceParams,
) -> InstanceOutcome {
    let skipped = |reason: String| InstanceOutcome {
        id: inst.id.clone(),
        label: inst.label.clone(),
        mesh: None,
        scale: None,
        inlier_fraction: None,
        correspondence_pairs: 0,
        fallback: false,
        skipped: Some(reason),
    };

    let crop = match reproject_instance(inst, image, depth, intr, params.crop_res, params.mode) {
        Ok(c) => c,
        Err(e) => return skipped(e.to_string()),
    };

    let completion_hook = match completion {
        CompletionConfig::Identity => CompletionHook::Identity,
        CompletionConfig::OracleDir(dir) => CompletionHook::OracleFile {
            path: dir.join(format!("{}.png", inst.id)),
        },
        CompletionConfig::External { command, output } => CompletionHook::ExternalCommand {
            command: command.clone(),
            output: output.clone(),
        },
    };
    let completed = match complete_crop(&crop, &inst.label, &completion_hook) {
        Ok(c) => c,
        Err(e) => return skipped(e.to_string()),
    };

    let recon_hook = match reconstruction {
        ReconstructionConfig::OracleManifest { cull_to_mask } => {
            let Some(path) = &inst.recon_mesh_path else {
                return skipped(format!(
                    "instance '{}' has no reconstruction mesh in the manifest",
                    inst.id
                ));
            };
            ReconstructionHook::OracleMesh {
                path: path.clone(),
                cull_to_mask: *cull_to_mask,
            }
        }
        ReconstructionConfig::External { command, output } => ReconstructionHook::ExternalCommand {
            command: command.clone(),
            output: output.clone(),
        },
    };
    let recon = match reconstruct_object(&completed, &inst.label, &recon_hook) {
        Ok(m) => m,
        Err(e) => return skipped(e.to_string()),
    };

    let (estimate, fallback) =
        match align_scale_ransac(&recon, &completed, params.seed, &params.ransac) {
            Ok(est) => (est, false),
            Err(Error::SparseCorrespondences { found, .. }) => {
                // The normalized crop geometry has unit longest side.
                let extent = recon.aabb().map_or(1.0, |b| b.longest_side());
                (
                    ScaleEstimate {
                        scale: 1.0 / extent.max(1e-12),
                        inlier_fraction: 0.0,
                        pairs: found,
                    },
                    true,
                )
            }
            Err(e) => return skipped(e.to_string()),
        };

    let placed = match place_instance(&recon, estimate.scale, &completed.camera) {
        Ok(m) => m,
        Err(e) => return skipped(e.to_string()),
    };

    InstanceOutcome {
        id: inst.id.clone(),
        label: inst.label.clone(),
        mesh: Some(placed),
        scale: Some(estimate.scale),
        inlier_fraction: Some(estimate.inlier_fraction),
        correspondence_pairs: estimate.pairs,
        fallback,
        skipped: None,
    }
}
