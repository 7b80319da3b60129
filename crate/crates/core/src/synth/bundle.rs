//! Emits a synthetic scene as a complete manifest bundle the pipeline can
//! consume unchanged: image, depth, masks, per-instance completion views
//! and perturbed reconstruction meshes, and ground-truth geometry.
//!
//! All meshes are written in view (camera) coordinates. Reconstruction
//! meshes live in each instance's virtual camera frame, perturbed by a
//! seeded scale about the camera center plus optional vertex jitter, so
//! the pipeline's scale alignment has real work to do.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{intersect, mesh_of_primitive, raycast_render, render_subset};
use super::{perturb_reconstruction, frustum_ground_quad, PerturbRanges, PrimitiveScene};
use crate::camera::{fit_virtual_camera, unproject, VirtualCamera};
use crate::error::{Error, Result};
use crate::img::{self, NEUTRAL};
use crate::mesh::{merge_scene, write_obj, write_obj_scene, TriangleMesh};
use crate::pfm::write_pfm;
use crate::scene::{
    DepthMap, EntityCategory, ManifestCamera, ManifestFile, ManifestInstance, ManifestPose,
    MANIFEST_SCHEMA_VERSION,
};

#[derive(Debug, Clone)]
pub struct BundleOptions {
    pub tessellation: usize,
    pub crop_res: u32,
    /// Perturbation applied to reconstruction meshes in the virtual camera
    /// frame (scale is about the camera center).
    pub perturb: PerturbRanges,
    pub seed: u64,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            tessellation: 48,
            crop_res: crate::camera::DEFAULT_CROP_RES,
            perturb: PerturbRanges {
                scale: (0.2, 5.0),
                rotation_max_rad: 0.0,
                translation_max: 0.0,
                noise: 0.0,
            },
            seed: 0,
        }
    }
}

/// Ground-truth fixture data recorded next to the bundle for tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleInstanceInfo {
    pub id: String,
    pub label: String,
    /// Scale applied to the reconstruction mesh; the pipeline should
    /// recover its inverse.
    pub true_scale: f64,
    /// Fraction of the unoccluded silhouette hidden by other primitives.
    pub occluded_fraction: f64,
    pub visible_pixels: usize,
    /// Too few valid pixels to process; no reconstruction was emitted.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleInfo {
    pub seed: u64,
    /// Diagonal of the ground-truth scene bounding box, view units.
    pub scene_diameter: f64,
    pub instances: Vec<BundleInstanceInfo>,
    pub manifest: String,
    pub gt_scene: String,
}

/// Renders the full view of one primitive from an instance's virtual
/// camera: the completion oracle fixture.
fn render_complete_view(
    scene: &PrimitiveScene,
    prim_index: usize,
    vcam: &VirtualCamera,
) -> image::RgbImage {
    let res = vcam.intrinsics.width;
    let to_light = -scene.light_dir.normalize();
    let origin_n = vcam.pose.camera_center();
    let rot_nt = vcam.pose.rotation.transpose();
    let origin_view = vcam.normalization.apply_inverse(&origin_n);
    let origin_w = scene.camera_pose.inverse_transform_point(&origin_view);
    let cam_rot_t = scene.camera_pose.rotation.transpose();
    let prim = &scene.primitives[prim_index];

    let rows: Vec<Vec<[u8; 3]>> = (0..res)
        .into_par_iter()
        .map(|v| {
            let mut row = vec![[NEUTRAL; 3]; res as usize];
            for u in 0..res {
                let dir_cam = vcam.intrinsics.pixel_ray(u, v);
                let dir_n = rot_nt * dir_cam;
                let dir_view = dir_n / vcam.normalization.scale;
                let dir_w = cam_rot_t * dir_view;
                if let Some(hit) = intersect(prim, &origin_w, &dir_w) {
                    let lambert = hit.normal.dot(&to_light).max(0.0);
                    let k = 0.35 + 0.65 * lambert;
                    row[u as usize] =
                        prim.albedo.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8);
                }
            }
            row
        })
        .collect();
    let mut img = image::RgbImage::new(res, res);
    for (v, row) in rows.into_iter().enumerate() {
        for (u, px) in row.into_iter().enumerate() {
            img.put_pixel(u as u32, v as u32, image::Rgb(px));
        }
    }
    img
}

/// Ground-truth meshes in view coordinates: analytic tessellations for
/// things, and for stuff planes the camera-footprint quad (the region the
/// reconstruction can actually cover).
pub fn ground_truth_components(
    scene: &PrimitiveScene,
    tessellation: usize,
) -> Result<Vec<(String, TriangleMesh)>> {
    let mut parts = Vec::new();
    for prim in &scene.primitives {
        let world_mesh = match (&prim.kind, prim.category) {
            (super::PrimitiveKind::Plane { .. }, EntityCategory::Stuff) => {
                let quad = frustum_ground_quad(&scene.camera, &scene.camera_pose)
                    .ok_or_else(|| {
                        Error::Generation("camera footprint does not cover the ground".to_string())
                    })?;
                TriangleMesh {
                    vertices: quad.to_vec(),
                    faces: vec![[0, 1, 2], [0, 2, 3]],
                    vertex_colors: None,
                }
            }
            _ => mesh_of_primitive(prim, tessellation)?,
        };
        let view_mesh = world_mesh.map_vertices(|p| scene.camera_pose.transform_point(p));
        parts.push((prim.id.clone(), view_mesh));
    }
    Ok(parts)
}

fn derive_seed(base: u64, salt: u64) -> u64 {
    base.wrapping_add(salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Writes the full bundle into `dir` and returns the fixture info.
pub fn write_bundle(scene: &PrimitiveScene, dir: &Path, opts: &BundleOptions) -> Result<BundleInfo> {
    std::fs::create_dir_all(dir)?;
    for sub in ["masks", "complete", "recon", "gt"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }

    let render = raycast_render(scene);
    img::save_rgb(&dir.join("image.png"), &render.rgb)?;

    // Quantize depth through f32 before any geometry is derived from it,
    // so the emitted PFM and the transforms computed here agree exactly
    // with what the pipeline will reload.
    let mut depth = DepthMap::invalid(scene.camera.width, scene.camera.height);
    for (u, v, d) in render.depth.iter_valid() {
        depth.set(u, v, d as f32 as f64);
    }
    write_pfm(&dir.join("depth.pfm"), &depth)?;

    let gt_parts = ground_truth_components(scene, opts.tessellation)?;
    for (id, mesh) in &gt_parts {
        write_obj(&dir.join("gt").join(format!("{id}.obj")), mesh)?;
    }
    let gt_scene = merge_scene(&gt_parts);
    write_obj_scene(&dir.join("gt").join("scene.obj"), &gt_scene)?;
    std::fs::write(
        dir.join("gt").join("components.json"),
        serde_json::to_string_pretty(&gt_scene.components)?,
    )?;
    let scene_diameter = gt_scene.mesh.aabb().map_or(0.0, |b| b.diagonal());

    let mut instances_doc = Vec::new();
    let mut infos = Vec::new();
    for (pi, prim) in scene.primitives.iter().enumerate() {
        let mask = render.mask_of(scene, pi);
        let mask_rel = format!("masks/{}.png", prim.id);
        mask.save_png(&dir.join(&mask_rel))?;

        let mut doc = ManifestInstance {
            id: prim.id.clone(),
            label: prim.label.clone(),
            category: prim.category,
            mask: mask_rel,
            crop_rgb: None,
            crop_depth: None,
            recon_mesh: None,
        };

        if prim.category == EntityCategory::Thing {
            let cloud = unproject(&depth, &scene.camera, Some(&mask))?;
            let visible_pixels = cloud.len();
            let alone = render_subset(scene, Some(&[pi]));
            let alone_px = alone
                .instance_ids
                .iter()
                .filter(|&&i| i == pi as i32)
                .count();
            let occluded_fraction = if alone_px == 0 {
                0.0
            } else {
                1.0 - mask.count() as f64 / alone_px as f64
            };

            if visible_pixels >= 4 {
                let vcam = fit_virtual_camera(&cloud, opts.crop_res)?;
                let complete = render_complete_view(scene, pi, &vcam);
                img::save_rgb(&dir.join("complete").join(format!("{}.png", prim.id)), &complete)?;

                let gt_view = gt_parts
                    .iter()
                    .find(|(id, _)| *id == prim.id)
                    .map(|(_, m)| m.clone())
                    .expect("every primitive has a ground-truth mesh");
                let in_camera = gt_view.map_vertices(|p| vcam.view_to_camera(p));
                let (perturbed, applied) = perturb_reconstruction(
                    &in_camera,
                    derive_seed(opts.seed, pi as u64),
                    &opts.perturb,
                );
                let recon_rel = format!("recon/{}.obj", prim.id);
                write_obj(&dir.join(&recon_rel), &perturbed)?;
                doc.recon_mesh = Some(recon_rel);
                infos.push(BundleInstanceInfo {
                    id: prim.id.clone(),
                    label: prim.label.clone(),
                    true_scale: applied.scale,
                    occluded_fraction,
                    visible_pixels,
                    degenerate: false,
                });
            } else {
                infos.push(BundleInstanceInfo {
                    id: prim.id.clone(),
                    label: prim.label.clone(),
                    true_scale: f64::NAN,
                    occluded_fraction,
                    visible_pixels,
                    degenerate: true,
                });
            }
        }
        instances_doc.push(doc);
    }

    let manifest = ManifestFile {
        schema_version: MANIFEST_SCHEMA_VERSION,
        image: "image.png".to_string(),
        depth: "depth.pfm".to_string(),
        depth_kind: crate::scene::DepthKind::Metric,
        units: "scene".to_string(),
        camera: ManifestCamera {
            fx: scene.camera.fx,
            fy: scene.camera.fy,
            cx: scene.camera.cx,
            cy: scene.camera.cy,
            width: scene.camera.width,
            height: scene.camera.height,
            pose: Some(ManifestPose::from_pose(&scene.camera_pose)),
        },
        metric_anchor: None,
        instances: instances_doc,
    };
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    let info = BundleInfo {
        seed: scene.seed,
        scene_diameter,
        instances: infos,
        manifest: "manifest.json".to_string(),
        gt_scene: "gt/scene.obj".to_string(),
    };
    std::fs::write(
        dir.join("bundle_info.json"),
        serde_json::to_string_pretty(&info)?,
    )?;
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn bundle_round_trips_through_the_manifest_loader() {
        let dir = tempfile::tempdir().unwrap();
        let scene = generate_scene(3, &SceneSpec {
            things: 3,
            image_size: 160,
            ..SceneSpec::default()
        })
        .unwrap();
        let info = write_bundle(&scene, dir.path(), &BundleOptions {
            tessellation: 24,
            crop_res: 96,
            ..BundleOptions::default()
        })
        .unwrap();
        assert_eq!(info.instances.len(), 3);
        assert!(info.scene_diameter > 0.0);

        let manifest = crate::scene::load_manifest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(manifest.instances.len(), 4, "3 things + ground");
        let (things, stuff) = crate::scene::partition_entities(&manifest);
        assert_eq!(things.len(), 3);
        assert!(!stuff.is_empty());
        for t in things {
            if info
                .instances
                .iter()
                .find(|i| i.id == t.id)
                .is_some_and(|i| !i.degenerate)
            {
                assert!(t.recon_mesh_path.is_some());
                assert!(dir
                    .path()
                    .join("complete")
                    .join(format!("{}.png", t.id))
                    .exists());
            }
        }
        assert!(dir.path().join("gt/scene.obj").exists());
    }

    #[test]
    fn bundles_are_byte_deterministic() {
        let spec = SceneSpec {
            things: 2,
            image_size: 128,
            ..SceneSpec::default()
        };
        let opts = BundleOptions {
            tessellation: 16,
            crop_res: 64,
            ..BundleOptions::default()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_bundle(&generate_scene(9, &spec).unwrap(), d1.path(), &opts).unwrap();
        write_bundle(&generate_scene(9, &spec).unwrap(), d2.path(), &opts).unwrap();
        for rel in [
            "image.png",
            "depth.pfm",
            "manifest.json",
            "gt/scene.obj",
            "recon/thing_000.obj",
            "complete/thing_001.png",
        ] {
            let a = std::fs::read(d1.path().join(rel)).unwrap();
            let b = std::fs::read(d2.path().join(rel)).unwrap();
            assert_eq!(a, b, "{rel} differs between runs");
        }
    }
}
