//! Synthetic desk-scale scene generation: analytic primitives with exact
//! ground truth, a perturbed-reconstruction oracle, and the amodal-pair
//! composer used to build completion training data.
//!
//! World convention matches view space (y down): the ground plane sits at
//! y = 0 and objects extend toward negative y.

mod bundle;
mod render;

pub use bundle::{write_bundle, BundleInfo, BundleInstanceInfo, BundleOptions};
pub use render::{
    intersect, mesh_of_primitive, raycast_render, render_subset, sphere_mesh, RenderOutput,
};

use image::RgbImage;
use nalgebra::{Matrix3, Point3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::camera::{CameraIntrinsics, RigidPose, SimilarityTransform};
use crate::error::{Error, Result};
use crate::img::NEUTRAL;
use crate::mesh::TriangleMesh;
use crate::scene::{EntityCategory, EntityMask};

/// Analytic primitive shapes. Sizes are half-extents except the sphere
/// radius; the plane is a finite rectangle in its local XY.
#[derive(Debug, Clone)]
pub enum PrimitiveKind {
    Sphere { radius: f64 },
    Box { half_extents: Vector3<f64> },
    Plane { half_extents: (f64, f64) },
}

/// One scene primitive. `pose` maps world coordinates into the primitive's
/// local frame.
#[derive(Debug, Clone)]
pub struct Primitive {
    pub id: String,
    pub label: String,
    pub kind: PrimitiveKind,
    pub pose: RigidPose,
    pub albedo: [u8; 3],
    pub category: EntityCategory,
}

/// A generated scene: primitives, the observing camera, and the fixed
/// light used for shading.
#[derive(Debug, Clone)]
pub struct PrimitiveScene {
    pub primitives: Vec<Primitive>,
    pub camera: CameraIntrinsics,
    /// World-to-camera transform.
    pub camera_pose: RigidPose,
    /// Direction light travels, world frame.
    pub light_dir: Vector3<f64>,
    pub seed: u64,
}

impl PrimitiveScene {
    /// Indices of thing primitives.
    pub fn thing_indices(&self) -> Vec<usize> {
        self.primitives
            .iter()
            .enumerate()
            .filter(|(_, p)| p.category == EntityCategory::Thing)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Generation parameters.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub things: usize,
    pub image_size: u32,
    pub fov_deg: f64,
    /// Range of thing sizes (sphere radius / box half-extent scale).
    pub size_range: (f64, f64),
    /// Radius of the placement disc on the ground plane.
    pub spread: f64,
    /// Keep retrying until at least one thing is occluded by this fraction.
    pub min_occlusion: Option<f64>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            things: 3,
            image_size: 512,
            fov_deg: 55.0,
            size_range: (0.09, 0.2),
            spread: 0.55,
            min_occlusion: None,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if !(self.size_range.0 > 0.0 && self.size_range.1 >= self.size_range.0) {
            return Err(Error::Generation(format!(
                "degenerate size range {:?}",
                self.size_range
            )));
        }
        if !(self.spread > 0.0) {
            return Err(Error::Generation("spread must be positive".to_string()));
        }
        if !(self.fov_deg > 10.0 && self.fov_deg < 120.0) {
            return Err(Error::Generation(format!(
                "field of view {} out of the supported range",
                self.fov_deg
            )));
        }
        Ok(())
    }
}

/// The fixed scene light: from above and slightly to the side (y is down).
pub fn scene_light() -> Vector3<f64> {
    Vector3::new(-0.3, 0.85, -0.25).normalize()
}

fn yaw(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

/// World-to-local pose for a primitive centered at `center` with local
/// rotation `rot_local_to_world`.
fn pose_at(center: Point3<f64>, rot_local_to_world: Matrix3<f64>) -> RigidPose {
    let r = rot_local_to_world.transpose();
    RigidPose {
        rotation: r,
        translation: -(r * center.coords),
    }
}

/// Albedo palette away from the neutral gray.
fn pick_albedo(rng: &mut ChaCha8Rng) -> [u8; 3] {
    let mut px = [0u8; 3];
    for c in &mut px {
        let low = rng.random_bool(0.5);
        *c = if low {
            rng.random_range(30..=105)
        } else {
            rng.random_range(150..=230)
        };
    }
    px
}

/// Ground plane covering at least `radius` around the origin. The plane's
/// outward normal points up (negative y).
fn ground_plane(radius: f64) -> Primitive {
    // Local z maps to world -y.
    let rot_lw = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
    Primitive {
        id: "ground".to_string(),
        label: "ground".to_string(),
        kind: PrimitiveKind::Plane {
            half_extents: (radius, radius),
        },
        pose: pose_at(Point3::origin(), rot_lw),
        albedo: [168, 154, 96],
        category: EntityCategory::Stuff,
    }
}

fn place_things(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Result<Vec<Primitive>> {
    let mut things: Vec<(Point3<f64>, f64, Primitive)> = Vec::new();
    for i in 0..spec.things {
        let mut placed = false;
        for _attempt in 0..1000 {
            let size = rng.random_range(spec.size_range.0..=spec.size_range.1);
            let x = rng.random_range(-spec.spread..=spec.spread);
            let z = rng.random_range(-spec.spread..=spec.spread);
            let footprint = size * 1.05;
            if things
                .iter()
                .any(|(c, r, _)| ((c.x - x).powi(2) + (c.z - z).powi(2)).sqrt() < r + footprint)
            {
                continue;
            }
            let is_sphere = rng.random_bool(0.5);
            let (kind, label, center, radius) = if is_sphere {
                (
                    PrimitiveKind::Sphere { radius: size },
                    "sphere",
                    Point3::new(x, -size, z),
                    size,
                )
            } else {
                let hx = size * rng.random_range(0.7..=1.3);
                let hy = size * rng.random_range(0.7..=1.3);
                let hz = size * rng.random_range(0.7..=1.3);
                (
                    PrimitiveKind::Box {
                        half_extents: Vector3::new(hx, hy, hz),
                    },
                    "box",
                    Point3::new(x, -hy, z),
                    hx.max(hz) * std::f64::consts::SQRT_2,
                )
            };
            let rot = if is_sphere {
                Matrix3::identity()
            } else {
                yaw(rng.random_range(0.0..std::f64::consts::TAU))
            };
            things.push((
                center,
                radius,
                Primitive {
                    id: format!("thing_{i:03}"),
                    label: label.to_string(),
                    kind,
                    pose: pose_at(center, rot),
                    albedo: pick_albedo(rng),
                    category: EntityCategory::Thing,
                },
            ));
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place thing {i} without interpenetration after 1000 attempts"
            )));
        }
    }
    Ok(things.into_iter().map(|(_, _, p)| p).collect())
}

/// Camera looking at the scene center from a seeded azimuth, elevated
/// enough that every pixel ray reaches the ground plane. The distance is
/// grown until all thing centers project inside the image with a 5%
/// margin.
fn place_camera(
    rng: &mut ChaCha8Rng,
    spec: &SceneSpec,
    things: &[Primitive],
) -> Result<(CameraIntrinsics, RigidPose, f64)> {
    let intr = crate::camera::fov_to_intrinsics(spec.fov_deg, spec.image_size, spec.image_size)?;
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let elevation = (spec.fov_deg / 2.0 + 8.0).max(32.0).to_radians();
    let centers: Vec<Point3<f64>> = things.iter().map(|p| p.pose.camera_center()).collect();
    let target = if centers.is_empty() {
        Point3::new(0.0, -0.1, 0.0)
    } else {
        let sum = centers.iter().fold(Vector3::zeros(), |a, c| a + c.coords);
        Point3::from(sum / centers.len() as f64)
    };

    let mut dist = spec.spread * 2.2 + 1.0;
    for _ in 0..40 {
        let dir = Vector3::new(
            elevation.cos() * azimuth.cos(),
            -elevation.sin(),
            elevation.cos() * azimuth.sin(),
        );
        let eye = target + dir * dist;
        let pose = RigidPose::look_at(eye, target)?;

        let margin = 0.05 * spec.image_size as f64;
        let ok_centers = crate::camera::project(&centers, &intr, &pose)
            .iter()
            .all(|p| {
                !p.behind
                    && p.u >= margin
                    && p.u <= spec.image_size as f64 - margin
                    && p.v >= margin
                    && p.v <= spec.image_size as f64 - margin
            });
        let footprint = frustum_ground_quad(&intr, &pose);
        if ok_centers {
            if let Some(quad) = footprint {
                let reach = quad
                    .iter()
                    .map(|q| q.coords.norm())
                    .fold(0.0f64, f64::max);
                if reach < 60.0 {
                    return Ok((intr, pose, dist));
                }
            }
        }
        dist *= 1.15;
    }
    Err(Error::Generation(
        "could not frame all primitives inside the image".to_string(),
    ))
}

/// Intersections of the four image-corner rays with the ground plane
/// (y = 0), in image-corner order, if all of them hit.
pub fn frustum_ground_quad(intr: &CameraIntrinsics, pose: &RigidPose) -> Option<[Point3<f64>; 4]> {
    let origin = pose.camera_center();
    let rot_t = pose.rotation.transpose();
    let mut quad = [Point3::origin(); 4];
    let corners = [
        (0.0, 0.0),
        (intr.width as f64, 0.0),
        (intr.width as f64, intr.height as f64),
        (0.0, intr.height as f64),
    ];
    for (k, (u, v)) in corners.into_iter().enumerate() {
        let dir_cam = Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
        let dir = rot_t * dir_cam;
        if dir.y.abs() < 1e-12 {
            return None;
        }
        let t = -origin.y / dir.y;
        if t <= 0.0 {
            return None;
        }
        quad[k] = origin + dir * t;
    }
    Some(quad)
}

/// Fraction of a thing's unoccluded silhouette hidden by other primitives.
fn occluded_fraction(scene: &PrimitiveScene, render: &RenderOutput, prim_index: usize) -> f64 {
    let alone = render_subset(scene, Some(&[prim_index]));
    let alone_px = alone
        .instance_ids
        .iter()
        .filter(|&&i| i == prim_index as i32)
        .count();
    if alone_px == 0 {
        return 0.0;
    }
    let visible = render
        .instance_ids
        .iter()
        .filter(|&&i| i == prim_index as i32)
        .count();
    1.0 - visible as f64 / alone_px as f64
}

/// Deterministic scene generation: things rejection-placed on the ground
/// plane, a camera that sees all of them, and a ground patch covering the
/// full camera footprint.
pub fn generate_scene(seed: u64, spec: &SceneSpec) -> Result<PrimitiveScene> {
    spec.validate()?;
    for attempt in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9)));
        let things = place_things(&mut rng, spec)?;
        let (camera, camera_pose, _dist) = place_camera(&mut rng, spec, &things)?;
        let quad = frustum_ground_quad(&camera, &camera_pose)
            .ok_or_else(|| Error::Generation("camera does not face the ground".to_string()))?;
        let reach = quad
            .iter()
            .flat_map(|q| [q.x.abs(), q.z.abs()])
            .fold(0.0f64, f64::max);

        let mut primitives = vec![ground_plane(reach * 1.02)];
        primitives.extend(things);
        let scene = PrimitiveScene {
            primitives,
            camera,
            camera_pose,
            light_dir: scene_light(),
            seed,
        };

        match spec.min_occlusion {
            None => return Ok(scene),
            Some(min) => {
                let render = raycast_render(&scene);
                let occluded = scene
                    .thing_indices()
                    .into_iter()
                    .any(|i| occluded_fraction(&scene, &render, i) >= min);
                if occluded {
                    return Ok(scene);
                }
            }
        }
    }
    Err(Error::Generation(
        "could not generate a scene with the requested occlusion".to_string(),
    ))
}

/// Perturbation ranges for the reconstruction oracle.
#[derive(Debug, Clone, Copy)]
pub struct PerturbRanges {
    /// Log-uniform scale range.
    pub scale: (f64, f64),
    pub rotation_max_rad: f64,
    pub translation_max: f64,
    /// Gaussian vertex jitter as a fraction of the bounding-box diagonal.
    pub noise: f64,
}

impl PerturbRanges {
    pub fn identity() -> Self {
        Self {
            scale: (1.0, 1.0),
            rotation_max_rad: 0.0,
            translation_max: 0.0,
            noise: 0.0,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn random_unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Applies a seeded random similarity plus optional vertex jitter,
/// returning the transform so oracle checks can invert it exactly.
pub fn perturb_reconstruction(
    mesh: &TriangleMesh,
    seed: u64,
    ranges: &PerturbRanges,
) -> (TriangleMesh, SimilarityTransform) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if ranges.scale.0 == ranges.scale.1 {
        ranges.scale.0
    } else {
        (rng.random_range(ranges.scale.0.ln()..ranges.scale.1.ln())).exp()
    };
    let rotation = if ranges.rotation_max_rad > 0.0 {
        let axis = random_unit_vector(&mut rng);
        let angle = rng.random_range(0.0..ranges.rotation_max_rad);
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
            .matrix()
    } else {
        Matrix3::identity()
    };
    let translation = if ranges.translation_max > 0.0 {
        Vector3::new(
            rng.random_range(-ranges.translation_max..=ranges.translation_max),
            rng.random_range(-ranges.translation_max..=ranges.translation_max),
            rng.random_range(-ranges.translation_max..=ranges.translation_max),
        )
    } else {
        Vector3::zeros()
    };
    let transform = SimilarityTransform {
        scale,
        rotation,
        translation,
    };
    let sigma = if ranges.noise > 0.0 {
        mesh.aabb().map_or(0.0, |b| b.diagonal()) * ranges.noise
    } else {
        0.0
    };
    let mut out = mesh.map_vertices(|p| transform.apply(p));
    if sigma > 0.0 {
        for v in &mut out.vertices {
            for a in 0..3 {
                v[a] += sigma * gaussian(&mut rng);
            }
        }
    }
    (out, transform)
}

/// One amodal-completion training pair.
#[derive(Debug, Clone)]
pub struct AmodalPair {
    /// Target view with the occluder applied: every pixel is either the
    /// target pixel or the neutral gray.
    pub conditioning: RgbImage,
    /// Full-object view over the neutral background.
    pub target: RgbImage,
    /// Where the occluder silhouette landed.
    pub occluder: EntityMask,
    pub label: String,
    pub occluded_fraction: f64,
}

/// Overlays a silhouette (seeded random translation and scale) so the
/// occluded fraction of the target mask falls in `occlusion_range`, then
/// composes the conditioning image by blanking background and occluded
/// pixels to the neutral gray.
pub fn compose_amodal_pair(
    target_rgb: &RgbImage,
    target_mask: &EntityMask,
    silhouette: &EntityMask,
    label: &str,
    seed: u64,
    occlusion_range: (f64, f64),
) -> Result<AmodalPair> {
    let (w, h) = target_rgb.dimensions();
    if target_mask.width != w || target_mask.height != h {
        return Err(Error::DimensionMismatch(format!(
            "target mask {}x{} vs image {w}x{h}",
            target_mask.width, target_mask.height
        )));
    }
    let mask_px = target_mask.count();
    if mask_px == 0 {
        return Err(Error::Domain("target mask is empty".to_string()));
    }
    if !(occlusion_range.0 <= occlusion_range.1 && occlusion_range.0 >= 0.0) {
        return Err(Error::Domain(format!(
            "bad occlusion range {occlusion_range:?}"
        )));
    }

    let mut target = RgbImage::from_pixel(w, h, image::Rgb([NEUTRAL; 3]));
    for v in 0..h {
        for u in 0..w {
            if target_mask.get(u, v) {
                target.put_pixel(u, v, *target_rgb.get_pixel(u, v));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _try in 0..100 {
        let placed = if silhouette.is_empty() {
            EntityMask::empty(w, h)
        } else {
            let scale = rng.random_range(0.5..1.6);
            let dx = rng.random_range(-(w as i64) / 2..=(w as i64) / 2);
            let dy = rng.random_range(-(h as i64) / 2..=(h as i64) / 2);
            let mut placed = EntityMask::empty(w, h);
            for v in 0..h {
                for u in 0..w {
                    let su = ((u as i64 - dx) as f64 / scale).round();
                    let sv = ((v as i64 - dy) as f64 / scale).round();
                    if su >= 0.0
                        && sv >= 0.0
                        && (su as u32) < silhouette.width
                        && (sv as u32) < silhouette.height
                        && silhouette.get(su as u32, sv as u32)
                    {
                        placed.set(u, v, true);
                    }
                }
            }
            placed
        };
        let occluded = placed.overlap_count(target_mask) as f64 / mask_px as f64;
        if occluded >= occlusion_range.0 && occluded <= occlusion_range.1 {
            let mut conditioning = RgbImage::from_pixel(w, h, image::Rgb([NEUTRAL; 3]));
            for v in 0..h {
                for u in 0..w {
                    if target_mask.get(u, v) && !placed.get(u, v) {
                        conditioning.put_pixel(u, v, *target.get_pixel(u, v));
                    }
                }
            }
            return Ok(AmodalPair {
                conditioning,
                target,
                occluder: placed,
                label: label.to_string(),
                occluded_fraction: occluded,
            });
        }
    }
    Err(Error::Composition(format!(
        "could not reach occlusion range {occlusion_range:?} in 100 placements"
    )))
}

/// A single object rendered in isolation against the neutral background:
/// a source of amodal targets and occluder silhouettes.
pub fn object_view(seed: u64, image_size: u32) -> Result<(RgbImage, EntityMask, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = rng.random_range(0.12..0.25);
    let is_sphere = rng.random_bool(0.5);
    let (kind, label) = if is_sphere {
        (PrimitiveKind::Sphere { radius: size }, "sphere")
    } else {
        (
            PrimitiveKind::Box {
                half_extents: Vector3::new(
                    size * rng.random_range(0.7..1.3),
                    size * rng.random_range(0.7..1.3),
                    size * rng.random_range(0.7..1.3),
                ),
            },
            "box",
        )
    };
    let center = Point3::new(0.0, 0.0, 1.0);
    let prim = Primitive {
        id: "object".to_string(),
        label: label.to_string(),
        kind,
        pose: pose_at(center, yaw(rng.random_range(0.0..std::f64::consts::TAU))),
        albedo: pick_albedo(&mut rng),
        category: EntityCategory::Thing,
    };
    let scene = PrimitiveScene {
        primitives: vec![prim],
        camera: crate::camera::fov_to_intrinsics(crate::camera::CROP_FOV_DEG, image_size, image_size)?,
        camera_pose: RigidPose::identity(),
        light_dir: scene_light(),
        seed,
    };
    let out = raycast_render(&scene);
    let mask = out.mask_of(&scene, 0);
    if mask.is_empty() {
        return Err(Error::Generation("object not visible".to_string()));
    }
    Ok((out.rgb, mask, label.to_string()))
}
