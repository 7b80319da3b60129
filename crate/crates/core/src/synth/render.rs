//! Analytic ray-cast rendering of primitive scenes and watertight
//! primitive tessellation.

use image::RgbImage;
use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::{Primitive, PrimitiveKind, PrimitiveScene};
use crate::error::{Error, Result};
use crate::img::NEUTRAL;
use crate::mesh::TriangleMesh;
use crate::scene::{DepthMap, EntityMask};

/// Ambient and diffuse weights of the flat Lambert shading.
const AMBIENT: f64 = 0.35;
const DIFFUSE: f64 = 0.65;

/// A ray hit: parameter along the ray and outward world normal.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub normal: Vector3<f64>,
}

/// Intersects a world-space ray with a primitive. The ray direction need
/// not be normalized; the returned `t` is the ray parameter.
pub fn intersect(prim: &Primitive, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    const T_MIN: f64 = 1e-9;
    match &prim.kind {
        PrimitiveKind::Sphere { radius } => {
            let center = prim.pose.camera_center();
            let oc = origin - center;
            let a = dir.norm_squared();
            let b = 2.0 * oc.dot(dir);
            let c = oc.norm_squared() - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t = {
                let t0 = (-b - sq) / (2.0 * a);
                if t0 > T_MIN {
                    t0
                } else {
                    let t1 = (-b + sq) / (2.0 * a);
                    if t1 > T_MIN {
                        t1
                    } else {
                        return None;
                    }
                }
            };
            let p = origin + dir * t;
            Some(Hit {
                t,
                normal: (p - center).normalize(),
            })
        }
        PrimitiveKind::Box { half_extents } => {
            // Slab test in the box's local frame.
            let o = prim.pose.transform_point(origin);
            let d = prim.pose.rotation * dir;
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut axis_near = 0usize;
            let mut sign_near = 1.0;
            for a in 0..3 {
                let h = half_extents[a];
                if d[a].abs() < 1e-15 {
                    if o[a].abs() > h {
                        return None;
                    }
                    continue;
                }
                let inv = 1.0 / d[a];
                let mut t0 = (-h - o[a]) * inv;
                let mut t1 = (h - o[a]) * inv;
                let mut sign = -1.0;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                    sign = 1.0;
                }
                if t0 > t_near {
                    t_near = t0;
                    axis_near = a;
                    sign_near = sign;
                }
                t_far = t_far.min(t1);
                if t_near > t_far {
                    return None;
                }
            }
            let t = if t_near > T_MIN {
                t_near
            } else if t_far > T_MIN {
                // Origin inside the box; report the exit face.
                let p = o + d * t_far;
                let mut axis = 0;
                let mut best = f64::NEG_INFINITY;
                for a in 0..3 {
                    let r = p[a].abs() / half_extents[a];
                    if r > best {
                        best = r;
                        axis = a;
                    }
                }
                let mut n_local = Vector3::zeros();
                n_local[axis] = p[axis].signum();
                return Some(Hit {
                    t: t_far,
                    normal: prim.pose.rotation.transpose() * n_local,
                });
            } else {
                return None;
            };
            let mut n_local = Vector3::zeros();
            n_local[axis_near] = sign_near;
            Some(Hit {
                t,
                normal: prim.pose.rotation.transpose() * n_local,
            })
        }
        PrimitiveKind::Plane { half_extents } => {
            let o = prim.pose.transform_point(origin);
            let d = prim.pose.rotation * dir;
            if d.z.abs() < 1e-15 {
                return None;
            }
            let t = -o.z / d.z;
            if t <= T_MIN {
                return None;
            }
            let p = o + d * t;
            if p.x.abs() > half_extents.0 || p.y.abs() > half_extents.1 {
                return None;
            }
            let n_local = Vector3::new(0.0, 0.0, if d.z < 0.0 { 1.0 } else { -1.0 });
            Some(Hit {
                t,
                normal: prim.pose.rotation.transpose() * n_local,
            })
        }
    }
}

/// Output of a scene render: per-pixel depth, primitive index map, and the
/// shaded image (neutral gray where no primitive is hit).
pub struct RenderOutput {
    pub depth: DepthMap,
    /// Index into `scene.primitives` per pixel, -1 where nothing is hit.
    pub instance_ids: Vec<i32>,
    pub rgb: RgbImage,
}

impl RenderOutput {
    /// Exact entity mask of one primitive.
    pub fn mask_of(&self, scene: &PrimitiveScene, prim_index: usize) -> EntityMask {
        let (w, h) = (scene.camera.width, scene.camera.height);
        let mut mask = EntityMask::empty(w, h);
        for v in 0..h {
            for u in 0..w {
                if self.instance_ids[(v * w + u) as usize] == prim_index as i32 {
                    mask.set(u, v, true);
                }
            }
        }
        mask
    }
}

fn shade(albedo: [u8; 3], normal: &Vector3<f64>, to_light: &Vector3<f64>) -> image::Rgb<u8> {
    let lambert = normal.dot(to_light).max(0.0);
    let k = AMBIENT + DIFFUSE * lambert;
    image::Rgb(albedo.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8))
}

/// Renders the scene through pixel centers: nearest analytic intersection,
/// camera-space z as depth, flat Lambert shading against the fixed light.
/// Rows are rendered in parallel.
pub fn raycast_render(scene: &PrimitiveScene) -> RenderOutput {
    render_subset(scene, None)
}

/// Renders only the selected primitive indices (all when `None`).
pub fn render_subset(scene: &PrimitiveScene, subset: Option<&[usize]>) -> RenderOutput {
    let (w, h) = (scene.camera.width, scene.camera.height);
    let origin = scene.camera_pose.camera_center();
    let rot_t = scene.camera_pose.rotation.transpose();
    let to_light = -scene.light_dir.normalize();

    let rows: Vec<(Vec<f64>, Vec<i32>, Vec<[u8; 3]>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut depth_row = vec![f64::NAN; w as usize];
            let mut id_row = vec![-1i32; w as usize];
            let mut rgb_row = vec![[NEUTRAL; 3]; w as usize];
            for u in 0..w {
                let dir_cam = scene.camera.pixel_ray(u, v);
                let dir = rot_t * dir_cam;
                let mut best: Option<(usize, Hit)> = None;
                let indices: Box<dyn Iterator<Item = usize>> = match subset {
                    Some(s) => Box::new(s.iter().copied()),
                    None => Box::new(0..scene.primitives.len()),
                };
                for pi in indices {
                    if let Some(hit) = intersect(&scene.primitives[pi], &origin, &dir) {
                        if best.map_or(true, |(_, b)| hit.t < b.t) {
                            best = Some((pi, hit));
                        }
                    }
                }
                if let Some((pi, hit)) = best {
                    // dir has unit z in camera space, so t is camera depth.
                    depth_row[u as usize] = hit.t;
                    id_row[u as usize] = pi as i32;
                    rgb_row[u as usize] =
                        shade(scene.primitives[pi].albedo, &hit.normal, &to_light).0;
                }
            }
            (depth_row, id_row, rgb_row)
        })
        .collect();

    let mut depth = DepthMap::invalid(w, h);
    let mut instance_ids = vec![-1i32; (w * h) as usize];
    let mut rgb = RgbImage::new(w, h);
    for (v, (depth_row, id_row, rgb_row)) in rows.into_iter().enumerate() {
        for u in 0..w as usize {
            if depth_row[u].is_finite() {
                depth.set(u as u32, v as u32, depth_row[u]);
            }
            instance_ids[v * w as usize + u] = id_row[u];
            rgb.put_pixel(u as u32, v as u32, image::Rgb(rgb_row[u]));
        }
    }
    RenderOutput {
        depth,
        instance_ids,
        rgb,
    }
}

/// UV-sphere tessellation with vertices exactly on the sphere.
pub fn sphere_mesh(center: Point3<f64>, radius: f64, tessellation: usize) -> TriangleMesh {
    let segments = tessellation.max(8);
    let rings = (tessellation / 2).max(4);
    let mut vertices = vec![Point3::new(center.x, center.y - radius, center.z)];
    for ring in 1..rings {
        let theta = std::f64::consts::PI * ring as f64 / rings as f64;
        let (st, ct) = theta.sin_cos();
        for seg in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * seg as f64 / segments as f64;
            let (sp, cp) = phi.sin_cos();
            vertices.push(Point3::new(
                center.x + radius * st * cp,
                center.y - radius * ct,
                center.z + radius * st * sp,
            ));
        }
    }
    let top = vertices.len() as u32;
    vertices.push(Point3::new(center.x, center.y + radius, center.z));

    let mut faces = Vec::new();
    let ring_start = |ring: usize| 1 + (ring - 1) * segments;
    for seg in 0..segments {
        let next = (seg + 1) % segments;
        faces.push([
            0,
            (ring_start(1) + seg) as u32,
            (ring_start(1) + next) as u32,
        ]);
    }
    for ring in 1..rings - 1 {
        let a = ring_start(ring);
        let b = ring_start(ring + 1);
        for seg in 0..segments {
            let next = (seg + 1) % segments;
            faces.push([(a + seg) as u32, (b + seg) as u32, (b + next) as u32]);
            faces.push([(a + seg) as u32, (b + next) as u32, (a + next) as u32]);
        }
    }
    let last = ring_start(rings - 1);
    for seg in 0..segments {
        let next = (seg + 1) % segments;
        faces.push([(last + seg) as u32, top, (last + next) as u32]);
    }
    TriangleMesh {
        vertices,
        faces,
        vertex_colors: None,
    }
}

fn box_mesh_local(half: &Vector3<f64>) -> TriangleMesh {
    let (x, y, z) = (half.x, half.y, half.z);
    let vertices = vec![
        Point3::new(-x, -y, -z),
        Point3::new(x, -y, -z),
        Point3::new(x, y, -z),
        Point3::new(-x, y, -z),
        Point3::new(-x, -y, z),
        Point3::new(x, -y, z),
        Point3::new(x, y, z),
        Point3::new(-x, y, z),
    ];
    let quads: [[u32; 4]; 6] = [
        [0, 3, 2, 1], // -z
        [4, 5, 6, 7], // +z
        [0, 1, 5, 4], // -y
        [2, 3, 7, 6], // +y
        [0, 4, 7, 3], // -x
        [1, 2, 6, 5], // +x
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    TriangleMesh {
        vertices,
        faces,
        vertex_colors: None,
    }
}

fn plane_mesh_local(half: (f64, f64), cells: usize) -> TriangleMesh {
    let n = cells.max(1);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point3::new(
                -half.0 + 2.0 * half.0 * i as f64 / n as f64,
                -half.1 + 2.0 * half.1 * j as f64 / n as f64,
                0.0,
            ));
        }
    }
    let mut faces = Vec::with_capacity(2 * n * n);
    let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    for j in 0..n {
        for i in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh {
        vertices,
        faces,
        vertex_colors: None,
    }
}

/// Watertight analytic tessellation of a primitive, in world coordinates.
pub fn mesh_of_primitive(prim: &Primitive, tessellation: usize) -> Result<TriangleMesh> {
    let local = match &prim.kind {
        PrimitiveKind::Sphere { radius } => {
            if tessellation < 8 {
                return Err(Error::Domain(format!(
                    "sphere tessellation must be at least 8, got {tessellation}"
                )));
            }
            if !(*radius > 0.0) {
                return Err(Error::Domain("sphere radius must be positive".to_string()));
            }
            sphere_mesh(Point3::origin(), *radius, tessellation)
        }
        PrimitiveKind::Box { half_extents } => {
            if !(half_extents.x > 0.0 && half_extents.y > 0.0 && half_extents.z > 0.0) {
                return Err(Error::Domain("box extents must be positive".to_string()));
            }
            box_mesh_local(half_extents)
        }
        PrimitiveKind::Plane { half_extents } => {
            if !(half_extents.0 > 0.0 && half_extents.1 > 0.0) {
                return Err(Error::Domain("plane extents must be positive".to_string()));
            }
            plane_mesh_local(*half_extents, tessellation / 16)
        }
    };
    Ok(local.map_vertices(|p| prim.pose.inverse_transform_point(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::RigidPose;
    use crate::scene::EntityCategory;
    use approx::assert_relative_eq;

    fn sphere_prim(center: Point3<f64>, radius: f64) -> Primitive {
        Primitive {
            id: "s".into(),
            label: "sphere".into(),
            kind: PrimitiveKind::Sphere { radius },
            pose: RigidPose {
                rotation: nalgebra::Matrix3::identity(),
                translation: -center.coords,
            },
            albedo: [200, 60, 60],
            category: EntityCategory::Thing,
        }
    }

    #[test]
    fn sphere_mesh_is_exact_and_watertight() {
        let mesh = sphere_mesh(Point3::origin(), 1.0, 64);
        mesh.validate().unwrap();
        for v in &mesh.vertices {
            assert!((v.coords.norm() - 1.0).abs() < 1e-9);
        }
        let area = mesh.area();
        let exact = 4.0 * std::f64::consts::PI;
        assert!(
            (area - exact).abs() / exact < 0.005,
            "area {area} vs {exact}"
        );
        // Watertight: every edge shared by exactly two faces.
        let mut edges = std::collections::HashMap::new();
        for f in &mesh.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&n| n == 2));
    }

    #[test]
    fn box_mesh_area_is_exact() {
        let prim = Primitive {
            id: "b".into(),
            label: "box".into(),
            kind: PrimitiveKind::Box {
                half_extents: Vector3::new(0.5, 1.0, 1.5),
            },
            pose: RigidPose::identity(),
            albedo: [0, 0, 0],
            category: EntityCategory::Thing,
        };
        let mesh = mesh_of_primitive(&prim, 8).unwrap();
        // 1 x 2 x 3 box: 2(1*2 + 1*3 + 2*3) = 22.
        assert_relative_eq!(mesh.area(), 22.0, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_primitive_sizes_error() {
        let prim = Primitive {
            id: "z".into(),
            label: "sphere".into(),
            kind: PrimitiveKind::Sphere { radius: 0.0 },
            pose: RigidPose::identity(),
            albedo: [0, 0, 0],
            category: EntityCategory::Thing,
        };
        assert!(mesh_of_primitive(&prim, 16).is_err());
        assert!(mesh_of_primitive(&sphere_prim(Point3::origin(), 1.0), 4).is_err());
    }

    fn axis_scene(prims: Vec<Primitive>) -> PrimitiveScene {
        PrimitiveScene {
            primitives: prims,
            camera: crate::camera::fov_to_intrinsics(60.0, 64, 64).unwrap(),
            camera_pose: RigidPose::identity(),
            light_dir: Vector3::new(0.3, 0.8, 0.5),
            seed: 0,
        }
    }

    #[test]
    fn center_pixel_depth_of_axis_sphere() {
        let d = 3.0;
        let r = 0.4;
        let scene = axis_scene(vec![sphere_prim(Point3::new(0.0, 0.0, d), r)]);
        let out = raycast_render(&scene);
        // The principal point lies on the boundary of pixels 31/32; both
        // pixel centers are half a pixel off axis, so check against the
        // analytic depth for that ray.
        let dir = scene.camera.pixel_ray(32, 32);
        let hit = intersect(&scene.primitives[0], &Point3::origin(), &dir).unwrap();
        let got = out.depth.get(32, 32).unwrap();
        assert_relative_eq!(got, hit.t, epsilon = 1e-9);
        // Half a pixel off axis adds a small sag term over d - r.
        assert!((got - (d - r)).abs() < 5e-3, "near the analytic d - r");
    }

    #[test]
    fn empty_pixels_are_invalid_and_unlabeled() {
        let scene = axis_scene(vec![sphere_prim(Point3::new(0.0, 0.0, 3.0), 0.2)]);
        let out = raycast_render(&scene);
        assert_eq!(out.depth.get(0, 0), None);
        assert_eq!(out.instance_ids[0], -1);
        assert_eq!(*out.rgb.get_pixel(0, 0), image::Rgb([NEUTRAL; 3]));
    }

    #[test]
    fn fronto_parallel_box_face_has_constant_depth() {
        let prim = Primitive {
            id: "b".into(),
            label: "box".into(),
            kind: PrimitiveKind::Box {
                half_extents: Vector3::new(0.5, 0.5, 0.25),
            },
            pose: RigidPose {
                rotation: nalgebra::Matrix3::identity(),
                translation: -Vector3::new(0.0, 0.0, 2.0),
            },
            albedo: [50, 200, 50],
            category: EntityCategory::Thing,
        };
        let scene = axis_scene(vec![prim]);
        let out = raycast_render(&scene);
        let expected = 2.0 - 0.25;
        let mut hits = 0;
        for (_, _, d) in out.depth.iter_valid() {
            assert!((d - expected).abs() < 1e-9);
            hits += 1;
        }
        assert!(hits > 100);
    }

    #[test]
    fn unprojected_render_lies_on_the_surface() {
        let d = 3.0;
        let r = 0.5;
        let scene = axis_scene(vec![sphere_prim(Point3::new(0.0, 0.0, d), r)]);
        let out = raycast_render(&scene);
        let cloud = crate::camera::unproject(&out.depth, &scene.camera, None).unwrap();
        // Identity camera pose: view space is world space.
        for p in &cloud.points {
            let dist = ((p - Point3::new(0.0, 0.0, d)).norm() - r).abs();
            assert!(dist < 1e-6 * d, "surface distance {dist}");
        }
    }

    #[test]
    fn masks_tile_the_foreground_exactly() {
        let scene = axis_scene(vec![
            sphere_prim(Point3::new(-0.5, 0.0, 3.0), 0.45),
            sphere_prim(Point3::new(0.6, 0.1, 4.0), 0.5),
        ]);
        let out = raycast_render(&scene);
        let m0 = out.mask_of(&scene, 0);
        let m1 = out.mask_of(&scene, 1);
        assert_eq!(m0.overlap_count(&m1), 0);
        let covered = m0.count() + m1.count();
        let labeled = out.instance_ids.iter().filter(|&&i| i >= 0).count();
        assert_eq!(covered, labeled);
    }
}
