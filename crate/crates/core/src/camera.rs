//! Pinhole camera math: projection, unprojection, virtual-camera
//! construction, and the object-space/view-space transforms that place
//! reconstructed instances back into the scene.
//!
//! Conventions:
//! - Camera space is x-right, y-down, z-forward; pixel (u, v) samples the
//!   point (u + 0.5, v + 0.5) so projection/unprojection round trips are
//!   exact at pixel centers.
//! - Rotations map world to camera: `p_cam = R * p_world + t`.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::scene::{DepthMap, EntityMask};

/// Field of view of the normalized crop camera, in degrees.
pub const CROP_FOV_DEG: f64 = 49.1;
/// Distance from the virtual camera to the center of the normalized object.
pub const VIRTUAL_CAMERA_DISTANCE: f64 = 1.5;
/// Default side length of the square normalized crop, in pixels.
pub const DEFAULT_CROP_RES: u32 = 512;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::Domain(format!(
                "focal lengths must be positive and finite, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::Domain(format!(
                "image resolution must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Ray direction through pixel center (u, v), with unit z so the ray
    /// parameter equals camera-space depth.
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        Vector3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Checks orthonormality and unit determinant within 1e-9.
    pub fn validate(&self) -> Result<()> {
        let gram = self.rotation.transpose() * self.rotation;
        let err = (gram - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(Error::Domain(format!(
                "rotation is not orthonormal (max |R^T R - I| = {err:.3e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(())
    }

    /// Camera pose at `eye` looking at `target`. Roll is fixed by aligning
    /// the image-down axis with world +Y; when the view direction is
    /// parallel to +Y within 1e-6, +Z is used instead.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>) -> Result<Self> {
        let forward = target - eye;
        let dist = forward.norm();
        if dist < 1e-12 {
            return Err(Error::Domain(
                "look-at eye and target coincide".to_string(),
            ));
        }
        let z_axis = forward / dist;
        let mut up = Vector3::y();
        if up.cross(&z_axis).norm() < 1e-6 {
            up = Vector3::z();
        }
        let x_axis = up.cross(&z_axis).normalize();
        let y_axis = z_axis.cross(&x_axis);
        let rotation = Matrix3::from_rows(&[
            x_axis.transpose(),
            y_axis.transpose(),
            z_axis.transpose(),
        ]);
        let translation = -(rotation * eye.coords);
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse_transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Camera center in world coordinates.
    pub fn camera_center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }
}

/// Uniform scale + rotation + translation: `p' = s * R * p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_scale_translation(scale: f64, translation: Vector3<f64>) -> Self {
        Self {
            scale,
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Domain(format!(
                "similarity scale must be positive, got {}",
                self.scale
            )));
        }
        RigidPose {
            rotation: self.rotation,
            translation: Vector3::zeros(),
        }
        .validate()
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    pub fn apply_inverse(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * ((p.coords - self.translation) / self.scale))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// Composition `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }
}

/// The normalized camera setup computed per instance: a similarity mapping
/// view space into the normalized object frame, plus the crop camera pose
/// and intrinsics in that frame.
#[derive(Debug, Clone, Copy)]
pub struct VirtualCamera {
    pub normalization: SimilarityTransform,
    pub pose: RigidPose,
    pub intrinsics: CameraIntrinsics,
}

impl VirtualCamera {
    /// View space -> virtual camera space.
    pub fn view_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        self.pose.transform_point(&self.normalization.apply(p))
    }

    /// Virtual camera space -> view space.
    pub fn camera_to_view(&self, p: &Point3<f64>) -> Point3<f64> {
        self.normalization
            .apply_inverse(&self.pose.inverse_transform_point(p))
    }
}

/// A point projected into an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    /// Continuous pixel column; pixel k's center is at k + 0.5.
    pub u: f64,
    pub v: f64,
    /// Camera-space z of the point, in the input's units.
    pub depth: f64,
    /// Set when the point has non-positive camera-space depth.
    pub behind: bool,
}

/// Symmetric pinhole intrinsics for a given field of view across the larger
/// image dimension, principal point at the image center.
pub fn fov_to_intrinsics(fov_deg: f64, width: u32, height: u32) -> Result<CameraIntrinsics> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::Domain(format!(
            "field of view must lie in (0, 180) degrees, got {fov_deg}"
        )));
    }
    let half = (fov_deg.to_radians() / 2.0).tan();
    let f = (width.max(height) as f64 / 2.0) / half;
    CameraIntrinsics::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
}

/// Unprojects every valid (and masked, when a mask is given) depth pixel to
/// a view-space point through the pixel center. The returned cloud records
/// each point's source pixel.
pub fn unproject(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    mask: Option<&EntityMask>,
) -> Result<PointCloud> {
    if depth.width != intr.width || depth.height != intr.height {
        return Err(Error::DimensionMismatch(format!(
            "depth map is {}x{} but intrinsics describe {}x{}",
            depth.width, depth.height, intr.width, intr.height
        )));
    }
    if let Some(m) = mask {
        if m.width != depth.width || m.height != depth.height {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{} but depth map is {}x{}",
                m.width, m.height, depth.width, depth.height
            )));
        }
    }
    let mut points = Vec::new();
    let mut indices = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if let Some(m) = mask {
                if !m.get(u, v) {
                    continue;
                }
            }
            let Some(d) = depth.get(u, v) else { continue };
            let x = (u as f64 + 0.5 - intr.cx) * d / intr.fx;
            let y = (v as f64 + 0.5 - intr.cy) * d / intr.fy;
            points.push(Point3::new(x, y, d));
            indices.push((u, v));
        }
    }
    Ok(PointCloud {
        points,
        colors: None,
        pixel_indices: Some(indices),
    })
}

/// Projects points into the image of `intr` after applying `pose`.
/// Points behind the camera are flagged, never dropped.
pub fn project(
    points: &[Point3<f64>],
    intr: &CameraIntrinsics,
    pose: &RigidPose,
) -> Vec<PixelProjection> {
    points
        .iter()
        .map(|p| {
            let q = pose.transform_point(p);
            let behind = q.z <= 0.0;
            let (u, v) = if behind {
                (f64::NAN, f64::NAN)
            } else {
                (
                    intr.fx * q.x / q.z + intr.cx,
                    intr.fy * q.y / q.z + intr.cy,
                )
            };
            PixelProjection {
                u,
                v,
                depth: q.z,
                behind,
            }
        })
        .collect()
}

/// Fits the normalized crop camera for an instance point cloud.
///
/// The normalization centers the cloud's bounding box at the origin and
/// scales its longest side to 1. The camera sits at distance 1.5 from the
/// origin along the direction toward the original viewpoint, looking at the
/// origin, with a 49.1 degree square crop.
pub fn fit_virtual_camera(cloud: &PointCloud, crop_res: u32) -> Result<VirtualCamera> {
    if cloud.len() < 4 {
        return Err(Error::DegenerateInstance(format!(
            "need at least 4 points, got {}",
            cloud.len()
        )));
    }
    let bbox = cloud.aabb().expect("non-empty cloud has a bounding box");
    let side = bbox.longest_side();
    if !(side > 0.0) {
        return Err(Error::DegenerateInstance(
            "bounding box has zero extent".to_string(),
        ));
    }
    let center = bbox.center();
    let normalization =
        SimilarityTransform::from_scale_translation(1.0 / side, -center.coords / side);

    // The original viewpoint (view-space origin) in normalized coordinates.
    let origin_n = normalization.apply(&Point3::origin());
    let dir = if origin_n.coords.norm() > 1e-9 {
        origin_n.coords.normalize()
    } else {
        -Vector3::z()
    };
    let eye = Point3::from(dir * VIRTUAL_CAMERA_DISTANCE);
    let pose = RigidPose::look_at(eye, Point3::origin())?;
    let intrinsics = fov_to_intrinsics(CROP_FOV_DEG, crop_res, crop_res)?;
    Ok(VirtualCamera {
        normalization,
        pose,
        intrinsics,
    })
}

/// Maps a reconstructed mesh from the virtual camera frame back into view
/// space, after correcting its scale by `scale` about the camera center.
pub fn object_to_view(
    mesh: &TriangleMesh,
    normalization: &SimilarityTransform,
    pose: &RigidPose,
    scale: f64,
) -> Result<TriangleMesh> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Domain(format!(
            "instance scale must be positive, got {scale}"
        )));
    }
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        let scaled = Point3::from(v.coords * scale);
        *v = normalization.apply_inverse(&pose.inverse_transform_point(&scaled));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fov_examples() {
        let intr = fov_to_intrinsics(90.0, 512, 512).unwrap();
        assert_relative_eq!(intr.fx, 256.0, max_relative = 1e-12);
        assert_relative_eq!(intr.cx, 256.0);

        // Oracle: fx = (W/2) / tan(fov/2), computed independently.
        let intr = fov_to_intrinsics(49.1, 512, 512).unwrap();
        let expected = 256.0 / (49.1_f64.to_radians() / 2.0).tan();
        assert_relative_eq!(intr.fx, expected, max_relative = 1e-12);
        assert_relative_eq!(intr.fx, 560.4441410821737, max_relative = 1e-12);
        assert_eq!(intr.fx, intr.fy);
    }

    #[test]
    fn fov_out_of_range_is_domain_error() {
        assert!(fov_to_intrinsics(180.0, 512, 512).is_err());
        assert!(fov_to_intrinsics(0.0, 512, 512).is_err());
        assert!(fov_to_intrinsics(-10.0, 512, 512).is_err());
    }

    #[test]
    fn non_square_image_uses_larger_dimension() {
        let intr = fov_to_intrinsics(90.0, 640, 480).unwrap();
        assert_relative_eq!(intr.fx, 320.0, max_relative = 1e-12);
        assert_relative_eq!(intr.cx, 320.0);
        assert_relative_eq!(intr.cy, 240.0);
    }

    #[test]
    fn unproject_principal_point() {
        // A pixel whose center sits on the principal point maps to the axis.
        let intr = CameraIntrinsics::new(100.0, 100.0, 1.5, 1.5, 3, 3).unwrap();
        let mut depth = DepthMap::invalid(3, 3);
        depth.set(1, 1, 2.0);
        let cloud = unproject(&depth, &intr, None).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_relative_eq!(cloud.points[0], Point3::new(0.0, 0.0, 2.0));
        assert_eq!(cloud.pixel_indices.as_ref().unwrap()[0], (1, 1));
    }

    #[test]
    fn unproject_all_invalid_is_empty() {
        let intr = CameraIntrinsics::new(100.0, 100.0, 2.0, 2.0, 4, 4).unwrap();
        let depth = DepthMap::invalid(4, 4);
        let cloud = unproject(&depth, &intr, None).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn unproject_two_by_two_matches_hand_computation() {
        // fx = fy = 1, cx = cy = 1: pixel (u,v) at depth d unprojects to
        // ((u - 0.5) d, (v - 0.5) d, d).
        let intr = CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 2, 2).unwrap();
        let mut depth = DepthMap::invalid(2, 2);
        depth.set(0, 0, 1.0);
        depth.set(1, 0, 2.0);
        depth.set(0, 1, 3.0);
        depth.set(1, 1, 4.0);
        let cloud = unproject(&depth, &intr, None).unwrap();
        let expected = [
            Point3::new(-0.5, -0.5, 1.0),
            Point3::new(1.0, -1.0, 2.0),
            Point3::new(-1.5, 1.5, 3.0),
            Point3::new(2.0, 2.0, 4.0),
        ];
        assert_eq!(cloud.len(), 4);
        for (p, e) in cloud.points.iter().zip(expected.iter()) {
            assert_relative_eq!(p, e, max_relative = 1e-15);
        }
    }

    #[test]
    fn unproject_resolution_mismatch() {
        let intr = CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 2, 2).unwrap();
        let depth = DepthMap::invalid(3, 2);
        assert!(matches!(
            unproject(&depth, &intr, None),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn project_axis_point_hits_principal_point() {
        let intr = CameraIntrinsics::new(500.0, 400.0, 320.0, 240.0, 640, 480).unwrap();
        let proj = project(
            &[Point3::new(0.0, 0.0, 1.0)],
            &intr,
            &RigidPose::identity(),
        );
        assert_relative_eq!(proj[0].u, 320.0);
        assert_relative_eq!(proj[0].v, 240.0);
        assert_relative_eq!(proj[0].depth, 1.0);
        assert!(!proj[0].behind);
    }

    #[test]
    fn project_flags_points_behind_camera() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let proj = project(
            &[Point3::new(0.0, 0.0, -1.0)],
            &intr,
            &RigidPose::identity(),
        );
        assert!(proj[0].behind);
    }

    #[test]
    fn project_unproject_round_trip() {
        let intr = fov_to_intrinsics(60.0, 32, 24).unwrap();
        let mut depth = DepthMap::invalid(32, 24);
        for v in 0..24 {
            for u in 0..32 {
                depth.set(u, v, 1.0 + 0.1 * (u as f64) + 0.07 * (v as f64));
            }
        }
        let cloud = unproject(&depth, &intr, None).unwrap();
        let proj = project(&cloud.points, &intr, &RigidPose::identity());
        for (pp, (u, v)) in proj.iter().zip(cloud.pixel_indices.as_ref().unwrap()) {
            assert!((pp.u - (*u as f64 + 0.5)).abs() < 1e-6);
            assert!((pp.v - (*v as f64 + 0.5)).abs() < 1e-6);
            let d = depth.get(*u, *v).unwrap();
            assert!((pp.depth - d).abs() / d < 1e-9);
        }
    }

    #[test]
    fn look_at_identity_configuration() {
        let pose = RigidPose::look_at(Point3::new(0.0, 0.0, -1.5), Point3::origin()).unwrap();
        assert_relative_eq!(pose.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(pose.translation, Vector3::new(0.0, 0.0, 1.5), epsilon = 1e-12);
        pose.validate().unwrap();
    }

    #[test]
    fn look_at_vertical_uses_fallback_up() {
        let pose = RigidPose::look_at(Point3::new(0.0, -2.0, 0.0), Point3::origin()).unwrap();
        pose.validate().unwrap();
        assert_relative_eq!(
            pose.transform_point(&Point3::origin()),
            Point3::new(0.0, 0.0, 2.0),
            epsilon = 1e-12
        );
    }

    fn unit_cube_corners() -> PointCloud {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [2.0, 3.0] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        PointCloud::from_points(pts)
    }

    #[test]
    fn virtual_camera_unit_cube() {
        let cloud = unit_cube_corners();
        let cam = fit_virtual_camera(&cloud, 512).unwrap();
        assert_relative_eq!(cam.normalization.scale, 1.0, max_relative = 1e-12);
        let centroid = Point3::new(0.5, 0.5, 2.5);
        let eye = cam.pose.camera_center();
        // Camera center is expressed in normalized coordinates; distance to
        // the normalized centroid (origin) is 1.5, i.e. 1.5 in view units
        // since the scale is 1.
        assert_relative_eq!(eye.coords.norm(), 1.5, max_relative = 1e-9);
        let eye_view = cam.normalization.apply_inverse(&eye);
        assert_relative_eq!((eye_view - centroid).norm(), 1.5, max_relative = 1e-9);
    }

    #[test]
    fn virtual_camera_scale_invariance() {
        let cloud = unit_cube_corners();
        let cam_a = fit_virtual_camera(&cloud, 512).unwrap();
        let scaled = cloud.map_points(|p| Point3::from(p.coords * 10.0));
        let cam_b = fit_virtual_camera(&scaled, 512).unwrap();
        assert_relative_eq!(cam_b.normalization.scale, 0.1, max_relative = 1e-12);
        for p in &cloud.points {
            let a = cam_a.normalization.apply(p);
            let b = cam_b.normalization.apply(&Point3::from(p.coords * 10.0));
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        assert_eq!(cam_a.intrinsics, cam_b.intrinsics);
        assert_relative_eq!(cam_a.pose.rotation, cam_b.pose.rotation, epsilon = 1e-9);
    }

    #[test]
    fn virtual_camera_elongated_cloud() {
        // Extent 2 x 1 x 1: longest side maps to 1, so the scale is 0.5.
        let pts = vec![
            Point3::new(0.0, 0.0, 2.0),
            Point3::new(2.0, 0.0, 2.0),
            Point3::new(0.0, 1.0, 2.0),
            Point3::new(2.0, 1.0, 3.0),
            Point3::new(1.0, 0.5, 2.5),
        ];
        let cam = fit_virtual_camera(&PointCloud::from_points(pts), 512).unwrap();
        assert_relative_eq!(cam.normalization.scale, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn virtual_camera_degenerate_inputs() {
        let few = PointCloud::from_points(vec![
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(1.0, 0.0, 1.0),
            Point3::new(0.0, 1.0, 1.0),
        ]);
        assert!(matches!(
            fit_virtual_camera(&few, 512),
            Err(Error::DegenerateInstance(_))
        ));
        let flat = PointCloud::from_points(vec![Point3::new(1.0, 1.0, 1.0); 5]);
        assert!(matches!(
            fit_virtual_camera(&flat, 512),
            Err(Error::DegenerateInstance(_))
        ));
    }

    #[test]
    fn object_to_view_round_trip() {
        let cloud = unit_cube_corners();
        let cam = fit_virtual_camera(&cloud, 512).unwrap();
        let mesh = TriangleMesh {
            vertices: cloud.points.clone(),
            faces: vec![[0, 1, 2], [3, 4, 5]],
            vertex_colors: None,
        };
        let mut forward = mesh.clone();
        for v in &mut forward.vertices {
            *v = cam.view_to_camera(v);
        }
        let back = object_to_view(&forward, &cam.normalization, &cam.pose, 1.0).unwrap();
        for (a, b) in back.vertices.iter().zip(mesh.vertices.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        assert_eq!(back.faces, mesh.faces);
    }

    #[test]
    fn object_to_view_identity() {
        let mesh = TriangleMesh {
            vertices: vec![Point3::new(0.3, -0.2, 0.9)],
            faces: vec![],
            vertex_colors: None,
        };
        let out = object_to_view(
            &mesh,
            &SimilarityTransform::identity(),
            &RigidPose::identity(),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(out.vertices[0], mesh.vertices[0]);
    }

    #[test]
    fn object_to_view_scales_distances() {
        let mesh = TriangleMesh {
            vertices: vec![
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            faces: vec![[0, 1, 2]],
            vertex_colors: None,
        };
        let cloud = unit_cube_corners();
        let cam = fit_virtual_camera(&cloud, 512).unwrap();
        let s1 = object_to_view(&mesh, &cam.normalization, &cam.pose, 1.0).unwrap();
        let s25 = object_to_view(&mesh, &cam.normalization, &cam.pose, 2.5).unwrap();
        let d1 = (s1.vertices[0] - s1.vertices[1]).norm();
        let d25 = (s25.vertices[0] - s25.vertices[1]).norm();
        assert_relative_eq!(d25 / d1, 2.5, max_relative = 1e-9);
    }

    #[test]
    fn object_to_view_rejects_bad_scale() {
        let mesh = TriangleMesh {
            vertices: vec![Point3::origin()],
            faces: vec![],
            vertex_colors: None,
        };
        assert!(object_to_view(
            &mesh,
            &SimilarityTransform::identity(),
            &RigidPose::identity(),
            0.0
        )
        .is_err());
        assert!(object_to_view(
            &mesh,
            &SimilarityTransform::identity(),
            &RigidPose::identity(),
            -2.0
        )
        .is_err());
    }

    #[test]
    fn similarity_inverse_and_compose() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.5, 1.1);
        let t = SimilarityTransform {
            scale: 2.5,
            rotation: *rot.matrix(),
            translation: Vector3::new(0.4, -1.0, 2.0),
        };
        let p = Point3::new(0.7, 0.2, -0.3);
        assert_relative_eq!(t.apply_inverse(&t.apply(&p)), p, epsilon = 1e-12);
        assert_relative_eq!(t.inverse().apply(&t.apply(&p)), p, epsilon = 1e-12);
        let u = SimilarityTransform::from_scale_translation(0.5, Vector3::new(1.0, 0.0, 0.0));
        let c = t.compose(&u);
        assert_relative_eq!(c.apply(&p), t.apply(&u.apply(&p)), epsilon = 1e-12);
    }
}
