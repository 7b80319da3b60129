//! Scene data model: depth maps, entity masks, instance records, manifest
//! ingestion/validation, stuff/thing partitioning, and affine-to-metric
//! depth alignment.

use std::fmt;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, RigidPose};
use crate::error::{Error, Result};
use crate::img;
use crate::pfm;

/// Per-pixel depth in scene units. A pixel is valid when its value is
/// finite and strictly positive; everything else reads as `None`.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    values: Vec<f64>,
}

/// Bit-pattern equality, so maps with invalid (NaN) pixels compare equal
/// to their clones.
impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl DepthMap {
    /// A map of the given size with every pixel invalid.
    pub fn invalid(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![f64::NAN; (width as usize) * (height as usize)],
        }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} depth map",
                values.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    #[inline]
    fn index(&self, u: u32, v: u32) -> usize {
        debug_assert!(u < self.width && v < self.height);
        (v as usize) * (self.width as usize) + (u as usize)
    }

    /// Depth at (u, v); `None` for invalid pixels.
    #[inline]
    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        let d = self.values[self.index(u, v)];
        (d.is_finite() && d > 0.0).then_some(d)
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: f64) {
        let i = self.index(u, v);
        self.values[i] = value;
    }

    pub fn invalidate(&mut self, u: u32, v: u32) {
        let i = self.index(u, v);
        self.values[i] = f64::NAN;
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|d| d.is_finite() && **d > 0.0).count()
    }

    /// Iterates valid pixels as (u, v, depth).
    pub fn iter_valid(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.values.iter().enumerate().filter_map(move |(i, &d)| {
            (d.is_finite() && d > 0.0).then(|| {
                let u = (i % self.width as usize) as u32;
                let v = (i / self.width as usize) as u32;
                (u, v, d)
            })
        })
    }

    /// Applies `d -> scale * d + shift` to every valid pixel; results that
    /// are not positive become invalid.
    pub fn affine_rectified(&self, scale: f64, shift: f64) -> DepthMap {
        let mut out = DepthMap::invalid(self.width, self.height);
        for (u, v, d) in self.iter_valid() {
            out.set(u, v, scale * d + shift);
        }
        out
    }

    /// Smallest and largest valid depth, when any pixel is valid.
    pub fn depth_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for (_, _, d) in self.iter_valid() {
            range = Some(match range {
                None => (d, d),
                Some((lo, hi)) => (lo.min(d), hi.max(d)),
            });
        }
        range
    }
}

/// Per-pixel boolean mask at image resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl EntityMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[(v as usize) * (self.width as usize) + (u as usize)]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        self.bits[(v as usize) * (self.width as usize) + (u as usize)] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Pixels set in both masks.
    pub fn overlap_count(&self, other: &EntityMask) -> usize {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .filter(|(a, b)| **a && **b)
            .count()
    }

    /// In-place union.
    pub fn union_with(&mut self, other: &EntityMask) {
        for (a, b) in self.bits.iter_mut().zip(other.bits.iter()) {
            *a |= *b;
        }
    }

    /// Inclusive bounding box (u0, v0, u1, v1) of set pixels.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bb: Option<(u32, u32, u32, u32)> = None;
        for v in 0..self.height {
            for u in 0..self.width {
                if self.get(u, v) {
                    bb = Some(match bb {
                        None => (u, v, u, v),
                        Some((u0, v0, u1, v1)) => (u0.min(u), v0.min(v), u1.max(u), v1.max(v)),
                    });
                }
            }
        }
        bb
    }

    /// Loads a PNG; any nonzero sample is a set pixel.
    pub fn from_png(path: &Path) -> Result<Self> {
        let gray = image::open(path)?.to_luma8();
        let (width, height) = gray.dimensions();
        let bits = gray.pixels().map(|p| p.0[0] != 0).collect();
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Writes an 8-bit grayscale PNG with 0/255 samples.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut gray = image::GrayImage::new(self.width, self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                gray.put_pixel(u, v, image::Luma([if self.get(u, v) { 255 } else { 0 }]));
            }
        }
        gray.save(path)?;
        Ok(())
    }
}

/// Whether an entity is a countable foreground object or amorphous
/// background matter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityCategory {
    Thing,
    Stuff,
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityCategory::Thing => write!(f, "thing"),
            EntityCategory::Stuff => write!(f, "stuff"),
        }
    }
}

/// One segmented entity with its mask and optional per-instance data.
#[derive(Debug, Clone)]
pub struct InstanceRecord {
    pub id: String,
    pub label: String,
    pub category: EntityCategory,
    pub mask: EntityMask,
    /// RGB region covering exactly the mask's bounding box.
    pub crop_rgb: Option<RgbImage>,
    /// Depth region covering exactly the mask's bounding box.
    pub crop_depth: Option<DepthMap>,
    /// External reconstruction for this instance, resolved to an absolute path.
    pub recon_mesh_path: Option<PathBuf>,
}

/// How the manifest's depth map relates to scene units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    Metric,
    Affine,
}

/// A fully loaded and validated scene.
#[derive(Debug, Clone)]
pub struct SceneManifest {
    /// Directory the manifest was loaded from; referenced paths resolve
    /// relative to it.
    pub root: PathBuf,
    pub image: RgbImage,
    pub depth: DepthMap,
    pub depth_kind: DepthKind,
    pub units: String,
    pub camera: CameraIntrinsics,
    pub camera_pose: Option<RigidPose>,
    pub metric_anchor: Option<DepthMap>,
    pub instances: Vec<InstanceRecord>,
}

// ---------------------------------------------------------------------------
// On-disk manifest schema
// ---------------------------------------------------------------------------

/// JSON document shape of a scene manifest. All paths are relative to the
/// manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub schema_version: u32,
    pub image: String,
    pub depth: String,
    pub depth_kind: DepthKind,
    #[serde(default = "default_units")]
    pub units: String,
    pub camera: ManifestCamera,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_anchor: Option<String>,
    #[serde(default)]
    pub instances: Vec<ManifestInstance>,
}

fn default_units() -> String {
    "scene".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<ManifestPose>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestPose {
    /// Row-major world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestInstance {
    pub id: String,
    pub label: String,
    pub category: EntityCategory,
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_rgb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recon_mesh: Option<String>,
}

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

fn ingest(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.into(),
        message: message.into(),
    }
}

impl ManifestPose {
    pub fn to_pose(&self) -> RigidPose {
        RigidPose {
            rotation: nalgebra::Matrix3::from_iterator(
                // from_iterator fills column-major; transpose the rows in.
                (0..3).flat_map(|c| (0..3).map(move |r| self.rotation[r][c])),
            ),
            translation: nalgebra::Vector3::from_column_slice(&self.translation),
        }
    }

    pub fn from_pose(pose: &RigidPose) -> Self {
        let r = &pose.rotation;
        Self {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [pose.translation.x, pose.translation.y, pose.translation.z],
        }
    }
}

/// Loads and fully validates a scene manifest. Violations carry the JSON
/// field path of the offending entry.
pub fn load_manifest(path: &Path) -> Result<SceneManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ingest(path.display().to_string(), format!("cannot read: {e}")))?;
    let doc: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| ingest(path.display().to_string(), format!("invalid JSON: {e}")))?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    if doc.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(ingest(
            "schema_version",
            format!(
                "unsupported version {} (expected {MANIFEST_SCHEMA_VERSION})",
                doc.schema_version
            ),
        ));
    }

    let camera = CameraIntrinsics::new(
        doc.camera.fx,
        doc.camera.fy,
        doc.camera.cx,
        doc.camera.cy,
        doc.camera.width,
        doc.camera.height,
    )
    .map_err(|e| ingest("camera", e.to_string()))?;
    let camera_pose = match &doc.camera.pose {
        Some(p) => {
            let pose = p.to_pose();
            pose.validate()
                .map_err(|e| ingest("camera.pose", e.to_string()))?;
            Some(pose)
        }
        None => None,
    };

    let image = img::load_rgb(&root.join(&doc.image)).map_err(|e| ingest("image", e.to_string()))?;
    if image.dimensions() != (camera.width, camera.height) {
        return Err(ingest(
            "image",
            format!(
                "image is {}x{} but the camera describes {}x{}",
                image.width(),
                image.height(),
                camera.width,
                camera.height
            ),
        ));
    }

    let depth =
        pfm::read_pfm(&root.join(&doc.depth)).map_err(|e| ingest("depth", e.to_string()))?;
    if (depth.width, depth.height) != (camera.width, camera.height) {
        return Err(ingest(
            "depth",
            format!(
                "depth map is {}x{}, expected {}x{}",
                depth.width, depth.height, camera.width, camera.height
            ),
        ));
    }

    let metric_anchor = match &doc.metric_anchor {
        Some(rel) => {
            let anchor = pfm::read_pfm(&root.join(rel))
                .map_err(|e| ingest("metric_anchor", e.to_string()))?;
            if (anchor.width, anchor.height) != (camera.width, camera.height) {
                return Err(ingest(
                    "metric_anchor",
                    format!(
                        "anchor is {}x{}, expected {}x{}",
                        anchor.width, anchor.height, camera.width, camera.height
                    ),
                ));
            }
            Some(anchor)
        }
        None => None,
    };

    let mut instances = Vec::with_capacity(doc.instances.len());
    for (i, inst) in doc.instances.iter().enumerate() {
        let field = |name: &str| format!("instances[{i}].{name}");
        if instances.iter().any(|r: &InstanceRecord| r.id == inst.id) {
            return Err(ingest(field("id"), format!("duplicate id '{}'", inst.id)));
        }
        let mask = EntityMask::from_png(&root.join(&inst.mask))
            .map_err(|e| ingest(field("mask"), e.to_string()))?;
        if (mask.width, mask.height) != (camera.width, camera.height) {
            return Err(ingest(
                field("mask"),
                format!(
                    "instance '{}' mask is {}x{}, expected {}x{}",
                    inst.id, mask.width, mask.height, camera.width, camera.height
                ),
            ));
        }
        let bbox = mask.bbox();
        let crop_rgb = match &inst.crop_rgb {
            Some(rel) => {
                let crop =
                    img::load_rgb(&root.join(rel)).map_err(|e| ingest(field("crop_rgb"), e.to_string()))?;
                validate_crop_dims(crop.dimensions(), bbox, &field("crop_rgb"))?;
                Some(crop)
            }
            None => None,
        };
        let crop_depth = match &inst.crop_depth {
            Some(rel) => {
                let crop = pfm::read_pfm(&root.join(rel))
                    .map_err(|e| ingest(field("crop_depth"), e.to_string()))?;
                validate_crop_dims((crop.width, crop.height), bbox, &field("crop_depth"))?;
                Some(crop)
            }
            None => None,
        };
        let recon_mesh_path = match &inst.recon_mesh {
            Some(rel) => {
                let abs = root.join(rel);
                // Referenced meshes must exist and parse.
                crate::mesh::read_mesh(&abs)
                    .map_err(|e| ingest(field("recon_mesh"), e.to_string()))?;
                Some(abs)
            }
            None => None,
        };
        instances.push(InstanceRecord {
            id: inst.id.clone(),
            label: inst.label.clone(),
            category: inst.category,
            mask,
            crop_rgb,
            crop_depth,
            recon_mesh_path,
        });
    }

    // Entity masks must partition the image: any overlap is bad input.
    for i in 0..instances.len() {
        for j in (i + 1)..instances.len() {
            let overlap = instances[i].mask.overlap_count(&instances[j].mask);
            if overlap > 0 {
                return Err(ingest(
                    format!("instances[{i}].mask"),
                    format!(
                        "mask of '{}' overlaps mask of '{}' on {} pixels",
                        instances[i].id, instances[j].id, overlap
                    ),
                ));
            }
        }
    }

    Ok(SceneManifest {
        root,
        image,
        depth,
        depth_kind: doc.depth_kind,
        units: doc.units,
        camera,
        camera_pose,
        metric_anchor,
        instances,
    })
}

fn validate_crop_dims(
    dims: (u32, u32),
    bbox: Option<(u32, u32, u32, u32)>,
    field: &str,
) -> Result<()> {
    let Some((u0, v0, u1, v1)) = bbox else {
        return Err(ingest(
            field.to_string(),
            "crop region present but the mask is empty".to_string(),
        ));
    };
    let expected = (u1 - u0 + 1, v1 - v0 + 1);
    if dims != expected {
        return Err(ingest(
            field.to_string(),
            format!(
                "crop region is {}x{} but the mask bounding box is {}x{}",
                dims.0, dims.1, expected.0, expected.1
            ),
        ));
    }
    Ok(())
}

/// Result of the affine-depth alignment `anchor ~= scale * affine + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleShiftFit {
    pub scale: f64,
    pub shift: f64,
    /// Set when the recovered scale is not positive; the fit is still
    /// returned since the least-squares problem is well posed.
    pub non_positive_scale: bool,
}

/// Closed-form least squares for the two unknowns relating an
/// affine-invariant depth prediction to a metric anchor, over pixels valid
/// in both maps.
pub fn fit_scale_shift(affine: &DepthMap, anchor: &DepthMap) -> Result<ScaleShiftFit> {
    if (affine.width, affine.height) != (anchor.width, anchor.height) {
        return Err(Error::DimensionMismatch(format!(
            "affine map is {}x{}, anchor is {}x{}",
            affine.width, affine.height, anchor.width, anchor.height
        )));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (u, v, a) in affine.iter_valid() {
        if let Some(m) = anchor.get(u, v) {
            pairs.push((a, m));
        }
    }
    let n = pairs.len();
    if n < 2 {
        return Err(Error::RankDeficient(format!(
            "need at least 2 jointly valid pixels, got {n}"
        )));
    }
    let mean_a = pairs.iter().map(|(a, _)| a).sum::<f64>() / n as f64;
    let mean_m = pairs.iter().map(|(_, m)| m).sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (a, m) in &pairs {
        let da = a - mean_a;
        cov += da * (m - mean_m);
        var += da * da;
    }
    if var == 0.0 {
        return Err(Error::RankDeficient(
            "all affine depth values are equal".to_string(),
        ));
    }
    let scale = cov / var;
    let shift = mean_m - scale * mean_a;
    Ok(ScaleShiftFit {
        scale,
        shift,
        non_positive_scale: scale <= 0.0,
    })
}

/// Splits the manifest's entities into foreground things and the pixelwise
/// union of all stuff masks.
pub fn partition_entities(manifest: &SceneManifest) -> (Vec<&InstanceRecord>, EntityMask) {
    let mut things = Vec::new();
    let mut stuff_union = EntityMask::empty(manifest.camera.width, manifest.camera.height);
    for inst in &manifest.instances {
        match inst.category {
            EntityCategory::Thing => things.push(inst),
            EntityCategory::Stuff => stuff_union.union_with(&inst.mask),
        }
    }
    (things, stuff_union)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn map_from(values: &[f64], width: u32, height: u32) -> DepthMap {
        DepthMap::from_values(width, height, values.to_vec()).unwrap()
    }

    #[test]
    fn scale_shift_exact_linear_relation() {
        let affine = map_from(&[1.0, 2.0, 3.0], 3, 1);
        let anchor = map_from(&[2.0, 4.0, 6.0], 3, 1);
        let fit = fit_scale_shift(&affine, &anchor).unwrap();
        assert!((fit.scale - 2.0).abs() < 1e-12);
        assert!(fit.shift.abs() < 1e-12);
        assert!(!fit.non_positive_scale);
    }

    #[test]
    fn scale_shift_constant_target() {
        let affine = map_from(&[1.0, 2.0], 2, 1);
        let anchor = map_from(&[3.0, 3.0], 2, 1);
        let fit = fit_scale_shift(&affine, &anchor).unwrap();
        assert!(fit.scale.abs() < 1e-12);
        assert_relative_eq!(fit.shift, 3.0, max_relative = 1e-12);
        assert!(fit.non_positive_scale);
    }

    #[test]
    fn scale_shift_recovers_known_transform() {
        // Oracle: apply a known (s*, t*) to synthetic depth, then solve the
        // centered normal equations independently of the implementation.
        let (s_true, t_true) = (0.73, 1.9);
        let mut affine = DepthMap::invalid(16, 16);
        let mut anchor = DepthMap::invalid(16, 16);
        let mut k = 0u32;
        for v in 0..16 {
            for u in 0..16 {
                let a = 1.0 + 0.01 * f64::from(k) + 0.3 * f64::from(u % 3);
                affine.set(u, v, a);
                anchor.set(u, v, s_true * a + t_true);
                k += 1;
            }
        }
        let fit = fit_scale_shift(&affine, &anchor).unwrap();
        assert_relative_eq!(fit.scale, s_true, max_relative = 1e-9);
        assert_relative_eq!(fit.shift, t_true, max_relative = 1e-9);
    }

    #[test]
    fn scale_shift_rank_deficient_inputs() {
        let affine = map_from(&[2.0, 2.0, 2.0], 3, 1);
        let anchor = map_from(&[1.0, 2.0, 3.0], 3, 1);
        assert!(matches!(
            fit_scale_shift(&affine, &anchor),
            Err(Error::RankDeficient(_))
        ));

        let affine = map_from(&[1.0, f64::NAN, f64::NAN], 3, 1);
        let anchor = map_from(&[1.0, 2.0, 3.0], 3, 1);
        assert!(matches!(
            fit_scale_shift(&affine, &anchor),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn scale_shift_anchor_equivariance() {
        let affine = map_from(&[1.0, 2.0, 4.0, 5.5], 4, 1);
        let anchor = map_from(&[2.1, 3.9, 8.2, 10.9], 4, 1);
        let base = fit_scale_shift(&affine, &anchor).unwrap();
        let k = 3.7;
        let scaled = map_from(&[2.1 * k, 3.9 * k, 8.2 * k, 10.9 * k], 4, 1);
        let fit = fit_scale_shift(&affine, &scaled).unwrap();
        assert_relative_eq!(fit.scale, k * base.scale, max_relative = 1e-12);
        assert_relative_eq!(fit.shift, k * base.shift, max_relative = 1e-12);
    }

    #[test]
    fn depth_validity_semantics() {
        let mut d = DepthMap::invalid(2, 1);
        assert_eq!(d.get(0, 0), None);
        d.set(0, 0, 1.5);
        assert_eq!(d.get(0, 0), Some(1.5));
        d.set(0, 0, -1.0);
        assert_eq!(d.get(0, 0), None);
        d.set(0, 0, f64::INFINITY);
        assert_eq!(d.get(0, 0), None);
        d.set(1, 0, 2.0);
        assert_eq!(d.valid_count(), 1);
    }

    #[test]
    fn mask_bbox_and_union() {
        let mut a = EntityMask::empty(4, 4);
        a.set(1, 1, true);
        a.set(2, 3, true);
        assert_eq!(a.bbox(), Some((1, 1, 2, 3)));
        let mut b = EntityMask::empty(4, 4);
        b.set(0, 0, true);
        let mut u = a.clone();
        u.union_with(&b);
        assert_eq!(u.count(), 3);
        assert_eq!(a.overlap_count(&b), 0);
        b.set(1, 1, true);
        assert_eq!(a.overlap_count(&b), 1);
    }

    fn empty_scene(instances: Vec<InstanceRecord>) -> SceneManifest {
        SceneManifest {
            root: PathBuf::new(),
            image: RgbImage::new(4, 4),
            depth: DepthMap::invalid(4, 4),
            depth_kind: DepthKind::Metric,
            units: "scene".into(),
            camera: CameraIntrinsics::new(1.0, 1.0, 2.0, 2.0, 4, 4).unwrap(),
            camera_pose: None,
            metric_anchor: None,
            instances,
        }
    }

    fn instance(id: &str, category: EntityCategory, pixels: &[(u32, u32)]) -> InstanceRecord {
        let mut mask = EntityMask::empty(4, 4);
        for &(u, v) in pixels {
            mask.set(u, v, true);
        }
        InstanceRecord {
            id: id.into(),
            label: id.into(),
            category,
            mask,
            crop_rgb: None,
            crop_depth: None,
            recon_mesh_path: None,
        }
    }

    #[test]
    fn partition_splits_by_category() {
        let scene = empty_scene(vec![
            instance("a", EntityCategory::Thing, &[(0, 0)]),
            instance("b", EntityCategory::Stuff, &[(1, 0), (2, 0)]),
            instance("c", EntityCategory::Thing, &[(3, 0)]),
            instance("d", EntityCategory::Stuff, &[(0, 1)]),
        ]);
        let (things, stuff) = partition_entities(&scene);
        assert_eq!(things.len(), 2);
        assert_eq!(stuff.count(), 3);
        assert!(stuff.get(1, 0) && stuff.get(2, 0) && stuff.get(0, 1));
        // Every masked pixel lands in exactly one side of the partition.
        for inst in &scene.instances {
            for v in 0..4 {
                for u in 0..4 {
                    if inst.mask.get(u, v) {
                        let in_thing = things.iter().any(|t| t.mask.get(u, v));
                        assert_ne!(in_thing, stuff.get(u, v));
                    }
                }
            }
        }
    }

    #[test]
    fn partition_all_stuff_and_empty() {
        let scene = empty_scene(vec![
            instance("a", EntityCategory::Stuff, &[(0, 0)]),
            instance("b", EntityCategory::Stuff, &[(1, 1)]),
        ]);
        let (things, stuff) = partition_entities(&scene);
        assert!(things.is_empty());
        assert_eq!(stuff.count(), 2);

        let scene = empty_scene(vec![]);
        let (things, stuff) = partition_entities(&scene);
        assert!(things.is_empty());
        assert!(stuff.is_empty());
    }
}
