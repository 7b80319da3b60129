//! Triangle meshes, scalar grids, frustum-grid field sampling, isosurface
//! extraction, surface point sampling, and scene merging.

mod io;
mod marching;
mod tables;

pub use io::{read_mesh, read_obj, read_ply, write_obj, write_obj_scene, write_ply};
pub use marching::marching_cubes;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Aabb;
use crate::camera::CameraIntrinsics;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Indexed triangle mesh in scene units.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
    /// Optional per-vertex RGB in [0, 1].
    pub vertex_colors: Option<Vec<[f32; 3]>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Checks index bounds, repeated indices within a face, finite
    /// coordinates, and color array length.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&k| k >= n) {
                return Err(Error::DegenerateMesh(format!(
                    "face {i} references vertex out of range (vertex count {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateMesh(format!(
                    "face {i} repeats a vertex index"
                )));
            }
        }
        if self.vertices.iter().any(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::DegenerateMesh(
                "mesh contains a non-finite vertex".to_string(),
            ));
        }
        if let Some(colors) = &self.vertex_colors {
            if colors.len() != self.vertices.len() {
                return Err(Error::DegenerateMesh(format!(
                    "{} colors for {} vertices",
                    colors.len(),
                    self.vertices.len()
                )));
            }
        }
        Ok(())
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn face_area(&self, face: &[u32; 3]) -> f64 {
        let a = self.vertices[face[0] as usize];
        let b = self.vertices[face[1] as usize];
        let c = self.vertices[face[2] as usize];
        (b - a).cross(&(c - a)).norm() * 0.5
    }

    pub fn area(&self) -> f64 {
        self.faces.iter().map(|f| self.face_area(f)).sum()
    }

    /// Unnormalized face normal (cross product of the edge vectors).
    pub fn face_normal(&self, face: &[u32; 3]) -> Vector3<f64> {
        let a = self.vertices[face[0] as usize];
        let b = self.vertices[face[1] as usize];
        let c = self.vertices[face[2] as usize];
        (b - a).cross(&(c - a))
    }

    /// Returns a copy with every vertex mapped through `f`.
    pub fn map_vertices<F: Fn(&Point3<f64>) -> Point3<f64>>(&self, f: F) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            vertex_colors: self.vertex_colors.clone(),
        }
    }
}

/// Dense scalar samples on a regular lattice spanning `bounds` inclusively.
/// Values are stored x-fastest, then y, then z.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub dims: (usize, usize, usize),
    pub bounds: Aabb,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: (usize, usize, usize), bounds: Aabb, values: Vec<f64>) -> Result<Self> {
        if dims.0 < 2 || dims.1 < 2 || dims.2 < 2 {
            return Err(Error::Domain(format!(
                "grid needs at least 2 samples per axis, got {dims:?}"
            )));
        }
        if values.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {:?} grid",
                values.len(),
                dims
            )));
        }
        let e = bounds.extents();
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
            return Err(Error::Domain("grid bounds are degenerate".to_string()));
        }
        Ok(Self {
            dims,
            bounds,
            values,
        })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    /// World position of lattice point (x, y, z).
    pub fn position(&self, x: usize, y: usize, z: usize) -> Point3<f64> {
        let e = self.bounds.extents();
        Point3::new(
            self.bounds.min.x + e.x * (x as f64) / ((self.dims.0 - 1) as f64),
            self.bounds.min.y + e.y * (y as f64) / ((self.dims.1 - 1) as f64),
            self.bounds.min.z + e.z * (z as f64) / ((self.dims.2 - 1) as f64),
        )
    }

    /// Longest lattice spacing across the three axes.
    pub fn voxel_size(&self) -> f64 {
        let e = self.bounds.extents();
        (e.x / (self.dims.0 - 1) as f64)
            .max(e.y / (self.dims.1 - 1) as f64)
            .max(e.z / (self.dims.2 - 1) as f64)
    }
}

/// Samples a scalar field over the axis-aligned box of the camera frustum
/// between the near and far planes. Lattice points outside the frustum get
/// the sentinel value `far`, which clips extraction to the frustum.
///
/// `field` receives a batch of view-space points and returns one value per
/// point; batches are evaluated in parallel over z-slabs.
pub fn sample_frustum_grid<F>(
    field: F,
    intr: &CameraIntrinsics,
    near: f64,
    far: f64,
    resolution: (usize, usize, usize),
) -> Result<ScalarGrid>
where
    F: Fn(&[Point3<f64>]) -> Vec<f64> + Sync,
{
    if !(near > 0.0 && far > near) {
        return Err(Error::Domain(format!(
            "invalid depth range [{near}, {far}]"
        )));
    }
    if resolution.0 < 2 || resolution.1 < 2 || resolution.2 < 2 {
        return Err(Error::Domain(format!(
            "grid resolution must be at least 2 per axis, got {resolution:?}"
        )));
    }
    let mut corners = Vec::with_capacity(8);
    for d in [near, far] {
        for (u, v) in [
            (0.0, 0.0),
            (intr.width as f64, 0.0),
            (0.0, intr.height as f64),
            (intr.width as f64, intr.height as f64),
        ] {
            corners.push(Point3::new(
                (u - intr.cx) * d / intr.fx,
                (v - intr.cy) * d / intr.fy,
                d,
            ));
        }
    }
    let bounds = Aabb::from_points(corners.iter()).expect("eight corners");

    let in_frustum = |p: &Point3<f64>| -> bool {
        if p.z < near || p.z > far {
            return false;
        }
        let u = intr.fx * p.x / p.z + intr.cx;
        let v = intr.fy * p.y / p.z + intr.cy;
        u >= 0.0 && u <= intr.width as f64 && v >= 0.0 && v <= intr.height as f64
    };

    let (nx, ny, nz) = resolution;
    let grid_shell = ScalarGrid::new((nx, ny, nz), bounds, vec![0.0; nx * ny * nz])?;
    let slabs: Vec<Vec<f64>> = (0..nz)
        .into_par_iter()
        .map(|z| {
            let mut points = Vec::with_capacity(nx * ny);
            let mut inside = Vec::with_capacity(nx * ny);
            for y in 0..ny {
                for x in 0..nx {
                    let p = grid_shell.position(x, y, z);
                    inside.push(in_frustum(&p));
                    points.push(p);
                }
            }
            let inner: Vec<Point3<f64>> = points
                .iter()
                .zip(&inside)
                .filter(|(_, ok)| **ok)
                .map(|(p, _)| *p)
                .collect();
            let values = field(&inner);
            debug_assert_eq!(values.len(), inner.len());
            let mut slab = vec![far; nx * ny];
            let mut k = 0;
            for (i, ok) in inside.iter().enumerate() {
                if *ok {
                    slab[i] = values[k];
                    k += 1;
                }
            }
            slab
        })
        .collect();
    let values: Vec<f64> = slabs.into_iter().flatten().collect();
    ScalarGrid::new(resolution, bounds, values)
}

/// Draws `n` points uniformly over the mesh surface: faces chosen with
/// probability proportional to area, positions by the square-root
/// barycentric trick. Deterministic per seed.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.faces.is_empty() {
        return Err(Error::DegenerateMesh(
            "cannot sample an empty mesh".to_string(),
        ));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in &mesh.faces {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateMesh(
            "mesh has zero total surface area".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random_range(0.0..total);
        let face_idx = cumulative.partition_point(|&c| c <= target);
        let f = &mesh.faces[face_idx.min(mesh.faces.len() - 1)];
        let a = mesh.vertices[f[0] as usize];
        let b = mesh.vertices[f[1] as usize];
        let c = mesh.vertices[f[2] as usize];
        let su = rng.random_range(0.0f64..1.0).sqrt();
        let v = rng.random_range(0.0f64..1.0);
        let w0 = 1.0 - su;
        let w1 = su * (1.0 - v);
        let w2 = su * v;
        points.push(Point3::from(
            a.coords * w0 + b.coords * w1 + c.coords * w2,
        ));
    }
    Ok(PointCloud::from_points(points))
}

/// Provenance of one component inside a merged scene mesh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneComponent {
    pub label: String,
    pub vertex_offset: usize,
    pub vertex_count: usize,
    pub face_offset: usize,
    pub face_count: usize,
    /// Whether the source mesh carried vertex colors.
    pub had_colors: bool,
}

/// A scene mesh assembled from labeled components.
#[derive(Debug, Clone, Default)]
pub struct MergedScene {
    pub mesh: TriangleMesh,
    pub components: Vec<SceneComponent>,
}

/// Concatenates meshes with index offsetting, retaining per-component
/// provenance for export as named groups.
pub fn merge_scene(parts: &[(String, TriangleMesh)]) -> MergedScene {
    let any_colors = parts.iter().any(|(_, m)| m.vertex_colors.is_some());
    let mut mesh = TriangleMesh::default();
    if any_colors {
        mesh.vertex_colors = Some(Vec::new());
    }
    let mut components = Vec::with_capacity(parts.len());
    for (label, part) in parts {
        let vertex_offset = mesh.vertices.len();
        let face_offset = mesh.faces.len();
        mesh.vertices.extend_from_slice(&part.vertices);
        mesh.faces.extend(
            part.faces
                .iter()
                .map(|f| f.map(|i| i + vertex_offset as u32)),
        );
        if let Some(colors) = &mut mesh.vertex_colors {
            match &part.vertex_colors {
                Some(c) => colors.extend_from_slice(c),
                None => colors.extend(std::iter::repeat_n([0.5f32; 3], part.vertices.len())),
            }
        }
        components.push(SceneComponent {
            label: label.clone(),
            vertex_offset,
            vertex_count: part.vertices.len(),
            face_offset,
            face_count: part.faces.len(),
            had_colors: part.vertex_colors.is_some(),
        });
    }
    MergedScene { mesh, components }
}

impl MergedScene {
    /// Recovers the original labeled meshes, bit-identical to the inputs
    /// of `merge_scene`.
    pub fn split(&self) -> Vec<(String, TriangleMesh)> {
        self.components
            .iter()
            .map(|c| {
                let vertices =
                    self.mesh.vertices[c.vertex_offset..c.vertex_offset + c.vertex_count].to_vec();
                let faces = self.mesh.faces[c.face_offset..c.face_offset + c.face_count]
                    .iter()
                    .map(|f| f.map(|i| i - c.vertex_offset as u32))
                    .collect();
                let vertex_colors = if c.had_colors {
                    self.mesh.vertex_colors.as_ref().map(|colors| {
                        colors[c.vertex_offset..c.vertex_offset + c.vertex_count].to_vec()
                    })
                } else {
                    None
                };
                (
                    c.label.clone(),
                    TriangleMesh {
                        vertices,
                        faces,
                        vertex_colors,
                    },
                )
            })
            .collect()
    }

    /// Extracts one component by label.
    pub fn component_mesh(&self, label: &str) -> Option<TriangleMesh> {
        self.split()
            .into_iter()
            .find(|(l, _)| l == label)
            .map(|(_, m)| m)
    }
}
