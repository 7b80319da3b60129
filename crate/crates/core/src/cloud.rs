//! Point clouds in view space.

use nalgebra::Point3;

use crate::bounds::Aabb;

/// A set of 3D points in scene units, optionally carrying per-point colors
/// and the source pixel each point was unprojected from.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    /// Per-point RGB, same length as `points` when present.
    pub colors: Option<Vec<[u8; 3]>>,
    /// Source pixel (u, v) per point, same length as `points` when present.
    pub pixel_indices: Option<Vec<(u32, u32)>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            colors: None,
            pixel_indices: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(self.points.iter())
    }

    /// Applies `f` to every point, preserving colors and pixel indices.
    pub fn map_points<F: Fn(&Point3<f64>) -> Point3<f64>>(&self, f: F) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
            colors: self.colors.clone(),
            pixel_indices: self.pixel_indices.clone(),
        }
    }
}
