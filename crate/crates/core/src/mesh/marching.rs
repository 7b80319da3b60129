//! Isosurface extraction on a regular scalar lattice.

use std::collections::HashMap;

use nalgebra::Point3;

use super::tables::TRIANGLE_TABLE;
use super::{ScalarGrid, TriangleMesh};

/// Cell corner offsets: a ring of four at z, then the same ring at z+1.
const CORNERS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
];

/// The two cell corners each of the 12 edges connects.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Extracts the iso-level surface from the grid with the standard 256-case
/// table and linear edge interpolation. Vertices on shared edges are reused
/// through an edge-keyed cache, so closed surfaces come out watertight.
/// Triangles are wound so face normals point toward the negative side of
/// the field. Returns an empty mesh when the level is never crossed.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> TriangleMesh {
    let (nx, ny, nz) = grid.dims;
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    // Key: (linear index of the edge's lower lattice point, axis).
    let mut edge_cache: HashMap<(usize, u8), u32> = HashMap::new();

    let lattice = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let mut corner_values = [0.0f64; 8];
                let mut cube_index = 0usize;
                for (i, (dx, dy, dz)) in CORNERS.iter().enumerate() {
                    let v = grid.value(x + dx, y + dy, z + dz);
                    corner_values[i] = v;
                    if v < iso {
                        cube_index |= 1 << i;
                    }
                }
                if cube_index == 0 || cube_index == 255 {
                    continue;
                }

                let row = &TRIANGLE_TABLE[cube_index];
                let mut tri = [0u32; 3];
                let mut k = 0;
                while row[k] >= 0 {
                    for (slot, &e) in tri.iter_mut().zip(row[k..k + 3].iter()) {
                        let (ca, cb) = EDGES[e as usize];
                        let pa = (
                            x + CORNERS[ca].0,
                            y + CORNERS[ca].1,
                            z + CORNERS[ca].2,
                        );
                        let pb = (
                            x + CORNERS[cb].0,
                            y + CORNERS[cb].1,
                            z + CORNERS[cb].2,
                        );
                        let ia = lattice(pa.0, pa.1, pa.2);
                        let ib = lattice(pb.0, pb.1, pb.2);
                        // Canonical edge: interpolate from the lower lattice
                        // point so shared edges yield one vertex.
                        let (lo, hi, ilo) = if ia < ib {
                            (pa, pb, ia)
                        } else {
                            (pb, pa, ib)
                        };
                        let axis = if lo.0 != hi.0 {
                            0u8
                        } else if lo.1 != hi.1 {
                            1
                        } else {
                            2
                        };
                        let index = *edge_cache.entry((ilo, axis)).or_insert_with(|| {
                            let va = grid.value(lo.0, lo.1, lo.2);
                            let vb = grid.value(hi.0, hi.1, hi.2);
                            let t = if vb == va { 0.5 } else { (iso - va) / (vb - va) };
                            let a = grid.position(lo.0, lo.1, lo.2);
                            let b = grid.position(hi.0, hi.1, hi.2);
                            let idx = vertices.len() as u32;
                            vertices.push(Point3::from(a.coords + t * (b.coords - a.coords)));
                            idx
                        });
                        *slot = index;
                    }
                    // Degenerate triangles can appear when the level passes
                    // exactly through a lattice point; drop them.
                    if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                        faces.push(tri);
                    }
                    k += 3;
                }
            }
        }
    }

    TriangleMesh {
        vertices,
        faces,
        vertex_colors: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::Aabb;
    use std::collections::HashMap;

    fn grid_from_field<F: Fn(&Point3<f64>) -> f64>(
        n: usize,
        bounds: Aabb,
        field: F,
    ) -> ScalarGrid {
        let shell = ScalarGrid::new((n, n, n), bounds, vec![0.0; n * n * n]).unwrap();
        let mut values = vec![0.0; n * n * n];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    values[shell.index(x, y, z)] = field(&shell.position(x, y, z));
                }
            }
        }
        ScalarGrid::new((n, n, n), bounds, values).unwrap()
    }

    fn sphere_grid(n: usize, r: f64) -> ScalarGrid {
        let bounds = Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0));
        grid_from_field(n, bounds, |p| p.coords.norm() - r)
    }

    /// V - E + F over unique undirected edges.
    fn euler_characteristic(mesh: &TriangleMesh) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for f in &mesh.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        mesh.vertices.len() as i64 - edges.len() as i64 + mesh.faces.len() as i64
    }

    #[test]
    fn sphere_is_accurate_and_watertight() {
        let n = 64;
        let grid = sphere_grid(n, 0.5);
        let mesh = marching_cubes(&grid, 0.0);
        mesh.validate().unwrap();
        assert!(!mesh.is_empty());
        let voxel = 2.0 / (n as f64 - 1.0);
        for v in &mesh.vertices {
            assert!(
                (v.coords.norm() - 0.5).abs() <= 1.5 * voxel,
                "vertex radius {}",
                v.coords.norm()
            );
        }
        assert_eq!(euler_characteristic(&mesh), 2);
    }

    #[test]
    fn every_interior_edge_is_shared_by_two_faces() {
        let grid = sphere_grid(32, 0.5);
        let mesh = marching_cubes(&grid, 0.0);
        let mut edge_uses: HashMap<(u32, u32), usize> = HashMap::new();
        for f in &mesh.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *edge_uses.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        assert!(edge_uses.values().all(|&n| n == 2));
    }

    #[test]
    fn refinement_is_first_order() {
        let err = |n: usize| {
            let mesh = marching_cubes(&sphere_grid(n, 0.5), 0.0);
            mesh.vertices
                .iter()
                .map(|v| (v.coords.norm() - 0.5).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = err(64);
        let fine = err(128);
        assert!(
            fine <= 0.5 * coarse,
            "halving the voxel should at least halve the error: {coarse} -> {fine}"
        );
    }

    #[test]
    fn all_positive_grid_gives_empty_mesh() {
        let bounds = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0));
        let grid = grid_from_field(8, bounds, |_| 1.0);
        let mesh = marching_cubes(&grid, 0.0);
        assert!(mesh.vertices.is_empty());
        assert!(mesh.faces.is_empty());
    }

    #[test]
    fn axis_plane_is_flat() {
        let bounds = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0));
        let k = 0.437;
        let grid = grid_from_field(16, bounds, |p| p.x - k);
        let mesh = marching_cubes(&grid, 0.0);
        assert!(!mesh.is_empty());
        for v in &mesh.vertices {
            assert!((v.x - k).abs() < 1e-6);
        }
    }

    #[test]
    fn normals_point_toward_negative_field() {
        let grid = sphere_grid(32, 0.5);
        let mesh = marching_cubes(&grid, 0.0);
        for f in &mesh.faces {
            let n = mesh.face_normal(f);
            let centroid = (mesh.vertices[f[0] as usize].coords
                + mesh.vertices[f[1] as usize].coords
                + mesh.vertices[f[2] as usize].coords)
                / 3.0;
            // The field |x| - r decreases toward the origin.
            assert!(
                n.dot(&-centroid) > 0.0,
                "face normal must point toward the field's negative side"
            );
        }
    }
}
