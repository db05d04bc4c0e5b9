//! Occupancy-grid evaluation and isosurface extraction (marching cubes in
//! 3D, marching squares in 2D).

use std::collections::HashMap;

use crate::error::{AroError, Result};
use crate::geom::{vec2, vec3, Aabb, TriMesh, Vec2, Vec3};
use crate::mc_tables::{EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};
use crate::par;

pub const DEFAULT_ISO: f64 = 0.5;

/// Regular scalar field of occupancy probabilities sampled at lattice points
/// origin + spacing * (i, j, k).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: [usize; 3],
    pub origin: Vec3,
    pub spacing: f64,
    /// Row-major with k fastest: values[(i * ny + j) * nz + k].
    pub values: Vec<f32>,
}

impl OccupancyGrid {
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution[1] + j) * self.resolution[2] + k
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.idx(i, j, k)]
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + vec3(i as f64, j as f64, k as f64) * self.spacing
    }
}

/// 2D analog, sampled at pixel positions origin + spacing * (i, j).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub resolution: [usize; 2],
    pub origin: Vec2,
    pub spacing: f64,
    /// values[i * ny + j], j fastest.
    pub values: Vec<f64>,
}

impl Grid2D {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.resolution[1] + j
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        self.origin + vec2(i as f64, j as f64) * self.spacing
    }
}

fn grid_geometry(domain: &Aabb, resolution: [usize; 3]) -> Result<f64> {
    for r in resolution {
        if r < 2 {
            return Err(AroError::InvalidArgument("resolution must be >= 2 per axis".into()));
        }
    }
    let ext = domain.max - domain.min;
    let spacing = ext.x / (resolution[0] - 1) as f64;
    for (e, r) in [(ext.y, resolution[1]), (ext.z, resolution[2])] {
        if (e / (r - 1) as f64 - spacing).abs() > 1e-9 {
            return Err(AroError::InvalidArgument(
                "domain/resolution must give one uniform spacing on every axis".into(),
            ));
        }
    }
    Ok(spacing)
}

/// Sample an occupancy function on the corner lattice of `domain`.
pub fn evaluate_grid(
    occ_fn: impl Fn(Vec3) -> f64 + Sync,
    domain: &Aabb,
    resolution: [usize; 3],
) -> Result<OccupancyGrid> {
    let spacing = grid_geometry(domain, resolution)?;
    let [nx, ny, nz] = resolution;
    let mut values = vec![0.0f32; nx * ny * nz];
    par::fill_indexed(&mut values, |flat| {
        let i = flat / (ny * nz);
        let j = (flat / nz) % ny;
        let k = flat % nz;
        let p = domain.min + vec3(i as f64, j as f64, k as f64) * spacing;
        occ_fn(p) as f32
    });
    check_range(&values, resolution)?;
    Ok(OccupancyGrid { resolution, origin: domain.min, spacing, values })
}

/// Sequential reference path; output is bitwise identical to [`evaluate_grid`].
pub fn evaluate_grid_seq(
    occ_fn: impl Fn(Vec3) -> f64,
    domain: &Aabb,
    resolution: [usize; 3],
) -> Result<OccupancyGrid> {
    let spacing = grid_geometry(domain, resolution)?;
    let [nx, ny, nz] = resolution;
    let mut values = vec![0.0f32; nx * ny * nz];
    par::fill_indexed_seq(&mut values, |flat| {
        let i = flat / (ny * nz);
        let j = (flat / nz) % ny;
        let k = flat % nz;
        let p = domain.min + vec3(i as f64, j as f64, k as f64) * spacing;
        occ_fn(p) as f32
    });
    check_range(&values, resolution)?;
    Ok(OccupancyGrid { resolution, origin: domain.min, spacing, values })
}

fn check_range(values: &[f32], resolution: [usize; 3]) -> Result<()> {
    let [_, ny, nz] = resolution;
    for (flat, &v) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(AroError::OccupancyOutOfRange {
                value: v as f64,
                i: flat / (ny * nz),
                j: (flat / nz) % ny,
                k: flat % nz,
            });
        }
    }
    Ok(())
}

/// Extract the iso-level set as a triangle mesh with linear edge
/// interpolation. Empty level sets give an empty mesh.
pub fn marching_cubes(grid: &OccupancyGrid, iso: f64) -> TriMesh {
    let [nx, ny, nz] = grid.resolution;
    let iso = iso as f32;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    // vertex dedup by canonical lattice edge (axis, i, j, k)
    let mut edge_vertex: HashMap<(u8, usize, usize, usize), usize> = HashMap::new();

    let corner_offset = |c: usize| -> [usize; 3] {
        match c {
            0 => [0, 0, 0],
            1 => [1, 0, 0],
            2 => [1, 1, 0],
            3 => [0, 1, 0],
            4 => [0, 0, 1],
            5 => [1, 0, 1],
            6 => [1, 1, 1],
            _ => [0, 1, 1],
        }
    };

    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            for k in 0..nz - 1 {
                let mut cube_index = 0usize;
                let mut vals = [0.0f32; 8];
                for c in 0..8 {
                    let [dx, dy, dz] = corner_offset(c);
                    vals[c] = grid.value(i + dx, j + dy, k + dz);
                    if vals[c] < iso {
                        cube_index |= 1 << c;
                    }
                }
                if EDGE_TABLE[cube_index] == 0 {
                    continue;
                }
                let mut cell_edge_vertex = [usize::MAX; 12];
                for e in 0..12 {
                    if EDGE_TABLE[cube_index] & (1 << e) == 0 {
                        continue;
                    }
                    let [c0, c1] = EDGE_CORNERS[e];
                    let o0 = corner_offset(c0);
                    let o1 = corner_offset(c1);
                    let key = edge_key(i, j, k, o0, o1);
                    let vid = *edge_vertex.entry(key).or_insert_with(|| {
                        let p0 = grid.point(i + o0[0], j + o0[1], k + o0[2]);
                        let p1 = grid.point(i + o1[0], j + o1[1], k + o1[2]);
                        let v0 = vals[c0] as f64;
                        let v1 = vals[c1] as f64;
                        let t = if (v1 - v0).abs() < 1e-30 {
                            0.5
                        } else {
                            ((iso as f64 - v0) / (v1 - v0)).clamp(0.0, 1.0)
                        };
                        vertices.push(p0 + (p1 - p0) * t);
                        vertices.len() - 1
                    });
                    cell_edge_vertex[e] = vid;
                }
                let tri_row = &TRI_TABLE[cube_index];
                let mut t = 0;
                while t < 16 && tri_row[t] >= 0 {
                    let a = cell_edge_vertex[tri_row[t] as usize];
                    let b = cell_edge_vertex[tri_row[t + 1] as usize];
                    let c = cell_edge_vertex[tri_row[t + 2] as usize];
                    let area = (vertices[b] - vertices[a])
                        .cross(vertices[c] - vertices[a])
                        .norm()
                        / 2.0;
                    if area > 1e-12 {
                        triangles.push([a, b, c]);
                    }
                    t += 3;
                }
            }
        }
    }
    TriMesh { vertices, triangles, watertight: false }
}

fn edge_key(i: usize, j: usize, k: usize, o0: [usize; 3], o1: [usize; 3]) -> (u8, usize, usize, usize) {
    let p0 = [i + o0[0], j + o0[1], k + o0[2]];
    let p1 = [i + o1[0], j + o1[1], k + o1[2]];
    let base = [p0[0].min(p1[0]), p0[1].min(p1[1]), p0[2].min(p1[2])];
    let axis = if p0[0] != p1[0] {
        0u8
    } else if p0[1] != p1[1] {
        1
    } else {
        2
    };
    (axis, base[0], base[1], base[2])
}

/// Extract closed iso-contours from a 2D grid as polyline loops.
pub fn marching_squares(grid: &Grid2D, iso: f64) -> Vec<Vec<Vec2>> {
    let [nx, ny] = grid.resolution;
    // cell edges keyed by (axis 0 = +x edge, 1 = +y edge, i, j)
    type EdgeKey = (u8, usize, usize);
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();

    let interp = |p0: Vec2, p1: Vec2, v0: f64, v1: f64| {
        let t = if (v1 - v0).abs() < 1e-30 {
            0.5
        } else {
            ((iso - v0) / (v1 - v0)).clamp(0.0, 1.0)
        };
        p0 + (p1 - p0) * t
    };
    let mut edge_points: HashMap<EdgeKey, Vec2> = HashMap::new();

    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let v = [
                grid.value(i, j),
                grid.value(i + 1, j),
                grid.value(i + 1, j + 1),
                grid.value(i, j + 1),
            ];
            let mut case = 0usize;
            for (c, &val) in v.iter().enumerate() {
                if val >= iso {
                    case |= 1 << c;
                }
            }
            if case == 0 || case == 15 {
                continue;
            }
            // cell edge keys: bottom, right, top, left
            let bottom = (0u8, i, j);
            let right = (1u8, i + 1, j);
            let top = (0u8, i, j + 1);
            let left = (1u8, i, j);
            let corners = [
                grid.point(i, j),
                grid.point(i + 1, j),
                grid.point(i + 1, j + 1),
                grid.point(i, j + 1),
            ];
            let mut point_on = |key: EdgeKey, a: usize, b: usize| {
                let p = interp(corners[a], corners[b], v[a], v[b]);
                edge_points.insert(key, p);
                key
            };
            let mut emit = |segs: &mut Vec<(EdgeKey, EdgeKey)>, k0: EdgeKey, a0: (usize, usize), k1: EdgeKey, a1: (usize, usize)| {
                let e0 = point_on(k0, a0.0, a0.1);
                let e1 = point_on(k1, a1.0, a1.1);
                segs.push((e0, e1));
            };
            match case {
                1 | 14 => emit(&mut segments, left, (3, 0), bottom, (0, 1)),
                2 | 13 => emit(&mut segments, bottom, (0, 1), right, (1, 2)),
                3 | 12 => emit(&mut segments, left, (3, 0), right, (1, 2)),
                4 | 11 => emit(&mut segments, right, (1, 2), top, (2, 3)),
                6 | 9 => emit(&mut segments, bottom, (0, 1), top, (2, 3)),
                7 | 8 => emit(&mut segments, top, (2, 3), left, (3, 0)),
                5 => {
                    // ambiguous saddle, fixed convention
                    emit(&mut segments, left, (3, 0), bottom, (0, 1));
                    emit(&mut segments, right, (1, 2), top, (2, 3));
                }
                10 => {
                    emit(&mut segments, bottom, (0, 1), right, (1, 2));
                    emit(&mut segments, top, (2, 3), left, (3, 0));
                }
                _ => unreachable!(),
            }
        }
    }

    chain_loops(&segments, &edge_points)
}

/// Connect segments sharing edge keys into closed polyline loops; open
/// chains (contours leaving the grid) are dropped.
fn chain_loops(
    segments: &[((u8, usize, usize), (u8, usize, usize))],
    edge_points: &HashMap<(u8, usize, usize), Vec2>,
) -> Vec<Vec<Vec2>> {
    type EdgeKey = (u8, usize, usize);
    let mut adjacency: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (si, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(si);
        adjacency.entry(*b).or_default().push(si);
    }
    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (first, mut cursor) = segments[start];
        let mut keys = vec![first, cursor];
        let mut closed = false;
        loop {
            let next = adjacency
                .get(&cursor)
                .into_iter()
                .flatten()
                .copied()
                .find(|&si| !used[si]);
            let Some(si) = next else { break };
            used[si] = true;
            let (a, b) = segments[si];
            cursor = if a == cursor { b } else { a };
            if cursor == first {
                closed = true;
                break;
            }
            keys.push(cursor);
        }
        if closed && keys.len() >= 3 {
            loops.push(keys.iter().map(|k| edge_points[k]).collect());
        }
    }
    loops
}

pub fn polyline_perimeter(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::MeshBvh;

    fn ball_indicator(r: f64) -> impl Fn(Vec3) -> f64 + Sync {
        move |p: Vec3| if p.norm() < r { 1.0 } else { 0.0 }
    }

    #[test]
    fn constant_one() {
        let g = evaluate_grid(|_| 1.0, &Aabb::centered_cube(0.5), [4, 4, 4]).unwrap();
        assert!(g.values.iter().all(|&v| v == 1.0));
        assert!(marching_cubes(&g, DEFAULT_ISO).triangles.is_empty());
    }

    #[test]
    fn all_zero_empty_mesh() {
        let g = evaluate_grid(|_| 0.0, &Aabb::centered_cube(0.5), [8, 8, 8]).unwrap();
        let mesh = marching_cubes(&g, DEFAULT_ISO);
        assert!(mesh.vertices.is_empty() && mesh.triangles.is_empty());
    }

    #[test]
    fn ball_indicator_grid_values() {
        let g = evaluate_grid(ball_indicator(0.4), &Aabb::centered_cube(0.5), [32, 32, 32]).unwrap();
        assert_eq!(g.value(16, 16, 16), 1.0); // near center
        assert_eq!(g.value(0, 0, 0), 0.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let err = evaluate_grid(|_| 1.5, &Aabb::centered_cube(0.5), [2, 2, 2]);
        assert!(matches!(err, Err(AroError::OccupancyOutOfRange { .. })));
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let domain = Aabb::centered_cube(0.5);
        let f = |p: Vec3| ((p.x * 13.0).sin() * (p.y * 7.0).cos() * (p.z * 3.0).sin() * 0.5 + 0.5).clamp(0.0, 1.0);
        let a = evaluate_grid(f, &domain, [24, 24, 24]).unwrap();
        let b = evaluate_grid_seq(f, &domain, [24, 24, 24]).unwrap();
        assert_eq!(a, b);
    }

    /// Sampled Hausdorff distance against the analytic sphere of radius r.
    fn mesh_sphere_error(mesh: &TriMesh, r: f64) -> f64 {
        let bvh = MeshBvh::build(mesh);
        // vertex-to-sphere and sphere-to-mesh directions
        let d1 = mesh
            .vertices
            .iter()
            .map(|v| (v.norm() - r).abs())
            .fold(0.0_f64, f64::max);
        let dirs = crate::anchors::fibonacci_sphere_directions(500).unwrap();
        let d2 = dirs
            .iter()
            .map(|&d| bvh.distance_to_surface(d * r))
            .fold(0.0_f64, f64::max);
        d1.max(d2)
    }

    #[test]
    fn ball_mesh_hausdorff_under_two_cells() {
        let res = 64;
        let g = evaluate_grid(ball_indicator(0.4), &Aabb::centered_cube(0.5), [res; 3]).unwrap();
        let mesh = marching_cubes(&g, DEFAULT_ISO);
        assert!(!mesh.triangles.is_empty());
        let cell = 1.0 / (res - 1) as f64;
        let err = mesh_sphere_error(&mesh, 0.4);
        assert!(err < 2.0 * cell, "hausdorff {err}, cell {cell}");
    }

    #[test]
    fn refinement_does_not_worsen() {
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&res| {
                let g = evaluate_grid(ball_indicator(0.4), &Aabb::centered_cube(0.5), [res; 3]).unwrap();
                mesh_sphere_error(&marching_cubes(&g, DEFAULT_ISO), 0.4)
            })
            .collect();
        assert!(errs[1] <= errs[0] * 1.5, "errors {errs:?}");
    }

    #[test]
    fn triangles_nondegenerate() {
        let g = evaluate_grid(ball_indicator(0.37), &Aabb::centered_cube(0.5), [24, 24, 24]).unwrap();
        let mesh = marching_cubes(&g, DEFAULT_ISO);
        for tri in &mesh.triangles {
            let [a, b, c] = *tri;
            let area = (mesh.vertices[b] - mesh.vertices[a])
                .cross(mesh.vertices[c] - mesh.vertices[a])
                .norm()
                / 2.0;
            assert!(area > 1e-12);
        }
    }

    #[test]
    fn mc_deterministic() {
        let g = evaluate_grid(ball_indicator(0.4), &Aabb::centered_cube(0.5), [32; 3]).unwrap();
        let m1 = marching_cubes(&g, DEFAULT_ISO);
        let m2 = marching_cubes(&g, DEFAULT_ISO);
        assert_eq!(m1.triangles, m2.triangles);
        assert!(m1.vertices.iter().zip(&m2.vertices).all(|(a, b)| a == b));
    }

    fn disk_grid(r: f64, res: usize) -> Grid2D {
        let spacing = 1.0 / (res - 1) as f64;
        let mut values = vec![0.0; res * res];
        let g = Grid2D {
            resolution: [res, res],
            origin: vec2(-0.5, -0.5),
            spacing,
            values: values.clone(),
        };
        for i in 0..res {
            for j in 0..res {
                // indicator anti-aliased over one cell; a hard 0/1 step
                // forces every contour vertex to an edge midpoint, which
                // inflates the perimeter of any smooth curve by ~5.5%
                let d = r - g.point(i, j).norm();
                values[g.idx(i, j)] = (0.5 + d / spacing).clamp(0.0, 1.0);
            }
        }
        Grid2D { values, ..g }
    }

    #[test]
    fn disk_single_loop_perimeter() {
        let g = disk_grid(0.35, 256);
        let loops = marching_squares(&g, DEFAULT_ISO);
        assert_eq!(loops.len(), 1);
        let perimeter = polyline_perimeter(&loops[0]);
        let want = 2.0 * std::f64::consts::PI * 0.35;
        assert!((perimeter - want).abs() / want < 0.05, "perimeter {perimeter} vs {want}");
    }

    #[test]
    fn empty_grid_no_loops() {
        let g = Grid2D {
            resolution: [16, 16],
            origin: vec2(-0.5, -0.5),
            spacing: 1.0 / 15.0,
            values: vec![0.0; 256],
        };
        assert!(marching_squares(&g, DEFAULT_ISO).is_empty());
    }

    #[test]
    fn annulus_two_loops() {
        let res = 128;
        let spacing = 1.0 / (res - 1) as f64;
        let mut g = Grid2D {
            resolution: [res, res],
            origin: vec2(-0.5, -0.5),
            spacing,
            values: vec![0.0; res * res],
        };
        for i in 0..res {
            for j in 0..res {
                let r = g.point(i, j).norm();
                g.values[i * res + j] = if r > 0.15 && r < 0.35 { 1.0 } else { 0.0 };
            }
        }
        assert_eq!(marching_squares(&g, DEFAULT_ISO).len(), 2);
    }
}
