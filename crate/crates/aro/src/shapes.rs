//! Procedural watertight meshes (icosphere, cube, torus) and 2D polygon
//! shapes used by the oracles, tests, and CLI demos.

use std::collections::HashMap;

use crate::geom::{vec2, vec3, TriMesh, Vec2, Vec3};

/// Icosahedron subdivided `subdivisions` times, projected to `radius`.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = vec![
        vec3(-1.0, phi, 0.0),
        vec3(1.0, phi, 0.0),
        vec3(-1.0, -phi, 0.0),
        vec3(1.0, -phi, 0.0),
        vec3(0.0, -1.0, phi),
        vec3(0.0, 1.0, phi),
        vec3(0.0, -1.0, -phi),
        vec3(0.0, 1.0, -phi),
        vec3(phi, 0.0, -1.0),
        vec3(phi, 0.0, 1.0),
        vec3(-phi, 0.0, -1.0),
        vec3(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalized())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mids = [0usize; 3];
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                mids[e] = *midpoint.entry(key).or_insert_with(|| {
                    let m = ((vertices[a] + vertices[b]) / 2.0).normalized();
                    vertices.push(m);
                    vertices.len() - 1
                });
            }
            next.push([tri[0], mids[0], mids[2]]);
            next.push([tri[1], mids[1], mids[0]]);
            next.push([tri[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        triangles = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    let mut mesh = TriMesh::new(vertices, triangles).unwrap();
    mesh.check_watertight().unwrap();
    mesh
}

/// Axis-aligned cube [-h, h]^3, two triangles per face, outward winding.
pub fn cube(h: f64) -> TriMesh {
    let v = |x: f64, y: f64, z: f64| vec3(x * h, y * h, z * h);
    let vertices = vec![
        v(-1.0, -1.0, -1.0),
        v(1.0, -1.0, -1.0),
        v(1.0, 1.0, -1.0),
        v(-1.0, 1.0, -1.0),
        v(-1.0, -1.0, 1.0),
        v(1.0, -1.0, 1.0),
        v(1.0, 1.0, 1.0),
        v(-1.0, 1.0, 1.0),
    ];
    let triangles = vec![
        [0, 2, 1], [0, 3, 2], // -z
        [4, 5, 6], [4, 6, 7], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [3, 7, 6], [3, 6, 2], // +y
        [0, 4, 7], [0, 7, 3], // -x
        [1, 2, 6], [1, 6, 5], // +x
    ];
    let mut mesh = TriMesh::new(vertices, triangles).unwrap();
    mesh.check_watertight().unwrap();
    mesh
}

/// Torus around the z axis: ring radius `major`, tube radius `minor`.
pub fn torus(major: f64, minor: f64, segments_major: usize, segments_minor: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(segments_major * segments_minor);
    for i in 0..segments_major {
        let u = 2.0 * std::f64::consts::PI * i as f64 / segments_major as f64;
        for j in 0..segments_minor {
            let v = 2.0 * std::f64::consts::PI * j as f64 / segments_minor as f64;
            let r = major + minor * v.cos();
            vertices.push(vec3(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let mut triangles = Vec::with_capacity(segments_major * segments_minor * 2);
    for i in 0..segments_major {
        for j in 0..segments_minor {
            let a = i * segments_minor + j;
            let b = ((i + 1) % segments_major) * segments_minor + j;
            let c = ((i + 1) % segments_major) * segments_minor + (j + 1) % segments_minor;
            let d = i * segments_minor + (j + 1) % segments_minor;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let mut mesh = TriMesh::new(vertices, triangles).unwrap();
    mesh.check_watertight().unwrap();
    mesh
}

/// Analytic torus membership for the same parameters.
pub fn torus_contains(major: f64, minor: f64, p: Vec3) -> bool {
    let ring = (p.x * p.x + p.y * p.y).sqrt() - major;
    ring * ring + p.z * p.z < minor * minor
}

/// Regular polygon approximating a disk of given radius, counterclockwise.
pub fn disk_polygon(radius: f64, segments: usize) -> Vec<Vec2> {
    (0..segments)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            vec2(radius * t.cos(), radius * t.sin())
        })
        .collect()
}

/// A blocky letter-like polygon (a "C" with a foot, G-ish) inside
/// [-0.5, 0.5]^2, counterclockwise, non-self-intersecting.
pub fn letter_polygon() -> Vec<Vec2> {
    [
        (0.35, 0.30),
        (0.10, 0.40),
        (-0.20, 0.40),
        (-0.38, 0.25),
        (-0.38, -0.25),
        (-0.20, -0.40),
        (0.15, -0.40),
        (0.35, -0.25),
        (0.35, -0.02),
        (0.05, -0.02),
        (0.05, -0.14),
        (0.18, -0.14),
        (0.14, -0.24),
        (-0.14, -0.24),
        (-0.22, -0.15),
        (-0.22, 0.15),
        (-0.14, 0.24),
        (0.08, 0.24),
        (0.28, 0.17),
    ]
    .iter()
    .map(|&(x, y)| vec2(x, y))
    .collect()
}
