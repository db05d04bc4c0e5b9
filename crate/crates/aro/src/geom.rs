//! Foundational geometric types and exact ray/primitive predicates.

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{AroError, Result};

/// Hits closer to the ray origin than this are treated as self-intersections
/// and discarded.
pub const SELF_HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = vec3(0.0, 0.0, 0.0);

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize zero vector");
        self / n
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min_c(self, o: Vec3) -> Vec3 {
        vec3(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_c(self, o: Vec3) -> Vec3 {
        vec3(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        vec3(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

pub const fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2 { x, y }
}

impl Vec2 {
    pub const ZERO: Vec2 = vec2(0.0, 0.0);

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product of the embedded vectors.
    pub fn perp_dot(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize zero vector");
        vec2(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        vec2(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        vec2(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        vec2(self.x * s, self.y * s)
    }
}

/// A ray with unit direction.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Ray {
        let r = Ray { origin, direction };
        debug_assert!((r.direction.norm() - 1.0).abs() < 1e-9);
        r
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Axis-aligned bounding box, min <= max componentwise.
#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Aabb {
        assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Aabb { min, max }
    }

    /// Cube [-h, h]^3.
    pub fn centered_cube(h: f64) -> Aabb {
        Aabb::new(vec3(-h, -h, -h), vec3(h, h, h))
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn from_points(points: &[Vec3]) -> Aabb {
        let mut min = points[0];
        let mut max = points[0];
        for &p in &points[1..] {
            min = min.min_c(p);
            max = max.max_c(p);
        }
        Aabb { min, max }
    }
}

/// Triangle mesh; `watertight` is a declared flag verified on construction.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub watertight: bool,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<TriMesh> {
        for tri in &triangles {
            for &i in tri {
                if i >= vertices.len() {
                    return Err(AroError::InvalidArgument(format!(
                        "triangle index {i} out of range ({} vertices)",
                        vertices.len()
                    )));
                }
            }
        }
        for v in &vertices {
            if !v.is_finite() {
                return Err(AroError::InvalidArgument("non-finite vertex".into()));
            }
        }
        Ok(TriMesh { vertices, triangles, watertight: false })
    }

    /// Edge-manifold test: every undirected edge shared by exactly two triangles.
    /// Sets the watertight flag on success.
    pub fn check_watertight(&mut self) -> Result<()> {
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        for (edge, count) in &edge_count {
            if *count != 2 {
                return Err(AroError::NotWatertight(format!(
                    "edge ({}, {}) shared by {} triangles",
                    edge.0, edge.1, count
                )));
            }
        }
        self.watertight = true;
        Ok(())
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn transform(&self, scale: f64, offset: Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&v| (v + offset) * scale).collect(),
            triangles: self.triangles.clone(),
            watertight: self.watertight,
        }
    }
}

/// Normalization transform applied to a cloud: p' = (p + offset) * scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub offset: Vec3,
}

#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normalization: Option<Normalization>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<PointCloud> {
        if points.is_empty() {
            return Err(AroError::EmptyInput("point cloud"));
        }
        for p in &points {
            if !p.is_finite() {
                return Err(AroError::InvalidArgument("non-finite point".into()));
            }
        }
        Ok(PointCloud { points, normalization: None })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Recenter at the centroid and scale so the farthest point has norm exactly 0.5.
///
/// The recorded transform maps original coordinates into the normalized frame,
/// so meshes and queries can be mapped consistently.
pub fn normalize_to_unit_sphere(cloud: &PointCloud) -> Result<PointCloud> {
    let n = cloud.points.len() as f64;
    let centroid = cloud.points.iter().fold(Vec3::ZERO, |acc, &p| acc + p) / n;
    let max_r = cloud
        .points
        .iter()
        .map(|&p| (p - centroid).norm())
        .fold(0.0_f64, f64::max);
    if max_r <= 0.0 {
        return Err(AroError::DegenerateCloud);
    }
    let scale = 0.5 / max_r;
    let points = cloud.points.iter().map(|&p| (p - centroid) * scale).collect();
    Ok(PointCloud {
        points,
        normalization: Some(Normalization { scale, offset: -centroid }),
    })
}

/// Möller-Trumbore with inclusive edges. Returns the smallest hit parameter
/// t >= SELF_HIT_EPS, or None for misses and degenerate triangles.
pub fn ray_triangle_intersect(ray: &Ray, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = ray.direction.cross(e2);
    let det = e1.dot(pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - tri[0];
    let u = tvec.dot(pvec) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = ray.direction.dot(qvec) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(qvec) * inv_det;
    if t < SELF_HIT_EPS {
        return None;
    }
    Some(t)
}

/// Parameter at which a ray starting inside `aabb` leaves it.
pub fn ray_aabb_exit(ray: &Ray, aabb: &Aabb) -> Result<f64> {
    if !aabb.contains(ray.origin) {
        return Err(AroError::OriginOutsideBox);
    }
    let mut t_exit = f64::INFINITY;
    for axis in 0..3 {
        let d = ray.direction.component(axis);
        if d.abs() < 1e-300 {
            continue;
        }
        let o = ray.origin.component(axis);
        let face = if d > 0.0 {
            aabb.max.component(axis)
        } else {
            aabb.min.component(axis)
        };
        t_exit = t_exit.min((face - o) / d);
    }
    Ok(t_exit)
}
