//! 2D shapes, hit-distance features, and training-sample generation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{AroError, Result};
use crate::geom::{vec2, Vec2};

/// Axis-aligned 2D box.
#[derive(Debug, Clone, Copy)]
pub struct Box2D {
    pub min: Vec2,
    pub max: Vec2,
}

impl Box2D {
    pub fn unit() -> Box2D {
        Box2D { min: vec2(-0.5, -0.5), max: vec2(0.5, 0.5) }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Exit parameter of a ray starting inside the box.
    pub fn ray_exit(&self, origin: Vec2, dir: Vec2) -> f64 {
        let mut t = f64::INFINITY;
        for axis in 0..2 {
            let (o, d, lo, hi) = if axis == 0 {
                (origin.x, dir.x, self.min.x, self.max.x)
            } else {
                (origin.y, dir.y, self.min.y, self.max.y)
            };
            if d.abs() < 1e-300 {
                continue;
            }
            let face = if d > 0.0 { hi } else { lo };
            t = t.min((face - o) / d);
        }
        t
    }
}

/// Simple closed polygon in [-0.5, 0.5]^2, stored counterclockwise.
#[derive(Debug, Clone)]
pub struct Shape2D {
    pub vertices: Vec<Vec2>,
}

impl Shape2D {
    /// Builds from a vertex loop, reversing to counterclockwise if needed.
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Shape2D> {
        if vertices.len() < 3 {
            return Err(AroError::InvalidArgument("polygon needs >= 3 vertices".into()));
        }
        for v in &vertices {
            if !v.is_finite() {
                return Err(AroError::InvalidArgument("non-finite polygon vertex".into()));
            }
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Ok(Shape2D { vertices })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        point_in_polygon(&self.vertices, p)
    }

    /// Perimeter-uniform boundary point, deterministic per rng state.
    pub fn sample_boundary(&self, rng: &mut impl Rng) -> Vec2 {
        let n = self.vertices.len();
        let lengths: Vec<f64> = (0..n)
            .map(|i| (self.vertices[(i + 1) % n] - self.vertices[i]).norm())
            .collect();
        let total: f64 = lengths.iter().sum();
        let mut r = rng.gen::<f64>() * total;
        for i in 0..n {
            if r <= lengths[i] || i == n - 1 {
                let t = if lengths[i] > 0.0 { r / lengths[i] } else { 0.0 };
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                return a + (b - a) * t.clamp(0.0, 1.0);
            }
            r -= lengths[i];
        }
        unreachable!()
    }
}

fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| poly[i].perp_dot(poly[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

/// Even-odd ray crossing test.
pub fn point_in_polygon(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = poly[i];
        let b = poly[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// First intersection parameter of ray origin + t*dir with segment (a, b),
/// or None.
fn ray_segment_hit(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = dir.perp_dot(e);
    if denom.abs() < 1e-14 {
        return None;
    }
    let ao = a - origin;
    let t = ao.perp_dot(e) / denom; // along the ray
    let s = ao.perp_dot(dir) / denom; // along the segment
    if t >= 1e-9 && (-1e-12..=1.0 + 1e-12).contains(&s) {
        Some(t)
    } else {
        None
    }
}

/// Distance from the anchor to the first boundary intersection along the ray
/// toward x; box-exit distance when the boundary is missed.
pub fn hit_distance_2d(shape: &Shape2D, anchor: Vec2, x: Vec2, bounds: &Box2D) -> Result<f64> {
    let r = x - anchor;
    let n = r.norm();
    if n == 0.0 {
        return Err(AroError::InvalidArgument("query coincides with anchor".into()));
    }
    let dir = r * (1.0 / n);
    let count = shape.vertices.len();
    let mut best = f64::INFINITY;
    for i in 0..count {
        let a = shape.vertices[i];
        let b = shape.vertices[(i + 1) % count];
        if let Some(t) = ray_segment_hit(anchor, dir, a, b) {
            best = best.min(t);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Ok(bounds.ray_exit(anchor, dir))
    }
}

/// Per-anchor feature (r, ||r||, d) for one query point.
#[derive(Debug, Clone, Copy)]
pub struct AroFeature2D {
    pub r: Vec2,
    pub r_norm: f64,
    pub d: f64,
}

pub fn features_2d(
    shape: &Shape2D,
    anchors: &[Vec2],
    x: Vec2,
    bounds: &Box2D,
) -> Result<Vec<AroFeature2D>> {
    if anchors.is_empty() {
        return Err(AroError::EmptyInput("anchor set"));
    }
    anchors
        .iter()
        .map(|&a| {
            let r = x - a;
            let d = hit_distance_2d(shape, a, x, bounds)?;
            Ok(AroFeature2D { r, r_norm: r.norm(), d })
        })
        .collect()
}

/// A labeled occupancy query.
#[derive(Debug, Clone, Copy)]
pub struct Sample2D {
    pub x: Vec2,
    pub label: f64,
}

/// Training samples: half uniform in the box, half in a Gaussian band
/// (sigma 0.03) around the boundary; labels from the exact polygon test.
pub fn generate_samples(shape: &Shape2D, n: usize, seed: u64) -> Vec<Sample2D> {
    let bounds = Box2D::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = if out.len() % 2 == 0 {
            vec2(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
        } else {
            let b = shape.sample_boundary(&mut rng);
            let (g0, g1) = gaussian_pair(&mut rng);
            vec2(
                (b.x + 0.03 * g0).clamp(-0.5, 0.5),
                (b.y + 0.03 * g1).clamp(-0.5, 0.5),
            )
        };
        if !bounds.contains(x) {
            continue;
        }
        out.push(Sample2D { x, label: f64::from(shape.contains(x)) });
    }
    out
}

fn gaussian_pair(rng: &mut impl Rng) -> (f64, f64) {
    // Box-Muller
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}
