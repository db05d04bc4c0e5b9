//! Median-split BVH over mesh triangles for first-hit ray queries, crossing
//! counts (parity tests), segment occlusion tests, and point-surface distance.

use crate::geom::{ray_triangle_intersect, Aabb, Ray, TriMesh, Vec3, SELF_HIT_EPS};

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: range into `order`; internal: child indices.
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, len: usize },
    Internal { left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct MeshBvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
    tris: Vec<[Vec3; 3]>,
}

const LEAF_SIZE: usize = 4;

impl MeshBvh {
    pub fn build(mesh: &TriMesh) -> MeshBvh {
        let tris: Vec<[Vec3; 3]> = (0..mesh.triangles.len())
            .map(|t| mesh.triangle_vertices(t))
            .collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let mut nodes = Vec::new();
        build_node(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        MeshBvh { nodes, order, tris }
    }

    /// Smallest hit parameter t > eps along the ray, if any.
    pub fn first_hit(&self, ray: &Ray) -> Option<f64> {
        let mut best = f64::INFINITY;
        self.walk_ray(0, ray, &mut |t| {
            if t < best {
                best = t;
            }
        });
        if best.is_finite() {
            Some(best)
        } else {
            None
        }
    }

    /// Number of surface crossings along the ray (for parity tests).
    pub fn count_hits(&self, ray: &Ray) -> usize {
        let mut count = 0;
        self.walk_ray(0, ray, &mut |_| count += 1);
        count
    }

    /// Crossing count, or None when any hit grazed a triangle edge closely
    /// enough that the parity is unreliable and the ray should be re-cast.
    pub fn count_hits_checked(&self, ray: &Ray) -> Option<usize> {
        let mut count = 0usize;
        let mut suspect = false;
        self.walk_ray_detailed(0, ray, &mut |_, u, v| {
            const TOL: f64 = 1e-9;
            if u < TOL || v < TOL || u + v > 1.0 - TOL {
                suspect = true;
            }
            count += 1;
        });
        if suspect {
            None
        } else {
            Some(count)
        }
    }

    fn walk_ray_detailed(&self, node: usize, ray: &Ray, f: &mut impl FnMut(f64, f64, f64)) {
        let n = &self.nodes[node];
        if !ray_intersects_aabb(ray, &n.bounds) {
            return;
        }
        match n.kind {
            NodeKind::Leaf { start, len } => {
                for &ti in &self.order[start..start + len] {
                    if let Some((t, u, v)) = ray_triangle_intersect_uv(ray, &self.tris[ti]) {
                        f(t, u, v);
                    }
                }
            }
            NodeKind::Internal { left, right } => {
                self.walk_ray_detailed(left, ray, f);
                self.walk_ray_detailed(right, ray, f);
            }
        }
    }

    /// Whether the open segment (a, b) intersects the surface.
    pub fn segment_blocked(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let len = d.norm();
        if len < SELF_HIT_EPS {
            return false;
        }
        let ray = Ray::new(a, d / len);
        let mut blocked = false;
        self.walk_ray(0, &ray, &mut |t| {
            if t < len - SELF_HIT_EPS {
                blocked = true;
            }
        });
        blocked
    }

    /// Unsigned distance from p to the surface.
    pub fn distance_to_surface(&self, p: Vec3) -> f64 {
        let mut best = f64::INFINITY;
        self.walk_closest(0, p, &mut best);
        best
    }

    fn walk_ray(&self, node: usize, ray: &Ray, f: &mut impl FnMut(f64)) {
        let n = &self.nodes[node];
        if !ray_intersects_aabb(ray, &n.bounds) {
            return;
        }
        match n.kind {
            NodeKind::Leaf { start, len } => {
                for &ti in &self.order[start..start + len] {
                    if let Some(t) = ray_triangle_intersect(ray, &self.tris[ti]) {
                        f(t);
                    }
                }
            }
            NodeKind::Internal { left, right } => {
                self.walk_ray(left, ray, f);
                self.walk_ray(right, ray, f);
            }
        }
    }

    fn walk_closest(&self, node: usize, p: Vec3, best: &mut f64) {
        let n = &self.nodes[node];
        if aabb_distance(&n.bounds, p) >= *best {
            return;
        }
        match n.kind {
            NodeKind::Leaf { start, len } => {
                for &ti in &self.order[start..start + len] {
                    let d = point_triangle_distance(p, &self.tris[ti]);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            NodeKind::Internal { left, right } => {
                let dl = aabb_distance(&self.nodes[left].bounds, p);
                let dr = aabb_distance(&self.nodes[right].bounds, p);
                let (first, second) = if dl <= dr { (left, right) } else { (right, left) };
                self.walk_closest(first, p, best);
                self.walk_closest(second, p, best);
            }
        }
    }
}

fn build_node(
    tris: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    len: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = triangle_bounds(&tris[order[start]]);
    for &ti in &order[start..start + len] {
        let b = triangle_bounds(&tris[ti]);
        bounds = Aabb {
            min: bounds.min.min_c(b.min),
            max: bounds.max.max_c(b.max),
        };
    }
    let idx = nodes.len();
    nodes.push(Node { bounds, kind: NodeKind::Leaf { start, len } });
    if len <= LEAF_SIZE {
        return idx;
    }
    // split on the widest centroid axis at the median
    let mut cmin = centroids[order[start]];
    let mut cmax = cmin;
    for &ti in &order[start..start + len] {
        cmin = cmin.min_c(centroids[ti]);
        cmax = cmax.max_c(centroids[ti]);
    }
    let extent = cmax - cmin;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = start + len / 2;
    order[start..start + len].select_nth_unstable_by(len / 2, |&a, &b| {
        centroids[a]
            .component(axis)
            .partial_cmp(&centroids[b].component(axis))
            .unwrap()
            .then(a.cmp(&b))
    });
    let left = build_node(tris, centroids, order, start, mid - start, nodes);
    let right = build_node(tris, centroids, order, mid, start + len - mid, nodes);
    nodes[idx].kind = NodeKind::Internal { left, right };
    idx
}

fn ray_triangle_intersect_uv(ray: &Ray, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
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
    Some((t, u, v))
}

fn triangle_bounds(t: &[Vec3; 3]) -> Aabb {
    Aabb {
        min: t[0].min_c(t[1]).min_c(t[2]),
        max: t[0].max_c(t[1]).max_c(t[2]),
    }
}

fn ray_intersects_aabb(ray: &Ray, b: &Aabb) -> bool {
    let mut t_min = 0.0_f64;
    let mut t_max = f64::INFINITY;
    for axis in 0..3 {
        let o = ray.origin.component(axis);
        let d = ray.direction.component(axis);
        let lo = b.min.component(axis);
        let hi = b.max.component(axis);
        if d.abs() < 1e-300 {
            if o < lo || o > hi {
                return false;
            }
        } else {
            let inv = 1.0 / d;
            let (t0, t1) = if inv >= 0.0 {
                ((lo - o) * inv, (hi - o) * inv)
            } else {
                ((hi - o) * inv, (lo - o) * inv)
            };
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return false;
            }
        }
    }
    true
}

fn aabb_distance(b: &Aabb, p: Vec3) -> f64 {
    let mut d2 = 0.0;
    for axis in 0..3 {
        let v = p.component(axis);
        let lo = b.min.component(axis);
        let hi = b.max.component(axis);
        let d = if v < lo { lo - v } else if v > hi { v - hi } else { 0.0 };
        d2 += d * d;
    }
    d2.sqrt()
}

/// Exact point-triangle distance via region classification on the
/// parametrized plane (Ericson's formulation).
pub fn point_triangle_distance(p: Vec3, t: &[Vec3; 3]) -> f64 {
    let [a, b, c] = *t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use crate::shapes;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_hit_matches_brute_force() {
        let mesh = shapes::icosphere(0.4, 3);
        let bvh = MeshBvh::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let origin = vec3(
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
            );
            let dir = vec3(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if dir.norm() < 1e-3 {
                continue;
            }
            let ray = Ray::new(origin, dir.normalized());
            let brute = (0..mesh.triangles.len())
                .filter_map(|t| ray_triangle_intersect(&ray, &mesh.triangle_vertices(t)))
                .fold(f64::INFINITY, f64::min);
            match bvh.first_hit(&ray) {
                Some(t) => assert!((t - brute).abs() < 1e-9),
                None => assert!(brute.is_infinite()),
            }
        }
    }

    #[test]
    fn parity_counts_on_sphere() {
        let mesh = shapes::icosphere(0.4, 3);
        let bvh = MeshBvh::build(&mesh);
        // a generic direction; axis-aligned rays pass exactly through
        // icosphere vertices
        let ray = Ray::new(Vec3::ZERO, vec3(0.8, 0.31, 0.5).normalized());
        assert_eq!(bvh.count_hits(&ray) % 2, 1);
        let ray_out = Ray::new(vec3(0.0, 0.0, 0.9), vec3(0.0, 0.0, 1.0));
        assert_eq!(bvh.count_hits(&ray_out) % 2, 0);
    }

    #[test]
    fn distance_to_sphere_surface() {
        let mesh = shapes::icosphere(0.4, 4);
        let bvh = MeshBvh::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let p = vec3(
                rng.gen_range(-0.7..0.7),
                rng.gen_range(-0.7..0.7),
                rng.gen_range(-0.7..0.7),
            );
            let want = (p.norm() - 0.4).abs();
            let got = bvh.distance_to_surface(p);
            assert!((got - want).abs() < 0.003, "p {p:?}: got {got}, want {want}");
        }
    }

    #[test]
    fn segment_blocking() {
        let mesh = shapes::icosphere(0.4, 3);
        let bvh = MeshBvh::build(&mesh);
        assert!(bvh.segment_blocked(vec3(0.0, 0.0, -0.9), vec3(0.0, 0.0, 0.9)));
        assert!(!bvh.segment_blocked(vec3(0.6, 0.6, 0.6), vec3(0.6, 0.6, 0.9)));
        assert!(!bvh.segment_blocked(vec3(0.0, 0.0, 0.0), vec3(0.1, 0.0, 0.0)));
    }
}
