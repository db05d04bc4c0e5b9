//! Exact conical top-k queries over point clouds, accelerated by a uniform
//! grid with ring expansion. Results are identical to brute force, including
//! tie and fallback ordering.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{AroError, Result};
use crate::geom::{Aabb, PointCloud, Vec3};

/// Default cone half-angle (24 degrees) in radians.
pub fn default_half_angle() -> f64 {
    24.0_f64.to_radians()
}

pub const DEFAULT_K: usize = 16;

#[derive(Debug, Clone, Copy)]
pub struct ConeQuery {
    pub apex: Vec3,
    /// Cone axis; need not be unit length.
    pub axis: Vec3,
    pub half_angle: f64,
    pub k: usize,
}

impl ConeQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_angle > 0.0 && self.half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(AroError::InvalidArgument("half_angle must be in (0, pi/2)".into()));
        }
        if self.k == 0 {
            return Err(AroError::InvalidArgument("k must be >= 1".into()));
        }
        if !(self.axis.norm() > 0.0) {
            return Err(AroError::InvalidArgument("axis must be nonzero".into()));
        }
        Ok(())
    }
}

/// One selected point: cloud index, distance to the apex, angular deviation
/// from the axis, and whether it satisfied the cone constraint (tier 1) or
/// was selected by the fallback (tier 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeHit {
    pub index: usize,
    pub point: Vec3,
    pub distance: f64,
    pub angle: f64,
    pub in_cone: bool,
}

/// Uniform grid over an immutable snapshot of the cloud.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    bounds: Aabb,
    cell_size: f64,
    dims: [usize; 3],
    /// Point indices per cell, each list sorted ascending.
    cells: Vec<Vec<u32>>,
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<SpatialIndex> {
        if cloud.is_empty() {
            return Err(AroError::EmptyInput("point cloud"));
        }
        let points = cloud.points.clone();
        let bounds = Aabb::from_points(&points);
        let extent = bounds.max - bounds.min;
        let max_extent = extent.x.max(extent.y).max(extent.z).max(1e-9);
        // aim for roughly one point per cell
        let target = (points.len() as f64).cbrt().ceil().max(1.0);
        let cell_size = max_extent / target;
        let dim = |e: f64| ((e / cell_size).ceil() as usize).max(1);
        let dims = [dim(extent.x.max(1e-12)), dim(extent.y.max(1e-12)), dim(extent.z.max(1e-12))];
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let mut index = SpatialIndex { points, bounds, cell_size, dims, cells: Vec::new() };
        for (i, p) in index.points.iter().enumerate() {
            let c = index.cell_of(*p);
            cells[index.flat(c)].push(i as u32);
        }
        index.cells = cells;
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn cell_of(&self, p: Vec3) -> [usize; 3] {
        let mut c = [0usize; 3];
        for axis in 0..3 {
            let rel = (p.component(axis) - self.bounds.min.component(axis)) / self.cell_size;
            c[axis] = (rel.floor().max(0.0) as usize).min(self.dims[axis] - 1);
        }
        c
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    /// The k nearest in-cone points, padded with out-of-cone points by
    /// angular deviation when the cone holds fewer than k.
    pub fn cone_top_k(&self, q: &ConeQuery) -> Result<Vec<ConeHit>> {
        q.validate()?;
        let axis_unit = q.axis.normalized();
        let cos_limit = q.half_angle.cos();
        let mut tier1 = self.nearest_in_cone(q.apex, axis_unit, cos_limit, q.k);
        if tier1.len() < q.k {
            // fallback: pad with out-of-cone points, closest to the cone first
            let mut tier2: Vec<ConeHit> = self
                .points
                .iter()
                .enumerate()
                .filter_map(|(i, &p)| {
                    let hit = self.hit_for(i, p, q.apex, axis_unit, cos_limit);
                    if hit.in_cone {
                        None
                    } else {
                        Some(hit)
                    }
                })
                .collect();
            tier2.sort_by(|a, b| cmp_tier2(a, b));
            let need = (q.k - tier1.len()).min(tier2.len());
            tier1.extend(tier2.into_iter().take(need));
        }
        Ok(tier1)
    }

    /// Plain k-nearest (no cone constraint); used for degenerate zero axes.
    /// Angles are reported relative to `axis_hint` when it is nonzero.
    pub fn nearest_k(&self, apex: Vec3, k: usize) -> Vec<ConeHit> {
        // accepting every angle reduces the cone query to k-nearest
        let mut hits = self.nearest_in_cone(apex, Vec3 { x: 1.0, y: 0.0, z: 0.0 }, -2.0, k);
        for h in &mut hits {
            h.angle = 0.0;
            h.in_cone = true;
        }
        hits
    }

    fn hit_for(&self, i: usize, p: Vec3, apex: Vec3, axis_unit: Vec3, cos_limit: f64) -> ConeHit {
        let d = p - apex;
        let dist = d.norm();
        let angle = if dist > 0.0 {
            (d.dot(axis_unit) / dist).clamp(-1.0, 1.0).acos()
        } else {
            // a point coinciding with the apex has angular deviation 0
            0.0
        };
        let in_cone = if dist > 0.0 {
            d.dot(axis_unit) >= cos_limit * dist
        } else {
            true
        };
        ConeHit { index: i, point: p, distance: dist, angle, in_cone }
    }

    /// Grid ring expansion around the apex cell; exact because a ring at
    /// Chebyshev distance r only holds points at Euclidean distance
    /// >= (r-1) * cell_size.
    fn nearest_in_cone(&self, apex: Vec3, axis_unit: Vec3, cos_limit: f64, k: usize) -> Vec<ConeHit> {
        let center = self.cell_of(apex);
        let max_ring = self.dims.iter().max().copied().unwrap_or(1);
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        for ring in 0..=max_ring {
            if heap.len() == k {
                let worst = heap.peek().unwrap();
                let lower_bound = (ring.saturating_sub(1)) as f64 * self.cell_size;
                if lower_bound > worst.0.distance {
                    break;
                }
            }
            self.for_ring_cells(center, ring, |cell| {
                for &pi in &self.cells[self.flat(cell)] {
                    let hit = self.hit_for(pi as usize, self.points[pi as usize], apex, axis_unit, cos_limit);
                    if !hit.in_cone {
                        continue;
                    }
                    if heap.len() < k {
                        heap.push(HeapEntry(hit));
                    } else if cmp_tier1(&hit, &heap.peek().unwrap().0) == Ordering::Less {
                        heap.pop();
                        heap.push(HeapEntry(hit));
                    }
                }
            });
        }
        let mut out: Vec<ConeHit> = heap.into_iter().map(|e| e.0).collect();
        out.sort_by(cmp_tier1);
        out
    }

    fn for_ring_cells(&self, center: [usize; 3], ring: usize, mut f: impl FnMut([usize; 3])) {
        let r = ring as isize;
        let c = [center[0] as isize, center[1] as isize, center[2] as isize];
        let in_bounds = |cell: [isize; 3]| {
            cell.iter()
                .zip(&self.dims)
                .all(|(&v, &d)| v >= 0 && (v as usize) < d)
        };
        if ring == 0 {
            if in_bounds(c) {
                f(center);
            }
            return;
        }
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let cell = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if in_bounds(cell) {
                        f([cell[0] as usize, cell[1] as usize, cell[2] as usize]);
                    }
                }
            }
        }
    }
}

/// Tier-1 order: distance ascending, ties by point index.
pub fn cmp_tier1(a: &ConeHit, b: &ConeHit) -> Ordering {
    a.distance
        .partial_cmp(&b.distance)
        .unwrap()
        .then(a.index.cmp(&b.index))
}

/// Tier-2 order: angular deviation ascending, then distance, then index.
pub fn cmp_tier2(a: &ConeHit, b: &ConeHit) -> Ordering {
    a.angle
        .partial_cmp(&b.angle)
        .unwrap()
        .then(a.distance.partial_cmp(&b.distance).unwrap())
        .then(a.index.cmp(&b.index))
}

struct HeapEntry(ConeHit);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        cmp_tier1(&self.0, &other.0) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_tier1(&self.0, &other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Independent brute-force oracle implementing the two-tier rule directly.
    fn brute_force_cone_top_k(points: &[Vec3], q: &ConeQuery) -> Vec<ConeHit> {
        let axis_unit = q.axis.normalized();
        let cos_limit = q.half_angle.cos();
        let mut all: Vec<ConeHit> = points
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let d = p - q.apex;
                let dist = d.norm();
                let (angle, in_cone) = if dist > 0.0 {
                    let cosv = (d.dot(axis_unit) / dist).clamp(-1.0, 1.0);
                    (cosv.acos(), d.dot(axis_unit) >= cos_limit * dist)
                } else {
                    (0.0, true)
                };
                ConeHit { index: i, point: p, distance: dist, angle, in_cone }
            })
            .collect();
        let (mut t1, mut t2): (Vec<ConeHit>, Vec<ConeHit>) =
            all.drain(..).partition(|h| h.in_cone);
        t1.sort_by(cmp_tier1);
        t2.sort_by(|a, b| cmp_tier2(a, b));
        t1.truncate(q.k);
        if t1.len() < q.k {
            let need = q.k - t1.len();
            t1.extend(t2.into_iter().take(need));
        }
        t1
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    vec3(
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(-0.5..0.5),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn assert_hits_eq(a: &[ConeHit], b: &[ConeHit]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.index, y.index);
            assert!((x.distance - y.distance).abs() < 1e-12);
            assert!((x.angle - y.angle).abs() < 1e-12);
            assert_eq!(x.in_cone, y.in_cone);
        }
    }

    #[test]
    fn axis_aligned_in_cone() {
        let cloud = PointCloud::new(vec![
            vec3(1.0, 0.0, 0.0),
            vec3(2.0, 0.0, 0.0),
            vec3(0.0, 1.0, 0.0),
        ])
        .unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let q = ConeQuery {
            apex: Vec3::ZERO,
            axis: vec3(1.0, 0.0, 0.0),
            half_angle: default_half_angle(),
            k: 2,
        };
        let hits = index.cone_top_k(&q).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].index, 0);
        assert_eq!(hits[1].index, 1);
        assert!(hits.iter().all(|h| h.in_cone));
    }

    #[test]
    fn fallback_fires_when_cone_underpopulated() {
        let cloud = PointCloud::new(vec![
            vec3(1.0, 0.0, 0.0),
            vec3(2.0, 0.0, 0.0),
            vec3(0.0, 1.0, 0.0),
        ])
        .unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let q = ConeQuery {
            apex: Vec3::ZERO,
            axis: vec3(1.0, 0.0, 0.0),
            half_angle: default_half_angle(),
            k: 3,
        };
        let hits = index.cone_top_k(&q).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[2].index, 2);
        assert!(!hits[2].in_cone);
    }

    #[test]
    fn single_point_cloud_answers_every_query() {
        let cloud = PointCloud::new(vec![vec3(0.1, 0.2, 0.3)]).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let q = ConeQuery {
            apex: vec3(-0.4, 0.0, 0.0),
            axis: vec3(1.0, 1.0, 1.0),
            half_angle: 0.1,
            k: 4,
        };
        let hits = index.cone_top_k(&q).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].index, 0);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let cloud = random_cloud(&mut rng, 2048);
        let index = SpatialIndex::build(&cloud).unwrap();
        for _ in 0..1000 {
            let q = ConeQuery {
                apex: vec3(
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                ),
                axis: vec3(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                half_angle: default_half_angle(),
                k: DEFAULT_K,
            };
            if q.axis.norm() < 1e-6 {
                continue;
            }
            assert_hits_eq(&index.cone_top_k(&q).unwrap(), &brute_force_cone_top_k(&cloud.points, &q));
        }
    }

    #[test]
    fn matches_oracle_small_clouds_varied_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [1, 2, 7, 33, 256] {
            let cloud = random_cloud(&mut rng, n);
            let index = SpatialIndex::build(&cloud).unwrap();
            for _ in 0..100 {
                let q = ConeQuery {
                    apex: vec3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    axis: vec3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.5),
                    half_angle: rng.gen_range(0.05..1.5),
                    k: rng.gen_range(1..=20),
                };
                assert_hits_eq(&index.cone_top_k(&q).unwrap(), &brute_force_cone_top_k(&cloud.points, &q));
            }
        }
    }

    #[test]
    fn prefix_monotone_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = random_cloud(&mut rng, 512);
        let index = SpatialIndex::build(&cloud).unwrap();
        let base = ConeQuery {
            apex: vec3(0.1, -0.2, 0.0),
            axis: vec3(0.3, 0.7, -0.1),
            half_angle: default_half_angle(),
            k: 8,
        };
        let small = index.cone_top_k(&base).unwrap();
        let big = index.cone_top_k(&ConeQuery { k: 20, ..base }).unwrap();
        assert_hits_eq(&small, &big[..8]);
    }

    #[test]
    fn rotation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cloud = random_cloud(&mut rng, 300);
        // rotation by 90 degrees about z
        let rot = |p: Vec3| vec3(-p.y, p.x, p.z);
        let rotated = PointCloud::new(cloud.points.iter().map(|&p| rot(p)).collect()).unwrap();
        let i1 = SpatialIndex::build(&cloud).unwrap();
        let i2 = SpatialIndex::build(&rotated).unwrap();
        let q = ConeQuery {
            apex: vec3(0.05, 0.1, -0.3),
            axis: vec3(1.0, 0.4, 0.2),
            half_angle: default_half_angle(),
            k: 10,
        };
        let qr = ConeQuery { apex: rot(q.apex), axis: rot(q.axis), ..q };
        let a = i1.cone_top_k(&q).unwrap();
        let b = i2.cone_top_k(&qr).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.index, y.index);
            assert!((x.distance - y.distance).abs() < 1e-9);
            assert!((x.angle - y.angle).abs() < 1e-9);
        }
    }

    #[test]
    fn rebuild_identical_answers() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cloud = random_cloud(&mut rng, 2048);
        let i1 = SpatialIndex::build(&cloud).unwrap();
        let i2 = SpatialIndex::build(&cloud).unwrap();
        let q = ConeQuery {
            apex: vec3(0.0, 0.0, 0.0),
            axis: vec3(0.2, 0.3, 0.4),
            half_angle: default_half_angle(),
            k: DEFAULT_K,
        };
        assert_hits_eq(&i1.cone_top_k(&q).unwrap(), &i2.cone_top_k(&q).unwrap());
        // every point reachable through a wide query
        let all = i1.nearest_k(Vec3::ZERO, 2048);
        assert_eq!(all.len(), 2048);
    }

    #[test]
    fn apex_coincident_point_angle_zero() {
        let cloud = PointCloud::new(vec![vec3(0.1, 0.1, 0.1), vec3(0.4, 0.0, 0.0)]).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let q = ConeQuery {
            apex: vec3(0.1, 0.1, 0.1),
            axis: vec3(1.0, 0.0, 0.0),
            half_angle: 0.2,
            k: 1,
        };
        let hits = index.cone_top_k(&q).unwrap();
        assert_eq!(hits[0].index, 0);
        assert_eq!(hits[0].angle, 0.0);
        assert_eq!(hits[0].distance, 0.0);
    }
}
