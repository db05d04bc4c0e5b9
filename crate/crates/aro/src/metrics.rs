//! Reconstruction-quality metrics: Chamfer, Hausdorff, earth mover's
//! distance (exact assignment), occupancy IOU, and surface sampling.
//!
//! Chamfer is the symmetric mean Euclidean (not squared) distance; this
//! convention is echoed in every report so numbers are only compared to
//! themselves.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AroError, Result};
use crate::field::OccupancyGrid;
use crate::geom::{vec3, Aabb, PointCloud, TriMesh, Vec3};
use crate::par;

pub const EMD_MAX_POINTS: usize = 512;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd: f64,
    pub hd: f64,
    pub emd: f64,
    pub iou: f64,
    pub samples: usize,
    pub seed: u64,
    /// Convention marker: symmetric mean Euclidean Chamfer, exact-assignment
    /// EMD on equal-size subsamples.
    pub convention: String,
}

fn min_dist_to(p: Vec3, cloud: &[Vec3]) -> f64 {
    cloud
        .iter()
        .map(|&q| (p - q).norm())
        .fold(f64::INFINITY, f64::min)
}

fn directed_mean(x: &[Vec3], y: &[Vec3]) -> f64 {
    let sums = par::map_indexed(x.len(), |i| min_dist_to(x[i], y));
    sums.iter().sum::<f64>() / x.len() as f64
}

fn directed_max(x: &[Vec3], y: &[Vec3]) -> f64 {
    let maxes = par::map_indexed(x.len(), |i| min_dist_to(x[i], y));
    maxes.iter().fold(0.0_f64, |a, &b| a.max(b))
}

/// 0.5 * (mean_x min-dist to Y + mean_y min-dist to X), Euclidean.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> f64 {
    0.5 * (directed_mean(&x.points, &y.points) + directed_mean(&y.points, &x.points))
}

pub fn hausdorff(x: &PointCloud, y: &PointCloud) -> f64 {
    directed_max(&x.points, &y.points).max(directed_max(&y.points, &x.points))
}

/// Exact minimum-cost perfect matching mean edge length between equal-size
/// sets (|X| = |Y| <= 512).
pub fn emd(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    if x.len() != y.len() {
        return Err(AroError::InvalidArgument(format!(
            "emd requires equal sizes, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() > EMD_MAX_POINTS {
        return Err(AroError::InvalidArgument(format!(
            "emd input exceeds {EMD_MAX_POINTS} points; subsample first"
        )));
    }
    let n = x.len();
    let cost: Vec<Vec<f64>> = x
        .points
        .iter()
        .map(|&p| y.points.iter().map(|&q| (p - q).norm()).collect())
        .collect();
    let total = hungarian_min_cost(&cost);
    Ok(total / n as f64)
}

/// O(n^3) Hungarian algorithm (Jonker-Volgenant style potentials) returning
/// the minimum total cost of a perfect matching on a square cost matrix.
fn hungarian_min_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    // potentials and matching, 1-based with a dummy column 0
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut matched = vec![0usize; n + 1]; // matched[j] = row assigned to column j

    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[matched[j] - 1][j - 1]).sum()
}

/// Monte-Carlo |A and B| / |A or B| over n uniform samples of `domain`;
/// an empty union counts as full agreement.
pub fn occupancy_iou(
    occ_a: impl Fn(Vec3) -> bool + Sync,
    occ_b: impl Fn(Vec3) -> bool + Sync,
    domain: &Aabb,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(AroError::InvalidArgument("iou needs n >= 1".into()));
    }
    let ext = domain.max - domain.min;
    let samples: Vec<Vec3> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                domain.min
                    + vec3(
                        rng.gen::<f64>() * ext.x,
                        rng.gen::<f64>() * ext.y,
                        rng.gen::<f64>() * ext.z,
                    )
            })
            .collect()
    };
    let counts = par::map_indexed(n, |i| {
        let a = occ_a(samples[i]);
        let b = occ_b(samples[i]);
        (usize::from(a && b), usize::from(a || b))
    });
    let (inter, union) = counts
        .iter()
        .fold((0usize, 0usize), |(i0, u0), &(i, u)| (i0 + i, u0 + u));
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Corner-wise IOU between two grids with identical layout, threshold 0.5.
pub fn grid_iou(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64> {
    if a.resolution != b.resolution {
        return Err(AroError::InvalidArgument("grid layouts differ".into()));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&va, &vb) in a.values.iter().zip(&b.values) {
        let ia = va >= 0.5;
        let ib = vb >= 0.5;
        inter += usize::from(ia && ib);
        union += usize::from(ia || ib);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Area-weighted uniform surface samples, deterministic per seed.
pub fn sample_mesh_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.triangles.is_empty() {
        return Err(AroError::EmptyInput("mesh"));
    }
    let areas: Vec<f64> = (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.triangle_vertices(t);
            (b - a).cross(c - a).norm() / 2.0
        })
        .collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 {
        return Err(AroError::InvalidArgument("mesh has zero surface area".into()));
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for &a in &areas {
        acc += a;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let r = rng.gen::<f64>() * total;
            let t = cumulative.partition_point(|&c| c < r).min(areas.len() - 1);
            let [a, b, c] = mesh.triangle_vertices(t);
            let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            a + (b - a) * u + (c - a) * v
        })
        .collect();
    PointCloud::new(points)
}

/// Subsample to exactly n points without replacement (cloud must hold >= n).
pub fn subsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if cloud.len() < n {
        return Err(AroError::InvalidArgument(format!(
            "cannot subsample {n} from {} points",
            cloud.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..cloud.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(n);
    indices.sort_unstable();
    PointCloud::new(indices.into_iter().map(|i| cloud.points[i]).collect())
}
