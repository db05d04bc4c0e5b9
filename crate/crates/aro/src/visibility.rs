//! Exact radial depths against a watertight mesh and the visibility-based
//! occupancy oracles for interior, exterior, and mixed anchor sets.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::bvh::MeshBvh;
use crate::error::{AroError, Result};
use crate::geom::{ray_aabb_exit, vec3, Aabb, Ray, TriMesh, Vec3};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorClass {
    Interior,
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLabel {
    Inside,
    Outside,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelProvenance {
    CoveredByInterior,
    CoveredByExterior,
    ResolvedByFlood,
    Unlabeled,
}

/// Grid of cell-center occupancy labels over a bounding box. After
/// [`oracle_occupancy_mixed`] resolution no Unknown labels remain.
#[derive(Debug, Clone)]
pub struct LabeledGrid {
    pub resolution: [usize; 3],
    pub domain: Aabb,
    pub labels: Vec<CellLabel>,
    pub provenance: Vec<LabelProvenance>,
}

impl LabeledGrid {
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution[1] + j) * self.resolution[2] + k
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let ext = self.domain.max - self.domain.min;
        vec3(
            self.domain.min.x + ext.x * (i as f64 + 0.5) / self.resolution[0] as f64,
            self.domain.min.y + ext.y * (j as f64 + 0.5) / self.resolution[1] as f64,
            self.domain.min.z + ext.z * (k as f64 + 0.5) / self.resolution[2] as f64,
        )
    }

    pub fn cell_diagonal(&self) -> f64 {
        let ext = self.domain.max - self.domain.min;
        vec3(
            ext.x / self.resolution[0] as f64,
            ext.y / self.resolution[1] as f64,
            ext.z / self.resolution[2] as f64,
        )
        .norm()
    }
}

/// Distance from the anchor to the first surface hit along `direction`;
/// box-exit distance when the ray misses the mesh.
pub fn radial_depth(bvh: &MeshBvh, anchor: Vec3, direction: Vec3, aabb: &Aabb) -> Result<f64> {
    let ray = Ray::new(anchor, direction);
    match bvh.first_hit(&ray) {
        Some(t) => Ok(t),
        None => ray_aabb_exit(&ray, aabb),
    }
}

/// Depth toward a query point; helper shared by the oracles.
fn depth_toward(bvh: &MeshBvh, anchor: Vec3, x: Vec3, aabb: &Aabb) -> Result<Option<f64>> {
    let r = x - anchor;
    let n = r.norm();
    if n == 0.0 {
        return Ok(None);
    }
    radial_depth(bvh, anchor, r / n, aabb).map(Some)
}

fn parity_direction(attempt: usize, salt: u64) -> Vec3 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9 ^ salt ^ (attempt as u64) << 32);
    loop {
        let d = vec3(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if d.norm() > 1e-3 {
            return d.normalized();
        }
    }
}

/// Ray-parity membership: odd crossing count means interior. Retries with
/// perturbed directions while hits graze triangle edges.
pub fn classify_point(bvh: &MeshBvh, p: Vec3) -> Result<AnchorClass> {
    const RETRIES: usize = 8;
    for attempt in 0..RETRIES {
        let dir = parity_direction(attempt, 0);
        if let Some(count) = bvh.count_hits_checked(&Ray::new(p, dir)) {
            return Ok(if count % 2 == 1 {
                AnchorClass::Interior
            } else {
                AnchorClass::Exterior
            });
        }
    }
    Err(AroError::GrazingRay(RETRIES))
}

pub fn classify_anchor(bvh: &MeshBvh, anchor: Vec3) -> Result<AnchorClass> {
    classify_point(bvh, anchor)
}

/// Majority vote of three independent parity rays; robust reference oracle.
pub fn parity_inside(bvh: &MeshBvh, p: Vec3, salt: u64) -> bool {
    let mut inside_votes = 0;
    for attempt in 0..3 {
        let dir = parity_direction(attempt, salt.wrapping_add(1));
        if bvh.count_hits(&Ray::new(p, dir)) % 2 == 1 {
            inside_votes += 1;
        }
    }
    inside_votes >= 2
}

/// Interior-anchor oracle: x is inside iff some anchor sees it before the
/// surface (distance to the anchor smaller than the radial depth toward x).
pub fn oracle_occupancy_interior(
    bvh: &MeshBvh,
    anchors: &[Vec3],
    x: Vec3,
    aabb: &Aabb,
) -> Result<bool> {
    for &a in anchors {
        match depth_toward(bvh, a, x, aabb)? {
            None => return Ok(true), // x coincides with an interior anchor
            Some(depth) => {
                if (x - a).norm() < depth {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Exterior-anchor oracle: x is inside iff no anchor's visible region covers
/// it (every anchor distance exceeds the radial depth toward x).
pub fn oracle_occupancy_exterior(
    bvh: &MeshBvh,
    anchors: &[Vec3],
    x: Vec3,
    aabb: &Aabb,
) -> Result<bool> {
    for &a in anchors {
        match depth_toward(bvh, a, x, aabb)? {
            None => return Ok(false), // x coincides with an exterior anchor
            Some(depth) => {
                if (x - a).norm() <= depth {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Mixed-anchor oracle on a grid of cell centers. Cells covered by an
/// interior anchor become Inside, by an exterior anchor Outside; remaining
/// Unknown components are resolved by 6-connected flood fill where adjacency
/// "crosses the surface" iff the center-to-center segment hits the mesh.
pub fn oracle_occupancy_mixed(
    mesh: &TriMesh,
    bvh: &MeshBvh,
    anchors: &[Vec3],
    resolution: [usize; 3],
    aabb: &Aabb,
) -> Result<LabeledGrid> {
    if !mesh.watertight {
        return Err(AroError::NotWatertight("mixed oracle requires a watertight mesh".into()));
    }
    let classes: Vec<AnchorClass> = anchors
        .iter()
        .map(|&a| classify_anchor(bvh, a))
        .collect::<Result<_>>()?;

    let [nx, ny, nz] = resolution;
    let mut grid = LabeledGrid {
        resolution,
        domain: *aabb,
        labels: vec![CellLabel::Unknown; nx * ny * nz],
        provenance: vec![LabelProvenance::Unlabeled; nx * ny * nz],
    };

    let cells: Vec<(CellLabel, LabelProvenance)> = par::map_indexed(nx * ny * nz, |flat| {
        let i = flat / (ny * nz);
        let j = (flat / nz) % ny;
        let k = flat % nz;
        let x = grid.cell_center(i, j, k);
        let mut label = CellLabel::Unknown;
        let mut prov = LabelProvenance::Unlabeled;
        for (&a, &class) in anchors.iter().zip(&classes) {
            let covered = match depth_toward(bvh, a, x, aabb) {
                Ok(Some(depth)) => (x - a).norm() < depth,
                Ok(None) => class == AnchorClass::Interior,
                Err(_) => false,
            };
            if covered {
                match class {
                    AnchorClass::Interior => {
                        label = CellLabel::Inside;
                        prov = LabelProvenance::CoveredByInterior;
                    }
                    AnchorClass::Exterior => {
                        label = CellLabel::Outside;
                        prov = LabelProvenance::CoveredByExterior;
                    }
                }
                break;
            }
        }
        (label, prov)
    });
    for (flat, (label, prov)) in cells.into_iter().enumerate() {
        grid.labels[flat] = label;
        grid.provenance[flat] = prov;
    }

    resolve_unknown(&mut grid, bvh)?;
    Ok(grid)
}

fn resolve_unknown(grid: &mut LabeledGrid, bvh: &MeshBvh) -> Result<()> {
    let [nx, ny, nz] = grid.resolution;
    let mut component = vec![usize::MAX; grid.labels.len()];
    let mut components: Vec<Vec<usize>> = Vec::new();

    let neighbors = |flat: usize| {
        let i = flat / (ny * nz);
        let j = (flat / nz) % ny;
        let k = flat % nz;
        let mut out = Vec::with_capacity(6);
        if i > 0 {
            out.push(flat - ny * nz);
        }
        if i + 1 < nx {
            out.push(flat + ny * nz);
        }
        if j > 0 {
            out.push(flat - nz);
        }
        if j + 1 < ny {
            out.push(flat + nz);
        }
        if k > 0 {
            out.push(flat - 1);
        }
        if k + 1 < nz {
            out.push(flat + 1);
        }
        out
    };
    let on_boundary = |flat: usize| {
        let i = flat / (ny * nz);
        let j = (flat / nz) % ny;
        let k = flat % nz;
        i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1
    };
    let center = |g: &LabeledGrid, flat: usize| {
        let i = flat / (ny * nz);
        let j = (flat / nz) % ny;
        let k = flat % nz;
        g.cell_center(i, j, k)
    };

    // collect 6-connected components of Unknown cells
    for start in 0..grid.labels.len() {
        if grid.labels[start] != CellLabel::Unknown || component[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut stack = vec![start];
        let mut cells = Vec::new();
        component[start] = id;
        while let Some(c) = stack.pop() {
            cells.push(c);
            for nb in neighbors(c) {
                if grid.labels[nb] == CellLabel::Unknown && component[nb] == usize::MAX {
                    component[nb] = id;
                    stack.push(nb);
                }
            }
        }
        components.push(cells);
    }

    for (id, cells) in components.iter().enumerate() {
        let mut resolved: Option<CellLabel> = None;
        // boundary-touching components are outside (the bounding box clips
        // exterior visible regions)
        if cells.iter().any(|&c| on_boundary(c)) {
            resolved = Some(CellLabel::Outside);
        } else {
            let mut non_crossing: Option<CellLabel> = None;
            let mut crossing: Option<CellLabel> = None;
            let mut conflict = false;
            for &c in cells {
                for nb in neighbors(c) {
                    let lbl = grid.labels[nb];
                    if lbl == CellLabel::Unknown {
                        continue;
                    }
                    let blocked = bvh.segment_blocked(center(grid, c), center(grid, nb));
                    if !blocked {
                        match non_crossing {
                            None => non_crossing = Some(lbl),
                            Some(prev) if prev != lbl => conflict = true,
                            _ => {}
                        }
                    } else {
                        let flipped = match lbl {
                            CellLabel::Inside => CellLabel::Outside,
                            CellLabel::Outside => CellLabel::Inside,
                            CellLabel::Unknown => unreachable!(),
                        };
                        if crossing.is_none() {
                            crossing = Some(flipped);
                        }
                    }
                }
            }
            if conflict {
                return Err(AroError::CoverageViolated(id));
            }
            resolved = resolved.or(non_crossing).or(crossing);
        }
        let label = resolved.ok_or(AroError::CoverageViolated(id))?;
        for &c in cells {
            grid.labels[c] = label;
            grid.provenance[c] = LabelProvenance::ResolvedByFlood;
        }
    }
    Ok(())
}

/// Fraction of area-uniform surface samples visible to at least one anchor.
pub fn coverage_check(
    mesh: &TriMesh,
    bvh: &MeshBvh,
    anchors: &[Vec3],
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if !mesh.watertight {
        return Err(AroError::NotWatertight("coverage check requires a watertight mesh".into()));
    }
    let samples = crate::metrics::sample_mesh_surface(mesh, n_samples, seed)?;
    let covered: usize = par::map_indexed(samples.points.len(), |i| {
        let s = samples.points[i];
        let visible = anchors.iter().any(|&a| {
            let d = s - a;
            let dist = d.norm();
            if dist < 1e-9 {
                return true;
            }
            let ray = Ray::new(a, d / dist);
            match bvh.first_hit(&ray) {
                // the first hit is the sample itself (within tolerance)
                Some(t) => t >= dist - 1e-6,
                None => true,
            }
        });
        usize::from(visible)
    })
    .into_iter()
    .sum();
    Ok(covered as f64 / samples.points.len() as f64)
}
