//! Query-specific anchored radial observations and a classical occupancy
//! heuristic for exterior anchor shells.

use crate::error::{AroError, Result};
use crate::geom::Vec3;
use crate::spatial::{ConeQuery, SpatialIndex};

/// One anchor's observation of the cloud toward a query point. Observed
/// points are stored anchor-relative (p - a_i).
#[derive(Debug, Clone)]
pub struct RadialObservation {
    pub anchor_id: usize,
    /// Anchor-relative offsets of the selected points, length k (or the
    /// whole cloud if smaller).
    pub observed: Vec<Vec3>,
    /// True for tier-1 (in-cone) selections, false for fallback entries.
    pub valid: Vec<bool>,
    /// Distances of the observed points to the anchor, matching `observed`.
    pub distances: Vec<f64>,
    /// x - a_i.
    pub r: Vec3,
    pub r_norm: f64,
    /// Set when the query coincided with the anchor and the cone degenerated
    /// to plain k-nearest.
    pub zero_axis: bool,
}

#[derive(Debug, Clone)]
pub struct AroFeatureSet {
    pub query: Vec3,
    pub observations: Vec<RadialObservation>,
}

/// Extract the per-anchor observations for one query point: cone top-k with
/// apex a_i and axis x - a_i for every anchor, in anchor order.
pub fn extract_aro(
    index: &SpatialIndex,
    anchors: &[Vec3],
    x: Vec3,
    half_angle: f64,
    k: usize,
) -> Result<AroFeatureSet> {
    if anchors.is_empty() {
        return Err(AroError::EmptyInput("anchor set"));
    }
    if !x.is_finite() {
        return Err(AroError::InvalidArgument("query point must be finite".into()));
    }
    let observations = anchors
        .iter()
        .enumerate()
        .map(|(anchor_id, &a)| observe_one(index, anchor_id, a, x, half_angle, k))
        .collect::<Result<_>>()?;
    Ok(AroFeatureSet { query: x, observations })
}

fn observe_one(
    index: &SpatialIndex,
    anchor_id: usize,
    a: Vec3,
    x: Vec3,
    half_angle: f64,
    k: usize,
) -> Result<RadialObservation> {
    let r = x - a;
    let r_norm = r.norm();
    let (hits, zero_axis) = if r_norm > 0.0 {
        let q = ConeQuery { apex: a, axis: r, half_angle, k };
        (index.cone_top_k(&q)?, false)
    } else {
        (index.nearest_k(a, k), true)
    };
    Ok(RadialObservation {
        anchor_id,
        observed: hits.iter().map(|h| h.point - a).collect(),
        valid: hits.iter().map(|h| h.in_cone).collect(),
        distances: hits.iter().map(|h| h.distance).collect(),
        r,
        r_norm,
        zero_axis,
    })
}

/// Estimated first-surface distance from the anchor toward the query: the
/// projection of the nearest tier-1 point onto the unit axis. None when no
/// in-cone point exists.
pub fn estimate_radial_depth(obs: &RadialObservation) -> Option<f64> {
    if obs.r_norm == 0.0 {
        return None;
    }
    let axis = obs.r / obs.r_norm;
    // take the in-cone point most aligned with the axis: its projection is
    // the least biased estimate of the first-surface distance (an off-axis
    // point at angle theta projects to depth * cos(theta))
    obs.observed
        .iter()
        .zip(&obs.valid)
        .filter(|(_, &v)| v)
        .map(|(p, _)| {
            let n = p.norm();
            let cos = if n > 0.0 { (p.dot(axis) / n).clamp(-1.0, 1.0) } else { 1.0 };
            (p.dot(axis), cos.acos(), n)
        })
        .min_by(|a, b| (a.1, a.2).partial_cmp(&(b.1, b.2)).unwrap())
        .map(|(proj, _, _)| proj)
}

/// Occupancy vote for anchors asserted to lie outside the shape: x is inside
/// iff every anchor with a defined depth estimate sees it beyond the surface
/// (r_norm > estimated depth). Anchors without in-cone points abstain.
pub fn heuristic_occupancy_exterior(
    index: &SpatialIndex,
    anchors: &[Vec3],
    x: Vec3,
    half_angle: f64,
    k: usize,
) -> Result<bool> {
    if anchors.is_empty() {
        return Err(AroError::EmptyInput("anchor set"));
    }
    if !x.is_finite() {
        return Err(AroError::InvalidArgument("query point must be finite".into()));
    }
    // anchors are queried one at a time so the first covering anchor short
    // circuits the (expensive) remaining cone queries; scanning nearest
    // anchors first finds that anchor quickly for points outside the shape,
    // and the verdict itself does not depend on the order
    let mut order: Vec<usize> = (0..anchors.len()).collect();
    order.sort_by(|&i, &j| {
        let di = (x - anchors[i]).norm();
        let dj = (x - anchors[j]).norm();
        di.partial_cmp(&dj).unwrap().then(i.cmp(&j))
    });
    let mut votes = 0usize;
    for anchor_id in order {
        let a = anchors[anchor_id];
        let obs = observe_one(index, anchor_id, a, x, half_angle, k)?;
        if let Some(depth) = estimate_radial_depth(&obs) {
            votes += 1;
            if obs.r_norm <= depth {
                // covered by this anchor's visible region: outside
                return Ok(false);
            }
        }
    }
    if votes == 0 {
        return Err(AroError::NoObservations);
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{vec3, PointCloud};
    use crate::spatial::default_half_angle;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sphere_cloud(radius: f64, n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    let mut v;
                    loop {
                        v = vec3(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        );
                        if v.norm() > 1e-3 {
                            break;
                        }
                    }
                    v.normalized() * radius
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_anchor_on_axis() {
        let cloud = PointCloud::new(vec![
            vec3(0.1, 0.0, 0.0),
            vec3(0.2, 0.0, 0.0),
            vec3(0.5, 0.0, 0.0),
        ])
        .unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let x = vec3(0.3, 0.0, 0.0);
        let fs = extract_aro(&index, &[Vec3::ZERO], x, default_half_angle(), 2).unwrap();
        let obs = &fs.observations[0];
        assert_eq!(obs.r, vec3(0.3, 0.0, 0.0));
        assert!((obs.r_norm - 0.3).abs() < 1e-12);
        assert_eq!(obs.observed.len(), 2);
        assert_eq!(obs.observed[0], vec3(0.1, 0.0, 0.0));
        assert_eq!(obs.observed[1], vec3(0.2, 0.0, 0.0));
    }

    #[test]
    fn cloud_order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut pts: Vec<Vec3> = (0..200)
            .map(|_| vec3(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
            .collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        pts.reverse();
        let shuffled = PointCloud::new(pts).unwrap();
        let anchors = crate::anchors::layered_fibonacci(8).unwrap().positions;
        let x = vec3(0.1, 0.05, -0.2);
        let a = extract_aro(&SpatialIndex::build(&cloud).unwrap(), &anchors, x, default_half_angle(), 8).unwrap();
        let b = extract_aro(&SpatialIndex::build(&shuffled).unwrap(), &anchors, x, default_half_angle(), 8).unwrap();
        for (oa, ob) in a.observations.iter().zip(&b.observations) {
            assert_eq!(oa.observed.len(), ob.observed.len());
            for (pa, pb) in oa.observed.iter().zip(&ob.observed) {
                assert!((*pa - *pb).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<Vec3> = (0..200)
            .map(|_| vec3(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
            .collect();
        let shift = vec3(1.5, -0.7, 0.3);
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let moved = PointCloud::new(pts.iter().map(|&p| p + shift).collect()).unwrap();
        let anchors: Vec<Vec3> = crate::anchors::layered_fibonacci(6).unwrap().positions;
        let anchors_moved: Vec<Vec3> = anchors.iter().map(|&a| a + shift).collect();
        let x = vec3(0.12, 0.0, -0.08);
        let a = extract_aro(&SpatialIndex::build(&cloud).unwrap(), &anchors, x, default_half_angle(), 8).unwrap();
        let b = extract_aro(&SpatialIndex::build(&moved).unwrap(), &anchors_moved, x + shift, default_half_angle(), 8).unwrap();
        for (oa, ob) in a.observations.iter().zip(&b.observations) {
            assert!((oa.r - ob.r).norm() < 1e-9);
            assert!((oa.r_norm - ob.r_norm).abs() < 1e-9);
            for (pa, pb) in oa.observed.iter().zip(&ob.observed) {
                assert!((*pa - *pb).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_axis_falls_back_to_knn() {
        let cloud = PointCloud::new(vec![vec3(0.1, 0.0, 0.0), vec3(0.0, 0.4, 0.0)]).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let anchor = vec3(0.02, 0.0, 0.0);
        let fs = extract_aro(&index, &[anchor], anchor, default_half_angle(), 2).unwrap();
        let obs = &fs.observations[0];
        assert!(obs.zero_axis);
        assert_eq!(obs.observed.len(), 2);
        assert_eq!(obs.r_norm, 0.0);
        assert!(estimate_radial_depth(obs).is_none());
    }

    #[test]
    fn depth_on_axis() {
        let obs = RadialObservation {
            anchor_id: 0,
            observed: vec![vec3(1.0, 0.0, 0.0)],
            valid: vec![true],
            distances: vec![1.0],
            r: vec3(2.0, 0.0, 0.0),
            r_norm: 2.0,
            zero_axis: false,
        };
        assert!((estimate_radial_depth(&obs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn depth_none_without_in_cone_points() {
        let obs = RadialObservation {
            anchor_id: 0,
            observed: vec![vec3(0.0, 1.0, 0.0)],
            valid: vec![false],
            distances: vec![1.0],
            r: vec3(2.0, 0.0, 0.0),
            r_norm: 2.0,
            zero_axis: false,
        };
        assert!(estimate_radial_depth(&obs).is_none());
    }

    #[test]
    fn depth_estimate_on_dense_sphere() {
        let cloud = sphere_cloud(0.4, 10_000, 77);
        let index = SpatialIndex::build(&cloud).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for _ in 0..20 {
            let x = vec3(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            );
            if x.norm() < 1e-2 {
                continue;
            }
            let fs = extract_aro(&index, &[Vec3::ZERO], x, default_half_angle(), 16).unwrap();
            let d = estimate_radial_depth(&fs.observations[0]).unwrap();
            assert!((d - 0.4).abs() < 0.02, "depth {d}");
        }
    }

    #[test]
    fn heuristic_sphere_center_inside_boundary_outside() {
        let cloud = sphere_cloud(0.4, 10_000, 5);
        let index = SpatialIndex::build(&cloud).unwrap();
        let anchors: Vec<Vec3> = crate::anchors::fibonacci_sphere_directions(48)
            .unwrap()
            .into_iter()
            .map(|d| d * 0.6)
            .collect();
        assert!(heuristic_occupancy_exterior(&index, &anchors, Vec3::ZERO, default_half_angle(), 16).unwrap());
        assert!(!heuristic_occupancy_exterior(&index, &anchors, vec3(0.55, 0.0, 0.0), default_half_angle(), 16).unwrap());
    }
}
