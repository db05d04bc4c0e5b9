//! Anchor placement strategies: layered Fibonacci shells, seeded uniform
//! ball, seeded grid selection, and a 2D ring layout.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{AroError, Result};
use crate::geom::{vec2, vec3, Vec2, Vec3};

/// Shell radii for the layered placements, applied by anchor index mod 3.
pub const LAYER_RADII: [f64; 3] = [0.5, 0.25, 0.125];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Strategy {
    LayeredFibonacci,
    UniformBall,
    GridSample,
    Ring2D,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::LayeredFibonacci => "fibonacci",
            Strategy::UniformBall => "uniform",
            Strategy::GridSample => "grid",
            Strategy::Ring2D => "ring2d",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "fibonacci" => Ok(Strategy::LayeredFibonacci),
            "uniform" => Ok(Strategy::UniformBall),
            "grid" => Ok(Strategy::GridSample),
            "ring2d" => Ok(Strategy::Ring2D),
            other => Err(AroError::InvalidArgument(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Fixed anchor positions with placement provenance. 2D layouts store z = 0.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    pub positions: Vec<Vec3>,
    pub strategy: Strategy,
    pub seed: Option<u64>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions_2d(&self) -> Vec<Vec2> {
        self.positions.iter().map(|p| vec2(p.x, p.y)).collect()
    }
}

/// Spherical Fibonacci lattice: z_i = 1 - (2i+1)/m, azimuth phi_i = i * pi * (3 - sqrt 5).
pub fn fibonacci_sphere_directions(m: usize) -> Result<Vec<Vec3>> {
    if m == 0 {
        return Err(AroError::InvalidArgument("m must be >= 1".into()));
    }
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    Ok((0..m)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / m as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            vec3(r * phi.cos(), r * phi.sin(), z)
        })
        .collect())
}

/// Fibonacci directions scaled onto shells of radius 1/2, 1/4, 1/8 by index mod 3.
pub fn layered_fibonacci(m: usize) -> Result<AnchorSet> {
    let dirs = fibonacci_sphere_directions(m)?;
    let positions = dirs
        .into_iter()
        .enumerate()
        .map(|(i, d)| d * LAYER_RADII[i % 3])
        .collect();
    Ok(AnchorSet { positions, strategy: Strategy::LayeredFibonacci, seed: None })
}

/// m points uniform in the ball of radius 0.5, reproducible per seed.
pub fn uniform_ball(m: usize, seed: u64) -> Result<AnchorSet> {
    if m == 0 {
        return Err(AroError::InvalidArgument("m must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(m);
    while positions.len() < m {
        let p = vec3(
            rng.gen_range(-0.5..=0.5),
            rng.gen_range(-0.5..=0.5),
            rng.gen_range(-0.5..=0.5),
        );
        if p.norm() <= 0.5 {
            positions.push(p);
        }
    }
    Ok(AnchorSet { positions, strategy: Strategy::UniformBall, seed: Some(seed) })
}

/// The 5x5x5 lattice over {-0.5, -0.25, 0, 0.25, 0.5}^3, in lexicographic order.
pub fn full_grid_points() -> Vec<Vec3> {
    let coords = [-0.5, -0.25, 0.0, 0.25, 0.5];
    let mut out = Vec::with_capacity(125);
    for &x in &coords {
        for &y in &coords {
            for &z in &coords {
                out.push(vec3(x, y, z));
            }
        }
    }
    out
}

/// Grid placement: every lattice point with norm <= 0.5 first, then a seeded
/// random fill from the remaining lattice points up to m.
pub fn grid_sample(m: usize, seed: u64) -> Result<AnchorSet> {
    if m == 0 {
        return Err(AroError::InvalidArgument("m must be >= 1".into()));
    }
    if m > 125 {
        return Err(AroError::InvalidArgument(format!("m = {m} exceeds the 125 grid points")));
    }
    let grid = full_grid_points();
    let (in_sphere, outside): (Vec<Vec3>, Vec<Vec3>) =
        grid.into_iter().partition(|p| p.norm() <= 0.5 + 1e-12);
    let mut positions = in_sphere;
    if m < positions.len() {
        positions.truncate(m);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = outside;
        while positions.len() < m {
            let i = rng.gen_range(0..pool.len());
            positions.push(pool.swap_remove(i));
        }
    }
    Ok(AnchorSet { positions, strategy: Strategy::GridSample, seed: Some(seed) })
}

/// 2D layout: evenly spaced angles on circles of radius 1/2, 1/4, 1/8 using
/// the same index-mod-3 schedule. Positions are stored with z = 0.
pub fn ring_anchors_2d(m: usize) -> Result<AnchorSet> {
    if m == 0 {
        return Err(AroError::InvalidArgument("m must be >= 1".into()));
    }
    // anchors on the same ring are spread evenly; ring of index j holds
    // ceil((m - j) / 3) anchors
    let ring_counts = [(m + 2) / 3, (m + 1) / 3, m / 3];
    let mut ring_slot = [0usize; 3];
    let mut positions = Vec::with_capacity(m);
    for i in 0..m {
        let ring = i % 3;
        let count = ring_counts[ring].max(1);
        let theta = 2.0 * std::f64::consts::PI * ring_slot[ring] as f64 / count as f64;
        ring_slot[ring] += 1;
        let r = LAYER_RADII[ring];
        positions.push(vec3(r * theta.cos(), r * theta.sin(), 0.0));
    }
    Ok(AnchorSet { positions, strategy: Strategy::Ring2D, seed: None })
}
