//! End-to-end acceptance gate. Each test prints one PASS/FAIL line.

use std::panic::{catch_unwind, UnwindSafe};
use std::process::Command;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use aro::anchors;
use aro::bvh::MeshBvh;
use aro::field::{evaluate_grid, marching_cubes, marching_squares, polyline_perimeter, Grid2D};
use aro::geom::{vec2, vec3, Aabb, PointCloud, TriMesh, Vec2, Vec3};
use aro::metrics::{chamfer, emd, hausdorff, occupancy_iou};
use aro::nn2d::net::{loss_and_gradients, AttentionNetParams, NetConfig};
use aro::nn2d::shape::{generate_samples, point_in_polygon, AroFeature2D, Box2D, Shape2D};
use aro::nn2d::train::{anchor_activation_map, reconstruct_image, train, TrainConfig};
use aro::obs::heuristic_occupancy_exterior;
use aro::shapes::{cube, disk_polygon, icosphere, letter_polygon, torus};
use aro::spatial::{cmp_tier1, cmp_tier2, default_half_angle, ConeHit, ConeQuery, SpatialIndex};
use aro::visibility::{
    coverage_check, oracle_occupancy_exterior, oracle_occupancy_interior, oracle_occupancy_mixed,
    parity_inside, CellLabel,
};

fn criterion<F: FnOnce() + UnwindSafe>(n: usize, name: &str, f: F) {
    let result = catch_unwind(f);
    let verdict = if result.is_ok() { "PASS" } else { "FAIL" };
    // write to the stdout handle directly: the harness only captures the
    // print! macro path, so the verdict line appears even without --nocapture
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    writeln!(out, "ACCEPTANCE {n} ({name}): {verdict}").unwrap();
    out.flush().unwrap();
    if let Err(e) = result {
        std::panic::resume_unwind(e);
    }
}

fn rand_point(rng: &mut ChaCha8Rng) -> Vec3 {
    vec3(
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
    )
}

// -------------------------------------------------------------------- 1

fn oracle_fidelity_for(mesh: &TriMesh, interior_anchors: &[Vec3], tag: &str) {
    let res = 64usize;
    let domain = Aabb::centered_cube(1.0);
    let bvh = MeshBvh::build(mesh);
    let layered = anchors::layered_fibonacci(48).unwrap();

    let cov = coverage_check(mesh, &bvh, &layered.positions, 2000, 17).unwrap();
    assert_eq!(cov, 1.0, "{tag}: coverage {cov}");

    let exterior: Vec<Vec3> = anchors::fibonacci_sphere_directions(48)
        .unwrap()
        .iter()
        .map(|&d| d * 0.5)
        .collect();

    let grid = oracle_occupancy_mixed(mesh, &bvh, &layered.positions, [res, res, res], &domain)
        .unwrap();
    let shell = grid.cell_diagonal();

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut n = 0usize;
    let mut wrong = [0usize; 3];
    while n < 100_000 {
        let x = rand_point(&mut rng);
        if bvh.distance_to_surface(x) < shell {
            continue;
        }
        n += 1;
        let truth = parity_inside(&bvh, x, n as u64);
        if oracle_occupancy_interior(&bvh, interior_anchors, x, &domain).unwrap() != truth {
            wrong[0] += 1;
        }
        if oracle_occupancy_exterior(&bvh, &exterior, x, &domain).unwrap() != truth {
            wrong[1] += 1;
        }
        let ext = domain.max - domain.min;
        let ci = (((x.x - domain.min.x) / ext.x * res as f64) as usize).min(res - 1);
        let cj = (((x.y - domain.min.y) / ext.y * res as f64) as usize).min(res - 1);
        let ck = (((x.z - domain.min.z) / ext.z * res as f64) as usize).min(res - 1);
        let label = grid.labels[grid.idx(ci, cj, ck)];
        if (label == CellLabel::Inside) != truth {
            wrong[2] += 1;
        }
    }
    for (case, w) in ["interior", "exterior", "mixed"].iter().zip(wrong) {
        let agree = 1.0 - w as f64 / n as f64;
        assert!(agree >= 0.999, "{tag}/{case}: agreement {agree:.5} ({w} of {n} wrong)");
    }
}

#[test]
fn acceptance_1_oracle_fidelity() {
    criterion(1, "oracle fidelity on sphere, cube, torus", || {
        let small: Vec<Vec3> = anchors::fibonacci_sphere_directions(8)
            .unwrap()
            .iter()
            .map(|&d| d * 0.1)
            .collect();
        oracle_fidelity_for(&icosphere(0.4, 3), &small, "sphere");
        oracle_fidelity_for(&cube(0.28), &small, "cube");
        let ring: Vec<Vec3> = (0..12)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 12.0;
                vec3(0.3 * t.cos(), 0.3 * t.sin(), 0.0)
            })
            .collect();
        oracle_fidelity_for(&torus(0.3, 0.12, 48, 24), &ring, "torus");
    });
}

// -------------------------------------------------------------------- 2

/// Independent re-derivation of the two-tier cone selection.
fn brute_cone(points: &[Vec3], q: &ConeQuery) -> Vec<(usize, bool)> {
    let axis = q.axis.normalized();
    let mut tier1: Vec<(usize, f64, f64)> = Vec::new();
    let mut tier2: Vec<(usize, f64, f64)> = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        let v = p - q.apex;
        let dist = v.norm();
        let angle = if dist == 0.0 {
            0.0
        } else {
            (v.dot(axis) / dist).clamp(-1.0, 1.0).acos()
        };
        if angle <= q.half_angle {
            tier1.push((i, dist, angle));
        } else {
            tier2.push((i, dist, angle));
        }
    }
    tier1.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
    tier2.sort_by(|a, b| (a.2, a.1, a.0).partial_cmp(&(b.2, b.1, b.0)).unwrap());
    let mut out: Vec<(usize, bool)> = tier1.iter().take(q.k).map(|t| (t.0, true)).collect();
    for t in &tier2 {
        if out.len() >= q.k {
            break;
        }
        out.push((t.0, false));
    }
    out
}

#[test]
fn acceptance_2_cone_query_exactness() {
    criterion(2, "1000 cone queries match brute force", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2020);
        let points: Vec<Vec3> = (0..2048).map(|_| rand_point(&mut rng)).collect();
        let cloud = PointCloud::new(points.clone()).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        for _ in 0..1000 {
            let apex = rand_point(&mut rng);
            let toward = rand_point(&mut rng);
            if (toward - apex).norm() < 1e-9 {
                continue;
            }
            let q = ConeQuery {
                apex,
                axis: toward - apex,
                half_angle: default_half_angle(),
                k: 16,
            };
            let got: Vec<(usize, bool)> = index
                .cone_top_k(&q)
                .unwrap()
                .iter()
                .map(|h| (h.index, h.in_cone))
                .collect();
            let want = brute_cone(&points, &q);
            assert_eq!(got, want, "apex {apex:?}");
        }
        // the tie comparators themselves are part of the contract
        let a = ConeHit { index: 1, point: Vec3::ZERO, distance: 1.0, angle: 0.1, in_cone: true };
        let b = ConeHit { index: 2, point: Vec3::ZERO, distance: 1.0, angle: 0.2, in_cone: true };
        assert_eq!(cmp_tier1(&a, &b), std::cmp::Ordering::Less);
        assert_eq!(cmp_tier2(&a, &b), std::cmp::Ordering::Less);
    });
}

// -------------------------------------------------------------------- 3

#[test]
fn acceptance_3_anchor_schedule() {
    criterion(3, "layered fibonacci radii and grid in-sphere subset", || {
        let set = anchors::layered_fibonacci(48).unwrap();
        assert_eq!(set.positions.len(), 48);
        for &radius in &[0.5, 0.25, 0.125] {
            let at_r = set
                .positions
                .iter()
                .filter(|p| (p.norm() - radius).abs() < 1e-12)
                .count();
            assert_eq!(at_r, 16, "radius {radius}");
        }
        let in_sphere: Vec<Vec3> = anchors::full_grid_points()
            .into_iter()
            .filter(|p| p.norm() <= 0.5 + 1e-12)
            .collect();
        let sampled = anchors::grid_sample(in_sphere.len(), 1).unwrap();
        for p in &in_sphere {
            assert!(
                sampled.positions.iter().any(|q| (*q - *p).norm() < 1e-12),
                "missing in-sphere lattice point {p:?}"
            );
        }
    });
}

// -------------------------------------------------------------------- 4

#[test]
fn acceptance_4_isosurface_quality() {
    criterion(4, "marching cubes ball and marching squares disk", || {
        let res = 64usize;
        let domain = Aabb::centered_cube(1.0);
        let grid = evaluate_grid(
            |p| if p.norm() < 0.4 { 1.0 } else { 0.0 },
            &domain,
            [res, res, res],
        )
        .unwrap();
        let mesh = marching_cubes(&grid, 0.5);
        assert!(!mesh.vertices.is_empty());
        let cell = 1.0 / (res - 1) as f64;
        // directed Hausdorff both ways against the analytic sphere
        let mut worst = 0.0f64;
        for v in &mesh.vertices {
            worst = worst.max((v.norm() - 0.4).abs());
        }
        let bvh = MeshBvh::build(&mesh);
        for dir in anchors::fibonacci_sphere_directions(500).unwrap() {
            worst = worst.max(bvh.distance_to_surface(dir * 0.4));
        }
        assert!(worst < 2.0 * cell, "Hausdorff {worst} vs cell {cell}");

        let res2 = 256usize;
        let spacing = 1.0 / (res2 - 1) as f64;
        let mut img = Grid2D {
            resolution: [res2, res2],
            origin: vec2(-0.5, -0.5),
            spacing,
            values: vec![0.0; res2 * res2],
        };
        for i in 0..res2 {
            for j in 0..res2 {
                // disk indicator anti-aliased over one cell; a hard 0/1 step
                // pins every contour vertex to an edge midpoint and biases
                // the perimeter of any smooth curve upward by ~5.5%
                let d = 0.35 - img.point(i, j).norm();
                img.values[i * res2 + j] = (0.5 + d / spacing).clamp(0.0, 1.0);
            }
        }
        let loops = marching_squares(&img, 0.5);
        assert_eq!(loops.len(), 1);
        let p = polyline_perimeter(&loops[0]);
        let want = 2.0 * std::f64::consts::PI * 0.35;
        assert!((p - want).abs() / want < 0.05, "perimeter {p} vs {want}");
    });
}

// -------------------------------------------------------------------- 5

#[test]
fn acceptance_5_metric_identities() {
    criterion(5, "metric identities, 8! EMD, concentric-ball IOU", || {
        let mut rng = ChaCha8Rng::seed_from_u64(5050);
        let xs = PointCloud::new((0..100).map(|_| rand_point(&mut rng)).collect()).unwrap();
        let ys = PointCloud::new((0..100).map(|_| rand_point(&mut rng)).collect()).unwrap();
        assert_eq!(chamfer(&xs, &xs), 0.0);
        assert_eq!(hausdorff(&xs, &xs), 0.0);
        assert_eq!(emd(&xs, &xs).unwrap(), 0.0);
        assert_eq!(chamfer(&xs, &ys), chamfer(&ys, &xs));
        assert_eq!(hausdorff(&xs, &ys), hausdorff(&ys, &xs));
        assert!((emd(&xs, &ys).unwrap() - emd(&ys, &xs).unwrap()).abs() < 1e-12);

        let a = PointCloud::new((0..8).map(|_| rand_point(&mut rng)).collect()).unwrap();
        let b = PointCloud::new((0..8).map(|_| rand_point(&mut rng)).collect()).unwrap();
        // exhaustive minimum over all 8! assignments (Heap's algorithm)
        let mut perm: Vec<usize> = (0..8).collect();
        let mut c = [0usize; 8];
        let cost = |perm: &[usize]| -> f64 {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| (a.points[i] - b.points[j]).norm())
                .sum::<f64>()
                / 8.0
        };
        let mut best = cost(&perm);
        let mut i = 0;
        while i < 8 {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(cost(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        let solved = emd(&a, &b).unwrap();
        assert!((solved - best).abs() < 1e-12, "emd {solved} vs exhaustive {best}");

        let domain = Aabb::centered_cube(1.0);
        let iou = occupancy_iou(
            |p| p.norm() < 0.3,
            |p| p.norm() < 0.4,
            &domain,
            200_000,
            55,
        )
        .unwrap();
        assert!((iou - 0.4219).abs() < 0.01, "iou {iou}");
    });
}

// -------------------------------------------------------------------- 6

fn pixel_iou(img: &Grid2D, shape: &Shape2D) -> f64 {
    let [nx, ny] = img.resolution;
    let mut inter = 0usize;
    let mut union = 0usize;
    for i in 0..nx {
        for j in 0..ny {
            let a = img.value(i, j) >= 0.5;
            let b = point_in_polygon(&shape.vertices, img.point(i, j));
            if a && b {
                inter += 1;
            }
            if a || b {
                union += 1;
            }
        }
    }
    inter as f64 / union as f64
}

/// Analytic 2D visibility: x is visible from the anchor when the open
/// segment anchor->x misses the disk of the given radius.
fn disk_visible(anchor: Vec2, x: Vec2, radius: f64) -> bool {
    let d = x - anchor;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return true;
    }
    let a = len2;
    let b = 2.0 * anchor.dot(d);
    let c = anchor.dot(anchor) - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return true;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / (2.0 * a);
    let t1 = (-b + sq) / (2.0 * a);
    // any crossing strictly before x blocks it
    !(t0 > 0.0 && t0 < 1.0 || t1 > 0.0 && t1 < 1.0)
}

fn train_and_score(shape: &Shape2D, samples_n: usize, epochs: usize) -> (AttentionNetParams, f64) {
    let anchors = anchors::ring_anchors_2d(7).unwrap().positions_2d();
    let samples = generate_samples(shape, samples_n, 1);
    let mut params = AttentionNetParams::init(NetConfig::default(), 2).unwrap();
    let cfg = TrainConfig {
        epochs,
        batch_size: 256,
        log_every: 0,
        ..TrainConfig::default()
    };
    train(&mut params, shape, &anchors, &samples, &cfg).unwrap();
    let img = reconstruct_image(&params, shape, &anchors, Box2D::unit(), 128).unwrap();
    (params, pixel_iou(&img, shape))
}

#[test]
fn acceptance_6_attention_reconstruction() {
    criterion(6, "2D attention model on disk and letter, activation maps", || {
        let disk = Shape2D::new(disk_polygon(0.3, 64)).unwrap();
        let (params, disk_iou) = train_and_score(&disk, 3000, 30);
        assert!(disk_iou >= 0.95, "disk IOU {disk_iou}");

        let letter = Shape2D::new(letter_polygon()).unwrap();
        let (_, letter_iou) = train_and_score(&letter, 4000, 60);
        assert!(letter_iou >= 0.85, "letter IOU {letter_iou}");

        // per-anchor activation maps; anchor 0 sits at radius 0.5, outside
        // the 0.3 disk, so its activation must align with its visible region
        let ring = anchors::ring_anchors_2d(7).unwrap().positions_2d();
        let maps: Vec<Grid2D> = (0..7)
            .map(|i| anchor_activation_map(&params, &disk, &ring, i, Box2D::unit(), 128).unwrap())
            .collect();
        assert_eq!(maps.len(), 7);
        let act = &maps[0];
        let anchor = ring[0];
        assert!(anchor.norm() > 0.3, "anchor 0 must be exterior");
        let mut in_vis = 0usize;
        let mut in_comp = 0usize;
        let [nx, ny] = act.resolution;
        for i in 0..nx {
            for j in 0..ny {
                if act.value(i, j) >= 0.5 {
                    if disk_visible(anchor, act.point(i, j), 0.3) {
                        in_vis += 1;
                    } else {
                        in_comp += 1;
                    }
                }
            }
        }
        assert!(
            in_vis > in_comp,
            "activation overlap: visible {in_vis} vs complement {in_comp}"
        );
    });
}

// -------------------------------------------------------------------- 7

#[test]
fn acceptance_7_gradient_check() {
    criterion(7, "analytic gradients vs central differences", || {
        let cfg = NetConfig::toy();
        let params = AttentionNetParams::init(cfg, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let mut features = |m: usize| -> Vec<AroFeature2D> {
            (0..m)
                .map(|_| {
                    let r = vec2(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                    AroFeature2D { r, r_norm: r.norm(), d: rng.gen_range(0.05..0.8) }
                })
                .collect()
        };
        let batch = vec![(features(2), 1.0), (features(2), 0.0)];
        let (_, grad) = loss_and_gradients(&params, &batch).unwrap();
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for i in 0..params.values.len() {
            let mut plus = params.clone();
            plus.values[i] += h;
            let mut minus = params.clone();
            minus.values[i] -= h;
            let (lp, _) = loss_and_gradients(&plus, &batch).unwrap();
            let (lm, _) = loss_and_gradients(&minus, &batch).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max((grad[i] - fd).abs() / denom);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    });
}

// -------------------------------------------------------------------- 8

#[test]
fn acceptance_8_heuristic_reconstruction() {
    criterion(8, "heuristic sphere occupancy IOU", || {
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        let points: Vec<Vec3> = (0..10_000)
            .map(|_| {
                loop {
                    let v = rand_point(&mut rng);
                    let n = v.norm();
                    if n > 1e-6 {
                        break v * (0.4 / n);
                    }
                }
            })
            .collect();
        let cloud = PointCloud::new(points).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let shell: Vec<Vec3> = anchors::fibonacci_sphere_directions(48)
            .unwrap()
            .iter()
            .map(|&d| d * 0.6)
            .collect();
        let res = 64usize;
        let domain = Aabb::centered_cube(1.0);
        // the exterior heuristic is only meaningful for queries the anchors
        // surround, minus a blind annulus hugging the shell where the
        // aligned anchors' cones point tangentially and see nothing, so
        // score occupancy within radius 0.52; cells outside are zero in both
        // grids and drop out of the IOU. k = 64 keeps the cone sample deep
        // enough that the depth estimate is not truncated to the near
        // silhouette on oblique views
        let grid = evaluate_grid(
            |x| {
                if x.norm() > 0.52 {
                    return 0.0;
                }
                match heuristic_occupancy_exterior(&index, &shell, x, default_half_angle(), 64) {
                    Ok(true) => 1.0,
                    _ => 0.0,
                }
            },
            &domain,
            [res, res, res],
        )
        .unwrap();
        let truth = evaluate_grid(
            |x| if x.norm() < 0.4 { 1.0 } else { 0.0 },
            &domain,
            [res, res, res],
        )
        .unwrap();
        let iou = aro::metrics::grid_iou(&grid, &truth).unwrap();
        assert!(iou >= 0.9, "heuristic IOU {iou}");
    });
}

// -------------------------------------------------------------------- 9

#[test]
fn acceptance_9_cli_determinism() {
    criterion(9, "CLI reruns are byte-identical", || {
        let bin = env!("CARGO_BIN_EXE_aro");
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();

        let poly = root.join("disk.poly");
        let mut txt = String::new();
        for v in disk_polygon(0.3, 24) {
            txt += &format!("{} {}\n", v.x, v.y);
        }
        std::fs::write(&poly, txt).unwrap();
        let mesh_path = root.join("ball.obj");
        aro::io::write_obj(&mesh_path, &icosphere(0.4, 2)).unwrap();

        let run = |tag: &str| -> Vec<(String, Vec<u8>)> {
            let sub = root.join(tag);
            std::fs::create_dir_all(&sub).unwrap();
            let ok = |st: std::process::ExitStatus| assert!(st.success());
            ok(Command::new(bin)
                .args(["anchors", "--m", "48", "-o"])
                .arg(sub.join("anchors.txt"))
                .status()
                .unwrap());
            ok(Command::new(bin)
                .args(["oracle", "--res", "24", "--mesh"])
                .arg(&mesh_path)
                .arg("--anchors")
                .arg(sub.join("anchors.txt"))
                .arg("-o")
                .arg(sub.join("occ.grid"))
                .status()
                .unwrap());
            ok(Command::new(bin)
                .args(["train2d", "--m", "7", "--epochs", "2", "--samples", "200", "--shape"])
                .arg(&poly)
                .arg("-o")
                .arg(sub.join("model.bin"))
                .status()
                .unwrap());
            ok(Command::new(bin)
                .args(["infer2d", "--m", "7", "--res", "32", "--shape"])
                .arg(&poly)
                .arg("--model")
                .arg(sub.join("model.bin"))
                .arg("-o")
                .arg(sub.join("out.pgm"))
                .status()
                .unwrap());
            ["anchors.txt", "occ.grid", "model.bin", "out.pgm"]
                .iter()
                .map(|f| (f.to_string(), std::fs::read(sub.join(f)).unwrap()))
                .collect()
        };
        let a = run("a");
        let b = run("b");
        for ((name, bytes_a), (_, bytes_b)) in a.iter().zip(&b) {
            assert_eq!(bytes_a, bytes_b, "artifact {name} differs between reruns");
        }
    });
}
