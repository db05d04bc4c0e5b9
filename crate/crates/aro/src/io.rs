//! File formats: ASCII OBJ (v/f records), XYZ, PLY (vertex elements),
//! anchor sets, occupancy grids, PGM images, 2D polygons, network
//! parameters, and the encoded-observation binary. All readers reject
//! non-finite numbers; writers format floats with shortest-roundtrip
//! `{}` so reruns are byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::anchors::{AnchorSet, Strategy};
use crate::error::{AroError, Result};
use crate::field::{Grid2D, OccupancyGrid};
use crate::geom::{vec2, vec3, PointCloud, TriMesh, Vec2, Vec3};
use crate::nn2d::net::{AttentionNetParams, NetConfig};
use crate::nn2d::shape::Shape2D;
use crate::obs::AroFeatureSet;

fn parse_err(path: &Path, msg: impl Into<String>) -> AroError {
    AroError::Parse { path: path.display().to_string(), msg: msg.into() }
}

fn parse_f64(tok: &str, path: &Path, what: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, format!("bad {what}: '{tok}'")))?;
    if !v.is_finite() {
        return Err(parse_err(path, format!("non-finite {what}: '{tok}'")));
    }
    Ok(v)
}

// ---------------------------------------------------------------- meshes

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let file = BufReader::new(File::open(path)?);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, line) in file.lines().enumerate() {
        let line = line?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let tok = toks
                        .next()
                        .ok_or_else(|| parse_err(path, format!("line {}: short v record", ln + 1)))?;
                    *slot = parse_f64(tok, path, "vertex coordinate")?;
                }
                vertices.push(vec3(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = toks
                    .map(|t| {
                        // accept v, v/vt, v//vn forms; indices are 1-based
                        let head = t.split('/').next().unwrap_or(t);
                        head.parse::<usize>()
                            .ok()
                            .and_then(|i| i.checked_sub(1))
                            .ok_or_else(|| {
                                parse_err(path, format!("line {}: bad face index '{t}'", ln + 1))
                            })
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(parse_err(
                        path,
                        format!("line {}: only triangle faces are supported", ln + 1),
                    ));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {} // comments, empty lines, and unknown records are skipped
        }
    }
    TriMesh::new(vertices, triangles)
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

// ---------------------------------------------------------- point clouds

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let file = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    for (ln, line) in file.lines().enumerate() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 3 {
            return Err(parse_err(path, format!("line {}: expected 3 coordinates", ln + 1)));
        }
        points.push(vec3(
            parse_f64(toks[0], path, "x")?,
            parse_f64(toks[1], path, "y")?,
            parse_f64(toks[2], path, "z")?,
        ));
    }
    PointCloud::new(points)
}

pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for p in &cloud.points {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic.trim() != "ply" {
        return Err(parse_err(path, "missing 'ply' magic"));
    }
    let mut count: Option<usize> = None;
    let mut props = 0usize;
    let mut xyz_cols: [Option<usize>; 3] = [None; 3];
    for line in &mut lines {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", ..] => {}
            ["format", ..] => return Err(parse_err(path, "only ascii PLY is supported")),
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| parse_err(path, "bad vertex count"))?);
            }
            ["element", other, ..] => {
                return Err(parse_err(path, format!("unsupported element '{other}'")));
            }
            ["property", _ty, name] => {
                match *name {
                    "x" => xyz_cols[0] = Some(props),
                    "y" => xyz_cols[1] = Some(props),
                    "z" => xyz_cols[2] = Some(props),
                    _ => {}
                }
                props += 1;
            }
            ["end_header"] => break,
            [] => {}
            _ => return Err(parse_err(path, format!("unsupported header line '{line}'"))),
        }
    }
    let count = count.ok_or_else(|| parse_err(path, "no vertex element"))?;
    let cols = match xyz_cols {
        [Some(a), Some(b), Some(c)] => [a, b, c],
        _ => return Err(parse_err(path, "vertex element lacks x/y/z properties")),
    };
    let mut points = Vec::with_capacity(count);
    for line in lines.take(count) {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < props {
            return Err(parse_err(path, "short vertex record"));
        }
        points.push(vec3(
            parse_f64(toks[cols[0]], path, "x")?,
            parse_f64(toks[cols[1]], path, "y")?,
            parse_f64(toks[cols[2]], path, "z")?,
        ));
    }
    if points.len() != count {
        return Err(parse_err(path, "fewer vertex records than declared"));
    }
    PointCloud::new(points)
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    writeln!(out, "property double x")?;
    writeln!(out, "property double y")?;
    writeln!(out, "property double z")?;
    writeln!(out, "end_header")?;
    for p in &cloud.points {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

/// Dispatch on extension: .xyz, .ply, or .obj (mesh vertices as a cloud).
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("xyz") => read_xyz(path),
        Some("ply") => read_ply(path),
        Some("obj") => PointCloud::new(read_obj(path)?.vertices),
        _ => Err(parse_err(path, "expected a .xyz, .ply, or .obj file")),
    }
}

// --------------------------------------------------------------- anchors

/// Header "m strategy seed" ('-' when unseeded), then one position per line.
pub fn write_anchors(path: &Path, set: &AnchorSet) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let seed = set.seed.map_or("-".to_string(), |s| s.to_string());
    writeln!(out, "{} {} {}", set.positions.len(), set.strategy.name(), seed)?;
    for p in &set.positions {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn read_anchors(path: &Path) -> Result<AnchorSet> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| parse_err(path, "empty anchor file"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(parse_err(path, "header must be 'm strategy seed'"));
    }
    let m: usize = toks[0].parse().map_err(|_| parse_err(path, "bad anchor count"))?;
    let strategy = Strategy::parse(toks[1])?;
    let seed = if toks[2] == "-" {
        None
    } else {
        Some(toks[2].parse().map_err(|_| parse_err(path, "bad seed"))?)
    };
    let mut positions = Vec::with_capacity(m);
    for line in lines {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 3 {
            return Err(parse_err(path, "anchor lines must have 3 coordinates"));
        }
        positions.push(vec3(
            parse_f64(toks[0], path, "x")?,
            parse_f64(toks[1], path, "y")?,
            parse_f64(toks[2], path, "z")?,
        ));
    }
    if positions.len() != m {
        return Err(parse_err(
            path,
            format!("header declares {m} anchors, found {}", positions.len()),
        ));
    }
    Ok(AnchorSet { positions, strategy, seed })
}

// ----------------------------------------------------------------- grids

/// ASCII header ("ARO-GRID v1", resolution, origin, spacing) followed by a
/// little-endian f32 block in the grid's native index order.
pub fn write_grid(path: &Path, grid: &OccupancyGrid) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "ARO-GRID v1")?;
    writeln!(out, "resolution {} {} {}", grid.resolution[0], grid.resolution[1], grid.resolution[2])?;
    writeln!(out, "origin {} {} {}", grid.origin.x, grid.origin.y, grid.origin.z)?;
    writeln!(out, "spacing {}", grid.spacing)?;
    writeln!(out, "data")?;
    for v in &grid.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<OccupancyGrid> {
    let mut file = BufReader::new(File::open(path)?);
    let read_line = |file: &mut BufReader<File>| -> Result<String> {
        let mut s = String::new();
        file.read_line(&mut s)?;
        Ok(s.trim_end().to_string())
    };
    if read_line(&mut file)? != "ARO-GRID v1" {
        return Err(parse_err(path, "missing 'ARO-GRID v1' magic"));
    }
    let mut resolution = [0usize; 3];
    let mut origin = Vec3::ZERO;
    let mut spacing = 0.0;
    loop {
        let line = read_line(&mut file)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["resolution", a, b, c] => {
                for (slot, tok) in resolution.iter_mut().zip([a, b, c]) {
                    *slot = tok.parse().map_err(|_| parse_err(path, "bad resolution"))?;
                }
            }
            ["origin", a, b, c] => {
                origin = vec3(
                    parse_f64(a, path, "origin")?,
                    parse_f64(b, path, "origin")?,
                    parse_f64(c, path, "origin")?,
                );
            }
            ["spacing", s] => spacing = parse_f64(s, path, "spacing")?,
            ["data"] => break,
            _ => return Err(parse_err(path, format!("unexpected header line '{line}'"))),
        }
    }
    let n = resolution[0] * resolution[1] * resolution[2];
    if n == 0 || spacing <= 0.0 {
        return Err(parse_err(path, "incomplete grid header"));
    }
    let mut bytes = vec![0u8; n * 4];
    file.read_exact(&mut bytes)
        .map_err(|_| parse_err(path, "truncated data block"))?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(OccupancyGrid { resolution, origin, spacing, values })
}

/// 8-bit PGM (P2), pixel value = round(255 * occupancy), row per j from the
/// top so the image reads with +y up.
pub fn write_pgm(path: &Path, grid: &Grid2D) -> Result<()> {
    let [nx, ny] = grid.resolution;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "P2")?;
    writeln!(out, "{nx} {ny}")?;
    writeln!(out, "255")?;
    for j in (0..ny).rev() {
        let row: Vec<String> = (0..nx)
            .map(|i| format!("{}", (grid.value(i, j).clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

// -------------------------------------------------------------- polygons

/// One "x y" vertex per line; the polygon closes implicitly.
pub fn read_poly(path: &Path) -> Result<Shape2D> {
    let file = BufReader::new(File::open(path)?);
    let mut vertices = Vec::new();
    for (ln, line) in file.lines().enumerate() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() || toks[0].starts_with('#') {
            continue;
        }
        if toks.len() != 2 {
            return Err(parse_err(path, format!("line {}: expected 'x y'", ln + 1)));
        }
        vertices.push(vec2(
            parse_f64(toks[0], path, "x")?,
            parse_f64(toks[1], path, "y")?,
        ));
    }
    Shape2D::new(vertices)
}

pub fn write_poly(path: &Path, shape: &Shape2D) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for v in &shape.vertices {
        writeln!(out, "{} {}", v.x, v.y)?;
    }
    Ok(())
}

// ------------------------------------------------------------ parameters

/// ASCII config header + little-endian f64 parameter block.
pub fn write_params(path: &Path, params: &AttentionNetParams) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let c = params.config;
    writeln!(out, "ARO-NET2D v1")?;
    writeln!(out, "model_dim {} heads {} layers {} hidden_dim {}", c.model_dim, c.heads, c.layers, c.hidden_dim)?;
    writeln!(out, "params {}", params.values.len())?;
    writeln!(out, "data")?;
    for v in &params.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_params(path: &Path) -> Result<AttentionNetParams> {
    let mut file = BufReader::new(File::open(path)?);
    let read_line = |file: &mut BufReader<File>| -> Result<String> {
        let mut s = String::new();
        file.read_line(&mut s)?;
        Ok(s.trim_end().to_string())
    };
    if read_line(&mut file)? != "ARO-NET2D v1" {
        return Err(parse_err(path, "missing 'ARO-NET2D v1' magic"));
    }
    let dims = read_line(&mut file)?;
    let toks: Vec<&str> = dims.split_whitespace().collect();
    let config = match toks.as_slice() {
        ["model_dim", d, "heads", h, "layers", l, "hidden_dim", f] => NetConfig {
            model_dim: d.parse().map_err(|_| parse_err(path, "bad model_dim"))?,
            heads: h.parse().map_err(|_| parse_err(path, "bad heads"))?,
            layers: l.parse().map_err(|_| parse_err(path, "bad layers"))?,
            hidden_dim: f.parse().map_err(|_| parse_err(path, "bad hidden_dim"))?,
        },
        _ => return Err(parse_err(path, "bad config line")),
    };
    config.validate()?;
    let count_line = read_line(&mut file)?;
    let count: usize = count_line
        .strip_prefix("params ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, "bad params line"))?;
    if count != config.param_count() {
        return Err(parse_err(path, "parameter count does not match config"));
    }
    if read_line(&mut file)? != "data" {
        return Err(parse_err(path, "missing 'data' marker"));
    }
    let mut bytes = vec![0u8; count * 8];
    file.read_exact(&mut bytes)
        .map_err(|_| parse_err(path, "truncated parameter block"))?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(parse_err(path, "non-finite parameter"));
    }
    Ok(AttentionNetParams { config, values })
}

// ------------------------------------------------------- encoded queries

/// Little-endian binary of encoded observations. Layout:
///   u64 m, u64 k, u64 query count, then per query:
///     f64 x,y,z of the query point, then per anchor (in anchor order):
///       f64 r.x, r.y, r.z, r_norm, then k entries of
///       f64 offset.x, offset.y, offset.z + u8 valid flag.
/// Observations shorter than k (tiny clouds) are zero-padded with valid = 2
/// (absent), so records have a fixed size.
pub fn write_encoded(path: &Path, m: usize, k: usize, sets: &[AroFeatureSet]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(m as u64).to_le_bytes())?;
    out.write_all(&(k as u64).to_le_bytes())?;
    out.write_all(&(sets.len() as u64).to_le_bytes())?;
    let write_v3 = |out: &mut BufWriter<File>, v: Vec3| -> Result<()> {
        out.write_all(&v.x.to_le_bytes())?;
        out.write_all(&v.y.to_le_bytes())?;
        out.write_all(&v.z.to_le_bytes())?;
        Ok(())
    };
    for set in sets {
        if set.observations.len() != m {
            return Err(AroError::InvalidArgument(format!(
                "feature set has {} observations, expected {m}",
                set.observations.len()
            )));
        }
        write_v3(&mut out, set.query)?;
        for obs in &set.observations {
            write_v3(&mut out, obs.r)?;
            out.write_all(&obs.r_norm.to_le_bytes())?;
            for slot in 0..k {
                match obs.observed.get(slot) {
                    Some(&p) => {
                        write_v3(&mut out, p)?;
                        out.write_all(&[u8::from(obs.valid[slot])])?;
                    }
                    None => {
                        write_v3(&mut out, Vec3::ZERO)?;
                        out.write_all(&[2u8])?;
                    }
                }
            }
        }
    }
    Ok(())
}

// ------------------------------------------------------------- utilities

pub fn read_queries(path: &Path) -> Result<Vec<Vec3>> {
    Ok(read_cloud(path)?.points)
}

pub fn read_poly_anchors_2d(set: &AnchorSet) -> Result<Vec<Vec2>> {
    if set.strategy != Strategy::Ring2D {
        return Err(AroError::InvalidArgument(
            "2D commands need a ring2d anchor file".into(),
        ));
    }
    Ok(set.positions.iter().map(|p| vec2(p.x, p.y)).collect())
}
