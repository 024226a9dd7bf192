//! ASCII XYZ point clouds and OFF meshes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Mesh, Point3, PointCloud};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

fn parse_xyz_str(text: &str, path: &Path) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 3 {
            return Err(parse_err(path, ln + 1, format!("expected 3 coordinates, found {}", vals.len())));
        }
        let mut p = [0.0; 3];
        for (slot, v) in p.iter_mut().zip(&vals) {
            *slot = v
                .parse::<f64>()
                .map_err(|e| parse_err(path, ln + 1, format!("`{v}`: {e}")))?;
            if !slot.is_finite() {
                return Err(parse_err(path, ln + 1, format!("non-finite coordinate `{v}`")));
            }
        }
        pts.push(p);
    }
    if pts.is_empty() {
        return Err(parse_err(path, 0, "no points"));
    }
    PointCloud::new(pts)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_xyz_str(&fs::read_to_string(path)?, path)
}

/// One `x y z` line per point, nine significant digits each.
pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.len() * 48);
    for p in cloud.points() {
        let _ = writeln!(s, "{:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]);
    }
    s
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    fs::write(path, format_xyz(cloud))?;
    Ok(())
}

/// Data tokens of an OFF file with their line numbers; comments stripped.
fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().flat_map(|(ln, line)| {
        line.split('#')
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(move |t| (ln + 1, t))
    })
}

/// Parses an ASCII OFF mesh. Polygons are fan-triangulated and zero-area
/// triangles dropped.
pub fn read_off(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut toks = tokens(&text).peekable();
    let (ln, head) = toks.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let rest = head
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(path, ln, format!("expected OFF header, found `{head}`")))?;
    let mut next_num = |what: &str| -> Result<(usize, String)> {
        toks.next()
            .map(|(l, t)| (l, t.to_string()))
            .ok_or_else(|| parse_err(path, 0, format!("unexpected end of file reading {what}")))
    };
    if !rest.is_empty() {
        return Err(parse_err(path, ln, format!("unexpected header `{head}`")));
    }
    let count = |(l, t): (usize, String), what: &str| -> Result<usize> {
        t.parse::<usize>()
            .map_err(|e| parse_err(path, l, format!("{what} `{t}`: {e}")))
    };
    let nv = count(next_num("vertex count")?, "vertex count")?;
    let nf = count(next_num("face count")?, "face count")?;
    let _ne = count(next_num("edge count")?, "edge count")?;
    let mut vertices: Vec<Point3> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut p = [0.0; 3];
        for slot in &mut p {
            let (l, t) = next_num("vertex coordinate")?;
            *slot = t
                .parse::<f64>()
                .map_err(|e| parse_err(path, l, format!("coordinate `{t}`: {e}")))?;
        }
        vertices.push(p);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let head = next_num("face arity")?;
        let line = head.0;
        let arity = count(head, "face arity")?;
        if arity < 3 {
            return Err(parse_err(path, line, format!("face with {arity} vertices")));
        }
        let mut idx = Vec::with_capacity(arity);
        for _ in 0..arity {
            let i = count(next_num("face index")?, "face index")?;
            if i >= nv {
                return Err(parse_err(path, line, format!("vertex index {i} out of range ({nv} vertices)")));
            }
            idx.push(i);
        }
        for j in 1..arity - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    Mesh::new(vertices, faces)
}

pub fn format_off(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.vertices().len(), mesh.faces().len());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:.12e} {:.12e} {:.12e}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_off(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    fs::write(path, format_off(mesh))?;
    Ok(())
}
