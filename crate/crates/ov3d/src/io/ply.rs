//! ASCII PLY and plain .xyz point cloud readers/writers.
//!
//! The PLY reader accepts extra vertex properties and ignores them; the
//! writer emits x/y/z only. Coordinates round-trip bit-exactly through
//! shortest-decimal formatting.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::PointCloud;

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = BufReader::new(file).lines();
    let p = || path.display().to_string();

    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()
            .map_err(|e| Error::io(p(), e))?
            .ok_or_else(|| Error::schema(p(), format!("unexpected end of file, expected {what}")))
    };

    let magic = next_line("ply magic")?;
    if magic.trim() != "ply" {
        return Err(Error::schema(p(), "missing 'ply' magic"));
    }

    let mut n_vertices: Option<usize> = None;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    loop {
        let line = next_line("header line")?;
        let line = line.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(Error::schema(p(), "only 'format ascii 1.0' is supported"));
                }
            }
            Some("comment") => {}
            Some("element") => {
                let name = tok.next().unwrap_or("");
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::schema(p(), "bad element count"))?;
                in_vertex_element = name == "vertex";
                if in_vertex_element {
                    n_vertices = Some(count);
                }
            }
            Some("property") => {
                if in_vertex_element {
                    let name = tok.last().unwrap_or("").to_string();
                    vertex_props.push(name);
                }
            }
            Some("end_header") => break,
            _ => {}
        }
    }

    let n = n_vertices.ok_or_else(|| Error::schema(p(), "no vertex element in header"))?;
    let find = |prop: &str| -> Result<usize> {
        vertex_props
            .iter()
            .position(|q| q == prop)
            .ok_or_else(|| Error::schema(p(), format!("missing vertex property {prop:?}")))
    };
    let (ix, iy, iz) = (find("x")?, find("y")?, find("z")?);

    let mut points = Vec::with_capacity(n);
    for row in 0..n {
        let line = next_line("vertex row")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < vertex_props.len() {
            return Err(Error::schema(p(), format!("vertex row {row} has {} fields, expected {}", fields.len(), vertex_props.len())));
        }
        let get = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::schema(p(), format!("bad float {:?} in vertex row {row}", fields[i])))
        };
        points.push([get(ix)?, get(iy)?, get(iz)?]);
    }
    PointCloud::new(points)
}

pub fn save_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = Vec::new();
    let n = cloud.len();
    write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {n}\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
    )
    .unwrap();
    for p in cloud.points() {
        writeln!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_xyz(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::schema(
                path.display().to_string(),
                format!("line {} has {} fields, expected 3", lineno + 1, fields.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (slot, f) in p.iter_mut().zip(fields.iter()) {
            *slot = f.parse::<f64>().map_err(|_| {
                Error::schema(path.display().to_string(), format!("bad float {f:?} on line {}", lineno + 1))
            })?;
        }
        points.push(p);
    }
    PointCloud::new(points)
}

pub fn save_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::new();
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Dispatch on extension: `.ply` or `.xyz`.
pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => load_ply(path),
        Some("xyz") => load_xyz(path),
        other => Err(Error::schema(
            path.display().to_string(),
            format!("unsupported point cloud extension {other:?}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud::new(vec![[0.1, -2.5, 3.25], [1e-7, 0.333333333333, -4.0]]).unwrap();
        save_ply(&path, &cloud).unwrap();
        assert_eq!(load_ply(&path).unwrap(), cloud);
    }

    #[test]
    fn ply_extra_properties_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nend_header\n1 2 3 255\n4 5 6 0\n",
        )
        .unwrap();
        let cloud = load_ply(&path).unwrap();
        assert_eq!(cloud.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn ply_truncated_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        std::fs::write(&path, "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").unwrap();
        assert!(load_ply(&path).is_err());
    }

    #[test]
    fn xyz_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        let cloud = PointCloud::new(vec![[1.5, 2.0, -0.125]]).unwrap();
        save_xyz(&path, &cloud).unwrap();
        assert_eq!(load_xyz(&path).unwrap(), cloud);
    }

    #[test]
    fn xyz_bad_field_count_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        std::fs::write(&path, "1 2\n").unwrap();
        assert!(load_xyz(&path).is_err());
    }
}
