//! Triangle meshes as ASCII PLY.
//!
//! Vertices are written as `property double` with Rust's shortest
//! round-trip float formatting, so save followed by load reproduces the
//! mesh bitwise.

use crate::FormatError;
use psent_core::geometry::linalg::Vec3;
use psent_core::geometry::TriMesh;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Write `mesh` as ASCII PLY.
pub fn save_ply(path: &Path, mesh: &TriMesh) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", mesh.vertices().len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    out.push_str(&format!("element face {}\n", mesh.triangles().len()));
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in mesh.vertices() {
        out.push_str(&format!("{} {} {}\n", v[0], v[1], v[2]));
    }
    for t in mesh.triangles() {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| FormatError::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Read an ASCII PLY written by [`save_ply`] (or any PLY limited to the
/// same two elements).
pub fn load_ply(path: &Path) -> Result<TriMesh, FormatError> {
    if !path.exists() {
        return Err(FormatError::Missing {
            role: "vertebra mesh",
            path: path.to_path_buf(),
        });
    }
    let file = fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let mut n_vertices: Option<usize> = None;
    let mut n_faces: Option<usize> = None;
    let mut header_end = 0;
    for (i, line) in &mut lines {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        let line = line.trim().to_string();
        if i == 0 && line != "ply" {
            return Err(parse_err(path, 1, "not a PLY file"));
        }
        if line.starts_with("format") && !line.contains("ascii") {
            return Err(parse_err(path, i + 1, "only ASCII PLY is supported"));
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            n_vertices = rest.trim().parse().ok();
        } else if let Some(rest) = line.strip_prefix("element face ") {
            n_faces = rest.trim().parse().ok();
        } else if line == "end_header" {
            header_end = i + 1;
            break;
        }
    }
    let n_vertices =
        n_vertices.ok_or_else(|| parse_err(path, header_end, "missing vertex element"))?;
    let n_faces = n_faces.ok_or_else(|| parse_err(path, header_end, "missing face element"))?;

    let mut vertices: Vec<Vec3> = Vec::with_capacity(n_vertices);
    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(n_faces);
    for (i, line) in lines {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if vertices.len() < n_vertices {
            if fields.len() != 3 {
                return Err(parse_err(path, i + 1, "vertex line needs 3 coordinates"));
            }
            let mut v = [0.0f64; 3];
            for (k, f) in fields.iter().enumerate() {
                v[k] = f
                    .parse()
                    .map_err(|_| parse_err(path, i + 1, format!("bad coordinate {f}")))?;
            }
            vertices.push(v);
        } else if triangles.len() < n_faces {
            if fields.len() != 4 || fields[0] != "3" {
                return Err(parse_err(path, i + 1, "only triangle faces are supported"));
            }
            let mut t = [0usize; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                t[k] = f
                    .parse()
                    .map_err(|_| parse_err(path, i + 1, format!("bad vertex index {f}")))?;
            }
            triangles.push(t);
        } else {
            return Err(parse_err(path, i + 1, "data past the declared elements"));
        }
    }
    if vertices.len() != n_vertices || triangles.len() != n_faces {
        return Err(FormatError::corrupt(
            path,
            format!(
                "header declares {n_vertices} vertices / {n_faces} faces, found {} / {}",
                vertices.len(),
                triangles.len()
            ),
        ));
    }
    TriMesh::new(vertices, triangles).map_err(|e| FormatError::invalid(path, e.to_string()))
}
