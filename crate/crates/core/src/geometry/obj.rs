//! Wavefront OBJ input/output for triangulated meshes, with the common
//! `v x y z r g b` vertex-color extension, plus the `.labels` sidecar.

use std::fmt::Write as _;
use std::path::Path;

use super::{PartLabel, TriMesh, Vec3};
use crate::error::{Error, Result};

/// Loads an OBJ file. If a sibling file with the `.labels` extension exists,
/// its per-vertex labels are attached.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mesh = parse_obj(&text)?;
    let sidecar = path.with_extension("labels");
    if sidecar.exists() {
        let labels = load_labels(&sidecar)?;
        return mesh.with_labels(labels);
    }
    Ok(mesh)
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let values: Vec<f64> = tokens
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| Error::Parse {
                            line,
                            message: format!("invalid number `{t}`"),
                        })
                    })
                    .collect::<Result<_>>()?;
                match values.len() {
                    3 => vertices.push(Vec3::new(values[0], values[1], values[2])),
                    6 => {
                        vertices.push(Vec3::new(values[0], values[1], values[2]));
                        colors.push(Vec3::new(values[3], values[4], values[5]));
                    }
                    // homogeneous w component, ignored
                    4 => vertices.push(Vec3::new(values[0], values[1], values[2])),
                    k => {
                        return Err(Error::Parse {
                            line,
                            message: format!("vertex with {k} components"),
                        })
                    }
                }
            }
            Some("f") => {
                let corners: Vec<&str> = tokens.collect();
                if corners.len() != 3 {
                    return Err(Error::NonTriangleFace { line });
                }
                let mut face = [0i64; 3];
                for (slot, corner) in face.iter_mut().zip(&corners) {
                    let idx = corner.split('/').next().unwrap_or("");
                    *slot = idx.parse::<i64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("invalid face index `{corner}`"),
                    })?;
                }
                faces.push(face);
                face_lines.push((line, vertices.len()));
            }
            _ => {}
        }
    }

    let n = vertices.len() as i64;
    let mut resolved = Vec::with_capacity(faces.len());
    for (face, &(line, seen)) in faces.iter().zip(&face_lines) {
        let mut out = [0usize; 3];
        for (slot, &idx) in out.iter_mut().zip(face) {
            // Negative indices are relative to the vertices seen so far.
            let abs = if idx < 0 { seen as i64 + idx } else { idx - 1 };
            if idx == 0 || abs < 0 || abs >= n {
                return Err(Error::IndexOutOfRange { line, index: idx });
            }
            *slot = abs as usize;
        }
        if out[0] == out[1] || out[1] == out[2] || out[0] == out[2] {
            return Err(Error::Parse {
                line,
                message: "degenerate face (repeated vertex index)".into(),
            });
        }
        resolved.push(out);
    }

    let mesh = TriMesh::new(vertices, resolved)?;
    if colors.is_empty() {
        Ok(mesh)
    } else if colors.len() == mesh.vertex_count() {
        mesh.with_colors(colors)
    } else {
        Err(Error::Parse {
            line: 0,
            message: "vertex colors present on some but not all vertices".into(),
        })
    }
}

/// Reads a sidecar label file: one integer per line, `0` skin, `1` cloth.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<PartLabel>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let code: i64 = l.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("invalid label `{}`", l.trim()),
            })?;
            PartLabel::from_code(code).ok_or(Error::Parse {
                line: i + 1,
                message: format!("unknown label code {code}"),
            })
        })
        .collect()
}

pub fn write_labels(labels: &[PartLabel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        writeln!(s, "{}", l.code()).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes the mesh as OBJ. Coordinates use Rust's shortest round-trip float
/// formatting so a write/read cycle is lossless. Labels go to the sidecar.
pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for (i, v) in mesh.vertices().iter().enumerate() {
        match mesh.colors() {
            Some(c) => {
                let c = c[i];
                writeln!(s, "v {:?} {:?} {:?} {:?} {:?} {:?}", v.x, v.y, v.z, c.x, c.y, c.z).unwrap()
            }
            None => writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap(),
        }
    }
    for f in mesh.faces() {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))?;
    if let Some(labels) = mesh.labels() {
        write_labels(labels, path.with_extension("labels"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "# unit square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n";

    #[test]
    fn unit_square() {
        let m = parse_obj(SQUARE).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.face_count(), 2);
        assert!(m.colors().is_none());
    }

    #[test]
    fn quad_face_names_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap_err();
        assert_eq!(err.to_string(), "non-triangle face at line 5");
    }

    #[test]
    fn out_of_range_index_names_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1 2 7\n").unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { line: 4, index: 7 }));
    }

    #[test]
    fn garbage_number_names_line() {
        let err = parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn slash_and_negative_indices() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nf -3/1/1 -2/2/2 -1/3/3\n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn colors_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.obj");
        let src = parse_obj("v 0 0 0 0.1 0.2 0.3\nv 1 0 0 1 0 0\nv 0 1 0 0 1 0.5\nf 1 2 3\n").unwrap();
        write_obj(&src, &path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.colors().unwrap(), src.colors().unwrap());
        assert_eq!(back.colors().unwrap()[0], Vec3::new(0.1, 0.2, 0.3));
        assert_eq!(back.vertices(), src.vertices());
    }

    #[test]
    fn labels_sidecar_is_picked_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        std::fs::write(&path, SQUARE).unwrap();
        std::fs::write(dir.path().join("m.labels"), "0\n1\n1\n0\n").unwrap();
        let m = load_mesh(&path).unwrap();
        assert_eq!(
            m.labels().unwrap(),
            &[PartLabel::Skin, PartLabel::Cloth, PartLabel::Cloth, PartLabel::Skin]
        );
        std::fs::write(dir.path().join("m.labels"), "0\n1\n").unwrap();
        assert!(load_mesh(&path).is_err());
        std::fs::write(dir.path().join("m.labels"), "0\n1\n7\n0\n").unwrap();
        assert!(matches!(load_mesh(&path).unwrap_err(), Error::Parse { line: 3, .. }));
    }
}
