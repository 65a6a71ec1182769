//! Wavefront OBJ subset: `v x y z` and triangular `f` records.
//!
//! Texture and normal indices in face records (`f 1/1/1 ...`) are accepted and
//! ignored; negative (relative) indices are resolved. Every other record type is
//! skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for slot in p.iter_mut() {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| Error::Parse { line, message: "vertex needs three coordinates".into() })?;
                    *slot = tok
                        .parse()
                        .map_err(|_| Error::Parse { line, message: format!("bad coordinate `{tok}`") })?;
                }
                positions.push(p);
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(Error::NonTriangular { line, arity: refs.len() });
                }
                let mut tri = [0usize; 3];
                for (slot, tok) in tri.iter_mut().zip(&refs) {
                    *slot = resolve_index(tok, positions.len(), line)?;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(Error::Parse { line: 0, message: "no faces".into() });
    }
    for tri in &faces {
        if let Some(&bad) = tri.iter().find(|&&v| v >= positions.len()) {
            return Err(Error::Parse { line: 0, message: format!("vertex index {} out of range", bad + 1) });
        }
    }
    Mesh::from_faces(positions, &faces)
}

fn resolve_index(tok: &str, seen: usize, line: usize) -> Result<usize> {
    let head = tok.split('/').next().unwrap_or("");
    let idx: i64 = head
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("bad vertex reference `{tok}`") })?;
    let resolved = match idx {
        0 => None,
        i if i > 0 => Some(i as usize - 1),
        i => (seen as i64 + i).try_into().ok(),
    };
    resolved.ok_or_else(|| Error::Parse { line, message: format!("invalid vertex index {idx}") })
}

/// Serializes the mesh; with `uv`, faces reference matching `vt` records.
pub fn write_obj(mesh: &Mesh, uv: Option<&[[f64; 2]]>) -> String {
    let mut out = String::new();
    for p in mesh.positions() {
        let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
    }
    if let Some(uv) = uv {
        for t in uv {
            let _ = writeln!(out, "vt {} {}", t[0], t[1]);
        }
    }
    for [a, b, c] in mesh.faces() {
        let (a, b, c) = (a + 1, b + 1, c + 1);
        if uv.is_some() {
            let _ = writeln!(out, "f {a}/{a} {b}/{b} {c}/{c}");
        } else {
            let _ = writeln!(out, "f {a} {b} {c}");
        }
    }
    out
}

pub fn save_obj(mesh: &Mesh, path: impl AsRef<Path>, uv: Option<&[[f64; 2]]>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_obj(mesh, uv)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_triangle() {
        let mesh = parse_obj("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!((mesh.num_vertices(), mesh.num_edges(), mesh.num_faces()), (3, 3, 1));
    }

    #[test]
    fn ignores_texture_and_normal_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 3//1\n";
        assert_eq!(parse_obj(text).unwrap().num_faces(), 1);
    }

    #[test]
    fn negative_indices_are_relative() {
        let mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(mesh.face_vertices(0), [0, 1, 2]);
    }

    #[test]
    fn quad_is_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(parse_obj(text), Err(Error::NonTriangular { line: 5, arity: 4 })));
    }

    #[test]
    fn bad_numbers_are_parse_errors() {
        assert!(matches!(parse_obj("v 0 zero 0\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_obj("v 0 0 0\nf 1 2 9\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn writes_uv_records() {
        let mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let text = write_obj(&mesh, Some(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]));
        assert!(text.contains("vt 1 0"));
        assert!(text.contains("f 1/1 2/2 3/3"));
        assert_eq!(parse_obj(&text).unwrap().num_faces(), 1);
    }
}
