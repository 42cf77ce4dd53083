use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::geometry::TriangleMesh;

/// ASCII OBJ text: `v x y z` lines then 1-indexed `f i j k` lines.
///
/// Coordinates use the shortest representation that reads back to the same f64.
pub fn obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::with_capacity(32 * (mesh.vertices.len() + mesh.triangles.len()) + 64);
    let _ = writeln!(s, "# pairsdf mesh: {} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
        }
    }
    for [a, b, c] in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    s
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

/// Parse OBJ text. Accepts `v`, `vn` and triangular `f` records (with
/// optional `/vt/vn` suffixes and negative indices); ignores other directives.
pub fn parse_obj(text: &str, file: &str) -> Result<TriangleMesh> {
    let err = |line: usize, message: String| Error::Parse {
        file: file.into(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let mut tokens = raw.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        let coords = |tokens: std::str::SplitWhitespace<'_>| -> Result<Point3> {
            let v: Vec<f64> = tokens
                .take(3)
                .map(|t| t.parse::<f64>().map_err(|_| err(line, format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 || v.iter().any(|c| !c.is_finite()) {
                return Err(err(line, "expected three finite coordinates".into()));
            }
            Ok(Point3::new(v[0], v[1], v[2]))
        };
        match tag {
            "v" => vertices.push(coords(tokens)?),
            "vn" => normals.push(coords(tokens)?),
            "f" => {
                let idx: Vec<&str> = tokens.collect();
                if idx.len() != 3 {
                    return Err(err(line, format!("face with {} vertices; only triangles are supported", idx.len())));
                }
                let mut t = [0usize; 3];
                for (slot, tok) in t.iter_mut().zip(&idx) {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| err(line, format!("bad face index `{tok}`")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err(line, format!("face index {i} out of range")));
                    }
                    *slot = resolved as usize;
                }
                triangles.push(t);
            }
            _ => {}
        }
    }
    let mut mesh = TriangleMesh::new(vertices, triangles)?;
    if !normals.is_empty() && normals.len() == mesh.vertices.len() {
        mesh.normals = Some(normals);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_round_trip() {
        let m = TriangleMesh::new(
            vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 1e-7)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.obj");
        write_obj(&p, &m).unwrap();
        let back = read_obj(&p).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn quads_are_rejected_with_line() {
        let text = "# c\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        match parse_obj(text, "q.obj") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_mesh_is_header_only() {
        let s = obj_string(&TriangleMesh::default());
        assert!(s.lines().all(|l| l.starts_with('#')));
        assert_eq!(parse_obj(&s, "e").unwrap(), TriangleMesh::default());
    }

    #[test]
    fn accepts_normals_and_slashes() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvn 0 0 1\nvn 0 0 1\nvt 0 0\ng grp\nf 1//1 2//2 -1//3\n";
        let m = parse_obj(text, "n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert_eq!(m.normals.as_ref().unwrap().len(), 3);
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n", "bad").is_err());
    }
}
