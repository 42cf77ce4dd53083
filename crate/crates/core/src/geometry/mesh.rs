use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::Point3;

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Option<Vec<Point3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let m = TriangleMesh {
            vertices,
            triangles,
            normals: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(t) = self.triangles.iter().position(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::Precondition(format!(
                "triangle {t} references vertex {:?} but the mesh has {n} vertices",
                self.triangles[t]
            )));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::dim("vertex normals", n, normals.len()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal; its length is twice the area.
    pub fn face_cross(&self, t: usize) -> Point3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(c - a)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    pub fn face_normal(&self, t: usize) -> Point3 {
        self.face_cross(t).normalized()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Same surface with every triangle's winding reversed.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            normals: self.normals.as_ref().map(|n| n.iter().map(|v| -*v).collect()),
        }
    }

    /// Concatenate two meshes into one vertex and triangle list.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let off = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + off)));
        TriangleMesh {
            vertices,
            triangles,
            normals: None,
        }
    }

    pub fn transformed(&self, f: impl Fn(Point3) -> Point3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
            normals: None,
        }
    }

    /// Area-weighted vertex normals.
    pub fn compute_normals(&mut self) {
        let mut n = vec![Point3::ZERO; self.vertices.len()];
        for t in 0..self.triangles.len() {
            let c = self.face_cross(t);
            for &v in &self.triangles[t] {
                n[v] += c;
            }
        }
        self.normals = Some(n.into_iter().map(Point3::normalized).collect());
    }

    /// Undirected edge -> number of incident triangles.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        self.edge_incidence().values().all(|&c| c == 2)
    }

    /// Every interior edge is traversed once in each direction.
    pub fn is_consistently_oriented(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *directed.entry((t[e], t[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Signed enclosed volume (positive for outward-facing closed meshes).
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    /// One pass of uniform-weight Laplacian smoothing: each vertex moves
    /// `factor` of the way to the mean of its edge neighbors.
    pub fn laplacian_smooth(&self, factor: f64) -> TriangleMesh {
        let mut sum = vec![Point3::ZERO; self.vertices.len()];
        let mut count = vec![0usize; self.vertices.len()];
        for (a, b) in self.edge_incidence().into_keys() {
            sum[a] += self.vertices[b];
            sum[b] += self.vertices[a];
            count[a] += 1;
            count[b] += 1;
        }
        let vertices = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if count[i] == 0 {
                    v
                } else {
                    v + (sum[i] / count[i] as f64 - v) * factor
                }
            })
            .collect();
        TriangleMesh {
            vertices,
            triangles: self.triangles.clone(),
            normals: None,
        }
    }

    /// Axis-aligned box with outward winding.
    pub fn cuboid(min: Point3, max: Point3) -> TriangleMesh {
        let v = |i: usize| {
            Point3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let quads = [
            [0, 2, 3, 1], // z min
            [4, 5, 7, 6], // z max
            [0, 1, 5, 4], // y min
            [2, 6, 7, 3], // y max
            [0, 4, 6, 2], // x min
            [1, 3, 7, 5], // x max
        ];
        let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        TriangleMesh {
            vertices: (0..8).map(v).collect(),
            triangles,
            normals: None,
        }
    }

    /// Subdivided icosahedron projected onto a sphere.
    pub fn icosphere(center: Point3, radius: f64, subdivisions: usize) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Point3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Point3::new(x, y, z).normalized())
        .collect();
        let mut tris: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(tris.len() * 4);
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalized());
                    verts.len() - 1
                })
            };
            for [a, b, c] in tris {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            tris = next;
        }
        TriangleMesh {
            vertices: verts.into_iter().map(|v| center + v * radius).collect(),
            triangles: tris,
            normals: None,
        }
    }
}

/// Sum of triangle areas.
pub fn surface_area(mesh: &TriangleMesh) -> f64 {
    mesh.surface_area()
}
