//! Iso-surface extraction on a regular lattice.
//!
//! Each lattice cube is split into six tetrahedra sharing the cube's main
//! diagonal. Neighboring cubes then agree on every shared face diagonal, so
//! the extracted surface is closed wherever the zero set stays inside the box.

use std::collections::HashMap;

use rayon::prelude::*;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geom::{BoundingBox, Point3};

const T_CLAMP: f64 = 1e-6;

/// Corner offsets of the six tetrahedra, as cube corner bit masks (x=1, y=2, z=4).
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Lattice values of `field` at latent `z`: `resolution` nodes per axis spanning `bbox`.
pub fn sample_lattice(field: &Field, z: &[f64], bbox: &BoundingBox, resolution: usize) -> Result<Vec<f64>> {
    let ev = field.prepare(z)?;
    let n = resolution;
    Ok((0..n * n * n)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| ev.value(bbox.lattice_point([n; 3], i % n, (i / n) % n, i / (n * n))))
        .collect())
}

/// Triangulated zero level set of `field` at latent `z` over `bbox`.
///
/// Vertices sit on lattice-tetrahedron edges by linear interpolation. A field
/// with no sign change gives an empty mesh.
pub fn marching_cubes(field: &Field, z: &[f64], bbox: &BoundingBox, resolution: usize) -> Result<TriangleMesh> {
    if resolution < 8 {
        return Err(Error::Precondition(format!("resolution must be >= 8, got {resolution}")));
    }
    let values = sample_lattice(field, z, bbox, resolution)?;
    extract(&values, [resolution; 3], bbox)
}

/// Extract the zero level set of node values laid out x-fastest on a `dims` lattice.
pub fn extract(values: &[f64], dims: [usize; 3], bbox: &BoundingBox) -> Result<TriangleMesh> {
    let [nx, ny, nz] = dims;
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::Precondition(format!("lattice dims must be >= 2, got {dims:?}")));
    }
    if values.len() != nx * ny * nz {
        return Err(Error::dim("lattice values", nx * ny * nz, values.len()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("non-finite field value at lattice node {i}")));
    }
    let node = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let position = |n: usize| bbox.lattice_point(dims, n % nx, (n / nx) % ny, n / (nx * ny));
    // Zero counts as outside so every crossing edge has a strictly negative end.
    let inside = |n: usize| values[n] < 0.0;

    // Cubes are processed slab by slab in parallel; vertices are keyed by
    // their lattice edge and deduplicated in a serial pass.
    let slabs: Vec<Vec<[(usize, usize); 3]>> = (0..nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut tris = Vec::new();
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let corner: [usize; 8] =
                        std::array::from_fn(|c| node(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)));
                    let mask = corner.iter().fold(0u8, |m, &n| (m << 1) | inside(n) as u8);
                    if mask == 0 || mask == 0xFF {
                        continue;
                    }
                    for tet in TETS {
                        let v = tet.map(|c| corner[c]);
                        polygonize(&v, &inside, &position, &mut tris);
                    }
                }
            }
            tris
        })
        .collect();

    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for tri in slabs.into_iter().flatten() {
        let t = tri.map(|(a, b)| {
            *index.entry((a, b)).or_insert_with(|| {
                // a is inside (negative), b outside.
                let (fa, fb) = (values[a], values[b]);
                let t = (fa / (fa - fb)).clamp(T_CLAMP, 1.0 - T_CLAMP);
                let (pa, pb) = (position(a), position(b));
                vertices.push(pa + (pb - pa) * t);
                vertices.len() - 1
            })
        });
        triangles.push(t);
    }
    Ok(TriangleMesh {
        vertices,
        triangles,
        normals: None,
    })
}

/// Emit the triangles of one tetrahedron as pairs of (inside node, outside node) edges.
fn polygonize(
    v: &[usize; 4],
    inside: &impl Fn(usize) -> bool,
    position: &impl Fn(usize) -> Point3,
    out: &mut Vec<[(usize, usize); 3]>,
) {
    let ins: Vec<usize> = v.iter().copied().filter(|&n| inside(n)).collect();
    let outs: Vec<usize> = v.iter().copied().filter(|&n| !inside(n)).collect();
    let tris: Vec<[(usize, usize); 3]> = match ins.len() {
        1 => vec![[(ins[0], outs[0]), (ins[0], outs[1]), (ins[0], outs[2])]],
        3 => vec![[(ins[0], outs[0]), (ins[1], outs[0]), (ins[2], outs[0])]],
        2 => {
            let q = [(ins[0], outs[0]), (ins[0], outs[1]), (ins[1], outs[1]), (ins[1], outs[0])];
            vec![[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
        }
        _ => return,
    };
    // Wind each triangle so its normal points from the inside nodes to the
    // outside ones. The midpoint section has the same orientation as the
    // interpolated one, since both are planar cuts separating the same nodes.
    let centroid = |ns: &[usize]| ns.iter().fold(Point3::ZERO, |a, &n| a + position(n)) / ns.len() as f64;
    let dir = centroid(&outs) - centroid(&ins);
    let mid = |(a, b): (usize, usize)| (position(a) + position(b)) * 0.5;
    for t in tris {
        let n = (mid(t[1]) - mid(t[0])).cross(mid(t[2]) - mid(t[0]));
        if n.dot(dir) < 0.0 {
            out.push([t[0], t[2], t[1]]);
        } else {
            out.push(t);
        }
    }
}
