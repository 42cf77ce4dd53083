//! Exact point-to-mesh distance with a uniform-grid triangle index.

use super::mesh::TriangleMesh;
use crate::geom::{BoundingBox, Point3};

/// Meshes below this many triangles are searched exhaustively.
pub const BRUTE_FORCE_LIMIT: usize = 10_000;

/// Closest point on triangle `abc` to `p` (Ericson's region test).
pub fn closest_point_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance(p: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestHit {
    pub distance: f64,
    pub triangle: usize,
    pub point: Point3,
}

/// Immutable nearest-triangle query structure over one mesh.
#[derive(Debug)]
pub struct MeshIndex<'a> {
    mesh: &'a TriangleMesh,
    grid: Option<Grid>,
}

#[derive(Debug)]
struct Grid {
    bbox: BoundingBox,
    dims: [usize; 3],
    cell: Point3,
    /// CSR layout: triangles of cell `c` are `items[start[c]..start[c + 1]]`.
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Grid {
    fn build(mesh: &TriangleMesh) -> Grid {
        let mut lo = Point3::splat(f64::INFINITY);
        let mut hi = Point3::splat(f64::NEG_INFINITY);
        for v in &mesh.vertices {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let pad = ((hi - lo).max_component() * 1e-6).max(1e-9);
        let bbox = BoundingBox {
            min: lo - Point3::splat(pad),
            max: hi + Point3::splat(pad),
        };
        let e = bbox.extent();
        // About one triangle per cell.
        let target = (e.x * e.y * e.z / mesh.triangles.len() as f64).cbrt();
        let dims: [usize; 3] = std::array::from_fn(|a| ((e[a] / target).ceil() as usize).clamp(1, 256));
        let cell = Point3::new(e.x / dims[0] as f64, e.y / dims[1] as f64, e.z / dims[2] as f64);
        let mut g = Grid {
            bbox,
            dims,
            cell,
            start: Vec::new(),
            items: Vec::new(),
        };
        let ncell = dims[0] * dims[1] * dims[2];
        let mut count = vec![0usize; ncell + 1];
        let ranges: Vec<([usize; 3], [usize; 3])> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                (g.cell_of(a.min(b).min(c)), g.cell_of(a.max(b).max(c)))
            })
            .collect();
        for (l, h) in &ranges {
            for k in l[2]..=h[2] {
                for j in l[1]..=h[1] {
                    for i in l[0]..=h[0] {
                        count[g.flat(i, j, k) + 1] += 1;
                    }
                }
            }
        }
        for c in 0..ncell {
            count[c + 1] += count[c];
        }
        let mut fill = count.clone();
        let mut items = vec![0usize; count[ncell]];
        for (t, (l, h)) in ranges.iter().enumerate() {
            for k in l[2]..=h[2] {
                for j in l[1]..=h[1] {
                    for i in l[0]..=h[0] {
                        let c = g.flat(i, j, k);
                        items[fill[c]] = t;
                        fill[c] += 1;
                    }
                }
            }
        }
        g.start = count;
        g.items = items;
        g
    }

    fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    fn cell_of(&self, p: Point3) -> [usize; 3] {
        std::array::from_fn(|a| {
            let u = ((p[a] - self.bbox.min[a]) / self.cell[a]).floor();
            (u.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    fn cell_items(&self, i: usize, j: usize, k: usize) -> &[usize] {
        let c = self.flat(i, j, k);
        &self.items[self.start[c]..self.start[c + 1]]
    }
}

impl<'a> MeshIndex<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        let grid = (mesh.triangles.len() >= BRUTE_FORCE_LIMIT).then(|| Grid::build(mesh));
        MeshIndex { mesh, grid }
    }

    /// Always use the grid, regardless of mesh size.
    pub fn with_grid(mesh: &'a TriangleMesh) -> Self {
        let grid = (!mesh.triangles.is_empty()).then(|| Grid::build(mesh));
        MeshIndex { mesh, grid }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    fn test(&self, p: Point3, t: usize, best: &mut Option<NearestHit>) {
        let [a, b, c] = self.mesh.corners(t);
        let q = closest_point_on_triangle(p, a, b, c);
        let d = (p - q).norm();
        // Ties go to the lower triangle index so results are order independent.
        let better = match best {
            None => true,
            Some(h) => d < h.distance || (d == h.distance && t < h.triangle),
        };
        if better {
            *best = Some(NearestHit {
                distance: d,
                triangle: t,
                point: q,
            });
        }
    }

    /// Nearest triangle to `p`; `None` for an empty mesh.
    pub fn nearest(&self, p: Point3) -> Option<NearestHit> {
        let mut best = None;
        let Some(g) = &self.grid else {
            for t in 0..self.mesh.triangles.len() {
                self.test(p, t, &mut best);
            }
            return best;
        };
        let q = g.bbox.clamp(p);
        let outside2 = (p - q).norm_squared();
        let c = g.cell_of(q);
        let cell_min = g.cell.min_component();
        let max_ring = g.dims.iter().copied().max().unwrap();
        for ring in 0..=max_ring {
            let lo: [isize; 3] = std::array::from_fn(|a| c[a] as isize - ring as isize);
            let hi: [isize; 3] = std::array::from_fn(|a| c[a] as isize + ring as isize);
            for k in lo[2].max(0)..=hi[2].min(g.dims[2] as isize - 1) {
                for j in lo[1].max(0)..=hi[1].min(g.dims[1] as isize - 1) {
                    for i in lo[0].max(0)..=hi[0].min(g.dims[0] as isize - 1) {
                        let on_shell = i == lo[0] || i == hi[0] || j == lo[1] || j == hi[1] || k == lo[2] || k == hi[2];
                        if !on_shell {
                            continue;
                        }
                        for &t in g.cell_items(i as usize, j as usize, k as usize) {
                            self.test(p, t, &mut best);
                        }
                    }
                }
            }
            // Unvisited triangles lie at least `ring * cell_min` from q, and
            // clamping is a projection, so their distance to p is bounded below.
            if let Some(h) = best {
                let r = ring as f64 * cell_min;
                if h.distance * h.distance < outside2 + r * r {
                    break;
                }
            }
        }
        best
    }

    pub fn distance(&self, p: Point3) -> f64 {
        self.nearest(p).map_or(f64::INFINITY, |h| h.distance)
    }
}
