use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{BoundingBox, Point3};

/// Node-sampled field `f(z, x) = trilerp(G0 + sum_k z_k B_k)(x)`.
///
/// Nodes sit at `bbox.min + (i, j, k) * spacing` with x varying fastest.
/// Outside the box the clamped-boundary value is extended by the Euclidean
/// distance from `x` to the box.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGridField {
    dims: [usize; 3],
    bbox: BoundingBox,
    base: Vec<f32>,
    basis: Vec<Vec<f32>>,
}

struct Corners {
    idx: [usize; 8],
    w: [f64; 8],
}

impl LatentGridField {
    pub fn new(dims: [usize; 3], bbox: BoundingBox, base: Vec<f32>, basis: Vec<Vec<f32>>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Precondition(format!("grid dims must be >= 2, got {dims:?}")));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::Precondition("grid dims overflow".into()))?;
        if base.len() != n {
            return Err(Error::dim("base grid", n, base.len()));
        }
        for b in &basis {
            if b.len() != n {
                return Err(Error::dim("basis grid", n, b.len()));
            }
        }
        if base.iter().chain(basis.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Precondition("grid values must be finite".into()));
        }
        Ok(LatentGridField {
            dims,
            bbox,
            base,
            basis,
        })
    }

    /// Sample `f(p, None)` into G0 and `f(p, Some(k))` into `B_k` at every node.
    pub fn from_fn(
        dims: [usize; 3],
        bbox: BoundingBox,
        latent_dim: usize,
        f: impl Fn(Point3, Option<usize>) -> f64 + Sync,
    ) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        let sample = |k: Option<usize>| -> Vec<f32> {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let (a, b, c) = (i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1]));
                    f(bbox.lattice_point(dims, a, b, c), k) as f32
                })
                .collect()
        };
        let base = sample(None);
        let basis = (0..latent_dim).map(|k| sample(Some(k))).collect();
        Self::new(dims, bbox, base, basis)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn base(&self) -> &[f32] {
        &self.base
    }

    pub fn basis(&self) -> &[Vec<f32>] {
        &self.basis
    }

    pub fn latent_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn node_count(&self) -> usize {
        self.base.len()
    }

    pub fn spacing(&self) -> Point3 {
        let e = self.bbox.extent();
        Point3::new(
            e.x / (self.dims[0] - 1) as f64,
            e.y / (self.dims[1] - 1) as f64,
            e.z / (self.dims[2] - 1) as f64,
        )
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Point3 {
        self.bbox.lattice_point(self.dims, i, j, k)
    }

    fn corners(&self, x: Point3) -> Corners {
        let c = self.bbox.clamp(x);
        let h = self.spacing();
        let mut cell = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let u = (c[a] - self.bbox.min[a]) / h[a];
            let i = (u.floor() as isize).clamp(0, self.dims[a] as isize - 2) as usize;
            cell[a] = i;
            t[a] = (u - i as f64).clamp(0.0, 1.0);
        }
        let mut idx = [0; 8];
        let mut w = [0.0; 8];
        for corner in 0..8 {
            let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            idx[corner] = self.node_index(cell[0] + dx, cell[1] + dy, cell[2] + dz);
            let wx = if dx == 1 { t[0] } else { 1.0 - t[0] };
            let wy = if dy == 1 { t[1] } else { 1.0 - t[1] };
            let wz = if dz == 1 { t[2] } else { 1.0 - t[2] };
            w[corner] = wx * wy * wz;
        }
        Corners { idx, w }
    }

    #[inline]
    fn combined_node(&self, z: &[f64], n: usize) -> f64 {
        let mut v = self.base[n] as f64;
        for (zk, b) in z.iter().zip(&self.basis) {
            v += zk * b[n] as f64;
        }
        v
    }

    pub(crate) fn value(&self, z: &[f64], x: Point3) -> f64 {
        let c = self.corners(x);
        let mut v = 0.0;
        for i in 0..8 {
            v += c.w[i] * self.combined_node(z, c.idx[i]);
        }
        v + self.bbox.distance_outside(x)
    }

    pub(crate) fn grad_latent(&self, x: Point3) -> Vec<f64> {
        let c = self.corners(x);
        self.basis
            .iter()
            .map(|b| (0..8).map(|i| c.w[i] * b[c.idx[i]] as f64).sum())
            .collect()
    }

    /// Node values of `G0 + sum_k z_k B_k`.
    pub(crate) fn combine(&self, z: &[f64]) -> Vec<f64> {
        (0..self.node_count())
            .into_par_iter()
            .with_min_len(4096)
            .map(|n| self.combined_node(z, n))
            .collect()
    }

    /// Interpolate precombined node values; bitwise equal to [`Self::value`].
    pub(crate) fn interpolate(&self, combined: &[f64], x: Point3) -> f64 {
        let c = self.corners(x);
        let mut v = 0.0;
        for i in 0..8 {
            v += c.w[i] * combined[c.idx[i]];
        }
        v + self.bbox.distance_outside(x)
    }

    /// Adjoint of interpolation: spread `weight` onto the eight corner nodes.
    pub(crate) fn scatter(&self, nodes: &mut [f64], x: Point3, weight: f64) {
        let c = self.corners(x);
        for i in 0..8 {
            nodes[c.idx[i]] += weight * c.w[i];
        }
    }

    pub(crate) fn project_nodes(&self, nodes: &[f64]) -> Vec<f64> {
        self.basis
            .par_iter()
            .map(|b| nodes.iter().zip(b).map(|(w, v)| w * *v as f64).sum())
            .collect()
    }

    /// Node values at latent `z`, as an f32 volume payload.
    pub fn materialize(&self, z: &[f64]) -> Result<Vec<f32>> {
        if z.len() != self.latent_dim() {
            return Err(Error::dim("latent vector", self.latent_dim(), z.len()));
        }
        Ok(self.combine(z).into_iter().map(|v| v as f32).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AnalyticField, Field};
    use proptest::prelude::*;

    fn small_field() -> LatentGridField {
        let bbox = BoundingBox::new(Point3::new(-1.0, -0.5, 0.0), Point3::new(1.0, 0.5, 2.0)).unwrap();
        LatentGridField::from_fn([5, 4, 6], bbox, 2, |p, k| match k {
            None => p.norm() - 0.7,
            Some(0) => p.x * p.y + 0.25,
            Some(_) => (p.z * 3.0).cos(),
        })
        .unwrap()
    }

    #[test]
    fn node_values_are_reproduced() {
        let f = small_field();
        for (i, j, k) in [(0, 0, 0), (2, 1, 3), (4, 3, 5)] {
            let n = f.node_index(i, j, k);
            let p = f.node_position(i, j, k);
            assert!((f.value(&[0.0, 0.0], p) - f.base()[n] as f64).abs() < 1e-12);
            let expect = f.base()[n] as f64 + 0.5 * f.basis()[0][n] as f64;
            assert!((f.value(&[0.5, 0.0], p) - expect).abs() < 1e-12);
            let g = f.grad_latent(p);
            assert!((g[0] - f.basis()[0][n] as f64).abs() < 1e-12);
            assert!((g[1] - f.basis()[1][n] as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_box_adds_distance_to_box() {
        let f = small_field();
        let inside = Point3::new(1.0, 0.5, 2.0);
        let outside = Point3::new(1.3, 0.9, 2.0);
        let ramp = (0.3f64 * 0.3 + 0.4 * 0.4).sqrt();
        assert!((f.value(&[0.0, 0.0], outside) - f.value(&[0.0, 0.0], inside) - ramp).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bbox = BoundingBox::cube(1.0);
        assert!(LatentGridField::new([1, 2, 2], bbox, vec![0.0; 4], vec![]).is_err());
        assert!(LatentGridField::new([2, 2, 2], bbox, vec![0.0; 7], vec![]).is_err());
        assert!(LatentGridField::new([2, 2, 2], bbox, vec![0.0; 8], vec![vec![0.0; 3]]).is_err());
    }

    #[test]
    fn sphere_grid_gradient_tracks_analytic_normal() {
        let bbox = BoundingBox::cube(1.0);
        let sphere = AnalyticField::sphere(Point3::ZERO, 0.5);
        let g = LatentGridField::from_fn([48, 48, 48], bbox, 0, |p, _| sphere.value(&[], p)).unwrap();
        let field = Field::from(g);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let p = Point3::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
            );
            if p.norm() < 0.2 {
                continue;
            }
            let n = field.grad_spatial(&[], p).unwrap().normalized();
            let exact = p.normalized();
            assert!((n - exact).norm() < 0.02, "{p:?}: {n:?} vs {exact:?}");
        }
    }

    proptest! {
        #[test]
        fn affine_in_latent(
            z1 in prop::collection::vec(-2.0f64..2.0, 2),
            z2 in prop::collection::vec(-2.0f64..2.0, 2),
            alpha in -1.0f64..2.0,
            x in (-1.5f64..1.5, -1.0f64..1.0, -0.5f64..2.5),
        ) {
            let f = small_field();
            let p = Point3::new(x.0, x.1, x.2);
            let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let lhs = f.value(&mix, p);
            let rhs = alpha * f.value(&z1, p) + (1.0 - alpha) * f.value(&z2, p);
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
