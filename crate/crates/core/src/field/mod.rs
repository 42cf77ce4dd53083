//! Latent-parameterized signed distance field families.
//!
//! Every family evaluates `f(z, x)`: negative inside, positive outside, zero on
//! the surface. Three families are provided:
//!
//! * [`AnalyticField`]: closed-form primitives whose latent components offset a
//!   declared subset of shape parameters.
//! * [`LatentGridField`]: trilinear interpolation of `G0 + sum_k z_k B_k`,
//!   affine in the latent code.
//! * [`MlpField`]: a small softplus network evaluated on `concat(z, x)`.
//!
//! For the solver hot path a field is first *prepared* at a fixed latent
//! ([`Field::prepare`]); the resulting [`FieldEval`] answers value queries and
//! accumulates weighted latent gradients without re-deriving per-latent state
//! for every point.

mod analytic;
mod grid;
mod mlp;

pub use analytic::{AnalyticField, PrimitiveKind};
pub use grid::LatentGridField;
pub use mlp::{AutoDecoderConfig, MlpField};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Point3;

/// Latent code of one component. Length is the family's `latent_dim()`.
pub type LatentVector = Vec<f64>;

/// Finite-difference step used by spatial gradients of the MLP family.
pub const MLP_SPATIAL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Analytic(AnalyticField),
    Grid(LatentGridField),
    Mlp(MlpField),
}

impl From<AnalyticField> for Field {
    fn from(f: AnalyticField) -> Self {
        Field::Analytic(f)
    }
}

impl From<LatentGridField> for Field {
    fn from(f: LatentGridField) -> Self {
        Field::Grid(f)
    }
}

impl From<MlpField> for Field {
    fn from(f: MlpField) -> Self {
        Field::Mlp(f)
    }
}

impl Field {
    pub fn latent_dim(&self) -> usize {
        match self {
            Field::Analytic(f) => f.latent_dim(),
            Field::Grid(f) => f.latent_dim(),
            Field::Mlp(f) => f.latent_dim(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Field::Analytic(f) => f.kind().name(),
            Field::Grid(_) => "grid",
            Field::Mlp(_) => "mlp",
        }
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        let k = self.latent_dim();
        if z.len() != k {
            return Err(Error::dim("latent vector", k, z.len()));
        }
        Ok(())
    }

    /// Signed distance at `x` for latent `z`.
    pub fn eval(&self, z: &[f64], x: Point3) -> Result<f64> {
        self.check_latent(z)?;
        Ok(self.eval_unchecked(z, x))
    }

    pub(crate) fn eval_unchecked(&self, z: &[f64], x: Point3) -> f64 {
        match self {
            Field::Analytic(f) => f.value(z, x),
            Field::Grid(f) => f.value(z, x),
            Field::Mlp(f) => f.value(z, x),
        }
    }

    /// Elementwise [`Field::eval`], order preserved and bitwise identical.
    pub fn eval_batch(&self, z: &[f64], points: &[Point3]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        Ok(points
            .par_iter()
            .map(|&p| self.eval_unchecked(z, p))
            .collect())
    }

    /// `df/dz` at `x`.
    pub fn grad_latent(&self, z: &[f64], x: Point3) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        Ok(match self {
            Field::Analytic(f) => f.grad_latent(z, x),
            Field::Grid(f) => f.grad_latent(x),
            Field::Mlp(f) => f.value_and_grads(z, x).1,
        })
    }

    /// `df/dx` at `x`: analytic for primitives, central differences otherwise.
    pub fn grad_spatial(&self, z: &[f64], x: Point3) -> Result<Point3> {
        self.check_latent(z)?;
        Ok(match self {
            Field::Analytic(f) => f.grad_spatial(z, x),
            Field::Grid(f) => {
                let h = 0.5 * f.spacing().min_component();
                central_difference(|p| f.value(z, p), x, h)
            }
            Field::Mlp(f) => central_difference(|p| f.value(z, p), x, MLP_SPATIAL_STEP),
        })
    }

    /// Fix the latent code for repeated evaluation.
    pub fn prepare(&self, z: &[f64]) -> Result<FieldEval<'_>> {
        self.check_latent(z)?;
        let inner = match self {
            Field::Analytic(f) => Prepared::Analytic(f.prepare(z)),
            Field::Grid(f) => Prepared::Grid {
                field: f,
                combined: f.combine(z),
            },
            Field::Mlp(f) => Prepared::Mlp { field: f },
        };
        Ok(FieldEval {
            field: self,
            latent: z.to_vec(),
            inner,
        })
    }
}

pub(crate) fn central_difference(f: impl Fn(Point3) -> f64, x: Point3, h: f64) -> Point3 {
    let d = |e: Point3| (f(x + e * h) - f(x - e * h)) / (2.0 * h);
    Point3::new(
        d(Point3::new(1.0, 0.0, 0.0)),
        d(Point3::new(0.0, 1.0, 0.0)),
        d(Point3::new(0.0, 0.0, 1.0)),
    )
}

enum Prepared<'a> {
    Analytic(analytic::PreparedPrimitive<'a>),
    Grid {
        field: &'a LatentGridField,
        combined: Vec<f64>,
    },
    Mlp {
        field: &'a MlpField,
    },
}

/// A field with its latent code fixed.
pub struct FieldEval<'a> {
    field: &'a Field,
    latent: Vec<f64>,
    inner: Prepared<'a>,
}

/// Running sum of `weight * df/dz` over many points.
///
/// Grid fields accumulate in node space (the adjoint of interpolation) and
/// project onto the basis once in [`FieldEval::finish`].
#[derive(Debug, Clone)]
pub enum LatentAccumulator {
    Latent(Vec<f64>),
    Nodes(Vec<f64>),
}

impl LatentAccumulator {
    pub fn merge(&mut self, other: &LatentAccumulator) {
        match (self, other) {
            (LatentAccumulator::Latent(a), LatentAccumulator::Latent(b))
            | (LatentAccumulator::Nodes(a), LatentAccumulator::Nodes(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += *y;
                }
            }
            _ => panic!("merging accumulators of different fields"),
        }
    }
}

impl<'a> FieldEval<'a> {
    pub fn field(&self) -> &'a Field {
        self.field
    }

    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    pub fn value(&self, x: Point3) -> f64 {
        match &self.inner {
            Prepared::Analytic(p) => p.value(x),
            Prepared::Grid { field, combined } => field.interpolate(combined, x),
            Prepared::Mlp { field } => field.value(&self.latent, x),
        }
    }

    pub fn accumulator(&self) -> LatentAccumulator {
        match &self.inner {
            Prepared::Grid { field, .. } => LatentAccumulator::Nodes(vec![0.0; field.node_count()]),
            _ => LatentAccumulator::Latent(vec![0.0; self.latent.len()]),
        }
    }

    /// Add `weight * df/dz(x)` into `acc`.
    pub fn accumulate(&self, acc: &mut LatentAccumulator, x: Point3, weight: f64) {
        if weight == 0.0 {
            return;
        }
        match (&self.inner, acc) {
            (Prepared::Grid { field, .. }, LatentAccumulator::Nodes(nodes)) => {
                field.scatter(nodes, x, weight)
            }
            (Prepared::Analytic(p), LatentAccumulator::Latent(g)) => p.accumulate(g, x, weight),
            (Prepared::Mlp { field }, LatentAccumulator::Latent(g)) => {
                let (_, grad) = field.value_and_grads(&self.latent, x);
                for (gi, di) in g.iter_mut().zip(grad) {
                    *gi += weight * di;
                }
            }
            _ => panic!("accumulator does not belong to this field"),
        }
    }

    pub fn finish(&self, acc: LatentAccumulator) -> Vec<f64> {
        match (&self.inner, acc) {
            (Prepared::Grid { field, .. }, LatentAccumulator::Nodes(nodes)) => {
                field.project_nodes(&nodes)
            }
            (_, LatentAccumulator::Latent(g)) => g,
            _ => panic!("accumulator does not belong to this field"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BoundingBox;

    fn sphere() -> Field {
        AnalyticField::sphere(Point3::ZERO, 1.0).into()
    }

    #[test]
    fn unit_sphere_eval_and_gradient() {
        let f = sphere();
        assert_eq!(f.eval(&[], Point3::new(2.0, 0.0, 0.0)).unwrap(), 1.0);
        let g = f.grad_spatial(&[], Point3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(g, Point3::new(1.0, 0.0, 0.0));
        let g = f.grad_spatial(&[], Point3::new(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(g, Point3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn latent_dimension_mismatch_is_rejected() {
        let f = sphere();
        assert!(matches!(
            f.eval(&[0.1], Point3::ZERO),
            Err(Error::Dimension { expected: 0, actual: 1, .. })
        ));
        assert!(f.grad_latent(&[0.1, 0.2], Point3::ZERO).is_err());
        assert!(f.prepare(&[1.0]).is_err());
    }

    #[test]
    fn zero_latent_field_has_empty_gradient() {
        assert!(sphere().grad_latent(&[], Point3::ZERO).unwrap().is_empty());
    }

    #[test]
    fn eval_batch_matches_scalar_eval_bitwise() {
        let f = sphere();
        assert!(f.eval_batch(&[], &[]).unwrap().is_empty());
        let pts = [Point3::new(0.3, 0.1, 2.0), Point3::new(-0.7, 0.2, 0.1)];
        let batch = f.eval_batch(&[], &pts).unwrap();
        for (p, v) in pts.iter().zip(&batch) {
            assert_eq!(v.to_bits(), f.eval(&[], *p).unwrap().to_bits());
        }
    }

    #[test]
    fn eval_batch_large_random_sphere() {
        use rand::{Rng, SeedableRng};
        let f = sphere();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..100_000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        let batch = f.eval_batch(&[], &pts).unwrap();
        let scalar: Vec<f64> = pts.iter().map(|p| f.eval(&[], *p).unwrap()).collect();
        assert_eq!(batch, scalar);
    }

    #[test]
    fn prepared_grid_values_match_eval_bitwise() {
        let bbox = BoundingBox::cube(1.0);
        let g = LatentGridField::from_fn([5, 6, 7], bbox, 2, |p, k| match k {
            None => p.norm() - 0.5,
            Some(0) => p.x,
            Some(_) => p.y * p.z,
        })
        .unwrap();
        let f = Field::from(g);
        let z = [0.3, -0.7];
        let ev = f.prepare(&z).unwrap();
        for p in [Point3::new(0.1, 0.2, 0.3), Point3::new(-0.95, 0.4, 0.99), Point3::new(1.5, -2.0, 0.0)] {
            assert_eq!(ev.value(p).to_bits(), f.eval(&z, p).unwrap().to_bits());
        }
    }

    #[test]
    fn accumulated_gradients_match_pointwise_gradients() {
        let bbox = BoundingBox::cube(1.0);
        let g = LatentGridField::from_fn([4, 4, 4], bbox, 3, |p, k| match k {
            None => p.norm() - 0.5,
            Some(i) => (p.x * (i as f64 + 1.0)).sin(),
        })
        .unwrap();
        let fields: Vec<(Field, Vec<f64>)> = vec![
            (g.into(), vec![0.1, 0.2, -0.3]),
            (
                AnalyticField::ellipsoid(crate::geom::Pose::identity(), [0.5, 0.4, 0.3])
                    .unwrap()
                    .with_latent_map(vec![0, 2])
                    .unwrap()
                    .into(),
                vec![0.05, -0.02],
            ),
            (MlpField::random(2, &[8, 8], 5, 0.5).unwrap().into(), vec![0.3, -0.4]),
        ];
        let pts = [Point3::new(0.1, 0.2, 0.3), Point3::new(-0.4, 0.4, 0.1), Point3::new(0.6, -0.1, -0.2)];
        let weights = [0.5, -1.5, 2.0];
        for (f, z) in &fields {
            let ev = f.prepare(z).unwrap();
            let mut acc = ev.accumulator();
            let mut expect = vec![0.0; z.len()];
            for (p, w) in pts.iter().zip(weights) {
                ev.accumulate(&mut acc, *p, w);
                for (e, g) in expect.iter_mut().zip(f.grad_latent(z, *p).unwrap()) {
                    *e += w * g;
                }
            }
            let got = ev.finish(acc);
            for (a, b) in got.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "{} vs {} for {}", a, b, f.family_name());
            }
        }
    }
}
