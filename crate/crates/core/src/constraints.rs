//! Pairwise constraints: the sampled contact-ratio estimator, mining of the
//! contact / non-contact / intersecting point sets, and every loss term with
//! its latent gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldEval, LatentAccumulator};
use crate::geom::Point3;
use crate::sampling::DataSample;
use crate::solver::Scene;

/// Default contact distance in scene units.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Points per parallel work unit. Fixed so reductions are thread-count independent.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    TargetContactRatio { p: f64, epsilon: f64 },
    MinGap { d: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConstraint {
    pub a: String,
    pub b: String,
    pub kind: ConstraintKind,
}

impl PairConstraint {
    pub fn contact_ratio(a: &str, b: &str, p: f64, epsilon: f64) -> Result<Self> {
        let c = PairConstraint {
            a: a.into(),
            b: b.into(),
            kind: ConstraintKind::TargetContactRatio { p, epsilon },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn min_gap(a: &str, b: &str, d: f64) -> Result<Self> {
        let c = PairConstraint {
            a: a.into(),
            b: b.into(),
            kind: ConstraintKind::MinGap { d },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let path = format!("constraint {}-{}", self.a, self.b);
        if self.a == self.b {
            return Err(Error::config(path, "a constraint needs two distinct components"));
        }
        match self.kind {
            ConstraintKind::TargetContactRatio { p, epsilon } => {
                if !(p > 0.0 && p <= 0.5) {
                    return Err(Error::config(
                        path,
                        format!("contact ratio p = {p} outside (0, 0.5], the estimator's range"),
                    ));
                }
                if !(epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(Error::config(path, format!("epsilon must be positive, got {epsilon}")));
                }
            }
            ConstraintKind::MinGap { d } => {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::config(path, format!("minimum gap must be positive, got {d}")));
                }
            }
        }
        Ok(())
    }
}

/// The three mined populations for one object pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinedSets {
    pub contact: Vec<Point3>,
    pub ncontact: Vec<Point3>,
    pub intersecting: Vec<Point3>,
}

/// Mining result for one constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum MinedPair {
    Contact(MinedSets),
    Violations(Vec<Point3>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub intersecting: f64,
    pub contact: f64,
    pub ncontact: f64,
    pub data: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            intersecting: 1.0,
            contact: 1.0,
            ncontact: 0.25,
            data: 1.0,
        }
    }
}

impl LossWeights {
    pub fn data_only() -> Self {
        LossWeights {
            intersecting: 0.0,
            contact: 0.0,
            ncontact: 0.0,
            data: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.intersecting, self.contact, self.ncontact, self.data];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("solver.weights", "weights must be finite and nonnegative"));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::config("solver.weights", "at least one weight must be positive"));
        }
        Ok(())
    }
}

/// Unweighted per-term sums over all constrained pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub intersecting: f64,
    pub contact: f64,
    pub ncontact: f64,
    pub data: f64,
    pub min_distance: f64,
}

impl LossTerms {
    pub fn is_finite(&self) -> bool {
        [self.intersecting, self.contact, self.ncontact, self.data, self.min_distance]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub terms: LossTerms,
    /// Weighted objective.
    pub total: f64,
    /// Gradient of `total` for each scene component, in scene order.
    pub gradients: Vec<Vec<f64>>,
    /// Estimated contact ratio per constraint (`None` for gap constraints).
    pub ratios: Vec<Option<f64>>,
}

/// Value and latent gradients of a single pair term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
}

fn check_aligned(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim("aligned value lists", a.len(), b.len()));
    }
    Ok(())
}

/// `(band_a, band_b, both)` counts of `|f| < epsilon`.
pub fn band_counts(values_a: &[f64], values_b: &[f64], epsilon: f64) -> (usize, usize, usize) {
    let na = values_a.iter().filter(|v| v.abs() < epsilon).count();
    let nb = values_b.iter().filter(|v| v.abs() < epsilon).count();
    let both = values_a
        .iter()
        .zip(values_b)
        .filter(|(a, b)| a.abs() < epsilon && b.abs() < epsilon)
        .count();
    (na, nb, both)
}

/// Sampled contact ratio: points in both bands over the summed band sizes.
pub fn estimate_contact_ratio(values_a: &[f64], values_b: &[f64], epsilon: f64) -> Result<f64> {
    check_aligned(values_a, values_b)?;
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let (na, nb, both) = band_counts(values_a, values_b, epsilon);
    if na + nb == 0 {
        return Ok(0.0);
    }
    Ok(both as f64 / (na + nb) as f64)
}

/// Number of points that should lie in the contact region.
pub fn expected_contact_count(p: f64, values_a: &[f64], values_b: &[f64], epsilon: f64) -> usize {
    let na = values_a.iter().filter(|v| v.abs() < epsilon).count();
    let nb = values_b.iter().filter(|v| v.abs() < epsilon).count();
    expected_contact_count_from_bands(p, na, nb)
}

pub fn expected_contact_count_from_bands(p: f64, band_a: usize, band_b: usize) -> usize {
    // f64::round rounds half away from zero.
    (p * (band_a + band_b) as f64).round().max(0.0) as usize
}

/// Split sample points into the contact, non-contact and intersecting sets.
///
/// `contact` holds the `n_contact` points with the smallest `|f_A| + |f_B|`
/// over all samples (ties by ascending index); `ncontact` is every remaining
/// point inside both epsilon bands; `intersecting` is every point inside both
/// objects.
pub fn mine_point_sets(
    points: &[Point3],
    values_a: &[f64],
    values_b: &[f64],
    epsilon: f64,
    n_contact: usize,
) -> Result<MinedSets> {
    check_aligned(values_a, values_b)?;
    if points.len() != values_a.len() {
        return Err(Error::dim("mined points", values_a.len(), points.len()));
    }
    let n = points.len();
    let key = |i: usize| values_a[i].abs() + values_b[i].abs();
    let k = n_contact.min(n);
    let mut in_contact = vec![false; n];
    if k > 0 {
        let mut order: Vec<usize> = (0..n).collect();
        let cmp = |x: &usize, y: &usize| key(*x).total_cmp(&key(*y)).then(x.cmp(y));
        if k < n {
            order.select_nth_unstable_by(k - 1, cmp);
        }
        for &i in &order[..k] {
            in_contact[i] = true;
        }
    }
    let mut sets = MinedSets::default();
    for i in 0..n {
        let (a, b) = (values_a[i], values_b[i]);
        if in_contact[i] {
            sets.contact.push(points[i]);
        } else if a.abs() < epsilon && b.abs() < epsilon {
            sets.ncontact.push(points[i]);
        }
        if a < 0.0 && b < 0.0 {
            sets.intersecting.push(points[i]);
        }
    }
    Ok(sets)
}

/// Points where `f_A + f_B < d`.
pub fn min_distance_violations(points: &[Point3], values_a: &[f64], values_b: &[f64], d: f64) -> Result<Vec<Point3>> {
    check_aligned(values_a, values_b)?;
    if points.len() != values_a.len() {
        return Err(Error::dim("violation points", values_a.len(), points.len()));
    }
    Ok(points
        .iter()
        .zip(values_a.iter().zip(values_b))
        .filter(|(_, (a, b))| *a + *b < d)
        .map(|(p, _)| *p)
        .collect())
}

/// Derivative of `|u|` with the convention `0` at `u = 0`.
fn sgn(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum PairTerm {
    Contact,
    NContact,
    Intersecting,
    Hinge(f64),
}

impl PairTerm {
    /// Term value and `(d/dfa, d/dfb)` at one point.
    fn point(self, a: f64, b: f64) -> (f64, f64, f64) {
        match self {
            PairTerm::Contact => {
                let s = sgn(a + b);
                ((a + b).abs(), s, s)
            }
            PairTerm::NContact => (-(a + b), -1.0, -1.0),
            PairTerm::Intersecting => (a.abs() + b.abs(), sgn(a), sgn(b)),
            PairTerm::Hinge(d) => {
                let gap = d - (a + b);
                if gap > 0.0 {
                    (gap, -1.0, -1.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }
}

/// Sum one pair term over `points`, adding `weight * gradient` into the
/// accumulators. Returns the unweighted sum.
pub(crate) fn accumulate_pair_term(
    term: PairTerm,
    fa: &FieldEval<'_>,
    fb: &FieldEval<'_>,
    points: &[Point3],
    weight: f64,
    acc_a: &mut LatentAccumulator,
    acc_b: &mut LatentAccumulator,
) -> f64 {
    let partials: Vec<(f64, LatentAccumulator, LatentAccumulator)> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ga = fa.accumulator();
            let mut gb = fb.accumulator();
            let mut sum = 0.0;
            for &x in chunk {
                let (v, da, db) = term.point(fa.value(x), fb.value(x));
                sum += v;
                if weight != 0.0 {
                    fa.accumulate(&mut ga, x, weight * da);
                    fb.accumulate(&mut gb, x, weight * db);
                }
            }
            (sum, ga, gb)
        })
        .collect();
    let mut total = 0.0;
    for (s, ga, gb) in &partials {
        total += s;
        acc_a.merge(ga);
        acc_b.merge(gb);
    }
    total
}

pub(crate) fn accumulate_data_term(
    f: &FieldEval<'_>,
    samples: &[DataSample],
    weight: f64,
    acc: &mut LatentAccumulator,
) -> f64 {
    let partials: Vec<(f64, LatentAccumulator)> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = f.accumulator();
            let mut sum = 0.0;
            for s in chunk {
                let r = f.value(s.point) - s.distance;
                sum += r.abs();
                if weight != 0.0 {
                    f.accumulate(&mut g, s.point, weight * sgn(r));
                }
            }
            (sum, g)
        })
        .collect();
    let mut total = 0.0;
    for (s, g) in &partials {
        total += s;
        acc.merge(g);
    }
    total
}

fn pair_term(term: PairTerm, fa: &FieldEval<'_>, fb: &FieldEval<'_>, points: &[Point3]) -> LossTerm {
    let mut ga = fa.accumulator();
    let mut gb = fb.accumulator();
    let value = accumulate_pair_term(term, fa, fb, points, 1.0, &mut ga, &mut gb);
    LossTerm {
        value,
        grad_a: fa.finish(ga),
        grad_b: fb.finish(gb),
    }
}

/// `sum |f_A + f_B|` over the contact set.
pub fn contact_loss(fa: &FieldEval<'_>, fb: &FieldEval<'_>, contact: &[Point3]) -> LossTerm {
    pair_term(PairTerm::Contact, fa, fb, contact)
}

/// `sum -(f_A + f_B)` over the non-contact set.
pub fn ncontact_loss(fa: &FieldEval<'_>, fb: &FieldEval<'_>, ncontact: &[Point3]) -> LossTerm {
    pair_term(PairTerm::NContact, fa, fb, ncontact)
}

/// `sum |f_A| + |f_B|` over the intersecting set.
pub fn intersection_loss(fa: &FieldEval<'_>, fb: &FieldEval<'_>, intersecting: &[Point3]) -> LossTerm {
    pair_term(PairTerm::Intersecting, fa, fb, intersecting)
}

/// `sum |f(z, x) - s_x|` and its latent gradient.
pub fn data_loss(f: &FieldEval<'_>, samples: &[DataSample]) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Precondition("data loss needs at least one sample".into()));
    }
    let mut g = f.accumulator();
    let v = accumulate_data_term(f, samples, 1.0, &mut g);
    Ok((v, f.finish(g)))
}

/// `lambda_hinge * sum max(0, d - (f_A + f_B)) + lambda_data * L_data`.
///
/// Data sets may be empty, in which case the corresponding data term is zero.
#[allow(clippy::too_many_arguments)]
pub fn min_distance_loss(
    fa: &FieldEval<'_>,
    fb: &FieldEval<'_>,
    violations: &[Point3],
    d: f64,
    lambda_hinge: f64,
    data_a: &[DataSample],
    data_b: &[DataSample],
    lambda_data: f64,
) -> LossTerm {
    let mut ga = fa.accumulator();
    let mut gb = fb.accumulator();
    let hinge = accumulate_pair_term(PairTerm::Hinge(d), fa, fb, violations, lambda_hinge, &mut ga, &mut gb);
    let da = accumulate_data_term(fa, data_a, lambda_data, &mut ga);
    let db = accumulate_data_term(fb, data_b, lambda_data, &mut gb);
    LossTerm {
        value: lambda_hinge * hinge + lambda_data * (da + db),
        grad_a: fa.finish(ga),
        grad_b: fb.finish(gb),
    }
}

/// Hinge sum alone (unweighted), for reporting.
pub fn min_distance_hinge(fa: &FieldEval<'_>, fb: &FieldEval<'_>, violations: &[Point3], d: f64) -> LossTerm {
    pair_term(PairTerm::Hinge(d), fa, fb, violations)
}

/// Values of a prepared field at every point, in order.
pub fn evaluate(f: &FieldEval<'_>, points: &[Point3]) -> Vec<f64> {
    points.par_iter().with_min_len(1024).map(|&p| f.value(p)).collect()
}

/// Resolve constraint component names to scene indices.
pub fn resolve_pairs(scene: &Scene, constraints: &[PairConstraint]) -> Result<Vec<(usize, usize)>> {
    constraints
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.validate()?;
            let find = |name: &str, field: &str| {
                scene.index_of(name).ok_or_else(|| {
                    Error::config(format!("constraints[{i}].{field}"), format!("unknown component `{name}`"))
                })
            };
            Ok((find(&c.a, "a")?, find(&c.b, "b")?))
        })
        .collect()
}

/// Weighted objective over every constraint and every component's data term.
///
/// `data` is aligned with the scene's components; an empty list disables the
/// data term for that component. Gap constraints contribute their hinge
/// weighted by `weights.intersecting`. When `mining` is given, the current
/// contact ratio of every contact constraint is estimated on it.
pub fn composite_loss(
    scene: &Scene,
    constraints: &[PairConstraint],
    mined: &[MinedPair],
    data: &[Vec<DataSample>],
    weights: &LossWeights,
    mining: Option<&[Point3]>,
) -> Result<LossReport> {
    let pairs = resolve_pairs(scene, constraints)?;
    if mined.len() != constraints.len() {
        return Err(Error::dim("mined sets per constraint", constraints.len(), mined.len()));
    }
    if data.len() != scene.len() {
        return Err(Error::dim("data sets per component", scene.len(), data.len()));
    }
    let evals = scene.prepare_all()?;
    let mut accs: Vec<LatentAccumulator> = evals.iter().map(|e| e.accumulator()).collect();
    let mut terms = LossTerms::default();

    for ((&(ia, ib), c), m) in pairs.iter().zip(constraints).zip(mined) {
        let (fa, fb) = (&evals[ia], &evals[ib]);
        let (mut acc_a, mut acc_b) = (fa.accumulator(), fb.accumulator());
        match (c.kind, m) {
            (ConstraintKind::TargetContactRatio { .. }, MinedPair::Contact(sets)) => {
                terms.intersecting += accumulate_pair_term(
                    PairTerm::Intersecting,
                    fa,
                    fb,
                    &sets.intersecting,
                    weights.intersecting,
                    &mut acc_a,
                    &mut acc_b,
                );
                terms.contact +=
                    accumulate_pair_term(PairTerm::Contact, fa, fb, &sets.contact, weights.contact, &mut acc_a, &mut acc_b);
                terms.ncontact += accumulate_pair_term(
                    PairTerm::NContact,
                    fa,
                    fb,
                    &sets.ncontact,
                    weights.ncontact,
                    &mut acc_a,
                    &mut acc_b,
                );
            }
            (ConstraintKind::MinGap { d }, MinedPair::Violations(points)) => {
                terms.min_distance += accumulate_pair_term(
                    PairTerm::Hinge(d),
                    fa,
                    fb,
                    points,
                    weights.intersecting,
                    &mut acc_a,
                    &mut acc_b,
                );
            }
            _ => {
                return Err(Error::config(
                    format!("constraint {}-{}", c.a, c.b),
                    "mined sets do not match the constraint kind",
                ))
            }
        }
        accs[ia].merge(&acc_a);
        accs[ib].merge(&acc_b);
    }

    for ((f, samples), acc) in evals.iter().zip(data).zip(accs.iter_mut()) {
        if !samples.is_empty() {
            terms.data += accumulate_data_term(f, samples, weights.data, acc);
        }
    }

    let total = weights.intersecting * (terms.intersecting + terms.min_distance)
        + weights.contact * terms.contact
        + weights.ncontact * terms.ncontact
        + weights.data * terms.data;
    let gradients = evals.iter().zip(accs).map(|(e, a)| e.finish(a)).collect();
    let ratios = match mining {
        Some(points) => {
            let values: Vec<Vec<f64>> = evals.iter().map(|e| evaluate(e, points)).collect();
            constraints
                .iter()
                .zip(&pairs)
                .map(|(c, &(ia, ib))| match c.kind {
                    ConstraintKind::TargetContactRatio { epsilon, .. } => {
                        estimate_contact_ratio(&values[ia], &values[ib], epsilon).ok()
                    }
                    ConstraintKind::MinGap { .. } => None,
                })
                .collect()
        }
        None => vec![None; constraints.len()],
    };
    Ok(LossReport {
        terms,
        total,
        gradients,
        ratios,
    })
}
