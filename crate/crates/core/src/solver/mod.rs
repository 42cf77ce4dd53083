//! Two-stage pipeline: independent latent fitting per component, then joint
//! constrained refinement with periodic re-mining of the constraint point sets.

mod optim;
mod priors;
mod shape_space;

pub use optim::{Adam, OptimizerKind, OptimizerState};
pub use priors::{compute_training_contact_ratios, PairPrior};
pub use shape_space::{fit_shape_space, fit_shape_space_with_codes};

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constraints::{
    composite_loss, evaluate, expected_contact_count_from_bands, mine_point_sets, min_distance_violations,
    resolve_pairs, ConstraintKind, LossReport, LossTerms, LossWeights, MinedPair, PairConstraint,
};
use crate::error::{Error, Result};
use crate::field::{Field, FieldEval};
use crate::geom::{BoundingBox, Point3};
use crate::sampling::{derive_seed, near_surface_samples, uniform_points, DataSample, RngSeed};

/// Static target a component's data term is anchored to.
#[derive(Debug, Clone)]
pub struct Reference {
    pub field: Arc<Field>,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SceneComponent {
    pub name: String,
    pub field: Arc<Field>,
    pub latent: Vec<f64>,
    /// Data samples are drawn from here; the component's own starting state
    /// is used when absent.
    pub reference: Option<Reference>,
}

/// Named components sharing one bounding box.
#[derive(Debug, Clone)]
pub struct Scene {
    pub bbox: BoundingBox,
    components: Vec<SceneComponent>,
}

impl Scene {
    pub fn new(bbox: BoundingBox) -> Self {
        Scene {
            bbox,
            components: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, field: Field, latent: Vec<f64>) -> Result<()> {
        self.add_component(SceneComponent {
            name: name.into(),
            field: Arc::new(field),
            latent,
            reference: None,
        })
    }

    pub fn add_component(&mut self, c: SceneComponent) -> Result<()> {
        let path = format!("components.{}", c.name);
        if self.index_of(&c.name).is_some() {
            return Err(Error::config(path, "duplicate component name"));
        }
        if c.latent.len() != c.field.latent_dim() {
            return Err(Error::config(
                path,
                format!("latent has {} entries, field expects {}", c.latent.len(), c.field.latent_dim()),
            ));
        }
        if let Some(r) = &c.reference {
            if r.latent.len() != r.field.latent_dim() {
                return Err(Error::config(path, "reference latent does not match its field"));
            }
        }
        self.components.push(c);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[SceneComponent] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [SceneComponent] {
        &mut self.components
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn component(&self, name: &str) -> Option<&SceneComponent> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn latents(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.latent.clone()).collect()
    }

    pub fn set_latents(&mut self, latents: &[Vec<f64>]) -> Result<()> {
        if latents.len() != self.len() {
            return Err(Error::dim("latents per component", self.len(), latents.len()));
        }
        for (c, z) in self.components.iter().zip(latents) {
            if z.len() != c.field.latent_dim() {
                return Err(Error::dim("latent vector", c.field.latent_dim(), z.len()));
            }
        }
        for (c, z) in self.components.iter_mut().zip(latents) {
            c.latent.clone_from(z);
        }
        Ok(())
    }

    pub fn prepare_all(&self) -> Result<Vec<FieldEval<'_>>> {
        self.components.iter().map(|c| c.field.prepare(&c.latent)).collect()
    }

    /// Draw the fixed data samples of every component.
    pub fn draw_data(&self, config: &SolverConfig) -> Result<Vec<Vec<DataSample>>> {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if config.data_points_per_component == 0 || config.weights.data == 0.0 {
                    return Ok(Vec::new());
                }
                let (field, latent) = match &c.reference {
                    Some(r) => (r.field.as_ref(), r.latent.as_slice()),
                    None => (c.field.as_ref(), c.latent.as_slice()),
                };
                near_surface_samples(
                    field,
                    latent,
                    &self.bbox,
                    config.data_points_per_component,
                    config.near_fraction,
                    config.band_sigma,
                    derive_seed(config.seed, 0xDA7A_0000 + i as u64),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub iterations: usize,
    pub step: f64,
    pub resample_every: usize,
    pub mining_points: usize,
    pub data_points_per_component: usize,
    pub near_fraction: f64,
    pub band_sigma: f64,
    pub weights: LossWeights,
    pub seed: RngSeed,
    pub optimizer: OptimizerKind,
    /// Stop once the objective changes by less than this between iterations (0 disables).
    pub tolerance: f64,
    /// Plain gradient descent only: halve the step (up to 5 times) whenever a
    /// step would raise the objective on the current point sets.
    pub backtracking: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            iterations: 500,
            step: 1e-3,
            resample_every: 10,
            mining_points: 300_000,
            data_points_per_component: 500_000,
            near_fraction: crate::sampling::DEFAULT_NEAR_FRACTION,
            band_sigma: crate::sampling::DEFAULT_BAND_SIGMA,
            weights: LossWeights::default(),
            seed: 0,
            optimizer: OptimizerKind::Adam,
            tolerance: 0.0,
            backtracking: false,
        }
    }
}

/// Retries of one iteration with a halved step before giving up.
pub const MAX_HALVINGS: usize = 5;

impl SolverConfig {
    /// Scaled-down sample counts for tests and quick runs.
    pub fn desk() -> Self {
        SolverConfig {
            mining_points: 30_000,
            data_points_per_component: 50_000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("solver.iterations", "must be at least 1"));
        }
        if self.resample_every == 0 {
            return Err(Error::config("solver.resample_every", "must be at least 1"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::config("solver.step", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.near_fraction) {
            return Err(Error::config("solver.near_fraction", "must lie in [0, 1]"));
        }
        if !(self.band_sigma > 0.0) {
            return Err(Error::config("solver.band_sigma", "must be positive"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("solver.tolerance", "must be nonnegative"));
        }
        self.weights.validate()
    }
}

/// One record of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub losses: LossTerms,
    pub total: f64,
    /// Estimated contact ratio per constraint on the current mining points.
    pub ratios: Vec<Option<f64>>,
    pub step: f64,
    pub resampled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub records: Vec<IterationRecord>,
    pub resample_iterations: Vec<usize>,
    pub wall_time_seconds: f64,
}

impl Diagnostics {
    /// One JSON object per line; wall time is excluded so logs are reproducible.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn final_ratios(&self) -> Vec<Option<f64>> {
        self.records.last().map(|r| r.ratios.clone()).unwrap_or_default()
    }
}

fn optimization_error(iteration: usize, message: impl Into<String>) -> Error {
    Error::Optimization {
        iteration,
        message: message.into(),
    }
}

/// Fit one latent code to data samples from a zero start, minimizing the data term.
pub fn fit_latent(field: &Field, samples: &[DataSample], config: &SolverConfig) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Precondition("fit_latent needs at least one data sample".into()));
    }
    if !(config.step > 0.0) {
        return Err(Error::config("solver.step", "must be positive"));
    }
    let k = field.latent_dim();
    let mut z = vec![0.0; k];
    let mut opt = OptimizerState::new(config.optimizer, k, config.step);
    let mut step = config.step;
    let mut prev_loss = f64::INFINITY;
    let mut it = 0;
    let mut halvings = 0;
    while it < config.iterations {
        let ev = field.prepare(&z)?;
        let (loss, grad) = crate::constraints::data_loss(&ev, samples)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(optimization_error(it, "data loss is not finite"));
        }
        let mut candidate = z.clone();
        let mut cand_opt = opt.clone();
        cand_opt.step(&mut candidate, &grad, step);
        if candidate.iter().any(|v| !v.is_finite()) {
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(optimization_error(it, "latent update diverged"));
            }
            step *= 0.5;
            continue;
        }
        halvings = 0;
        z = candidate;
        opt = cand_opt;
        it += 1;
        if config.tolerance > 0.0 && (prev_loss - loss).abs() < config.tolerance {
            break;
        }
        prev_loss = loss;
    }
    Ok(z)
}

/// Mine the constraint point sets of every pair on fresh uniform samples.
fn mine(
    scene: &Scene,
    constraints: &[PairConstraint],
    pairs: &[(usize, usize)],
    points: &[Point3],
) -> Result<Vec<MinedPair>> {
    let evals = scene.prepare_all()?;
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; scene.len()];
    for &(a, b) in pairs {
        for i in [a, b] {
            if cache[i].is_none() {
                cache[i] = Some(evaluate(&evals[i], points));
            }
        }
    }
    constraints
        .iter()
        .zip(pairs)
        .map(|(c, &(a, b))| {
            let (va, vb) = (cache[a].as_deref().unwrap(), cache[b].as_deref().unwrap());
            Ok(match c.kind {
                ConstraintKind::TargetContactRatio { p, epsilon } => {
                    let na = va.iter().filter(|v| v.abs() < epsilon).count();
                    let nb = vb.iter().filter(|v| v.abs() < epsilon).count();
                    let n_contact = expected_contact_count_from_bands(p, na, nb);
                    MinedPair::Contact(mine_point_sets(points, va, vb, epsilon, n_contact)?)
                }
                ConstraintKind::MinGap { d } => MinedPair::Violations(min_distance_violations(points, va, vb, d)?),
            })
        })
        .collect()
}

/// Jointly refine every component's latent code under the pair constraints.
///
/// Each iteration re-mines the point sets when `iteration % resample_every == 0`,
/// evaluates the weighted objective and steps every latent code. Data samples
/// are drawn once up front.
pub fn refine(scene: &Scene, constraints: &[PairConstraint], config: &SolverConfig) -> Result<(Scene, Diagnostics)> {
    config.validate()?;
    let pairs = resolve_pairs(scene, constraints)?;
    let data = scene.draw_data(config)?;
    refine_with_data(scene, constraints, &pairs, &data, config)
}

fn refine_with_data(
    scene: &Scene,
    constraints: &[PairConstraint],
    pairs: &[(usize, usize)],
    data: &[Vec<DataSample>],
    config: &SolverConfig,
) -> Result<(Scene, Diagnostics)> {
    let start = Instant::now();
    let mut current = scene.clone();
    let mut opts: Vec<OptimizerState> = current
        .components()
        .iter()
        .map(|c| OptimizerState::new(config.optimizer, c.latent.len(), config.step))
        .collect();
    let mut diagnostics = Diagnostics::default();
    let mut mining: Vec<Point3> = Vec::new();
    let mut mined: Vec<MinedPair> = Vec::new();
    let mut step = config.step;
    let mut prev_total = f64::INFINITY;
    // State before the last update, for the divergence guard.
    let mut snapshot: Option<(Vec<Vec<f64>>, Vec<OptimizerState>, Vec<Vec<f64>>)> = None;
    let mut halvings = 0;

    let mut it = 0;
    while it < config.iterations {
        let resampled = it % config.resample_every == 0 && !constraints.is_empty();
        if resampled && (mined.is_empty() || halvings == 0) {
            let round = (it / config.resample_every) as u64;
            mining = uniform_points(&current.bbox, config.mining_points, derive_seed(config.seed, 0x5A3E_0000 + round));
            mined = mine(&current, constraints, pairs, &mining)?;
        }
        let report = composite_loss(&current, constraints, &mined, data, &config.weights, Some(&mining))?;
        let finite = report.terms.is_finite()
            && report.total.is_finite()
            && report.gradients.iter().flatten().all(|g| g.is_finite());
        if !finite {
            match snapshot.take() {
                Some((latents, states, grads)) if halvings < MAX_HALVINGS => {
                    halvings += 1;
                    step *= 0.5;
                    current.set_latents(&latents)?;
                    opts = states;
                    apply_step(&mut current, &mut opts, &grads, step)?;
                    snapshot = Some((latents, opts.clone(), grads));
                    continue;
                }
                _ => return Err(optimization_error(it, "objective is not finite")),
            }
        }
        halvings = 0;
        if resampled {
            diagnostics.resample_iterations.push(it);
        }
        diagnostics.records.push(IterationRecord {
            iteration: it,
            losses: report.terms,
            total: report.total,
            ratios: report.ratios.clone(),
            step,
            resampled,
        });

        let before = current.latents();
        snapshot = Some((before.clone(), opts.clone(), report.gradients.clone()));
        if config.backtracking && config.optimizer == OptimizerKind::GradientDescent {
            backtracking_step(&mut current, constraints, &mined, data, config, &report, step)?;
        } else {
            apply_step(&mut current, &mut opts, &report.gradients, step)?;
        }

        it += 1;
        if config.tolerance > 0.0 && (prev_total - report.total).abs() < config.tolerance {
            break;
        }
        prev_total = report.total;
    }
    diagnostics.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok((current, diagnostics))
}

fn apply_step(scene: &mut Scene, opts: &mut [OptimizerState], grads: &[Vec<f64>], step: f64) -> Result<()> {
    let mut latents = scene.latents();
    for ((z, opt), g) in latents.iter_mut().zip(opts.iter_mut()).zip(grads) {
        opt.step(z, g, step);
    }
    scene.set_latents(&latents)
}

/// Plain gradient step that never raises the objective on the current sets.
fn backtracking_step(
    scene: &mut Scene,
    constraints: &[PairConstraint],
    mined: &[MinedPair],
    data: &[Vec<DataSample>],
    config: &SolverConfig,
    report: &LossReport,
    step: f64,
) -> Result<()> {
    let start = scene.latents();
    let mut lr = step;
    for _ in 0..=MAX_HALVINGS {
        let trial: Vec<Vec<f64>> = start
            .iter()
            .zip(&report.gradients)
            .map(|(z, g)| z.iter().zip(g).map(|(zi, gi)| zi - lr * gi).collect())
            .collect();
        scene.set_latents(&trial)?;
        let after = composite_loss(scene, constraints, mined, data, &config.weights, None)?;
        if after.total.is_finite() && after.total <= report.total {
            return Ok(());
        }
        lr *= 0.5;
    }
    scene.set_latents(&start)
}

/// Stage 1 then stage 2: fit every component independently to its data, then
/// refine jointly. Returns the stage-1 scene alongside the refined one.
pub fn two_stage(
    scene: &Scene,
    constraints: &[PairConstraint],
    fit_config: &SolverConfig,
    refine_config: &SolverConfig,
) -> Result<(Scene, Scene, Diagnostics)> {
    refine_config.validate()?;
    let pairs = resolve_pairs(scene, constraints)?;
    let mut data_config = refine_config.clone();
    data_config.weights.data = 1.0;
    let data = scene.draw_data(&data_config)?;
    let mut stage1 = scene.clone();
    let fitted: Vec<Vec<f64>> = stage1
        .components()
        .iter()
        .zip(&data)
        .map(|(c, samples)| {
            if samples.is_empty() || c.field.latent_dim() == 0 {
                Ok(c.latent.clone())
            } else {
                fit_latent(&c.field, samples, fit_config)
            }
        })
        .collect::<Result<_>>()?;
    stage1.set_latents(&fitted)?;
    let data = if refine_config.weights.data == 0.0 {
        vec![Vec::new(); scene.len()]
    } else {
        data
    };
    let (refined, diagnostics) = refine_with_data(&stage1, constraints, &pairs, &data, refine_config)?;
    Ok((stage1, refined, diagnostics))
}
