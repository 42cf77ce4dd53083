//! Stage helpers shared by the subcommands and the acceptance suite.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pairsdf::constraints::ConstraintKind;
use pairsdf::field::Field;
use pairsdf::geometry::{
    area_difference, chamfer_distance, contact_vertex_stats, intersection_volume, marching_cubes,
    mesh_contact_ratio_symmetric, min_pair_gap, normal_consistency, TriangleMesh,
};
use pairsdf::io::{build_scenario, parse_scenario_file, MetricsRecord, Scenario, ScenarioFile};
use pairsdf::solver::{fit_latent, OptimizerKind, Scene};

use crate::args::{LossName, OptimizerName, ScenarioArgs};

/// Latent code per component name.
pub type Latents = BTreeMap<String, Vec<f64>>;

/// Surface samples per unit area for mesh contact ratios.
pub const CONTACT_SAMPLES_PER_AREA: f64 = 20_000.0;
/// Monte-Carlo points for intersection volumes.
pub const VOLUME_POINTS: usize = 1_000_000;

pub fn read_latents(path: &Path) -> Result<Latents> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_latents(path: &Path, latents: &Latents) -> Result<()> {
    let text = serde_json::to_string_pretty(latents)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn scene_latents(scene: &Scene) -> Latents {
    scene.components().iter().map(|c| (c.name.clone(), c.latent.clone())).collect()
}

/// Replace latents by name; every component must be present.
pub fn set_scene_latents(scene: &mut Scene, latents: &Latents) -> Result<()> {
    let ordered = scene
        .components()
        .iter()
        .map(|c| latents.get(&c.name).cloned().with_context(|| format!("no latent for component `{}`", c.name)))
        .collect::<Result<Vec<_>>>()?;
    scene.set_latents(&ordered)?;
    Ok(())
}

fn optimizer(o: OptimizerName) -> OptimizerKind {
    match o {
        OptimizerName::Adam => OptimizerKind::Adam,
        OptimizerName::GradientDescent => OptimizerKind::GradientDescent,
    }
}

/// Apply command-line overrides to a parsed scenario document.
pub fn apply_overrides(file: &mut ScenarioFile, args: &ScenarioArgs, seed: Option<u64>) {
    let s = &mut file.solver;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(s.iterations, args.iterations);
    set!(s.step, args.step);
    set!(s.resample_every, args.resample_every);
    set!(s.mining_points, args.mining_points);
    set!(s.data_points_per_component, args.data_points_per_component);
    set!(s.near_fraction, args.near_fraction);
    set!(s.band_sigma, args.band_sigma);
    set!(s.weights.intersecting, args.weight_intersecting);
    set!(s.weights.contact, args.weight_contact);
    set!(s.weights.ncontact, args.weight_ncontact);
    set!(s.weights.data, args.weight_data);
    set!(s.optimizer, args.optimizer.map(optimizer));
    set!(s.tolerance, args.tolerance);
    set!(s.backtracking, args.backtracking);
    set!(s.seed, seed);
    for loss in &args.disable_loss {
        match loss {
            LossName::Contact => s.weights.contact = 0.0,
            LossName::Ncontact => s.weights.ncontact = 0.0,
            LossName::Intersecting => s.weights.intersecting = 0.0,
            LossName::Data => s.weights.data = 0.0,
        }
    }
    let f = &mut file.fit;
    set!(f.iterations, args.fit_iterations);
    set!(f.step, args.fit_step);
    set!(f.optimizer, args.fit_optimizer.map(optimizer));
    set!(f.tolerance, args.fit_tolerance);
    for c in &mut file.constraints {
        match c.kind.as_str() {
            "contact_ratio" => {
                set!(c.p, args.p.map(Some));
                set!(c.epsilon, args.epsilon.map(Some));
            }
            "min_gap" => set!(c.d, args.d.map(Some)),
            _ => {}
        }
    }
}

/// Read, override and validate a scenario.
pub fn load_scenario(args: &ScenarioArgs, seed: Option<u64>) -> Result<Scenario> {
    let path = &args.scenario;
    let text = std::fs::read_to_string(path)
        .map_err(|e| pairsdf::Error::Io { path: path.clone(), source: e })?;
    let mut file = parse_scenario_file(&text, &path.display().to_string())?;
    apply_overrides(&mut file, args, seed);
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(build_scenario(file, base)?)
}

/// Independent data fits of each component from a zero code, on the same
/// samples the joint refinement later uses.
pub fn stage_one(scenario: &Scenario) -> Result<Scene> {
    let mut draw = scenario.solver.clone();
    draw.weights.data = 1.0;
    let data = scenario.scene.draw_data(&draw)?;
    let mut scene = scenario.scene.clone();
    let fitted = scene
        .components()
        .iter()
        .zip(&data)
        .map(|(c, samples)| {
            if samples.is_empty() || c.field.latent_dim() == 0 {
                Ok(c.latent.clone())
            } else {
                fit_latent(&c.field, samples, &scenario.fit)
            }
        })
        .collect::<pairsdf::Result<Vec<_>>>()?;
    scene.set_latents(&fitted)?;
    Ok(scene)
}

/// Mesh every component (or its reference) of `scene`.
pub fn mesh_scene(
    scenario: &Scenario,
    scene: &Scene,
    resolution: usize,
    reference: bool,
) -> Result<Vec<(String, TriangleMesh)>> {
    scene
        .components()
        .iter()
        .zip(scenario.scene.components())
        .map(|(c, initial)| {
            let mesh = if reference {
                let (f, z) = reference_of(initial);
                marching_cubes(f, z, &scene.bbox, resolution)?
            } else {
                marching_cubes(&c.field, &c.latent, &scene.bbox, resolution)?
            };
            Ok((c.name.clone(), mesh))
        })
        .collect()
}

fn reference_of(c: &pairsdf::solver::SceneComponent) -> (&Field, &[f64]) {
    match &c.reference {
        Some(r) => (r.field.as_ref(), r.latent.as_slice()),
        None => (c.field.as_ref(), c.latent.as_slice()),
    }
}

/// Chamfer, area difference and normal consistency of `pred` against `gt`.
pub fn mesh_metrics(subject: &str, pred: &TriangleMesh, gt: &TriangleMesh, samples: usize, seed: u64) -> Result<MetricsRecord> {
    if pred.is_empty() || gt.is_empty() {
        bail!("component `{subject}` has an empty surface");
    }
    Ok(MetricsRecord {
        subject: subject.into(),
        chamfer: Some(chamfer_distance(pred, gt, samples, seed)?),
        area_difference: Some(area_difference(pred, gt)?),
        normal_consistency: Some(normal_consistency(pred, gt, samples, seed)?),
        ..Default::default()
    })
}

/// Per-component fidelity to the references plus per-constraint pair metrics.
pub fn evaluate_scene(
    scenario: &Scenario,
    scene: &Scene,
    resolution: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<MetricsRecord>> {
    let meshes = mesh_scene(scenario, scene, resolution, false)?;
    let refs = mesh_scene(scenario, scene, resolution, true)?;
    let mut out = meshes
        .iter()
        .zip(&refs)
        .map(|((name, m), (_, r))| mesh_metrics(name, m, r, samples, seed))
        .collect::<Result<Vec<_>>>()?;
    for c in &scenario.constraints {
        let (ia, ib) = (scene.index_of(&c.a).unwrap(), scene.index_of(&c.b).unwrap());
        let (ca, cb) = (&scene.components()[ia], &scene.components()[ib]);
        let (ma, mb) = (&meshes[ia].1, &meshes[ib].1);
        let touch = match c.kind {
            ConstraintKind::TargetContactRatio { epsilon, .. } => epsilon,
            ConstraintKind::MinGap { d } => d / 2.0,
        };
        let stats = contact_vertex_stats(ma, mb, touch);
        out.push(MetricsRecord {
            subject: format!("{}|{}", c.a, c.b),
            contact_ratio: match c.kind {
                ConstraintKind::TargetContactRatio { epsilon, .. } => {
                    Some(mesh_contact_ratio_symmetric(ma, mb, epsilon, CONTACT_SAMPLES_PER_AREA, seed)?)
                }
                ConstraintKind::MinGap { .. } => None,
            },
            min_gap: Some(min_pair_gap(&ca.field, &ca.latent, &cb.field, &cb.latent, &scene.bbox, resolution)?),
            intersection_volume: Some(intersection_volume(
                &ca.field,
                &ca.latent,
                &cb.field,
                &cb.latent,
                &scene.bbox,
                VOLUME_POINTS,
                seed,
            )?),
            contact_vertices: Some(stats.count),
            contact_area: Some(stats.area),
            ..Default::default()
        });
    }
    Ok(out)
}
