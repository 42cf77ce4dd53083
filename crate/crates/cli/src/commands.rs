use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use pairsdf::constraints::estimate_contact_ratio;
use pairsdf::field::{AnalyticField, Field};
use pairsdf::geometry::intersection_volume;
use pairsdf::io::{
    interface_distance_transform, read_obj, read_vox, signed_distance_transform, write_basis, write_obj,
    write_report, MetricsRecord, Volume, VolumeHeader, VoxelMask,
};
use pairsdf::oracle::{brute_force_edt, dense_contact_ratio, lens_volume};
use pairsdf::sampling::{derive_seed, uniform_points};
use pairsdf::solver::{fit_shape_space_with_codes, refine, two_stage};
use pairsdf::synth;
use pairsdf::{BoundingBox, Point3};

use crate::args::*;
use crate::pipeline::*;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(a: &SynthArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let out = match a.kind {
        SynthKind::SpherePair => synth::write_sphere_pair(&a.out, seed)?,
        SynthKind::HeartPair => synth::write_heart_pair(&a.out, a.instances, seed)?,
        SynthKind::SpineStack => synth::write_spine_stack(&a.out, a.instances, seed)?,
    };
    info!("wrote {} scenario(s) and {}", out.scenarios.len(), out.sidecar.display());
    Ok(())
}

pub fn fit_space(a: &FitSpaceArgs) -> Result<()> {
    let grids = a
        .volumes
        .iter()
        .map(|p| {
            Ok(match read_vox(p)? {
                Volume::Sdf(s) => s,
                Volume::Mask(m) => interface_distance_transform(&m)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (field, codes) = fit_shape_space_with_codes(&grids, a.k)?;
    write_basis(&a.out, &field)?;
    if let Some(path) = &a.codes {
        let named: Vec<(String, Vec<f64>)> =
            a.volumes.iter().map(|p| p.display().to_string()).zip(codes).collect();
        std::fs::write(path, serde_json::to_string_pretty(&named)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    info!("shape space of {} directions from {} volumes", a.k, grids.len());
    Ok(())
}

pub fn fit_latent(a: &FitLatentArgs, seed: Option<u64>) -> Result<()> {
    let scenario = load_scenario(&a.scenario, seed)?;
    let scene = stage_one(&scenario)?;
    write_latents(&a.out, &scene_latents(&scene))
}

pub fn refine_cmd(a: &RefineArgs, seed: Option<u64>) -> Result<()> {
    let scenario = load_scenario(&a.scenario, seed)?;
    create_dir(&a.out)?;
    let (refined, diag) = match &a.init {
        Some(init) => {
            let mut scene = scenario.scene.clone();
            set_scene_latents(&mut scene, &read_latents(init)?)?;
            refine(&scene, &scenario.constraints, &scenario.solver)?
        }
        None => {
            let (stage1, refined, diag) =
                two_stage(&scenario.scene, &scenario.constraints, &scenario.fit, &scenario.solver)?;
            write_latents(&a.out.join("stage1.json"), &scene_latents(&stage1))?;
            (refined, diag)
        }
    };
    write_latents(&a.out.join("latents.json"), &scene_latents(&refined))?;
    let log = a.out.join("diagnostics.jsonl");
    let mut w = BufWriter::new(File::create(&log).with_context(|| format!("creating {}", log.display()))?);
    diag.write_jsonl(&mut w)?;
    w.flush()?;
    for (c, r) in scenario.constraints.iter().zip(diag.final_ratios()) {
        if let Some(r) = r {
            info!("{}|{}: final sampled contact ratio {r:.4}", c.a, c.b);
        }
    }
    info!("{} iterations in {:.1} s", diag.records.len(), diag.wall_time_seconds);
    Ok(())
}

pub fn mesh(a: &MeshArgs, seed: Option<u64>) -> Result<()> {
    let scenario = load_scenario(&a.scenario, seed)?;
    let mut scene = scenario.scene.clone();
    if let Some(path) = &a.latents {
        set_scene_latents(&mut scene, &read_latents(path)?)?;
    }
    create_dir(&a.out)?;
    for (name, m) in mesh_scene(&scenario, &scene, a.resolution, a.reference)? {
        write_obj(a.out.join(format!("{name}.obj")), &m)?;
    }
    Ok(())
}

pub fn eval(a: &EvalArgs, seed: Option<u64>) -> Result<()> {
    let records = match (&a.scenario, &a.pred, &a.gt) {
        (Some(path), _, _) => {
            let args = ScenarioArgs { scenario: path.clone(), ..Default::default() };
            let scenario = load_scenario(&args, seed)?;
            let mut scene = scenario.scene.clone();
            if let Some(l) = &a.latents {
                set_scene_latents(&mut scene, &read_latents(l)?)?;
            }
            evaluate_scene(&scenario, &scene, a.resolution, a.samples, scenario.solver.seed)?
        }
        (None, Some(pred), Some(gt)) => {
            let subject = pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            vec![mesh_metrics(&subject, &read_obj(pred)?, &read_obj(gt)?, a.samples, seed.unwrap_or(0))?]
        }
        _ => bail!("eval needs --scenario or both --pred and --gt"),
    };
    match &a.out {
        Some(path) => write_report(path, &records)?,
        None => print_records(&records)?,
    }
    Ok(())
}

fn print_records(records: &[MetricsRecord]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Outcome of one oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn unit_spheres() -> (Field, Field, BoundingBox) {
    let a = AnalyticField::sphere(Point3::new(-0.95, 0.0, 0.0), 1.0).into();
    let b = AnalyticField::sphere(Point3::new(0.95, 0.0, 0.0), 1.0).into();
    (a, b, BoundingBox::new(Point3::new(-2.2, -1.2, -1.2), Point3::new(2.2, 1.2, 1.2)).unwrap())
}

/// Sampled estimator at 10⁶ points vs the 256³ lattice, two unit spheres 1.9 apart, ε = 0.05.
pub fn check_contact_ratio(seed: u64) -> Result<OracleOutcome> {
    let (fa, fb, bbox) = unit_spheres();
    let eps = 0.05;
    let pts = uniform_points(&bbox, 1_000_000, seed);
    let (ea, eb) = (fa.prepare(&[])?, fb.prepare(&[])?);
    let va: Vec<f64> = pts.iter().map(|&p| ea.value(p)).collect();
    let vb: Vec<f64> = pts.iter().map(|&p| eb.value(p)).collect();
    let sampled = estimate_contact_ratio(&va, &vb, eps)?;
    let dense = dense_contact_ratio(&fa, &[], &fb, &[], &bbox, 256, eps)?;
    let diff = (sampled - dense).abs();
    Ok(OracleOutcome {
        name: "contact-ratio",
        passed: diff <= 0.01,
        detail: format!("sampled {sampled:.5} dense {dense:.5} |diff| {diff:.5} (limit 0.01)"),
    })
}

/// Deterministic random 16³ mask with a per-mask fill fraction.
pub fn random_mask(seed: u64) -> VoxelMask {
    let header = VolumeHeader::new([16; 3], [1.0; 3], [0.0; 3]).unwrap();
    let fill = 0.1 + 0.8 * (derive_seed(seed, u64::MAX) >> 11) as f64 / (1u64 << 53) as f64;
    let data = (0..header.voxel_count())
        .map(|i| ((derive_seed(seed, i as u64) >> 11) as f64 / (1u64 << 53) as f64) < fill)
        .collect();
    VoxelMask::new(header, data).unwrap()
}

/// Fast transform equals exhaustive search on `count` random masks.
pub fn check_edt(count: usize, seed: u64) -> Result<OracleOutcome> {
    let mut mismatched = 0;
    for i in 0..count {
        let mask = random_mask(derive_seed(seed, i as u64));
        match (signed_distance_transform(&mask), brute_force_edt(&mask)) {
            (Ok(fast), Ok(slow)) => mismatched += usize::from(fast.data != slow.data),
            (Err(_), Err(_)) => {}
            _ => mismatched += 1,
        }
    }
    Ok(OracleOutcome {
        name: "edt",
        passed: mismatched == 0,
        detail: format!("{mismatched} of {count} masks differ"),
    })
}

/// Sampled intersection volume of unit spheres 1.9 apart vs the lens formula,
/// sampled in a box just enclosing the lens.
pub fn check_lens(seed: u64) -> Result<OracleOutcome> {
    let (fa, fb, _) = unit_spheres();
    let lens_box = BoundingBox::new(Point3::new(-0.1, -0.35, -0.35), Point3::new(0.1, 0.35, 0.35))?;
    let sampled = intersection_volume(&fa, &[], &fb, &[], &lens_box, 1_000_000, seed)?;
    let exact = lens_volume(1.0, 1.0, 1.9);
    let rel = (sampled - exact).abs() / exact;
    Ok(OracleOutcome {
        name: "lens",
        passed: rel <= 0.02,
        detail: format!("sampled {sampled:.6} closed form {exact:.6} relative error {rel:.4} (limit 0.02)"),
    })
}

/// Returns whether every check passed.
pub fn oracle_check(a: &OracleCheckArgs, seed: Option<u64>) -> Result<bool> {
    let seed = seed.unwrap_or(0);
    let mut ok = true;
    for kind in &a.checks {
        let o = match kind {
            OracleKind::ContactRatio => check_contact_ratio(seed)?,
            OracleKind::Edt => check_edt(a.masks, seed)?,
            OracleKind::Lens => check_lens(seed)?,
        };
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        ok &= o.passed;
    }
    Ok(ok)
}
