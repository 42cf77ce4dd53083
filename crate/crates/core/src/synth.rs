//! Bundled synthetic scenarios written as ready-to-run directories.
//!
//! * `sphere-pair`: two capped spheres facing each other across a slightly
//!   tilted wall, with PCA shape spaces built from jittered training caps.
//! * `heart-pair`: an inner ellipsoid nested in an ellipsoidal shell.
//! * `spine-stack`: five stacked rounded boxes separated by one voxel, with
//!   reference masks perturbed into penetration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::LossWeights;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geom::{BoundingBox, Point3};
use crate::geometry::{marching_cubes, min_pair_gap, TriangleMesh};
use crate::io::{
    interface_distance_transform, sdf_volume_field, write_basis, write_mask, write_scenario, ComponentSpec,
    ConstraintSpec, FitSpec, SceneSpec, ScenarioFile, SdfVolume, ShapeSpec, VolumeHeader, VoxelMask,
};
use crate::oracle::{analytic_sphere_pair, SpherePairOracle};
use crate::sampling::{derive_seed, RngSeed};
use crate::solver::{compute_training_contact_ratios, fit_shape_space, PairPrior, SolverConfig};

/// Files produced by one generator.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub scenarios: Vec<PathBuf>,
    pub sidecar: PathBuf,
}

fn rng_for(seed: RngSeed, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, salt))
}

fn sym(rng: &mut ChaCha8Rng, a: f64) -> f64 {
    rng.random_range(-1.0..=1.0) * a
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::config("sidecar", e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Lattice of `n` voxels per unit length-`spacing` cell centred in `bbox`.
fn voxel_header(bbox: &BoundingBox, spacing: [f64; 3]) -> Result<VolumeHeader> {
    let e = bbox.extent().to_array();
    let dims: [usize; 3] = std::array::from_fn(|a| (e[a] / spacing[a]).round() as usize);
    let lo = bbox.min.to_array();
    VolumeHeader::new(
        dims,
        spacing.map(|s| s as f32),
        std::array::from_fn(|a| (lo[a] + spacing[a] / 2.0) as f32),
    )
}

fn sdf_grid(header: VolumeHeader, f: impl Fn(Point3) -> f64 + Sync) -> Result<SdfVolume> {
    let data = (0..header.voxel_count())
        .into_par_iter()
        .map(|i| {
            let [x, y, z] = header.coords(i);
            f(header.position(x, y, z)) as f32
        })
        .collect();
    SdfVolume::new(header, data)
}

fn mask_mesh(mask: &VoxelMask, bbox: &BoundingBox, resolution: usize) -> Result<TriangleMesh> {
    let field = Field::from(sdf_volume_field(&interface_distance_transform(mask)?)?);
    marching_cubes(&field, &[], bbox, resolution)
}

fn bbox_spec(b: &BoundingBox) -> SceneSpec {
    SceneSpec { bbox: [b.min.to_array(), b.max.to_array()] }
}

fn grid_component(name: &str, basis: &str, latent_dim: usize, reference: &str) -> ComponentSpec {
    let mut c = ComponentSpec::from_shape(
        name,
        ShapeSpec {
            family: "grid".into(),
            basis_path: Some(basis.into()),
            latent_dim: Some(latent_dim),
            ..Default::default()
        },
    );
    c.reference = Some(mask_reference(reference));
    c
}

fn mask_reference(path: &str) -> ShapeSpec {
    ShapeSpec {
        family: "grid".into(),
        vox_path: Some(path.into()),
        ..Default::default()
    }
}

/// Rotate `n` by `ay` about y, then by `az` about z.
fn tilt(n: Point3, ay: f64, az: f64) -> Point3 {
    let (cy, sy) = (ay.cos(), ay.sin());
    let v = Point3::new(cy * n.x + sy * n.z, n.y, -sy * n.x + cy * n.z);
    let (cz, sz) = (az.cos(), az.sin());
    Point3::new(cz * v.x - sz * v.y, sz * v.x + cz * v.y, v.z).normalized()
}

/// Exact distance to a ball of radius `r` at `c` cut by the plane at offset
/// `t` from `c` along unit `n`.
pub fn capped_sphere_sdf(p: Point3, c: Point3, r: f64, n: Point3, t: f64) -> f64 {
    let q = p - c;
    let a = q.dot(n);
    let u = a - t;
    let rho = (q - n * a).norm();
    let rho0 = (r * r - t * t).max(0.0).sqrt();
    if u > 0.0 {
        if rho <= rho0 {
            u
        } else {
            (u * u + (rho - rho0).powi(2)).sqrt()
        }
    } else {
        (q.norm() - r).max(u)
    }
}

pub mod sphere_pair {
    //! Geometry of the capped-sphere pair.
    pub const RADIUS: f64 = 0.5;
    pub const HALF_DISTANCE: f64 = 0.22;
    pub const WALL_TILT_DEG: f64 = 1.5;
    pub const TRAINING: usize = 16;
    pub const LATENT_DIM: usize = 4;
    pub const GRID_SPACING: f64 = 0.025;
    pub const MASK_SPACING: f64 = 0.02;
    pub const TILT_JITTER: f64 = 0.06;
    pub const CAP_JITTER: f64 = 0.15;
    pub const TARGET: f64 = 0.1;
    pub const EPSILON: f64 = 0.02;
    pub const MAX_INTERSECTION_VOLUME: f64 = 1e-4;
}

/// Expected values shipped next to the sphere-pair scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePairSidecar {
    pub target_ratio: f64,
    pub epsilon: f64,
    pub ratio_tolerance: f64,
    pub max_intersection_volume: f64,
    /// Closed-form values for the two uncut spheres.
    pub uncut_spheres: SpherePairOracle,
}

pub fn sphere_pair_bbox() -> BoundingBox {
    use sphere_pair::*;
    let lo = Point3::new(-HALF_DISTANCE - RADIUS - 0.2, -RADIUS - 0.2, -RADIUS - 0.2);
    BoundingBox { min: lo, max: -lo }
}

/// Write `sphere-pair.toml`, its bases, reference masks and oracle sidecar.
pub fn write_sphere_pair(dir: &Path, seed: RngSeed) -> Result<SynthOutput> {
    use sphere_pair::*;
    create_dir(dir)?;
    let bbox = sphere_pair_bbox();
    let e = bbox.extent().to_array();
    let grid = VolumeHeader::spanning(&bbox, std::array::from_fn(|a| (e[a] / GRID_SPACING).round() as usize + 1))?;
    let masks = voxel_header(&bbox, [MASK_SPACING; 3])?;
    let mut components = Vec::new();
    for (i, (name, side)) in [("a", -1.0), ("b", 1.0)].into_iter().enumerate() {
        let toward = Point3::new(-side, 0.0, 0.0);
        let c = Point3::new(side * HALF_DISTANCE, 0.0, 0.0);
        let mut rng = rng_for(seed, i as u64);
        let cuts: Vec<(Point3, f64)> = (0..TRAINING)
            .map(|_| {
                let (ay, az) = (sym(&mut rng, TILT_JITTER), sym(&mut rng, TILT_JITTER));
                (tilt(toward, ay, az), HALF_DISTANCE * (1.0 + sym(&mut rng, CAP_JITTER)))
            })
            .collect();
        let grids = cuts
            .iter()
            .map(|&(n, t)| sdf_grid(grid, |p| capped_sphere_sdf(p, c, RADIUS, n, t)))
            .collect::<Result<Vec<_>>>()?;
        write_basis(dir.join(format!("{name}.basis")), &fit_shape_space(&grids, LATENT_DIM)?)?;
        let wall = tilt(toward, 0.0, side * WALL_TILT_DEG.to_radians());
        let mask = VoxelMask::from_fn(masks, |p| capped_sphere_sdf(p, c, RADIUS, wall, HALF_DISTANCE) < 0.0)?;
        write_mask(dir.join(format!("{name}_ref.vox")), &mask)?;
        components.push(grid_component(name, &format!("{name}.basis"), LATENT_DIM, &format!("{name}_ref.vox")));
    }
    let file = ScenarioFile {
        scene: bbox_spec(&bbox),
        components,
        constraints: vec![ConstraintSpec {
            a: "a".into(),
            b: "b".into(),
            kind: "contact_ratio".into(),
            p: Some(TARGET),
            epsilon: Some(EPSILON),
            d: None,
        }],
        solver: SolverConfig {
            iterations: 500,
            step: 1e-2,
            weights: LossWeights { intersecting: 10.0, contact: 1.0, ncontact: 0.25, data: 0.003 },
            seed,
            ..SolverConfig::desk()
        },
        fit: FitSpec { iterations: 300, step: 0.1, ..Default::default() },
    };
    let scenario = dir.join("sphere-pair.toml");
    write_scenario(&scenario, &file)?;
    let sidecar = dir.join("sphere-pair.oracle.json");
    write_json(
        &sidecar,
        &SpherePairSidecar {
            target_ratio: TARGET,
            epsilon: EPSILON,
            ratio_tolerance: 0.02,
            max_intersection_volume: MAX_INTERSECTION_VOLUME,
            uncut_spheres: analytic_sphere_pair(RADIUS, RADIUS, 2.0 * HALF_DISTANCE, EPSILON)?,
        },
    )?;
    Ok(SynthOutput { scenarios: vec![scenario], sidecar })
}

pub mod heart_pair {
    //! Nested ellipsoid and shell on a 48³ lattice over [-1, 1]³.
    pub const LATTICE: usize = 48;
    pub const SEMI_AXES: [f64; 3] = [0.45, 0.38, 0.34];
    pub const AXIS_JITTER: f64 = 0.05;
    pub const ANGLE_JITTER: f64 = 0.15;
    /// Outer-to-inner scale giving an inner share of 0.27 for similar ellipsoids.
    pub const SHELL_SCALE: f64 = 1.3053;
    pub const SHELL_JITTER: f64 = 0.04;
    pub const LATENT_DIM: usize = 8;
    pub const TARGET: f64 = 0.27;
    pub const INSTANCES: usize = 20;

    pub fn voxel() -> f64 {
        2.0 / LATTICE as f64
    }
}

/// One jittered heart-pair instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartInstance {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub angle: f64,
    pub shell_scale: f64,
}

impl HeartInstance {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        use heart_pair::*;
        let v = voxel();
        HeartInstance {
            center: [sym(rng, v), sym(rng, v), sym(rng, v)],
            semi_axes: SEMI_AXES.map(|a| a * (1.0 + sym(rng, AXIS_JITTER))),
            angle: sym(rng, ANGLE_JITTER),
            shell_scale: SHELL_SCALE + sym(rng, SHELL_JITTER),
        }
    }

    /// Squared normalized radius of `p` in the ellipsoid scaled by `scale`.
    fn level(&self, p: Point3, scale: f64) -> f64 {
        let d = p - Point3::from_array(self.center);
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let l = [c * d.x + s * d.y, -s * d.x + c * d.y, d.z];
        (0..3).map(|a| (l[a] / (self.semi_axes[a] * scale)).powi(2)).sum()
    }

    pub fn inner(&self, p: Point3) -> bool {
        self.level(p, 1.0) < 1.0
    }

    pub fn shell(&self, p: Point3) -> bool {
        self.level(p, 1.0) >= 1.0 && self.level(p, self.shell_scale) < 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartPairSidecar {
    pub target_ratio: f64,
    pub epsilon: f64,
    pub instances: Vec<HeartInstance>,
    /// Measured mesh contact ratio of the reference masks.
    pub training: PairPrior,
}

pub fn heart_pair_header() -> Result<VolumeHeader> {
    let v = heart_pair::voxel();
    VolumeHeader::new([heart_pair::LATTICE; 3], [v as f32; 3], [(-1.0 + v / 2.0) as f32; 3])
}

/// Write per-instance masks and scenarios plus the shared shape spaces.
pub fn write_heart_pair(dir: &Path, instances: usize, seed: RngSeed) -> Result<SynthOutput> {
    use heart_pair::*;
    if instances < 2 {
        return Err(Error::Precondition("heart-pair needs at least 2 instances".into()));
    }
    create_dir(dir)?;
    let header = heart_pair_header()?;
    let bbox = header.bbox()?;
    let eps = voxel();
    let k = LATENT_DIM.min(instances - 1);
    let mut rng = rng_for(seed, 0);
    let insts: Vec<HeartInstance> = (0..instances).map(|_| HeartInstance::random(&mut rng)).collect();
    let mut inner_sdf = Vec::new();
    let mut shell_sdf = Vec::new();
    let mut meshes = Vec::new();
    let mut scenarios = Vec::new();
    for (i, g) in insts.iter().enumerate() {
        let name = format!("instance-{i:02}");
        let inner = VoxelMask::from_fn(header, |p| g.inner(p))?;
        let shell = VoxelMask::from_fn(header, |p| g.shell(p))?;
        write_mask(dir.join(format!("{name}-lv.vox")), &inner)?;
        write_mask(dir.join(format!("{name}-myo.vox")), &shell)?;
        inner_sdf.push(interface_distance_transform(&inner)?);
        shell_sdf.push(interface_distance_transform(&shell)?);
        meshes.push(BTreeMap::from([
            ("lv".to_string(), mask_mesh(&inner, &bbox, 2 * LATTICE)?),
            ("myo".to_string(), mask_mesh(&shell, &bbox, 2 * LATTICE)?),
        ]));
        let file = ScenarioFile {
            scene: bbox_spec(&bbox),
            components: vec![
                grid_component("lv", "lv.basis", k, &format!("{name}-lv.vox")),
                grid_component("myo", "myo.basis", k, &format!("{name}-myo.vox")),
            ],
            constraints: vec![ConstraintSpec {
                a: "lv".into(),
                b: "myo".into(),
                kind: "contact_ratio".into(),
                p: Some(TARGET),
                epsilon: Some(eps),
                d: None,
            }],
            solver: SolverConfig {
                iterations: 200,
                step: 1e-2,
                data_points_per_component: 20_000,
                seed,
                ..SolverConfig::desk()
            },
            fit: FitSpec { iterations: 200, step: 0.1, ..Default::default() },
        };
        let path = dir.join(format!("{name}.toml"));
        write_scenario(&path, &file)?;
        scenarios.push(path);
    }
    write_basis(dir.join("lv.basis"), &fit_shape_space(&inner_sdf, k)?)?;
    write_basis(dir.join("myo.basis"), &fit_shape_space(&shell_sdf, k)?)?;
    let pair = [("lv".to_string(), "myo".to_string())];
    let training = compute_training_contact_ratios(&meshes, &pair, eps, 2000.0, seed)?.remove(0);
    let sidecar = dir.join("heart-pair.oracle.json");
    write_json(&sidecar, &HeartPairSidecar { target_ratio: TARGET, epsilon: eps, instances: insts, training })?;
    Ok(SynthOutput { scenarios, sidecar })
}

pub mod spine_stack {
    //! Five rounded boxes stacked along z on a 32×32×64 lattice of 1/32 voxels.
    pub const LATTICE: [usize; 3] = [32, 32, 64];
    pub const BOXES: usize = 5;
    pub const INSTANCES: usize = 20;
    pub const XY_JITTER: f64 = 1.0;
    pub const ANGLE_JITTER: f64 = 0.1;
    pub const ROUNDING: f64 = 2.0;
    /// Largest penetration of the perturbed masks, in voxels.
    pub const MAX_PENETRATION: i64 = 2;

    pub fn voxel() -> f64 {
        1.0 / 32.0
    }
}

/// Rounded box in voxel units occupying z layers `[z0, z1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertebra {
    pub z0: f64,
    pub z1: f64,
    pub half: [f64; 2],
    pub center: [f64; 2],
    pub angle: f64,
    pub rounding: f64,
}

impl Vertebra {
    fn half_extents(&self) -> [f64; 3] {
        [self.half[0], self.half[1], 0.5 * (self.z1 - self.z0)]
    }

    /// Exact signed distance in voxel units.
    pub fn sdf(&self, p: Point3) -> f64 {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (dx, dy) = (p.x - self.center[0], p.y - self.center[1]);
        let l = Point3::new(c * dx + s * dy, -s * dx + c * dy, p.z - 0.5 * (self.z0 + self.z1));
        let q = l.abs() - Point3::from_array(self.half_extents()) + Point3::splat(self.rounding);
        q.max(Point3::ZERO).norm() + q.max_component().min(0.0) - self.rounding
    }
}

/// Face growth applied to one adjacent pair: the lower box's top moves up by
/// `up`, the upper box's bottom moves down by `down`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub up: i64,
    pub down: i64,
}

impl Perturbation {
    /// Overlap in voxels after closing the one-voxel gap.
    pub fn penetration(&self) -> i64 {
        self.up + self.down - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineInstance {
    pub boxes: Vec<Vertebra>,
    pub perturbations: Vec<Perturbation>,
    /// Lattice minimum of f_lower + f_upper over the clean masks, per pair.
    pub clean_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineStackSidecar {
    pub min_gap: f64,
    pub instances: Vec<SpineInstance>,
}

pub fn spine_stack_header() -> Result<VolumeHeader> {
    let v = spine_stack::voxel();
    VolumeHeader::new(
        spine_stack::LATTICE,
        [v as f32; 3],
        [(-0.5 + v / 2.0) as f32, (-0.5 + v / 2.0) as f32, (-1.0 + v / 2.0) as f32],
    )
}

fn to_voxels(p: Point3) -> Point3 {
    let v = spine_stack::voxel();
    Point3::new((p.x + 0.5) / v, (p.y + 0.5) / v, (p.z + 1.0) / v)
}

fn random_stack(rng: &mut ChaCha8Rng) -> Vec<Vertebra> {
    use spine_stack::*;
    let mut z = rng.random_range(4..=6) as f64;
    (0..BOXES)
        .map(|_| {
            let t = rng.random_range(9..=10) as f64;
            let mut j = || sym(rng, XY_JITTER);
            let half = [10.0 + j(), 7.0 + j()];
            let center = [16.0 + j(), 16.0 + j()];
            let v = Vertebra { z0: z, z1: z + t, half, center, angle: sym(rng, ANGLE_JITTER), rounding: ROUNDING };
            z += t + 1.0;
            v
        })
        .collect()
}

fn random_perturbations(rng: &mut ChaCha8Rng) -> Vec<Perturbation> {
    (0..spine_stack::BOXES - 1)
        .map(|_| {
            let pen = rng.random_range(0..=spine_stack::MAX_PENETRATION);
            let up = rng.random_range(0..=pen + 1);
            Perturbation { up, down: pen + 1 - up }
        })
        .collect()
}

fn perturbed(boxes: &[Vertebra], pert: &[Perturbation]) -> Vec<Vertebra> {
    let mut out = boxes.to_vec();
    for (j, p) in pert.iter().enumerate() {
        out[j].z1 += p.up as f64;
        out[j + 1].z0 -= p.down as f64;
    }
    out
}

fn vertebra_mask(header: VolumeHeader, v: &Vertebra) -> Result<VoxelMask> {
    VoxelMask::from_fn(header, |p| v.sdf(to_voxels(p)) < 0.0)
}

/// Rounded-box component posed from the clean box, fitted to a perturbed mask.
fn vertebra_component(name: &str, v: &Vertebra, reference: &str) -> ComponentSpec {
    let s = spine_stack::voxel();
    let h = v.half_extents();
    let mut c = ComponentSpec::from_shape(
        name,
        ShapeSpec {
            family: "rounded_box".into(),
            params: Some(vec![h[0] * s, h[1] * s, h[2] * s, v.rounding * s]),
            center: Some([v.center[0] * s - 0.5, v.center[1] * s - 0.5, 0.5 * (v.z0 + v.z1) * s - 1.0]),
            axis: Some([0.0, 0.0, 1.0]),
            angle: Some(v.angle),
            latent_map: Some(vec![0, 1, 2]),
            latent_dim: Some(3),
            ..Default::default()
        },
    );
    c.reference = Some(mask_reference(reference));
    c
}

/// Write clean and perturbed masks, one scenario per instance, and the sidecar.
pub fn write_spine_stack(dir: &Path, instances: usize, seed: RngSeed) -> Result<SynthOutput> {
    use spine_stack::*;
    if instances == 0 {
        return Err(Error::Precondition("spine-stack needs at least 1 instance".into()));
    }
    create_dir(dir)?;
    let header = spine_stack_header()?;
    let bbox = header.bbox()?;
    let d = voxel();
    let mut rng = rng_for(seed, 0);
    let stacks: Vec<Vec<Vertebra>> = (0..instances).map(|_| random_stack(&mut rng)).collect();
    let mut scenarios = Vec::new();
    let mut sidecar = SpineStackSidecar { min_gap: d, instances: Vec::new() };
    for (i, boxes) in stacks.into_iter().enumerate() {
        let name = format!("instance-{i:02}");
        let pert = random_perturbations(&mut rng_for(seed, 1000 + i as u64));
        let grown = perturbed(&boxes, &pert);
        let mut fields = Vec::new();
        let mut components = Vec::new();
        for j in 0..BOXES {
            let clean = vertebra_mask(header, &boxes[j])?;
            write_mask(dir.join(format!("{name}-clean-v{j}.vox")), &clean)?;
            fields.push(Field::from(sdf_volume_field(&interface_distance_transform(&clean)?)?));
            let reference = format!("{name}-v{j}.vox");
            write_mask(dir.join(&reference), &vertebra_mask(header, &grown[j])?)?;
            components.push(vertebra_component(&format!("v{j}"), &boxes[j], &reference));
        }
        let clean_gaps = (0..BOXES - 1)
            .map(|j| min_pair_gap(&fields[j], &[], &fields[j + 1], &[], &bbox, 128))
            .collect::<Result<Vec<_>>>()?;
        let file = ScenarioFile {
            scene: bbox_spec(&bbox),
            components,
            constraints: (0..BOXES - 1)
                .map(|j| ConstraintSpec {
                    a: format!("v{j}"),
                    b: format!("v{}", j + 1),
                    kind: "min_gap".into(),
                    p: None,
                    epsilon: None,
                    d: Some(d),
                })
                .collect(),
            solver: SolverConfig {
                iterations: 200,
                step: 1e-3,
                data_points_per_component: 20_000,
                weights: LossWeights { intersecting: 10.0, contact: 1.0, ncontact: 0.25, data: 0.01 },
                seed,
                ..SolverConfig::desk()
            },
            fit: FitSpec { iterations: 200, step: 1e-3, ..Default::default() },
        };
        let path = dir.join(format!("{name}.toml"));
        write_scenario(&path, &file)?;
        scenarios.push(path);
        sidecar.instances.push(SpineInstance { boxes, perturbations: pert, clean_gaps });
    }
    let path = dir.join("spine-stack.oracle.json");
    write_json(&path, &sidecar)?;
    Ok(SynthOutput { scenarios, sidecar: path })
}
