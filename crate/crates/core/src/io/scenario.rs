//! TOML run descriptions: scene box, components, pair constraints and solver knobs.
//!
//! ```toml
//! [scene]
//! bbox = [[-2.0, -1.0, -1.0], [2.0, 1.0, 1.0]]
//!
//! [[components]]
//! name = "a"
//! family = "sphere"
//! params = [1.0]
//! center = [-1.05, 0.0, 0.0]
//! latent_dim = 1
//!
//! [[constraints]]
//! a = "a"
//! b = "b"
//! kind = "contact_ratio"
//! p = 0.1
//! epsilon = 0.02
//!
//! [solver]
//! iterations = 500
//! ```
//!
//! Relative file paths are resolved against the scenario file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::container::{read_basis, read_mlp};
use super::edt::interface_distance_transform;
use super::vox::{read_vox, SdfVolume, Volume};
use crate::constraints::{PairConstraint, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::field::{AnalyticField, Field, LatentGridField, PrimitiveKind};
use crate::geom::{BoundingBox, Point3, Pose};
use crate::solver::{OptimizerKind, Reference, Scene, SceneComponent, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub bbox: [[f64; 3]; 2],
}

/// Where a shape comes from: a primitive or a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    /// `sphere`, `ellipsoid`, `capsule`, `rounded_box`, `grid` or `mlp`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    /// Shape parameters offset by the latent components (primitives only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_map: Option<Vec<usize>>,
    /// Latent size; primitives offset their first `latent_dim` parameters,
    /// grid bases keep their leading `latent_dim` directions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    /// VOX1 mask (converted by distance transform) or signed distance volume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vox_path: Option<String>,
    /// BASIS1 shape space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_path: Option<String>,
    /// MLP1 decoder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_path: Option<String>,
    /// Initial latent code (zeros when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub name: String,
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_map: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vox_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<f64>>,
    /// Target of the data term; the component's own initial shape when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ShapeSpec>,
}

impl ComponentSpec {
    pub fn from_shape(name: &str, shape: ShapeSpec) -> Self {
        ComponentSpec {
            name: name.into(),
            family: shape.family,
            params: shape.params,
            center: shape.center,
            axis: shape.axis,
            angle: shape.angle,
            latent_map: shape.latent_map,
            latent_dim: shape.latent_dim,
            vox_path: shape.vox_path,
            basis_path: shape.basis_path,
            mlp_path: shape.mlp_path,
            latent: shape.latent,
            reference: None,
        }
    }

    pub fn shape(&self) -> ShapeSpec {
        ShapeSpec {
            family: self.family.clone(),
            params: self.params.clone(),
            center: self.center,
            axis: self.axis,
            angle: self.angle,
            latent_map: self.latent_map.clone(),
            latent_dim: self.latent_dim,
            vox_path: self.vox_path.clone(),
            basis_path: self.basis_path.clone(),
            mlp_path: self.mlp_path.clone(),
            latent: self.latent.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub a: String,
    pub b: String,
    /// `contact_ratio` or `min_gap`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

/// Stage-1 (independent data fit) settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSpec {
    pub iterations: usize,
    pub step: f64,
    pub optimizer: OptimizerKind,
    pub tolerance: f64,
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec {
            iterations: 300,
            step: 1e-2,
            optimizer: OptimizerKind::Adam,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scene: SceneSpec,
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fit: FitSpec,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub scene: Scene,
    pub constraints: Vec<PairConstraint>,
    pub solver: SolverConfig,
    pub fit: SolverConfig,
    pub file: ScenarioFile,
}

impl Scenario {
    /// Stage-1 config derived from the fit settings and the solver's sampling knobs.
    fn fit_config(file: &ScenarioFile) -> SolverConfig {
        SolverConfig {
            iterations: file.fit.iterations.max(1),
            step: file.fit.step,
            optimizer: file.fit.optimizer,
            tolerance: file.fit.tolerance,
            weights: crate::constraints::LossWeights::data_only(),
            ..file.solver.clone()
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn pose_of(spec: &ShapeSpec, at: &str) -> Result<Pose> {
    let t = Point3::from_array(spec.center.unwrap_or([0.0; 3]));
    match (spec.axis, spec.angle) {
        (None, None) => Ok(Pose::translation(t)),
        (Some(axis), Some(angle)) => {
            let a = Point3::from_array(axis);
            if !(a.norm() > 0.0) || !angle.is_finite() {
                return Err(Error::config(format!("{at}.axis"), "rotation axis must be nonzero"));
            }
            Ok(Pose::from_axis_angle(a, angle, t))
        }
        _ => Err(Error::config(format!("{at}.axis"), "axis and angle must be given together")),
    }
}

fn reject_unused(spec: &ShapeSpec, at: &str, allowed: &[&str]) -> Result<()> {
    let present = [
        ("params", spec.params.is_some()),
        ("center", spec.center.is_some()),
        ("axis", spec.axis.is_some()),
        ("angle", spec.angle.is_some()),
        ("latent_map", spec.latent_map.is_some()),
        ("vox_path", spec.vox_path.is_some()),
        ("basis_path", spec.basis_path.is_some()),
        ("mlp_path", spec.mlp_path.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            return Err(Error::config(format!("{at}.{key}"), format!("not used by family `{}`", spec.family)));
        }
    }
    Ok(())
}

/// Signed distance volume as a latent-free grid field.
pub fn sdf_volume_field(v: &SdfVolume) -> Result<LatentGridField> {
    let bbox = v.header.bbox()?;
    LatentGridField::new(v.header.dims, bbox, v.data.clone(), Vec::new())
}

fn with_config_path(e: Error, at: &str) -> Error {
    match e {
        Error::Config { .. } | Error::Io { .. } | Error::Format { .. } | Error::Parse { .. } => e,
        other => Error::config(at, other.to_string()),
    }
}

/// Build the field and initial latent described by `spec`.
pub fn build_shape(spec: &ShapeSpec, base: &Path, at: &str) -> Result<(Field, Vec<f64>)> {
    let field: Field = match spec.family.as_str() {
        "grid" => {
            reject_unused(spec, at, &["vox_path", "basis_path"])?;
            match (&spec.vox_path, &spec.basis_path) {
                (Some(v), None) => {
                    let path = resolve(base, v);
                    let sdf = match read_vox(&path)? {
                        Volume::Sdf(s) => s,
                        Volume::Mask(m) => interface_distance_transform(&m).map_err(|e| with_config_path(e, at))?,
                    };
                    if spec.latent_dim.is_some_and(|k| k != 0) {
                        return Err(Error::config(format!("{at}.latent_dim"), "a single volume has no latent"));
                    }
                    sdf_volume_field(&sdf).map_err(|e| with_config_path(e, at))?.into()
                }
                (None, Some(b)) => {
                    let g = read_basis(resolve(base, b))?;
                    match spec.latent_dim {
                        Some(k) if k > g.latent_dim() => {
                            return Err(Error::config(
                                format!("{at}.latent_dim"),
                                format!("basis has only {} directions, {k} requested", g.latent_dim()),
                            ))
                        }
                        Some(k) => LatentGridField::new(g.dims(), *g.bbox(), g.base().to_vec(), g.basis()[..k].to_vec())?
                            .into(),
                        None => g.into(),
                    }
                }
                _ => return Err(Error::config(at, "grid family needs exactly one of vox_path or basis_path")),
            }
        }
        "mlp" => {
            reject_unused(spec, at, &["mlp_path"])?;
            let path = spec
                .mlp_path
                .as_ref()
                .ok_or_else(|| Error::config(format!("{at}.mlp_path"), "mlp family needs mlp_path"))?;
            let m = read_mlp(resolve(base, path))?;
            if spec.latent_dim.is_some_and(|k| k != m.latent_dim()) {
                return Err(Error::config(
                    format!("{at}.latent_dim"),
                    format!("decoder latent size is {}", m.latent_dim()),
                ));
            }
            m.into()
        }
        name => {
            let kind = PrimitiveKind::from_name(name)
                .ok_or_else(|| Error::config(format!("{at}.family"), format!("unknown family `{name}`")))?;
            reject_unused(spec, at, &["params", "center", "axis", "angle", "latent_map"])?;
            let params = spec
                .params
                .clone()
                .ok_or_else(|| Error::config(format!("{at}.params"), format!("{name} needs params")))?;
            let f = AnalyticField::new(kind, pose_of(spec, at)?, params).map_err(|e| with_config_path(e, at))?;
            let map = match (&spec.latent_map, spec.latent_dim) {
                (Some(m), Some(k)) if m.len() != k => {
                    return Err(Error::config(format!("{at}.latent_map"), "length differs from latent_dim"))
                }
                (Some(m), _) => m.clone(),
                (None, Some(k)) => {
                    if k > kind.param_count() {
                        return Err(Error::config(
                            format!("{at}.latent_dim"),
                            format!("{name} has only {} parameters", kind.param_count()),
                        ));
                    }
                    (0..k).collect()
                }
                (None, None) => Vec::new(),
            };
            f.with_latent_map(map).map_err(|e| with_config_path(e, at))?.into()
        }
    };
    let latent = match &spec.latent {
        Some(z) if z.len() != field.latent_dim() => {
            return Err(Error::config(
                format!("{at}.latent"),
                format!("has {} entries, field expects {}", z.len(), field.latent_dim()),
            ))
        }
        Some(z) if z.iter().any(|v| !v.is_finite()) => {
            return Err(Error::config(format!("{at}.latent"), "entries must be finite"))
        }
        Some(z) => z.clone(),
        None => vec![0.0; field.latent_dim()],
    };
    Ok((field, latent))
}

fn build_constraint(c: &ConstraintSpec, i: usize) -> Result<PairConstraint> {
    let at = format!("constraints[{i}]");
    let pc = match c.kind.as_str() {
        "contact_ratio" => {
            if c.d.is_some() {
                return Err(Error::config(format!("{at}.d"), "not used by contact_ratio"));
            }
            let p = c.p.ok_or_else(|| Error::config(format!("{at}.p"), "contact_ratio needs p"))?;
            PairConstraint::contact_ratio(&c.a, &c.b, p, c.epsilon.unwrap_or(DEFAULT_EPSILON))
        }
        "min_gap" => {
            if c.p.is_some() || c.epsilon.is_some() {
                return Err(Error::config(format!("{at}.p"), "min_gap takes only d"));
            }
            let d = c.d.ok_or_else(|| Error::config(format!("{at}.d"), "min_gap needs d"))?;
            PairConstraint::min_gap(&c.a, &c.b, d)
        }
        other => return Err(Error::config(format!("{at}.kind"), format!("unknown kind `{other}`"))),
    };
    pc.map_err(|e| match e {
        Error::Config { message, .. } => Error::config(at, message),
        other => other,
    })
}

/// Validate a parsed document into a run description.
pub fn build_scenario(file: ScenarioFile, base: &Path) -> Result<Scenario> {
    let [lo, hi] = file.scene.bbox;
    let bbox = BoundingBox::new(Point3::from_array(lo), Point3::from_array(hi))
        .map_err(|e| Error::config("scene.bbox", e.to_string()))?;
    if file.components.is_empty() {
        return Err(Error::config("components", "at least one component is required"));
    }
    let mut scene = Scene::new(bbox);
    for (i, c) in file.components.iter().enumerate() {
        let at = format!("components[{i}]");
        if c.name.is_empty() {
            return Err(Error::config(format!("{at}.name"), "must not be empty"));
        }
        if scene.index_of(&c.name).is_some() {
            return Err(Error::config(format!("{at}.name"), format!("duplicate component `{}`", c.name)));
        }
        let (field, latent) = build_shape(&c.shape(), base, &at)?;
        let reference = match &c.reference {
            Some(r) => {
                let (f, z) = build_shape(r, base, &format!("{at}.reference"))?;
                Some(Reference {
                    field: Arc::new(f),
                    latent: z,
                })
            }
            None => None,
        };
        scene.add_component(SceneComponent {
            name: c.name.clone(),
            field: Arc::new(field),
            latent,
            reference,
        })?;
    }
    let constraints = file
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| build_constraint(c, i))
        .collect::<Result<Vec<_>>>()?;
    crate::constraints::resolve_pairs(&scene, &constraints)?;
    file.solver.validate()?;
    let fit = Scenario::fit_config(&file);
    if !(fit.step > 0.0 && fit.step.is_finite()) {
        return Err(Error::config("fit.step", "must be positive"));
    }
    Ok(Scenario {
        scene,
        constraints,
        solver: file.solver.clone(),
        fit,
        file,
    })
}

/// Parse TOML text; `base` resolves relative file paths.
pub fn parse_scenario_str(text: &str, base: &Path, file_name: &str) -> Result<Scenario> {
    build_scenario(parse_scenario_file(text, file_name)?, base)
}

/// Deserialize without building fields.
pub fn parse_scenario_file(text: &str, file_name: &str) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
        let message = e.message().to_string();
        Error::config(
            match line {
                Some(l) => format!("{file_name}:{l}"),
                None => file_name.to_string(),
            },
            message,
        )
    })
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario_str(&text, base, &path.display().to_string())
}

pub fn scenario_to_string(file: &ScenarioFile) -> Result<String> {
    toml::to_string(file).map_err(|e| Error::config("scenario", e.to_string()))
}

pub fn write_scenario(path: impl AsRef<Path>, file: &ScenarioFile) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario_to_string(file)?).map_err(|e| Error::io(path, e))
}
