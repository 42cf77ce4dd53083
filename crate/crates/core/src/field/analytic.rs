use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point3, Pose};

/// Size parameters never drop below this, whatever the latent offsets say.
const MIN_SIZE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    /// `[radius]`
    Sphere,
    /// `[semi_x, semi_y, semi_z]`
    Ellipsoid,
    /// `[radius, half_length]`, axis along local z.
    Capsule,
    /// `[half_x, half_y, half_z, corner_radius]`; half extents include the rounding.
    RoundedBox,
}

impl PrimitiveKind {
    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Ellipsoid => "ellipsoid",
            PrimitiveKind::Capsule => "capsule",
            PrimitiveKind::RoundedBox => "rounded_box",
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            PrimitiveKind::Sphere => 1,
            PrimitiveKind::Ellipsoid => 3,
            PrimitiveKind::Capsule => 2,
            PrimitiveKind::RoundedBox => 4,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sphere" => PrimitiveKind::Sphere,
            "ellipsoid" => PrimitiveKind::Ellipsoid,
            "capsule" => PrimitiveKind::Capsule,
            "rounded_box" => PrimitiveKind::RoundedBox,
            _ => return None,
        })
    }
}

/// A posed closed-form primitive. Latent component `k` is added to shape
/// parameter `latent_map[k]`.
///
/// Sphere, capsule and rounded box return exact Euclidean distances. The
/// ellipsoid returns `(|p / a| - 1) * min(a)`, which has the correct sign,
/// vanishes exactly on the surface and never exceeds the true distance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticField {
    kind: PrimitiveKind,
    pose: Pose,
    base: Vec<f64>,
    latent_map: Vec<usize>,
}

impl AnalyticField {
    pub fn new(kind: PrimitiveKind, pose: Pose, params: Vec<f64>) -> Result<Self> {
        if params.len() != kind.param_count() {
            return Err(Error::dim("primitive parameters", kind.param_count(), params.len()));
        }
        if params.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Precondition(format!(
                "{} parameters must be positive, got {params:?}",
                kind.name()
            )));
        }
        if kind == PrimitiveKind::RoundedBox && params[3] > params[0].min(params[1]).min(params[2]) {
            return Err(Error::Precondition(
                "rounded box corner radius exceeds the smallest half extent".into(),
            ));
        }
        Ok(AnalyticField {
            kind,
            pose,
            base: params,
            latent_map: Vec::new(),
        })
    }

    pub fn sphere(center: Point3, radius: f64) -> Self {
        Self::new(PrimitiveKind::Sphere, Pose::translation(center), vec![radius])
            .expect("sphere radius must be positive")
    }

    pub fn ellipsoid(pose: Pose, semi_axes: [f64; 3]) -> Result<Self> {
        Self::new(PrimitiveKind::Ellipsoid, pose, semi_axes.to_vec())
    }

    pub fn capsule(pose: Pose, radius: f64, half_length: f64) -> Result<Self> {
        Self::new(PrimitiveKind::Capsule, pose, vec![radius, half_length])
    }

    pub fn rounded_box(pose: Pose, half_extents: [f64; 3], corner: f64) -> Result<Self> {
        let mut p = half_extents.to_vec();
        p.push(corner);
        Self::new(PrimitiveKind::RoundedBox, pose, p)
    }

    /// Declare which shape parameters the latent components offset.
    pub fn with_latent_map(mut self, map: Vec<usize>) -> Result<Self> {
        let n = self.kind.param_count();
        for (i, &m) in map.iter().enumerate() {
            if m >= n {
                return Err(Error::Precondition(format!(
                    "latent component {i} maps to parameter {m}, but {} has {n}",
                    self.kind.name()
                )));
            }
            if map[..i].contains(&m) {
                return Err(Error::Precondition(format!("parameter {m} mapped twice")));
            }
        }
        self.latent_map = map;
        Ok(self)
    }

    /// Offset every shape parameter (latent dimension equals parameter count).
    pub fn with_full_latent(self) -> Self {
        let n = self.kind.param_count();
        self.with_latent_map((0..n).collect()).expect("identity map is valid")
    }

    pub fn kind(&self) -> PrimitiveKind {
        self.kind
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn base_params(&self) -> &[f64] {
        &self.base
    }

    pub fn latent_map(&self) -> &[usize] {
        &self.latent_map
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_map.len()
    }

    /// Shape parameters at latent `z` after clamping, plus which ones were clamped.
    pub fn params(&self, z: &[f64]) -> ([f64; 4], [bool; 4]) {
        let mut raw = [0.0; 4];
        raw[..self.base.len()].copy_from_slice(&self.base);
        for (zk, &m) in z.iter().zip(&self.latent_map) {
            raw[m] += zk;
        }
        let mut out = raw;
        let mut clamped = [false; 4];
        let n = self.kind.param_count();
        for i in 0..n {
            if out[i] < MIN_SIZE {
                out[i] = MIN_SIZE;
                clamped[i] = true;
            }
        }
        if self.kind == PrimitiveKind::RoundedBox {
            let hmin = out[0].min(out[1]).min(out[2]);
            if out[3] > hmin {
                out[3] = hmin;
                clamped[3] = true;
            }
        }
        (out, clamped)
    }

    pub(crate) fn value(&self, z: &[f64], x: Point3) -> f64 {
        let (params, _) = self.params(z);
        local_eval(self.kind, &params, self.pose.to_local(x)).0
    }

    pub(crate) fn grad_latent(&self, z: &[f64], x: Point3) -> Vec<f64> {
        let p = self.prepare(z);
        let mut g = vec![0.0; z.len()];
        p.accumulate(&mut g, x, 1.0);
        g
    }

    pub(crate) fn grad_spatial(&self, z: &[f64], x: Point3) -> Point3 {
        let (params, _) = self.params(z);
        let (_, _, dl) = local_eval(self.kind, &params, self.pose.to_local(x));
        self.pose.rotate_to_world(dl)
    }

    pub(crate) fn prepare(&self, z: &[f64]) -> PreparedPrimitive<'_> {
        let (params, clamped) = self.params(z);
        PreparedPrimitive {
            field: self,
            params,
            clamped,
        }
    }
}

pub(crate) struct PreparedPrimitive<'a> {
    field: &'a AnalyticField,
    params: [f64; 4],
    clamped: [bool; 4],
}

impl PreparedPrimitive<'_> {
    pub(crate) fn value(&self, x: Point3) -> f64 {
        local_eval(self.field.kind, &self.params, self.field.pose.to_local(x)).0
    }

    pub(crate) fn accumulate(&self, g: &mut [f64], x: Point3, weight: f64) {
        let (_, dparams, _) = local_eval(self.field.kind, &self.params, self.field.pose.to_local(x));
        for (gk, &m) in g.iter_mut().zip(&self.field.latent_map) {
            if !self.clamped[m] {
                *gk += weight * dparams[m];
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Value, d/dparams and d/dp of a primitive in its local frame.
fn local_eval(kind: PrimitiveKind, s: &[f64; 4], p: Point3) -> (f64, [f64; 4], Point3) {
    match kind {
        PrimitiveKind::Sphere => {
            let n = p.norm();
            (n - s[0], [-1.0, 0.0, 0.0, 0.0], p.normalized())
        }
        PrimitiveKind::Ellipsoid => {
            let a = [s[0], s[1], s[2]];
            let q = Point3::new(p.x / a[0], p.y / a[1], p.z / a[2]);
            let g = q.norm();
            let (m_idx, m) = a
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
            let value = (g - 1.0) * m;
            let mut dparams = [0.0; 4];
            let mut dp = Point3::ZERO;
            if g > 0.0 {
                for i in 0..3 {
                    dparams[i] = -q[i] * q[i] / (a[i] * g) * m;
                }
                dp = Point3::new(q.x / (a[0] * g), q.y / (a[1] * g), q.z / (a[2] * g)) * m;
            }
            dparams[m_idx] += g - 1.0;
            (value, dparams, dp)
        }
        PrimitiveKind::Capsule => {
            let (r, hl) = (s[0], s[1]);
            let cz = p.z.clamp(-hl, hl);
            let q = Point3::new(p.x, p.y, p.z - cz);
            let n = q.norm();
            let mut dparams = [-1.0, 0.0, 0.0, 0.0];
            if n > 0.0 {
                if p.z > hl {
                    dparams[1] = -q.z / n;
                } else if p.z < -hl {
                    dparams[1] = q.z / n;
                }
            }
            (n - r, dparams, q.normalized())
        }
        PrimitiveKind::RoundedBox => {
            let r = s[3];
            let h = Point3::new(s[0], s[1], s[2]);
            let ap = p.abs();
            let q = ap - h + Point3::splat(r);
            let o = q.max(Point3::ZERO);
            let len = o.norm();
            let qmax = q.max_component();
            let value = len + qmax.min(0.0) - r;
            let mut dparams = [0.0; 4];
            let dp;
            if len > 0.0 {
                for i in 0..3 {
                    dparams[i] = -o[i] / len;
                }
                dparams[3] = (o.x + o.y + o.z) / len - 1.0;
                dp = Point3::new(sign(p.x) * o.x, sign(p.y) * o.y, sign(p.z) * o.z) / len;
            } else {
                let j = if q.x >= q.y && q.x >= q.z {
                    0
                } else if q.y >= q.z {
                    1
                } else {
                    2
                };
                dparams[j] = -1.0;
                let mut d = [0.0; 3];
                d[j] = sign(p[j]);
                dp = Point3::from_array(d);
            }
            (value, dparams, dp)
        }
    }
}
