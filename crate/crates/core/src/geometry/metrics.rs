//! Mesh and field comparison metrics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::MeshIndex;
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geom::{BoundingBox, Point3};
use crate::sampling::{keyed_rng, uniform_points, RngSeed, Stream};

/// Area-weighted surface sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Point3,
    pub triangle: usize,
}

fn require_nonempty(mesh: &TriangleMesh, what: &str) -> Result<()> {
    if mesh.is_empty() {
        return Err(Error::Precondition(format!("{what} mesh is empty")));
    }
    Ok(())
}

/// `n` points distributed uniformly by area over the mesh surface.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: RngSeed) -> Result<Vec<SurfaceSample>> {
    require_nonempty(mesh, "sampled")?;
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Precondition("sampled mesh has zero area".into()));
    }
    Ok((0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let mut rng = keyed_rng(seed, Stream::MeshSurface, i as u64);
            let u = rng.random::<f64>() * total;
            let t = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            let [a, b, c] = mesh.corners(t);
            SurfaceSample {
                point: a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2),
                triangle: t,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChamferMode {
    #[default]
    Absolute,
    Squared,
}

fn one_way(samples: &[SurfaceSample], target: &MeshIndex<'_>, mode: ChamferMode) -> f64 {
    let sum: f64 = samples
        .par_chunks(2048)
        .map(|c| {
            c.iter()
                .map(|s| {
                    let d = target.distance(s.point);
                    match mode {
                        ChamferMode::Absolute => d,
                        ChamferMode::Squared => d * d,
                    }
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    sum / samples.len() as f64
}

/// Symmetric mean nearest-surface distance between two meshes.
pub fn chamfer_distance(a: &TriangleMesh, b: &TriangleMesh, n_points: usize, seed: RngSeed) -> Result<f64> {
    chamfer_distance_with(a, b, n_points, seed, ChamferMode::Absolute)
}

pub fn chamfer_distance_with(
    a: &TriangleMesh,
    b: &TriangleMesh,
    n_points: usize,
    seed: RngSeed,
    mode: ChamferMode,
) -> Result<f64> {
    require_nonempty(a, "first")?;
    require_nonempty(b, "second")?;
    if n_points == 0 {
        return Err(Error::Precondition("chamfer distance needs n_points >= 1".into()));
    }
    // Both meshes use the same seed so swapping the arguments is exact.
    let sa = sample_surface(a, n_points, seed)?;
    let sb = sample_surface(b, n_points, seed)?;
    let ab = one_way(&sa, &MeshIndex::new(b), mode);
    let ba = one_way(&sb, &MeshIndex::new(a), mode);
    Ok(0.5 * (ab + ba))
}

fn normal_one_way(samples: &[SurfaceSample], source: &TriangleMesh, target: &MeshIndex<'_>) -> f64 {
    let parts: Vec<f64> = samples
        .par_chunks(2048)
        .map(|c| {
            c.iter()
                .map(|s| {
                    let n = source.face_normal(s.triangle);
                    let hit = target.nearest(s.point).expect("nonempty target");
                    n.dot(target.mesh().face_normal(hit.triangle)).abs()
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum::<f64>() / samples.len() as f64
}

/// Mean `|n_sample . n_nearest|`, symmetrized over both directions.
pub fn normal_consistency(a: &TriangleMesh, b: &TriangleMesh, n_points: usize, seed: RngSeed) -> Result<f64> {
    require_nonempty(a, "first")?;
    require_nonempty(b, "second")?;
    if n_points == 0 {
        return Err(Error::Precondition("normal consistency needs n_points >= 1".into()));
    }
    let sa = sample_surface(a, n_points, seed)?;
    let sb = sample_surface(b, n_points, seed)?;
    let ab = normal_one_way(&sa, a, &MeshIndex::new(b));
    let ba = normal_one_way(&sb, b, &MeshIndex::new(a));
    Ok(0.5 * (ab + ba))
}

/// `|area(a) - area(b)| / area(b)`.
pub fn area_difference(a: &TriangleMesh, b: &TriangleMesh) -> Result<f64> {
    let ab = b.surface_area();
    if !(ab > 0.0) {
        return Err(Error::Precondition("reference mesh has zero area".into()));
    }
    Ok((a.surface_area() - ab).abs() / ab)
}

/// Contact ratio `area(S_AB) / (area(A) + area(B))`, where `S_AB` is the part
/// of A within `epsilon` of B, estimated from area-weighted samples on A.
pub fn mesh_contact_ratio(
    a: &TriangleMesh,
    b: &TriangleMesh,
    epsilon: f64,
    samples_per_area: f64,
    seed: RngSeed,
) -> Result<f64> {
    require_nonempty(a, "first")?;
    require_nonempty(b, "second")?;
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(samples_per_area > 0.0 && samples_per_area.is_finite()) {
        return Err(Error::Precondition("samples_per_area must be positive".into()));
    }
    let (area_a, area_b) = (a.surface_area(), b.surface_area());
    let n = ((area_a * samples_per_area).ceil() as usize).max(1);
    let samples = sample_surface(a, n, seed)?;
    let index = MeshIndex::new(b);
    let close = samples
        .par_iter()
        .with_min_len(1024)
        .filter(|s| index.distance(s.point) < epsilon)
        .count();
    Ok(close as f64 / n as f64 * area_a / (area_a + area_b))
}

/// Mean of both directions of [`mesh_contact_ratio`].
pub fn mesh_contact_ratio_symmetric(
    a: &TriangleMesh,
    b: &TriangleMesh,
    epsilon: f64,
    samples_per_area: f64,
    seed: RngSeed,
) -> Result<f64> {
    let ab = mesh_contact_ratio(a, b, epsilon, samples_per_area, seed)?;
    let ba = mesh_contact_ratio(b, a, epsilon, samples_per_area, seed)?;
    Ok(0.5 * (ab + ba))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactStats {
    pub count: usize,
    pub area: f64,
}

/// Vertices of `a` closer than `epsilon` to `b`, and the area of the
/// triangles of `a` whose three vertices all qualify.
pub fn contact_vertex_stats(a: &TriangleMesh, b: &TriangleMesh, epsilon: f64) -> ContactStats {
    if a.is_empty() || b.is_empty() {
        return ContactStats::default();
    }
    let index = MeshIndex::new(b);
    let close: Vec<bool> = a
        .vertices
        .par_iter()
        .with_min_len(512)
        .map(|&v| index.distance(v) < epsilon)
        .collect();
    let area = (0..a.triangles.len())
        .filter(|&t| a.triangles[t].iter().all(|&v| close[v]))
        .map(|t| a.triangle_area(t))
        .sum();
    ContactStats {
        count: close.iter().filter(|c| **c).count(),
        area,
    }
}

/// Box volume times the fraction of uniform samples inside both objects.
pub fn intersection_volume(
    fa: &Field,
    za: &[f64],
    fb: &Field,
    zb: &[f64],
    bbox: &BoundingBox,
    n_points: usize,
    seed: RngSeed,
) -> Result<f64> {
    if n_points == 0 {
        return Err(Error::Precondition("intersection volume needs n_points >= 1".into()));
    }
    let (ea, eb) = (fa.prepare(za)?, fb.prepare(zb)?);
    let points = uniform_points(bbox, n_points, seed);
    let inside = points
        .par_iter()
        .with_min_len(1024)
        .filter(|&&p| ea.value(p) < 0.0 && eb.value(p) < 0.0)
        .count();
    Ok(bbox.volume() * inside as f64 / n_points as f64)
}

/// Minimum of `f_A + f_B` over a `resolution^3` lattice spanning `bbox`.
pub fn min_pair_gap(
    fa: &Field,
    za: &[f64],
    fb: &Field,
    zb: &[f64],
    bbox: &BoundingBox,
    resolution: usize,
) -> Result<f64> {
    if resolution < 16 {
        return Err(Error::Precondition(format!("resolution must be >= 16, got {resolution}")));
    }
    let (ea, eb) = (fa.prepare(za)?, fb.prepare(zb)?);
    let n = resolution;
    Ok((0..n * n * n)
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let p = bbox.lattice_point([n; 3], i % n, (i / n) % n, i / (n * n));
            ea.value(p) + eb.value(p)
        })
        .reduce(|| f64::INFINITY, f64::min))
}
