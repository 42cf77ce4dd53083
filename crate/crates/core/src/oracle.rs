//! Brute-force and closed-form references for tests and the `oracle-check`
//! command. Nothing in the solve path calls into this module.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geom::BoundingBox;
use crate::io::{check_mask, SdfVolume, VoxelMask};

/// Largest mask the exhaustive transform accepts.
pub const BRUTE_FORCE_MAX_VOXELS: usize = 48 * 48 * 48;

/// Contact-ratio estimator evaluated at the centers of a `resolution^3` cell lattice.
pub fn dense_contact_ratio(
    fa: &Field,
    za: &[f64],
    fb: &Field,
    zb: &[f64],
    bbox: &BoundingBox,
    resolution: usize,
    epsilon: f64,
) -> Result<f64> {
    if resolution < 64 {
        return Err(Error::Precondition(format!("resolution must be >= 64, got {resolution}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let (ea, eb) = (fa.prepare(za)?, fb.prepare(zb)?);
    let n = resolution;
    let h = bbox.extent() / n as f64;
    let (na, nb, both) = (0..n * n)
        .into_par_iter()
        .map(|jk| {
            let (j, k) = (jk % n, jk / n);
            let mut c = (0usize, 0usize, 0usize);
            for i in 0..n {
                let p = bbox.min
                    + crate::geom::Point3::new(
                        (i as f64 + 0.5) * h.x,
                        (j as f64 + 0.5) * h.y,
                        (k as f64 + 0.5) * h.z,
                    );
                let a = ea.value(p).abs() < epsilon;
                let b = eb.value(p).abs() < epsilon;
                c.0 += a as usize;
                c.1 += b as usize;
                c.2 += (a && b) as usize;
            }
            c
        })
        .reduce(|| (0, 0, 0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2));
    if na + nb == 0 {
        return Ok(0.0);
    }
    Ok(both as f64 / (na + nb) as f64)
}

/// Exhaustive signed distance transform: for each voxel, the distance to the
/// nearest voxel of the opposite label, negative inside.
pub fn brute_force_edt(mask: &VoxelMask) -> Result<SdfVolume> {
    let h = mask.header;
    if h.voxel_count() > BRUTE_FORCE_MAX_VOXELS {
        return Err(Error::Precondition(format!(
            "brute-force transform limited to {BRUTE_FORCE_MAX_VOXELS} voxels, mask has {}",
            h.voxel_count()
        )));
    }
    check_mask(mask)?;
    let s = [h.spacing[0] as f64, h.spacing[1] as f64, h.spacing[2] as f64];
    // Only voxels with an opposite-label face neighbor can be nearest.
    let boundary: Vec<(usize, [usize; 3])> = (0..h.voxel_count())
        .filter(|&n| {
            let c = h.coords(n);
            (0..3).any(|a| {
                [-1isize, 1].iter().any(|&d| {
                    let q = c[a] as isize + d;
                    if q < 0 || q >= h.dims[a] as isize {
                        return false;
                    }
                    let mut cc = c;
                    cc[a] = q as usize;
                    mask.data[h.index(cc[0], cc[1], cc[2])] != mask.data[n]
                })
            })
        })
        .map(|n| (n, h.coords(n)))
        .collect();
    let data = (0..h.voxel_count())
        .into_par_iter()
        .map(|n| {
            let c = h.coords(n);
            let label = mask.data[n];
            let mut best = f64::INFINITY;
            for &(m, q) in &boundary {
                if mask.data[m] == label {
                    continue;
                }
                let d = |a: usize| (c[a] as f64 - q[a] as f64) * s[a];
                let (dx, dy, dz) = (d(0), d(1), d(2));
                best = best.min(dx * dx + dy * dy + dz * dz);
            }
            let v = best.sqrt() as f32;
            if label {
                -v
            } else {
                v
            }
        })
        .collect();
    SdfVolume::new(h, data)
}

/// Closed-form quantities for two spheres whose centers are `center_distance` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePairOracle {
    pub gap: f64,
    pub intersection_volume: f64,
    /// Volume of the overlap of both epsilon shells.
    pub band_overlap_volume: f64,
    pub band_volume_a: f64,
    pub band_volume_b: f64,
    /// Continuum limit of the sampled contact-ratio estimator.
    pub band_ratio: f64,
}

/// Intersection volume of two balls.
pub fn lens_volume(r1: f64, r2: f64, d: f64) -> f64 {
    if r1 <= 0.0 || r2 <= 0.0 || d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return 4.0 / 3.0 * PI * r * r * r;
    }
    let s = r1 + r2 - d;
    PI * s * s * (d * d + 2.0 * d * (r1 + r2) - 3.0 * (r1 - r2) * (r1 - r2)) / (12.0 * d)
}

fn ball(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        4.0 / 3.0 * PI * r * r * r
    }
}

pub fn analytic_sphere_pair(r1: f64, r2: f64, center_distance: f64, epsilon: f64) -> Result<SpherePairOracle> {
    if !(r1 > 0.0 && r2 > 0.0) {
        return Err(Error::Precondition("sphere radii must be positive".into()));
    }
    if !(center_distance >= 0.0 && epsilon > 0.0) {
        return Err(Error::Precondition("distance must be >= 0 and epsilon > 0".into()));
    }
    let d = center_distance;
    // Shell = ball(r + eps) minus ball(r - eps); expand the product of indicators.
    let (a_out, a_in) = (r1 + epsilon, (r1 - epsilon).max(0.0));
    let (b_out, b_in) = (r2 + epsilon, (r2 - epsilon).max(0.0));
    let band_overlap =
        lens_volume(a_out, b_out, d) - lens_volume(a_in, b_out, d) - lens_volume(a_out, b_in, d) + lens_volume(a_in, b_in, d);
    let band_a = ball(a_out) - ball(a_in);
    let band_b = ball(b_out) - ball(b_in);
    Ok(SpherePairOracle {
        gap: d - r1 - r2,
        intersection_volume: lens_volume(r1, r2, d),
        band_overlap_volume: band_overlap,
        band_volume_a: band_a,
        band_volume_b: band_b,
        band_ratio: band_overlap / (band_a + band_b),
    })
}
