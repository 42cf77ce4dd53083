//! Seeded point populations: uniform mining samples and near-surface data
//! samples with reference distances.
//!
//! Every point draws from its own ChaCha stream position keyed by
//! `(seed, purpose, index)`, so results do not depend on how work is split
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geom::{BoundingBox, Point3};

pub type RngSeed = u64;

/// Default fraction of data samples drawn near the surface.
pub const DEFAULT_NEAR_FRACTION: f64 = 0.9;
/// Default Gaussian band width around the surface, in scene units.
pub const DEFAULT_BAND_SIGMA: f64 = 0.02;

const NEWTON_STEPS: usize = 10;
const NEWTON_TOL: f64 = 1e-4;
const PROJECTION_ATTEMPTS: usize = 64;

/// Stream ids separating independent uses of one seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Uniform = 1,
    NearSurface = 2,
    MeshSurface = 3,
}

/// RNG positioned at the start of the block reserved for `index`.
pub(crate) fn keyed_rng(seed: RngSeed, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    // 2^16 words per index: far more than any per-point draw needs.
    rng.set_word_pos((index as u128) << 16);
    rng
}

/// Mix a seed with a counter (SplitMix64 finalizer) to derive child seeds.
pub fn derive_seed(seed: RngSeed, salt: u64) -> RngSeed {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform_in(rng: &mut ChaCha8Rng, bbox: &BoundingBox) -> Point3 {
    let e = bbox.extent();
    Point3::new(
        bbox.min.x + e.x * rng.random::<f64>(),
        bbox.min.y + e.y * rng.random::<f64>(),
        bbox.min.z + e.z * rng.random::<f64>(),
    )
}

/// `n` points uniformly distributed in `bbox`.
pub fn uniform_points(bbox: &BoundingBox, n: usize, seed: RngSeed) -> Vec<Point3> {
    (0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let mut rng = keyed_rng(seed, Stream::Uniform, i as u64);
            bbox.clamp(uniform_in(&mut rng, bbox))
        })
        .collect()
}

/// Reference sample for the data term: a location and its target distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSample {
    pub point: Point3,
    pub distance: f64,
    /// The perturbed point left the box and was clamped back onto it.
    pub clamped: bool,
}

/// Project `x` onto the zero set with Newton steps along the spatial gradient.
pub(crate) fn project_to_surface(field: &Field, z: &[f64], mut x: Point3) -> Option<Point3> {
    for _ in 0..=NEWTON_STEPS {
        let f = field.eval_unchecked(z, x);
        if !f.is_finite() {
            return None;
        }
        if f.abs() < NEWTON_TOL {
            return Some(x);
        }
        let g = field.grad_spatial(z, x).ok()?;
        let g2 = g.norm_squared();
        if !(g2 > 1e-12) {
            return None;
        }
        x = x - g * (f / g2);
    }
    None
}

/// Check that the field changes sign somewhere in the box.
pub(crate) fn has_zero_crossing(field: &Field, z: &[f64], bbox: &BoundingBox, seed: RngSeed) -> bool {
    let probes = uniform_points(bbox, 4096, derive_seed(seed, 0xC0FFEE));
    let lattice = 16;
    let mut neg = false;
    let mut pos = false;
    let lattice_pts = (0..lattice * lattice * lattice).map(|i| {
        bbox.lattice_point([lattice; 3], i % lattice, (i / lattice) % lattice, i / (lattice * lattice))
    });
    for p in probes.into_iter().chain(lattice_pts) {
        let v = field.eval_unchecked(z, p);
        neg |= v < 0.0;
        pos |= v > 0.0;
        if neg && pos {
            return true;
        }
    }
    false
}

/// Data samples for one object: a `near_fraction` share perturbed off the
/// surface by Gaussian offsets of stddev `band_sigma`, the rest uniform in
/// `bbox`. Each sample's target is the reference field's value at its point.
pub fn near_surface_samples(
    reference: &Field,
    z: &[f64],
    bbox: &BoundingBox,
    n: usize,
    near_fraction: f64,
    band_sigma: f64,
    seed: RngSeed,
) -> Result<Vec<DataSample>> {
    if z.len() != reference.latent_dim() {
        return Err(Error::dim("latent vector", reference.latent_dim(), z.len()));
    }
    if !(0.0..=1.0).contains(&near_fraction) {
        return Err(Error::Precondition(format!("near_fraction {near_fraction} outside [0, 1]")));
    }
    if !(band_sigma > 0.0) {
        return Err(Error::Precondition(format!("band_sigma must be positive, got {band_sigma}")));
    }
    let n_near = (near_fraction * n as f64).round() as usize;
    if n_near > 0 && !has_zero_crossing(reference, z, bbox, seed) {
        return Err(Error::DegenerateSurface);
    }
    let samples: Vec<Option<DataSample>> = (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let mut rng = keyed_rng(seed, Stream::NearSurface, i as u64);
            let (point, clamped) = if i < n_near {
                let surface = (0..PROJECTION_ATTEMPTS)
                    .find_map(|_| project_to_surface(reference, z, uniform_in(&mut rng, bbox)))?;
                let offset: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                let p = surface + Point3::from_array(offset) * band_sigma;
                let c = bbox.clamp(p);
                (c, c != p)
            } else {
                (uniform_in(&mut rng, bbox), false)
            };
            let point = bbox.clamp(point);
            Some(DataSample {
                point,
                distance: reference.eval_unchecked(z, point),
                clamped,
            })
        })
        .collect();
    samples
        .into_iter()
        .map(|s| s.ok_or(Error::DegenerateSurface))
        .collect()
}
