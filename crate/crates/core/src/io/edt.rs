use rayon::prelude::*;

use super::vox::{SdfVolume, VoxelMask};
use crate::error::{Error, Result};

/// Lower envelope of parabolas: `out[i] = min_q ((i - q) * h)^2 + f[q]`.
///
/// Entries of `f` equal to infinity are not sites; a line without sites
/// stays infinite.
fn squared_distance_1d(f: &[f64], h: f64, out: &mut [f64], v: &mut Vec<usize>, zbound: &mut Vec<f64>) {
    v.clear();
    zbound.clear();
    let pos = |q: usize| q as f64 * h;
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    zbound.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((fq + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
                    if s <= *zbound.last().unwrap() {
                        v.pop();
                        zbound.pop();
                    } else {
                        v.push(q);
                        zbound.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let x = pos(i);
        while k + 1 < v.len() && zbound[k + 1] < x {
            k += 1;
        }
        let d = (i as f64 - v[k] as f64) * h;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance from every voxel center to the nearest voxel with `site` set.
fn squared_edt(dims: [usize; 3], spacing: [f64; 3], site: impl Fn(usize) -> bool + Sync) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut g: Vec<f64> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|n| if site(n) { 0.0 } else { f64::INFINITY })
        .collect();

    // x lines are contiguous.
    g.par_chunks_mut(nx).for_each(|line| {
        let src = line.to_vec();
        squared_distance_1d(&src, spacing[0], line, &mut Vec::new(), &mut Vec::new());
    });
    // y lines: one z slab per task.
    g.par_chunks_mut(nx * ny).for_each(|slab| {
        let (mut src, mut dst) = (vec![0.0; ny], vec![0.0; ny]);
        let (mut v, mut zb) = (Vec::new(), Vec::new());
        for i in 0..nx {
            for j in 0..ny {
                src[j] = slab[i + nx * j];
            }
            squared_distance_1d(&src, spacing[1], &mut dst, &mut v, &mut zb);
            for j in 0..ny {
                slab[i + nx * j] = dst[j];
            }
        }
    });
    // z lines: gather each column, then scatter back.
    let columns: Vec<(usize, Vec<f64>)> = (0..nx * ny)
        .into_par_iter()
        .map(|c| {
            let src: Vec<f64> = (0..nz).map(|k| g[c + nx * ny * k]).collect();
            let mut dst = vec![0.0; nz];
            squared_distance_1d(&src, spacing[2], &mut dst, &mut Vec::new(), &mut Vec::new());
            (c, dst)
        })
        .collect();
    for (c, col) in columns {
        for (k, v) in col.into_iter().enumerate() {
            g[c + nx * ny * k] = v;
        }
    }
    g
}

pub(crate) fn check_mask(mask: &VoxelMask) -> Result<()> {
    let inside = mask.count_inside();
    if inside == 0 {
        return Err(Error::DegenerateMask("no inside voxel"));
    }
    if inside == mask.data.len() {
        return Err(Error::DegenerateMask("no outside voxel"));
    }
    Ok(())
}

/// Exact signed Euclidean distance transform of a mask.
///
/// Outside voxels hold the distance from their center to the nearest inside
/// voxel center, inside voxels minus the distance to the nearest outside one.
pub fn signed_distance_transform(mask: &VoxelMask) -> Result<SdfVolume> {
    check_mask(mask)?;
    let h = mask.header;
    let spacing = [h.spacing[0] as f64, h.spacing[1] as f64, h.spacing[2] as f64];
    let to_inside = squared_edt(h.dims, spacing, |n| mask.data[n]);
    let to_outside = squared_edt(h.dims, spacing, |n| !mask.data[n]);
    let data = mask
        .data
        .par_iter()
        .enumerate()
        .map(|(n, &inside)| {
            if inside {
                -(to_outside[n].sqrt()) as f32
            } else {
                to_inside[n].sqrt() as f32
            }
        })
        .collect();
    SdfVolume::new(h, data)
}

/// Distance transform shifted by half the smallest voxel spacing toward the
/// zero level, so values approximate the distance to the voxel-face interface
/// rather than to the nearest opposite voxel center.
pub fn interface_distance_transform(mask: &VoxelMask) -> Result<SdfVolume> {
    let mut sdf = signed_distance_transform(mask)?;
    let half = 0.5 * mask.header.spacing.iter().fold(f32::INFINITY, |a, &b| a.min(b));
    for v in &mut sdf.data {
        *v -= half * v.signum();
    }
    Ok(sdf)
}
