//! Linear shape spaces from training volumes (principal components of the
//! mean-centered grids).

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::LatentGridField;
use crate::io::SdfVolume;

/// Mean grid plus the top `k` principal directions (unit norm, by descending variance).
pub fn fit_shape_space(grids: &[SdfVolume], k: usize) -> Result<LatentGridField> {
    fit_shape_space_with_codes(grids, k).map(|(f, _)| f)
}

/// Like [`fit_shape_space`], also returning each training grid's latent code.
pub fn fit_shape_space_with_codes(grids: &[SdfVolume], k: usize) -> Result<(LatentGridField, Vec<Vec<f64>>)> {
    if grids.len() < 2 {
        return Err(Error::Precondition(format!("need at least 2 training grids, got {}", grids.len())));
    }
    if k > grids.len() - 1 {
        return Err(Error::Precondition(format!(
            "K = {k} exceeds the {} directions spanned by {} grids",
            grids.len() - 1,
            grids.len()
        )));
    }
    let h = grids[0].header;
    for g in &grids[1..] {
        for a in 0..3 {
            if g.header.dims[a] != h.dims[a] {
                return Err(Error::dim("training grid axis length", h.dims[a], g.header.dims[a]));
            }
        }
        if g.header != h {
            return Err(Error::Precondition("training grids must share spacing and origin".into()));
        }
    }
    let bbox = h.bbox()?;
    let n = h.voxel_count();
    let m = grids.len();

    let mean: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| grids.iter().map(|g| g.data[i] as f64).sum::<f64>() / m as f64)
        .collect();
    let centered: Vec<Vec<f64>> = grids
        .par_iter()
        .map(|g| g.data.iter().zip(&mean).map(|(v, mu)| *v as f64 - mu).collect())
        .collect();

    let gram = DMatrix::from_fn(m, m, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum::<f64>()
    });
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut basis = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let lambda = eig.eigenvalues[c];
        if !(lambda > 1e-12 * top) || !(lambda > 0.0) {
            return Err(Error::Precondition(format!(
                "training grids span fewer than {k} independent directions"
            )));
        }
        let v = eig.eigenvectors.column(c);
        let scale = 1.0 / lambda.sqrt();
        let mut u: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|p| (0..m).map(|i| v[i] * centered[i][p]).sum::<f64>() * scale)
            .collect();
        // Fix the sign so the largest-magnitude entry is positive.
        let (imax, _) = u
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
        if u[imax] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push(u);
    }

    let basis32: Vec<Vec<f32>> = basis.iter().map(|u| u.iter().map(|&x| x as f32).collect()).collect();
    let base32: Vec<f32> = mean.iter().map(|&x| x as f32).collect();
    // Codes project onto the stored (rounded) grids, which is what evaluation uses.
    let codes = grids
        .iter()
        .map(|g| {
            basis32
                .iter()
                .map(|b| {
                    let norm2: f64 = b.iter().map(|&x| (x as f64) * (x as f64)).sum();
                    g.data
                        .iter()
                        .zip(&base32)
                        .zip(b)
                        .map(|((v, mu), bx)| (*v as f64 - *mu as f64) * *bx as f64)
                        .sum::<f64>()
                        / norm2
                })
                .collect()
        })
        .collect();
    Ok((LatentGridField::new(h.dims, bbox, base32, basis32)?, codes))
}
