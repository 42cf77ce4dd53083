use nalgebra::{DMatrix, SymmetricEigen};
use pairsdf::io::{SdfVolume, VolumeHeader};
use pairsdf::solver::{fit_shape_space, fit_shape_space_with_codes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn header() -> VolumeHeader {
    VolumeHeader::new([4, 3, 3], [0.25; 3], [0.0; 3]).unwrap()
}

/// Random grids built from a few planted directions with distinct variances.
fn planted(count: usize, seed: u64) -> Vec<SdfVolume> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = header().voxel_count();
    let dirs: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let scales = [3.0, 2.0, 1.0, 0.5];
    (0..count)
        .map(|_| {
            let coeffs: Vec<f64> = scales.iter().map(|s| s * rng.random_range(-1.0..1.0)).collect();
            let data = (0..n)
                .map(|i| (0.3 + (0..4).map(|k| coeffs[k] * dirs[k][i]).sum::<f64>() + 0.01 * rng.random_range(-1.0..1.0)) as f32)
                .collect();
            SdfVolume::new(header(), data).unwrap()
        })
        .collect()
}

#[test]
fn basis_matches_covariance_eigenvectors() {
    let grids = planted(30, 3);
    let n = header().voxel_count();
    let m = grids.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| grids.iter().map(|g| g.data[i] as f64).sum::<f64>() / m).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        grids.iter().map(|g| (g.data[i] as f64 - mean[i]) * (g.data[j] as f64 - mean[j])).sum::<f64>() / m
    });
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let k = 4;
    let f = fit_shape_space(&grids, k).unwrap();
    for (i, &c) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(c);
        let u = &f.basis()[i];
        let norm: f64 = u.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| *a as f64 * b).sum::<f64>() / norm;
        assert!((dot.abs() - 1.0).abs() < 1e-4, "direction {i}: |cos| = {}", dot.abs());
    }
    for (a, b) in f.base().iter().zip(&mean) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}

#[test]
fn basis_is_orthonormal_and_sign_fixed() {
    let f = fit_shape_space(&planted(12, 8), 5).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let d: f64 = f.basis()[i].iter().zip(&f.basis()[j]).map(|(a, b)| *a as f64 * *b as f64).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((d - want).abs() < 1e-6, "{i} {j}: {d}");
        }
        let largest = f.basis()[i].iter().copied().fold(0.0f32, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(largest > 0.0);
    }
}

#[test]
fn codes_reconstruct_within_the_planted_span() {
    let grids = planted(20, 5);
    let (f, codes) = fit_shape_space_with_codes(&grids, 4).unwrap();
    for (g, z) in grids.iter().zip(&codes) {
        let r = f.materialize(z).unwrap();
        let err = r.iter().zip(&g.data).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(err < 0.05, "{err}");
    }
}
