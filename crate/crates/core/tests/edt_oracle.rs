use pairsdf::io::{signed_distance_transform, VolumeHeader, VoxelMask};
use pairsdf::oracle::brute_force_edt;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(seed: u64, dims: [usize; 3]) -> VoxelMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fill = rng.random_range(0.05..0.95);
    let header = VolumeHeader::new(dims, [1.0; 3], [0.0; 3]).unwrap();
    let data = (0..header.voxel_count()).map(|_| rng.random_bool(fill)).collect();
    VoxelMask::new(header, data).unwrap()
}

#[test]
fn fast_transform_equals_brute_force_on_100_masks() {
    for seed in 0..100 {
        let m = random_mask(seed, [16; 3]);
        let fast = signed_distance_transform(&m).unwrap();
        let slow = brute_force_edt(&m).unwrap();
        assert_eq!(fast.data, slow.data, "seed {seed}");
    }
}

#[test]
fn single_voxel_and_degenerate_masks() {
    let h = VolumeHeader::new([7, 6, 5], [0.5, 1.0, 2.0], [0.0; 3]).unwrap();
    let one = VoxelMask::from_fn(h, |p| p.x == 1.5 && p.y == 2.0 && p.z == 4.0).unwrap();
    assert_eq!(one.count_inside(), 1);
    assert_eq!(signed_distance_transform(&one).unwrap().data, brute_force_edt(&one).unwrap().data);
    let full = VoxelMask::from_fn(h, |_| true).unwrap();
    assert!(signed_distance_transform(&full).is_err());
    assert!(brute_force_edt(&full).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn anisotropic_masks_match(seed in any::<u64>(), nx in 2usize..9, ny in 2usize..9, nz in 2usize..9) {
        let m = random_mask(seed, [nx, ny, nz]);
        match (signed_distance_transform(&m), brute_force_edt(&m)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.data, b.data),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "disagree: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn same_sign_neighbours_are_lipschitz(seed in any::<u64>()) {
        let m = random_mask(seed, [10, 9, 8]);
        if let Ok(s) = signed_distance_transform(&m) {
            let h = s.header;
            let close = |a: f32, b: f32| (a > 0.0) != (b > 0.0) || (a - b).abs() <= 1.0 + 1e-6;
            for k in 0..h.dims[2] {
                for j in 0..h.dims[1] {
                    for i in 0..h.dims[0] {
                        let v = s.get(i, j, k);
                        if i + 1 < h.dims[0] { prop_assert!(close(s.get(i + 1, j, k), v)); }
                        if j + 1 < h.dims[1] { prop_assert!(close(s.get(i, j + 1, k), v)); }
                        if k + 1 < h.dims[2] { prop_assert!(close(s.get(i, j, k + 1), v)); }
                    }
                }
            }
        }
    }
}
