use std::path::Path;

use pairsdf::constraints::{band_counts, estimate_contact_ratio};
use pairsdf::field::{AnalyticField, Field, MlpField};
use pairsdf::geometry::{chamfer_distance, marching_cubes, TriangleMesh};
use pairsdf::io::{decode_vox, encode_mask, encode_sdf, parse_scenario_str, SdfVolume, Volume, VolumeHeader, VoxelMask};
use pairsdf::sampling::uniform_points;
use pairsdf::{BoundingBox, Point3, Pose};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn values(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-0.3..0.3f64, n), prop::collection::vec(-0.3..0.3f64, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contact_ratio_bounds_and_symmetry((a, b) in values(200), eps in 0.001..0.2f64) {
        let r = estimate_contact_ratio(&a, &b, eps).unwrap();
        prop_assert!((0.0..=0.5).contains(&r));
        prop_assert_eq!(r, estimate_contact_ratio(&b, &a, eps).unwrap());
        let (_, _, both) = band_counts(&a, &b, eps);
        let (_, _, wider) = band_counts(&a, &b, 2.0 * eps);
        prop_assert!(wider >= both);
    }

    #[test]
    fn primitive_signs_match_containment(p in point(), r in 0.2..1.5f64, h in prop::array::uniform3(0.2..1.0f64), angle in -3.0..3.0f64) {
        let s: Field = AnalyticField::sphere(Point3::new(0.1, -0.2, 0.3), r).into();
        let inside = p.distance(Point3::new(0.1, -0.2, 0.3)) < r;
        let v = s.eval(&[], p).unwrap();
        prop_assume!(v.abs() > 1e-9);
        prop_assert_eq!(v < 0.0, inside);

        let pose = Pose::from_axis_angle(Point3::new(0.0, 0.0, 1.0), angle, Point3::ZERO);
        let c = 0.1;
        let b: Field = AnalyticField::rounded_box(pose, h, c).unwrap().into();
        let l = pose.to_local(p);
        let gap = |x: f64, e: f64| (x.abs() - (e - c)).max(0.0);
        let in_box = Point3::new(gap(l.x, h[0]), gap(l.y, h[1]), gap(l.z, h[2])).norm() < c;
        let v = b.eval(&[], p).unwrap();
        prop_assume!(v.abs() > 1e-9);
        prop_assert_eq!(v < 0.0, in_box);
    }

    #[test]
    fn batch_evaluation_is_bitwise_pointwise(seed in any::<u64>(), pts in prop::collection::vec(point(), 1..40)) {
        let f: Field = MlpField::random(3, &[8, 8], seed, 0.5).unwrap().into();
        let z = [0.05, -0.02, 0.1];
        let batch = f.eval_batch(&z, &pts).unwrap();
        for (p, v) in pts.iter().zip(batch) {
            prop_assert_eq!(v.to_bits(), f.eval(&z, *p).unwrap().to_bits());
        }
    }

    #[test]
    fn uniform_points_stay_in_the_box(seed in any::<u64>(), lo in point(), e in prop::array::uniform3(0.1..3.0f64)) {
        let bbox = BoundingBox::new(lo, lo + Point3::from_array(e)).unwrap();
        let pts = uniform_points(&bbox, 500, seed);
        prop_assert!(pts.iter().all(|p| bbox.contains(*p)));
        prop_assert_eq!(pts, uniform_points(&bbox, 500, seed));
    }

    #[test]
    fn vox_round_trips_bit_exact(dims in prop::array::uniform3(1usize..6), spacing in 0.01..2.0f32, data in prop::collection::vec(any::<f32>(), 125)) {
        let h = VolumeHeader::new(dims, [spacing, spacing * 2.0, spacing], [-1.0, 0.5, 3.0]).unwrap();
        let n = h.voxel_count();
        let sdf = SdfVolume::new(h, data[..n].to_vec());
        prop_assume!(sdf.is_ok());
        let sdf = sdf.unwrap();
        match decode_vox(&encode_sdf(&sdf), "t").unwrap() {
            Volume::Sdf(back) => {
                prop_assert_eq!(back.header, sdf.header);
                let a: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
                let b: Vec<u32> = sdf.data.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
            Volume::Mask(_) => prop_assert!(false),
        }
        let mask = VoxelMask::new(h, data[..n].iter().map(|v| *v > 0.0).collect()).unwrap();
        match decode_vox(&encode_mask(&mask), "t").unwrap() {
            Volume::Mask(back) => prop_assert_eq!(back, mask),
            Volume::Sdf(_) => prop_assert!(false),
        }
    }

    #[test]
    fn scenario_parsing_is_total(text in ".{0,300}") {
        let _ = parse_scenario_str(&text, Path::new("."), "fuzz.toml");
    }

    #[test]
    fn scenario_parsing_is_total_on_near_valid_input(cut in 0usize..400, junk in "[a-z=\\[\\]\"0-9. \n]{0,20}") {
        let text = r#"
[scene]
bbox = [[-2.0, -1.0, -1.0], [2.0, 1.0, 1.0]]
[[components]]
name = "a"
family = "sphere"
params = [0.5]
[[components]]
name = "b"
family = "capsule"
params = [0.3, 0.4]
center = [1.0, 0.0, 0.0]
[[constraints]]
a = "a"
b = "b"
kind = "min_gap"
d = 0.1
"#;
        let cut = cut.min(text.len());
        let mutated = format!("{}{}{}", &text[..cut], junk, &text[cut..]);
        if let Ok(s) = parse_scenario_str(&mutated, Path::new("."), "fuzz.toml") {
            prop_assert!(!s.scene.is_empty());
            prop_assert!(s.solver.validate().is_ok());
        }
    }

    #[test]
    fn chamfer_is_symmetric(shift in prop::array::uniform3(-0.3..0.3f64), r in 0.2..0.8f64, seed in any::<u64>()) {
        let a = TriangleMesh::icosphere(Point3::ZERO, r, 2);
        let b = TriangleMesh::cuboid(Point3::splat(-0.4), Point3::splat(0.4)).transformed(|p| p + Point3::from_array(shift));
        prop_assert_eq!(
            chamfer_distance(&a, &b, 500, seed).unwrap().to_bits(),
            chamfer_distance(&b, &a, 500, seed).unwrap().to_bits()
        );
    }
}

#[test]
fn sphere_mesh_vertices_lie_near_the_surface() {
    for res in [16, 33, 64] {
        let bbox = BoundingBox::cube(0.8);
        let f: Field = AnalyticField::sphere(Point3::new(0.05, 0.0, -0.1), 0.5).into();
        let m = marching_cubes(&f, &[], &bbox, res).unwrap();
        let bound = 2.0 * 1.6 / res as f64;
        let worst = m.vertices.iter().map(|v| f.eval(&[], *v).unwrap().abs()).fold(0.0, f64::max);
        assert!(worst <= bound, "res {res}: {worst} > {bound}");
        assert!(m.is_watertight());
    }
}
