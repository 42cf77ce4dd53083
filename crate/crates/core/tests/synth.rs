use pairsdf::field::Field;
use pairsdf::io::{parse_scenario, read_mask};
use pairsdf::oracle::{analytic_sphere_pair, dense_contact_ratio};
use pairsdf::synth::{self, HeartPairSidecar, SpherePairSidecar, SpineStackSidecar};

fn reference_fields(s: &pairsdf::io::Scenario) -> Vec<Field> {
    s.scene.components().iter().map(|c| c.reference.as_ref().unwrap().field.as_ref().clone()).collect()
}

#[test]
fn sphere_pair_scenario_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth::write_sphere_pair(dir.path(), 0).unwrap();
    let s = parse_scenario(&out.scenarios[0]).unwrap();
    assert_eq!(s.scene.len(), 2);
    assert_eq!(s.constraints.len(), 1);
    assert_eq!(s.scene.components()[0].field.latent_dim(), synth::sphere_pair::LATENT_DIM);
    let side: SpherePairSidecar = serde_json::from_str(&std::fs::read_to_string(&out.sidecar).unwrap()).unwrap();
    let r = synth::sphere_pair::RADIUS;
    assert_eq!(side.uncut_spheres, analytic_sphere_pair(r, r, 2.0 * synth::sphere_pair::HALF_DISTANCE, side.epsilon).unwrap());
    assert_eq!(side.target_ratio, 0.1);

    // The dense lattice estimate of the reference pair settles under refinement.
    let f = reference_fields(&s);
    let coarse = dense_contact_ratio(&f[0], &[], &f[1], &[], &s.scene.bbox, 256, side.epsilon).unwrap();
    let fine = dense_contact_ratio(&f[0], &[], &f[1], &[], &s.scene.bbox, 512, side.epsilon).unwrap();
    assert!((coarse - fine).abs() < 0.005, "{coarse} vs {fine}");
}

#[test]
fn sphere_pair_is_seed_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth::write_sphere_pair(a.path(), 4).unwrap();
    synth::write_sphere_pair(b.path(), 4).unwrap();
    for name in ["a.basis", "b.basis", "a_ref.vox", "b_ref.vox", "sphere-pair.toml", "sphere-pair.oracle.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn heart_pair_training_ratio_is_27_percent() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth::write_heart_pair(dir.path(), 20, 0).unwrap();
    assert_eq!(out.scenarios.len(), 20);
    let side: HeartPairSidecar = serde_json::from_str(&std::fs::read_to_string(&out.sidecar).unwrap()).unwrap();
    assert_eq!(side.training.values.len(), 20);
    for (i, v) in side.training.values.iter().enumerate() {
        assert!((v - 0.27).abs() <= 0.02, "instance {i}: {v}");
    }
    let s = parse_scenario(&out.scenarios[0]).unwrap();
    assert_eq!(s.scene.components()[1].field.latent_dim(), synth::heart_pair::LATENT_DIM);
    let f = reference_fields(&s);
    let eps = synth::heart_pair::voxel();
    let coarse = dense_contact_ratio(&f[0], &[], &f[1], &[], &s.scene.bbox, 192, eps).unwrap();
    let fine = dense_contact_ratio(&f[0], &[], &f[1], &[], &s.scene.bbox, 384, eps).unwrap();
    assert!((coarse - fine).abs() < 0.005, "{coarse} vs {fine}");
}

#[test]
fn spine_stack_clean_gaps_are_one_voxel() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth::write_spine_stack(dir.path(), 20, 0).unwrap();
    let side: SpineStackSidecar = serde_json::from_str(&std::fs::read_to_string(&out.sidecar).unwrap()).unwrap();
    let d = synth::spine_stack::voxel();
    assert_eq!(side.min_gap, d);
    for (i, inst) in side.instances.iter().enumerate() {
        for (j, g) in inst.clean_gaps.iter().enumerate() {
            assert!(*g >= d - 1e-6, "instance {i} pair {j}: {g}");
        }
        for p in &inst.perturbations {
            assert!((0..=synth::spine_stack::MAX_PENETRATION).contains(&p.penetration()));
        }
    }
    // Perturbed neighbours share voxels exactly when the penetration is positive.
    let s = parse_scenario(&out.scenarios[0]).unwrap();
    assert_eq!(s.constraints.len(), synth::spine_stack::BOXES - 1);
    for (j, p) in side.instances[0].perturbations.iter().enumerate() {
        let a = read_mask(dir.path().join(format!("instance-00-v{j}.vox"))).unwrap();
        let b = read_mask(dir.path().join(format!("instance-00-v{}.vox", j + 1))).unwrap();
        let shared = a.data.iter().zip(&b.data).filter(|(x, y)| **x && **y).count();
        assert_eq!(shared > 0, p.penetration() > 0, "pair {j}");
    }
}

#[test]
fn heart_pair_with_few_instances_caps_latent_dim() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth::write_heart_pair(dir.path(), 3, 1).unwrap();
    let s = parse_scenario(&out.scenarios[2]).unwrap();
    assert!(s.scene.components().iter().all(|c| c.field.latent_dim() == 2));
}
