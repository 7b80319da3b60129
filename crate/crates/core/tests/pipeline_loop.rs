//! End-to-end loop on synthetic bundles: emit a scene with ground truth,
//! run the instance pipeline with oracle hooks, and verify the placed
//! meshes land on the ground truth with the perturbation scale undone.

use scenekit_core::pipeline::{CompletionConfig, InstanceParams, ReconstructionConfig};
use scenekit_core::recon::{reconstruct_scene, BackgroundParams, ReconstructParams};
use scenekit_core::scene::load_manifest;
use scenekit_core::synth::{
    generate_scene, write_bundle, BundleOptions, PerturbRanges, SceneSpec,
};

fn bundle_spec(things: usize) -> SceneSpec {
    SceneSpec {
        things,
        image_size: 256,
        ..SceneSpec::default()
    }
}

fn oracle_params(dir: &std::path::Path, crop_res: u32) -> ReconstructParams {
    ReconstructParams {
        instance: InstanceParams {
            crop_res,
            ..InstanceParams::default()
        },
        completion: CompletionConfig::OracleDir(dir.join("complete")),
        reconstruction: ReconstructionConfig::OracleManifest { cull_to_mask: false },
        background: BackgroundParams {
            enabled: false,
            ..BackgroundParams::default()
        },
    }
}

#[test]
fn oracle_loop_recovers_scale_and_placement() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_scene(11, &bundle_spec(3)).unwrap();
    let info = write_bundle(
        &scene,
        dir.path(),
        &BundleOptions {
            crop_res: 256,
            tessellation: 32,
            perturb: PerturbRanges {
                scale: (0.2, 5.0),
                rotation_max_rad: 0.0,
                translation_max: 0.0,
                noise: 0.0,
            },
            seed: 77,
        },
    )
    .unwrap();

    let manifest = load_manifest(&dir.path().join("manifest.json")).unwrap();
    let result = reconstruct_scene(&manifest, &oracle_params(dir.path(), 256)).unwrap();
    assert_eq!(result.skipped_count(), 0, "no instance should be skipped");

    for outcome in &result.instances {
        let truth = info
            .instances
            .iter()
            .find(|i| i.id == outcome.id)
            .expect("fixture info for every instance");
        assert!(!truth.degenerate);
        let s = outcome.scale.unwrap();
        let product = s * truth.true_scale;
        assert!(
            (product - 1.0).abs() < 0.005,
            "instance {}: s * sigma = {product} (s = {s}, sigma = {})",
            outcome.id,
            truth.true_scale
        );
        assert!(outcome.inlier_fraction.unwrap() > 0.95);
        assert!(!outcome.fallback);

        // Placed mesh lands on the ground-truth mesh.
        let gt = scenekit_core::mesh::read_obj(
            &dir.path().join("gt").join(format!("{}.obj", outcome.id)),
        )
        .unwrap();
        let placed = outcome.mesh.as_ref().unwrap();
        assert_eq!(placed.vertices.len(), gt.vertices.len());
        let size = gt.aabb().unwrap().longest_side();
        let mut worst = 0.0f64;
        for (a, b) in placed.vertices.iter().zip(gt.vertices.iter()) {
            worst = worst.max((a - b).norm());
        }
        assert!(
            worst < 0.02 * size,
            "instance {}: worst vertex error {worst} for size {size}",
            outcome.id
        );
        println!(
            "instance {}: sigma {:.4}, s {:.4}, worst vertex error {:.2e} ({:.4} of size)",
            outcome.id,
            truth.true_scale,
            s,
            worst,
            worst / size
        );
    }
}

#[test]
fn degenerate_instances_are_skipped_not_fatal() {
    // A scene dense enough that a thing can hide completely behind another
    // is hard to force; instead, shrink an instance mask artificially by
    // pointing the manifest at a nearly-empty mask.
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_scene(4, &bundle_spec(2)).unwrap();
    write_bundle(&scene, dir.path(), &BundleOptions {
        crop_res: 128,
        tessellation: 24,
        ..BundleOptions::default()
    })
    .unwrap();

    // Overwrite one mask with a 3-pixel blob (valid but degenerate).
    let mut tiny = scenekit_core::EntityMask::empty(256, 256);
    for k in 0..3 {
        tiny.set(10 + k, 10, true);
    }
    // Keep it disjoint from other masks by construction: pixels near the
    // image corner are ground; overlap with the ground mask must go.
    let ground_path = dir.path().join("masks/ground.png");
    let mut ground = scenekit_core::EntityMask::from_png(&ground_path).unwrap();
    for k in 0..3 {
        ground.set(10 + k, 10, false);
    }
    ground.save_png(&ground_path).unwrap();
    tiny.save_png(&dir.path().join("masks/thing_000.png")).unwrap();

    let manifest = load_manifest(&dir.path().join("manifest.json")).unwrap();
    let result = reconstruct_scene(&manifest, &oracle_params(dir.path(), 128)).unwrap();
    assert_eq!(result.skipped_count(), 1);
    let skipped: Vec<_> = result
        .instances
        .iter()
        .filter(|i| i.skipped.is_some())
        .collect();
    assert_eq!(skipped[0].id, "thing_000");
    // The other instance still came through.
    assert!(result.instances.iter().any(|i| i.mesh.is_some()));
}

#[test]
fn scale_equivariance_of_the_placed_scene() {
    // Scaling the scene depth by k scales every placed mesh by k.
    let dir_a = tempfile::tempdir().unwrap();
    let scene = generate_scene(21, &bundle_spec(2)).unwrap();
    let opts = BundleOptions {
        crop_res: 160,
        tessellation: 24,
        perturb: PerturbRanges {
            scale: (0.5, 2.0),
            rotation_max_rad: 0.0,
            translation_max: 0.0,
            noise: 0.0,
        },
        seed: 5,
    };
    write_bundle(&scene, dir_a.path(), &opts).unwrap();
    let manifest = load_manifest(&dir_a.path().join("manifest.json")).unwrap();
    let result_a = reconstruct_scene(&manifest, &oracle_params(dir_a.path(), 160)).unwrap();

    // Scale the world: same scene with primitives and camera scaled by k.
    let k = 2.5;
    let mut scaled = scene.clone();
    for prim in &mut scaled.primitives {
        prim.pose.translation *= k;
        match &mut prim.kind {
            scenekit_core::synth::PrimitiveKind::Sphere { radius } => *radius *= k,
            scenekit_core::synth::PrimitiveKind::Box { half_extents } => *half_extents *= k,
            scenekit_core::synth::PrimitiveKind::Plane { half_extents } => {
                half_extents.0 *= k;
                half_extents.1 *= k;
            }
        }
    }
    scaled.camera_pose.translation *= k;
    let dir_b = tempfile::tempdir().unwrap();
    write_bundle(&scaled, dir_b.path(), &opts).unwrap();
    let manifest_b = load_manifest(&dir_b.path().join("manifest.json")).unwrap();
    let result_b = reconstruct_scene(&manifest_b, &oracle_params(dir_b.path(), 160)).unwrap();

    for (a, b) in result_a.instances.iter().zip(result_b.instances.iter()) {
        let (Some(ma), Some(mb)) = (&a.mesh, &b.mesh) else {
            continue;
        };
        let size_a = ma.aabb().unwrap().longest_side();
        let size_b = mb.aabb().unwrap().longest_side();
        let ratio = size_b / size_a;
        assert!(
            (ratio - k).abs() / k < 0.01,
            "instance {}: size ratio {ratio} expected {k}",
            a.id
        );
    }
}
