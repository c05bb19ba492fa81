use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topocut_core::datagen::*;
use topocut_core::geometry::yaw;
use topocut_core::mpm::Shape;
use topocut_core::planner::{MPPIConfig, Matrix6};
use topocut_core::policy::action_to_mask;
use topocut_core::scene::{CutAction, ObjectSpec, SceneConfig};
use topocut_core::spectral::{evaluate_fragments, SpectralConfig};
use topocut_core::topology::TopologyState;
use topocut_core::{Pose, Vec3};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn bbox(points: &[Vec3]) -> (Vec3, Vec3) {
    points.iter().fold((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)), |(lo, hi), p| (lo.inf(p), hi.sup(p)))
}

/// A bar of 0.2 x 0.08 x 0.1 cut into 0.04 slices.
fn bar_scene() -> SceneConfig {
    let mut cfg = SceneConfig::default();
    cfg.object = ObjectSpec { shape: Shape::Box { half_extents: [0.1, 0.04, 0.05] }, ..ObjectSpec::default() };
    cfg.goal = GoalSpec { kind: GoalKind::Slice, dims: [0.04, 0.08, 0.1], sample_count: 800, sampling: GoalSampling::Grid };
    cfg.spectral = SpectralConfig { num_point: 256, knn_k: 16, k_eig: 6, ..SpectralConfig::default() };
    cfg
}

fn random_state(n: usize, clusters: u8, frame: u64, r: &mut ChaCha8Rng) -> TopologyState {
    TopologyState {
        points: (0..n).map(|_| [r.random(), r.random(), r.random()]).collect(),
        labels: (0..n).map(|_| r.random_range(0..clusters)).collect(),
        frame,
    }
}

fn synthetic_record(tuples: usize, points: usize, seed: u64) -> EpisodeRecord {
    let mut r = rng(seed);
    let initial = random_state(points, 1, 0, &mut r);
    let mut prev = initial.clone();
    let mut out = Vec::new();
    for i in 0..tuples {
        let next = random_state(points, 2 + i as u8 % 4, 100 * (i as u64 + 1), &mut r);
        let start = Pose::new(Vec3::new(r.random(), r.random(), r.random()), yaw(r.random_range(-0.3..0.3)));
        let twists = (0..i % 3).map(|_| [r.random::<f32>(); 6]).collect();
        let mask = action_to_mask(&prev.all_points(), &start);
        out.push(DemonstrationTuple {
            topo_t: prev.clone(),
            action: CutAction { start, twists },
            mask,
            topo_next: next.clone(),
            reward: r.random(),
        });
        prev = next;
    }
    EpisodeRecord {
        scene: SceneConfig::default(),
        pose_randomization: PoseRandomization { translation: [0.1, -0.05], yaw: 0.2, scale: 1.1 },
        source: SourceKind::Mppi,
        seed,
        initial,
        tuples: out,
        complete: true,
        error: None,
    }
}

#[test]
fn stick_grid_goal() {
    let spec = GoalSpec { kind: GoalKind::Stick, dims: [5.0, 5.0, 32.0], sample_count: 800, sampling: GoalSampling::Grid };
    let g = generate_goal(&spec, &mut rng(0));
    assert_eq!(g.len(), 800);
    let (lo, hi) = bbox(&g);
    assert_eq!(lo, Vec3::zeros());
    assert_eq!(hi, Vec3::new(5.0, 5.0, 32.0));
}

#[test]
fn dice_goal_is_cubic() {
    for sampling in [GoalSampling::Grid, GoalSampling::Uniform] {
        let spec = GoalSpec { kind: GoalKind::Dice, dims: [0.05; 3], sample_count: 2000, sampling };
        let (lo, hi) = bbox(&generate_goal(&spec, &mut rng(1)));
        let e = hi - lo;
        assert!((e.max() - e.min()) / e.max() < 0.05, "{e:?}");
    }
}

#[test]
fn slice_goal_thickness() {
    let spec = GoalSpec { kind: GoalKind::Slice, dims: [0.2, 0.02, 0.1], sample_count: 5000, sampling: GoalSampling::Uniform };
    let g = generate_goal(&spec, &mut rng(2));
    assert_eq!(g.len(), 5000);
    let (lo, hi) = bbox(&g);
    let e = hi - lo;
    assert!(e.min() <= 0.02 && e.min() > 0.02 * 0.98);
    assert!((e.y - 0.02).abs() < 4e-4);
}

#[test]
fn goal_aspect_rules() {
    assert!(GoalSpec { kind: GoalKind::Stick, dims: [0.05, 0.2, 0.2], ..GoalSpec::default() }.validate().is_err());
    assert!(GoalSpec { kind: GoalKind::Dice, dims: [0.05, 0.05, 0.2], ..GoalSpec::default() }.validate().is_err());
    assert!(GoalSpec { kind: GoalKind::Slice, dims: [0.1, 0.1, 0.1], ..GoalSpec::default() }.validate().is_err());
    assert!(GoalSpec { dims: [0.0, 0.1, 0.2], ..GoalSpec::default() }.validate().is_err());
    assert!(GoalSpec::default().validate().is_ok());
}

#[test]
fn collapsed_ranges_give_identity_pose() {
    let ranges = PoseRanges { x: [0.0; 2], z: [0.0; 2], yaw_deg: [0.0; 2], scale: [1.0; 2] };
    let obj = ObjectSpec::default();
    let (posed, p) = randomize_pose(&obj, &ranges, &Default::default(), &mut rng(3)).unwrap();
    assert_eq!(p, PoseRandomization::default());
    assert_eq!(posed, obj);
}

#[test]
fn pose_draws_stay_in_range() {
    let ranges = PoseRanges::default();
    let small = ObjectSpec { shape: Shape::Box { half_extents: [0.02, 0.02, 0.02] }, ..ObjectSpec::default() };
    let sim = Default::default();
    let mut r = rng(4);
    let (mut lo, mut hi) = ([f64::INFINITY; 4], [f64::NEG_INFINITY; 4]);
    for _ in 0..10_000 {
        let (_, p) = randomize_pose(&small, &ranges, &sim, &mut r).unwrap();
        let v = [p.translation[0], p.translation[1], p.yaw.to_degrees(), p.scale];
        for k in 0..4 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let bounds = [ranges.x, ranges.z, ranges.yaw_deg, ranges.scale];
    for k in 0..4 {
        let [a, b] = bounds[k];
        assert!(lo[k] >= a - 1e-12 && hi[k] <= b + 1e-12);
        // Uniform draws reach within 1% of each end with overwhelming odds.
        assert!(lo[k] < a + 0.01 * (b - a) && hi[k] > b - 0.01 * (b - a), "axis {k}: [{}, {}]", lo[k], hi[k]);
    }
}

#[test]
fn pose_draws_are_seeded() {
    let obj = ObjectSpec::default();
    let a = randomize_pose(&obj, &PoseRanges::default(), &Default::default(), &mut rng(5)).unwrap();
    let b = randomize_pose(&obj, &PoseRanges::default(), &Default::default(), &mut rng(5)).unwrap();
    assert_eq!(a, b);
    assert!(a.0.fits(&Default::default()));
}

#[test]
fn oversized_objects_are_rejected() {
    let big = ObjectSpec { shape: Shape::Box { half_extents: [0.6, 0.05, 0.1] }, ..ObjectSpec::default() };
    let err = randomize_pose(&big, &PoseRanges::default(), &Default::default(), &mut rng(6)).unwrap_err();
    assert!(matches!(err, DatagenError::PoseRejected(100)));
}

#[test]
fn episode_seeds() {
    assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
    assert_eq!(episode_seed(7, 3), 7 ^ splitmix64(3));
    let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| episode_seed(42, i)).collect();
    assert_eq!(seeds.len(), 1000);
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![synthetic_record(3, 200, 1), synthetic_record(0, 50, 2), synthetic_record(5, 97, 3)];
    let echo = serde_json::json!({"note": "synthetic"});
    let written = write_dataset(dir.path(), &records, echo).unwrap();
    let (manifest, read) = read_dataset(dir.path()).unwrap();
    assert_eq!(manifest, written);
    assert_eq!(read, records);
}

#[test]
fn truncated_blob_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &[synthetic_record(2, 100, 4)], serde_json::Value::Null).unwrap();
    let path = dir.path().join("episode_00000.tcut");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(DatagenError::Checksum(_))));
}

#[test]
fn schema_version_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &[synthetic_record(1, 20, 5)], serde_json::Value::Null).unwrap();
    let path = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&path).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(DatagenError::Version(99))));
}

#[test]
fn thousand_tuple_file_size() {
    let dir = tempfile::tempdir().unwrap();
    let rec = synthetic_record(1000, 256, 6);
    // Arrays held by the tuples: both states as f32 xyz + u8 label, the
    // mask as bytes, seven f64 pose values, twists and the reward.
    let raw: usize = rec
        .tuples
        .iter()
        .map(|t| 13 * (t.topo_t.len() + t.topo_next.len()) + t.mask.len() + 56 + 24 * t.action.twists.len() + 4)
        .sum();
    write_dataset(dir.path(), &[rec], serde_json::Value::Null).unwrap();
    let size = std::fs::metadata(dir.path().join("episode_00000.tcut")).unwrap().len() as usize;
    assert!(size <= 2 * raw, "{size} bytes for {raw} raw");
}

#[test]
fn zero_cut_episode_keeps_the_initial_topology() {
    let rec = run_episode(&bar_scene(), &EpisodeSource::Slices { thickness: 0.04 }, 0, 1).unwrap();
    assert!(rec.tuples.is_empty() && rec.complete);
    assert_eq!(rec.initial.num_clusters(), 1);
    assert!(!rec.initial.is_empty());
}

#[test]
fn four_slices_replay_bitwise() {
    let scene = bar_scene();
    let rec = run_episode(&scene, &EpisodeSource::Slices { thickness: 0.04 }, 4, 11).unwrap();
    assert!(rec.complete, "{:?}", rec.error);
    assert_eq!(rec.tuples.len(), 4);
    assert_eq!(rec.final_topology().num_clusters(), 5);
    let counts = rec.cluster_counts();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");

    let goal = generate_goal(&scene.goal, &mut rng(11));
    for t in &rec.tuples {
        assert_eq!(t.mask.len(), t.topo_t.len());
        let r = evaluate_fragments(&t.topo_next, &goal, &scene.spectral).unwrap().r_total as f32;
        assert_eq!(r.to_bits(), t.reward.to_bits());
    }

    assert_eq!(replay(&rec).unwrap(), rec);
    let mut other_seed = rec.clone();
    other_seed.seed = 12;
    let again = replay(&other_seed).unwrap();
    assert_eq!(again.tuples, rec.tuples);

    let mut rescored = rec.clone();
    rescored.scene.spectral.reward.kappa = 2.0;
    let r2 = replay(&rescored).unwrap();
    for (a, b) in rec.tuples.iter().zip(&r2.tuples) {
        assert_eq!(a.topo_next, b.topo_next);
        if a.reward != 0.0 {
            assert_ne!(a.reward, b.reward);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), std::slice::from_ref(&rec), serde_json::Value::Null).unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap().1, vec![rec]);
}

#[test]
fn mppi_episode_is_deterministic() {
    let scene = bar_scene();
    let config = MPPIConfig {
        horizon: 2,
        samples: 2,
        iters: 1,
        control_penalty: Matrix6::zeros(),
        ..MPPIConfig::default()
    };
    let source = EpisodeSource::Mppi { config, thickness: 0.04, cut_frames: 3, stop_reward: None };
    let a = run_episode(&scene, &source, 1, 21).unwrap();
    let b = run_episode(&scene, &source, 1, 21).unwrap();
    assert!(a.complete, "{:?}", a.error);
    assert_eq!(a.tuples.len(), 1);
    assert_eq!(a.tuples[0].action.twists.len(), 3);
    assert_eq!(a, b);
}
