use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topocut_core::geometry::{axis_angle, Aabb};
use topocut_core::mpm::{spawn_object, MaterialParams, ParticleSet, Shape};
use topocut_core::topology::*;
use topocut_core::{Pose, Vec3};

const DX: f64 = 1.0 / 64.0;

fn block(half: [f64; 3]) -> ParticleSet {
    let pose = Pose::from_position(Vec3::new(0.5, 0.5, 0.5));
    spawn_object(&Shape::Box { half_extents: half }, &pose, MaterialParams::core(), MaterialParams::core(), 0.0, DX, 8)
        .unwrap()
}

/// Vertical blade sweeping down through the plane `x = x0`, normal along x.
fn plane_sweep(x0: f64) -> SweptVolume {
    let poses = (0..20).map(|i| Pose::from_position(Vec3::new(x0, 0.9 - 0.04 * i as f64, 0.5))).collect();
    SweptVolume { poses, half_extents: Vec3::new(0.6 * DX, 0.05, 0.4) }
}

fn sphere_field(res: usize, radius: f64) -> ScalarField {
    let cell = 1.0 / (res - 1) as f64;
    ScalarField::from_fn([res; 3], Vec3::repeat(-0.5), cell, |x| x.norm() - radius)
}

/// Face components by breadth-first search over shared vertices.
fn component_face_counts(mesh: &SurfaceMesh) -> Vec<usize> {
    let mut by_vertex = vec![Vec::new(); mesh.vertices.len()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        for &v in f {
            by_vertex[v as usize].push(fi);
        }
    }
    let mut seen = vec![false; mesh.faces.len()];
    let mut counts = Vec::new();
    for start in 0..mesh.faces.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut n = 0;
        while let Some(f) = stack.pop() {
            n += 1;
            for &v in &mesh.faces[f] {
                for &g in &by_vertex[v as usize] {
                    if !seen[g] {
                        seen[g] = true;
                        stack.push(g);
                    }
                }
            }
        }
        counts.push(n);
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts
}

#[test]
fn sphere_vertices_near_radius() {
    let f = sphere_field(64, 0.3);
    let mesh = marching_cubes(&f);
    assert!(!mesh.is_empty());
    for v in &mesh.vertices {
        assert!((v.norm() - 0.3).abs() <= 1.5 * f.cell);
    }
}

#[test]
fn all_positive_field_gives_empty_mesh() {
    let f = ScalarField::new([10, 10, 10], Vec3::zeros(), 0.1, 1.0);
    assert!(marching_cubes(&f).is_empty());
}

#[test]
fn half_space_is_planar() {
    let n = Vec3::new(0.3, -0.5, 0.8).normalize();
    let f = ScalarField::from_fn([16, 16, 16], Vec3::zeros(), 1.0 / 15.0, |x| n.dot(&(x - Vec3::repeat(0.47))));
    let mesh = marching_cubes(&f);
    assert!(!mesh.is_empty());
    for v in &mesh.vertices {
        assert!(n.dot(&(v - Vec3::repeat(0.47))).abs() < 1e-6);
    }
}

#[test]
fn carve_inside_and_far() {
    let f = ScalarField::new([21, 21, 21], Vec3::zeros(), 0.05, -1.0);
    let swept = SweptVolume { poses: vec![Pose::from_position(Vec3::new(0.5, 0.5, 0.5))], half_extents: Vec3::new(0.1, 0.2, 0.2) };
    let c = carve_swept_volume(&f, &swept);
    assert!(c.values[c.index(10, 10, 10)] >= 0.1);
    assert_eq!(c.values[c.index(0, 0, 0)], -1.0);
    assert_eq!(c.values[c.index(20, 10, 10)], -1.0);
}

#[test]
fn thin_blade_is_inflated_to_a_cell() {
    let f = ScalarField::new([21, 21, 21], Vec3::zeros(), 0.05, -1.0);
    let swept = SweptVolume { poses: vec![Pose::from_position(Vec3::new(0.5, 0.5, 0.5))], half_extents: Vec3::new(0.001, 0.2, 0.2) };
    let c = carve_swept_volume(&f, &swept);
    assert!(c.values[c.index(10, 10, 10)] >= 0.05 - 1e-12);
    assert!(c.values[c.index(9, 10, 10)] >= 0.0);
}

#[test]
fn bisected_sphere_has_two_components() {
    let f = sphere_field(48, 0.3);
    let swept = SweptVolume {
        poses: vec![Pose::new(Vec3::new(0.013, 0.0, 0.0), axis_angle(&Vec3::y(), 0.2))],
        half_extents: Vec3::new(0.01, 0.5, 0.5),
    };
    let mesh = connected_components(&marching_cubes(&carve_swept_volume(&f, &swept)));
    assert_eq!(mesh.num_components(), 2);
    assert_eq!(mesh.component_sizes(), component_face_counts(&mesh));
}

#[test]
fn two_spheres_and_one() {
    let one = connected_components(&marching_cubes(&sphere_field(32, 0.3)));
    assert_eq!(one.num_components(), 1);
    let cell = 1.0 / 31.0;
    let two = ScalarField::from_fn([32; 3], Vec3::repeat(-0.5), cell, |x| {
        ((x - Vec3::new(-0.25, 0.0, 0.0)).norm() - 0.2).min((x - Vec3::new(0.25, 0.0, 0.0)).norm() - 0.15)
    });
    let m = connected_components(&marching_cubes(&two));
    assert_eq!(m.num_components(), 2);
    let sizes = m.component_sizes();
    assert!(sizes[0] > sizes[1]);
}

#[test]
fn smoothing_reduces_radial_noise() {
    let f = sphere_field(40, 0.3);
    let mut mesh = marching_cubes(&f);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for v in &mut mesh.vertices {
        let r = v.norm();
        *v *= (r + rng.random_range(-0.4..0.4) * f.cell) / r;
    }
    let dev = |m: &SurfaceMesh| m.vertices.iter().map(|v| (v.norm() - 0.3).abs()).sum::<f64>() / m.vertices.len() as f64;
    let smooth = laplacian_smooth(&mesh, 0.5, 10);
    assert_eq!(smooth.faces, mesh.faces);
    assert!(dev(&smooth) < dev(&mesh));
}

#[test]
fn obj_export_is_one_based() {
    let f = ScalarField::from_fn([3, 3, 3], Vec3::zeros(), 1.0, |x| x.x - 0.5);
    let obj = marching_cubes(&f).to_obj();
    assert!(obj.lines().any(|l| l.starts_with("v ")));
    let min_index = obj
        .lines()
        .filter(|l| l.starts_with("f "))
        .flat_map(|l| l[2..].split(' ').map(|t| t.parse::<u32>().unwrap()).collect::<Vec<_>>())
        .min()
        .unwrap();
    assert_eq!(min_index, 1);
}

#[test]
fn assignment_at_vertex_and_far_away() {
    let mesh = connected_components(&marching_cubes(&sphere_field(24, 0.3)));
    let v = mesh.vertices[5];
    let labels = assign_clusters(&[v, Vec3::repeat(5.0)], &mesh, None, 0.01);
    assert_eq!(labels, vec![0, -1]);
}

#[test]
fn bisected_block_matches_side_of_plane() {
    let mut ps = block([0.1, 0.05, 0.08]);
    let s = ps.spacing();
    // plane between lattice layers
    let x0 = 0.5 + 0.3 * 0.1 + 0.5 * s - ((0.3 * 0.1) % s);
    let report = discover_topology(&mut ps, &plane_sweep(x0), &TopologyParams::default(), 0).unwrap();
    assert_eq!(report.state.num_clusters(), 2);
    let pts = ps.positions();
    let left_id = report.labels[pts.iter().position(|p| p.x < 0.45).unwrap()];
    let agree = pts.iter().zip(&report.labels).filter(|(p, &l)| (p.x < x0) == (l == left_id)).count();
    assert!(agree as f64 >= 0.99 * pts.len() as f64, "{agree} / {}", pts.len());
}

#[test]
fn uncut_sphere_is_one_cluster() {
    let pose = Pose::from_position(Vec3::new(0.5, 0.5, 0.5));
    let mut ps = spawn_object(&Shape::Sphere { radius: 0.1 }, &pose, MaterialParams::core(), MaterialParams::skin(), 0.01, DX, 8).unwrap();
    let r = discover_topology(&mut ps, &SweptVolume::default(), &TopologyParams::default(), 3).unwrap();
    assert!(r.labels.iter().all(|&l| l == 0));
    assert_eq!(r.state.num_clusters(), 1);
    assert_eq!(r.state.frame, 3);
    assert_eq!(r.state.len(), 1024);
}

#[test]
fn planar_cut_volume_split() {
    let mut ps = block([0.1, 0.06, 0.06]);
    let x0 = 0.5 - 0.1 + 0.07;
    let r = discover_topology(&mut ps, &plane_sweep(x0), &TopologyParams::default(), 0).unwrap();
    let counts: Vec<usize> = (0..2).map(|c| r.labels.iter().filter(|&&l| l == c).count()).collect();
    let expected = 0.07 / 0.2;
    let small = counts[1] as f64 / (counts[0] + counts[1]) as f64;
    assert!((small - expected).abs() <= 0.05 * expected, "{small} vs {expected}");
}

#[test]
fn sequential_bar_cuts_follow_split_history() {
    let mut ps = block([0.2, 0.03, 0.03]);
    let params = TopologyParams::default();
    let xs = |t: f64| 0.3 + 0.4 * t;
    let mut swept = SweptVolume::default();
    let r = discover_topology(&mut ps, &swept, &params, 0).unwrap();
    assert_eq!(r.state.cluster_ids(), vec![0]);
    let mut expect_ids = vec![vec![0, 1], vec![0, 1, 2], vec![0, 1, 2, 3]];
    for (step, t) in [0.6, 0.25, 0.85].into_iter().enumerate() {
        let cut = plane_sweep(xs(t) + 0.003);
        swept.half_extents = cut.half_extents;
        swept.poses.extend(cut.poses);
        let r = discover_topology(&mut ps, &swept, &params, step as u64 + 1).unwrap();
        assert_eq!(r.state.cluster_ids(), expect_ids.remove(0));
    }
    // region -> id traced by hand: [0, .25) -> 2, [.25, .6) -> 0, [.6, .85) -> 1, [.85, 1] -> 3
    for p in &ps.particles {
        let t = (p.x.x - 0.3) / 0.4;
        let want = if t < 0.24 { 2 } else if (0.27..0.59).contains(&t) { 0 } else if (0.62..0.84).contains(&t) { 1 } else if t > 0.87 { 3 } else { continue };
        assert_eq!(p.cluster_id, want, "t = {t}");
    }
}

#[test]
fn four_slices_give_five_clusters() {
    let mut ps = block([0.12, 0.05, 0.05]);
    let mut swept = SweptVolume::default();
    for k in 1..=4 {
        let cut = plane_sweep(0.38 + 0.048 * k as f64 + 0.003);
        swept.half_extents = cut.half_extents;
        swept.poses.extend(cut.poses);
    }
    let r = discover_topology(&mut ps, &swept, &TopologyParams::default(), 0).unwrap();
    assert_eq!(r.state.num_clusters(), 5);
    assert_eq!(r.unassigned, 0);
}

#[test]
fn cut_count_matches_slice_pattern_on_sphere() {
    for k in 1..=3usize {
        let pose = Pose::from_position(Vec3::new(0.5, 0.5, 0.5));
        let mut ps = spawn_object(&Shape::Sphere { radius: 0.12 }, &pose, MaterialParams::core(), MaterialParams::core(), 0.0, DX, 8).unwrap();
        let mut swept = SweptVolume::default();
        for c in 0..k {
            let cut = plane_sweep(0.5 - 0.06 + 0.12 * (c as f64 + 0.5) / k as f64 + 0.002);
            swept.half_extents = cut.half_extents;
            swept.poses.extend(cut.poses);
        }
        let r = discover_topology(&mut ps, &swept, &TopologyParams::default(), 0).unwrap();
        assert_eq!(r.state.num_clusters(), k + 1);
    }
}

#[test]
fn empty_particles_error() {
    let mut ps = block([0.05, 0.05, 0.05]);
    ps.particles.clear();
    assert!(matches!(
        discover_topology(&mut ps, &SweptVolume::default(), &TopologyParams::default(), 0),
        Err(TopologyError::EmptyPointSet)
    ));
}

#[test]
fn reordered_particles_keep_global_ids() {
    let mut a = block([0.1, 0.04, 0.04]);
    let swept = plane_sweep(0.46 + 0.003);
    let ra = discover_topology(&mut a, &swept, &TopologyParams::default(), 0).unwrap();
    let mut b = a.clone();
    b.particles.reverse();
    for p in &mut b.particles {
        p.cluster_id = 0;
    }
    let rb = discover_topology(&mut b, &swept, &TopologyParams::default(), 0).unwrap();
    let mut la = ra.labels.clone();
    la.reverse();
    assert_eq!(la, rb.labels);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn damage_is_monotone(js in prop::collection::vec(0.9f64..1.1, 1..40), plastic in any::<bool>()) {
        let mut ps = block([0.02, 0.02, 0.02]);
        ps.particles.truncate(js.len());
        if plastic {
            ps.materials[0] = MaterialParams::skin();
        }
        let mut before = vec![false; ps.len()];
        for (step, &j) in js.iter().enumerate() {
            for p in &mut ps.particles {
                p.f = topocut_core::Mat3::identity() * j.cbrt();
                p.plastic_strain = 0.01 * step as f64;
            }
            update_damage(&mut ps);
            for (b, p) in before.iter_mut().zip(&ps.particles) {
                prop_assert!(!*b || p.damaged);
                *b = p.damaged;
            }
        }
    }

    #[test]
    fn field_equals_brute_force(seed in 0u64..1000, n in 1usize..200, r in 0.01f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let grid = ScalarField::covering(&Aabb::from_points(&pts), 0.1, 0.09, 0.0);
        let f = particle_sdf_field(&pts, r, &grid).unwrap();
        for (idx, v) in f.values.iter().enumerate() {
            let x = f.node_position_flat(idx);
            let brute = pts.iter().map(|p| (x - p).norm()).fold(f64::INFINITY, f64::min) - r;
            prop_assert_eq!(v.to_bits(), brute.to_bits());
        }
    }

    #[test]
    fn persist_is_idempotent(labels in prop::collection::vec(-1i32..8, 1..200)) {
        let once = persist_cluster_ids(&labels, &labels).unwrap();
        let twice = persist_cluster_ids(&once, &labels).unwrap();
        prop_assert_eq!(&once, &twice);
    }

    #[test]
    fn persist_ignores_particle_order(pairs in prop::collection::vec((-1i32..4, -1i32..6), 1..100), seed in 0u64..100) {
        let (prev, fresh): (Vec<i32>, Vec<i32>) = pairs.iter().copied().unzip();
        let mut perm: Vec<usize> = (0..prev.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let a = persist_cluster_ids(&prev, &fresh).unwrap();
        let pp: Vec<i32> = perm.iter().map(|&i| prev[i]).collect();
        let fp: Vec<i32> = perm.iter().map(|&i| fresh[i]).collect();
        let b = persist_cluster_ids(&pp, &fp).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(a[i], b[k]);
        }
    }
}

