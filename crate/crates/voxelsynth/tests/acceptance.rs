//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured value (visible with `cargo test -- --nocapture`).

use std::time::Instant;

use voxelsynth::encode::{active_voxels, encode_neighborhood, hamming, hamming_ball, BitKey};
use voxelsynth::grid::VoxelGrid;
use voxelsynth::kdtree::{build_kd_index, kdtree_build, kdtree_query, linear_nns, linear_scan};
use voxelsynth::metrics::{dsc, hausdorff};
use voxelsynth::phantom::{make_phantom, PhantomSpec};
use voxelsynth::resample::{downsample2x, upsample_interp, InterpOrder};
use voxelsynth::surface::{marching_cubes, terracing_stats};
use voxelsynth::synth::{
    build_index, lookup, synthesize_hierarchical, synthesize_level, synthesize_level_partitioned,
    MatchResult, ParallelMode, QueryCtx, SynthesisConfig,
};

fn shell(dim: usize, r_in: f64, r_out: f64, perturb: f64, seed: u64) -> VoxelGrid {
    make_phantom(
        &PhantomSpec::SphereShell {
            r_in,
            r_out,
            perturb_rate: perturb,
        },
        (dim, dim, dim),
        (1.0, 1.0, 1.0),
        seed,
    )
    .unwrap()
}

/// Criterion 1: one-level self-synthesis of a 64^3 shell is bit-identical
/// (the replacement rule's fixed point) and runs single-threaded in < 30 s.
#[test]
fn acceptance_01_idempotence() {
    let template = shell(64, 22.0, 26.0, 0.0, 0);
    let cfg = SynthesisConfig::default(); // serial
    let start = Instant::now();
    let index = build_index(&template, &cfg);
    let (out, stats) = synthesize_level(&template, &template, &index, &cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mismatches = out.xor_count(&template).unwrap();
    assert_eq!(mismatches, 0, "idempotence violated");
    assert_eq!(stats.fallbacks, 0);
    assert!(elapsed < 30.0, "took {elapsed:.2}s, budget 30s");
    println!(
        "[criterion 1] PASS - idempotent (0 mismatches over {} queries) in {elapsed:.2}s",
        stats.queries
    );
}

/// Criterion 2: on a seeded 32^3 instance, lookup() agrees with the
/// brute-force linear Hamming scan whenever an exact match exists, and every
/// neighbor-branch coordinate is within distance 2. Zero violations.
#[test]
fn acceptance_02_algorithm1_oracle_equivalence() {
    let template = shell(32, 10.0, 13.0, 0.0, 0);
    let cfg = SynthesisConfig::default(); // radius 2
    let index = build_index(&template, &cfg);
    let template_active = active_voxels(&template, cfg.nbhd);

    // 1000 query keys from a seeded perturbed instance: a mix of exact hits,
    // ball neighbors and misses
    let noisy = shell(32, 10.0, 13.0, 0.08, 1234);
    let queries = active_voxels(&noisy, cfg.nbhd);
    assert!(
        queries.len() >= 1000,
        "phantom too small: {}",
        queries.len()
    );

    let ctx = QueryCtx {
        voxel_linear: 0,
        coarse_value: false,
    };
    let (mut actual, mut neighbor, mut fallback) = (0u32, 0u32, 0u32);
    for key in queries.keys.iter().take(1000) {
        let (_, best_dist) = linear_nns(&template_active.keys, key).unwrap();
        match lookup(&index, key, &cfg, &ctx).unwrap() {
            MatchResult::Actual { coords } => {
                assert_eq!(
                    best_dist, 0,
                    "lookup=actual but oracle distance {best_dist}"
                );
                // coordinate set equals the brute-force scan's full set
                let brute: Vec<_> = template_active
                    .iter()
                    .filter(|(_, k)| *k == key)
                    .map(|(c, _)| c)
                    .collect();
                assert_eq!(coords, brute);
                actual += 1;
            }
            MatchResult::Neighbor { coords } => {
                assert!(best_dist >= 1, "exact match exists but lookup=neighbor");
                assert!(!coords.is_empty());
                for (x, y, z) in coords {
                    let k = encode_neighborhood(
                        &template,
                        (x as usize, y as usize, z as usize),
                        cfg.nbhd,
                    )
                    .unwrap();
                    let d = hamming(&k, key).unwrap();
                    assert!(d <= cfg.radius, "neighbor coordinate at distance {d}");
                }
                neighbor += 1;
            }
            MatchResult::Fallback { .. } => {
                assert!(
                    best_dist > cfg.radius,
                    "fallback despite a key at distance {best_dist}"
                );
                fallback += 1;
            }
        }
    }
    println!(
        "[criterion 2] PASS - 1000 queries, 0 violations (actual {actual}, neighbor {neighbor}, fallback {fallback})"
    );
}

/// Criterion 3: |ball(k,1)| = 27 and |ball(k,2)| = 378 for width 27, equal
/// as sets to exhaustive flip enumeration.
#[test]
fn acceptance_03_hamming_ball_combinatorics() {
    let mut key = BitKey::zero(27);
    for bit in [2usize, 7, 13, 21] {
        key.set(bit, true);
    }

    let ball1 = hamming_ball(&key, 1);
    assert_eq!(ball1.len(), 27);
    let mut expect1 = std::collections::HashSet::new();
    for i in 0..27 {
        let mut f = key;
        f.flip(i);
        expect1.insert(f);
    }
    assert_eq!(expect1, ball1.iter().copied().collect());

    let ball2 = hamming_ball(&key, 2);
    assert_eq!(ball2.len(), 378);
    let mut expect2 = expect1.clone();
    for i in 0..27 {
        for j in (i + 1)..27 {
            let mut f = key;
            f.flip(i);
            f.flip(j);
            expect2.insert(f);
        }
    }
    assert_eq!(expect2, ball2.iter().copied().collect());
    println!(
        "[criterion 3] PASS - |ball(k,1)| = 27, |ball(k,2)| = 378, exhaustive-flip set equality"
    );
}

/// Criterion 4: self-synthesis hit rate (s_ta u s_tn) exceeds 0.80 per
/// level. Also pins the oracle-frozen DSC regression floor for the same run.
#[test]
fn acceptance_04_hit_rate() {
    let template = shell(128, 43.52, 52.48, 0.0, 0);
    let cfg = SynthesisConfig::default(); // levels 2
    let coarse = downsample2x(
        &downsample2x(&template, cfg.pyramid_smooth).unwrap(),
        cfg.pyramid_smooth,
    )
    .unwrap();
    let run = synthesize_hierarchical(&coarse, &template, &cfg).unwrap();
    let rates: Vec<f64> = run.level_stats.iter().map(|s| s.hit_rate()).collect();
    for (level, &rate) in rates.iter().enumerate() {
        assert!(rate > 0.80, "level {level} hit rate {rate:.4} <= 0.80");
    }
    // regression floor frozen from the oracle run (measured 0.9366)
    let d = dsc(&run.output, &template).unwrap();
    assert!(d >= 0.92, "self-synthesis dsc regressed: {d:.4}");
    println!(
        "[criterion 4] PASS - per-level hit rates {:?} (> 0.80), self-synthesis dsc {d:.4}",
        rates
            .iter()
            .map(|r| (r * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );
}

/// Criterion 5: kd-tree exactness vs brute force on 10^4 seeded projected
/// points, 100 queries, tie-break included; zero violations.
#[test]
fn acceptance_05_kdtree_exactness() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let d = 20usize;
    let mut points: Vec<Vec<f64>> = (0..10_000)
        .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    // duplicated points force distance ties that must resolve by index
    for i in 0..50 {
        let src = points[i * 37].clone();
        points[5000 + i] = src;
    }
    let tree = kdtree_build(points.clone()).unwrap();
    for q_idx in 0..100 {
        let q: Vec<f64> = if q_idx % 4 == 0 {
            points[q_idx * 61].clone() // exact stored point, distance-0 ties
        } else {
            (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()
        };
        let (ti, td) = kdtree_query(&tree, &q).unwrap();
        let (bi, bd) = linear_scan(&points, &q).unwrap();
        assert_eq!(
            (ti, td),
            (bi, bd),
            "query {q_idx} disagrees with brute force"
        );
    }
    println!(
        "[criterion 5] PASS - 100/100 queries equal brute force over 10^4 points (ties included)"
    );
}

/// Criterion 6: on the same 64^3 shell active set, the bit-packed actual-key
/// storage is smaller than the n x 20 float feature matrix.
#[test]
fn acceptance_06_memory_ordering() {
    let template = shell(64, 22.0, 26.0, 0.0, 0);
    let cfg = SynthesisConfig::default();
    let index = build_index(&template, &cfg);
    let kd = build_kd_index(&template, cfg.nbhd, 20).unwrap();
    let n = active_voxels(&template, cfg.nbhd).len();

    let bytes_index = index.bytes_actual_keys_packed();
    let bytes_features = kd.bytes_features();
    assert_eq!(bytes_features, (n * 20 * 8) as u64);
    assert!(
        bytes_index < bytes_features,
        "bit-packed keys {bytes_index} not below float features {bytes_features}"
    );
    println!(
        "[criterion 6] PASS - bytes_index {bytes_index} < bytes_features {bytes_features} \
         ({} active voxels, {} distinct keys; ball tier adds {} keys x {} bytes)",
        n,
        index.keys_actual(),
        index.keys_neighbor(),
        index.key_bytes(),
    );
}

/// Criterion 7: one 256^3 level (index build + voxel update) with 4 threads
/// completes in < 180 s.
#[test]
fn acceptance_07_runtime_budget() {
    let n = 256usize;
    let template = shell(n, 0.34 * n as f64, 0.41 * n as f64, 0.0, 0);
    let cfg = SynthesisConfig {
        parallel: ParallelMode::SharedIndex(4),
        ..SynthesisConfig::default()
    };
    let coarse = downsample2x(&template, cfg.pyramid_smooth).unwrap();
    let guess = upsample_interp(&coarse, 2, InterpOrder::Trilinear).unwrap();

    let start = Instant::now();
    let index = build_index(&template, &cfg);
    let (_, stats) = synthesize_level(&guess, &template, &index, &cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 180.0,
        "level update took {elapsed:.1}s, budget 180s"
    );
    println!(
        "[criterion 7] PASS - 256^3 level updated in {elapsed:.1}s with 4 threads ({} queries, hit rate {:.4})",
        stats.queries,
        stats.hit_rate()
    );
}

/// Criterion 8: shared-index parallel equals serial bit-for-bit on the 128^3
/// phantom; partitioned-index is bit-identical across runs with one seed.
#[test]
fn acceptance_08_parallel_determinism() {
    let template = shell(128, 43.52, 52.48, 0.0, 0);
    let noisy = shell(128, 43.52, 52.48, 0.02, 9);

    let serial_cfg = SynthesisConfig::default();
    let index = build_index(&template, &serial_cfg);
    let (serial, _) = synthesize_level(&noisy, &template, &index, &serial_cfg).unwrap();

    let shared_cfg = SynthesisConfig {
        parallel: ParallelMode::SharedIndex(4),
        ..SynthesisConfig::default()
    };
    let (shared, _) = synthesize_level(&noisy, &template, &index, &shared_cfg).unwrap();
    assert_eq!(serial, shared, "shared-index parallel diverged from serial");

    let part_cfg = SynthesisConfig {
        parallel: ParallelMode::PartitionedIndex(4),
        seed: 7,
        ..SynthesisConfig::default()
    };
    let (pa, _) = synthesize_level_partitioned(&noisy, &template, &part_cfg, 4).unwrap();
    let (pb, _) = synthesize_level_partitioned(&noisy, &template, &part_cfg, 4).unwrap();
    assert_eq!(pa, pb, "partitioned-index runs diverged");
    println!("[criterion 8] PASS - shared == serial bitwise; partitioned reproducible across runs");
}

/// Criterion 9: DSC and Hausdorff reproduce the worked examples exactly.
#[test]
fn acceptance_09_metrics_ground_truth() {
    let rel = |got: f64, want: f64| (got - want).abs() <= 1e-12 * want.max(1.0);

    // 0.5 DSC: two 2x2x2 cubes overlapping in 4 voxels
    let mut a = VoxelGrid::new((4, 4, 4), (1.0, 1.0, 1.0)).unwrap();
    let mut b = VoxelGrid::new((4, 4, 4), (1.0, 1.0, 1.0)).unwrap();
    for z in 0..2 {
        for y in 0..2 {
            for x in 0..2 {
                a.set(x, y, z, true);
                b.set(x, y, z + 1, true);
            }
        }
    }
    let d = dsc(&a, &b).unwrap();
    assert!(rel(d, 0.5), "dsc {d}");

    // 3.0 mm: voxels at (0,0,0) and (3,0,0), spacing 1 mm
    let mut p = VoxelGrid::new((6, 6, 6), (1.0, 1.0, 1.0)).unwrap();
    let mut q = VoxelGrid::new((6, 6, 6), (1.0, 1.0, 1.0)).unwrap();
    p.set(0, 0, 0, true);
    q.set(3, 0, 0, true);
    let hd3 = hausdorff(&p, &q, 100.0).unwrap();
    assert!(rel(hd3, 3.0), "hd {hd3}");

    // 5.0 mm: 3-4-5 triangle
    let mut r = VoxelGrid::new((6, 6, 6), (1.0, 1.0, 1.0)).unwrap();
    r.set(3, 4, 0, true);
    let hd5 = hausdorff(&p, &r, 100.0).unwrap();
    assert!(rel(hd5, 5.0), "hd {hd5}");

    // trivial identities
    assert_eq!(dsc(&p, &p).unwrap(), 1.0);
    assert_eq!(hausdorff(&p, &p, 100.0).unwrap(), 0.0);
    println!("[criterion 9] PASS - dsc 0.5 and hd 3.0/5.0 mm exact to 1e-12 relative");
}

/// Criterion 10: marching cubes on the r=6 solid sphere is watertight,
/// positively oriented, area within 15% of 452.4 mm^2, volume within 15% of
/// 904.8 mm^3.
#[test]
fn acceptance_10_mesh_validity() {
    let solid = make_phantom(
        &PhantomSpec::SphereShell {
            r_in: 0.0,
            r_out: 6.0,
            perturb_rate: 0.0,
        },
        (16, 16, 16),
        (1.0, 1.0, 1.0),
        0,
    )
    .unwrap();
    let mesh = marching_cubes(&solid, 0.5).unwrap();
    assert!(mesh.is_watertight(), "edge multiplicity violated");
    let area = mesh.area();
    let volume = mesh.signed_volume();
    let analytic_area = 4.0 * std::f64::consts::PI * 36.0;
    let analytic_volume = 4.0 / 3.0 * std::f64::consts::PI * 216.0;
    assert!(volume > 0.0, "orientation flipped: volume {volume}");
    assert!(
        (area - analytic_area).abs() / analytic_area < 0.15,
        "area {area:.1} vs {analytic_area:.1}"
    );
    assert!(
        (volume - analytic_volume).abs() / analytic_volume < 0.15,
        "volume {volume:.1} vs {analytic_volume:.1}"
    );
    println!(
        "[criterion 10] PASS - watertight, oriented, area {area:.1}/{analytic_area:.1} mm^2, volume {volume:.1}/{analytic_volume:.1} mm^3"
    );
}

/// Criterion 11: the mean terracing step of the nearest-upsampled shell
/// strictly exceeds the hash-synthesized shell's on the self-synthesis
/// phantom.
#[test]
fn acceptance_11_smoothness_ordering() {
    let template = shell(128, 43.52, 52.48, 0.0, 0);
    let cfg = SynthesisConfig::default(); // levels 2
    let coarse = downsample2x(
        &downsample2x(&template, cfg.pyramid_smooth).unwrap(),
        cfg.pyramid_smooth,
    )
    .unwrap();

    let blocky = upsample_interp(&coarse, 4, InterpOrder::Nearest).unwrap();
    let synthesized = synthesize_hierarchical(&coarse, &template, &cfg)
        .unwrap()
        .output;

    let step_blocky = terracing_stats(&blocky).mean_step();
    let step_synth = terracing_stats(&synthesized).mean_step();
    assert!(
        step_blocky > step_synth,
        "expected nearest-upsampled to terrace worse: {step_blocky:.4} vs {step_synth:.4}"
    );
    println!(
        "[criterion 11] PASS - mean step nearest-upsampled {step_blocky:.4} > synthesized {step_synth:.4}"
    );
}
