use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bevlift::bench::BenchInstance;
use bevlift::geometry::Vec3;
use bevlift::lift::{FrustumPoints, WeightSource};
use bevlift::pooling::{compare_grids, BevGridSpec, Engine, ScatterStrategy, ENGINE_ABS_TOL, ENGINE_REL_TOL};

fn all_engines(workers: usize) -> Vec<Engine> {
    vec![
        Engine::Sequential,
        Engine::PrefixSum,
        Engine::ScatterAdd { workers, strategy: ScatterStrategy::PartialGrids },
        Engine::ScatterAdd { workers, strategy: ScatterStrategy::Atomic },
    ]
}

#[test]
fn engines_agree_on_large_instance() {
    let instance = BenchInstance { points: 100_000, channels: 64, rows: 128, cols: 128, seed: 21 };
    let (points, spec) = (instance.generate(), instance.grid());
    let reference = Engine::Sequential.pool(&points, &spec).unwrap();
    for engine in all_engines(8).into_iter().skip(1) {
        let out = engine.pool(&points, &spec).unwrap();
        let diff = compare_grids(out.grid.data(), reference.grid.data(), ENGINE_REL_TOL, ENGINE_ABS_TOL);
        assert!(diff.within, "{}: {diff:?}", out.engine);
        assert_eq!(out.dropped, reference.dropped);
    }
}

#[test]
fn hand_placed_points_sum_per_cell() {
    let spec = BevGridSpec::square(2.0, 4, -1.0, 1.0);
    let coords = vec![
        Vec3::new(-1.9, -1.9, 0.0),
        Vec3::new(-1.1, -1.5, 0.5),
        Vec3::new(1.5, 1.5, 0.0),
        Vec3::new(1.5, 1.5, 2.0), // above the z range
        Vec3::new(5.0, 0.0, 0.0), // outside the grid
    ];
    let feats = vec![1.0f32, 10.0, 2.0, 20.0, 4.0, 40.0, 8.0, 80.0, 16.0, 160.0];
    let points = vec![FrustumPoints::new(2, coords, feats, WeightSource::Synthetic).unwrap()];
    for engine in all_engines(3) {
        let out = engine.pool(&points, &spec).unwrap();
        assert_eq!(out.dropped, 2);
        let id0 = spec.linear_id(&Vec3::new(-1.9, -1.9, 0.0)).unwrap() as usize;
        let id1 = spec.linear_id(&Vec3::new(1.5, 1.5, 0.0)).unwrap() as usize;
        let cells = spec.num_cells();
        let data = out.grid.data();
        assert_eq!((data[id0], data[cells + id0]), (3.0, 30.0), "{}", out.engine);
        assert_eq!((data[id1], data[cells + id1]), (4.0, 40.0), "{}", out.engine);
        assert_eq!(data.iter().sum::<f64>(), 77.0);
    }
}

fn random_set(seed: u64, n: usize) -> (Vec<FrustumPoints>, BevGridSpec) {
    let spec = BevGridSpec::square(8.0, 16, -2.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| Vec3::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0), rng.gen_range(-3.0..3.0)))
        .collect();
    let feats = (0..n * 4).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    (vec![FrustumPoints::new(4, coords, feats, WeightSource::Synthetic).unwrap()], spec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pooling_ignores_point_order(seed in 0u64..10_000, n in 1usize..400, workers in 1usize..6) {
        let (points, spec) = random_set(seed, n);
        let p = &points[0];
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.reverse();
        order.rotate_left(seed as usize % n);
        let coords = order.iter().map(|&i| p.coords()[i]).collect();
        let feats = order.iter().flat_map(|&i| p.feature(i).to_vec()).collect();
        let shuffled = vec![FrustumPoints::new(4, coords, feats, WeightSource::Synthetic).unwrap()];
        for engine in all_engines(workers) {
            let a = engine.pool(&points, &spec).unwrap();
            let b = engine.pool(&shuffled, &spec).unwrap();
            let diff = compare_grids(b.grid.data(), a.grid.data(), ENGINE_REL_TOL, ENGINE_ABS_TOL);
            prop_assert!(diff.within, "{}: {:?}", a.engine, diff);
        }
    }

    #[test]
    fn pooling_is_linear_in_features(seed in 0u64..10_000, n in 1usize..400, exp in -3i32..4) {
        // power-of-two scaling is exact in binary floating point
        let alpha = 2f32.powi(exp);
        let (points, spec) = random_set(seed, n);
        let scaled: Vec<_> = points.iter().map(|p| p.scaled(alpha)).collect();
        for engine in [Engine::Sequential, Engine::scatter_add(2)] {
            let a = engine.pool(&points, &spec).unwrap();
            let b = engine.pool(&scaled, &spec).unwrap();
            for (x, y) in a.grid.data().iter().zip(b.grid.data()) {
                prop_assert_eq!(x * alpha as f64, *y);
            }
        }
    }

    #[test]
    fn dropped_count_is_engine_independent(seed in 0u64..10_000, n in 0usize..300) {
        let (points, spec) = random_set(seed, n);
        let counts: Vec<usize> = all_engines(3).iter().map(|e| e.pool(&points, &spec).unwrap().dropped).collect();
        prop_assert!(counts.windows(2).all(|w| w[0] == w[1]));
    }
}
