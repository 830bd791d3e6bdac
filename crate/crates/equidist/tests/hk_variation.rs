use equidist::hk_variation::*;
use equidist::{ClosedInterval, Error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type G = GridFunction<f64>;

fn uniform(k: usize) -> Vec<f64> {
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

fn grid2(k: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> G {
    G::from_fn(vec![uniform(k), uniform(k)], |x| f(x[0], x[1])).unwrap()
}

// Oracle: one-dimensional total variation of the sampled sequence.
fn tv(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[test]
fn vitali_examples() {
    for k in [1usize, 3, 10] {
        assert!((vitali_variation(&grid2(k, |x, y| x * y)) - 1.0).abs() < 1e-12);
        assert_eq!(vitali_variation(&grid2(k, |_, _| 2.5)), 0.0);
    }
    let cuts = vec![0.0, 0.3, 0.3 + 1e-9, 0.7, 0.7 + 1e-9, 1.0];
    let sq = G::from_fn(vec![cuts.clone(), cuts], |x| {
        if x.iter().all(|&v| (0.3..=0.7).contains(&v)) {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    assert!((vitali_variation(&sq) - 4.0).abs() < 1e-12);
}

#[test]
fn hardy_krause_examples() {
    assert!((hk_variation(&grid2(7, |x, y| x * y)) - 3.0).abs() < 1e-12);
    assert_eq!(hk_variation(&grid2(7, |_, _| -1.0)), 0.0);
    let add = grid2(9, |x, y| x + y);
    assert!(vitali_variation(&add).abs() < 1e-12);
    assert!((hk_variation(&add) - 2.0).abs() < 1e-12);
}

#[test]
fn one_dimensional_is_total_variation() {
    let g = G::from_fn(vec![uniform(200)], |x| (7.0 * x[0]).sin()).unwrap();
    assert!((vitali_variation(&g) - tv(&g.values)).abs() < 1e-12);
    assert!((hk_variation(&g) - tv(&g.values)).abs() < 1e-12);
}

#[test]
fn grid_validation() {
    assert!(G::new(vec![vec![0.0, 0.5]], vec![1.0, 2.0]).is_err());
    assert!(G::new(vec![vec![0.0, 0.5, 0.5, 1.0]], vec![0.0; 4]).is_err());
    assert_eq!(G::new(vec![vec![0.0, 1.0]], vec![1.0]).unwrap_err(), Error::DimensionMismatch { expected: 2, got: 1 });
}

#[test]
fn indicator_bound_examples() {
    let f = LevelCount::Finite;
    assert_eq!(indicator_variation_bound(&[(f(1), f(1))]).unwrap().bound(), 2.0);
    let square = |x: f64| x * x;
    let a = count_level_crossings(square, 0.25, -1.0, 1.0, 10_000);
    let b = count_level_crossings(square, 1.0, -1.0, 1.0, 10_000);
    assert_eq!((a, b), (f(2), f(2)));
    assert_eq!(indicator_variation_bound(&[(a, b)]).unwrap().bound(), 4.0);
    assert_eq!(indicator_variation_bound(&[(f(1), f(1)), (f(1), f(1))]).unwrap().bound(), 4.0);
    assert_eq!(indicator_variation_bound(&[(f(1), f(1)), (LevelCount::Infinite, f(0))]), Err(Error::InfiniteLevelSet(1)));
    assert_eq!(count_level_crossings(|_| 0.5, 0.5, 0.0, 1.0, 1000), LevelCount::Infinite);
}

#[test]
fn indicator_bound_matches_exact_variation() {
    // χ_J(cos 2πθ) has variation 2·#{θ: cos 2πθ ∈ ∂J}, one crossing per preimage.
    for (a, b) in [(-0.5, 0.3), (0.1, 0.9), (-0.95, -0.2)] {
        let j = ClosedInterval::new(a, b).unwrap();
        let c = |t: f64| (std::f64::consts::TAU * t).cos();
        let counts = (count_level_crossings(c, a, 0.0, 1.0, 100_000), count_level_crossings(c, b, 0.0, 1.0, 100_000));
        let bound = indicator_variation_bound(&[counts]).unwrap();
        let g = G::from_fn(vec![uniform(100_000)], |x| if j.contains(c(x[0])) { 1.0 } else { 0.0 }).unwrap();
        assert!((hk_variation(&g) - bound.bound()).abs() < 1e-12, "[{a},{b}]");
    }
}

#[test]
fn box_union_examples() {
    let cuts = vec![uniform(4), uniform(4)];
    let mut one = vec![false; 16];
    one[5] = true;
    let r = box_union_variation_bound(&BoxUnion::from_mask(cuts.clone(), &one));
    assert_eq!((r.boxes.len(), r.bound), (1, 8.0));

    let k = 4;
    let mut diag = vec![false; 16];
    for i in 0..k {
        diag[i * 4 + i] = true;
    }
    let u = BoxUnion::from_mask(cuts.clone(), &diag);
    let r = box_union_variation_bound(&u);
    assert!(r.boxes.len() <= 2 * k);
    let exact = hk_variation(&u.indicator_grid().unwrap());
    assert!(exact <= r.bound + 1e-12, "{exact} > {}", r.bound);

    let full = BoxUnion::from_mask(cuts, &[true; 16]);
    assert_eq!(box_union_variation_bound(&full).boxes, vec![vec![(0, 4), (0, 4)]]);
}

#[test]
fn box_union_membership() {
    let u = BoxUnion::from_mask(vec![uniform(2)], &[false, true]);
    assert!(!u.contains(&[0.25]) && u.contains(&[0.5]) && u.contains(&[1.0]));
    assert!(!u.contains(&[1.5]));
    assert_eq!(u.vertex_count(), 3);
}

#[test]
fn appendix_examples() {
    let j = ClosedInterval::new(-0.1, 0.1).unwrap();
    let (p10, v10) = appendix_partition(1.0, 1.0, j, 10.0).unwrap();
    assert!(v10 >= 10.0, "{v10}");
    let (p100, v100) = appendix_partition(1.0, 1.0, j, 100.0).unwrap();
    assert!(v100 >= 100.0, "{v100}");
    let growth = p100.cut_count() as f64 / p10.cut_count() as f64;
    assert!(growth > 5.0 && growth < 15.0, "{growth}");
    // The returned value is the Vitali sum of χ_J on the returned grid.
    let f = |t: &[f64]| {
        let s = (std::f64::consts::TAU * t[0]).cos() + (std::f64::consts::TAU * t[1]).cos();
        if j.contains(s) {
            1.0
        } else {
            0.0
        }
    };
    let g = G::from_fn(vec![p10.x_cuts.clone(), p10.y_cuts.clone()], f).unwrap();
    assert_eq!(vitali_variation(&g), v10);
    assert_eq!(appendix_partition(1.0, 1.0, ClosedInterval::new(2.0, 3.0).unwrap(), 10.0).unwrap_err(), Error::InfeasibleTarget);
    assert_eq!(appendix_partition(0.0, 1.0, j, 10.0).unwrap_err(), Error::ZeroScale(0));
}

#[test]
fn appendix_negative_and_lower_edge() {
    for (l1, l2, a, b) in [(-1.0, 1.0, -0.1, 0.1), (1.0, -0.5, 0.2, 3.0), (0.7, 1.3, -5.0, -0.4)] {
        let (_, v) = appendix_partition(l1, l2, ClosedInterval::new(a, b).unwrap(), 40.0).unwrap();
        assert!(v >= 40.0, "({l1},{l2}) [{a},{b}]: {v}");
    }
}

#[test]
fn partition_csv() {
    let part = Partition2D { x_cuts: vec![0.0, 0.5, 1.0], y_cuts: vec![0.0, 1.0] };
    let mut buf = Vec::new();
    part.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "axis,cut\nx,0.0\nx,0.5\nx,1.0\ny,0.0\ny,1.0\n");
}

#[test]
fn tensor_products() {
    // (|f(1)| + hk f)(|g(1)| + hk g) = |f(1) g(1)| + hk(f⊗g), face by face.
    // Worst ratio hk(f⊗g) / (‖f‖·hk g + ‖g‖·hk f) on this fixed suite.
    const PRODUCT_CONSTANT: f64 = 4.5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = G::new(vec![uniform(5)], (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let g = G::new(vec![uniform(4)], (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (f1, g1) = (f.values.last().unwrap().abs(), g.values.last().unwrap().abs());
        let lhs = hk_variation(&f.tensor(&g));
        let norm = (f1 + hk_variation(&f)) * (g1 + hk_variation(&g)) - f1 * g1;
        assert!((lhs - norm).abs() < 1e-12);
        worst = worst.max(lhs / (f.sup_norm() * hk_variation(&g) + g.sup_norm() * hk_variation(&f)));
    }
    assert!(worst <= PRODUCT_CONSTANT, "{worst}");
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> G {
    let grids: Vec<Vec<f64>> = (0..n).map(|_| uniform(rng.gen_range(1..6))).collect();
    let len = grids.iter().map(|g| g.len()).product();
    G::new(grids, (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subadditive(seed in any::<u64>(), n in 1usize..=3, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_grid(&mut rng, n);
        let values = (0..f.values.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let g = G::new(f.grids.clone(), values).unwrap();
        let combo = f.linear_combination(a, &g, b).unwrap();
        prop_assert!(hk_variation(&combo) <= a.abs() * hk_variation(&f) + b.abs() * hk_variation(&g) + 1e-9);
    }

    #[test]
    fn refinement_never_decreases(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coarse = rng.gen_range(1..5usize);
        let fine = coarse * rng.gen_range(2..4usize);
        let a: f64 = rng.gen_range(1.0..9.0);
        let f = move |x: &[f64]| (a * x[0]).sin() * (x[1] * x[1] - 0.4 * x[0]);
        let vc = vitali_variation(&G::from_fn(vec![uniform(coarse), uniform(coarse)], f).unwrap());
        let vf = vitali_variation(&G::from_fn(vec![uniform(fine), uniform(fine)], f).unwrap());
        prop_assert!(vf >= vc - 1e-12);
    }

    #[test]
    fn recover_bounds_exact_variation(seed in any::<u64>(), n in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(2..6usize);
        let cuts = vec![uniform(k); n];
        let mask: Vec<bool> = (0..k.pow(n as u32)).map(|_| rng.gen_bool(0.4)).collect();
        let u = BoxUnion::from_mask(cuts, &mask);
        let r = box_union_variation_bound(&u);
        prop_assert_eq!(BoxUnion { cuts: u.cuts.clone(), boxes: r.boxes.clone() }.mask(), mask);
        prop_assert!(hk_variation(&u.indicator_grid().unwrap()) <= r.bound + 1e-9);
    }
}
