use equidist::field_census::*;
use equidist::{ClosedInterval, Error, FnTransform};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use proptest::prelude::*;
use std::collections::BTreeMap;

// Oracle: projective point count by scanning every (x, y) pair.
fn brute_trace(a: u64, b: u64, p: u64) -> i64 {
    let mut n = 1i64;
    for x in 0..p {
        let rhs = (x * x % p * x + a * x + b) % p;
        n += (0..p).filter(|y| y * y % p == rhs).count() as i64;
    }
    p as i64 + 1 - n
}

fn brute_full(p: u64) -> BTreeMap<i64, u64> {
    let mut m = BTreeMap::new();
    for a in 0..p {
        for b in 0..p {
            if (4 * a * a * a + 27 * b * b) % p != 0 {
                *m.entry(brute_trace(a, b, p)).or_insert(0) += 1;
            }
        }
    }
    m
}

#[test]
fn legendre_examples() {
    let f = PrimeField::new(5).unwrap();
    assert_eq!(legendre_symbol(0, &f), 0);
    assert_eq!(legendre_symbol(1, &f), 1);
    assert_eq!(legendre_symbol(2, &f), -1);
    assert_eq!(legendre_symbol(-1, &f), 1);
}

#[test]
fn character_table_balanced() {
    for p in [5u64, 7, 11, 101] {
        let f = PrimeField::new(p).unwrap();
        let plus = (0..p).filter(|&x| f.chi(x) == 1).count() as u64;
        let minus = (0..p).filter(|&x| f.chi(x) == -1).count() as u64;
        assert_eq!((plus, minus, f.chi(0)), ((p - 1) / 2, (p - 1) / 2, 0));
    }
}

#[test]
fn rejects_bad_moduli() {
    assert_eq!(PrimeField::new(9).unwrap_err(), Error::CompositeModulus(9));
    assert_eq!(PrimeField::new(3).unwrap_err(), Error::CompositeModulus(3));
    assert!(full_family_histogram(15, 1).is_err());
}

#[test]
fn frobenius_examples() {
    let f = PrimeField::new(5).unwrap();
    assert_eq!(frobenius_trace(1, 0, &f), Ok(2));
    assert_eq!(frobenius_trace(0, 1, &f), Ok(0));
    assert_eq!(frobenius_trace(0, 0, &f), Err(Error::SingularCurve { a: 0, b: 0, p: 5 }));
}

#[test]
fn full_census_p5() {
    let h = full_family_histogram(5, 1).unwrap();
    assert_eq!(h.total, 20);
    for (&t, &c) in &h.counts {
        assert_eq!(c, h.count(-t));
    }
}

#[test]
fn full_census_p7_frozen() {
    let h = full_family_histogram(7, 2).unwrap();
    let expect: BTreeMap<i64, u64> =
        [(-5, 1), (-4, 4), (-3, 3), (-2, 6), (-1, 4), (0, 6), (1, 4), (2, 6), (3, 3), (4, 4), (5, 1)].into_iter().collect();
    assert_eq!(h.counts, expect);
}

#[test]
fn census_matches_brute_force() {
    for p in [5u64, 7, 11, 13] {
        let fast = full_family_histogram(p, 3).unwrap();
        assert_eq!(fast.counts, brute_full(p), "p = {p}");
        assert_eq!(fast.total, p * (p - 1));
        assert_eq!(naive_full_histogram(p).unwrap().counts, fast.counts);
    }
}

#[test]
fn census_worker_independent() {
    let a = full_family_histogram(211, 1).unwrap();
    let b = full_family_histogram(211, 4).unwrap();
    assert_eq!(a, b);
    assert!(a.counts.keys().all(|t| (t * t) as u64 <= 4 * 211));
}

#[test]
fn one_param_examples() {
    let spec = FamilySpec::one_param(vec![0, 1], vec![1]).unwrap();
    let h = one_param_histogram(&spec, 7).unwrap();
    // 4t³ + 27 has no roots mod 7.
    assert_eq!(h.total, 7);
    assert_eq!(h.counts, [(-4, 4), (3, 3)].into_iter().collect());
    let spec_b = FamilySpec::one_param(vec![1], vec![0, 1]).unwrap();
    let hb = one_param_histogram(&spec_b, 7).unwrap();
    let roots = (0..7u64).filter(|t| (4 + 27 * t * t) % 7 == 0).count() as u64;
    assert_eq!(hb.total, 7 - roots);
    assert_eq!(FamilySpec::one_param(vec![1], vec![1]), Err(Error::ConstantJInvariant));
    assert_eq!(FamilySpec::one_param(vec![0, 0, 1], vec![0, 0, 0, 1]), Err(Error::ConstantJInvariant));
}

#[test]
fn moments_exact() {
    let h = full_family_histogram(7, 1).unwrap();
    let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
    assert_eq!(power_moment(&h, 0), r(1, 1));
    assert_eq!(power_moment(&h, 1), r(48, 7));
    assert_eq!(power_moment(&h, 2), r(664, 7));
    assert_eq!(catalan_main_term(7, 2), r(98, 1));
}

#[test]
fn moments_approach_catalan() {
    let h = full_family_histogram(1009, 4).unwrap();
    let m = power_moment(&h, 2);
    let c = catalan_main_term(1009, 2);
    let rel = ((m / c) - BigRational::from_integer(1.into())).abs();
    assert!(rel < BigRational::new(1.into(), 10.into()));
}

#[test]
fn sym_sums() {
    let h7 = full_family_histogram(7, 1).unwrap();
    assert!((sym_power_sum(&h7, 0) - 7.0 / 6.0).abs() < 1e-14);
    assert!(sym_power_sum(&h7, 1).abs() <= 3.0 * sym_envelope(7, 1));
    let spec = FamilySpec::one_param(vec![0, 1], vec![1]).unwrap();
    let h11 = one_param_histogram(&spec, 11).unwrap();
    assert!(sym_power_sum(&h11, 2).abs() <= 3.0 * sym_envelope(11, 2));
}

#[test]
fn sym_recursion_and_endpoints() {
    for i in 0..=200 {
        let th = std::f64::consts::PI * i as f64 / 200.0;
        let c = th.cos();
        for k in 1..20 {
            let lhs = sym_k(c, k + 1);
            let rhs = 2.0 * c * sym_k(c, k) - sym_k(c, k - 1);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
    assert_eq!(sym_k(1.0f64, 7), 8.0);
    assert_eq!(sym_k(-1.0f64, 7), -8.0);
}

#[test]
fn joint_counts() {
    let h = full_family_histogram(5, 1).unwrap();
    let id = FnTransform::new(1, |x: &[f64]| x[0]);
    assert_eq!(joint_region_count(&[&h], &id, ClosedInterval::new(-1.0, 1.0).unwrap()), Ok(20));
    let sum = FnTransform::new(2, |x: &[f64]| x[0] + x[1]);
    assert_eq!(joint_region_count(&[&h, &h], &sum, ClosedInterval::new(-2.0, 2.0).unwrap()), Ok(400));
    let prod = FnTransform::new(2, |x: &[f64]| x[0] * x[1]);
    assert_eq!(joint_region_count(&[&h, &h], &prod, ClosedInterval::new(0.0, 1.0).unwrap()), Ok(272));
    assert_eq!(
        joint_region_count(&[&h], &sum, ClosedInterval::new(0.0, 1.0).unwrap()),
        Err(Error::ArityMismatch { expected: 2, got: 1 })
    );
    let h7 = full_family_histogram(7, 1).unwrap();
    assert_eq!(joint_region_count(&[&h, &h7], &sum, ClosedInterval::new(0.0, 1.0).unwrap()), Err(Error::MixedPrimes(5, 7)));
}

#[test]
fn serialization_round_trips() {
    let h = full_family_histogram(13, 1).unwrap();
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("t,count\n-7,"));
    assert_eq!(TraceHistogram::read_csv(&buf[..], 13, FamilySpec::Full).unwrap(), h);
    assert_eq!(TraceHistogram::from_json(&h.to_json().unwrap()).unwrap(), h);
    let spec = FamilySpec::one_param(vec![0, 1], vec![1]).unwrap();
    let g = one_param_histogram(&spec, 13).unwrap();
    assert_eq!(TraceHistogram::from_json(&g.to_json().unwrap()).unwrap(), g);
}

fn small_prime() -> impl Strategy<Value = u64> {
    prop::sample::select(vec![5u64, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn legendre_multiplicative(p in small_prime(), a in -500i64..500, b in -500i64..500) {
        let f = PrimeField::new(p).unwrap();
        prop_assert_eq!(legendre_symbol(a * b, &f), legendre_symbol(a, &f) * legendre_symbol(b, &f));
        prop_assert_eq!(legendre_symbol(a, &f) == 0, a.rem_euclid(p as i64) == 0);
    }

    #[test]
    fn trace_satisfies_hasse_and_counts_points(p in small_prime(), a in 0u64..43, b in 0u64..43) {
        let f = PrimeField::new(p).unwrap();
        match frobenius_trace(a, b, &f) {
            Ok(t) => {
                prop_assert!((t * t) as u64 <= 4 * p);
                prop_assert_eq!(t, brute_trace(a % p, b % p, p));
            }
            Err(e) => prop_assert_eq!(e, Error::SingularCurve { a: a % p, b: b % p, p }),
        }
    }

    #[test]
    fn census_symmetric_with_exact_moments(p in small_prime(), r in 0u32..4) {
        let h = full_family_histogram(p, 2).unwrap();
        prop_assert_eq!(h.total, p * (p - 1));
        prop_assert!(h.counts.iter().all(|(&t, &c)| h.count(-t) == c));
        let num: BigInt = h.counts.iter().map(|(&t, &c)| BigInt::from(t).pow(2 * r) * c).sum();
        prop_assert_eq!(power_moment(&h, r), BigRational::new(num, BigInt::from(p * (p - 1))));
    }
}
