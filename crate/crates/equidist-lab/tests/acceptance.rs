//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` fail on the data itself (see the README).
//! The binary exits nonzero when any other criterion fails, or when a known failure starts passing.

use equidist::field_census::{catalan_main_term, full_family_histogram, power_moment, TraceHistogram};
use equidist::hecke::{dim_cuspforms_level1, eigen_angles_level1, trace_hecke_level1, weyl_cos_sum_level1};
use equidist::hk_variation::{hk_variation, vitali_variation};
use equidist::selberg::{box_indices, coefficient_bound, cochrane_factors, delta_m_intervals, Sign};
use equidist::{Grid, Interval};
use equidist_lab::experiments::{run, run_census};
use equidist_lab::{ExperimentConfig, Suite};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

const KNOWN_FAILURES: [u32; 3] = [5, 9, 10];
const PRIMES: [u64; 4] = [101, 211, 401, 1009];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn suite(cfg: ExperimentConfig) -> Suite {
    run(&cfg).unwrap_or_else(|e| panic!("{} failed: {e}", cfg.experiment))
}

fn joint_ec(f: &str, j: (f64, f64), workers: usize) -> ExperimentConfig {
    ExperimentConfig {
        primes: PRIMES.to_vec(),
        n: 2,
        f_expr: Some(f.into()),
        j: Some(j),
        workers,
        ..ExperimentConfig::new("joint-ec")
    }
}

fn joint_mf_prime(workers: usize) -> ExperimentConfig {
    ExperimentConfig {
        weights: (1..=5).map(|i| vec![100 * i, 100 * i]).collect(),
        f_expr: Some("x1*x2".into()),
        j: Some((0.0, 1.0)),
        workers,
        ..ExperimentConfig::new("joint-mf-prime")
    }
}

const JOINT_GRID: [(&str, (f64, f64)); 4] =
    [("x1+x2", (-0.5, 0.5)), ("x1*x2", (-0.5, 0.5)), ("x1+x2", (0.0, 1.0)), ("x1*x2", (0.0, 1.0))];

// Point count by Euler's criterion, independent of the census code.
fn brute_trace(a: u64, b: u64, p: u64) -> i64 {
    let pow = |mut base: u64, mut e: u64| {
        let mut acc = 1u64;
        base %= p;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base % p;
            }
            base = base * base % p;
            e >>= 1;
        }
        acc
    };
    let mut points = 1i64;
    for x in 0..p {
        let rhs = (x * x % p * x + a * x + b) % p;
        points += match rhs {
            0 => 1,
            _ if pow(rhs, (p - 1) / 2) == 1 => 2,
            _ => 0,
        };
    }
    p as i64 + 1 - points
}

fn brute_histogram(p: u64) -> BTreeMap<i64, u64> {
    let mut out = BTreeMap::new();
    for a in 0..p {
        for b in 0..p {
            if !(4 * a * a % p * a + 27 * b * b).is_multiple_of(p) {
                *out.entry(brute_trace(a, b, p)).or_insert(0) += 1;
            }
        }
    }
    out
}

fn census_correctness() -> Outcome {
    let mut worst = Duration::ZERO;
    for p in [5u64, 7, 11, 13] {
        let (h, dt) = timed(|| full_family_histogram(p, 0).unwrap());
        worst = worst.max(dt);
        if h.counts != brute_histogram(p) || h.total != p * (p - 1) {
            return outcome(false, format!("histogram mismatch at p={p}"));
        }
    }
    outcome(worst < Duration::from_secs(1), format!("p in 5..13 match enumeration, slowest {worst:.2?}"))
}

fn birch_effectiveness() -> Outcome {
    let (s, dt) = timed(|| suite(ExperimentConfig { primes: PRIMES.to_vec(), ..ExperimentConfig::new("birch") }));
    let errors: Vec<String> = s.rows.iter().map(|r| format!("{:.4}", r.error)).collect();
    let rows_ok = s.rows.iter().all(|r| r.pass);
    let decreasing = s.rows.windows(2).all(|w| w[1].error < w[0].error);
    outcome(rows_ok && decreasing && dt < Duration::from_secs(30), format!("errors {errors:?}, C={:.4}, {dt:.2?}", s.fits[0].constant))
}

fn birch_moments() -> Outcome {
    let h = full_family_histogram(1009, 0).unwrap();
    let mut worst: f64 = 0.0;
    for r in 1..=3 {
        let ratio = (power_moment(&h, r) / catalan_main_term(1009, r)).to_f64().unwrap();
        worst = worst.max((ratio - 1.0).abs());
    }
    for p in [5u64, 7, 11, 13] {
        let brute = brute_histogram(p);
        for r in 0..=3u32 {
            let num: BigInt = brute.iter().map(|(&t, &c)| BigInt::from(t).pow(2 * r) * BigInt::from(c)).sum();
            let hist = TraceHistogram { counts: brute.clone(), ..full_family_histogram(p, 0).unwrap() };
            if power_moment(&hist, r) != BigRational::new(num, BigInt::from(p * (p - 1))) {
                return outcome(false, format!("exact moment mismatch at p={p} R={r}"));
            }
        }
    }
    outcome(worst <= 0.15, format!("max |ratio-1| at p=1009 is {worst:.2e}; exact moments match for p<=13"))
}

fn moment_rows(prefix: &str, k_max: u32) -> (Vec<equidist_lab::ExperimentReport>, Duration) {
    let (s, dt) = timed(|| suite(ExperimentConfig { primes: vec![101, 1009], k_max: Some(k_max), ..ExperimentConfig::new("moments") }));
    (s.rows.into_iter().filter(|r| r.case.starts_with(prefix)).collect(), dt)
}

fn katz_bound() -> Outcome {
    let (rows, dt) = moment_rows("katz", 10);
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.case.as_str()).collect();
    outcome(rows.len() == 20 && failed.is_empty() && dt < Duration::from_secs(30), format!("{} rows, failures {failed:?}, {dt:.2?}", rows.len()))
}

fn michel_bound() -> Outcome {
    let (rows, _) = moment_rows("michel", 6);
    let failed: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| format!("{} err {:.4} > {:.4}", r.case, r.error, r.bound)).collect();
    outcome(rows.len() == 12 && failed.is_empty(), format!("C={:.4}, failures {failed:?}", rows.first().map_or(0.0, |r| r.constant)))
}

fn clearance(ints: &[Interval], x: &[f64]) -> f64 {
    ints.iter()
        .zip(x)
        .flat_map(|(i, &xj)| [i.a, i.b].map(|e| (xj - e).rem_euclid(1.0)).map(|d| d.min(1.0 - d)))
        .fold(f64::INFINITY, f64::min)
}

fn selberg_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0usize;
    for n in 1..=3usize {
        for inst in 0..200 {
            let ints: Vec<Interval> = (0..n)
                .map(|_| {
                    let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                    Interval::new(a.min(b), a.max(b)).unwrap()
                })
                .collect();
            let degrees: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=12)).collect();
            let delta = delta_m_intervals(&ints, &degrees);
            for sign in [Sign::Plus, Sign::Minus] {
                let f = cochrane_factors(&ints, &degrees, sign).unwrap();
                for _ in 0..50 {
                    let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
                    if clearance(&ints, &x) < 1e-3 {
                        continue;
                    }
                    let inside = ints.iter().zip(&x).all(|(i, &xj)| i.contains(xj));
                    let (v, c) = (f.eval(&x), if inside { 1.0 } else { 0.0 });
                    let ok = match sign {
                        Sign::Plus => v >= c - 1e-8,
                        Sign::Minus => v <= c + 1e-8,
                    };
                    if !ok {
                        return outcome(false, format!("sandwich broken n={n} instance {inst}"));
                    }
                    checked += 1;
                }
                if f.integral_gap() > delta + 1e-12 {
                    return outcome(false, format!("integral bound broken n={n} instance {inst}"));
                }
                if box_indices(&degrees).iter().any(|m| f.coeff(m).norm() > coefficient_bound(&ints, &degrees, m) + 1e-12) {
                    return outcome(false, format!("coefficient bound broken n={n} instance {inst}"));
                }
            }
        }
    }
    outcome(true, format!("600 instances, {checked} interior points"))
}

fn erdos_turan() -> Outcome {
    let s = suite(ExperimentConfig { primes: vec![101, 401], samples: Some(500), ..ExperimentConfig::new("et-check") });
    let failed = s.rows.iter().filter(|r| !r.pass).count();
    outcome(s.rows.len() == 3 * 2 * 500 && failed == 0, format!("{} boxes, {failed} violations", s.rows.len()))
}

fn koksma_hlawka() -> Outcome {
    let mut certs = suite(ExperimentConfig { primes: PRIMES.to_vec(), ..ExperimentConfig::new("birch") }).certificates;
    for (f, j) in JOINT_GRID {
        certs.extend(suite(joint_ec(f, j, 0)).certificates);
    }
    let failed: Vec<&str> = certs.iter().filter(|c| !c.pass).map(|c| c.case.as_str()).collect();
    outcome(failed.is_empty(), format!("{} certificates, failures {failed:?}", certs.len()))
}

fn joint_elliptic() -> Outcome {
    let (suites, dt) = timed(|| JOINT_GRID.map(|(f, j)| (f, j, suite(joint_ec(f, j, 0)))));
    let mut notes = Vec::new();
    let mut pass = dt < Duration::from_secs(60);
    for (f, j, s) in &suites {
        let rows_ok = s.rows.iter().all(|r| r.pass);
        let decreasing = s.rows.windows(2).all(|w| w[1].error < w[0].error);
        if !(rows_ok && decreasing) {
            pass = false;
            let bad: Vec<String> = s.rows.iter().map(|r| format!("{:.2e}{}", r.error, if r.pass { "" } else { "!" })).collect();
            notes.push(format!("{f} on [{},{}]: {bad:?}", j.0, j.1));
        }
    }
    outcome(pass, format!("{dt:.2?}; {}", if notes.is_empty() { "all rows pass and decrease".into() } else { notes.join("; ") }))
}

// E[2cos mθ] under the p-adic Plancherel measure: U_m integrates to p^{-m/2} for even m.
fn plancherel_cos_mean(p: f64, m: i32) -> f64 {
    let u = |j: i32| if j < 0 || j % 2 == 1 { 0.0 } else { p.powf(-j as f64 / 2.0) };
    (u(m) - u(m - 2)) / 2.0
}

fn modular_vertical() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for m in [2u32, 4] {
        let target = plancherel_cos_mean(2.0, m as i32);
        let errs: Vec<f64> = (1..=10u32)
            .map(|i| {
                let k = 50 * i;
                let d = dim_cuspforms_level1(k).unwrap() as f64;
                (weyl_cos_sum_level1(k, 2, m).unwrap() / d - target).abs()
            })
            .collect();
        if !errs.windows(2).all(|w| w[1] < w[0]) {
            pass = false;
            notes.push(format!("m={m} not decreasing: {:?}", errs.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>()));
        }
    }
    for s in [suite(joint_mf_prime(0)), suite(ExperimentConfig::new("joint-mf-space"))] {
        if !s.rows.iter().all(|r| r.pass) {
            pass = false;
            notes.push(format!("{} rows exceed fitted bound", s.config.experiment));
        }
    }
    outcome(pass, if notes.is_empty() { "Weyl errors decrease; joint rows within fitted bound".into() } else { notes.join("; ") })
}

// q-expansion oracle: Δ from its product, E4 and E6 from divisor sums, T_n on the coefficients.
fn series_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); a.len()];
    for i in 0..a.len() {
        for j in 0..a.len() - i {
            out[i + j] += &a[i] * &b[j];
        }
    }
    out
}

fn delta_series(len: usize) -> Vec<BigInt> {
    let mut s = vec![BigInt::zero(); len];
    s[0] = BigInt::one();
    for n in 1..len {
        for _ in 0..24 {
            for i in (n..len).rev() {
                let t = s[i - n].clone();
                s[i] -= t;
            }
        }
    }
    std::iter::once(BigInt::zero()).chain(s.into_iter().take(len - 1)).collect()
}

fn eisenstein(power: u32, scale: i64, len: usize) -> Vec<BigInt> {
    (0..len)
        .map(|n| match n {
            0 => BigInt::one(),
            _ => (1..=n).filter(|d| n % d == 0).map(|d| BigInt::from(d).pow(power)).sum::<BigInt>() * scale,
        })
        .collect()
}

fn oracle_trace(k: u32, n: usize) -> BigInt {
    let len = 2 * n + 4;
    let one: Vec<BigInt> = (0..len).map(|i| if i == 0 { BigInt::one() } else { BigInt::zero() }).collect();
    let pow = |f: &[BigInt], e: u32| (0..e).fold(one.clone(), |acc, _| series_mul(&acc, f));
    let (e4, e6) = (eisenstein(3, 240, len), eisenstein(5, -504, len));
    let weight = |w: u32| if w.is_multiple_of(4) { pow(&e4, w / 4) } else { series_mul(&pow(&e4, (w - 6) / 4), &e6) };
    let delta = delta_series(len);
    let mut basis = vec![series_mul(&delta, &weight(k - 12))];
    let dim = if k % 12 == 2 { k / 12 - 1 } else { k / 12 };
    if dim == 2 {
        basis.push(series_mul(&series_mul(&delta, &delta), &weight(k - 24)));
    }
    let coeff = |f: &[BigInt], m: usize| -> BigInt {
        let g = num_integer::gcd(m, n);
        (1..=g).filter(|d| g.is_multiple_of(*d)).map(|d| BigInt::from(d).pow(k - 1) * &f[m * n / (d * d)]).sum()
    };
    let mut tr = coeff(&basis[0], 1);
    if basis.len() == 2 {
        tr += coeff(&basis[1], 2) - coeff(&basis[1], 1) * &basis[0][2];
    }
    tr
}

fn trace_formula() -> Outcome {
    let mut pairs = 0;
    for k in [12u32, 16, 18, 20, 22, 26, 24, 28] {
        for n in [2usize, 3, 4, 5, 9, 25] {
            if trace_hecke_level1(k, n as u64).unwrap() != oracle_trace(k, n) {
                return outcome(false, format!("mismatch at k={k} n={n}"));
            }
            pairs += 1;
        }
    }
    outcome(true, format!("{pairs} (k, n) pairs equal"))
}

fn eigen_recovery() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in [24u32, 28] {
        for p in [2u64, 3] {
            let s = eigen_angles_level1(k, p).unwrap();
            let x = s.traces();
            if x.iter().any(|v| v.abs() > 2.0) {
                return outcome(false, format!("root outside [-2,2] at k={k} p={p}"));
            }
            // s_1 = Tr T_p / p^{(k-1)/2}; s_2 = (Tr T_{p²} + d p^{k-1}) / p^{k-1}.
            let scale = (p as f64).powf((k as f64 - 1.0) / 2.0);
            let s1 = trace_hecke_level1(k, p).unwrap().to_f64().unwrap() / scale;
            let pk = BigInt::from(p).pow(k - 1);
            let s2 = (trace_hecke_level1(k, p * p).unwrap() + pk * BigInt::from(s.d)).to_f64().unwrap() / (scale * scale);
            worst = worst.max((x.iter().sum::<f64>() - s1).abs()).max((x.iter().map(|v| v * v).sum::<f64>() - s2).abs());
        }
    }
    outcome(worst < 1e-8, format!("max power-sum deviation {worst:.2e}"))
}

fn variation_demo() -> Outcome {
    let targets = [10.0, 100.0, 1000.0];
    let (s, dt) = timed(|| suite(ExperimentConfig { targets: targets.to_vec(), ..ExperimentConfig::new("variation-demo") }));
    let achieved: Vec<f64> = s.rows.iter().map(|r| r.frequency).collect();
    let reached = achieved.len() == targets.len() && achieved.iter().zip(targets).all(|(a, x)| *a >= x);
    outcome(s.all_pass && reached && dt < Duration::from_secs(5), format!("achieved {achieved:?} for targets {targets:?}, {dt:.2?}"))
}

fn uniform_cuts(k: usize) -> Vec<f64> {
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

fn random_grid(rng: &mut ChaCha8Rng, grids: Vec<Vec<f64>>) -> Grid {
    let len = grids.iter().map(|g| g.len()).product();
    Grid::new(grids, (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn hk_algebra() -> Outcome {
    const PRODUCT_CONSTANT: f64 = 4.5;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst_product: f64 = 0.0;
    for case in 0..100 {
        let n = 1 + case % 3;
        let grids: Vec<Vec<f64>> = (0..n).map(|_| uniform_cuts(rng.gen_range(1..6))).collect();
        let (f, g) = (random_grid(&mut rng, grids.clone()), random_grid(&mut rng, grids));
        let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let combo = f.linear_combination(a, &g, b).unwrap();
        if hk_variation(&combo) > f64::abs(a) * hk_variation(&f) + f64::abs(b) * hk_variation(&g) + 1e-9 {
            return outcome(false, format!("subadditivity broken in case {case}"));
        }
        let (ku, kv) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let u = random_grid(&mut rng, vec![uniform_cuts(ku)]);
        let v = random_grid(&mut rng, vec![uniform_cuts(kv)]);
        let tensor = hk_variation(&u.tensor(&v));
        let denom = u.sup_norm() * hk_variation(&v) + v.sup_norm() * hk_variation(&u);
        if denom > 0.0 {
            worst_product = worst_product.max(tensor / denom);
        }
    }
    let xy = Grid::from_fn(vec![uniform_cuts(17), uniform_cuts(23)], |x| x[0] * x[1]).unwrap();
    let telescoped = (vitali_variation(&xy) - 1.0).abs();
    outcome(
        worst_product <= PRODUCT_CONSTANT && telescoped <= 1e-12,
        format!("100 cases; worst product ratio {worst_product:.3} <= {PRODUCT_CONSTANT}; Vitali(xy) off by {telescoped:.1e}"),
    )
}

fn reports(workers: usize) -> Vec<String> {
    let census = ExperimentConfig { primes: vec![5, 7, 11, 13], workers, ..ExperimentConfig::new("census") };
    let mut out = vec![serde_json::to_string(&run_census(&census).unwrap()).unwrap()];
    for (f, j) in JOINT_GRID {
        out.push(suite(joint_ec(f, j, workers)).to_json().unwrap());
    }
    out.push(suite(joint_mf_prime(workers)).to_json().unwrap());
    let space = ExperimentConfig { workers, ..ExperimentConfig::new("joint-mf-space") };
    out.push(suite(space).to_json().unwrap());
    out
}

fn determinism() -> Outcome {
    let (one, four) = (reports(1), reports(4));
    outcome(one == four, format!("{} reports compared across 1 and 4 workers", one.len()))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 15] = [
        (1, "census correctness", census_correctness),
        (2, "one-dimensional effectiveness", birch_effectiveness),
        (3, "trace moments", birch_moments),
        (4, "Katz bound", katz_bound),
        (5, "Michel bound", michel_bound),
        (6, "Selberg sandwich", selberg_sandwich),
        (7, "Erdos-Turan never violated", erdos_turan),
        (8, "Koksma-Hlawka certificates", koksma_hlawka),
        (9, "joint elliptic equidistribution", joint_elliptic),
        (10, "modular vertical Sato-Tate", modular_vertical),
        (11, "trace formula exactness", trace_formula),
        (12, "eigen-angle recovery", eigen_recovery),
        (13, "unbounded variation demo", variation_demo),
        (14, "Hardy-Krause algebra", hk_algebra),
        (15, "determinism across workers", determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        let o = check();
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (expected failure)",
        };
        println!("criterion {id:>2} {tag}: {name}: {}", o.detail);
        if o.pass == known {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcomes for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
