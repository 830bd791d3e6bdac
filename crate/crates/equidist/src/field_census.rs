//! Frobenius-trace census over prime fields.

use crate::error::{Error, Result};
use crate::measures::{ClosedInterval, Transform};
use crate::scalar::Real;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// F_p together with its quadratic character table.
#[derive(Clone, Debug)]
pub struct PrimeField {
    p: u64,
    qr: Vec<i8>,
}

impl PrimeField {
    pub fn new(p: u64) -> Result<Self> {
        if p < 5 || !is_prime(p) {
            return Err(Error::CompositeModulus(p));
        }
        let mut qr = vec![-1i8; p as usize];
        qr[0] = 0;
        for x in 1..=(p - 1) / 2 {
            qr[((x * x) % p) as usize] = 1;
        }
        Ok(PrimeField { p, qr })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn reduce(&self, a: i64) -> u64 {
        a.rem_euclid(self.p as i64) as u64
    }

    pub fn chi(&self, a: u64) -> i8 {
        self.qr[a as usize]
    }

    fn discriminant_vanishes(&self, a: u64, b: u64) -> bool {
        let p = self.p;
        let a3 = a * a % p * a % p;
        (4 * a3 + 27 * (b * b % p)).is_multiple_of(p)
    }

    /// Unchecked trace for a nonsingular (a, b); `cubes[x] = x^3 mod p`.
    fn trace_with(&self, a: u64, b: u64, cubes: &[u64]) -> i64 {
        let p = self.p;
        let mut s: i64 = 0;
        let mut ax_b = b;
        for &c in cubes {
            let mut v = c + ax_b;
            if v >= p {
                v -= p;
            }
            s += self.qr[v as usize] as i64;
            ax_b += a;
            if ax_b >= p {
                ax_b -= p;
            }
        }
        -s
    }

    fn cubes(&self) -> Vec<u64> {
        let p = self.p;
        (0..p).map(|x| x * x % p * x % p).collect()
    }

    fn primitive_root(&self) -> u64 {
        let p = self.p;
        let mut m = p - 1;
        let mut factors = Vec::new();
        let mut d = 2;
        while d * d <= m {
            if m.is_multiple_of(d) {
                factors.push(d);
                while m.is_multiple_of(d) {
                    m /= d;
                }
            }
            d += 1;
        }
        if m > 1 {
            factors.push(m);
        }
        (2..p)
            .find(|&g| factors.iter().all(|&q| pow_mod(g, (p - 1) / q, p) != 1))
            .expect("prime fields have primitive roots")
    }
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn legendre_symbol(a: i64, field: &PrimeField) -> i8 {
    field.chi(field.reduce(a))
}

/// t = p + 1 - #E(F_p) for y^2 = x^3 + ax + b.
pub fn frobenius_trace(a: u64, b: u64, field: &PrimeField) -> Result<i64> {
    let (a, b) = (a % field.p, b % field.p);
    if field.discriminant_vanishes(a, b) {
        return Err(Error::SingularCurve { a, b, p: field.p });
    }
    Ok(field.trace_with(a, b, &field.cubes()))
}

/// Curve family: all Weierstrass curves, or t -> (A(t), B(t)) with coefficients in ascending degree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FamilySpec {
    Full,
    OneParam { a_coeffs: Vec<i64>, b_coeffs: Vec<i64> },
}

impl FamilySpec {
    pub fn one_param(a_coeffs: Vec<i64>, b_coeffs: Vec<i64>) -> Result<Self> {
        if j_invariant_is_constant(&a_coeffs, &b_coeffs) {
            return Err(Error::ConstantJInvariant);
        }
        Ok(FamilySpec::OneParam { a_coeffs, b_coeffs })
    }
}

fn trim(mut v: Vec<BigInt>) -> Vec<BigInt> {
    while v.last().is_some_and(|c| c.is_zero()) {
        v.pop();
    }
    v
}

fn poly_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(out)
}

/// j = 1728 * 4A^3 / (4A^3 + 27B^2) is constant over Q iff A or B vanishes or A^3, B^2 are proportional.
fn j_invariant_is_constant(a_coeffs: &[i64], b_coeffs: &[i64]) -> bool {
    let a = trim(a_coeffs.iter().map(|&c| BigInt::from(c)).collect());
    let b = trim(b_coeffs.iter().map(|&c| BigInt::from(c)).collect());
    if a.is_empty() || b.is_empty() {
        return true;
    }
    let a3 = poly_mul(&poly_mul(&a, &a), &a);
    let b2 = poly_mul(&b, &b);
    if a3.len() != b2.len() {
        return false;
    }
    let (la, lb) = (a3.last().unwrap(), b2.last().unwrap());
    a3.iter().zip(&b2).all(|(x, y)| x * lb == y * la)
}

/// Exact counts of Frobenius traces over a curve family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHistogram {
    pub p: u64,
    pub family: FamilySpec,
    pub total: u64,
    pub counts: BTreeMap<i64, u64>,
}

impl TraceHistogram {
    fn from_dense(p: u64, family: FamilySpec, dense: &[u64], offset: i64) -> Self {
        let counts: BTreeMap<i64, u64> = dense
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as i64 - offset, c))
            .collect();
        let total = counts.values().sum();
        TraceHistogram { p, family, total, counts }
    }

    pub fn count(&self, t: i64) -> u64 {
        self.counts.get(&t).copied().unwrap_or(0)
    }

    /// Normalized trace t / (2 sqrt p) in [-1, 1].
    pub fn normalized(&self, t: i64) -> f64 {
        t as f64 / (2.0 * (self.p as f64).sqrt())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "count"])?;
        for (t, c) in &self.counts {
            wr.write_record([t.to_string(), c.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// The CSV form carries no prime or family; both are supplied by the caller.
    pub fn read_csv<R: Read>(r: R, p: u64, family: FamilySpec) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut counts = BTreeMap::new();
        for rec in rd.deserialize::<(i64, u64)>() {
            let (t, c) = rec?;
            counts.insert(t, c);
        }
        let total = counts.values().sum();
        Ok(TraceHistogram { p, family, total, counts })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn hasse_offset(p: u64) -> i64 {
    (2.0 * (p as f64).sqrt()).floor() as i64 + 1
}

fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Census of all p(p-1) nonsingular curves, one point count per twist class.
pub fn full_family_histogram(p: u64, workers: usize) -> Result<TraceHistogram> {
    let field = PrimeField::new(p)?;
    let cubes = field.cubes();
    let off = hasse_offset(p);
    let width = (2 * off + 1) as usize;
    let g = field.primitive_root();

    // ab != 0: every curve is (v^2 c, v^3 c) for a unique c = a^3/b^2 and v in F_p^*.
    // Square v give the curve (c, c) up to isomorphism, non-square v its quadratic twist.
    let half = (p - 1) / 2;
    let generic = with_workers(workers, || {
        (1..p)
            .into_par_iter()
            .fold(
                || vec![0u64; width],
                |mut acc, c| {
                    if !field.discriminant_vanishes(c, c) {
                        let t = field.trace_with(c, c, &cubes);
                        acc[(t + off) as usize] += half;
                        acc[(off - t) as usize] += half;
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u64; width],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    });
    let mut dense = generic;

    // j = 0 and j = 1728: classes are cosets of sixth and fourth powers.
    let g6 = gcd(6, p - 1);
    let g4 = gcd(4, p - 1);
    let mut rep = 1u64;
    for _ in 0..g6 {
        let t = field.trace_with(0, rep, &cubes);
        dense[(t + off) as usize] += (p - 1) / g6;
        rep = rep * g % p;
    }
    rep = 1;
    for _ in 0..g4 {
        let t = field.trace_with(rep, 0, &cubes);
        dense[(t + off) as usize] += (p - 1) / g4;
        rep = rep * g % p;
    }
    Ok(TraceHistogram::from_dense(p, FamilySpec::Full, &dense, off))
}

/// Reference census by a point count on every (a, b).
pub fn naive_full_histogram(p: u64) -> Result<TraceHistogram> {
    let field = PrimeField::new(p)?;
    let cubes = field.cubes();
    let off = hasse_offset(p);
    let mut dense = vec![0u64; (2 * off + 1) as usize];
    for a in 0..p {
        for b in 0..p {
            if !field.discriminant_vanishes(a, b) {
                dense[(field.trace_with(a, b, &cubes) + off) as usize] += 1;
            }
        }
    }
    Ok(TraceHistogram::from_dense(p, FamilySpec::Full, &dense, off))
}

fn eval_mod(coeffs: &[i64], t: u64, p: u64) -> u64 {
    let pi = p as i64;
    coeffs
        .iter()
        .rev()
        .fold(0i64, |acc, &c| ((acc * t as i64) % pi + c.rem_euclid(pi)) % pi) as u64
}

/// Census over t in F_p of y^2 = x^3 + A(t)x + B(t), skipping singular fibres.
pub fn one_param_histogram(spec: &FamilySpec, p: u64) -> Result<TraceHistogram> {
    let (ac, bc) = match spec {
        FamilySpec::OneParam { a_coeffs, b_coeffs } => (a_coeffs, b_coeffs),
        FamilySpec::Full => return Err(Error::Invalid("one_param_histogram needs a OneParam family".into())),
    };
    if j_invariant_is_constant(ac, bc) {
        return Err(Error::ConstantJInvariant);
    }
    let field = PrimeField::new(p)?;
    let cubes = field.cubes();
    let off = hasse_offset(p);
    let mut dense = vec![0u64; (2 * off + 1) as usize];
    for t in 0..p {
        let (a, b) = (eval_mod(ac, t, p), eval_mod(bc, t, p));
        if !field.discriminant_vanishes(a, b) {
            dense[(field.trace_with(a, b, &cubes) + off) as usize] += 1;
        }
    }
    Ok(TraceHistogram::from_dense(p, spec.clone(), &dense, off))
}

/// (1/total) * sum of t^(2R) over the family, exactly.
pub fn power_moment(hist: &TraceHistogram, r: u32) -> BigRational {
    let mut num = BigInt::zero();
    for (&t, &c) in &hist.counts {
        num += BigInt::from(t).pow(2 * r) * BigInt::from(c);
    }
    BigRational::new(num, BigInt::from(hist.total))
}

/// Catalan(R) * p^R.
pub fn catalan_main_term(p: u64, r: u32) -> BigRational {
    let mut binom = BigInt::one();
    for i in 0..r {
        binom = binom * BigInt::from(2 * r - i) / BigInt::from(i + 1);
    }
    BigRational::new(binom * BigInt::from(p).pow(r), BigInt::from(r + 1))
}

/// sin((k+1)θ)/sin θ as a polynomial in cos θ.
pub fn sym_k<T: Real>(cos_theta: T, k: u32) -> T {
    let two_c = cos_theta + cos_theta;
    let (mut prev, mut cur) = (T::zero(), T::one());
    for _ in 0..k {
        let next = two_c * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Normalized sum of sym_k over the family: 1/(p-1)^2 for Full, 1/p for OneParam.
pub fn sym_power_sum(hist: &TraceHistogram, k: u32) -> f64 {
    let p = hist.p as f64;
    let norm = match hist.family {
        FamilySpec::Full => (p - 1.0) * (p - 1.0),
        FamilySpec::OneParam { .. } => p,
    };
    let s: f64 = hist
        .counts
        .iter()
        .map(|(&t, &c)| c as f64 * sym_k(hist.normalized(t), k))
        .sum();
    s / norm
}

/// (k+1)/sqrt(p), the envelope the normalized sym sums are compared against.
pub fn sym_envelope(p: u64, k: u32) -> f64 {
    (k as f64 + 1.0) / (p as f64).sqrt()
}

/// Number of n-tuples of curves whose normalized traces satisfy F(x) in J.
pub fn joint_region_count(hists: &[&TraceHistogram], f: &dyn Transform, j: ClosedInterval) -> Result<u128> {
    let n = hists.len();
    if f.arity() != n {
        return Err(Error::ArityMismatch { expected: f.arity(), got: n });
    }
    if n == 0 {
        return Ok(0);
    }
    let p = hists[0].p;
    if let Some(h) = hists.iter().find(|h| h.p != p) {
        return Err(Error::MixedPrimes(p, h.p));
    }
    let axes: Vec<Vec<(f64, u128)>> = hists
        .iter()
        .map(|h| h.counts.iter().map(|(&t, &c)| (h.normalized(t), c as u128)).collect())
        .collect();
    Ok(weighted_product_count(&axes, f, j))
}

/// Sum of product weights over the grid of per-axis atoms whose image under F lies in J.
pub fn weighted_product_count(axes: &[Vec<(f64, u128)>], f: &dyn Transform, j: ClosedInterval) -> u128 {
    let n = axes.len();
    if axes.iter().any(|a| a.is_empty()) {
        return 0;
    }
    let first = &axes[0];
    first
        .par_iter()
        .map(|&(x0, w0)| {
            let mut idx = vec![0usize; n];
            let mut x = vec![0.0; n];
            x[0] = x0;
            let mut total = 0u128;
            loop {
                let mut w = w0;
                for d in 1..n {
                    let (xd, wd) = axes[d][idx[d]];
                    x[d] = xd;
                    w *= wd;
                }
                if j.contains(f.eval(&x)) {
                    total += w;
                }
                let mut d = n - 1;
                loop {
                    if d == 0 {
                        return total;
                    }
                    idx[d] += 1;
                    if idx[d] < axes[d].len() {
                        break;
                    }
                    idx[d] = 0;
                    d -= 1;
                }
            }
        })
        .sum()
}
