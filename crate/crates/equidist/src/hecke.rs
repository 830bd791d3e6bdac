//! Level-1 modular data: class numbers, Hecke traces and eigen-angles.

use crate::error::{Error, Result};
use crate::measures::{fourier_coeff, FourierCoeffProvider};
use num_bigint::{BigInt, Sign};
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use std::io::{Read, Write};

const CACHE_MAGIC: &[u8; 4] = b"EQHT";
const CACHE_VERSION: u32 = 1;

/// Largest 4·p^m for which traces of T_{p^m} go through the class-number formula.
pub const TRACE_FORMULA_LIMIT: u64 = 1 << 16;

pub const MAX_EIGEN_DIM: usize = 60;

/// Implied constant used when checking residuals against the trace-error shape.
pub const TRACE_ERROR_CONSTANT: f64 = 1.0;

/// Hurwitz class numbers H(0..=limit).
#[derive(Clone, Debug, PartialEq)]
pub struct HurwitzTable {
    limit: u64,
    values: Vec<Rational64>,
}

/// Weighted count of reduced forms of discriminant −n, in units of 1/6.
fn hurwitz_sixths(n: u64) -> i64 {
    if n % 4 == 1 || n % 4 == 2 {
        return 0;
    }
    let n = n as i64;
    let mut sixths = 0i64;
    let mut b = n % 2;
    while 3 * b * b <= n {
        let ac = (b * b + n) / 4;
        let mut a = b.max(1);
        while a * a <= ac {
            if ac % a == 0 {
                let c = ac / a;
                let w = if a == b && b == c {
                    2
                } else if b == 0 && a == c {
                    3
                } else {
                    6
                };
                // ±b are distinct classes unless b = 0, |b| = a or a = c.
                let both_signs = b != 0 && b != a && a != c;
                sixths += if both_signs { 2 * w } else { w };
            }
            a += 1;
        }
        b += 2;
    }
    sixths
}

pub fn hurwitz_table(limit: u64) -> HurwitzTable {
    let values = (0..=limit)
        .into_par_iter()
        .map(|n| {
            if n == 0 {
                Rational64::new(-1, 12)
            } else {
                Rational64::new(hurwitz_sixths(n), 6)
            }
        })
        .collect();
    HurwitzTable { limit, values }
}

impl HurwitzTable {
    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn get(&self, n: u64) -> Option<Rational64> {
        self.values.get(n as usize).copied()
    }

    /// 12·H(n), always an integer.
    fn twelve_times(&self, n: u64) -> i64 {
        let h = self.values[n as usize];
        h.numer() * (12 / h.denom())
    }

    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&self.limit.to_le_bytes())?;
        for h in &self.values {
            w.write_all(&h.numer().to_le_bytes())?;
        }
        for h in &self.values {
            w.write_all(&h.denom().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Invalid("not a class-number cache".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CACHE_VERSION {
            return Err(Error::Invalid(format!("unsupported cache version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let limit = u64::from_le_bytes(b8);
        let len = limit as usize + 1;
        let mut read_i64s = |count: usize| -> Result<Vec<i64>> {
            (0..count)
                .map(|_| {
                    r.read_exact(&mut b8)?;
                    Ok(i64::from_le_bytes(b8))
                })
                .collect()
        };
        let nums = read_i64s(len)?;
        let dens = read_i64s(len)?;
        if dens.iter().any(|&d| d <= 0) {
            return Err(Error::Invalid("non-positive denominator in cache".into()));
        }
        let values = nums.into_iter().zip(dens).map(|(n, d)| Rational64::new(n, d)).collect();
        Ok(HurwitzTable { limit, values })
    }
}

pub fn dim_cuspforms_level1(k: u32) -> Result<usize> {
    if k % 2 == 1 {
        return Err(Error::OddWeight(k));
    }
    if k < 12 {
        return Ok(0);
    }
    let d = (k / 12) as usize;
    Ok(if k % 12 == 2 { d - 1 } else { d })
}

fn check_weight(k: u32) -> Result<usize> {
    if k % 2 == 1 {
        return Err(Error::OddWeight(k));
    }
    if k < 12 {
        return Err(Error::WeightTooSmall(k));
    }
    dim_cuspforms_level1(k)
}

/// Coefficient of the degree-(k−2) Gegenbauer polynomial in the trace formula.
fn gegenbauer(k: u32, t: i64, n: u64) -> BigInt {
    let (t, n) = (BigInt::from(t), BigInt::from(n));
    let mut prev = BigInt::one();
    let mut cur = t.clone();
    if k == 2 {
        return prev;
    }
    for _ in 2..=(k - 2) {
        let next = &t * &cur - &n * &prev;
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// Tr T_n on S_k(SL₂(Z)) from a table that reaches at least 4n.
pub fn trace_hecke_with(table: &HurwitzTable, k: u32, n: u64) -> Result<BigInt> {
    check_weight(k)?;
    if n == 0 {
        return Err(Error::Invalid("Hecke index must be positive".into()));
    }
    if table.limit < 4 * n {
        return Err(Error::Invalid(format!("class-number table stops at {} < {}", table.limit, 4 * n)));
    }
    // 24·Tr = −Σ_t P_k(t,n)·12H(4n−t²) − 12·Σ_{dd'=n} min(d,d')^{k−1}
    let mut acc = BigInt::zero();
    let mut t = 0i64;
    while (t * t) as u64 <= 4 * n {
        let h12 = table.twelve_times(4 * n - (t * t) as u64);
        let term = gegenbauer(k, t, n) * h12;
        acc -= if t == 0 { term } else { term * 2 };
        t += 1;
    }
    let mut d = 1u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            let e = BigInt::from(d).pow(k - 1) * 12;
            acc -= if d * d == n { e } else { e * 2 };
        }
        d += 1;
    }
    let (q, r): (BigInt, BigInt) = (&acc / 24, &acc % 24);
    if !r.is_zero() {
        return Err(Error::Invalid(format!("trace formula produced non-integer {acc}/24")));
    }
    Ok(q)
}

pub fn trace_hecke_level1(k: u32, n: u64) -> Result<BigInt> {
    check_weight(k)?;
    trace_hecke_with(&hurwitz_table(4 * n.max(1)), k, n)
}

fn series_mul(a: &[BigInt], b: &[BigInt], len: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); len];
    for (i, ai) in a.iter().enumerate().take(len) {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate().take(len - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn series_pow(a: &[BigInt], mut e: u32, len: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); len];
    out[0] = BigInt::one();
    let mut base = a.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            out = series_mul(&out, &base, len);
        }
        e >>= 1;
        if e > 0 {
            base = series_mul(&base, &base, len);
        }
    }
    out
}

fn eisenstein(power: u32, scale: i64, len: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); len];
    out[0] = BigInt::one();
    for (n, slot) in out.iter_mut().enumerate().skip(1) {
        let sigma: BigInt = (1..=n).filter(|d| n % d == 0).map(|d| BigInt::from(d).pow(power)).sum();
        *slot = sigma * scale;
    }
    out
}

/// q-expansions of Δ^i·E4^a·E6^b for i = 1..d, each equal to q^i + O(q^{i+1}).
pub fn cusp_basis_level1(k: u32, len: usize) -> Result<Vec<Vec<BigInt>>> {
    let d = check_weight(k)?;
    let e4 = eisenstein(3, 240, len);
    let e6 = eisenstein(5, -504, len);
    let e4_cubed = series_pow(&e4, 3, len);
    let e6_sq = series_mul(&e6, &e6, len);
    let delta: Vec<BigInt> = e4_cubed.iter().zip(&e6_sq).map(|(x, y)| (x - y) / 1728).collect();
    let mut basis = Vec::with_capacity(d);
    let mut delta_pow = delta.clone();
    for i in 1..=d {
        let w = k - 12 * i as u32;
        let (a, b) = if w.is_multiple_of(4) { (w / 4, 0) } else { ((w - 6) / 4, 1) };
        let mut f = series_mul(&delta_pow, &series_pow(&e4, a, len), len);
        if b == 1 {
            f = series_mul(&f, &e6, len);
        }
        basis.push(f);
        delta_pow = series_mul(&delta_pow, &delta, len);
    }
    Ok(basis)
}

/// Integer matrix of T_p on the basis from [`cusp_basis_level1`]; column j holds T_p f_j.
pub fn hecke_matrix_level1(k: u32, p: u64) -> Result<Vec<Vec<BigInt>>> {
    let d = check_weight(k)?;
    let len = p as usize * d + 1;
    let basis = cusp_basis_level1(k, len)?;
    let pk = BigInt::from(p).pow(k - 1);
    let mut mat = vec![vec![BigInt::zero(); d]; d];
    for (j, f) in basis.iter().enumerate() {
        let mut g: Vec<BigInt> = (0..=d)
            .map(|n| {
                let mut c = f[p as usize * n].clone();
                if n > 0 && (n as u64).is_multiple_of(p) {
                    c += &pk * &f[n / p as usize];
                }
                c
            })
            .collect();
        // Unitriangular back-substitution in q-order.
        for i in 1..=d {
            let coef = g[i].clone();
            if !coef.is_zero() {
                for (n, slot) in g.iter_mut().enumerate().skip(i) {
                    *slot -= &coef * &basis[i - 1][n];
                }
            }
            mat[i - 1][j] = coef;
        }
    }
    Ok(mat)
}

fn mat_mul(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let d = a.len();
    (0..d)
        .into_par_iter()
        .map(|i| (0..d).map(|j| (0..d).map(|l| &a[i][l] * &b[l][j]).sum()).collect())
        .collect()
}

fn trace(a: &[Vec<BigInt>]) -> BigInt {
    (0..a.len()).map(|i| a[i][i].clone()).sum()
}

/// Tr T_{p^m} for m = 0..=m_max, with Tr T_1 = d.
pub fn prime_power_traces_level1(k: u32, p: u64, m_max: u32) -> Result<Vec<BigInt>> {
    let d = check_weight(k)?;
    if d == 0 {
        return Ok(vec![BigInt::zero(); m_max as usize + 1]);
    }
    let tp = hecke_matrix_level1(k, p)?;
    let pk = BigInt::from(p).pow(k - 1);
    let ident: Vec<Vec<BigInt>> =
        (0..d).map(|i| (0..d).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect()).collect();
    let mut traces = vec![BigInt::from(d)];
    let (mut prev, mut cur) = (ident, tp.clone());
    for _ in 1..=m_max {
        traces.push(trace(&cur));
        let next: Vec<Vec<BigInt>> = mat_mul(&tp, &cur)
            .into_iter()
            .zip(&prev)
            .map(|(row, prow)| row.into_iter().zip(prow).map(|(x, y)| x - &pk * y).collect())
            .collect();
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(traces)
}

fn prime_power_trace(k: u32, p: u64, m: u32) -> Result<BigInt> {
    if m == 0 {
        return Ok(BigInt::from(check_weight(k)?));
    }
    let n = (p as u128).checked_pow(m).filter(|&n| 4 * n <= TRACE_FORMULA_LIMIT as u128);
    match n {
        Some(n) => trace_hecke_level1(k, n as u64),
        None => Ok(prime_power_traces_level1(k, p, m)?.pop().unwrap_or_default()),
    }
}

/// num/den as f64 without overflowing the intermediate conversions.
pub fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = num.bits() as i64 - den.bits() as i64 - 64;
    let (n, d) = if shift >= 0 { (num.clone(), den << shift as u64) } else { (num << (-shift) as u64, den.clone()) };
    let q = (n / d).to_f64().unwrap_or(f64::NAN);
    q * 2f64.powi(shift as i32)
}

/// Tr T_{p^m} / p^{m(k−1)/2}.
fn normalized_trace(tr: &BigInt, k: u32, p: u64, m: u32) -> f64 {
    let e = m as u64 * (k as u64 - 1);
    let half = BigInt::from(p).pow((e / 2) as u32);
    let v = ratio_to_f64(tr, &half);
    if e % 2 == 1 {
        v / (p as f64).sqrt()
    } else {
        v
    }
}

/// Σ_i cos(m·θ_p(i)) over an eigenbasis of S_k(1).
pub fn weyl_cos_sum_level1(k: u32, p: u64, m: u32) -> Result<f64> {
    if m == 0 {
        return Err(Error::Invalid("frequency must be positive".into()));
    }
    let s_m = normalized_trace(&prime_power_trace(k, p, m)?, k, p, m);
    let s_prev = if m >= 2 { normalized_trace(&prime_power_trace(k, p, m - 2)?, k, p, m - 2) } else { 0.0 };
    Ok((s_m - s_prev) / 2.0)
}

/// Integer polynomial with coefficients from the constant term upward.
type Poly = Vec<BigInt>;

fn trim(mut p: Poly) -> Poly {
    while p.len() > 1 && p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

fn derivative(p: &Poly) -> Poly {
    trim(p.iter().enumerate().skip(1).map(|(i, c)| c * i).collect())
}

fn content(p: &Poly) -> BigInt {
    use num_integer::Integer;
    p.iter().fold(BigInt::zero(), |g, c| g.gcd(c))
}

fn primitive(p: Poly) -> Poly {
    let g = content(&p);
    if g.is_zero() || g.is_one() {
        p
    } else {
        p.into_iter().map(|c| c / &g).collect()
    }
}

fn is_zero_poly(p: &Poly) -> bool {
    p.iter().all(|c| c.is_zero())
}

/// Pseudo-remainder scaled so its sign agrees with the true remainder.
fn signed_prem(a: &Poly, b: &Poly) -> Poly {
    let db = b.len() - 1;
    let lc = b[db].clone();
    let mut r = a.clone();
    let mut steps = 0u32;
    while r.len() > db && !is_zero_poly(&r) {
        let dr = r.len() - 1;
        let lr = r[dr].clone();
        let mut next: Poly = r.iter().map(|c| c * &lc).collect();
        for (i, bi) in b.iter().enumerate() {
            next[dr - db + i] -= &lr * bi;
        }
        next.pop();
        r = trim(next);
        steps += 1;
    }
    if lc.is_negative() && steps % 2 == 1 {
        r = r.into_iter().map(|c| -c).collect();
    }
    r
}

fn sturm_chain(p: &Poly) -> Vec<Poly> {
    let mut chain = vec![primitive(p.clone())];
    let d = derivative(p);
    if is_zero_poly(&d) {
        return chain;
    }
    chain.push(primitive(d));
    loop {
        let n = chain.len();
        let r = signed_prem(&chain[n - 2], &chain[n - 1]);
        if is_zero_poly(&r) {
            break;
        }
        chain.push(primitive(r.into_iter().map(|c| -c).collect()));
    }
    chain
}

fn poly_gcd(a: &Poly, b: &Poly) -> Poly {
    let (mut x, mut y) = (primitive(a.clone()), primitive(b.clone()));
    while !is_zero_poly(&y) {
        let r = primitive(signed_prem(&x, &y));
        x = std::mem::replace(&mut y, r);
    }
    x
}

/// Sign of the polynomial at num / 2^shift.
fn sign_at(p: &Poly, num: &BigInt, shift: u64) -> Sign {
    let mut acc = p.last().cloned().unwrap_or_default();
    let mut vpow = BigInt::one();
    for c in p.iter().rev().skip(1) {
        vpow <<= shift;
        acc = acc * num + c * &vpow;
    }
    acc.sign()
}

fn sign_changes(chain: &[Poly], num: &BigInt, shift: u64) -> usize {
    let signs: Vec<Sign> = chain.iter().map(|q| sign_at(q, num, shift)).filter(|s| *s != Sign::NoSign).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

fn sign_changes_at_infinity(chain: &[Poly], positive: bool) -> usize {
    let signs: Vec<Sign> = chain
        .iter()
        .map(|q| {
            let s = q.last().map(|c| c.sign()).unwrap_or(Sign::NoSign);
            if positive || (q.len() - 1) % 2 == 0 {
                s
            } else {
                -s
            }
        })
        .filter(|s| *s != Sign::NoSign)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Dyadic interval (lo, hi] = (lo_num, hi_num] / 2^shift.
#[derive(Clone, Debug)]
struct Dyadic {
    lo: BigInt,
    hi: BigInt,
    shift: u64,
}

impl Dyadic {
    fn halves(&self) -> (Dyadic, Dyadic) {
        let (lo, hi) = (&self.lo << 1u32, &self.hi << 1u32);
        let mid = (&lo + &hi) >> 1u32;
        let s = self.shift + 1;
        (Dyadic { lo, hi: mid.clone(), shift: s }, Dyadic { lo: mid, hi, shift: s })
    }

    fn roots(&self, chain: &[Poly]) -> usize {
        sign_changes(chain, &self.lo, self.shift) - sign_changes(chain, &self.hi, self.shift)
    }

    /// width² ≤ scale_sq · 2^{−2·bits}
    fn narrower_than(&self, scale_sq: &BigInt, bits: u64) -> bool {
        let w = &self.hi - &self.lo;
        (&w * &w) << (2 * bits) <= scale_sq << (2 * self.shift)
    }

    fn midpoint(&self) -> (BigInt, u64) {
        (&self.lo + &self.hi, self.shift + 1)
    }
}

fn multiplicity(p: &Poly, iv: &Dyadic) -> usize {
    if p.len() <= 1 {
        return 0;
    }
    let chain = sturm_chain(p);
    if iv.roots(&chain) == 0 {
        return 0;
    }
    1 + multiplicity(&poly_gcd(p, &derivative(p)), iv)
}

enum Isolated {
    Exact(BigInt, u64),
    Bracket(Dyadic),
}

/// Finest dyadic grid tried before falling back to Sturm sequences.
const GRID_MAX_LEVEL: u64 = 18;

/// Isolate all deg(p) roots by sign changes on dyadic grids of (−bound, bound].
///
/// d disjoint brackets with a sign change each hold an odd number of roots, so reaching d of them
/// proves every root is real, simple and isolated. `None` when the grid limit is hit first.
fn grid_isolate(p: &Poly, bound: &BigInt) -> Option<Vec<Isolated>> {
    let d = p.len() - 1;
    if d == 0 {
        return Some(Vec::new());
    }
    let mut level = (8 * d).next_power_of_two().trailing_zeros() as u64;
    let point = |i: usize, level: u64| -> BigInt { -(bound << level) + bound * 2u32 * BigInt::from(i) };
    let mut signs: Vec<Sign> = (0..=(1usize << level)).into_par_iter().map(|i| sign_at(p, &point(i, level), level)).collect();
    loop {
        let mut found = Vec::new();
        let mut prev: Option<usize> = None;
        for (i, s) in signs.iter().enumerate() {
            match (*s, prev) {
                (Sign::NoSign, _) => {
                    // An endpoint root is owned by (lo, hi] brackets only through the grid point itself.
                    if i > 0 {
                        found.push(Isolated::Exact(point(i, level), level));
                    }
                    prev = None;
                }
                (s, Some(j)) if s != signs[j] => {
                    found.push(Isolated::Bracket(Dyadic { lo: point(j, level), hi: point(i, level), shift: level }));
                    prev = Some(i);
                }
                _ => prev = Some(i),
            }
        }
        if found.len() == d {
            return Some(found);
        }
        if level >= GRID_MAX_LEVEL {
            return None;
        }
        level += 1;
        let fresh: Vec<Sign> = (0..signs.len() - 1).into_par_iter().map(|i| sign_at(p, &point(2 * i + 1, level), level)).collect();
        let mut merged = Vec::with_capacity(2 * signs.len() - 1);
        for (i, s) in signs.iter().enumerate() {
            merged.push(*s);
            if let Some(f) = fresh.get(i) {
                merged.push(*f);
            }
        }
        signs = merged;
    }
}

/// Bisect on the sign of `p` alone; (lo, hi] holds exactly one root, and it is simple.
fn refine_simple_root(p: &Poly, mut iv: Dyadic, scale_sq: &BigInt, bits: u64) -> (BigInt, u64) {
    let s_hi = sign_at(p, &iv.hi, iv.shift);
    if s_hi == Sign::NoSign {
        return (&iv.hi << 1u32, iv.shift + 1);
    }
    while !iv.narrower_than(scale_sq, bits) {
        let (left, right) = iv.halves();
        match sign_at(p, &left.hi, left.shift) {
            Sign::NoSign => return (&left.hi << 1u32, left.shift + 1),
            s if s == s_hi => iv = left,
            _ => iv = right,
        }
    }
    iv.midpoint()
}

/// Real roots of `p` in (−bound, bound], isolated to width √scale_sq·2^{−bits}, as dyadic midpoints.
fn isolate_roots(p: &Poly, bound: &BigInt, scale_sq: &BigInt, bits: u64) -> Vec<(BigInt, u64, usize)> {
    if let Some(found) = grid_isolate(p, bound) {
        return found
            .into_iter()
            .map(|r| match r {
                Isolated::Exact(num, shift) => (num, shift, 1),
                Isolated::Bracket(iv) => {
                    let (num, shift) = refine_simple_root(p, iv, scale_sq, bits);
                    (num, shift, 1)
                }
            })
            .collect();
    }
    let chain = sturm_chain(p);
    let squarefree = chain.last().is_some_and(|g| g.len() == 1);
    let mut out = Vec::new();
    let mut stack = vec![Dyadic { lo: -bound.clone(), hi: bound.clone(), shift: 0 }];
    while let Some(iv) = stack.pop() {
        let n = iv.roots(&chain);
        if n == 0 {
            continue;
        }
        if n == 1 && squarefree {
            let (num, shift) = refine_simple_root(p, iv, scale_sq, bits);
            out.push((num, shift, 1));
            continue;
        }
        if n == 1 && iv.narrower_than(scale_sq, bits) {
            let (num, shift) = iv.midpoint();
            out.push((num, shift, multiplicity(p, &iv)));
            continue;
        }
        let (left, right) = iv.halves();
        stack.push(right);
        stack.push(left);
    }
    out
}

/// Characteristic polynomial of T_p on S_k(1), monic with integer coefficients.
pub fn hecke_charpoly_level1(k: u32, p: u64) -> Result<Vec<BigInt>> {
    let d = check_weight(k)?;
    if d > MAX_EIGEN_DIM {
        return Err(Error::DimensionTooLarge { got: d, max: MAX_EIGEN_DIM });
    }
    let traces = prime_power_traces_level1(k, p, d as u32)?;
    let pk = BigInt::from(p).pow(k - 1);
    // a^m = Σ_j [C(m,r) − C(m,r−1)]·p^{(k−1)r}·λ(T_{p^{m−2r}})
    let binom = |n: u64, r: i64| -> BigInt {
        if r < 0 || r as u64 > n {
            return BigInt::zero();
        }
        let r = r as u64;
        (0..r).fold(BigInt::one(), |acc, i| acc * (n - i) / (i + 1))
    };
    let power_sums: Vec<BigInt> = (0..=d as u64)
        .map(|m| {
            (0..=(m / 2) as i64)
                .map(|r| {
                    let c = binom(m, r) - binom(m, r - 1);
                    c * pk.pow(r as u32) * &traces[(m - 2 * r as u64) as usize]
                })
                .sum()
        })
        .collect();
    // Newton: i·e_i = Σ_{j=1..i} (−1)^{j−1} e_{i−j} P_j
    let mut e: Vec<BigRational> = vec![BigRational::one()];
    for i in 1..=d {
        let mut s = BigRational::zero();
        for j in 1..=i {
            let term = &e[i - j] * BigRational::from(power_sums[j].clone());
            if j % 2 == 1 {
                s += term;
            } else {
                s -= term;
            }
        }
        e.push(s / BigRational::from(BigInt::from(i)));
    }
    let mut coeffs = vec![BigInt::zero(); d + 1];
    for (i, ei) in e.iter().enumerate() {
        if !ei.is_integer() {
            return Err(Error::Invalid(format!("elementary symmetric function e_{i} is not integral")));
        }
        let c = ei.to_integer();
        coeffs[d - i] = if i % 2 == 0 { c } else { -c };
    }
    Ok(coeffs)
}

/// Hecke eigen-angles θ_p(i) ∈ [0, π] of an eigenbasis of S_k(1), ascending in θ.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenangleSet {
    pub k: u32,
    pub p: u64,
    pub d: usize,
    pub angles: Vec<f64>,
}

impl EigenangleSet {
    /// Normalized eigenvalues 2cosθ.
    pub fn traces(&self) -> Vec<f64> {
        self.angles.iter().map(|t| 2.0 * t.cos()).collect()
    }

    pub fn cos_sum(&self, m: u32) -> f64 {
        self.angles.iter().map(|t| (m as f64 * t).cos()).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "p", "i", "theta", "two_cos"])?;
        for (i, t) in self.angles.iter().enumerate() {
            wr.write_record([
                self.k.to_string(),
                self.p.to_string(),
                (i + 1).to_string(),
                format!("{t:.17e}"),
                format!("{:.17e}", 2.0 * t.cos()),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn eigen_angles_level1(k: u32, p: u64) -> Result<EigenangleSet> {
    let d = check_weight(k)?;
    if d > MAX_EIGEN_DIM {
        return Err(Error::DimensionTooLarge { got: d, max: MAX_EIGEN_DIM });
    }
    if d == 0 {
        return Ok(EigenangleSet { k, p, d, angles: Vec::new() });
    }
    let poly = trim(hecke_charpoly_level1(k, p)?);
    let pk = BigInt::from(p).pow(k - 1);
    // Deligne: |a| ≤ 2·p^{(k−1)/2}, so (−bound, bound] holds every root.
    let bound = (&pk * 4u32).sqrt() + 1u32;
    let roots = isolate_roots(&poly, &bound, &pk, 36);
    let found: usize = roots.iter().map(|r| r.2).sum();
    if found < d {
        let chain = sturm_chain(&poly);
        let real = sign_changes_at_infinity(&chain, false) - sign_changes_at_infinity(&chain, true);
        let inside = roots.len();
        if real > inside {
            return Err(Error::RootOutOfRange(escaped_root(&chain, &bound, &pk)));
        }
        return Err(Error::Invalid(format!("characteristic polynomial has {} real roots of {d}", found)));
    }
    let mut angles = Vec::with_capacity(d);
    for (num, shift, mult) in roots {
        let den = BigInt::one() << shift;
        let x_sq = ratio_to_f64(&(&num * &num), &(&den * &den * &pk));
        let x = if num.is_negative() { -x_sq.sqrt() } else { x_sq.sqrt() };
        if x.abs() > 2.0 + 1e-8 {
            return Err(Error::RootOutOfRange(x));
        }
        let theta = (x / 2.0).clamp(-1.0, 1.0).acos();
        angles.extend(std::iter::repeat_n(theta, mult));
    }
    angles.sort_by(|a, b| a.total_cmp(b));
    Ok(EigenangleSet { k, p, d, angles })
}

/// Eigen-angles of each eigenform at several primes: row i is (θ_{p_1}(i), …, θ_{p_n}(i)).
///
/// T_q commutes with T_{p_1}, whose characteristic polynomial is squarefree, so T_q = g(T_{p_1})
/// for a rational polynomial g found from one Krylov sequence. The eigenvalue of T_q on the form
/// with T_{p_1}-eigenvalue λ is g(λ), evaluated exactly at a dyadic approximation of λ fine enough
/// that the result is correct to about 2^{-40} in normalized units.
pub fn simultaneous_eigen_angles_level1(k: u32, primes: &[u64]) -> Result<Vec<Vec<f64>>> {
    let d = check_weight(k)?;
    if d == 0 {
        return Err(Error::EmptySpace(k));
    }
    if d > MAX_EIGEN_DIM {
        return Err(Error::DimensionTooLarge { got: d, max: MAX_EIGEN_DIM });
    }
    let Some((&p1, rest)) = primes.split_first() else {
        return Err(Error::Invalid("no primes given".into()));
    };
    let poly = trim(hecke_charpoly_level1(k, p1)?);
    if poly_gcd(&poly, &derivative(&poly)).len() > 1 {
        return Err(Error::Invalid(format!("T_{p1} has a repeated eigenvalue in weight {k}")));
    }
    let t1 = hecke_matrix_level1(k, p1)?;
    let pk1 = BigInt::from(p1).pow(k - 1);
    let bound = (&pk1 * 4u32).sqrt() + 1u32;
    let mut polys = Vec::with_capacity(rest.len());
    for &q in rest {
        polys.push(commutant_polynomial(&t1, &hecke_matrix_level1(k, q)?)?);
    }
    // Bits of root precision so that |g(r) − g(λ)| stays below 2^{-40}·q^{(k-1)/2}.
    let log_b = bound.bits() as f64;
    let mut bits = 40u64;
    for (g, &q) in polys.iter().zip(rest) {
        let slope = g
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, c)| log2_abs(c) + (j as f64 - 1.0) * log_b + (j as f64).log2())
            .fold(f64::NEG_INFINITY, f64::max);
        let need = slope + log_b - 0.5 * (k - 1) as f64 * (q as f64).log2() + 40.0 + (d as f64).log2();
        bits = bits.max(need.ceil().max(0.0) as u64);
    }
    let roots = isolate_roots(&poly, &bound, &pk1, bits);
    if roots.len() != d {
        return Err(Error::Invalid(format!("found {} of {d} roots for T_{p1}", roots.len())));
    }
    let to_angle = |num: &BigInt, den: &BigInt, pk: &BigInt| -> Result<f64> {
        let x_sq = ratio_to_f64(&(num * num), &(den * den * pk));
        let x = if num.is_negative() { -x_sq.sqrt() } else { x_sq.sqrt() };
        if x.abs() > 2.0 + 1e-8 {
            return Err(Error::RootOutOfRange(x));
        }
        Ok((x / 2.0).clamp(-1.0, 1.0).acos())
    };
    let mut rows = Vec::with_capacity(d);
    for (num, shift, _) in &roots {
        let den = BigInt::one() << *shift;
        let mut row = vec![to_angle(num, &den, &pk1)?];
        let r = BigRational::new(num.clone(), den.clone());
        for (g, &q) in polys.iter().zip(rest) {
            let mu = g.iter().rev().fold(BigRational::zero(), |acc, c| acc * &r + c);
            row.push(to_angle(mu.numer(), mu.denom(), &BigInt::from(q).pow(k - 1))?);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn log2_abs(c: &BigRational) -> f64 {
    let bits = |n: &BigInt| {
        let b = n.bits();
        let top = n.abs() >> b.saturating_sub(53);
        top.to_f64().unwrap_or(1.0).log2() + b.saturating_sub(53) as f64
    };
    bits(c.numer()) - bits(c.denom())
}

/// Coefficients (constant term first) of g with g(a) = b, assuming a is cyclic and ab = ba.
fn commutant_polynomial(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Result<Vec<BigRational>> {
    let d = a.len();
    let apply = |m: &[Vec<BigInt>], v: &[BigInt]| -> Vec<BigInt> { m.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect() };
    for start in 0..d {
        let mut v: Vec<BigInt> = (0..d).map(|i| BigInt::from((i == start) as i32)).collect();
        let mut cols = Vec::with_capacity(d);
        for _ in 0..d {
            let next = apply(a, &v);
            cols.push(std::mem::replace(&mut v, next));
        }
        let rhs = apply(b, &cols[0]);
        // Augmented system K g = b·e, K's columns a^j e.
        let mut m: Vec<Vec<BigInt>> = (0..d).map(|i| cols.iter().map(|c| c[i].clone()).chain([rhs[i].clone()]).collect()).collect();
        if let Some(g) = solve_bareiss(&mut m) {
            return Ok(g);
        }
    }
    Err(Error::Invalid("no cyclic basis vector for the Hecke matrix".into()))
}

/// Fraction-free elimination on an augmented d×(d+1) integer system; `None` when singular.
fn solve_bareiss(m: &mut [Vec<BigInt>]) -> Option<Vec<BigRational>> {
    let d = m.len();
    let mut prev = BigInt::one();
    for col in 0..d {
        let piv = (col..d).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let (head, tail) = m.split_at_mut(col + 1);
        let pivot_row = &head[col];
        // Each entry stays a minor of the original matrix, so the division is exact.
        tail.par_iter_mut().for_each(|row| {
            for c in col + 1..=d {
                row[c] = (&row[c] * &pivot_row[col] - &row[col] * &pivot_row[c]) / &prev;
            }
            row[col] = BigInt::zero();
        });
        prev = m[col][col].clone();
    }
    // With det the last pivot, det·x is integral by Cramer's rule.
    let det = prev;
    let mut y = vec![BigInt::zero(); d];
    for i in (0..d).rev() {
        let mut acc = &det * &m[i][d];
        for j in i + 1..d {
            acc -= &m[i][j] * &y[j];
        }
        y[i] = acc / &m[i][i];
    }
    Some(y.into_iter().map(|v| BigRational::new(v, det.clone())).collect())
}

/// Normalized location of some root beyond the Deligne interval.
fn escaped_root(chain: &[Poly], bound: &BigInt, pk: &BigInt) -> f64 {
    let mut r = bound.clone();
    for _ in 0..4096 {
        let next = &r * 2u32;
        let right = sign_changes(chain, &r, 0) - sign_changes(chain, &next, 0);
        let left = sign_changes(chain, &-next.clone(), 0) - sign_changes(chain, &-r.clone(), 0);
        if right > 0 || left > 0 {
            let x = ratio_to_f64(&(&r * &r), pk).sqrt();
            return if right > 0 { x } else { -x };
        }
        r = next;
    }
    f64::INFINITY
}

pub fn write_traces_csv<W: Write>(w: W, rows: &[(u32, u64, BigInt)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k", "n", "trace"])?;
    for (k, n, t) in rows {
        wr.write_record([k.to_string(), n.to_string(), t.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Residual of a product of Weyl cosine sums against its Plancherel main term.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCheck {
    pub residual: f64,
    /// Σ over nonempty S of Π_{j∈S} E_j · Π_{j∉S} d_j·c_{m_j}.
    pub expansion: f64,
    pub errors: Vec<f64>,
    pub bound: f64,
    pub constant: f64,
    pub pass: bool,
}

/// p^{3m/2}·log p^m + 1: per-factor error shape at level 1.
pub fn trace_error_shape(p: u64, m: u32) -> f64 {
    let pf = p as f64;
    pf.powf(1.5 * m as f64) * (m as f64 * pf.ln()) + 1.0
}

pub fn lemma43_residual(k_list: &[u32], p: u64, m: &[i64]) -> Result<ResidualCheck> {
    lemma43_residual_with(k_list, p, m, TRACE_ERROR_CONSTANT)
}

pub fn lemma43_residual_with(k_list: &[u32], p: u64, m: &[i64], constant: f64) -> Result<ResidualCheck> {
    if k_list.len() != m.len() {
        return Err(Error::ArityMismatch { expected: k_list.len(), got: m.len() });
    }
    if m.contains(&0) {
        return Err(Error::Invalid("every frequency must be nonzero".into()));
    }
    let prov = FourierCoeffProvider::ModularPlancherel(p);
    let mut sums = Vec::with_capacity(m.len());
    let mut mains = Vec::with_capacity(m.len());
    let mut shapes = Vec::with_capacity(m.len());
    let mut dims = Vec::with_capacity(m.len());
    for (&k, &mj) in k_list.iter().zip(m) {
        let d = dim_cuspforms_level1(k)? as f64;
        let mm = mj.unsigned_abs() as u32;
        sums.push(weyl_cos_sum_level1(k, p, mm)?);
        mains.push(d * fourier_coeff::<f64>(&prov, &[mj]));
        shapes.push(trace_error_shape(p, mm));
        dims.push(d);
    }
    let errors: Vec<f64> = sums.iter().zip(&mains).map(|(s, c)| s - c).collect();
    let residual = (sums.iter().product::<f64>() - mains.iter().product::<f64>()).abs();
    let r = m.len();
    let mut expansion = 0.0;
    for mask in 1u32..(1 << r) {
        expansion += (0..r).map(|j| if mask >> j & 1 == 1 { errors[j] } else { mains[j] }).product::<f64>();
    }
    let bound = shapes.iter().zip(&dims).map(|(l, d)| constant * l + d).product::<f64>() - dims.iter().product::<f64>();
    Ok(ResidualCheck { residual, expansion: expansion.abs(), errors, bound, constant, pass: residual <= bound })
}
