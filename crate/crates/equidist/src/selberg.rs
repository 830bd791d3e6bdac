//! Cochrane's n-dimensional Beurling–Selberg majorants and minorants.

use crate::error::{Error, Result};
use crate::scalar::{Kahan, Real};
use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::io::Write;

/// Interval [a, b] inside [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalMod1<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> IntervalMod1<T> {
    pub fn new(a: T, b: T) -> Result<Self> {
        if !(T::zero() <= a && a <= b && b <= T::one()) {
            return Err(Error::Invalid(format!("need 0 <= a <= b <= 1, got [{a:?}, {b:?}]")));
        }
        Ok(IntervalMod1 { a, b })
    }

    pub fn length(&self) -> T {
        self.b - self.a
    }

    pub fn contains(&self, x: T) -> bool {
        self.a <= x && x <= self.b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Truncation of the periodization sum and sample count of the coefficient FFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelbergKernelParams {
    pub radius: usize,
    pub fft_size: usize,
}

/// Largest tolerated tail of the periodization sum.
pub const TRUNCATION_BUDGET: f64 = 1e-10;

impl SelbergKernelParams {
    /// Smallest radius whose tail bound meets the budget at degree M.
    pub fn for_degree(m: usize) -> Self {
        let mut radius = 8;
        while periodization_tail(m, radius) > TRUNCATION_BUDGET {
            radius *= 2;
        }
        SelbergKernelParams { radius, fft_size: 4096 }
    }

    fn validate(&self) -> Result<()> {
        if self.radius < 8 || self.fft_size < 4096 || !self.fft_size.is_power_of_two() {
            return Err(Error::Invalid(format!("bad kernel params {self:?}")));
        }
        Ok(())
    }
}

/// Bound on Σ_{|r|>R} |V((M+1)(x+r))| from |H(w) - sgn w| ≤ 1/(3π²|w|³).
pub fn periodization_tail(m: usize, radius: usize) -> f64 {
    let m1 = (m + 1) as f64;
    let r1 = radius.saturating_sub(1).max(1) as f64;
    1.0 / (3.0 * std::f64::consts::PI.powi(2) * m1.powi(3) * r1 * r1)
}

fn trigamma<T: Real>(mut x: T) -> T {
    let mut acc = T::zero();
    let six = T::of(6.0);
    while x < six {
        acc = acc + (x * x).recip();
        x = x + T::one();
    }
    let inv = x.recip();
    let i2 = inv * inv;
    let series = inv
        + i2 * (T::of(0.5)
            + inv * (T::of(1.0 / 6.0) + i2 * (T::of(-1.0 / 30.0) + i2 * (T::of(1.0 / 42.0) + i2 * (T::of(-1.0 / 30.0) + i2 * T::of(5.0 / 66.0))))));
    acc + series
}

/// q(w) = 2ψ'(w) - 1/w² - 2/w for w > 0, so that H(w) = 1 - sin²(πw) q(w) / π².
fn h_defect<T: Real>(w: T) -> T {
    if w > T::of(40.0) {
        let inv = w.recip();
        let i2 = inv * inv;
        return inv * i2 * (T::of(1.0 / 3.0) + i2 * (T::of(-1.0 / 15.0) + i2 * (T::of(1.0 / 21.0) + i2 * T::of(-1.0 / 15.0))));
    }
    T::of(2.0) * trigamma(w) - (w * w).recip() - T::of(2.0) / w
}

/// Fejér kernel (sin πz / πz)².
pub fn fejer<T: Real>(z: T) -> T {
    if z == T::zero() {
        return T::one();
    }
    let s = (T::PI() * z).sin() / (T::PI() * z);
    s * s
}

/// Vaaler's entire majorant-building function H; odd, with H(0) = 0.
pub fn vaaler_h<T: Real>(z: T) -> T {
    if z == T::zero() {
        return T::zero();
    }
    let w = z.abs();
    let s = (T::PI() * w).sin() / T::PI();
    let v = T::one() - s * s * h_defect(w);
    if z < T::zero() {
        -v
    } else {
        v
    }
}

/// Coefficients of one axis, index m + M for |m| ≤ M.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisPolys<T> {
    pub degree: usize,
    pub v: Vec<Complex<T>>,
    pub w: Vec<Complex<T>>,
}

impl<T: Real> AxisPolys<T> {
    fn eval_pair(&self, x: T) -> (T, T) {
        let m = self.degree as i64;
        let (mut vs, mut ws) = (Kahan::new(), Kahan::new());
        for k in -m..=m {
            let e = Complex::from_polar(T::one(), T::TAU() * T::of_i64(k) * x);
            let i = (k + m) as usize;
            vs.add((self.v[i] * e).re);
            ws.add((self.w[i] * e).re);
        }
        (vs.value(), ws.value())
    }
}

fn unit<T: Real>(theta: T) -> Complex<T> {
    Complex::from_polar(T::one(), theta)
}

/// Exact periodized coefficients: Vaaler's weight for V, the Fejér triangle for W.
pub fn periodized_axis_closed_form<T: Real>(interval: &IntervalMod1<T>, m: usize) -> AxisPolys<T> {
    let (a, b) = (interval.a, interval.b);
    let m1 = T::of_usize(m + 1);
    let tau = T::TAU();
    let mut v = Vec::with_capacity(2 * m + 1);
    let mut w = Vec::with_capacity(2 * m + 1);
    for k in -(m as i64)..=(m as i64) {
        let kt = T::of_i64(k);
        let t = kt.abs() / m1;
        let ea = unit(-tau * kt * a);
        let eb = unit(-tau * kt * b);
        let fejer = (T::one() - t) / (T::of(2.0) * m1);
        w.push((ea + eb) * fejer);
        if k == 0 {
            v.push(Complex::new(b - a, T::zero()));
        } else {
            let pt = T::PI() * t;
            let g = pt * (T::one() - t) / pt.tan() + t;
            let denom = Complex::new(T::zero(), tau * kt);
            v.push((ea - eb) / denom * g);
        }
    }
    AxisPolys { degree: m, v, w }
}

/// Coefficients of the 1-periodizations of V_I((M+1)x) and W_I((M+1)x).
/// W uses the closed-form periodized Fejér coefficients; V is sampled from the truncated r-series and transformed.
pub fn periodized_axis_polys<T: Real>(interval: &IntervalMod1<T>, m: usize, params: &SelbergKernelParams) -> Result<AxisPolys<T>> {
    if m == 0 {
        return Err(Error::Invalid("degree must be at least 1".into()));
    }
    params.validate()?;
    let tail = periodization_tail(m, params.radius);
    if tail > TRUNCATION_BUDGET {
        return Err(Error::TruncationBudgetExceeded { tail, budget: TRUNCATION_BUDGET });
    }
    let n = params.fft_size;
    let m1 = T::of_usize(m + 1);
    let (sa, sb) = (m1 * interval.a, m1 * interval.b);
    let r = params.radius as i64;
    let half = T::of(0.5);
    let samples: Vec<Complex<T>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let x = T::of_usize(k) / T::of_usize(n);
            // Pair r with -r so the slowly decaying parts cancel before accumulation.
            let mut acc = Kahan::new();
            let term = |rr: i64| {
                let z = m1 * (x + T::of_i64(rr));
                half * (vaaler_h(z - sa) + vaaler_h(sb - z))
            };
            acc.add(term(0));
            for rr in 1..=r {
                acc.add(term(rr) + term(-rr));
            }
            Complex::new(acc.value(), T::zero())
        })
        .collect();
    let mut buf = samples;
    FftPlanner::<T>::new().plan_fft_forward(n).process(&mut buf);
    let scale = T::of_usize(n).recip();
    let v = (-(m as i64)..=(m as i64))
        .map(|k| buf[k.rem_euclid(n as i64) as usize] * scale)
        .collect();
    let closed = periodized_axis_closed_form(interval, m);
    Ok(AxisPolys { degree: m, v, w: closed.w })
}

/// Dense coefficient table over the degree box; entry order is row-major in (m_1 + M_1, ..., m_n + M_n).
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPolynomial<T> {
    pub degrees: Vec<usize>,
    pub coeffs: Vec<Complex<T>>,
}

impl<T: Real> TrigPolynomial<T> {
    pub fn zero(degrees: Vec<usize>) -> Self {
        let len = degrees.iter().map(|&m| 2 * m + 1).product();
        TrigPolynomial { degrees, coeffs: vec![Complex::new(T::zero(), T::zero()); len] }
    }

    pub fn dims(&self) -> usize {
        self.degrees.len()
    }

    fn index(&self, m: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (&mj, &dj) in m.iter().zip(&self.degrees) {
            if mj.unsigned_abs() as usize > dj {
                return None;
            }
            idx = idx * (2 * dj + 1) + (mj + dj as i64) as usize;
        }
        Some(idx)
    }

    /// Coefficient at m; zero outside the degree box.
    pub fn coeff(&self, m: &[i64]) -> Complex<T> {
        self.index(m).map(|i| self.coeffs[i]).unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    pub fn set(&mut self, m: &[i64], c: Complex<T>) {
        let i = self.index(m).expect("index inside degree box");
        self.coeffs[i] = c;
    }

    /// Every m in the degree box, in storage order.
    pub fn indices(&self) -> Vec<Vec<i64>> {
        box_indices(&self.degrees)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dims()).map(|j| format!("m{j}")).collect();
        header.push("re".into());
        header.push("im".into());
        wr.write_record(&header)?;
        for (m, c) in self.indices().iter().zip(&self.coeffs) {
            let mut row: Vec<String> = m.iter().map(|v| v.to_string()).collect();
            row.push(format!("{:?}", c.re));
            row.push(format!("{:?}", c.im));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn box_indices(degrees: &[usize]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for &d in degrees {
        let d = d as i64;
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-d..=d).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out
}

/// Σ_m c(m) e(m·x), accumulated with compensation; the imaginary residue is dropped.
pub fn eval_trig_poly<T: Real>(poly: &TrigPolynomial<T>, x: &[T]) -> Result<T> {
    if x.len() != poly.dims() {
        return Err(Error::DimensionMismatch { expected: poly.dims(), got: x.len() });
    }
    let axes: Vec<Vec<Complex<T>>> = poly
        .degrees
        .iter()
        .zip(x)
        .map(|(&d, &xj)| (-(d as i64)..=(d as i64)).map(|k| unit(T::TAU() * T::of_i64(k) * xj)).collect())
        .collect();
    let mut acc = Kahan::new();
    let n = poly.dims();
    let mut idx = vec![0usize; n];
    for c in &poly.coeffs {
        let mut e = *c;
        for d in 0..n {
            e = e * axes[d][idx[d]];
        }
        acc.add(e.re);
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(acc.value())
}

/// Per-axis factors of F^±; evaluates in O(Σ M_j) instead of O(Π M_j).
#[derive(Clone, Debug, PartialEq)]
pub struct CochranePolys<T> {
    pub sign: Sign,
    pub intervals: Vec<IntervalMod1<T>>,
    pub axes: Vec<AxisPolys<T>>,
}

fn combine<C: Copy + std::ops::Mul<Output = C> + std::ops::Add<Output = C> + std::ops::Sub<Output = C>>(
    sign: Sign,
    v: &[C],
    w: &[C],
    one: C,
) -> C {
    let prod = |k: C| v.iter().zip(w).fold(one, |acc, (&vi, &wi)| acc * (vi + wi * k));
    let zero_w = v.iter().fold(one, |acc, &vi| acc * vi);
    let two = one + one;
    match sign {
        Sign::Plus => prod(one),
        Sign::Minus => zero_w - prod(two) + prod(one),
    }
}

impl<T: Real> CochranePolys<T> {
    pub fn eval(&self, x: &[T]) -> T {
        let (v, w): (Vec<T>, Vec<T>) = self.axes.iter().zip(x).map(|(ax, &xj)| ax.eval_pair(xj)).unzip();
        combine(self.sign, &v, &w, T::one())
    }

    pub fn coeff(&self, m: &[i64]) -> Complex<T> {
        let mut v = Vec::with_capacity(m.len());
        let mut w = Vec::with_capacity(m.len());
        for (ax, &mj) in self.axes.iter().zip(m) {
            let d = ax.degree as i64;
            if mj.abs() > d {
                return Complex::new(T::zero(), T::zero());
            }
            v.push(ax.v[(mj + d) as usize]);
            w.push(ax.w[(mj + d) as usize]);
        }
        combine(self.sign, &v, &w, Complex::new(T::one(), T::zero()))
    }

    pub fn to_trig_polynomial(&self) -> TrigPolynomial<T> {
        let degrees: Vec<usize> = self.axes.iter().map(|a| a.degree).collect();
        let mut poly = TrigPolynomial::zero(degrees);
        let coeffs: Vec<Complex<T>> = poly.indices().iter().map(|m| self.coeff(m)).collect();
        poly.coeffs = coeffs;
        poly
    }

    /// ∫|F - χ| over the torus, which equals |F̂(0) - Π λ_j| whenever the sandwich holds.
    pub fn integral_gap(&self) -> T {
        let zero = vec![0i64; self.axes.len()];
        let vol = self.intervals.iter().fold(T::one(), |acc, i| acc * i.length());
        (self.coeff(&zero).re - vol).abs()
    }
}

fn check_degrees(intervals_len: usize, degrees: &[usize]) -> Result<()> {
    if intervals_len != degrees.len() {
        return Err(Error::DimensionMismatch { expected: intervals_len, got: degrees.len() });
    }
    if degrees.contains(&0) {
        return Err(Error::Invalid("all degrees must be at least 1".into()));
    }
    Ok(())
}

/// Factored F^± from the exact periodized coefficients.
pub fn cochrane_factors<T: Real>(intervals: &[IntervalMod1<T>], degrees: &[usize], sign: Sign) -> Result<CochranePolys<T>> {
    check_degrees(intervals.len(), degrees)?;
    let axes = intervals.iter().zip(degrees).map(|(i, &m)| periodized_axis_closed_form(i, m)).collect();
    Ok(CochranePolys { sign, intervals: intervals.to_vec(), axes })
}

/// Factored F^± with V coefficients extracted by FFT from the direct series.
pub fn cochrane_factors_sampled<T: Real>(intervals: &[IntervalMod1<T>], degrees: &[usize], sign: Sign) -> Result<CochranePolys<T>> {
    check_degrees(intervals.len(), degrees)?;
    let axes = intervals
        .iter()
        .zip(degrees)
        .map(|(i, &m)| periodized_axis_polys(i, m, &SelbergKernelParams::for_degree(m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CochranePolys { sign, intervals: intervals.to_vec(), axes })
}

pub fn cochrane_nd<T: Real>(intervals: &[IntervalMod1<T>], degrees: &[usize], sign: Sign) -> Result<TrigPolynomial<T>> {
    Ok(cochrane_factors(intervals, degrees, sign)?.to_trig_polynomial())
}

/// Π(λ_j + 2/(M_j+1)) - Π(λ_j + 1/(M_j+1)).
pub fn delta_m<T: Real>(lengths: &[T], degrees: &[usize]) -> T {
    let (mut hi, mut lo) = (T::one(), T::one());
    for (&l, &m) in lengths.iter().zip(degrees) {
        let inv = T::of_usize(m + 1).recip();
        hi = hi * (l + inv + inv);
        lo = lo * (l + inv);
    }
    hi - lo
}

pub fn delta_m_intervals<T: Real>(intervals: &[IntervalMod1<T>], degrees: &[usize]) -> T {
    let lengths: Vec<T> = intervals.iter().map(|i| i.length()).collect();
    delta_m(&lengths, degrees)
}

/// min(1/(π|m|), λ, 1-λ); the first branch is absent at m = 0.
pub fn p_m<T: Real>(interval: &IntervalMod1<T>, m: i64) -> T {
    let l = interval.length();
    let base = l.min(T::one() - l);
    if m == 0 {
        base
    } else {
        base.min((T::PI() * T::of_i64(m.abs())).recip())
    }
}

/// Π over nonzero components of 1/|m_i|.
pub fn script_p<T: Real>(m: &[i64]) -> T {
    m.iter().filter(|&&k| k != 0).fold(T::one(), |acc, &k| acc / T::of_i64(k.abs()))
}

/// Right side of the coefficient bound: Δ_M + Π P_{m_j}(I_j).
/// Bound on |χ̂_I(m)|: p_m away from zero, λ at zero.
pub fn coefficient_factor<T: Real>(interval: &IntervalMod1<T>, m: i64) -> T {
    if m == 0 {
        interval.length()
    } else {
        p_m(interval, m)
    }
}

pub fn coefficient_bound<T: Real>(intervals: &[IntervalMod1<T>], degrees: &[usize], m: &[i64]) -> T {
    let p = intervals.iter().zip(m).fold(T::one(), |acc, (i, &k)| acc * coefficient_factor(i, k));
    delta_m_intervals(intervals, degrees) + p
}
