//! Densities, Fourier coefficients and integration for the equidistribution measures.

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Kahan, Real};
use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ClosedInterval {
    // Negated comparison also rejects NaN endpoints.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Invalid(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(ClosedInterval { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A real function on [-1, 1]^n.
pub trait Transform: Sync {
    fn arity(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;

    /// Range enclosure over a box of (lo, hi) pairs; `None` when unavailable.
    fn enclose(&self, _bx: &[(f64, f64)]) -> Option<(f64, f64)> {
        None
    }
}

pub struct FnTransform<F> {
    arity: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnTransform<F> {
    pub fn new(arity: usize, f: F) -> Self {
        FnTransform { arity, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Transform for FnTransform<F> {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Region F^{-1}(J).
#[derive(Clone, Copy)]
pub struct RegionSpec<'a> {
    pub f: &'a dyn Transform,
    pub j: ClosedInterval,
}

/// One-dimensional probability density.
///
/// `SatoTate`, `Plancherel` and `Scaled` live on the trace side `x = cos θ`;
/// `AngleG` is the elliptic angle side (`x = cos πu`), `AngleGp` the modular one (`x = cos 2πu`).
#[derive(Clone, Debug, PartialEq)]
pub enum Density1D<T> {
    SatoTate,
    Plancherel(u64),
    AngleG,
    AngleGp(u64),
    Uniform,
    Scaled(T, Box<Density1D<T>>),
    Grid { start: T, step: T, samples: Vec<T> },
}

fn plancherel_gap<T: Real>(p: u64) -> T {
    // (p^{1/2} + p^{-1/2})^2 = p + 2 + 1/p
    let pf = T::of(p as f64);
    pf + T::of(2.0) + pf.recip()
}

impl<T: Real> Density1D<T> {
    pub fn scaled(lambda: T, inner: Density1D<T>) -> Result<Self> {
        if lambda == T::zero() {
            return Err(Error::ZeroScale(0));
        }
        Ok(Density1D::Scaled(lambda, Box::new(inner)))
    }

    pub fn support(&self) -> (T, T) {
        match self {
            Density1D::SatoTate | Density1D::Plancherel(_) => (-T::one(), T::one()),
            Density1D::AngleG | Density1D::AngleGp(_) | Density1D::Uniform => (T::zero(), T::one()),
            Density1D::Scaled(l, inner) => {
                let (a, b) = inner.support();
                let (u, v) = (a * *l, b * *l);
                (u.min(v), u.max(v))
            }
            Density1D::Grid { start, step, samples } => {
                (*start, *start + *step * T::of_usize(samples.len().saturating_sub(1)))
            }
        }
    }

    /// Whether integration should go through the substitution x = cos φ.
    fn trace_side(&self) -> bool {
        match self {
            Density1D::SatoTate | Density1D::Plancherel(_) => true,
            Density1D::Scaled(_, inner) => inner.trace_side(),
            _ => false,
        }
    }

    pub fn eval(&self, x: T) -> T {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return T::zero();
        }
        let pi = T::PI();
        let two = T::of(2.0);
        match self {
            Density1D::SatoTate => two / pi * (T::one() - x * x).max(T::zero()).sqrt(),
            Density1D::Plancherel(p) => {
                let pf = T::of(*p as f64);
                let root = (T::one() - x * x).max(T::zero()).sqrt();
                two * (pf + T::one()) / pi * root / (plancherel_gap::<T>(*p) - T::of(4.0) * x * x)
            }
            Density1D::AngleG => {
                let s = (pi * x).sin();
                two * s * s
            }
            Density1D::AngleGp(p) => {
                let pf = T::of(*p as f64);
                let (s, c) = (two * pi * x).sin_cos();
                two * (pf + T::one()) * s * s / (plancherel_gap::<T>(*p) - T::of(4.0) * c * c)
            }
            Density1D::Uniform => T::one(),
            Density1D::Scaled(l, inner) => inner.eval(x / *l) / l.abs(),
            Density1D::Grid { start, step, samples } => {
                let pos = (x - *start) / *step;
                let i = pos.floor().to_usize().unwrap_or(0).min(samples.len().saturating_sub(2));
                if samples.len() == 1 {
                    return samples[0];
                }
                let frac = pos - T::of_usize(i);
                samples[i] * (T::one() - frac) + samples[i + 1] * frac
            }
        }
    }

    /// Mass of [a, b] under the density.
    pub fn integrate(&self, a: T, b: T) -> T {
        let (lo, hi) = self.support();
        let (a, b) = (a.max(lo), b.min(hi));
        if a >= b {
            return T::zero();
        }
        match self {
            Density1D::SatoTate | Density1D::Plancherel(_) => {
                let (pa, pb) = (b.acos(), a.acos());
                adaptive_simpson(&|phi: T| self.eval(phi.cos()) * phi.sin(), pa, pb, T::of(1e-15))
            }
            Density1D::Scaled(l, inner) => {
                let (u, v) = (a / *l, b / *l);
                inner.integrate(u.min(v), u.max(v))
            }
            Density1D::Grid { start, step, samples } => grid_integral(*start, *step, samples, a, b),
            Density1D::Uniform => b - a,
            Density1D::AngleG => {
                let prim = |u: T| u - (T::TAU() * u).sin() / T::TAU();
                prim(b) - prim(a)
            }
            _ => adaptive_simpson(&|u: T| self.eval(u), a, b, T::of(1e-15)),
        }
    }

    pub fn mass(&self) -> T {
        let (lo, hi) = self.support();
        self.integrate(lo, hi)
    }

    /// sup of the density, the height that enters the Erdős–Turán smoothing term.
    pub fn height(&self) -> T {
        let pi = T::PI();
        let two = T::of(2.0);
        match self {
            Density1D::SatoTate => two / pi,
            Density1D::Plancherel(p) => {
                let c = plancherel_gap::<T>(*p);
                let y = ((T::of(8.0) - c) / T::of(4.0)).max(T::zero()).min(T::one());
                self.eval(y.sqrt()).max(two * (T::of(*p as f64) + T::one()) / (pi * c))
            }
            Density1D::AngleG => two,
            Density1D::AngleGp(p) => {
                let pf = T::of(*p as f64);
                two * pf / (pf + T::one())
            }
            Density1D::Uniform => T::one(),
            Density1D::Scaled(l, inner) => inner.height() / l.abs(),
            Density1D::Grid { samples, .. } => samples.iter().fold(T::zero(), |m, &s| m.max(s)),
        }
    }

    /// Angle-side counterpart of a trace-side density.
    pub fn angle_side(&self) -> Option<Density1D<T>> {
        match self {
            Density1D::SatoTate => Some(Density1D::AngleG),
            Density1D::Plancherel(p) => Some(Density1D::AngleGp(*p)),
            _ => None,
        }
    }

    /// Midpoint nodes and weights of a Q-point rule; trace-side kinds use midpoints in φ.
    pub fn quadrature_nodes(&self, q: usize) -> Vec<(T, T)> {
        let qt = T::of_usize(q);
        if self.trace_side() {
            let (scale, inner) = match self {
                Density1D::Scaled(l, inner) => (*l, inner.as_ref()),
                d => (T::one(), d),
            };
            let h = T::PI() / qt;
            (0..q)
                .map(|i| {
                    let phi = (T::of_usize(i) + T::of(0.5)) * h;
                    let c = phi.cos();
                    (scale * c, inner.eval(c) * phi.sin() * h)
                })
                .collect()
        } else {
            let (lo, hi) = self.support();
            let h = (hi - lo) / qt;
            (0..q)
                .map(|i| {
                    let x = lo + (T::of_usize(i) + T::of(0.5)) * h;
                    (x, self.eval(x) * h)
                })
                .collect()
        }
    }

    pub fn write_grid_csv<W: Write>(&self, w: W) -> Result<()> {
        let Density1D::Grid { start, step, samples } = self else {
            return Err(Error::Invalid("only grid densities serialize to CSV".into()));
        };
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "density"])?;
        for (i, s) in samples.iter().enumerate() {
            let x = *start + *step * T::of_usize(i);
            wr.write_record([format!("{:?}", x), format!("{:?}", s)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn grid_integral<T: Real>(start: T, step: T, samples: &[T], a: T, b: T) -> T {
    let n = samples.len();
    if n < 2 {
        return T::zero();
    }
    let val = |x: T| {
        let pos = (x - start) / step;
        let i = pos.floor().to_usize().unwrap_or(0).min(n - 2);
        let f = pos - T::of_usize(i);
        samples[i] * (T::one() - f) + samples[i + 1] * f
    };
    let ia = ((a - start) / step).floor().to_usize().unwrap_or(0).min(n - 1);
    let ib = ((b - start) / step).ceil().to_usize().unwrap_or(0).min(n - 1);
    let half = T::of(0.5);
    let mut acc = Kahan::new();
    for i in ia..ib {
        let x0 = (start + step * T::of_usize(i)).max(a);
        let x1 = (start + step * T::of_usize(i + 1)).min(b);
        if x1 > x0 {
            acc.add((val(x0) + val(x1)) * half * (x1 - x0));
        }
    }
    acc.value()
}

fn adaptive_simpson<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T, tol: T) -> T {
    #[allow(clippy::too_many_arguments)]
    fn rec<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> T {
        let half = T::of(0.5);
        let m = (a + b) * half;
        let (lm, rm) = ((a + m) * half, (m + b) * half);
        let (flm, frm) = (f(lm), f(rm));
        let six = T::of(6.0);
        let left = (m - a) / six * (fa + T::of(4.0) * flm + fm);
        let right = (b - m) / six * (fm + T::of(4.0) * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= T::of(15.0) * tol {
            return left + right + delta / T::of(15.0);
        }
        rec(f, a, m, fa, flm, fm, left, tol * half, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol * half, depth - 1)
    }
    // Seed with a few panels so narrow features are not missed.
    let panels = 8;
    let h = (b - a) / T::of_usize(panels);
    (0..panels)
        .map(|i| {
            let (x0, x1) = (a + h * T::of_usize(i), a + h * T::of_usize(i + 1));
            let xm = (x0 + x1) * T::of(0.5);
            let (f0, f1, f2) = (f(x0), f(xm), f(x1));
            let w = (x1 - x0) / T::of(6.0) * (f0 + T::of(4.0) * f1 + f2);
            rec(f, x0, x1, f0, f1, f2, w, tol / T::of_usize(panels), 40)
        })
        .fold(T::zero(), |s, v| s + v)
}

/// Source of the Fourier coefficients c_m of an angle-side density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FourierCoeffProvider {
    Lebesgue,
    ModularPlancherel(u64),
    EllipticST,
    ProductOf(Vec<FourierCoeffProvider>),
}

impl FourierCoeffProvider {
    fn coeff1<T: Real>(&self, m: i64) -> T {
        let half = T::of(0.5);
        match self {
            FourierCoeffProvider::Lebesgue => {
                if m == 0 {
                    T::one()
                } else {
                    T::zero()
                }
            }
            FourierCoeffProvider::ModularPlancherel(p) => {
                let m = m.unsigned_abs();
                if m == 0 {
                    T::one()
                } else if m % 2 == 1 {
                    T::zero()
                } else {
                    let pf = T::of(*p as f64);
                    half * pf.powi(-(m as i32) / 2) - half * pf.powi(-((m as i32) - 2) / 2)
                }
            }
            FourierCoeffProvider::EllipticST => match m.abs() {
                0 => T::one(),
                1 => -half,
                _ => T::zero(),
            },
            FourierCoeffProvider::ProductOf(_) => unreachable!("products are expanded by fourier_coeff"),
        }
    }

    /// Angle-side density whose coefficients this provider lists, when it is one-dimensional.
    pub fn angle_density<T: Real>(&self) -> Option<Density1D<T>> {
        match self {
            FourierCoeffProvider::Lebesgue => Some(Density1D::Uniform),
            FourierCoeffProvider::ModularPlancherel(p) => Some(Density1D::AngleGp(*p)),
            FourierCoeffProvider::EllipticST => Some(Density1D::AngleG),
            FourierCoeffProvider::ProductOf(_) => None,
        }
    }
}

/// c_m for a coefficient vector; one-dimensional providers act on every component.
pub fn fourier_coeff<T: Real>(provider: &FourierCoeffProvider, m: &[i64]) -> T {
    match provider {
        FourierCoeffProvider::ProductOf(list) => {
            assert_eq!(list.len(), m.len(), "coefficient vector length must match the product");
            list.iter().zip(m).fold(T::one(), |acc, (q, &mj)| acc * fourier_coeff::<T>(q, &[mj]))
        }
        one => m.iter().fold(T::one(), |acc, &mj| acc * one.coeff1::<T>(mj)),
    }
}

/// Product measure with one density per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductMeasure<T> {
    pub factors: Vec<Density1D<T>>,
}

impl<T: Real> ProductMeasure<T> {
    pub fn new(factors: Vec<Density1D<T>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Invalid("product measure needs at least one factor".into()));
        }
        Ok(ProductMeasure { factors })
    }

    pub fn power(d: Density1D<T>, n: usize) -> Result<Self> {
        Self::new(vec![d; n])
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn height(&self) -> T {
        self.factors.iter().fold(T::one(), |h, d| h * d.height())
    }
}

pub fn density_eval<T: Real>(d: &Density1D<T>, x: T) -> T {
    d.eval(x)
}

pub fn integrate_box<T: Real>(pm: &ProductMeasure<T>, bx: &[(T, T)]) -> Result<T> {
    if bx.len() != pm.dim() {
        return Err(Error::ArityMismatch { expected: pm.dim(), got: bx.len() });
    }
    Ok(pm.factors.iter().zip(bx).fold(T::one(), |acc, (d, &(a, b))| acc * d.integrate(a, b)))
}

/// Region mass and its estimated error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionIntegral<T> {
    pub value: T,
    pub error: T,
}

fn region_at<T: Real>(pm: &ProductMeasure<T>, region: &RegionSpec, q: usize) -> T {
    let nodes: Vec<Vec<(T, T)>> = pm.factors.iter().map(|d| d.quadrature_nodes(q)).collect();
    let n = nodes.len();
    let rows: Vec<T> = nodes[0]
        .par_iter()
        .map(|&(x0, w0)| {
            let mut acc = Kahan::new();
            let mut idx = vec![0usize; n];
            let mut x = vec![0.0f64; n];
            x[0] = x0.to_f64().unwrap_or(f64::NAN);
            loop {
                let mut w = w0;
                for d in 1..n {
                    let (xd, wd) = nodes[d][idx[d]];
                    x[d] = xd.to_f64().unwrap_or(f64::NAN);
                    w = w * wd;
                }
                if region.j.contains(region.f.eval(&x)) {
                    acc.add(w);
                }
                let mut d = n - 1;
                loop {
                    if d == 0 {
                        return acc.value();
                    }
                    idx[d] += 1;
                    if idx[d] < nodes[d].len() {
                        break;
                    }
                    idx[d] = 0;
                    d -= 1;
                }
            }
        })
        .collect();
    pairwise_sum(&rows)
}

/// Midpoint tensor quadrature of the region indicator against the product density.
/// Reports the 2Q value with |I(Q) - I(2Q)| as its error.
pub fn integrate_region<T: Real>(pm: &ProductMeasure<T>, region: &RegionSpec, resolution: usize) -> Result<RegionIntegral<T>> {
    if region.f.arity() != pm.dim() {
        return Err(Error::ArityMismatch { expected: pm.dim(), got: region.f.arity() });
    }
    let coarse = region_at(pm, region, resolution.max(1));
    let fine = region_at(pm, region, 2 * resolution.max(1));
    Ok(RegionIntegral { value: fine, error: (fine - coarse).abs() })
}

/// Default convolution step.
pub const CONVOLUTION_STEP: f64 = 1.0 / 8192.0;

/// Density of Σ λ_j X_j for independent X_j, on a grid of the default step.
pub fn convolve<T: Real>(components: &[(T, Density1D<T>)]) -> Result<Density1D<T>> {
    convolve_with_step(components, T::of(CONVOLUTION_STEP))
}

pub fn convolve_with_step<T: Real>(components: &[(T, Density1D<T>)], step: T) -> Result<Density1D<T>> {
    if components.is_empty() {
        return Err(Error::Invalid("nothing to convolve".into()));
    }
    if let Some(i) = components.iter().position(|(l, _)| *l == T::zero()) {
        return Err(Error::ZeroScale(i));
    }
    let half = T::of(0.5);
    let mut start = T::zero();
    let mut acc: Vec<T> = vec![T::one()];
    for (l, d) in components {
        let scaled = Density1D::Scaled(*l, Box::new(d.clone()));
        let (lo, hi) = scaled.support();
        let cells = ((hi - lo) / step).ceil().to_usize().unwrap_or(1).max(1);
        let masses: Vec<T> = (0..=cells).into_par_iter().map(|i| scaled.eval(lo + step * T::of_usize(i)) * step).collect();
        acc = convolve_masses(&acc, &masses);
        start = start + lo;
    }
    let mut samples: Vec<T> = acc.iter().map(|&m| m / step).collect();
    let trap = {
        let s: Vec<T> = samples.iter().map(|&v| v * step).collect();
        pairwise_sum(&s) - (samples[0] + samples[samples.len() - 1]) * half * step
    };
    samples.iter_mut().for_each(|v| *v = *v / trap);
    Ok(Density1D::Grid { start, step, samples })
}

/// Direct summation up to 2^13 outputs, zero-padded FFT beyond.
fn convolve_masses<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let len = a.len() + b.len() - 1;
    if len <= 1 << 13 {
        let mut out = vec![T::zero(); len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] = out[i + j] + x * y;
            }
        }
        return out;
    }
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[T]| {
        let mut buf: Vec<Complex<T>> = v.iter().map(|&x| Complex::new(x, T::zero())).collect();
        buf.resize(size, Complex::new(T::zero(), T::zero()));
        buf
    };
    let (mut fa, mut fb) = (pad(a), pad(b));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex<T>> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    inv.process(&mut prod);
    let scale = T::of_usize(size).recip();
    prod[..len].iter().map(|c| (c.re * scale).max(T::zero())).collect()
}
