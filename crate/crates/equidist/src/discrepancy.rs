//! Weyl sums, the measure-generic Erdős–Turán bound, μ-discrepancy and Koksma–Hlawka certificates.

use crate::error::{Error, Result};
use crate::measures::{fourier_coeff, FourierCoeffProvider, ProductMeasure};
use crate::scalar::{Kahan, Real};
use crate::selberg::{box_indices, coefficient_factor, delta_m_intervals, IntervalMod1};
use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

/// Explicit sequences above this size must be given in product form.
pub const MAX_EXPLICIT_POINTS: usize = 1_000_000;

/// Points in [0,1]^n, either listed or as the product of weighted per-axis atoms.
#[derive(Clone, Debug, PartialEq)]
pub enum SequenceND<T> {
    Explicit { dim: usize, points: Vec<Vec<T>> },
    ProductAtoms { axes: Vec<Vec<(T, u64)>> },
}

impl<T: Real> SequenceND<T> {
    pub fn explicit(dim: usize, points: Vec<Vec<T>>) -> Result<Self> {
        if points.len() > MAX_EXPLICIT_POINTS {
            return Err(Error::Invalid(format!("{} explicit points; use product atoms", points.len())));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: points.iter().map(|p| p.len()).find(|&l| l != dim).unwrap_or(0) });
        }
        Ok(SequenceND::Explicit { dim, points })
    }

    pub fn product(axes: Vec<Vec<(T, u64)>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.iter().any(|&(_, w)| w == 0)) {
            return Err(Error::Invalid("product atoms need n >= 1 and positive weights".into()));
        }
        Ok(SequenceND::ProductAtoms { axes })
    }

    pub fn dim(&self) -> usize {
        match self {
            SequenceND::Explicit { dim, .. } => *dim,
            SequenceND::ProductAtoms { axes } => axes.len(),
        }
    }

    /// Number of points counted with multiplicity (Π X_j for product atoms).
    pub fn total(&self) -> T {
        match self {
            SequenceND::Explicit { points, .. } => T::of_usize(points.len()),
            SequenceND::ProductAtoms { axes } => axes.iter().fold(T::one(), |acc, a| acc * T::of(a.iter().map(|&(_, w)| w as f64).sum())),
        }
    }

    /// Number of points in the closed box.
    pub fn count_in(&self, bx: &[(T, T)]) -> T {
        let inside = |x: T, &(a, b): &(T, T)| a <= x && x <= b;
        match self {
            SequenceND::Explicit { points, .. } => {
                T::of_usize(points.iter().filter(|p| p.iter().zip(bx).all(|(&x, r)| inside(x, r))).count())
            }
            SequenceND::ProductAtoms { axes } => axes.iter().zip(bx).fold(T::one(), |acc, (a, r)| {
                acc * T::of(a.iter().filter(|&&(x, _)| inside(x, r)).map(|&(_, w)| w as f64).sum())
            }),
        }
    }

    /// Weighted sum of f over the sequence.
    pub fn sum_of(&self, f: &(dyn Fn(&[T]) -> T + Sync)) -> T {
        match self {
            SequenceND::Explicit { points, .. } => {
                let mut k = Kahan::new();
                points.iter().for_each(|p| k.add(f(p)));
                k.value()
            }
            SequenceND::ProductAtoms { axes } => {
                let n = axes.len();
                let rows: Vec<T> = axes[0]
                    .par_iter()
                    .map(|&(x0, w0)| {
                        let mut k = Kahan::new();
                        let mut idx = vec![0usize; n];
                        let mut x = vec![x0; n];
                        loop {
                            let mut w = w0 as f64;
                            for d in 1..n {
                                x[d] = axes[d][idx[d]].0;
                                w *= axes[d][idx[d]].1 as f64;
                            }
                            k.add(T::of(w) * f(&x));
                            let mut d = n - 1;
                            loop {
                                if d == 0 {
                                    return k.value();
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
                    .collect();
                crate::scalar::pairwise_sum(&rows)
            }
        }
    }
}

/// S(m) = Σ e(m·x) over the sequence for m in a degree box.
#[derive(Clone, Debug, PartialEq)]
pub struct WeylSumTable<T> {
    pub degrees: Vec<usize>,
    pub table: Vec<Complex<T>>,
    pub total: T,
}

impl<T: Real> WeylSumTable<T> {
    pub fn get(&self, m: &[i64]) -> Option<Complex<T>> {
        let mut idx = 0usize;
        for (&mj, &dj) in m.iter().zip(&self.degrees) {
            if mj.unsigned_abs() as usize > dj {
                return None;
            }
            idx = idx * (2 * dj + 1) + (mj + dj as i64) as usize;
        }
        Some(self.table[idx])
    }
}

fn axis_sums<T: Real>(atoms: &[(T, u64)], degree: usize) -> Vec<Complex<T>> {
    (-(degree as i64)..=(degree as i64))
        .map(|m| {
            let (mut re, mut im) = (Kahan::new(), Kahan::new());
            for &(x, w) in atoms {
                let (s, c) = (T::TAU() * T::of_i64(m) * x).sin_cos();
                let wt = T::of(w as f64);
                re.add(wt * c);
                im.add(wt * s);
            }
            Complex::new(re.value(), im.value())
        })
        .collect()
}

pub fn weyl_sums<T: Real>(seq: &SequenceND<T>, degrees: &[usize]) -> Result<WeylSumTable<T>> {
    if degrees.len() != seq.dim() {
        return Err(Error::DimensionMismatch { expected: seq.dim(), got: degrees.len() });
    }
    let indices = box_indices(degrees);
    let table = match seq {
        SequenceND::ProductAtoms { axes } => {
            let per_axis: Vec<Vec<Complex<T>>> = axes.iter().zip(degrees).map(|(a, &d)| axis_sums(a, d)).collect();
            indices
                .iter()
                .map(|m| {
                    m.iter().zip(degrees).zip(&per_axis).fold(Complex::new(T::one(), T::zero()), |acc, ((&mj, &d), s)| {
                        acc * s[(mj + d as i64) as usize]
                    })
                })
                .collect()
        }
        SequenceND::Explicit { points, .. } => indices
            .par_iter()
            .map(|m| {
                let (mut re, mut im) = (Kahan::new(), Kahan::new());
                for p in points {
                    let phase = m.iter().zip(p).fold(T::zero(), |acc, (&mj, &x)| acc + T::of_i64(mj) * x);
                    let (s, c) = (T::TAU() * phase).sin_cos();
                    re.add(c);
                    im.add(s);
                }
                Complex::new(re.value(), im.value())
            })
            .collect(),
    };
    Ok(WeylSumTable { degrees: degrees.to_vec(), table, total: seq.total() })
}

/// Δ_M‖μ‖ + Σ_{0 < |m| ≤ M} (Δ_M + Π P_{m_j}) |S(m)/ΠX - c_m|.
pub fn erdos_turan_bound<T: Real>(
    weyl: &WeylSumTable<T>,
    coeffs: &FourierCoeffProvider,
    mu_height: T,
    intervals: &[IntervalMod1<T>],
    degrees: &[usize],
) -> Result<T> {
    if degrees.len() != weyl.degrees.len() || degrees.iter().zip(&weyl.degrees).any(|(m, w)| m > w) || intervals.len() != degrees.len() {
        return Err(Error::DegreeBoxMismatch { table: weyl.degrees.clone(), needed: degrees.to_vec() });
    }
    let delta = delta_m_intervals(intervals, degrees);
    let mut acc = Kahan::new();
    acc.add(delta * mu_height);
    for m in box_indices(degrees) {
        if m.iter().all(|&k| k == 0) {
            continue;
        }
        let s = weyl.get(&m).expect("degree box checked") / weyl.total;
        let c: T = fourier_coeff(coeffs, &m);
        let weight = delta + intervals.iter().zip(&m).fold(T::one(), |w, (i, &k)| w * coefficient_factor(i, k));
        acc.add(weight * (s - Complex::new(c, T::zero())).norm());
    }
    Ok(acc.value())
}

/// |N(box)/ΠX - μ(box)| for a closed box.
pub fn observed_box_error<T: Real>(seq: &SequenceND<T>, pm: &ProductMeasure<T>, bx: &[(T, T)]) -> Result<T> {
    let mu = crate::measures::integrate_box(pm, bx)?;
    Ok((seq.count_in(bx) / seq.total() - mu).abs())
}

/// Bracket for D_n(μ) = sup over closed boxes of |count - μ(box)·ΠX|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscrepancyEstimate<T> {
    pub lower: T,
    pub upper: T,
}

/// Largest supported dimension for the discrepancy sweep.
pub const MAX_DISCREPANCY_DIM: usize = 3;

/// Achievable (empirical fraction, measure) pairs of one axis: closed intervals spanning atom runs,
/// open intervals between consecutive candidate endpoints, and the empty interval.
fn axis_candidates<T: Real>(atoms: &[(T, u64)], density: &crate::measures::Density1D<T>, lo: T, hi: T) -> Vec<(T, T)> {
    let mut pts: Vec<(T, u64)> = atoms.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite coordinates"));
    let mut merged: Vec<(T, u64)> = Vec::new();
    for (x, w) in pts {
        match merged.last_mut() {
            Some(last) if last.0 == x => last.1 += w,
            _ => merged.push((x, w)),
        }
    }
    let total: f64 = merged.iter().map(|&(_, w)| w as f64).sum();
    let k = merged.len();
    // Endpoint list with support ends; ends coinciding with atoms are kept as atoms.
    let mut ends: Vec<(T, Option<usize>)> = Vec::with_capacity(k + 2);
    if merged.first().is_none_or(|a| a.0 > lo) {
        ends.push((lo, None));
    }
    ends.extend(merged.iter().enumerate().map(|(i, a)| (a.0, Some(i))));
    if merged.last().is_none_or(|a| a.0 < hi) {
        ends.push((hi, None));
    }
    let cdf: Vec<T> = {
        let mut acc = T::zero();
        let mut prev = lo;
        ends.iter()
            .map(|&(x, _)| {
                acc = acc + density.integrate(prev, x);
                prev = x;
                acc
            })
            .collect()
    };
    let mut prefix = vec![0.0f64; k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i] + merged[i].1 as f64;
    }
    let tot = T::of(total);
    let mut out = vec![(T::zero(), T::zero())];
    for i in 0..ends.len() {
        for j in i..ends.len() {
            let mu = cdf[j] - cdf[i];
            if let (Some(a), Some(b)) = (ends[i].1, ends[j].1) {
                out.push((T::of(prefix[b + 1] - prefix[a]) / tot, mu));
            }
            if j > i {
                let first = ends[i].1.map_or_else(|| if ends[i].0 <= lo { 0 } else { k }, |a| a + 1);
                let last = ends[j].1.unwrap_or(k);
                let inner = if last > first { prefix[last] - prefix[first] } else { 0.0 };
                out.push((T::of(inner) / tot, mu));
            }
        }
    }
    out
}

fn convex_hull<T: Real>(mut pts: Vec<(T, T)>) -> Vec<(T, T)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: (T, T), a: (T, T), b: (T, T)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(T, T)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= T::zero() {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(T, T)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= T::zero() {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn max_product_gap<T: Real>(hulls: &[Vec<(T, T)>]) -> T {
    let n = hulls.len();
    let mut idx = vec![0usize; n];
    let mut best = T::zero();
    loop {
        let (mut f, mut m) = (T::one(), T::one());
        for d in 0..n {
            f = f * hulls[d][idx[d]].0;
            m = m * hulls[d][idx[d]].1;
        }
        best = best.max((f - m).abs());
        let mut d = n;
        loop {
            if d == 0 {
                return best;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < hulls[d].len() {
                break;
            }
            idx[d] = 0;
            if d == 0 {
                return best;
            }
        }
    }
}

/// D_n(μ) for a product-atom sequence against a product measure.
///
/// Per axis the objective Π F_j - Π μ_j is linear in (F_j, μ_j), so the supremum is attained at
/// convex-hull vertices of each axis's candidate set; the bracket is therefore tight.
pub fn empirical_discrepancy<T: Real>(seq: &SequenceND<T>, pm: &ProductMeasure<T>) -> Result<DiscrepancyEstimate<T>> {
    let n = seq.dim();
    if n > MAX_DISCREPANCY_DIM {
        return Err(Error::DimensionTooLarge { got: n, max: MAX_DISCREPANCY_DIM });
    }
    if pm.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: pm.dim() });
    }
    match seq {
        SequenceND::ProductAtoms { axes } => {
            let hulls: Vec<Vec<(T, T)>> = axes
                .iter()
                .zip(&pm.factors)
                .map(|(a, d)| {
                    let (lo, hi) = d.support();
                    convex_hull(axis_candidates(a, d, lo, hi))
                })
                .collect();
            let d = max_product_gap(&hulls) * seq.total();
            Ok(DiscrepancyEstimate { lower: d, upper: d })
        }
        SequenceND::Explicit { points, .. } => {
            let d = explicit_sweep(points, pm, None);
            Ok(DiscrepancyEstimate { lower: d, upper: d })
        }
    }
}

/// Candidate endpoints of one axis: coordinates of the points plus support ends, or a uniform lattice.
fn explicit_sweep<T: Real>(points: &[Vec<T>], pm: &ProductMeasure<T>, lattice: Option<usize>) -> T {
    let n = pm.dim();
    let ends: Vec<Vec<T>> = (0..n)
        .map(|d| {
            let (lo, hi) = pm.factors[d].support();
            let mut e: Vec<T> = match lattice {
                Some(q) => (0..=q).map(|i| lo + (hi - lo) * T::of_usize(i) / T::of_usize(q)).collect(),
                None => points.iter().map(|p| p[d]).chain([lo, hi]).collect(),
            };
            e.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            e.dedup();
            e
        })
        .collect();
    let cdfs: Vec<Vec<T>> = ends
        .iter()
        .zip(&pm.factors)
        .map(|(e, d)| {
            let mut acc = T::zero();
            let mut prev = e[0];
            e.iter()
                .map(|&x| {
                    acc = acc + d.integrate(prev, x);
                    prev = x;
                    acc
                })
                .collect()
        })
        .collect();
    // Each axis pair carries (a, b, μ_j([a, b])).
    let pairs: Vec<Vec<(T, T, T)>> = ends
        .iter()
        .zip(&cdfs)
        .map(|(e, c)| (0..e.len()).flat_map(|i| (i..e.len()).map(move |j| (e[i], e[j], c[j] - c[i]))).collect())
        .collect();
    let total = T::of_usize(points.len());
    let mut boxes: Vec<Vec<(T, T, T)>> = vec![Vec::new()];
    for pr in &pairs {
        boxes = boxes
            .into_iter()
            .flat_map(|b| {
                pr.iter().map(move |&iv| {
                    let mut nb = b.clone();
                    nb.push(iv);
                    nb
                })
            })
            .collect();
    }
    boxes
        .par_iter()
        .map(|bx| {
            let mu = bx.iter().fold(T::one(), |acc, &(_, _, m)| acc * m) * total;
            let closed = points.iter().filter(|p| p.iter().zip(bx).all(|(&x, &(a, b, _))| a <= x && x <= b)).count();
            let open = points.iter().filter(|p| p.iter().zip(bx).all(|(&x, &(a, b, _))| a < x && x < b)).count();
            (T::of_usize(closed) - mu).abs().max((mu - T::of_usize(open)).abs())
        })
        .reduce(|| T::zero(), |a, b| a.max(b))
}

/// Sweep restricted to boxes with corners on a uniform lattice of q cells per axis.
pub fn lattice_discrepancy<T: Real>(seq: &SequenceND<T>, pm: &ProductMeasure<T>, q: usize) -> Result<DiscrepancyEstimate<T>> {
    let n = seq.dim();
    if n > MAX_DISCREPANCY_DIM {
        return Err(Error::DimensionTooLarge { got: n, max: MAX_DISCREPANCY_DIM });
    }
    let points: Vec<Vec<T>> = match seq {
        SequenceND::Explicit { points, .. } => points.clone(),
        SequenceND::ProductAtoms { .. } => return Err(Error::Invalid("lattice sweep takes explicit points".into())),
    };
    let lower = explicit_sweep(&points, pm, Some(q));
    // Rounding a box outward and inward to the lattice changes its mass by at most two slabs per axis.
    let slack = pm.factors.iter().fold(T::zero(), |acc, d| {
        let (lo, hi) = d.support();
        acc + T::of(2.0) * d.height() * (hi - lo) / T::of_usize(q)
    });
    Ok(DiscrepancyEstimate { lower, upper: lower + slack * seq.total() })
}

/// Koksma–Hlawka certificate: gap = |Σf - ΠX∫f dμ| against V*(f)·D_n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KHCertificate {
    pub empirical_sum: f64,
    pub main_term: f64,
    pub gap: f64,
    pub vstar_bound: f64,
    pub discrepancy_bound: f64,
}

impl KHCertificate {
    pub fn pass(&self) -> bool {
        self.gap <= self.vstar_bound * self.discrepancy_bound + 1e-9
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "gap": self.gap,
            "vstar_bound": self.vstar_bound,
            "discrepancy_bound": self.discrepancy_bound,
            "pass": self.pass(),
        })
        .to_string()
    }
}

/// Certificate from a precomputed empirical sum and main-term integral.
/// `disc` is the normalized discrepancy D_n/ΠX; the stored discrepancy bound is D_n itself.
pub fn certify(empirical_sum: f64, integral: f64, total: f64, vstar: f64, disc: f64) -> Result<KHCertificate> {
    let main_term = total * integral;
    let cert = KHCertificate {
        empirical_sum,
        main_term,
        gap: (empirical_sum - main_term).abs(),
        vstar_bound: vstar,
        discrepancy_bound: disc * total,
    };
    if !cert.pass() {
        return Err(Error::CertificateViolation { gap: cert.gap, bound: cert.vstar_bound * cert.discrepancy_bound });
    }
    Ok(cert)
}

/// Certificate for f over the sequence, with ∫f dμ taken by midpoint tensor quadrature at `resolution`.
pub fn koksma_hlawka_certificate<T: Real>(
    seq: &SequenceND<T>,
    f: &(dyn Fn(&[T]) -> T + Sync),
    pm: &ProductMeasure<T>,
    vstar: T,
    disc: T,
    resolution: usize,
) -> Result<KHCertificate> {
    let sum = seq.sum_of(f).to_f64().unwrap_or(f64::NAN);
    let nodes: Vec<Vec<(T, T)>> = pm.factors.iter().map(|d| d.quadrature_nodes(resolution)).collect();
    let mut acc = Kahan::new();
    let n = nodes.len();
    let mut idx = vec![0usize; n];
    let mut x = vec![T::zero(); n];
    'outer: loop {
        let mut w = T::one();
        for d in 0..n {
            x[d] = nodes[d][idx[d]].0;
            w = w * nodes[d][idx[d]].1;
        }
        acc.add(w * f(&x));
        let mut d = n;
        loop {
            if d == 0 {
                break 'outer;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < nodes[d].len() {
                break;
            }
            idx[d] = 0;
            if d == 0 {
                break 'outer;
            }
        }
    }
    certify(
        sum,
        acc.value().to_f64().unwrap_or(f64::NAN),
        seq.total().to_f64().unwrap_or(f64::NAN),
        vstar.to_f64().unwrap_or(f64::NAN),
        disc.to_f64().unwrap_or(f64::NAN),
    )
}
