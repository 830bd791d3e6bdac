//! Vitali and Hardy–Krause variation on grids, variation bounds for indicators and box unions,
//! and the staircase partition that drives the variation of a level-set indicator past any target.

use crate::error::{Error, Result};
use crate::measures::ClosedInterval;
use crate::scalar::{pairwise_sum, Real};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// Samples of f on a rectangular grid of [0,1]^n, row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    pub grids: Vec<Vec<T>>,
    pub values: Vec<T>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

impl<T: Real> GridFunction<T> {
    pub fn new(grids: Vec<Vec<T>>, values: Vec<T>) -> Result<Self> {
        for g in &grids {
            if g.len() < 2 || g[0] != T::zero() || *g.last().unwrap() != T::one() || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid("grids must increase strictly from 0 to 1".into()));
            }
        }
        let len: usize = grids.iter().map(|g| g.len()).product();
        if len != values.len() {
            return Err(Error::DimensionMismatch { expected: len, got: values.len() });
        }
        Ok(GridFunction { grids, values })
    }

    pub fn from_fn(grids: Vec<Vec<T>>, f: impl Fn(&[T]) -> T + Sync) -> Result<Self> {
        let shape: Vec<usize> = grids.iter().map(|g| g.len()).collect();
        let st = strides(&shape);
        let len: usize = shape.iter().product();
        let values = (0..len)
            .into_par_iter()
            .map(|flat| {
                let x: Vec<T> = (0..shape.len()).map(|d| grids[d][(flat / st[d]) % shape[d]]).collect();
                f(&x)
            })
            .collect();
        Self::new(grids, values)
    }

    pub fn dim(&self) -> usize {
        self.grids.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.grids.iter().map(|g| g.len()).collect()
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Restriction to the coordinates in `face` with the others pinned at 1.
    pub fn face(&self, face: &[usize]) -> GridFunction<T> {
        let shape = self.shape();
        let st = strides(&shape);
        let grids: Vec<Vec<T>> = face.iter().map(|&d| self.grids[d].clone()).collect();
        let sub_shape: Vec<usize> = face.iter().map(|&d| shape[d]).collect();
        let sub_st = strides(&sub_shape);
        let len: usize = sub_shape.iter().product();
        let pinned: usize = (0..shape.len()).filter(|d| !face.contains(d)).map(|d| (shape[d] - 1) * st[d]).sum();
        let values = (0..len)
            .map(|flat| {
                let off: usize = face.iter().enumerate().map(|(k, &d)| ((flat / sub_st[k]) % sub_shape[k]) * st[d]).sum();
                self.values[pinned + off]
            })
            .collect();
        GridFunction { grids, values }
    }

    pub fn linear_combination(&self, a: T, other: &GridFunction<T>, b: T) -> Result<GridFunction<T>> {
        if self.grids != other.grids {
            return Err(Error::Invalid("grids differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| a * x + b * y).collect();
        Ok(GridFunction { grids: self.grids.clone(), values })
    }

    /// (f ⊗ g)(x, y) = f(x) g(y) on the concatenated grid.
    pub fn tensor(&self, other: &GridFunction<T>) -> GridFunction<T> {
        let mut grids = self.grids.clone();
        grids.extend(other.grids.iter().cloned());
        let values = self.values.iter().flat_map(|&x| other.values.iter().map(move |&y| x * y)).collect();
        GridFunction { grids, values }
    }
}

/// Σ over grid cells of the absolute alternating corner sum.
pub fn vitali_variation<T: Real>(g: &GridFunction<T>) -> T {
    let shape = g.shape();
    let n = shape.len();
    if n == 0 {
        return T::zero();
    }
    let st = strides(&shape);
    let cells: Vec<usize> = shape.iter().map(|&s| s - 1).collect();
    let cell_st = strides(&cells);
    let ncells: usize = cells.iter().product();
    let corners: Vec<(usize, bool)> = (0..1usize << n)
        .map(|mask| {
            let off = (0..n).filter(|d| mask >> d & 1 == 1).map(|d| st[d]).sum();
            // Sign (-1)^(n - #upper corners) so the all-upper corner enters positively.
            (off, (n - mask.count_ones() as usize) % 2 == 1)
        })
        .collect();
    let per_cell: Vec<T> = (0..ncells)
        .into_par_iter()
        .map(|c| {
            let base: usize = (0..n).map(|d| ((c / cell_st[d]) % cells[d]) * st[d]).sum();
            let s = corners.iter().fold(T::zero(), |acc, &(off, neg)| {
                let v = g.values[base + off];
                if neg {
                    acc - v
                } else {
                    acc + v
                }
            });
            s.abs()
        })
        .collect();
    pairwise_sum(&per_cell)
}

/// Σ over nonempty faces of the Vitali variation of the face restriction (off-face coordinates at 1).
pub fn hk_variation<T: Real>(g: &GridFunction<T>) -> T {
    let n = g.dim();
    let parts: Vec<T> = (1..1usize << n)
        .map(|mask| {
            let face: Vec<usize> = (0..n).filter(|d| mask >> d & 1 == 1).collect();
            vitali_variation(&g.face(&face))
        })
        .collect();
    pairwise_sum(&parts)
}

/// Number of solutions of F_j = level on the domain, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LevelCount {
    Finite(u64),
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IndicatorBound {
    /// Σ_j α_j(a_j) + α_j(b_j).
    pub alpha_sum: f64,
    /// Dimensional constant the sum is multiplied by; recorded, not derived.
    pub dimensional_constant: f64,
}

impl IndicatorBound {
    pub fn bound(&self) -> f64 {
        self.alpha_sum * self.dimensional_constant
    }
}

/// Constant applied to the level-set count; the consistency suite checks it against exact variations.
pub const INDICATOR_CONSTANT: f64 = 1.0;

/// Σ_j α_j(a_j) + α_j(b_j) from per-endpoint level-set counts.
pub fn indicator_variation_bound(alpha_counts: &[(LevelCount, LevelCount)]) -> Result<IndicatorBound> {
    let mut s = 0u64;
    for (j, (a, b)) in alpha_counts.iter().enumerate() {
        match (a, b) {
            (LevelCount::Finite(x), LevelCount::Finite(y)) => s += x + y,
            _ => return Err(Error::InfiniteLevelSet(j)),
        }
    }
    Ok(IndicatorBound { alpha_sum: s as f64, dimensional_constant: INDICATOR_CONSTANT })
}

/// Sign changes of f - level on a uniform sample of [lo, hi], counting exact zeros once.
pub fn count_level_crossings(f: impl Fn(f64) -> f64, level: f64, lo: f64, hi: f64, samples: usize) -> LevelCount {
    let mut count = 0u64;
    let mut prev: Option<f64> = None;
    let mut zero_run = 0usize;
    for i in 0..=samples {
        let x = lo + (hi - lo) * i as f64 / samples as f64;
        let v = f(x) - level;
        if v == 0.0 {
            zero_run += 1;
            if zero_run == 1 {
                count += 1;
            }
            if zero_run > samples / 10 + 1 {
                return LevelCount::Infinite;
            }
            continue;
        }
        if zero_run == 0 {
            if let Some(p) = prev {
                if p * v < 0.0 {
                    count += 1;
                }
            }
        }
        zero_run = 0;
        prev = Some(v);
    }
    LevelCount::Finite(count)
}

/// Union of cells of a rectangular partition; cells are half-open except at the top end.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxUnion<T> {
    pub cuts: Vec<Vec<T>>,
    /// Cell-index ranges [lo, hi) per axis.
    pub boxes: Vec<Vec<(usize, usize)>>,
}

impl<T: Real> BoxUnion<T> {
    /// One box per marked cell.
    pub fn from_mask(cuts: Vec<Vec<T>>, mask: &[bool]) -> Self {
        let shape: Vec<usize> = cuts.iter().map(|c| c.len() - 1).collect();
        let st = strides(&shape);
        let boxes = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(flat, _)| (0..shape.len()).map(|d| ((flat / st[d]) % shape[d], (flat / st[d]) % shape[d] + 1)).collect())
            .collect();
        BoxUnion { cuts, boxes }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.cuts.iter().map(|c| c.len() - 1).collect()
    }

    pub fn mask(&self) -> Vec<bool> {
        let shape = self.shape();
        let st = strides(&shape);
        let mut mask = vec![false; shape.iter().product()];
        for b in &self.boxes {
            let mut idx: Vec<usize> = b.iter().map(|r| r.0).collect();
            'cells: loop {
                mask[idx.iter().zip(&st).map(|(i, s)| i * s).sum::<usize>()] = true;
                for d in (0..idx.len()).rev() {
                    idx[d] += 1;
                    if idx[d] < b[d].1 {
                        continue 'cells;
                    }
                    idx[d] = b[d].0;
                }
                break;
            }
        }
        mask
    }

    /// Vertices of the partition, Π (N_j + 1).
    pub fn vertex_count(&self) -> usize {
        self.cuts.iter().map(|c| c.len()).product()
    }

    /// Cell index of a coordinate under the half-open convention.
    pub fn cell_of(&self, axis: usize, x: T) -> Option<usize> {
        let c = &self.cuts[axis];
        if x < c[0] || x > *c.last().unwrap() {
            return None;
        }
        let i = c.partition_point(|&v| v <= x);
        Some(i.saturating_sub(1).min(c.len() - 2))
    }

    pub fn contains(&self, x: &[T]) -> bool {
        let idx: Option<Vec<usize>> = x.iter().enumerate().map(|(d, &v)| self.cell_of(d, v)).collect();
        let Some(idx) = idx else { return false };
        self.boxes.iter().any(|b| b.iter().zip(&idx).all(|(r, &i)| r.0 <= i && i < r.1))
    }

    /// Indicator sampled on both sides of every cut; its grid variation is the exact variation.
    pub fn indicator_grid(&self) -> Result<GridFunction<T>> {
        let grids: Vec<Vec<T>> = self
            .cuts
            .iter()
            .map(|c| {
                let gap = c.windows(2).fold(T::one(), |m, w| m.min(w[1] - w[0]));
                let eps = gap / T::of(4.0);
                let mut g = vec![T::zero()];
                for &x in &c[1..c.len() - 1] {
                    g.push(x - eps);
                    g.push(x);
                }
                g.push(T::one());
                g.dedup();
                g
            })
            .collect();
        let mask = self.mask();
        let shape = self.shape();
        let st = strides(&shape);
        let cuts = &self.cuts;
        GridFunction::from_fn(grids, |x| {
            let mut flat = 0;
            for (d, &v) in x.iter().enumerate() {
                let c = &cuts[d];
                let i = c.partition_point(|&u| u <= v).saturating_sub(1).min(c.len() - 2);
                flat += i * st[d];
            }
            if mask[flat] {
                T::one()
            } else {
                T::zero()
            }
        })
    }
}

/// Re-cover of a box union by maximal boxes and the variation bound it yields.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoverBound {
    pub boxes: Vec<Vec<(usize, usize)>>,
    /// (3^n - 1) per box: the largest Hardy–Krause variation of one box indicator.
    pub bound: f64,
}

/// Merge runs along the last axis, then identical run-sets along earlier axes.
fn decompose(mask: &[bool], shape: &[usize]) -> Vec<Vec<(usize, usize)>> {
    let n = shape.len();
    if n == 1 {
        let mut out = Vec::new();
        let mut i = 0;
        while i < shape[0] {
            if mask[i] {
                let s = i;
                while i < shape[0] && mask[i] {
                    i += 1;
                }
                out.push(vec![(s, i)]);
            } else {
                i += 1;
            }
        }
        return out;
    }
    let slice = mask.len() / shape[0];
    let mut out: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut open: Vec<(Vec<(usize, usize)>, usize)> = Vec::new();
    for i in 0..shape[0] {
        let sub = decompose(&mask[i * slice..(i + 1) * slice], &shape[1..]);
        let mut next = Vec::new();
        for b in sub {
            if let Some(pos) = open.iter().position(|(ob, _)| *ob == b) {
                let (ob, start) = open.swap_remove(pos);
                next.push((ob, start));
            } else {
                next.push((b, i));
            }
        }
        for (ob, start) in open.drain(..) {
            let mut full = vec![(start, i)];
            full.extend(ob);
            out.push(full);
        }
        open = next;
    }
    for (ob, start) in open {
        let mut full = vec![(start, shape[0])];
        full.extend(ob);
        out.push(full);
    }
    out.sort();
    out
}

pub fn box_union_variation_bound<T: Real>(u: &BoxUnion<T>) -> RecoverBound {
    let shape = u.shape();
    let boxes = decompose(&u.mask(), &shape);
    let per_box = 3f64.powi(shape.len() as i32) - 1.0;
    RecoverBound { bound: boxes.len() as f64 * per_box, boxes }
}

/// Cut coordinates of a two-dimensional partition of [0,1]^2.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition2D {
    pub x_cuts: Vec<f64>,
    pub y_cuts: Vec<f64>,
}

impl Partition2D {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["axis", "cut"])?;
        for x in &self.x_cuts {
            wr.write_record(["x", &format!("{x:?}")])?;
        }
        for y in &self.y_cuts {
            wr.write_record(["y", &format!("{y:?}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn cut_count(&self) -> usize {
        self.x_cuts.len() + self.y_cuts.len()
    }
}

fn level_sum(l1: f64, l2: f64, t1: f64, t2: f64) -> f64 {
    l1 * (std::f64::consts::TAU * t1).cos() + l2 * (std::f64::consts::TAU * t2).cos()
}

/// Staircase partition along a level curve of λ1 cos 2πθ1 + λ2 cos 2πθ2 at an edge of J.
///
/// Each staircase cell has exactly one corner on the far side of the edge, so its mixed
/// difference of χ_J is ±1, and the Vitali sum over the whole grid is at least the cell count.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn appendix_partition(l1: f64, l2: f64, j: ClosedInterval, target: f64) -> Result<(Partition2D, f64)> {
    if l1 == 0.0 || l2 == 0.0 {
        return Err(Error::ZeroScale(if l1 == 0.0 { 0 } else { 1 }));
    }
    let s = l1.abs() + l2.abs();
    if !(j.length() > 0.0) {
        return Err(Error::InfeasibleTarget);
    }
    let level = if j.hi < s && j.hi > -s {
        j.hi
    } else if j.lo > -s && j.lo < s {
        j.lo
    } else {
        return Err(Error::InfeasibleTarget);
    };
    let k = target.max(0.0).ceil() as usize;
    let f = |t1: f64, t2: f64| if j.contains(level_sum(l1, l2, t1, t2)) { 1.0 } else { 0.0 };
    if k == 0 {
        let part = Partition2D { x_cuts: vec![0.0, 1.0], y_cuts: vec![0.0, 1.0] };
        let g = GridFunction::from_fn(vec![part.x_cuts.clone(), part.y_cuts.clone()], |x| f(x[0], x[1]))?;
        return Ok((part, vitali_variation(&g)));
    }
    // Quarter of the torus where the sum increases in both coordinates.
    let base1 = if l1 > 0.0 { 0.5 } else { 0.0 };
    let base2 = if l2 > 0.0 { 0.5 } else { 0.0 };
    let tau = std::f64::consts::TAU;
    // On that quarter u ↦ λ cos 2π(base+u) runs monotonically from -|λ| to |λ| as u goes 0 → 1/2.
    let inv = |lam: f64, v: f64| -> Option<f64> {
        let c = v / lam.abs();
        if c.abs() >= 1.0 {
            return None;
        }
        // -|λ| cos(2πu) = v
        Some((-c).acos() / tau)
    };
    // Parametrize the level curve by the share w of the level assigned to the first term.
    let lo_w = (level - l2.abs()).max(-l1.abs());
    let hi_w = (level + l2.abs()).min(l1.abs());
    if !(hi_w > lo_w) {
        return Err(Error::InfeasibleTarget);
    }
    let margin = 0.1 * (hi_w - lo_w);
    let (w0, w1) = (lo_w + margin, hi_w - margin);
    let points: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let w = w0 + (w1 - w0) * (i as f64 + 0.5) / k as f64;
            let u1 = inv(l1, w).expect("inside range");
            let u2 = inv(l2, level - w).expect("inside range");
            (base1 + u1, base2 + u2)
        })
        .collect();
    let min_gap = points
        .windows(2)
        .map(|p| (p[1].0 - p[0].0).abs().min((p[1].1 - p[0].1).abs()))
        .fold(f64::INFINITY, f64::min)
        .min(0.25 / k as f64);
    let on_far_side = |v: f64| if level == j.hi { v > j.hi } else { v < j.lo };
    let mut eps = min_gap / 8.0;
    for _ in 0..60 {
        let mut xs = vec![0.0, 1.0];
        let mut ys = vec![0.0, 1.0];
        let mut ok = true;
        for &(t1, t2) in &points {
            let g1 = -tau * l1 * (tau * t1).sin();
            let g2 = -tau * l2 * (tau * t2).sin();
            let ratio = (g1 / g2).max(g2 / g1);
            let near = eps;
            let far = (eps * (1.0 + ratio) * 1.5).min(min_gap / 2.0 - eps);
            // Only the low corner lies below the level: in J at the upper edge, outside at the lower.
            let (xa, xb, ya, yb) = (t1 - near, t1 + far, t2 - near, t2 + far);
            let corners = [level_sum(l1, l2, xa, ya), level_sum(l1, l2, xb, ya), level_sum(l1, l2, xa, yb), level_sum(l1, l2, xb, yb)];
            let far_count = corners.iter().filter(|&&v| on_far_side(v)).count();
            let expect = if level == j.hi { 3 } else { 1 };
            let in_j = corners.iter().filter(|&&v| j.contains(v)).count();
            if far_count != expect || in_j != 4 - expect || far <= near {
                ok = false;
                break;
            }
            xs.extend([xa, xb]);
            ys.extend([ya, yb]);
        }
        if ok {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup();
            ys.dedup();
            let part = Partition2D { x_cuts: xs, y_cuts: ys };
            let g = GridFunction::from_fn(vec![part.x_cuts.clone(), part.y_cuts.clone()], |x| f(x[0], x[1]))?;
            let achieved = vitali_variation(&g);
            return Ok((part, achieved));
        }
        eps /= 2.0;
    }
    Err(Error::InfeasibleTarget)
}
