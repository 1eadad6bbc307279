//! Pairwise interaction sums over weighted point clouds.
//!
//! Everything here evaluates, for a cloud of points `x_j` with weights `w_j`,
//!
//! ```text
//! v_i = scale * sum_j w_j psi(|x_j - x_i|) (x_j - x_i)
//! D   = scale^2 * sum_i sum_j w_i w_j psi(|x_i - x_j|) |x_i - x_j|^2
//! ```
//!
//! Positions are a flat slice with stride `dim`. The micro model passes
//! multiplicities with `scale = 1/M`; the kinetic model passes probability
//! weights with `scale = 1`.
//!
//! Besides the dense `O(n^2)` sum there are three exact fast paths: a
//! mean-field reduction for constant `psi`, a sorted prefix-sum sweep for the
//! tent kernel in one dimension, and a cell list for compactly supported
//! kernels in any dimension.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernels::{InfluenceKernel, KernelClass};

/// Below this many points the parallel split costs more than it saves.
const PAR_THRESHOLD: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Pick the cheapest exact method for the kernel and dimension.
    #[default]
    Auto,
    Dense,
    CellList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Dense,
    MeanField,
    TentSweep,
    CellList,
}

#[derive(Debug, Clone)]
pub struct Interaction {
    kernel: InfluenceKernel,
    strategy: Strategy,
    // sort order from the previous sweep; nearly sorted input keeps re-sorting cheap
    order: Vec<usize>,
}

impl Interaction {
    pub fn new(kernel: InfluenceKernel, strategy: Strategy) -> Self {
        Interaction {
            kernel,
            strategy,
            order: Vec::new(),
        }
    }

    pub fn kernel(&self) -> &InfluenceKernel {
        &self.kernel
    }

    fn method(&self, dim: usize, n: usize) -> Method {
        match self.strategy {
            Strategy::Dense => Method::Dense,
            Strategy::CellList if self.kernel.class() == KernelClass::TypeII => Method::CellList,
            Strategy::CellList => Method::Dense,
            Strategy::Auto => {
                if self.kernel.as_constant().is_some() {
                    Method::MeanField
                } else if self.kernel.is_tent() && dim == 1 {
                    Method::TentSweep
                } else if self.kernel.class() == KernelClass::TypeII && n > 256 {
                    Method::CellList
                } else {
                    Method::Dense
                }
            }
        }
    }

    pub fn velocities(&mut self, dim: usize, pos: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
        check_shapes(dim, pos, w);
        debug_assert_eq!(out.len(), pos.len());
        match self.method(dim, w.len()) {
            Method::Dense => dense_velocities(&self.kernel, dim, pos, w, scale, out),
            Method::MeanField => {
                let c = self.kernel.as_constant().expect("constant kernel");
                mean_field_velocities(c, dim, pos, w, scale, out)
            }
            Method::TentSweep => {
                refresh_order(&mut self.order, pos);
                tent_sweep_velocities(&self.order, pos, w, scale, out)
            }
            Method::CellList => cell_list_velocities(&self.kernel, dim, pos, w, scale, out),
        }
    }

    pub fn dissipation(&mut self, dim: usize, pos: &[f64], w: &[f64], scale: f64) -> f64 {
        check_shapes(dim, pos, w);
        match self.method(dim, w.len()) {
            Method::Dense => dense_dissipation(&self.kernel, dim, pos, w, scale),
            Method::MeanField => {
                let c = self.kernel.as_constant().expect("constant kernel");
                mean_field_dissipation(c, dim, pos, w, scale)
            }
            Method::TentSweep => {
                refresh_order(&mut self.order, pos);
                tent_sweep_dissipation(&self.order, pos, w, scale)
            }
            Method::CellList => cell_list_dissipation(&self.kernel, dim, pos, w, scale),
        }
    }
}

fn check_shapes(dim: usize, pos: &[f64], w: &[f64]) {
    assert!(dim > 0, "dimension must be positive");
    assert_eq!(pos.len(), dim * w.len(), "positions and weights disagree");
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Velocity of a single probe point `x`.
pub fn velocity_at(kernel: &InfluenceKernel, dim: usize, pos: &[f64], w: &[f64], scale: f64, x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, xj) in pos.chunks_exact(dim).enumerate() {
        let r = dist2(xj, x).sqrt();
        let c = w[j] * kernel.value(r);
        if c != 0.0 {
            for k in 0..dim {
                out[k] += c * (xj[k] - x[k]);
            }
        }
    }
    out.iter_mut().for_each(|v| *v *= scale);
}

pub fn dense_velocities(kernel: &InfluenceKernel, dim: usize, pos: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
    let one = |(xi, vi): (&[f64], &mut [f64])| velocity_at(kernel, dim, pos, w, scale, xi, vi);
    if w.len() >= PAR_THRESHOLD {
        pos.par_chunks_exact(dim).zip(out.par_chunks_exact_mut(dim)).for_each(one);
    } else {
        pos.chunks_exact(dim).zip(out.chunks_exact_mut(dim)).for_each(one);
    }
}

pub fn dense_dissipation(kernel: &InfluenceKernel, dim: usize, pos: &[f64], w: &[f64], scale: f64) -> f64 {
    let row = |i: usize| -> f64 {
        let xi = &pos[i * dim..(i + 1) * dim];
        let mut acc = 0.0;
        for (j, xj) in pos.chunks_exact(dim).enumerate() {
            let r2 = dist2(xi, xj);
            if r2 > 0.0 {
                acc += w[j] * kernel.value(r2.sqrt()) * r2;
            }
        }
        w[i] * acc
    };
    let total: f64 = if w.len() >= PAR_THRESHOLD {
        // collect-then-sum keeps the reduction order fixed across thread counts
        let rows: Vec<f64> = (0..w.len()).into_par_iter().map(row).collect();
        rows.iter().sum()
    } else {
        (0..w.len()).map(row).sum()
    };
    scale * scale * total
}

/// `psi = c`: `v_i = scale c (sum_j w_j x_j - W x_i)`.
fn mean_field_velocities(c: f64, dim: usize, pos: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
    let total: f64 = w.iter().sum();
    let mut first = vec![0.0; dim];
    for (xj, wj) in pos.chunks_exact(dim).zip(w) {
        for k in 0..dim {
            first[k] += wj * xj[k];
        }
    }
    for (xi, vi) in pos.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        for k in 0..dim {
            vi[k] = scale * c * (first[k] - total * xi[k]);
        }
    }
}

/// `psi = c`: `D = 2 c scale^2 W sum_i w_i |x_i - mean|^2`.
fn mean_field_dissipation(c: f64, dim: usize, pos: &[f64], w: &[f64], scale: f64) -> f64 {
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut mean = vec![0.0; dim];
    for (xj, wj) in pos.chunks_exact(dim).zip(w) {
        for k in 0..dim {
            mean[k] += wj * xj[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let spread: f64 = pos.chunks_exact(dim).zip(w).map(|(x, wj)| wj * dist2(x, &mean)).sum();
    2.0 * c * scale * scale * total * spread
}

fn refresh_order(order: &mut Vec<usize>, xs: &[f64]) {
    let n = xs.len();
    if order.len() != n || order.iter().any(|&i| i >= n) {
        if order.len() < n && order.iter().all(|&i| i < n) {
            // records were appended: keep the old (nearly sorted) prefix
            order.extend(order.len()..n);
        } else {
            *order = (0..n).collect();
        }
    }
    // stable merge sort is linear on the presorted runs left by the last call
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
}

struct Prefix {
    xs: Vec<f64>,
    p: [Vec<f64>; 4],
}

impl Prefix {
    fn new(order: &[usize], pos: &[f64], w: &[f64], moments: usize) -> Self {
        let n = order.len();
        let xs: Vec<f64> = order.iter().map(|&i| pos[i]).collect();
        let mut p: [Vec<f64>; 4] = Default::default();
        for (m, pm) in p.iter_mut().enumerate().take(moments) {
            pm.reserve(n + 1);
            pm.push(0.0);
            let mut acc = 0.0;
            for (k, &i) in order.iter().enumerate() {
                acc += w[i] * xs[k].powi(m as i32);
                pm.push(acc);
            }
        }
        Prefix { xs, p }
    }

    /// `sum_{a <= k < b} w_k (x_k - x)^m` for m = 1, 2 (and 3 if tabulated).
    fn centred(&self, a: usize, b: usize, x: f64) -> [f64; 3] {
        let s = |m: usize| self.p[m][b] - self.p[m][a];
        let (s0, s1, s2) = (s(0), s(1), s(2));
        let c1 = s1 - x * s0;
        let c2 = s2 - 2.0 * x * s1 + x * x * s0;
        let c3 = if self.p[3].is_empty() {
            0.0
        } else {
            s(3) - 3.0 * x * s2 + 3.0 * x * x * s1 - x * x * x * s0
        };
        [c1, c2, c3]
    }

    /// For each sorted index `i`, the window `[l, r)` of points within
    /// distance < 1, split at `i`.
    fn windows(&self) -> Vec<(usize, usize)> {
        let n = self.xs.len();
        let mut out = Vec::with_capacity(n);
        let (mut l, mut r) = (0, 0);
        for i in 0..n {
            let x = self.xs[i];
            while self.xs[l] <= x - 1.0 {
                l += 1;
            }
            r = r.max(i);
            while r < n && self.xs[r] < x + 1.0 {
                r += 1;
            }
            out.push((l, r));
        }
        out
    }
}

/// One-dimensional tent kernel `psi(r) = (1 - r)_+`: with `d = x_j - x_i`,
/// the right neighbours contribute `sum w d - sum w d^2` and the left ones
/// `sum w d + sum w d^2`, both read off prefix sums of `w, wx, wx^2`.
fn tent_sweep_velocities(order: &[usize], pos: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
    let pre = Prefix::new(order, pos, w, 3);
    for (k, (l, r)) in pre.windows().into_iter().enumerate() {
        let x = pre.xs[k];
        let right = pre.centred(k, r, x);
        let left = pre.centred(l, k, x);
        out[order[k]] = scale * ((right[0] - right[1]) + (left[0] + left[1]));
    }
}

fn tent_sweep_dissipation(order: &[usize], pos: &[f64], w: &[f64], scale: f64) -> f64 {
    let pre = Prefix::new(order, pos, w, 4);
    let mut total = 0.0;
    for (k, (l, r)) in pre.windows().into_iter().enumerate() {
        let x = pre.xs[k];
        let right = pre.centred(k, r, x);
        let left = pre.centred(l, k, x);
        // right: d^2 - d^3, left: d^2 + d^3 (d < 0)
        total += w[order[k]] * ((right[1] - right[2]) + (left[1] + left[2]));
    }
    scale * scale * total
}

type CellKey = [i64; 3];

struct CellList {
    cell: f64,
    dim: usize,
    // points sorted by cell, original index order within a cell
    sorted: Vec<usize>,
    ranges: HashMap<CellKey, (usize, usize)>,
}

impl CellList {
    fn new(dim: usize, pos: &[f64], cell: f64) -> Self {
        assert!(dim <= 3, "cell list supports d <= 3");
        let n = pos.len() / dim;
        let keys: Vec<CellKey> = (0..n).map(|i| key_of(&pos[i * dim..(i + 1) * dim], cell)).collect();
        let mut sorted: Vec<usize> = (0..n).collect();
        sorted.sort_by_key(|&i| keys[i]);
        let mut ranges = HashMap::new();
        let mut a = 0;
        while a < n {
            let k = keys[sorted[a]];
            let mut b = a + 1;
            while b < n && keys[sorted[b]] == k {
                b += 1;
            }
            ranges.insert(k, (a, b));
            a = b;
        }
        CellList {
            cell,
            dim,
            sorted,
            ranges,
        }
    }

    fn for_neighbours(&self, x: &[f64], mut f: impl FnMut(usize)) {
        let base = key_of(x, self.cell);
        let span = |k: usize| if k < self.dim { -1..=1 } else { 0..=0 };
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    let key = [base[0] + a, base[1] + b, base[2] + c];
                    if let Some(&(lo, hi)) = self.ranges.get(&key) {
                        self.sorted[lo..hi].iter().for_each(|&j| f(j));
                    }
                }
            }
        }
    }
}

fn key_of(x: &[f64], cell: f64) -> CellKey {
    let mut k = [0i64; 3];
    for (d, xd) in x.iter().enumerate() {
        k[d] = (xd / cell).floor() as i64;
    }
    k
}

pub fn cell_list_velocities(kernel: &InfluenceKernel, dim: usize, pos: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
    if kernel.class() != KernelClass::TypeII || dim > 3 {
        return dense_velocities(kernel, dim, pos, w, scale, out);
    }
    let grid = CellList::new(dim, pos, kernel.support_radius());
    let one = |(xi, vi): (&[f64], &mut [f64])| {
        vi.fill(0.0);
        grid.for_neighbours(xi, |j| {
            let xj = &pos[j * dim..(j + 1) * dim];
            let c = w[j] * kernel.value(dist2(xi, xj).sqrt());
            if c != 0.0 {
                for k in 0..dim {
                    vi[k] += c * (xj[k] - xi[k]);
                }
            }
        });
        vi.iter_mut().for_each(|v| *v *= scale);
    };
    if w.len() >= PAR_THRESHOLD {
        pos.par_chunks_exact(dim).zip(out.par_chunks_exact_mut(dim)).for_each(one);
    } else {
        pos.chunks_exact(dim).zip(out.chunks_exact_mut(dim)).for_each(one);
    }
}

pub fn cell_list_dissipation(kernel: &InfluenceKernel, dim: usize, pos: &[f64], w: &[f64], scale: f64) -> f64 {
    if kernel.class() != KernelClass::TypeII || dim > 3 {
        return dense_dissipation(kernel, dim, pos, w, scale);
    }
    let grid = CellList::new(dim, pos, kernel.support_radius());
    let row = |i: usize| -> f64 {
        let xi = &pos[i * dim..(i + 1) * dim];
        let mut acc = 0.0;
        grid.for_neighbours(xi, |j| {
            let r2 = dist2(xi, &pos[j * dim..(j + 1) * dim]);
            if r2 > 0.0 {
                acc += w[j] * kernel.value(r2.sqrt()) * r2;
            }
        });
        w[i] * acc
    };
    let rows: Vec<f64> = if w.len() >= PAR_THRESHOLD {
        (0..w.len()).into_par_iter().map(row).collect()
    } else {
        (0..w.len()).map(row).collect()
    };
    scale * scale * rows.iter().sum::<f64>()
}
