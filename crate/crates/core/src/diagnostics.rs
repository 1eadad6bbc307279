//! Moments, variances, dissipation and cluster detection for weighted point
//! clouds (agent ensembles and particle measures alike).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interaction::Interaction;

/// A finite weighted point cloud. Averages divide by `normalization()`:
/// the agent count for the particle model, 1 for probability measures.
pub trait WeightedCloud {
    fn dim(&self) -> usize;
    /// Flat positions with stride `dim()`.
    fn positions(&self) -> &[f64];
    fn weights(&self) -> &[f64];
    fn normalization(&self) -> f64;

    fn len(&self) -> usize {
        self.weights().len()
    }

    fn is_empty(&self) -> bool {
        self.weights().is_empty()
    }
}

/// Borrowed cloud, handy for tests and ad hoc data.
#[derive(Debug, Clone, Copy)]
pub struct CloudRef<'a> {
    pub dim: usize,
    pub positions: &'a [f64],
    pub weights: &'a [f64],
    pub normalization: f64,
}

impl<'a> CloudRef<'a> {
    /// Equal weights, averages over the point count.
    pub fn uniform(dim: usize, positions: &'a [f64], ones: &'a [f64]) -> Self {
        CloudRef {
            dim,
            positions,
            weights: ones,
            normalization: ones.len() as f64,
        }
    }
}

impl WeightedCloud for CloudRef<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn positions(&self) -> &[f64] {
        self.positions
    }
    fn weights(&self) -> &[f64] {
        self.weights
    }
    fn normalization(&self) -> f64 {
        self.normalization
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    pub m0: f64,
    pub m1: Vec<f64>,
    pub m2: f64,
}

pub fn moments(c: &impl WeightedCloud) -> Moments {
    let dim = c.dim();
    let z = c.normalization();
    let mut m0 = 0.0;
    let mut m1 = vec![0.0; dim];
    let mut m2 = 0.0;
    for (x, w) in c.positions().chunks_exact(dim).zip(c.weights()) {
        m0 += w;
        for k in 0..dim {
            m1[k] += w * x[k];
            m2 += w * x[k] * x[k];
        }
    }
    m1.iter_mut().for_each(|m| *m /= z);
    Moments { m0: m0 / z, m1, m2: m2 / z }
}

/// Mean squared distance to `centre`.
pub fn spread_about(c: &impl WeightedCloud, centre: &[f64]) -> f64 {
    let dim = c.dim();
    let s: f64 = c
        .positions()
        .chunks_exact(dim)
        .zip(c.weights())
        .map(|(x, w)| w * x.iter().zip(centre).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    s / c.normalization()
}

/// Total variance `V = mean |x - m1|^2`.
pub fn variance(c: &impl WeightedCloud) -> f64 {
    let m = moments(c);
    spread_about(c, &m.m1)
}

/// Variance about the inflow value, `V_X = mean |x - X|^2`.
pub fn variance_about_inflow(c: &impl WeightedCloud, x: &[f64]) -> f64 {
    spread_about(c, x)
}

pub fn dissipation(c: &impl WeightedCloud, engine: &mut Interaction) -> f64 {
    engine.dissipation(c.dim(), c.positions(), c.weights(), 1.0 / c.normalization())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One row of the trajectory table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    #[serde(rename = "N")]
    pub n: f64,
    /// Agent count (micro) or atom count (kinetic).
    #[serde(rename = "M")]
    pub count: u128,
    pub m0: f64,
    pub m1: Vec<f64>,
    pub m2: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "V_X")]
    pub v_x: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "M1dist")]
    pub m1_dist: f64,
    pub c1_residual: f64,
}

impl DiagnosticsRecord {
    /// Evaluate every functional at once; `inflow` is `X(t, N_t)`.
    pub fn compute(
        c: &impl WeightedCloud,
        engine: &mut Interaction,
        t: f64,
        n: f64,
        count: u128,
        inflow: &[f64],
        c1_residual: f64,
    ) -> Self {
        let m = moments(c);
        let v = spread_about(c, &m.m1);
        let v_x = spread_about(c, inflow);
        let m1_dist = sq_dist(&m.m1, inflow);
        let d = dissipation(c, engine);
        DiagnosticsRecord {
            t,
            n,
            count,
            m0: m.m0,
            m1: m.m1,
            m2: m.m2,
            v,
            v_x,
            d,
            m1_dist,
            c1_residual,
        }
    }
}

/// `|dV/dt - (-b V + b M1dist - D)|` between two records, all terms taken at
/// the midpoint. `b_a`, `b_c` are the growth rates at the two record times.
pub fn variance_identity_residual(a: &DiagnosticsRecord, b_a: f64, c: &DiagnosticsRecord, b_c: f64) -> f64 {
    let dt = c.t - a.t;
    let mid = |x: f64, y: f64| 0.5 * (x + y);
    let lhs = (c.v - a.v) / dt;
    let rhs = -mid(b_a * a.v, b_c * c.v) + mid(b_a * a.m1_dist, b_c * c.m1_dist) - mid(a.d, c.d);
    (lhs - rhs).abs()
}

/// Constant-inflow form `dV_X/dt = -b V_X - D`.
pub fn variance_x_identity_residual(a: &DiagnosticsRecord, b_a: f64, c: &DiagnosticsRecord, b_c: f64) -> f64 {
    let dt = c.t - a.t;
    let lhs = (c.v_x - a.v_x) / dt;
    let rhs = -0.5 * (b_a * a.v_x + b_c * c.v_x) - 0.5 * (a.d + c.d);
    (lhs - rhs).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    #[serde(rename = "J")]
    pub j: usize,
    /// Point indices of each cluster, ascending.
    #[serde(skip)]
    pub members: Vec<Vec<usize>>,
    pub masses: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    /// Smallest distance between two cluster centres (`inf` for one cluster).
    pub min_inter: f64,
    /// Largest diameter of any cluster.
    pub max_intra: f64,
    /// Smallest distance between points of different clusters.
    pub min_gap: f64,
}

impl ClusterReport {
    /// Mass-weighted average of the centres; equals `m1` by construction.
    pub fn weighted_center(&self) -> Vec<f64> {
        let total: f64 = self.masses.iter().sum();
        let dim = self.centers.first().map_or(0, |c| c.len());
        let mut out = vec![0.0; dim];
        for (c, m) in self.centers.iter().zip(&self.masses) {
            for k in 0..dim {
                out[k] += m * c[k];
            }
        }
        out.iter_mut().for_each(|x| *x /= total);
        out
    }
}

/// Single-linkage components of the graph with edges `|x_i - x_j| <= link_radius`.
/// Cluster masses are `mass_unit * sum of weights` (use `1/rho` for agents).
pub fn detect_clusters(c: &impl WeightedCloud, link_radius: f64, mass_unit: f64) -> Result<ClusterReport> {
    if !(link_radius > 0.0) {
        return Err(Error::invalid("link radius must be positive"));
    }
    if c.is_empty() {
        return Err(Error::invalid("cannot cluster an empty cloud"));
    }
    let dim = c.dim();
    let pos = c.positions();
    let n = c.len();
    let mut members = if dim == 1 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| pos[a].total_cmp(&pos[b]));
        let mut groups = vec![vec![order[0]]];
        for w in order.windows(2) {
            if pos[w[1]] - pos[w[0]] > link_radius {
                groups.push(Vec::new());
            }
            groups.last_mut().expect("nonempty").push(w[1]);
        }
        groups
    } else {
        union_find_groups(dim, pos, link_radius)
    };
    for g in &mut members {
        g.sort_unstable();
    }
    members.sort_by_key(|g| g[0]);

    let w = c.weights();
    let mut masses = Vec::with_capacity(members.len());
    let mut centers = Vec::with_capacity(members.len());
    let mut max_intra = 0.0f64;
    for g in &members {
        let mass: f64 = g.iter().map(|&i| w[i]).sum();
        let mut centre = vec![0.0; dim];
        for &i in g {
            for k in 0..dim {
                centre[k] += w[i] * pos[i * dim + k];
            }
        }
        centre.iter_mut().for_each(|x| *x /= mass);
        masses.push(mass * mass_unit);
        centers.push(centre);
        max_intra = max_intra.max(diameter(dim, pos, g));
    }
    let mut min_inter = f64::INFINITY;
    for a in 0..centers.len() {
        for b in a + 1..centers.len() {
            min_inter = min_inter.min(sq_dist(&centers[a], &centers[b]).sqrt());
        }
    }
    let min_gap = min_gap(dim, pos, &members);
    Ok(ClusterReport {
        j: members.len(),
        members,
        masses,
        centers,
        min_inter,
        max_intra,
        min_gap,
    })
}

fn diameter(dim: usize, pos: &[f64], g: &[usize]) -> f64 {
    if dim == 1 {
        let (lo, hi) = g
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(pos[i]), hi.max(pos[i])));
        return hi - lo;
    }
    let mut best = 0.0f64;
    for (a, &i) in g.iter().enumerate() {
        for &j in &g[a + 1..] {
            best = best.max(sq_dist(&pos[i * dim..(i + 1) * dim], &pos[j * dim..(j + 1) * dim]));
        }
    }
    best.sqrt()
}

fn min_gap(dim: usize, pos: &[f64], members: &[Vec<usize>]) -> f64 {
    if members.len() < 2 {
        return f64::INFINITY;
    }
    if dim == 1 {
        // clusters are intervals; the gap is between consecutive intervals
        let mut spans: Vec<(f64, f64)> = members
            .iter()
            .map(|g| {
                g.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(pos[i]), hi.max(pos[i])))
            })
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        return spans.windows(2).map(|w| w[1].0 - w[0].1).fold(f64::INFINITY, f64::min);
    }
    let mut best = f64::INFINITY;
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            for &i in &members[a] {
                for &j in &members[b] {
                    best = best.min(sq_dist(&pos[i * dim..(i + 1) * dim], &pos[j * dim..(j + 1) * dim]));
                }
            }
        }
    }
    best.sqrt()
}

fn union_find_groups(dim: usize, pos: &[f64], r: f64) -> Vec<Vec<usize>> {
    use std::collections::HashMap;
    let n = pos.len() / dim;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let key = |i: usize| -> Vec<i64> { pos[i * dim..(i + 1) * dim].iter().map(|x| (x / r).floor() as i64).collect() };
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for i in 0..n {
        cells.entry(key(i)).or_default().push(i);
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
        .map(|mut code| {
            (0..dim)
                .map(|_| {
                    let o = (code % 3) as i64 - 1;
                    code /= 3;
                    o
                })
                .collect()
        })
        .collect();
    for i in 0..n {
        let base = key(i);
        for off in &offsets {
            let k: Vec<i64> = base.iter().zip(off).map(|(a, b)| a + b).collect();
            if let Some(list) = cells.get(&k) {
                for &j in list {
                    if j > i && sq_dist(&pos[i * dim..(i + 1) * dim], &pos[j * dim..(j + 1) * dim]) <= r * r {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Mass of the product measure `w x w` on pairs whose distance lies strictly
/// between `lo` and `hi`, as a fraction of the total pair mass.
pub fn ambiguous_pair_fraction(c: &impl WeightedCloud, lo: f64, hi: f64) -> f64 {
    let dim = c.dim();
    let pos = c.positions();
    let w = c.weights();
    let total: f64 = w.iter().sum();
    let all_pairs = total * total;
    if all_pairs <= 0.0 {
        return 0.0;
    }
    let mut bad = 0.0;
    if dim == 1 {
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| pos[a].total_cmp(&pos[b]));
        let xs: Vec<f64> = order.iter().map(|&i| pos[i]).collect();
        let mut pre = vec![0.0; xs.len() + 1];
        for (k, &i) in order.iter().enumerate() {
            pre[k + 1] = pre[k] + w[i];
        }
        // for each k, weight of points to its right with lo < d < hi
        for k in 0..xs.len() {
            let a = xs.partition_point(|&y| y <= xs[k] + lo);
            let b = xs.partition_point(|&y| y < xs[k] + hi);
            if b > a {
                bad += 2.0 * w[order[k]] * (pre[b] - pre[a.max(k + 1)]).max(0.0);
            }
        }
    } else {
        for i in 0..w.len() {
            for j in i + 1..w.len() {
                let d = sq_dist(&pos[i * dim..(i + 1) * dim], &pos[j * dim..(j + 1) * dim]).sqrt();
                if d > lo && d < hi {
                    bad += 2.0 * w[i] * w[j];
                }
            }
        }
    }
    bad / all_pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub alpha: f64,
    pub points: usize,
    /// The upper end was pulled in to exclude non-positive values.
    pub shrunk: bool,
    pub t_hi: f64,
}

/// Least-squares slope of `log v` against `log t` on `[t_lo, t_hi]`, negated.
pub fn fit_decay_exponent(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::invalid("time and value series differ in length"));
    }
    if !(t_lo > 0.0) || !(t_hi > t_lo) {
        return Err(Error::invalid("fit window must satisfy 0 < t_lo < t_hi"));
    }
    let mut pts = Vec::new();
    let mut shrunk = false;
    let mut last_t = t_lo;
    for (&t, &v) in times.iter().zip(values) {
        if t < t_lo || t > t_hi {
            continue;
        }
        if !(v > 0.0) {
            log::warn!("non-positive value {v} at t = {t}; fit window shrunk to [{t_lo}, {last_t}]");
            shrunk = true;
            break;
        }
        pts.push((t.ln(), v.ln()));
        last_t = t;
    }
    if pts.len() < 2 {
        return Err(Error::invalid("fewer than two usable points in the fit window"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(DecayFit {
        alpha: -sxy / sxx,
        points: pts.len(),
        shrunk,
        t_hi: last_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::Strategy;
    use crate::kernels::InfluenceKernel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud<'a>(pos: &'a [f64], ones: &'a [f64]) -> CloudRef<'a> {
        CloudRef::uniform(1, pos, ones)
    }

    #[test]
    fn moment_examples() {
        let ones = [1.0; 3];
        let m = moments(&cloud(&[2.0, 2.0, 2.0], &ones));
        assert_eq!((m.m0, m.m1[0], m.m2), (1.0, 2.0, 4.0));
        assert_eq!(variance(&cloud(&[2.0, 2.0, 2.0], &ones)), 0.0);
        let c = cloud(&[-1.0, 1.0], &ones[..2]);
        let m = moments(&c);
        assert_eq!((m.m1[0], m.m2), (0.0, 1.0));
        assert_eq!(variance(&c), 1.0);
        assert_eq!(variance_about_inflow(&c, &[0.0]), 1.0);
        assert_eq!(variance_about_inflow(&c, &[1.0]), 2.0);
    }

    #[test]
    fn sample_mean_of_uniform_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
        let ones = vec![1.0; 100];
        let m = moments(&cloud(&xs, &ones)).m1[0];
        let direct = xs.iter().sum::<f64>() / 100.0;
        assert!((m - direct).abs() < 1e-14);
        let stderr = (1.0f64 / 12.0).sqrt() / 10.0;
        assert!((m - 0.5).abs() < 3.0 * stderr);
    }

    #[test]
    fn dissipation_examples() {
        let ones = [1.0; 2];
        let mut e = Interaction::new(InfluenceKernel::constant(1.0), Strategy::Dense);
        assert_eq!(dissipation(&cloud(&[0.0, 1.0], &ones), &mut e), 0.5);
        assert_eq!(dissipation(&cloud(&[0.3, 0.3], &ones), &mut e), 0.0);
        let mut e = Interaction::new(InfluenceKernel::tent(), Strategy::Auto);
        assert_eq!(dissipation(&cloud(&[0.0, 2.0], &ones), &mut e), 0.0);
    }

    #[test]
    fn cluster_examples() {
        let xs = [0.0, 0.1, 0.2, 2.0, 2.05];
        let ones = [1.0; 5];
        let r = detect_clusters(&cloud(&xs, &ones), 0.5, 1.0).unwrap();
        assert_eq!(r.j, 2);
        assert!((r.min_inter - (2.025 - 0.1)).abs() < 1e-12);
        assert!((r.min_gap - 1.8).abs() < 1e-12);
        assert!((r.max_intra - 0.2).abs() < 1e-12);
        let one = detect_clusters(&cloud(&xs[..3], &ones[..3]), 0.5, 1.0).unwrap();
        assert_eq!(one.j, 1);
        assert_eq!(one.min_inter, f64::INFINITY);
    }

    #[test]
    fn two_dimensional_clusters_match_brute_force_linkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pos: Vec<f64> = (0..2 * 200).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let ones = vec![1.0; 200];
        let c = CloudRef::uniform(2, &pos, &ones);
        let r = detect_clusters(&c, 0.45, 1.0).unwrap();
        // every cross-cluster pair is farther than the link radius
        assert!(r.min_gap > 0.45);
        let covered: usize = r.members.iter().map(|g| g.len()).sum();
        assert_eq!(covered, 200);
    }

    #[test]
    fn ambiguous_pairs() {
        let xs = [0.0, 0.0, 0.5, 3.0];
        let ones = [1.0; 4];
        // ordered pairs at distance 0.5: (0,2),(2,0),(1,2),(2,1) out of 16
        let f = ambiguous_pair_fraction(&cloud(&xs, &ones), 0.05, 0.95);
        assert!((f - 0.25).abs() < 1e-15);
        let w = [2.0, 1.0, 1.0];
        let c = CloudRef {
            dim: 1,
            positions: &[0.0, 0.5, 3.0],
            weights: &w,
            normalization: 4.0,
        };
        assert!((ambiguous_pair_fraction(&c, 0.05, 0.95) - 0.25).abs() < 1e-15);
        let c2 = CloudRef {
            dim: 2,
            positions: &[0.0, 0.0, 0.5, 0.0, 3.0, 0.0],
            weights: &w,
            normalization: 4.0,
        };
        assert!((ambiguous_pair_fraction(&c2, 0.05, 0.95) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn decay_fit_on_exact_power_laws() {
        let ts: Vec<f64> = (1..=200).map(|k| k as f64 * 0.5).collect();
        let v1: Vec<f64> = ts.iter().map(|t| 1.0 / t).collect();
        let v2: Vec<f64> = ts.iter().map(|t| 5.0 * t.powf(-0.5)).collect();
        assert!((fit_decay_exponent(&ts, &v1, 10.0, 100.0).unwrap().alpha - 1.0).abs() < 1e-6);
        assert!((fit_decay_exponent(&ts, &v2, 10.0, 100.0).unwrap().alpha - 0.5).abs() < 1e-6);
        let mut v3 = v1.clone();
        v3[150] = 0.0;
        let fit = fit_decay_exponent(&ts, &v3, 10.0, 100.0).unwrap();
        assert!(fit.shrunk && fit.t_hi < 75.5);
        assert!((fit.alpha - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn decomposition_identities(
            xs in proptest::collection::vec(-3.0f64..3.0, 2..60),
            ws in proptest::collection::vec(1u32..6, 60),
            x in -3.0f64..3.0,
        ) {
            let w: Vec<f64> = ws[..xs.len()].iter().map(|&k| k as f64).collect();
            let c = CloudRef { dim: 1, positions: &xs, weights: &w, normalization: w.iter().sum() };
            let m = moments(&c);
            prop_assert_eq!(m.m0, 1.0);
            let v = variance(&c);
            let v_x = variance_about_inflow(&c, &[x]);
            let dist = (m.m1[0] - x).powi(2);
            prop_assert!((v_x - (v + dist)).abs() <= 1e-10 * v_x.max(1e-300) + 1e-15);
            prop_assert!((m.m2 - m.m1[0].powi(2) - v).abs() <= 1e-10 * m.m2.max(1.0));
            let r = detect_clusters(&c, 0.5, 1.0).unwrap();
            let centre = r.weighted_center();
            prop_assert!((centre[0] - m.m1[0]).abs() <= 1e-10);
            let covered: usize = r.members.iter().map(|g| g.len()).sum();
            prop_assert_eq!(covered, xs.len());
        }
    }
}
