//! Exact Wasserstein-1 distances between finite weighted measures.
//!
//! In one dimension `W1 = \int |F_mu - F_nu|`, evaluated between sorted
//! breakpoints. In higher dimension the distance is the optimum of a
//! transportation problem, solved exactly by the primal simplex method on a
//! spanning-tree basis (MODI potentials, block pricing).

use super::measure::WeightedParticleMeasure;
use crate::diagnostics::WeightedCloud;
use crate::error::{Error, Result};

/// Largest atom count per side accepted by the exact solver in `d >= 2`.
pub const OT_ATOM_CAP: usize = 2000;

pub fn w1_distance(mu: &WeightedParticleMeasure, nu: &WeightedParticleMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::invalid("measures live in different dimensions"));
    }
    for m in [mu, nu] {
        if (m.mass() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("W1 needs normalised measures"));
        }
    }
    if mu.dim() == 1 {
        return Ok(w1_line(mu.atoms(), mu.weights(), nu.atoms(), nu.weights()));
    }
    if mu.len() > OT_ATOM_CAP || nu.len() > OT_ATOM_CAP {
        return Err(Error::invalid(format!(
            "exact transport is limited to {OT_ATOM_CAP} atoms per side ({} and {} given); subsample the measures first",
            mu.len(),
            nu.len()
        )));
    }
    let cost = |i: usize, j: usize| -> f64 {
        mu.atom(i)
            .iter()
            .zip(nu.atom(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    transport(mu.weights(), nu.weights(), cost)
}

/// `\int |F_mu - F_nu| dx` for measures on the line.
pub fn w1_line(xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64]) -> f64 {
    // signed events: +w for mu, -w for nu
    let mut ev: Vec<(f64, f64)> = Vec::with_capacity(xa.len() + xb.len());
    ev.extend(xa.iter().zip(wa).map(|(&x, &w)| (x, w)));
    ev.extend(xb.iter().zip(wb).map(|(&x, &w)| (x, -w)));
    ev.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    let mut diff = 0.0;
    for k in 0..ev.len() {
        diff += ev[k].1;
        if k + 1 < ev.len() {
            acc += diff.abs() * (ev[k + 1].0 - ev[k].0);
        }
    }
    acc
}

/// Minimum-cost transport between supplies `a` and demands `b` (equal
/// totals) with cost `c(i, j) >= 0`.
pub fn transport(a: &[f64], b: &[f64], c: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::invalid("transport needs nonempty supplies and demands"));
    }
    let cost: Vec<f64> = (0..n * m).map(|k| c(k / m, k % m)).collect();
    let mut s = Simplex::new(n, m, a, b, cost);
    s.solve()?;
    Ok(s.objective())
}

struct Arc {
    i: usize,
    j: usize,
    flow: f64,
}

struct Simplex {
    n: usize,
    m: usize,
    cost: Vec<f64>,
    arcs: Vec<Arc>,
    // tree adjacency over nodes 0..n (rows) and n..n+m (columns): arc ids
    adj: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
    cursor: usize,
}

impl Simplex {
    fn new(n: usize, m: usize, a: &[f64], b: &[f64], cost: Vec<f64>) -> Self {
        // north-west corner start: exactly n + m - 1 basic cells forming a tree
        let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
        let mut arcs = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let f = ra[i].min(rb[j]).max(0.0);
            arcs.push(Arc { i, j, flow: f });
            ra[i] -= f;
            rb[j] -= f;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if (ra[i] <= rb[j] && i < n - 1) || j == m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut adj = vec![Vec::new(); n + m];
        for (k, arc) in arcs.iter().enumerate() {
            adj[arc.i].push(k);
            adj[n + arc.j].push(k);
        }
        Simplex {
            n,
            m,
            cost,
            arcs,
            adj,
            u: vec![0.0; n],
            v: vec![0.0; m],
            cursor: 0,
        }
    }

    fn objective(&self) -> f64 {
        self.arcs.iter().map(|a| a.flow * self.cost[a.i * self.m + a.j]).sum()
    }

    fn other(&self, arc: usize, node: usize) -> usize {
        let a = &self.arcs[arc];
        if node < self.n {
            self.n + a.j
        } else {
            a.i
        }
    }

    fn potentials(&mut self) {
        let total = self.n + self.m;
        let mut seen = vec![false; total];
        let mut stack = vec![0usize];
        seen[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &k in &self.adj[node] {
                let next = self.other(k, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let c = self.cost[self.arcs[k].i * self.m + self.arcs[k].j];
                if next >= self.n {
                    self.v[next - self.n] = c - self.u[node];
                } else {
                    self.u[next] = c - self.v[node - self.n];
                }
                stack.push(next);
            }
        }
    }

    /// Block search for an entering cell with negative reduced cost.
    fn price(&mut self, tol: f64) -> Option<(usize, usize)> {
        let total = self.n * self.m;
        let block = ((total as f64).sqrt() as usize).max(16);
        let mut best: Option<(f64, usize)> = None;
        for scanned in 0..total {
            let k = (self.cursor + scanned) % total;
            let (i, j) = (k / self.m, k % self.m);
            let r = self.cost[k] - self.u[i] - self.v[j];
            if r < -tol && best.map_or(true, |(b, _)| r < b) {
                best = Some((r, k));
            }
            if (scanned + 1) % block == 0 {
                if let Some((_, k)) = best {
                    self.cursor = (k + 1) % total;
                    return Some((k / self.m, k % self.m));
                }
            }
        }
        best.map(|(_, k)| {
            self.cursor = (k + 1) % total;
            (k / self.m, k % self.m)
        })
    }

    /// Tree path from column node `n + j` to row node `i`, as arc ids.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let total = self.n + self.m;
        let mut parent: Vec<Option<usize>> = vec![None; total];
        let start = self.n + j;
        let mut seen = vec![false; total];
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == i {
                break;
            }
            for &k in &self.adj[node] {
                let next = self.other(k, node);
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some(k);
                    queue.push_back(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = i;
        while node != start {
            let k = parent[node].expect("basis is a spanning tree");
            out.push(k);
            node = self.other(k, node);
        }
        out.reverse();
        out
    }

    fn solve(&mut self) -> Result<()> {
        let cmax = self.cost.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-12 * cmax.max(1e-300);
        let limit = 50 * (self.n + self.m) * (self.n + self.m) + 1000;
        for _ in 0..limit {
            self.potentials();
            let Some((i, j)) = self.price(tol) else {
                return Ok(());
            };
            // cycle: entering (i, j) is +, then arcs from column j back to row i alternate -, +, ...
            let path = self.path(i, j);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for (pos, &k) in path.iter().enumerate() {
                if pos % 2 == 0 && self.arcs[k].flow < theta {
                    theta = self.arcs[k].flow;
                    leave = k;
                }
            }
            for (pos, &k) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.arcs[k].flow -= theta;
                } else {
                    self.arcs[k].flow += theta;
                }
            }
            self.arcs[leave].flow = 0.0;
            // replace the leaving arc in place by the entering one
            let (li, lj) = (self.arcs[leave].i, self.arcs[leave].j);
            self.adj[li].retain(|&k| k != leave);
            self.adj[self.n + lj].retain(|&k| k != leave);
            self.arcs[leave] = Arc { i, j, flow: theta };
            self.adj[i].push(leave);
            self.adj[self.n + j].push(leave);
        }
        Err(Error::Internal("transport simplex did not converge".into()))
    }
}
