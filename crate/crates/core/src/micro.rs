//! Particle discretisation of the free-boundary model.
//!
//! The index interval `[0, N_t)` is sampled at density `rho`: agent `i`
//! stands for `s_i = (i + 1/2) / rho`, so the agent count tracks
//! `M = round(rho N_t)`. Agents that enter during the same step share a
//! position and a birth time for the rest of the run, so they are stored as a
//! single record with an integer multiplicity. Dynamics are unchanged by this;
//! it only keeps memory proportional to the number of steps rather than to
//! the population, which grows by many orders of magnitude in some scenarios.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::diagnostics::{DiagnosticsRecord, WeightedCloud};
use crate::error::{Error, Result};
use crate::growth::{grid_steps, integrate_population, GrowthRate, PopulationPath};
use crate::inflow::{norm, InflowProfile, InflowQuadrature};
use crate::interaction::{cell_list_velocities, dense_velocities, Interaction, Strategy};
use crate::kernels::InfluenceKernel;

/// Counts live in `u128`. Past 2^53 they are no longer exact in `f64`, which
/// is harmless: `rho N` is itself a rounded real by then.
const MAX_COUNT: u128 = 1 << 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// Initial opinion profile `x_0(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    /// Independent uniform draws from the box `[low, high]`.
    Uniform {
        #[serde(deserialize_with = "vector")]
        low: Vec<f64>,
        #[serde(deserialize_with = "vector")]
        high: Vec<f64>,
    },
    /// First half of the index range uniform around `centers[0]`, second half
    /// around `centers[1]`, each in a box of the given half-width.
    TwoBlob {
        centers: [Vec<f64>; 2],
        half_width: f64,
    },
    /// `x_0` as a piecewise-linear function of `u = s / N0 in [0, 1]`;
    /// rows are `[u, x_1, .., x_d]`.
    Table { points: Vec<Vec<f64>> },
    /// Explicit positions, assigned to agents in index order by stratified
    /// resampling (agent `i` of `M0` takes point `floor(i P / M0)`).
    Points { positions: Vec<Vec<f64>> },
}

fn vector<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

impl InitialProfile {
    fn check(&self, dim: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("initial profile: {what}")));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            InitialProfile::Uniform { low, high } => {
                if low.len() != dim || high.len() != dim {
                    return bad("box dimension does not match d");
                }
                if !finite(low) || !finite(high) || low.iter().zip(high).any(|(a, b)| a > b) {
                    return bad("box must be finite with low <= high");
                }
            }
            InitialProfile::TwoBlob { centers, half_width } => {
                if centers.iter().any(|c| c.len() != dim || !finite(c)) {
                    return bad("blob centres must be finite d-vectors");
                }
                if !(*half_width >= 0.0) || !half_width.is_finite() {
                    return bad("blob half-width must be >= 0");
                }
            }
            InitialProfile::Table { points } => {
                if points.len() < 2 || points.iter().any(|p| p.len() != dim + 1 || !finite(p)) {
                    return bad("table needs at least two finite rows [u, x_1, .., x_d]");
                }
                if points[0][0] != 0.0 || points[points.len() - 1][0] != 1.0 {
                    return bad("table must span u = 0 to u = 1");
                }
                if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return bad("table u values must increase");
                }
            }
            InitialProfile::Points { positions } => {
                if positions.is_empty() || positions.iter().any(|p| p.len() != dim || !finite(p)) {
                    return bad("points must be a nonempty list of finite d-vectors");
                }
            }
        }
        Ok(())
    }

    /// Positions for `m0` agents, flat with stride `dim`.
    pub fn sample(&self, dim: usize, m0: usize, seed: u64) -> Result<Vec<f64>> {
        self.check(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(m0 * dim);
        match self {
            InitialProfile::Uniform { low, high } => {
                for _ in 0..m0 {
                    for k in 0..dim {
                        out.push(draw(&mut rng, low[k], high[k]));
                    }
                }
            }
            InitialProfile::TwoBlob { centers, half_width } => {
                for i in 0..m0 {
                    let c = &centers[usize::from(2 * i >= m0)];
                    for ck in c {
                        out.push(draw(&mut rng, ck - half_width, ck + half_width));
                    }
                }
            }
            InitialProfile::Table { points } => {
                for i in 0..m0 {
                    let u = (i as f64 + 0.5) / m0 as f64;
                    let k = points.partition_point(|p| p[0] <= u).clamp(1, points.len() - 1);
                    let (a, b) = (&points[k - 1], &points[k]);
                    let s = (u - a[0]) / (b[0] - a[0]);
                    for d in 1..=dim {
                        out.push(a[d] + s * (b[d] - a[d]));
                    }
                }
            }
            InitialProfile::Points { positions } => {
                let p = positions.len();
                for i in 0..m0 {
                    out.extend_from_slice(&positions[i * p / m0]);
                }
            }
        }
        Ok(out)
    }
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub kernel: InfluenceKernel,
    pub rate: GrowthRate,
    pub inflow: InflowProfile,
    pub n0: f64,
    pub dt: f64,
    pub t_end: f64,
    pub rho: f64,
    pub dim: usize,
    pub initial: InitialProfile,
    pub integrator: Integrator,
    /// Time between diagnostic records.
    pub snapshot_stride: f64,
    pub seed: u64,
    /// Cap on stored records.
    pub m_max: usize,
    pub strategy: Strategy,
    /// Keep full position snapshots at every record.
    pub keep_snapshots: bool,
}

impl SimConfig {
    pub const DEFAULT_M_MAX: usize = 200_000;

    /// Minimal configuration; adjust fields as needed.
    pub fn new(kernel: InfluenceKernel, rate: GrowthRate, inflow: InflowProfile, initial: InitialProfile) -> Self {
        SimConfig {
            dim: inflow.dim(),
            kernel,
            rate,
            inflow,
            n0: 1.0,
            dt: 1e-2,
            t_end: 1.0,
            rho: 100.0,
            initial,
            integrator: Integrator::Rk4,
            snapshot_stride: 0.1,
            seed: 0,
            m_max: Self::DEFAULT_M_MAX,
            strategy: Strategy::Auto,
            keep_snapshots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt must be positive"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::invalid("t_end must be >= 0"));
        }
        if !(self.rho >= 1.0) || !self.rho.is_finite() {
            return Err(Error::invalid("rho must be >= 1"));
        }
        if !(self.n0 > 0.0) || !self.n0.is_finite() {
            return Err(Error::invalid("N0 must be positive"));
        }
        if self.dim == 0 || self.dim != self.inflow.dim() {
            return Err(Error::invalid(format!(
                "dimension {} does not match inflow dimension {}",
                self.dim,
                self.inflow.dim()
            )));
        }
        if !(self.snapshot_stride > 0.0) {
            return Err(Error::invalid("snapshot stride must be positive"));
        }
        if self.m_max == 0 {
            return Err(Error::invalid("m_max must be positive"));
        }
        Ok(())
    }

    pub fn population_path(&self) -> Result<PopulationPath> {
        integrate_population(&self.rate, self.n0, self.t_end, self.dt)
    }

    pub fn stride_steps(&self) -> usize {
        ((self.snapshot_stride / self.dt).round() as usize).max(1)
    }
}

/// `floor(x + 1/2)`.
pub(crate) fn round_half_up(x: f64) -> u128 {
    (x + 0.5).floor() as u128
}

/// Agents as records `(position, multiplicity, birth time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEnsemble {
    dim: usize,
    pos: Vec<f64>,
    mult: Vec<f64>,
    birth: Vec<f64>,
    rho: f64,
    accumulator: f64,
    t: f64,
    n_t: f64,
    count: u128,
}

impl AgentEnsemble {
    /// Ensemble of single agents at the given positions with birth time 0.
    pub fn from_positions(dim: usize, positions: Vec<f64>, rho: f64, n_t: f64) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 || positions.is_empty() {
            return Err(Error::invalid("positions must be a nonempty multiple of the dimension"));
        }
        let m = positions.len() / dim;
        Ok(AgentEnsemble {
            dim,
            mult: vec![1.0; m],
            birth: vec![0.0; m],
            pos: positions,
            rho,
            accumulator: rho * n_t + 0.5 - m as f64,
            t: 0.0,
            n_t,
            count: m as u128,
        })
    }

    /// Number of agents (sum of multiplicities).
    pub fn agent_count(&self) -> u128 {
        self.count
    }

    /// Number of stored records.
    pub fn record_count(&self) -> usize {
        self.mult.len()
    }

    pub fn multiplicities(&self) -> &[f64] {
        &self.mult
    }

    pub fn birth_times(&self) -> &[f64] {
        &self.birth
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `rho N_t + 1/2 - M`, in `[0, 1)` after every step.
    pub fn accumulator(&self) -> f64 {
        self.accumulator
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn population(&self) -> f64 {
        self.n_t
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.pos[i * self.dim..(i + 1) * self.dim]
    }

    /// Largest opinion norm.
    pub fn max_norm(&self) -> f64 {
        self.pos.chunks_exact(self.dim).map(norm).fold(0.0, f64::max)
    }

    /// One row per agent: expands multiplicities.
    pub fn expanded(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.pos
            .chunks_exact(self.dim)
            .zip(&self.birth)
            .zip(&self.mult)
            .flat_map(|((x, &b), &m)| std::iter::repeat((b, x)).take(m as usize))
    }
}

impl WeightedCloud for AgentEnsemble {
    fn dim(&self) -> usize {
        self.dim
    }
    fn positions(&self) -> &[f64] {
        &self.pos
    }
    fn weights(&self) -> &[f64] {
        &self.mult
    }
    fn normalization(&self) -> f64 {
        self.count as f64
    }
}

/// `v_i = (1/M) sum_j psi(|x_j - x_i|)(x_j - x_i)`, dense evaluation.
pub fn rhs(ensemble: &AgentEnsemble, kernel: &InfluenceKernel) -> Vec<f64> {
    let mut out = vec![0.0; ensemble.pos.len()];
    let scale = 1.0 / ensemble.count as f64;
    dense_velocities(kernel, ensemble.dim, &ensemble.pos, &ensemble.mult, scale, &mut out);
    out
}

/// Same sum via a uniform grid of cell size equal to the kernel support;
/// falls back to the dense sum for kernels without compact support.
pub fn neighbor_accelerated_rhs(ensemble: &AgentEnsemble, kernel: &InfluenceKernel) -> Vec<f64> {
    let mut out = vec![0.0; ensemble.pos.len()];
    let scale = 1.0 / ensemble.count as f64;
    cell_list_velocities(kernel, ensemble.dim, &ensemble.pos, &ensemble.mult, scale, &mut out);
    out
}

/// Running check of the uniform bound `|x_i| <= max(sup|x_0|, X_B)`, with a
/// one-step allowance `dt psi_M 2R` for the time discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub radius: f64,
    pub allowance: f64,
    pub max_norm: f64,
    pub violations: u64,
    pub steps_checked: u64,
}

impl Lemma1Report {
    pub fn new(initial_sup: f64, inflow_bound: f64, dt: f64, psi_sup: f64) -> Self {
        let radius = initial_sup.max(inflow_bound);
        Lemma1Report {
            radius,
            allowance: dt * psi_sup * 2.0 * radius,
            max_norm: initial_sup,
            violations: 0,
            steps_checked: 0,
        }
    }

    pub fn observe(&mut self, max_norm: f64) {
        self.steps_checked += 1;
        self.max_norm = self.max_norm.max(max_norm);
        if max_norm > self.radius + self.allowance {
            self.violations += 1;
        }
    }

    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub ensemble: AgentEnsemble,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: AgentEnsemble,
    pub lemma1: Lemma1Report,
    /// Agents inserted over the run.
    pub inserted: u128,
}

/// Stepper for the particle model. Owns the ensemble and shares the
/// population path with anyone who wants to step alongside it.
pub struct MicroSim {
    cfg: SimConfig,
    path: Arc<PopulationPath>,
    ens: AgentEnsemble,
    engine: Interaction,
    k: usize,
    steps: usize,
    quad: InflowQuadrature,
    lemma1: Lemma1Report,
    inserted: u128,
    stage: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl MicroSim {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let path = Arc::new(cfg.population_path()?);
        Self::with_path(cfg, path)
    }

    /// Build on an existing path (must match `rate`, `n0`, `dt`, `t_end`).
    pub fn with_path(cfg: SimConfig, path: Arc<PopulationPath>) -> Result<Self> {
        cfg.validate()?;
        if path.dt() != cfg.dt || path.n0() != cfg.n0 {
            return Err(Error::invalid("population path does not match the configuration"));
        }
        let m0 = round_half_up(cfg.rho * cfg.n0);
        if m0 == 0 {
            return Err(Error::invalid("rho * N0 rounds to zero agents"));
        }
        if m0 as usize > cfg.m_max {
            return Err(Error::ResourceLimit {
                what: "agent records",
                requested: m0,
                cap: cfg.m_max as u128,
            });
        }
        let positions = cfg.initial.sample(cfg.dim, m0 as usize, cfg.seed)?;
        let ens = AgentEnsemble::from_positions(cfg.dim, positions, cfg.rho, cfg.n0)?;
        Self::from_ensemble(cfg, path, ens)
    }

    /// Start from an explicit ensemble (its count must equal `round(rho N0)`).
    pub fn from_ensemble(cfg: SimConfig, path: Arc<PopulationPath>, ens: AgentEnsemble) -> Result<Self> {
        if ens.count != round_half_up(cfg.rho * cfg.n0) || ens.dim != cfg.dim {
            return Err(Error::invalid("initial ensemble does not match rho * N0 agents in dimension d"));
        }
        let steps = grid_steps(cfg.t_end, cfg.dt);
        let quad = InflowQuadrature::new(&cfg.inflow, &path);
        let lemma1 = Lemma1Report::new(ens.max_norm(), cfg.inflow.bound(), cfg.dt, cfg.kernel.sup());
        let engine = Interaction::new(cfg.kernel.clone(), cfg.strategy);
        Ok(MicroSim {
            cfg,
            path,
            ens,
            engine,
            k: 0,
            steps,
            quad,
            lemma1,
            inserted: 0,
            stage: Default::default(),
            tmp: Vec::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn path(&self) -> &Arc<PopulationPath> {
        &self.path
    }

    pub fn ensemble(&self) -> &AgentEnsemble {
        &self.ens
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn total_steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.k >= self.steps
    }

    pub fn lemma1(&self) -> &Lemma1Report {
        &self.lemma1
    }

    pub fn inserted(&self) -> u128 {
        self.inserted
    }

    fn velocities(engine: &mut Interaction, ens: &AgentEnsemble, pos: &[f64], out: &mut Vec<f64>) {
        out.resize(pos.len(), 0.0);
        engine.velocities(ens.dim, pos, &ens.mult, 1.0 / ens.count as f64, out);
    }

    /// Advance one grid step: transport, then insert newborns at `X(t_k, N_k)`.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Err(Error::invalid("simulation already reached t_end"));
        }
        let h = self.cfg.dt;
        let t = self.path.time(self.k);
        self.transport(h);
        if self.ens.pos.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "agent positions", t: t + h });
        }

        let n_next = self.path.population(self.k + 1);
        let target = round_half_up(self.cfg.rho * n_next);
        if target > MAX_COUNT {
            return Err(Error::ResourceLimit {
                what: "agent count",
                requested: target,
                cap: MAX_COUNT,
            });
        }
        let new = target.saturating_sub(self.ens.count);
        if new > 0 {
            if self.ens.record_count() + 1 > self.cfg.m_max {
                return Err(Error::ResourceLimit {
                    what: "agent records",
                    requested: self.ens.record_count() as u128 + 1,
                    cap: self.cfg.m_max as u128,
                });
            }
            let x = self.cfg.inflow.evaluate(t, self.path.population(self.k));
            self.ens.pos.extend_from_slice(&x);
            self.ens.mult.push(new as f64);
            self.ens.birth.push(t);
            self.ens.count += new;
            self.inserted += new;
        }
        self.k += 1;
        self.ens.t = self.path.time(self.k);
        self.ens.n_t = n_next;
        self.ens.accumulator = self.cfg.rho * n_next + 0.5 - self.ens.count as f64;
        self.lemma1.observe(self.ens.max_norm());
        Ok(())
    }

    fn transport(&mut self, h: f64) {
        let [k1, k2, k3, k4] = &mut self.stage;
        let ens = &self.ens;
        Self::velocities(&mut self.engine, ens, &ens.pos, k1);
        match self.cfg.integrator {
            Integrator::Euler => {
                for (x, v) in self.ens.pos.iter_mut().zip(k1.iter()) {
                    *x += h * v;
                }
            }
            Integrator::Rk4 => {
                let tmp = &mut self.tmp;
                tmp.clear();
                tmp.extend(ens.pos.iter().zip(k1.iter()).map(|(x, v)| x + 0.5 * h * v));
                Self::velocities(&mut self.engine, ens, tmp, k2);
                tmp.clear();
                tmp.extend(ens.pos.iter().zip(k2.iter()).map(|(x, v)| x + 0.5 * h * v));
                Self::velocities(&mut self.engine, ens, tmp, k3);
                tmp.clear();
                tmp.extend(ens.pos.iter().zip(k3.iter()).map(|(x, v)| x + h * v));
                Self::velocities(&mut self.engine, ens, tmp, k4);
                for (i, x) in self.ens.pos.iter_mut().enumerate() {
                    *x += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }

    /// Diagnostics at the current time.
    pub fn record(&mut self) -> DiagnosticsRecord {
        let (t, n) = (self.path.time(self.k), self.path.population(self.k));
        self.quad.advance_to(&self.cfg.inflow, &self.path, self.k);
        let x = self.cfg.inflow.evaluate(t, n);
        let c1: Vec<f64> = self.quad.average_integral().iter().zip(&x).map(|(a, b)| a / n - b).collect();
        DiagnosticsRecord::compute(&self.ens, &mut self.engine, t, n, self.ens.count, &x, norm(&c1))
    }

    /// Run to `t_end`, recording every snapshot stride and at the end.
    pub fn run(mut self) -> Result<Trajectory> {
        let stride = self.cfg.stride_steps();
        let mut records = vec![self.record()];
        let mut snapshots = Vec::new();
        if self.cfg.keep_snapshots {
            snapshots.push(Snapshot {
                t: 0.0,
                ensemble: self.ens.clone(),
            });
        }
        while !self.is_done() {
            self.step()?;
            if self.k % stride == 0 || self.is_done() {
                records.push(self.record());
                if self.cfg.keep_snapshots {
                    snapshots.push(Snapshot {
                        t: self.ens.t,
                        ensemble: self.ens.clone(),
                    });
                }
            }
        }
        log::debug!(
            "micro run finished: {} agents in {} records, {} inserted",
            self.ens.count,
            self.ens.record_count(),
            self.inserted
        );
        Ok(Trajectory {
            records,
            snapshots,
            final_state: self.ens,
            lemma1: self.lemma1,
            inserted: self.inserted,
        })
    }
}

pub fn run(cfg: SimConfig) -> Result<Trajectory> {
    MicroSim::new(cfg)?.run()
}
