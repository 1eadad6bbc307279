use std::sync::Arc;

use crate::diagnostics::{DiagnosticsRecord, WeightedCloud};
use crate::error::{Error, Result};
use crate::growth::{grid_steps, PopulationPath};
use crate::inflow::{norm, InflowQuadrature};
use crate::interaction::{velocity_at, Interaction};
use crate::kernels::InfluenceKernel;
use crate::micro::{AgentEnsemble, Integrator, Lemma1Report, SimConfig};

/// Atoms lighter than this are folded into their nearest neighbour.
pub const W_MIN: f64 = 1e-8;

const MASS_TOL: f64 = 1e-12;

/// Probability measure `sum_j w_j delta_{a_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticleMeasure {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedParticleMeasure {
    /// Weights must be nonnegative with a positive total; they are
    /// renormalised to sum to one.
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || atoms.len() != dim * weights.len() || weights.is_empty() {
            return Err(Error::invalid("atoms and weights do not describe a nonempty measure"));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("atoms must be finite"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("weights sum to zero"));
        }
        let mut m = WeightedParticleMeasure { dim, atoms, weights };
        m.weights.iter_mut().for_each(|w| *w /= total);
        Ok(m)
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self::new(x.len(), x.to_vec(), vec![1.0]).expect("finite point")
    }

    /// Equal weights on the given points.
    pub fn uniform(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        let n = atoms.len() / dim.max(1);
        Self::new(dim, atoms, vec![1.0; n])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.atoms[j * self.dim..(j + 1) * self.dim]
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for a in out.atoms.chunks_exact_mut(self.dim) {
            for (x, s) in a.iter_mut().zip(shift) {
                *x += s;
            }
        }
        out
    }

    /// `W1(self, delta_c) = sum_j w_j |a_j - c|`.
    pub fn distance_to_point(&self, c: &[f64]) -> f64 {
        self.atoms
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(a, w)| w * a.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .sum()
    }

    fn max_norm(&self) -> f64 {
        self.atoms.chunks_exact(self.dim).map(norm).fold(0.0, f64::max)
    }

    /// Fold atoms with weight below `w_min` into the nearest heavier atom.
    fn merge_light(&mut self, w_min: f64) -> usize {
        let light: Vec<usize> = (0..self.weights.len()).filter(|&j| self.weights[j] < w_min).collect();
        if light.is_empty() || light.len() == self.weights.len() {
            return 0;
        }
        let dim = self.dim;
        let mut keep = vec![true; self.weights.len()];
        for &j in &light {
            keep[j] = false;
        }
        for &j in &light {
            let aj = self.atom(j).to_vec();
            let mut best = (f64::INFINITY, usize::MAX);
            for i in (0..self.weights.len()).filter(|&i| keep[i]) {
                let d: f64 = self.atom(i).iter().zip(&aj).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < best.0 {
                    best = (d, i);
                }
            }
            self.weights[best.1] += self.weights[j];
        }
        let mut w = Vec::with_capacity(self.weights.len() - light.len());
        let mut a = Vec::with_capacity(w.capacity() * dim);
        for i in 0..self.weights.len() {
            if keep[i] {
                w.push(self.weights[i]);
                a.extend_from_slice(&self.atoms[i * dim..(i + 1) * dim]);
            }
        }
        self.weights = w;
        self.atoms = a;
        light.len()
    }
}

impl WeightedCloud for WeightedParticleMeasure {
    fn dim(&self) -> usize {
        self.dim
    }
    fn positions(&self) -> &[f64] {
        &self.atoms
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn normalization(&self) -> f64 {
        1.0
    }
}

/// `V[f](x) = sum_j w_j psi(|a_j - x|)(a_j - x)`.
pub fn v_field(measure: &WeightedParticleMeasure, kernel: &InfluenceKernel, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; measure.dim];
    velocity_at(kernel, measure.dim, &measure.atoms, &measure.weights, 1.0, x, &mut out);
    out
}

/// Empirical measure of an agent ensemble (records carry weight `m / M`).
pub fn empirical_of_micro(ensemble: &AgentEnsemble) -> WeightedParticleMeasure {
    WeightedParticleMeasure::new(ensemble.dim(), ensemble.positions().to_vec(), ensemble.weights().to_vec())
        .expect("agent ensembles are nonempty with positive multiplicities")
}

#[derive(Debug, Clone)]
pub struct KineticTrajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<(f64, WeightedParticleMeasure)>,
    pub final_state: WeightedParticleMeasure,
    /// Largest `|sum w - 1|` seen after any step.
    pub max_mass_error: f64,
    pub support: Lemma1Report,
    pub merged: usize,
}

/// Stepper for the kinetic equation on a weighted particle measure.
pub struct KineticSim {
    cfg: SimConfig,
    path: Arc<PopulationPath>,
    f: WeightedParticleMeasure,
    engine: Interaction,
    k: usize,
    steps: usize,
    quad: InflowQuadrature,
    support: Lemma1Report,
    max_mass_error: f64,
    merged: usize,
    w_min: f64,
    stage: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl KineticSim {
    /// `f0` defaults to the empirical measure of the micro initial ensemble
    /// built from the same configuration and seed.
    pub fn new(cfg: SimConfig, path: Arc<PopulationPath>, f0: Option<WeightedParticleMeasure>) -> Result<Self> {
        cfg.validate()?;
        if path.dt() != cfg.dt || path.n0() != cfg.n0 {
            return Err(Error::invalid("population path does not match the configuration"));
        }
        let f = match f0 {
            Some(f) => f,
            None => {
                let m0 = crate::micro::round_half_up(cfg.rho * cfg.n0).max(1) as usize;
                let pos = cfg.initial.sample(cfg.dim, m0, cfg.seed)?;
                WeightedParticleMeasure::uniform(cfg.dim, pos)?
            }
        };
        if f.dim != cfg.dim {
            return Err(Error::invalid("initial measure dimension does not match d"));
        }
        if (f.mass() - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid("initial measure is not normalised"));
        }
        let steps = grid_steps(cfg.t_end, cfg.dt);
        let quad = InflowQuadrature::new(&cfg.inflow, &path);
        let support = Lemma1Report::new(f.max_norm(), cfg.inflow.bound(), cfg.dt, cfg.kernel.sup());
        let engine = Interaction::new(cfg.kernel.clone(), cfg.strategy);
        Ok(KineticSim {
            cfg,
            path,
            f,
            engine,
            k: 0,
            steps,
            quad,
            support,
            max_mass_error: 0.0,
            merged: 0,
            w_min: W_MIN,
            stage: Default::default(),
            tmp: Vec::new(),
        })
    }

    pub fn measure(&self) -> &WeightedParticleMeasure {
        &self.f
    }

    pub fn path(&self) -> &Arc<PopulationPath> {
        &self.path
    }

    pub fn is_done(&self) -> bool {
        self.k >= self.steps
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn time(&self) -> f64 {
        self.path.time(self.k)
    }

    pub fn max_mass_error(&self) -> f64 {
        self.max_mass_error
    }

    pub fn support(&self) -> &Lemma1Report {
        &self.support
    }

    fn velocities(engine: &mut Interaction, f: &WeightedParticleMeasure, pos: &[f64], out: &mut Vec<f64>) {
        out.resize(pos.len(), 0.0);
        engine.velocities(f.dim, pos, &f.weights, 1.0, out);
    }

    fn transport(&mut self, h: f64) {
        let [k1, k2, k3, k4] = &mut self.stage;
        let f = &self.f;
        Self::velocities(&mut self.engine, f, &f.atoms, k1);
        match self.cfg.integrator {
            Integrator::Euler => {
                for (x, v) in self.f.atoms.iter_mut().zip(k1.iter()) {
                    *x += h * v;
                }
            }
            Integrator::Rk4 => {
                let tmp = &mut self.tmp;
                tmp.clear();
                tmp.extend(f.atoms.iter().zip(k1.iter()).map(|(x, v)| x + 0.5 * h * v));
                Self::velocities(&mut self.engine, f, tmp, k2);
                tmp.clear();
                tmp.extend(f.atoms.iter().zip(k2.iter()).map(|(x, v)| x + 0.5 * h * v));
                Self::velocities(&mut self.engine, f, tmp, k3);
                tmp.clear();
                tmp.extend(f.atoms.iter().zip(k3.iter()).map(|(x, v)| x + h * v));
                Self::velocities(&mut self.engine, f, tmp, k4);
                for (i, x) in self.f.atoms.iter_mut().enumerate() {
                    *x += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }

    /// Transport, exact decay of the old mass, one inflow atom at
    /// `X(t_k, N_k)`, renormalisation, merge of negligible atoms.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Err(Error::invalid("simulation already reached t_end"));
        }
        let t = self.path.time(self.k);
        self.transport(self.cfg.dt);
        if self.f.atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "kinetic atoms", t });
        }

        let db = self.path.cumulative_rate(self.k + 1) - self.path.cumulative_rate(self.k);
        let old: f64 = self.f.weights.iter().sum();
        let decay = (-db).exp();
        // 1 - e^{-db} S, written to avoid cancellation for small db
        let fresh = (1.0 - old) + old * -(-db).exp_m1();
        if fresh < -MASS_TOL {
            return Err(Error::Internal(format!("negative inflow weight {fresh} at t = {t}")));
        }
        if fresh > 0.0 {
            if self.f.weights.len() + 1 > self.cfg.m_max {
                return Err(Error::ResourceLimit {
                    what: "kinetic atoms",
                    requested: self.f.weights.len() as u128 + 1,
                    cap: self.cfg.m_max as u128,
                });
            }
            self.f.weights.iter_mut().for_each(|w| *w *= decay);
            let x = self.cfg.inflow.evaluate(t, self.path.population(self.k));
            self.f.atoms.extend_from_slice(&x);
            self.f.weights.push(fresh);
        }
        let total: f64 = self.f.weights.iter().sum();
        self.f.weights.iter_mut().for_each(|w| *w /= total);
        self.merged += self.f.merge_light(self.w_min);

        let err = (self.f.mass() - 1.0).abs();
        self.max_mass_error = self.max_mass_error.max(err);
        self.k += 1;
        self.support.observe(self.f.max_norm());
        Ok(())
    }

    pub fn record(&mut self) -> DiagnosticsRecord {
        let (t, n) = (self.path.time(self.k), self.path.population(self.k));
        self.quad.advance_to(&self.cfg.inflow, &self.path, self.k);
        let x = self.cfg.inflow.evaluate(t, n);
        let c1: Vec<f64> = self.quad.average_integral().iter().zip(&x).map(|(a, b)| a / n - b).collect();
        let count = self.f.weights.len() as u128;
        DiagnosticsRecord::compute(&self.f, &mut self.engine, t, n, count, &x, norm(&c1))
    }

    pub fn run(mut self, keep_snapshots: bool) -> Result<KineticTrajectory> {
        let stride = self.cfg.stride_steps();
        let mut records = vec![self.record()];
        let mut snapshots = Vec::new();
        if keep_snapshots {
            snapshots.push((0.0, self.f.clone()));
        }
        while !self.is_done() {
            self.step()?;
            if self.k % stride == 0 || self.is_done() {
                records.push(self.record());
                if keep_snapshots {
                    snapshots.push((self.time(), self.f.clone()));
                }
            }
        }
        Ok(KineticTrajectory {
            records,
            snapshots,
            final_state: self.f,
            max_mass_error: self.max_mass_error,
            support: self.support,
            merged: self.merged,
        })
    }
}

/// Advance `f` one step under the given configuration and path, starting at
/// grid index `k`.
pub fn kinetic_step(
    f: &WeightedParticleMeasure,
    cfg: &SimConfig,
    path: &Arc<PopulationPath>,
    k: usize,
) -> Result<WeightedParticleMeasure> {
    let mut sim = KineticSim::new(cfg.clone(), path.clone(), Some(f.clone()))?;
    if k >= sim.steps {
        return Err(Error::invalid("step index beyond the path horizon"));
    }
    sim.k = k;
    sim.step()?;
    Ok(sim.f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::moments;
    use crate::growth::{integrate_population, GrowthRate};
    use crate::inflow::InflowProfile;
    use crate::micro::InitialProfile;
    use approx::assert_relative_eq;

    fn config(rate: GrowthRate, inflow: InflowProfile, kernel: InfluenceKernel) -> SimConfig {
        let mut cfg = SimConfig::new(
            kernel,
            rate,
            inflow,
            InitialProfile::Uniform {
                low: vec![-1.0],
                high: vec![1.0],
            },
        );
        cfg.rho = 100.0;
        cfg.dt = 0.1;
        cfg.t_end = 1.0;
        cfg
    }

    #[test]
    fn v_field_examples() {
        let k1 = InfluenceKernel::constant(1.0);
        assert_eq!(v_field(&WeightedParticleMeasure::dirac(&[0.3]), &k1, &[0.3]), vec![0.0]);
        assert_eq!(v_field(&WeightedParticleMeasure::dirac(&[1.0]), &k1, &[0.0]), vec![1.0]);
        let two = WeightedParticleMeasure::uniform(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(v_field(&two, &InfluenceKernel::tent(), &[0.5]), vec![0.0]);
    }

    #[test]
    fn single_step_weight_split() {
        let cfg = config(GrowthRate::constant(1.0), InflowProfile::constant(&[0.5]), InfluenceKernel::tent());
        let path = Arc::new(integrate_population(&cfg.rate, cfg.n0, cfg.t_end, cfg.dt).unwrap());
        let f0 = WeightedParticleMeasure::dirac(&[0.0]);
        let f1 = kinetic_step(&f0, &cfg, &path, 0).unwrap();
        assert_relative_eq!(f1.weights()[0], (-0.1f64).exp(), epsilon = 1e-6);
        assert_relative_eq!(f1.weights()[1], 1.0 - (-0.1f64).exp(), epsilon = 1e-6);
        assert_eq!(f1.atom(1), &[0.5]);
        assert!((f1.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_growth_means_pure_transport() {
        let cfg = config(GrowthRate::constant(0.0), InflowProfile::constant(&[0.5]), InfluenceKernel::tent());
        let path = Arc::new(integrate_population(&cfg.rate, cfg.n0, cfg.t_end, cfg.dt).unwrap());
        let f0 = WeightedParticleMeasure::new(1, vec![0.0, 0.4, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
        let f1 = kinetic_step(&f0, &cfg, &path, 0).unwrap();
        assert_eq!(f1.weights(), f0.weights());
        assert_ne!(f1.atoms(), f0.atoms());
    }

    #[test]
    fn first_moment_follows_relaxation() {
        let mut cfg = config(
            GrowthRate::constant(1.0),
            InflowProfile::sinusoidal(&[1.0], 1.0, 0.0),
            InfluenceKernel::tent(),
        );
        cfg.dt = 1e-3;
        cfg.t_end = 0.5;
        let path = Arc::new(integrate_population(&cfg.rate, cfg.n0, cfg.t_end, cfg.dt).unwrap());
        let mut sim = KineticSim::new(cfg, path, None).unwrap();
        let mut prev = moments(sim.measure()).m1[0];
        let mut worst = 0.0f64;
        while !sim.is_done() {
            let t = sim.time();
            sim.step().unwrap();
            let cur = moments(sim.measure()).m1[0];
            let mid_t = t + 0.5e-3;
            let rhs = -0.5 * (prev + cur) + mid_t.sin();
            worst = worst.max(((cur - prev) / 1e-3 - rhs).abs());
            prev = cur;
        }
        assert!(worst < 1e-3, "{worst}");
        assert!(sim.max_mass_error() <= 1e-12);
        assert!(sim.support().ok());
    }

    #[test]
    fn light_atoms_merge_into_nearest() {
        let mut f = WeightedParticleMeasure::new(1, vec![0.0, 1.0, 0.9], vec![0.5, 0.5 - 1e-9, 1e-9]).unwrap();
        assert_eq!(f.merge_light(W_MIN), 1);
        assert_eq!(f.atoms(), &[0.0, 1.0]);
        assert!((f.mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_measure_shares_moments() {
        let e = AgentEnsemble::from_positions(1, vec![0.0, 1.0, 2.0, 5.0], 1.0, 4.0).unwrap();
        let f = empirical_of_micro(&e);
        assert_eq!(f.weights(), &[0.25; 4]);
        assert_eq!(moments(&f), moments(&e));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn mass_stays_normalized_and_support_confined(
            alpha in 0.0f64..2.0,
            x in -1.0f64..1.0,
            amplitude in 0.0f64..1.0,
            bump in proptest::bool::ANY,
        ) {
            let kernel = if bump { InfluenceKernel::bump() } else { InfluenceKernel::tent() };
            let mut cfg = config(GrowthRate::power_decay(alpha), InflowProfile::sinusoidal(&[amplitude], 1.0, x), kernel);
            cfg.dt = 0.02;
            cfg.t_end = 2.0;
            let path = Arc::new(integrate_population(&cfg.rate, cfg.n0, cfg.t_end, cfg.dt).unwrap());
            let mut sim = KineticSim::new(cfg, path, None).unwrap();
            while !sim.is_done() {
                sim.step().unwrap();
                let mass: f64 = sim.measure().weights().iter().sum();
                proptest::prop_assert!((mass - 1.0).abs() <= 1e-12);
            }
            proptest::prop_assert!(sim.max_mass_error() <= 1e-12);
            proptest::prop_assert!(sim.support().ok());
        }
    }
}
