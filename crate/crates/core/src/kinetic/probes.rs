//! Stability and concentration experiments on the kinetic solver.

use std::sync::Arc;

use serde::Serialize;

use super::measure::{KineticSim, WeightedParticleMeasure};
use super::wasserstein::w1_distance;
use crate::diagnostics::{moments, WeightedCloud};
use crate::error::{Error, Result};
use crate::growth::PopulationPath;
use crate::inflow::{c1_average, c1_residual_series, c1_verdict};
use crate::kernels::KernelClass;
use crate::micro::SimConfig;
use crate::oracles::m1_limit;

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    pub w1: Vec<f64>,
    pub initial_distance: f64,
    /// `sup_t W1(f_t, g_t) / W1(f_0, g_0)`; `None` when the initial distance is zero.
    pub sup_ratio: Option<f64>,
}

/// Evolve two initial measures under the same scenario and track their
/// distance at every snapshot stride.
pub fn stability_probe(
    cfg: &SimConfig,
    path: &Arc<PopulationPath>,
    f0: &WeightedParticleMeasure,
    g0: &WeightedParticleMeasure,
) -> Result<StabilityReport> {
    let stride = cfg.stride_steps();
    let mut a = KineticSim::new(cfg.clone(), path.clone(), Some(f0.clone()))?;
    let mut b = KineticSim::new(cfg.clone(), path.clone(), Some(g0.clone()))?;
    let initial = w1_distance(f0, g0)?;
    let mut times = vec![0.0];
    let mut w1 = vec![initial];
    while !a.is_done() {
        a.step()?;
        b.step()?;
        if a.step_index() % stride == 0 || a.is_done() {
            times.push(a.time());
            w1.push(w1_distance(a.measure(), b.measure())?);
        }
    }
    let sup_ratio = if initial > 0.0 {
        Some(w1.iter().cloned().fold(0.0, f64::max) / initial)
    } else {
        log::warn!("stability probe started from identical measures; ratio undefined");
        None
    };
    Ok(StabilityReport {
        times,
        w1,
        initial_distance: initial,
        sup_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ConcentrationTarget {
    /// `N_inf < inf`, `psi > 0`: the limit of the mean.
    Limit(Vec<f64>),
    /// `N_inf = inf` with the running average tracking the inflow: `X(t, N_t)`.
    Inflow,
    /// `psi > 0` and no limit for the inflow: `(1/N_t) \int X dN`.
    RunningAverage,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub times: Vec<f64>,
    pub w1: Vec<f64>,
    pub target: ConcentrationTarget,
    /// Target point at each recorded time.
    pub centres: Vec<Vec<f64>>,
}

/// Which point the solution should concentrate around, if the scenario
/// falls under one of the known cases.
pub fn classify_concentration(cfg: &SimConfig, path: &PopulationPath, f0: &WeightedParticleMeasure) -> Result<ConcentrationTarget> {
    let positive = cfg.kernel.class() == KernelClass::TypeI;
    match cfg.rate.classify().is_finite() {
        Some(true) if positive => {
            let m = moments(f0).m1;
            Ok(ConcentrationTarget::Limit(m1_limit(&cfg.rate, &cfg.inflow, path, &m)?.value))
        }
        Some(true) => Err(Error::invalid(
            "finite population with a compactly supported kernel concentrates on several clusters, not a point",
        )),
        Some(false) => {
            let tracks = cfg.inflow.constant_value().is_some() || {
                let (t, r) = c1_residual_series(&cfg.inflow, path);
                c1_verdict(&t, &r).holds
            };
            if tracks {
                Ok(ConcentrationTarget::Inflow)
            } else if positive {
                Ok(ConcentrationTarget::RunningAverage)
            } else {
                Err(Error::invalid("no concentration statement applies to this scenario"))
            }
        }
        None => Err(Error::invalid("growth regime is unclassified")),
    }
}

pub fn concentration_probe(
    cfg: &SimConfig,
    path: &Arc<PopulationPath>,
    f0: &WeightedParticleMeasure,
) -> Result<ConcentrationReport> {
    let target = classify_concentration(cfg, path, f0)?;
    let centre = |t: f64| -> Vec<f64> {
        match &target {
            ConcentrationTarget::Limit(m) => m.clone(),
            ConcentrationTarget::Inflow => cfg.inflow.evaluate(t, path.population_at(t)),
            ConcentrationTarget::RunningAverage => c1_average(&cfg.inflow, path, t),
        }
    };
    let stride = cfg.stride_steps();
    let mut sim = KineticSim::new(cfg.clone(), path.clone(), Some(f0.clone()))?;
    let mut times = vec![0.0];
    let c0 = centre(0.0);
    let mut w1 = vec![f0.distance_to_point(&c0)];
    let mut centres = vec![c0];
    while !sim.is_done() {
        sim.step()?;
        if sim.step_index() % stride == 0 || sim.is_done() {
            let t = sim.time();
            let c = centre(t);
            times.push(t);
            w1.push(sim.measure().distance_to_point(&c));
            centres.push(c);
        }
    }
    debug_assert!(sim.measure().dim() == f0.dim());
    Ok(ConcentrationReport {
        times,
        w1,
        target,
        centres,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{integrate_population, GrowthRate};
    use crate::inflow::InflowProfile;
    use crate::kernels::InfluenceKernel;
    use crate::micro::InitialProfile;

    fn cfg(rate: GrowthRate, inflow: InflowProfile, kernel: InfluenceKernel, t_end: f64, dt: f64) -> (SimConfig, Arc<PopulationPath>) {
        let mut c = SimConfig::new(
            kernel,
            rate,
            inflow,
            InitialProfile::Uniform {
                low: vec![-1.0],
                high: vec![1.0],
            },
        );
        c.t_end = t_end;
        c.dt = dt;
        c.snapshot_stride = dt;
        let p = Arc::new(integrate_population(&c.rate, c.n0, c.t_end, c.dt).unwrap());
        (c, p)
    }

    fn blob(centre: f64) -> WeightedParticleMeasure {
        let xs: Vec<f64> = (0..40).map(|i| centre - 0.2 + 0.4 * (i as f64 + 0.5) / 40.0).collect();
        WeightedParticleMeasure::uniform(1, xs).unwrap()
    }

    #[test]
    fn identical_starts_stay_together() {
        let (c, p) = cfg(GrowthRate::constant(0.2), InflowProfile::constant(&[0.0]), InfluenceKernel::tent(), 1.0, 0.01);
        let r = stability_probe(&c, &p, &blob(0.3), &blob(0.3)).unwrap();
        assert!(r.sup_ratio.is_none());
        assert!(r.w1.iter().all(|&d| d <= 1e-10));
    }

    #[test]
    fn translated_blobs_contract_without_growth() {
        let (c, p) = cfg(GrowthRate::constant(0.0), InflowProfile::constant(&[0.0]), InfluenceKernel::constant(1.0), 2.0, 0.01);
        let f = blob(0.0);
        let r = stability_probe(&c, &p, &f, &f.translated(&[0.1])).unwrap();
        assert!(r.sup_ratio.unwrap() <= 1.0 + 1e-3);
    }

    #[test]
    fn symmetric_start_concentrates_on_zero() {
        let (c, p) = cfg(GrowthRate::constant(0.0), InflowProfile::constant(&[0.0]), InfluenceKernel::constant(1.0), 5.0, 0.01);
        let f = blob(0.5).translated(&[-0.5]);
        let r = concentration_probe(&c, &p, &f).unwrap();
        assert_eq!(r.target, ConcentrationTarget::Limit(vec![moments(&f).m1[0]]));
        assert!(moments(&f).m1[0].abs() < 1e-12);
        assert!(r.w1.last().unwrap() < &(r.w1[0] * 0.01));
    }

    #[test]
    fn unclassifiable_scenarios_are_rejected() {
        let (c, p) = cfg(GrowthRate::Table { points: vec![[0.0, 1.0]] }, InflowProfile::constant(&[0.0]), InfluenceKernel::tent(), 1.0, 0.1);
        assert!(concentration_probe(&c, &p, &blob(0.0)).is_err());
        let (c, p) = cfg(GrowthRate::power_decay(2.0), InflowProfile::constant(&[0.0]), InfluenceKernel::tent(), 1.0, 0.1);
        assert!(concentration_probe(&c, &p, &blob(0.0)).is_err());
    }
}
