//! Declarative scenario files and the runner behind the command-line tool.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "constant_inflow"
//! mode = "micro"            # micro | kinetic | both
//!
//! [growth]
//! kind = "constant"
//! value = 1.0
//!
//! [kernel]
//! kind = "type1_constant"
//!
//! [inflow]
//! kind = "constant"
//! value = 0.5
//!
//! [initial]
//! kind = "uniform"
//! low = -1.0
//! high = 1.0
//!
//! [numerics]
//! dt = 1e-3
//! t_end = 5.0
//! rho = 200.0
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{detect_clusters, ClusterReport, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::growth::{GrowthRate, PopulationPath, Regime};
use crate::inflow::{c1_residual_series, c1_verdict, C1Verdict, InflowKind, InflowProfile};
use crate::interaction::Strategy;
use crate::kernels::{InfluenceKernel, KernelKind};
use crate::kinetic::{
    concentration_probe, empirical_of_micro, stability_probe, w1_distance, ConcentrationReport, KineticSim,
    StabilityReport, WeightedParticleMeasure,
};
use crate::micro::{AgentEnsemble, InitialProfile, Integrator, Lemma1Report, MicroSim, SimConfig};
use crate::output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Micro,
    Kinetic,
    Both,
}

impl Mode {
    fn micro(self) -> bool {
        self != Mode::Kinetic
    }

    fn kinetic(self) -> bool {
        self != Mode::Micro
    }
}

fn default_n0() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-2
}
fn default_rho() -> f64 {
    100.0
}
fn default_stride() -> f64 {
    0.1
}
fn default_m_max() -> usize {
    SimConfig::DEFAULT_M_MAX
}
fn default_link_radius() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_n0")]
    pub n0: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    /// Agents per unit of population (micro), and `M0 = round(rho N0)`
    /// initial atoms (kinetic).
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: f64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Record cap (micro) and atom budget (kinetic).
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default)]
    pub strategy: Strategy,
    /// Declared `X_B`; defaults to the profile's supremum.
    #[serde(default)]
    pub inflow_bound: Option<f64>,
    /// Initial atom count of the kinetic solver; defaults to `round(rho N0)`,
    /// the size of the micro initial ensemble.
    #[serde(default)]
    pub kinetic_atoms: Option<usize>,
    /// Linkage radius for the final cluster report.
    #[serde(default = "default_link_radius")]
    pub link_radius: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Per-record agent snapshots under `snapshots/`.
    #[serde(default)]
    pub snapshots: bool,
    /// Per-record kinetic measure dumps under `measures/`.
    #[serde(default)]
    pub measures: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Probe {
    /// Compare the kinetic solution with the one started from the initial
    /// measure translated by `shift`.
    Stability { shift: Vec<f64> },
    Concentration {},
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    /// Opinion dimension; must agree with the inflow when given.
    #[serde(default)]
    pub dim: Option<usize>,
    pub growth: GrowthRate,
    pub kernel: KernelKind,
    pub inflow: InflowKind,
    pub initial: InitialProfile,
    pub numerics: Numerics,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub probe: Option<Probe>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.to_sim_config()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    /// Build and validate the simulator configuration.
    pub fn to_sim_config(&self) -> Result<SimConfig> {
        let n = &self.numerics;
        self.growth.validate()?;
        let kernel = InfluenceKernel::new(self.kernel.clone())?;
        let inflow = InflowProfile::new(self.inflow.clone(), n.n0, n.inflow_bound)?;
        if let Some(d) = self.dim {
            if d != inflow.dim() {
                return Err(Error::invalid(format!("dim = {d} but the inflow has dimension {}", inflow.dim())));
            }
        }
        if n.kinetic_atoms == Some(0) {
            return Err(Error::invalid("kinetic_atoms must be positive"));
        }
        if !(n.link_radius > 0.0) {
            return Err(Error::invalid("link_radius must be positive"));
        }
        if let Some(Probe::Stability { shift }) = &self.probe {
            if shift.len() != inflow.dim() {
                return Err(Error::invalid("stability shift has the wrong dimension"));
            }
        }
        let mut cfg = SimConfig::new(kernel, self.growth.clone(), inflow, self.initial.clone());
        cfg.n0 = n.n0;
        cfg.dt = n.dt;
        cfg.t_end = n.t_end;
        cfg.rho = n.rho;
        cfg.seed = n.seed;
        cfg.snapshot_stride = n.snapshot_stride;
        cfg.integrator = n.integrator;
        cfg.m_max = n.m_max;
        cfg.strategy = n.strategy;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reference scenarios shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("constant_inflow", include_str!("../scenarios/constant_inflow.toml")),
    ("example2_oscillation", include_str!("../scenarios/example2_oscillation.toml")),
    ("envelope_type2", include_str!("../scenarios/envelope_type2.toml")),
    ("decay_rate", include_str!("../scenarios/decay_rate.toml")),
    ("clustering", include_str!("../scenarios/clustering.toml")),
    ("kinetic_moments", include_str!("../scenarios/kinetic_moments.toml")),
    ("micro_kinetic", include_str!("../scenarios/micro_kinetic.toml")),
    ("concentration_infinite", include_str!("../scenarios/concentration_infinite.toml")),
    ("concentration_finite", include_str!("../scenarios/concentration_finite.toml")),
    ("stability", include_str!("../scenarios/stability.toml")),
    ("population_power", include_str!("../scenarios/population_power.toml")),
    ("eventually_constant", include_str!("../scenarios/eventually_constant.toml")),
];

pub fn bundled(name: &str) -> Result<ScenarioConfig> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    let text = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("no bundled scenario named {name:?}")))?;
    ScenarioConfig::from_toml(text)
}

#[derive(Debug, Clone, Serialize)]
pub struct Checks {
    pub c1_holds: bool,
    pub lemma1_bound_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum ProbeReport {
    Stability(StabilityReport),
    Concentration(ConcentrationReport),
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub mode: Mode,
    pub regime: Regime,
    /// Final diagnostics of the micro run (kinetic run in kinetic mode).
    #[serde(rename = "final")]
    pub final_record: DiagnosticsRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinetic_final: Option<DiagnosticsRecord>,
    pub clusters: ClusterReport,
    pub checks: Checks,
    pub c1: C1Verdict,
    pub lemma1: Lemma1Report,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inserted_agents: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_mass_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_w1_micro_kinetic: Option<f64>,
}

/// Everything a run produces, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub micro: Vec<DiagnosticsRecord>,
    pub kinetic: Vec<DiagnosticsRecord>,
    /// `(t, W1(empirical micro, kinetic))` at each record (mode `both`).
    pub w1: Vec<(f64, f64)>,
    pub probe: Option<ProbeReport>,
    /// Snapshot files as `(relative path, contents)`.
    pub dumps: Vec<(String, String)>,
    pub final_micro: Option<AgentEnsemble>,
    pub final_kinetic: Option<WeightedParticleMeasure>,
}

impl RunOutcome {
    /// Write every output into `dir`, each file atomically.
    pub fn write(&self, dir: &Path) -> Result<()> {
        if !self.micro.is_empty() {
            output::write_atomic(&dir.join("trajectory.csv"), output::trajectory_csv(&self.micro).as_bytes())?;
        }
        if !self.kinetic.is_empty() {
            let csv = output::trajectory_csv(&self.kinetic);
            output::write_atomic(&dir.join("kinetic_trajectory.csv"), csv.as_bytes())?;
        }
        if !self.w1.is_empty() {
            let mut csv = String::from("t,w1\n");
            for (t, w) in &self.w1 {
                csv.push_str(&format!("{t},{w}\n"));
            }
            output::write_atomic(&dir.join("w1_micro_vs_kinetic.csv"), csv.as_bytes())?;
        }
        if let Some(p) = &self.probe {
            output::write_json(&dir.join("probe.json"), p)?;
        }
        for (rel, text) in &self.dumps {
            output::write_atomic(&dir.join(rel), text.as_bytes())?;
        }
        output::write_json(&dir.join("summary.json"), &self.summary)
    }
}

/// Run a scenario. Micro and kinetic simulations advance in lockstep on a
/// shared population path so that both modes can be compared record by
/// record.
pub fn run_scenario(sc: &ScenarioConfig) -> Result<RunOutcome> {
    let cfg = sc.to_sim_config()?;
    let path: Arc<PopulationPath> = Arc::new(cfg.population_path()?);
    let stride = cfg.stride_steps();
    let mode = sc.mode;

    let mut micro = if mode.micro() {
        Some(MicroSim::with_path(cfg.clone(), path.clone())?)
    } else {
        None
    };
    let mut kinetic = if mode.kinetic() {
        Some(KineticSim::new(cfg.clone(), path.clone(), Some(initial_kinetic(sc, &cfg)?))?)
    } else {
        None
    };

    let mut rec = Records::default();
    rec.take(sc, &path, 0, &mut micro, &mut kinetic)?;
    let steps = crate::growth::grid_steps(cfg.t_end, cfg.dt);
    for k in 1..=steps {
        if let Some(m) = micro.as_mut() {
            m.step()?;
        }
        if let Some(f) = kinetic.as_mut() {
            f.step()?;
        }
        if k % stride == 0 || k == steps {
            rec.take(sc, &path, k, &mut micro, &mut kinetic)?;
        }
    }

    let (times, res) = c1_residual_series(&cfg.inflow, &path);
    let c1 = c1_verdict(&times, &res);
    let (lemma1, clusters) = match (&micro, &kinetic) {
        (Some(m), f) => {
            let mut l = m.lemma1().clone();
            if let Some(f) = f {
                l.violations += f.support().violations;
                l.steps_checked += f.support().steps_checked;
                l.max_norm = l.max_norm.max(f.support().max_norm);
            }
            let e = m.ensemble();
            (l, detect_clusters(e, sc.numerics.link_radius, 1.0 / e.rho())?)
        }
        (None, Some(f)) => (f.support().clone(), detect_clusters(f.measure(), sc.numerics.link_radius, 1.0)?),
        (None, None) => unreachable!("every mode runs at least one model"),
    };

    let probe = match &sc.probe {
        None => None,
        Some(p) => {
            let f0 = initial_kinetic(sc, &cfg)?;
            Some(match p {
                Probe::Stability { shift } => ProbeReport::Stability(stability_probe(&cfg, &path, &f0, &f0.translated(shift))?),
                Probe::Concentration {} => ProbeReport::Concentration(concentration_probe(&cfg, &path, &f0)?),
            })
        }
    };

    let (final_record, kinetic_final) = match (rec.micro.last(), rec.kinetic.last()) {
        (Some(m), k) => (m.clone(), k.cloned()),
        (None, Some(k)) => (k.clone(), None),
        (None, None) => unreachable!("the initial record is always taken"),
    };
    let summary = Summary {
        scenario: sc.name.clone(),
        mode,
        regime: path.regime(),
        final_record,
        kinetic_final,
        clusters,
        checks: Checks {
            c1_holds: c1.holds,
            lemma1_bound_ok: lemma1.ok(),
        },
        c1,
        lemma1,
        inserted_agents: micro.as_ref().map(|m| m.inserted()),
        max_mass_error: kinetic.as_ref().map(|f| f.max_mass_error()),
        sup_w1_micro_kinetic: (!rec.w1.is_empty()).then(|| rec.w1.iter().map(|p| p.1).fold(0.0, f64::max)),
    };
    Ok(RunOutcome {
        summary,
        micro: rec.micro,
        kinetic: rec.kinetic,
        w1: rec.w1,
        probe,
        dumps: rec.dumps,
        final_micro: micro.map(|m| m.ensemble().clone()),
        final_kinetic: kinetic.map(|f| f.measure().clone()),
    })
}

#[derive(Default)]
struct Records {
    micro: Vec<DiagnosticsRecord>,
    kinetic: Vec<DiagnosticsRecord>,
    w1: Vec<(f64, f64)>,
    dumps: Vec<(String, String)>,
}

impl Records {
    fn take(
        &mut self,
        sc: &ScenarioConfig,
        path: &PopulationPath,
        k: usize,
        micro: &mut Option<MicroSim>,
        kinetic: &mut Option<KineticSim>,
    ) -> Result<()> {
        let idx = self.micro.len().max(self.kinetic.len());
        if let Some(m) = micro.as_mut() {
            self.micro.push(m.record());
            if sc.outputs.snapshots {
                self.dumps.push((format!("snapshots/micro_{idx:05}.csv"), output::snapshot_csv(m.ensemble())));
            }
        }
        if let Some(f) = kinetic.as_mut() {
            self.kinetic.push(f.record());
            if sc.outputs.measures {
                self.dumps.push((format!("measures/kinetic_{idx:05}.csv"), output::measure_csv(f.measure())));
            }
        }
        if let (Some(m), Some(f)) = (micro.as_ref(), kinetic.as_ref()) {
            let w = w1_distance(&empirical_of_micro(m.ensemble()), f.measure())?;
            self.w1.push((path.time(k), w));
        }
        Ok(())
    }
}

/// Initial kinetic measure of a scenario: the uniform measure on
/// `kinetic_atoms` points sampled from the initial profile.
pub fn initial_measure(sc: &ScenarioConfig) -> Result<WeightedParticleMeasure> {
    initial_kinetic(sc, &sc.to_sim_config()?)
}

fn initial_kinetic(sc: &ScenarioConfig, cfg: &SimConfig) -> Result<WeightedParticleMeasure> {
    let atoms = match sc.numerics.kinetic_atoms {
        Some(a) => a,
        None => crate::micro::round_half_up(cfg.rho * cfg.n0).max(1) as usize,
    };
    let pos = cfg.initial.sample(cfg.dim, atoms, cfg.seed)?;
    WeightedParticleMeasure::uniform(cfg.dim, pos)
}
#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "small"
mode = "both"

[growth]
kind = "constant"
value = 1.0

[kernel]
kind = "type2_tent"

[inflow]
kind = "constant"
value = 0.5

[initial]
kind = "uniform"
low = -1.0
high = 1.0

[numerics]
dt = 0.05
t_end = 0.5
rho = 20.0
"#;

    #[test]
    fn every_bundled_scenario_parses() {
        for (name, _) in BUNDLED {
            let sc = bundled(name).unwrap();
            assert_eq!(&sc.name, name);
        }
        assert!(bundled("constant_inflow.toml").is_ok());
        assert!(matches!(bundled("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SMALL.replace("rho = 20.0", "rho = 20.0\nrh0 = 1.0");
        assert!(matches!(ScenarioConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SMALL.replace("kind = \"type2_tent\"", "kind = \"type2_tent\"\nwidth = 2.0");
        assert!(matches!(ScenarioConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn semantic_errors_are_input_errors() {
        let bad = SMALL.replace("dt = 0.05", "dt = -1.0");
        assert!(ScenarioConfig::from_toml(&bad).unwrap_err().is_input_error());
        let bad = SMALL.replace("name = \"small\"", "name = \"small\"\ndim = 2");
        assert!(ScenarioConfig::from_toml(&bad).unwrap_err().is_input_error());
    }

    #[test]
    fn both_modes_write_every_series() {
        let sc = ScenarioConfig::from_toml(SMALL).unwrap();
        let out = run_scenario(&sc).unwrap();
        assert_eq!(out.micro.len(), out.kinetic.len());
        assert_eq!(out.w1.len(), out.micro.len());
        // both start from the same sample
        assert!(out.w1[0].1 < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        out.write(dir.path()).unwrap();
        for f in ["trajectory.csv", "kinetic_trajectory.csv", "w1_micro_vs_kinetic.csv", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        for key in ["scenario", "regime", "final", "clusters", "checks"] {
            assert!(summary.get(key).is_some(), "{key}");
        }
        assert_eq!(summary["checks"]["lemma1_bound_ok"], true);
    }

    #[test]
    fn reruns_are_identical() {
        let sc = ScenarioConfig::from_toml(SMALL).unwrap();
        let a = output::trajectory_csv(&run_scenario(&sc).unwrap().micro);
        let b = output::trajectory_csv(&run_scenario(&sc).unwrap().micro);
        assert_eq!(a, b);
    }
}
