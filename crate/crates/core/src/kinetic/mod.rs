//! Measure-valued formulation: the opinion distribution `f_t` is transported
//! by the interaction field `V[f_t]` and receives mass `b (delta_X - f)`.
//! `f_t` is represented by weighted atoms; old mass decays by the exact
//! integrating factor and each step adds one atom at the inflow opinion.

mod measure;
mod probes;
mod wasserstein;

pub use measure::{empirical_of_micro, kinetic_step, v_field, KineticSim, KineticTrajectory, WeightedParticleMeasure, W_MIN};
pub use probes::{
    classify_concentration, concentration_probe, stability_probe, ConcentrationReport, ConcentrationTarget, StabilityReport,
};
pub use wasserstein::{transport, w1_distance, w1_line, OT_ATOM_CAP};
