//! Boundary opinion `X(t, N)` assigned to newborn agents, and the running
//! inflow averages used to decide whether the mean can track it.

use std::f64::consts::PI;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::growth::PopulationPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InflowKind {
    Constant {
        #[serde(deserialize_with = "vector")]
        value: Vec<f64>,
    },
    /// Cosine ramp from `start` at `t = 0` to `value` at `t = t0`, then constant.
    EventuallyConstant {
        #[serde(deserialize_with = "vector")]
        start: Vec<f64>,
        #[serde(deserialize_with = "vector")]
        value: Vec<f64>,
        t0: f64,
    },
    /// `amplitude * sin(frequency t + phase)`.
    Sinusoidal {
        #[serde(deserialize_with = "vector")]
        amplitude: Vec<f64>,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `c + coef * N^{-epsilon}`.
    PopulationPower {
        #[serde(deserialize_with = "vector")]
        c: Vec<f64>,
        #[serde(deserialize_with = "vector")]
        coef: Vec<f64>,
        epsilon: f64,
    },
    /// Rows `[t, x_1, .., x_d]`, linear in `t`, held constant outside.
    Table { points: Vec<Vec<f64>> },
}

fn one() -> f64 {
    1.0
}

/// Accept either a bare number (d = 1) or an array.
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

#[derive(Debug, Clone, PartialEq)]
pub struct InflowProfile {
    kind: InflowKind,
    dim: usize,
    bound: f64,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl InflowProfile {
    /// `n_floor` is the smallest population the profile will be queried at
    /// (`N0`, since populations never shrink); it only matters for
    /// `population_power`. A declared bound below the formula's supremum is
    /// rejected.
    pub fn new(kind: InflowKind, n_floor: f64, declared_bound: Option<f64>) -> Result<Self> {
        let (dim, sup) = shape_and_sup(&kind, n_floor)?;
        let bound = match declared_bound {
            Some(b) if !(b >= sup) => {
                return Err(Error::invalid(format!(
                    "declared inflow bound {b} is below the profile's supremum {sup}"
                )))
            }
            Some(b) => b,
            None => sup,
        };
        Ok(InflowProfile { kind, dim, bound })
    }

    pub fn constant(value: &[f64]) -> Self {
        Self::new(InflowKind::Constant { value: value.to_vec() }, 1.0, None).expect("finite constant")
    }

    pub fn sinusoidal(amplitude: &[f64], frequency: f64, phase: f64) -> Self {
        Self::new(
            InflowKind::Sinusoidal {
                amplitude: amplitude.to_vec(),
                frequency,
                phase,
            },
            1.0,
            None,
        )
        .expect("finite sinusoid")
    }

    pub fn kind(&self) -> &InflowKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `X_B`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self.kind, InflowKind::Table { .. })
    }

    /// The constant value, for profiles that never change.
    pub fn constant_value(&self) -> Option<&[f64]> {
        match &self.kind {
            InflowKind::Constant { value } => Some(value),
            _ => None,
        }
    }

    pub fn evaluate(&self, t: f64, n: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.evaluate_into(t, n, &mut out);
        out
    }

    pub fn evaluate_into(&self, t: f64, n: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            InflowKind::Constant { value } => out.copy_from_slice(value),
            InflowKind::EventuallyConstant { start, value, t0 } => {
                let w = ramp_weight(t, *t0);
                for ((o, a), b) in out.iter_mut().zip(start).zip(value) {
                    *o = b + (a - b) * w;
                }
            }
            InflowKind::Sinusoidal {
                amplitude,
                frequency,
                phase,
            } => {
                let s = (frequency * t + phase).sin();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = a * s;
                }
            }
            InflowKind::PopulationPower { c, coef, epsilon } => {
                let p = n.powf(-epsilon);
                for ((o, c), k) in out.iter_mut().zip(c).zip(coef) {
                    *o = c + k * p;
                }
            }
            InflowKind::Table { points } => table_into(points, t, out),
        }
        debug_assert!(
            norm(out) <= self.bound * (1.0 + 1e-12) + 1e-300,
            "inflow {out:?} exceeds bound {} at t = {t}, N = {n}",
            self.bound
        );
    }

    /// Total derivative `d/dt X(t, N_t) = X_t + X_N dN/dt`.
    pub fn time_derivative(&self, t: f64, n: f64, n_dot: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.time_derivative_into(t, n, n_dot, &mut out)?;
        Ok(out)
    }

    pub fn time_derivative_into(&self, t: f64, n: f64, n_dot: f64, out: &mut [f64]) -> Result<()> {
        match &self.kind {
            InflowKind::Constant { .. } => out.fill(0.0),
            InflowKind::EventuallyConstant { start, value, t0 } => {
                let dw = if t < *t0 { -0.5 * (PI / t0) * (PI * t / t0).sin() } else { 0.0 };
                for ((o, a), b) in out.iter_mut().zip(start).zip(value) {
                    *o = (a - b) * dw;
                }
            }
            InflowKind::Sinusoidal {
                amplitude,
                frequency,
                phase,
            } => {
                let c = frequency * (frequency * t + phase).cos();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = a * c;
                }
            }
            InflowKind::PopulationPower { coef, epsilon, .. } => {
                let dp = -epsilon * n.powf(-epsilon - 1.0) * n_dot;
                for (o, k) in out.iter_mut().zip(coef) {
                    *o = k * dp;
                }
            }
            InflowKind::Table { .. } => {
                return Err(Error::Unsupported(
                    "tabulated inflow profiles have no time derivative".into(),
                ))
            }
        }
        Ok(())
    }
}

fn ramp_weight(t: f64, t0: f64) -> f64 {
    if t >= t0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * t / t0).cos())
    }
}

fn table_into(points: &[Vec<f64>], t: f64, out: &mut [f64]) {
    let first = &points[0];
    let last = &points[points.len() - 1];
    if t <= first[0] {
        out.copy_from_slice(&first[1..]);
        return;
    }
    if t >= last[0] {
        out.copy_from_slice(&last[1..]);
        return;
    }
    let k = points.partition_point(|p| p[0] <= t);
    let (a, b) = (&points[k - 1], &points[k]);
    let s = (t - a[0]) / (b[0] - a[0]);
    for (i, o) in out.iter_mut().enumerate() {
        *o = a[i + 1] + s * (b[i + 1] - a[i + 1]);
    }
}

fn finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("inflow {what} must be finite")))
    }
}

fn shape_and_sup(kind: &InflowKind, n_floor: f64) -> Result<(usize, f64)> {
    let same_dim = |a: &[f64], b: &[f64]| -> Result<()> {
        if a.len() != b.len() {
            return Err(Error::invalid("inflow vectors have mismatched dimensions"));
        }
        Ok(())
    };
    let (dim, sup) = match kind {
        InflowKind::Constant { value } => {
            finite(value, "value")?;
            (value.len(), norm(value))
        }
        InflowKind::EventuallyConstant { start, value, t0 } => {
            finite(start, "start")?;
            finite(value, "value")?;
            same_dim(start, value)?;
            if !(*t0 > 0.0) || !t0.is_finite() {
                return Err(Error::invalid("eventually_constant needs t0 > 0"));
            }
            // the ramp is a convex combination of the two endpoints
            (value.len(), norm(start).max(norm(value)))
        }
        InflowKind::Sinusoidal {
            amplitude,
            frequency,
            phase,
        } => {
            finite(amplitude, "amplitude")?;
            if !frequency.is_finite() || !phase.is_finite() {
                return Err(Error::invalid("sinusoid frequency and phase must be finite"));
            }
            (amplitude.len(), norm(amplitude))
        }
        InflowKind::PopulationPower { c, coef, epsilon } => {
            finite(c, "c")?;
            finite(coef, "coef")?;
            same_dim(c, coef)?;
            if !(*epsilon > 0.0) || !epsilon.is_finite() {
                return Err(Error::invalid("population_power needs epsilon > 0"));
            }
            if !(n_floor > 0.0) {
                return Err(Error::invalid("population_power needs a positive population floor"));
            }
            // N^{-eps} ranges over (0, n_floor^{-eps}]; the norm of an affine
            // segment peaks at an endpoint
            let p = n_floor.powf(-epsilon);
            let top: Vec<f64> = c.iter().zip(coef).map(|(c, k)| c + k * p).collect();
            (c.len(), norm(c).max(norm(&top)))
        }
        InflowKind::Table { points } => {
            if points.is_empty() {
                return Err(Error::invalid("inflow table needs at least one row"));
            }
            let width = points[0].len();
            if width < 2 || points.iter().any(|p| p.len() != width) {
                return Err(Error::invalid("inflow table rows must all be [t, x_1, .., x_d]"));
            }
            for p in points {
                finite(p, "table")?;
            }
            if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return Err(Error::invalid("inflow table times must be strictly increasing"));
            }
            let sup = points.iter().map(|p| norm(&p[1..])).fold(0.0, f64::max);
            (width - 1, sup)
        }
    };
    if dim == 0 {
        return Err(Error::invalid("inflow dimension must be at least 1"));
    }
    Ok((dim, sup))
}

/// Running trapezoid sums of `\int X dN` and (when available)
/// `\int dX/dt N ds` along a population path, advanced one grid cell at a time.
#[derive(Debug, Clone)]
pub struct InflowQuadrature {
    k: usize,
    x_prev: Vec<f64>,
    xd_prev: Option<Vec<f64>>,
    avg: Vec<f64>,
    prime: Option<Vec<f64>>,
}

impl InflowQuadrature {
    pub fn new(profile: &InflowProfile, path: &PopulationPath) -> Self {
        let n0 = path.population(0);
        let x_prev = profile.evaluate(0.0, n0);
        let xd_prev = profile.time_derivative(0.0, n0, path.growth_speed(0)).ok();
        let d = profile.dim();
        InflowQuadrature {
            k: 0,
            x_prev,
            prime: xd_prev.as_ref().map(|_| vec![0.0; d]),
            xd_prev,
            avg: vec![0.0; d],
        }
    }

    /// Grid index the sums currently extend to.
    pub fn index(&self) -> usize {
        self.k
    }

    /// Extend the sums to grid point `k` (no-op if already past it).
    pub fn advance_to(&mut self, profile: &InflowProfile, path: &PopulationPath, k: usize) {
        let h = path.dt();
        let mut x = vec![0.0; profile.dim()];
        let mut xd = vec![0.0; profile.dim()];
        while self.k < k {
            let j = self.k + 1;
            let (t, n) = (path.time(j), path.population(j));
            let n_dot0 = path.growth_speed(j - 1);
            let n_dot1 = path.growth_speed(j);
            profile.evaluate_into(t, n, &mut x);
            for i in 0..x.len() {
                self.avg[i] += 0.5 * h * (self.x_prev[i] * n_dot0 + x[i] * n_dot1);
            }
            if let (Some(prime), Some(prev)) = (self.prime.as_mut(), self.xd_prev.as_mut()) {
                profile
                    .time_derivative_into(t, n, n_dot1, &mut xd)
                    .expect("differentiable profile");
                for i in 0..xd.len() {
                    prime[i] += 0.5 * h * (prev[i] * path.population(j - 1) + xd[i] * n);
                }
                prev.copy_from_slice(&xd);
            }
            self.x_prev.copy_from_slice(&x);
            self.k = j;
        }
    }

    /// `\int_0^{t_k} X dN`.
    pub fn average_integral(&self) -> &[f64] {
        &self.avg
    }

    /// `\int_0^{t_k} dX/dt N ds`, if the profile is differentiable.
    pub fn prime_integral(&self) -> Option<&[f64]> {
        self.prime.as_deref()
    }
}

/// Trapezoid of `g(s, N_s, b(s, N_s))` against `ds` over `[0, t]`, using grid
/// points spaced `stride` cells apart and a final partial cell evaluated with
/// the dense population.
pub(crate) fn path_quadrature(
    path: &PopulationPath,
    t: f64,
    stride: usize,
    dim: usize,
    mut g: impl FnMut(f64, f64, f64, &mut [f64]),
) -> Vec<f64> {
    let t = t.clamp(0.0, path.horizon());
    let mut acc = vec![0.0; dim];
    let mut prev = vec![0.0; dim];
    let mut cur = vec![0.0; dim];
    g(0.0, path.population(0), path.rate_at(0), &mut prev);
    let kmax = path.cell_of(t);
    let mut k = 0;
    while k + stride <= kmax {
        let j = k + stride;
        g(path.time(j), path.population(j), path.rate_at(j), &mut cur);
        let h = path.time(j) - path.time(k);
        for i in 0..dim {
            acc[i] += 0.5 * h * (prev[i] + cur[i]);
        }
        std::mem::swap(&mut prev, &mut cur);
        k = j;
    }
    let tk = path.time(k);
    if t > tk {
        let n = path.population_at(t);
        let b = path.rate().evaluate(t, n);
        g(t, n, b, &mut cur);
        for i in 0..dim {
            acc[i] += 0.5 * (t - tk) * (prev[i] + cur[i]);
        }
    }
    acc
}

/// `(1/N_t) \int_0^t X(s, N_s) dN_s`, trapezoid with `dN = b N ds`.
pub fn c1_average(profile: &InflowProfile, path: &PopulationPath, t: f64) -> Vec<f64> {
    let raw = path_quadrature(path, t, 1, profile.dim(), |s, n, b, out| {
        profile.evaluate_into(s, n, out);
        out.iter_mut().for_each(|x| *x *= b * n);
    });
    let nt = path.population_at(t.min(path.horizon()));
    raw.into_iter().map(|x| x / nt).collect()
}

/// `|c1_average(t) - X(t, N_t)|`.
pub fn c1_residual(profile: &InflowProfile, path: &PopulationPath, t: f64) -> f64 {
    let avg = c1_average(profile, path, t);
    let x = profile.evaluate(t, path.population_at(t));
    let diff: Vec<f64> = avg.iter().zip(&x).map(|(a, b)| a - b).collect();
    norm(&diff)
}

/// `(1/N_t) \int_0^t dX/dt(s, N_s) N_s ds`.
pub fn c1_prime_integral(profile: &InflowProfile, path: &PopulationPath, t: f64) -> Result<Vec<f64>> {
    if !profile.is_differentiable() {
        return Err(Error::invalid("(C1') needs a differentiable inflow profile"));
    }
    let raw = path_quadrature(path, t, 1, profile.dim(), |s, n, b, out| {
        profile
            .time_derivative_into(s, n, b * n, out)
            .expect("checked differentiable");
        out.iter_mut().for_each(|x| *x *= n);
    });
    let nt = path.population_at(t.min(path.horizon()));
    Ok(raw.into_iter().map(|x| x / nt).collect())
}

/// Max minus min of a residual series over the window `[t_end - window, t_end]`.
pub fn window_oscillation(times: &[f64], residuals: &[f64], window: f64) -> f64 {
    let Some(&t_end) = times.last() else {
        return 0.0;
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (t, r) in times.iter().zip(residuals) {
        if *t >= t_end - window - 1e-12 {
            lo = lo.min(*r);
            hi = hi.max(*r);
        }
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Residual series of `c1_residual` on every grid point of the path.
pub fn c1_residual_series(profile: &InflowProfile, path: &PopulationPath) -> (Vec<f64>, Vec<f64>) {
    let mut q = InflowQuadrature::new(profile, path);
    let mut times = Vec::with_capacity(path.len());
    let mut res = Vec::with_capacity(path.len());
    let mut x = vec![0.0; profile.dim()];
    for k in 0..path.len() {
        q.advance_to(profile, path, k);
        let (t, n) = (path.time(k), path.population(k));
        profile.evaluate_into(t, n, &mut x);
        let d: Vec<f64> = q.average_integral().iter().zip(&x).map(|(a, b)| a / n - b).collect();
        times.push(t);
        res.push(norm(&d));
    }
    (times, res)
}

/// Verdict on whether the running average tracks the inflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C1Verdict {
    pub holds: bool,
    /// Oscillation of the residual over the trailing `2 pi` window.
    pub oscillation: f64,
    pub final_residual: f64,
}

pub const C1_OSCILLATION_THRESHOLD: f64 = 0.5;
pub const C1_RESIDUAL_THRESHOLD: f64 = 0.05;

pub fn c1_verdict(times: &[f64], residuals: &[f64]) -> C1Verdict {
    let oscillation = window_oscillation(times, residuals, 2.0 * PI);
    let final_residual = residuals.last().copied().unwrap_or(0.0);
    C1Verdict {
        holds: oscillation < C1_OSCILLATION_THRESHOLD && final_residual < C1_RESIDUAL_THRESHOLD,
        oscillation,
        final_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{integrate_population, GrowthRate};
    use approx::assert_relative_eq;

    #[test]
    fn evaluate_examples() {
        assert_eq!(InflowProfile::constant(&[0.5]).evaluate(3.0, 7.0), vec![0.5]);
        let s = InflowProfile::sinusoidal(&[1.0], 1.0, 0.0);
        assert_relative_eq!(s.evaluate(PI / 2.0, 1.0)[0], 1.0, epsilon = 1e-15);
        let p = InflowProfile::new(
            InflowKind::PopulationPower {
                c: vec![0.0],
                coef: vec![1.0],
                epsilon: 0.5,
            },
            1.0,
            None,
        )
        .unwrap();
        assert_relative_eq!(p.evaluate(0.0, 4.0)[0], 0.5, epsilon = 1e-15);
        assert_eq!(p.bound(), 1.0);
    }

    #[test]
    fn declared_bound_below_supremum_is_rejected() {
        let kind = InflowKind::Sinusoidal {
            amplitude: vec![2.0],
            frequency: 1.0,
            phase: 0.0,
        };
        assert!(InflowProfile::new(kind.clone(), 1.0, Some(1.5)).is_err());
        assert_eq!(InflowProfile::new(kind, 1.0, Some(3.0)).unwrap().bound(), 3.0);
    }

    #[test]
    fn ramp_is_continuous_and_derivative_matches() {
        let p = InflowProfile::new(
            InflowKind::EventuallyConstant {
                start: vec![1.0, 0.0],
                value: vec![0.0, 1.0],
                t0: 2.0,
            },
            1.0,
            None,
        )
        .unwrap();
        assert_eq!(p.evaluate(0.0, 1.0), vec![1.0, 0.0]);
        assert_eq!(p.evaluate(2.0, 1.0), vec![0.0, 1.0]);
        let h = 1e-6;
        for &t in &[0.3, 1.0, 1.7] {
            let fd = (p.evaluate(t + h, 1.0)[0] - p.evaluate(t - h, 1.0)[0]) / (2.0 * h);
            assert_relative_eq!(p.time_derivative(t, 1.0, 0.0).unwrap()[0], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn config_accepts_scalars_and_vectors() {
        let k: InflowKind = toml::from_str("kind = \"constant\"\nvalue = 0.5").unwrap();
        assert_eq!(k, InflowKind::Constant { value: vec![0.5] });
        let k: InflowKind = toml::from_str("kind = \"sinusoidal\"\namplitude = [1.0, 0.0]").unwrap();
        assert!(matches!(k, InflowKind::Sinusoidal { frequency, .. } if frequency == 1.0));
        assert!(toml::from_str::<InflowKind>("kind = \"constant\"\nvalue = 1\nextra = 2").is_err());
    }

    #[test]
    fn c1_average_constant_profile() {
        let path = integrate_population(&GrowthRate::constant(1.0), 1.0, 5.0, 1e-3).unwrap();
        let p = InflowProfile::constant(&[0.7]);
        let nt = path.population_at(5.0);
        assert_relative_eq!(c1_average(&p, &path, 5.0)[0], 0.7 * (nt - 1.0) / nt, epsilon = 1e-6);
        assert_relative_eq!(c1_residual(&p, &path, 5.0), 0.7 * (-5.0f64).exp(), epsilon = 1e-6);
        assert_eq!(c1_prime_integral(&p, &path, 5.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn c1_average_without_growth_is_zero() {
        let path = integrate_population(&GrowthRate::constant(0.0), 2.0, 5.0, 1e-2).unwrap();
        let p = InflowProfile::sinusoidal(&[1.0], 1.0, 0.0);
        for t in [0.0, 1.3, 5.0] {
            assert_eq!(c1_average(&p, &path, t), vec![0.0]);
        }
    }

    #[test]
    fn oscillating_inflow_average() {
        let path = integrate_population(&GrowthRate::constant(1.0), 1.0, 10.0, 1e-3).unwrap();
        let p = InflowProfile::sinusoidal(&[1.0], 1.0, 0.0);
        let expect = 0.5 * (10f64.sin() - 10f64.cos()) + 0.5 * (-10f64).exp();
        assert_relative_eq!(c1_average(&p, &path, 10.0)[0], expect, epsilon = 1e-5);
        assert!((expect - 0.14755).abs() < 1e-4);
    }

    #[test]
    fn oscillating_inflow_fails_c1() {
        let path = integrate_population(&GrowthRate::constant(1.0), 1.0, 30.0, 1e-2).unwrap();
        let p = InflowProfile::sinusoidal(&[1.0], 1.0, 0.0);
        let (t, r) = c1_residual_series(&p, &path);
        let v = c1_verdict(&t, &r);
        assert!(!v.holds);
        assert!(v.oscillation > 0.5, "{v:?}");
        // residual has period pi, so the amplitude is 1/sqrt 2
        assert!((v.oscillation - 0.5f64.sqrt()).abs() < 1e-2);
    }

    #[test]
    fn population_power_satisfies_c1_and_c1_prime() {
        let path = integrate_population(&GrowthRate::constant(1.0), 1.0, 20.0, 1e-3).unwrap();
        let p = InflowProfile::new(
            InflowKind::PopulationPower {
                c: vec![0.0],
                coef: vec![1.0],
                epsilon: 0.5,
            },
            1.0,
            None,
        )
        .unwrap();
        for t in [5.0, 10.0, 20.0] {
            let nt = path.population_at(t);
            let prime = c1_prime_integral(&p, &path, t).unwrap()[0].abs();
            assert!(prime <= 2.0 * nt.powf(-0.5) * (1.0 + 1e-6));
        }
        assert!(c1_residual(&p, &path, 20.0) < 1e-4);
        let (t, r) = c1_residual_series(&p, &path);
        assert!(c1_verdict(&t, &r).holds);
    }

    #[test]
    fn eventually_constant_with_finite_population() {
        let kind = InflowKind::EventuallyConstant {
            start: vec![1.0],
            value: vec![0.0],
            t0: 3.0,
        };
        let p = InflowProfile::new(kind, 1.0, None).unwrap();
        let path = integrate_population(&GrowthRate::power_decay(2.0), 1.0, 200.0, 1e-2).unwrap();
        let a = c1_prime_integral(&p, &path, 100.0).unwrap()[0];
        let b = c1_prime_integral(&p, &path, 200.0).unwrap()[0];
        assert!(a < 0.0);
        assert_relative_eq!(a, b, max_relative = 1e-2);
        // the limit is (1/N_inf) \int_0^{t0} dX/dt N ds
        let n_inf = path.n_infinity().unwrap();
        let head = c1_prime_integral(&p, &path, 3.0).unwrap()[0] * path.population_at(3.0);
        assert_relative_eq!(b, head / n_inf, max_relative = 1e-2);
    }

    #[test]
    fn table_profile_has_no_derivative() {
        let p = InflowProfile::new(
            InflowKind::Table {
                points: vec![vec![0.0, 0.0], vec![1.0, 2.0]],
            },
            1.0,
            None,
        )
        .unwrap();
        assert_eq!(p.evaluate(0.5, 1.0), vec![1.0]);
        assert_eq!(p.bound(), 2.0);
        let path = integrate_population(&GrowthRate::constant(1.0), 1.0, 1.0, 0.1).unwrap();
        assert!(c1_prime_integral(&p, &path, 1.0).is_err());
    }

    #[test]
    fn running_quadrature_matches_direct() {
        let path = integrate_population(&GrowthRate::power_decay(0.5), 1.0, 4.0, 1e-2).unwrap();
        let p = InflowProfile::sinusoidal(&[1.0, -0.5], 2.0, 0.3);
        let mut q = InflowQuadrature::new(&p, &path);
        q.advance_to(&p, &path, 400);
        let direct = c1_average(&p, &path, 4.0);
        let nt = path.population(400);
        for i in 0..2 {
            assert_relative_eq!(q.average_integral()[i] / nt, direct[i], epsilon = 1e-12);
        }
        let prime = c1_prime_integral(&p, &path, 4.0).unwrap();
        assert_relative_eq!(q.prime_integral().unwrap()[0] / nt, prime[0], epsilon = 1e-12);
    }
}
