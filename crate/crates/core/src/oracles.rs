//! Reference values for the mean and variance, from the integrating-factor
//! solution of the moment equations.
//!
//! The first moment satisfies `m1' = b (X - m1)`, hence
//! `m1(t) = (N0/N_t) m1(0) + (1/N_t) \int_0^t X dN`. Everything here is
//! evaluated on the same population table the simulators use.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::growth::{integrate_population, GrowthRate, PopulationPath};
use crate::inflow::{path_quadrature, InflowProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult<T> {
    pub t: f64,
    pub value: T,
    pub method: Method,
    /// For quadrature: the change when the step is doubled.
    pub estimated_error: f64,
}

fn inflow_integral(profile: &InflowProfile, path: &PopulationPath, t: f64, stride: usize) -> Vec<f64> {
    path_quadrature(path, t, stride, profile.dim(), |s, n, b, out| {
        profile.evaluate_into(s, n, out);
        out.iter_mut().for_each(|x| *x *= b * n);
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `m1(t) = (N0/N_t) m1(0) + (1/N_t) \int_0^t X(s, N_s) dN_s`.
pub fn m1_closed_form(profile: &InflowProfile, path: &PopulationPath, m1_0: &[f64], t: f64) -> OracleResult<Vec<f64>> {
    let t = t.clamp(0.0, path.horizon());
    let nt = path.population_at(t);
    let ratio = path.n0() / nt;
    if let Some(xc) = profile.constant_value() {
        let value = m1_0.iter().zip(xc).map(|(m, x)| x + (m - x) * ratio).collect();
        return OracleResult {
            t,
            value,
            method: Method::ClosedForm,
            estimated_error: 0.0,
        };
    }
    let fine = inflow_integral(profile, path, t, 1);
    let coarse = inflow_integral(profile, path, t, 2);
    let value = m1_0.iter().zip(&fine).map(|(m, i)| ratio * m + i / nt).collect();
    OracleResult {
        t,
        value,
        method: Method::Quadrature,
        estimated_error: max_abs_diff(&fine, &coarse) / nt,
    }
}

/// Share of the final population reached before the quadrature horizon.
const LIMIT_COVERAGE: f64 = 0.999;

/// `lim m1 = (N0/N_inf) m1(0) + (1/N_inf) \int_0^inf X dN` for an integrable
/// growth rate. The path is extended (same step) until `N_T >= 0.999 N_inf`;
/// the remaining tail is not extrapolated but bounded by `X_B (N_inf - N_T)/N_inf`.
pub fn m1_limit(rate: &GrowthRate, profile: &InflowProfile, path: &PopulationPath, m1_0: &[f64]) -> Result<OracleResult<Vec<f64>>> {
    if rate.classify().is_finite() != Some(true) {
        return Err(Error::invalid(format!(
            "the limit of m1 needs a finite final population; growth is {}",
            rate.classify()
        )));
    }
    let n0 = path.n0();
    let n_inf = path
        .n_infinity()
        .ok_or_else(|| Error::invalid("final population is not available in closed form"))?;
    if let Some(xc) = profile.constant_value() {
        let r = n0 / n_inf;
        return Ok(OracleResult {
            t: f64::INFINITY,
            value: m1_0.iter().zip(xc).map(|(m, x)| r * m + (1.0 - r) * x).collect(),
            method: Method::ClosedForm,
            estimated_error: 0.0,
        });
    }
    let mut long = path.clone();
    let mut horizon = path.horizon().max(1.0);
    while long.population(long.len() - 1) < LIMIT_COVERAGE * n_inf {
        horizon *= 2.0;
        if horizon / path.dt() > 5e7 {
            return Err(Error::ResourceLimit {
                what: "limit quadrature steps",
                requested: (horizon / path.dt()) as u128,
                cap: 50_000_000,
            });
        }
        long = integrate_population(rate, n0, horizon, path.dt())?;
    }
    let t_end = long.horizon();
    let n_t = long.population(long.len() - 1);
    let fine = inflow_integral(profile, &long, t_end, 1);
    let coarse = inflow_integral(profile, &long, t_end, 2);
    Ok(OracleResult {
        t: f64::INFINITY,
        value: m1_0.iter().zip(&fine).map(|(m, i)| (n0 * m + i) / n_inf).collect(),
        method: Method::Quadrature,
        estimated_error: profile.bound() * (n_inf - n_t) / n_inf + max_abs_diff(&fine, &coarse) / n_inf,
    })
}

/// Constant-inflow envelope `V_X(t) <= V_X(0) N0 / N_t`.
pub fn variance_bound_const_x(v_x0: f64, path: &PopulationPath, t: f64) -> f64 {
    v_x0 * path.n0() / path.population_at(t)
}

/// Envelope for `V` from an arbitrary start: `(V(0) + |m1(0) - X_c|^2) N0 / N_t`.
pub fn variance_bound_general(v0: f64, m1_0: &[f64], x_c: &[f64], path: &PopulationPath, t: f64) -> f64 {
    let gap: f64 = m1_0.iter().zip(x_c).map(|(a, b)| (a - b) * (a - b)).sum();
    variance_bound_const_x(v0 + gap, path, t)
}

/// `(1/N_t) \int_0^t g(s) dN_s`.
pub fn lemma3_average(g: impl Fn(f64) -> f64, path: &PopulationPath, t: f64) -> OracleResult<f64> {
    let t = t.clamp(0.0, path.horizon());
    let integral = |stride| {
        path_quadrature(path, t, stride, 1, |s, n, b, out| out[0] = g(s) * b * n)[0]
    };
    let (fine, coarse) = (integral(1), integral(2));
    let nt = path.population_at(t);
    OracleResult {
        t,
        value: fine / nt,
        method: Method::Quadrature,
        estimated_error: (fine - coarse).abs() / nt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::integrate_population;
    use crate::inflow::{c1_prime_integral, InflowKind};
    use approx::assert_relative_eq;

    fn path(rate: GrowthRate, t_end: f64, dt: f64) -> PopulationPath {
        integrate_population(&rate, 1.0, t_end, dt).unwrap()
    }

    #[test]
    fn constant_inflow_mean() {
        let p = path(GrowthRate::constant(1.0), 5.0, 1e-3);
        let r = m1_closed_form(&InflowProfile::constant(&[0.5]), &p, &[0.2], 3.0);
        let ratio = 1.0 / p.population_at(3.0);
        assert_relative_eq!(r.value[0], 0.5 + (0.2 - 0.5) * ratio, epsilon = 1e-15);
        assert_eq!(r.method, Method::ClosedForm);
    }

    #[test]
    fn oscillating_inflow_mean() {
        let p = path(GrowthRate::constant(1.0), 12.0, 1e-3);
        let prof = InflowProfile::sinusoidal(&[1.0], 1.0, 0.0);
        for t in [5.0, 8.5, 12.0] {
            let r = m1_closed_form(&prof, &p, &[0.0], t);
            let exact = 0.5 * (t.sin() - t.cos()) + 0.5 * (-t).exp();
            assert!((r.value[0] - exact).abs() < 1e-6);
            assert!(r.estimated_error < 1e-5);
        }
    }

    #[test]
    fn no_growth_conserves_mean() {
        let p = path(GrowthRate::constant(0.0), 4.0, 1e-2);
        let prof = InflowProfile::sinusoidal(&[1.0, 2.0], 1.0, 0.0);
        for t in [0.0, 2.0, 4.0] {
            assert_eq!(m1_closed_form(&prof, &p, &[0.3, -0.1], t).value, vec![0.3, -0.1]);
        }
    }

    #[test]
    fn limit_examples() {
        let rate = GrowthRate::power_decay(2.0);
        let p = path(rate.clone(), 10.0, 1e-2);
        let r = m1_limit(&rate, &InflowProfile::constant(&[1.0]), &p, &[0.0]).unwrap();
        assert_relative_eq!(r.value[0], 1.0 - (-1.0f64).exp(), epsilon = 1e-9);
        let same = m1_limit(&rate, &InflowProfile::constant(&[0.7]), &p, &[0.7]).unwrap();
        assert_relative_eq!(same.value[0], 0.7, epsilon = 1e-12);
        let n_inf = std::f64::consts::E;
        let general = m1_limit(&rate, &InflowProfile::constant(&[0.4]), &p, &[-1.0]).unwrap();
        assert_relative_eq!(general.value[0], -1.0 / n_inf + (1.0 - 1.0 / n_inf) * 0.4, epsilon = 1e-9);
        assert!(m1_limit(&GrowthRate::constant(1.0), &InflowProfile::constant(&[1.0]), &p, &[0.0]).is_err());
    }

    #[test]
    fn quadrature_limit_brackets_the_constant_case() {
        // a ramp from 1 to 1 is constant in value but still goes through the quadrature branch
        let rate = GrowthRate::power_decay(2.0);
        let p = path(rate.clone(), 10.0, 1e-2);
        let prof = InflowProfile::new(
            InflowKind::EventuallyConstant {
                start: vec![1.0],
                value: vec![1.0],
                t0: 1.0,
            },
            1.0,
            None,
        )
        .unwrap();
        let r = m1_limit(&rate, &prof, &p, &[0.0]).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        assert_eq!(r.method, Method::Quadrature);
        assert!((r.value[0] - exact).abs() <= r.estimated_error + 1e-9);
        assert!(r.estimated_error < 1e-3);
    }

    #[test]
    fn variance_envelopes() {
        let p = path(GrowthRate::constant(1.0), 1.0, 1e-3);
        assert_relative_eq!(variance_bound_const_x(0.8, &p, 2f64.ln()), 0.4, epsilon = 1e-9);
        let flat = path(GrowthRate::constant(0.0), 1.0, 1e-3);
        assert_eq!(variance_bound_const_x(0.8, &flat, 0.7), 0.8);
        assert_relative_eq!(variance_bound_general(0.5, &[1.0], &[0.0], &p, 2f64.ln()), 0.75, epsilon = 1e-9);
    }

    #[test]
    fn lemma3_examples() {
        let p = path(GrowthRate::constant(1.0), 30.0, 1e-3);
        let r = lemma3_average(|_| 2.0, &p, 3.0);
        let exact = 2.0 * (1.0 - 1.0 / p.population_at(3.0));
        assert!((r.value - exact).abs() <= r.estimated_error);
        assert!(r.estimated_error < 1e-6);
        assert_eq!(lemma3_average(|_| 0.0, &p, 3.0).value, 0.0);
        // g = 1/(1+t) with exponential growth: the average vanishes like 1/t
        let mut prev = f64::INFINITY;
        for t in [10.0, 20.0, 30.0] {
            let v = lemma3_average(|s| 1.0 / (1.0 + s), &p, t).value;
            assert!(v < prev);
            assert!(v * t < 1.5);
            prev = v;
        }
    }

    #[test]
    fn halving_the_step_stays_within_reported_error() {
        let prof = InflowProfile::sinusoidal(&[1.0], 3.0, 0.2);
        let coarse = path(GrowthRate::power_decay(0.5), 6.0, 2e-2);
        let fine = path(GrowthRate::power_decay(0.5), 6.0, 1e-2);
        for t in [1.0, 3.3, 6.0] {
            let a = m1_closed_form(&prof, &coarse, &[0.1], t);
            let b = m1_closed_form(&prof, &fine, &[0.1], t);
            assert!((a.value[0] - b.value[0]).abs() < a.estimated_error, "t = {t}");
            let ga = lemma3_average(|s| (2.0 * s).cos(), &coarse, t);
            let gb = lemma3_average(|s| (2.0 * s).cos(), &fine, t);
            assert!((ga.value - gb.value).abs() < ga.estimated_error);
        }
    }

    #[test]
    fn integration_by_parts_identity() {
        // m1(t) - X(t, N_t) + (1/N_t) \int X' N ds = (m1(0) - X(0, N0)) N0 / N_t
        let p = path(GrowthRate::constant(0.7), 8.0, 1e-3);
        let prof = InflowProfile::sinusoidal(&[1.0], 1.3, 0.4);
        let m1_0 = [0.25];
        let x0 = prof.evaluate(0.0, 1.0)[0];
        for t in [2.0, 5.0, 8.0] {
            let m1 = m1_closed_form(&prof, &p, &m1_0, t).value[0];
            let nt = p.population_at(t);
            let lhs = m1 - prof.evaluate(t, nt)[0] + c1_prime_integral(&prof, &p, t).unwrap()[0];
            assert!((lhs - (m1_0[0] - x0) / nt).abs() < 1e-6, "t = {t}");
        }
    }
}
