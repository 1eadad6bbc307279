//! Population trajectory `N_t` driven by `dN/dt = b(t, N) N`.
//!
//! The path is tabulated on a fixed grid with a classical fourth-order
//! Runge-Kutta scheme. Alongside `N_t` the grid carries the running integral
//! `B(t) = \int_0^t b(s, N_s) ds`, which is the single table every quadrature
//! in the crate (inflow averages, oracles, kinetic weight decay) reads from.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RateFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Growth rate `b(t, N) >= 0` in units of 1/time.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthRate {
    Constant { value: f64 },
    /// `b(t) = (1 + t)^{-alpha}`; the shift keeps `b` continuous at `t = 0`.
    PowerDecay { alpha: f64 },
    /// Piecewise-linear in `t` through `[t, b]` points, constant outside.
    Table { points: Vec<[f64; 2]> },
    #[serde(skip)]
    Custom(Arc<RateFn>),
}

impl fmt::Debug for GrowthRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthRate::Constant { value } => write!(f, "Constant({value})"),
            GrowthRate::PowerDecay { alpha } => write!(f, "PowerDecay(alpha = {alpha})"),
            GrowthRate::Table { points } => write!(f, "Table({} points)", points.len()),
            GrowthRate::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Long-time growth class of `N_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Finite,
    Linear,
    Subexponential,
    Exponential,
    Superexponential,
    Unclassified,
}

impl Regime {
    /// `Some(true)` when `N_inf < inf`, `None` when unknown.
    pub fn is_finite(self) -> Option<bool> {
        match self {
            Regime::Finite => Some(true),
            Regime::Unclassified => None,
            _ => Some(false),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Finite => "finite",
            Regime::Linear => "linear",
            Regime::Subexponential => "subexponential",
            Regime::Exponential => "exponential",
            Regime::Superexponential => "superexponential",
            Regime::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

impl GrowthRate {
    pub fn constant(value: f64) -> Self {
        GrowthRate::Constant { value }
    }

    pub fn power_decay(alpha: f64) -> Self {
        GrowthRate::PowerDecay { alpha }
    }

    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        GrowthRate::Custom(Arc::new(f))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GrowthRate::Constant { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return Err(Error::invalid(format!("constant growth rate must be finite and >= 0, got {value}")));
                }
            }
            GrowthRate::PowerDecay { alpha } => {
                if !alpha.is_finite() {
                    return Err(Error::invalid("power_decay alpha must be finite"));
                }
            }
            GrowthRate::Table { points } => {
                if points.is_empty() {
                    return Err(Error::invalid("growth table needs at least one point"));
                }
                for w in points.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::invalid("growth table times must be strictly increasing"));
                    }
                }
                if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite() || p[1] < 0.0) {
                    return Err(Error::invalid("growth table values must be finite and >= 0"));
                }
            }
            GrowthRate::Custom(_) => {}
        }
        Ok(())
    }

    pub fn evaluate(&self, t: f64, n: f64) -> f64 {
        match self {
            GrowthRate::Constant { value } => *value,
            GrowthRate::PowerDecay { alpha } => (1.0 + t).powf(-alpha),
            GrowthRate::Table { points } => interpolate_table(points, t),
            GrowthRate::Custom(f) => f(t, n),
        }
    }

    /// Growth class from the known asymptotics of the preset.
    pub fn classify(&self) -> Regime {
        match self {
            GrowthRate::Constant { value } if *value == 0.0 => Regime::Finite,
            GrowthRate::Constant { .. } => Regime::Exponential,
            GrowthRate::PowerDecay { alpha } => {
                let a = *alpha;
                if a > 1.0 {
                    Regime::Finite
                } else if a == 1.0 {
                    Regime::Linear
                } else if a > 0.0 {
                    Regime::Subexponential
                } else if a == 0.0 {
                    Regime::Exponential
                } else {
                    Regime::Superexponential
                }
            }
            GrowthRate::Table { .. } | GrowthRate::Custom(_) => Regime::Unclassified,
        }
    }

    /// `\int_t^\infty b(s) ds` when it is known in closed form.
    pub fn tail_integral(&self, t: f64) -> Option<f64> {
        match self {
            GrowthRate::Constant { value } => Some(if *value == 0.0 { 0.0 } else { f64::INFINITY }),
            GrowthRate::PowerDecay { alpha } if *alpha > 1.0 => {
                Some((1.0 + t).powf(1.0 - alpha) / (alpha - 1.0))
            }
            GrowthRate::PowerDecay { .. } => Some(f64::INFINITY),
            GrowthRate::Table { points } => {
                let last = points.last()?;
                if last[1] > 0.0 {
                    return Some(f64::INFINITY);
                }
                // integrate the piecewise-linear remainder exactly
                let mut acc = 0.0;
                for w in points.windows(2) {
                    let (a, b) = (w[0][0].max(t), w[1][0]);
                    if b > a {
                        acc += 0.5 * (interpolate_table(points, a) + w[1][1]) * (b - a);
                    }
                }
                if t < points[0][0] {
                    acc += points[0][1] * (points[0][0] - t);
                }
                Some(acc)
            }
            GrowthRate::Custom(_) => None,
        }
    }

    /// Lipschitz constant of `t -> b(t, .)` on `[0, inf)` where known.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            GrowthRate::Constant { .. } => Some(0.0),
            GrowthRate::PowerDecay { alpha } if *alpha >= 0.0 => Some(*alpha),
            GrowthRate::PowerDecay { .. } => None,
            GrowthRate::Table { points } => Some(
                points
                    .windows(2)
                    .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                    .fold(0.0, f64::max),
            ),
            GrowthRate::Custom(_) => None,
        }
    }

    /// Grid times where consecutive samples jump by more than `10 L dt`.
    pub fn continuity_violations(&self, t_end: f64, dt: f64, lipschitz: f64) -> Vec<f64> {
        let steps = (t_end / dt).ceil() as usize;
        let tol = 10.0 * lipschitz * dt;
        let mut out = Vec::new();
        let mut prev = self.evaluate(0.0, 1.0);
        for k in 1..=steps {
            let t = k as f64 * dt;
            let cur = self.evaluate(t, 1.0);
            if (cur - prev).abs() > tol + 1e-15 {
                out.push(t);
            }
            prev = cur;
        }
        out
    }
}

fn interpolate_table(points: &[[f64; 2]], t: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if t <= first[0] {
        return first[1];
    }
    if t >= last[0] {
        return last[1];
    }
    let k = points.partition_point(|p| p[0] <= t);
    let (a, b) = (points[k - 1], points[k]);
    let s = (t - a[0]) / (b[0] - a[0]);
    a[1] + s * (b[1] - a[1])
}

/// Tabulated population trajectory. Immutable once built.
#[derive(Debug, Clone)]
pub struct PopulationPath {
    rate: GrowthRate,
    n0: f64,
    dt: f64,
    pop: Vec<f64>,
    rates: Vec<f64>,
    cum_rate: Vec<f64>,
}

/// Integrate `dN/dt = b(t,N) N` on the grid `{0, dt, ..., t_end}`.
pub fn integrate_population(rate: &GrowthRate, n0: f64, t_end: f64, dt: f64) -> Result<PopulationPath> {
    if !(n0 > 0.0) || !n0.is_finite() {
        return Err(Error::invalid(format!("N0 must be positive and finite, got {n0}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!("t_end must be >= 0, got {t_end}")));
    }
    rate.validate()?;

    let steps = grid_steps(t_end, dt);
    let eval = |t: f64, n: f64| -> Result<f64> {
        let b = rate.evaluate(t, n);
        if !b.is_finite() {
            return Err(Error::invalid(format!("growth rate is not finite at t = {t}")));
        }
        if b < 0.0 {
            return Err(Error::invalid(format!("growth rate is negative ({b}) at t = {t}")));
        }
        Ok(b)
    };

    let mut pop = Vec::with_capacity(steps + 1);
    let mut rates = Vec::with_capacity(steps + 1);
    let mut cum = Vec::with_capacity(steps + 1);
    pop.push(n0);
    rates.push(eval(0.0, n0)?);
    cum.push(0.0);

    let (mut n, mut big_b) = (n0, 0.0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = dt;
        // augmented system (N, B)' = (b N, b)
        let b1 = rates[k];
        let b2 = eval(t + 0.5 * h, n + 0.5 * h * b1 * n)?;
        let n2 = n + 0.5 * h * b1 * n;
        let b3 = eval(t + 0.5 * h, n + 0.5 * h * b2 * n2)?;
        let n3 = n + 0.5 * h * b2 * n2;
        let n4 = n + h * b3 * n3;
        let b4 = eval(t + h, n4)?;
        n += h / 6.0 * (b1 * n + 2.0 * b2 * n2 + 2.0 * b3 * n3 + b4 * n4);
        big_b += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        if !n.is_finite() {
            return Err(Error::NonFinite { what: "population", t: t + h });
        }
        // RK4 can in principle undershoot; N is nondecreasing by construction of the model
        n = n.max(pop[k]);
        pop.push(n);
        rates.push(eval(t + h, n)?);
        cum.push(big_b);
    }

    Ok(PopulationPath {
        rate: rate.clone(),
        n0,
        dt,
        pop,
        rates,
        cum_rate: cum,
    })
}

/// Number of steps so that `steps * dt` reaches `t_end` (tolerating round-off).
pub(crate) fn grid_steps(t_end: f64, dt: f64) -> usize {
    let raw = t_end / dt;
    let r = raw.round();
    if (raw - r).abs() < 1e-9 * raw.max(1.0) {
        r as usize
    } else {
        raw.ceil() as usize
    }
}

impl PopulationPath {
    pub fn rate(&self) -> &GrowthRate {
        &self.rate
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of grid points (steps + 1).
    pub fn len(&self) -> usize {
        self.pop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pop.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn population(&self, k: usize) -> f64 {
        self.pop[k]
    }

    pub fn populations(&self) -> &[f64] {
        &self.pop
    }

    /// `b(t_k, N_k)`.
    pub fn rate_at(&self, k: usize) -> f64 {
        self.rates[k]
    }

    /// `\int_0^{t_k} b(s, N_s) ds`.
    pub fn cumulative_rate(&self, k: usize) -> f64 {
        self.cum_rate[k]
    }

    /// `dN/dt` at grid point `k`, taken as `b N` rather than a finite difference.
    pub fn growth_speed(&self, k: usize) -> f64 {
        self.rates[k] * self.pop[k]
    }

    pub fn regime(&self) -> Regime {
        self.rate.classify()
    }

    /// Estimate of `N_inf` from the horizon value and the closed-form tail of `b`.
    pub fn n_infinity(&self) -> Option<f64> {
        let tail = self.rate.tail_integral(self.horizon())?;
        Some(self.pop[self.len() - 1] * tail.exp())
    }

    /// Index `k` with `t_k <= t < t_{k+1}`, clamped to the grid.
    pub fn cell_of(&self, t: f64) -> usize {
        let k = (t / self.dt + 1e-9).floor();
        (k.max(0.0) as usize).min(self.len() - 1)
    }

    /// Dense population via monotone cubic Hermite interpolation.
    pub fn population_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.n0;
        }
        let last = self.len() - 1;
        if t >= self.horizon() {
            return self.pop[last];
        }
        let k = self.cell_of(t).min(last - 1);
        let h = self.dt;
        let s = ((t - self.time(k)) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.pop[k], self.pop[k + 1]);
        let delta = (y1 - y0) / h;
        let (mut m0, mut m1) = (self.growth_speed(k), self.growth_speed(k + 1));
        if delta <= 0.0 {
            m0 = 0.0;
            m1 = 0.0;
        } else {
            // Fritsch-Carlson limiter keeps the interpolant monotone
            let (a, b) = (m0 / delta, m1 / delta);
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                m0 *= tau;
                m1 *= tau;
            }
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
    }

    /// Generalized inverse `inf { t : N_t > s }`; `+inf` when the simulated
    /// horizon never exceeds `s`.
    pub fn generalized_inverse(&self, s: f64) -> f64 {
        if s < self.n0 {
            return 0.0;
        }
        let k = self.pop.partition_point(|&n| n <= s);
        if k >= self.len() {
            return f64::INFINITY;
        }
        if k == 0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (self.time(k - 1), self.time(k));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.population_at(mid) > s {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_rate_keeps_population_constant() {
        let p = integrate_population(&GrowthRate::constant(0.0), 3.0, 10.0, 0.01).unwrap();
        assert!(p.populations().iter().all(|&n| n == 3.0));
        assert_eq!(p.len(), 1001);
        assert_relative_eq!(p.horizon(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_rate_reaches_e() {
        let p = integrate_population(&GrowthRate::constant(1.0), 1.0, 1.0, 1e-3).unwrap();
        assert_relative_eq!(p.population(p.len() - 1), std::f64::consts::E, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_rate_gives_linear_population() {
        let rate = GrowthRate::custom(|t, _| 1.0 / (1.0 + t));
        let p = integrate_population(&rate, 1.0, 9.0, 1e-3).unwrap();
        assert_relative_eq!(p.population(p.len() - 1), 10.0, epsilon = 1e-9);
        // power_decay(1) is the same rate
        let q = integrate_population(&GrowthRate::power_decay(1.0), 1.0, 9.0, 1e-3).unwrap();
        assert_relative_eq!(q.population(q.len() - 1), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn fourth_order_convergence() {
        let rate = GrowthRate::custom(|t, _| 1.0 + (3.0 * t).sin());
        let exact = |t: f64| (t + (1.0 - (3.0 * t).cos()) / 3.0).exp();
        let err = |dt: f64| {
            let p = integrate_population(&rate, 1.0, 2.0, dt).unwrap();
            (p.population(p.len() - 1) - exact(2.0)).abs()
        };
        let (e1, e2) = (err(0.04), err(0.02));
        let order = (e1 / e2).log2();
        assert!(order > 3.7 && order < 4.4, "observed order {order}");
    }

    #[test]
    fn rejects_negative_or_non_finite_rates() {
        let neg = GrowthRate::custom(|t, _| if t > 0.5 { -1.0 } else { 1.0 });
        assert!(matches!(integrate_population(&neg, 1.0, 1.0, 0.1), Err(Error::InvalidInput(_))));
        let nan = GrowthRate::custom(|_, _| f64::NAN);
        assert!(integrate_population(&nan, 1.0, 1.0, 0.1).is_err());
        assert!(integrate_population(&GrowthRate::constant(1.0), 0.0, 1.0, 0.1).is_err());
        assert!(integrate_population(&GrowthRate::constant(1.0), 1.0, 1.0, 0.0).is_err());
        assert!(GrowthRate::constant(-0.1).validate().is_err());
    }

    #[test]
    fn inverse_examples() {
        let p = integrate_population(&GrowthRate::constant(1.0), 1.0, 3.0, 1e-3).unwrap();
        assert_eq!(p.generalized_inverse(0.5), 0.0);
        assert!((p.generalized_inverse(std::f64::consts::E) - 1.0).abs() <= 1e-3);
        let flat = integrate_population(&GrowthRate::constant(0.0), 2.0, 3.0, 1e-2).unwrap();
        assert!(flat.generalized_inverse(2.0).is_infinite());
    }

    #[test]
    fn inverse_on_flat_segment_is_right_end_of_plateau() {
        // b = 1 on [0,1], 0 on [1,2] (via a steep ramp), then 1 again
        let rate = GrowthRate::Table {
            points: vec![[0.0, 1.0], [1.0, 1.0], [1.0001, 0.0], [2.0, 0.0], [2.0001, 1.0]],
        };
        let p = integrate_population(&rate, 1.0, 3.0, 1e-4).unwrap();
        let plateau = p.population(p.cell_of(1.5));
        let t = p.generalized_inverse(plateau);
        assert!(t > 1.99 && t < 2.01, "t = {t}");
    }

    #[test]
    fn classification_follows_power_law() {
        assert_eq!(GrowthRate::power_decay(2.0).classify(), Regime::Finite);
        assert_eq!(GrowthRate::power_decay(1.0).classify(), Regime::Linear);
        assert_eq!(GrowthRate::power_decay(0.5).classify(), Regime::Subexponential);
        assert_eq!(GrowthRate::power_decay(0.0).classify(), Regime::Exponential);
        assert_eq!(GrowthRate::power_decay(-0.5).classify(), Regime::Superexponential);
        assert_eq!(GrowthRate::Table { points: vec![[0.0, 1.0]] }.classify(), Regime::Unclassified);
    }

    #[test]
    fn integrability_dichotomy_by_partial_sums() {
        // partial integrals at T = 10^3 vs 10^2: bounded growth only for alpha > 1
        for (alpha, diverges) in [(0.5, true), (1.0, true), (1.5, false), (2.0, false)] {
            let rate = GrowthRate::power_decay(alpha);
            let p = integrate_population(&rate, 1.0, 1000.0, 0.05).unwrap();
            let b100 = p.cumulative_rate(p.cell_of(100.0));
            let b1000 = p.cumulative_rate(p.len() - 1);
            let increment = b1000 - b100;
            if diverges {
                assert!(increment > 2.0, "alpha {alpha}: increment {increment}");
            } else {
                assert!(increment < 0.2, "alpha {alpha}: increment {increment}");
            }
        }
    }

    #[test]
    fn n_infinity_for_integrable_rate() {
        let p = integrate_population(&GrowthRate::power_decay(2.0), 1.0, 50.0, 1e-2).unwrap();
        assert_relative_eq!(p.n_infinity().unwrap(), std::f64::consts::E, epsilon = 1e-8);
    }

    #[test]
    fn table_continuity_check() {
        let smooth = GrowthRate::Table { points: vec![[0.0, 0.0], [10.0, 1.0]] };
        assert!(smooth.continuity_violations(10.0, 0.01, 0.1).is_empty());
        let jump = GrowthRate::Table { points: vec![[0.0, 0.0], [5.0, 0.0], [5.001, 1.0]] };
        assert!(!jump.continuity_violations(10.0, 0.01, 0.1).is_empty());
    }

    #[test]
    fn dense_output_matches_grid_and_is_monotone() {
        let p = integrate_population(&GrowthRate::power_decay(0.5), 1.0, 5.0, 0.1).unwrap();
        for k in 0..p.len() {
            assert_relative_eq!(p.population_at(p.time(k)), p.population(k), epsilon = 1e-12);
        }
        let mut prev = 0.0;
        for i in 0..=5000 {
            let n = p.population_at(i as f64 * 1e-3);
            assert!(n >= prev);
            prev = n;
        }
    }

    fn simpson(f: impl Fn(f64) -> f64, t: f64, n: usize) -> f64 {
        let h = t / n as f64;
        let mut acc = f(0.0) + f(t);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    proptest::proptest! {
        #[test]
        fn path_is_monotone_and_matches_exponential_of_integral(
            alpha in 0.0f64..3.0,
            c in 0.0f64..2.0,
            n0 in 0.1f64..10.0,
            use_power in proptest::bool::ANY,
        ) {
            let rate = if use_power { GrowthRate::power_decay(alpha) } else { GrowthRate::constant(c) };
            let p = integrate_population(&rate, n0, 4.0, 1e-3).unwrap();
            for w in p.populations().windows(2) {
                proptest::prop_assert!(w[0] <= w[1]);
            }
            for k in (0..p.len()).step_by(500) {
                let t = p.time(k);
                let b = if t == 0.0 { 0.0 } else { simpson(|s| rate.evaluate(s, 1.0), t, 2000) };
                let n = p.population(k);
                proptest::prop_assert!((n - n0 * b.exp()).abs() / n <= 1e-6);
            }
        }

        #[test]
        fn inverse_lands_within_one_step_increment(
            alpha in 0.0f64..2.0,
            frac in 0.0f64..1.0,
        ) {
            let p = integrate_population(&GrowthRate::power_decay(alpha), 1.0, 5.0, 1e-2).unwrap();
            let n_end = p.population(p.len() - 1);
            let s = 1.0 + frac * (n_end - 1.0) * 0.999;
            let t = p.generalized_inverse(s);
            let k = p.cell_of(t).min(p.len() - 2);
            let eps = p.population(k + 1) - p.population(k);
            let n = p.population_at(t);
            proptest::prop_assert!(n >= s - 1e-12 && n <= s + eps + 1e-12, "s {s} N {n} eps {eps}");
        }
    }
}
