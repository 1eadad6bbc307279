//! Influence functions `psi(r)` with their Lipschitz / sup / support metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelKind {
    /// `psi(r) = exp(-lambda r)`.
    Type1Exponential { lambda: f64 },
    /// `psi(r) = value` (defaults to 1).
    Type1Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// `psi(r) = (1 - r^2)^2` on `[0, 1]`, zero beyond.
    Type2Bump {},
    /// `psi(r) = max(0, 1 - r)`.
    Type2Tent {},
    /// Piecewise linear through `[r, psi]` points starting at `r = 0`.
    /// A final value of zero means compact support ending at the last point;
    /// otherwise the last value is extended to infinity.
    Table { points: Vec<[f64; 2]>, lipschitz: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelClass {
    /// Everywhere positive and bounded.
    TypeI,
    /// Lipschitz with support in `[0, 1]` and `psi(1) = 0`.
    TypeII,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceKernel {
    kind: KernelKind,
    class: KernelClass,
    lipschitz: f64,
    sup: f64,
    support_radius: f64,
}

/// Result of [`InfluenceKernel::positive_floor`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floor {
    pub value: f64,
    /// Set when the range reaches outside the support, so the floor is zero.
    pub vacuous: bool,
}

impl InfluenceKernel {
    pub fn new(kind: KernelKind) -> Result<Self> {
        let (class, lipschitz, sup, support_radius) = match &kind {
            KernelKind::Type1Exponential { lambda } => {
                if !(*lambda >= 0.0) || !lambda.is_finite() {
                    return Err(Error::invalid("type1_exponential needs a finite lambda >= 0"));
                }
                (KernelClass::TypeI, *lambda, 1.0, f64::INFINITY)
            }
            KernelKind::Type1Constant { value } => {
                if !(*value > 0.0) || !value.is_finite() {
                    return Err(Error::invalid("type1_constant needs a finite value > 0"));
                }
                (KernelClass::TypeI, 0.0, *value, f64::INFINITY)
            }
            // max |d/dr (1-r^2)^2| = 8 / (3 sqrt 3) at r = 1/sqrt 3
            KernelKind::Type2Bump {} => (KernelClass::TypeII, 8.0 / (3.0 * 3f64.sqrt()), 1.0, 1.0),
            KernelKind::Type2Tent {} => (KernelClass::TypeII, 1.0, 1.0, 1.0),
            KernelKind::Table { points, lipschitz } => validate_table(points, *lipschitz)?,
        };
        Ok(InfluenceKernel {
            kind,
            class,
            lipschitz,
            sup,
            support_radius,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(KernelKind::Type1Constant { value }).expect("positive constant")
    }

    pub fn tent() -> Self {
        Self::new(KernelKind::Type2Tent {}).expect("preset")
    }

    pub fn bump() -> Self {
        Self::new(KernelKind::Type2Bump {}).expect("preset")
    }

    pub fn exponential(lambda: f64) -> Self {
        Self::new(KernelKind::Type1Exponential { lambda }).expect("lambda >= 0")
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn class(&self) -> KernelClass {
        self.class
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `psi_M = sup_r psi(r)`.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// The constant value when `psi` is constant.
    pub(crate) fn as_constant(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Type1Constant { value } => Some(value),
            _ => None,
        }
    }

    pub(crate) fn is_tent(&self) -> bool {
        matches!(self.kind, KernelKind::Type2Tent {})
    }

    /// Checked evaluation.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::invalid(format!("kernel distance must be >= 0, got {r}")));
        }
        Ok(self.value(r))
    }

    /// Unchecked evaluation for hot loops; `r >= 0` is the caller's job.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        match &self.kind {
            KernelKind::Type1Exponential { lambda } => (-lambda * r).exp(),
            KernelKind::Type1Constant { value } => *value,
            KernelKind::Type2Bump {} => {
                if r >= 1.0 {
                    0.0
                } else {
                    let u = 1.0 - r * r;
                    u * u
                }
            }
            KernelKind::Type2Tent {} => (1.0 - r).max(0.0),
            KernelKind::Table { points, .. } => table_value(points, r),
        }
    }

    /// `inf_{0 <= r <= r_max} psi(r)`.
    pub fn positive_floor(&self, r_max: f64) -> Floor {
        let r_max = r_max.max(0.0);
        if r_max >= self.support_radius {
            if self.support_radius.is_finite() {
                log::warn!("positive floor requested beyond kernel support ({r_max} >= {}): floor is 0", self.support_radius);
            }
            return Floor {
                value: 0.0,
                vacuous: true,
            };
        }
        let value = match &self.kind {
            KernelKind::Table { points, .. } => {
                let mut m = table_value(points, r_max);
                for p in points.iter().take_while(|p| p[0] <= r_max) {
                    m = m.min(p[1]);
                }
                m
            }
            // the presets are nonincreasing
            _ => self.value(r_max),
        };
        Floor {
            value,
            vacuous: value <= 0.0,
        }
    }
}

fn validate_table(points: &[[f64; 2]], lipschitz: f64) -> Result<(KernelClass, f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid("kernel table needs at least two points"));
    }
    if points[0][0] != 0.0 {
        return Err(Error::invalid("kernel table must start at r = 0"));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite() || p[1] < 0.0) {
        return Err(Error::invalid("kernel table values must be finite and >= 0"));
    }
    let mut sampled = 0.0f64;
    for w in points.windows(2) {
        let dr = w[1][0] - w[0][0];
        if !(dr > 0.0) {
            return Err(Error::invalid("kernel table radii must be strictly increasing"));
        }
        sampled = sampled.max((w[1][1] - w[0][1]).abs() / dr);
    }
    if !(lipschitz >= 0.0) || sampled > lipschitz * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::invalid(format!(
            "kernel table has sampled Lipschitz constant {sampled} above the declared {lipschitz}"
        )));
    }
    let sup = points.iter().map(|p| p[1]).fold(0.0, f64::max);
    if !(sup > 0.0) {
        return Err(Error::invalid("kernel table is identically zero"));
    }
    let last = points[points.len() - 1];
    if last[1] == 0.0 {
        if last[0] > 1.0 {
            return Err(Error::invalid("compactly supported kernel table must vanish by r = 1"));
        }
        Ok((KernelClass::TypeII, lipschitz, sup, last[0]))
    } else {
        if points.iter().any(|p| p[1] <= 0.0) {
            return Err(Error::invalid("kernel table with unbounded support must be everywhere positive"));
        }
        Ok((KernelClass::TypeI, lipschitz, sup, f64::INFINITY))
    }
}

fn table_value(points: &[[f64; 2]], r: f64) -> f64 {
    let last = points[points.len() - 1];
    if r >= last[0] {
        return last[1];
    }
    let k = points.partition_point(|p| p[0] <= r);
    let (a, b) = (points[k - 1], points[k]);
    a[1] + (r - a[0]) / (b[0] - a[0]) * (b[1] - a[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn presets() -> Vec<InfluenceKernel> {
        vec![
            InfluenceKernel::constant(1.0),
            InfluenceKernel::exponential(1.0),
            InfluenceKernel::exponential(3.0),
            InfluenceKernel::tent(),
            InfluenceKernel::bump(),
            InfluenceKernel::new(KernelKind::Table {
                points: vec![[0.0, 1.0], [0.5, 0.8], [1.0, 0.0]],
                lipschitz: 1.6,
            })
            .unwrap(),
        ]
    }

    #[test]
    fn preset_values() {
        assert_eq!(InfluenceKernel::constant(1.0).eval(7.3).unwrap(), 1.0);
        assert_eq!(InfluenceKernel::tent().eval(0.25).unwrap(), 0.75);
        assert_eq!(InfluenceKernel::tent().eval(1.5).unwrap(), 0.0);
        assert_eq!(InfluenceKernel::bump().eval(1.0).unwrap(), 0.0);
        assert!(InfluenceKernel::tent().eval(-0.1).is_err());
    }

    #[test]
    fn floors() {
        assert_eq!(InfluenceKernel::constant(1.0).positive_floor(123.0).value, 1.0);
        let f = InfluenceKernel::exponential(1.0).positive_floor(2.0);
        assert!((f.value - (-2.0f64).exp()).abs() < 1e-15);
        assert!(!f.vacuous);
        let t = InfluenceKernel::tent().positive_floor(2.0);
        assert_eq!(t.value, 0.0);
        assert!(t.vacuous);
    }

    #[test]
    fn lipschitz_sup_and_support_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in presets() {
            for _ in 0..10_000 {
                let (r1, r2): (f64, f64) = (rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0));
                let (p1, p2) = (k.value(r1), k.value(r2));
                assert!((p1 - p2).abs() <= k.lipschitz() * (r1 - r2).abs() + 1e-12, "{:?}", k.kind());
                assert!(p1 <= k.sup() && p1 >= 0.0);
                if k.class() == KernelClass::TypeII && r1 > k.support_radius() {
                    assert_eq!(p1, 0.0);
                }
                if k.class() == KernelClass::TypeI {
                    assert!(p1 > 0.0);
                }
            }
        }
    }

    #[test]
    fn table_validation() {
        // declared Lipschitz too small
        assert!(InfluenceKernel::new(KernelKind::Table {
            points: vec![[0.0, 1.0], [0.5, 0.0]],
            lipschitz: 1.0
        })
        .is_err());
        // vanishing beyond r = 1 is not Type II
        assert!(InfluenceKernel::new(KernelKind::Table {
            points: vec![[0.0, 1.0], [2.0, 0.0]],
            lipschitz: 1.0
        })
        .is_err());
        let k = InfluenceKernel::new(KernelKind::Table {
            points: vec![[0.0, 2.0], [1.0, 1.0]],
            lipschitz: 1.0,
        })
        .unwrap();
        assert_eq!(k.class(), KernelClass::TypeI);
        assert_eq!(k.value(10.0), 1.0);
        assert_eq!(k.positive_floor(0.5).value, 1.5);
    }

    #[test]
    fn config_names() {
        let k: KernelKind = toml::from_str("kind = \"type1_exponential\"\nlambda = 1.0").unwrap();
        assert_eq!(k, KernelKind::Type1Exponential { lambda: 1.0 });
        let k: KernelKind = toml::from_str("kind = \"type2_tent\"").unwrap();
        assert_eq!(k, KernelKind::Type2Tent {});
        let k: KernelKind = toml::from_str("kind = \"type1_constant\"").unwrap();
        assert_eq!(k, KernelKind::Type1Constant { value: 1.0 });
    }
}
