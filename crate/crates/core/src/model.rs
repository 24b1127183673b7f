//! Physical parameters, divisors, stability classification, and the
//! closed-form scalar quantities attached to them.
//!
//! Everything here is exact arithmetic or a one-line formula; no
//! discretization enters. Cone angles are kept as integer fractions so that
//! their defect sum is exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter regime: the compact sphere problem or the planar one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamMode {
    /// Degree-N problem on the sphere; the coupling is derived from tau and N.
    CompactSphere,
    /// Planar problem with conical asymptotics; requires a*N in [0, 1).
    Planar,
}

/// Physical constants of the model.
///
/// `alpha` is always derived, never set directly: in compact mode from the
/// constraint alpha * tau * N = 1, in planar mode from the coupling a = 2*alpha.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelParams {
    /// Symmetry-breaking scale, positive.
    pub tau: f64,
    /// Total string number (degree), positive.
    pub n: u32,
    /// Coupling constant, derived.
    pub alpha: f64,
    /// Parameter regime.
    pub mode: ParamMode,
}

impl ModelParams {
    /// Compact-sphere parameters; alpha is derived as 1/(tau*N).
    pub fn compact(tau: f64, n: u32) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Validation(format!("tau must be positive, got {tau}")));
        }
        if n == 0 {
            return Err(Error::Validation("degree N must be positive".into()));
        }
        Ok(ModelParams {
            tau,
            n,
            alpha: 1.0 / (tau * n as f64),
            mode: ParamMode::CompactSphere,
        })
    }

    /// Planar parameters with coupling a = 2*alpha; requires a*N in [0, 1).
    pub fn planar(a: f64, n: u32) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::Validation(format!("coupling a must be nonnegative, got {a}")));
        }
        if n == 0 {
            return Err(Error::Validation("degree N must be positive".into()));
        }
        let an = a * n as f64;
        if !(0.0..1.0).contains(&an) {
            return Err(Error::Mode(format!(
                "planar mode requires a*N in [0, 1), got {an}"
            )));
        }
        Ok(ModelParams {
            tau: 1.0,
            n,
            alpha: 0.5 * a,
            mode: ParamMode::Planar,
        })
    }

    /// The planar coupling a = 2*alpha.
    pub fn coupling_a(&self) -> f64 {
        2.0 * self.alpha
    }

    /// Half degree N' = N/2; mode error when N is odd.
    pub fn n_half(&self) -> Result<u32> {
        if self.n % 2 != 0 {
            return Err(Error::Mode(format!(
                "operation requires even degree, got N = {}",
                self.n
            )));
        }
        Ok(self.n / 2)
    }

    /// Critical coupling value 1/(N e^{2 alpha}), the b -> 0 limit of
    /// [`lambda_of_b`].
    pub fn lambda_critical(&self) -> Result<f64> {
        self.require_compact("lambda_critical")?;
        Ok(1.0 / (self.n as f64 * (2.0 * self.alpha).exp()))
    }

    fn require_compact(&self, what: &str) -> Result<()> {
        if self.mode != ParamMode::CompactSphere {
            return Err(Error::Mode(format!("{what} requires compact-sphere mode")));
        }
        Ok(())
    }
}

/// A point of the Riemann sphere: a finite coordinate or the point at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum P1Point {
    Finite(Complex64),
    Infinity,
}

impl P1Point {
    /// Convenience constructor from real coordinates.
    pub fn finite(re: f64, im: f64) -> Self {
        P1Point::Finite(Complex64::new(re, im))
    }

    /// Coordinate of the point in the given chart (0: z, 1: w = 1/z), or None
    /// when the point is that chart's infinity.
    pub fn chart_coord(&self, chart: usize) -> Option<Complex64> {
        match (self, chart) {
            (P1Point::Finite(z), 0) => Some(*z),
            (P1Point::Infinity, 0) => None,
            (P1Point::Finite(z), _) => {
                if z.norm_sqr() == 0.0 {
                    None
                } else {
                    Some(1.0 / z)
                }
            }
            (P1Point::Infinity, _) => Some(Complex64::new(0.0, 0.0)),
        }
    }
}

/// One divisor entry: a point with its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivisorEntry {
    pub point: P1Point,
    pub multiplicity: u32,
}

/// Zeros of the Higgs field with multiplicities.
///
/// Points are pairwise distinct and multiplicities positive; both are
/// enforced at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DivisorRecord>", into = "Vec<DivisorRecord>")]
pub struct Divisor {
    entries: Vec<DivisorEntry>,
}

impl Divisor {
    /// Validates distinctness and positivity of the entries.
    pub fn new(entries: Vec<DivisorEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("divisor must have at least one entry".into()));
        }
        for e in &entries {
            if e.multiplicity == 0 {
                return Err(Error::Validation("multiplicities must be positive".into()));
            }
            if let P1Point::Finite(z) = e.point {
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::Validation("divisor points must be finite coordinates".into()));
                }
            }
        }
        for i in 0..entries.len() {
            for j in (i + 1)..entries.len() {
                if entries[i].point == entries[j].point {
                    return Err(Error::Validation(format!(
                        "divisor points must be pairwise distinct (entries {i} and {j} coincide)"
                    )));
                }
            }
        }
        Ok(Divisor { entries })
    }

    /// The k-th roots of unity, each with multiplicity one.
    pub fn roots_of_unity(k: u32) -> Self {
        let entries = (0..k)
            .map(|j| {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                // Snap the axis points so the divisor is exactly symmetric
                // under quarter turns when 4 divides k.
                let (mut re, mut im) = (theta.cos(), theta.sin());
                if re.abs() < 1e-15 {
                    re = 0.0;
                }
                if im.abs() < 1e-15 {
                    im = 0.0;
                }
                DivisorEntry {
                    point: P1Point::finite(re, im),
                    multiplicity: 1,
                }
            })
            .collect();
        Divisor { entries }
    }

    pub fn entries(&self) -> &[DivisorEntry] {
        &self.entries
    }

    /// Sum of multiplicities.
    pub fn total(&self) -> u32 {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }
}

/// Serialized form of one divisor entry.
#[derive(Serialize, Deserialize)]
pub struct DivisorRecord {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub infinity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<f64>,
    pub mult: u32,
}

impl TryFrom<Vec<DivisorRecord>> for Divisor {
    type Error = String;

    fn try_from(records: Vec<DivisorRecord>) -> std::result::Result<Self, String> {
        let mut entries = Vec::with_capacity(records.len());
        for r in &records {
            let point = if r.infinity {
                if r.re.is_some() || r.im.is_some() {
                    return Err("divisor record cannot set both infinity and coordinates".into());
                }
                P1Point::Infinity
            } else {
                P1Point::finite(r.re.unwrap_or(0.0), r.im.unwrap_or(0.0))
            };
            entries.push(DivisorEntry {
                point,
                multiplicity: r.mult,
            });
        }
        Divisor::new(entries).map_err(|e| e.to_string())
    }
}

impl From<Divisor> for Vec<DivisorRecord> {
    fn from(d: Divisor) -> Self {
        d.entries
            .iter()
            .map(|e| match e.point {
                P1Point::Infinity => DivisorRecord {
                    infinity: true,
                    re: None,
                    im: None,
                    mult: e.multiplicity,
                },
                P1Point::Finite(z) => DivisorRecord {
                    infinity: false,
                    re: Some(z.re),
                    im: Some(z.im),
                    mult: e.multiplicity,
                },
            })
            .collect()
    }
}

/// GIT stability of a divisor relative to its degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    /// Every multiplicity is below N/2.
    Stable,
    /// Exactly two points, each of multiplicity N/2.
    StrictlyPolystable,
    Unstable,
}

/// Classifies a divisor by its multiplicities.
pub fn classify_divisor(divisor: &Divisor, params: &ModelParams) -> Result<StabilityClass> {
    if divisor.total() != params.n {
        return Err(Error::Validation(format!(
            "divisor degree {} does not match N = {}",
            divisor.total(),
            params.n
        )));
    }
    let n = params.n;
    if divisor.entries().iter().all(|e| 2 * e.multiplicity < n) {
        return Ok(StabilityClass::Stable);
    }
    if divisor.entries().len() == 2
        && divisor.entries().iter().all(|e| 2 * e.multiplicity == n)
    {
        return Ok(StabilityClass::StrictlyPolystable);
    }
    Ok(StabilityClass::Unstable)
}

/// Strict infimum 4 pi N / tau of solution volumes on the sphere.
pub fn admissible_lower_bound(params: &ModelParams) -> Result<f64> {
    if params.mode != ParamMode::CompactSphere {
        return Err(Error::Mode("admissible lower bound requires compact-sphere mode".into()));
    }
    Ok(4.0 * std::f64::consts::PI * params.n as f64 / params.tau)
}

/// Coupling value 1/(2 N' e^{2 alpha (b + e^{-b})}) of the two-pole symmetric
/// family, strictly decreasing in b and below [`ModelParams::lambda_critical`]
/// for every b > 0.
pub fn lambda_of_b(b: f64, params: &ModelParams) -> Result<f64> {
    if params.mode != ParamMode::CompactSphere {
        return Err(Error::Mode("lambda_of_b requires compact-sphere mode".into()));
    }
    let n_half = params.n_half()? as f64;
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Validation(format!("b must be positive, got {b}")));
    }
    Ok(1.0 / (2.0 * n_half * (2.0 * params.alpha * (b + (-b).exp())).exp()))
}

/// Cone angle fraction beta = (N - 2 n_j) / N at one divisor point.
///
/// The fraction is stored exactly; `value` is its float value in (0, 1).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConeAngle {
    pub numerator: i64,
    pub denominator: i64,
    pub value: f64,
}

/// Cone angles 2 pi beta_j of the flat limit metric, one per divisor point.
///
/// Only defined for stable divisors; the angle defect sum
/// sum_j (1 - beta_j) = 2 holds exactly in the stored fractions.
pub fn cone_angles(divisor: &Divisor, params: &ModelParams) -> Result<Vec<ConeAngle>> {
    if classify_divisor(divisor, params)? != StabilityClass::Stable {
        return Err(Error::Stability(
            "cone angles require a stable divisor (every multiplicity below N/2)".into(),
        ));
    }
    let n = params.n as i64;
    Ok(divisor
        .entries()
        .iter()
        .map(|e| {
            let num = n - 2 * e.multiplicity as i64;
            ConeAngle {
                numerator: num,
                denominator: n,
                value: num as f64 / n as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compact(tau: f64, n: u32) -> ModelParams {
        ModelParams::compact(tau, n).unwrap()
    }

    #[test]
    fn alpha_is_derived_from_the_compact_constraint() {
        let p = compact(1.0, 4);
        assert_eq!(p.alpha, 0.25);
        assert_eq!(p.alpha * p.tau * p.n as f64, 1.0);
        let p = compact(2.0, 2);
        assert_eq!(p.alpha, 0.25);
    }

    #[test]
    fn planar_mode_bounds_the_coupling() {
        let p = ModelParams::planar(0.5, 1).unwrap();
        assert_eq!(p.alpha, 0.25);
        assert!(ModelParams::planar(0.5, 2).is_err());
        assert!(ModelParams::planar(1.0, 1).is_err());
    }

    #[test]
    fn classify_covers_the_three_classes() {
        let p4 = compact(1.0, 4);
        let roots = Divisor::roots_of_unity(4);
        assert_eq!(classify_divisor(&roots, &p4).unwrap(), StabilityClass::Stable);

        let p2 = compact(1.0, 2);
        let poles = Divisor::new(vec![
            DivisorEntry { point: P1Point::finite(0.0, 0.0), multiplicity: 1 },
            DivisorEntry { point: P1Point::Infinity, multiplicity: 1 },
        ])
        .unwrap();
        assert_eq!(
            classify_divisor(&poles, &p2).unwrap(),
            StabilityClass::StrictlyPolystable
        );

        let p3 = compact(1.0, 3);
        let unstable = Divisor::new(vec![
            DivisorEntry { point: P1Point::finite(0.0, 0.0), multiplicity: 2 },
            DivisorEntry { point: P1Point::finite(1.0, 0.0), multiplicity: 1 },
        ])
        .unwrap();
        assert_eq!(classify_divisor(&unstable, &p3).unwrap(), StabilityClass::Unstable);
    }

    #[test]
    fn classify_requires_matching_degree() {
        let p = compact(1.0, 3);
        let d = Divisor::roots_of_unity(4);
        assert!(classify_divisor(&d, &p).is_err());
    }

    #[test]
    fn divisor_rejects_duplicates_and_zero_multiplicity() {
        let dup = Divisor::new(vec![
            DivisorEntry { point: P1Point::finite(1.0, 0.0), multiplicity: 1 },
            DivisorEntry { point: P1Point::finite(1.0, 0.0), multiplicity: 1 },
        ]);
        assert!(dup.is_err());
        let zero = Divisor::new(vec![DivisorEntry {
            point: P1Point::finite(1.0, 0.0),
            multiplicity: 0,
        }]);
        assert!(zero.is_err());
    }

    #[test]
    fn admissible_lower_bound_values() {
        let pi = std::f64::consts::PI;
        assert!((admissible_lower_bound(&compact(1.0, 2)).unwrap() - 8.0 * pi).abs() < 1e-14);
        assert!((admissible_lower_bound(&compact(1.0, 4)).unwrap() - 16.0 * pi).abs() < 1e-14);
        assert!((admissible_lower_bound(&compact(2.0, 2)).unwrap() - 4.0 * pi).abs() < 1e-14);
        assert!(admissible_lower_bound(&ModelParams::planar(0.5, 1).unwrap()).is_err());
    }

    #[test]
    fn lambda_of_b_frozen_values() {
        let p = compact(1.0, 2);
        assert!((lambda_of_b(0.5, &p).unwrap() - 0.165352149445209).abs() < 1e-14);
        assert!((lambda_of_b(1.0, &p).unwrap() - 0.127323190021791).abs() < 1e-14);
        assert!((lambda_of_b(2.0, &p).unwrap() - 0.059102475796572).abs() < 1e-14);
        // b -> 0 limit is the critical value 1/(2e).
        let crit = p.lambda_critical().unwrap();
        assert!((crit - 0.183939720585721).abs() < 1e-14);
        assert!((lambda_of_b(1e-9, &p).unwrap() - crit).abs() < 1e-8);
        assert!(lambda_of_b(1.0, &compact(1.0, 3)).is_err());
    }

    #[test]
    fn cone_angles_fractions_and_failures() {
        let p4 = compact(1.0, 4);
        let angles = cone_angles(&Divisor::roots_of_unity(4), &p4).unwrap();
        assert_eq!(angles.len(), 4);
        for a in &angles {
            assert_eq!((a.numerator, a.denominator), (2, 4));
            assert_eq!(a.value, 0.5);
        }

        let p3 = compact(1.0, 3);
        let angles = cone_angles(&Divisor::roots_of_unity(3), &p3).unwrap();
        for a in &angles {
            assert_eq!((a.numerator, a.denominator), (1, 3));
        }

        // Strictly polystable points have degenerate angle zero: rejected.
        let p2 = compact(1.0, 2);
        let poles = Divisor::new(vec![
            DivisorEntry { point: P1Point::finite(0.0, 0.0), multiplicity: 1 },
            DivisorEntry { point: P1Point::Infinity, multiplicity: 1 },
        ])
        .unwrap();
        assert!(matches!(cone_angles(&poles, &p2), Err(Error::Stability(_))));
    }

    #[test]
    fn divisor_serde_round_trip() {
        let d = Divisor::new(vec![
            DivisorEntry { point: P1Point::finite(1.0, -2.0), multiplicity: 1 },
            DivisorEntry { point: P1Point::Infinity, multiplicity: 3 },
        ])
        .unwrap();
        let text = serde_json::to_string(&d).unwrap();
        let back: Divisor = serde_json::from_str(&text).unwrap();
        assert_eq!(d, back);
        assert!(text.contains("\"infinity\":true"));
    }
}
