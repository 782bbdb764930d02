//! One-dimensional maps: the classical Lorenz-type map, cusp maps and their
//! combination on `[-1, 1]`, perturbed families, the `W` conjugation and
//! maps fitted from simulated returns.

mod closeness;
mod conjugacy;
mod cusp;
mod empirical;
mod quotient_fit;

pub use closeness::{closeness_report, holder_fit, ClosenessReport};
pub use conjugacy::{conjugation_limits, WConjugacy};
pub use cusp::{BlendPlacement, CombinedTbar, CuspCoefficients, CuspMap};
pub use empirical::{EmpiricalBranch, EmpiricalMap};
pub use quotient_fit::{fit_empirical_quotient, leaf_diameters, QuotientFit, QuotientFitOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait IntervalMap: Send + Sync {
    fn domain(&self) -> (f64, f64);
    /// Points strictly inside the domain that separate the branches.
    fn breakpoints(&self) -> Vec<f64>;
    /// `(T(u), T'(u))`.
    fn eval(&self, u: f64) -> Result<(f64, f64)>;

    fn value(&self, u: f64) -> Result<f64> {
        Ok(self.eval(u)?.0)
    }

    fn branches(&self) -> Vec<(f64, f64)> {
        let (lo, hi) = self.domain();
        let mut cuts = vec![lo];
        cuts.extend(self.breakpoints());
        cuts.push(hi);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

pub(crate) fn check_domain(u: f64, lo: f64, hi: f64) -> Result<()> {
    if !(u >= lo && u <= hi) {
        return Err(Error::Domain { x: u, lo, hi });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMap {
    Identity,
    /// `2x mod 1`
    Doubling,
    Tent,
    /// `4x(1 - x)`
    Logistic,
}

impl IntervalMap for ReferenceMap {
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            ReferenceMap::Identity => vec![],
            _ => vec![0.5],
        }
    }

    fn eval(&self, u: f64) -> Result<(f64, f64)> {
        check_domain(u, 0.0, 1.0)?;
        Ok(match self {
            ReferenceMap::Identity => (u, 1.0),
            ReferenceMap::Doubling => {
                if u == 0.5 {
                    return Err(Error::CriticalPoint(u));
                }
                if u < 0.5 {
                    (2.0 * u, 2.0)
                } else {
                    (2.0 * u - 1.0, 2.0)
                }
            }
            ReferenceMap::Tent => {
                if u == 0.5 {
                    return Err(Error::CriticalPoint(u));
                }
                if u < 0.5 {
                    (2.0 * u, 2.0)
                } else {
                    (2.0 - 2.0 * u, -2.0)
                }
            }
            ReferenceMap::Logistic => (4.0 * u * (1.0 - u), 4.0 - 8.0 * u),
        })
    }
}

/// `T(u) = -1/2 + sum_k g_k u^(alpha+k)/(alpha+k)` for `u > 0` and the odd
/// reflection for `u < 0`, so that `T'(u) = |u|^(alpha-1) G(|u|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalLorenz {
    pub alpha: f64,
    pub g: Vec<f64>,
}

impl ClassicalLorenz {
    pub fn new(alpha: f64, g: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let g = if g.is_empty() { vec![alpha * 2f64.powf(alpha)] } else { g };
        let m = ClassicalLorenz { alpha, g };
        for k in 0..=200 {
            let u = 0.5 * k as f64 / 200.0;
            if m.profile(u) <= 0.0 {
                return Err(Error::InvalidParams("G must be positive on [0, 1/2]".into()));
            }
        }
        Ok(m)
    }

    /// Whether `T(+-1/2)` stays in `[-1/2, 1/2]`; the default profile is the largest constant that does.
    pub fn maps_into_domain(&self) -> bool {
        self.rise(0.5) <= 1.0 + 1e-12
    }

    fn profile(&self, s: f64) -> f64 {
        self.g.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    fn rise(&self, s: f64) -> f64 {
        self.g.iter().enumerate().map(|(k, gk)| gk * s.powf(self.alpha + k as f64) / (self.alpha + k as f64)).sum()
    }
}

impl IntervalMap for ClassicalLorenz {
    fn domain(&self) -> (f64, f64) {
        (-0.5, 0.5)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn eval(&self, u: f64) -> Result<(f64, f64)> {
        check_domain(u, -0.5, 0.5)?;
        if u == 0.0 {
            return Err(Error::CriticalPoint(0.0));
        }
        let s = u.abs();
        let d = s.powf(self.alpha - 1.0) * self.profile(s);
        let v = if u > 0.0 { -0.5 + self.rise(s) } else { 0.5 - self.rise(s) };
        Ok((v, d))
    }
}

/// Additive noise on the image, reflected back at the domain endpoints.
pub struct VerticalAdditive {
    pub base: Box<dyn IntervalMap>,
    pub eta: f64,
}

impl IntervalMap for VerticalAdditive {
    fn domain(&self) -> (f64, f64) {
        self.base.domain()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints()
    }

    fn eval(&self, u: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.base.domain();
        let (v, d) = self.base.eval(u)?;
        let w = v + self.eta;
        Ok(if w > hi {
            (2.0 * hi - w, -d)
        } else if w < lo {
            (2.0 * lo - w, -d)
        } else {
            (w, d)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntervalMapSpec {
    Reference {
        map: ReferenceMap,
    },
    ClassicalLorenz {
        alpha: f64,
        /// Coefficients of the positive profile `G` in powers of `|u|`; empty for `alpha 2^alpha`.
        #[serde(default)]
        g: Vec<f64>,
    },
    CuspPiece {
        coefficients: CuspCoefficients,
    },
    CombinedTbar {
        piece1: CuspCoefficients,
        piece2: CuspCoefficients,
    },
    Conjugated {
        base: Box<IntervalMapSpec>,
        gamma_bar: f64,
        beta_bar: f64,
    },
    Empirical {
        map: EmpiricalMap,
    },
    VerticalAdditive {
        base: Box<IntervalMapSpec>,
        eta: f64,
    },
}

impl Default for IntervalMapSpec {
    fn default() -> Self {
        IntervalMapSpec::CuspPiece { coefficients: CuspCoefficients::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationFamily {
    VerticalAdditive,
    CoefficientModulated,
}

impl IntervalMapSpec {
    pub fn build(&self) -> Result<Box<dyn IntervalMap>> {
        Ok(match self {
            IntervalMapSpec::Reference { map } => Box::new(*map),
            IntervalMapSpec::ClassicalLorenz { alpha, g } => Box::new(ClassicalLorenz::new(*alpha, g.clone())?),
            IntervalMapSpec::CuspPiece { coefficients } => Box::new(CuspMap::new(*coefficients)?),
            IntervalMapSpec::CombinedTbar { piece1, piece2 } => Box::new(CombinedTbar::new(*piece1, *piece2)?),
            IntervalMapSpec::Conjugated { base, gamma_bar, beta_bar } => {
                if let Some(c) = base.cusp_coefficients() {
                    conjugation_limits(&c).check(*gamma_bar, *beta_bar)?;
                }
                Box::new(WConjugacy::new(base.build()?, *gamma_bar, *beta_bar)?)
            }
            IntervalMapSpec::Empirical { map } => Box::new(map.clone().validated()?),
            IntervalMapSpec::VerticalAdditive { base, eta } => {
                Box::new(VerticalAdditive { base: base.build()?, eta: *eta })
            }
        })
    }

    /// Coefficients of the underlying cusp piece, if any.
    pub fn cusp_coefficients(&self) -> Option<CuspCoefficients> {
        match self {
            IntervalMapSpec::CuspPiece { coefficients } => Some(*coefficients),
            IntervalMapSpec::Conjugated { base, .. } | IntervalMapSpec::VerticalAdditive { base, .. } => {
                base.cusp_coefficients()
            }
            _ => None,
        }
    }

    /// The default cusp piece conjugated with the default admissible `(gamma_bar, beta_bar)`.
    pub fn default_conjugated() -> Self {
        let c = CuspCoefficients::default();
        let (gamma_bar, beta_bar) = conjugation_limits(&c).default_choice();
        IntervalMapSpec::Conjugated {
            base: Box::new(IntervalMapSpec::CuspPiece { coefficients: c }),
            gamma_bar,
            beta_bar,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Convenience for [`IntervalMapSpec::build`] followed by [`IntervalMap::eval`].
pub fn eval_map(spec: &IntervalMapSpec, u: f64) -> Result<(f64, f64)> {
    spec.build()?.eval(u)
}

pub fn make_perturbed_family(base: &IntervalMapSpec, eta: f64, family: PerturbationFamily) -> Result<IntervalMapSpec> {
    if !eta.is_finite() || eta.abs() > 1.0 {
        return Err(Error::InvalidPerturbation(format!("|eta| must be <= 1, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(base.clone());
    }
    let spec = match family {
        // reflection folds the image near the endpoints, so no monotonicity check
        PerturbationFamily::VerticalAdditive => {
            return Ok(IntervalMapSpec::VerticalAdditive { base: Box::new(base.clone()), eta });
        }
        PerturbationFamily::CoefficientModulated => modulate(base, eta)?,
    };
    let built = spec.build().map_err(|e| Error::InvalidPerturbation(e.to_string()))?;
    check_monotone(built.as_ref(), 2000).map_err(|e| Error::InvalidPerturbation(e.to_string()))?;
    Ok(spec)
}

fn modulate(base: &IntervalMapSpec, eta: f64) -> Result<IntervalMapSpec> {
    Ok(match base {
        IntervalMapSpec::CuspPiece { coefficients } => {
            IntervalMapSpec::CuspPiece { coefficients: coefficients.modulated(eta) }
        }
        IntervalMapSpec::CombinedTbar { piece1, piece2 } => {
            IntervalMapSpec::CombinedTbar { piece1: piece1.modulated(eta), piece2: piece2.modulated(eta) }
        }
        IntervalMapSpec::Conjugated { base, gamma_bar, beta_bar } => IntervalMapSpec::Conjugated {
            base: Box::new(modulate(base, eta)?),
            gamma_bar: *gamma_bar,
            beta_bar: *beta_bar,
        },
        other => {
            return Err(Error::InvalidPerturbation(format!(
                "coefficient modulation needs a cusp-based map, got {other:?}"
            )))
        }
    })
}

/// Strict monotonicity of every branch on `n` interior points per branch.
pub fn check_monotone(map: &dyn IntervalMap, n: usize) -> Result<()> {
    for (a, b) in map.branches() {
        let mut prev: Option<f64> = None;
        let mut sign = 0.0;
        for k in 0..n {
            let u = a + (b - a) * (k as f64 + 0.5) / n as f64;
            let v = map.value(u)?;
            if let Some(p) = prev {
                let s = (v - p).signum();
                if v == p || (sign != 0.0 && s != sign) {
                    return Err(Error::InvalidParams(format!("branch ({a}, {b}) is not strictly monotone near {u}")));
                }
                sign = s;
            }
            prev = Some(v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn classical_lorenz_examples() {
        let m = ClassicalLorenz::new(0.5, vec![1.0]).unwrap();
        assert!((m.eval(0.25).unwrap().1 - 2.0).abs() < 1e-14);
        assert!(!m.maps_into_domain());
        let d = ClassicalLorenz::new(0.5, vec![]).unwrap();
        assert!(d.maps_into_domain());
        assert!((d.eval(1e-14).unwrap().0 + 0.5).abs() < 1e-6);
        assert!((d.eval(-1e-14).unwrap().0 - 0.5).abs() < 1e-6);
        assert!(d.eval(1e-10).unwrap().1 > 1e4);
        assert!((d.eval(0.5).unwrap().0 - 0.5).abs() < 1e-12);
        assert!(matches!(d.eval(0.0), Err(Error::CriticalPoint(_))));
        assert!(matches!(d.eval(0.7), Err(Error::Domain { .. })));
        check_monotone(&d, 1000).unwrap();
        assert!(ClassicalLorenz::new(1.2, vec![]).is_err());
    }

    #[test]
    fn reference_maps() {
        assert_eq!(ReferenceMap::Doubling.eval(0.7).unwrap().0, 2.0 * 0.7 - 1.0);
        assert_eq!(ReferenceMap::Tent.eval(0.75).unwrap(), (0.5, -2.0));
        assert!(ReferenceMap::Tent.eval(0.5).is_err());
        assert_eq!(ReferenceMap::Logistic.eval(0.5).unwrap().0, 1.0);
    }

    #[test]
    fn vertical_additive_reflects() {
        let m = VerticalAdditive { base: Box::new(ReferenceMap::Identity), eta: 0.1 };
        assert!((m.eval(0.5).unwrap().0 - 0.6).abs() < 1e-15);
        let (v, d) = m.eval(0.95).unwrap();
        assert!((v - 0.95).abs() < 1e-12 && d == -1.0);
    }

    #[test]
    fn spec_json_round_trip() {
        let specs = vec![
            IntervalMapSpec::default(),
            IntervalMapSpec::default_conjugated(),
            IntervalMapSpec::ClassicalLorenz { alpha: 0.4, g: vec![] },
            IntervalMapSpec::VerticalAdditive { base: Box::new(IntervalMapSpec::default()), eta: 0.01 },
        ];
        for s in specs {
            assert_eq!(IntervalMapSpec::from_json(&s.to_json().unwrap()).unwrap(), s);
        }
        assert!(IntervalMapSpec::from_json(r#"{"kind":"reference","map":"tent","extra":1}"#).is_err());
    }

    #[test]
    fn perturbation_identity_and_shift() {
        let base = IntervalMapSpec::default();
        for fam in [PerturbationFamily::VerticalAdditive, PerturbationFamily::CoefficientModulated] {
            assert_eq!(make_perturbed_family(&base, 0.0, fam).unwrap(), base);
        }
        let p = make_perturbed_family(&base, 0.02, PerturbationFamily::VerticalAdditive).unwrap();
        let (b, q) = (base.build().unwrap(), p.build().unwrap());
        for u in [0.1, 0.3, 0.8] {
            assert!((q.value(u).unwrap() - b.value(u).unwrap() - 0.02).abs() < 1e-14);
        }
        let err = make_perturbed_family(
            &IntervalMapSpec::Reference { map: ReferenceMap::Tent },
            0.01,
            PerturbationFamily::CoefficientModulated,
        );
        assert!(matches!(err, Err(Error::InvalidPerturbation(_))));
        let big = make_perturbed_family(&base, -0.9, PerturbationFamily::CoefficientModulated);
        assert!(matches!(big, Err(Error::InvalidPerturbation(_))));
    }

    proptest! {
        #[test]
        fn vertical_density_integrates_to_one(eps in 0.01..0.2f64, y in 0.0..1.0f64) {
            // uniform noise on B_eps(y) with density 1/(2 eps)
            let n = 2000;
            let h = 2.0 * eps / n as f64;
            let mass: f64 = (0..n).map(|k| {
                let z = y - eps + (k as f64 + 0.5) * h;
                if (z - y).abs() <= eps { h / (2.0 * eps) } else { 0.0 }
            }).sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
        }

        #[test]
        fn modulated_cusp_stays_monotone(eta in -0.01..0.01f64) {
            let p = make_perturbed_family(&IntervalMapSpec::default(), eta, PerturbationFamily::CoefficientModulated).unwrap();
            check_monotone(p.build().unwrap().as_ref(), 3000).unwrap();
        }
    }
}
