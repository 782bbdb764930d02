//! Lorenz phase vector field in coordinates centred at the hyperbolic
//! equilibrium `c0 = (0, 0, -(gamma + zeta))`, with additive perturbations.
//!
//! The standard form `x' = zeta (x2 - x1)`, `x2' = gamma x1 - x2 - x1 x3`,
//! `x3' = x1 x2 - beta x3` becomes, under `x3 = y3 + gamma + zeta`,
//!
//! ```text
//! y1' = zeta (y2 - y1)
//! y2' = -y1 y3 - zeta y1 - y2
//! y3' = y1 y2 - beta y3 - beta (gamma + zeta)
//! ```

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sections::SectionSpec;

pub type State3 = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzParams {
    pub zeta: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams { zeta: 10.0, gamma: 28.0, beta: 8.0 / 3.0 }
    }
}

impl LorenzParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("zeta", self.zeta), ("gamma", self.gamma), ("beta", self.beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// The equilibrium `c0` in shifted coordinates.
    pub fn equilibrium(&self) -> State3 {
        State3::new(0.0, 0.0, -(self.gamma + self.zeta))
    }

    /// `min(1, zeta, beta)`, the exponential rate in the Casimir bound.
    pub fn dissipation_rate(&self) -> f64 {
        1f64.min(self.zeta).min(self.beta)
    }

    /// Constant part of the field, `H0 = (0, 0, -beta (zeta + gamma))`.
    pub fn h0(&self) -> State3 {
        State3::new(0.0, 0.0, -self.beta * (self.zeta + self.gamma))
    }

    /// Shifted coordinates to the standard Lorenz coordinates.
    pub fn to_standard(&self, y: &State3) -> State3 {
        State3::new(y[0], y[1], y[2] + self.gamma + self.zeta)
    }

    pub fn from_standard(&self, x: &State3) -> State3 {
        State3::new(x[0], x[1], x[2] - self.gamma - self.zeta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    None,
    ConstantAdditive,
    SectionLocalized,
}

/// Additive forcing `eta * H`, optionally localized near a section by a bump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub mode: PerturbationMode,
    pub eta: f64,
    pub direction: State3,
    pub bump_width: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation::none()
    }
}

impl Perturbation {
    pub fn none() -> Self {
        Perturbation { mode: PerturbationMode::None, eta: 0.0, direction: State3::new(0.0, 0.0, 1.0), bump_width: 1.0 }
    }

    pub fn constant(eta: f64, direction: State3) -> Self {
        Perturbation { mode: PerturbationMode::ConstantAdditive, eta, direction, bump_width: 1.0 }
    }

    pub fn localized(eta: f64, direction: State3, bump_width: f64) -> Self {
        Perturbation { mode: PerturbationMode::SectionLocalized, eta, direction, bump_width }
    }

    /// Same mode and direction with a new noise value.
    pub fn with_eta(&self, eta: f64) -> Self {
        Perturbation { eta, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta.abs() > 1.0 {
            return Err(Error::InvalidParams(format!("|eta| must be <= 1, got {}", self.eta)));
        }
        if (self.direction.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams("direction H must be a unit vector".into()));
        }
        if !(self.bump_width > 0.0) {
            return Err(Error::InvalidParams("bump_width must be positive".into()));
        }
        Ok(())
    }

    /// The constant forcing vector `eta H` (zero for mode None).
    pub fn forcing(&self) -> State3 {
        match self.mode {
            PerturbationMode::None => State3::zeros(),
            _ => self.direction * self.eta,
        }
    }
}

pub trait VectorField: Sync {
    fn eval(&self, y: &State3) -> State3;
}

impl<F: Fn(&State3) -> State3 + Sync> VectorField for F {
    fn eval(&self, y: &State3) -> State3 {
        self(y)
    }
}

#[inline]
pub fn phi0(p: &LorenzParams, y: &State3) -> State3 {
    let (z, g, b) = (p.zeta, p.gamma, p.beta);
    State3::new(z * (y[1] - y[0]), -y[0] * y[2] - z * y[0] - y[1], y[0] * y[1] - b * y[2] - b * (g + z))
}

fn jacobian0(p: &LorenzParams, y: &State3) -> Matrix3<f64> {
    let z = p.zeta;
    Matrix3::new(
        -z,
        z,
        0.0, //
        -y[2] - z,
        -1.0,
        -y[0], //
        y[1],
        y[0],
        -p.beta,
    )
}

/// `(1 - (d/w)^2)^3` on `|d| < w` and its derivative.
fn bump(d: f64, w: f64) -> (f64, f64) {
    let s = d / w;
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - s * s;
    (q * q * q, -6.0 * s / w * q * q)
}

/// The perturbed field `phi_eta` ready for integration.
#[derive(Clone, Copy, Debug)]
pub struct LorenzField<'a> {
    params: LorenzParams,
    forcing: State3,
    localized: Option<(&'a SectionSpec, f64)>,
}

impl<'a> LorenzField<'a> {
    pub fn new(params: LorenzParams, pert: &Perturbation, section: Option<&'a SectionSpec>) -> Result<Self> {
        let localized = match pert.mode {
            PerturbationMode::SectionLocalized => match section {
                Some(s) => Some((s, pert.bump_width)),
                None => return Err(Error::InvalidParams("section-localized forcing needs a section".into())),
            },
            _ => None,
        };
        Ok(LorenzField { params, forcing: pert.forcing(), localized })
    }

    pub fn unperturbed(params: LorenzParams) -> Self {
        LorenzField { params, forcing: State3::zeros(), localized: None }
    }

    pub fn params(&self) -> &LorenzParams {
        &self.params
    }
}

impl VectorField for LorenzField<'_> {
    #[inline]
    fn eval(&self, y: &State3) -> State3 {
        let f = phi0(&self.params, y);
        match self.localized {
            None => f + self.forcing,
            Some((s, w)) => {
                let (d, _) = s.surface_distance(y);
                f + self.forcing * bump(d, w).0
            }
        }
    }
}

fn check_finite(y: &State3) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!("non-finite state {:?}", y.as_slice())))
    }
}

pub fn eval_field(
    params: &LorenzParams,
    pert: &Perturbation,
    y: &State3,
    section: Option<&SectionSpec>,
) -> Result<State3> {
    check_finite(y)?;
    Ok(LorenzField::new(*params, pert, section)?.eval(y))
}

pub fn jacobian(
    params: &LorenzParams,
    pert: &Perturbation,
    y: &State3,
    section: Option<&SectionSpec>,
) -> Result<Matrix3<f64>> {
    check_finite(y)?;
    let j = jacobian0(params, y);
    match pert.mode {
        PerturbationMode::SectionLocalized => {
            let s = section.ok_or_else(|| Error::InvalidParams("section-localized forcing needs a section".into()))?;
            let (d, grad) = s.surface_distance(y);
            let (_, db) = bump(d, pert.bump_width);
            Ok(j + pert.forcing() * (grad * db).transpose())
        }
        _ => Ok(j),
    }
}

/// The Casimir `C(y) = |y|^2`.
pub fn casimir(y: &State3) -> f64 {
    y.norm_squared()
}

/// Upper bound on `C(Phi_eta^t(y))` for constant forcing.
pub fn casimir_bound(params: &LorenzParams, pert: &Perturbation, y: &State3, t: f64) -> Result<f64> {
    if pert.mode == PerturbationMode::SectionLocalized {
        return Err(Error::UnsupportedMode("Casimir bound needs constant forcing".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("t must be >= 0, got {t}")));
    }
    let m = params.dissipation_rate();
    let h = pert.forcing() + params.h0();
    let e = (-m * t).exp();
    Ok(casimir(y) * e + h.norm_squared() / (m * m) * (1.0 + e))
}

/// Asymptotic constant `|H_eta|^2 / m^2` of the Casimir bound.
pub fn casimir_constant(params: &LorenzParams, eta_h: &State3) -> f64 {
    let m = params.dissipation_rate();
    (eta_h + params.h0()).norm_squared() / (m * m)
}
