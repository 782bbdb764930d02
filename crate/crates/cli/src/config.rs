use std::path::PathBuf;

use impulse_lorenz::flow_integrator::IntegratorConfig;
use impulse_lorenz::interval_maps::{IntervalMapSpec, PerturbationFamily, QuotientFitOptions};
use impulse_lorenz::noise_driver::{NoiseFamily, NoiseSpec};
use impulse_lorenz::sections::{CalibrationOptions, SectionKind};
use impulse_lorenz::vector_fields::{LorenzParams, Perturbation, PerturbationMode, State3};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    FlowCheck,
    PdmpRun,
    QuotientFit,
    UlamStability,
    Sweep,
    RenewalConsistency,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::FlowCheck => "flow_check",
            Experiment::PdmpRun => "pdmp_run",
            Experiment::QuotientFit => "quotient_fit",
            Experiment::UlamStability => "ulam_stability",
            Experiment::Sweep => "sweep",
            Experiment::RenewalConsistency => "renewal_consistency",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub lorenz: LorenzConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub section: SectionConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default = "IntervalMapSpec::default_conjugated")]
    pub map: IntervalMapSpec,
    #[serde(default)]
    pub flow_check: FlowCheckConfig,
    #[serde(default)]
    pub pdmp: PdmpConfig,
    #[serde(default)]
    pub quotient: QuotientFitOptions,
    #[serde(default)]
    pub ulam: UlamConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub renewal: RenewalConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LorenzConfig {
    pub zeta: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for LorenzConfig {
    fn default() -> Self {
        let p = LorenzParams::default();
        LorenzConfig { zeta: p.zeta, gamma: p.gamma, beta: p.beta }
    }
}

impl LorenzConfig {
    pub fn params(&self) -> LorenzParams {
        LorenzParams { zeta: self.zeta, gamma: self.gamma, beta: self.beta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub mode: PerturbationMode,
    /// The forcing direction `H`.
    pub direction: [f64; 3],
    pub bump_width: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { mode: PerturbationMode::ConstantAdditive, direction: [0.0, 0.0, 1.0], bump_width: 1.0 }
    }
}

impl PerturbationConfig {
    pub fn perturbation(&self) -> Perturbation {
        let d = State3::new(self.direction[0], self.direction[1], self.direction[2]);
        match self.mode {
            PerturbationMode::None => Perturbation::none(),
            PerturbationMode::ConstantAdditive => Perturbation::constant(0.0, d),
            PerturbationMode::SectionLocalized => Perturbation::localized(0.0, d, self.bump_width),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub family: NoiseFamily,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { family: NoiseFamily::UniformSymmetric, epsilon: 0.05, seed: 1 }
    }
}

impl NoiseConfig {
    pub fn spec(&self) -> NoiseSpec {
        NoiseSpec { family: self.family, epsilon: self.epsilon, seed: self.seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SectionConfig {
    pub kind: SectionKind,
    pub census_start: [f64; 3],
    pub transient_returns: usize,
    pub census_returns: usize,
    pub transversal_degree: usize,
}

impl Default for SectionConfig {
    fn default() -> Self {
        let c = CalibrationOptions::default();
        SectionConfig {
            kind: SectionKind::CasimirSurface,
            census_start: [c.start[0], c.start[1], c.start[2]],
            transient_returns: c.transient_returns,
            census_returns: c.census_returns,
            transversal_degree: c.transversal_degree,
        }
    }
}

impl SectionConfig {
    pub fn calibration(&self) -> CalibrationOptions {
        CalibrationOptions {
            start: State3::from(self.census_start),
            transient_returns: self.transient_returns,
            census_returns: self.census_returns,
            transversal_degree: self.transversal_degree,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowCheckConfig {
    pub jacobian_points: usize,
    pub trajectories: usize,
    pub t_max: f64,
}

impl Default for FlowCheckConfig {
    fn default() -> Self {
        FlowCheckConfig { jacobian_points: 100, trajectories: 20, t_max: 20.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdmpConfig {
    pub horizon: f64,
    pub start: [f64; 3],
    pub quadrature_dt: f64,
}

impl Default for PdmpConfig {
    fn default() -> Self {
        PdmpConfig { horizon: 200.0, start: [1.0, 1.0, -18.0], quadrature_dt: 0.01 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UlamConfig {
    pub n_bins: usize,
    pub samples_per_bin: usize,
    pub n_quadrature: usize,
    pub family: PerturbationFamily,
    pub alpha: f64,
    pub eps0: f64,
}

impl Default for UlamConfig {
    fn default() -> Self {
        UlamConfig {
            n_bins: 2048,
            samples_per_bin: 512,
            n_quadrature: 16,
            family: PerturbationFamily::VerticalAdditive,
            alpha: 1.0,
            eps0: 0.125,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub chain_length: usize,
    pub burn_in: usize,
    pub n_bins: usize,
    pub samples_per_bin: usize,
    pub n_quadrature: usize,
    /// Run the section chain as well as the map route.
    pub section_route: bool,
    pub lp_grid_min: f64,
    pub lp_grid_max: f64,
    pub lp_grid_points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            epsilons: vec![0.1, 0.05, 0.02, 0.01],
            chain_length: 10_000,
            burn_in: 100,
            n_bins: 2048,
            samples_per_bin: 512,
            n_quadrature: 16,
            section_route: true,
            lp_grid_min: 1e-3,
            lp_grid_max: 1.0,
            lp_grid_points: 160,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenewalConfig {
    pub horizon: f64,
    pub chain_length: usize,
    pub burn_in: usize,
    pub n_mc: usize,
    pub quadrature_dt: f64,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        RenewalConfig { horizon: 1e5, chain_length: 20_000, burn_in: 100, n_mc: 20_000, quadrature_dt: 0.01 }
    }
}

/// Schema problems, reported with exit status 2.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| SchemaError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let field =
            |name: &str, r: impulse_lorenz::Result<()>| r.map_err(|e| SchemaError(format!("field `{name}`: {e}")));
        if self.schema_version != SCHEMA_VERSION {
            return Err(SchemaError(format!(
                "field `schema_version`: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        field("lorenz", self.lorenz.params().validate())?;
        field("noise", self.noise.spec().validate())?;
        field("integrator", self.integrator.validate())?;
        field("map", self.map.build().map(|_| ()))?;
        field("perturbation", self.perturbation.perturbation().validate())?;
        let s = &self.sweep;
        if s.epsilons.is_empty() || s.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(SchemaError("field `sweep.epsilons`: must be nonempty and strictly decreasing".into()));
        }
        if !(s.lp_grid_min > 0.0 && s.lp_grid_min < s.lp_grid_max && s.lp_grid_points >= 2) {
            return Err(SchemaError("field `sweep.lp_grid_*`: need 0 < min < max and at least 2 points".into()));
        }
        for (name, v) in [("pdmp.horizon", self.pdmp.horizon), ("renewal.horizon", self.renewal.horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SchemaError(format!("field `{name}`: must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn apply_seed_override(&mut self, seed: u64) {
        self.noise.seed = seed;
    }
}
