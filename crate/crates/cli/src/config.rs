//! Run configuration: a TOML document, every key optional.
//!
//! ```toml
//! preset = "fig2c"            # fig1 | fig2a | fig2b | fig2c | fig2d
//! mode = "nonmarkovian"       # or "markovian"
//! policy = "feedback"         # or "zero"
//! ensemble_size = 500
//! output_dir = "out"
//! initial_state = [0.3535533905932738, 0.3535533905932738, 0.8660254037844386]
//!
//! [reservoir]
//! omega0 = 1.0
//! gamma0 = 1.0
//! omega_c = 0.5               # or r = omega_c / omega0
//! kBT = 1.0
//! alpha_sq = 0.01
//! M = 0.05
//! eta = 1.0
//!
//! [integrator]
//! scheme = "euler_maruyama"
//! dt = 0.01
//! t_max = 15.0
//! clamp_policy = "project_to_ball"   # or "reject_step"
//! seed = 1729
//!
//! [control]
//! theta = 1.0
//! relaxation = 0.3
//! tol = 1e-6
//! max_iter = 500
//! dt = 0.01
//!
//! [coefficients]
//! dt = 0.01
//! abs_tol = 1e-10
//! rel_tol = 1e-12
//! check_refinement = true
//!
//! [fig1]
//! kbt_values = [0.0, 1.0, 2.0, 5.0, 10.0]
//! t_max = 20.0
//! ```
//!
//! The control horizon is the integrator's `t_max`; the coefficient table
//! covers the longest horizon any command needs.

use std::path::PathBuf;

use nmq_core::quadrature::Tolerance;
use nmq_core::{
    BlochState, ClampPolicy, IntegratorConfig, ModeFlag, OCConfig, ReservoirParams, TableConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 1729;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config field `{field}`: {detail}")]
    Invalid { field: String, detail: String },
}

fn invalid(field: &str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig1,
    Fig2a,
    Fig2b,
    Fig2c,
    Fig2d,
}

impl Preset {
    pub const PANELS: [Preset; 4] = [Preset::Fig2a, Preset::Fig2b, Preset::Fig2c, Preset::Fig2d];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2a => "fig2a",
            Preset::Fig2b => "fig2b",
            Preset::Fig2c => "fig2c",
            Preset::Fig2d => "fig2d",
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        [
            Preset::Fig1,
            Preset::Fig2a,
            Preset::Fig2b,
            Preset::Fig2c,
            Preset::Fig2d,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }

    /// (r, kBT) of a comparison panel.
    fn panel(self) -> Option<(f64, f64)> {
        match self {
            Preset::Fig1 => None,
            Preset::Fig2a => Some((0.5, 1.0)),
            Preset::Fig2b => Some((3.0, 1.0)),
            Preset::Fig2c => Some((0.5, 10.0)),
            Preset::Fig2d => Some((3.0, 10.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    NonMarkovian,
    Markovian,
}

impl From<Mode> for ModeFlag {
    fn from(m: Mode) -> ModeFlag {
        match m {
            Mode::NonMarkovian => ModeFlag::NonMarkovian,
            Mode::Markovian => ModeFlag::Markovian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Feedback,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    #[default]
    ProjectToBall,
    RejectStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirBlock {
    pub omega0: f64,
    pub gamma0: f64,
    pub omega_c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "kBT")]
    pub kbt: f64,
    pub alpha_sq: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub eta: f64,
}

impl Default for ReservoirBlock {
    fn default() -> Self {
        let p = ReservoirParams::default();
        ReservoirBlock {
            omega0: p.omega0,
            gamma0: p.gamma0,
            omega_c: p.omega_c,
            r: None,
            kbt: p.kbt,
            alpha_sq: p.alpha_sq,
            m: p.measurement_strength,
            eta: p.efficiency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorBlock {
    pub scheme: SchemeName,
    pub dt: f64,
    pub t_max: f64,
    pub clamp_policy: Clamp,
    pub seed: u64,
}

impl Default for IntegratorBlock {
    fn default() -> Self {
        IntegratorBlock {
            scheme: SchemeName::EulerMaruyama,
            dt: 0.01,
            t_max: 15.0,
            clamp_policy: Clamp::ProjectToBall,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlBlock {
    pub theta: f64,
    pub relaxation: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub dt: f64,
}

impl Default for ControlBlock {
    fn default() -> Self {
        let oc = OCConfig::default();
        ControlBlock {
            theta: oc.theta,
            relaxation: oc.relaxation,
            tol: oc.tol,
            max_iter: oc.max_iter,
            dt: oc.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientBlock {
    pub dt: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub check_refinement: bool,
}

impl Default for CoefficientBlock {
    fn default() -> Self {
        let tol = Tolerance::default();
        CoefficientBlock {
            dt: 0.01,
            abs_tol: tol.abs,
            rel_tol: tol.rel,
            check_refinement: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Block {
    pub kbt_values: Vec<f64>,
    pub t_max: f64,
}

impl Default for Fig1Block {
    fn default() -> Self {
        Fig1Block {
            kbt_values: vec![0.0, 1.0, 2.0, 5.0, 10.0],
            t_max: 20.0,
        }
    }
}

/// The fully resolved configuration. Serialising it gives a document that
/// parses back to the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub mode: Mode,
    pub policy: Policy,
    pub ensemble_size: usize,
    pub output_dir: PathBuf,
    pub initial_state: [f64; 3],
    pub reservoir: ReservoirBlock,
    pub integrator: IntegratorBlock,
    pub control: ControlBlock,
    pub coefficients: CoefficientBlock,
    pub fig1: Fig1Block,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            mode: Mode::NonMarkovian,
            policy: Policy::Feedback,
            ensemble_size: 500,
            output_dir: PathBuf::from("out"),
            initial_state: BlochState::reference_initial().to_array(),
            reservoir: ReservoirBlock::default(),
            integrator: IntegratorBlock::default(),
            control: ControlBlock::default(),
            coefficients: CoefficientBlock::default(),
            fig1: Fig1Block::default(),
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parse, apply the preset, and validate.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

impl RunConfig {
    /// Fold `r` into `omega_c`, apply the preset, then validate.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        if let Some(r) = self.reservoir.r.take() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("reservoir.r", format!("must be > 0, got {r}")));
            }
            self.reservoir.omega_c = r * self.reservoir.omega0;
        }
        if let Some(preset) = self.preset {
            self.apply_preset(preset);
        }
        self.validate()
    }

    /// Overwrite the parameter blocks with a preset's values.
    pub fn apply_preset(&mut self, preset: Preset) {
        self.preset = Some(preset);
        let res = &mut self.reservoir;
        res.omega0 = 1.0;
        res.gamma0 = 1.0;
        res.alpha_sq = 0.01;
        res.eta = 1.0;
        self.initial_state = BlochState::reference_initial().to_array();
        match preset.panel() {
            None => {
                res.omega_c = 0.1;
                res.m = 0.0;
                self.fig1 = Fig1Block::default();
            }
            Some((r, kbt)) => {
                res.omega_c = r;
                res.kbt = kbt;
                res.m = 0.05;
                self.control.theta = 1.0;
                self.integrator.t_max = 15.0;
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reservoir_params()
            .validate()
            .map_err(|e| invalid("reservoir", e.to_string()))?;
        let s0 = self.initial_state();
        if !s0.is_finite() || s0.norm_sq() > 1.0 + 1e-12 {
            return Err(invalid(
                "initial_state",
                format!("x0²+y0²+z0² = {} exceeds 1", s0.norm_sq()),
            ));
        }
        if self.ensemble_size == 0 {
            return Err(invalid("ensemble_size", "must be at least 1"));
        }
        self.integrator_config()
            .validate()
            .map_err(|e| invalid("integrator", e.to_string()))?;
        self.oc_config()
            .validate()
            .map_err(|e| invalid("control", e.to_string()))?;
        let c = &self.coefficients;
        if !(c.dt > 0.0 && c.dt.is_finite()) {
            return Err(invalid(
                "coefficients.dt",
                format!("must be > 0, got {}", c.dt),
            ));
        }
        if !(c.abs_tol >= 0.0 && c.rel_tol >= 0.0 && c.abs_tol + c.rel_tol > 0.0) {
            return Err(invalid(
                "coefficients",
                "tolerances must be >= 0 and not both zero",
            ));
        }
        for (field, dt) in [
            ("integrator.dt", self.integrator.dt),
            ("control.dt", self.control.dt),
        ] {
            if !commensurate(dt, c.dt) {
                return Err(invalid(
                    field,
                    format!(
                        "step {dt} must be a multiple or divisor of coefficients.dt = {}",
                        c.dt
                    ),
                ));
            }
        }
        if self.fig1.kbt_values.is_empty()
            || self
                .fig1
                .kbt_values
                .iter()
                .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(invalid(
                "fig1.kbt_values",
                "need a non-empty list of finite values >= 0",
            ));
        }
        if !(self.fig1.t_max >= c.dt && self.fig1.t_max.is_finite()) {
            return Err(invalid("fig1.t_max", "must be at least coefficients.dt"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> BlochState {
        BlochState::from_array(self.initial_state)
    }

    pub fn reservoir_params(&self) -> ReservoirParams {
        let r = &self.reservoir;
        ReservoirParams {
            omega0: r.omega0,
            gamma0: r.gamma0,
            omega_c: r.omega_c,
            kbt: r.kbt,
            alpha_sq: r.alpha_sq,
            measurement_strength: r.m,
            efficiency: r.eta,
        }
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let i = &self.integrator;
        IntegratorConfig {
            clamp_policy: match i.clamp_policy {
                Clamp::ProjectToBall => ClampPolicy::ProjectToBall,
                Clamp::RejectStep => ClampPolicy::RejectStep,
            },
            ..IntegratorConfig::new(i.dt, i.t_max, i.seed)
        }
    }

    pub fn oc_config(&self) -> OCConfig {
        let c = &self.control;
        OCConfig {
            theta: c.theta,
            relaxation: c.relaxation,
            tol: c.tol,
            max_iter: c.max_iter,
            dt: c.dt,
            t_max: self.integrator.t_max,
        }
    }

    pub fn table_config(&self, t_max: f64) -> TableConfig {
        let c = &self.coefficients;
        TableConfig {
            quadrature: Tolerance {
                abs: c.abs_tol,
                rel: c.rel_tol,
                ..Tolerance::default()
            },
            check_refinement: c.check_refinement,
            ..TableConfig::new(t_max, c.dt)
        }
    }

    pub fn mode_flag(&self) -> ModeFlag {
        self.mode.into()
    }

    /// TOML rendering of the resolved configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configuration always serialises")
    }
}

fn commensurate(a: f64, b: f64) -> bool {
    let integral = |x: f64| x.round() >= 1.0 && (x - x.round()).abs() <= 1e-9 * x.max(1.0);
    integral(a / b) || integral(b / a)
}
