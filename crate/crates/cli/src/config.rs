//! Experiment configuration: one TOML file per experiment, `key = value`
//! pairs grouped under section headers. Every field has a default, so an
//! empty file describes the worked example at `λ = k = 40`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub initial: InitialConfig,
    pub gains: GainsConfig,
    pub integrator: IntegratorConfig,
    pub thresholds: ThresholdConfig,
    pub diagnostics: DiagnosticsConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Only `"van_der_pol"` is built in.
    pub model: String,
    pub omega: f64,
    pub sigma: f64,
    pub mu: f64,
    /// Multiplier of the `e`-driven exosystem and parameter couplings.
    pub coupling: f64,
    /// Parameter box for `(ω, σ, μ)`.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            model: "van_der_pol".into(),
            omega: 2.0,
            sigma: 1.0,
            mu: 1.5,
            coupling: 0.0,
            lower: vec![0.5, 0.2, 0.5],
            upper: vec![3.0, 2.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Controller state from the seeds below (zero by default).
    Seeded,
    /// On the steady-state graph: `e = 0`, `ξ = τ(w, z)`, `θ̂ = θ(ϱ)`,
    /// `X = σ(w, z)`, after a zero-dynamics pre-roll from `(w, z)`.
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub start: StartMode,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub e: f64,
    /// Compact set the plant initial state is drawn from.
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub e_max: f64,
    pub xi: Option<Vec<f64>>,
    pub theta_hat: Option<Vec<f64>>,
    /// Filter state, row-major `(d-1)×q`.
    pub x: Option<Vec<f64>>,
    /// Zero-dynamics pre-roll for `start = "invariant"`.
    pub pre_roll: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            start: StartMode::Seeded,
            w: vec![2.0, 0.0],
            z: vec![0.5, 0.0],
            e: 0.5,
            z_lower: vec![-3.0, -3.0],
            z_upper: vec![3.0, 3.0],
            e_max: 1.0,
            xi: None,
            theta_hat: None,
            x: None,
            pre_roll: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsConfig {
    /// Distinct negative roots; their count is `d - 1`.
    pub roots: Vec<f64>,
    pub lambda: f64,
    pub k: f64,
    /// Dead-zone amplitude; derived from the parameter box when absent.
    pub ell: Option<f64>,
    /// Clamp radius; derived from the steady state when absent.
    pub clamp_radius: Option<f64>,
    pub clamp_margin: f64,
    pub clamp_blend: f64,
    pub regressor_scale: Option<Vec<f64>>,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            roots: vec![-1.0, -2.0, -3.0],
            lambda: 40.0,
            k: 40.0,
            ell: None,
            clamp_radius: None,
            clamp_margin: 1.25,
            clamp_blend: 1.0,
            regressor_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub h: f64,
    pub horizon: f64,
    /// Initial-transient window; state norms after it are compared against
    /// their maxima within it.
    pub transient: f64,
    /// Steps between rows of the trajectory CSV.
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            h: 1e-3,
            horizon: 100.0,
            transient: 10.0,
            record_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    /// Bound on `|e|` over the regulation window.
    pub regulation_tol: f64,
    /// Trailing fraction of the horizon the regulation bound applies to.
    pub regulation_window: f64,
    pub settling_eps: f64,
    /// Allowed growth of each state-block norm over its transient maximum.
    pub bound_factor: f64,
    /// Allowed per-step increase of `V` after the transient.
    pub lyapunov_tol: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            regulation_tol: 1e-2,
            regulation_window: 0.2,
            settling_eps: 1e-2,
            bound_factor: 10.0,
            lyapunov_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Companion run with `e ≡ 0` to evaluate `V`.
    pub lyapunov: bool,
    /// Gram matrix of the regressor along the steady state.
    pub pe: bool,
    /// Immersion residual on steady-state samples.
    pub immersion: bool,
    pub pe_window: f64,
    pub steady_state_transient: f64,
    pub immersion_samples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            lyapunov: true,
            pe: false,
            immersion: false,
            pe_window: 50.0,
            steady_state_transient: 200.0,
            immersion_samples: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambda: Vec<f64>,
    pub k: Vec<f64>,
    /// Run every gain pair at all corners of the parameter box instead of
    /// the configured `(ω, σ, μ)`.
    pub corners: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda: vec![5.0, 10.0, 20.0, 40.0],
            k: vec![5.0, 10.0, 20.0, 40.0],
            corners: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub plot_script: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            plot_script: true,
        }
    }
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    fn single(msg: impl Into<String>) -> Self {
        Self {
            problems: vec![msg.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration ({} problem", self.problems.len())?;
        if self.problems.len() != 1 {
            write!(f, "s")?;
        }
        write!(f, ")")?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Command-line overrides applied after parsing, before validation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub k: Option<f64>,
    pub h: Option<f64>,
    pub horizon: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::single(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.lambda {
            self.gains.lambda = v;
        }
        if let Some(v) = o.k {
            self.gains.k = v;
        }
        if let Some(v) = o.h {
            self.integrator.h = v;
        }
        if let Some(v) = o.horizon {
            self.integrator.horizon = v;
        }
    }

    /// Internal-model order implied by the roots.
    pub fn model_order(&self) -> usize {
        self.gains.roots.len() + 1
    }

    /// Checks everything and reports all problems at once.
    pub fn validate(&self, sweep: bool) -> Result<(), ConfigError> {
        let mut p = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                p.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        positive("system.omega", self.system.omega);
        positive("system.sigma", self.system.sigma);
        positive("integrator.h", self.integrator.h);
        positive("integrator.horizon", self.integrator.horizon);
        positive("integrator.transient", self.integrator.transient);
        positive("gains.lambda", self.gains.lambda);
        positive("gains.clamp_margin", self.gains.clamp_margin);
        positive("gains.clamp_blend", self.gains.clamp_blend);
        positive("thresholds.regulation_tol", self.thresholds.regulation_tol);
        positive("thresholds.settling_eps", self.thresholds.settling_eps);
        positive("thresholds.bound_factor", self.thresholds.bound_factor);
        positive("initial.e_max", self.initial.e_max);
        if let Some(ell) = self.gains.ell {
            positive("gains.ell", ell);
        }
        if let Some(r) = self.gains.clamp_radius {
            positive("gains.clamp_radius", r);
        }
        if self.initial.start == StartMode::Invariant {
            positive("initial.pre_roll", self.initial.pre_roll);
        }
        if self.diagnostics.pe {
            positive("diagnostics.pe_window", self.diagnostics.pe_window);
        }
        if self.diagnostics.pe || self.diagnostics.immersion {
            positive("diagnostics.steady_state_transient", self.diagnostics.steady_state_transient);
        }

        if self.system.model != "van_der_pol" {
            p.push(format!("system.model: unknown model {:?} (available: \"van_der_pol\")", self.system.model));
        }
        if !self.system.mu.is_finite() || self.system.mu == 0.0 {
            p.push(format!("system.mu must be finite and nonzero, got {}", self.system.mu));
        }
        if !self.system.coupling.is_finite() {
            p.push("system.coupling must be finite".into());
        }
        let box_ok = self.system.lower.len() == 3 && self.system.upper.len() == 3;
        if !box_ok {
            p.push("system.lower and system.upper need 3 entries (omega, sigma, mu)".into());
        } else {
            for i in 0..3 {
                if !(self.system.lower[i] <= self.system.upper[i]) {
                    p.push(format!("system box axis {i}: lower {} exceeds upper {}", self.system.lower[i], self.system.upper[i]));
                }
            }
            let rho = [self.system.omega, self.system.sigma, self.system.mu];
            if !sweep || !self.sweep.corners {
                let inside = (0..3).all(|i| rho[i] >= self.system.lower[i] && rho[i] <= self.system.upper[i]);
                if !inside {
                    p.push(format!("(omega, sigma, mu) = {rho:?} lies outside the parameter box"));
                }
            }
            if self.system.lower[0] <= 0.0 || self.system.lower[1] <= 0.0 {
                p.push("system box: omega and sigma bounds must be positive".into());
            }
            if self.system.lower[2] <= 0.0 && self.system.upper[2] >= 0.0 {
                p.push("system box: mu range must exclude 0".into());
            }
        }

        if self.integrator.horizon.is_finite() && self.integrator.transient.is_finite() && self.integrator.transient >= self.integrator.horizon {
            p.push(format!(
                "integrator.horizon ({}) must exceed integrator.transient ({})",
                self.integrator.horizon, self.integrator.transient
            ));
        }
        if self.integrator.h.is_finite() && self.integrator.horizon.is_finite() && self.integrator.h > self.integrator.horizon {
            p.push("integrator.h exceeds the horizon".into());
        }
        if self.integrator.record_stride == 0 {
            p.push("integrator.record_stride must be at least 1".into());
        }
        let fraction_ok = |v: f64| v > 0.0 && v <= 1.0;
        if !fraction_ok(self.thresholds.regulation_window) {
            p.push(format!(
                "thresholds.regulation_window is a fraction of the horizon in (0, 1], got {}",
                self.thresholds.regulation_window
            ));
        }
        if !(self.thresholds.lyapunov_tol >= 0.0) {
            p.push("thresholds.lyapunov_tol must be non-negative".into());
        }
        if !(self.gains.k >= 0.0 && self.gains.k.is_finite()) {
            p.push(format!("gains.k must be non-negative and finite, got {}", self.gains.k));
        }

        let d = self.model_order();
        if d != 4 {
            p.push(format!("gains.roots: the van_der_pol model needs 3 roots, got {}", d - 1));
        }
        if self.gains.roots.iter().any(|r| !(*r < 0.0)) {
            p.push("gains.roots must all be negative".into());
        }
        let mut sorted = self.gains.roots.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            p.push("gains.roots must be distinct".into());
        }
        if let Some(s) = &self.gains.regressor_scale {
            if s.len() != 5 || s.iter().any(|v| !(*v > 0.0)) {
                p.push("gains.regressor_scale needs 5 positive entries".into());
            }
        }

        let ini = &self.initial;
        if ini.w.len() != 2 {
            p.push(format!("initial.w needs 2 entries, got {}", ini.w.len()));
        }
        if ini.z.len() != 2 || ini.z_lower.len() != 2 || ini.z_upper.len() != 2 {
            p.push("initial.z, initial.z_lower and initial.z_upper need 2 entries each".into());
        } else {
            for i in 0..2 {
                if !(ini.z[i] >= ini.z_lower[i] && ini.z[i] <= ini.z_upper[i]) {
                    p.push(format!("initial.z[{i}] = {} lies outside [{}, {}]", ini.z[i], ini.z_lower[i], ini.z_upper[i]));
                }
            }
        }
        if !(ini.e.abs() <= ini.e_max) {
            p.push(format!("initial.e = {} exceeds initial.e_max = {}", ini.e, ini.e_max));
        }
        let q = 5;
        for (name, v, len) in [("xi", &ini.xi, d), ("theta_hat", &ini.theta_hat, q), ("x", &ini.x, (d.max(1) - 1) * q)] {
            if let Some(v) = v {
                if v.len() != len {
                    p.push(format!("initial.{name} needs {len} entries, got {}", v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    p.push(format!("initial.{name} must be finite"));
                }
            }
        }
        if ini.start == StartMode::Invariant && (ini.xi.is_some() || ini.theta_hat.is_some() || ini.x.is_some()) {
            p.push("initial: controller seeds conflict with start = \"invariant\"".into());
        }

        if sweep {
            if self.sweep.lambda.is_empty() {
                p.push("sweep.lambda grid is empty".into());
            }
            if self.sweep.k.is_empty() {
                p.push("sweep.k grid is empty".into());
            }
            if self.sweep.lambda.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                p.push("sweep.lambda entries must be positive".into());
            }
            if self.sweep.k.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                p.push("sweep.k entries must be non-negative".into());
            }
        }
        if self.output.dir.is_empty() {
            p.push("output.dir must not be empty".into());
        }

        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems: p })
        }
    }
}
