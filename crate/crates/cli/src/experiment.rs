use std::fs;
use std::path::Path;
use std::time::Instant;

use imreg::analysis::{
    dead_zone_radius, lyapunov_value, pe_check, regressor_samples, residual_stats, sample_omega_limit, sigma_map,
    to_eta_theta, to_transformed, BlockBound, DiagnosticsReport,
};
use imreg::closed_loop::{ClosedLoop, Feedback, Layout};
use imreg::model::{build_example, ExampleOptions, Immersion, ModelError, ParamBox, VanDerPolImmersion, VanDerPolPlant};
use imreg::numerics::{simulate, solve_lyapunov, IntegrationError, Recorder};
use imreg::regulator::{default_ell, dzv, Regulator, RegulatorError, RegulatorGains, RegulatorState};
use imreg::scalar::{dot, norm};
use imreg::Traj;
use log::{debug, info};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, StartMode};
use crate::output::{write_csv, write_plot_script, KeyValues};
use crate::ExitCode;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("regulator: {0}")]
    Regulator(#[from] RegulatorError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config(_) | Self::Model(_) | Self::Regulator(_) => ExitCode::ConfigError,
            Self::Io(_) => ExitCode::IntegrationFailure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    ThresholdFailure,
    IntegrationFailure,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Success => "success",
            Self::ThresholdFailure => "threshold_failure",
            Self::IntegrationFailure => "integration_failure",
        }
    }
}

/// Headline numbers of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub omega: f64,
    pub sigma: f64,
    pub mu: f64,
    pub lambda: f64,
    pub k: f64,
    pub ell: f64,
    pub clamp_radius: f64,
    pub h: f64,
    pub horizon: f64,
    pub status: RunStatus,
    pub failure_time: Option<f64>,
    /// `sup |e|` over the trailing regulation window.
    pub sup_e: f64,
    pub window_start: f64,
    pub max_abs_e: f64,
    /// First time after which `|e| ≤ ε` for the rest of the run.
    pub settling_time: Option<f64>,
    pub theta_tilde_initial: f64,
    pub theta_tilde_final: f64,
    pub theta_tilde_max: f64,
    pub max_state_norm: f64,
    /// Largest ratio of a block's overall norm maximum to its transient maximum.
    pub worst_bound_ratio: f64,
    pub pe_min_eig: Option<f64>,
    pub v_violations: Option<usize>,
    pub bounded: bool,
    pub regulated: bool,
    pub lyapunov_ok: bool,
}

impl RunSummary {
    pub fn exit_code(&self) -> ExitCode {
        match self.status {
            RunStatus::Success => ExitCode::Success,
            RunStatus::ThresholdFailure => ExitCode::ThresholdFailure,
            RunStatus::IntegrationFailure => ExitCode::IntegrationFailure,
        }
    }

    /// Regulation, boundedness and the `e ≡ 0` Lyapunov check together.
    /// The exit code reflects only the first two.
    pub fn meets_all(&self) -> bool {
        self.status == RunStatus::Success && self.lyapunov_ok
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.push("status", self.status.as_str());
        kv.float("omega", self.omega);
        kv.float("sigma", self.sigma);
        kv.float("mu", self.mu);
        kv.float("lambda", self.lambda);
        kv.float("k", self.k);
        kv.float("ell", self.ell);
        kv.float("clamp_radius", self.clamp_radius);
        kv.float("h", self.h);
        kv.float("horizon", self.horizon);
        kv.opt_float("failure_time", self.failure_time);
        kv.float("sup_e", self.sup_e);
        kv.float("window_start", self.window_start);
        kv.float("max_abs_e", self.max_abs_e);
        kv.push("settling_time", self.settling_time.map_or_else(|| "unsettled".into(), crate::output::fmt_f64));
        kv.float("theta_tilde_initial", self.theta_tilde_initial);
        kv.float("theta_tilde_final", self.theta_tilde_final);
        kv.float("theta_tilde_max", self.theta_tilde_max);
        kv.float("max_state_norm", self.max_state_norm);
        kv.float("worst_bound_ratio", self.worst_bound_ratio);
        kv.opt_float("pe_min_eig", self.pe_min_eig);
        kv.push("v_violations", self.v_violations.map_or_else(|| "none".into(), |v| v.to_string()));
        kv.push("bounded", self.bounded.to_string());
        kv.push("regulated", self.regulated.to_string());
        kv.push("lyapunov_ok", self.lyapunov_ok.to_string());
        kv.push("meets_all", self.meets_all().to_string());
        kv
    }
}

/// Everything a run produces besides the files.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub diagnostics: DiagnosticsReport<f64>,
    /// Recorded every `record_stride` steps, with `u` and `theta_tilde*` channels.
    pub trajectory: Traj,
}

/// Plant, immersion, regulator and initial state built from a config.
pub struct Setup {
    pub plant: VanDerPolPlant<f64>,
    pub imm: VanDerPolImmersion<f64>,
    pub regulator: Regulator<f64>,
    pub rho: [f64; 3],
    pub x0: Vec<f64>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, RunError> {
        let sys = &cfg.system;
        let bounds = ParamBox::new(sys.lower.clone(), sys.upper.clone())?;
        let mut opts = ExampleOptions::<f64> {
            bounds: bounds.clone(),
            clamp_radius: cfg.gains.clamp_radius,
            clamp_blend: cfg.gains.clamp_blend,
            clamp_margin: cfg.gains.clamp_margin,
            w0: cfg.initial.w.clone(),
            z0: cfg.initial.z.clone(),
            coupling: sys.coupling,
            ..ExampleOptions::default()
        };
        if let Some(s) = &cfg.gains.regressor_scale {
            opts.regressor_scale.copy_from_slice(s);
        }
        let (plant, imm) = build_example(sys.omega, sys.sigma, sys.mu, &opts)?;
        let ell = match cfg.gains.ell {
            Some(l) => l,
            None => default_ell(&imm, &bounds, 9),
        };
        let gains = RegulatorGains::new(cfg.gains.roots.clone(), cfg.gains.lambda, cfg.gains.k, ell)?;
        let regulator = Regulator::new(imm.dims(), gains)?;
        let rho = [sys.omega, sys.sigma, sys.mu];
        let lay = Layout::new(imm.dims());
        let x0 = match cfg.initial.start {
            StartMode::Seeded => {
                let mut rs = RegulatorState::zeros(imm.dims());
                if let Some(v) = &cfg.initial.xi {
                    rs.xi.copy_from_slice(v);
                }
                if let Some(v) = &cfg.initial.theta_hat {
                    rs.theta_hat.copy_from_slice(v);
                }
                if let Some(v) = &cfg.initial.x {
                    rs.x.as_mut_slice().copy_from_slice(v);
                }
                lay.pack(&rho, &cfg.initial.w, &cfg.initial.z, cfg.initial.e, &rs)
            }
            StartMode::Invariant => invariant_start(cfg, &plant, &imm, &regulator, &rho)?,
        };
        Ok(Self {
            plant,
            imm,
            regulator,
            rho,
            x0,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.imm.dims())
    }
}

/// State on the steady-state graph: the zero dynamics and the filter are
/// pre-rolled together from `(w, z)`, then `ξ = τ`, `θ̂ = θ`, `e = 0`.
fn invariant_start(
    cfg: &ExperimentConfig,
    plant: &VanDerPolPlant<f64>,
    imm: &VanDerPolImmersion<f64>,
    reg: &Regulator<f64>,
    rho: &[f64; 3],
) -> Result<Vec<f64>, RunError> {
    let wz0: Vec<f64> = cfg.initial.w.iter().chain(&cfg.initial.z).copied().collect();
    let run = sigma_map(plant, rho, reg.f(), reg.g(), imm, &wz0, 0.0, cfg.initial.pre_roll, cfg.integrator.h, usize::MAX)
        .map_err(|e| ModelError::Simulation(format!("invariant pre-roll failed at t = {}", e.t)))?;
    let wz = run.wz.last().expect("final point recorded");
    let (w, z) = wz.split_at(2);
    let rs = RegulatorState {
        xi: imm.tau(rho, w, z),
        theta_hat: imm.theta(rho),
        x: run.x.last().expect("final point recorded").clone(),
    };
    Ok(Layout::new(imm.dims()).pack(rho, w, z, 0.0, &rs))
}

const BLOCKS: [&str; 6] = ["w", "z", "e", "xi", "theta_hat", "X"];

/// Per-step metrics of the main run, accumulated without storing states.
struct Streaming {
    lay: Layout,
    window_start: f64,
    transient: f64,
    eps: f64,
    ell: f64,
    dz_radius: f64,
    sup_e: f64,
    max_abs_e: f64,
    settle: Option<f64>,
    block_initial: [f64; 6],
    block_overall: [f64; 6],
    tt_initial: Option<f64>,
    tt_final: f64,
    tt_max: f64,
    max_norm: f64,
    dz_violations: usize,
    dz_c1: Option<f64>,
}

fn nan_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl Streaming {
    fn observe(&mut self, t: f64, x: &[f64], imm: &VanDerPolImmersion<f64>) {
        let lay = self.lay;
        let e = nan_to_inf(x[lay.e()].abs());
        self.max_abs_e = self.max_abs_e.max(e);
        if t >= self.window_start {
            self.sup_e = self.sup_e.max(e);
        }
        if e > self.eps {
            self.settle = None;
        } else if self.settle.is_none() {
            self.settle = Some(t);
        }
        let e_idx = lay.e();
        let ranges = [lay.w(), lay.z(), e_idx..e_idx + 1, lay.xi(), lay.theta_hat(), lay.x()];
        for (i, r) in ranges.into_iter().enumerate() {
            let n = nan_to_inf(norm(&x[r]));
            self.block_overall[i] = self.block_overall[i].max(n);
            if t <= self.transient {
                self.block_initial[i] = self.block_initial[i].max(n);
            }
        }
        self.max_norm = self.max_norm.max(nan_to_inf(norm(x)));

        let theta = imm.theta(&x[lay.rho()]);
        let tt: Vec<f64> = x[lay.theta_hat()].iter().zip(&theta).map(|(a, b)| a - b).collect();
        let ttn = nan_to_inf(norm(&tt));
        self.tt_initial.get_or_insert(ttn);
        self.tt_final = ttn;
        self.tt_max = self.tt_max.max(ttn);
        let arg: Vec<f64> = x[lay.theta_hat()].to_vec();
        let s = dot(&tt, &dzv(&arg, self.ell));
        if s < 0.0 {
            self.dz_violations += 1;
        }
        if ttn >= self.dz_radius {
            let r = 2.0 * s / (ttn * ttn);
            self.dz_c1 = Some(self.dz_c1.map_or(r, |c| c.min(r)));
        }
    }

    fn bounds(&self) -> Vec<BlockBound<f64>> {
        BLOCKS
            .iter()
            .enumerate()
            .map(|(i, name)| BlockBound {
                name: name.to_string(),
                initial_max: self.block_initial[i],
                overall_max: self.block_overall[i],
            })
            .collect()
    }
}

/// Blocks whose norm never exceeds `floor` count as bounded regardless of
/// their transient maximum; otherwise the ratio test applies.
fn bound_ratio(b: &BlockBound<f64>, floor: f64) -> f64 {
    if b.overall_max <= floor {
        return 0.0;
    }
    b.overall_max / b.initial_max.max(floor)
}

struct LyapunovRun {
    series: Vec<(f64, f64)>,
    violations: usize,
}

/// Companion run with `e ≡ 0` and the same controller start, along which
/// `V = χ₁² + ζᵀPζ + θ̃ᵀθ̃` is evaluated at every step.
fn lyapunov_run(cfg: &ExperimentConfig, setup: &Setup) -> Result<LyapunovRun, IntegrationError<f64>> {
    let reg = &setup.regulator;
    let imm = &setup.imm;
    let p = solve_lyapunov(reg.f()).expect("F is Hurwitz by construction");
    let cl = ClosedLoop::new(&setup.plant, imm, reg, Feedback::ZeroDynamics);
    let lay = cl.layout();
    let mut x0 = setup.x0.clone();
    x0[lay.e()] = 0.0;
    let stride = cfg.integrator.record_stride;
    let transient = cfg.integrator.transient;
    let tol = cfg.thresholds.lyapunov_tol;
    let mut series = Vec::new();
    let mut violations = 0;
    let mut prev: Option<f64> = None;
    let mut step = 0usize;
    let total = (cfg.integrator.horizon / cfg.integrator.h).ceil() as usize;
    simulate(
        cl.field(),
        &x0,
        0.0,
        cfg.integrator.horizon,
        cfg.integrator.h,
        Recorder::every(usize::MAX).without_states().with_observer(|t, x| {
            let rho = &x[lay.rho()];
            let (eta, tt) = to_eta_theta(&lay.regulator_state(x), rho, imm);
            let tau = imm.tau(rho, &x[lay.w()], &x[lay.z()]);
            let v = lyapunov_value(&to_transformed(&eta, &tt, &tau, reg.b()), &p);
            if let Some(pv) = prev {
                if t > transient && !(v - pv <= tol) {
                    violations += 1;
                }
            }
            prev = Some(v);
            if step.is_multiple_of(stride) || step == total {
                series.push((t, v));
            }
            step += 1;
        }),
    )?;
    Ok(LyapunovRun { series, violations })
}

/// Simulates the closed loop described by `cfg`, evaluates diagnostics and
/// writes `config.toml`, `trajectory.csv`, `summary.txt`, `diagnostics.txt`,
/// `lyapunov.csv` and `plot.gp` into `out_dir`.
///
/// Integration failures are not errors: the partial trajectory is written
/// and the summary carries the failure status.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    cfg.validate(false)?;
    let started = Instant::now();
    let setup = Setup::new(cfg)?;
    let lay = setup.layout();
    let imm = &setup.imm;
    let reg = &setup.regulator;
    let horizon = cfg.integrator.horizon;
    let th = &cfg.thresholds;
    let ell = reg.gains().ell();
    let q = imm.dims().q;

    let cl = ClosedLoop::new(&setup.plant, imm, reg, Feedback::Stabilizer);
    let mut stream = Streaming {
        lay,
        window_start: horizon * (1.0 - th.regulation_window),
        transient: cfg.integrator.transient,
        eps: th.settling_eps,
        ell,
        dz_radius: dead_zone_radius(q, ell, 0.1),
        sup_e: 0.0,
        max_abs_e: 0.0,
        settle: None,
        block_initial: [0.0; 6],
        block_overall: [0.0; 6],
        tt_initial: None,
        tt_final: 0.0,
        tt_max: 0.0,
        max_norm: 0.0,
        dz_violations: 0,
        dz_c1: None,
    };
    let mut extra = vec!["u".to_string()];
    extra.extend((1..=q).map(|j| format!("theta_tilde{j}")));
    let probe = |_t: f64, x: &[f64]| {
        let theta = imm.theta(&x[lay.rho()]);
        let mut out = vec![cl.control(x)];
        out.extend(x[lay.theta_hat()].iter().zip(&theta).map(|(a, b)| a - b));
        out
    };
    let recorder = Recorder::every(cfg.integrator.record_stride)
        .with_channels(extra, probe)
        .with_observer(|t, x| stream.observe(t, x, imm));
    let result = simulate(cl.field(), &setup.x0, 0.0, horizon, cfg.integrator.h, recorder);
    let (trajectory, failure_time) = match result {
        Ok(t) => (t, None),
        Err(e) => {
            info!("integration failed at t = {}", e.t);
            (*e.partial, Some(e.t))
        }
    };
    debug!("main run: {:?}", started.elapsed());

    let bounds = stream.bounds();
    let floor = th.regulation_tol;
    let worst_bound_ratio = bounds.iter().map(|b| bound_ratio(b, floor)).fold(0.0, f64::max);
    let bounded = failure_time.is_none() && worst_bound_ratio <= th.bound_factor;
    let regulated = failure_time.is_none() && stream.sup_e <= th.regulation_tol;

    let lyap = if cfg.diagnostics.lyapunov && failure_time.is_none() {
        match lyapunov_run(cfg, &setup) {
            Ok(l) => Some(l),
            Err(e) => {
                info!("e = 0 companion run failed at t = {}", e.t);
                Some(LyapunovRun {
                    series: Vec::new(),
                    violations: usize::MAX,
                })
            }
        }
    } else {
        None
    };
    let wz0: Vec<f64> = setup.x0[lay.w()].iter().chain(&setup.x0[lay.z()]).copied().collect();
    let pe_min_eig = if cfg.diagnostics.pe && failure_time.is_none() {
        let stride = 10;
        sigma_map(
            &setup.plant,
            &setup.rho,
            reg.f(),
            reg.g(),
            imm,
            &wz0,
            cfg.diagnostics.steady_state_transient,
            cfg.diagnostics.pe_window,
            cfg.integrator.h,
            stride,
        )
        .ok()
        .and_then(|run| pe_check(&regressor_samples(&run, &setup.rho, imm), cfg.integrator.h * stride as f64).ok())
    } else {
        None
    };
    let residual = if cfg.diagnostics.immersion {
        sample_omega_limit(
            &setup.plant,
            &setup.rho,
            std::slice::from_ref(&wz0),
            cfg.diagnostics.steady_state_transient,
            cfg.diagnostics.pe_window,
            cfg.integrator.h,
            cfg.diagnostics.immersion_samples,
            1e3,
        )
        .ok()
        .map(|s| residual_stats(&setup.rho, &s.points, imm, &setup.plant))
    } else {
        None
    };

    let v_violations = lyap.as_ref().map(|l| l.violations);
    let status = match (failure_time, bounded && regulated) {
        (Some(_), _) => RunStatus::IntegrationFailure,
        (None, true) => RunStatus::Success,
        (None, false) => RunStatus::ThresholdFailure,
    };
    let summary = RunSummary {
        omega: setup.rho[0],
        sigma: setup.rho[1],
        mu: setup.rho[2],
        lambda: reg.gains().lambda(),
        k: reg.gains().k(),
        ell,
        clamp_radius: imm.clamp().radius,
        h: cfg.integrator.h,
        horizon,
        status,
        failure_time,
        sup_e: stream.sup_e,
        window_start: stream.window_start,
        max_abs_e: stream.max_abs_e,
        settling_time: if failure_time.is_some() { None } else { stream.settle },
        theta_tilde_initial: stream.tt_initial.unwrap_or(0.0),
        theta_tilde_final: stream.tt_final,
        theta_tilde_max: stream.tt_max,
        max_state_norm: stream.max_norm,
        worst_bound_ratio,
        pe_min_eig,
        v_violations,
        bounded,
        regulated,
        lyapunov_ok: v_violations.is_none_or(|v| v == 0),
    };
    let diagnostics = DiagnosticsReport {
        v_series: lyap.as_ref().map_or_else(Vec::new, |l| l.series.iter().map(|p| p.1).collect()),
        v_violations: v_violations.unwrap_or(0),
        residual,
        pe_min_eigenvalue: pe_min_eig,
        dead_zone_violations: stream.dz_violations,
        dead_zone_c1: stream.dz_c1,
        bounds,
        sup_e_after: stream.sup_e,
        settling_time: summary.settling_time,
    };

    write_outputs(cfg, out_dir, &lay, &trajectory, &summary, &diagnostics, lyap.as_ref())?;
    info!(
        "{} (lambda = {}, k = {}): sup|e| = {:.3e}, {:?}",
        summary.status.as_str(),
        summary.lambda,
        summary.k,
        summary.sup_e,
        started.elapsed()
    );
    Ok(RunOutcome {
        summary,
        diagnostics,
        trajectory,
    })
}

fn write_outputs(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    lay: &Layout,
    traj: &Traj,
    summary: &RunSummary,
    diag: &DiagnosticsReport<f64>,
    lyap: Option<&LyapunovRun>,
) -> Result<(), RunError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml_string())?;
    let mut names = vec!["t".to_string()];
    names.extend(lay.channel_names());
    names.extend(traj.channel_names().iter().cloned());
    let rows = (0..traj.len()).map(|i| {
        let mut row = Vec::with_capacity(names.len());
        row.push(traj.times()[i]);
        row.extend_from_slice(&traj.states()[i]);
        for c in 0..traj.channel_names().len() {
            row.push(traj.channel_at(c)[i]);
        }
        row
    });
    write_csv(&out_dir.join("trajectory.csv"), &names, rows)?;
    summary.to_key_values().write(&out_dir.join("summary.txt"))?;
    diagnostics_key_values(diag).write(&out_dir.join("diagnostics.txt"))?;
    if let Some(l) = lyap {
        write_csv(
            &out_dir.join("lyapunov.csv"),
            &["t".to_string(), "V".to_string()],
            l.series.iter().map(|&(t, v)| vec![t, v]),
        )?;
    }
    if cfg.output.plot_script {
        write_plot_script(&out_dir.join("plot.gp"), &names, lyap.is_some())?;
    }
    Ok(())
}

fn diagnostics_key_values(d: &DiagnosticsReport<f64>) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.push("v_violations", d.v_violations.to_string());
    kv.push("v_samples", d.v_series.len().to_string());
    kv.opt_float("immersion_max_dyn", d.residual.map(|r| r.max_dyn));
    kv.opt_float("immersion_max_out", d.residual.map(|r| r.max_out));
    kv.push("immersion_samples", d.residual.map_or(0, |r| r.samples).to_string());
    kv.opt_float("pe_min_eig", d.pe_min_eigenvalue);
    kv.push("dead_zone_violations", d.dead_zone_violations.to_string());
    kv.opt_float("dead_zone_c1", d.dead_zone_c1);
    for b in &d.bounds {
        kv.float(&format!("bound.{}.initial_max", b.name), b.initial_max);
        kv.float(&format!("bound.{}.overall_max", b.name), b.overall_max);
    }
    kv.float("sup_e_after", d.sup_e_after);
    kv.opt_float("settling_time", d.settling_time);
    kv
}
