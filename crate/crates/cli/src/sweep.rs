use std::path::{Path, PathBuf};

use imreg::model::ParamBox;
use log::info;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, RunError, RunSummary};
use crate::output::{fmt_f64, KeyValues};

/// One grid point: gains plus the parameter vector it runs at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub k: f64,
    pub rho: [f64; 3],
    /// Index into the box corners when sweeping over them.
    pub corner: Option<usize>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        let mut s = format!("lambda_{}_k_{}", self.lambda, self.k);
        if let Some(c) = self.corner {
            s.push_str(&format!("_corner_{c}"));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub dir: PathBuf,
    pub result: Result<RunSummary, String>,
}

impl SweepRow {
    pub fn meets_all(&self) -> bool {
        self.result.as_ref().is_ok_and(RunSummary::meets_all)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Smallest `(λ, k)` meeting all thresholds at every parameter point,
    /// ordered by `λ·k`, then `k`.
    pub smallest: Option<(f64, f64)>,
    /// Whether success is upward closed: every pair dominating a
    /// successful pair in both gains also succeeds.
    pub upward_closed: bool,
}

pub fn grid(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let rhos: Vec<(Option<usize>, [f64; 3])> = if cfg.sweep.corners {
        let b = ParamBox::new(cfg.system.lower.clone(), cfg.system.upper.clone()).expect("validated box");
        b.corners()
            .into_iter()
            .enumerate()
            .map(|(i, c)| (Some(i), [c[0], c[1], c[2]]))
            .collect()
    } else {
        vec![(None, [cfg.system.omega, cfg.system.sigma, cfg.system.mu])]
    };
    let mut points = Vec::new();
    for &lambda in &cfg.sweep.lambda {
        for &k in &cfg.sweep.k {
            for &(corner, rho) in &rhos {
                points.push(SweepPoint { lambda, k, rho, corner });
            }
        }
    }
    points
}

/// Runs every grid point in its own output directory under
/// `out_dir/points`, then writes `sweep.csv` and `sweep_summary.txt`.
/// A failing point is recorded in its row and does not stop the sweep.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SweepReport, RunError> {
    cfg.validate(true)?;
    let points = grid(cfg);
    info!("sweep over {} points", points.len());
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&point| {
            let mut c = cfg.clone();
            c.gains.lambda = point.lambda;
            c.gains.k = point.k;
            c.system.omega = point.rho[0];
            c.system.sigma = point.rho[1];
            c.system.mu = point.rho[2];
            let dir = out_dir.join("points").join(point.label());
            c.output.dir = dir.display().to_string();
            let result = run_experiment(&c, &dir).map(|o| o.summary).map_err(|e| e.to_string());
            SweepRow { point, dir, result }
        })
        .collect();

    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for r in &rows {
        let p = (r.point.lambda, r.point.k);
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let pair_ok = |p: (f64, f64)| {
        rows.iter()
            .filter(|r| (r.point.lambda, r.point.k) == p)
            .all(SweepRow::meets_all)
    };
    let ok: Vec<(f64, f64)> = pairs.iter().copied().filter(|&p| pair_ok(p)).collect();
    let smallest = ok
        .iter()
        .copied()
        .min_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)).then(a.1.total_cmp(&b.1)));
    let upward_closed = ok
        .iter()
        .all(|&(l, k)| pairs.iter().filter(|&&(l2, k2)| l2 >= l && k2 >= k).all(|&p| ok.contains(&p)));

    let report = SweepReport {
        rows,
        smallest,
        upward_closed,
    };
    write_report(&report, out_dir)?;
    Ok(report)
}

fn write_report(report: &SweepReport, out_dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("sweep.csv")).map_err(std::io::Error::from)?;
    let header = [
        "lambda",
        "k",
        "omega",
        "sigma",
        "mu",
        "status",
        "sup_e",
        "settling_time",
        "theta_tilde_final",
        "max_state_norm",
        "worst_bound_ratio",
        "v_violations",
        "bounded",
        "regulated",
        "lyapunov_ok",
        "meets_all",
        "error",
    ];
    w.write_record(header).map_err(std::io::Error::from)?;
    for r in &report.rows {
        let p = &r.point;
        let mut rec = vec![fmt_f64(p.lambda), fmt_f64(p.k), fmt_f64(p.rho[0]), fmt_f64(p.rho[1]), fmt_f64(p.rho[2])];
        match &r.result {
            Ok(s) => {
                rec.extend([
                    s.status.as_str().to_string(),
                    fmt_f64(s.sup_e),
                    s.settling_time.map_or_else(|| "unsettled".into(), fmt_f64),
                    fmt_f64(s.theta_tilde_final),
                    fmt_f64(s.max_state_norm),
                    fmt_f64(s.worst_bound_ratio),
                    s.v_violations.map_or_else(|| "none".into(), |v| v.to_string()),
                    s.bounded.to_string(),
                    s.regulated.to_string(),
                    s.lyapunov_ok.to_string(),
                    s.meets_all().to_string(),
                    String::new(),
                ]);
            }
            Err(e) => {
                rec.push("error".into());
                rec.extend(std::iter::repeat_n(String::new(), 9));
                rec.push("false".into());
                rec.push(e.replace('\n', " "));
            }
        }
        w.write_record(&rec).map_err(std::io::Error::from)?;
    }
    w.flush()?;

    let mut kv = KeyValues::default();
    kv.push("points", report.rows.len().to_string());
    kv.push("succeeded", report.rows.iter().filter(|r| r.meets_all()).count().to_string());
    kv.opt_float("smallest_lambda", report.smallest.map(|p| p.0));
    kv.opt_float("smallest_k", report.smallest.map(|p| p.1));
    kv.push("upward_closed", report.upward_closed.to_string());
    kv.write(&out_dir.join("sweep_summary.txt"))?;
    Ok(())
}
