//! The convex-concave loop with built-in attacker detection.

use serde::Serialize;

use super::subproblem::{build_ccp_subproblem_about, Expansion, SubproblemLayout};
use super::{dilation_estimates, normalize_instance, ScaledInstance, E_FLOOR};
use crate::conic::{check_feasibility, solve, FeasibilityReport, SolverSettings, SolverStatus};
use crate::oracle::{gauss_newton_ls, GaussNewtonSettings};
use crate::scenario::{centroid, dist, Point};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CcpSettings {
    /// Maximum number of subproblem solves.
    pub max_iter: usize,
    /// Stop once consecutive estimates move less than this (meters).
    pub tau: f64,
    /// Initial linearization point, `Yhat = y_init_diag * I`.
    pub y_init_diag: f64,
    /// Every coordinate of the fictitious estimate preceding the zero start.
    pub x_sentinel: f64,
    pub detection_threshold: f64,
    /// Solve in units of sigma. When false the literal objective is solved in meters.
    pub normalize: bool,
    pub solver: SolverSettings,
    /// Tolerance of the per-iteration feasibility audit.
    pub audit_tol: f64,
}

impl Default for CcpSettings {
    fn default() -> Self {
        Self {
            max_iter: 3,
            tau: 100.0 / 200.0,
            y_init_diag: 0.1,
            x_sentinel: 1e6,
            detection_threshold: 1.0,
            normalize: true,
            solver: SolverSettings::default(),
            audit_tol: 1e-6,
        }
    }
}

impl CcpSettings {
    /// Defaults with `tau = B / 200`.
    pub fn for_area(b: f64) -> Self {
        Self {
            tau: b / 200.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::Config("CCP needs at least one iteration".into()));
        }
        if !(self.tau > 0.0) || !(self.y_init_diag > 0.0) || !(self.detection_threshold > 0.0) {
            return Err(Error::Config(
                "tau, initial Yhat and detection threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub x_hat: Point,
    /// Value of the solved subproblem, `sum e - sum ln e + sum Y_ii / Yhat_ii`.
    pub subproblem_objective: f64,
    /// The subproblem value with the dropped tangent constants restored,
    /// `+ sum (ln Yhat_ii - 1)`. Non-increasing over iterations.
    pub surrogate_objective: f64,
    /// `sum e - ln e + ln Y_ii` at the solution: the relaxed likelihood objective.
    pub relaxed_objective: f64,
    pub feasibility: FeasibilityReport,
    pub status: SolverStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    /// Position estimate in meters.
    pub x_hat: Point,
    /// Residuals `y_i` in meters.
    pub y_hat: Vec<f64>,
    /// Epigraph values `e_i` (normalized units).
    pub e_hat: Vec<f64>,
    /// Dilation estimates `(y_i / scale)^2 / e_i`.
    pub rho_hat: Vec<f64>,
    pub detected: Vec<usize>,
    pub iterations_used: usize,
    pub iterate_trace: Vec<IterateRecord>,
    /// One entry per attempted solve, including a failed last one.
    pub solver_statuses: Vec<SolverStatus>,
    pub stop_reason: StopReason,
    /// Length unit the subproblems were solved in (sigma, or 1 without normalization).
    pub scale: f64,
}

impl EstimateReport {
    pub fn final_record(&self) -> &IterateRecord {
        self.iterate_trace.last().expect("report holds at least one iterate")
    }

    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "x_hat": self.x_hat,
            "y_hat": self.y_hat,
            "e_hat": self.e_hat,
            "rho_hat": self.rho_hat,
            "detected": self.detected,
            "iterations": self.iterations_used,
            "statuses": self.solver_statuses.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            "stop_reason": self.stop_reason,
            "objectives": self.iterate_trace.iter().map(|r| r.surrogate_objective).collect::<Vec<_>>(),
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

fn relaxed_objective(y_diag: &[f64], e: &[f64]) -> f64 {
    y_diag
        .iter()
        .zip(e)
        .map(|(&yy, &ee)| {
            let ee = ee.max(E_FLOOR);
            ee - ee.ln() + yy.max(E_FLOOR).ln()
        })
        .sum()
}

/// Runs the CCP on median ranges `d` (meters) with nominal noise level `sigma`.
pub fn run_ccp(anchors: &[Point], d: &[f64], sigma: f64, settings: &CcpSettings) -> Result<EstimateReport> {
    settings.validate()?;
    let n = anchors.len();
    let q = anchors.first().map_or(0, Point::dim);
    if !(q == 2 || q == 3) || n < q + 1 || anchors.iter().any(|a| a.dim() != q) {
        return Err(Error::Precondition(format!(
            "need at least q+1 anchors of dimension 2 or 3, got {n} of dimension {q}"
        )));
    }
    if d.len() != n || d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("need one finite range per anchor".into()));
    }
    let inst = if settings.normalize {
        normalize_instance(anchors, d, sigma)?
    } else {
        ScaledInstance {
            anchors: anchors.to_vec(),
            d: d.to_vec(),
            scale: 1.0,
        }
    };
    let scale = inst.scale;
    let lay = SubproblemLayout::new(n, q);

    // Expansion point for the first solve; it only affects conditioning.
    let start = centroid(&inst.anchors);
    let mut reference = gauss_newton_ls(&inst.anchors, &inst.d, start.coords(), &GaussNewtonSettings::default())
        .map(|r| r.x.0)
        .unwrap_or_else(|_| start.0.clone());

    let mut y_lin = vec![settings.y_init_diag; n];
    let mut x_prev = vec![settings.x_sentinel; q];
    let mut x_cur = vec![0.0; q];
    let mut trace: Vec<IterateRecord> = Vec::new();
    let mut statuses = Vec::new();
    let mut last_primal: Option<Vec<f64>> = None;
    let mut stop_reason = StopReason::MaxIterations;

    let mut t = 1;
    while t <= settings.max_iter {
        if dist(&x_cur, &x_prev) <= settings.tau {
            stop_reason = StopReason::Converged;
            break;
        }
        let expansion = Expansion::about(&inst.anchors, &inst.d, &reference);
        let program = build_ccp_subproblem_about(&inst.anchors, &inst.d, &y_lin, &expansion)?;
        let result = solve(&program, &settings.solver);
        statuses.push(result.status);
        let Some(z) = result.primal else {
            stop_reason = StopReason::SolverFailure;
            break;
        };
        // Audited in the coordinates the solver worked in; the literal
        // variables can be ~1e10 when sigma is small, below f64 resolution for
        // an absolute tolerance.
        let feasibility = check_feasibility(&program, &z, settings.audit_tol);
        let literal = expansion.to_literal(&lay, &z);
        let subproblem_objective = result.objective_value;
        let surrogate_objective =
            subproblem_objective + y_lin.iter().map(|v| v.ln() - 1.0).sum::<f64>();
        let y_diag = lay.y_diag(&literal);
        let e = lay.e_hat(&literal);

        let x_new = lay.x_hat(&literal);
        trace.push(IterateRecord {
            x_hat: Point(x_new.iter().map(|v| v * scale).collect()),
            subproblem_objective,
            surrogate_objective,
            relaxed_objective: relaxed_objective(&y_diag, &e),
            feasibility,
            status: result.status,
        });
        y_lin = y_diag.iter().map(|v| v.max(E_FLOOR)).collect();
        x_prev = std::mem::replace(&mut x_cur, x_new.iter().map(|v| v * scale).collect());
        reference = x_new;
        last_primal = Some(literal);
        t += 1;
    }
    if stop_reason == StopReason::MaxIterations && dist(&x_cur, &x_prev) <= settings.tau {
        stop_reason = StopReason::Converged;
    }

    let Some(z) = last_primal else {
        return Err(Error::Solver(format!(
            "first subproblem failed with status {}",
            statuses.last().map_or("unknown", |s| s.as_str())
        )));
    };
    let y_norm = lay.y_hat(&z);
    let e_hat = lay.e_hat(&z);
    let rho_hat = dilation_estimates(&y_norm, &e_hat);
    let detected = rho_hat
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r > settings.detection_threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(EstimateReport {
        x_hat: Point(x_cur),
        y_hat: y_norm.iter().map(|v| v * scale).collect(),
        e_hat,
        rho_hat,
        detected,
        iterations_used: trace.len(),
        iterate_trace: trace,
        solver_statuses: statuses,
        stop_reason,
        scale,
    })
}
