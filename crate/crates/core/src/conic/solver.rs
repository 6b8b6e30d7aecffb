//! Solver contract and the Clarabel interior-point backend.

use std::collections::BTreeMap;
use std::sync::Once;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus as ClarabelStatus, SupportedConeT,
};

use super::{ConicProgram, Slot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolverStatus {
    pub fn has_primal(self) -> bool {
        matches!(self, SolverStatus::Optimal | SolverStatus::NearOptimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::NearOptimal => "near_optimal",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::Unbounded => "unbounded",
            SolverStatus::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    /// Tolerance accepted for a `NearOptimal` result.
    pub reduced_tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            reduced_tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: u32,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub status: SolverStatus,
    /// Present iff `status.has_primal()`.
    pub primal: Option<Vec<f64>>,
    pub objective_value: f64,
    pub stats: SolveStats,
}

impl SolverResult {
    fn failed(status: SolverStatus, stats: SolveStats) -> Self {
        Self {
            status,
            primal: None,
            objective_value: f64::NAN,
            stats,
        }
    }
}

/// Anything that can solve a [`ConicProgram`]. Implementations must be
/// reentrant: distinct programs may be solved concurrently.
pub trait ConicSolver: Send + Sync {
    fn solve(&self, p: &ConicProgram, settings: &SolverSettings) -> SolverResult;
}

/// Solves with the default backend.
pub fn solve(p: &ConicProgram, settings: &SolverSettings) -> SolverResult {
    ClarabelSolver.solve(p, settings)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelSolver;

extern "C" {
    fn openblas_set_num_threads(num_threads: std::os::raw::c_int);
}

static BLAS_INIT: Once = Once::new();

/// Rows of `s = b - A z` in cone order: zero, nonnegative, PSD blocks, exp cones.
struct Assembly {
    rows: Vec<BTreeMap<usize, f64>>,
    b: Vec<f64>,
}

impl Assembly {
    /// Pushes `s = scale * slot`.
    fn push_slot(&mut self, slot: Slot, scale: f64) {
        let mut row = BTreeMap::new();
        let mut rhs = 0.0;
        match slot {
            Slot::Var(v) => {
                row.insert(v, -scale);
            }
            Slot::Const(c) => rhs = scale * c,
        }
        self.rows.push(row);
        self.b.push(rhs);
    }

    /// Pushes `s = sign * (row · z - rhs) / w`, where `w` is the largest
    /// magnitude among the row's coefficients and right-hand side. Rows whose
    /// constant dwarfs their coefficients otherwise carry slacks many orders
    /// above the rest of the iterate, which equilibration of `A` cannot see.
    fn push_linear(&mut self, terms: &[(usize, f64)], rhs: f64, sign: f64) {
        let mut row = BTreeMap::new();
        for &(v, c) in terms {
            *row.entry(v).or_insert(0.0) -= sign * c;
        }
        let w = row.values().fold(rhs.abs(), |m: f64, c: &f64| m.max(c.abs()));
        let w = if w > 0.0 { w } else { 1.0 };
        row.values_mut().for_each(|c| *c /= w);
        self.rows.push(row);
        self.b.push(-sign * rhs / w);
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, p: &ConicProgram, settings: &SolverSettings) -> SolverResult {
        // Small dense kernels; BLAS-level threading only adds contention with
        // trial-level parallelism.
        BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
        let start = Instant::now();
        let bail = |status| {
            SolverResult::failed(
                status,
                SolveStats {
                    iterations: 0,
                    runtime_secs: start.elapsed().as_secs_f64(),
                },
            )
        };
        if p.validate().is_err() {
            return bail(SolverStatus::NumericalFailure);
        }

        let mut asm = Assembly {
            rows: Vec::new(),
            b: Vec::new(),
        };
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        for c in &p.equalities {
            // s = rhs - row · z = 0
            asm.push_linear(&c.row.terms, c.rhs, -1.0);
        }
        if !p.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(p.equalities.len()));
        }
        for c in &p.nonneg_inequalities {
            asm.push_linear(&c.row.terms, c.rhs, 1.0);
        }
        if !p.nonneg_inequalities.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(p.nonneg_inequalities.len()));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for block in &p.psd_blocks {
            for j in 0..block.order {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { sqrt2 };
                    asm.push_slot(block.entries[super::tri_index(i, j)], scale);
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(block.order));
        }
        for e in &p.exp_cones {
            for s in [e.a, e.b, e.c] {
                asm.push_slot(s, 1.0);
            }
            cones.push(SupportedConeT::ExponentialConeT());
        }

        let m = asm.rows.len();
        let n = p.num_vars;
        let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        for (r, row) in asm.rows.iter().enumerate() {
            for (&c, &v) in row {
                if v != 0.0 {
                    ri.push(r);
                    ci.push(c);
                    vals.push(v);
                }
            }
        }
        let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);
        let pmat = CscMatrix::<f64>::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(v, c) in &p.objective.terms {
            q[v] += c;
        }

        let cfg = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_feas(settings.feas_tol)
            .tol_gap_abs(settings.gap_tol)
            .tol_gap_rel(settings.gap_tol)
            .reduced_tol_feas(settings.reduced_tol)
            .reduced_tol_gap_abs(settings.reduced_tol)
            .reduced_tol_gap_rel(settings.reduced_tol)
            .max_threads(1)
            .build()
        {
            Ok(cfg) => cfg,
            Err(_) => return bail(SolverStatus::NumericalFailure),
        };
        let mut solver = match DefaultSolver::new(&pmat, &q, &a, &asm.b, &cones, cfg) {
            Ok(s) => s,
            Err(_) => return bail(SolverStatus::NumericalFailure),
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            ClarabelStatus::Solved => SolverStatus::Optimal,
            ClarabelStatus::AlmostSolved => SolverStatus::NearOptimal,
            ClarabelStatus::PrimalInfeasible | ClarabelStatus::AlmostPrimalInfeasible => SolverStatus::Infeasible,
            ClarabelStatus::DualInfeasible | ClarabelStatus::AlmostDualInfeasible => SolverStatus::Unbounded,
            _ => SolverStatus::NumericalFailure,
        };
        let stats = SolveStats {
            iterations: sol.iterations,
            runtime_secs: start.elapsed().as_secs_f64(),
        };
        if !status.has_primal() || sol.x.iter().any(|v| !v.is_finite()) {
            let status = if status.has_primal() { SolverStatus::NumericalFailure } else { status };
            return SolverResult::failed(status, stats);
        }
        let primal = sol.x.clone();
        SolverResult {
            status,
            objective_value: p.objective_value(&primal),
            primal: Some(primal),
            stats,
        }
    }
}
