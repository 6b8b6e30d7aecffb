use nalgebra::SymmetricEigen;

use super::{ConicProgram, ExpCone};

/// Constraint residuals of a candidate point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub max_equality_residual: f64,
    pub max_inequality_violation: f64,
    /// Smallest eigenvalue of each PSD block, in block order.
    pub psd_min_eigenvalues: Vec<f64>,
    pub max_exp_violation: f64,
    pub tol: f64,
}

impl FeasibilityReport {
    pub fn min_psd_eigenvalue(&self) -> f64 {
        self.psd_min_eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        self.max_equality_residual <= self.tol
            && self.max_inequality_violation <= self.tol
            && self.max_exp_violation <= self.tol
            && self.psd_min_eigenvalues.iter().all(|&l| l >= -self.tol)
    }
}

/// Violation of `c >= b exp(a/b)`: in log form `a - b ln(c/b)` when `b, c > 0`.
fn exp_violation(cone: &ExpCone, z: &[f64]) -> f64 {
    let (a, b, c) = (cone.a.eval(z), cone.b.eval(z), cone.c.eval(z));
    if b > 0.0 && c > 0.0 {
        (a - b * (c / b).ln()).max(0.0)
    } else if b > 0.0 {
        b * (a / b).exp() - c
    } else {
        // Closure of the cone at b = 0: a <= 0, c >= 0.
        (-b) + a.max(0.0) + (-c).max(0.0)
    }
}

/// Evaluates every constraint of `p` at `z`. Panics if `z` has the wrong length.
pub fn check_feasibility(p: &ConicProgram, z: &[f64], tol: f64) -> FeasibilityReport {
    assert_eq!(z.len(), p.num_vars, "point has wrong dimension");
    let max_equality_residual = p
        .equalities
        .iter()
        .map(|c| (c.row.eval(z) - c.rhs).abs())
        .fold(0.0, f64::max);
    let max_inequality_violation = p
        .nonneg_inequalities
        .iter()
        .map(|c| (c.rhs - c.row.eval(z)).max(0.0))
        .fold(0.0, f64::max);
    let psd_min_eigenvalues = p
        .psd_blocks
        .iter()
        .map(|b| {
            SymmetricEigen::new(b.matrix(z))
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let max_exp_violation = p
        .exp_cones
        .iter()
        .map(|c| exp_violation(c, z))
        .fold(0.0, f64::max);
    FeasibilityReport {
        max_equality_residual,
        max_inequality_violation,
        psd_min_eigenvalues,
        max_exp_violation,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{LinearConstraint, LinearForm, PsdBlock, Slot};

    fn sample_program() -> ConicProgram {
        let mut p = ConicProgram::new(4);
        p.equalities.push(LinearConstraint::new(LinearForm::new().with(0, 1.0).with(1, 1.0), 3.0));
        p.nonneg_inequalities.push(LinearConstraint::new(LinearForm::new().with(2, 1.0), 0.5));
        p.psd_blocks.push(PsdBlock {
            order: 2,
            entries: vec![Slot::Var(0), Slot::Const(0.0), Slot::Var(1)],
        });
        p.exp_cones.push(ExpCone {
            a: Slot::Var(3),
            b: Slot::Const(1.0),
            c: Slot::Var(2),
        });
        p
    }

    #[test]
    fn feasible_point_has_zero_residuals() {
        let p = sample_program();
        let z = [1.0, 2.0, 1.0, 0.0];
        let r = check_feasibility(&p, &z, 1e-12);
        assert_eq!(r.max_equality_residual, 0.0);
        assert_eq!(r.max_inequality_violation, 0.0);
        assert_eq!(r.max_exp_violation, 0.0);
        assert_eq!(r.psd_min_eigenvalues, vec![1.0]);
        assert!(r.passed());
    }

    #[test]
    fn constructed_violations_are_reported() {
        let mut p = sample_program();
        p.equalities.clear();
        let z = [1.0, -1e-3, 0.25, 1.0];
        let r = check_feasibility(&p, &z, 1e-6);
        assert!((r.min_psd_eigenvalue() + 1e-3).abs() < 1e-15);
        assert!((r.max_inequality_violation - 0.25).abs() < 1e-15);
        // u = 1 > ln(0.25)
        assert!((r.max_exp_violation - (1.0 - 0.25f64.ln())).abs() < 1e-12);
        assert!(!r.passed());
    }
}
