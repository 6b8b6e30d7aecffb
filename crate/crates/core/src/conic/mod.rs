//! A small conic program representation and the solver contract.
//!
//! Programs minimize a linear objective over real variables `z` subject to
//! linear equalities, `row · z >= rhs` inequalities, PSD blocks and
//! exponential cones. PSD and exponential-cone entries are [`Slot`]s, either a
//! variable or a constant, so corners such as the `1` in `[Y y; y' 1]` need no
//! extra variable.
//!
//! Symmetric matrix variables are stored as their upper triangle in
//! column-major order, `(0,0), (0,1), (1,1), (0,2), ...`, holding the plain
//! (unscaled) matrix entries. See [`tri_index`]. Any scaling a backend needs
//! (Clarabel uses `sqrt(2)` on off-diagonals) is applied inside the backend.

mod feasibility;
mod solver;
mod text;

pub use feasibility::{check_feasibility, FeasibilityReport};
pub use solver::{solve, ClarabelSolver, ConicSolver, SolveStats, SolverResult, SolverSettings, SolverStatus};
pub use text::{from_text, to_text};

use crate::{Error, Result};

/// Position of entry `(i, j)`, `i <= j`, in a column-major upper triangle.
pub fn tri_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

pub fn tri_len(order: usize) -> usize {
    order * (order + 1) / 2
}

/// Sparse linear functional `sum coef * z[var]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearForm {
    pub terms: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: usize, coef: f64) -> Self {
        self.push(var, coef);
        self
    }

    /// Adds a term; zero coefficients are skipped.
    pub fn push(&mut self, var: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * z[v]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    Var(usize),
    Const(f64),
}

impl Slot {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match *self {
            Slot::Var(v) => z[v],
            Slot::Const(c) => c,
        }
    }
}

/// `row · z = rhs` or `row · z >= rhs`, depending on the list it sits in.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub row: LinearForm,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(row: LinearForm, rhs: f64) -> Self {
        Self { row, rhs }
    }
}

/// A symmetric matrix of the given order constrained to be PSD. `entries`
/// holds the upper triangle in [`tri_index`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub order: usize,
    pub entries: Vec<Slot>,
}

impl PsdBlock {
    pub fn matrix(&self, z: &[f64]) -> nalgebra::DMatrix<f64> {
        let n = self.order;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = self.entries[tri_index(i, j)].eval(z);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// `c >= b * exp(a / b)`, `b > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpCone {
    pub a: Slot,
    pub b: Slot,
    pub c: Slot,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: LinearForm,
    /// Added to the objective value; does not affect the minimizer.
    pub objective_constant: f64,
    pub equalities: Vec<LinearConstraint>,
    pub nonneg_inequalities: Vec<LinearConstraint>,
    pub psd_blocks: Vec<PsdBlock>,
    pub exp_cones: Vec<ExpCone>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            ..Default::default()
        }
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.eval(z) + self.objective_constant
    }

    /// Divides every linear row and its right-hand side by the row's largest
    /// magnitude. The feasible set is unchanged; residuals become relative.
    pub fn normalize_rows(&mut self) {
        for c in self.equalities.iter_mut().chain(self.nonneg_inequalities.iter_mut()) {
            let w = c.row.terms.iter().fold(c.rhs.abs(), |m, &(_, v)| m.max(v.abs()));
            if w > 0.0 && w.is_finite() {
                c.row.terms.iter_mut().for_each(|(_, v)| *v /= w);
                c.rhs /= w;
            }
        }
    }

    /// Checks index bounds, block shapes and finiteness.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        let check_form = |f: &LinearForm, what: &str| -> Result<()> {
            for &(v, c) in &f.terms {
                if v >= self.num_vars {
                    return bad(format!("{what}: variable {v} out of range"));
                }
                if !c.is_finite() {
                    return bad(format!("{what}: non-finite coefficient"));
                }
            }
            Ok(())
        };
        let check_slot = |s: &Slot, what: &str| -> Result<()> {
            match *s {
                Slot::Var(v) if v >= self.num_vars => bad(format!("{what}: variable {v} out of range")),
                Slot::Const(c) if !c.is_finite() => bad(format!("{what}: non-finite constant")),
                _ => Ok(()),
            }
        };
        check_form(&self.objective, "objective")?;
        if !self.objective_constant.is_finite() {
            return bad("objective constant is not finite".into());
        }
        for (k, c) in self.equalities.iter().enumerate() {
            check_form(&c.row, &format!("equality {k}"))?;
            if !c.rhs.is_finite() {
                return bad(format!("equality {k}: non-finite rhs"));
            }
        }
        for (k, c) in self.nonneg_inequalities.iter().enumerate() {
            check_form(&c.row, &format!("inequality {k}"))?;
            if !c.rhs.is_finite() {
                return bad(format!("inequality {k}: non-finite rhs"));
            }
        }
        for (k, b) in self.psd_blocks.iter().enumerate() {
            if b.order == 0 || b.entries.len() != tri_len(b.order) {
                return bad(format!("psd block {k}: expected {} entries", tri_len(b.order)));
            }
            for s in &b.entries {
                check_slot(s, &format!("psd block {k}"))?;
            }
        }
        for (k, e) in self.exp_cones.iter().enumerate() {
            for s in [&e.a, &e.b, &e.c] {
                check_slot(s, &format!("exp cone {k}"))?;
            }
        }
        Ok(())
    }
}
