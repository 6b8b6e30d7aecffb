//! Assembly of one CCP step as a [`ConicProgram`].
//!
//! The program can be written about an expansion point `(x0, y0)` using the
//! exact change of variables
//!
//! ```text
//! x = x0 + xi,   X = x0 x0' + x0 xi' + xi x0' + Xi,
//! y = y0 + eta,  Y = y0 y0' + y0 eta' + eta y0' + H,
//! ```
//!
//! under which `[X x; x' 1]` and `[Xi xi; xi' 1]` are congruent, and likewise
//! for the `Y` block. All constraints stay linear, so the feasible set and
//! optimum are unchanged; only the magnitudes the solver sees shrink. With a
//! zero expansion point the program is the literal one.

use crate::conic::{tri_index, tri_len, ConicProgram, ExpCone, LinearConstraint, LinearForm, PsdBlock, Slot};
use crate::scenario::{dist, Point};
use crate::{Error, Result};

/// Variable offsets: `x (q) | y (N) | X (tri q) | Y (tri N) | e (N) | u (N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubproblemLayout {
    pub n: usize,
    pub q: usize,
}

impl SubproblemLayout {
    pub fn new(n: usize, q: usize) -> Self {
        Self { n, q }
    }

    pub fn x(&self, k: usize) -> usize {
        k
    }

    pub fn y(&self, i: usize) -> usize {
        self.q + i
    }

    pub fn xmat(&self, k: usize, l: usize) -> usize {
        self.q + self.n + tri_index(k, l)
    }

    pub fn ymat(&self, i: usize, j: usize) -> usize {
        self.q + self.n + tri_len(self.q) + tri_index(i, j)
    }

    pub fn e(&self, i: usize) -> usize {
        self.q + self.n + tri_len(self.q) + tri_len(self.n) + i
    }

    pub fn u(&self, i: usize) -> usize {
        self.e(i) + self.n
    }

    pub fn num_vars(&self) -> usize {
        2 * self.n + self.q + self.n + tri_len(self.q) + tri_len(self.n)
    }

    /// Inequality rows `[0, N)` are `e_i >= 0`, `[N, 2N)` are `Y_ii >= e_i`,
    /// the rest are the Cauchy-Schwarz pairs, two rows per `i <= j`.
    pub fn pair_rows(&self) -> std::ops::Range<usize> {
        2 * self.n..2 * self.n + 2 * tri_len(self.n)
    }

    pub fn x_hat(&self, z: &[f64]) -> Vec<f64> {
        (0..self.q).map(|k| z[self.x(k)]).collect()
    }

    pub fn y_hat(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| z[self.y(i)]).collect()
    }

    pub fn y_diag(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| z[self.ymat(i, i)]).collect()
    }

    pub fn e_hat(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| z[self.e(i)]).collect()
    }
}

/// Expansion point for [`build_ccp_subproblem_about`].
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

impl Expansion {
    pub fn zero(n: usize, q: usize) -> Self {
        Self {
            x0: vec![0.0; q],
            y0: vec![0.0; n],
        }
    }

    /// Expansion about `x0` with the residuals it implies, `y0 = d - ||x0 - a||`.
    pub fn about(anchors: &[Point], d: &[f64], x0: &[f64]) -> Self {
        Self {
            x0: x0.to_vec(),
            y0: anchors.iter().zip(d).map(|(a, di)| di - dist(x0, a.coords())).collect(),
        }
    }

    /// Maps a solution of the shifted program back to the literal variables.
    pub fn to_literal(&self, layout: &SubproblemLayout, z: &[f64]) -> Vec<f64> {
        let (n, q) = (layout.n, layout.q);
        let mut out = z.to_vec();
        for k in 0..q {
            out[layout.x(k)] = self.x0[k] + z[layout.x(k)];
        }
        for i in 0..n {
            out[layout.y(i)] = self.y0[i] + z[layout.y(i)];
        }
        for l in 0..q {
            for k in 0..=l {
                let (a, b) = (self.x0[k], self.x0[l]);
                out[layout.xmat(k, l)] =
                    a * b + a * z[layout.x(l)] + z[layout.x(k)] * b + z[layout.xmat(k, l)];
            }
        }
        for j in 0..n {
            for i in 0..=j {
                let (a, b) = (self.y0[i], self.y0[j]);
                out[layout.ymat(i, j)] =
                    a * b + a * z[layout.y(j)] + z[layout.y(i)] * b + z[layout.ymat(i, j)];
            }
        }
        out
    }
}

/// The literal CCP subproblem linearized at `y_diag_prev`.
pub fn build_ccp_subproblem(anchors: &[Point], d: &[f64], y_diag_prev: &[f64]) -> Result<ConicProgram> {
    let q = anchors.first().map_or(0, Point::dim);
    build_shifted_rows(anchors, d, y_diag_prev, &Expansion::zero(d.len(), q))
}

/// The CCP subproblem written in shifted variables about `exp`.
pub fn build_ccp_subproblem_about(
    anchors: &[Point],
    d: &[f64],
    y_diag_prev: &[f64],
    exp: &Expansion,
) -> Result<ConicProgram> {
    let mut p = build_shifted_rows(anchors, d, y_diag_prev, exp)?;
    p.normalize_rows();
    Ok(p)
}

/// The shifted program before row normalization.
fn build_shifted_rows(
    anchors: &[Point],
    d: &[f64],
    y_diag_prev: &[f64],
    exp: &Expansion,
) -> Result<ConicProgram> {
    let n = anchors.len();
    let q = anchors.first().map_or(0, Point::dim);
    if n == 0 || d.len() != n || y_diag_prev.len() != n || anchors.iter().any(|a| a.dim() != q) {
        return Err(Error::Precondition("anchors, ranges and Yhat must have matching sizes".into()));
    }
    if exp.x0.len() != q || exp.y0.len() != n {
        return Err(Error::Precondition("expansion point has the wrong shape".into()));
    }
    if let Some(i) = y_diag_prev.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Precondition(format!(
            "linearization point Yhat[{i}] = {} must be positive",
            y_diag_prev[i]
        )));
    }

    let lay = SubproblemLayout::new(n, q);
    let mut p = ConicProgram::new(lay.num_vars());
    let (x0, y0) = (&exp.x0, &exp.y0);
    // w_i = d_i - y0_i, equal to ||x0 - a_i|| when y0 comes from `Expansion::about`.
    let w: Vec<f64> = d.iter().zip(y0).map(|(di, yi)| di - yi).collect();
    let offset: Vec<Vec<f64>> = anchors
        .iter()
        .map(|a| x0.iter().zip(a.coords()).map(|(xk, ak)| xk - ak).collect())
        .collect();
    let trace_x = |f: &mut LinearForm, sign: f64| {
        for k in 0..q {
            f.push(lay.xmat(k, k), sign);
        }
    };

    // Objective: sum e - sum u + sum Y_ii / Yhat_ii.
    for i in 0..n {
        p.objective.push(lay.e(i), 1.0);
        p.objective.push(lay.u(i), -1.0);
        p.objective.push(lay.ymat(i, i), 1.0 / y_diag_prev[i]);
        p.objective.push(lay.y(i), 2.0 * y0[i] / y_diag_prev[i]);
        p.objective_constant += y0[i] * y0[i] / y_diag_prev[i];
    }

    // e_i >= 0
    for i in 0..n {
        p.nonneg_inequalities
            .push(LinearConstraint::new(LinearForm::new().with(lay.e(i), 1.0), 0.0));
    }
    // Y_ii >= e_i
    for i in 0..n {
        let row = LinearForm::new()
            .with(lay.ymat(i, i), 1.0)
            .with(lay.y(i), 2.0 * y0[i])
            .with(lay.e(i), -1.0);
        p.nonneg_inequalities.push(LinearConstraint::new(row, -y0[i] * y0[i]));
    }
    // Y_ii = tr X - 2 a_i'x + ||a_i||^2 + 2 d_i y_i - d_i^2
    for i in 0..n {
        let mut row = LinearForm::new().with(lay.ymat(i, i), 1.0);
        trace_x(&mut row, -1.0);
        for k in 0..q {
            row.push(lay.x(k), -2.0 * offset[i][k]);
        }
        row.push(lay.y(i), -2.0 * w[i]);
        let r0 = offset[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        p.equalities.push(LinearConstraint::new(row, (r0 - w[i]) * (r0 + w[i])));
    }
    // Y_ij - d_j y_i - d_i y_j + d_i d_j >= |tr X - (a_i + a_j)'x + a_i'a_j|, i <= j
    for j in 0..n {
        for i in 0..=j {
            let mut base = LinearForm::new().with(lay.ymat(i, j), 1.0);
            if i == j {
                base.push(lay.y(i), -2.0 * w[i]);
            } else {
                base.push(lay.y(j), -w[i]);
                base.push(lay.y(i), -w[j]);
            }
            let inner: f64 = offset[i].iter().zip(&offset[j]).map(|(u, v)| u * v).sum();
            // inner - w_i w_j; the i = j case is factored to avoid cancellation.
            let gap_plus = if i == j {
                let r0 = inner.sqrt();
                (r0 - w[i]) * (r0 + w[i])
            } else {
                inner - w[i] * w[j]
            };
            for sign in [1.0, -1.0] {
                let mut row = base.clone();
                trace_x(&mut row, -sign);
                for k in 0..q {
                    row.push(lay.x(k), -sign * (offset[i][k] + offset[j][k]));
                }
                let rhs = if sign > 0.0 { gap_plus } else { -inner - w[i] * w[j] };
                p.nonneg_inequalities.push(LinearConstraint::new(row, rhs));
            }
        }
    }

    // [Y y; y' 1] and [X x; x' 1]
    let mut yblock = vec![Slot::Const(1.0); tri_len(n + 1)];
    for j in 0..n {
        for i in 0..=j {
            yblock[tri_index(i, j)] = Slot::Var(lay.ymat(i, j));
        }
        yblock[tri_index(j, n)] = Slot::Var(lay.y(j));
    }
    let mut xblock = vec![Slot::Const(1.0); tri_len(q + 1)];
    for l in 0..q {
        for k in 0..=l {
            xblock[tri_index(k, l)] = Slot::Var(lay.xmat(k, l));
        }
        xblock[tri_index(l, q)] = Slot::Var(lay.x(l));
    }
    p.psd_blocks.push(PsdBlock {
        order: n + 1,
        entries: yblock,
    });
    p.psd_blocks.push(PsdBlock {
        order: q + 1,
        entries: xblock,
    });

    // e_i >= exp(u_i), so -u_i is an epigraph of -ln e_i.
    for i in 0..n {
        p.exp_cones.push(ExpCone {
            a: Slot::Var(lay.u(i)),
            b: Slot::Const(1.0),
            c: Slot::Var(lay.e(i)),
        });
    }
    Ok(p)
}

/// Lifted point built from a candidate position: `y = d - dist`, `e = y^2`,
/// `X = x x'`, `Y = y y'`, `u = ln e`. Feasible whenever every `y_i != 0`.
pub fn rank_one_point(anchors: &[Point], d: &[f64], x: &[f64]) -> Vec<f64> {
    let lay = SubproblemLayout::new(anchors.len(), x.len());
    let y: Vec<f64> = anchors.iter().zip(d).map(|(a, di)| di - dist(x, a.coords())).collect();
    let mut z = vec![0.0; lay.num_vars()];
    for (k, xk) in x.iter().enumerate() {
        z[lay.x(k)] = *xk;
        for (l, xl) in x.iter().enumerate().skip(k) {
            z[lay.xmat(k, l)] = xk * xl;
        }
    }
    for (i, yi) in y.iter().enumerate() {
        z[lay.y(i)] = *yi;
        for (j, yj) in y.iter().enumerate().skip(i) {
            z[lay.ymat(i, j)] = yi * yj;
        }
        z[lay.e(i)] = yi * yi;
        z[lay.u(i)] = (yi * yi).ln();
    }
    z
}
