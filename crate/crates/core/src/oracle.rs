//! Independent references for the estimator.
//!
//! [`profile_objective`] is the relaxed negative log-likelihood with every
//! `rho_i >= 1` minimized out analytically: for residual `y`,
//! `min_{rho >= 1} y^2/rho + ln rho` is `y^2` when `y^2 <= 1` and
//! `1 + ln y^2` otherwise (stationary point `rho = y^2`, clipped at 1).
//! [`grid_search`] brute-forces it; [`gauss_newton_ls`] is a plain
//! least-squares baseline that ignores attacks.

use nalgebra::{DMatrix, DVector};

use crate::par::{argmin_indexed, Execution};
use crate::scenario::{centroid, dist, Point};
use crate::{Error, Result};

/// `min_{rho >= 1} y^2 / rho + ln rho`.
pub fn profile_term(y: f64) -> f64 {
    let y2 = y * y;
    if y2 <= 1.0 {
        y2
    } else {
        1.0 + y2.ln()
    }
}

/// Profile objective at `x` for a normalized instance (unit noise).
pub fn profile_objective(x: &[f64], anchors: &[Point], d: &[f64]) -> f64 {
    anchors
        .iter()
        .zip(d)
        .map(|(a, di)| profile_term(di - dist(x, a.coords())))
        .sum()
}

/// Uniform grid with `resolution` points per axis on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
}

impl GridSpec {
    /// `[0, side]^q`.
    pub fn square(side: f64, q: usize, resolution: usize) -> Self {
        Self {
            lower: vec![0.0; q],
            upper: vec![side; q],
            resolution,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| v * factor).collect(),
            upper: self.upper.iter().map(|v| v * factor).collect(),
            resolution: self.resolution,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn num_points(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    /// Spacing along axis `k`.
    pub fn cell(&self, k: usize) -> f64 {
        (self.upper[k] - self.lower[k]) / (self.resolution - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::Config("grid resolution must be at least 2".into()));
        }
        if self.lower.len() != self.upper.len()
            || self.lower.is_empty()
            || self.lower.iter().zip(&self.upper).any(|(l, u)| !(u >= l))
        {
            return Err(Error::Config("grid bounds are malformed".into()));
        }
        Ok(())
    }

    /// Grid point with flat index `idx`; axis 0 is the most significant digit.
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let q = self.dim();
        let mut out = vec![0.0; q];
        for k in (0..q).rev() {
            let i = idx % self.resolution;
            idx /= self.resolution;
            out[k] = self.lower[k] + self.cell(k) * i as f64;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub x: Point,
    pub objective: f64,
    pub evaluated: usize,
}

/// Exhaustive minimization of [`profile_objective`] over the grid. Ties go to
/// the lexicographically smallest grid index.
pub fn grid_search(anchors: &[Point], d: &[f64], spec: &GridSpec, exec: Execution) -> Result<GridResult> {
    spec.validate()?;
    if anchors.iter().any(|a| a.dim() != spec.dim()) || anchors.len() != d.len() {
        return Err(Error::Precondition("grid and instance dimensions differ".into()));
    }
    let total = spec.num_points();
    let (idx, objective) = argmin_indexed(exec, total, |i| profile_objective(&spec.point(i), anchors, d))
        .ok_or_else(|| Error::Domain("profile objective is NaN everywhere".into()))?;
    Ok(GridResult {
        x: Point(spec.point(idx)),
        objective,
        evaluated: total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonSettings {
    pub max_iter: usize,
    /// Stop when the accepted step is shorter than this.
    pub tol: f64,
}

impl Default for GaussNewtonSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonResult {
    pub x: Point,
    pub iterations: usize,
    /// Set when the normal equations were singular and had to be regularized.
    pub regularized: bool,
}

fn ls_cost(x: &[f64], anchors: &[Point], d: &[f64]) -> f64 {
    anchors
        .iter()
        .zip(d)
        .map(|(a, di)| (di - dist(x, a.coords())).powi(2))
        .sum()
}

/// Damped Gauss-Newton on `sum (d_i - ||x - a_i||)^2`, starting from `x0`
/// (use [`gauss_newton_from_centroid`] for the default start).
pub fn gauss_newton_ls(
    anchors: &[Point],
    d: &[f64],
    x0: &[f64],
    settings: &GaussNewtonSettings,
) -> Result<GaussNewtonResult> {
    let q = x0.len();
    if anchors.len() < q + 1 || d.len() != anchors.len() || anchors.iter().any(|a| a.dim() != q) {
        return Err(Error::Precondition("need at least q+1 anchors matching x0".into()));
    }
    let mut x = x0.to_vec();
    let mut cost = ls_cost(&x, anchors, d);
    let mut regularized = false;
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        let mut jtj = DMatrix::<f64>::zeros(q, q);
        let mut jtr = DVector::<f64>::zeros(q);
        for (a, di) in anchors.iter().zip(d) {
            let r = dist(&x, a.coords()).max(1e-12);
            // residual d_i - ||x - a_i||, gradient -(x - a_i)/||x - a_i||
            let g = DVector::from_iterator(q, x.iter().zip(a.coords()).map(|(xk, ak)| -(xk - ak) / r));
            let res = di - r;
            jtj += &g * g.transpose();
            jtr += &g * res;
        }
        let step = match jtj.clone().cholesky() {
            Some(ch) => ch.solve(&(-&jtr)),
            None => {
                regularized = true;
                let reg = jtj + DMatrix::identity(q, q) * 1e-8;
                match reg.lu().solve(&(-&jtr)) {
                    Some(s) => s,
                    None => break,
                }
            }
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xk, sk)| xk + alpha * sk).collect();
            let c = ls_cost(&trial, anchors, d);
            if c <= cost {
                accepted = Some((trial, c));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, c)) = accepted else { break };
        let moved = dist(&trial, &x);
        x = trial;
        cost = c;
        if moved < settings.tol {
            break;
        }
    }
    Ok(GaussNewtonResult {
        x: Point(x),
        iterations,
        regularized,
    })
}

pub fn gauss_newton_from_centroid(anchors: &[Point], d: &[f64]) -> Result<GaussNewtonResult> {
    let c = centroid(anchors);
    gauss_newton_ls(anchors, d, c.coords(), &GaussNewtonSettings::default())
}
