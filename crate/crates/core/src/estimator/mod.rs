//! The variance-dilation SDP estimator.
//!
//! Each corrupted link is treated as genuine with noise variance
//! `rho_i * sigma^2`, `rho_i >= 1`. With `y_i = d_i - ||x - a_i||`,
//! `e_i = y_i^2 / rho_i` and the lifts `X = x x'`, `Y = y y'`, the
//! log-likelihood splits into convex terms plus the concave `ln Y_ii`, which
//! the convex-concave procedure replaces by its tangent at the previous
//! iterate. Every CCP step is then the semidefinite program
//!
//! ```text
//! minimize    sum e_i - sum ln e_i + sum Y_ii / Yhat_ii
//! subject to  e_i >= 0,  Y_ii >= e_i,
//!             Y_ii = tr X - 2 a_i'x + ||a_i||^2 + 2 d_i y_i - d_i^2,
//!             Y_ij >= |tr X - a_j'x - a_i'x + a_j'a_i| + d_j y_i + d_i y_j - d_i d_j,
//!             [Y y; y' 1] PSD,  [X x; x' 1] PSD,
//! ```
//!
//! and an anchor is flagged when `y_i^2 / e_i > 1` at the final iterate.
//! The per-iteration cost is dominated by the `(N+1)`-order PSD block; a
//! worst-case interior-point bound is `O(T * N^4.5)`.
//!
//! Coordinates are divided by `sigma` before assembly so that genuine links
//! have unit residual variance (see [`normalize_instance`]).

mod ccp;
mod subproblem;

pub use ccp::{run_ccp, CcpSettings, EstimateReport, IterateRecord, StopReason};
pub use subproblem::{build_ccp_subproblem, build_ccp_subproblem_about, Expansion, rank_one_point, SubproblemLayout};

use crate::scenario::Point;
use crate::{Error, Result};

/// Entries of `e` below this are raised to it before forming `y^2 / e`.
pub const E_FLOOR: f64 = 1e-12;

/// Anchors and medians expressed in units of `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledInstance {
    pub anchors: Vec<Point>,
    pub d: Vec<f64>,
    pub scale: f64,
}

/// Divides anchors and ranges by `sigma`.
pub fn normalize_instance(anchors: &[Point], d: &[f64], sigma: f64) -> Result<ScaledInstance> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Precondition(format!(
            "normalization needs sigma > 0, got {sigma}"
        )));
    }
    Ok(ScaledInstance {
        anchors: anchors.iter().map(|a| a.scaled(1.0 / sigma)).collect(),
        d: d.iter().map(|v| v / sigma).collect(),
        scale: sigma,
    })
}

/// Anchors whose dilation estimate `y_i^2 / e_i` strictly exceeds `threshold`.
/// `y_hat` must be in normalized units.
pub fn detect(y_hat: &[f64], e_hat: &[f64], threshold: f64) -> Vec<usize> {
    dilation_estimates(y_hat, e_hat)
        .into_iter()
        .enumerate()
        .filter(|&(_, r)| r > threshold)
        .map(|(i, _)| i)
        .collect()
}

pub fn dilation_estimates(y_hat: &[f64], e_hat: &[f64]) -> Vec<f64> {
    y_hat
        .iter()
        .zip(e_hat)
        .map(|(y, e)| y * y / e.max(E_FLOOR))
        .collect()
}
