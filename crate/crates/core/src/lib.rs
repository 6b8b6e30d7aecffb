//! Secure range-based localization under spoofing attacks.
//!
//! Corrupted range links are modelled as genuine links whose noise variance is
//! dilated by an unknown factor `rho_i >= 1`. The resulting maximum-likelihood
//! problem is convexified with a convex-concave iteration whose subproblems are
//! semidefinite programs with exponential-cone log epigraphs. The same solution
//! yields a per-anchor attacker detector (`y_i^2 / e_i > 1`).
//!
//! Modules:
//! - [`scenario`]: random deployments and attacker assignment.
//! - [`measurement`]: noisy, possibly spoofed range samples and their medians.
//! - [`conic`]: conic program representation, feasibility audit and solver backend.
//! - [`estimator`]: subproblem assembly, the CCP loop and the detector.
//! - [`oracle`]: brute-force profile-likelihood grid search and a Gauss-Newton baseline.
//! - [`crlb`]: Fisher information and Cramér-Rao bounds for both measurement models.
//! - [`bench`]: Monte Carlo harness, detection statistics and CSV output.

pub mod bench;
pub mod conic;
pub mod crlb;
pub mod error;
pub mod estimator;
pub mod measurement;
pub mod oracle;
pub mod par;
pub mod scenario;

pub use error::{Error, Result};
pub use scenario::{Point, Scenario, ScenarioConfig};
