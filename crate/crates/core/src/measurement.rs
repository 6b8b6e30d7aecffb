//! Noisy, possibly spoofed range observations and their per-anchor medians.
//!
//! Sample model: `d_ik = ||x - a_i|| + delta_i + n_ik`, `n_ik ~ N(0, sigma^2)`.
//! Negative samples are kept as drawn.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scenario::{Point, Scenario, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RangeObservations {
    /// `N` rows of `K` samples each.
    pub samples: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    pub sigma: f64,
    pub k: usize,
}

impl RangeObservations {
    pub fn from_samples(samples: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let k = samples.first().map_or(0, Vec::len);
        if k == 0 || samples.iter().any(|r| r.len() != k) {
            return Err(Error::Config("every anchor needs the same K >= 1 samples".into()));
        }
        if !(sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be non-negative, got {sigma}")));
        }
        let medians = samples.iter().map(|r| median(r)).collect();
        Ok(Self {
            samples,
            medians,
            sigma,
            k,
        })
    }
}

/// Samples `k` ranges per anchor with a common noise level.
pub fn sample_ranges(s: &Scenario, sigma: f64, k: usize, rng: &mut SimRng) -> Result<RangeObservations> {
    let sigmas = vec![sigma; s.n()];
    let mut obs = sample_ranges_per_link(s, &sigmas, k, rng)?;
    obs.sigma = sigma;
    Ok(obs)
}

/// Same as [`sample_ranges`] with one noise level per link. `sigma` in the
/// result is the largest of them; the estimator assumes a common level.
pub fn sample_ranges_per_link(
    s: &Scenario,
    sigmas: &[f64],
    k: usize,
    rng: &mut SimRng,
) -> Result<RangeObservations> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if sigmas.len() != s.n() || sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Config("need one non-negative sigma per anchor".into()));
    }
    let samples: Vec<Vec<f64>> = s
        .anchors
        .iter()
        .zip(&s.deltas)
        .zip(sigmas)
        .map(|((a, delta), sigma)| {
            let base = s.target.distance(a) + delta;
            (0..k)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    base + sigma * z
                })
                .collect()
        })
        .collect();
    let sigma = sigmas.iter().cloned().fold(0.0, f64::max);
    RangeObservations::from_samples(samples, sigma)
}

/// Exact median; midpoint of the two central order statistics for even length.
pub fn median(row: &[f64]) -> f64 {
    assert!(!row.is_empty(), "median of an empty row");
    let mut v = row.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn aggregate_median(obs: &RangeObservations) -> Vec<f64> {
    obs.samples.iter().map(|r| median(r)).collect()
}

/// On-disk form of a scenario, optionally with its observations.
///
/// Keys: `n, q, b, anchors, target, attackers, deltas, seed` and, when
/// observations are attached, `sigma, k, samples` (row-major, `n * k` values).
/// Attacker indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub n: usize,
    pub q: usize,
    pub b: f64,
    pub anchors: Vec<Point>,
    pub target: Point,
    pub attackers: Vec<usize>,
    pub deltas: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

impl InstanceRecord {
    pub fn new(s: &Scenario, obs: Option<&RangeObservations>) -> Self {
        Self {
            n: s.n(),
            q: s.q(),
            b: s.b,
            anchors: s.anchors.clone(),
            target: s.target.clone(),
            attackers: s.attackers.clone(),
            deltas: s.deltas.clone(),
            seed: s.seed,
            sigma: obs.map(|o| o.sigma),
            k: obs.map(|o| o.k),
            samples: obs.map(|o| o.samples.iter().flatten().copied().collect()),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let s = Scenario {
            anchors: self.anchors.clone(),
            target: self.target.clone(),
            attackers: self.attackers.clone(),
            deltas: self.deltas.clone(),
            b: self.b,
            seed: self.seed,
        };
        if s.n() != self.n || s.q() != self.q {
            return Err(Error::Config("n/q do not match the stored points".into()));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn observations(&self) -> Result<Option<RangeObservations>> {
        match (&self.samples, self.k, self.sigma) {
            (Some(flat), Some(k), Some(sigma)) => {
                if k == 0 || flat.len() != self.n * k {
                    return Err(Error::Config(format!(
                        "expected {} samples, found {}",
                        self.n * k,
                        flat.len()
                    )));
                }
                let rows = flat.chunks(k).map(<[f64]>::to_vec).collect();
                RangeObservations::from_samples(rows, sigma).map(Some)
            }
            (None, _, _) => Ok(None),
            _ => Err(Error::Config("samples need both k and sigma".into())),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
