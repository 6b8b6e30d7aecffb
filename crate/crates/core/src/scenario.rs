//! Random node deployments and attacker assignment.
//!
//! Randomness comes from [`SimRng`] (ChaCha8). A scenario is fully determined by
//! the seed and a stream id, and the draw order is fixed:
//!
//! 1. [`generate_deployment`]: anchors `0..N` coordinate by coordinate, then
//!    the target. The whole deployment is redrawn if the target lies within
//!    `1e-3 * B` of an anchor.
//! 2. [`assign_attackers`]: the attacker count, then the attacker subset, then
//!    for each attacker in ascending index order the exponential scale
//!    `U[0, delta_cap)`, a unit exponential draw and the sign.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type SimRng = ChaCha8Rng;

/// Builds the generator for one independent stream of a seeded experiment.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A position in meters; dimension 2 or 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Point) -> f64 {
        dist(&self.0, &other.0)
    }

    pub fn scaled(&self, factor: f64) -> Point {
        Point(self.0.iter().map(|c| c * factor).collect())
    }

    pub fn translated(&self, shift: &[f64]) -> Point {
        Point(self.0.iter().zip(shift).map(|(c, s)| c + s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn centroid(points: &[Point]) -> Point {
    let q = points.first().map_or(0, Point::dim);
    let mut c = vec![0.0; q];
    for p in points {
        for (ci, pi) in c.iter_mut().zip(&p.0) {
            *ci += pi;
        }
    }
    let n = points.len().max(1) as f64;
    Point(c.into_iter().map(|v| v / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AttackerCountRule {
    /// Uniform on `{1, ..., floor(N/2)}`.
    #[default]
    UniformOneToHalf,
    /// Exactly this many attackers (clamped to `floor(N/2)`).
    Fixed(usize),
    /// No attackers.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub q: usize,
    pub b: f64,
    pub delta_cap: f64,
    pub attacker_count_rule: AttackerCountRule,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 10,
            q: 2,
            b: 100.0,
            delta_cap: 20.0,
            attacker_count_rule: AttackerCountRule::UniformOneToHalf,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q == 2 || self.q == 3) {
            return Err(Error::Config(format!("dimension q must be 2 or 3, got {}", self.q)));
        }
        if self.n < self.q + 1 {
            return Err(Error::Config(format!(
                "need at least q+1 = {} anchors, got {}",
                self.q + 1,
                self.n
            )));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::Config(format!("area side must be positive, got {}", self.b)));
        }
        if !(self.delta_cap >= 0.0 && self.delta_cap.is_finite()) {
            return Err(Error::Config(format!(
                "attack cap must be non-negative, got {}",
                self.delta_cap
            )));
        }
        Ok(())
    }
}

/// One deployment: anchors, target and the attack applied to each anchor.
///
/// Attacker indices are 0-based everywhere in this crate and in its file formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub anchors: Vec<Point>,
    pub target: Point,
    pub attackers: Vec<usize>,
    pub deltas: Vec<f64>,
    pub b: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.anchors.len()
    }

    pub fn q(&self) -> usize {
        self.target.dim()
    }

    pub fn true_distances(&self) -> Vec<f64> {
        self.anchors.iter().map(|a| self.target.distance(a)).collect()
    }

    pub fn is_attacker(&self, i: usize) -> bool {
        self.attackers.binary_search(&i).is_ok()
    }

    /// Checks the structural invariants of a scenario.
    pub fn validate(&self) -> Result<()> {
        let q = self.q();
        if !(q == 2 || q == 3) {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {q}")));
        }
        if self.n() < q + 1 {
            return Err(Error::Config(format!("need at least {} anchors", q + 1)));
        }
        if self.anchors.iter().any(|a| a.dim() != q || !a.is_finite()) || !self.target.is_finite() {
            return Err(Error::Config("anchor dimension mismatch or non-finite coordinate".into()));
        }
        if self.deltas.len() != self.n() {
            return Err(Error::Config("deltas must have one entry per anchor".into()));
        }
        if self.attackers.len() > self.n() / 2 {
            return Err(Error::Config("more than floor(N/2) attackers".into()));
        }
        if self.attackers.windows(2).any(|w| w[0] >= w[1]) || self.attackers.iter().any(|&i| i >= self.n()) {
            return Err(Error::Config("attacker set must be sorted, unique and in range".into()));
        }
        for (i, d) in self.deltas.iter().enumerate() {
            if *d != 0.0 && !self.is_attacker(i) {
                return Err(Error::Config(format!("anchor {i} has an attack but is not an attacker")));
            }
        }
        Ok(())
    }
}

/// Draws anchors and target i.i.d. uniform on `[0, B]^q`; no attackers.
pub fn generate_deployment(config: &ScenarioConfig, rng: &mut SimRng) -> Result<Scenario> {
    config.validate()?;
    let (n, q, b) = (config.n, config.q, config.b);
    let draw = |rng: &mut SimRng| Point((0..q).map(|_| rng.gen::<f64>() * b).collect());
    loop {
        let anchors: Vec<Point> = (0..n).map(|_| draw(rng)).collect();
        let target = draw(rng);
        let min_dist = anchors
            .iter()
            .map(|a| a.distance(&target))
            .fold(f64::INFINITY, f64::min);
        if min_dist >= 1e-3 * b {
            return Ok(Scenario {
                anchors,
                target,
                attackers: Vec::new(),
                deltas: vec![0.0; n],
                b,
                seed: config.seed,
            });
        }
    }
}

/// Number of attackers the rule prescribes for `n` anchors.
pub fn draw_attacker_count(rule: AttackerCountRule, n: usize, rng: &mut SimRng) -> usize {
    let half = n / 2;
    match rule {
        AttackerCountRule::UniformOneToHalf if half >= 1 => rng.gen_range(1..=half),
        AttackerCountRule::UniformOneToHalf => 0,
        AttackerCountRule::Fixed(k) => k.min(half),
        AttackerCountRule::None => 0,
    }
}

/// Re-selects the attacker set and draws `delta_i = ±scale * E`, with
/// `scale ~ U[0, delta_cap)` in meters and `E` a unit exponential.
pub fn assign_attackers(
    s: &Scenario,
    rule: AttackerCountRule,
    delta_cap: f64,
    rng: &mut SimRng,
) -> Scenario {
    let n = s.n();
    let count = draw_attacker_count(rule, n, rng);
    let mut attackers = index::sample(rng, n, count).into_vec();
    attackers.sort_unstable();
    let mut deltas = vec![0.0; n];
    for &i in &attackers {
        let scale = rng.gen::<f64>() * delta_cap;
        let magnitude: f64 = Exp1.sample(rng);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        deltas[i] = sign * scale * magnitude;
    }
    Scenario {
        attackers,
        deltas,
        ..s.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, b: f64) -> ScenarioConfig {
        ScenarioConfig {
            n,
            q: 2,
            b,
            ..Default::default()
        }
    }

    #[test]
    fn deployment_inside_box() {
        let mut rng = stream_rng(7, 0);
        let s = generate_deployment(&cfg(10, 100.0), &mut rng).unwrap();
        assert_eq!(s.n(), 10);
        for p in s.anchors.iter().chain(std::iter::once(&s.target)) {
            assert!(p.coords().iter().all(|&c| (0.0..=100.0).contains(&c)));
        }
        assert!(s.attackers.is_empty());
        assert!(s.deltas.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn tiny_area_bounds_distances() {
        let mut rng = stream_rng(1, 3);
        let s = generate_deployment(&cfg(3, 0.001), &mut rng).unwrap();
        let pts: Vec<&Point> = s.anchors.iter().chain(std::iter::once(&s.target)).collect();
        for a in &pts {
            for b in &pts {
                assert!(a.distance(b) <= 2f64.sqrt() * 0.001 + 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_deployment(&cfg(10, 100.0), &mut stream_rng(42, 5)).unwrap();
        let b = generate_deployment(&cfg(10, 100.0), &mut stream_rng(42, 5)).unwrap();
        assert_eq!(a, b);
        let c = generate_deployment(&cfg(10, 100.0), &mut stream_rng(42, 6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(matches!(
            generate_deployment(&cfg(2, 100.0), &mut stream_rng(0, 0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_deployment(&cfg(5, 0.0), &mut stream_rng(0, 0)),
            Err(Error::Config(_))
        ));
        let mut c = cfg(5, 1.0);
        c.q = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_cap_is_harmless() {
        let mut rng = stream_rng(3, 0);
        let s = generate_deployment(&cfg(10, 100.0), &mut rng).unwrap();
        for _ in 0..50 {
            let a = assign_attackers(&s, AttackerCountRule::UniformOneToHalf, 0.0, &mut rng);
            assert!(!a.attackers.is_empty());
            assert!(a.deltas.iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn attacker_count_within_half() {
        let mut rng = stream_rng(11, 0);
        let s = generate_deployment(&cfg(10, 100.0), &mut rng).unwrap();
        for _ in 0..2000 {
            let a = assign_attackers(&s, AttackerCountRule::UniformOneToHalf, 20.0, &mut rng);
            assert!((1..=5).contains(&a.attackers.len()));
            a.validate().unwrap();
        }
    }

    #[test]
    fn attacker_count_uniform_chi_square() {
        let mut rng = stream_rng(12, 0);
        let mut counts = [0usize; 5];
        let trials = 10_000;
        for _ in 0..trials {
            counts[draw_attacker_count(AttackerCountRule::UniformOneToHalf, 10, &mut rng) - 1] += 1;
        }
        let expected = trials as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 4 degrees of freedom, 99.9th percentile.
        assert!(chi2 < 18.47, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn mean_attack_magnitude_is_half_cap() {
        // E|delta| = E[scale] * E[Exp(1)] = delta_cap / 2.
        let mut rng = stream_rng(5, 0);
        let s = generate_deployment(&cfg(10, 100.0), &mut rng).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let a = assign_attackers(&s, AttackerCountRule::UniformOneToHalf, 20.0, &mut rng);
            for &i in &a.attackers {
                sum += a.deltas[i].abs();
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((mean - 10.0).abs() < 0.5, "mean |delta| = {mean}");
    }

    #[test]
    fn validate_catches_stray_delta() {
        let mut rng = stream_rng(9, 0);
        let mut s = generate_deployment(&cfg(6, 10.0), &mut rng).unwrap();
        s.deltas[2] = 1.0;
        assert!(s.validate().is_err());
        s.attackers = vec![2];
        assert!(s.validate().is_ok());
    }
}
