//! Monte Carlo harness: sweeps, shared realizations, RMSE and detection
//! statistics, and CSV output.
//!
//! Every trial gets its own RNG stream derived from the experiment seed, the
//! sweep index, the deployment index and the attacker re-selection index, so
//! results do not depend on scheduling. All enabled estimators consume the
//! same scenario and observations.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conic::FeasibilityReport;
use crate::crlb::{crlb_position, fim_attack_model};
use crate::estimator::{run_ccp, CcpSettings, StopReason};
use crate::measurement::{sample_ranges, RangeObservations};
use crate::oracle::{gauss_newton_from_centroid, grid_search, GridSpec};
use crate::par::{map_indexed, Execution};
use crate::scenario::{assign_attackers, generate_deployment, stream_rng, AttackerCountRule, Point, Scenario, ScenarioConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    N,
    Delta,
    Sigma,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::N => "N",
            SweepVariable::Delta => "Delta",
            SweepVariable::Sigma => "sigma",
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(SweepVariable::N),
            "delta" => Ok(SweepVariable::Delta),
            "sigma" => Ok(SweepVariable::Sigma),
            _ => Err(Error::Config(format!("unknown sweep variable {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    Sdp,
    GridOracle,
    LsBaseline,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Sdp => "sdp",
            EstimatorKind::GridOracle => "grid_oracle",
            EstimatorKind::LsBaseline => "ls_baseline",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdp" => Ok(EstimatorKind::Sdp),
            "grid_oracle" | "grid" => Ok(EstimatorKind::GridOracle),
            "ls_baseline" | "ls" => Ok(EstimatorKind::LsBaseline),
            _ => Err(Error::Config(format!("unknown estimator {s}"))),
        }
    }
}

/// Parameters held fixed while one of them is swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub n: usize,
    pub q: usize,
    pub b: f64,
    pub delta: f64,
    pub sigma: f64,
    pub k: usize,
}

impl Default for FixedParams {
    fn default() -> Self {
        Self {
            n: 10,
            q: 2,
            b: 100.0,
            delta: 20.0,
            sigma: 15.0,
            k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub fixed: FixedParams,
    /// Node deployments per sweep value.
    pub n_deployments: usize,
    /// Attacker re-selections per deployment.
    pub n_choices: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    /// CCP settings; `tau` is overridden by `B / 200` unless `tau_override` is set.
    pub ccp: CcpSettings,
    pub tau_override: Option<f64>,
    pub grid_resolution: usize,
    pub attacker_rule: AttackerCountRule,
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweep_variable: SweepVariable::Sigma,
            sweep_values: vec![15.0],
            fixed: FixedParams::default(),
            n_deployments: 100,
            n_choices: 5,
            seed: 1,
            estimators: vec![EstimatorKind::Sdp, EstimatorKind::LsBaseline],
            ccp: CcpSettings::default(),
            tau_override: None,
            grid_resolution: 401,
            attacker_rule: AttackerCountRule::UniformOneToHalf,
            execution: Execution::default(),
        }
    }
}

/// Settings of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParams {
    pub n: usize,
    pub q: usize,
    pub b: f64,
    pub delta: f64,
    pub sigma: f64,
    pub k: usize,
}

impl ExperimentConfig {
    pub fn point_params(&self, value: f64) -> Result<PointParams> {
        let f = &self.fixed;
        let mut p = PointParams {
            n: f.n,
            q: f.q,
            b: f.b,
            delta: f.delta,
            sigma: f.sigma,
            k: f.k,
        };
        match self.sweep_variable {
            SweepVariable::N => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Config(format!("N sweep values must be positive integers, got {value}")));
                }
                p.n = value as usize;
            }
            SweepVariable::Delta => p.delta = value,
            SweepVariable::Sigma => p.sigma = value,
        }
        ScenarioConfig {
            n: p.n,
            q: p.q,
            b: p.b,
            delta_cap: p.delta,
            attacker_count_rule: self.attacker_rule,
            seed: self.seed,
        }
        .validate()?;
        if !(p.sigma >= 0.0) || p.k == 0 {
            return Err(Error::Config("need sigma >= 0 and K >= 1".into()));
        }
        if self.ccp.normalize && p.sigma == 0.0 && self.estimators.contains(&EstimatorKind::Sdp) {
            return Err(Error::Config("sigma normalization needs sigma > 0".into()));
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.n_deployments == 0 || self.n_choices == 0 {
            return Err(Error::Config("deployment and choice counts must be at least 1".into()));
        }
        if self.n_deployments >= 1 << 24 || self.n_choices >= (1 << 24) - 1 || self.sweep_values.len() >= 1 << 15 {
            return Err(Error::Config("experiment too large for the stream layout".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators enabled".into()));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Config("grid resolution must be at least 2".into()));
        }
        self.ccp.validate()?;
        for v in &self.sweep_values {
            self.point_params(*v)?;
        }
        Ok(())
    }

    pub fn trials_per_value(&self) -> usize {
        self.n_deployments * self.n_choices
    }
}

/// Stream id of a deployment (`choice = None`) or of one trial on it.
pub fn stream_id(sweep_index: usize, deployment: usize, choice: Option<usize>) -> u64 {
    ((sweep_index as u64 + 1) << 48) | ((deployment as u64) << 24) | choice.map_or(0, |c| c as u64 + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpDiagnostics {
    /// Surrogate objective per CCP iteration.
    pub objectives: Vec<f64>,
    pub relaxed_objective: f64,
    pub feasibility: Vec<FeasibilityReport>,
    pub stop_reason: StopReason,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutcome {
    pub kind: EstimatorKind,
    pub x_hat: Option<Point>,
    pub sq_error: Option<f64>,
    /// Detected attackers, for estimators that detect.
    pub detected: Option<Vec<usize>>,
    /// Digest of the scenario and observations this estimator consumed.
    pub input_digest: u64,
    pub failure: Option<String>,
    pub sdp: Option<SdpDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub sweep_index: usize,
    pub value: f64,
    pub deployment: usize,
    pub choice: usize,
    pub n_anchors: usize,
    pub attackers: Vec<usize>,
    pub deltas: Vec<f64>,
    pub instance_digest: u64,
    pub crlb_m2: f64,
    pub outcomes: Vec<EstimatorOutcome>,
}

impl TrialRecord {
    pub fn outcome(&self, kind: EstimatorKind) -> Option<&EstimatorOutcome> {
        self.outcomes.iter().find(|o| o.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_var: String,
    pub value: f64,
    pub estimator: String,
    pub rmse_m: f64,
    pub p_cd: f64,
    pub fa_rate: f64,
    pub crlb_m2: f64,
    pub n_trials: usize,
    pub n_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<SummaryRow>,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentResult {
    /// Failed SDP solves over SDP trials; 0 when the SDP is not enabled.
    pub fn sdp_failure_rate(&self) -> f64 {
        let (total, failed) = self
            .rows
            .iter()
            .filter(|r| r.estimator == EstimatorKind::Sdp.as_str())
            .fold((0, 0), |(t, f), r| (t + r.n_trials, f + r.n_failures));
        if total == 0 {
            0.0
        } else {
            failed as f64 / total as f64
        }
    }
}

pub fn instance_digest(s: &Scenario, obs: &RangeObservations) -> u64 {
    let mut h = DefaultHasher::new();
    for p in s.anchors.iter().chain(std::iter::once(&s.target)) {
        for c in p.coords() {
            c.to_bits().hash(&mut h);
        }
    }
    s.attackers.hash(&mut h);
    for v in s.deltas.iter().chain(obs.samples.iter().flatten()).chain(&obs.medians) {
        v.to_bits().hash(&mut h);
    }
    obs.sigma.to_bits().hash(&mut h);
    h.finish()
}

/// Pooled anchor-level detection rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStats {
    /// Detected attackers over all attackers; NaN when there are none.
    pub p_cd: f64,
    /// Flagged genuine anchors over all genuine anchors; NaN when there are none.
    pub false_alarm_rate: f64,
}

/// `detected[t]`, `truth[t]` and `n_anchors[t]` describe trial `t`.
pub fn compute_detection_stats(detected: &[Vec<usize>], truth: &[Vec<usize>], n_anchors: &[usize]) -> DetectionStats {
    let (mut hits, mut positives, mut false_alarms, mut negatives) = (0usize, 0usize, 0usize, 0usize);
    for ((det, tru), &n) in detected.iter().zip(truth).zip(n_anchors) {
        hits += det.iter().filter(|i| tru.contains(i)).count();
        false_alarms += det.iter().filter(|i| !tru.contains(i)).count();
        positives += tru.len();
        negatives += n - tru.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    DetectionStats {
        p_cd: ratio(hits, positives),
        false_alarm_rate: ratio(false_alarms, negatives),
    }
}

/// `sqrt(mean(sq_errors))`; NaN for an empty slice.
pub fn rmse(sq_errors: &[f64]) -> f64 {
    if sq_errors.is_empty() {
        return f64::NAN;
    }
    (sq_errors.iter().sum::<f64>() / sq_errors.len() as f64).sqrt()
}

fn failed_outcome(kind: EstimatorKind, digest: u64, msg: String) -> EstimatorOutcome {
    EstimatorOutcome {
        kind,
        x_hat: None,
        sq_error: None,
        detected: None,
        input_digest: digest,
        failure: Some(msg),
        sdp: None,
    }
}

fn run_estimator(
    kind: EstimatorKind,
    cfg: &ExperimentConfig,
    p: &PointParams,
    s: &Scenario,
    obs: &RangeObservations,
) -> EstimatorOutcome {
    let digest = instance_digest(s, obs);
    let d = &obs.medians;
    let finish = |x: Point, detected: Option<Vec<usize>>, sdp: Option<SdpDiagnostics>| {
        if !x.is_finite() {
            return failed_outcome(kind, digest, "non-finite estimate".into());
        }
        let err = x.distance(&s.target);
        EstimatorOutcome {
            kind,
            sq_error: Some(err * err),
            x_hat: Some(x),
            detected,
            input_digest: digest,
            failure: None,
            sdp,
        }
    };
    match kind {
        EstimatorKind::Sdp => {
            let mut settings = cfg.ccp.clone();
            settings.tau = cfg.tau_override.unwrap_or(p.b / 200.0);
            match run_ccp(&s.anchors, d, obs.sigma, &settings) {
                Ok(r) => {
                    let diag = SdpDiagnostics {
                        objectives: r.iterate_trace.iter().map(|t| t.surrogate_objective).collect(),
                        relaxed_objective: r.final_record().relaxed_objective,
                        feasibility: r.iterate_trace.iter().map(|t| t.feasibility.clone()).collect(),
                        stop_reason: r.stop_reason,
                        iterations: r.iterations_used,
                    };
                    finish(r.x_hat, Some(r.detected), Some(diag))
                }
                Err(e) => failed_outcome(kind, digest, e.to_string()),
            }
        }
        EstimatorKind::GridOracle => {
            let scale = if cfg.ccp.normalize { obs.sigma } else { 1.0 };
            let anchors: Vec<Point> = s.anchors.iter().map(|a| a.scaled(1.0 / scale)).collect();
            let dn: Vec<f64> = d.iter().map(|v| v / scale).collect();
            let spec = GridSpec::square(p.b, p.q, cfg.grid_resolution).scaled(1.0 / scale);
            match grid_search(&anchors, &dn, &spec, Execution::Sequential) {
                Ok(g) => {
                    let detected = anchors
                        .iter()
                        .zip(&dn)
                        .enumerate()
                        .filter(|(_, (a, di))| (*di - g.x.distance(a)).powi(2) > cfg.ccp.detection_threshold)
                        .map(|(i, _)| i)
                        .collect();
                    finish(g.x.scaled(scale), Some(detected), None)
                }
                Err(e) => failed_outcome(kind, digest, e.to_string()),
            }
        }
        EstimatorKind::LsBaseline => match gauss_newton_from_centroid(&s.anchors, d) {
            Ok(r) => finish(r.x, None, None),
            Err(e) => failed_outcome(kind, digest, e.to_string()),
        },
    }
}

/// Builds the realization of one trial.
pub fn trial_instance(
    cfg: &ExperimentConfig,
    sweep_index: usize,
    deployment: usize,
    choice: usize,
) -> Result<(PointParams, Scenario, RangeObservations)> {
    let value = cfg.sweep_values[sweep_index];
    let p = cfg.point_params(value)?;
    let scfg = ScenarioConfig {
        n: p.n,
        q: p.q,
        b: p.b,
        delta_cap: p.delta,
        attacker_count_rule: cfg.attacker_rule,
        seed: cfg.seed,
    };
    let mut dep_rng = stream_rng(cfg.seed, stream_id(sweep_index, deployment, None));
    let base = generate_deployment(&scfg, &mut dep_rng)?;
    let mut rng = stream_rng(cfg.seed, stream_id(sweep_index, deployment, Some(choice)));
    let s = assign_attackers(&base, cfg.attacker_rule, p.delta, &mut rng);
    let obs = sample_ranges(&s, p.sigma, p.k, &mut rng)?;
    Ok((p, s, obs))
}

fn run_trial(cfg: &ExperimentConfig, sweep_index: usize, deployment: usize, choice: usize) -> Result<TrialRecord> {
    let (p, s, obs) = trial_instance(cfg, sweep_index, deployment, choice)?;
    let crlb_m2 = if p.sigma > 0.0 {
        let eff = p.sigma / (p.k as f64).sqrt();
        fim_attack_model(&s.target, &s.anchors, eff, &s.attackers)
            .and_then(|f| crlb_position(&f))
            .unwrap_or(f64::NAN)
    } else {
        0.0
    };
    let outcomes = cfg
        .estimators
        .iter()
        .map(|&kind| run_estimator(kind, cfg, &p, &s, &obs))
        .collect();
    Ok(TrialRecord {
        sweep_index,
        value: cfg.sweep_values[sweep_index],
        deployment,
        choice,
        n_anchors: s.n(),
        attackers: s.attackers.clone(),
        deltas: s.deltas.clone(),
        instance_digest: instance_digest(&s, &obs),
        crlb_m2,
        outcomes,
    })
}

/// Runs every sweep value over `n_deployments x n_choices` shared realizations.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let per_value = cfg.trials_per_value();
    let total = per_value * cfg.sweep_values.len();
    let trials: Vec<TrialRecord> = map_indexed(cfg.execution, total, |t| {
        let sweep_index = t / per_value;
        let within = t % per_value;
        run_trial(cfg, sweep_index, within / cfg.n_choices, within % cfg.n_choices)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let rows = summarize(cfg, &trials);
    Ok(ExperimentResult { rows, trials })
}

/// One summary row per (sweep value, estimator), in sweep then estimator order.
pub fn summarize(cfg: &ExperimentConfig, trials: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (si, &value) in cfg.sweep_values.iter().enumerate() {
        let group: Vec<&TrialRecord> = trials.iter().filter(|t| t.sweep_index == si).collect();
        let finite: Vec<f64> = group.iter().map(|t| t.crlb_m2).filter(|c| c.is_finite()).collect();
        let crlb = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        for &kind in &cfg.estimators {
            let outs: Vec<(&TrialRecord, &EstimatorOutcome)> =
                group.iter().filter_map(|t| t.outcome(kind).map(|o| (*t, o))).collect();
            let sq: Vec<f64> = outs.iter().filter_map(|(_, o)| o.sq_error).collect();
            let n_failures = outs.iter().filter(|(_, o)| o.failure.is_some()).count();
            let ok: Vec<&(&TrialRecord, &EstimatorOutcome)> =
                outs.iter().filter(|(_, o)| o.detected.is_some()).collect();
            let stats = if ok.is_empty() {
                DetectionStats {
                    p_cd: f64::NAN,
                    false_alarm_rate: f64::NAN,
                }
            } else {
                let det: Vec<Vec<usize>> = ok.iter().map(|(_, o)| o.detected.clone().unwrap()).collect();
                let tru: Vec<Vec<usize>> = ok.iter().map(|(t, _)| t.attackers.clone()).collect();
                let ns: Vec<usize> = ok.iter().map(|(t, _)| t.n_anchors).collect();
                compute_detection_stats(&det, &tru, &ns)
            };
            rows.push(SummaryRow {
                sweep_var: cfg.sweep_variable.as_str().to_string(),
                value,
                estimator: kind.as_str().to_string(),
                rmse_m: rmse(&sq),
                p_cd: stats.p_cd,
                fa_rate: stats.false_alarm_rate,
                crlb_m2: crlb,
                n_trials: outs.len(),
                n_failures,
            });
        }
    }
    rows
}

pub const CSV_HEADER: &str = "sweep_var,value,estimator,rmse_m,p_cd,fa_rate,crlb_m2,n_trials,n_failures";

/// UTF-8, LF line endings, `.` decimal point, shortest round-trip floats.
pub fn to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.sweep_var, r.value, r.estimator, r.rmse_m, r.p_cd, r.fa_rate, r.crlb_m2, r.n_trials, r.n_failures
        );
    }
    out
}

pub fn emit_csv(res: &ExperimentResult, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(&res.rows))?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: "unexpected CSV header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let err = |msg: &str| Error::Parse {
                line: i + 2,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(err("expected 9 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            let count = |s: &str| s.parse::<usize>().map_err(|_| err("bad count"));
            Ok(SummaryRow {
                sweep_var: f[0].to_string(),
                value: num(f[1])?,
                estimator: f[2].to_string(),
                rmse_m: num(f[3])?,
                p_cd: num(f[4])?,
                fa_rate: num(f[5])?,
                crlb_m2: num(f[6])?,
                n_trials: count(f[7])?,
                n_failures: count(f[8])?,
            })
        })
        .collect()
}

/// Paired bootstrap of `rmse(a) / rmse(b)` over trials; returns the sorted
/// replicate ratios.
pub fn bootstrap_rmse_ratio(a_sq: &[f64], b_sq: &[f64], replicates: usize, seed: u64) -> Vec<f64> {
    assert_eq!(a_sq.len(), b_sq.len(), "paired samples");
    let n = a_sq.len();
    let mut rng = stream_rng(seed, 0);
    let mut out: Vec<f64> = (0..replicates)
        .map(|_| {
            let (mut sa, mut sb) = (0.0, 0.0);
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                sa += a_sq[i];
                sb += b_sq[i];
            }
            (sa / sb).sqrt()
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Empirical quantile of sorted data (nearest rank).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}
