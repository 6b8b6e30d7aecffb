//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p secloc --test acceptance`.

use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use secloc::bench::{
    bootstrap_rmse_ratio, quantile, run_experiment, EstimatorKind, ExperimentConfig, ExperimentResult, FixedParams,
    SweepVariable,
};
use secloc::conic::FeasibilityReport;
use secloc::crlb::{crlb_position, fim_attack_model};
use secloc::estimator::{run_ccp, CcpSettings, EstimateReport};
use secloc::measurement::sample_ranges;
use secloc::oracle::{grid_search, profile_objective, GridSpec};
use secloc::par::Execution;
use secloc::scenario::{assign_attackers, generate_deployment, stream_rng, AttackerCountRule, Point, Scenario};
use secloc::ScenarioConfig;

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Audit {
    feasibility: Vec<FeasibilityReport>,
    /// Surrogate objective sequences, one per CCP run.
    objective_traces: Vec<Vec<f64>>,
}

impl Audit {
    fn record_report(&mut self, r: &EstimateReport) {
        self.feasibility.extend(r.iterate_trace.iter().map(|t| t.feasibility.clone()));
        self.objective_traces
            .push(r.iterate_trace.iter().map(|t| t.surrogate_objective).collect());
    }

    fn record_experiment(&mut self, res: &ExperimentResult) {
        for t in &res.trials {
            if let Some(diag) = t.outcome(EstimatorKind::Sdp).and_then(|o| o.sdp.as_ref()) {
                self.feasibility.extend(diag.feasibility.iter().cloned());
                self.objective_traces.push(diag.objectives.clone());
            }
        }
    }
}

fn instance(n: usize, sigma: f64, delta: f64, rule: AttackerCountRule, seed: u64, stream: u64) -> (Scenario, Vec<f64>) {
    let cfg = ScenarioConfig {
        n,
        q: 2,
        b: 100.0,
        delta_cap: delta,
        attacker_count_rule: rule,
        seed,
    };
    let mut rng = stream_rng(seed, stream);
    let base = generate_deployment(&cfg, &mut rng).unwrap();
    let s = assign_attackers(&base, rule, delta, &mut rng);
    let obs = sample_ranges(&s, sigma, 10, &mut rng).unwrap();
    (s, obs.medians)
}

fn noiseless_recovery(audit: &mut Audit) -> Outcome {
    let settings = CcpSettings::for_area(100.0);
    let (mut within, mut slowest, mut failures) = (0, 0.0f64, 0);
    for i in 0..50 {
        let (s, d) = instance(6, 1e-3, 0.0, AttackerCountRule::None, 101, i);
        let start = Instant::now();
        let r = run_ccp(&s.anchors, &d, 1e-3, &settings);
        slowest = slowest.max(start.elapsed().as_secs_f64());
        match r {
            Ok(r) => {
                if r.x_hat.distance(&s.target) <= 1e-2 {
                    within += 1;
                }
                audit.record_report(&r);
            }
            Err(_) => failures += 1,
        }
    }
    Outcome {
        id: "1",
        title: "noiseless-limit recovery",
        pass: within >= 49 && slowest < 2.0,
        detail: format!("{within}/50 within 1e-2 m, {failures} solver failures, slowest {slowest:.3} s"),
    }
}

fn relaxation_gap(audit: &mut Audit) -> Outcome {
    let (sigma, res) = (5.0, 401);
    let settings = CcpSettings::for_area(100.0);
    let cell = 100.0 / (res - 1) as f64;
    let spec = GridSpec::square(100.0, 2, res).scaled(1.0 / sigma);
    let (mut bound_ok, mut total, mut worst) = (0, 0, f64::NEG_INFINITY);
    let (mut close, mut clean_total) = (0, 0);
    for (rule, seed) in [(AttackerCountRule::UniformOneToHalf, 202), (AttackerCountRule::None, 203)] {
        for i in 0..100 {
            let (s, d) = instance(8, sigma, 20.0, rule, seed, i);
            let anchors: Vec<Point> = s.anchors.iter().map(|a| a.scaled(1.0 / sigma)).collect();
            let dn: Vec<f64> = d.iter().map(|v| v / sigma).collect();
            let g = grid_search(&anchors, &dn, &spec, Execution::Parallel).unwrap();
            total += 1;
            let Ok(r) = run_ccp(&s.anchors, &d, sigma, &settings) else {
                continue;
            };
            audit.record_report(&r);
            let gap = r.final_record().relaxed_objective - profile_objective(&g.x.0, &anchors, &dn);
            worst = worst.max(gap);
            if gap <= 1e-4 {
                bound_ok += 1;
            }
            if s.attackers.is_empty() {
                clean_total += 1;
                if r.x_hat.distance(&g.x.scaled(sigma)) <= 2.0 * cell {
                    close += 1;
                }
            }
        }
    }
    let frac = close as f64 / clean_total.max(1) as f64;
    Outcome {
        id: "2",
        title: "relaxation-gap audit",
        pass: bound_ok == total && clean_total > 0 && frac >= 0.9,
        detail: format!(
            "objective bound {bound_ok}/{total} (worst excess {worst:.3e}); attack-free within 2 cells {close}/{clean_total}"
        ),
    }
}

fn feasibility(audit: &Audit) -> Outcome {
    let n = audit.feasibility.len();
    let passed = audit
        .feasibility
        .iter()
        .filter(|f| f.tol <= 1e-6 && f.passed() && f.min_psd_eigenvalue() >= -1e-6)
        .count();
    let min_eig = audit
        .feasibility
        .iter()
        .map(FeasibilityReport::min_psd_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    Outcome {
        id: "3",
        title: "feasibility audit",
        pass: n > 0 && passed == n,
        detail: format!("{passed}/{n} solver primals pass at 1e-6, min PSD eigenvalue {min_eig:.3e}"),
    }
}

fn descent(audit: &Audit) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut bad = 0;
    for trace in &audit.objective_traces {
        for w in trace.windows(2) {
            let rise = w[1] - w[0];
            worst = worst.max(rise);
            if rise > 1e-6 {
                bad += 1;
            }
        }
    }
    Outcome {
        id: "4",
        title: "CCP descent",
        pass: !audit.objective_traces.is_empty() && bad == 0,
        detail: format!(
            "{} runs, {bad} steps rise by more than 1e-6 (largest step change {worst:.3e})",
            audit.objective_traces.len()
        ),
    }
}

/// Mean ranges of the attack model as a function of `(x, delta_M)`.
fn mean_ranges(theta: &[f64], anchors: &[Point], attackers: &[usize]) -> Vec<f64> {
    let x = &theta[..2];
    anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let r = ((x[0] - a.0[0]).powi(2) + (x[1] - a.0[1]).powi(2)).sqrt();
            r + attackers.iter().position(|&m| m == i).map_or(0.0, |k| theta[2 + k])
        })
        .collect()
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn crlb_cross_validation() -> Outcome {
    let sigma = 2.0;
    let (s, _) = instance(6, sigma, 20.0, AttackerCountRule::Fixed(2), 505, 0);
    // Genuine anchors' nuisance rows are decoupled; compare on [x, delta_M].
    let full = fim_attack_model(&s.target, &s.anchors, sigma, &s.attackers).unwrap().full();
    let idx: Vec<usize> = (0..2).chain(s.attackers.iter().map(|&i| 2 + i)).collect();
    let p = idx.len();
    let f = DMatrix::from_fn(p, p, |i, j| full[(idx[i], idx[j])]);
    let mut theta0 = s.target.0.clone();
    theta0.extend(s.attackers.iter().map(|&i| s.deltas[i]));
    let mu0 = mean_ranges(&theta0, &s.anchors, &s.attackers);

    // Deterministic part: Hessian of the expected negative log-likelihood
    // sum (mu(theta) - mu(theta0))^2 / (2 sigma^2) by central differences.
    let kl = |th: &[f64]| -> f64 {
        mean_ranges(th, &s.anchors, &s.attackers)
            .iter()
            .zip(&mu0)
            .map(|(m, m0)| (m - m0).powi(2))
            .sum::<f64>()
            / (2.0 * sigma * sigma)
    };
    let h = 1e-3;
    let mut hess = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let at = |si: f64, sj: f64| {
                let mut t = theta0.clone();
                t[i] += si * h;
                t[j] += sj * h;
                kl(&t)
            };
            hess[(i, j)] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
        }
    }
    let det_err = rel_frobenius(&hess, &f);

    // Simulated part: covariance of the finite-difference score.
    let mut rng = stream_rng(506, 0);
    let m = 40_000;
    let mut acc = DMatrix::zeros(p, p);
    let hs = 1e-5;
    for _ in 0..m {
        let d: Vec<f64> = mu0.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let ll = |th: &[f64]| -> f64 {
            -mean_ranges(th, &s.anchors, &s.attackers)
                .iter()
                .zip(&d)
                .map(|(mu, di)| (di - mu).powi(2))
                .sum::<f64>()
                / (2.0 * sigma * sigma)
        };
        let score: Vec<f64> = (0..p)
            .map(|i| {
                let (mut up, mut dn) = (theta0.clone(), theta0.clone());
                up[i] += hs;
                dn[i] -= hs;
                (ll(&up) - ll(&dn)) / (2.0 * hs)
            })
            .collect();
        for i in 0..p {
            for j in 0..p {
                acc[(i, j)] += score[i] * score[j];
            }
        }
    }
    let mc = acc / m as f64;
    let mc_err = rel_frobenius(&mc, &f);

    let cross: Vec<Point> = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
        .iter()
        .map(|c| Point::new(c.to_vec()))
        .collect();
    let cross_crlb = crlb_position(&fim_attack_model(&Point::zeros(2), &cross, 1.0, &[]).unwrap()).unwrap();
    Outcome {
        id: "5",
        title: "CRLB cross-validation",
        pass: det_err <= 1e-4 && mc_err <= 0.02 && (cross_crlb - 1.0).abs() <= 1e-12,
        detail: format!(
            "finite-difference rel err {det_err:.2e}, Monte Carlo rel err {mc_err:.2e}, cross case {cross_crlb}"
        ),
    }
}

fn robustness(audit: &mut Audit) -> Outcome {
    let cfg = ExperimentConfig {
        sweep_variable: SweepVariable::Sigma,
        sweep_values: vec![15.0],
        fixed: FixedParams {
            n: 10,
            q: 2,
            b: 100.0,
            delta: 30.0,
            sigma: 15.0,
            k: 10,
        },
        n_deployments: 100,
        n_choices: 5,
        seed: 606,
        estimators: vec![EstimatorKind::Sdp, EstimatorKind::LsBaseline],
        ..Default::default()
    };
    let res = run_experiment(&cfg).unwrap();
    audit.record_experiment(&res);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for t in &res.trials {
        let sdp = t.outcome(EstimatorKind::Sdp).and_then(|o| o.sq_error);
        let ls = t.outcome(EstimatorKind::LsBaseline).and_then(|o| o.sq_error);
        if let (Some(x), Some(y)) = (sdp, ls) {
            a.push(x);
            b.push(y);
        }
    }
    let ratio = (a.iter().sum::<f64>() / b.iter().sum::<f64>()).sqrt();
    let boot = bootstrap_rmse_ratio(&a, &b, 2000, 607);
    let upper = quantile(&boot, 0.95);
    Outcome {
        id: "6",
        title: "robustness benefit over least squares",
        pass: a.len() == res.trials.len() && upper <= 0.9,
        detail: format!(
            "{} paired trials, RMSE sdp {:.3} m vs ls {:.3} m, ratio {ratio:.3}, 95% bootstrap upper bound {upper:.3}",
            a.len(),
            (a.iter().sum::<f64>() / a.len() as f64).sqrt(),
            (b.iter().sum::<f64>() / b.len() as f64).sqrt()
        ),
    }
}

/// False-alarm rate observed on the first validated run, kept as a regression fixture.
const FA_RATE_FIXTURE: f64 = 0.1843;

fn detection_power(audit: &mut Audit) -> Outcome {
    let sigma = 1.0;
    let cfg = ExperimentConfig {
        sweep_variable: SweepVariable::Sigma,
        sweep_values: vec![sigma],
        fixed: FixedParams {
            n: 10,
            q: 2,
            b: 100.0,
            delta: 20.0,
            sigma,
            k: 10,
        },
        n_deployments: 100,
        n_choices: 5,
        seed: 707,
        estimators: vec![EstimatorKind::Sdp],
        ..Default::default()
    };
    let res = run_experiment(&cfg).unwrap();
    audit.record_experiment(&res);
    let (mut strong, mut hit) = (0, 0);
    for t in &res.trials {
        let Some(det) = t.outcome(EstimatorKind::Sdp).and_then(|o| o.detected.as_ref()) else {
            strong += t.attackers.iter().filter(|&&i| t.deltas[i].abs() > 5.0 * sigma).count();
            continue;
        };
        for &i in &t.attackers {
            if t.deltas[i].abs() > 5.0 * sigma {
                strong += 1;
                if det.contains(&i) {
                    hit += 1;
                }
            }
        }
    }
    let rate = hit as f64 / strong as f64;
    let fa = res.rows[0].fa_rate;
    let fixture_ok = (fa - FA_RATE_FIXTURE).abs() <= 5e-3;
    let fixture = format!(
        "fixture {FA_RATE_FIXTURE:.4}, {}",
        if fixture_ok { "matches" } else { "REGRESSED" }
    );
    Outcome {
        id: "7",
        title: "detection power",
        pass: strong > 0 && rate >= 0.9 && fixture_ok,
        detail: format!(
            "{hit}/{strong} attackers with |delta| > 5 sigma detected ({rate:.3}); P_CD {:.3}; false-alarm rate {fa:.4} ({fixture})",
            res.rows[0].p_cd
        ),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| -> Vec<u8> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_secloc"))
            .args([
                "bench",
                "--sweep",
                "sigma",
                "--values",
                "5,15",
                "--n",
                "6",
                "--nd",
                "4",
                "--nc",
                "2",
                "--seed",
                "808",
                "--grid-res",
                "101",
                "--estimators",
                "sdp,grid_oracle,ls_baseline",
                "--out",
            ])
            .arg(&out)
            .args(extra)
            .status()
            .unwrap();
        assert!(status.success(), "bench exited with {status}");
        std::fs::read(out).unwrap()
    };
    let first = run("a.csv", &[]);
    let second = run("b.csv", &[]);
    let sequential = run("c.csv", &["--sequential"]);
    Outcome {
        id: "8",
        title: "determinism",
        pass: !first.is_empty() && first == second && first == sequential,
        detail: format!(
            "{} bytes; repeat identical: {}; sequential identical: {}",
            first.len(),
            first == second,
            first == sequential
        ),
    }
}

fn parameter_conformance() -> Outcome {
    let ccp = CcpSettings::for_area(100.0);
    let exp = ExperimentConfig::default();
    let snapshot = format!(
        "Y0={}*I T={} tau={} x1={:?} K={} B={} N={} threshold={}",
        ccp.y_init_diag,
        ccp.max_iter,
        ccp.tau,
        [0.0; 2],
        exp.fixed.k,
        exp.fixed.b,
        exp.fixed.n,
        ccp.detection_threshold
    );
    let expected = "Y0=0.1*I T=3 tau=0.5 x1=[0.0, 0.0] K=10 B=100 N=10 threshold=1";
    let pass = snapshot == expected
        && CcpSettings::default() == ccp
        && CcpSettings::for_area(250.0).tau == 250.0 / 200.0
        && exp.ccp == ccp
        && exp.grid_resolution == 401;
    Outcome {
        id: "9",
        title: "parameter conformance",
        pass,
        detail: snapshot,
    }
}

fn main() -> ExitCode {
    let mut audit = Audit::default();
    let mut outcomes = Vec::new();
    let mut report = |o: Outcome| {
        println!(
            "[{}] criterion {}: {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.title,
            o.detail
        );
        outcomes.push(o.pass);
    };
    report(parameter_conformance());
    report(crlb_cross_validation());
    report(noiseless_recovery(&mut audit));
    report(relaxation_gap(&mut audit));
    report(robustness(&mut audit));
    report(detection_power(&mut audit));
    report(feasibility(&audit));
    report(descent(&audit));
    report(determinism());
    let failed = outcomes.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
