use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use secloc::bench::{emit_csv, run_experiment, EstimatorKind, ExperimentConfig, FixedParams, SweepVariable};
use secloc::crlb::{crlb_position, fim_attack_model};
use secloc::estimator::{run_ccp, CcpSettings};
use secloc::measurement::{sample_ranges, InstanceRecord};
use secloc::par::Execution;
use secloc::scenario::{assign_attackers, generate_deployment, stream_rng, AttackerCountRule, ScenarioConfig};
use secloc::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "secloc", version, about = "Secure range-based localization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one scenario with observations and write it as JSON.
    Simulate(SimulateArgs),
    /// Run the SDP estimator on a JSON instance.
    Estimate(EstimateArgs),
    /// Cramér-Rao bound of a JSON instance under the attack model.
    Crlb(CrlbArgs),
    /// Monte Carlo sweep written as CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 20.0)]
    delta: f64,
    #[arg(long, default_value_t = 15.0)]
    sigma: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 100.0)]
    b: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct CcpArgs {
    /// Maximum CCP iterations.
    #[arg(long)]
    t_max: Option<usize>,
    /// Stopping threshold in meters (default B / 200).
    #[arg(long)]
    tau: Option<f64>,
    /// Solve the literal objective in meters instead of units of sigma.
    #[arg(long)]
    no_sigma_normalization: bool,
}

impl CcpArgs {
    fn settings(&self, b: f64) -> CcpSettings {
        let mut s = CcpSettings::for_area(b);
        if let Some(t) = self.t_max {
            s.max_iter = t;
        }
        if let Some(tau) = self.tau {
            s.tau = tau;
        }
        s.normalize = !self.no_sigma_normalization;
        s
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    ccp: CcpArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrlbArgs {
    #[arg(long)]
    input: PathBuf,
    /// Per-sample noise std; defaults to the instance's sigma.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Swept variable: N, Delta or sigma.
    #[arg(long, default_value = "sigma")]
    sweep: String,
    /// Comma-separated sweep values (default: the fixed value of the swept variable).
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    nd: usize,
    #[arg(long, default_value_t = 5)]
    nc: usize,
    /// Comma-separated subset of sdp, grid_oracle, ls_baseline.
    #[arg(long, value_delimiter = ',', default_value = "sdp,ls_baseline")]
    estimators: Vec<String>,
    #[arg(long, default_value_t = 401)]
    grid_res: usize,
    /// Run trials on one thread.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    ccp: CcpArgs,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Solver(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn write_output(out: Option<&Path>, text: &str) -> secloc::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn read_instance(path: &Path) -> secloc::Result<InstanceRecord> {
    let text = std::fs::read_to_string(path)?;
    InstanceRecord::from_json(&text)
}

fn simulate(a: &SimulateArgs) -> secloc::Result<u8> {
    let s = &a.scenario;
    let cfg = ScenarioConfig {
        n: s.n,
        q: 2,
        b: s.b,
        delta_cap: s.delta,
        attacker_count_rule: AttackerCountRule::UniformOneToHalf,
        seed: s.seed,
    };
    cfg.validate()?;
    let mut rng = stream_rng(s.seed, 0);
    let base = generate_deployment(&cfg, &mut rng)?;
    let scenario = assign_attackers(&base, cfg.attacker_count_rule, s.delta, &mut rng);
    let obs = sample_ranges(&scenario, s.sigma, s.k, &mut rng)?;
    write_output(a.out.as_deref(), &InstanceRecord::new(&scenario, Some(&obs)).to_json()?)?;
    Ok(0)
}

fn estimate(a: &EstimateArgs) -> secloc::Result<u8> {
    let rec = read_instance(&a.input)?;
    let scenario = rec.scenario()?;
    let obs = rec
        .observations()?
        .ok_or_else(|| Error::Config("instance has no observations".into()))?;
    let settings = a.ccp.settings(rec.b);
    let report = run_ccp(&scenario.anchors, &obs.medians, obs.sigma, &settings)?;
    write_output(a.out.as_deref(), &report.to_json()?)?;
    Ok(0)
}

fn crlb(a: &CrlbArgs) -> secloc::Result<u8> {
    let rec = read_instance(&a.input)?;
    let scenario = rec.scenario()?;
    let sigma = a
        .sigma
        .or(rec.sigma)
        .ok_or_else(|| Error::Config("no sigma given and none stored in the instance".into()))?;
    let k = rec.k.unwrap_or(1);
    let eff = sigma / (k as f64).sqrt();
    let attacked = crlb_position(&fim_attack_model(&scenario.target, &scenario.anchors, eff, &scenario.attackers)?)?;
    let clean = crlb_position(&fim_attack_model(&scenario.target, &scenario.anchors, eff, &[])?)?;
    let v = serde_json::json!({
        "sigma": sigma,
        "k": k,
        "crlb_m2": attacked,
        "crlb_attack_free_m2": clean,
    });
    write_output(a.out.as_deref(), &serde_json::to_string_pretty(&v)?)?;
    Ok(0)
}

fn bench(a: &BenchArgs) -> secloc::Result<u8> {
    let s = &a.scenario;
    let sweep_variable: SweepVariable = a.sweep.parse()?;
    let estimators = a
        .estimators
        .iter()
        .map(|e| e.parse::<EstimatorKind>())
        .collect::<secloc::Result<Vec<_>>>()?;
    let values = if a.values.is_empty() {
        vec![match sweep_variable {
            SweepVariable::N => s.n as f64,
            SweepVariable::Delta => s.delta,
            SweepVariable::Sigma => s.sigma,
        }]
    } else {
        a.values.clone()
    };
    let ccp = a.ccp.settings(s.b);
    let cfg = ExperimentConfig {
        sweep_variable,
        sweep_values: values,
        fixed: FixedParams {
            n: s.n,
            q: 2,
            b: s.b,
            delta: s.delta,
            sigma: s.sigma,
            k: s.k,
        },
        n_deployments: a.nd,
        n_choices: a.nc,
        seed: s.seed,
        estimators,
        tau_override: a.ccp.tau,
        ccp,
        grid_resolution: a.grid_res,
        attacker_rule: AttackerCountRule::UniformOneToHalf,
        execution: if a.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    let res = run_experiment(&cfg)?;
    emit_csv(&res, &a.out)?;
    let rate = res.sdp_failure_rate();
    if rate > 0.5 {
        eprintln!("SDP solver failure rate {rate:.3} exceeds 0.5");
        return Ok(EXIT_SOLVER);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Crlb(a) => crlb(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
