//! `ergodic`: long-run pricing, replicated CLT experiments and schedule
//! checks from JSON configuration files.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use statrs::distribution::{Continuous, Normal};

use ergodic::cltlab::{run_clt_experiment, CltConfig, CltExperiment};
use ergodic::config::{Figure1Config, Overridable, Overrides, PriceConfig, ScheduleCheckConfig};
use ergodic::heston::{
    bs_barrier_price, bs_call_price, price_stationary_heston_traced, reference_price, run_figure1, BsBarrierParams,
};
use ergodic::{GaussianStream, StepSchedule};

use output::{num, RunOutput};

#[derive(Parser)]
#[command(name = "ergodic", version, about = "Decreasing-step Euler simulations of stationary diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; built-in defaults apply when omitted (except for `clt`).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Refuse schedules that fail the summability condition the scheme needs
    /// (`--strict-schedule false` downgrades this to a warning).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    strict_schedule: Option<bool>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            steps: self.steps,
            replicates: self.replicates,
            strict_schedule: self.strict_schedule,
        }
    }

    fn load<C: DeserializeOwned + Default + Overridable>(&self) -> Result<C> {
        let mut cfg = match &self.config {
            Some(path) => read_json(path)?,
            None => C::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Price the stationary Heston up-and-out call from one long path.
    Price,
    /// Replicated normalized errors of the Heston price, with density and normality checks.
    Figure1,
    /// Replicated normalized errors for a model and functional given in the config (required).
    Clt,
    /// Summability conditions of a step sequence.
    CheckSchedule,
    /// Closed-form Black–Scholes up-and-out call.
    BsRef,
}

fn read_json<C: DeserializeOwned>(path: &Path) -> Result<C> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn price(common: &Common) -> Result<RunOutput> {
    let cfg: PriceConfig = common.load()?;
    let schedule = StepSchedule::from_family(cfg.schedule.clone())?;
    let mut stream = GaussianStream::new(cfg.seed, 0);
    let (p, trace) =
        price_stationary_heston_traced(&cfg.heston, &schedule, cfg.steps, &mut stream, cfg.control_variate, cfg.trace_every)?;
    println!(
        "price {:.6} (raw {:.6}, control-variate adjustment {:.6}) over {} terms, Gamma_N = {:.2}",
        p.price, p.raw_value, p.cv_adjustment, p.terms, p.gamma_total
    );
    let mut out = RunOutput::new(&common.out_dir, "price", &cfg, Some(cfg.seed))?;
    out.csv(
        "trace.csv",
        &["terms", "gamma_total", "raw_value", "bs_companion", "price"],
        trace.iter().map(|t| {
            [t.terms.to_string(), num(t.gamma_total), num(t.raw_value), num(t.bs_companion), num(t.price)]
        }),
    )?;
    out.summary(&p)?;
    Ok(out)
}

fn write_experiment(out: &mut RunOutput, exp: &CltExperiment, extra: serde_json::Value) -> Result<()> {
    out.csv("samples.csv", &["replicate", "error"], exp.samples.iter().enumerate().map(|(i, e)| [i.to_string(), num(*e)]))?;
    let gauss = if exp.sigma2_hat > 0.0 {
        Some(Normal::new(0.0, exp.sigma2_hat.sqrt())?)
    } else {
        None
    };
    out.csv(
        "density.csv",
        &["x", "kernel_density", "normal_density"],
        exp.density_grid.iter().map(|&(x, f)| {
            let g = gauss.as_ref().map_or(f64::NAN, |n| n.pdf(x));
            [num(x), num(f), num(g)]
        }),
    )?;
    let summary = json!({
        "replicates": exp.replicates,
        "steps": exp.steps,
        "terms": exp.terms,
        "gamma_total": exp.gamma_total,
        "mean": exp.mean,
        "sigma2_hat": exp.sigma2_hat,
        "sigma2_se": exp.sigma2_se,
        "bandwidth": exp.bandwidth,
        "normality": exp.normality,
        "blowups": exp.blowups,
        "warnings": exp.warnings,
        "extra": extra,
    });
    out.summary(&summary)
}

fn report_experiment(exp: &CltExperiment) {
    println!(
        "{} replicates, Gamma_N = {:.2}: mean {:.5}, variance {:.5} ± {:.5}",
        exp.replicates, exp.gamma_total, exp.mean, exp.sigma2_hat, exp.sigma2_se
    );
    if let Some(n) = &exp.normality {
        println!(
            "KS {:.5} (1% critical {:.5}), skewness {:.4} ± {:.4}, excess kurtosis {:.4} ± {:.4}",
            n.ks_stat, n.ks_critical_1pct, n.skewness, n.skewness_se, n.excess_kurtosis, n.kurtosis_se
        );
    }
    for w in &exp.warnings {
        eprintln!("warning: {w}");
    }
}

fn figure1(common: &Common) -> Result<RunOutput> {
    let mut cfg: Figure1Config = common.load()?;
    let schedule = StepSchedule::from_family(cfg.schedule.clone())?;
    let reference = match cfg.reference {
        Some(price) => json!({ "price": price, "computed": false }),
        None => {
            let r = reference_price(&cfg.heston, &schedule, cfg.reference_steps, cfg.reference_runs, cfg.seed)?;
            println!("reference price {:.6} ± {:.6} from {} runs of {} steps", r.price, r.stderr, r.runs, r.steps);
            cfg.reference = Some(r.price);
            json!({ "price": r.price, "stderr": r.stderr, "runs": r.runs, "steps": r.steps, "computed": true })
        }
    };
    let settings = cfg.settings(cfg.reference.expect("reference resolved above"));
    let exp = run_figure1(&cfg.heston, &schedule, &settings)?;
    report_experiment(&exp);
    let mut out = RunOutput::new(&common.out_dir, "figure1", &cfg, Some(cfg.seed))?;
    write_experiment(&mut out, &exp, json!({ "reference": reference }))?;
    Ok(out)
}

fn clt(common: &Common) -> Result<RunOutput> {
    let Some(path) = &common.config else {
        bail!("clt needs --config naming the model, functional and schedule");
    };
    let mut cfg: CltConfig = read_json(path)?;
    cfg.apply(&common.overrides());
    let exp = run_clt_experiment(&cfg)?;
    report_experiment(&exp);
    let mut out = RunOutput::new(&common.out_dir, "clt", &cfg, Some(cfg.seed))?;
    write_experiment(&mut out, &exp, json!(null))?;
    Ok(out)
}

fn check_schedule(common: &Common) -> Result<RunOutput> {
    let cfg: ScheduleCheckConfig = common.load()?;
    let schedule = StepSchedule::from_family(cfg.schedule.clone())?;
    let reports = cfg
        .conditions
        .iter()
        .map(|&c| schedule.check_conditions(c, cfg.terms))
        .collect::<ergodic::Result<Vec<_>>>()?;
    for r in &reports {
        println!(
            "{:<40} {} (partial sum {:.4}, fitted tail exponent {:.3})",
            r.condition.describe(),
            if r.converges { "converges" } else { "diverges" },
            r.partial_sum,
            r.fitted_tail_exponent
        );
    }
    let mut out = RunOutput::new(&common.out_dir, "check-schedule", &cfg, common.seed)?;
    out.csv(
        "conditions.csv",
        &["condition", "converges", "analytic_verdict", "partial_sum", "fitted_tail_exponent"],
        reports.iter().map(|r| {
            [
                r.condition.describe(),
                r.converges.to_string(),
                r.analytic_verdict.to_string(),
                num(r.partial_sum),
                num(r.fitted_tail_exponent),
            ]
        }),
    )?;
    out.summary(&reports)?;
    Ok(out)
}

#[derive(Serialize)]
struct BsReference {
    barrier_price: f64,
    vanilla_price: f64,
}

fn bs_ref(common: &Common) -> Result<RunOutput> {
    let p: BsBarrierParams = common.load()?;
    let r = BsReference {
        barrier_price: bs_barrier_price(&p)?,
        vanilla_price: bs_call_price(p.s0, p.r, p.sigma, p.maturity, p.strike),
    };
    println!("up-and-out call {:.6}, vanilla call {:.6}", r.barrier_price, r.vanilla_price);
    let mut out = RunOutput::new(&common.out_dir, "bs-ref", &p, common.seed)?;
    out.csv(
        "price.csv",
        &["s0", "r", "sigma", "T", "K", "L", "barrier_price", "vanilla_price"],
        [[p.s0, p.r, p.sigma, p.maturity, p.strike, p.barrier, r.barrier_price, r.vanilla_price].map(num)],
    )?;
    out.summary(&r)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Price => price(&cli.common),
        Command::Figure1 => figure1(&cli.common),
        Command::Clt => clt(&cli.common),
        Command::CheckSchedule => check_schedule(&cli.common),
        Command::BsRef => bs_ref(&cli.common),
    };
    match run {
        Ok(out) => {
            for path in out.written() {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
