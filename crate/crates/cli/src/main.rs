//! `cascade`: batch front-end for the cascade bandit game.

mod config;
mod error;
mod plot;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cascade_core::beliefs::failure_trajectory;
use cascade_core::contracts::{
    contract_outcome, monotonicity_violations, payoff_curve, ContractOutcome,
};
use cascade_core::cutoffs::{
    binding_belief, efficient_cutoff, existence_condition, single_agent_cutoff,
    stopping_time_detail, ExistenceReport,
};
use cascade_core::equilibrium::{
    check_most_optimistic_last, check_single_agent_dominance, enumerate_cascade_equilibria,
    verify_cutoffs, DeviationReport, EquilibriumSet,
};
use cascade_core::scenarios::{gap_surface, search_hetexp, search_revorder, ScenarioResult};
use cascade_core::sim::{
    empirical_distribution, exact_outcome_distribution, expected_payoffs, simulate_batch,
    total_variation, Conditioning, EnumerationLimits, OutcomeDistribution, RNG_ALGORITHM,
};
use cascade_core::{Belief, CascadeError, Cutoff, Params};

use crate::config::{ScenarioConfig, SurfaceGrid};
use crate::error::CliError;
use crate::plot::PlotKind;

const DEFAULT_PATHS: u64 = 10_000;
const DEFAULT_POINTS: usize = 101;
const DEFAULT_TAU_MAX: u32 = 4;
const DEFAULT_FAILURES: u64 = 10;

#[derive(Parser)]
#[command(
    name = "cascade",
    version,
    about = "Cascade equilibria in a bandit game with public actions"
)]
struct Cli {
    /// JSON config; unknown fields are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the command's CSV table here.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Seed for stochastic commands; a fresh one is drawn and printed if omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo path count.
    #[arg(long, global = true)]
    paths: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cutoff beliefs, stopping times and the existence condition.
    Cutoffs,
    /// Seeded Monte Carlo play of a cutoff profile.
    Simulate,
    /// Exact distribution of cascade outcomes.
    Distribution,
    /// One-shot deviation check of a cutoff profile.
    Verify,
    /// All cutoff profiles up to `tau_max` that verify.
    Enumerate,
    /// Search for one of the worked example configurations.
    Scenario {
        #[arg(value_enum)]
        which: ScenarioKind,
    },
    /// Ex-ante buyout outcome and the total payoff curve.
    Contracts,
    /// Plot data of one kind as CSV.
    Sweep {
        #[arg(long, value_enum)]
        kind: PlotKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioKind {
    /// Reversed cutoff order.
    A1,
    /// Over-exploration with heterogeneous priors.
    A2,
}

fn emit_json<T: Serialize>(report: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn csv_sink(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn resolve_seed(flag: Option<u64>, cfg: &ScenarioConfig) -> u64 {
    flag.or(cfg.seed).unwrap_or_else(|| {
        let seed: u64 = rand::random();
        eprintln!("seed: {seed}");
        seed
    })
}

#[derive(Serialize)]
struct PriorStopping {
    prior: f64,
    tau_single: Cutoff,
    tau_efficient: Cutoff,
    /// Some posterior along the way sits on a cutoff.
    boundary: bool,
}

#[derive(Serialize)]
struct CutoffsReport {
    params: Params,
    p_a: f64,
    p_e: f64,
    binding_belief: f64,
    existence: ExistenceReport,
    stopping_times: Vec<PriorStopping>,
}

fn run_cutoffs(cli: &Cli, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let params = cfg.params()?;
    let (pa, pe) = (single_agent_cutoff(&params), efficient_cutoff(&params));
    let stopping_times = cfg
        .priors
        .iter()
        .flatten()
        .map(|&q| {
            let b = Belief::new(q)?;
            let a = stopping_time_detail(b, pa, params.pi());
            let e = stopping_time_detail(b, pe, params.pi());
            Ok(PriorStopping {
                prior: q,
                tau_single: a.tau,
                tau_efficient: e.tau,
                boundary: a.boundary || e.boundary,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    if let Some(path) = &cli.csv {
        plot::write_table(
            csv_sink(path)?,
            &["prior", "tau_single", "tau_efficient", "boundary"],
            &stopping_times,
        )?;
    }
    emit_json(
        &CutoffsReport {
            params,
            p_a: pa.prob(),
            p_e: pe.prob(),
            binding_belief: binding_belief(&params).prob(),
            existence: existence_condition(&params),
            stopping_times,
        },
        cli.out.as_deref(),
    )
}

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    rng: &'static str,
    paths: u64,
    state: u8,
    mean_payoffs: Vec<f64>,
    empirical: OutcomeDistribution,
    /// Total-variation distance to the exact distribution.
    total_variation: f64,
}

fn run_simulate(cli: &Cli, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let (params, priors, cutoffs) = (cfg.params()?, cfg.priors()?, cfg.cutoffs()?);
    priors.check_len(&params)?;
    let state = cfg.state.unwrap_or(1);
    let paths = cli.paths.or(cfg.paths).unwrap_or(DEFAULT_PATHS);
    if paths == 0 {
        return Err(CliError::Config("paths must be positive".into()));
    }
    let seed = resolve_seed(cli.seed, cfg);
    let cond = Conditioning::State { theta: state };
    let exact = exact_outcome_distribution(
        &params,
        &priors,
        &cutoffs,
        cond,
        EnumerationLimits::default(),
    )?;
    let records = simulate_batch(&params, &priors, &cutoffs, state, seed, paths)?;
    let n = priors.len();
    let mean_payoffs = (0..n)
        .map(|i| records.iter().map(|r| r.payoffs[i]).sum::<f64>() / records.len() as f64)
        .collect();
    let empirical = empirical_distribution(&records, cond);
    if let Some(path) = &cli.csv {
        plot::paths(csv_sink(path)?, &records)?;
    }
    emit_json(
        &SimulateReport {
            seed,
            rng: RNG_ALGORITHM,
            paths,
            state,
            mean_payoffs,
            total_variation: total_variation(&empirical, &exact),
            empirical,
        },
        cli.out.as_deref(),
    )
}

#[derive(Serialize)]
struct DistributionReport {
    distribution: OutcomeDistribution,
    /// Each agent's expected payoff under her own prior.
    expected_payoffs: Vec<f64>,
}

fn run_distribution(cli: &Cli, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let (params, priors, cutoffs) = (cfg.params()?, cfg.priors()?, cfg.cutoffs()?);
    let cond = match (cfg.state, cfg.evaluation_prior) {
        (Some(theta), None) => Conditioning::State { theta },
        (None, Some(prior)) => Conditioning::Marginal { prior },
        _ => {
            return Err(CliError::Config(
                "distribution needs exactly one of `state` or `evaluation_prior`".into(),
            ))
        }
    };
    let limits = EnumerationLimits::default();
    let distribution = exact_outcome_distribution(&params, &priors, &cutoffs, cond, limits)?;
    let expected_payoffs = expected_payoffs(&params, &priors, &cutoffs, &priors.probs(), limits)?;
    if let Some(path) = &cli.csv {
        plot::outcome_timeline(csv_sink(path)?, &distribution)?;
    }
    emit_json(
        &DistributionReport {
            distribution,
            expected_payoffs,
        },
        cli.out.as_deref(),
    )
}

fn run_verify(cli: &Cli, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let (params, priors, cutoffs) = (cfg.params()?, cfg.priors()?, cfg.cutoffs()?);
    let report: DeviationReport =
        verify_cutoffs(&params, &priors, &cutoffs, &cfg.verify_options())?;
    if let Some(path) = &cli.csv {
        plot::trace(csv_sink(path)?, &report.trace_rows())?;
    }
    emit_json(&report, cli.out.as_deref())
}

#[derive(Serialize)]
struct EnumerateReport {
    set: EquilibriumSet,
    most_optimistic_explores_longest: bool,
    within_lone_stopping_time: bool,
}

fn run_enumerate(cli: &Cli, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let (params, priors) = (cfg.params()?, cfg.priors()?);
    let tau_max = cfg.tau_max.unwrap_or(DEFAULT_TAU_MAX);
    let set = enumerate_cascade_equilibria(
        &params,
        &priors,
        tau_max,
        cfg.budget(),
        &cfg.verify_options(),
    )?;
    if let Some(path) = &cli.csv {
        #[derive(Serialize)]
        struct Row {
            profile: usize,
            cutoffs: String,
        }
        let rows: Vec<Row> = set
            .profiles
            .iter()
            .enumerate()
            .map(|(k, c)| Row {
                profile: k,
                cutoffs: c.to_string(),
            })
            .collect();
        plot::write_table(csv_sink(path)?, &["profile", "cutoffs"], &rows)?;
    }
    emit_json(
        &EnumerateReport {
            most_optimistic_explores_longest: check_most_optimistic_last(&set, &priors),
            within_lone_stopping_time: check_single_agent_dominance(&set, &priors, &params),
            set,
        },
        cli.out.as_deref(),
    )
}

fn run_scenario(cli: &Cli, cfg: &ScenarioConfig, which: ScenarioKind) -> Result<(), CliError> {
    let result: ScenarioResult = match which {
        ScenarioKind::A1 => search_revorder(&cfg.revorder_grid.clone().unwrap_or_default())?,
        ScenarioKind::A2 => search_hetexp(&cfg.hetexp_grid.clone().unwrap_or_default())?,
    };
    if let Some(path) = &cli.csv {
        let grid = cfg.surface.clone().unwrap_or_default();
        let rows = gap_surface(&grid.deltas, &grid.pis, grid.lowest_prior, grid.e_good)?;
        plot::gap_surface(csv_sink(path)?, &rows)?;
    }
    emit_json(&result, cli.out.as_deref())
}

#[derive(Serialize)]
struct ContractsReport {
    outcome: ContractOutcome,
    curve_points: usize,
    /// Adjacent curve points where the total payoff falls.
    monotonicity_violations: usize,
}

fn run_contracts(cli: &Cli, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let (params, priors) = (cfg.params()?, cfg.priors()?);
    let outcome = contract_outcome(&priors, &params)?;
    let points = cfg.points.unwrap_or(DEFAULT_POINTS);
    let curve = payoff_curve(&params, points)?;
    if let Some(path) = &cli.csv {
        plot::payoff_vs_prior(csv_sink(path)?, &curve)?;
    }
    emit_json(
        &ContractsReport {
            outcome,
            curve_points: points,
            monotonicity_violations: monotonicity_violations(&curve).len(),
        },
        cli.out.as_deref(),
    )
}

fn run_sweep(cli: &Cli, cfg: &ScenarioConfig, kind: PlotKind) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match &cli.csv {
        Some(path) => Box::new(csv_sink(path)?),
        None => Box::new(io::stdout().lock()),
    };
    match kind {
        PlotKind::BeliefTrajectory => {
            let params = cfg.params()?;
            let prior = cfg
                .priors
                .as_ref()
                .and_then(|p| p.first().copied())
                .ok_or_else(|| CliError::Config("belief trajectory needs `priors`".into()))?;
            let path = failure_trajectory(
                Belief::new(prior)?,
                params.pi(),
                cfg.failures.unwrap_or(DEFAULT_FAILURES),
            );
            plot::belief_trajectory(sink, &path)
        }
        PlotKind::PayoffVsPrior => {
            let curve = payoff_curve(&cfg.params()?, cfg.points.unwrap_or(DEFAULT_POINTS))?;
            plot::payoff_vs_prior(sink, &curve)
        }
        PlotKind::GapSurface => {
            let grid: SurfaceGrid = cfg.surface.clone().unwrap_or_default();
            let rows = gap_surface(&grid.deltas, &grid.pis, grid.lowest_prior, grid.e_good)?;
            plot::gap_surface(sink, &rows)
        }
        PlotKind::OutcomeTimeline => {
            let (params, priors, cutoffs) = (cfg.params()?, cfg.priors()?, cfg.cutoffs()?);
            let cond = match cfg.evaluation_prior {
                Some(prior) => Conditioning::Marginal { prior },
                None => Conditioning::State {
                    theta: cfg.state.unwrap_or(1),
                },
            };
            let dist = exact_outcome_distribution(
                &params,
                &priors,
                &cutoffs,
                cond,
                EnumerationLimits::default(),
            )?;
            plot::outcome_timeline(sink, &dist)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = ScenarioConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Cutoffs => run_cutoffs(cli, &cfg),
        Command::Simulate => run_simulate(cli, &cfg),
        Command::Distribution => run_distribution(cli, &cfg),
        Command::Verify => run_verify(cli, &cfg),
        Command::Enumerate => run_enumerate(cli, &cfg),
        Command::Scenario { which } => run_scenario(cli, &cfg, *which),
        Command::Contracts => run_contracts(cli, &cfg),
        Command::Sweep { kind } => run_sweep(cli, &cfg, *kind),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Core(CascadeError::Invariant(_))) {
                eprintln!("this is a bug; please report the config that triggered it");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
