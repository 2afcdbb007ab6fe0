//! Headered CSV tables for plotting. Column order is fixed per kind.

use std::io::Write;

use clap::ValueEnum;
use serde::Serialize;

use cascade_core::contracts::PayoffPoint;
use cascade_core::equilibrium::TraceRow;
use cascade_core::scenarios::GapSurfaceRow;
use cascade_core::sim::{OutcomeDistribution, PathRecord};
use cascade_core::{Belief, RevelationCause};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    BeliefTrajectory,
    PayoffVsPrior,
    GapSurface,
    OutcomeTimeline,
}

pub const BELIEF_COLUMNS: &[&str] = &["t", "belief"];
pub const PAYOFF_COLUMNS: &[&str] = &[
    "prior",
    "total_payoff",
    "discounted_payoff",
    "exploration_length",
];
pub const SURFACE_COLUMNS: &[&str] = &["delta", "pi", "information_difference", "hetexp_condition"];
pub const TIMELINE_COLUMNS: &[&str] = &[
    "outcome",
    "probability",
    "state",
    "agent",
    "switch_time",
    "revelation_time",
    "revelation_cause",
];
pub const PATH_COLUMNS: &[&str] = &[
    "path_index",
    "state",
    "switch_times",
    "revelation_time",
    "revelation_cause",
    "payoffs",
];
pub const TRACE_COLUMNS: &[&str] = &[
    "agent",
    "t",
    "context_agent",
    "context_period",
    "history",
    "own_success",
    "informed",
    "belief",
    "bayes_belief",
    "reach_probability",
    "prescribed",
    "value_prescribed",
    "value_deviation",
    "gain",
    "knife_edge",
];

/// Writes `columns` then one record per row, so an empty table still has
/// its header.
pub fn write_table<W: Write, R: Serialize>(
    out: W,
    columns: &[&str],
    rows: &[R],
) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BeliefRow {
    t: u64,
    belief: f64,
}

pub fn belief_trajectory<W: Write>(out: W, path: &[Belief]) -> Result<(), CliError> {
    let rows: Vec<BeliefRow> = path
        .iter()
        .enumerate()
        .map(|(t, b)| BeliefRow {
            t: t as u64,
            belief: b.prob(),
        })
        .collect();
    write_table(out, BELIEF_COLUMNS, &rows)
}

#[derive(Serialize)]
struct PayoffRow {
    prior: f64,
    total_payoff: f64,
    discounted_payoff: f64,
    exploration_length: Option<u32>,
}

pub fn payoff_vs_prior<W: Write>(out: W, curve: &[PayoffPoint]) -> Result<(), CliError> {
    let rows: Vec<PayoffRow> = curve
        .iter()
        .map(|p| PayoffRow {
            prior: p.prior,
            total_payoff: p.total_payoff,
            discounted_payoff: p.discounted_payoff,
            exploration_length: p.exploration_length,
        })
        .collect();
    write_table(out, PAYOFF_COLUMNS, &rows)
}

pub fn gap_surface<W: Write>(out: W, rows: &[GapSurfaceRow]) -> Result<(), CliError> {
    write_table(out, SURFACE_COLUMNS, rows)
}

#[derive(Serialize)]
struct TimelineRow {
    outcome: usize,
    probability: f64,
    state: u8,
    agent: usize,
    switch_time: Option<u32>,
    revelation_time: Option<u32>,
    revelation_cause: &'static str,
}

fn cause_name(c: RevelationCause) -> &'static str {
    match c {
        RevelationCause::None => "none",
        RevelationCause::SuccessSignal => "success_signal",
        RevelationCause::OffCutoffRisky => "off_cutoff_risky",
    }
}

/// One row per agent per outcome in the support.
pub fn outcome_timeline<W: Write>(out: W, dist: &OutcomeDistribution) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (k, (rec, p)) in dist.support.iter().enumerate() {
        for (agent, s) in rec.switch_times.iter().enumerate() {
            rows.push(TimelineRow {
                outcome: k,
                probability: *p,
                state: rec.state,
                agent,
                switch_time: *s,
                revelation_time: rec.revelation_time,
                revelation_cause: cause_name(rec.revelation_cause),
            });
        }
    }
    write_table(out, TIMELINE_COLUMNS, &rows)
}

fn joined<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Serialize)]
struct PathRow {
    path_index: u64,
    state: u8,
    switch_times: String,
    revelation_time: Option<u32>,
    revelation_cause: &'static str,
    payoffs: String,
}

pub fn paths<W: Write>(out: W, paths: &[PathRecord]) -> Result<(), CliError> {
    let rows: Vec<PathRow> = paths
        .iter()
        .map(|p| PathRow {
            path_index: p.path_index,
            state: p.state,
            switch_times: joined(
                p.outcome
                    .switch_times
                    .iter()
                    .map(|s| s.map_or_else(|| "never".to_string(), |t| t.to_string())),
            ),
            revelation_time: p.outcome.revelation_time,
            revelation_cause: cause_name(p.outcome.revelation_cause),
            payoffs: joined(&p.payoffs),
        })
        .collect();
    write_table(out, PATH_COLUMNS, &rows)
}

pub fn trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), CliError> {
    write_table(out, TRACE_COLUMNS, rows)
}
