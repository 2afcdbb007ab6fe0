//! Cascade outcomes for a fixed cutoff profile: exact enumeration over
//! first-success times, seeded Monte Carlo paths, and ex-ante payoffs.
//!
//! On path an agent explores for `tau_i` periods. One who saw only failures
//! switches to safe in period `tau_i + 1`; one who saw a success keeps playing
//! risky, and that visible non-switch makes everyone play risky forever from
//! period `tau_i + 2` on. Since a success ends the agent's decision problem,
//! the first-success draw index is a sufficient statistic per agent.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CascadeError, Result};
use crate::model::{Action, Cutoff, CutoffProfile, Params, PriorProfile, RevelationCause};

/// Name of the generator behind [`simulate_path`].
pub const RNG_ALGORITHM: &str = "ChaCha8 (stream = path index)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationLimits {
    pub max_agents: usize,
    pub max_tau: u32,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_agents: 6,
            max_tau: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeRecord {
    /// Period of the risky-to-safe switch, `None` if the agent never switches.
    pub switch_times: Vec<Option<u32>>,
    /// First period in which everyone plays risky forever.
    pub revelation_time: Option<u32>,
    pub revelation_cause: RevelationCause,
    pub state: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Conditioning {
    State { theta: u8 },
    Marginal { prior: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub support: Vec<(OutcomeRecord, f64)>,
    pub conditioning: Conditioning,
}

impl OutcomeDistribution {
    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }

    pub fn prob_of(&self, rec: &OutcomeRecord) -> f64 {
        self.support
            .iter()
            .find(|(r, _)| r == rec)
            .map_or(0.0, |(_, p)| *p)
    }
}

/// First-success draw index of one agent within her on-path exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FirstSuccess {
    At(u32),
    Never,
}

fn finite_taus(cutoffs: &CutoffProfile) -> Vec<Option<u32>> {
    cutoffs.taus.iter().map(Cutoff::finite).collect()
}

fn check_exact(
    params: &Params,
    priors: &PriorProfile,
    cutoffs: &CutoffProfile,
    limits: EnumerationLimits,
) -> Result<()> {
    priors.check_len(params)?;
    cutoffs.validate_against(priors)?;
    if params.n_agents() > limits.max_agents {
        return Err(CascadeError::ScaleLimit(format!(
            "{} agents exceed the exact-enumeration limit of {}; use Monte Carlo",
            params.n_agents(),
            limits.max_agents
        )));
    }
    if let Some(t) = cutoffs.taus.iter().filter_map(Cutoff::finite).max() {
        if t > limits.max_tau {
            return Err(CascadeError::ScaleLimit(format!(
                "cutoff {t} exceeds the exact-enumeration limit of {}; use Monte Carlo",
                limits.max_tau
            )));
        }
    }
    Ok(())
}

/// Applies the cascade rules to one realization of first-success times.
fn outcome_of(taus: &[Option<u32>], firsts: &[FirstSuccess], theta: u8) -> OutcomeRecord {
    let revelation_time = taus
        .iter()
        .zip(firsts)
        .filter_map(|(tau, f)| match (tau, f) {
            (Some(t), FirstSuccess::At(m)) if m <= t => Some(t + 2),
            _ => None,
        })
        .min();
    let switch_times = taus
        .iter()
        .zip(firsts)
        .map(|(tau, f)| match (tau, f) {
            (Some(t), FirstSuccess::Never) if revelation_time.is_none_or(|r| t + 1 < r) => {
                Some(t + 1)
            }
            _ => None,
        })
        .collect();
    OutcomeRecord {
        switch_times,
        revelation_time,
        revelation_cause: if revelation_time.is_some() {
            RevelationCause::SuccessSignal
        } else {
            RevelationCause::None
        },
        state: theta,
    }
}

/// Normalized discounted payoff of agent `i` given the state and everyone's
/// first-success times; draws after a success count at their mean.
fn realized_value(
    params: &Params,
    tau: Option<u32>,
    first: FirstSuccess,
    revelation: Option<u32>,
    theta: u8,
) -> f64 {
    let d = params.delta();
    let tail_mean = params.mean_payoff(theta == 1);
    let Some(tau) = tau else {
        return tail_mean;
    };
    match first {
        FirstSuccess::At(m) => {
            (1.0 - d.powi(m as i32 - 1)) * params.x_low()
                + (1.0 - d) * d.powi(m as i32 - 1) * params.x_high()
                + d.powi(m as i32) * params.e_good()
        }
        FirstSuccess::Never => {
            let own = (1.0 - d.powi(tau as i32)) * params.x_low();
            match revelation {
                Some(r) => own + d.powi(tau.max(r - 1) as i32) * tail_mean,
                None => own,
            }
        }
    }
}

/// Every joint realization of first-success times with its probability
/// given the state.
fn realizations(params: &Params, taus: &[Option<u32>], theta: u8) -> Vec<(Vec<FirstSuccess>, f64)> {
    let pi = params.pi();
    let mut out: Vec<(Vec<FirstSuccess>, f64)> = vec![(Vec::with_capacity(taus.len()), 1.0)];
    for tau in taus {
        let options: Vec<(FirstSuccess, f64)> = match (tau, theta) {
            (None, _) | (_, 0) => vec![(FirstSuccess::Never, 1.0)],
            (Some(t), _) => (1..=*t)
                .map(|m| (FirstSuccess::At(m), (1.0 - pi).powi(m as i32 - 1) * pi))
                .chain(std::iter::once((
                    FirstSuccess::Never,
                    (1.0 - pi).powi(*t as i32),
                )))
                .collect(),
        };
        out = out
            .into_iter()
            .flat_map(|(prefix, w)| {
                options.iter().map(move |(f, p)| {
                    let mut v = prefix.clone();
                    v.push(*f);
                    (v, w * p)
                })
            })
            .collect();
    }
    out
}

fn conditional_distribution(
    params: &Params,
    taus: &[Option<u32>],
    theta: u8,
) -> BTreeMap<OutcomeRecord, f64> {
    let mut acc = BTreeMap::new();
    for (firsts, w) in realizations(params, taus, theta) {
        *acc.entry(outcome_of(taus, &firsts, theta)).or_insert(0.0) += w;
    }
    acc
}

/// Exact distribution of cascade outcomes for the given profile.
pub fn exact_outcome_distribution(
    params: &Params,
    priors: &PriorProfile,
    cutoffs: &CutoffProfile,
    conditioning: Conditioning,
    limits: EnumerationLimits,
) -> Result<OutcomeDistribution> {
    check_exact(params, priors, cutoffs, limits)?;
    let taus = finite_taus(cutoffs);
    let acc = match conditioning {
        Conditioning::State { theta } if theta <= 1 => {
            conditional_distribution(params, &taus, theta)
        }
        Conditioning::State { theta } => {
            return Err(CascadeError::Invalid(format!(
                "state must be 0 or 1, got {theta}"
            )))
        }
        Conditioning::Marginal { prior } => {
            if !(0.0..=1.0).contains(&prior) {
                return Err(CascadeError::Invalid(format!(
                    "evaluation prior {prior} outside [0,1]"
                )));
            }
            let mut acc = BTreeMap::new();
            for (theta, weight) in [(1u8, prior), (0u8, 1.0 - prior)] {
                if weight == 0.0 {
                    continue;
                }
                for (rec, p) in conditional_distribution(params, &taus, theta) {
                    *acc.entry(rec).or_insert(0.0) += weight * p;
                }
            }
            acc
        }
    };
    Ok(OutcomeDistribution {
        support: acc.into_iter().collect(),
        conditioning,
    })
}

/// Per-agent ex-ante expected normalized payoff, each agent evaluated under
/// her own belief about the state.
pub fn expected_payoffs(
    params: &Params,
    priors: &PriorProfile,
    cutoffs: &CutoffProfile,
    evaluation_priors: &[f64],
    limits: EnumerationLimits,
) -> Result<Vec<f64>> {
    check_exact(params, priors, cutoffs, limits)?;
    if evaluation_priors.len() != params.n_agents() {
        return Err(CascadeError::Invalid(format!(
            "expected {} evaluation priors, got {}",
            params.n_agents(),
            evaluation_priors.len()
        )));
    }
    let taus = finite_taus(cutoffs);
    let n = taus.len();
    let mut by_state = [vec![0.0; n], vec![0.0; n]];
    for theta in [0u8, 1] {
        for (firsts, w) in realizations(params, &taus, theta) {
            let rec = outcome_of(&taus, &firsts, theta);
            for i in 0..n {
                by_state[theta as usize][i] +=
                    w * realized_value(params, taus[i], firsts[i], rec.revelation_time, theta);
            }
        }
    }
    Ok((0..n)
        .map(|i| {
            let q = evaluation_priors[i];
            q * by_state[1][i] + (1.0 - q) * by_state[0][i]
        })
        .collect())
}

/// Raw (unnormalized) discounted payoff from a normalized one.
pub fn raw_discounted(params: &Params, normalized: f64) -> f64 {
    normalized / (1.0 - params.delta())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PublicSignal {
    None,
    Switch,
    NonSwitch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub t: u32,
    pub actions: Vec<Action>,
    /// `Some(true)` for a success, `Some(false)` for a failure, `None` if safe.
    pub draws: Vec<Option<bool>>,
    pub signals: Vec<PublicSignal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub seed: u64,
    pub path_index: u64,
    pub rng: String,
    pub state: u8,
    pub periods: Vec<PeriodRecord>,
    pub outcome: OutcomeRecord,
    /// Realized payoffs over the recorded periods plus the expected tail.
    pub payoffs: Vec<f64>,
}

/// One seeded play-through of the cascade rules. The generator is ChaCha8
/// seeded with `seed` on stream `path_index`, so paths are independent and
/// reproducible regardless of how a batch is scheduled.
pub fn simulate_path(
    params: &Params,
    priors: &PriorProfile,
    cutoffs: &CutoffProfile,
    true_state: u8,
    seed: u64,
    path_index: u64,
) -> Result<PathRecord> {
    priors.check_len(params)?;
    cutoffs.validate_against(priors)?;
    if true_state > 1 {
        return Err(CascadeError::Invalid(format!(
            "state must be 0 or 1, got {true_state}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    let taus = finite_taus(cutoffs);
    let n = taus.len();
    let d = params.delta();
    let last = taus.iter().flatten().max().map_or(0, |t| t + 1);

    let mut succeeded = vec![false; n];
    let mut switched: Vec<Option<u32>> = vec![None; n];
    let mut revelation: Option<u32> = None;
    let mut payoffs = vec![0.0; n];
    let mut periods = Vec::new();
    let mut t = 1u32;
    while t <= last && revelation.is_none() {
        let mut actions = Vec::with_capacity(n);
        let mut draws = Vec::with_capacity(n);
        let mut signals = Vec::with_capacity(n);
        for i in 0..n {
            let action = match taus[i] {
                None => Action::Risky,
                Some(_) if succeeded[i] => Action::Risky,
                Some(tau) if t <= tau => Action::Risky,
                Some(_) => Action::Safe,
            };
            let signal = match taus[i] {
                Some(tau) if t == tau + 1 => {
                    if action == Action::Safe {
                        switched[i] = Some(t);
                        PublicSignal::Switch
                    } else {
                        PublicSignal::NonSwitch
                    }
                }
                _ => PublicSignal::None,
            };
            let draw = match action {
                Action::Safe => None,
                Action::Risky => {
                    let success = true_state == 1 && rng.random::<f64>() < params.pi();
                    let x = if success {
                        params.x_high()
                    } else {
                        params.x_low()
                    };
                    payoffs[i] += (1.0 - d) * d.powi(t as i32 - 1) * x;
                    succeeded[i] |= success;
                    Some(success)
                }
            };
            actions.push(action);
            draws.push(draw);
            signals.push(signal);
        }
        if signals.contains(&PublicSignal::NonSwitch) {
            revelation = Some(t + 1);
        }
        periods.push(PeriodRecord {
            t,
            actions,
            draws,
            signals,
        });
        t += 1;
    }
    // Everyone still risky after the recorded window stays risky forever.
    let tail_mean = params.mean_payoff(true_state == 1);
    for i in 0..n {
        let risky_after = revelation.is_some() || taus[i].is_none() || succeeded[i];
        if risky_after {
            payoffs[i] += d.powi(t as i32 - 1) * tail_mean;
        }
    }
    let outcome = OutcomeRecord {
        switch_times: switched,
        revelation_time: revelation,
        revelation_cause: if revelation.is_some() {
            RevelationCause::SuccessSignal
        } else {
            RevelationCause::None
        },
        state: true_state,
    };
    Ok(PathRecord {
        seed,
        path_index,
        rng: RNG_ALGORITHM.to_string(),
        state: true_state,
        periods,
        outcome,
        payoffs,
    })
}

/// Simulates `paths` independent paths in parallel; the result does not
/// depend on the number of worker threads.
pub fn simulate_batch(
    params: &Params,
    priors: &PriorProfile,
    cutoffs: &CutoffProfile,
    true_state: u8,
    seed: u64,
    paths: u64,
) -> Result<Vec<PathRecord>> {
    (0..paths)
        .into_par_iter()
        .map(|k| simulate_path(params, priors, cutoffs, true_state, seed, k))
        .collect()
}

/// Empirical outcome frequencies of a batch.
pub fn empirical_distribution(
    paths: &[PathRecord],
    conditioning: Conditioning,
) -> OutcomeDistribution {
    let mut acc: BTreeMap<OutcomeRecord, f64> = BTreeMap::new();
    let w = 1.0 / paths.len().max(1) as f64;
    for p in paths {
        *acc.entry(p.outcome.clone()).or_insert(0.0) += w;
    }
    OutcomeDistribution {
        support: acc.into_iter().collect(),
        conditioning,
    }
}

/// Total-variation distance between two outcome distributions.
pub fn total_variation(a: &OutcomeDistribution, b: &OutcomeDistribution) -> f64 {
    let mut diff: BTreeMap<&OutcomeRecord, f64> = BTreeMap::new();
    for (r, p) in &a.support {
        *diff.entry(r).or_insert(0.0) += p;
    }
    for (r, p) in &b.support {
        *diff.entry(r).or_insert(0.0) -= p;
    }
    0.5 * diff.values().map(|v| v.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_a(n: usize) -> Params {
        Params::from_moments(0.2, 0.6, 2.0, 1.0, n).unwrap()
    }

    fn state(theta: u8) -> Conditioning {
        Conditioning::State { theta }
    }

    #[test]
    fn bad_state_switches_on_schedule() {
        let p = params_a(1);
        let priors = PriorProfile::common(0.5, 1).unwrap();
        let dist = exact_outcome_distribution(
            &p,
            &priors,
            &CutoffProfile::finite(&[1]),
            state(0),
            Default::default(),
        )
        .unwrap();
        assert_eq!(dist.support.len(), 1);
        assert_eq!(dist.support[0].0.switch_times, vec![Some(2)]);
        assert_eq!(dist.support[0].1, 1.0);
    }

    #[test]
    fn single_draw_in_good_state() {
        let p = params_a(1);
        let priors = PriorProfile::common(0.5, 1).unwrap();
        let dist = exact_outcome_distribution(
            &p,
            &priors,
            &CutoffProfile::finite(&[1]),
            state(1),
            Default::default(),
        )
        .unwrap();
        let switch = OutcomeRecord {
            switch_times: vec![Some(2)],
            revelation_time: None,
            revelation_cause: RevelationCause::None,
            state: 1,
        };
        assert!((dist.prob_of(&switch) - 0.4).abs() < 1e-15);
        let stay = OutcomeRecord {
            switch_times: vec![None],
            revelation_time: Some(3),
            revelation_cause: RevelationCause::SuccessSignal,
            state: 1,
        };
        assert!((dist.prob_of(&stay) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn both_switch_with_independent_failures() {
        let p = params_a(2);
        let priors = PriorProfile::common(0.5, 2).unwrap();
        let dist = exact_outcome_distribution(
            &p,
            &priors,
            &CutoffProfile::finite(&[1, 1]),
            state(1),
            Default::default(),
        )
        .unwrap();
        let both = OutcomeRecord {
            switch_times: vec![Some(2), Some(2)],
            revelation_time: None,
            revelation_cause: RevelationCause::None,
            state: 1,
        };
        assert!((dist.prob_of(&both) - 0.16).abs() < 1e-15);
        assert!((dist.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn earlier_revelation_cancels_later_switch() {
        let taus = [Some(1), Some(3)];
        let rec = outcome_of(&taus, &[FirstSuccess::At(1), FirstSuccess::Never], 1);
        assert_eq!(rec.revelation_time, Some(3));
        assert_eq!(rec.switch_times, vec![None, None]);
        let rec = outcome_of(
            &[Some(1), Some(1)],
            &[FirstSuccess::At(1), FirstSuccess::Never],
            1,
        );
        // simultaneous cutoffs: the failing agent has already switched
        assert_eq!(rec.switch_times, vec![None, Some(2)]);
    }

    #[test]
    fn payoffs_examples() {
        let p = params_a(1);
        let priors = PriorProfile::common(0.5, 1).unwrap();
        let v = expected_payoffs(
            &p,
            &priors,
            &CutoffProfile::finite(&[1]),
            &[0.5],
            Default::default(),
        )
        .unwrap();
        assert!((v[0] - 0.52).abs() < 1e-12);
        let safe = expected_payoffs(
            &params_a(2),
            &PriorProfile::common(0.5, 2).unwrap(),
            &CutoffProfile::finite(&[0, 0]),
            &[0.5, 0.5],
            Default::default(),
        )
        .unwrap();
        assert_eq!(safe, vec![0.0, 0.0]);
        let sure = PriorProfile::common(1.0, 1).unwrap();
        let forever = CutoffProfile {
            taus: vec![Cutoff::Unbounded],
        };
        let v = expected_payoffs(&p, &sure, &forever, &[1.0], Default::default()).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn limits_are_enforced() {
        let p = params_a(2);
        let priors = PriorProfile::common(0.5, 2).unwrap();
        let err = exact_outcome_distribution(
            &p,
            &priors,
            &CutoffProfile::finite(&[13, 1]),
            state(1),
            Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CascadeError::ScaleLimit(_)));
    }

    #[test]
    fn paths_replay() {
        let p = params_a(2);
        let priors = PriorProfile::common(0.5, 2).unwrap();
        let c = CutoffProfile::finite(&[2, 1]);
        let a = simulate_path(&p, &priors, &c, 1, 42, 7).unwrap();
        let b = simulate_path(&p, &priors, &c, 1, 42, 7).unwrap();
        assert_eq!(a, b);
        let bad = simulate_path(&p, &priors, &c, 0, 42, 7).unwrap();
        assert!(bad
            .periods
            .iter()
            .flat_map(|r| r.draws.iter())
            .all(|d| *d != Some(true)));
        assert_eq!(bad.outcome.switch_times, vec![Some(3), Some(2)]);
    }
}
