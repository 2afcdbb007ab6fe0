//! Cascade equilibria: the canonical strategy profile, exact one-shot
//! deviation checks, exhaustive enumeration over cutoff profiles, and the
//! structural properties of the resulting sets.

mod machine;
mod verify;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use machine::{prescribed_action, OffPathRule, StrategyProfile};
pub use verify::{
    continuation_value, root_values, verify_one_shot_deviations, DeviationContext, DeviationReport,
    EquilibriumLimits, NodeReport, TraceRow, VerifyOptions, GAIN_TOL,
};

use crate::cutoffs::tau_single;
use crate::error::{CascadeError, Result};
use crate::model::{Belief, CutoffProfile, Params, PriorProfile};

/// Default cap on the number of candidate profiles one enumeration may check.
pub const DEFAULT_BUDGET: u64 = 20_000;

/// Minimum on-path margin for a center to count as generic.
pub const GENERIC_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub priors: PriorProfile,
    /// Cutoff profiles that pass verification, in lexicographic order.
    pub profiles: Vec<CutoffProfile>,
    /// Largest cutoff searched per agent.
    pub search_bound: u32,
    /// Largest cutoff across all member profiles; `None` for an empty set.
    pub max_cutoff: Option<u32>,
}

/// Shorthand: verify a cutoff profile under the canonical off-path rules.
pub fn verify_cutoffs(
    params: &Params,
    priors: &PriorProfile,
    cutoffs: &CutoffProfile,
    options: &VerifyOptions,
) -> Result<DeviationReport> {
    verify_one_shot_deviations(
        params,
        priors,
        &StrategyProfile::canonical(cutoffs.clone()),
        options,
    )
}

/// Verifies every profile in `{0..=tau_max}^n` and keeps those that pass.
pub fn enumerate_cascade_equilibria(
    params: &Params,
    priors: &PriorProfile,
    tau_max: u32,
    budget: u64,
    options: &VerifyOptions,
) -> Result<EquilibriumSet> {
    priors.check_len(params)?;
    let n = priors.len();
    options.limits.check(n, tau_max)?;
    let count = (tau_max as u64 + 1)
        .checked_pow(n as u32)
        .filter(|&c| c <= budget)
        .ok_or_else(|| {
            CascadeError::ScaleLimit(format!(
                "{}^{n} candidate profiles exceed the budget of {budget}",
                tau_max + 1
            ))
        })?;
    let candidates: Vec<CutoffProfile> = (0..count)
        .map(|mut code| {
            let mut taus = vec![0u32; n];
            for slot in taus.iter_mut().rev() {
                *slot = (code % (tau_max as u64 + 1)) as u32;
                code /= tau_max as u64 + 1;
            }
            CutoffProfile::finite(&taus)
        })
        .collect();
    let quick = VerifyOptions {
        stop_at_first_failure: true,
        ..*options
    };
    let verdicts: Vec<bool> = candidates
        .par_iter()
        .map(|c| verify_cutoffs(params, priors, c, &quick).map(|r| r.is_equilibrium))
        .collect::<Result<_>>()?;
    let profiles: Vec<CutoffProfile> = candidates
        .into_iter()
        .zip(verdicts)
        .filter_map(|(c, ok)| ok.then_some(c))
        .collect();
    let max_cutoff = profiles
        .iter()
        .filter_map(|c| c.as_finite())
        .filter_map(|t| t.into_iter().max())
        .max();
    Ok(EquilibriumSet {
        priors: priors.clone(),
        profiles,
        search_bound: tau_max,
        max_cutoff,
    })
}

fn max_prior_agents(priors: &PriorProfile) -> Vec<usize> {
    let top = priors.max_prob();
    (0..priors.len())
        .filter(|&i| priors.get(i).prob() == top)
        .collect()
}

/// True iff in every profile the largest cutoff belongs to an agent with the
/// highest prior.
pub fn check_most_optimistic_last(set: &EquilibriumSet, priors: &PriorProfile) -> bool {
    let top = max_prior_agents(priors);
    set.profiles.iter().all(|c| {
        let taus = c.as_finite().expect("enumerated profiles are finite");
        let m = taus.iter().copied().max().unwrap_or(0);
        top.iter().any(|&i| taus[i] == m)
    })
}

/// True iff every highest-prior agent explores no longer than she would
/// alone, and, under a common prior, no agent does.
pub fn check_single_agent_dominance(
    set: &EquilibriumSet,
    priors: &PriorProfile,
    params: &Params,
) -> bool {
    let top = max_prior_agents(priors);
    let bound = tau_single(priors.get(top[0]), params);
    let common = priors.is_common();
    set.profiles.iter().all(|c| {
        let taus = c.as_finite().expect("enumerated profiles are finite");
        let top_ok = top.iter().all(|&i| taus[i] <= bound);
        let all_ok = !common || taus.iter().all(|&t| t <= bound);
        top_ok && all_ok
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeStatics {
    pub top_prior_a: f64,
    pub top_prior_b: f64,
    /// Lone-agent stopping time at each top prior.
    pub tau_top_a: u32,
    pub tau_top_b: u32,
    /// Largest cutoff of a top-prior agent over each equilibrium set.
    pub observed_top_a: u32,
    pub observed_top_b: u32,
    /// Weakly higher top prior gives weakly longer exploration.
    pub monotone: bool,
}

/// Compares how long the most optimistic agent explores under two prior
/// profiles.
pub fn comparative_statics_tau1(
    params: &Params,
    priors_a: &PriorProfile,
    priors_b: &PriorProfile,
    tau_max: u32,
    options: &VerifyOptions,
) -> Result<ComparativeStatics> {
    let observe = |priors: &PriorProfile| -> Result<u32> {
        let set = enumerate_cascade_equilibria(params, priors, tau_max, DEFAULT_BUDGET, options)?;
        if set.profiles.is_empty() {
            return Err(CascadeError::Invalid(format!(
                "no cascade equilibrium with cutoffs up to {tau_max} at priors {:?}",
                priors.probs()
            )));
        }
        let top = max_prior_agents(priors);
        Ok(set
            .profiles
            .iter()
            .filter_map(|c| c.as_finite())
            .flat_map(|t| top.iter().map(move |&i| t[i]).collect::<Vec<_>>())
            .max()
            .unwrap_or(0))
    };
    let (pa, pb) = (priors_a.max_prob(), priors_b.max_prob());
    let ta = tau_single(Belief::new(pa)?, params);
    let tb = tau_single(Belief::new(pb)?, params);
    let monotone = (pa <= pb || ta >= tb) && (pb <= pa || tb >= ta);
    Ok(ComparativeStatics {
        top_prior_a: pa,
        top_prior_b: pb,
        tau_top_a: ta,
        tau_top_b: tb,
        observed_top_a: observe(priors_a)?,
        observed_top_b: observe(priors_b)?,
        monotone,
    })
}

/// Candidate radii and sampling for the robustness search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessGrid {
    pub radii: Vec<f64>,
    /// Random perturbations per radius, on top of the corners.
    pub samples: usize,
    pub seed: u64,
}

impl Default for RobustnessGrid {
    fn default() -> Self {
        Self {
            radii: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2],
            samples: 8,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub center: PriorProfile,
    pub cutoffs: CutoffProfile,
    /// Largest grid radius at which every sampled prior, and every sample
    /// at every smaller radius, re-verifies.
    pub radius: f64,
    /// Smallest on-path margin `-gain` at the center.
    pub slack: f64,
    /// Every prior profile that was tested, with its verdict.
    pub tested: Vec<(Vec<f64>, f64, bool)>,
}

fn perturbations(center: &[f64], eps: f64, samples: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = center.len();
    let clamp = |p: f64| p.clamp(1e-12, 1.0 - 1e-12);
    let mut out = Vec::new();
    for mask in 0..(1u32 << n) {
        out.push(
            (0..n)
                .map(|i| clamp(center[i] + if mask & (1 << i) != 0 { eps } else { -eps }))
                .collect::<Vec<f64>>(),
        );
    }
    for _ in 0..samples {
        out.push(
            (0..n)
                .map(|i| clamp(center[i] + rng.random_range(-eps..=eps)))
                .collect(),
        );
    }
    for p in &mut out {
        p.sort_by(|a, b| b.total_cmp(a));
    }
    out
}

/// Certifies a radius around `center` within which the same cutoff profile
/// stays an equilibrium, by re-verifying sampled perturbed priors.
pub fn robustness_ball(
    params: &Params,
    center: &PriorProfile,
    cutoffs: &CutoffProfile,
    grid: &RobustnessGrid,
    options: &VerifyOptions,
) -> Result<RobustnessReport> {
    let report = verify_cutoffs(params, center, cutoffs, options)?;
    if !report.is_equilibrium {
        return Err(CascadeError::Invalid(format!(
            "center does not verify: max gain {:e}",
            report.max_gain
        )));
    }
    let slack = report.on_path_slack();
    if slack < GENERIC_SLACK {
        return Err(CascadeError::Invalid(format!(
            "non-generic center: on-path slack {slack:e} below {GENERIC_SLACK:e}"
        )));
    }
    let mut radii = grid.radii.clone();
    radii.retain(|r| *r > 0.0 && r.is_finite());
    radii.sort_by(f64::total_cmp);
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let quick = VerifyOptions {
        stop_at_first_failure: true,
        ..*options
    };
    let mut radius = 0.0;
    let mut tested = Vec::new();
    for &eps in &radii {
        let mut batch = perturbations(&center.probs(), eps, grid.samples, &mut rng);
        batch.extend(perturbations(&center.probs(), eps / 2.0, 0, &mut rng));
        let verdicts: Vec<bool> = batch
            .par_iter()
            .map(|p| {
                let priors = PriorProfile::from_probs(p)?;
                Ok(verify_cutoffs(params, &priors, cutoffs, &quick)?.is_equilibrium)
            })
            .collect::<Result<_>>()?;
        let all = verdicts.iter().all(|&v| v);
        tested.extend(batch.into_iter().zip(verdicts).map(|(p, v)| (p, eps, v)));
        if !all {
            break;
        }
        radius = eps;
    }
    Ok(RobustnessReport {
        center: center.clone(),
        cutoffs: cutoffs.clone(),
        radius,
        slack,
        tested,
    })
}
