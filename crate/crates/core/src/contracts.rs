//! Ex-ante contracting: the most optimistic agent buys every payoff stream
//! and explores on all arms until the efficient cutoff.

use serde::{Deserialize, Serialize};

use crate::cutoffs::stopping_times;
use crate::error::{CascadeError, Result};
use crate::model::{Belief, Cutoff, Params, PriorProfile};

fn efficient_length(p: Belief, params: &Params) -> Cutoff {
    stopping_times(p, params).tau_efficient
}

/// Total payoff an owner of all `n` streams expects at belief `p`:
/// `n(1-d^(t+1))[pE1-(1-p)E0] + n p [1-(1-pi)^(n t)] d^(t+1) E1` with `t`
/// the efficient exploration length.
pub fn total_expected_payoff(p: Belief, params: &Params) -> f64 {
    let n = params.n_agents() as f64;
    let tau = match efficient_length(p, params) {
        Cutoff::Unbounded => return n * params.e_good(),
        Cutoff::Finite(t) => t,
    };
    let (d, pi, e1, e0) = (
        params.delta(),
        params.pi(),
        params.e_good(),
        params.e_loss(),
    );
    let p = p.prob();
    let stop = d.powi(tau as i32 + 1);
    let found = 1.0 - (1.0 - pi).powi((params.n_agents() as u32 * tau) as i32);
    n * (1.0 - stop) * (p * e1 - (1.0 - p) * e0) + n * p * found * stop * e1
}

/// Same plan with per-period weights `(1-d)d^(t-1)` over the exploration
/// periods and the good-state stream starting right after them. This is the
/// exact value of exploring on all arms for the efficient length.
pub fn total_expected_payoff_discounted(p: Belief, params: &Params) -> f64 {
    let n = params.n_agents() as f64;
    let tau = match efficient_length(p, params) {
        Cutoff::Unbounded => return n * params.e_good(),
        Cutoff::Finite(t) => t,
    };
    let (d, pi, e1, e0) = (
        params.delta(),
        params.pi(),
        params.e_good(),
        params.e_loss(),
    );
    let p = p.prob();
    let flow = p * e1 - (1.0 - p) * e0;
    let explore: f64 = (1..=tau)
        .map(|t| n * (1.0 - d) * d.powi(t as i32 - 1) * flow)
        .sum();
    let found = 1.0 - (1.0 - pi).powi((params.n_agents() as u32 * tau) as i32);
    explore + n * p * found * d.powi(tau as i32) * e1
}

/// Both evaluations at one belief, for plotting and for auditing the gap
/// between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffPoint {
    pub prior: f64,
    pub exploration_length: Option<u32>,
    pub total_payoff: f64,
    pub discounted_payoff: f64,
    pub difference: f64,
}

pub fn payoff_point(p: Belief, params: &Params) -> PayoffPoint {
    let a = total_expected_payoff(p, params);
    let b = total_expected_payoff_discounted(p, params);
    PayoffPoint {
        prior: p.prob(),
        exploration_length: efficient_length(p, params).finite(),
        total_payoff: a,
        discounted_payoff: b,
        difference: a - b,
    }
}

/// Evenly spaced curve over `[0, 1]` with `points` entries.
pub fn payoff_curve(params: &Params, points: usize) -> Result<Vec<PayoffPoint>> {
    if points < 2 {
        return Err(CascadeError::Invalid(
            "a curve needs at least two points".into(),
        ));
    }
    (0..points)
        .map(|k| {
            let p = Belief::new(k as f64 / (points - 1) as f64)?;
            Ok(payoff_point(p, params))
        })
        .collect()
}

/// Adjacent pairs on a curve where the total payoff falls.
pub fn monotonicity_violations(curve: &[PayoffPoint]) -> Vec<(PayoffPoint, PayoffPoint)> {
    curve
        .windows(2)
        .filter(|w| w[1].total_payoff < w[0].total_payoff)
        .map(|w| (w[0], w[1]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractOutcome {
    pub owner: usize,
    pub exploration_length: Cutoff,
    pub total_payoff: f64,
    /// Total payoff each agent expects from owning every stream.
    pub per_agent_willingness: Vec<f64>,
}

/// The agent with the strictly highest prior values the streams most and
/// buys them all.
pub fn contract_outcome(priors: &PriorProfile, params: &Params) -> Result<ContractOutcome> {
    priors.check_len(params)?;
    let top = priors.max_prob();
    let owners: Vec<usize> = (0..priors.len())
        .filter(|&i| priors.get(i).prob() == top)
        .collect();
    if owners.len() != 1 {
        return Err(CascadeError::Invalid(format!(
            "no strict optimist: agents {owners:?} share the highest prior {top}"
        )));
    }
    let owner = owners[0];
    let per_agent_willingness: Vec<f64> = priors
        .iter()
        .map(|&q| total_expected_payoff(q, params))
        .collect();
    Ok(ContractOutcome {
        owner,
        exploration_length: efficient_length(priors.get(owner), params),
        total_payoff: per_agent_willingness[owner],
        per_agent_willingness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_a() -> Params {
        Params::from_moments(0.2, 0.6, 2.0, 1.0, 3).unwrap()
    }

    fn b(p: f64) -> Belief {
        Belief::new(p).unwrap()
    }

    #[test]
    fn even_prior_at_a() {
        let v = total_expected_payoff(b(0.5), &params_a());
        let expected = 3.0 * 0.992 * 0.5 + 1.5 * (1.0 - 0.4f64.powi(6)) * 0.016;
        assert!((v - expected).abs() < 1e-12, "{v}");
        assert!((v - 1.51190).abs() < 1e-5);
    }

    #[test]
    fn endpoints() {
        let p = params_a();
        // no exploration: the discounted plan is worth nothing, while the
        // closed form still charges one period of risky flow
        assert_eq!(total_expected_payoff_discounted(b(0.1), &p), 0.0);
        assert!((total_expected_payoff(b(0.1), &p) - 3.0 * 0.8 * (0.2 - 0.9)).abs() < 1e-12);
        assert!((total_expected_payoff(b(0.0), &p) + 2.4).abs() < 1e-12);
        assert_eq!(total_expected_payoff(b(1.0), &p), 6.0);
        assert_eq!(total_expected_payoff_discounted(b(1.0), &p), 6.0);
    }

    #[test]
    fn discounted_variant_at_a() {
        // 3 * 0.96 * 0.5 + 3 * 0.5 * (1 - 0.4^6) * 0.04 * 2
        let expected = 1.44 + 1.5 * (1.0 - 0.4f64.powi(6)) * 0.08;
        assert!((total_expected_payoff_discounted(b(0.5), &params_a()) - expected).abs() < 1e-12);
    }

    #[test]
    fn owner_is_the_optimist() {
        let out = contract_outcome(
            &PriorProfile::from_probs(&[0.6, 0.5, 0.4]).unwrap(),
            &params_a(),
        )
        .unwrap();
        assert_eq!(out.owner, 0);
        assert_eq!(out.total_payoff, out.per_agent_willingness[0]);
        assert!(out.per_agent_willingness.windows(2).all(|w| w[0] >= w[1]));
        let tie = contract_outcome(
            &PriorProfile::from_probs(&[0.5, 0.5, 0.4]).unwrap(),
            &params_a(),
        );
        assert!(matches!(tie, Err(CascadeError::Invalid(_))));
    }

    #[test]
    fn curve_shape() {
        let c = payoff_curve(&params_a(), 11).unwrap();
        assert_eq!(c.len(), 11);
        assert_eq!(c[0].prior, 0.0);
        assert_eq!(c[10].exploration_length, None);
    }
}
