//! Closed-form cutoff beliefs, stopping times, and the sufficient condition
//! for existence of symmetric cascade equilibria.

use serde::{Deserialize, Serialize};

use crate::beliefs::posterior_after_failures;
use crate::model::{Belief, Cutoff, Params};

/// Relative distance below which a posterior counts as sitting on a cutoff.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Belief at which a lone agent is indifferent between one more risky
/// period and stopping forever.
pub fn single_agent_cutoff(params: &Params) -> Belief {
    let (d, pi, e1, e0) = (
        params.delta(),
        params.pi(),
        params.e_good(),
        params.e_loss(),
    );
    let p = (1.0 - d) * e0 / ((1.0 - d) * (e1 + e0) + d * pi * e1);
    Belief::new(p).expect("cutoff lies in (0,1) for valid params")
}

/// Cutoff of a planner who pulls one more arm knowing a success unlocks all
/// `n` arms.
pub fn efficient_cutoff(params: &Params) -> Belief {
    let (d, pi, e1, e0) = (
        params.delta(),
        params.pi(),
        params.e_good(),
        params.e_loss(),
    );
    let n = params.n_agents() as f64;
    let p = (1.0 - d) * e0 / ((1.0 - d) * (e1 + e0) + d * n * pi * e1);
    Belief::new(p).expect("cutoff lies in (0,1) for valid params")
}

/// A stopping time together with whether some posterior along the way sits
/// within [`BOUNDARY_TOL`] of the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingDetail {
    pub tau: Cutoff,
    pub boundary: bool,
}

/// Number of all-failure periods explored while the current belief is at
/// least `cutoff` (ties explore).
pub fn stopping_time(prior: Belief, cutoff: Belief, pi: f64) -> Cutoff {
    stopping_time_detail(prior, cutoff, pi).tau
}

pub fn stopping_time_detail(prior: Belief, cutoff: Belief, pi: f64) -> StoppingDetail {
    if prior.is_certain() {
        return StoppingDetail {
            tau: Cutoff::Unbounded,
            boundary: false,
        };
    }
    let c = cutoff.prob();
    let near = |p: f64| (p - c).abs() <= BOUNDARY_TOL * c;
    let mut tau = 0u32;
    let mut boundary = false;
    loop {
        let post = posterior_after_failures(prior, pi, tau as u64).prob();
        boundary |= near(post);
        if post < c {
            break;
        }
        tau += 1;
    }
    StoppingDetail {
        tau: Cutoff::Finite(tau),
        boundary,
    }
}

/// Single-agent and efficient stopping times at a prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingTimes {
    pub tau_single: Cutoff,
    pub tau_efficient: Cutoff,
}

pub fn stopping_times(prior: Belief, params: &Params) -> StoppingTimes {
    let tau_single = stopping_time(prior, single_agent_cutoff(params), params.pi());
    let tau_efficient = stopping_time(prior, efficient_cutoff(params), params.pi());
    if let (Cutoff::Finite(a), Cutoff::Finite(e)) = (tau_single, tau_efficient) {
        assert!(
            params.n_agents() as u64 * e as u64 >= a as u64,
            "n * tau_e >= tau_a violated"
        );
    }
    StoppingTimes {
        tau_single,
        tau_efficient,
    }
}

/// Lone-agent stopping time `tau^a(q)` as a plain integer. Panics on a
/// certain prior.
pub fn tau_single(prior: Belief, params: &Params) -> u32 {
    stopping_time(prior, single_agent_cutoff(params), params.pi())
        .finite()
        .expect("finite prior")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub holds: bool,
    pub lhs: f64,
    /// `None` when the right-hand denominator is exactly zero.
    pub rhs: Option<f64>,
    pub degenerate: bool,
    /// Smallest belief that is more than one failure above the single-agent
    /// cutoff.
    pub binding_belief: f64,
    /// Deviation lower bound evaluated at `binding_belief`.
    pub bound_at_binding: f64,
}

/// Belief from which one failure lands exactly on the single-agent cutoff.
pub fn binding_belief(params: &Params) -> Belief {
    let pa = single_agent_cutoff(params).prob();
    let q = pa / (pa + (1.0 - params.pi()) * (1.0 - pa));
    Belief::new(q).expect("binding belief in (0,1)")
}

/// Sufficient condition `E_1/E_0 >= (1-pi) / (delta + pi - (1-pi)(1 + delta*pi/(1-delta)))`.
///
/// When the denominator is not positive the inequality has no meaning; the
/// report is flagged degenerate and `holds` falls back to the sign of the
/// deviation bound at the binding belief.
pub fn existence_condition(params: &Params) -> ExistenceReport {
    let (d, pi) = (params.delta(), params.pi());
    let lhs = params.e_good() / params.e_loss();
    let denom = d + pi - (1.0 - pi) * (1.0 + d * pi / (1.0 - d));
    let rhs = if denom == 0.0 {
        None
    } else {
        Some((1.0 - pi) / denom)
    };
    let binding = binding_belief(params);
    let bound = deviation_lower_bound(binding, params);
    let degenerate = denom <= 0.0;
    let holds = if degenerate {
        bound >= 0.0
    } else {
        lhs >= rhs.expect("positive denominator")
    };
    ExistenceReport {
        holds,
        lhs,
        rhs,
        degenerate,
        binding_belief: binding.prob(),
        bound_at_binding: bound,
    }
}

/// Lower bound on the gain from risky over safe at belief `p`: the minimum
/// extra flow payoff this period minus the most the agent could gain by
/// matching the state two periods ahead.
pub fn deviation_lower_bound(p: Belief, params: &Params) -> f64 {
    let (d, e1, e0) = (params.delta(), params.e_good(), params.e_loss());
    let p = p.prob();
    (1.0 - d) * (p * e1 - (1.0 - p) * e0) - p * d * d * e1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_a(n: usize) -> Params {
        Params::from_moments(0.2, 0.6, 2.0, 1.0, n).unwrap()
    }

    fn b(p: f64) -> Belief {
        Belief::new(p).unwrap()
    }

    #[test]
    fn cutoff_values_at_a() {
        let p = params_a(3);
        assert!((single_agent_cutoff(&p).prob() - 0.8 / 2.64).abs() < 1e-12);
        assert!((efficient_cutoff(&p).prob() - 0.8 / 3.12).abs() < 1e-12);
        let p1 = params_a(1);
        assert_eq!(
            single_agent_cutoff(&p1).prob(),
            efficient_cutoff(&p1).prob()
        );
    }

    #[test]
    fn cutoff_vanishes_with_loss() {
        let p = Params::from_moments(0.2, 0.6, 2.0, 1e-12, 1).unwrap();
        assert!(single_agent_cutoff(&p).prob() < 1e-11);
    }

    #[test]
    fn efficient_cutoff_decreases_in_n() {
        let mut last = 1.0;
        for n in 1..200 {
            let pe = efficient_cutoff(&params_a(n)).prob();
            assert!(pe < last);
            last = pe;
        }
        assert!(last < 0.05);
    }

    #[test]
    fn stopping_time_examples() {
        let pi = 0.6;
        assert_eq!(stopping_time(b(0.5), b(0.303030), pi), Cutoff::Finite(1));
        assert_eq!(stopping_time(b(0.2), b(0.3), pi), Cutoff::Finite(0));
        assert_eq!(stopping_time(b(1.0), b(0.3), pi), Cutoff::Unbounded);
        assert_eq!(stopping_time(b(0.0), b(0.3), pi), Cutoff::Finite(0));
    }

    #[test]
    fn ties_explore() {
        let d = stopping_time_detail(b(0.3), b(0.3), 0.6);
        assert_eq!(d.tau, Cutoff::Finite(1));
        assert!(d.boundary);
    }

    #[test]
    fn stopping_times_at_a() {
        let st = stopping_times(b(0.5), &params_a(3));
        assert_eq!(st.tau_single, Cutoff::Finite(1));
        assert_eq!(st.tau_efficient, Cutoff::Finite(2));
        let low = stopping_times(b(0.1), &params_a(3));
        assert_eq!(low.tau_single, Cutoff::Finite(0));
        assert_eq!(low.tau_efficient, Cutoff::Finite(0));
        let one = stopping_times(b(1.0), &params_a(3));
        assert_eq!(one.tau_single, Cutoff::Unbounded);
        assert_eq!(one.tau_efficient, Cutoff::Unbounded);
    }

    #[test]
    fn existence_at_a() {
        let r = existence_condition(&params_a(2));
        assert!(!r.degenerate);
        assert!((r.rhs.unwrap() - 0.4 / 0.34).abs() < 1e-12);
        assert_eq!(r.lhs, 2.0);
        assert!(r.holds);
    }

    #[test]
    fn existence_degenerate() {
        let p = Params::from_moments(0.9, 0.5, 2.0, 1.0, 2).unwrap();
        let r = existence_condition(&p);
        assert!(r.degenerate);
        assert!((r.rhs.unwrap() - 0.5 / -1.35).abs() < 1e-12);
        assert_eq!(r.holds, r.bound_at_binding >= 0.0);
    }

    #[test]
    fn existence_as_pi_goes_to_one() {
        for &(d, e1) in &[(0.1, 0.01), (0.5, 0.1), (0.9, 0.5)] {
            let p = Params::from_moments(d, 1.0 - 1e-9, e1, 1.0, 2).unwrap();
            let r = existence_condition(&p);
            assert!(!r.degenerate);
            assert!(r.rhs.unwrap() < 1e-8);
            assert!(r.holds);
        }
    }

    #[test]
    fn deviation_bound_examples() {
        let p = params_a(2);
        assert!((deviation_lower_bound(b(0.5), &p) - 0.36).abs() < 1e-12);
        // indifference of the myopic term
        let q = 1.0 / 3.0;
        assert!(deviation_lower_bound(b(q), &p) < 0.0);
        let tiny = Params::from_moments(1e-12, 0.6, 2.0, 1.0, 2).unwrap();
        let myopic = 0.7 * 2.0 - 0.3;
        assert!((deviation_lower_bound(b(0.7), &tiny) - myopic).abs() < 1e-9);
    }
}
