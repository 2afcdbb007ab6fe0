//! Bayesian updating on the good state.
//!
//! A failure has likelihood `1 - pi` in the good state and `1` in the bad
//! state, so `k` failures shift the log-odds by `k * ln(1 - pi)`. A success is
//! impossible in the bad state and therefore fully revealing.

use crate::model::Belief;

/// Posterior after `k` private failures.
pub fn posterior_after_failures(prior: Belief, pi: f64, k: u64) -> Belief {
    if k == 0 || !prior.log_odds().is_finite() {
        return prior;
    }
    Belief::from_log_odds(prior.log_odds() + k as f64 * (-pi).ln_1p())
}

pub fn posterior_after_success() -> Belief {
    Belief::certain()
}

/// Public update after observed switches reveal `newly_revealed_failures`
/// failures of other agents. Same likelihood as a private failure run since
/// draws are independent across agents given the state.
pub fn incorporate_switch_revelation(
    belief: Belief,
    pi: f64,
    newly_revealed_failures: u64,
) -> Belief {
    posterior_after_failures(belief, pi, newly_revealed_failures)
}

/// Probability-space form of the failure update. Underflows for long runs;
/// kept for cross-checking the log-odds path.
pub fn posterior_direct(prior: f64, pi: f64, k: u64) -> f64 {
    let lik = (1.0 - pi).powf(k as f64);
    prior * lik / (prior * lik + 1.0 - prior)
}

/// Belief after each of `0..=k` failures.
pub fn failure_trajectory(prior: Belief, pi: f64, k: u64) -> Vec<Belief> {
    (0..=k)
        .map(|j| posterior_after_failures(prior, pi, j))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(p: f64) -> Belief {
        Belief::new(p).unwrap()
    }

    #[test]
    fn one_failure_from_even_prior() {
        let post = posterior_after_failures(b(0.5), 0.6, 1);
        assert!((post.prob() - 0.2 / 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_failures_is_identity() {
        assert_eq!(posterior_after_failures(b(0.7), 0.3, 0).prob(), 0.7);
        assert_eq!(incorporate_switch_revelation(b(0.3), 0.9, 0).prob(), 0.3);
    }

    #[test]
    fn endpoints_absorb() {
        assert_eq!(posterior_after_failures(b(1.0), 0.6, 10).prob(), 1.0);
        assert_eq!(posterior_after_failures(b(0.0), 0.6, 10).prob(), 0.0);
        let s = posterior_after_success();
        assert_eq!(s.prob(), 1.0);
        assert_eq!(posterior_after_failures(s, 0.6, 5).prob(), 1.0);
    }

    #[test]
    fn switch_revelation_two_failures() {
        let post = incorporate_switch_revelation(b(0.5), 0.6, 2);
        assert!((post.prob() - 0.08 / 0.58).abs() < 1e-15);
    }

    #[test]
    fn long_runs_stay_positive() {
        let post = posterior_after_failures(b(0.5), 0.9, 2000);
        assert!(post.log_odds().is_finite());
        assert!((post.log_odds() - 2000.0 * 0.1f64.ln()).abs() < 1e-9);
        let mid = posterior_after_failures(b(0.5), 0.9, 300);
        assert!(mid.prob() > 0.0);
        assert_eq!(posterior_direct(0.5, 0.9, 2000), 0.0);
    }

    #[test]
    fn trajectory_prefix() {
        let tr = failure_trajectory(b(0.5), 0.6, 2);
        assert_eq!(tr.len(), 3);
        assert_eq!(tr[0].prob(), 0.5);
        assert!((tr[2].prob() - 0.137931034482758).abs() < 1e-12);
    }
}
