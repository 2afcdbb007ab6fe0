use proptest::prelude::*;

use cascade_core::beliefs::{posterior_after_failures, posterior_direct};
use cascade_core::contracts::contract_outcome;
use cascade_core::cutoffs::{
    efficient_cutoff, single_agent_cutoff, stopping_time_detail, stopping_times, tau_single,
};
use cascade_core::equilibrium::{
    enumerate_cascade_equilibria, verify_cutoffs, VerifyOptions, DEFAULT_BUDGET,
};
use cascade_core::scenarios::hetexp_condition;
use cascade_core::sim::{
    exact_outcome_distribution, expected_payoffs, Conditioning, EnumerationLimits,
};
use cascade_core::{Belief, CutoffProfile, Params, PriorProfile};

fn params_strategy(max_agents: usize) -> impl Strategy<Value = Params> {
    (
        0.05f64..0.95,
        0.05f64..0.95,
        0.1f64..10.0,
        0.1f64..10.0,
        1..=max_agents,
    )
        .prop_map(|(d, pi, e1, e0, n)| Params::from_moments(d, pi, e1, e0, n).unwrap())
}

fn sorted_priors(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..0.95, n).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

proptest! {
    #[test]
    fn posterior_is_a_martingale(q in 0.0f64..=1.0, pi in 0.001f64..0.999) {
        let post = posterior_after_failures(Belief::new(q).unwrap(), pi, 1).prob();
        prop_assert!((q * pi + (1.0 - q * pi) * post - q).abs() <= 1e-12);
    }

    #[test]
    fn failures_compose(q in 0.001f64..0.999, pi in 0.001f64..0.999, a in 0u64..200, b in 0u64..200) {
        let q = Belief::new(q).unwrap();
        let two = posterior_after_failures(posterior_after_failures(q, pi, a), pi, b).prob();
        let one = posterior_after_failures(q, pi, a + b).prob();
        prop_assert!((two - one).abs() <= 1e-12);
    }

    #[test]
    fn log_odds_path_matches_direct(q in 0.001f64..0.999, pi in 0.001f64..0.999, k in 0u64..=100) {
        let a = posterior_after_failures(Belief::new(q).unwrap(), pi, k).prob();
        let b = posterior_direct(q, pi, k);
        prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(f64::MIN_POSITIVE) || (a - b).abs() < 1e-300);
    }

    #[test]
    fn posterior_monotone(q in 0.01f64..0.98, dq in 0.001f64..0.01, pi in 0.01f64..0.9, k in 0u64..40) {
        let lo = posterior_after_failures(Belief::new(q).unwrap(), pi, k).prob();
        let hi = posterior_after_failures(Belief::new(q + dq).unwrap(), pi, k).prob();
        let next = posterior_after_failures(Belief::new(q).unwrap(), pi, k + 1).prob();
        prop_assert!(hi > lo);
        prop_assert!(next < lo);
    }

    #[test]
    fn stopping_times_monotone_in_prior(params in params_strategy(4), q in 0.01f64..0.98, dq in 0.0f64..0.02) {
        let lo = stopping_times(Belief::new(q).unwrap(), &params);
        let hi = stopping_times(Belief::new(q + dq).unwrap(), &params);
        prop_assert!(hi.tau_single.finite() >= lo.tau_single.finite());
        prop_assert!(hi.tau_efficient.finite() >= lo.tau_efficient.finite());
        let (a, e) = (lo.tau_single.finite().unwrap(), lo.tau_efficient.finite().unwrap());
        prop_assert!(params.n_agents() as u32 * e >= a);
    }

    #[test]
    fn cutoff_ordering(params in params_strategy(5)) {
        let (pa, pe) = (single_agent_cutoff(&params).prob(), efficient_cutoff(&params).prob());
        if params.n_agents() == 1 {
            prop_assert_eq!(pa, pe);
        } else {
            prop_assert!(pe < pa);
            let more = params.with_agents(params.n_agents() + 1).unwrap();
            prop_assert!(efficient_cutoff(&more).prob() < pe);
        }
    }

    #[test]
    fn cutoffs_scale_free(params in params_strategy(3), c in 0.01f64..100.0) {
        let scaled = params.scaled(c).unwrap();
        for (a, b) in [
            (single_agent_cutoff(&params).prob(), single_agent_cutoff(&scaled).prob()),
            (efficient_cutoff(&params).prob(), efficient_cutoff(&scaled).prob()),
        ] {
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn moments_identity(params in params_strategy(3)) {
        let lhs = params.e_good() + params.e_loss();
        let rhs = params.pi() * (params.x_high() - params.x_low());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
        let back: Params = serde_json::from_str(&serde_json::to_string(&params).unwrap()).unwrap();
        prop_assert_eq!(back.raw(), params.raw());
    }

    #[test]
    fn owner_is_scale_free(probs in sorted_priors(3), c in 0.01f64..100.0) {
        prop_assume!(probs[0] > probs[1]);
        let params = Params::from_moments(0.5, 0.3, 2.0, 1.0, 3).unwrap();
        let priors = PriorProfile::from_probs(&probs).unwrap();
        let base = contract_outcome(&priors, &params).unwrap();
        let scaled = contract_outcome(&priors, &params.scaled(c).unwrap()).unwrap();
        prop_assert_eq!(base.owner, 0);
        prop_assert_eq!(scaled.owner, base.owner);
        prop_assert!((scaled.total_payoff - c * base.total_payoff).abs() <= 1e-9 * c.max(1.0));
    }

    #[test]
    fn condition_positive_for_small_success_rates(pi in 1e-6f64..=0.1) {
        prop_assert!(hetexp_condition(pi) > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distribution_sums_to_one(params in params_strategy(3), taus in prop::collection::vec(0u32..4, 3), theta in 0u8..=1) {
        let n = params.n_agents();
        let priors = PriorProfile::common(0.5, n).unwrap();
        let cutoffs = CutoffProfile::finite(&taus[..n]);
        let d = exact_outcome_distribution(&params, &priors, &cutoffs, Conditioning::State { theta }, EnumerationLimits::default()).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() <= 1e-12);
        if theta == 0 {
            for (rec, _) in &d.support {
                prop_assert!(rec.revelation_time.is_none());
                for (s, t) in rec.switch_times.iter().zip(&taus[..n]) {
                    prop_assert_eq!(*s, Some(t + 1));
                }
            }
        }
    }

    #[test]
    fn payoffs_scale_linearly(params in params_strategy(3), probs in sorted_priors(3), c in 0.1f64..10.0) {
        let n = params.n_agents();
        let priors = PriorProfile::from_probs(&probs[..n]).unwrap();
        let cutoffs = CutoffProfile::finite(&vec![2; n]);
        let limits = EnumerationLimits::default();
        let base = expected_payoffs(&params, &priors, &cutoffs, &probs[..n], limits).unwrap();
        let scaled = expected_payoffs(&params.scaled(c).unwrap(), &priors, &cutoffs, &probs[..n], limits).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((b - c * a).abs() <= 1e-9 * c.max(1.0) * a.abs().max(1.0));
        }
    }

    #[test]
    fn lone_cutoff_maximizes_simulated_value(d in 0.1f64..0.9, pi in 0.1f64..0.8, e1 in 0.3f64..3.0, q in 0.1f64..0.9) {
        let params = Params::from_moments(d, pi, e1, 1.0, 1).unwrap();
        let b = Belief::new(q).unwrap();
        prop_assume!(!stopping_time_detail(b, single_agent_cutoff(&params), pi).boundary);
        let tau = tau_single(b, &params);
        prop_assume!(tau < 10);
        let priors = PriorProfile::common(q, 1).unwrap();
        let values: Vec<f64> = (0..=12)
            .map(|k| expected_payoffs(&params, &priors, &CutoffProfile::finite(&[k]), &[q], EnumerationLimits::default()).unwrap()[0])
            .collect();
        let best = (0..values.len()).max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap() as u32;
        prop_assert_eq!(best, tau);
    }

    #[test]
    fn beliefs_are_consistent(
        d in 0.2f64..0.8,
        pi in 0.2f64..0.8,
        n in 2usize..=3,
        probs in sorted_priors(3),
        taus in prop::collection::vec(0u32..4, 3),
    ) {
        let params = Params::from_moments(d, pi, 2.0, 1.0, n).unwrap();
        let priors = PriorProfile::from_probs(&probs[..n]).unwrap();
        let r = verify_cutoffs(&params, &priors, &CutoffProfile::finite(&taus[..n]), &VerifyOptions::default()).unwrap();
        prop_assert!(r.max_belief_error <= 1e-12);
        for node in r.nodes.iter().filter(|x| x.on_path()) {
            prop_assert!((node.belief - node.bayes_belief).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn enumeration_is_idempotent(probs in sorted_priors(2), d in 0.2f64..0.8, pi in 0.2f64..0.8) {
        let params = Params::from_moments(d, pi, 2.0, 1.0, 2).unwrap();
        let priors = PriorProfile::from_probs(&probs).unwrap();
        let opts = VerifyOptions::default();
        let first = enumerate_cascade_equilibria(&params, &priors, 4, DEFAULT_BUDGET, &opts).unwrap();
        let second = enumerate_cascade_equilibria(&params, &priors, 4, DEFAULT_BUDGET, &opts).unwrap();
        prop_assert_eq!(&first, &second);
        let mut seen = first.profiles.clone();
        seen.dedup();
        prop_assert_eq!(seen.len(), first.profiles.len());
        for c in &first.profiles {
            prop_assert!(verify_cutoffs(&params, &priors, c, &opts).unwrap().is_equilibrium);
        }
    }
}
