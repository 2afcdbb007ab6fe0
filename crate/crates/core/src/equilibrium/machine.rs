//! The canonical cascade strategy profile as a deterministic state machine.
//!
//! Regimes:
//! - on path: agent `i` plays risky through period `tau_i`, then safe;
//! - off path (after an early switch): every agent plays risky iff her
//!   private belief is at least the single-agent cutoff;
//! - triggered (after risky play that only a successful agent would make):
//!   everyone who observed it believes the state is good and plays risky
//!   forever; the agent who caused it alone knows better and follows her
//!   single-agent rule.
//!
//! A safe action reveals that the agent saw only failures in all her draws,
//! and any agent who has seen a success plays risky forever.

use crate::beliefs::posterior_after_failures;
use crate::cutoffs::{single_agent_cutoff, tau_single};
use crate::error::{CascadeError, Result};
use crate::model::{
    Action, AgentStatus, Belief, CutoffProfile, GameState, Params, PriorProfile, RevelationCause,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Regime {
    OnPath,
    OffPath,
    Triggered,
}

/// Full state of play: public history summary plus private success flags.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PlayState {
    pub t: u32,
    pub regime: Regime,
    pub cause: RevelationCause,
    /// Risky draws taken so far (public, since actions are observed).
    pub draws: Vec<u32>,
    pub failures: Vec<u32>,
    pub success: Vec<bool>,
    /// Believes the state is good because someone else's risky play
    /// could only come from a success.
    pub informed: Vec<bool>,
    /// Failures revealed by the agent's most recent safe action.
    pub revealed: Vec<u32>,
    pub switched_at: Vec<Option<u32>>,
    pub last_action: Vec<Option<Action>>,
}

impl PlayState {
    pub fn initial(n: usize) -> Self {
        Self {
            t: 1,
            regime: Regime::OnPath,
            cause: RevelationCause::None,
            draws: vec![0; n],
            failures: vec![0; n],
            success: vec![false; n],
            informed: vec![false; n],
            revealed: vec![0; n],
            switched_at: vec![None; n],
            last_action: vec![None; n],
        }
    }

    pub fn n(&self) -> usize {
        self.draws.len()
    }

    /// Failures of others known publicly to agent `i`.
    pub fn public_failures(&self, i: usize) -> u32 {
        self.revealed
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != i)
            .map(|(_, r)| r)
            .sum()
    }

    pub fn fixed_risky(&self, i: usize) -> bool {
        self.success[i] || self.informed[i]
    }

    /// Projection onto the public game-state summary, as seen by `viewer`:
    /// the viewer's own failure tally is exact, others' are their publicly
    /// revealed counts.
    pub fn game_state(&self, viewer: usize) -> GameState {
        let n = self.n();
        let statuses = (0..n)
            .map(|j| {
                if self.informed[j] || (j == viewer && self.success[j]) {
                    AgentStatus::RiskyForever
                } else if self.last_action[j] == Some(Action::Safe) {
                    AgentStatus::Switched {
                        at_period: self.switched_at[j].unwrap_or(1),
                    }
                } else {
                    AgentStatus::Exploring
                }
            })
            .collect();
        let failure_counts = (0..n)
            .map(|j| {
                if j == viewer {
                    self.failures[j]
                } else {
                    self.revealed[j]
                }
            })
            .collect();
        GameState {
            t: self.t,
            statuses,
            revelation: self.cause,
            failure_counts,
            public_belief_basis: self.revealed.clone(),
            off_path: self.regime == Regime::OffPath,
        }
    }
}

/// Canonical off-path rule set. Only one is implemented; the enum keeps the
/// profile type honest about which refinement a verification refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffPathRule {
    Canonical,
}

/// Cutoffs plus the off-path rules and beliefs that complete them into a
/// strategy profile.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StrategyProfile {
    pub cutoffs: CutoffProfile,
    pub off_path_rule: OffPathRule,
}

impl StrategyProfile {
    pub fn canonical(cutoffs: CutoffProfile) -> Self {
        Self {
            cutoffs,
            off_path_rule: OffPathRule::Canonical,
        }
    }
}

/// Everything the machine needs, resolved once per verification.
#[derive(Debug, Clone)]
pub(crate) struct Game {
    pub params: Params,
    pub priors: Vec<Belief>,
    pub taus: Vec<u32>,
    pub p_a: f64,
    /// Per-agent bound on risky draws taken while the agent's behavior can
    /// still depend on her own draws.
    pub draw_bounds: Vec<u32>,
}

impl Game {
    pub fn new(params: &Params, priors: &PriorProfile, cutoffs: &CutoffProfile) -> Result<Self> {
        priors.check_len(params)?;
        cutoffs.validate_against(priors)?;
        let taus = cutoffs
            .as_finite()
            .ok_or_else(|| CascadeError::Invalid("verification needs finite cutoffs".into()))?;
        if priors.iter().any(|b| b.is_certain()) {
            return Err(CascadeError::Invalid(
                "a prior of exactly 1 makes the agent play risky forever; it has no cutoff to verify".into(),
            ));
        }
        let priors_v: Vec<Belief> = priors.iter().copied().collect();
        // Two extra draws: one from a one-shot deviation defining the
        // context, one from the deviation being checked.
        let draw_bounds = taus
            .iter()
            .zip(&priors_v)
            .map(|(&t, &q)| t.max(tau_single(q, params)) + 2)
            .collect();
        Ok(Self {
            params: *params,
            priors: priors_v,
            taus,
            p_a: single_agent_cutoff(params).prob(),
            draw_bounds,
        })
    }

    pub fn n(&self) -> usize {
        self.taus.len()
    }

    /// Belief of agent `i` on the no-success branch, where every own draw
    /// was a failure.
    pub fn failure_belief(&self, s: &PlayState, i: usize) -> Belief {
        posterior_after_failures(
            self.priors[i],
            self.params.pi(),
            (s.draws[i] + s.public_failures(i)) as u64,
        )
    }

    /// Private belief: 1 after an own success or a trigger inference.
    pub fn private_belief(&self, s: &PlayState, i: usize) -> Belief {
        if s.fixed_risky(i) {
            Belief::certain()
        } else {
            self.failure_belief(s, i)
        }
    }

    /// What agent `i` plays if she has seen no success.
    pub fn base_action(&self, s: &PlayState, i: usize) -> Action {
        let by_belief = || {
            if self.failure_belief(s, i).prob() >= self.p_a {
                Action::Risky
            } else {
                Action::Safe
            }
        };
        match s.regime {
            Regime::Triggered if s.informed[i] => Action::Risky,
            Regime::Triggered | Regime::OffPath => by_belief(),
            Regime::OnPath => {
                if s.t <= self.taus[i] {
                    Action::Risky
                } else {
                    Action::Safe
                }
            }
        }
    }

    pub fn prescribed(&self, s: &PlayState, i: usize) -> Action {
        if s.fixed_risky(i) {
            Action::Risky
        } else {
            self.base_action(s, i)
        }
    }

    /// Updates the public state after everyone moved, given the actions and
    /// whether each risky draw was a success.
    pub fn advance(&self, s: &mut PlayState, actions: &[Action], successes: &[bool]) {
        let n = self.n();
        let base: Vec<Action> = (0..n).map(|j| self.base_action(s, j)).collect();
        let inconsistent: Vec<usize> = (0..n)
            .filter(|&j| actions[j] == Action::Risky && base[j] == Action::Safe)
            .collect();
        let early_safe = (0..n).any(|j| actions[j] == Action::Safe && base[j] == Action::Risky);
        let on_path_non_switch = s.regime == Regime::OnPath
            && inconsistent.iter().any(|&j| {
                s.t == self.taus[j] + 1 && s.draws[j] > 0 && s.last_action[j] != Some(Action::Safe)
            });

        for j in 0..n {
            match actions[j] {
                Action::Risky => {
                    s.draws[j] += 1;
                    if successes[j] {
                        s.success[j] = true;
                    } else if !s.success[j] {
                        s.failures[j] += 1;
                    }
                }
                Action::Safe => {
                    if s.last_action[j] != Some(Action::Safe) {
                        s.switched_at[j] = Some(s.t);
                    }
                    s.revealed[j] = s.draws[j];
                }
            }
            s.last_action[j] = Some(actions[j]);
        }

        if s.regime != Regime::Triggered && !inconsistent.is_empty() {
            s.regime = Regime::Triggered;
            s.cause = if on_path_non_switch {
                RevelationCause::SuccessSignal
            } else {
                RevelationCause::OffCutoffRisky
            };
            for x in 0..n {
                s.informed[x] = inconsistent.iter().any(|&l| l != x);
            }
        } else if s.regime == Regime::OnPath && early_safe {
            s.regime = Regime::OffPath;
        }
        s.t += 1;
    }

    /// True when nothing can change any more: every agent either rests on
    /// safe or is committed to risky.
    pub fn absorbed(&self, s: &PlayState) -> bool {
        let n = self.n();
        match s.regime {
            Regime::Triggered => {
                (0..n).all(|j| s.fixed_risky(j) || self.base_action(s, j) == Action::Safe)
            }
            Regime::OnPath => {
                (0..n).all(|j| !s.success[j] && self.base_action(s, j) == Action::Safe)
            }
            // Beliefs only move when someone with fresh draws plays safe, so
            // a successful agent whose belief rule still says risky never
            // gets to reveal herself.
            Regime::OffPath => {
                (0..n).all(|j| s.success[j] == (self.base_action(s, j) == Action::Risky))
            }
        }
    }
}

/// Action prescribed at a decision node, from the node's public summary and
/// the agent's private belief.
pub fn prescribed_action(
    params: &Params,
    profile: &StrategyProfile,
    agent: usize,
    state: &GameState,
    private_belief: Belief,
) -> Result<Action> {
    let n = profile.cutoffs.len();
    if agent >= n || state.statuses.len() != n {
        return Err(CascadeError::Invalid(format!(
            "unreachable node: agent {agent} of {n}"
        )));
    }
    let tau = profile.cutoffs.taus[agent]
        .finite()
        .ok_or_else(|| CascadeError::Invalid("unreachable node: unbounded cutoff".into()))?;
    if private_belief.is_certain() {
        return Ok(Action::Risky);
    }
    let p_a = single_agent_cutoff(params).prob();
    let by_belief = if private_belief.prob() >= p_a {
        Action::Risky
    } else {
        Action::Safe
    };
    let status = state.statuses[agent];
    if state.revelation != RevelationCause::None {
        return Ok(match status {
            AgentStatus::RiskyForever => Action::Risky,
            _ => by_belief,
        });
    }
    if status == AgentStatus::RiskyForever {
        return Err(CascadeError::Invalid(format!(
            "unreachable node: agent {agent} committed to risky with belief below one and no revelation"
        )));
    }
    if state.off_path {
        return Ok(by_belief);
    }
    if let AgentStatus::Switched { at_period } = status {
        if at_period <= tau {
            return Err(CascadeError::Invalid(format!(
                "unreachable node: agent {agent} switched at {at_period} before her cutoff {tau} without leaving the path"
            )));
        }
    }
    Ok(if state.t <= tau {
        Action::Risky
    } else {
        Action::Safe
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game(taus: &[u32], priors: &[f64]) -> Game {
        let params = Params::from_moments(0.2, 0.6, 2.0, 1.0, taus.len()).unwrap();
        Game::new(
            &params,
            &PriorProfile::from_probs(priors).unwrap(),
            &CutoffProfile::finite(taus),
        )
        .unwrap()
    }

    #[test]
    fn on_path_switch_reveals_failures() {
        let g = game(&[1, 2], &[0.6, 0.5]);
        let mut s = PlayState::initial(2);
        g.advance(&mut s, &[Action::Risky, Action::Risky], &[false, false]);
        assert_eq!(g.prescribed(&s, 0), Action::Safe);
        assert_eq!(g.prescribed(&s, 1), Action::Risky);
        g.advance(&mut s, &[Action::Safe, Action::Risky], &[false, false]);
        assert_eq!(s.regime, Regime::OnPath);
        assert_eq!(s.revealed, vec![1, 0]);
        assert_eq!(s.public_failures(1), 1);
        let b = g.failure_belief(&s, 1).prob();
        let expected = crate::beliefs::posterior_direct(0.5, 0.6, 3);
        assert!((b - expected).abs() < 1e-12);
    }

    #[test]
    fn non_switch_triggers_risky_forever() {
        let g = game(&[1, 1], &[0.5, 0.5]);
        let mut s = PlayState::initial(2);
        g.advance(&mut s, &[Action::Risky, Action::Risky], &[true, false]);
        let a: Vec<Action> = (0..2).map(|j| g.prescribed(&s, j)).collect();
        assert_eq!(a, vec![Action::Risky, Action::Safe]);
        g.advance(&mut s, &a, &[false, false]);
        assert_eq!(s.regime, Regime::Triggered);
        assert_eq!(s.cause, RevelationCause::SuccessSignal);
        assert!(s.informed[1]);
        assert!(!s.informed[0]);
        assert_eq!(g.prescribed(&s, 1), Action::Risky);
    }

    #[test]
    fn early_switch_moves_off_path() {
        let g = game(&[2, 2], &[0.9, 0.9]);
        let mut s = PlayState::initial(2);
        g.advance(&mut s, &[Action::Safe, Action::Risky], &[false, false]);
        assert_eq!(s.regime, Regime::OffPath);
        // belief rule off path: 0.9 after one revealed failure is far above p^a
        assert_eq!(g.prescribed(&s, 1), Action::Risky);
        assert_eq!(g.prescribed(&s, 0), Action::Risky);
    }

    #[test]
    fn lone_deviator_keeps_her_own_belief() {
        let g = game(&[0, 0], &[0.2, 0.2]);
        let mut s = PlayState::initial(2);
        g.advance(&mut s, &[Action::Risky, Action::Safe], &[false, false]);
        assert_eq!(s.regime, Regime::Triggered);
        assert_eq!(s.cause, RevelationCause::OffCutoffRisky);
        assert!(!s.informed[0]);
        assert!(s.informed[1]);
        assert_eq!(g.prescribed(&s, 0), Action::Safe);
        assert!(g.absorbed(&s));
    }

    #[test]
    fn node_level_rules() {
        let params = Params::from_moments(0.2, 0.6, 2.0, 1.0, 2).unwrap();
        let profile = StrategyProfile::canonical(CutoffProfile::finite(&[2, 1]));
        let b = |p| Belief::new(p).unwrap();
        let mut st = GameState::initial(2);
        assert_eq!(
            prescribed_action(&params, &profile, 0, &st, b(0.1)).unwrap(),
            Action::Risky
        );
        st.t = 3;
        assert_eq!(
            prescribed_action(&params, &profile, 0, &st, b(0.9)).unwrap(),
            Action::Safe
        );
        assert_eq!(
            prescribed_action(&params, &profile, 0, &st, Belief::certain()).unwrap(),
            Action::Risky
        );
        st.revelation = RevelationCause::SuccessSignal;
        st.statuses[0] = AgentStatus::RiskyForever;
        assert_eq!(
            prescribed_action(&params, &profile, 0, &st, b(0.1)).unwrap(),
            Action::Risky
        );
        let mut bad = GameState::initial(2);
        bad.t = 2;
        bad.statuses[0] = AgentStatus::Switched { at_period: 1 };
        assert!(prescribed_action(&params, &profile, 0, &bad, b(0.5)).is_err());
    }
}
